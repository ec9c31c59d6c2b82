"""Procedurally generated shape corpora with IRMA-style codes.

Each class is a shape family; the first ten code positions identify the
class and the last three encode the drawn size and position, so near
duplicates inside a class also share more of their code.

    python -m radonsvm.synthetic OUTDIR [--classes 4] [--train 100] [--test 25]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from PIL import Image

SHAPES = ("disk", "square", "bars", "cross", "triangle", "ring")

CLASS_CODES = {
    "disk": "1121127700",
    "square": "1121120200",
    "bars": "1121230500",
    "cross": "1123211300",
    "triangle": "1121115400",
    "ring": "1124310600",
}


def _rotate(x, y, angle):
    c, s = np.cos(angle), np.sin(angle)
    return c * x + s * y, -s * x + c * y


def render_shape(shape: str, size: int, radius: float, center, angle: float) -> np.ndarray:
    """Binary mask of one shape on a size x size canvas."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    x, y = _rotate(xx - center[0], yy - center[1], angle)
    if shape == "disk":
        return x ** 2 + y ** 2 <= radius ** 2
    if shape == "ring":
        r2 = x ** 2 + y ** 2
        return (r2 <= radius ** 2) & (r2 >= (0.6 * radius) ** 2)
    if shape == "square":
        return (np.abs(x) <= 0.8 * radius) & (np.abs(y) <= 0.8 * radius)
    if shape == "bars":
        gap = 0.45 * radius
        return (np.abs(x) <= radius) & (np.abs(np.abs(y) - gap) <= 0.2 * radius)
    if shape == "cross":
        arm = 0.25 * radius
        return ((np.abs(x) <= radius) & (np.abs(y) <= arm)) | ((np.abs(y) <= radius) & (np.abs(x) <= arm))
    if shape == "triangle":
        return (y <= 0.6 * radius) & (y >= 1.7 * np.abs(x) - radius)
    raise ValueError(f"unknown shape {shape!r}")


def sample_image(shape: str, rng: np.random.Generator, size: int = 96, noise: float = 0.05):
    """One noisy image plus the three variable code characters."""
    size_bin = int(rng.integers(0, 3))
    radius = size * (0.22 + 0.06 * size_bin + rng.uniform(-0.02, 0.02))
    offset = rng.uniform(-0.08, 0.08, size=2) * size
    center = (size / 2 + offset[0], size / 2 + offset[1])
    angle = rng.uniform(-0.15, 0.15)
    mask = render_shape(shape, size, radius, center, angle)
    background = rng.uniform(0.05, 0.15)
    foreground = rng.uniform(0.65, 0.95)
    img = np.where(mask, foreground, background) + rng.normal(0.0, noise, (size, size))
    quadrant = int(offset[0] > 0) + 2 * int(offset[1] > 0)
    tail = f"{size_bin + 1}{quadrant + 1}0"
    return np.clip(img, 0.0, 1.0), tail


def write_png(path: Path, img: np.ndarray) -> None:
    Image.fromarray(np.round(img * 255).astype(np.uint8), mode="L").save(path)


def make_corpus(out_dir, n_classes: int = 4, n_train: int = 100, n_test: int = 25, size: int = 96,
                noise: float = 0.05, seed: int = 0, unlabeled: int = 0) -> tuple[Path, Path]:
    """Write PNGs plus ``train.csv`` / ``test.csv`` manifests; return the manifest paths."""
    if not 2 <= n_classes <= len(SHAPES):
        raise ValueError(f"n_classes must be in 2..{len(SHAPES)}")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifests = {"train": ["path,class,irma_code"], "test": ["path,class,irma_code"]}
    for shape in SHAPES[:n_classes]:
        for split, count in (("train", n_train), ("test", n_test)):
            for n in range(count):
                img, tail = sample_image(shape, rng, size, noise)
                rel = f"images/{split}_{shape}_{n:04d}.png"
                write_png(out / rel, img)
                code = CLASS_CODES[shape] + tail
                manifests[split].append(f"{rel},{shape},{code[:4]}-{code[4:7]}-{code[7:10]}-{code[10:]}")
    for n in range(unlabeled):
        img, _ = sample_image(SHAPES[n % n_classes], rng, size, noise)
        rel = f"images/unlabeled_{n:04d}.png"
        write_png(out / rel, img)
        manifests["train"].append(f"{rel},,")
    paths = []
    for split in ("train", "test"):
        p = out / f"{split}.csv"
        p.write_text("\n".join(manifests[split]) + "\n", encoding="utf-8")
        paths.append(p)
    return paths[0], paths[1]


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m radonsvm.synthetic", description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--classes", type=int, default=4)
    ap.add_argument("--train", type=int, default=100)
    ap.add_argument("--test", type=int, default=25)
    ap.add_argument("--image-size", type=int, default=96)
    ap.add_argument("--noise", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--unlabeled", type=int, default=0)
    args = ap.parse_args(argv)
    train, test = make_corpus(args.out_dir, args.classes, args.train, args.test, args.image_size,
                              args.noise, args.seed, args.unlabeled)
    print(f"wrote {train} and {test}")


if __name__ == "__main__":
    main()
