"""Build manifests from a locally held IRMA / ImageCLEFmed 2009 copy.

The dataset is not bundled.  Its label files are semicolon-separated with an
``image_id`` column, an ``irma_code`` column and one class column per
challenge year (``09_class`` for the 57-category setup).  Images are
``<image_id>.png`` inside one directory.

    python -m radonsvm.irma LABELS.csv IMAGE_DIR OUT_MANIFEST.csv [--class-column 09_class]
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path


def convert(labels_csv, image_dir, out_manifest, class_column: str = "09_class",
            extension: str = ".png") -> tuple[int, int]:
    """Write a ``path,class,irma_code`` manifest; return (rows, rows without class).

    Unlabeled images are kept with an empty class so the pipeline can count
    and skip them itself.
    """
    labels_csv, image_dir, out_manifest = Path(labels_csv), Path(image_dir), Path(out_manifest)
    text = labels_csv.read_text(encoding="utf-8-sig")
    dialect = csv.Sniffer().sniff(text.splitlines()[0], delimiters=";,\t")
    reader = csv.DictReader(text.splitlines(), dialect=dialect)
    missing = {"image_id", "irma_code", class_column} - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{labels_csv}: missing columns {sorted(missing)}")
    rows, unlabeled = 0, 0
    with out_manifest.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "class", "irma_code"])
        for rec in reader:
            label = (rec[class_column] or "").strip()
            # Some releases mark unlabeled images with a placeholder instead of a blank.
            if label in ("-1", "NA", "None"):
                label = ""
            image = image_dir / f"{rec['image_id'].strip()}{extension}"
            try:
                image = image.relative_to(out_manifest.parent)
            except ValueError:
                image = image.resolve()
            w.writerow([image.as_posix(), label, (rec["irma_code"] or "").strip()])
            rows += 1
            unlabeled += not label
    return rows, unlabeled


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m radonsvm.irma", description=__doc__.splitlines()[0])
    ap.add_argument("labels")
    ap.add_argument("image_dir")
    ap.add_argument("out")
    ap.add_argument("--class-column", default="09_class")
    ap.add_argument("--extension", default=".png")
    args = ap.parse_args(argv)
    rows, unlabeled = convert(args.labels, args.image_dir, args.out, args.class_column, args.extension)
    print(f"{rows} rows written to {args.out} ({unlabeled} without class)")


if __name__ == "__main__":
    main()
