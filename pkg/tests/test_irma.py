import numpy as np
import pytest
from PIL import Image

from radonsvm.irma import convert, main
from radonsvm.pipeline import read_manifest

LABELS = """image_id;irma_code;05_class;09_class
1001;1121-127-700-500;3;12
1002;1121-120-200-700;4;-1
1003;1123-211-500-000;5;
1004;1121-127-700-400;3;12
"""


@pytest.fixture
def irma_dir(tmp_path):
    images = tmp_path / "png"
    images.mkdir()
    for i in range(1001, 1005):
        Image.fromarray(np.full((10, 10), i % 256, np.uint8)).save(images / f"{i}.png")
    (tmp_path / "labels.csv").write_text(LABELS)
    return tmp_path


def test_convert_counts_and_layout(irma_dir):
    out = irma_dir / "manifest.csv"
    assert convert(irma_dir / "labels.csv", irma_dir / "png", out) == (4, 2)
    lines = out.read_text().splitlines()
    assert lines[0] == "path,class,irma_code"
    assert lines[1] == "png/1001.png,12,1121-127-700-500"
    assert lines[2] == "png/1002.png,,1121-120-200-700"


def test_manifest_loads_and_skips_unlabeled(irma_dir):
    out = irma_dir / "manifest.csv"
    convert(irma_dir / "labels.csv", irma_dir / "png", out)
    manifest = read_manifest(out)
    assert len(manifest.unlabeled) == 2
    assert [r.class_label for r in manifest.rows] == ["12", "12"]
    assert all(r.file.exists() for r in manifest.rows)


def test_other_class_column(irma_dir):
    out = irma_dir / "m05.csv"
    assert convert(irma_dir / "labels.csv", irma_dir / "png", out, class_column="05_class") == (4, 0)


def test_comma_delimited_and_missing_column(irma_dir):
    (irma_dir / "comma.csv").write_text(LABELS.replace(";", ","))
    assert convert(irma_dir / "comma.csv", irma_dir / "png", irma_dir / "o.csv")[0] == 4
    with pytest.raises(ValueError, match="07_class"):
        convert(irma_dir / "labels.csv", irma_dir / "png", irma_dir / "o.csv", class_column="07_class")


def test_main(irma_dir, capsys):
    main([str(irma_dir / "labels.csv"), str(irma_dir / "png"), str(irma_dir / "m.csv")])
    assert "4 rows" in capsys.readouterr().out
