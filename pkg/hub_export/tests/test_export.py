import csv

import numpy as np
import pytest

from hub_export import ExportError, ExportJob, export, read_rows, verify
from hub_export.cli import main as cli_main
from hub_export.interchange import FormatError
from hub_export.toy_checkpoint import build_toy_checkpoint

HIDDEN = 32
LAYERS = 4


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    return build_toy_checkpoint(
        tmp_path_factory.mktemp("ckpt"), hidden_size=HIDDEN, layers=LAYERS
    )


@pytest.fixture()
def dataset(tmp_path):
    path = tmp_path / "data.csv"
    words = ["gently", "harshly", "softly", "bluntly", "kindly",
             "rudely", "warmly", "loudly", "calmly", "sharply"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "label"])
        for i, word in enumerate(words):
            writer.writerow([i, f"they put it <rather {word}> during the meeting .", i % 2])
    return path


def test_read_rows_contract(tmp_path, dataset):
    rows = read_rows(dataset)
    assert len(rows) == 10
    assert rows[0].id == 0 and rows[0].label == 0

    bad = tmp_path / "bad.csv"
    bad.write_text("id,text,label\n1,no markers,0\n")
    with pytest.raises(ExportError, match="row 2"):
        read_rows(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("id,text,label\n")
    with pytest.raises(ExportError, match="no examples"):
        read_rows(empty)


def test_unreachable_checkpoint(tmp_path, dataset):
    job = ExportJob(checkpoint=str(tmp_path / "nowhere"), dataset=str(dataset),
                    output=str(tmp_path / "out.tedbemb"))
    with pytest.raises(ExportError, match="checkpoint"):
        export(job)


def test_export_ten_rows(tmp_path, checkpoint, dataset):
    out = tmp_path / "states.tedbemb"
    count = export(ExportJob(checkpoint=checkpoint, dataset=str(dataset), output=str(out)))
    assert count == 10

    # header geometry: embeddings plus one state per layer
    report = verify(out)
    assert report.example_count == 10
    assert report.layer_count == LAYERS + 1
    assert report.hidden_dim == HIDDEN

    # the primary toolkit parses the same file through its own reader
    from tedb.embed import read_interchange

    store = read_interchange(out)
    assert store.layer_count == LAYERS + 1
    assert store.hidden_dim == HIDDEN
    assert sorted(store.grids) == list(range(10))
    assert store.labels[1] == 1
    assert all(np.isfinite(g).all() for g in store.grids.values())


def test_distinct_rows_export_distinct_states(tmp_path, checkpoint, dataset):
    # texts differing in one word must not collapse to identical grids
    out = tmp_path / "states.tedbemb"
    export(ExportJob(checkpoint=checkpoint, dataset=str(dataset), output=str(out)))
    from tedb.embed import read_interchange

    store = read_interchange(out)
    assert not np.array_equal(store.grids[0], store.grids[1])
    # same geometry though: equal-length templates
    assert store.grids[0].shape == store.grids[1].shape


def test_repeated_export_byte_identical(tmp_path, checkpoint, dataset):
    out1 = tmp_path / "a.tedbemb"
    out2 = tmp_path / "b.tedbemb"
    export(ExportJob(checkpoint=checkpoint, dataset=str(dataset), output=str(out1)))
    export(ExportJob(checkpoint=checkpoint, dataset=str(dataset), output=str(out2)))
    assert out1.read_bytes() == out2.read_bytes()


def test_max_len_truncates(tmp_path, checkpoint):
    path = tmp_path / "long.csv"
    long_text = "<rather gently> " + "meeting " * 300
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "label"])
        writer.writerow([0, long_text, 1])
    out = tmp_path / "long.tedbemb"
    export(ExportJob(checkpoint=checkpoint, dataset=str(path), output=str(out), max_len=150))
    report = verify(out)
    assert report.total_tokens == 150


def test_verify_rejects_corruption(tmp_path, checkpoint, dataset):
    out = tmp_path / "states.tedbemb"
    export(ExportJob(checkpoint=checkpoint, dataset=str(dataset), output=str(out)))
    blob = out.read_bytes()

    trunc = tmp_path / "trunc.tedbemb"
    trunc.write_bytes(blob[:-1])
    with pytest.raises(FormatError, match="truncated"):
        verify(trunc)

    nan_blob = bytearray(blob)
    nan_blob[-4:] = np.float32("nan").tobytes()
    nan_path = tmp_path / "nan.tedbemb"
    nan_path.write_bytes(bytes(nan_blob))
    with pytest.raises(FormatError, match="non-finite"):
        verify(nan_path)

    magic = tmp_path / "magic.tedbemb"
    magic.write_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(FormatError, match="bad magic"):
        verify(magic)


def test_cli_export_and_verify(tmp_path, checkpoint, dataset, capsys):
    out = tmp_path / "cli.tedbemb"
    code = cli_main(["export", "--checkpoint", checkpoint, "--data", str(dataset),
                     "--out", str(out)])
    assert code == 0
    assert cli_main(["verify", str(out)]) == 0
    captured = capsys.readouterr().out
    assert "OK" in captured

    bad = tmp_path / "bad.tedbemb"
    bad.write_bytes(b"nope")
    assert cli_main(["verify", str(bad)]) == 1
