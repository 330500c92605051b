"""Run a pretrained checkpoint over a labeled CSV and capture every hidden
state.

Each dataset row is subword-tokenized with the checkpoint's own tokenizer
(special tokens included in the length budget), truncated to max_len, and
stored as one record of shape [tokens, layers + 1, hidden]; the extra layer
is the embedding output. Inference runs without dropout at fixed precision,
so repeated exports of the same job are byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .interchange import Record, write_store


class ExportError(RuntimeError):
    pass


@dataclass
class ExportJob:
    checkpoint: str
    dataset: str
    output: str
    max_len: int = 150
    device: str = "cpu"


@dataclass
class DatasetRow:
    id: int
    text: str
    label: int


def read_rows(path) -> list[DatasetRow]:
    """Parse the labeled-utterance CSV: header id,text,label, RFC-4180."""
    rows: list[DatasetRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ExportError(f"{path}: empty file") from None
        if header != ["id", "text", "label"]:
            raise ExportError(f"{path}: expected header id,text,label, got {header}")
        for row in reader:
            lineno = reader.line_num
            if len(row) != 3:
                raise ExportError(f"{path}: row {lineno}: expected 3 columns, got {len(row)}")
            try:
                ex_id, label = int(row[0]), int(row[2])
            except ValueError:
                raise ExportError(f"{path}: row {lineno}: id and label must be integers") from None
            if label not in (0, 1):
                raise ExportError(f"{path}: row {lineno}: label must be 0 or 1")
            if row[1].count("<") != 1 or row[1].count(">") != 1:
                raise ExportError(f"{path}: row {lineno}: text needs exactly one marked span")
            rows.append(DatasetRow(id=ex_id, text=row[1], label=label))
    if not rows:
        raise ExportError(f"{path}: no examples")
    return rows


def export(job: ExportJob) -> int:
    """Write one interchange record per dataset row; returns the row count."""
    import torch
    from transformers import AutoModel, AutoTokenizer

    rows = read_rows(job.dataset)
    try:
        tokenizer = AutoTokenizer.from_pretrained(job.checkpoint)
        model = AutoModel.from_pretrained(job.checkpoint, output_hidden_states=True)
    except OSError as e:
        raise ExportError(f"cannot load checkpoint {job.checkpoint!r}: {e}") from None
    model.eval()
    model.to(job.device)

    records: list[Record] = []
    layer_count = hidden_dim = None
    with torch.no_grad():
        for row in rows:
            encoded = tokenizer(
                row.text, truncation=True, max_length=job.max_len, return_tensors="pt"
            ).to(job.device)
            token_count = int(encoded["input_ids"].shape[1])
            if token_count == 0:
                raise ExportError(f"example {row.id}: tokenizer produced zero subwords")
            outputs = model(**encoded)
            # tuple of layers+1 tensors [1, tokens, hidden] -> [tokens, layers+1, hidden]
            stacked = torch.stack(outputs.hidden_states, dim=0)[:, 0].transpose(0, 1)
            grid = stacked.to(torch.float32).cpu().numpy()
            if layer_count is None:
                layer_count, hidden_dim = grid.shape[1], grid.shape[2]
            records.append(Record(example_id=row.id, label=row.label, grid=grid))
    write_store(records, layer_count, hidden_dim, job.output)
    return len(records)
