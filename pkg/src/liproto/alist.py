"""Alist serialization of sparse parity-check matrices.

Standard layout, one-based indices, lists padded with zeros to the
maximum degree (the reader also accepts unpadded files):

    n m
    max_col_degree max_row_degree
    <n column degrees>
    <m row degrees>
    n lines: row indices of each column
    m lines: column indices of each row

A JSON sidecar (``<file>.json``) carries provenance that the alist
format itself cannot: protograph digest, lifting factor and seed, and
the punctured protograph columns, without which a simulation cannot
assign channel LLRs correctly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .lifting import SparsePcm

SIDECAR_FORMAT = "liproto-pcm-provenance"


@dataclass
class PcmData:
    """Adjacency view of a binary parity-check matrix."""

    n_rows: int
    n_cols: int
    col_adj: list[np.ndarray]
    row_adj: list[np.ndarray]

    @property
    def n_edges(self) -> int:
        return int(sum(len(a) for a in self.col_adj))


def pcm_to_alist_str(pcm: SparsePcm | PcmData) -> str:
    if isinstance(pcm, SparsePcm):
        data = PcmData(pcm.n_rows, pcm.n_cols, pcm.col_adj(), pcm.row_adj())
    else:
        data = pcm
    col_deg = [len(a) for a in data.col_adj]
    row_deg = [len(a) for a in data.row_adj]
    max_col = max(col_deg) if col_deg else 0
    max_row = max(row_deg) if row_deg else 0
    lines = [
        f"{data.n_cols} {data.n_rows}",
        f"{max_col} {max_row}",
        " ".join(str(d) for d in col_deg),
        " ".join(str(d) for d in row_deg),
    ]
    for adj in data.col_adj:
        entries = [str(int(r) + 1) for r in adj] + ["0"] * (max_col - len(adj))
        lines.append(" ".join(entries))
    for adj in data.row_adj:
        entries = [str(int(c) + 1) for c in adj] + ["0"] * (max_row - len(adj))
        lines.append(" ".join(entries))
    return "\n".join(lines) + "\n"


def write_alist(pcm: SparsePcm, path: str | Path, extra_provenance: dict | None = None) -> Path:
    """Write the alist file and its provenance sidecar; returns the alist path."""
    path = Path(path)
    path.write_text(pcm_to_alist_str(pcm))
    sidecar = {
        "format": SIDECAR_FORMAT,
        "version": 1,
        "n_rows": pcm.n_rows,
        "n_cols": pcm.n_cols,
        "s": pcm.s,
        "base": pcm.base.tolist(),
        "punctured_base_cols": [j + 1 for j in sorted(pcm.punctured_base_cols)],
        "design_rate": _rate_pair(pcm),
        **pcm.provenance,
    }
    if extra_provenance:
        sidecar.update(extra_provenance)
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def _rate_pair(pcm: SparsePcm) -> list[int]:
    m, n = pcm.base.shape
    frac = Fraction(n - m, n - len(pcm.punctured_base_cols))
    return [frac.numerator, frac.denominator]


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_alist(path: str | Path) -> PcmData:
    path = Path(path)
    try:
        tokens_per_line = [line.split() for line in path.read_text().splitlines()]
    except OSError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    lines = [t for t in tokens_per_line if t]
    try:
        n_cols, n_rows = int(lines[0][0]), int(lines[0][1])
        col_lines = lines[4:4 + n_cols]
        row_lines = lines[4 + n_cols:4 + n_cols + n_rows]
        if len(col_lines) != n_cols or len(row_lines) != n_rows:
            raise IndexError("truncated adjacency section")
        col_adj = [
            np.array(sorted(int(t) - 1 for t in toks if t != "0"), dtype=np.int64)
            for toks in col_lines
        ]
        row_adj = [
            np.array(sorted(int(t) - 1 for t in toks if t != "0"), dtype=np.int64)
            for toks in row_lines
        ]
    except (IndexError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed alist: {exc}") from exc

    declared_col = [int(t) for t in lines[2]]
    declared_row = [int(t) for t in lines[3]]
    if declared_col != [len(a) for a in col_adj] or declared_row != [len(a) for a in row_adj]:
        raise SchemaError(f"{path}: degree lists disagree with adjacency lists")
    edges_from_cols = sum(len(a) for a in col_adj)
    edges_from_rows = sum(len(a) for a in row_adj)
    if edges_from_cols != edges_from_rows:
        raise SchemaError(f"{path}: column/row adjacency edge counts differ")
    return PcmData(n_rows=n_rows, n_cols=n_cols, col_adj=col_adj, row_adj=row_adj)


def read_sidecar(path: str | Path) -> dict | None:
    """Provenance sidecar of an alist file, if present."""
    sc = sidecar_path(path)
    if not sc.exists():
        return None
    try:
        doc = json.loads(sc.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{sc}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != SIDECAR_FORMAT:
        raise SchemaError(f"{sc}: not a {SIDECAR_FORMAT} sidecar")
    return doc


def punctured_cols_from_sidecar(doc: dict) -> np.ndarray:
    s = int(doc["s"])
    cols = [
        (int(j) - 1) * s + b
        for j in doc.get("punctured_base_cols", [])
        for b in range(s)
    ]
    return np.array(sorted(cols), dtype=np.int64)
