"""Krippendorff's alpha for nominal data, via the coincidence matrix.

Used to check that independently coded sentence annotations agree beyond
chance. Missing cells are allowed; items with fewer than two codes are
excluded from the coincidence counts.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Optional

import numpy as np

from .errors import SchemaError, UndefinedVarianceError


@dataclass
class CodingMatrix:
    """Items x coders grid of optional nominal labels (None = not coded)."""

    rows: list[list[Optional[Hashable]]]
    labels: set = field(default_factory=set)

    def __post_init__(self):
        widths = {len(r) for r in self.rows}
        if len(widths) > 1:
            raise SchemaError(f"ragged coding matrix: row widths {sorted(widths)}")
        if self.n_coders < 2:
            raise SchemaError("need at least 2 coders")
        observed = {v for r in self.rows for v in r if v is not None}
        if not self.labels:
            self.labels = observed
        elif not observed <= self.labels:
            raise SchemaError(f"labels outside the declared set: {observed - self.labels}")

    @property
    def n_items(self) -> int:
        return len(self.rows)

    @property
    def n_coders(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    @classmethod
    def from_records(cls, records, labels=None) -> "CodingMatrix":
        """Build from (item_id, coder_id, label) triples; absent pairs are missing."""
        items: list = []
        coders: list = []
        seen_coders: set = set()
        cells: dict = {}
        for item, coder, label in records:
            if item not in cells:
                items.append(item)
            if coder not in seen_coders:
                seen_coders.add(coder)
                coders.append(coder)
            cells.setdefault(item, {})[coder] = label
        rows = [[cells[item].get(coder) for coder in coders] for item in items]
        return cls(rows, set(labels) if labels else set())


def load_codes_csv(path: str | Path) -> CodingMatrix:
    """Read a long-format CSV with columns item_id, coder_id, label."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"item_id", "coder_id", "label"}
        if not required <= set(reader.fieldnames or []):
            raise SchemaError(f"codes file needs columns {sorted(required)}")
        records = [(r["item_id"], r["coder_id"], r["label"]) for r in reader]
    return CodingMatrix.from_records(records)


@dataclass
class Coincidence:
    """Symmetric label-by-label coincidence counts."""

    labels: list  # fixed ordering for the matrix axes
    counts: np.ndarray  # shape (L, L), fractional counts
    n_excluded: int  # items dropped for having < 2 codes

    def mass(self, a, b) -> float:
        return float(self.counts[self.labels.index(a), self.labels.index(b)])

    @property
    def total(self) -> float:
        return float(self.counts.sum())


def coincidence(matrix: CodingMatrix) -> Coincidence:
    """Pairwise within-item coincidences, each item weighted by 1/(m_item - 1)."""
    labels = sorted(matrix.labels, key=repr)
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)))
    n_excluded = 0
    for row in matrix.rows:
        values = [v for v in row if v is not None]
        m = len(values)
        if m < 2:
            n_excluded += 1
            continue
        tally = Counter(values)
        for a, n_a in tally.items():
            for b, n_b in tally.items():
                pairs = n_a * (n_a - 1) if a == b else n_a * n_b
                counts[index[a], index[b]] += pairs / (m - 1)
    return Coincidence(labels, counts, n_excluded)


def alpha_nominal(matrix: CodingMatrix) -> float:
    """Krippendorff's alpha = 1 - observed/expected disagreement, nominal metric."""
    co = coincidence(matrix)
    n = co.total
    if n == 0:
        raise UndefinedVarianceError("no pairable values")
    margins = co.counts.sum(axis=1)
    observed = (co.counts.sum() - np.trace(co.counts)) / n
    expected = (n * n - float(margins @ margins)) / (n * (n - 1))
    if expected == 0:
        raise UndefinedVarianceError("only one label observed; expected disagreement is zero")
    return 1.0 - observed / expected


def alpha_by_category(matrix: CodingMatrix) -> dict[Hashable, Optional[float]]:
    """Binary (label-vs-rest) alpha per category; None where undefined."""
    result = {}
    for label in sorted(matrix.labels, key=repr):
        rows = [
            [None if v is None else (v == label) for v in row]
            for row in matrix.rows
        ]
        binary = CodingMatrix(rows, labels={True, False})
        try:
            result[label] = alpha_nominal(binary)
        except UndefinedVarianceError:
            result[label] = None
    return result
