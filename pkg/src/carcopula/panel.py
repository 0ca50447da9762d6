"""Regional panel container and the CSV formats the tools exchange.

Panel CSV layout: header ``region,<year>,...,<year>``, one row per region,
empty cells for missing observations. Adjacency CSV layout: header ``i,j``,
one undirected edge per row, 1-based region indices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import ArealGraph, load_adjacency


@dataclass(frozen=True)
class RegionalPanel:
    """n regions by T years of positive observations with a missingness mask."""

    regions: tuple[str, ...]
    years: tuple[int, ...]
    values: np.ndarray  # (n, T), NaN marks missing

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.regions), len(self.years)):
            raise ValueError(
                f"values shape {vals.shape} inconsistent with "
                f"{len(self.regions)} regions x {len(self.years)} years"
            )
        if len(set(self.regions)) != len(self.regions):
            raise ValueError("region labels must be unique")
        obs = vals[np.isfinite(vals)]
        if (obs <= 0).any():
            raise ValueError("observed panel values must be strictly positive")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.regions)

    @property
    def T(self) -> int:
        return len(self.years)

    @property
    def mask(self) -> np.ndarray:
        """Boolean (n, T) matrix, True where observed."""
        return np.isfinite(self.values)

    @property
    def n_missing(self) -> int:
        return int((~self.mask).sum())

    def missing_cells(self) -> list[tuple[int, int]]:
        """0-based (region, year) indices of missing cells, row-major order."""
        rows, cols = np.nonzero(~self.mask)
        return list(zip(rows.tolist(), cols.tolist()))


def read_panel_csv(path) -> RegionalPanel:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 2 or header[0].strip().lower() != "region":
            raise ValueError(f"{path}: expected header 'region,<year>,...'")
        try:
            years = tuple(int(h) for h in header[1:])
        except ValueError:
            raise ValueError(f"{path}: year columns must be integers") from None
        regions: list[str] = []
        rows: list[list[float]] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            label = rec[0].strip()
            vals = []
            for year, cell in zip(years, rec[1:]):
                cell = cell.strip()
                if cell == "":
                    vals.append(np.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: unparseable value {cell!r} at region {label!r}, year {year}"
                    ) from None
                if v <= 0:
                    raise ValueError(
                        f"{path}: non-positive value {v} at region {label!r}, year {year}"
                    )
                vals.append(v)
            regions.append(label)
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return RegionalPanel(regions=tuple(regions), years=years, values=np.array(rows))


def write_panel_csv(panel: RegionalPanel, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", *panel.years])
        for i, label in enumerate(panel.regions):
            row = [label]
            for v in panel.values[i]:
                row.append("" if not np.isfinite(v) else repr(float(v)))
            writer.writerow(row)


def read_adjacency_csv(path, n: int) -> ArealGraph:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if [h.strip().lower() for h in header[:2]] != ["i", "j"]:
            raise ValueError(f"{path}: expected header 'i,j'")
        edges = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                edges.append((int(rec[0]), int(rec[1])))
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed edge record {rec!r}") from None
    return load_adjacency(edges, n)


def write_adjacency_csv(graph: ArealGraph, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j"])
        for i, j in graph.edges:
            writer.writerow([i, j])
