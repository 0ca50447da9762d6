"""Loaders for the bundled benchmark dataset.

The packaged panel is a synthetic monsoon-rainfall-style benchmark over
the 34 meteorological subdivisions of mainland India, 1951-2014 (mm):
region-level marginal parameters follow the real climatology, dependence
is a high-correlation scaled-CAR copula on the shared-boundary adjacency,
and three years carry missing cells. See tools/make_bundled_data.py in
the repository for the generator.
"""

from __future__ import annotations

from importlib.resources import files

from .graph import ArealGraph
from .panel import RegionalPanel, read_adjacency_csv, read_panel_csv

N_REGIONS = 34


def _data_path(name: str):
    return files("carcopula.data").joinpath(name)


def load_india_rainfall() -> RegionalPanel:
    """The bundled 34-region by 64-year rainfall panel (mm, NaN = missing)."""
    with _data_path("india_monsoon_rainfall.csv") as p:
        return read_panel_csv(p)


def load_india_adjacency() -> ArealGraph:
    """Shared-boundary adjacency of the 34 subdivisions."""
    with _data_path("india_adjacency.csv") as p:
        return read_adjacency_csv(p, N_REGIONS)
