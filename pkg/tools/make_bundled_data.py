"""Regenerate the bundled benchmark dataset.

The packaged panel is a synthetic monsoon-rainfall-style benchmark for the
34 meteorological subdivisions of mainland India, 1951-2014: region-level
gamma marginal parameters follow the real climatology (dry northwest, wet
coasts, strong positive trend coefficients in the northeast), and the
cross-region dependence is a scaled-CAR Gaussian copula at high spatial
correlation. Three years carry missing cells to exercise imputation.

Run from the repository root:  python3 tools/make_bundled_data.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from carcopula.copula import simulate_panel
from carcopula.graph import load_adjacency
from carcopula.marginals import GammaSvcParams, standardize_time
from carcopula.panel import RegionalPanel, write_adjacency_csv, write_panel_csv

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "carcopula" / "data"

SEED = 20140939  # frozen after calibration against the desk-scale checks
RHO_TRUE = 0.95
YEARS = tuple(range(1951, 2015))

# (name, mean monsoon total in mm, gamma shape a, trend coefficient c)
REGIONS = [
    ("Arunachal Pradesh", 1650.0, 9.0, 0.160),
    ("Assam & Meghalaya", 1420.0, 11.0, 0.150),
    ("Nagaland, Manipur, Mizoram & Tripura", 1180.0, 10.0, 0.170),
    ("Sub-Himalayan West Bengal & Sikkim", 1950.0, 22.0, 0.045),
    ("Gangetic West Bengal", 1120.0, 24.0, 0.030),
    ("Odisha", 1150.0, 30.0, 0.020),
    ("Jharkhand", 1080.0, 28.0, 0.035),
    ("Bihar", 1020.0, 22.0, 0.040),
    ("East Uttar Pradesh", 890.0, 18.0, 0.045),
    ("West Uttar Pradesh", 740.0, 12.0, 0.040),
    ("Uttarakhand", 1230.0, 20.0, 0.050),
    ("Haryana, Chandigarh & Delhi", 460.0, 8.0, 0.030),
    ("Punjab", 480.0, 7.0, 0.035),
    ("Himachal Pradesh", 910.0, 14.0, 0.055),
    ("Jammu & Kashmir", 560.0, 9.0, 0.045),
    ("West Rajasthan", 260.0, 5.0, 0.015),
    ("East Rajasthan", 620.0, 9.0, 0.020),
    ("West Madhya Pradesh", 880.0, 16.0, 0.015),
    ("East Madhya Pradesh", 1040.0, 24.0, 0.025),
    ("Gujarat Region", 840.0, 7.0, 0.010),
    ("Saurashtra & Kutch", 470.0, 5.0, 0.008),
    ("Konkan & Goa", 2870.0, 26.0, 0.012),
    ("Madhya Maharashtra", 720.0, 15.0, 0.010),
    ("Marathwada", 600.0, 11.0, 0.018),
    ("Vidarbha", 940.0, 20.0, 0.022),
    ("Chhattisgarh", 1130.0, 30.0, 0.028),
    ("Coastal Andhra Pradesh", 560.0, 18.0, 0.012),
    ("Telangana", 720.0, 18.0, 0.020),
    ("Rayalaseema", 340.0, 12.0, 0.008),
    ("Tamil Nadu & Puducherry", 310.0, 14.0, 0.005),
    ("Coastal Karnataka", 3020.0, 28.0, 0.010),
    ("North Interior Karnataka", 500.0, 16.0, 0.008),
    ("South Interior Karnataka", 660.0, 20.0, 0.006),
    ("Kerala", 1900.0, 24.0, 0.015),
]

# Rook-style shared-boundary adjacency of the subdivisions, 1-based.
EDGES = [
    (1, 2), (1, 3),
    (2, 3), (2, 4),
    (4, 5), (4, 8),
    (5, 6), (5, 7),
    (6, 7), (6, 26), (6, 27),
    (7, 8), (7, 9), (7, 26),
    (8, 9),
    (9, 10), (9, 19),
    (10, 11), (10, 12), (10, 17), (10, 18),
    (11, 14),
    (12, 13), (12, 14), (12, 17),
    (13, 14), (13, 16),
    (14, 15),
    (16, 17), (16, 20), (16, 21),
    (17, 18), (17, 20),
    (18, 19), (18, 20), (18, 25),
    (19, 25), (19, 26),
    (20, 21), (20, 22),
    (22, 23), (22, 31), (22, 32),
    (23, 24), (23, 32),
    (24, 25), (24, 28),
    (25, 26), (25, 28),
    (26, 28),
    (27, 28), (27, 29), (27, 30),
    (28, 29),
    (29, 30), (29, 32), (29, 33),
    (30, 33), (30, 34),
    (31, 32), (31, 33), (31, 34),
    (32, 33),
    (33, 34),
]

# (year, 1-based region indices) cells deleted to exercise imputation
MISSING = [
    (1962, (15, 16)),
    (1984, (1, 3, 31)),
    (2006, (8, 26)),
]


def true_params() -> GammaSvcParams:
    a = np.array([r[2] for r in REGIONS])
    b = 1.0 / np.array([r[1] for r in REGIONS])
    c = np.array([r[3] for r in REGIONS])
    return GammaSvcParams(a=a, b=b, c=c)


def build(seed: int = SEED) -> tuple[RegionalPanel, "np.ndarray"]:
    n = len(REGIONS)
    graph = load_adjacency(EDGES, n)
    ts = standardize_time(len(YEARS))
    rng = np.random.default_rng(seed)
    names = tuple(r[0] for r in REGIONS)
    panel = simulate_panel(
        rng, graph, true_params(), ts, rho=RHO_TRUE,
        regions=names, years=YEARS,
    )
    values = panel.values.copy()
    for year, regions in MISSING:
        t = YEARS.index(year)
        for i in regions:
            values[i - 1, t] = np.nan
    return RegionalPanel(regions=names, years=YEARS, values=values), graph


def main():
    panel, graph = build()
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    write_panel_csv(panel, DATA_DIR / "india_monsoon_rainfall.csv")
    write_adjacency_csv(graph, DATA_DIR / "india_adjacency.csv")
    print(f"wrote {panel.n} regions x {panel.T} years "
          f"({panel.n_missing} missing cells) and {graph.n_edges} edges to {DATA_DIR}")


if __name__ == "__main__":
    main()
