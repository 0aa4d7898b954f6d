"""Regenerate the CSV fixtures under tests/fixtures.

Boston is copied from the MASS export shipped inside the ``pydataset``
source distribution (``pip download pydataset --no-deps``; pass the
unpacked directory as the first argument).  Caesarian is written from the
cell counts below.  apprentice and heatcap (R package GLMsData) and Heart
(R package lbreg) have no Python mirror; export them from R with

    write.csv(GLMsData::apprentice, "apprentice.csv", row.names = FALSE)
    write.csv(GLMsData::heatcap, "heatcap.csv", row.names = FALSE)
    write.csv(lbreg::Heart, "Heart.csv", row.names = FALSE)

and copy the files into tests/fixtures.
"""

import csv
import sys
from pathlib import Path

import pandas as pd

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

# Caesarian-section infections aggregated over (NPLAN, ANTIB, RISK):
# n1 = infection, n0 = no infection.
CAESARIAN = [
    # NPLAN ANTIB RISK n1 n0
    (0, 1, 1, 1, 17),
    (0, 1, 0, 0, 2),
    (0, 0, 1, 28, 30),
    (0, 0, 0, 8, 32),
    (1, 1, 1, 11, 87),
    (1, 0, 1, 23, 3),
    (1, 0, 0, 0, 9),
]


def write_caesarian():
    with open(FIXTURES / "caesarian.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n1", "n0", "RISK", "NPLAN", "ANTIB"])
        for nplan, antib, risk, n1, n0 in CAESARIAN:
            w.writerow([n1, n0, risk, nplan, antib])


def write_boston(pydataset_root: Path):
    src = pydataset_root / "pydataset" / "resources" / "rdata" / "csv" / "MASS" / "Boston.csv"
    df = pd.read_csv(src)
    df = df.drop(columns=[c for c in df.columns if c.startswith("Unnamed")])
    df.to_csv(FIXTURES / "boston.csv", index=False)


if __name__ == "__main__":
    FIXTURES.mkdir(parents=True, exist_ok=True)
    write_caesarian()
    if len(sys.argv) > 1:
        write_boston(Path(sys.argv[1]))
    missing = [f for f in ("apprentice.csv", "heatcap.csv", "heart.csv") if not (FIXTURES / f).exists()]
    if missing:
        print("still missing (export from R, see module docstring):", ", ".join(missing))
