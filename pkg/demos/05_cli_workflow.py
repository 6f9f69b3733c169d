"""
The experiment driver
=====================

Everything in the previous demos is also reachable from the `kdvrom`
command line: solve-full, fit, scaling, run-rom, compare and derive.  Fitted
coefficients land in an append-only JSON-lines database keyed by content, so
re-running a sweep never duplicates records, and run-rom looks coefficients
up there (falling back to the scaling laws for unseen parameters).

This demo drives the same entry point programmatically in a scratch
directory.
"""

import json
import tempfile
from pathlib import Path

from kdvrom.cli import main

work = Path(tempfile.mkdtemp(prefix="kdvrom-demo-"))
db = work / "coefficients.jsonl"
print(f"working in {work}")

# Dump the operator polynomials and convolution trees, with a built-in
# cross-check of the flat kernels against the symbolic evaluation.
main(["derive", "--order", "2", "--out", str(work)])

# A short fully resolved run; the report records the mass drift.
main(["solve-full", "--epsilon", "0.1", "--m-full", "64", "--dt", "0.001",
      "--t-end", "1.0", "--out", str(work)])
report = json.loads(next(work.glob("full_eps0.1_*.json")).read_text())
print(f"report says mass drift {report['mass_drift']:.2e}")

# Fit coefficients on a small grid, then run the renormalized model with
# them.  The fit stores one record per model order set.
main(["fit", "--epsilon", "0.1", "--n-resolved", "10", "--m-full", "64",
      "--dt", "0.001", "--window", "0", "1.0", "--stride", "10",
      "--db", str(db)])
main(["run-rom", "--model", "rom2", "--epsilon", "0.1", "--n-resolved", "10",
      "--dt", "0.001", "--t-end", "1.0", "--db", str(db), "--out", str(work)])

print("files written:")
for p in sorted(work.iterdir()):
    print(" ", p.name)
