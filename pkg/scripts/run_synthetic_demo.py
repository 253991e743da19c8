"""simulate -> fit -> predict -> cv -> report on the bundled synthetic config."""
import sys
from pathlib import Path

from rw2cf.cli import main

ROOT = Path(__file__).resolve().parents[1]
CONFIG = ROOT / "configs" / "synthetic_run.json"
OUT = ROOT / "runs" / "synthetic"


def step(args):
    print("$ rw2cf " + " ".join(args), flush=True)
    code = main(args)
    if code:
        sys.exit(code)


if __name__ == "__main__":
    step(["simulate", "--spec", str(ROOT / "configs" / "synthetic_spec.json"), "--out", str(OUT)])
    step(["fit", "--config", str(CONFIG)])
    step(["predict", "--config", str(CONFIG)])
    if "--cv" in sys.argv:
        step(["cv", "--config", str(CONFIG)])
    step(["report", str(OUT / "counterfactual.csv")])
    print((OUT / "report.md").read_text())
