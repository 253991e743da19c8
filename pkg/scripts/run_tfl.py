"""Full TfL analysis (both outcomes) when data/tfl_monthly.csv is present."""
import sys
from pathlib import Path

from rw2cf.cli import main

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data" / "tfl_monthly.csv"

if __name__ == "__main__":
    if not DATA.exists():
        sys.exit(f"{DATA} not found; expected columns month,hires,hire_time,temperature,rainfall,wind,humidity")
    for name in ("tfl_hires", "tfl_hiretime"):
        cfg = str(ROOT / "configs" / f"{name}.json")
        for verb in ("fit", "predict", "cv"):
            print(f"$ rw2cf {verb} --config {cfg}", flush=True)
            if main([verb, "--config", cfg]):
                sys.exit(1)
        outcome = "hires" if name == "tfl_hires" else "hire_time"
        main(["report", str(ROOT / "runs" / outcome / "counterfactual.csv")])
        print((ROOT / "runs" / outcome / "report.md").read_text())
