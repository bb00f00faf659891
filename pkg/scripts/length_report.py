"""Summarise a finished length sweep: per-K length spread and ROUGE-L P/R.

    python3 scripts/length_report.py runs/desk
"""

import argparse
import json
from pathlib import Path

import numpy as np

from protosum.cli import read_csv


def report(out: Path) -> None:
    rows = read_csv(out / "length_sweep.csv")
    outputs = [json.loads(l) for l in (out / "length_sweep_outputs.jsonl").read_text().splitlines()]
    print(f"{'K':>3} {'len':>6} {'std':>5} {'|len-K|<=5':>10} {'R-L P':>6} {'R-L R':>6} {'R-L F':>6}")
    for r in rows:
        k = int(r["K"])
        lens = np.array([o["length"] for o in outputs if o["K"] == k])
        near = np.mean(np.abs(lens - k) <= 5)
        print(
            f"{k:3d} {float(r['len_mean']):6.2f} {float(r['len_std']):5.2f} {near:10.2f} "
            f"{float(r['rl_p']):6.3f} {float(r['rl_r']):6.3f} {float(r['rl_f']):6.3f}"
        )
    pooled = np.mean([abs(o["length"] - o["K"]) <= 5 for o in outputs])
    print(f"pooled |len-K|<=5: {pooled:.3f} over {len(outputs)} outputs")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    report(ap.parse_args().out)
