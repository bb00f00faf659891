"""Run every CLI command for one config in dependency order and time each step.

    python3 scripts/run_pipeline.py configs/desk.json --out runs/desk
"""

import argparse
import sys
import time

from protosum.cli import main

STEPS = ("synth", "label", "train-extractor", "gen-prototypes", "train-abstractor", "summarize", "eval", "length-sweep")


def run(config: str, out: str | None, seed: int | None) -> int:
    extra = (["--out", out] if out else []) + (["--seed", str(seed)] if seed is not None else [])
    total = 0.0
    for step in STEPS:
        start = time.perf_counter()
        code = main([step, "--config", config, *extra])
        took = time.perf_counter() - start
        total += took
        print(f"{step:17s} exit {code}  {took:7.1f} s", flush=True)
        if code:
            return code
    print(f"{'total':17s}         {total:7.1f} s")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out")
    ap.add_argument("--seed", type=int)
    a = ap.parse_args()
    sys.exit(run(a.config, a.out, a.seed))
