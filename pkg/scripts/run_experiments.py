"""Run the INI experiment configs in scripts/configs and summarize their manifests.

Usage:
    python3 scripts/run_experiments.py [names ...] [--out-dir runs] [--seed 0]

Names are config stems (``rank_survey``, ``block_sweep``, ...); default runs all of them.
"""
import argparse
import sys
from pathlib import Path

from itocomplete.experiments import load_config, run_experiment

CONFIGS = Path(__file__).with_name("configs")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*")
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args(argv)
    paths = [CONFIGS / f"{n}.ini" for n in args.names] or sorted(CONFIGS.glob("*.ini"))
    status = 0
    for path in paths:
        cfg = load_config(path, {"out_dir": args.out_dir, "seed": args.seed})
        man = run_experiment(cfg)
        took = sum(s["seconds"] for s in man.steps)
        print(f"{path.stem:20s} ok={man.ok!s:5s} {took:8.1f}s  {man.out_dir}")
        for name, ok in man.checks.items():
            print(f"    check {name}: {'pass' if ok else 'FAIL'}")
        status |= man.exit_code
    return status


if __name__ == "__main__":
    sys.exit(main())
