"""Run every config in configs/ through the ``all`` subcommand.

Usage: python scripts/run_experiments.py [--out DIR] [--seed N] [config ...]
"""
import argparse
from pathlib import Path

from qdftlab.cli import run
from qdftlab.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", type=Path)
    ap.add_argument("--out", type=Path, default=ROOT / "out")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    paths = args.configs or sorted((ROOT / "configs").glob("*.ini"))
    status = 0
    for path in paths:
        cfg = load_config(path).with_overrides(seed=args.seed, out=args.out / path.stem)
        manifest = run(cfg, "all")
        verdicts = ", ".join(f"{e['id']}={e['verdict']}" for e in manifest.experiments)
        print(f"{path.name}: {verdicts}  ({manifest.timings['total_s']:.1f}s)")
        status |= manifest.failed
    return int(status)


if __name__ == "__main__":
    raise SystemExit(main())
