#!/usr/bin/env python3
"""Run every shipped figure config and render the images.

Full paper-scale sweeps; expect on the order of an hour single-threaded.
Pass config names (without .json) to run a subset, e.g.

    python scripts/run_figures.py fig1_var100 fig3_comparison --threads 4
"""

import argparse
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("names", nargs="*", help="config names; default all")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out", default=str(ROOT / "out"))
    args = parser.parse_args()

    configs = sorted((ROOT / "configs").glob("*.json"))
    if args.names:
        configs = [ROOT / "configs" / f"{n}.json" for n in args.names]
    out_root = Path(args.out)
    for config in configs:
        name = config.stem
        cmd = [sys.executable, "-m", "cso_saa.cli", "run",
               "--config", str(config), "--out", str(out_root / name)]
        if args.threads:
            cmd += ["--threads", str(args.threads)]
        print("+", " ".join(cmd), flush=True)
        subprocess.run(cmd, check=True)
        plot_spec = ROOT / "configs" / "plots" / f"{name}.json"
        if plot_spec.exists():
            render = [sys.executable, str(ROOT / "plots" / "render"),
                      "--spec", str(plot_spec)]
            print("+", " ".join(render), flush=True)
            subprocess.run(render, check=True, cwd=ROOT)
    return 0


if __name__ == "__main__":
    sys.exit(main())
