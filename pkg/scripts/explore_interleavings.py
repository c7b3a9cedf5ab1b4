#!/usr/bin/env python3
"""State-space statistics: exhaustively interleave each corpus network and
report reachable states, completion, and outcome determinism.

Usage: python scripts/explore_interleavings.py [--size 4] [--max-states N]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sdflow.parser import parse_program_or_raise
from sdflow.runtime import explore, instantiate
from sdflow.syntax import SizeKind

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=4)
    ap.add_argument("--max-states", type=int, default=300_000)
    args = ap.parse_args()

    print(f"{'network':<28} {'actors':>6} {'states':>8} {'outcome':>10} "
          f"{'complete':>9} {'time':>7}")
    for kind in ("good", "rejected"):
        for f in sorted((ROOT / "corpus" / kind).glob("*.sdf")):
            net = parse_program_or_raise(f.read_text())
            params = [n for n, k in net.tenv.items if isinstance(k, SizeKind)]
            cfg = instantiate(net, {p: args.size for p in params})
            t0 = time.time()
            ex = explore(cfg, max_states=args.max_states)
            outcome = ("unique" if len(ex.terminals) == 1
                       else f"{len(ex.terminals)} distinct")
            complete = ("all" if ex.all_complete
                        else "some" if ex.any_complete else "none")
            if ex.truncated:
                complete += "*"
            print(f"{f.name:<28} {len(cfg.actors):>6} {ex.states:>8} "
                  f"{outcome:>10} {complete:>9} {time.time()-t0:>6.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
