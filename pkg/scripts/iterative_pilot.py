"""Pilot runs of the sequential sampler on scenario C.

Prints labels used, the realized sum of query probabilities, the slack at
the last step and the smallest disagreement width, per run. This is the pilot
behind the frozen label-saving threshold (0.8 of T + n0).
"""

import argparse
from dataclasses import replace

import numpy as np

from activereg.iterative import disagreement_at, label_source, run
from activereg.rng import stream
from activereg.scenarios import scenario_c


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--horizon", choices=("design", "step", "stop"), help="override the slack horizon")
    args = ap.parse_args()

    sc = scenario_c()
    cfg = sc.iterative
    if args.horizon:
        cfg = replace(cfg, horizon=args.horizon)
    total = cfg.T + cfg.n0
    print("run  labels  sum_p   final_delta  min_width")
    used = []
    for r in range(args.runs):
        y = sc.x0 + sc.noise.sample(stream(sc.seed, "iter-noise", r), sc.n)
        state, _ = run(sc.design, label_source(y), cfg, sc.pcfg, stream(sc.seed, "iter", r))
        width = min(disagreement_at(i, state) for i in range(sc.n))
        used.append(state.labels_used)
        print(f"{r:3d}  {state.labels_used:6d}  {sum(state.p_trace):6.1f}  {state.deltas[-1]:11.4g}  {width:9.4g}")
    frac = np.mean(np.asarray(used) < 0.8 * total)
    print(f"runs with labels < 0.8*(T+n0) = {0.8 * total:.0f}: {frac:.2f}")


if __name__ == "__main__":
    main()
