"""Rate regimes on R^1 with V = -|x|^q: measured slope against the theory exponent."""

import argparse

from subordlab import harness as hs

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--q", type=float, default=1.5)
    ap.add_argument("--family", default="b2")
    ap.add_argument("--alpha", type=float, default=None)
    ap.add_argument("--replicas", type=int, default=30)
    args = ap.parse_args()
    bern = {"family": args.family} if args.alpha is None else {"family": args.family, "alpha": args.alpha}
    cfg = hs.ExperimentConfig(model={"kind": "euclidean", "d": 1, "q": args.q}, bernstein=bern,
                              t_grid=[8.0, 16.0, 32.0, 64.0, 128.0, 256.0], replicas=args.replicas)
    table = hs.run_experiment(cfg)
    fit = hs.fit_exponent(table)
    expo, regime, logf = hs.theoretical_exponent(1, args.q, hs.upper_index(cfg.build_bernstein()))
    for r in table.rows:
        print(f"t={r.t:>6g}  mean W2^2={r.mean:.4g}  se={r.se:.2g}")
    print(f"fitted slope {fit.slope:.3f} +- {fit.stderr:.3f}; theory {expo:.3f} ({regime}"
          f"{', log factor' if logf else ''}); AIC prefers the {fit.preferred} model")
