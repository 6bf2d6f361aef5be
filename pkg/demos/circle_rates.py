"""Rate of E[W_2^2(mu_t, mu)] on the circle under a stable(1/2) clock.

Prints the table, the fitted slope and t * mean against the sandwich
[4 zeta(3), 16 zeta(3)].  Pass --replicas to trade time for precision.
"""

import argparse

from subordlab import harness as hs

ZETA3 = 1.2020569031595942

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicas", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = hs.ExperimentConfig(model={"kind": "circle"}, bernstein={"family": "stable", "alpha": 0.5},
                              t_grid=[4.0, 8.0, 16.0, 32.0, 64.0, 128.0], replicas=args.replicas,
                              seed=args.seed)
    table = hs.run_experiment(cfg)
    print(f"{'t':>8}{'mean W2^2':>14}{'se':>12}{'t*mean':>10}")
    for r in table.rows:
        print(f"{r.t:>8g}{r.mean:>14.5g}{r.se:>12.2g}{r.t * r.mean:>10.3f}")
    fit = hs.fit_exponent(table)
    print(f"slope {fit.slope:.3f} +- {fit.stderr:.3f}; sandwich [{4 * ZETA3:.3f}, {16 * ZETA3:.3f}]")
