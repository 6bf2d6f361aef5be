"""Print the two limit sums bracketing t E[W_2^2] for a few families and spaces."""

from subordlab import bernstein as bf
from subordlab import diffusion as dm
from subordlab import spectral as sp

CASES = [
    (dm.circle(), bf.stable(0.5)),
    (dm.circle(), bf.linear()),
    (dm.circle(), bf.b2()),
    (dm.interval(1.0), bf.stable(0.5)),
    (dm.torus(2), bf.linear()),
    (dm.torus(2), bf.b2()),
]

if __name__ == "__main__":
    print(f"{'space':<12}{'family':<14}{'c=2':>14}{'c=8':>14}  tail bound")
    for model, B in CASES:
        spec = sp.spectral_data(model)
        try:
            lo = sp.limit_sum(spec, B, 2.0, tol=1e-4)
            hi = sp.limit_sum(spec, B, 8.0, tol=1e-4)
        except sp.SpectralTailError as exc:
            print(f"{model.kind + str(model.d):<12}{B.tag:<14}  not certifiable: {exc}")
            continue
        if lo.divergent:
            print(f"{model.kind + str(model.d):<12}{B.tag:<14}{'diverges':>14}{'diverges':>14}")
        else:
            print(f"{model.kind + str(model.d):<12}{B.tag:<14}{lo.value:>14.6f}{hi.value:>14.6f}  {hi.tail_bound:.1e}")
