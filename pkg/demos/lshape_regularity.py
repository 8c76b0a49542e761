"""Corner spectra, admissible weights and analytic-class seminorms on the L-shape.

Run: python demos/lshape_regularity.py
"""

import math

from cornerreg import (
    PolygonDomain,
    Sector,
    WeightMultiExponent,
    admissible_2d,
    analytic_fit,
    b_threshold,
    bundled_geometry,
    corner_singular,
    corner_spectrum_laplace,
    seminorm_sequence,
)


def main():
    g = bundled_geometry("lshape")
    re = max(g.corners, key=lambda c: c.opening)
    sp = corner_spectrum_laplace(re.opening)
    print(f"re-entrant corner {re.id}: opening {re.opening / math.pi:.3f} pi, b = {b_threshold(sp):.6f}")

    for beta in (-1.5, -1.6, -1.7):
        w = WeightMultiExponent.uniform(g, beta)
        ok = all(v.admissible for v in admissible_2d(g, w))
        print(f"beta = {beta:+.2f}: {'admissible' if ok else 'not admissible'}")

    u = corner_singular(re, k=1)
    sector = Sector(re.opening)
    seq = seminorm_sequence(u, sector, -1.5, 12)
    fit = analytic_fit(seq)
    print("m   s_m")
    for m, v in enumerate(seq.values):
        print(f"{m:2d}  {float(v):.6e}")
    print(f"Cauchy constant {fit.C:.4f}, drift between windows {fit.drift:.2%}")

    # the whole polygon needs a per-corner weight: convex corners see u != 0
    beta = tuple(-1.5 if c.id == re.id else -0.5 for c in g.corners)
    seq = seminorm_sequence(u, PolygonDomain(g), WeightMultiExponent(beta), 4)
    print("polygon seminorms m=0..4:", ", ".join(f"{float(v):.4f}" for v in seq.values))


if __name__ == "__main__":
    main()
