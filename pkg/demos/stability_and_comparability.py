"""Energy comparability and stability of Neumann solutions for several p.

First the Besov energy of random functions is compared with the energy of
their p-harmonic extensions; the spread of the ratio should stay bounded
when the layer stack is refined.  Then the data of a Neumann problem is
perturbed along a fixed direction and the gradient distance is fitted
against the size of the perturbation.

Run with ``python3 demos/stability_and_comparability.py``.
"""

import numpy as np

from fraclap import FractionalParams, build_product_extension, cycle_space
from fraclap.verify import equivalence_check, make_rng, measure_stability_exponent

Z = cycle_space(32)

print("comparability (20 random functions, then refined domain)")
for p in (1.5, 2.0, 3.0):
    P = FractionalParams(p, 2 / 3 if p < 2 else 1 / p)
    dom = build_product_extension(Z, P, M=8, y_min=0.1, Y_max=32.0, connectivity="base")
    rep = equivalence_check(Z, dom, None, P, ensemble_size=20, seed=1)
    s = rep.summary
    print(f"  p={p}: ratio range [{s['ratio_min']:.3f}, {s['ratio_max']:.3f}], "
          f"C={s['C']:.3f} -> {s['C_refined']:.3f}  {rep.verdict}")

print("\nstability exponent (slope of gradient distance vs data distance)")
f = make_rng(7).standard_normal(Z.n)
f -= f.mean()
for p in (1.5, 2.0, 3.0, 4.0):
    P = FractionalParams(p, 2 / 3 if p < 2 else 1 / p)
    dom = build_product_extension(Z, P, M=12, connectivity="base")
    rep = measure_stability_exponent(Z, dom, None, P, f, ts=2.0 ** -np.arange(1, 13), seed=3)
    s = rep.summary
    print(f"  p={p}: slope {s['slope']:.3f} (tau={s['tau']:.3f}, r2={s['r_squared']:.4f})  "
          f"{rep.verdict}")
