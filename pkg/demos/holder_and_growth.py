"""Boundary regularity for bounded data versus a point mass.

A cycle of length 64 is sampled with 256 points.  Bounded data gives a
Neumann solution whose trace oscillation decays like a power of the scale
and passes the growth test; a point mass concentrated on one sample fails
the growth test and has an effective integrability exponent below the
threshold ``q0``.

Run with ``python3 demos/holder_and_growth.py``.
"""

import numpy as np

from fraclap import FractionalParams, build_product_extension, cycle_space
from fraclap.verify import (
    default_Q_mu,
    effective_q,
    estimate_holder,
    holder_threshold,
    makalainen_check,
)

n, length = 256, 64.0
h = length / n
Z = cycle_space(n, length=length, nu=np.full(n, h))
x = np.arange(n) * h
P = FractionalParams(2.0, 0.5)
M = int(np.ceil(np.log(length / h) / np.log(1.5))) + 1
dom = build_product_extension(Z, P, M=M, y_min=h, Y_max=length, connectivity="base")

region = (x >= 8) & (x < 24)
bounded = np.where(region, 1.0, 0.0) - np.where((x >= 40) & (x < 56), 1.0, 0.0)
atom = np.zeros(n)
atom[int(16 / h)] = 1.0 / h
atom[int(48 / h)] = -1.0 / h

Q = default_Q_mu(Z, P)
q0 = holder_threshold(P, Q)
print(f"Q_mu = {Q:.3f}, threshold q0 = {q0:.3f}")

hold = estimate_holder(Z, dom, None, P, bounded, center=int(16 / h), R0=8.0)
print(f"bounded data: oscillation slope {hold.summary['slope']:.3f}, "
      f"predicted at least {hold.summary['predicted']:.3f}  {hold.verdict}")
for row in hold.data:
    print(f"    delta={row['delta']:7.3f}  osc={row['oscillation']:.3e}")

for name, f in (("bounded", bounded), ("atom", atom)):
    rep = makalainen_check(Z, dom, f, 2.0, 0.5, region=region)
    q = effective_q(Z, np.where(region, f, 0.0))
    print(f"{name:>8}: growth slope {rep.summary['slope']:+.3f} -> {rep.verdict}; "
          f"effective q = {q:.2f}")
