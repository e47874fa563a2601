"""Attention weight of a lagged patch: closed form against quadrature.

For a two-tone signal the un-normalized attention logit between a patch and
its copy shifted by ``dt`` integrates to a weighted sum of cosines. The
larger tone dominates, so the top weights sit at multiples of its period.

    python demos/theorem_check.py
"""

import numpy as np

from sorn.theorems import TwoToneSignal, closed_form_weight, dominance_report, quadrature_weight

sig = TwoToneSignal(c1=2.0, c2=1.0, a=2, b=3)
print(f"p = {sig.p}, T1 = {sig.T1}, T2 = {sig.T2}")

lags = np.linspace(0, sig.p, 7)
closed = closed_form_weight(sig, lags)
quad = quadrature_weight(sig, 0.0, lags)
for dt, c, q in zip(lags, closed, quad):
    print(f"  dt={dt:5.2f}  closed={c:9.5f}  quadrature={q:9.5f}")

rep = dominance_report(sig)
print("interior maximizers:", rep.maximizers, "-> dominant period", rep.dominant_period)

# swapping amplitudes moves the peak to the other tone's period
swapped = dominance_report(TwoToneSignal(c1=1.0, c2=2.0, a=2, b=3))
print("after swapping amplitudes:", swapped.maximizers, "-> dominant period", swapped.dominant_period)
