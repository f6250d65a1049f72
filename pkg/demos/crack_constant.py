"""Solve the half-plane crack problem on growing half disks and extrapolate
the constant m_k to infinite radius.

    python3 demos/crack_constant.py [k]
"""

import sys

from abm.crack import identity_check, richardson_m_k

k = int(sys.argv[1]) if len(sys.argv) > 1 else 1
fit, profiles = richardson_m_k(k, [16.0, 64.0, 256.0], h=0.1, grading=6)

for p in profiles:
    ident = identity_check(p, truncated=True)["residual"]
    print(f"R = {p.R:6.0f}   m (energy) = {p.m_energy:.6f}   m (boundary) = {p.m_boundary:.6f}   identity residual = {ident:.1e}")
print(f"extrapolated m_{k} = {fit.m_inf:.5f} +- {fit.error_bar:.1e}  (truncation decays like R^-{fit.p:.2f})")
