"""Put the pole at the centre of the unit disk and compare the finite element
eigenvalues with the exact values from Bessel zeros.

    python3 demos/disk_spectrum.py [h]
"""

import sys

from abm.eigen import assemble_ab, solve_lowest
from abm.mesh import DomainSpec, build_domain, insert_pole, make_cut, refine_around
from abm.oracles import disk_ab_eigenvalues

h = float(sys.argv[1]) if len(sys.argv) > 1 else 0.04

mesh = build_domain(DomainSpec("unit-disk", h))
mesh = insert_pole(refine_around(mesh, (0.0, 0.0), h, 4), (0.0, 0.0))
problem = assemble_ab(mesh, make_cut(mesh, mesh.pole, (1.0, 0.0)))
pairs = solve_lowest(problem, n_ev=4)

print(f"unit disk, pole at the origin, h = {h}, {mesh.n_vertices} vertices")
print(f"{'n':>2} {'FEM':>10} {'exact':>10} {'rel. error':>11}")
for p, exact in zip(pairs, disk_ab_eigenvalues(4)):
    print(f"{p.index:>2} {p.value:10.5f} {exact:10.5f} {abs(p.value - exact) / exact:11.2e}")
# The first two eigenvalues coincide: rotating the disk maps one
# eigenfunction to another, so a centred pole always gives a double value.
