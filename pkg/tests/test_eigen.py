import math

import numpy as np
import pytest

from abm.eigen import (
    ConvergenceError,
    align_phase,
    assemble_ab,
    cut_signs,
    diamagnetic_check,
    full_vector,
    hardy_check,
    magnetic_rayleigh,
    overlap,
    read_field,
    reconstruct_complex,
    solve_lowest,
    theta,
    write_field,
)
from abm.local import evaluate
from abm.mesh import DomainSpec, MeshError, build_domain, insert_pole, make_cut, refine_around
from abm.oracles import bessel_zero, disk_ab_eigenvalues


@pytest.fixture(scope="module")
def centered():
    m = insert_pole(build_domain(DomainSpec("unit-disk", 0.04)), (0.0, 0.0))
    cut = make_cut(m, m.pole, (1.0, 0.0))
    pr = assemble_ab(m, cut)
    return pr, solve_lowest(pr, 4, 1e-11)


@pytest.fixture(scope="module")
def offcenter():
    m = build_domain(DomainSpec("unit-disk", 0.05))
    m = insert_pole(refine_around(m, (0.2, 0.1), 0.05, 3), (0.2, 0.1))
    cut = make_cut(m, m.pole, (0.0, 1.0))
    pr = assemble_ab(m, cut)
    pairs = solve_lowest(pr, 3, 1e-11)
    return pr, pairs, [reconstruct_complex(p, pr) for p in pairs]


def test_theta_branch():
    b = (0.2, 0.1)
    pts = np.array([[1.2, 0.1 + 1e-12], [0.2, 1.1], [-0.8, 0.1], [0.2, -0.9]])
    assert theta(pts, b) == pytest.approx([0, math.pi / 2, math.pi, 3 * math.pi / 2], abs=1e-9)
    assert np.all((theta(np.random.default_rng(1).uniform(-1, 1, (50, 2)), b) >= 0))


def test_flux_free_disk():
    pr = assemble_ab(build_domain(DomainSpec("unit-disk", 0.04)))
    lam = solve_lowest(pr, 1)[0].value
    assert lam == pytest.approx(bessel_zero(0.0) ** 2, rel=5e-3)
    assert lam > bessel_zero(0.0) ** 2  # conforming elements bound from above


def test_centered_pole_spectrum(centered):
    pr, pairs = centered
    lam = [p.value for p in pairs]
    ref = disk_ab_eigenvalues(4)
    assert lam == pytest.approx(ref, rel=0.02)
    assert abs(lam[0] - lam[1]) <= 1e-3 * lam[0]
    assert lam[2] == pytest.approx(20.1907, rel=0.02)


def test_symmetric_assembly(centered):
    pr, _ = centered
    assert (pr.K != pr.K.T).nnz == 0
    assert (pr.M != pr.M.T).nnz == 0


def test_solver_contract(centered):
    pr, pairs = centered
    lam = [p.value for p in pairs]
    assert lam == sorted(lam)
    U = np.column_stack([p.vector for p in pairs])
    G = U.T @ (pr.M @ U)
    assert np.allclose(G, np.eye(len(pairs)), atol=1e-8)
    assert all(p.residual <= 1e-11 for p in pairs)


def test_cluster_reported_for_double_eigenvalue(centered):
    _, pairs = centered
    # the sign-flip mesh is not exactly symmetric, so the pair may split
    # slightly; membership is reported only below a relative gap of 1e-6
    gap = abs(pairs[1].value - pairs[0].value) / pairs[0].value
    assert (1 in pairs[0].cluster) == (gap <= 1e-6)


def test_solver_errors(centered):
    pr, _ = centered
    with pytest.raises(ValueError):
        solve_lowest(pr, pr.K.shape[0] + 1)
    with pytest.raises(ConvergenceError) as e:
        solve_lowest(pr, 2, 1e-14, maxiter=2)
    assert len(e.value.residuals) == 2


def test_deterministic_given_seed(centered):
    pr, _ = centered
    a = solve_lowest(pr, 2, 1e-10, seed=7)
    b = solve_lowest(pr, 2, 1e-10, seed=7)
    assert all(np.array_equal(x.vector, y.vector) for x, y in zip(a, b))


def test_cut_invariance_exact():
    m = insert_pole(refine_around(build_domain(DomainSpec("unit-disk", 0.06)), (0.1, 0.05), 0.06, 2), (0.1, 0.05))
    c1, c2 = make_cut(m, m.pole, (1.0, 0.0)), make_cut(m, m.pole, (-0.3, -1.0))
    assert set(c1.edges) != set(c2.edges)
    v1 = [p.value for p in solve_lowest(assemble_ab(m, c1), 4, 1e-12)]
    v2 = [p.value for p in solve_lowest(assemble_ab(m, c2), 4, 1e-12)]
    assert max(abs(a - b) / a for a, b in zip(v1, v2)) <= 1e-8


def test_signs_only_flip_near_cut(offcenter):
    pr, _, _ = offcenter
    S = cut_signs(pr.mesh, pr.cut)
    flipped = np.flatnonzero((S < 0).any(axis=1))
    on_cut = np.isin(pr.mesh.triangles[flipped], list(pr.cut.path)).any(axis=1)
    assert flipped.size and on_cut.all()


def test_pole_mismatch_rejected(offcenter):
    pr, _, _ = offcenter
    other = insert_pole(build_domain(DomainSpec("unit-disk", 0.1)), (0.0, 0.0))
    with pytest.raises(MeshError):
        assemble_ab(other, pr.cut)


def test_modulus_matches_real_vector(offcenter):
    pr, pairs, fields = offcenter
    u = full_vector(pr, pairs[0].vector)
    assert np.allclose(np.abs(fields[0].values), np.abs(u), atol=1e-14)


def test_complex_field_continuous_off_cut(offcenter):
    pr, _, fields = offcenter
    m, phi = pr.mesh, fields[0]
    E, _ = m.edges()
    et = m.edge_triangles()
    cut = {tuple(sorted(e)) for e in pr.cut.edges}
    rng = np.random.default_rng(3)
    inner = [i for i in np.flatnonzero(et[:, 1] >= 0) if tuple(sorted(E[i])) not in cut and m.pole not in E[i]]
    for i in rng.choice(inner, 40, replace=False):
        mid = m.vertices[E[i]].mean(axis=0)
        c0 = m.vertices[m.triangles[et[i, 0]]].mean(axis=0)
        c1 = m.vertices[m.triangles[et[i, 1]]].mean(axis=0)
        eps = 1e-9
        a, b = evaluate(phi, np.array([mid + eps * (c0 - mid), mid + eps * (c1 - mid)]))
        assert abs(a - b) <= 1e-6 * (abs(a) + 1e-12)


def test_magnetic_rayleigh_cross_check(offcenter):
    _, pairs, fields = offcenter
    for p, f in zip(pairs, fields):
        assert magnetic_rayleigh(f) == pytest.approx(p.value, rel=0.03)


def test_align_phase(offcenter):
    _, _, fields = offcenter
    phi = fields[0]
    same, c = align_phase(phi, phi)
    assert c == 1
    for g in (0.3, 2.0, -1.1):
        out, _ = align_phase(phi.scaled(np.exp(1j * g)), phi)
        assert np.allclose(out.values, phi.values, atol=1e-12)
        z = overlap(out, phi)
        assert z.real > 0 and abs(z.imag) <= 1e-12 * abs(z)
    # distinct eigenfunctions for the same pole are orthogonal
    with pytest.raises(ValueError):
        align_phase(fields[1], fields[0])


def test_field_io_round_trip(offcenter):
    _, _, fields = offcenter
    digest, pole, vals = read_field(write_field(fields[0]))
    assert digest == fields[0].mesh.digest()
    assert pole == tuple(fields[0].pole)
    assert np.array_equal(vals, fields[0].values)


def test_diamagnetic_and_hardy(offcenter):
    _, _, fields = offcenter
    for f in fields:
        lhs, rhs = diamagnetic_check(f)
        assert lhs <= rhs * (1 + 1e-8)
        lhs, rhs = hardy_check(f, 0.4)
        assert lhs <= rhs
