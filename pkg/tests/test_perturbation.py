import numpy as np
import pytest

from cfslab import perturbation as pt


def _model(seed, d=16, n_neg=5, n_pos=6, strength=0.0):
    rng = np.random.default_rng(seed)
    return pt.random_model(d, n_neg, n_pos, rng, perturbation=strength)


# --------------------------------------------------------------------------
# resolvents


def test_resolvent_closed_form_vs_inverse():
    m = pt.FiniteSeaModel(np.diag([1.0, -1.0]), np.eye(2), np.zeros((2, 2)))
    R = pt.unperturbed_resolvent(m, 1j)
    direct = np.linalg.inv(m.k - 1j * np.eye(2))
    assert np.linalg.norm(R - direct) <= 1e-12


def test_resolvent_zero_model():
    m = pt.FiniteSeaModel(np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((3, 3)))
    R = pt.unperturbed_resolvent(m, 2.0)
    assert np.linalg.norm(R + np.eye(3) / 2.0) <= 1e-14


def test_resolvent_residue_at_plus_one():
    m = _model(0)
    lam = 1.0 - 1e-7
    R = pt.unperturbed_resolvent(m, lam)
    assert np.linalg.norm((1.0 - lam) * R - (m.p + m.k) / 2.0) <= 1e-6


def test_resolvent_random_models():
    for seed in range(10):
        m = _model(seed)
        for lam in (0.4 + 0.3j, -2.0, 0.5j, -1.0 + 0.49j):
            R = pt.unperturbed_resolvent(m, lam)
            direct = np.linalg.inv(m.k - lam * np.eye(m.dim))
            assert np.linalg.norm(R - direct) <= 1e-11


def test_resolvent_pole_rejected():
    m = _model(1)
    with pytest.raises(ZeroDivisionError):
        pt.unperturbed_resolvent(m, 0.0)


def test_model_invariants_enforced():
    with pytest.raises(ValueError):
        pt.FiniteSeaModel(np.diag([0.5, -1.0]), np.eye(2), np.zeros((2, 2)))


# --------------------------------------------------------------------------
# Neumann series


def test_neumann_zero_perturbation_exact():
    m = _model(2)
    R = pt.unperturbed_resolvent(m, -1.4)
    out = pt.neumann_resolvent(m, -1.4, 0)
    assert np.linalg.norm(out.matrix - R) == 0.0
    assert out.tail_bound == 0.0 or out.contraction == 0.0


def test_neumann_converges_to_direct_inverse():
    m = _model(3, strength=0.05)
    lam = -1.3
    out = pt.neumann_resolvent(m, lam, 60)
    direct = np.linalg.inv(m.perturbed() - lam * np.eye(m.dim))
    assert np.linalg.norm(out.matrix - direct) <= 1e-10


def test_neumann_tail_bound_dominates():
    # the reported bound is an upper bound for the true truncation error
    count = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(4, 24))
        n_neg = int(rng.integers(1, d // 2 + 1))
        n_pos = int(rng.integers(1, d - n_neg))
        m = pt.random_model(d, n_neg, n_pos, rng, perturbation=0.04)
        lam = -1.0 + 0.45 * np.exp(1j * rng.uniform(0, 2 * np.pi))
        order = int(rng.integers(0, 6))
        out = pt.neumann_resolvent(m, lam, order)
        direct = np.linalg.inv(m.perturbed() - lam * np.eye(d))
        err = np.linalg.norm(out.matrix - direct, 2)
        assert err <= out.tail_bound + 1e-12
        count += 1
    assert count == 100


def test_neumann_divergence_detected():
    m = _model(4)
    dk = np.eye(m.dim) * 3.0
    bad = pt.FiniteSeaModel(m.k, m.p, dk)
    with pytest.raises(ValueError):
        pt.neumann_resolvent(bad, -1.2, 5)


# --------------------------------------------------------------------------
# contour projector


def test_contour_unperturbed_diag():
    m = pt.FiniteSeaModel(np.diag([1.0, -1.0]), np.eye(2), np.zeros((2, 2)))
    P = pt.contour_sea_projector(m)
    assert np.linalg.norm(P - np.diag([0.0, 1.0])) <= 1e-13


def test_contour_matches_oracle():
    for seed in range(25):
        m = _model(seed, strength=0.05)
        P = pt.contour_sea_projector(m, order=None)
        assert np.linalg.norm(P - pt.sea_projector_oracle(m)) <= 1e-8


def test_contour_node_refinement():
    m = _model(6, strength=0.05)
    P64 = pt.contour_sea_projector(m, pt.Contour(nodes=64))
    P128 = pt.contour_sea_projector(m, pt.Contour(nodes=128))
    assert np.linalg.norm(P64 - P128) <= 1e-12


def test_contour_guard_near_eigenvalue():
    # plant an eigenvalue right on the contour circle
    k = np.diag([1.0, -1.0, 0.0])
    m = pt.FiniteSeaModel(k, k @ k, np.diag([0.0, 0.5 + 1e-9, 0.0]))
    with pytest.raises(ValueError):
        pt.contour_sea_projector(m)


def test_contour_validity():
    with pytest.raises(ValueError):
        pt.Contour(center=-1.0, radius=1.5)
    with pytest.raises(ValueError):
        pt.Contour(center=0.2, radius=0.3)


def test_idempotency_for_in_class_perturbations():
    # a unitary rotation of k keeps the enclosed eigenvalues at exactly -1,
    # where the weighting turns the integral into a genuine projector
    m = _model(7, strength=0.05)
    P = pt.contour_sea_projector(m, order=None)
    assert np.linalg.norm(P @ P - P) <= 1e-8


def test_sea_projector_derivative_continuity():
    # finite differences of the contour output match the resolvent-chain
    # derivative integral
    m = _model(8)
    rng = np.random.default_rng(99)
    E = rng.normal(size=(m.dim, m.dim)) + 1j * rng.normal(size=(m.dim, m.dim))
    E = (E + E.conj().T) / 2
    E /= np.linalg.norm(E, 2)
    h = 1e-5
    Pp = pt.contour_sea_projector(pt.FiniteSeaModel(m.k, m.p, h * E), order=None)
    Pm = pt.contour_sea_projector(pt.FiniteSeaModel(m.k, m.p, -h * E), order=None)
    fd = (Pp - Pm) / (2 * h)
    contour = pt.Contour()
    z, dz = contour.points()
    acc = np.zeros_like(m.k)
    I = np.eye(m.dim)
    for zj, dzj in zip(z, dz):
        R = np.linalg.solve(m.k - zj * I, I)
        acc += (-zj) * (-R @ E @ R) * dzj
    analytic = -acc / (2j * np.pi)
    assert np.linalg.norm(fd - analytic) <= 1e-5 * max(np.linalg.norm(analytic), 1.0)


# --------------------------------------------------------------------------
# Dirac identity


def test_dirac_identity_unperturbed():
    m = _model(9)
    P = pt.contour_sea_projector(m, order=None)
    D = pt.off_shell_operator(m)
    assert pt.dirac_identity_residual(P, D) <= 1e-10


def test_dirac_identity_converged():
    m = _model(10, strength=0.05)
    P = pt.contour_sea_projector(m, order=None)
    D = pt.off_shell_operator(m)
    assert pt.dirac_identity_residual(P, D) <= 1e-8


def test_dirac_identity_first_order_scaling():
    rng = np.random.default_rng(17)
    base = pt.random_model(20, 7, 8, rng)
    resid = {}
    for s in (0.02, 0.04, 0.08):
        dk = pt.conjugated_perturbation(base, s, np.random.default_rng(5))
        m = pt.FiniteSeaModel(base.k, base.p, dk)
        P1 = pt.contour_sea_projector(m, order=1)
        resid[s] = pt.dirac_identity_residual(P1, pt.off_shell_operator(m))
    assert 3.2 <= resid[0.04] / resid[0.02] <= 4.8
    assert 3.2 <= resid[0.08] / resid[0.04] <= 4.8


# --------------------------------------------------------------------------
# lattice Dirac model and Green's functions


def test_causal_fundamental_zero_difference():
    g = pt.GreensPair(np.eye(4), np.eye(4))
    assert np.linalg.norm(pt.causal_fundamental(g)) == 0.0


def test_causal_fundamental_krein_self_adjoint():
    lat = pt.lattice_dirac_model(5, 10.0, 1.0, 1e-3)
    k = pt.causal_fundamental(lat.greens("causal"))
    S = lat.spin_signature()
    assert np.linalg.norm(S @ k.conj().T @ S - k) <= 1e-10 * np.linalg.norm(k)


def test_vacuum_projector_split():
    # (p - k)/2 concentrates on the lower shell: on-shell blocks match the
    # negative-energy structure (kslash + m)/(2 omega), off-shell blocks and
    # the upper shell are suppressed
    nu = 1e-4
    lat = pt.lattice_dirac_model(3, 8.0, 1.0, nu)
    k = pt.causal_fundamental(lat.greens("causal"))
    p = pt.causal_fundamental(lat.greens("shell"))
    # on-shell peak of the nascent delta carries 1/(pi nu omega); rescaling
    # by pi nu turns (p - k)/2 into the textbook lower-shell density
    half = 0.5 * np.pi * nu * (p - k)
    for i, (q0, q1) in enumerate(lat.modes):
        blk = half[2 * i : 2 * i + 2, 2 * i : 2 * i + 2]
        w = np.hypot(q1, lat.mass)
        on_shell = abs(abs(q0) - w) < 1e-12
        if on_shell and q0 < 0:
            kslash = q0 * pt.GAMMA0_2 - q1 * pt.GAMMA1_2
            expect = (kslash + lat.mass * np.eye(2)) / (2 * w)
            assert np.linalg.norm(blk - expect) <= 5e-3
        else:
            assert np.linalg.norm(blk) <= 5e-3


def test_greens_series_zero_potential():
    lat = pt.lattice_dirac_model(3, 8.0, 1.0, 0.5)
    g = lat.greens("causal")
    out, orders, q = pt.greens_series(g, np.zeros((lat.dim, lat.dim)), 3)
    assert np.linalg.norm(out.s_adv - g.s_adv) == 0.0
    assert q == 0.0


def test_greens_series_first_order_term():
    lat = pt.lattice_dirac_model(3, 8.0, 1.0, 0.5)
    g = lat.greens("causal")
    rng = np.random.default_rng(2)
    B = rng.normal(size=(lat.dim, lat.dim)) * 0.05
    _, orders, _ = pt.greens_series(g, B, 1)
    first = orders[1].s_adv - orders[0].s_adv
    assert np.linalg.norm(first - (-g.s_adv @ B @ g.s_adv)) <= 1e-12


def test_greens_series_resolvent_identity():
    # with a soft prescription the series contracts and the perturbed pair
    # inverts the shifted Dirac matrix
    lat = pt.lattice_dirac_model(5, 8.0, 1.0, 0.5)
    g = lat.greens("causal")
    rng = np.random.default_rng(3)
    B = rng.normal(size=(lat.dim, lat.dim)) + 1j * rng.normal(size=(lat.dim, lat.dim))
    B = (B + B.conj().T) / 2
    B *= 0.05 / np.linalg.norm(B, 2)
    out, _, q = pt.greens_series(g, B, 80)
    assert q < 1.0
    D_adv = lat.dirac_matrix("advanced")
    D_ret = lat.dirac_matrix("retarded")
    assert np.linalg.norm((D_adv + B) @ out.s_adv - np.eye(lat.dim)) <= 1e-8
    assert np.linalg.norm((D_ret + B) @ out.s_ret - np.eye(lat.dim)) <= 1e-8


def test_greens_series_geometric_decay():
    lat = pt.lattice_dirac_model(5, 8.0, 1.0, 0.5)
    g = lat.greens("causal")
    rng = np.random.default_rng(4)
    B = rng.normal(size=(lat.dim, lat.dim))
    B *= 0.08 / np.linalg.norm(B, 2)
    out, orders, q = pt.greens_series(g, B, 24)
    ref = np.linalg.inv(lat.dirac_matrix("advanced") + B)
    errs = [np.linalg.norm(o.s_adv - ref, 2) for o in orders]
    errs = [e for e in errs if e > 1e-12]  # stop before roundoff saturation
    logs = np.log(errs)
    ks = np.arange(len(errs))
    slope, intercept = np.polyfit(ks, logs, 1)
    fit = slope * ks + intercept
    ss_res = np.sum((logs - fit) ** 2)
    ss_tot = np.sum((logs - np.mean(logs)) ** 2)
    assert 1.0 - ss_res / ss_tot >= 0.99
    assert np.exp(slope) <= q + 0.02


def test_causality_compatibility_check():
    lat = pt.lattice_dirac_model(3, 8.0, 1.0, 0.5)
    D = lat.dirac_matrix("none")
    S = lat.spin_signature()
    pt.check_causality_compatibility(D, np.eye(lat.dim), S)  # identity passes
    rng = np.random.default_rng(5)
    X = np.eye(lat.dim) + 0.3 * rng.normal(size=(lat.dim, lat.dim))
    with pytest.raises(ValueError):
        pt.check_causality_compatibility(D, X, S)


def test_model_container_round_trip(tmp_path):
    m = _model(21, strength=0.03)
    path = tmp_path / "model.txt"
    pt.save_model(m, path)
    m2 = pt.load_model(path)
    assert np.array_equal(m2.k, m.k)
    assert np.array_equal(m2.p, m.p)
    assert np.array_equal(m2.dk, m.dk)
    assert pt.dumps_model(m2) == pt.dumps_model(m)


def test_model_container_rejects_garbage():
    with pytest.raises(ValueError):
        pt.loads_model("bogus\n")
