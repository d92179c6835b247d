import csv

import numpy as np
import pytest

from cfslab import core, measure_opt as mo


CFG = mo.OptConfig(mu=0.5, volume_target=1.0, trace_target=1.0, max_iters=150, seed=3)


# --------------------------------------------------------------------------
# objective


def test_objective_mu_equals_action_at_half_over_n():
    rng = np.random.default_rng(0)
    s = mo.random_feasible_system(4, 1, 4, CFG, rng)
    assert mo.objective_mu(s, 1.0 / (2 * s.n)) == core.action(s)


def test_objective_mu_zero_is_nonnegative():
    rng = np.random.default_rng(1)
    s = mo.random_feasible_system(4, 1, 4, CFG, rng)
    assert mo.objective_mu(s, 0.0) >= 0.0


def test_objective_mu_vs_double_loop_oracle():
    rng = np.random.default_rng(2)
    s = mo.random_feasible_system(5, 1, 4, CFG, rng)
    mu = 0.3
    w = s.measure.weights
    pts = s.measure.points
    total = 0.0
    for a in range(4):
        for b in range(4):
            lam = np.abs(np.linalg.eigvals(pts[a].matrix() @ pts[b].matrix()))
            total += w[a] * w[b] * (float(np.sum(lam**2)) - mu * float(np.sum(lam)) ** 2)
    got = mo.objective_mu(s, mu)
    assert abs(got - total) <= 1e-8 * max(abs(total), 1.0)


# --------------------------------------------------------------------------
# weight projection


def test_project_weights_feasible_point():
    w = np.array([0.3, 0.3, 0.4])
    traces = np.array([2.0, 1.0, 0.0])
    out = mo.project_weights(w, traces, 1.0, 1.0, 1e-12)
    assert abs(out.sum() - 1.0) <= 1e-10
    assert abs(out @ traces - 1.0) <= 1e-10
    assert np.all(out >= 0.0)


def test_project_weights_is_projection():
    # projecting a feasible point returns it unchanged
    traces = np.array([2.0, 0.0])
    w = np.array([0.5, 0.5])
    out = mo.project_weights(w, traces, 1.0, 1.0, 1e-12)
    assert np.linalg.norm(out - w) <= 1e-12


def test_project_weights_infeasible_trace():
    traces = np.array([0.1, 0.2, 0.15])
    with pytest.raises(mo.InfeasibleError):
        mo.project_weights(np.ones(3) / 3, traces, 1.0, 5.0, 1e-12)


def test_project_weights_equal_traces():
    traces = np.array([1.0, 1.0, 1.0])
    out = mo.project_weights(np.array([0.2, 0.5, 0.3]), traces, 1.0, 1.0, 1e-12)
    assert abs(out.sum() - 1.0) <= 1e-12
    with pytest.raises(mo.InfeasibleError):
        mo.project_weights(np.array([0.2, 0.5, 0.3]), traces, 1.0, 2.0, 1e-12)


# --------------------------------------------------------------------------
# gradients


def test_analytic_gradient_matches_fd():
    rng = np.random.default_rng(4)
    s = mo.random_feasible_system(4, 1, 5, CFG, rng)
    mu = 0.3
    _, grad = mo._gradient_vector(s, mu, "analytic-with-fd-check")
    theta = mo._pack(
        s.measure.weights,
        [p.V for p in s.measure.points],
        [p.nu for p in s.measure.points],
    )
    ranks = [p.rank for p in s.measure.points]
    gfd = mo._fd_gradient_vector(s, mu, theta, 5, s.N, 1, ranks)
    assert np.linalg.norm(grad - gfd) <= 1e-5 * np.linalg.norm(gfd)


def test_gradient_fd_fallback_on_degenerate_pairs():
    # equal-moduli self-pairs have a degenerate |lam| profile; the fallback
    # still produces a finite, FD-consistent gradient
    x = core.make_operator_point(np.eye(4)[:, :2], [1.0, -1.0], 1)
    s = core.CausalFermionSystem(
        4, 1, core.DiscreteMeasure((x,), np.array([1.0]))
    )
    obj, gw, gV, gnu = mo._objective_and_gradient(s, 0.5, "analytic-with-fd-check")
    assert np.all(np.isfinite(gw))
    assert all(np.all(np.isfinite(g)) for g in gV)


# --------------------------------------------------------------------------
# minimize_measure


def test_minimize_single_atom_fully_constrained():
    # with one atom the constraints pin the weight: volume/trace enforce
    # w = v and the objective equals w^2 L_mu(x, x)
    x = core.make_operator_point(np.eye(2), [2.0, -1.0], 1)
    s = core.CausalFermionSystem(2, 1, core.DiscreteMeasure((x,), np.array([0.7])))
    cfg = mo.OptConfig(
        mu=0.5, volume_target=2.0, trace_target=2.0, max_iters=30, seed=0
    )
    res = mo.minimize_measure(s, cfg)
    w = res.measure.weights
    assert abs(w[0] - 2.0) <= 1e-8
    tr = res.measure.points[0].trace()
    assert abs(tr - 1.0) <= 1e-6  # trace target / volume


def test_minimize_flat_zero_configuration():
    x = core.make_operator_point(np.eye(4)[:, :2], [1.0, -1.0], 1)
    y = core.make_operator_point(np.eye(4)[:, 2:], [1.0, -1.0], 1)
    s = core.CausalFermionSystem(
        4, 1, core.DiscreteMeasure((x, y), np.array([0.5, 0.5]))
    )
    cfg = mo.OptConfig(mu=0.5, volume_target=1.0, trace_target=0.0, max_iters=40, seed=0)
    res = mo.minimize_measure(s, cfg)
    assert res.objective_history[-1] <= 1e-14
    assert res.grad_norm <= 1e-8


def test_minimize_monotone_and_feasible():
    rng = np.random.default_rng(5)
    s = mo.random_feasible_system(4, 1, 6, CFG, rng)
    res = mo.minimize_measure(s, CFG)
    hist = res.objective_history
    assert all(a >= b - 1e-15 for a, b in zip(hist, hist[1:]))
    assert abs(res.constraint_residuals[0]) <= 1e-6
    assert abs(res.constraint_residuals[1]) <= 1e-6
    assert np.all(res.measure.weights > 0)
    for p in res.measure.points:
        n_pos, n_neg = p.signature()
        assert n_pos <= 1 and n_neg <= 1


def test_minimize_beats_short_random_search():
    rng = np.random.default_rng(6)
    s = mo.random_feasible_system(4, 1, 6, CFG, rng)
    res = mo.minimize_measure(s, CFG)
    rng2 = np.random.default_rng(7)
    best = min(
        mo.objective_mu(mo.random_feasible_system(4, 1, 6, CFG, rng2), CFG.mu)
        for _ in range(500)
    )
    assert res.objective_history[-1] <= best


def test_minimize_deterministic():
    def run():
        rng = np.random.default_rng(CFG.seed)
        s = mo.random_feasible_system(4, 1, 6, CFG, rng)
        return mo.minimize_measure(s, CFG)

    r1, r2 = run(), run()
    assert r1.objective_history == r2.objective_history
    assert np.array_equal(r1.measure.weights, r2.measure.weights)
    for p, q in zip(r1.measure.points, r2.measure.points):
        assert np.array_equal(p.V, q.V) and np.array_equal(p.nu, q.nu)


def test_minimize_infeasible_targets():
    # all-equal traces pin the reachable trace to t0 * volume
    x = core.make_operator_point(np.eye(2), [2.0, -1.0], 1)
    y = core.make_operator_point(np.eye(4)[:, :2][:2, :] if False else np.eye(2), [2.0, -1.0], 1)
    s = core.CausalFermionSystem(
        2, 1, core.DiscreteMeasure((x, y), np.array([0.5, 0.5]))
    )
    cfg = mo.OptConfig(mu=0.5, volume_target=1.0, trace_target=3.0, max_iters=10, seed=0)
    with pytest.raises(mo.InfeasibleError):
        mo.minimize_measure(s, cfg)


def test_minimize_writes_csv(tmp_path):
    rng = np.random.default_rng(8)
    s = mo.random_feasible_system(4, 1, 4, CFG, rng)
    cfg = mo.OptConfig(mu=0.5, max_iters=10, seed=0)
    path = tmp_path / "iters.csv"
    mo.minimize_measure(s, cfg, csv_path=path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "objective", "volume_residual", "trace_residual", "grad_norm"]
    assert len(rows) > 1


# --------------------------------------------------------------------------
# stationarity report


def test_stationarity_flat_zero():
    x = core.make_operator_point(np.eye(4)[:, :2], [1.0, -1.0], 1)
    y = core.make_operator_point(np.eye(4)[:, 2:], [1.0, -1.0], 1)
    s = core.CausalFermionSystem(
        4, 1, core.DiscreteMeasure((x, y), np.array([0.5, 0.5]))
    )
    cfg = mo.OptConfig(mu=0.5, volume_target=1.0, trace_target=0.0, seed=0)
    rep = mo.stationarity_report(s, cfg)
    assert np.allclose(rep["support_ell"], 0.0)
    assert rep["ell_spread"] == 0.0


def test_stationarity_single_atom():
    x = core.make_operator_point(np.eye(2), [2.0, -1.0], 1)
    s = core.CausalFermionSystem(2, 1, core.DiscreteMeasure((x,), np.array([1.5])))
    cfg = mo.OptConfig(mu=0.5, volume_target=1.5, trace_target=1.5, seed=0)
    rep = mo.stationarity_report(s, cfg)
    lam = np.abs(core.product_spectrum(x, x))
    lmu = float(np.sum(lam**2)) - 0.5 * float(np.sum(lam)) ** 2
    assert abs(rep["support_ell"][0] - 1.5 * lmu) <= 1e-12


def test_stationarity_after_optimization():
    rng = np.random.default_rng(9)
    cfg = mo.OptConfig(mu=0.5, volume_target=1.0, trace_target=1.0, max_iters=400, seed=3)
    s = mo.random_feasible_system(4, 1, 6, cfg, rng)
    res = mo.minimize_measure(s, cfg)
    final = core.CausalFermionSystem(4, 1, res.measure)
    rep = mo.stationarity_report(final, cfg)
    # with interior weights, stationarity pins ell to an affine function of
    # the point traces; the fit residual shrinks as the run converges
    # (0.063 observed at 400 iterations for this instance; bound with margin)
    assert rep["ell_affine_residual_rel"] <= 0.15
    assert rep["ell_affine_residual_rel"] < rep["ell_spread_rel"]
