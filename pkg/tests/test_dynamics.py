import numpy as np
import pytest

from noisy_aqc.dynamics import (
    GasState, IntegratorOptions, StepRejected, gas_rhs, init_exact, init_perturbative, integrate,
)
from noisy_aqc.hamiltonian import assemble, build_set
from noisy_aqc.noise import ConstantSchedule, NoiseConfig, TanhSchedule, init_path, make_rng, sample_goe
from noisy_aqc.oracle import compare_traces, reference_trace


def exact_gas(hset, lam, dh, ref_vectors=None):
    """(x, v, l) from diagonalisation, eigenvector signs aligned to ``ref_vectors``."""
    w, vec = np.linalg.eigh(assemble(hset, lam, dh))
    if ref_vectors is not None:
        vec = vec * np.sign(np.sum(vec * ref_vectors, axis=0))
    b = vec.T @ (hset.Z * hset.Hb) @ vec
    l = (w[:, None] - w[None, :]) * b
    np.fill_diagonal(l, 0.0)
    return w, np.diag(b).copy(), l, vec


@pytest.mark.parametrize("with_rate", [False, True])
def test_rhs_matches_finite_differences(with_rate):
    hset = build_set("01->01", "diagonal-ladder")
    rng = make_rng(21)
    dh0 = sample_goe(16, 0.1, rng)
    rate_lab = sample_goe(16, 0.5, rng) if with_rate else np.zeros((16, 16))
    lam0, h = 0.37, 1e-5

    def at(lam, ref=None):
        return exact_gas(hset, lam, dh0 + (lam - lam0) * rate_lab, ref)

    x, v, l, vec = at(lam0)
    plus, minus = at(lam0 + h, vec), at(lam0 - h, vec)
    fd = [(p - m) / (2 * h) for p, m in zip(plus[:3], minus[:3])]
    rate = vec.T @ rate_lab @ vec if with_rate else None
    dx, dv, dl = gas_rhs(GasState(lam0, x, v, l), rate)
    np.testing.assert_allclose(dx, fd[0], atol=1e-6)
    np.testing.assert_allclose(dv, fd[1], atol=1e-5 * max(1, np.abs(fd[1]).max()))
    np.testing.assert_allclose(dl, fd[2], atol=1e-5 * max(1, np.abs(fd[2]).max()))


def test_rhs_invariants_without_noise():
    hset = build_set("11->10", "diagonal-ladder")
    st = init_exact(hset, sample_goe(16, 0.1, make_rng(3)))
    dx, dv, dl = gas_rhs(st)
    np.testing.assert_array_equal(dx, st.v)
    assert abs(dv.sum()) < 1e-10
    assert np.max(np.abs(dl + dl.T)) < 1e-12


def test_rhs_clamps_true_crossings_and_rejects_close_interacting_pairs():
    x = np.array([0.0, 0.0, 1.0])
    v = np.array([1.0, -1.0, 0.0])
    l = np.zeros((3, 3))
    l[0, 2], l[2, 0] = 0.3, -0.3
    dx, dv, dl = gas_rhs(GasState(0.5, x, v, l))
    assert np.all(np.isfinite(dv)) and np.all(np.isfinite(dl))
    l[0, 1], l[1, 0] = 1e-3, -1e-3
    with pytest.raises(StepRejected) as info:
        gas_rhs(GasState(0.5, x, v, l))
    assert info.value.pair == (0, 1)


def test_init_exact_rejects_degenerate_start():
    hset = build_set()
    bad = type(hset)(H0=np.zeros((16, 16)), Hb=np.zeros((16, 16)), Z=10.0, mu=-0.1, operation="00->00")
    with pytest.raises(ValueError, match="degenerate"):
        init_exact(bad)


def test_init_exact_fields():
    hset = build_set("10->11", "commuting")
    st = init_exact(hset)
    assert st.lam == 1.0 and np.all(np.diff(st.x) > 0)
    np.testing.assert_allclose(st.l, -st.l.T, atol=1e-14)
    np.testing.assert_allclose(st.v.sum(), hset.Z * np.trace(hset.Hb), rtol=1e-12)


@pytest.mark.parametrize("preset", ["diagonal-ladder", "commuting"])
def test_perturbative_start_error_is_second_order(preset):
    errs = []
    for z in (50.0, 100.0, 200.0):
        hset = build_set("01->01", preset, 1.0 / z)
        a, b = init_exact(hset), init_perturbative(hset, order=2)
        errs.append(max(np.abs(a.x - b.x).max(), np.abs(a.v - b.v).max()))
    if errs[0] < 1e-10:
        return  # commuting preset: the expansion is exact
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_perturbative_first_order_is_first_order():
    errs = []
    for z in (50.0, 100.0, 200.0):
        hset = build_set("00->00", "diagonal-ladder", 1.0 / z)
        errs.append(np.abs(init_exact(hset).x - init_perturbative(hset, order=1).x).max())
    assert 1.8 < errs[0] / errs[1] < 2.2
    with pytest.raises(ValueError):
        init_perturbative(build_set(), order=3)


def test_fourth_order_convergence():
    hset = build_set("01->01", "diagonal-ladder")
    st = init_exact(hset)
    exact = np.linalg.eigvalsh(assemble(hset, 0.0))
    errs = []
    for h, g in ((0.01, 101), (0.005, 201), (0.0025, 401)):
        opts = IntegratorOptions(base_step=h, grid_points=g, gap_threshold=1e-12, tol=1e3)
        tr, _ = integrate(st, None, opts)
        errs.append(np.abs(tr.sorted_x[-1] - exact).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.5), orders


@pytest.mark.parametrize("op,preset", [("00->00", "diagonal-ladder"), ("11->10", "commuting")])
@pytest.mark.parametrize("eps", [0.0, 0.1])
def test_matches_diagonalisation(op, preset, eps):
    hset = build_set(op, preset)
    path = init_path(NoiseConfig(schedule=ConstantSchedule(eps), mode="frozen" if eps else "off", seed=7))
    tr, _ = integrate(init_exact(hset, path.dh), path)
    ref = reference_trace(hset, path.dh, tr.lambdas)
    assert compare_traces(ref, tr) >= 4.0
    assert tr.lambdas[0] == 1.0 and tr.lambdas[-1] == 0.0 and len(tr.lambdas) == 1001


def trace_identity_drift(hset, tr):
    tot = np.trace(hset.H0) + tr.lambdas * hset.Z * np.trace(hset.Hb) + tr.dh_trace
    return np.max(np.abs(tr.x.sum(axis=1) - tot) / (1 + np.abs(tot)))


@pytest.mark.parametrize("mode", ["off", "frozen", "ou"])
def test_trace_identity_and_antisymmetry(mode):
    hset = build_set("11->10", "diagonal-ladder")
    path = init_path(NoiseConfig(schedule=ConstantSchedule(0.1), mode=mode, seed=1))
    st = init_exact(hset, path.dh)
    if mode == "ou":
        path.rotate(st.vectors)
    tr, fin = integrate(st, path)
    assert trace_identity_drift(hset, tr) <= 1e-8
    assert tr.diagnostics["max_antisymmetry"] <= 1e-9
    assert np.ptp(tr.v_sum) <= 1e-8 * abs(tr.v_sum[0])
    assert fin.lam == 0.0


def test_velocity_sum_conserved_without_noise():
    hset = build_set("10->11", "commuting")
    tr, _ = integrate(init_exact(hset), None)
    assert np.ptp(tr.v_sum) <= 1e-8 * abs(tr.v_sum[0])


def test_off_mode_equals_zero_amplitude_ou():
    hset = build_set("01->01", "diagonal-ladder")
    off = init_path(NoiseConfig(mode="off"))
    zero = init_path(NoiseConfig(schedule=ConstantSchedule(0.0), mode="ou", seed=99))
    a, _ = integrate(init_exact(hset, off.dh), off)
    b, _ = integrate(init_exact(hset, zero.dh), zero)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.coupling, b.coupling)


def test_integration_is_deterministic():
    hset = build_set("11->10", "commuting")
    runs = []
    for _ in range(2):
        p = init_path(NoiseConfig(schedule=ConstantSchedule(0.1), seed=5), index=3)
        st = init_exact(hset, p.dh)
        p.rotate(st.vectors)
        runs.append(integrate(st, p))
    assert np.array_equal(runs[0][0].x, runs[1][0].x)
    assert runs[0][0].events == runs[1][0].events


def test_tanh_schedule_leaves_no_final_noise():
    hset = build_set("01->01", "commuting")
    p = init_path(NoiseConfig(schedule=TanhSchedule(0.1, 10.0), seed=2))
    st = init_exact(hset, p.dh)
    p.rotate(st.vectors)
    tr, fin = integrate(st, p)
    assert not np.any(fin.dh)
    assert trace_identity_drift(hset, tr) <= 1e-8


def test_options_validation():
    with pytest.raises(ValueError):
        IntegratorOptions(base_step=0.3)
    with pytest.raises(ValueError):
        IntegratorOptions(grid_points=7)
    with pytest.raises(ValueError):
        IntegratorOptions(max_depth=40)
    with pytest.raises(ValueError):
        IntegratorOptions(tol=0.0)
    with pytest.raises(ValueError):
        integrate(GasState(0.5, np.zeros(2), np.zeros(2), np.zeros((2, 2))))
