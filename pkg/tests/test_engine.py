import numpy as np
import pytest
from hypothesis import given, strategies as st

from fkdmc.engine import (POLICIES, EstimatorSeries, FKModel, burn_in_steps, energy_estimate,
                          from_potential, gaussian_fk_model, init_ensemble, linear_gaussian_fk,
                          mutation_step, point_mass, run, run_replicates, select_indices,
                          selection_step)
from fkdmc.errors import ConfigError, ExtinctionError, NumericalError, PropagationError
from fkdmc.gaussian import GaussianMeasure, GaussianModel, discretize_continuous, ground_state
from fkdmc.rng import CounterRNG, available_backends

HALF = GaussianModel.scalar(0.5, 1.0, 1.0)
ETA0 = GaussianMeasure.scalar(0.0, 1.0)


def fk(model=HALF, eta0=ETA0):
    return gaussian_fk_model(model, eta0)


# ---------------------------------------------------------------- initialization

def test_init_requires_two_walkers():
    with pytest.raises(ConfigError) as err:
        init_ensemble(fk(), 1, 0)
    assert err.value.field == "N"


def test_init_point_mass_and_determinism():
    m = linear_gaussian_fk(0.5, 1.0, 1.0, point_mass([1.5]))
    ens = init_ensemble(m, 10, 3)
    assert ens.step == 0 and np.all(ens.positions == 1.5)
    a = init_ensemble(fk(), 100, 42).positions
    assert np.array_equal(a, init_ensemble(fk(), 100, 42).positions)
    assert not np.array_equal(a, init_ensemble(fk(), 100, 43).positions)


def test_init_gaussian_mean():
    eta = GaussianMeasure.scalar(2.0, 4.0)
    N = 500
    for seed in range(100):
        x = init_ensemble(fk(eta0=eta), N, seed).positions
        assert abs(x.mean() - 2.0) < 5 * 2.0 / np.sqrt(N)


# ---------------------------------------------------------------- selection

def test_equal_weights_replace_uniformly():
    rng = CounterRNG(1)
    N, R = 10, 20_000
    counts = np.zeros(N)
    for r in range(R):
        counts += np.bincount(select_indices(np.zeros(N), "proportional", rng, r), minlength=N)
    expected = N * R / N
    assert np.abs(counts - expected).max() < 5 * np.sqrt(expected)


def test_unit_policy_with_unit_potential_is_identity():
    rng = CounterRNG(2)
    for r in range(50):
        assert np.array_equal(select_indices(np.zeros(7), "unit", rng, r), np.arange(7))


def test_essential_sup_keeps_the_best_walker():
    rng = CounterRNG(3)
    gen = np.random.default_rng(0)
    for r in range(500):
        log_g = -gen.exponential(size=9)
        best = int(np.argmax(log_g))
        assert select_indices(log_g, "essential_sup", rng, r)[best] == best


def test_selection_errors():
    rng = CounterRNG(0)
    with pytest.raises(ExtinctionError) as err:
        select_indices(np.full(5, -np.inf), "proportional", rng, 7)
    assert err.value.step == 7
    with pytest.raises(ConfigError):
        select_indices(np.array([0.1, 0.0]), "unit", rng, 0)
    with pytest.raises(ConfigError):
        select_indices(np.zeros(3), "unit", rng, 0, g_max=2.0)
    with pytest.raises(ConfigError):
        select_indices(np.zeros(3), "tournament", rng, 0)
    with pytest.raises(NumericalError):
        select_indices(np.array([0.0, np.nan]), "proportional", rng, 0)


def test_zero_weight_walkers_are_never_picked():
    rng = CounterRNG(4)
    log_g = np.array([-np.inf, 0.0, -np.inf, -1.0])
    for r in range(200):
        for policy in POLICIES:
            idx = select_indices(log_g, policy, rng, r)
            assert not np.isin(idx, [0, 2]).any()


@pytest.mark.parametrize("policy", POLICIES)
def test_selection_is_unbiased(policy):
    """E[mean f(selected)] = psi_G(eta^N)(f) for a fixed pre-selection ensemble."""
    gen = np.random.default_rng(11)
    N, R = 8, 20_000
    x = gen.standard_normal(N)
    log_g = -0.5 * x * x
    f = np.tanh(x)
    w = np.exp(log_g)
    target = w @ f / w.sum()
    rng = CounterRNG(12)
    vals = np.array([f[select_indices(log_g, policy, rng, r)].mean() for r in range(R)])
    assert abs(vals.mean() - target) < 4 * vals.std(ddof=1) / np.sqrt(R)


@given(st.floats(-30, 30), st.integers(0, 2 ** 32))
def test_scale_invariance_of_indices(shift, seed):
    gen = np.random.default_rng(seed)
    log_g = -0.5 * gen.standard_normal(200) ** 2
    rng = CounterRNG(seed)
    for policy in ("proportional", "essential_sup"):
        assert np.array_equal(select_indices(log_g, policy, rng, 5),
                              select_indices(log_g + shift, policy, rng, 5))


def test_selection_step_conserves_walkers():
    rng = CounterRNG(5)
    ens = init_ensemble(fk(), 64, 5, rng)
    out = selection_step(ens, -0.5 * ens.positions[:, 0] ** 2, "proportional", rng)
    assert out.N == 64 and out.step == ens.step
    assert np.isin(out.positions, ens.positions).all()


# ---------------------------------------------------------------- mutation

def test_mutation_mean_is_linear():
    rng = CounterRNG(6)
    ens = init_ensemble(fk(eta0=GaussianMeasure.scalar(3.0, 1.0)), 100_000, 6, rng)
    out = mutation_step(ens, fk().kernel, rng)
    assert out.step == 1
    assert abs(out.positions.mean() - 0.5 * ens.positions.mean()) < 5 / np.sqrt(100_000)


def test_mutation_near_identity_kernel():
    m = linear_gaussian_fk(np.eye(2), 1e-12 * np.eye(2), np.eye(2), point_mass([1.0, -2.0]))
    rng = CounterRNG(7)
    ens = init_ensemble(m, 50, 7, rng)
    out = mutation_step(ens, m.kernel, rng)
    assert np.abs(out.positions - ens.positions).max() < 1e-4


def test_mutation_reports_bad_walker():
    def kernel(x, stream):
        y = x + stream.normal(1)
        y[3] = np.nan
        return y
    rng = CounterRNG(8)
    ens = init_ensemble(fk(), 10, 8, rng)
    with pytest.raises(PropagationError) as err:
        mutation_step(ens, kernel, rng)
    assert err.value.walker == 3 and err.value.step == 1


# ---------------------------------------------------------------- run

def test_run_zero_steps():
    s = run(fk(), 100, 0, 1)
    assert s.steps == [0] and len(s.eta_G) == 1


def test_run_records_estimators():
    s = run(fk(), 1000, 5, 2, observables=["norm2", "x0"])
    assert s.steps == list(range(6))
    assert set(s.eta) == {"norm2", "x0"}
    assert all(0 < g <= 1 for g in s.eta_G)
    assert s.mean_array().shape == (6, 1)
    assert len(s.wall_clock) == 6 and s.rng_offsets[2] == (2, 3)


def test_run_rejects_bad_arguments():
    with pytest.raises(ConfigError):
        run(fk(), 10, -1, 0)
    with pytest.raises(ConfigError):
        run(fk(), 10, 3, 0, policy="greedy")
    with pytest.raises(ConfigError):
        run(fk(), 10, 3, 0, observables=["entropy"])


def test_extinction_carries_step():
    def log_potential(x):
        return np.where(np.abs(x[:, 0]) < 10, 0.0, -np.inf)
    m = FKModel(1, log_potential, lambda x, s: x + 6.0, point_mass([0.0]), 1.0)
    with pytest.raises(ExtinctionError) as err:
        run(m, 5, 4, 0)
    assert err.value.step == 2


def test_from_potential_matches_log_form():
    lin = from_potential(1, lambda x: np.exp(-0.5 * x[:, 0] ** 2), fk().kernel, fk().initial, 1.0)
    a = run(lin, 500, 10, 9)
    b = run(fk(), 500, 10, 9)
    # log(exp(y)) may differ from y in the last bit; the ancestors do not
    assert np.array_equal(a.mean_array(), b.mean_array())


def test_zero_drift_energy():
    s = run(fk(GaussianModel.scalar(0.0, 1.0, 1.0)), 20_000, 120, 10)
    est = energy_estimate(s)
    assert abs(est.value - 1 / np.sqrt(2)) < 3 * est.stderr


def test_energy_within_three_standard_errors():
    s = run(fk(), 10_000, 200, 20240)
    est = energy_estimate(s)
    assert est.burn_in == burn_in_steps(10_000)
    assert abs(est.value - ground_state(HALF).E0) < 3 * est.stderr


@pytest.mark.parametrize("threads", [2, 5])
def test_thread_count_does_not_change_series(threads):
    ref = run(fk(), 3000, 15, 77, observables=["norm2"])
    other = run(fk(), 3000, 15, 77, observables=["norm2"], threads=threads)
    assert np.array_equal(ref.mean_array(), other.mean_array())
    assert ref.eta_G == other.eta_G and ref.psi == other.psi


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernels not built")
def test_backends_give_identical_series():
    a = run(fk(), 2000, 10, 5, backend="cython")
    b = run(fk(), 2000, 10, 5, backend="python")
    assert np.array_equal(a.mean_array(), b.mean_array()) and a.eta_G == b.eta_G


def test_replicates_are_independent_and_pool_invariant():
    one = run_replicates(fk(), 500, 5, 3, 4)
    many = run_replicates(fk(), 500, 5, 3, 4, threads=3)
    assert all(np.array_equal(a.mean_array(), b.mean_array()) for a, b in zip(one, many))
    assert len({a.means[3][0] for a in one}) == 4


def test_series_csv(tmp_path):
    s = run(fk(), 100, 3, 1, observables=["norm2"])
    path = tmp_path / "s.csv"
    s.to_csv(path, comment="hash=abc")
    lines = path.read_text().splitlines()
    assert lines[0] == "# hash=abc"
    assert lines[1] == "step,mean_0,eta_G,eta_norm2,psi_norm2"
    assert len(lines) == 6
    assert float(lines[3].split(",")[2]) == s.eta_G[1]


# ---------------------------------------------------------------- energy estimate

def test_energy_of_constant_series():
    s = EstimatorSeries(100, 0, "proportional", delta=0.5)
    for n in range(50):
        s.record(n, np.zeros((4, 1)), np.full(4, np.log(0.25)), {}, 0.0)
    est = energy_estimate(s, burn_in=10)
    assert est.value == pytest.approx(0.25) and est.stderr == 0.0
    assert est.n_samples == 40
    assert est.energy == pytest.approx(-np.log(0.25) / 0.5)
    with pytest.raises(ConfigError):
        energy_estimate(s, burn_in=60)


def test_discretized_energy_approaches_continuum():
    lams = []
    for delta in (0.1, 0.05, 0.025):
        m = discretize_continuous(-1.0, 0.5, 1.0, delta)
        lams.append(ground_state(m).energy(delta))
    gaps = np.abs(np.diff(lams))
    assert gaps[1] < 0.6 * gaps[0]
    m = discretize_continuous(-1.0, 0.5, 1.0, 0.1)
    est = energy_estimate(run(fk(m, GaussianMeasure.scalar(0.0, 0.5)), 20_000, 150, 4))
    assert abs(est.energy - lams[0]) < 3 * est.energy_stderr
