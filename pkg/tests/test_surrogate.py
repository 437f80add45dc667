import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gacbo.dag_space import ComponentCache, Dag
from gacbo.data import Hard, Observation, ObservationLog
from gacbo.envs import make_env
from gacbo.kernel_gp import ComponentData, GpPosterior, Kernel
from gacbo.surrogate import SurrogateModel, rollout_hard, rollout_hard_batch, rollout_soft, rollout_soft_batch


def gp(x, y, ls, noise=0.1):
    x = np.asarray(x, dtype=float)
    return GpPosterior(Kernel(tuple(ls)), ComponentData(x, y, noise))


def soft_chain(beta=1.0, seed=0):
    """a0 -> X -> Y and a1 -> Y, fitted on a smooth ground truth."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, (15, 2))
    x = np.sin(2 * a[:, 0])
    y = x**2 + 0.5 * a[:, 1]
    g = Dag(((), (0,)), ((0,), (1,)))
    return SurrogateModel(g, {0: gp(a[:, :1], x, (0.7,)), 1: gp(np.c_[x, a[:, 1]], y, (0.8, 1.0))}, beta)


def toy_surrogate(beta):
    env = make_env("toygraph", noise=False)
    rng = np.random.default_rng(1)
    z = rng.uniform(-5, 20, 200)
    x = rng.uniform(-5, 5, 200)
    log = ObservationLog(3)
    for zk, xk in zip(z, x):
        log.append(Observation(env.simulate(1, None, Hard((0, 1), (xk, zk)))[0], Hard((0, 1), (xk, zk))))
    cache = ComponentCache(log, env.spec.noise_sd)
    return SurrogateModel.from_cache(env.spec.true_dag, cache, beta)


class TestConstruction:
    def test_missing_gp(self):
        with pytest.raises(ValueError):
            SurrogateModel(Dag(((), (0,))), {1: gp([[0.0]], [0.0], (1.0,))}, 1.0)

    def test_dimension_checked(self):
        with pytest.raises(ValueError):
            SurrogateModel(Dag(((), ())), {1: gp([[0.0]], [0.0], (1.0,))}, 1.0)

    def test_non_ancestors_need_no_gp(self):
        SurrogateModel(Dag(((), ())), {1: gp(np.zeros((0, 0)), [], ())}, 1.0)

    def test_eta_range_enforced(self):
        with pytest.raises(ValueError):
            rollout_soft(soft_chain(), [0.0, 0.0], [0.0, 1.5])


class TestSoftRollout:
    def test_beta_zero_ignores_eta(self):
        model = soft_chain(beta=0.0)
        assert rollout_soft(model, [0.2, -0.3], [1, -1]) == rollout_soft(model, [0.2, -0.3], [0, 0])

    def test_zero_eta_equals_mean_rollout(self):
        a = [0.4, 0.1]
        assert rollout_soft(soft_chain(2.0), a, [0, 0]) == rollout_soft(soft_chain(0.0), a, [1, 1])

    def test_prior_single_node(self):
        model = SurrogateModel(Dag(((),)), {0: gp(np.zeros((0, 0)), [], ())}, 1.0)
        assert rollout_soft(model, [], [1.0]) == pytest.approx(1.0)

    def test_mean_rollout_by_hand(self):
        model = soft_chain(0.0)
        a = np.array([0.3, -0.6])
        x = model.gps[0].predict(a[None, :1])[0][0]
        y = model.gps[1].predict(np.array([[x, a[1]]]))[0][0]
        assert rollout_soft(model, a, [0.7, 0.7]) == pytest.approx(y, rel=1e-12)

    def test_batch_matches_single(self):
        model = soft_chain()
        rng = np.random.default_rng(3)
        a, eta = rng.uniform(-1, 1, (6, 2)), rng.uniform(-1, 1, (6, 2))
        batch = rollout_soft_batch(model, a, eta)
        np.testing.assert_allclose(batch, [rollout_soft(model, a[k], eta[k]) for k in range(6)], rtol=1e-12)

    def test_deterministic(self):
        assert rollout_soft(soft_chain(), [0.1, 0.2], [0.3, 0.4]) == rollout_soft(soft_chain(), [0.1, 0.2], [0.3, 0.4])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.floats(-1, 1), st.floats(-1, 1))
    def test_monotone_in_target_eta(self, v, e1, e2):
        model = soft_chain()
        lo, hi = sorted((e1, e2))
        assert rollout_soft(model, v[:2], [v[2], lo]) <= rollout_soft(model, v[:2], [v[2], hi])

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    def test_irrelevant_action(self, a0, a1, a1_other):
        # a1 feeds only node 0, which is not an ancestor of the target
        model = soft_chain()
        g = Dag(((), ()), ((1,), (0,)), None)
        m = SurrogateModel(g, {0: gp([[0.0]], [0.0], (1.0,)), 1: model.gps[0]}, 1.0)
        assert rollout_soft(m, [a0, a1], [0.5, 0.5]) == rollout_soft(m, [a0, a1_other], [0.5, 0.5])


class TestHardRollout:
    def test_target_not_intervenable(self):
        with pytest.raises(ValueError):
            rollout_hard(toy_surrogate(0.0), [2], [1.0], [0, 0, 0])

    def test_cut_parent_ignores_upstream_eta(self):
        model = toy_surrogate(1.0)
        assert rollout_hard(model, [1], [2.0], [1, 0, 0.3]) == rollout_hard(model, [1], [2.0], [-1, 1, 0.3])

    def test_empty_set_is_observational(self):
        model = toy_surrogate(0.5)
        eta = np.array([0.2, -0.4, 0.9])
        x = model.gps[0].predict(np.zeros((1, 0)))
        x = x[0][0] + 0.5 * np.sqrt(x[1][0]) * eta[0]
        z = model.gps[1].predict(np.array([[x]]))
        z = z[0][0] + 0.5 * np.sqrt(z[1][0]) * eta[1]
        y = model.gps[2].predict(np.array([[z]]))
        y = y[0][0] + 0.5 * np.sqrt(y[1][0]) * eta[2]
        assert rollout_hard(model, [], [], eta) == pytest.approx(y, rel=1e-12)

    def test_toygraph_do_z(self):
        out = rollout_hard(toy_surrogate(0.0), [1], [1.0], [0, 0, 0])
        assert out == pytest.approx(np.cos(1) - np.exp(-0.05), abs=0.05)

    def test_batch_matches_single(self):
        model = toy_surrogate(1.0)
        vals = np.array([[-1.0, 3.0], [0.5, 10.0]])
        eta = np.array([[0, 0, 1.0], [0, 0, -0.5]])
        batch = rollout_hard_batch(model, [0, 1], vals, eta)
        np.testing.assert_allclose(batch, [rollout_hard(model, [0, 1], vals[k], eta[k]) for k in range(2)])
