import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gacbo.data import Hard, Soft
from gacbo.envs import ORACLE_SEED, REGISTRY, expected_reward, make_env, step_hard, step_soft


def quiet(name, **kw):
    return make_env(name, noise=False, **kw)


class TestGoldenValues:
    def test_dropwave_origin(self):
        obs = step_soft(quiet("dropwave"), (0.0, 0.0), np.random.default_rng(0))
        assert obs.values.tolist() == [0.0, 1.0]

    def test_dropwave_closed_form(self):
        a = (1.3, -2.2)
        r = math.hypot(*a)
        obs = step_soft(quiet("dropwave"), a, np.random.default_rng(0))
        assert obs.values[1] == pytest.approx((1 + math.cos(12 * r)) / (2 + 0.5 * r * r), abs=1e-12)

    def test_rosenbrock_ones(self):
        obs = step_soft(quiet("rosenbrock"), (1.0, 1.0, 1.0, 1.0), np.random.default_rng(0))
        assert obs.values.tolist() == [0.0, 0.0, 0.0]

    def test_rosenbrock_chain_sum(self):
        a = np.array([0.5, -1.0, 1.5, 0.2])
        obs = step_soft(quiet("rosenbrock"), a, np.random.default_rng(0))
        f = [-100 * (a[k + 1] - a[k] ** 2) ** 2 - (1 - a[k]) ** 2 for k in range(3)]
        np.testing.assert_allclose(obs.values, np.cumsum(f), rtol=0, atol=1e-12)

    def test_alpine_zero_path(self):
        obs = step_soft(quiet("alpine3"), (0.0, 3.0, 7.0), np.random.default_rng(0))
        assert obs.values.tolist() == [0.0, 0.0, 0.0]

    def test_alpine_product(self):
        a = (2.0, 4.5, 8.0)
        g = [math.sqrt(x) * math.sin(x) for x in a]
        obs = step_soft(quiet("alpine3"), a, np.random.default_rng(0))
        np.testing.assert_allclose(obs.values, [-g[0], -g[0] * g[1], -g[0] * g[1] * g[2]], atol=1e-12)

    def test_toygraph_do_z(self):
        obs = step_hard(quiet("toygraph"), (1,), (1.0,), np.random.default_rng(0))
        assert obs.values[2] == pytest.approx(math.cos(1) - math.exp(-0.05), abs=1e-12)
        assert obs.values[2] == pytest.approx(-0.4109, abs=1e-4)

    @pytest.mark.parametrize("x", [-4.0, -0.5, 0.0, 2.5])
    def test_toygraph_do_x(self, x):
        obs = step_hard(quiet("toygraph"), (0,), (x,), np.random.default_rng(0))
        z = math.exp(-x)
        assert obs.values[1] == pytest.approx(z, abs=1e-12)
        assert obs.values[2] == pytest.approx(math.cos(z) - math.exp(-z / 20), abs=1e-12)

    def test_noise_free_is_deterministic(self):
        env = quiet("epidemiology")
        a = step_hard(env, (1,), (2.0,), np.random.default_rng(0)).values
        b = step_hard(env, (1,), (2.0,), np.random.default_rng(99)).values
        assert a.tolist() == b.tolist()

    def test_epidemiology_noise_free(self):
        obs = step_hard(quiet("epidemiology"), (3,), (1.0,), np.random.default_rng(0))
        lv = 1 / (1 + math.exp(-3.0))
        assert obs.values.tolist() == pytest.approx([0.0, 6.0, lv, 1.0, 0.5 + math.cos(24) + math.sin(2 - lv)], abs=1e-12)


class TestValidation:
    def test_out_of_box(self):
        with pytest.raises(ValueError):
            step_soft(make_env("dropwave"), (6.0, 0.0), np.random.default_rng(0))

    def test_wrong_arity(self):
        with pytest.raises(ValueError):
            step_soft(make_env("dropwave"), (0.0,), np.random.default_rng(0))

    def test_set_outside_family(self):
        with pytest.raises(ValueError):
            step_hard(make_env("epidemiology"), (2,), (0.5,), np.random.default_rng(0))

    def test_value_outside_node_box(self):
        with pytest.raises(ValueError):
            step_hard(make_env("epidemiology"), (1,), (5.0,), np.random.default_rng(0))

    def test_setting_mismatch(self):
        with pytest.raises(ValueError):
            make_env("toygraph").step(Soft((0.0,)), np.random.default_rng(0))
        with pytest.raises(ValueError):
            make_env("dropwave").step(Hard(), np.random.default_rng(0))

    def test_unknown_env(self):
        with pytest.raises(ValueError, match="unknown environment"):
            make_env("nope")

    def test_observation_is_finite(self):
        obs = step_soft(make_env("rosenbrock"), (2.0, -2.0, 2.0, -2.0), np.random.default_rng(1))
        assert np.all(np.isfinite(obs.values))


class TestStructure:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
    def test_non_ancestor_action(self, a0, a1, other):
        # a1 feeds x1 only, so x0 must not move
        env = quiet("alpine3")
        base = env.simulate(1, None, Soft((abs(a0), abs(a1), 3.0)))[0]
        moved = env.simulate(1, None, Soft((abs(a0), abs(other), 3.0)))[0]
        assert base[0] == moved[0]

    def test_rosenbrock_last_action_only_touches_target(self):
        env = quiet("rosenbrock")
        a = np.array([0.3, 0.1, -0.5, 1.0])
        b = a.copy()
        b[3] = -1.7
        va, vb = env.simulate(1, None, Soft(tuple(a)))[0], env.simulate(1, None, Soft(tuple(b)))[0]
        assert va[:2].tolist() == vb[:2].tolist() and va[2] != vb[2]

    def test_hard_pin_severs_parents(self):
        env = make_env("toygraph")
        v = env.simulate(50, np.random.default_rng(0), Hard((1,), (3.0,)))
        assert np.all(v[:, 1] == 3.0)


class TestExpectedReward:
    def test_deterministic_env_equals_step(self):
        env = quiet("alpine3")
        a = Soft((1.0, 2.0, 3.0))
        assert expected_reward(env, a) == env.step(a, np.random.default_rng(0)).values[-1]

    def test_dropwave_matches_monte_carlo(self):
        env = make_env("dropwave")
        a = Soft((0.3, 0.2))
        y = env.simulate(400_000, np.random.default_rng(5), a)[:, 1]
        assert abs(env.expected_reward(a) - y.mean()) < 3 * y.std() / math.sqrt(len(y))

    @pytest.mark.parametrize("arm", [Hard(), Hard((0,), (-1.5,)), Hard((0,), (2.0,))])
    def test_toygraph_matches_monte_carlo(self, arm):
        env = make_env("toygraph")
        y = env.simulate(400_000, np.random.default_rng(6), arm)[:, 2]
        assert abs(env.expected_reward(arm) - y.mean()) < 3 * y.std() / math.sqrt(len(y))

    def test_toygraph_do_z_grid_optimum_has_zero_regret(self):
        env = make_env("toygraph")
        z = np.linspace(-5, 20, 10_001)
        best = z[np.argmax(np.cos(z) - np.exp(-z / 20))]
        arm = Hard((1,), (float(best),))
        assert env.expected_reward(arm) == pytest.approx(np.max(np.cos(z) - np.exp(-z / 20)), abs=1e-12)
        # over do(Z) alone the grid arm is optimal to grid resolution
        fine = np.linspace(best - 0.01, best + 0.01, 2001)
        assert np.max(np.cos(fine) - np.exp(-fine / 20)) - env.expected_reward(arm) < 1e-6

    def test_toygraph_optimum_dominates_grids(self):
        env = make_env("toygraph")
        arm, value = env.optimum()
        assert value == pytest.approx(env.expected_reward(arm), abs=1e-12)
        xs = np.linspace(-5, 5, 20_001)
        grid = max(env.expected_reward(Hard((0,), (float(x),))) for x in xs[:400])
        assert value >= grid - 1e-12
        assert value >= env.expected_reward(Hard((1,), (18.85,)))

    def test_epidemiology_mc_stable_across_seeds(self):
        env = make_env("epidemiology")
        arm = Hard((1, 3), (0.0, 0.0))
        ya = env.simulate(100_000, np.random.default_rng(ORACLE_SEED), arm)[:, 4]
        yb = env.simulate(100_000, np.random.default_rng(ORACLE_SEED + 1), arm)[:, 4]
        assert ya.mean() == env.expected_reward(arm)
        assert abs(ya.mean() - yb.mean()) <= 0.01
        # the difference of two independent means has sd ~0.005; 3 sd is the honest bound
        assert abs(ya.mean() - yb.mean()) <= 3 * math.sqrt(2 * ya.var() / len(ya))

    @pytest.mark.parametrize("name", ["dropwave", "rosenbrock", "alpine3"])
    def test_soft_optimum_beats_random_arms(self, name):
        env = make_env(name)
        arm, value = env.optimum()
        box = np.asarray(env.spec.action_box)
        rng = np.random.default_rng(0)
        for a in rng.uniform(box[:, 0], box[:, 1], (300, len(box))):
            assert env.expected_reward(Soft(tuple(a))) <= value + 1e-9

    def test_dropwave_optimum_value(self):
        arm, value = make_env("dropwave").optimum()
        assert value == pytest.approx(0.7424, abs=1e-3)
        assert make_env("dropwave", noise=False).optimum()[1] == pytest.approx(1.0, abs=1e-12)


class TestRegistry:
    def test_names(self):
        assert sorted(REGISTRY) == ["alpine3", "dropwave", "epidemiology", "rosenbrock", "toygraph"]

    @pytest.mark.parametrize("name", sorted(REGISTRY))
    def test_describe_is_json_and_consistent(self, name):
        env = make_env(name)
        desc = json.loads(json.dumps(env.spec.describe()))
        assert desc["name"] == name and desc["target"] == env.spec.m
        assert desc["setting"] in ("soft", "hard")
        assert set(env.spec.variants) == {"true", "missing", "extra"}
        for g in env.spec.variants.values():
            assert len(g.parents) == env.spec.n_nodes

    def test_boxes(self):
        assert make_env("dropwave").spec.action_box == ((-5.12, 5.12), (-5.12, 5.12))
        assert set(make_env("rosenbrock").spec.action_box) == {(-2.0, 2.0)}
        assert set(make_env("alpine3").spec.action_box) == {(0.0, 10.0)}
        assert make_env("epidemiology").spec.node_box == {1: (0.0, 4.0), 3: (0.0, 4.0)}

    def test_chain_length_configurable(self):
        env = make_env("alpine3", m=3)
        assert env.spec.n_nodes == 4 and env.spec.n_actions == 4
