import numpy as np
import pytest

from graphnav.gradcheck import policy_gradient_check, run_policy_check, synthetic_inputs
from graphnav.graph import GraphConfig, encode_world
from graphnav.layout import COMMANDS, Command
from graphnav.nn import batch_action_loss
from graphnav.policies import (GcilNetwork, NnCilNetwork, SetCilNetwork, build_network,
                               nncil_input, nncil_vector, set_elements)
from graphnav.world import ScenarioConfig, spawn_scenario


def _observation(density=4, seed=3):
    world, goal, _ = spawn_scenario(ScenarioConfig(density=density), seed=seed)
    return encode_world(world, goal, GraphConfig())


def _permute(feats, adj, perm):
    order = np.concatenate([[0], np.asarray(perm)])
    return feats[order], adj[np.ix_(order, order)]


class TestGcil:
    def test_output_inside_action_box(self):
        net = build_network("gcil", seed=0)
        rng = np.random.default_rng(1)
        for density in (0, 1, 3, 7):
            feats, adj, x_ego = _observation(density=density, seed=int(rng.integers(1000)))
            action = net.act(feats, adj, x_ego, Command.FORWARD)
            assert -1.0 <= action.delta <= 1.0
            assert -1.0 <= action.tau <= 1.0

    def test_forward_deterministic(self):
        net = build_network("gcil", seed=0)
        feats, adj, x_ego = _observation()
        a1 = net.act(feats, adj, x_ego, Command.TURN_LEFT)
        a2 = net.act(feats, adj, x_ego, Command.TURN_LEFT)
        assert a1 == a2

    def test_branch_isolation_bitwise(self):
        net = build_network("gcil", seed=0)
        feats, adj, x_ego = _observation()
        before = net.act(feats, adj, x_ego, Command.FORWARD)
        # mangle the weights of the two non-selected branches
        for cmd in (Command.TURN_LEFT, Command.TURN_RIGHT):
            for layer in net.head.branches[cmd].layers:
                layer.w += 123.0
                layer.b -= 7.0
        after = net.act(feats, adj, x_ego, Command.FORWARD)
        assert before == after

    def test_non_selected_branch_gradients_exactly_zero(self):
        net = build_network("gcil", seed=0)
        feats, adj, x_ego = _observation()
        _, cache = net.forward(feats, adj, x_ego, Command.FORWARD)
        grads = net.backward(cache, np.array([0.3, -0.7]))
        for cmd in (Command.TURN_LEFT, Command.TURN_RIGHT):
            for i in range(2):
                assert np.all(grads[f"branch.{cmd.value}.{i}.w"] == 0.0)
                assert np.all(grads[f"branch.{cmd.value}.{i}.b"] == 0.0)
        assert any(np.any(grads[k] != 0.0) for k in grads if k.startswith("gcn."))

    def test_zero_upstream_zero_gradients(self):
        net = build_network("gcil", seed=0)
        feats, adj, x_ego = _observation()
        _, cache = net.forward(feats, adj, x_ego, Command.FORWARD)
        grads = net.backward(cache, np.zeros(2))
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_permutation_equivariance_bit_exact(self):
        net = build_network("gcil", seed=2)
        rng = np.random.default_rng(5)
        for seed in range(8):
            feats, adj, x_ego = _observation(density=5, seed=seed)
            base = net.act(feats, adj, x_ego, Command.TURN_RIGHT)
            perm = rng.permutation(np.arange(1, feats.shape[0]))
            pf, pa = _permute(feats, adj, perm)
            permuted = net.act(pf, pa, x_ego, Command.TURN_RIGHT)
            assert base == permuted  # bitwise, thanks to canonical node ordering

    def test_handles_any_node_count_without_reinstantiation(self):
        net = build_network("gcil", seed=0)
        for density in (0, 2, 6):
            feats, adj, x_ego = _observation(density=density, seed=9)
            assert feats.shape == (density + 1, 12)
            net.act(feats, adj, x_ego, Command.FORWARD)

    def test_batched_forward_matches_singles(self):
        net = build_network("gcil", seed=3)
        obs = [_observation(density=4, seed=s) for s in range(6)]
        feats = np.stack([o[0] for o in obs])
        adj = np.stack([o[1] for o in obs])
        x_ego = np.stack([o[2] for o in obs])
        batched, _ = net.forward_batch(feats, adj, x_ego, Command.FORWARD)
        for i, (f, a, x) in enumerate(obs):
            single, _ = net.forward(f, a, x, Command.FORWARD)
            # BLAS kernel choice varies with batch size, so agreement is to
            # rounding, not bitwise
            assert np.allclose(batched[i], single, rtol=0, atol=1e-12)

    def test_batched_backward_matches_summed_singles(self):
        net = build_network("gcil", seed=3)
        obs = [_observation(density=3, seed=s) for s in range(4)]
        feats = np.stack([o[0] for o in obs])
        adj = np.stack([o[1] for o in obs])
        x_ego = np.stack([o[2] for o in obs])
        targets = np.random.default_rng(0).uniform(-0.5, 0.5, size=(4, 2))
        u, cache = net.forward_batch(feats, adj, x_ego, Command.FORWARD)
        _, du = batch_action_loss(u, targets)
        batched = net.backward_batch(cache, du)
        summed = None
        for i, (f, a, x) in enumerate(obs):
            ui, ci = net.forward(f, a, x, Command.FORWARD)
            gi = net.backward(ci, du[i])
            summed = gi if summed is None else {k: summed[k] + gi[k] for k in gi}
        for k in batched:
            assert np.allclose(batched[k], summed[k], atol=1e-12)


class TestNnCilInput:
    def test_empty_road_pads_with_zeros(self):
        world, goal, _ = spawn_scenario(ScenarioConfig(density=0), seed=1)
        vec = nncil_input(world, goal, v_pref=6.0)
        assert vec.shape == (24,)
        assert np.all(vec[6:] == 0.0)

    def test_orders_by_distance(self):
        feats = np.zeros((6, 12))
        for i, d in enumerate([15.0, 3.0, 9.0, 20.0, 7.0], start=1):
            feats[i, 6] = d
            feats[i, 7] = d  # marker
        vec = nncil_vector(feats)
        assert vec[6] == 3.0 and vec[12] == 7.0 and vec[18] == 9.0

    def test_ties_break_by_lower_id(self):
        feats = np.zeros((4, 12))
        feats[1, 6] = 5.0
        feats[1, 7] = 111.0
        feats[2, 6] = 5.0
        feats[2, 7] = 222.0
        feats[3, 6] = 1.0
        feats[3, 7] = 333.0
        vec = nncil_vector(feats)
        assert vec[7] == 333.0 and vec[13] == 111.0 and vec[19] == 222.0

    def test_network_output_in_box(self):
        net = build_network("nncil", seed=1)
        feats, _, _ = _observation(density=5, seed=4)
        action = net.act(nncil_vector(feats), Command.TURN_LEFT)
        assert -1.0 <= action.delta <= 1.0 and -1.0 <= action.tau <= 1.0


class TestSetCil:
    def test_permutation_invariance_bit_exact(self):
        net = build_network("setcil", seed=1)
        feats, _, _ = _observation(density=6, seed=2)
        elements = set_elements(feats)
        base = net.act(elements, Command.FORWARD)
        rng = np.random.default_rng(0)
        for _ in range(5):
            shuffled = elements[rng.permutation(len(elements))]
            assert net.act(shuffled, Command.FORWARD) == base

    def test_single_element_equals_sum(self):
        from graphnav.policies import BLOCK_SCALE

        net = build_network("setcil", seed=1)
        element = np.array([[1.0, 2.0, -1.0, 0.5, 0.2, -0.3]])
        u_single, cache = net.forward(element, Command.FORWARD)
        # encoding of one element equals the pooled representation
        enc, _ = net.encoder.forward(element / BLOCK_SCALE)
        pooled_u, _ = net.head.forward(enc, Command.FORWARD)
        assert np.allclose(u_single, pooled_u[0], rtol=0, atol=1e-15)

    def test_duplicate_element_doubles_contribution(self):
        from graphnav.policies import BLOCK_SCALE

        net = build_network("setcil", seed=1)
        rng = np.random.default_rng(3)
        a = rng.normal(size=6)
        b = rng.normal(size=6)
        # brute-force pooled encodings computed element by element
        enc_a = net.encoder.forward(a[None] / BLOCK_SCALE)[0][0]
        enc_b = net.encoder.forward(b[None] / BLOCK_SCALE)[0][0]
        doubled, _ = net.head.forward((2 * enc_a + enc_b)[None], Command.FORWARD)
        via_set, _ = net.forward(np.stack([a, a, b]), Command.FORWARD)
        assert np.allclose(via_set, doubled[0], atol=1e-12)

    def test_elements_layout_from_features(self):
        feats, _, _ = _observation(density=3, seed=6)
        elements = set_elements(feats)
        assert elements.shape == (4, 6)
        assert np.array_equal(elements[0], feats[0, :6])
        assert np.array_equal(elements[1:], feats[1:, 6:])


class TestGradientFidelity:
    @pytest.mark.parametrize("kind", ["gcil", "nncil", "setcil"])
    def test_end_to_end_finite_difference(self, kind):
        err = run_policy_check(kind, seed=0, n_samples=120)
        assert err < 1e-4

    def test_perception_dimension(self):
        net = build_network("gcil", seed=0)
        assert net.head.n_in == 16  # 10 graph channels + 6 ego entries


@pytest.mark.parametrize("kind", ["gcil", "nncil", "setcil"])
def test_branch_isolation_holds_for_every_network(kind):
    net = build_network(kind, seed=4)
    feats, adj, x_ego = _observation(density=4, seed=8)
    if kind == "gcil":
        inputs = (feats, adj, x_ego)
    elif kind == "nncil":
        inputs = (nncil_vector(feats),)
    else:
        inputs = (set_elements(feats),)
    before = net.act(*inputs, Command.TURN_RIGHT)
    for cmd in (Command.FORWARD, Command.TURN_LEFT):
        for layer in net.head.branches[cmd].layers:
            layer.w -= 11.0
    assert net.act(*inputs, Command.TURN_RIGHT) == before
    _, cache = net.forward(*inputs, Command.TURN_RIGHT)
    grads = net.backward(cache, np.array([0.1, 0.9]))
    for cmd in (Command.FORWARD, Command.TURN_LEFT):
        for i in range(2):
            assert np.all(grads[f"branch.{cmd.value}.{i}.w"] == 0.0)
            assert np.all(grads[f"branch.{cmd.value}.{i}.b"] == 0.0)


def test_build_network_rejects_unknown_kind():
    with pytest.raises(ValueError):
        build_network("mlp")
