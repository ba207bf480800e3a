"""Branched command-conditional policies over three perception frontends.

The graph policy runs a 3-layer GCN, takes the ego node's output, appends the
shared ego block, and feeds a trunk MLP whose output is mapped to an action
by the branch selected by the high-level command. The two baselines swap the
perception frontend (fixed nearest-3 vector, or a summed set encoding) and
keep the identical trunk-plus-branches head.

Nodes (and set elements) are put into a canonical sort order inside forward,
which makes permutation equivariance/invariance hold bitwise despite
floating-point summation order.
"""

from __future__ import annotations

import numpy as np

from .graph import EGO_DIM, FEATURE_DIM, build_features
from .layout import COMMANDS, Command
from .nn import IDENTITY, RELU, TANH, GcnLayer, Mlp
from .vehicle import Action

GCN_WIDTHS = (32, 32, 10)
TRUNK_WIDTHS = (128, 256, 64, 64)
BRANCH_HIDDEN = 64
PERCEPTION_WIDTHS = (64, 64, 64)
NNCIL_INPUT_DIM = 24  # ego block + three nearest relative blocks
NETWORK_KINDS = ("gcil", "nncil", "setcil")

# Characteristic scales dividing each feature block at the network boundary
# (meters for distances, m/s for speeds). Raw-unit inputs saturate the tanh
# head so hard that 1 - tanh^2 underflows to exactly zero and training
# freezes; dividing by fixed unit scales keeps activations in range. The
# scales are constants of the architecture, not data statistics.
BLOCK_SCALE = np.array([20.0, 20.0, 20.0, 5.0, 5.0, 5.0])
FEATURE_SCALE = np.concatenate([BLOCK_SCALE, BLOCK_SCALE])
NNCIL_SCALE = np.concatenate([BLOCK_SCALE] * 4)


def _canonical_node_order(feats: np.ndarray) -> np.ndarray:
    """Ego stays at index 0; remaining rows sort lexicographically."""
    n = feats.shape[0]
    if n <= 2:
        return np.arange(n)
    order = np.lexsort(feats[1:].T[::-1]) + 1
    return np.concatenate([[0], order])


def _canonicalize_batch(feats: np.ndarray, adj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    out_f = np.empty_like(feats)
    out_a = np.empty_like(adj)
    for b in range(feats.shape[0]):
        order = _canonical_node_order(feats[b])
        out_f[b] = feats[b][order]
        out_a[b] = adj[b][np.ix_(order, order)]
    return out_f, out_a


class _BranchedHead:
    """Shared trunk MLP plus one two-layer branch per command."""

    def __init__(self, rng, n_in: int) -> None:
        self.n_in = n_in
        self.trunk = Mlp.create(rng, [n_in, *TRUNK_WIDTHS], [RELU] * len(TRUNK_WIDTHS))
        self.branches = {
            c: Mlp.create(rng, [TRUNK_WIDTHS[-1], BRANCH_HIDDEN, 2], [RELU, TANH])
            for c in COMMANDS
        }

    def forward(self, p: np.ndarray, command: Command):
        z, trunk_cache = self.trunk.forward(p)
        u, branch_cache = self.branches[command].forward(z)
        return u, (command, trunk_cache, branch_cache)

    def kink_margin(self, cache) -> float:
        command, trunk_cache, branch_cache = cache
        return min(self.trunk.kink_margin(trunk_cache),
                   self.branches[command].kink_margin(branch_cache))

    def backward(self, cache, du: np.ndarray):
        command, trunk_cache, branch_cache = cache
        dz, branch_grads = self.branches[command].backward(branch_cache, du)
        dp, trunk_grads = self.trunk.backward(trunk_cache, dz)
        grads = {}
        for i, (dw, db) in enumerate(trunk_grads):
            grads[f"trunk.{i}.w"] = dw
            grads[f"trunk.{i}.b"] = db
        for c in COMMANDS:
            for i, layer in enumerate(self.branches[c].layers):
                if c is command:
                    dw, db = branch_grads[i]
                else:
                    dw, db = np.zeros_like(layer.w), np.zeros_like(layer.b)
                grads[f"branch.{c.value}.{i}.w"] = dw
                grads[f"branch.{c.value}.{i}.b"] = db
        return dp, grads

    def parameters(self) -> dict:
        params = {}
        for i, layer in enumerate(self.trunk.layers):
            params[f"trunk.{i}.w"] = layer.w
            params[f"trunk.{i}.b"] = layer.b
        for c in COMMANDS:
            for i, layer in enumerate(self.branches[c].layers):
                params[f"branch.{c.value}.{i}.w"] = layer.w
                params[f"branch.{c.value}.{i}.b"] = layer.b
        return params


class GcilNetwork:
    """GCN perception into the branched control head."""

    kind = "gcil"

    def __init__(self, rng) -> None:
        widths = (FEATURE_DIM, *GCN_WIDTHS)
        self.gcn = [GcnLayer.create(rng, widths[i], widths[i + 1]) for i in range(len(GCN_WIDTHS))]
        self.head = _BranchedHead(rng, GCN_WIDTHS[-1] + EGO_DIM)

    def topology(self) -> dict:
        return {
            "feature_dim": FEATURE_DIM,
            "gcn_widths": list(GCN_WIDTHS),
            "trunk_widths": list(TRUNK_WIDTHS),
            "branch_hidden": BRANCH_HIDDEN,
        }

    def parameters(self) -> dict:
        params = {f"gcn.{i}.w": layer.w for i, layer in enumerate(self.gcn)}
        params.update(self.head.parameters())
        return params

    def forward_batch(self, feats: np.ndarray, adj: np.ndarray, x_ego: np.ndarray, command: Command):
        feats = np.asarray(feats, dtype=float) / FEATURE_SCALE
        adj = np.asarray(adj, dtype=float)
        x_ego = np.asarray(x_ego, dtype=float) / BLOCK_SCALE
        h, adj_c = _canonicalize_batch(feats, adj)
        gcn_caches = []
        for layer in self.gcn:
            h, cache = layer.forward(adj_c, h)
            gcn_caches.append(cache)
        p = np.concatenate([h[:, 0, :], x_ego], axis=1)
        u, head_cache = self.head.forward(p, command)
        return u, (gcn_caches, head_cache, h.shape)

    def backward_batch(self, cache, du: np.ndarray) -> dict:
        gcn_caches, head_cache, top_shape = cache
        dp, grads = self.head.backward(head_cache, du)
        dh = np.zeros(top_shape)
        dh[:, 0, :] = dp[:, :GCN_WIDTHS[-1]]  # the ego-block half of p is input, not parameter
        for i in range(len(self.gcn) - 1, -1, -1):
            dh, dw = self.gcn[i].backward(gcn_caches[i], dh)
            grads[f"gcn.{i}.w"] = dw
        return grads

    def kink_margin(self, cache) -> float:
        gcn_caches, head_cache, _ = cache
        margins = [layer.kink_margin(c) for layer, c in zip(self.gcn, gcn_caches)]
        return min(min(margins), self.head.kink_margin(head_cache))

    def forward(self, feats, adj, x_ego, command: Command):
        u, cache = self.forward_batch(np.asarray(feats)[None], np.asarray(adj)[None],
                                      np.asarray(x_ego)[None], command)
        return u[0], cache

    def backward(self, cache, du) -> dict:
        return self.backward_batch(cache, np.asarray(du, dtype=float).reshape(1, 2))

    def act(self, feats, adj, x_ego, command: Command) -> Action:
        u, _ = self.forward(feats, adj, x_ego, command)
        return Action(float(u[0]), float(u[1]))


def nncil_vector(feats: np.ndarray) -> np.ndarray:
    """Fixed 24-vector: ego block plus the three nearest relative blocks,
    sorted by relative distance (stable, so equal distances keep id order),
    zero-padded when fewer than three agents exist."""
    feats = np.asarray(feats, dtype=float)
    out = np.zeros(NNCIL_INPUT_DIM)
    out[:EGO_DIM] = feats[0, :EGO_DIM]
    if feats.shape[0] > 1:
        order = np.argsort(feats[1:, EGO_DIM], kind="stable")[:3]
        for slot, idx in enumerate(order):
            out[EGO_DIM + 6 * slot: EGO_DIM + 6 * (slot + 1)] = feats[1 + idx, EGO_DIM:]
    return out


def nncil_input(world, goal, v_pref: float, ego_frame: bool = False) -> np.ndarray:
    return nncil_vector(build_features(world, goal, v_pref, ego_frame))


class NnCilNetwork:
    """Fixed-width nearest-3 perception MLP into the branched control head."""

    kind = "nncil"

    def __init__(self, rng) -> None:
        widths = (NNCIL_INPUT_DIM, *PERCEPTION_WIDTHS)
        self.perception = Mlp.create(rng, list(widths), [RELU] * len(PERCEPTION_WIDTHS))
        self.head = _BranchedHead(rng, PERCEPTION_WIDTHS[-1])

    def topology(self) -> dict:
        return {
            "input_dim": NNCIL_INPUT_DIM,
            "perception_widths": list(PERCEPTION_WIDTHS),
            "trunk_widths": list(TRUNK_WIDTHS),
            "branch_hidden": BRANCH_HIDDEN,
        }

    def parameters(self) -> dict:
        params = {}
        for i, layer in enumerate(self.perception.layers):
            params[f"perception.{i}.w"] = layer.w
            params[f"perception.{i}.b"] = layer.b
        params.update(self.head.parameters())
        return params

    def forward_batch(self, x: np.ndarray, command: Command):
        x = np.asarray(x, dtype=float) / NNCIL_SCALE
        z, pcache = self.perception.forward(x)
        u, head_cache = self.head.forward(z, command)
        return u, (pcache, head_cache)

    def backward_batch(self, cache, du: np.ndarray) -> dict:
        pcache, head_cache = cache
        dz, grads = self.head.backward(head_cache, du)
        _, pgrads = self.perception.backward(pcache, dz)
        for i, (dw, db) in enumerate(pgrads):
            grads[f"perception.{i}.w"] = dw
            grads[f"perception.{i}.b"] = db
        return grads

    def kink_margin(self, cache) -> float:
        pcache, head_cache = cache
        return min(self.perception.kink_margin(pcache), self.head.kink_margin(head_cache))

    def forward(self, x, command: Command):
        u, cache = self.forward_batch(np.asarray(x, dtype=float)[None], command)
        return u[0], cache

    def backward(self, cache, du) -> dict:
        return self.backward_batch(cache, np.asarray(du, dtype=float).reshape(1, 2))

    def act(self, x, command: Command) -> Action:
        u, _ = self.forward(x, command)
        return Action(float(u[0]), float(u[1]))


def set_elements(feats: np.ndarray) -> np.ndarray:
    """Per-node 6-vectors for the set encoder: the ego block plus every
    relative block."""
    feats = np.asarray(feats, dtype=float)
    return np.vstack([feats[0, :EGO_DIM], feats[1:, EGO_DIM:]])


class SetCilNetwork:
    """Order-free perception: encode each 6-vector and sum, then the head."""

    kind = "setcil"

    def __init__(self, rng) -> None:
        widths = (EGO_DIM, *PERCEPTION_WIDTHS)
        self.encoder = Mlp.create(rng, list(widths), [RELU] * len(PERCEPTION_WIDTHS))
        self.head = _BranchedHead(rng, PERCEPTION_WIDTHS[-1])

    def topology(self) -> dict:
        return {
            "element_dim": EGO_DIM,
            "encoder_widths": list(PERCEPTION_WIDTHS),
            "trunk_widths": list(TRUNK_WIDTHS),
            "branch_hidden": BRANCH_HIDDEN,
        }

    def parameters(self) -> dict:
        params = {}
        for i, layer in enumerate(self.encoder.layers):
            params[f"encoder.{i}.w"] = layer.w
            params[f"encoder.{i}.b"] = layer.b
        params.update(self.head.parameters())
        return params

    def forward_batch(self, elements: np.ndarray, command: Command):
        elems = np.asarray(elements, dtype=float) / BLOCK_SCALE
        if elems.ndim != 3:
            raise ValueError(f"set elements must be (B, M, 6), got shape {elems.shape}")
        b, m, d = elems.shape
        canon = np.empty_like(elems)
        for i in range(b):
            canon[i] = elems[i][np.lexsort(elems[i].T[::-1])]
        enc, ecache = self.encoder.forward(canon.reshape(b * m, d))
        pooled = enc.reshape(b, m, -1).sum(axis=1)
        u, head_cache = self.head.forward(pooled, command)
        return u, (ecache, head_cache, (b, m))

    def backward_batch(self, cache, du: np.ndarray) -> dict:
        ecache, head_cache, (b, m) = cache
        dpool, grads = self.head.backward(head_cache, du)
        dspread = np.repeat(dpool, m, axis=0)
        _, egrads = self.encoder.backward(ecache, dspread)
        for i, (dw, db) in enumerate(egrads):
            grads[f"encoder.{i}.w"] = dw
            grads[f"encoder.{i}.b"] = db
        return grads

    def kink_margin(self, cache) -> float:
        ecache, head_cache, _ = cache
        return min(self.encoder.kink_margin(ecache), self.head.kink_margin(head_cache))

    def forward(self, elements, command: Command):
        u, cache = self.forward_batch(np.asarray(elements, dtype=float)[None], command)
        return u[0], cache

    def backward(self, cache, du) -> dict:
        return self.backward_batch(cache, np.asarray(du, dtype=float).reshape(1, 2))

    def act(self, elements, command: Command) -> Action:
        u, _ = self.forward(elements, command)
        return Action(float(u[0]), float(u[1]))


def build_network(kind: str, seed: int = 0, rng=None):
    if rng is None:
        rng = np.random.default_rng([seed, 1])
    if kind == "gcil":
        return GcilNetwork(rng)
    if kind == "nncil":
        return NnCilNetwork(rng)
    if kind == "setcil":
        return SetCilNetwork(rng)
    raise ValueError(f"unknown network kind {kind!r}, expected one of {NETWORK_KINDS}")


class NetworkController:
    """Adapts a policy network to the episode-loop controller interface."""

    def __init__(self, network) -> None:
        self.network = network

    def act(self, world, goal, command: Command, obs) -> Action:
        feats, adj, x_ego = obs
        if self.network.kind == "gcil":
            return self.network.act(feats, adj, x_ego, command)
        if self.network.kind == "nncil":
            return self.network.act(nncil_vector(feats), command)
        return self.network.act(set_elements(feats), command)
