"""Behavior cloning: equal-command minibatches, joint Adam updates, checkpoints.

Each step samples a fixed-size minibatch spread as evenly as possible over
the three command buffers (with replacement), runs every sample through its
command's branch, and applies one Adam step to the shared trunk, perception
weights and all touched branches. Sampling at step t is a pure function of
(seed, t), so an interrupted run resumed from a checkpoint reproduces the
uninterrupted trajectory bit for bit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import DemoDataset
from .graph import GraphConfig, adjacency_from_features
from .layout import COMMANDS, Command
from .nn import Adam, batch_action_loss
from .policies import build_network, nncil_vector, set_elements

LOSS_COLUMNS = ("step", "mean_loss", "loss_forward", "loss_left", "loss_right", "wall_clock_s")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    epochs: int = 50
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    eval_every: int = 200
    seed: int = 0
    network: str = "gcil"
    graph: GraphConfig = field(default_factory=GraphConfig)
    reencode: bool = False  # rebuild adjacencies from features under graph.strategy

    def __post_init__(self) -> None:
        if self.batch_size < 3:
            raise ValueError(f"batch_size must be >= 3, got {self.batch_size}")


@dataclass
class TrainRun:
    steps: int
    history: list           # one dict per step with the LOSS_COLUMNS fields
    network: object
    optimizer: Adam
    checkpoint_paths: list


def minibatch_counts(batch_size: int, step: int) -> dict:
    """Per-command draw counts for one step; the remainder slots rotate so
    every command's long-run share is equal."""
    base = batch_size // 3
    rem = batch_size - 3 * base
    counts = {c: base for c in COMMANDS}
    for i in range(rem):
        counts[COMMANDS[(step + i) % 3]] += 1
    return counts


def sample_minibatch(dataset_sizes: dict, batch_size: int, rng, step: int) -> dict:
    """Sampled indices per command (with replacement), deterministic in (rng, step)."""
    counts = minibatch_counts(batch_size, step)
    indices = {}
    for command in COMMANDS:
        n = dataset_sizes[command]
        if n == 0:
            raise ValueError(f"empty demonstration buffer for command {command.value!r}")
        indices[command] = rng.integers(0, n, size=counts[command])
    return indices


@dataclass
class _Group:
    n_nodes: int
    inputs: tuple          # network-kind specific stacked input arrays
    targets: np.ndarray    # (B, 2)


class _PreparedData:
    """Per-command sample arrays grouped by node count for batched forward passes."""

    def __init__(self, dataset: DemoDataset, kind: str, graph_cfg: GraphConfig, reencode: bool) -> None:
        self.kind = kind
        self.groups: dict = {}
        self.group_of: dict = {}
        self.local_of: dict = {}
        self.sizes: dict = {}
        for command in COMMANDS:
            samples = dataset.buffers[command]
            self.sizes[command] = len(samples)
            by_n: dict = {}
            group_of = np.zeros(len(samples), dtype=int)
            local_of = np.zeros(len(samples), dtype=int)
            order = sorted(set(s.features.shape[0] for s in samples))
            n_to_gid = {n: g for g, n in enumerate(order)}
            buckets = {n: [] for n in order}
            for i, s in enumerate(samples):
                n = s.features.shape[0]
                group_of[i] = n_to_gid[n]
                local_of[i] = len(buckets[n])
                buckets[n].append(s)
            groups = []
            for n in order:
                bucket = buckets[n]
                feats = np.stack([s.features for s in bucket])
                if reencode:
                    adj = np.stack([adjacency_from_features(s.features, graph_cfg.strategy)
                                    for s in bucket])
                else:
                    adj = np.stack([s.adjacency for s in bucket])
                x_ego = np.stack([s.x_ego for s in bucket])
                targets = np.stack([s.u_star for s in bucket])
                if kind == "gcil":
                    inputs = (feats, adj, x_ego)
                elif kind == "nncil":
                    inputs = (np.stack([nncil_vector(f) for f in feats]),)
                else:
                    inputs = (np.stack([set_elements(f) for f in feats]),)
                groups.append(_Group(n_nodes=n, inputs=inputs, targets=targets))
            self.groups[command] = groups
            self.group_of[command] = group_of
            self.local_of[command] = local_of

    def gather(self, command: Command, idx: np.ndarray):
        """Split sampled indices into per-group (inputs, targets) slices."""
        out = []
        group_of = self.group_of[command][idx]
        local_of = self.local_of[command][idx]
        for g, group in enumerate(self.groups[command]):
            sel = local_of[group_of == g]
            if sel.size == 0:
                continue
            inputs = tuple(arr[sel] for arr in group.inputs)
            out.append((inputs, group.targets[sel]))
        return out


def _train_step(network, prepared: _PreparedData, indices: dict, batch_size: int):
    """Forward/backward over one minibatch; returns (mean loss, per-command means, grads)."""
    grads = None
    loss_sum = 0.0
    per_command = {}
    for command in COMMANDS:
        cmd_loss = 0.0
        cmd_n = 0
        for inputs, targets in prepared.gather(command, indices[command]):
            u, cache = network.forward_batch(*inputs, command)
            per_sample, du = batch_action_loss(u, targets, denom=batch_size)
            part = network.backward_batch(cache, du)
            if grads is None:
                grads = part
            else:
                for k in grads:
                    grads[k] = grads[k] + part[k]
            cmd_loss += float(per_sample.sum())
            cmd_n += len(per_sample)
        loss_sum += cmd_loss
        per_command[command] = cmd_loss / max(1, cmd_n)
    return loss_sum / batch_size, per_command, grads


def steps_for(config: TrainConfig, total_samples: int) -> int:
    return config.epochs * max(1, math.ceil(total_samples / config.batch_size))


def train(dataset: DemoDataset, config: TrainConfig, out_dir=None, resume=None) -> TrainRun:
    """Run the full training budget; optionally resume from a checkpoint."""
    prepared = _PreparedData(dataset, config.network, config.graph, config.reencode)
    for command in COMMANDS:
        if prepared.sizes[command] == 0:
            raise ValueError(f"empty demonstration buffer for command {command.value!r}")

    steps_total = steps_for(config, dataset.total())
    if resume is not None:
        loaded = load_checkpoint(resume, expected_kind=config.network)
        network = loaded.network
        optimizer = Adam.from_state_dict(loaded.optimizer_state, network.parameters())
        start_step = int((loaded.train_state or {}).get("step", optimizer.t))
    else:
        network = build_network(config.network, rng=np.random.default_rng([config.seed, 1]))
        optimizer = Adam(network.parameters(), lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.epsilon)
        start_step = 0

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    checkpoint_paths = []
    history = []
    params = network.parameters()
    t0 = time.perf_counter()

    def save(step: int, name: str) -> None:
        if out_path is None:
            return
        path = save_checkpoint(out_path / name, network, config.graph, optimizer,
                               train_state={"seed": config.seed, "step": step,
                                            "steps_total": steps_total})
        checkpoint_paths.append(path)

    for step in range(start_step, steps_total):
        rng = np.random.default_rng([config.seed, 2, step])
        indices = sample_minibatch(prepared.sizes, config.batch_size, rng, step)
        mean_loss, per_command, grads = _train_step(network, prepared, indices, config.batch_size)
        if not math.isfinite(mean_loss):
            save(step, "checkpoint_diagnostic.json")
            raise TrainingError(f"non-finite loss {mean_loss} at step {step}")
        optimizer.step(params, grads)
        history.append({
            "step": step,
            "mean_loss": mean_loss,
            "loss_forward": per_command[Command.FORWARD],
            "loss_left": per_command[Command.TURN_LEFT],
            "loss_right": per_command[Command.TURN_RIGHT],
            "wall_clock_s": time.perf_counter() - t0,
        })
        if config.eval_every > 0 and (step + 1) % config.eval_every == 0 and step + 1 < steps_total:
            save(step + 1, f"checkpoint_step{step + 1}.json")
    save(steps_total, "checkpoint_final.json")
    if out_path is not None:
        write_loss_csv(out_path / "loss.csv", history)
    return TrainRun(steps=steps_total - start_step, history=history,
                    network=network, optimizer=optimizer, checkpoint_paths=checkpoint_paths)


def write_loss_csv(path, history) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(LOSS_COLUMNS) + "\n")
        for row in history:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in LOSS_COLUMNS) + "\n")


def dataset_mean_loss(network, dataset: DemoDataset, config: TrainConfig) -> float:
    """Mean action loss over every sample in the dataset (no sampling)."""
    prepared = _PreparedData(dataset, config.network, config.graph, config.reencode)
    total = 0.0
    count = 0
    for command in COMMANDS:
        n = prepared.sizes[command]
        if n == 0:
            continue
        for inputs, targets in prepared.gather(command, np.arange(n)):
            u, _ = network.forward_batch(*inputs, command)
            per_sample, _ = batch_action_loss(u, targets)
            total += float(per_sample.sum())
            count += len(per_sample)
    return total / max(1, count)
