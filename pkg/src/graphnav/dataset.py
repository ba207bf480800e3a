"""Demonstration buffers: collection, JSON-Lines persistence, manifests.

One file per command buffer (forward.jsonl, turn_left.jsonl,
turn_right.jsonl) plus manifest.json. Records round-trip exactly: floats are
written with shortest-repr JSON encoding, which parses back bit-identical.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .expert import ExpertController, ExpertParams
from .graph import GraphConfig
from .layout import COMMANDS, Command
from .rollout import run_episode
from .vehicle import Action
from .world import EpisodeOutcome, OutcomeTag, ScenarioConfig

SCHEMA_VERSION = 1
BUFFER_FILES = {
    Command.FORWARD: "forward.jsonl",
    Command.TURN_LEFT: "turn_left.jsonl",
    Command.TURN_RIGHT: "turn_right.jsonl",
}
# surrounding-vehicle counts used when collecting each command's episodes
TRAIN_DENSITIES = {Command.FORWARD: 5, Command.TURN_LEFT: 3, Command.TURN_RIGHT: 3}


class DatasetFormatError(ValueError):
    def __init__(self, path, line_no: int, reason: str) -> None:
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


@dataclass(frozen=True)
class NoiseParams:
    """Short perturbation bursts applied to the executed (not recorded) action
    during collection, so the buffers cover off-path states with the expert's
    corrective labels."""

    burst_prob: float = 0.03          # per-step chance to start a burst
    duration_s: tuple = (0.4, 1.0)    # burst length range
    delta_amp: float = 0.35           # steering offset bound
    tau_amp: float = 0.2              # throttle offset bound


class ActionNoise:
    def __init__(self, params: NoiseParams, rng, dt: float) -> None:
        self.params = params
        self.rng = rng
        self.dt = dt
        self._remaining = 0
        self._offset = (0.0, 0.0)

    def __call__(self, step: int, action: Action) -> Action:
        p = self.params
        if self._remaining <= 0 and self.rng.random() < p.burst_prob:
            self._remaining = max(1, int(self.rng.uniform(*p.duration_s) / self.dt))
            self._offset = (self.rng.uniform(-p.delta_amp, p.delta_amp),
                            self.rng.uniform(-p.tau_amp, p.tau_amp))
        if self._remaining > 0:
            self._remaining -= 1
            return Action(min(1.0, max(-1.0, action.delta + self._offset[0])),
                          min(1.0, max(-1.0, action.tau + self._offset[1])))
        return action


@dataclass
class DemoSample:
    features: np.ndarray   # (N, 12)
    adjacency: np.ndarray  # (N, N)
    x_ego: np.ndarray      # (6,)
    command: Command
    u_star: np.ndarray     # (2,)
    episode_id: int
    step: int


@dataclass
class DemoDataset:
    buffers: dict = field(default_factory=lambda: {c: [] for c in COMMANDS})
    manifest: dict = field(default_factory=dict)

    def counts(self) -> dict:
        return {c.value: len(self.buffers[c]) for c in COMMANDS}

    def total(self) -> int:
        return sum(len(b) for b in self.buffers.values())


def collect_episode(cfg: ScenarioConfig, seed: int, expert: ExpertController,
                    graph_cfg: GraphConfig,
                    noise: NoiseParams | None = None) -> tuple[list[DemoSample], EpisodeOutcome]:
    """Record one expert episode; kept whether it succeeds or fails."""
    action_noise = None
    if noise is not None:
        action_noise = ActionNoise(noise, np.random.default_rng([seed, 5]), cfg.dt)
    record = run_episode(cfg, seed, expert, graph_cfg, record_samples=True,
                         action_noise=action_noise)
    samples = [
        DemoSample(
            features=s.features,
            adjacency=s.adjacency,
            x_ego=s.x_ego,
            command=record.command,
            u_star=np.array([s.action.delta, s.action.tau]),
            episode_id=seed,
            step=i,
        )
        for i, s in enumerate(record.samples)
    ]
    return samples, record.outcome


def _collect_one(args) -> tuple[str, int, list[DemoSample], EpisodeOutcome]:
    cfg, seed, expert_params, graph_cfg, noise = args
    expert = ExpertController(expert_params, cfg.vehicle)
    samples, outcome = collect_episode(cfg, seed, expert, graph_cfg, noise=noise)
    return cfg.command.value, seed, samples, outcome


def collect_dataset(
    base_cfg: ScenarioConfig,
    graph_cfg: GraphConfig,
    expert_params: ExpertParams,
    episodes_per_command: int,
    base_seed: int,
    densities: dict | None = None,
    jobs: int = 1,
    noise: NoiseParams | None = NoiseParams(),
) -> tuple[DemoDataset, dict]:
    """Collect per-command buffers; returns the dataset and expert success rates."""
    densities = densities or TRAIN_DENSITIES
    tasks = []
    for ci, command in enumerate(COMMANDS):
        cfg = replace(base_cfg, command=command, density=densities[command])
        for i in range(episodes_per_command):
            tasks.append((cfg, base_seed + ci * episodes_per_command + i,
                          expert_params, graph_cfg, noise))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_collect_one, tasks, chunksize=4))
    else:
        results = [_collect_one(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))

    dataset = DemoDataset()
    successes = {c: 0 for c in COMMANDS}
    for command_value, _seed, samples, outcome in results:
        command = Command(command_value)
        dataset.buffers[command].extend(samples)
        if outcome.tag is OutcomeTag.SUCCESS:
            successes[command] += 1
    rates = {c.value: 100.0 * successes[c] / max(1, episodes_per_command) for c in COMMANDS}
    dataset.manifest = {
        "schema_version": SCHEMA_VERSION,
        "base_seed": base_seed,
        "episodes_per_command": episodes_per_command,
        "densities": {c.value: densities[c] for c in COMMANDS},
        "counts": dataset.counts(),
        "expert_success_rate_pct": rates,
        "strategy": graph_cfg.strategy.kind.value,
        # stored features are raw physical units; policy networks divide by
        # fixed characteristic scales (see policies.BLOCK_SCALE) at their input
        "inputs_normalized": False,
        "network_feature_scale": {"distance_m": 20.0, "speed_mps": 5.0},
    }
    return dataset, rates


def _sample_to_record(sample: DemoSample) -> dict:
    return {
        "episode_id": sample.episode_id,
        "step": sample.step,
        "command": sample.command.value,
        "S": sample.features.tolist(),
        "A": sample.adjacency.tolist(),
        "x_ego": sample.x_ego.tolist(),
        "u_star": sample.u_star.tolist(),
    }


_RECORD_KEYS = {"episode_id", "step", "command", "S", "A", "x_ego", "u_star"}


def _record_to_sample(record: dict) -> DemoSample:
    feats = np.asarray(record["S"], dtype=float)
    adj = np.asarray(record["A"], dtype=float)
    x_ego = np.asarray(record["x_ego"], dtype=float)
    u_star = np.asarray(record["u_star"], dtype=float)
    if feats.ndim != 2 or feats.shape[1] != 12:
        raise ValueError(f"S must be (N, 12), got {feats.shape}")
    if adj.shape != (feats.shape[0], feats.shape[0]):
        raise ValueError(f"A must be (N, N) matching S, got {adj.shape}")
    if x_ego.shape != (6,) or u_star.shape != (2,):
        raise ValueError("x_ego must have 6 entries and u_star 2")
    return DemoSample(
        features=feats,
        adjacency=adj,
        x_ego=x_ego,
        command=Command(record["command"]),
        u_star=u_star,
        episode_id=int(record["episode_id"]),
        step=int(record["step"]),
    )


def write_dataset(dataset: DemoDataset, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for command, filename in BUFFER_FILES.items():
        with open(out_dir / filename, "w") as fh:
            for sample in dataset.buffers[command]:
                fh.write(json.dumps(_sample_to_record(sample), sort_keys=True,
                                    separators=(",", ":")) + "\n")
    manifest = dict(dataset.manifest)
    manifest.setdefault("schema_version", SCHEMA_VERSION)
    manifest["counts"] = dataset.counts()
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest_path


def read_buffer(path, expected_command: Command) -> list[DemoSample]:
    samples = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(path, line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict) or not _RECORD_KEYS.issubset(record):
                missing = sorted(_RECORD_KEYS - set(record)) if isinstance(record, dict) else "all"
                raise DatasetFormatError(path, line_no, f"missing fields: {missing}")
            try:
                sample = _record_to_sample(record)
            except (ValueError, KeyError) as exc:
                raise DatasetFormatError(path, line_no, str(exc)) from exc
            if sample.command is not expected_command:
                raise DatasetFormatError(path, line_no,
                                         f"command {sample.command.value!r} in the "
                                         f"{expected_command.value!r} buffer")
            samples.append(sample)
    return samples


def read_dataset(directory) -> DemoDataset:
    directory = Path(directory)
    dataset = DemoDataset()
    for command, filename in BUFFER_FILES.items():
        path = directory / filename
        if not path.exists():
            raise FileNotFoundError(f"missing buffer file {path}")
        dataset.buffers[command] = read_buffer(path, command)
    manifest_path = directory / "manifest.json"
    if manifest_path.exists():
        dataset.manifest = json.loads(manifest_path.read_text())
    return dataset
