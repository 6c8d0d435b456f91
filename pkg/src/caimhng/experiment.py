"""Configuration, persistence and the explore -> learn -> plan pipeline.

Output layout under the output directory::

    metrics.csv                     one row per (seed, C)
    plan_seed<n>_C<c>.json          final joint plan of each cell
    seed<n>/episode.json            random exploration episode
    seed<n>/model_A.json, model_B.json
    seed<n>/assignments.json        learned message index of every episode step
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import mhng
from .cai import DegeneratePlan
from .coordinator import JointPlan, RoundRecord, evaluate, plan_with_communication
from .dist import substream
from .env import Action, AgentSpec, Grid, JointEpisode, random_walk
from .mhng import MessageModel

log = logging.getLogger(__name__)

EXPLORE_PHASE, LEARN_PHASE = 0, 1
METRICS_HEADER = ["seed", "C", "collisions", "goal_a", "goal_b", "degenerate"]
STATE_SAMPLE_MODES = ("path", "marginal")
DECODE_MODES = ("sample", "greedy")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    grid: dict = field(default_factory=lambda: {"width": 4, "height": 2})
    K: int = 32
    explore_steps: int = 200
    T: int = 10
    C_sweep: list = field(default_factory=lambda: list(range(11)))
    mh_sweeps: int = 10
    learn_iterations: int = 50
    learn_rounds: int = 2
    alpha: float = 0.1
    seeds: list = field(default_factory=lambda: list(range(20)))
    # cells as [row, col], origin at the lower-left
    starts: dict = field(default_factory=lambda: {"A": [0, 0], "B": [1, 3]})
    goals: dict = field(default_factory=lambda: {"A": [0, 2], "B": [0, 3]})
    state_sample_mode: str = "path"
    decode_mode: str = "sample"

    def __post_init__(self):
        self.validate()

    def validate(self) -> "ExperimentConfig":
        try:
            grid = self.make_grid()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid: {exc}") from None
        for name in ("K", "explore_steps", "T", "mh_sweeps", "learn_rounds"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not isinstance(self.learn_iterations, int) or self.learn_iterations < 0:
            raise ConfigError("learn_iterations must be a non-negative integer")
        if not self.C_sweep or any(not isinstance(c, int) or c < 0 for c in self.C_sweep):
            raise ConfigError("C_sweep must be a non-empty list of integers >= 0")
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of integers >= 0")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.state_sample_mode not in STATE_SAMPLE_MODES:
            raise ConfigError(f"state_sample_mode must be one of {STATE_SAMPLE_MODES}")
        if self.decode_mode not in DECODE_MODES:
            raise ConfigError(f"decode_mode must be one of {DECODE_MODES}")
        try:
            self.make_specs(grid)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad starts/goals: {exc}") from None
        return self

    def make_grid(self) -> Grid:
        return Grid(int(self.grid["width"]), int(self.grid["height"]))

    def make_specs(self, grid: Grid | None = None) -> tuple[AgentSpec, AgentSpec]:
        grid = grid or self.make_grid()
        return tuple(AgentSpec(name, grid.index(*self.starts[name]), grid.index(*self.goals[name]))
                     for name in ("A", "B"))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MetricsRow:
    seed: int
    C: int
    collisions: int | None
    goal_a: int | None
    goal_b: int | None
    degenerate: bool = False


# ---------------------------------------------------------------- serialization

def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _load(path: Path):
    return json.loads(Path(path).read_text())


def episode_to_dict(ep: JointEpisode) -> dict:
    return {
        "s_a": ep.s_a.tolist(),
        "a_a": [Action(a).code for a in ep.a_a],
        "s_b": ep.s_b.tolist(),
        "a_b": [Action(a).code for a in ep.a_b],
        "o_m": ep.o_m.tolist(),
    }


def episode_from_dict(d: dict) -> JointEpisode:
    return JointEpisode(
        s_a=np.array(d["s_a"], dtype=int),
        a_a=np.array([Action.from_code(c) for c in d["a_a"]], dtype=int),
        s_b=np.array(d["s_b"], dtype=int),
        a_b=np.array([Action.from_code(c) for c in d["a_b"]], dtype=int),
        o_m=np.array(d["o_m"], dtype=int),
    )


def model_to_dict(model: MessageModel) -> dict:
    return {
        "k": model.K,
        "likelihood": model.likelihood.tolist(),
        "optimality": model.optimality.tolist(),
        "prior": model.prior.tolist(),
    }


def model_from_dict(d: dict) -> MessageModel:
    model = MessageModel(np.array(d["likelihood"], dtype=float),
                         np.array(d["optimality"], dtype=float),
                         np.array(d["prior"], dtype=float))
    if model.K != d["k"]:
        raise ValueError("model k does not match likelihood rows")
    return model


def plan_to_dict(rec: RoundRecord) -> dict:
    T = len(rec.states_a)
    m = [-1] * T if rec.messages is None else rec.messages.tolist()
    return {
        "s_a": rec.states_a.tolist(),
        "a_a": [Action(a).code for a in rec.actions_a],
        "s_b": rec.states_b.tolist(),
        "a_b": [Action(a).code for a in rec.actions_b],
        "m": m,
    }


def plan_from_dict(d: dict) -> RoundRecord:
    m = np.array(d["m"], dtype=int)
    return RoundRecord(
        messages=None if np.all(m < 0) else m,
        states_a=np.array(d["s_a"], dtype=int),
        actions_a=np.array([Action.from_code(c) for c in d["a_a"]], dtype=int),
        states_b=np.array(d["s_b"], dtype=int),
        actions_b=np.array([Action.from_code(c) for c in d["a_b"]], dtype=int),
    )


def metrics_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        vals = ["" if v is None else v for v in (r.collisions, r.goal_a, r.goal_b)]
        w.writerow([r.seed, r.C, *vals, int(r.degenerate)])
    return buf.getvalue()


def metrics_from_csv(text: str) -> list[MetricsRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != METRICS_HEADER:
        raise ValueError(f"unexpected metrics header {reader.fieldnames}")

    def opt_int(v):
        return None if v == "" else int(v)

    return [MetricsRow(int(r["seed"]), int(r["C"]), opt_int(r["collisions"]),
                       opt_int(r["goal_a"]), opt_int(r["goal_b"]), r["degenerate"] == "1")
            for r in reader]


def seed_dir(out: Path, seed: int) -> Path:
    return Path(out) / f"seed{seed}"


def plan_path(out: Path, seed: int, c: int) -> Path:
    return Path(out) / f"plan_seed{seed}_C{c}.json"


# ---------------------------------------------------------------- phases

def explore(cfg: ExperimentConfig, seed: int) -> JointEpisode:
    grid = cfg.make_grid()
    a, b = cfg.make_specs(grid)
    return random_walk(grid, (a.start, b.start), cfg.explore_steps, substream(seed, EXPLORE_PHASE))


def learn(cfg: ExperimentConfig, episode: JointEpisode, seed: int):
    """Returns (model_a, model_b, assignments)."""
    return mhng.learn_assignments(episode, cfg.K, cfg.make_grid().n_states, cfg.learn_iterations,
                                  cfg.alpha, substream(seed, LEARN_PHASE), cfg.learn_rounds)


def plan_cells(cfg: ExperimentConfig, models, seed: int) -> dict[int, RoundRecord | None]:
    """Final plan for every C in the sweep; None where planning degenerated.

    One run with the largest C covers the whole sweep since shorter runs
    are prefixes of it.
    """
    grid = cfg.make_grid()
    specs = cfg.make_specs(grid)
    c_max = max(cfg.C_sweep)

    def run(C):
        return plan_with_communication(models, grid, specs, cfg.T, C, cfg.mh_sweeps, seed,
                                       cfg.decode_mode, cfg.state_sample_mode)

    try:
        plan = run(c_max)
    except DegeneratePlan as exc:
        log.warning("seed %d: %s", seed, exc)
        plan = run(exc.round - 1) if exc.round else JointPlan()
    return {c: plan.history[c] if c < len(plan.history) else None for c in cfg.C_sweep}


def metrics_row(seed: int, c: int, rec: RoundRecord | None, specs) -> MetricsRow:
    if rec is None:
        return MetricsRow(seed, c, None, None, None, True)
    m = evaluate(rec, specs)
    return MetricsRow(seed, c, m.collisions, m.goal_a, m.goal_b)


def write_episode(out, seed, episode):
    _dump(episode_to_dict(episode), seed_dir(out, seed) / "episode.json")


def read_episode(out, seed) -> JointEpisode:
    return episode_from_dict(_load(seed_dir(out, seed) / "episode.json"))


def write_models(out, seed, model_a, model_b, assignments=None):
    d = seed_dir(out, seed)
    _dump(model_to_dict(model_a), d / "model_A.json")
    _dump(model_to_dict(model_b), d / "model_B.json")
    if assignments is not None:
        _dump([int(m) for m in assignments], d / "assignments.json")


def read_models(out, seed) -> tuple[MessageModel, MessageModel]:
    d = seed_dir(out, seed)
    return model_from_dict(_load(d / "model_A.json")), model_from_dict(_load(d / "model_B.json"))


def read_usage(out, seed, K: int) -> np.ndarray | None:
    path = seed_dir(out, seed) / "assignments.json"
    if not path.exists():
        return None
    return np.bincount(np.array(_load(path), dtype=int), minlength=K)


def write_plans(out, seed, cells: dict) -> None:
    for c, rec in cells.items():
        if rec is not None:
            _dump(plan_to_dict(rec), plan_path(out, seed, c))


def write_metrics(out, rows) -> Path:
    path = Path(out) / "metrics.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(metrics_to_csv(rows))
    return path


def run_seed(cfg: ExperimentConfig, seed: int, out=None) -> list[MetricsRow]:
    episode = explore(cfg, seed)
    model_a, model_b, assignments = learn(cfg, episode, seed)
    cells = plan_cells(cfg, (model_a, model_b), seed)
    if out is not None:
        write_episode(out, seed, episode)
        write_models(out, seed, model_a, model_b, assignments)
        write_plans(out, seed, cells)
    specs = cfg.make_specs()
    return [metrics_row(seed, c, cells[c], specs) for c in cfg.C_sweep]


def run_pipeline(cfg: ExperimentConfig, out=None) -> list[MetricsRow]:
    """Explore, learn and plan for every seed; write all artifacts if ``out`` is given."""
    rows = []
    for seed in cfg.seeds:
        rows.extend(run_seed(cfg, seed, out))
        log.info("seed %d done", seed)
    if out is not None:
        write_metrics(out, rows)
    return rows


# ---------------------------------------------------------------- message report

def export_message_report(model_a: MessageModel, model_b: MessageModel,
                          usage=None, top: int = 3) -> list[dict]:
    """Per message: each agent's most likely states, learned p(o^(m)=1|m), overlap flag."""
    rows = []
    for m in range(model_a.K):
        top_a = np.argsort(-model_a.likelihood[m], kind="stable")[:top]
        top_b = np.argsort(-model_b.likelihood[m], kind="stable")[:top]
        rows.append({
            "m": m,
            "top_a": [int(s) for s in top_a],
            "top_b": [int(s) for s in top_b],
            "p_top_a": [float(model_a.likelihood[m, s]) for s in top_a],
            "p_top_b": [float(model_b.likelihood[m, s]) for s in top_b],
            "p_opt_a": float(model_a.optimality[m]),
            "p_opt_b": float(model_b.optimality[m]),
            "overlap": bool(top_a[0] == top_b[0]),
            "usage": None if usage is None else int(usage[m]),
        })
    return rows


def format_report(rows: list[dict], grid: Grid) -> str:
    def cells(states, probs):
        return " ".join(f"{grid.coords(s)}:{p:.2f}".replace(" ", "") for s, p in zip(states, probs))

    lines = [f"{'m':>3}  {'n':>4}  {'top states A':<34}  {'top states B':<34}  "
             f"{'p(o=1|m) A':>10}  {'B':>6}  overlap"]
    for r in rows:
        n = "-" if r["usage"] is None else str(r["usage"])
        lines.append(f"{r['m']:>3}  {n:>4}  {cells(r['top_a'], r['p_top_a']):<34}  "
                     f"{cells(r['top_b'], r['p_top_b']):<34}  {r['p_opt_a']:>10.3f}  "
                     f"{r['p_opt_b']:>6.3f}  {'yes' if r['overlap'] else 'no'}")
    return "\n".join(lines)


def overlap_optimality_gap(rows: list[dict], used_only: bool = True):
    """Mean p(o=1|m) of overlapping vs non-overlapping messages (agent A's estimate).

    Messages with no assigned steps are skipped when usage is known, since
    their uniform rows carry no argmax.
    """
    keep = [r for r in rows if not used_only or r["usage"] is None or r["usage"] > 0]
    same = [r["p_opt_a"] for r in keep if r["overlap"]]
    diff = [r["p_opt_a"] for r in keep if not r["overlap"]]
    if not same or not diff:
        return None
    return float(np.mean(same)), float(np.mean(diff))
