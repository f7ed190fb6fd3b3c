"""Experiment grid: train, evaluate and sweep, all driven by one YAML config.

Outputs (under ``out_dir``):

``metrics.csv``     one row per logged training episode
``evaluation.csv``  one row per post-training evaluation step (mean action)
``summary.csv``     per-cell means/std recomputable from ``evaluation.csv``
``ber_sweep.csv``   SES against injected BER (``sweep-ber`` only)
``checkpoints/``    actor and critic of every trained cell
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .channel import PathLossParams
from .env import EnvConfig, Scheme, SemanticWorld, SemComEnv, transport
from .ppo import GaussianPolicy, PpoConfig, load_policy, save_mlp, save_policy, train
from .rng import make_rng
from .semcodec import SemanticBudget
from .ses import SurrogateParams, delivered_fractions, surrogate_ses

SCHEMA_VERSION = 1
ALL_SCHEMES = tuple(s.value for s in Scheme)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class BerSweepConfig:
    ber_min: float = 1e-5
    ber_max: float = 1e-1
    points: int = 9
    trials: int = 100
    n_c: int | None = None  # None: full map
    n_p: int | None = None  # None: full prompt

    def grid(self) -> np.ndarray:
        return np.logspace(math.log10(self.ber_min), math.log10(self.ber_max), self.points)


@dataclass(frozen=True)
class ExperimentConfig:
    schemes: tuple[str, ...] = ("SS-MGSC",)
    power_grid_dbm: tuple[float, ...] = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
    learning_rate_grid: tuple[float, ...] = (1e-3,)
    seeds: tuple[int, ...] = (0,)
    eval_steps: int = 200
    log_every: int = 1
    out_dir: str = "runs/default"
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    ber_sweep: BerSweepConfig = field(default_factory=BerSweepConfig)

    def __post_init__(self):
        for name, kind in (("power_grid_dbm", float), ("learning_rate_grid", float), ("seeds", int), ("schemes", str)):
            try:
                object.__setattr__(self, name, tuple(kind(v) for v in getattr(self, name)))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{name}: {exc}") from exc
        for name in ("schemes", "power_grid_dbm", "learning_rate_grid", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        bad = [s for s in self.schemes if s not in ALL_SCHEMES]
        if bad:
            raise ConfigError(f"unknown scheme(s) {bad}; choose from {list(ALL_SCHEMES)}")
        if any(lr < 0 for lr in self.learning_rate_grid):
            raise ConfigError("learning rates must be non-negative")
        if self.eval_steps < 200:
            raise ConfigError("eval_steps must be at least 200")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")

    def cells(self):
        """Every (scheme, p_max_dbm, lr_actor, seed) grid cell in a fixed order."""
        for scheme in self.schemes:
            for dbm in self.power_grid_dbm:
                for lr in self.learning_rate_grid:
                    for seed in self.seeds:
                        yield scheme, dbm, lr, seed


# ------------------------------------------------------------ config I/O


def _build(cls, data, where: str):
    """Instantiate a dataclass from a mapping, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    fields = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {}
    for name, value in data.items():
        if name in _NESTED.get(cls, {}):
            kwargs[name] = _build(_NESTED[cls][name], value, f"{where}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {
    ExperimentConfig: {"env": EnvConfig, "ppo": PpoConfig, "ber_sweep": BerSweepConfig},
    EnvConfig: {"path_loss": PathLossParams, "surrogate": SurrogateParams},
}


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = dict(data)
    version = data.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    return _build(ExperimentConfig, data, "config")


def load_config(path=None) -> ExperimentConfig:
    """Read a YAML experiment config; ``None`` loads the bundled default."""
    try:
        if path is None:
            text = resources.files("semsplit").joinpath("data/default.yaml").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        data = yaml.safe_load(text)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(x):
        if dataclasses.is_dataclass(x):
            return {f.name: plain(getattr(x, f.name)) for f in dataclasses.fields(x) if f.init}
        if isinstance(x, tuple):
            return [plain(v) for v in x]
        return x

    return {"schema_version": SCHEMA_VERSION, **plain(cfg)}


# ------------------------------------------------------------ CSV rows


@dataclass(frozen=True)
class MetricsRow:
    scheme: str
    p_max_dbm: float
    lr_actor: float
    seed: int
    episode: int
    reward: float
    ses_total: float
    ses_per_user: tuple[float, ...]
    ber_common: float
    ber_private_per_user: tuple[float, ...]

    def __post_init__(self):
        values = [self.reward, self.ses_total, self.ber_common, *self.ses_per_user, *self.ber_private_per_user]
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite metric in {self}")


def _fmt(value) -> str:
    if isinstance(value, (tuple, list, np.ndarray)):
        return ";".join(_fmt(v) for v in value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class CsvSink:
    """Append rows of a fixed column set, flushing after every row."""

    def __init__(self, path: Path, columns):
        self.columns = list(columns)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(self.columns)

    def write(self, row: dict):
        self._writer.writerow([_fmt(row[c]) for c in self.columns])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


METRICS_COLUMNS = [f.name for f in dataclasses.fields(MetricsRow)]
EVAL_COLUMNS = [
    "scheme", "p_max_dbm", "lr_actor", "seed", "step", "reward", "ses_total", "ses_per_user",
    "map_bits", "map_bit_errors", "text_bits", "text_bit_errors", "power_used",
]
SUMMARY_COLUMNS = [
    "scheme", "p_max_dbm", "lr_actor", "seed", "n_steps",
    "reward_mean", "reward_std", "ses_total_mean", "ses_total_std", "ses_per_user_mean",
    "ber_common", "ber_private", "ber_private_per_user", "train_reward_first10", "train_reward_last10",
]


# ------------------------------------------------------------ schemes


def scheme_variant(scheme, env_cfg: EnvConfig, seed: int, world: SemanticWorld | None = None, **kwargs) -> SemComEnv:
    """Environment for one scheme; channel draws depend only on ``seed``."""
    try:
        scheme = Scheme(scheme)
    except ValueError:
        raise ConfigError(f"unknown scheme {scheme!r}") from None
    return SemComEnv(env_cfg, scheme, seed=seed, world=world, **kwargs)


class _RecordingEnv:
    """Pass-through wrapper that accumulates model BERs for the training log."""

    def __init__(self, env: SemComEnv):
        self.env = env
        self.state_dim = env.state_dim
        self.action_dim = env.action_dim
        self.ber_map: list[np.ndarray] = []
        self.ber_text: list[np.ndarray] = []

    def reset(self):
        self.ber_map, self.ber_text = [], []
        return self.env.reset()

    def step(self, action):
        outcome, done = self.env.step(action)
        self.ber_map.append(outcome.ber_report["map_ber_model"])
        self.ber_text.append(outcome.ber_report["text_ber_model"])
        return outcome, done


# ------------------------------------------------------------ cells


def _cell_tag(scheme, dbm, lr, seed) -> str:
    return f"{scheme}_{dbm:g}dBm_lr{lr:g}_seed{seed}"


def train_cell(cfg: ExperimentConfig, scheme, dbm, lr, seed, world=None, metrics: CsvSink | None = None):
    env_cfg = cfg.env.with_power_dbm(dbm)
    rec = _RecordingEnv(scheme_variant(scheme, env_cfg, seed, world=world))
    ppo_cfg = dataclasses.replace(cfg.ppo, lr_actor=lr, seed=seed)

    def on_episode(row):
        if metrics is None or row["episode"] % cfg.log_every:
            return
        ses = row["mean_ses_per_user"]
        metrics.write(
            dataclasses.asdict(
                MetricsRow(
                    scheme=scheme, p_max_dbm=dbm, lr_actor=lr, seed=seed, episode=row["episode"],
                    reward=row["mean_reward"], ses_total=float(np.sum(ses)), ses_per_user=tuple(ses),
                    ber_common=float(np.mean(rec.ber_map)),
                    ber_private_per_user=tuple(np.mean(rec.ber_text, axis=0)),
                )
            )
        )

    return train(rec, ppo_cfg, on_episode)


def evaluate_policy(actor: GaussianPolicy, env_cfg: EnvConfig, scheme, seed: int, steps: int, world=None):
    """Roll out the mean action on fresh evaluation channels with payload transport."""
    env = scheme_variant(
        scheme, env_cfg, seed, world=world, simulate_transport=True,
        channel_stream="eval_channel", transport_stream="eval_transport",
    )
    state = env.reset()
    rows = []
    for step in range(steps):
        outcome, _ = env.step(actor.mean_action(state))
        rep = outcome.ber_report
        rows.append({
            "step": step,
            "reward": outcome.reward,
            "ses_total": float(np.sum(outcome.ses_totals)),
            "ses_per_user": tuple(outcome.ses_totals),
            "map_bits": rep["map_bits"] * env_cfg.n_users,
            "map_bit_errors": int(np.sum(rep["map_bit_errors"])),
            "text_bits": rep["text_bits"].tolist(),
            "text_bit_errors": [int(x) for x in rep["text_bit_errors"]],
            "power_used": outcome.power_used,
        })
        state = outcome.next_state
    return rows


def summarize(rows, key: dict, train_rewards=None) -> dict:
    """Per-cell means/std from evaluation rows; BERs pool bits over steps and users."""
    reward = np.array([r["reward"] for r in rows])
    ses = np.array([r["ses_total"] for r in rows])
    per_user = np.array([r["ses_per_user"] for r in rows])
    map_bits = sum(r["map_bits"] for r in rows)
    map_err = sum(r["map_bit_errors"] for r in rows)
    text_bits = np.sum([r["text_bits"] for r in rows], axis=0)
    text_err = np.sum([r["text_bit_errors"] for r in rows], axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_user_ber = np.where(text_bits > 0, text_err / np.maximum(text_bits, 1), np.nan)
    out = dict(key)
    out.update(
        n_steps=len(rows),
        reward_mean=float(reward.mean()),
        reward_std=float(reward.std()),
        ses_total_mean=float(ses.mean()),
        ses_total_std=float(ses.std()),
        ses_per_user_mean=tuple(per_user.mean(axis=0)),
        ber_common=map_err / map_bits if map_bits else math.nan,
        ber_private=float(text_err.sum() / text_bits.sum()) if text_bits.sum() else math.nan,
        ber_private_per_user=tuple(per_user_ber),
    )
    if train_rewards is not None and len(train_rewards):
        n = max(1, len(train_rewards) // 10)
        out["train_reward_first10"] = float(np.mean(train_rewards[:n]))
        out["train_reward_last10"] = float(np.mean(train_rewards[-n:]))
    else:
        out["train_reward_first10"] = out["train_reward_last10"] = math.nan
    return out


# ------------------------------------------------------------ commands


def run_experiment(cfg: ExperimentConfig, out_dir=None, evaluate=True) -> list[dict]:
    """Train (and by default evaluate) every grid cell; returns the summary rows."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    ckpt = out / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    world = SemanticWorld(cfg.env)
    summaries = []
    with CsvSink(out / "metrics.csv", METRICS_COLUMNS) as metrics:
        eval_sink = CsvSink(out / "evaluation.csv", EVAL_COLUMNS) if evaluate else None
        summary_sink = CsvSink(out / "summary.csv", SUMMARY_COLUMNS) if evaluate else None
        try:
            for scheme, dbm, lr, seed in cfg.cells():
                result = train_cell(cfg, scheme, dbm, lr, seed, world=world, metrics=metrics)
                tag = _cell_tag(scheme, dbm, lr, seed)
                save_policy(ckpt / f"{tag}_actor.bin", result.actor)
                save_mlp(ckpt / f"{tag}_critic.bin", result.critic)
                if not evaluate:
                    continue
                key = dict(scheme=scheme, p_max_dbm=dbm, lr_actor=lr, seed=seed)
                rows = evaluate_policy(result.actor, cfg.env.with_power_dbm(dbm), scheme, seed, cfg.eval_steps, world)
                for r in rows:
                    eval_sink.write({**key, **r})
                summary = summarize(rows, key, result.episode_rewards)
                summary_sink.write(summary)
                summaries.append(summary)
        finally:
            for sink in (eval_sink, summary_sink):
                if sink is not None:
                    sink.close()
    return summaries


def evaluate_checkpoints(cfg: ExperimentConfig, out_dir=None) -> list[dict]:
    """Evaluate the saved actors of every grid cell without retraining."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    world = SemanticWorld(cfg.env)
    summaries = []
    with CsvSink(out / "evaluation.csv", EVAL_COLUMNS) as eval_sink, \
            CsvSink(out / "summary.csv", SUMMARY_COLUMNS) as summary_sink:
        for scheme, dbm, lr, seed in cfg.cells():
            path = out / "checkpoints" / f"{_cell_tag(scheme, dbm, lr, seed)}_actor.bin"
            if not path.exists():
                raise ConfigError(f"missing checkpoint {path}")
            actor = load_policy(path)
            key = dict(scheme=scheme, p_max_dbm=dbm, lr_actor=lr, seed=seed)
            rows = evaluate_policy(actor, cfg.env.with_power_dbm(dbm), scheme, seed, cfg.eval_steps, world)
            for r in rows:
                eval_sink.write({**key, **r})
            summary = summarize(rows, key)
            summary_sink.write(summary)
            summaries.append(summary)
    return summaries


BER_SWEEP_COLUMNS = [
    "stream", "ber", "user", "ses_analytic", "ses_mc_mean", "ses_mc_std", "trials",
]


def sweep_ber_vs_ses(cfg: ExperimentConfig, seed: int = 0, out_dir=None, scheme="SS-MGSC") -> list[dict]:
    """SES per user with a fixed budget while one stream's BER is swept.

    The ``image`` sweep injects BER on the map stream (text error-free) and the
    ``text`` sweep does the reverse. Each point reports the closed-form SES and
    a Monte-Carlo estimate from actual bit transport.
    """
    env_cfg = cfg.env
    sw = cfg.ber_sweep
    scheme = Scheme(scheme)
    world = SemanticWorld(env_cfg)
    k = env_cfg.n_users
    n_c = env_cfg.m_max if sw.n_c is None else sw.n_c
    n_p = env_cfg.n_max if sw.n_p is None else sw.n_p
    budget = SemanticBudget(n_c, (n_p,) * k, env_cfg.m_max, env_cfg.n_max)
    rng = make_rng(seed, "sweep")
    grid = np.concatenate([[0.0], sw.grid()])
    rows = []
    for stream in ("image", "text"):
        for ber in grid:
            ber_map = np.full(k, ber if stream == "image" else 0.0)
            ber_text = np.full(k, ber if stream == "text" else 0.0)
            rho_c, rho_p = delivered_fractions(
                budget, ber_map, ber_text, world.stats, world.avg_word_len, codec=scheme.map_codec
            )
            analytic = [surrogate_ses(float(a), float(b), env_cfg.surrogate).total for a, b in zip(rho_c, rho_p)]
            mc = np.zeros((sw.trials, k))
            for t in range(sw.trials):
                rep = transport(world, budget, ber_map, ber_text, scheme, rng)
                cells = np.nan_to_num(rep["cell_accuracy"], nan=0.0)
                words = np.nan_to_num(rep["word_accuracy"], nan=0.0)
                for u in range(k):
                    rc = budget.n_c / budget.m_max * cells[u]
                    rp = budget.n_p[u] / budget.n_max * words[u]
                    mc[t, u] = surrogate_ses(rc, rp, env_cfg.surrogate).total
            for u in range(k):
                rows.append({
                    "stream": stream, "ber": float(ber), "user": u, "ses_analytic": analytic[u],
                    "ses_mc_mean": float(mc[:, u].mean()), "ses_mc_std": float(mc[:, u].std()),
                    "trials": sw.trials,
                })
    if out_dir is not None:
        with CsvSink(Path(out_dir) / "ber_sweep.csv", BER_SWEEP_COLUMNS) as sink:
            for r in rows:
                sink.write(r)
    return rows
