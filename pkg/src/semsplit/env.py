"""One-step-per-decision MDP tying channel, precoding, codecs and SES together.

State  = [Re(h_1..K), Im(h_1..K), P_max, I_th,1..K]      length 2*N_t*K + 1 + K
Action = [Re(w_c), Im(w_c), Re(w_1..K), Im(w_1..K), n_c, n_p,1..K]
                                                          length 2*N_t + 2*N_t*K + 1 + K

The policy emits unbounded Gaussian actions; :func:`squash_action` maps them to
``[-1, 1]`` with tanh before :func:`decode_action` turns them into beamformers
and integer budgets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import semcodec
from .channel import ChannelSet, PathLossParams, dbm_to_watts, draw_channels, noise_power, path_loss_gain
from .precode import BeamformerSet, common_sinr, private_sinr, total_power
from .rng import make_rng
from .semcodec import MapGeometry, SemanticBudget, TextUnit, ber_from_sinr, synthetic_map
from .ses import MapStats, SesScore, SurrogateParams, delivered_fractions, surrogate_ses

DEFAULT_PROMPTS = (
    "rainy weather wet street near local shops school",
    "heavy traffic queue at busy intersection merging lanes",
    "sudden pedestrian crossing ahead hidden behind parked truck",
)


class Scheme(str, Enum):
    """Transmission schemes compared in the experiments.

    SS-MGSC broadcasts the one-hot map on the common stream and the prompts on
    the private streams. SegS-MGSC swaps in binary label coding for the map.
    O-MGSC / T-MGSC are SDMA baselines: no common stream, every user gets its
    own private beam carrying only the map (O) or only the text (T).
    """

    SS = "SS-MGSC"
    SEGS = "SegS-MGSC"
    O = "O-MGSC"
    T = "T-MGSC"

    @property
    def map_codec(self) -> str:
        return "binary" if self is Scheme.SEGS else "onehot"

    @property
    def uses_common_stream(self) -> bool:
        return self in (Scheme.SS, Scheme.SEGS)

    @property
    def sends_map(self) -> bool:
        return self is not Scheme.T

    @property
    def sends_text(self) -> bool:
        return self is not Scheme.O


@dataclass(frozen=True)
class EnvConfig:
    n_users: int = 3
    n_t: int = 8
    p_max_w: float = 10.0
    p_max_ref_w: float = 1000.0
    i_th: tuple[float, ...] = (1.0, 1.0, 1.0)
    alpha_pen: float = 10.0
    beta_pen: float = 10.0
    m_max: int = 16
    n_max: int = 8
    steps_per_episode: int = 32
    distances: tuple[float, ...] = (30.0, 100.0, 400.0)
    grid_h: int = 24
    grid_w: int = 32
    n_classes: int = 8
    map_seed: int = 0
    prompts: tuple[str, ...] = DEFAULT_PROMPTS
    path_loss: PathLossParams = field(default_factory=PathLossParams)
    surrogate: SurrogateParams = field(default_factory=SurrogateParams)

    def __post_init__(self):
        if self.n_users < 1 or self.n_t < 1:
            raise ValueError("n_users and n_t must be >= 1")
        if not self.p_max_w > 0 or not self.p_max_ref_w > 0:
            raise ValueError("p_max_w and p_max_ref_w must be positive")
        if len(self.i_th) == 1 and self.n_users > 1:
            object.__setattr__(self, "i_th", tuple(self.i_th) * self.n_users)
        if len(self.i_th) != self.n_users or any(not 0 <= t <= 2 for t in self.i_th):
            raise ValueError("i_th needs one threshold in [0, 2] per user")
        if self.alpha_pen < 0 or self.beta_pen < 0:
            raise ValueError("penalty weights must be non-negative")
        if len(self.distances) != self.n_users or any(d <= 0 for d in self.distances):
            raise ValueError("distances needs one positive entry per user")
        if not self.prompts:
            raise ValueError("at least one prompt is required")
        if self.steps_per_episode < 1:
            raise ValueError("steps_per_episode must be >= 1")
        MapGeometry(self.grid_h, self.grid_w, self.n_classes, self.m_max)

    @property
    def state_dim(self) -> int:
        return 2 * self.n_t * self.n_users + 1 + self.n_users

    @property
    def action_dim(self) -> int:
        return 2 * self.n_t + 2 * self.n_t * self.n_users + 1 + self.n_users

    @property
    def channel_scale(self) -> float:
        """Amplitude scale of the strongest (closest) user, used to normalise the state."""
        return math.sqrt(path_loss_gain(min(self.distances), self.path_loss))

    def with_power_dbm(self, dbm: float) -> "EnvConfig":
        return replace(self, p_max_w=dbm_to_watts(dbm))

    def user_prompt(self, k: int) -> TextUnit:
        return TextUnit(self.prompts[k % len(self.prompts)])


def state_dim(n_users: int, n_t: int) -> int:
    return 2 * n_t * n_users + 1 + n_users


def action_dim(n_users: int, n_t: int) -> int:
    return 2 * n_t + 2 * n_t * n_users + 1 + n_users


# ---------------------------------------------------------------- encodings


def encode_state(channels: ChannelSet, cfg: EnvConfig) -> np.ndarray:
    if channels.n_users != cfg.n_users or channels.n_t != cfg.n_t:
        raise ValueError("channel dimensions do not match the configuration")
    h = channels.per_user / cfg.channel_scale
    return np.concatenate(
        [h.real.reshape(-1), h.imag.reshape(-1), [cfg.p_max_w / cfg.p_max_ref_w], np.asarray(cfg.i_th, float)]
    )


def decode_state(state, cfg: EnvConfig) -> np.ndarray:
    """Inverse of :func:`encode_state` for the channel part, shape ``(K, N_t)``."""
    state = np.asarray(state, dtype=float)
    if state.shape != (cfg.state_dim,):
        raise ValueError(f"state must have length {cfg.state_dim}")
    n = cfg.n_users * cfg.n_t
    re = state[:n].reshape(cfg.n_users, cfg.n_t)
    im = state[n : 2 * n].reshape(cfg.n_users, cfg.n_t)
    return (re + 1j * im) * cfg.channel_scale


def squash_action(raw) -> np.ndarray:
    return np.tanh(np.asarray(raw, dtype=float))


def _quantize(x: float, ceiling: int) -> int:
    units = math.floor((x + 1.0) / 2.0 * ceiling + 0.5)
    return min(max(units, 0), ceiling)


def decode_action(a, cfg: EnvConfig) -> tuple[BeamformerSet, SemanticBudget]:
    """Map a squashed action in ``[-1, 1]`` to beamformers and integer budgets.

    Each real beam component is scaled by ``sqrt(P_max / (2 N_t (K + 1)))``,
    so the total power can reach but never exceed ``P_max``. Budgets use
    round-half-up of ``(x + 1) / 2 * ceiling``.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (cfg.action_dim,):
        raise ValueError(f"action must have length {cfg.action_dim}, got {a.shape}")
    a = np.clip(a, -1.0, 1.0)
    k, nt = cfg.n_users, cfg.n_t
    scale = math.sqrt(cfg.p_max_w / (2 * nt * (k + 1)))
    wc = (a[:nt] + 1j * a[nt : 2 * nt]) * scale
    off = 2 * nt
    re = a[off : off + k * nt].reshape(k, nt)
    im = a[off + k * nt : off + 2 * k * nt].reshape(k, nt)
    wp = (re + 1j * im) * scale
    raw_budget = a[off + 2 * k * nt :]
    budget = SemanticBudget(
        n_c=_quantize(raw_budget[0], cfg.m_max),
        n_p=tuple(_quantize(x, cfg.n_max) for x in raw_budget[1:]),
        m_max=cfg.m_max,
        n_max=cfg.n_max,
    )
    return BeamformerSet(wc, wp), budget


def apply_scheme(beams: BeamformerSet, budget: SemanticBudget, scheme: Scheme):
    """Force the parts of a decision a scheme does not use to zero."""
    if not scheme.uses_common_stream:
        beams = BeamformerSet(np.zeros_like(beams.common), beams.private)
    n_c = budget.n_c if scheme.sends_map else 0
    n_p = budget.n_p if scheme.sends_text else (0,) * len(budget.n_p)
    return beams, SemanticBudget(n_c, n_p, budget.m_max, budget.n_max)


# ------------------------------------------------------------------ reward


def compute_reward(ses_totals, power_used: float, cfg: EnvConfig) -> float:
    """Sum of SES plus the power and per-user SES threshold penalties."""
    ses_totals = np.asarray(ses_totals, dtype=float)
    objective = float(np.sum(ses_totals))
    power_term = cfg.alpha_pen * min(0.0, cfg.p_max_w - power_used)
    ses_term = cfg.beta_pen * float(np.sum(np.minimum(0.0, ses_totals - np.asarray(cfg.i_th))))
    return objective + power_term + ses_term


def discounted_return(rewards, gamma: float) -> float:
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    total = 0.0
    for r in reversed(list(rewards)):
        total = r + gamma * total
    return total


@dataclass
class StepOutcome:
    reward: float
    per_user_ses: list[SesScore]
    power_used: float
    power_slack: float
    ses_slacks: np.ndarray
    ber_report: dict
    budget: SemanticBudget
    rho_c: np.ndarray
    rho_p: np.ndarray
    next_state: np.ndarray | None = None

    @property
    def ses_totals(self) -> np.ndarray:
        return np.array([s.total for s in self.per_user_ses])

    def recompute_reward(self, cfg: EnvConfig) -> float:
        objective = float(np.sum(self.ses_totals))
        return (
            objective
            + cfg.alpha_pen * min(0.0, self.power_slack)
            + cfg.beta_pen * float(np.sum(np.minimum(0.0, self.ses_slacks)))
        )


# --------------------------------------------------------------- semantics


class SemanticWorld:
    """Shared payload: the common map (and its tile statistics) plus user prompts."""

    def __init__(self, cfg: EnvConfig):
        geometry = MapGeometry(cfg.grid_h, cfg.grid_w, cfg.n_classes, cfg.m_max)
        self.geometry = geometry
        self.smap = synthetic_map(geometry, seed=cfg.map_seed)
        self.stats = MapStats.from_map(self.smap, cfg.m_max)
        self.prompts = [cfg.user_prompt(k) for k in range(cfg.n_users)]
        self.avg_word_len = np.array([np.mean([len(w) for w in p.words]) for p in self.prompts])


def stream_bers(channels: ChannelSet, beams: BeamformerSet, cfg: EnvConfig, scheme: Scheme):
    """Model BER of the map stream and the text stream for every user."""
    sigma2 = noise_power(cfg.path_loss)
    sinr_p = private_sinr(channels, beams, sigma2)
    ber_p = ber_from_sinr(sinr_p)
    if scheme.uses_common_stream:
        ber_map = ber_from_sinr(common_sinr(channels, beams, sigma2))
    else:
        ber_map = ber_p
    return np.atleast_1d(ber_map), np.atleast_1d(ber_p)


def transport(world: SemanticWorld, budget: SemanticBudget, ber_map, ber_text, scheme: Scheme, rng):
    """Push the payload through per-user binary symmetric channels.

    Returns measured bit error rates and decoded artifacts per user.
    """
    k_users = len(budget.n_p)
    encode = semcodec.onehot_encode if scheme.map_codec == "onehot" else semcodec.label_binary_encode
    decode = semcodec.onehot_decode if scheme.map_codec == "onehot" else semcodec.label_binary_decode
    map_bits = encode(world.smap, budget.n_c, world.geometry.m_max)
    n_sent_cells = budget.n_c * world.geometry.cells_per_tile
    truth = world.smap.cells.reshape(-1)[:n_sent_cells]
    map_err = np.zeros(k_users)
    cell_acc = np.full(k_users, np.nan)
    text_bits = np.zeros(k_users, dtype=np.int64)
    text_err = np.zeros(k_users)
    word_acc = np.full(k_users, np.nan)
    decoded_text = []
    for k in range(k_users):
        if map_bits.size:
            rx = semcodec.transmit_bits(map_bits, float(ber_map[k]), rng=rng)
            map_err[k] = np.count_nonzero(rx != map_bits)
            cells = decode(rx, world.geometry).cells.reshape(-1)[:n_sent_cells]
            cell_acc[k] = np.mean(cells == truth)
        prompt = world.prompts[k]
        tx = semcodec.text_encode(prompt, budget.n_p[k])
        lengths = semcodec.word_lengths(prompt, budget.n_p[k])
        text_bits[k] = tx.size
        if tx.size:
            rx = semcodec.transmit_bits(tx, float(ber_text[k]), rng=rng)
            wrong = rx != tx
            text_err[k] = np.count_nonzero(wrong)
            # a word arrives when none of its character bits flipped
            bounds = np.cumsum([0] + [8 * n for n in lengths])
            word_acc[k] = np.mean([not wrong[a:b].any() for a, b in zip(bounds[:-1], bounds[1:])])
            decoded_text.append(semcodec.text_decode(rx, lengths).text)
        else:
            decoded_text.append("")
    map_ber = map_err / map_bits.size if map_bits.size else np.full(k_users, np.nan)
    text_ber = np.full(k_users, np.nan)
    np.divide(text_err, text_bits, out=text_ber, where=text_bits > 0)
    return {
        "map_ber_measured": map_ber,
        "text_ber_measured": text_ber,
        "map_bits": int(map_bits.size),
        "map_bit_errors": map_err,
        "text_bits": text_bits,
        "text_bit_errors": text_err,
        "cell_accuracy": cell_acc,
        "word_accuracy": word_acc,
        "decoded_text": decoded_text,
    }


def evaluate_decision(
    channels: ChannelSet,
    beams: BeamformerSet,
    budget: SemanticBudget,
    cfg: EnvConfig,
    world: SemanticWorld,
    scheme: Scheme = Scheme.SS,
    rng=None,
) -> StepOutcome:
    """Score one (beamformer, budget) decision on one channel realisation.

    When ``rng`` is given the payload is also pushed through the bit channel and
    the measured error rates land in ``ber_report``; the SES itself always uses
    the expected delivered fractions.
    """
    beams, budget = apply_scheme(beams, budget, scheme)
    ber_map, ber_text = stream_bers(channels, beams, cfg, scheme)
    rho_c, rho_p = delivered_fractions(
        budget, ber_map, ber_text, world.stats, world.avg_word_len, codec=scheme.map_codec
    )
    scores = [surrogate_ses(float(rc), float(rp), cfg.surrogate) for rc, rp in zip(rho_c, rho_p)]
    totals = np.array([s.total for s in scores])
    power = total_power(beams)
    reward = compute_reward(totals, power, cfg)
    report = {"map_ber_model": ber_map, "text_ber_model": ber_text}
    if rng is not None:
        report.update(transport(world, budget, ber_map, ber_text, scheme, rng))
    return StepOutcome(
        reward=reward,
        per_user_ses=scores,
        power_used=power,
        power_slack=cfg.p_max_w - power,
        ses_slacks=totals - np.asarray(cfg.i_th),
        ber_report=report,
        budget=budget,
        rho_c=rho_c,
        rho_p=rho_p,
    )


def step(channels: ChannelSet, raw_action, cfg: EnvConfig, world: SemanticWorld, scheme=Scheme.SS, rng=None):
    beams, budget = decode_action(squash_action(raw_action), cfg)
    return evaluate_decision(channels, beams, budget, cfg, world, scheme, rng)


class SemComEnv:
    """Block-fading environment: a fresh i.i.d. channel draw for every step.

    Channel draws use their own random stream, so two environments with the same
    seed see identical channels whatever actions or schemes they run.
    """

    def __init__(self, cfg: EnvConfig, scheme: Scheme | str = Scheme.SS, seed: int = 0,
                 simulate_transport: bool = False, world: SemanticWorld | None = None,
                 channel_stream: str = "channel", transport_stream: str = "transport"):
        self.cfg = cfg
        self.scheme = Scheme(scheme)
        self.world = world if world is not None else SemanticWorld(cfg)
        self.simulate_transport = simulate_transport
        self._channel_rng = make_rng(seed, channel_stream)
        self._transport_rng = make_rng(seed, transport_stream)
        self.channels: ChannelSet | None = None
        self.t = 0

    @property
    def state_dim(self) -> int:
        return self.cfg.state_dim

    @property
    def action_dim(self) -> int:
        return self.cfg.action_dim

    def _draw(self) -> np.ndarray:
        self.channels = draw_channels(self.cfg.distances, self.cfg.n_t, self.cfg.path_loss, rng=self._channel_rng)
        return encode_state(self.channels, self.cfg)

    def reset(self) -> np.ndarray:
        self.t = 0
        return self._draw()

    def step(self, raw_action) -> tuple[StepOutcome, bool]:
        if self.channels is None:
            raise RuntimeError("call reset() before step()")
        rng = self._transport_rng if self.simulate_transport else None
        outcome = step(self.channels, raw_action, self.cfg, self.world, self.scheme, rng)
        self.t += 1
        done = self.t >= self.cfg.steps_per_episode
        outcome.next_state = self._draw()
        return outcome, done
