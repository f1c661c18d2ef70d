"""Synthetic interview cohorts with known ground truth.

Each call is an alternating-turn process on the landline clock:

* a speaker holds the floor for a run of ``R`` turns, ``R - 1 ~ Geometric``
  so that ``E[R]`` equals the configured consecutive-turns mean;
* a turn lasts ``min_turn_ms + LogNormal`` ms with the configured mean and
  SD (the minimum keeps every interlocutor turn at least one merge gap
  long, so turns stay separable);
* a turn of length ``L`` contains ``Poisson(rate * L)`` hold pauses drawn
  from a normal truncated to ``[hold_min_ms, merge_gap_ms - guard_ms]``;
* same-speaker turns within a run are separated by more than the merge gap;
* the speaker taking the floor starts after a switch offset drawn from a
  normal truncated at 0, whose location and scale are chosen so that the
  truncated distribution has the configured mean and SD.

Mood, gender and random patient/clinician intercepts are expressed as
shifts in feature units (ms, %, counts, minutes, Hz). Most features then
have closed-form expectations. The patient floor-control share is hit by
solving for one speaker's hold-pause rate, since it is otherwise implied
by the other parameters.

The mood shifts in the ``table1`` preset are effect sizes observed in
real interviews for these features; every baseline, dispersion and the
rhythm shifts are placeholders chosen for this simulator.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.signal import butter, sosfilt
from scipy.special import erfcx, ndtr, ndtri, pdtrc

from .audio import AudioSignal
from .episodes import EpisodeLabel
from .segmentation import ConversationTimeline, Speaker, SpeechSegment, Turn

__all__ = [
    "CohortConfig",
    "RenderConfig",
    "RenderedCall",
    "SimulatedCohort",
    "simulate_cohort",
    "simulate_call",
    "render_audio",
    "render_speaker_track",
    "preset",
    "implied_floor_control",
    "SHIFTABLE",
    "feature_table",
]

log = logging.getLogger(__name__)

_SPEAKER_KNOBS = (
    "turn_length_mean",
    "turn_length_sd",
    "hold_offset_mean",
    "consecutive_turns_mean",
    "switch_offset_mean",
    "switch_offset_sd",
)

#: feature-unit quantities that effects and random intercepts may shift
SHIFTABLE: tuple[str, ...] = (
    ("call_duration_min", "patient_floor_control_pct", "syllable_rate_hz")
    + tuple(f"{p}_{k}" for p in ("patient", "clinician") for k in _SPEAKER_KNOBS)
)

_EPISODE_KEYS = {"euthymic": EpisodeLabel.EUTHYMIC, "depressed": EpisodeLabel.DEPRESSED,
                 "manic": EpisodeLabel.MANIC, "excluded": EpisodeLabel.EXCLUDED}


def _default_baseline() -> dict[str, float]:
    return {
        "call_duration_min": 12.0,
        "syllable_rate_hz": 4.0,
        "patient_turn_length_mean": 3000.0,
        "patient_turn_length_sd": 2000.0,
        "patient_hold_offset_mean": 220.0,
        "patient_consecutive_turns_mean": 1.25,
        "patient_switch_offset_mean": 650.0,
        "patient_switch_offset_sd": 350.0,
        "clinician_turn_length_mean": 2200.0,
        "clinician_turn_length_sd": 1400.0,
        "clinician_hold_offset_mean": 200.0,
        "clinician_consecutive_turns_mean": 1.15,
        "clinician_switch_offset_mean": 550.0,
        "clinician_switch_offset_sd": 300.0,
    }


def _default_patient_sd() -> dict[str, float]:
    return {
        "call_duration_min": 1.5,
        "patient_floor_control_pct": 2.5,
        "syllable_rate_hz": 0.3,
        "patient_turn_length_mean": 300.0,
        "patient_hold_offset_mean": 20.0,
        "patient_consecutive_turns_mean": 0.05,
        "patient_switch_offset_mean": 60.0,
        "clinician_turn_length_mean": 100.0,
        "clinician_switch_offset_mean": 40.0,
    }


def _default_clinician_sd() -> dict[str, float]:
    return {
        "call_duration_min": 0.8,
        "patient_floor_control_pct": 1.0,
        "clinician_turn_length_mean": 200.0,
        "clinician_hold_offset_mean": 20.0,
        "clinician_consecutive_turns_mean": 0.03,
        "clinician_switch_offset_mean": 50.0,
    }


@dataclass
class CohortConfig:
    """Cohort layout, generative baselines and effects (all in feature units)."""

    n_patients: int = 30
    n_clinicians: int = 5
    n_female_clinicians: int | None = None  # None: all female
    calls_per_patient: int = 10
    episode_mix: dict[str, float] = field(
        default_factory=lambda: {"euthymic": 0.5, "depressed": 0.3, "manic": 0.2}
    )
    female_fraction: float = 0.7
    baseline: dict[str, float] = field(default_factory=_default_baseline)
    effects: dict[str, dict[str, float]] = field(default_factory=dict)
    gender_effects: dict[str, float] = field(default_factory=dict)
    interaction_effects: dict[str, dict[str, float]] = field(default_factory=dict)
    patient_sd: dict[str, float] = field(default_factory=_default_patient_sd)
    clinician_sd: dict[str, float] = field(default_factory=_default_clinician_sd)
    call_sd: dict[str, float] = field(
        default_factory=lambda: {"call_duration_min": 0.5, "syllable_rate_hz": 0.3}
    )
    hold_rate_hz: dict[str, float] = field(
        default_factory=lambda: {"patient": 0.35, "clinician": 0.3}
    )
    hold_sd_ms: float = 90.0
    hold_min_ms: float = 50.0
    merge_gap_ms: float = 500.0
    guard_ms: float = 50.0
    min_turn_ms: float = 500.0
    min_piece_ms: float = 60.0
    run_pause_mean_ms: float = 400.0
    min_call_min: float = 1.0
    rhythm_jitter: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 1 or self.n_clinicians < 1 or self.calls_per_patient < 1:
            raise ValueError("cohort sizes must be positive")
        mix = {k: float(v) for k, v in self.episode_mix.items()}
        if any(k not in _EPISODE_KEYS for k in mix) or any(v < 0 for v in mix.values()) or sum(mix.values()) <= 0:
            raise ValueError(f"invalid episode mix {self.episode_mix}")
        if not 0 <= self.female_fraction <= 1:
            raise ValueError("female_fraction must lie in [0, 1]")
        for name, table in (("patient_sd", self.patient_sd), ("clinician_sd", self.clinician_sd),
                            ("call_sd", self.call_sd)):
            if any(v < 0 for v in table.values()):
                raise ValueError(f"{name} entries must be non-negative")
        for shifts in [self.baseline, self.gender_effects, self.patient_sd, self.clinician_sd,
                       *self.effects.values(), *self.interaction_effects.values()]:
            unknown = set(shifts) - set(SHIFTABLE)
            if unknown:
                raise ValueError(f"unknown simulator quantities: {sorted(unknown)}")
        for k in ("patient", "clinician"):
            if self.baseline[f"{k}_turn_length_mean"] <= self.min_turn_ms:
                raise ValueError("turn length means must exceed min_turn_ms")
            if self.baseline[f"{k}_consecutive_turns_mean"] < 1:
                raise ValueError("consecutive-turn means must be >= 1")
        if any(v < 0 for v in self.hold_rate_hz.values()):
            raise ValueError("hold rates must be non-negative")
        if self.hold_sd_ms <= 0 or self.hold_min_ms <= 0:
            raise ValueError("hold dispersion and minimum must be positive")
        if self.hold_min_ms >= self.merge_gap_ms - self.guard_ms:
            raise ValueError("hold range is empty")


def preset(name: str, **overrides) -> CohortConfig:
    """Named cohort configurations: ``default``, ``null``, ``table1``, ``strong``."""
    if name == "default":
        cfg = CohortConfig()
    elif name == "null":
        cfg = CohortConfig(effects={})
    elif name == "table1":
        # mixed-model effect sizes observed in real interviews; the
        # syllable-rate shifts are this simulator's own
        cfg = CohortConfig(effects={
            "depressed": {
                "call_duration_min": 0.578,
                "patient_floor_control_pct": 2.657,
                "patient_consecutive_turns_mean": 0.072,
                "patient_switch_offset_sd": 63.812,
                "clinician_hold_offset_mean": 128.150,
                "clinician_consecutive_turns_mean": 0.054,
                "clinician_turn_length_mean": -97.525,
                "syllable_rate_hz": -0.3,
            },
            "manic": {
                "call_duration_min": 0.468,
                "patient_floor_control_pct": 8.276,
                "patient_turn_length_mean": 313.163,
                "patient_turn_length_sd": 299.200,
                "clinician_turn_length_mean": -215.300,
                "clinician_turn_length_sd": -175.863,
                "syllable_rate_hz": 0.3,
            },
        })
    elif name == "strong":
        cfg = CohortConfig(effects={
            "depressed": {
                "patient_floor_control_pct": 12.0,
                "patient_consecutive_turns_mean": 0.4,
                "patient_switch_offset_mean": 500.0,
                "clinician_hold_offset_mean": 150.0,
                "clinician_turn_length_mean": -600.0,
                "syllable_rate_hz": -1.2,
            },
            "manic": {
                "patient_floor_control_pct": 15.0,
                "patient_turn_length_mean": 1500.0,
                "patient_switch_offset_mean": -300.0,
                "clinician_turn_length_mean": -700.0,
                "syllable_rate_hz": 1.2,
            },
        })
    else:
        raise ValueError(f"unknown preset {name!r}")
    for k, v in overrides.items():
        if not hasattr(cfg, k):
            raise ValueError(f"unknown CohortConfig field {k!r}")
        setattr(cfg, k, copy.deepcopy(v))
    cfg.__post_init__()
    return cfg


# --------------------------------------------------------------------------
# generative parameter solving


def _truncnorm_mean(mu: float, sigma: float, lo: float, hi: float) -> float:
    a, b = (lo - mu) / sigma, (hi - mu) / sigma
    z = ndtr(b) - ndtr(a)
    if z < 1e-300:
        return lo if mu < lo else hi
    pdf = lambda t: np.exp(-0.5 * t * t) / np.sqrt(2 * np.pi)
    return float(mu + sigma * (pdf(a) - pdf(b)) / z)


def _solve_truncnorm_loc(target: float, sigma: float, lo: float, hi: float) -> float:
    """Location of the parent normal whose [lo, hi] truncation has mean ``target``."""
    span = hi - lo if np.isfinite(hi) else 10 * sigma
    t = min(max(target, lo + 1e-6 * span), (hi - 1e-6 * span) if np.isfinite(hi) else target)
    f = lambda mu: _truncnorm_mean(mu, sigma, lo, hi) - t
    a, b = lo - 20 * sigma - span, (hi if np.isfinite(hi) else t) + 20 * sigma + span
    return brentq(f, a, b, xtol=1e-9)


def _mills(alpha):
    """phi(alpha) / (1 - Phi(alpha)), stable for large alpha."""
    return np.sqrt(2.0 / np.pi) / erfcx(alpha / np.sqrt(2.0))


def _lower_truncnorm_moments(alpha: float) -> tuple[float, float]:
    """Mean and SD of a standard normal truncated below at ``alpha``, relative to its lower edge."""
    lam = _mills(alpha)
    return lam - alpha, np.sqrt(max(1.0 + alpha * lam - lam * lam, 0.0))


def _solve_lower_truncnorm(mean: float, sd: float) -> tuple[float, float]:
    """(loc, scale) of a normal whose truncation to [0, inf) has the given mean and SD.

    The coefficient of variation of such a distribution lies in (0, 1), so
    ``sd / mean`` is clipped to [0.01, 0.98].
    """
    cv = min(max(sd / mean, 0.01), 0.98)
    f = lambda a: (lambda m, s: s / m)(*_lower_truncnorm_moments(a)) - cv
    alpha = brentq(f, -60.0, 60.0, xtol=1e-12)
    m, _ = _lower_truncnorm_moments(alpha)
    scale = mean / m
    return -alpha * scale, scale


def _draw_lower_truncnorm(rng, loc, scale, size):
    alpha = -loc / scale
    q = ndtr(-alpha) * (1.0 - rng.random(size))  # upper-tail mass, never 0 or above Q(alpha)
    return np.maximum(loc + scale * -ndtri(q), 0.0)


def _draw_truncnorm(rng, mu, sigma, lo, hi, size):
    a, b = ndtr((lo - mu) / sigma), ndtr((hi - mu) / sigma)
    u = a + (b - a) * rng.random(size)
    return np.clip(mu + sigma * ndtri(u), lo, hi)


@dataclass
class _SpeakerParams:
    turn_mean: float
    turn_sd: float
    hold_loc: float
    hold_mean: float
    run_mean: float
    switch_loc: float
    switch_scale: float
    hold_rate_hz: float

    # quadrature over turn length (equiprobable): nodes (ms), weights, and the hold-count cap at each node
    length_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    length_weights: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    hold_caps: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def speech_per_run(self) -> float:
        """Expected speech (ms) per run, with the per-turn hold count capped as in sampling."""
        mu = self.hold_rate_hz * self.length_nodes / 1000.0
        caps = self.hold_caps
        # P(N > k) is ~1 below and ~0 above a +-12 SD window around the mean
        half = 12.0 * np.sqrt(mu) + 20.0
        lo = np.minimum(np.maximum(np.floor(mu - half), 0.0), caps)
        hi = np.minimum(np.ceil(mu + half), caps)
        width = int((hi - lo).max()) if mu.size else 0
        k = lo[:, None] + np.arange(width)[None, :]
        tail = pdtrc(k, mu[:, None]) * (k < hi[:, None])
        holds = float(self.length_weights @ (lo + tail.sum(axis=1)))
        return self.run_mean * (self.turn_mean - self.hold_mean * holds)


def implied_floor_control(theta: dict[str, float], cfg: CohortConfig) -> float:
    """Expected patient speech share (%) at the configured hold rates."""
    a = _speaker_params(theta, "patient", cfg).speech_per_run
    b = _speaker_params(theta, "clinician", cfg).speech_per_run
    return 100.0 * a / (a + b)


# equiprobable standard-normal quantiles: the hold cap makes the integrand a
# step function, where a midpoint rule in probability beats Gauss-Hermite
_N_NODES = 128
_LENGTH_QUANTILES = (ndtri((np.arange(_N_NODES) + 0.5) / _N_NODES), np.full(_N_NODES, 1.0 / _N_NODES))


def _speaker_params(theta: dict[str, float], who: str, cfg: CohortConfig) -> _SpeakerParams:
    hold_hi = cfg.merge_gap_ms - cfg.guard_ms
    hold_mean = float(np.clip(theta[f"{who}_hold_offset_mean"], cfg.hold_min_ms + 1, hold_hi - 1))
    switch_loc, switch_scale = _solve_lower_truncnorm(max(theta[f"{who}_switch_offset_mean"], 1.0),
                                                      max(theta[f"{who}_switch_offset_sd"], 1.0))
    turn_mean = max(theta[f"{who}_turn_length_mean"], cfg.min_turn_ms + 10.0)
    turn_sd = max(theta[f"{who}_turn_length_sd"], 1.0)
    m = turn_mean - cfg.min_turn_ms
    s2 = np.log1p((turn_sd / m) ** 2)
    z, w = _LENGTH_QUANTILES
    nodes = cfg.min_turn_ms + np.exp(np.log(m) - 0.5 * s2 + np.sqrt(s2) * z)
    caps = np.maximum((nodes - cfg.min_piece_ms) // (hold_hi + cfg.min_piece_ms), 0)
    return _SpeakerParams(
        turn_mean=turn_mean,
        turn_sd=turn_sd,
        hold_loc=_solve_truncnorm_loc(hold_mean, cfg.hold_sd_ms, cfg.hold_min_ms, hold_hi),
        hold_mean=hold_mean,
        run_mean=max(theta[f"{who}_consecutive_turns_mean"], 1.0),
        switch_loc=switch_loc,
        switch_scale=switch_scale,
        hold_rate_hz=cfg.hold_rate_hz[who],
        length_nodes=nodes,
        length_weights=w,
        hold_caps=caps,
    )


def _fit_floor_control(target_pct: float, pat: _SpeakerParams, cli: _SpeakerParams,
                       max_hold_frac: float = 0.6) -> bool:
    """Scale the two hold rates in opposite directions until the expected patient share hits the target.

    Rates become ``clinician * e^s`` and ``patient * e^-s``, each capped so
    that holds take at most ``max_hold_frac`` of a turn. Both stay
    positive, so neither speaker loses its hold pauses. Targets outside
    the reachable range are clamped; returns False in that case.
    """
    base_p, base_c = pat.hold_rate_hz, cli.hold_rate_hz
    cap_p = max_hold_frac * 1000.0 / pat.hold_mean
    cap_c = max_hold_frac * 1000.0 / cli.hold_mean

    def share(sc):
        pat.hold_rate_hz = min(base_p * np.exp(-sc), cap_p)
        cli.hold_rate_hz = min(base_c * np.exp(sc), cap_c)
        a, b = pat.speech_per_run, cli.speech_per_run
        return 100.0 * a / (a + b)

    lo, hi = -3.0, 3.0
    f_lo, f_hi = share(lo), share(hi)
    if target_pct <= f_lo or target_pct >= f_hi:
        log.debug("floor-control target %.2f%% outside reachable [%.2f, %.2f]; clamped", target_pct, f_lo, f_hi)
        share(lo if target_pct <= f_lo else hi)
        return False
    share(brentq(lambda sc: share(sc) - target_pct, lo, hi, xtol=1e-10))
    return True


# --------------------------------------------------------------------------
# timelines


def _lognormal(rng, mean, sd, size=None):
    s2 = np.log1p((sd / mean) ** 2)
    return rng.lognormal(np.log(mean) - 0.5 * s2, np.sqrt(s2), size)


def _make_turn(rng, t0: float, sp: _SpeakerParams, cfg: CohortConfig) -> list[tuple[float, float]]:
    L = cfg.min_turn_ms + _lognormal(rng, sp.turn_mean - cfg.min_turn_ms, sp.turn_sd)
    hold_hi = cfg.merge_gap_ms - cfg.guard_ms
    n_holds = rng.poisson(sp.hold_rate_hz * L / 1000.0)
    # cap by what fits with the longest possible holds, independent of the drawn durations
    n_holds = min(n_holds, int((L - cfg.min_piece_ms) // (hold_hi + cfg.min_piece_ms)))
    holds = _draw_truncnorm(rng, sp.hold_loc, cfg.hold_sd_ms, cfg.hold_min_ms, hold_hi, n_holds)
    speech = L - holds.sum()
    k = n_holds + 1
    pieces = cfg.min_piece_ms + (speech - k * cfg.min_piece_ms) * rng.dirichlet(np.ones(k))
    segs = []
    t = t0
    for i in range(k):
        segs.append((t, t + pieces[i]))
        t += pieces[i]
        if i < n_holds:
            t += holds[i]
    return segs


def _round_segments(segs):
    out = []
    for a, b in segs:
        a, b = int(round(a)), int(round(b))
        if out and a <= out[-1][1]:
            a = out[-1][1] + 1
        if b <= a:
            b = a + 1
        out.append((a, b))
    return out


def simulate_call(rng: np.random.Generator, theta: dict[str, float], cfg: CohortConfig,
                  call_id: str) -> tuple[ConversationTimeline, dict]:
    """One timeline from feature-level parameters ``theta``."""
    pat = _speaker_params(theta, "patient", cfg)
    cli = _speaker_params(theta, "clinician", cfg)
    fc_reached = _fit_floor_control(theta["patient_floor_control_pct"], pat, cli)
    params = {Speaker.PATIENT: pat, Speaker.CLINICIAN: cli}
    duration_ms = float(round(max(theta["call_duration_min"], cfg.min_call_min) * 60000.0))
    limit = duration_ms - 200.0

    turns = []
    spk = Speaker.CLINICIAN
    t = float(rng.uniform(300.0, 1500.0))
    done = False
    while not done:
        sp = params[spk]
        run = rng.geometric(1.0 / sp.run_mean)
        for r in range(run):
            if r > 0:
                t = turns[-1][1][-1][1] + cfg.merge_gap_ms + cfg.guard_ms + rng.exponential(cfg.run_pause_mean_ms)
            segs = _make_turn(rng, t, sp, cfg)
            if segs[-1][1] > limit:
                done = True
                break
            turns.append((spk, segs))
        if done:
            break
        spk = spk.other
        sp = params[spk]
        offset = _draw_lower_truncnorm(rng, sp.switch_loc, sp.switch_scale, 1)[0]
        t = turns[-1][1][-1][1] + offset if turns else t

    built = tuple(
        Turn(s, tuple(SpeechSegment(a, b) for a, b in _round_segments(segs))) for s, segs in turns
    )
    # integer rounding can at worst make adjacent turns touch; never overlap
    fixed = []
    for tr in built:
        if fixed and tr.start_ms < fixed[-1].end_ms:
            shift = fixed[-1].end_ms - tr.start_ms
            tr = Turn(tr.speaker, tuple(SpeechSegment(s.start_ms + shift, s.end_ms + shift) for s in tr.segments))
        fixed.append(tr)
    timeline = ConversationTimeline(call_id, tuple(fixed), duration_ms)
    realized = {
        "call_duration_ms": duration_ms,
        "floor_control_clamped": not fc_reached,
        "patient_hold_rate_hz": pat.hold_rate_hz,
        "clinician_hold_rate_hz": cli.hold_rate_hz,
        "patient_hold_loc_ms": pat.hold_loc,
        "clinician_hold_loc_ms": cli.hold_loc,
        "patient_switch_loc_ms": pat.switch_loc,
        "clinician_switch_loc_ms": cli.switch_loc,
        "patient_switch_scale_ms": pat.switch_scale,
        "clinician_switch_scale_ms": cli.switch_scale,
    }
    return timeline, realized


# --------------------------------------------------------------------------
# cohorts


@dataclass
class SimulatedCohort:
    config: CohortConfig
    calls: pd.DataFrame  # call metadata, one row per call
    timelines: dict[str, ConversationTimeline]
    ground_truth: pd.DataFrame  # per-call feature-level targets and realized parameters
    patient_intercepts: pd.DataFrame
    clinician_intercepts: pd.DataFrame

    def female_clinicians(self) -> list[str]:
        c = self.calls.drop_duplicates("clinician_id")
        return sorted(c.loc[c["clinician_gender"] == "F", "clinician_id"].tolist())


def _scores(rng, episode: EpisodeLabel) -> tuple[int, int]:
    low = lambda: int(rng.integers(0, 7))
    high = lambda: int(rng.integers(10, 36))
    if episode is EpisodeLabel.EUTHYMIC:
        return low(), low()
    if episode is EpisodeLabel.DEPRESSED:
        return high(), low()
    if episode is EpisodeLabel.MANIC:
        return low(), high()
    # excluded: moderate symptoms on one or both scales
    return int(rng.integers(7, 10)), int(rng.integers(7, 10))


def _allocate(mix: dict[str, float], n: int) -> list[str]:
    """Largest-remainder split of ``n`` calls across the episode mix."""
    keys = [k for k in ("euthymic", "depressed", "manic", "excluded") if mix.get(k, 0) > 0]
    w = np.array([mix[k] for k in keys]) / sum(mix[k] for k in keys)
    raw = w * n
    counts = np.floor(raw).astype(int)
    rest = n - counts.sum()
    for i in np.argsort(-(raw - counts), kind="stable")[:rest]:
        counts[i] += 1
    return [k for k, c in zip(keys, counts) for _ in range(c)]


def _intercept_table(rng, ids, sds: dict[str, float]) -> pd.DataFrame:
    cols = {k: rng.normal(0.0, sd, len(ids)) if sd > 0 else np.zeros(len(ids)) for k, sd in sorted(sds.items())}
    return pd.DataFrame(cols, index=pd.Index(ids, name="id"))


def simulate_cohort(cfg: CohortConfig) -> SimulatedCohort:
    """Generate a cohort deterministically from ``cfg.seed``."""
    root = np.random.SeedSequence(cfg.seed)
    entity_rng = np.random.default_rng(root.spawn(1)[0])

    patients = [f"P{i + 1:03d}" for i in range(cfg.n_patients)]
    clinicians = [f"C{i + 1:02d}" for i in range(cfg.n_clinicians)]
    n_fem_c = cfg.n_clinicians if cfg.n_female_clinicians is None else cfg.n_female_clinicians
    clin_gender = {c: ("F" if i < n_fem_c else "M") for i, c in enumerate(clinicians)}
    n_fem = int(round(cfg.female_fraction * cfg.n_patients))
    genders = np.array(["F"] * n_fem + ["M"] * (cfg.n_patients - n_fem))
    entity_rng.shuffle(genders)
    pat_gender = dict(zip(patients, genders.tolist()))
    pat_u = _intercept_table(entity_rng, patients, cfg.patient_sd)
    cli_u = _intercept_table(entity_rng, clinicians, cfg.clinician_sd)

    plan = []
    for p in patients:
        episodes = _allocate(cfg.episode_mix, cfg.calls_per_patient)
        entity_rng.shuffle(episodes)
        for k, ep in enumerate(episodes):
            plan.append((p, clinicians[int(entity_rng.integers(cfg.n_clinicians))], ep, k))

    call_seeds = root.spawn(len(plan) + 1)[1:]
    implied_base = implied_floor_control(cfg.baseline, cfg)

    rows, truth, timelines = [], [], {}
    for (p, c, ep, k), ss in zip(plan, call_seeds):
        rng = np.random.default_rng(ss)
        call_id = f"{p}_{k + 1:03d}"
        label = _EPISODE_KEYS[ep]
        male = pat_gender[p] == "M"
        theta = dict(cfg.baseline)
        theta["patient_floor_control_pct"] = implied_base
        shifts = [cfg.effects.get(ep, {})]
        if male:
            shifts += [cfg.gender_effects, cfg.interaction_effects.get(ep, {})]
        shifts += [pat_u.loc[p].to_dict(), cli_u.loc[c].to_dict()]
        for s in shifts:
            for key, v in s.items():
                theta[key] = theta.get(key, 0.0) + v
        for key, sd in cfg.call_sd.items():
            if sd > 0:
                theta[key] += rng.normal(0.0, sd)
        hamd, ymrs = _scores(rng, label)
        timeline, realized = simulate_call(rng, theta, cfg, call_id)
        timelines[call_id] = timeline
        rows.append({
            "call_id": call_id, "patient_id": p, "clinician_id": c,
            "patient_gender": pat_gender[p], "clinician_gender": clin_gender[c],
            "hamd": hamd, "ymrs": ymrs, "episode": label.value,
        })
        truth.append({"call_id": call_id, **{f"target_{k2}": v for k2, v in sorted(theta.items())}, **realized})
    calls = pd.DataFrame(rows)
    return SimulatedCohort(cfg, calls, timelines, pd.DataFrame(truth), pat_u, cli_u)


# --------------------------------------------------------------------------
# audio rendering


@dataclass
class RenderConfig:
    sample_rate: int = 8000
    snr_db: float = 30.0
    offset_samples: int | None = None  # None: drawn uniformly within +-max_offset_s
    max_offset_s: float = 2.0
    patient_band_hz: tuple[float, float] = (300.0, 1800.0)
    clinician_band_hz: tuple[float, float] = (900.0, 3400.0)
    landline_patient_gain: float = 0.6
    am_depth: float = 0.7
    syllable_rate_hz: float = 4.0
    rate_jitter: float = 0.15
    seed: int = 0


@dataclass
class RenderedCall:
    patient: AudioSignal
    landline: AudioSignal
    true_offset_samples: int


def _segment_mask(segments, n: int, sr: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for a, b in segments:
        i, j = int(round(a * sr / 1000.0)), int(round(b * sr / 1000.0))
        mask[max(i, 0):min(j, n)] = True
    return mask


def render_speaker_track(segments, n: int, sr: int, band_hz, rng: np.random.Generator,
                         syllable_rate_hz: float = 4.0, am_depth: float = 0.7,
                         rate_jitter: float = 0.15) -> np.ndarray:
    """Band-limited noise gated to ``segments`` and amplitude-modulated at a syllabic rate.

    The modulation frequency wanders by ``rate_jitter`` (relative SD)
    around ``syllable_rate_hz``. The track has unit RMS over its active
    samples, or is all zero if there is no speech.
    """
    mask = _segment_mask(segments, n, sr)
    if not mask.any():
        return np.zeros(n)
    hi = min(band_hz[1], 0.45 * sr)
    sos = butter(4, [band_hz[0], hi], btype="bandpass", fs=sr, output="sos")
    carrier = sosfilt(sos, rng.standard_normal(n))
    # slowly varying rate: white noise smoothed to ~1 Hz
    lp = butter(2, 1.0, fs=sr, output="sos")
    wander = sosfilt(lp, rng.standard_normal(n))
    wander /= max(np.std(wander), 1e-12)
    rate = np.maximum(syllable_rate_hz * (1.0 + rate_jitter * wander), 0.5)
    phase = 2 * np.pi * np.cumsum(rate) / sr + rng.uniform(0, 2 * np.pi)
    env = 1.0 - am_depth * 0.5 * (1.0 - np.cos(phase))
    track = carrier * env * mask
    return track / np.sqrt(np.mean(track[mask] ** 2))


def render_audio(timeline: ConversationTimeline, cfg: RenderConfig | None = None,
                 syllable_rate_hz: float | None = None) -> RenderedCall:
    """Two-channel rendering of a timeline.

    The landline channel runs on the timeline clock and carries both
    speakers; the patient channel carries only the patient and satisfies
    ``landline[n] ~ patient[n - true_offset_samples]``. White noise is
    added to each channel at ``snr_db`` relative to its speech power.
    """
    cfg = cfg or RenderConfig()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _stable_hash(timeline.call_id)]))
    sr = cfg.sample_rate
    n = int(round(timeline.call_duration_ms * sr / 1000.0))
    rate = cfg.syllable_rate_hz if syllable_rate_hz is None else syllable_rate_hz
    segs = {s: [(g.start_ms, g.end_ms) for t in timeline.turns_of(s) for g in t.segments] for s in Speaker}
    p_track = render_speaker_track(segs[Speaker.PATIENT], n, sr, cfg.patient_band_hz, rng, rate, cfg.am_depth,
                                   cfg.rate_jitter)
    c_track = render_speaker_track(segs[Speaker.CLINICIAN], n, sr, cfg.clinician_band_hz, rng, 4.0, cfg.am_depth,
                                   cfg.rate_jitter)
    if cfg.offset_samples is None:
        lim = int(round(cfg.max_offset_s * sr))
        k = int(rng.integers(-lim, lim + 1))
    else:
        k = int(cfg.offset_samples)
    landline = cfg.landline_patient_gain * p_track + c_track
    cell = np.concatenate([np.zeros(max(-k, 0)), p_track[max(k, 0):]])

    def add_noise(x, ref):
        active = ref != 0
        if not active.any():
            return x
        power = np.mean(ref[active] ** 2)
        return x + rng.standard_normal(x.size) * np.sqrt(power / 10 ** (cfg.snr_db / 10.0))

    landline = add_noise(landline, landline)
    cell = add_noise(cell, cell)
    peak = max(np.max(np.abs(landline)), np.max(np.abs(cell)), 1e-12)
    scale = 0.5 / peak if peak > 0.5 else 1.0
    return RenderedCall(AudioSignal(cell * scale, sr), AudioSignal(landline * scale, sr), k)


def _stable_hash(s: str) -> int:
    import zlib

    return zlib.crc32(s.encode("utf-8"))


# --------------------------------------------------------------------------
# feature tables


def _rhythm_row(args):
    from .rhythm import rhythm_features

    timeline, rate, rcfg, rhythm_cfg, excerpt_ms = args
    rng = np.random.default_rng(np.random.SeedSequence([rcfg.seed, _stable_hash(timeline.call_id), 1]))
    sr = rcfg.sample_rate
    n = int(round(min(excerpt_ms, timeline.call_duration_ms) * sr / 1000.0))
    segs = [(g.start_ms, g.end_ms) for t in timeline.turns_of(Speaker.PATIENT) for g in t.segments]
    x = render_speaker_track(segs, n, sr, rcfg.patient_band_hz, rng, rate, rcfg.am_depth, rcfg.rate_jitter)
    x = x + rng.standard_normal(n) * 10 ** (-rcfg.snr_db / 20.0)
    return rhythm_features(AudioSignal(x, sr), rhythm_cfg, timeline.call_id).as_dict()


def feature_table(cohort: SimulatedCohort, rhythm: bool = False, render_cfg: RenderConfig | None = None,
                  rhythm_cfg=None, excerpt_s: float = 40.0, jobs: int = 1) -> pd.DataFrame:
    """Call metadata plus dialogue features (and rhythm features if asked).

    Dialogue features come straight from the simulated timelines. Rhythm
    features come from the patient channel rendered over the first
    ``excerpt_s`` seconds, modulated at each call's syllable rate.
    """
    from .dialogue import summarize

    meta = cohort.calls[["call_id", "patient_id", "clinician_id", "patient_gender", "hamd", "ymrs"]]
    dia = pd.DataFrame([summarize(cohort.timelines[c]).values for c in meta["call_id"]])
    parts = [meta.reset_index(drop=True), dia]
    if rhythm:
        rcfg = render_cfg or RenderConfig(seed=cohort.config.seed, rate_jitter=cohort.config.rhythm_jitter)
        rates = cohort.ground_truth.set_index("call_id")["target_syllable_rate_hz"]
        args = [(cohort.timelines[c], float(rates[c]), rcfg, rhythm_cfg, excerpt_s * 1000.0) for c in meta["call_id"]]
        if jobs > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=jobs) as ex:
                rows = list(ex.map(_rhythm_row, args, chunksize=8))
        else:
            rows = [_rhythm_row(a) for a in args]
        parts.append(pd.DataFrame(rows))
    return pd.concat(parts, axis=1)
