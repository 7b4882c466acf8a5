"""Synthetic episode generator with machine-checkable ground truth.

Episodes stream lab-style scalar events for a catalog of two signal features
(creatinine, urine_rate) and stationary distractors. A configurable fraction
of episodes deteriorate: creatinine ramps up and/or urine rate drops below a
sustained-low threshold after a random onset. Noise is clipped so clean
episodes can never satisfy the injury criterion, and extra measurements are
scheduled through the deterioration so positive episodes always do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .events import Event, EventSequence, FeatureCatalog

CREATININE = "creatinine"
URINE_RATE = "urine_rate"

HOUR = 3600.0

# Injury criterion constants.
CREATININE_RISE = 0.3        # mg/dl within the lookback
CREATININE_LOOKBACK_H = 48.0
URINE_THRESHOLD = 25.0       # ml/h
URINE_SUSTAIN_H = 6.0

# Deterioration shape. The extra measurements at onset+1h and onset+7h make
# the injury criterion provably reachable by onset+7h: the creatinine rise
# between them is at least ramp*6 - 2*clip >= 0.3, and the urine run spans 6 h.
_CR_RAMP_PER_HOUR = 0.15     # mg/dl per hour after onset
_CR_RAMP_CAP = 1.8
_CR_EXTRA_OFFSETS_H = (1.0, 7.0)
_URINE_LOW = 15.0
_URINE_LOW_SD = 3.0
_URINE_LOW_CLIP = 8.0
_URINE_EXTRA_OFFSETS_H = (1.0, 7.0)


@dataclass(frozen=True)
class FeatureSpec:
    """Sampling-rate and noise parameters of one synthetic feature."""

    name: str
    baseline: float
    noise_sd: float
    noise_clip: float  # hard bound on |noise|, keeps clean episodes clean
    mean_gap_hours: float

    def __post_init__(self):
        if self.mean_gap_hours <= 0:
            raise ValueError("mean_gap_hours must be positive")


def default_features() -> tuple[FeatureSpec, ...]:
    return (
        FeatureSpec(CREATININE, baseline=1.0, noise_sd=0.04, noise_clip=0.1, mean_gap_hours=5.0),
        FeatureSpec(URINE_RATE, baseline=60.0, noise_sd=8.0, noise_clip=20.0, mean_gap_hours=3.0),
        FeatureSpec("heart_rate", 80.0, 8.0, 24.0, 1.5),
        FeatureSpec("resp_rate", 16.0, 2.0, 6.0, 2.0),
        FeatureSpec("temperature", 37.0, 0.3, 0.9, 2.5),
        FeatureSpec("sodium", 140.0, 2.0, 6.0, 3.0),
        FeatureSpec("potassium", 4.1, 0.25, 0.7, 3.0),
        FeatureSpec("glucose", 110.0, 15.0, 40.0, 2.0),
        FeatureSpec("hemoglobin", 11.0, 0.7, 2.0, 3.5),
        FeatureSpec("platelets", 220.0, 25.0, 70.0, 3.5),
    )


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_episodes: int = 100
    deterioration_fraction: float = 0.5
    duration_hours: float = 36.0
    onset_low_hours: float = 12.0
    onset_high_hours: float = 22.0
    features: tuple[FeatureSpec, ...] = field(default_factory=default_features)

    def __post_init__(self):
        if not 0.0 <= self.deterioration_fraction <= 1.0:
            raise ValueError("deterioration_fraction must be in [0, 1]")
        if self.onset_high_hours >= self.duration_hours:
            raise ValueError("onset must fall inside the episode duration")
        names = [f.name for f in self.features]
        if CREATININE not in names or URINE_RATE not in names:
            raise ValueError(f"features must include {CREATININE} and {URINE_RATE}")

    def catalog(self) -> FeatureCatalog:
        return FeatureCatalog.from_ids([f.name for f in self.features])


def _clipped_noise(rng: np.random.Generator, sd: float, clip: float, size: int) -> np.ndarray:
    return np.clip(rng.normal(0.0, sd, size=size), -clip, clip)


def _split_for_index(index: int) -> str:
    r = index % 10
    if r == 8:
        return "validation"
    if r == 9:
        return "test"
    return "train"


def generate_patient(config: ScenarioConfig, index: int) -> EventSequence:
    """Deterministic episode for (config.seed, index).

    Deteriorating episodes draw an onset uniform in the configured range and a
    mechanism among creatinine-only, urine-only, or both; the affected features
    get extra measurements through the deterioration so the injury criterion is
    guaranteed to fire. The episode outcome is the deterioration flag.
    """
    if not 0 <= index < config.n_episodes:
        raise ValueError(f"index must be in [0, {config.n_episodes})")
    rng = np.random.default_rng([config.seed, index])
    deteriorated = bool(rng.random() < config.deterioration_fraction)
    onset_h = None
    cr_hit = urine_hit = False
    if deteriorated:
        onset_h = float(rng.uniform(config.onset_low_hours, config.onset_high_hours))
        mech = int(rng.integers(3))  # 0 creatinine, 1 urine, 2 both
        cr_hit = mech in (0, 2)
        urine_hit = mech in (1, 2)

    records: list[tuple[float, str, float]] = []
    for spec in config.features:
        times = []
        t = float(rng.exponential(spec.mean_gap_hours))
        while t <= config.duration_hours:
            times.append(t)
            t += float(rng.exponential(spec.mean_gap_hours))
        if deteriorated:
            if spec.name == CREATININE and cr_hit:
                times.extend(onset_h + o for o in _CR_EXTRA_OFFSETS_H
                             if onset_h + o <= config.duration_hours)
            if spec.name == URINE_RATE and urine_hit:
                times.extend(onset_h + o for o in _URINE_EXTRA_OFFSETS_H
                             if onset_h + o <= config.duration_hours)
        times.sort()
        n = len(times)
        noise = _clipped_noise(rng, spec.noise_sd, spec.noise_clip, n)
        values = spec.baseline + noise
        for j, th in enumerate(times):
            v = float(values[j])
            if deteriorated and th >= onset_h:
                if spec.name == CREATININE and cr_hit:
                    v += min(_CR_RAMP_PER_HOUR * (th - onset_h), _CR_RAMP_CAP)
                elif spec.name == URINE_RATE and urine_hit:
                    low_noise = float(np.clip(noise[j] * (_URINE_LOW_SD / spec.noise_sd),
                                              -_URINE_LOW_CLIP, _URINE_LOW_CLIP))
                    v = _URINE_LOW + low_noise
            records.append((th * HOUR, spec.name, v))

    order = {spec.name: i for i, spec in enumerate(config.features)}
    records.sort(key=lambda r: (r[0], order[r[1]]))
    events = tuple(Event(time=t, feature=f, value=v) for t, f, v in records)
    return EventSequence(
        episode_id=f"ep{index:05d}",
        events=events,
        outcome=int(deteriorated),
        split=_split_for_index(index),
    )


def generate_corpus(config: ScenarioConfig) -> list[EventSequence]:
    return [generate_patient(config, i) for i in range(config.n_episodes)]


def episode_metadata(config: ScenarioConfig, index: int) -> dict:
    """Deterioration flag, onset, and mechanism of one episode.

    Replays the leading draws of generate_patient's stream, so it agrees with
    the generated sequence without regenerating it.
    """
    rng = np.random.default_rng([config.seed, index])
    deteriorated = bool(rng.random() < config.deterioration_fraction)
    onset_s = None
    mechanism = None
    if deteriorated:
        onset_s = float(rng.uniform(config.onset_low_hours, config.onset_high_hours)) * HOUR
        mechanism = ("creatinine", "urine", "both")[int(rng.integers(3))]
    return {"deteriorated": deteriorated, "onset_s": onset_s, "mechanism": mechanism}


def aki_label(seq: EventSequence, t: float) -> bool:
    """Injury state at time t (seconds), from raw values.

    True when creatinine shows a time-ordered rise of at least 0.3 mg/dl within
    the past 48 h, or when urine rate has been below 25 ml/h for at least 6 h:
    the run of consecutive sub-threshold urine observations ending at the last
    observation at or before t must have two or more members and start at least
    6 h before t, with no at-threshold observation inside it.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    lo = t - CREATININE_LOOKBACK_H * HOUR
    running_min = math.inf
    for e in seq.events:
        if e.feature != CREATININE or e.time > t:
            continue
        if e.time <= lo:
            continue
        v = e.raw_value
        if v - running_min >= CREATININE_RISE:
            return True
        running_min = min(running_min, v)

    run: list[float] = []  # times of the trailing sub-threshold run
    for e in seq.events:
        if e.feature != URINE_RATE or e.time > t:
            continue
        if e.raw_value < URINE_THRESHOLD:
            run.append(e.time)
        else:
            run = []
    if len(run) >= 2 and t - run[0] >= URINE_SUSTAIN_H * HOUR - 1e-9:
        return True
    return False


def first_positive_checkpoint(
    seq: EventSequence, interval_hours: float = 3.0
) -> float | None:
    """Earliest multiple of the checkpoint interval at which the label is
    positive, scanning to the last event; None when never positive."""
    if not seq.events:
        return None
    t_last = seq.events[-1].time
    k = 1
    while True:
        c = k * interval_hours * HOUR
        if c > t_last + interval_hours * HOUR:
            return None
        if aki_label(seq, c):
            return c
        k += 1


def ground_truth_set(seq: EventSequence, t0: int, t1: int) -> set[tuple[int, str]]:
    """All steps in (t0, t1] carrying a creatinine or urine-rate value.

    Steps are 1-based and align one-to-one with the episode's events. An empty
    set means the window has no correct answer and must be excluded from
    precision aggregation.
    """
    if not 0 <= t0 <= t1 <= len(seq.events):
        raise ValueError(f"invalid window ({t0}, {t1}] for {len(seq.events)} events")
    return {
        (step, seq.events[step - 1].feature)
        for step in range(t0 + 1, t1 + 1)
        if seq.events[step - 1].feature in (CREATININE, URINE_RATE)
    }
