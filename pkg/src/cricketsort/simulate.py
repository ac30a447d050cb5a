"""Discrete-event simulation of crickets crossing the camera zone.

Agents move down the bridge at constant individual speeds. Every frame
period, each agent inside the zone may produce a detection (a stochastic
stand-in for the detector: dropout, label flips, background false
positives); the frames feed the same controller used for log replay, whose
commands drive a finite-latency arm. When an agent's leading edge reaches
the sort point, the arm's settled position decides its bin; an arm still in
neutral means the animal is returned with some probability, otherwise it
wanders into a random bin. Runs are bit-reproducible per seed.
"""

from __future__ import annotations

import heapq
import math
import statistics
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from random import Random
from typing import Iterable, Sequence

from .boxes import (
    DEFAULT_GEOMETRY,
    Detection,
    FrameObservations,
    ImageGeometry,
    NormBBox,
    SexLabel,
)
from .controller import ArmCommand, ControllerConfig, SortingController
from .errors import ContentError
from .metrics import DEFAULT_ZONE_MM, SortConfusion, sorting_accuracy

BODY_LENGTH_MM = 20.0
BODY_WIDTH_MM = 8.0


@lru_cache(maxsize=None)
def base_speed_table() -> tuple[float, ...]:
    """Empirical traversal speeds (mm/s) resampled by the spawn process."""
    from .fixtures import fixture_text
    from .io import read_speeds_csv

    return tuple(r.speed_mm_s for r in read_speeds_csv(fixture_text("speeds.csv")))


@dataclass(frozen=True)
class DetectorModel:
    """Per-frame behaviour of the stand-in detector."""

    p_detect: float = 0.97
    p_correct_label: float = 0.975
    bg_fp_rate: float = 0.005
    conf_min: float = 0.55
    conf_max: float = 0.99

    def __post_init__(self):
        for name in ("p_detect", "p_correct_label", "bg_fp_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if not 0.0 <= self.conf_min <= self.conf_max <= 1.0:
            raise ValueError(
                f"confidence bounds must satisfy 0 <= min <= max <= 1, "
                f"got [{self.conf_min}, {self.conf_max}]"
            )

    @classmethod
    def noiseless(cls) -> "DetectorModel":
        return cls(p_detect=1.0, p_correct_label=1.0, bg_fp_rate=0.0)


@dataclass(frozen=True)
class ArmModel:
    """The physical arm: travel time between any two positions."""

    travel_time_ms: float = 250.0
    initial_position: ArmCommand = ArmCommand.NEUTRAL

    def __post_init__(self):
        if self.travel_time_ms < 0:
            raise ValueError(f"travel_time_ms must be >= 0, got {self.travel_time_ms}")


class _ArmState:
    """Arm kinematics: a command starts a move that settles travel_time later.

    While in transit the arm still deflects per its last settled position; a
    preempting command restarts the travel clock toward the new target.
    """

    def __init__(self, model: ArmModel):
        self._travel = model.travel_time_ms
        self._settled = model.initial_position
        self._target = model.initial_position
        self._settle_time = -math.inf

    def _advance(self, t_ms: float) -> None:
        if t_ms >= self._settle_time:
            self._settled = self._target

    def command(self, t_ms: float, target: ArmCommand) -> None:
        self._advance(t_ms)
        self._target = target
        self._settle_time = t_ms + self._travel

    def position_at(self, t_ms: float) -> ArmCommand:
        self._advance(t_ms)
        return self._settled


@dataclass(frozen=True)
class CricketAgent:
    """One simulated individual."""

    agent_id: int
    sex: SexLabel
    speed_mm_s: float
    spawn_time_ms: float
    body_length_mm: float = BODY_LENGTH_MM
    lateral_frac: float = 0.5

    def __post_init__(self):
        if self.speed_mm_s <= 0:
            raise ValueError(f"speed must be positive, got {self.speed_mm_s}")
        if self.spawn_time_ms < 0:
            raise ValueError(f"spawn time must be >= 0, got {self.spawn_time_ms}")

    def arrival_time_ms(self, zone_mm: float = DEFAULT_ZONE_MM) -> float:
        """When the leading edge reaches the sort point."""
        return self.spawn_time_ms + 1000.0 * zone_mm / self.speed_mm_s


@dataclass(frozen=True)
class StressPreset:
    """Arrival-rate and speed regime for one stress scenario.

    Gaps between spawns are exponential at a rate that may decay with an
    e-folding time ``gap_growth_tau_s`` (None keeps the rate steady).
    Speeds resample the empirical table, scaled and log-jittered.
    """

    name: str
    mean_gap_s: float
    gap_growth_tau_s: float | None
    speed_scale: float
    speed_jitter: float = 0.10

    def __post_init__(self):
        if self.mean_gap_s <= 0:
            raise ValueError(f"mean_gap_s must be positive, got {self.mean_gap_s}")
        if self.gap_growth_tau_s is not None and self.gap_growth_tau_s <= 0:
            raise ValueError(f"gap_growth_tau_s must be positive, got {self.gap_growth_tau_s}")
        if self.speed_scale <= 0:
            raise ValueError(f"speed_scale must be positive, got {self.speed_scale}")
        if self.speed_jitter < 0:
            raise ValueError(f"speed_jitter must be >= 0, got {self.speed_jitter}")

    def rate_at(self, t_s: float) -> float:
        """Instantaneous spawn rate (1/s) at elapsed time t."""
        rate = 1.0 / self.mean_gap_s
        if self.gap_growth_tau_s is not None:
            rate *= math.exp(-t_s / self.gap_growth_tau_s)
        return rate


#: Stress scenarios: forced one-by-one crossings (fast, error-prone) through
#: free crossing at the animals' own pace (slow, accurate, rate tails off).
PRESETS: dict[str, StressPreset] = {
    "e1": StressPreset("e1", mean_gap_s=16.0, gap_growth_tau_s=None, speed_scale=1.9),
    "e2": StressPreset("e2", mean_gap_s=30.0, gap_growth_tau_s=None, speed_scale=1.7),
    "e3": StressPreset("e3", mean_gap_s=80.0, gap_growth_tau_s=None, speed_scale=1.0),
    "e4": StressPreset("e4", mean_gap_s=88.0, gap_growth_tau_s=2400.0, speed_scale=0.9),
}


def default_sim_controller_config(geometry: ImageGeometry = DEFAULT_GEOMETRY) -> ControllerConfig:
    """Canonical controller settings for simulated runs.

    Under the constant-speed kinematics an agent's whole time in view is its
    decision budget, so the vote gate spans the camera zone (threshold equal
    to the image height). Everything else keeps the controller defaults.
    """
    return ControllerConfig(threshold_px=float(geometry.height_px), geometry=geometry)


def spawn_schedule(preset: StressPreset, n: int, rng: Random) -> list[CricketAgent]:
    """Draw n agents: spawn gaps from the preset's (possibly decaying-rate)
    process, near-balanced sexes, speeds resampled from the empirical table."""
    if n <= 0:
        raise ValueError(f"agent count must be positive, got {n}")
    times_s: list[float] = []
    t = 0.0
    for _ in range(n):
        t += rng.expovariate(preset.rate_at(t))
        times_s.append(t)
    sexes = [SexLabel.FEMALE] * (n - n // 2) + [SexLabel.MALE] * (n // 2)
    rng.shuffle(sexes)
    table = base_speed_table()
    speeds = [
        rng.choice(table)
        * preset.speed_scale
        * math.exp(rng.uniform(-preset.speed_jitter, preset.speed_jitter))
        for _ in range(n)
    ]
    laterals = [rng.uniform(0.15, 0.85) for _ in range(n)]
    return [
        CricketAgent(
            agent_id=i + 1,
            sex=sexes[i],
            speed_mm_s=speeds[i],
            spawn_time_ms=times_s[i] * 1000.0,
            lateral_frac=laterals[i],
        )
        for i in range(n)
    ]


class Destination(Enum):
    MALE_BIN = "male"
    FEMALE_BIN = "female"
    RETURNED = "returned"


_BIN_FOR_SEX = {SexLabel.MALE: Destination.MALE_BIN, SexLabel.FEMALE: Destination.FEMALE_BIN}


@dataclass(frozen=True)
class SimOutcome:
    """Where one agent ended up."""

    agent_id: int
    sex: SexLabel
    speed_mm_s: float
    spawn_time_ms: float
    arrival_time_ms: float
    crossing_time_s: float
    destination: Destination
    arm_at_arrival: ArmCommand
    correct: bool

    def to_json_dict(self) -> dict:
        return {
            "id": self.agent_id,
            "sex": str(self.sex),
            "speed_mm_s": self.speed_mm_s,
            "spawn_time_ms": self.spawn_time_ms,
            "arrival_time_ms": self.arrival_time_ms,
            "crossing_time_s": self.crossing_time_s,
            "destination": self.destination.value,
            "arm_at_arrival": self.arm_at_arrival.value,
            "correct": self.correct,
        }


@dataclass(frozen=True)
class SimReport:
    """Everything a run produced."""

    preset: str | None
    n: int
    seed: int | None
    speed_scale: float
    outcomes: tuple[SimOutcome, ...]
    confusion: SortConfusion
    duration_min: float
    command_timeline: tuple[tuple[int, ArmCommand], ...]
    config: dict
    frames: tuple[FrameObservations, ...] | None = None

    @property
    def accuracy(self) -> float:
        return sorting_accuracy(self.confusion)

    def to_json_dict(self) -> dict:
        return {
            "preset": self.preset,
            "n": self.n,
            "seed": self.seed,
            "speed_scale": self.speed_scale,
            "duration_min": self.duration_min,
            "confusion": {
                "male_as_male": self.confusion.male_as_male,
                "male_as_female": self.confusion.male_as_female,
                "female_as_male": self.confusion.female_as_male,
                "female_as_female": self.confusion.female_as_female,
            },
            "sorting_accuracy": (
                sorting_accuracy(self.confusion) if self.confusion.total else None
            ),
            "returned": sum(1 for o in self.outcomes if o.destination is Destination.RETURNED),
            "outcomes": [o.to_json_dict() for o in self.outcomes],
            "command_timeline": [
                {"timestamp_ms": ts, "command": cmd.value} for ts, cmd in self.command_timeline
            ],
            "config": self.config,
        }


def _agent_box(agent: CricketAgent, t_ms: float, zone_mm: float) -> NormBBox:
    lead_mm = agent.speed_mm_s * (t_ms - agent.spawn_time_ms) / 1000.0
    y2 = min(lead_mm / zone_mm, 1.0)
    y1 = max(0.0, (lead_mm - agent.body_length_mm) / zone_mm)
    w = BODY_WIDTH_MM / zone_mm
    return NormBBox(agent.lateral_frac, (y1 + y2) / 2.0, w, y2 - y1)


def _background_fp(rng: Random, detector: DetectorModel) -> Detection:
    label = SexLabel.FEMALE if rng.random() < 0.5 else SexLabel.MALE
    cx = rng.uniform(0.08, 0.92)
    cy = rng.uniform(0.05, 0.95)
    w = rng.uniform(0.06, 0.16)
    h = rng.uniform(0.08, 0.25)
    confidence = rng.uniform(detector.conf_min, detector.conf_max)
    return Detection(NormBBox(cx, cy, w, h), label, confidence)


def _next_fp_index(after: int, rate: float, rng: Random) -> int | None:
    # geometric gap, equivalent to a per-frame Bernoulli draw
    if rate <= 0.0:
        return None
    if rate >= 1.0:
        return after + 1
    gap = 1 + math.floor(math.log(1.0 - rng.random()) / math.log(1.0 - rate))
    return after + gap


def simulate_agents(
    agents: Sequence[CricketAgent],
    detector: DetectorModel,
    arm: ArmModel,
    config: ControllerConfig,
    rng_detect: Random,
    rng_outcome: Random,
    *,
    zone_mm: float = DEFAULT_ZONE_MM,
    p_return: float = 0.5,
    collect_frames: bool = False,
    skip_idle: bool = True,
) -> SimReport:
    """Run the event loop over an explicit agent list.

    ``skip_idle`` fast-forwards stretches where nothing can happen (no agent
    in the zone, controller quiescent, no background false positive due); it
    never changes outcomes or the command timeline. Frame collection forces
    it off so emitted logs contain every tick.
    """
    if not agents:
        raise ValueError("need at least one agent")
    if not 0.0 <= p_return <= 1.0:
        raise ValueError(f"p_return must be in [0, 1], got {p_return}")
    if collect_frames:
        skip_idle = False
    agents = sorted(agents, key=lambda a: (a.spawn_time_ms, a.agent_id))
    period = config.frame_period_ms
    controller = SortingController(config)
    arm_state = _ArmState(arm)

    arrivals = [(agent.arrival_time_ms(zone_mm), idx) for idx, agent in enumerate(agents)]
    last_arrival_ms = max(arr for arr, _ in arrivals)
    heapq.heapify(arrivals)
    pending = deque(range(len(agents)))
    in_zone: list[int] = []
    outcomes: dict[int, SimOutcome] = {}
    timeline: list[tuple[int, ArmCommand]] = []
    frames: list[FrameObservations] | None = [] if collect_frames else None

    def resolve(idx: int, arrival_ms: float) -> None:
        agent = agents[idx]
        position = arm_state.position_at(arrival_ms)
        if position is ArmCommand.FEMALE_SORT:
            destination = Destination.FEMALE_BIN
        elif position is ArmCommand.MALE_SORT:
            destination = Destination.MALE_BIN
        elif rng_outcome.random() < p_return:
            destination = Destination.RETURNED
        else:
            destination = Destination.MALE_BIN if rng_outcome.random() < 0.5 else Destination.FEMALE_BIN
        outcomes[idx] = SimOutcome(
            agent_id=agent.agent_id,
            sex=agent.sex,
            speed_mm_s=agent.speed_mm_s,
            spawn_time_ms=agent.spawn_time_ms,
            arrival_time_ms=arrival_ms,
            crossing_time_s=(arrival_ms - agent.spawn_time_ms) / 1000.0,
            destination=destination,
            arm_at_arrival=position,
            correct=destination is _BIN_FOR_SEX[agent.sex],
        )

    fp_rate = detector.bg_fp_rate
    next_fp = _next_fp_index(-1, fp_rate, rng_detect)
    # frames run a release tail past the last arrival so the controller can
    # settle back to neutral inside the log
    end_index = math.ceil(last_arrival_ms / period) + config.release_clear_frames

    frame_index = 0
    while frame_index <= end_index:
        t = frame_index * period
        while arrivals and arrivals[0][0] < t:
            arrival_ms, idx = heapq.heappop(arrivals)
            resolve(idx, arrival_ms)
        while pending and agents[pending[0]].spawn_time_ms < t:
            idx = pending.popleft()
            if idx not in outcomes:
                in_zone.append(idx)
        if outcomes:
            in_zone = [i for i in in_zone if i not in outcomes]

        if skip_idle and not in_zone and controller.quiescent:
            if not pending and not arrivals:
                break
            targets = [end_index]
            if pending:
                targets.append(int(agents[pending[0]].spawn_time_ms // period) + 1)
            if next_fp is not None:
                targets.append(next_fp)
            jump = min(targets)
            if jump > frame_index:
                frame_index = jump
                continue

        detections: list[Detection] = []
        for idx in in_zone:
            agent = agents[idx]
            if rng_detect.random() < detector.p_detect:
                label = agent.sex
                if rng_detect.random() >= detector.p_correct_label:
                    label = label.other
                confidence = rng_detect.uniform(detector.conf_min, detector.conf_max)
                detections.append(Detection(_agent_box(agent, t, zone_mm), label, confidence))
        if next_fp is not None and frame_index == next_fp:
            detections.append(_background_fp(rng_detect, detector))
            next_fp = _next_fp_index(frame_index, fp_rate, rng_detect)

        frame = FrameObservations(frame_index, t, tuple(detections))
        if frames is not None:
            frames.append(frame)
        command = controller.push(frame)
        if command is not None:
            timeline.append((t, command))
            arm_state.command(float(t), command)
        while arrivals and arrivals[0][0] == t:
            arrival_ms, idx = heapq.heappop(arrivals)
            resolve(idx, arrival_ms)
        frame_index += 1

    ordered = tuple(outcomes[idx] for idx in sorted(outcomes))
    return SimReport(
        preset=None,
        n=len(agents),
        seed=None,
        speed_scale=1.0,
        outcomes=ordered,
        confusion=outcomes_confusion(ordered),
        duration_min=last_arrival_ms / 60000.0,
        command_timeline=tuple(timeline),
        config={},
        frames=tuple(frames) if frames is not None else None,
    )


def outcomes_confusion(outcomes: Iterable[SimOutcome]) -> SortConfusion:
    """2x2 sorted confusion over the agents that reached a bin."""
    mm = mf = fm = ff = 0
    for outcome in outcomes:
        if outcome.destination is Destination.RETURNED:
            continue
        if outcome.sex is SexLabel.MALE:
            if outcome.destination is Destination.MALE_BIN:
                mm += 1
            else:
                mf += 1
        else:
            if outcome.destination is Destination.MALE_BIN:
                fm += 1
            else:
                ff += 1
    return SortConfusion(mm, mf, fm, ff)


def synth_frames(
    agents: Sequence[CricketAgent],
    detector: DetectorModel,
    config: ControllerConfig,
    rng: Random,
    *,
    zone_mm: float = DEFAULT_ZONE_MM,
) -> list[FrameObservations]:
    """Detection log for an agent schedule, one frame per period.

    Frames depend only on the agents, the detector model, and ``rng``; the
    log is exactly what a live run over the same draws would consume.
    """
    report = simulate_agents(
        agents,
        detector,
        ArmModel(travel_time_ms=0.0),
        config,
        rng_detect=rng,
        rng_outcome=Random(0),
        zone_mm=zone_mm,
        p_return=0.0,
        collect_frames=True,
    )
    return list(report.frames or ())


def _child_rng(seed: int, stream: str) -> Random:
    return Random(f"{seed}:{stream}")


def simulate_run(
    preset: StressPreset | str,
    n: int = 25,
    seed: int = 42,
    detector: DetectorModel | None = None,
    arm: ArmModel | None = None,
    config: ControllerConfig | None = None,
    *,
    speed_scale: float = 1.0,
    p_return: float = 0.5,
    zone_mm: float = DEFAULT_ZONE_MM,
    collect_frames: bool = False,
) -> SimReport:
    """One seeded run of a stress preset.

    ``speed_scale`` multiplies the preset's own scale. Identical arguments
    give bit-identical reports.
    """
    if isinstance(preset, str):
        try:
            preset = PRESETS[preset.lower()]
        except KeyError:
            raise ContentError(
                f"unknown preset {preset!r}; valid presets: {', '.join(sorted(PRESETS))}"
            ) from None
    effective = replace(preset, speed_scale=preset.speed_scale * speed_scale)
    detector = detector if detector is not None else DetectorModel()
    arm = arm if arm is not None else ArmModel()
    config = config if config is not None else default_sim_controller_config()
    agents = spawn_schedule(effective, n, _child_rng(seed, "spawn"))
    report = simulate_agents(
        agents,
        detector,
        arm,
        config,
        rng_detect=_child_rng(seed, "detector"),
        rng_outcome=_child_rng(seed, "outcome"),
        zone_mm=zone_mm,
        p_return=p_return,
        collect_frames=collect_frames,
    )
    config_echo = {
        "preset": {
            "name": preset.name,
            "mean_gap_s": preset.mean_gap_s,
            "gap_growth_tau_s": preset.gap_growth_tau_s,
            "speed_scale": preset.speed_scale,
            "speed_jitter": preset.speed_jitter,
        },
        "controller": {
            "window_len": config.window_len,
            "majority": config.majority,
            "frame_period_ms": config.frame_period_ms,
            "threshold_px": config.threshold_px,
            "sort_line_y_px": config.sort_line,
            "release_clear_frames": config.release_clear_frames,
            "geometry": {
                "width_px": config.geometry.width_px,
                "height_px": config.geometry.height_px,
            },
        },
        "detector": {
            "p_detect": detector.p_detect,
            "p_correct_label": detector.p_correct_label,
            "bg_fp_rate": detector.bg_fp_rate,
            "conf_min": detector.conf_min,
            "conf_max": detector.conf_max,
        },
        "arm": {"travel_time_ms": arm.travel_time_ms},
        "zone_mm": zone_mm,
        "p_return": p_return,
    }
    return replace(
        report,
        preset=preset.name,
        seed=seed,
        speed_scale=speed_scale,
        config=config_echo,
    )


@dataclass(frozen=True)
class PresetCalibration:
    """Aggregate behaviour of one preset over a seed sweep."""

    preset: str
    runs: int
    n: int
    median_duration_min: float
    median_accuracy: float
    accuracy_range: tuple[float, float]
    duration_range: tuple[float, float]


def preset_calibration_report(
    presets: Iterable[StressPreset] | None = None,
    n: int = 25,
    runs: int = 30,
    base_seed: int = 0,
) -> list[PresetCalibration]:
    """Median run duration and sorting accuracy per preset over seeded runs."""
    if presets is None:
        presets = PRESETS.values()
    rows: list[PresetCalibration] = []
    for preset in presets:
        durations: list[float] = []
        accuracies: list[float] = []
        for seed in range(base_seed, base_seed + runs):
            report = simulate_run(preset, n=n, seed=seed)
            durations.append(report.duration_min)
            if report.confusion.total:
                accuracies.append(sorting_accuracy(report.confusion))
        rows.append(
            PresetCalibration(
                preset=preset.name,
                runs=runs,
                n=n,
                median_duration_min=statistics.median(durations),
                median_accuracy=statistics.median(accuracies),
                accuracy_range=(min(accuracies), max(accuracies)),
                duration_range=(min(durations), max(durations)),
            )
        )
    return rows
