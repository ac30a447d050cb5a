"""Sliding-window vote controller for the three-position sorting arm.

Each frame the controller looks at the detection nearest the sort line and
turns it into a vote: the detection's label when its leading edge is within
the proximity threshold, an abstention otherwise (including empty frames).
The last ``window_len`` votes are kept; as soon as one label holds
``majority`` of them, the arm is commanded to that side. Commands equal to
the current arm position are suppressed so the servo never chatters. After
``release_clear_frames`` consecutive abstentions the arm returns to neutral
and the window is cleared, ready for the next animal.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .boxes import (
    DEFAULT_GEOMETRY,
    FrameObservations,
    ImageGeometry,
    SexLabel,
    distance_to_sort_line,
    select_target,
)
from .errors import ConfigError, FrameOrderError


class FrameVote(Enum):
    FEMALE = "female"
    MALE = "male"
    ABSTAIN = "abstain"


class ArmCommand(Enum):
    NEUTRAL = "neutral"
    FEMALE_SORT = "female"
    MALE_SORT = "male"


_VOTE_FOR_SEX = {SexLabel.FEMALE: FrameVote.FEMALE, SexLabel.MALE: FrameVote.MALE}


def command_from_name(name: str) -> ArmCommand:
    try:
        return ArmCommand(name)
    except ValueError:
        raise ValueError(f"unknown arm command {name!r}") from None


@dataclass(frozen=True)
class ControllerConfig:
    """Decision parameters of the sorting controller.

    ``sort_line_y_px`` of None means the bottom image edge. The defaults
    mirror the deployed rig: 10-frame window at ~300 ms per frame, six-vote
    majority, 100 px proximity gate.
    """

    window_len: int = 10
    majority: int = 6
    frame_period_ms: int = 300
    threshold_px: float = 100.0
    sort_line_y_px: float | None = None
    release_clear_frames: int = 3
    geometry: ImageGeometry = DEFAULT_GEOMETRY

    def __post_init__(self):
        if self.window_len < 1:
            raise ConfigError(f"window_len must be >= 1, got {self.window_len}")
        if not 1 <= self.majority <= self.window_len:
            raise ConfigError(
                f"majority must be in [1, window_len], got {self.majority} of {self.window_len}"
            )
        if self.frame_period_ms <= 0:
            raise ConfigError(f"frame_period_ms must be positive, got {self.frame_period_ms}")
        if self.threshold_px < 0:
            raise ConfigError(f"threshold_px must be >= 0, got {self.threshold_px}")
        if self.release_clear_frames < 1:
            raise ConfigError(
                f"release_clear_frames must be >= 1, got {self.release_clear_frames}"
            )
        if self.sort_line_y_px is not None and not (
            0.0 <= self.sort_line_y_px <= self.geometry.height_px
        ):
            raise ConfigError(
                f"sort_line_y_px {self.sort_line_y_px} outside image height "
                f"{self.geometry.height_px}"
            )

    @property
    def sort_line(self) -> float:
        return (
            float(self.geometry.height_px)
            if self.sort_line_y_px is None
            else self.sort_line_y_px
        )


def vote_for_frame(frame: FrameObservations, config: ControllerConfig) -> FrameVote:
    """The frame's vote: the nearest qualifying detection's label, else abstain."""
    target = select_target(frame, config.geometry, config.sort_line)
    if target is None:
        return FrameVote.ABSTAIN
    if distance_to_sort_line(target.bbox, config.geometry, config.sort_line) > config.threshold_px:
        return FrameVote.ABSTAIN
    return _VOTE_FOR_SEX[target.label]


def majority_command(female_votes: int, male_votes: int, majority: int) -> ArmCommand | None:
    """The command a window's vote counts justify, if any. Female is checked first."""
    if female_votes >= majority:
        return ArmCommand.FEMALE_SORT
    if male_votes >= majority:
        return ArmCommand.MALE_SORT
    return None


@dataclass(frozen=True)
class ControllerState:
    """Snapshot of the controller's mutable state."""

    votes: tuple[FrameVote, ...]
    arm: ArmCommand
    abstain_streak: int
    last_actuation_ms: int | None


class SortingController:
    """Stateful fold of frames into arm commands.

    One logical owner feeds frames in order; instances are not safe for
    concurrent mutation but independent controllers can run in parallel.
    """

    def __init__(self, config: ControllerConfig | None = None):
        self.config = config if config is not None else ControllerConfig()
        self._votes: deque[FrameVote] = deque(maxlen=self.config.window_len)
        self._female = 0
        self._male = 0
        self.arm = ArmCommand.NEUTRAL
        self.abstain_streak = 0
        self.last_actuation_ms: int | None = None
        self._last_timestamp_ms: int | None = None
        self._last_frame_index: int | None = None

    @property
    def quiescent(self) -> bool:
        """True when further empty frames cannot change the arm."""
        return self.arm is ArmCommand.NEUTRAL and self._female == 0 and self._male == 0

    def state(self) -> ControllerState:
        return ControllerState(
            votes=tuple(self._votes),
            arm=self.arm,
            abstain_streak=self.abstain_streak,
            last_actuation_ms=self.last_actuation_ms,
        )

    def push(self, frame: FrameObservations) -> ArmCommand | None:
        """Fold one frame; returns the command emitted, if any."""
        if self._last_timestamp_ms is not None and frame.timestamp_ms < self._last_timestamp_ms:
            raise FrameOrderError(
                f"frame {frame.frame_index} timestamp {frame.timestamp_ms} ms is earlier "
                f"than the previous frame ({self._last_timestamp_ms} ms)"
            )
        if self._last_frame_index is not None and frame.frame_index <= self._last_frame_index:
            raise FrameOrderError(
                f"frame index {frame.frame_index} does not increase past {self._last_frame_index}"
            )
        self._last_timestamp_ms = frame.timestamp_ms
        self._last_frame_index = frame.frame_index
        return self._push_vote(vote_for_frame(frame, self.config), frame.timestamp_ms)

    def _push_vote(self, vote: FrameVote, timestamp_ms: int) -> ArmCommand | None:
        votes = self._votes
        if len(votes) == votes.maxlen:
            evicted = votes[0]
            if evicted is FrameVote.FEMALE:
                self._female -= 1
            elif evicted is FrameVote.MALE:
                self._male -= 1
        votes.append(vote)
        if vote is FrameVote.ABSTAIN:
            self.abstain_streak += 1
        else:
            self.abstain_streak = 0
            if vote is FrameVote.FEMALE:
                self._female += 1
            else:
                self._male += 1

        config = self.config
        if (
            self.arm is not ArmCommand.NEUTRAL
            and self.abstain_streak >= config.release_clear_frames
        ):
            self.arm = ArmCommand.NEUTRAL
            votes.clear()
            self._female = 0
            self._male = 0
            self.abstain_streak = 0
            self.last_actuation_ms = timestamp_ms
            return ArmCommand.NEUTRAL

        desired = majority_command(self._female, self._male, config.majority)
        if desired is not None and desired is not self.arm:
            self.arm = desired
            self.last_actuation_ms = timestamp_ms
            return desired
        return None


def replay_log(
    frames: Iterable[FrameObservations], config: ControllerConfig | None = None
) -> list[tuple[int, ArmCommand]]:
    """Fold a detection log into its command timeline.

    The timeline lists only emitted changes, as (timestamp_ms, command).
    Deterministic: the same log and config always give the same timeline.
    """
    controller = SortingController(config)
    timeline: list[tuple[int, ArmCommand]] = []
    for frame in frames:
        command = controller.push(frame)
        if command is not None:
            timeline.append((frame.timestamp_ms, command))
    return timeline
