"""Integrated monitoring loop: pick a clean training window, watch, label, restart.

Each round works on the stream history up to the current origin m_s:

1. segment the history and take the stretch after the last change point as
   the training sample (the whole history when no change is found);
2. train the sequential detector on it and monitor the next ``window_k``
   samples;
3. on an alarm at stream index a, label the change direction with the
   interval trend indicator at a, emit a scale-up/scale-down event, and
   restart monitoring at a + quiet_gap_d;
4. on a quiet window, advance the origin to the window end and continue.

The loop ends when the stream does. Replaying a recorded stream with the
same configuration reproduces the identical event list.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable

import numpy as np

from .critvals import CritValKind, CritValProvider
from .errors import InsufficientTrainingError
from .offline import DEFAULT_MIN_SEG, segment
from .online import DetectorKind, step, train
from .timeseries import SeriesSegment, TimeSeries
from .trend import Direction, MacdParams, TrendVerdict, trend_interval

__all__ = [
    "Action",
    "MonitorConfig",
    "ChangeEvent",
    "select_training",
    "run_monitor",
]

logger = logging.getLogger(__name__)


class Action(str, Enum):
    SCALE_UP = "scale-up"
    SCALE_DOWN = "scale-down"


@dataclass(frozen=True)
class MonitorConfig:
    """Knobs of the monitoring loop; ``critvals`` supplies critical values."""

    critvals: CritValProvider
    alpha: float = 0.05
    gamma: float = 0.0
    detector: DetectorKind = DetectorKind.STANDARD
    window_k: int = 200
    quiet_gap_d: int = 25
    macd: MacdParams = MacdParams()
    min_seg: int = DEFAULT_MIN_SEG
    m_min: int = 200
    trend_dim: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "detector", DetectorKind(self.detector))
        if self.window_k < 1:
            raise ValueError("window_k must be at least 1")
        if self.quiet_gap_d < 0:
            raise ValueError("quiet_gap_d must be non-negative")
        if self.m_min < 4:
            raise ValueError("m_min must be at least 4")


@dataclass(frozen=True)
class ChangeEvent:
    """A detected change: where, which direction, and the action it maps to."""

    detected_at: int
    direction: Direction
    action: Action
    trend: TrendVerdict
    training_used: tuple[int, int]

    def __post_init__(self) -> None:
        expected = Action.SCALE_UP if self.direction is Direction.UP else Action.SCALE_DOWN
        if self.action is not expected:
            raise ValueError("action must follow the change direction")


def select_training(history: TimeSeries, config: MonitorConfig) -> SeriesSegment:
    """Longest change-free suffix of the history, as the training window.

    Segments the whole history (histories shorter than one segmentable
    window count as change-free). With no change point the training window
    is the full history; otherwise it starts right after the last change
    point. A window shorter than ``m_min`` is extended leftward only when
    that crosses no change point; otherwise training is impossible here.
    """
    n = history.n_samples
    if n < config.m_min:
        raise ValueError(f"history of length {n} shorter than minimal training {config.m_min}")
    if n >= 2 * config.min_seg:
        def offline_cv(d: int, level: float):
            return config.critvals(CritValKind.OFFLINE_MAX, d, level)

        cps = segment(history, config.alpha, offline_cv, config.min_seg).cps
    else:
        cps = ()
    if not cps:
        return history.segment(1, n)
    lo = cps[-1] + 1
    if n - lo + 1 >= config.m_min:
        return history.segment(lo, n)
    extended_lo = n - config.m_min + 1
    if extended_lo >= 1 and all(cp < extended_lo for cp in cps):
        return history.segment(extended_lo, n)
    raise InsufficientTrainingError(
        f"only {n - lo + 1} samples after the last change point at {cps[-1]}, "
        f"need {config.m_min}"
    )


def run_monitor(
    stream: Iterable,
    config: MonitorConfig,
    on_event: Callable[[ChangeEvent], None] | None = None,
) -> list[ChangeEvent]:
    """Run the monitoring loop over a sample stream until it is exhausted.

    ``stream`` yields scalars or d-vectors; at least ``m_min`` samples must
    arrive before the first window. Events are returned in stream order (and
    pushed to ``on_event`` as they happen). A window whose training selection
    fails is logged and skipped, advancing the origin by one window.
    """
    iterator = iter(stream)
    history: list[np.ndarray] = []

    def ensure(count: int) -> bool:
        while len(history) < count:
            try:
                x = next(iterator)
            except StopIteration:
                return False
            history.append(np.atleast_1d(np.asarray(x, dtype=float)))
        return True

    events: list[ChangeEvent] = []
    origin = config.m_min
    while True:
        if not ensure(origin):
            break
        past = TimeSeries(np.vstack(history[:origin]))
        try:
            training = select_training(past, config)
        except InsufficientTrainingError as exc:
            logger.warning("skipping window at origin %d: %s", origin, exc)
            origin += config.window_k
            continue
        online_cv = config.critvals(
            config.detector.critval_kind, past.dim, config.alpha, config.gamma
        )
        state = train(training, config.detector, config.gamma, online_cv)

        alarm_at: int | None = None
        consumed = 0
        while consumed < config.window_k:
            if not ensure(origin + consumed + 1):
                break
            verdict = step(state, history[origin + consumed])
            consumed += 1
            if verdict.alarm:
                alarm_at = origin + consumed
                break

        if alarm_at is None:
            if consumed < config.window_k:
                break  # stream ended inside the window
            origin += config.window_k
            continue

        # pull up to h post-alarm samples for the interval label; the stream
        # end clamps the window instead of blocking the loop
        ensure(alarm_at + config.macd.h)
        reachable_h = min(config.macd.h, len(history) - alarm_at)
        verdict_trend = trend_interval(
            TimeSeries(np.vstack(history)),
            alarm_at,
            replace(config.macd, h=reachable_h),
            dim=config.trend_dim,
        )
        event = ChangeEvent(
            detected_at=alarm_at,
            direction=verdict_trend.direction,
            action=Action.SCALE_UP if verdict_trend.direction is Direction.UP else Action.SCALE_DOWN,
            trend=verdict_trend,
            training_used=(training.lo, training.hi),
        )
        events.append(event)
        if on_event is not None:
            on_event(event)
        origin = alarm_at + config.quiet_gap_d
    return events
