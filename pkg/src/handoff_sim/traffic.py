"""User workloads, the periodic rate monitor, and the threshold switch rule.

Demand is a piecewise-constant rate in kb/s. Traces extend lazily, so
a run to battery depletion never needs a horizon up front.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

T_MEASURE_S = 30.0
FILE_PAYLOAD_BYTES = 50_000_000
STANDARD_THRESHOLDS = {"B1": 5.0, "B2": 10.0, "B3": 15.0, "B4": 20.0}
USER_KINDS = ("U1", "U2", "U3", "U4")


class DemandTrace:
    """Piecewise-constant demand built from a stream of (time, rate) steps.

    The step stream must start at t=0 and be strictly increasing in time.
    """

    def __init__(self, steps: Iterator[tuple[float, float]]):
        self._steps = iter(steps)
        self._times: list[float] = []
        self._rates: list[float] = []
        self._done = False
        self._pull()
        if not self._times or self._times[0] != 0.0:
            raise ValueError("demand trace must start at t=0")

    def _pull(self) -> bool:
        if self._done:
            return False
        try:
            t, r = next(self._steps)
        except StopIteration:
            self._done = True
            return False
        if r < 0 or math.isnan(r):
            raise ValueError(f"negative demand {r} at t={t}")
        if self._times and t <= self._times[-1]:
            raise ValueError(f"demand steps must increase in time ({t} after {self._times[-1]})")
        if self._rates and r == self._rates[-1]:
            return True  # merge repeated rates; keep pulling
        self._times.append(t)
        self._rates.append(r)
        return True

    def _extend_past(self, t: float) -> None:
        while not self._done and self._times[-1] <= t:
            self._pull()

    def rate_at(self, t: float) -> float:
        self._extend_past(t)
        i = bisect.bisect_right(self._times, t) - 1
        return self._rates[max(i, 0)]

    def next_change(self, t: float) -> float:
        """First breakpoint strictly after ``t`` (``inf`` if none)."""
        self._extend_past(t)
        i = bisect.bisect_right(self._times, t)
        return self._times[i] if i < len(self._times) else math.inf

    def pieces(self, t0: float, t1: float) -> Iterator[tuple[float, float, float]]:
        """Yield (start, end, rate) covering [t0, t1]."""
        t = t0
        while t < t1:
            end = min(self.next_change(t), t1)
            yield t, end, self.rate_at(t)
            t = end

    def integral(self, t0: float, t1: float, cap: float = math.inf) -> float:
        """kbit delivered over [t0, t1] when each instant is clamped to ``cap``."""
        return math.fsum((b - a) * min(r, cap) for a, b, r in self.pieces(t0, t1) if r > 0)

    def mean(self, t0: float, t1: float) -> float:
        return self.integral(t0, t1) / (t1 - t0)


def constant_steps(rate_kbps: float) -> Iterator[tuple[float, float]]:
    yield 0.0, rate_kbps


def on_off_steps(period_s: float, on_s: float, on_kbps: float, phase_s: float) -> Iterator[tuple[float, float]]:
    """Periodic on/off demand; ``phase_s`` is where t=0 falls within a period."""
    if not 0 < on_s <= period_s:
        raise ValueError("on_s must be in (0, period_s]")
    if on_s == period_s:
        yield 0.0, on_kbps
        return
    phase = phase_s % period_s
    if phase < on_s:
        yield 0.0, on_kbps
        t = on_s - phase
        yield t, 0.0
        t += period_s - on_s
    else:
        yield 0.0, 0.0
        t = period_s - phase
    k = 0
    while True:
        start = t + k * period_s
        yield start, on_kbps
        yield start + on_s, 0.0
        k += 1


def text_burst_steps(
    rng: np.random.Generator,
    mean_kbps: float,
    message_kbit: float,
    burst_kbps: float,
) -> Iterator[tuple[float, float]]:
    """Poisson message arrivals, each sent at ``burst_kbps`` in FIFO order."""
    yield 0.0, 0.0
    if mean_kbps <= 0:
        return
    mean_gap_s = message_kbit / mean_kbps
    send_s = message_kbit / burst_kbps
    arrival = 0.0
    run_start = run_end = None
    while True:
        arrival += rng.exponential(mean_gap_s)
        begin = max(arrival, math.ulp(0.0))
        if run_end is not None and begin <= run_end:
            run_end += send_s  # queued behind the current run
            continue
        if run_start is not None:
            yield run_start, burst_kbps
            yield run_end, 0.0
        run_start, run_end = begin, begin + send_s


def csv_steps(path: str | Path) -> Iterator[tuple[float, float]]:
    """Read ``t_s,kbps`` rows; each rate holds until the next row's time."""
    rows: list[tuple[float, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                t, r = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: expected 't_s,kbps'") from None
            rows.append((t, r))
    if not rows:
        raise ValueError(f"{path}: empty demand trace")
    if rows[0][0] > 0:
        rows.insert(0, (0.0, 0.0))
    return iter(rows)


@dataclass
class UserProfile:
    """A workload: a bounded demand trace, optionally plus a greedy file transfer.

    While ``greedy_payload_bytes`` is unfinished the user wants every bit
    the link can carry.
    """

    kind: str
    demand: DemandTrace
    greedy_payload_bytes: float | None = None

    def demand_kbps(self, t: float) -> float:
        if self.greedy_payload_bytes:
            return math.inf
        return self.demand.rate_at(t)


@dataclass(frozen=True)
class WorkloadParams:
    """Shape parameters for the four standard user classes."""

    text_mean_kbps: float = 0.5
    text_message_kbit: float = 16.0
    text_burst_kbps: float = 4.0
    browse_period_s: float = 30.0
    browse_on_s: float = 15.0
    browse_on_kbps: float = 16.0
    stream_kbps: float = 24.0
    file_bytes: float = FILE_PAYLOAD_BYTES

    def mean_kbps(self, kind: str) -> float:
        """Long-run average demand of a class (greedy counts as infinite)."""
        return {
            "U1": self.text_mean_kbps,
            "U2": self.browse_on_kbps * self.browse_on_s / self.browse_period_s,
            "U3": self.stream_kbps,
            "U4": math.inf,
        }[kind]


def make_profile(kind: str, rng: np.random.Generator, params: WorkloadParams = WorkloadParams()) -> UserProfile:
    if kind == "U1":
        steps = text_burst_steps(rng, params.text_mean_kbps, params.text_message_kbit, params.text_burst_kbps)
        return UserProfile(kind, DemandTrace(steps))
    if kind == "U2":
        phase = float(rng.uniform(0.0, params.browse_period_s))
        steps = on_off_steps(params.browse_period_s, params.browse_on_s, params.browse_on_kbps, phase)
        return UserProfile(kind, DemandTrace(steps))
    if kind == "U3":
        return UserProfile(kind, DemandTrace(constant_steps(params.stream_kbps)))
    if kind == "U4":
        steps = text_burst_steps(rng, params.text_mean_kbps, params.text_message_kbit, params.text_burst_kbps)
        return UserProfile(kind, DemandTrace(steps), greedy_payload_bytes=params.file_bytes)
    raise ValueError(f"unknown user kind {kind!r}; expected one of {USER_KINDS}")


def profile_from_csv(path: str | Path) -> UserProfile:
    return UserProfile("trace", DemandTrace(csv_steps(path)))


def zero_profile() -> UserProfile:
    return UserProfile("idle", DemandTrace(constant_steps(0.0)))


@dataclass(frozen=True)
class RateSample:
    t: float
    r_user_kbps: float


@dataclass(frozen=True)
class Threshold:
    b_t_kbps: float
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.b_t_kbps > 0:
            raise ValueError(f"threshold must be positive, got {self.b_t_kbps}")

    @classmethod
    def standard(cls, name: str) -> "Threshold":
        return cls(STANDARD_THRESHOLDS[name], name)

    @property
    def label(self) -> str:
        return self.name or f"{self.b_t_kbps:g}kbps"


def sample_rate(profile: UserProfile, capacity_kbps: float, t: float, dt: float = T_MEASURE_S) -> RateSample:
    """Delivered rate over the window ending at ``t`` on a link of ``capacity_kbps``."""
    if not dt > 0:
        raise ValueError(f"sampling interval must be positive, got {dt}")
    if profile.greedy_payload_bytes:
        return RateSample(t, capacity_kbps)
    t0 = max(0.0, t - dt)
    delivered = profile.demand.integral(t0, t, capacity_kbps)
    return RateSample(t, min(delivered / dt, capacity_kbps))


def should_switch(sample: RateSample | float, threshold: Threshold | float) -> bool:
    """True when the measured rate reaches the threshold (boundary inclusive)."""
    r = sample.r_user_kbps if isinstance(sample, RateSample) else float(sample)
    b = threshold.b_t_kbps if isinstance(threshold, Threshold) else float(threshold)
    return r >= b


DemandFactory = Callable[[np.random.Generator], UserProfile]
