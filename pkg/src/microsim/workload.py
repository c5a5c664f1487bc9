"""Open-loop request generation: arrival processes and user populations.

Arrival lists are produced up front from a dedicated RNG stream, so the
offered load never depends on system state, and the same (process, seed)
pair yields the same arrivals no matter which topology or policies the
run uses.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass

from .errors import ConfigError, DomainError

#: One generated arrival: (time_us, class_index, user_id)
Arrival = tuple[int, int, int]


@dataclass(frozen=True)
class ArrivalProcess:
    """Poisson / deterministic / diurnal arrival process.

    `rate` is requests per second. `segments` is a list of
    (duration_us, rate) pairs and is only used by the diurnal kind.
    """

    kind: str
    rate: float = 0.0
    segments: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("poisson", "deterministic", "diurnal"):
            raise ConfigError(f"unknown arrival process kind {self.kind!r}")
        if self.kind == "diurnal":
            if not self.segments:
                raise ConfigError("diurnal process needs at least one segment")
            if any(r <= 0 or d <= 0 for d, r in self.segments):
                raise ConfigError("diurnal segment durations and rates must be positive")
        elif self.rate <= 0:
            raise ConfigError(f"arrival rate must be positive (got {self.rate})")

    def mean_rate(self) -> float:
        if self.kind != "diurnal":
            return self.rate
        total = sum(d for d, _ in self.segments)
        return sum(d * r for d, r in self.segments) / total


def poisson(rate: float) -> ArrivalProcess:
    return ArrivalProcess("poisson", rate=rate)


def deterministic(rate: float) -> ArrivalProcess:
    return ArrivalProcess("deterministic", rate=rate)


def diurnal(segments) -> ArrivalProcess:
    return ArrivalProcess("diurnal", segments=tuple((int(d), float(r)) for d, r in segments))


def diurnal_day(peak_rate: float, segment_s: int = 30) -> ArrivalProcess:
    """A compressed day: low, rise, peak, fall, low, evening spike."""
    seg = segment_s * 1_000_000
    shape = (0.2, 0.6, 1.0, 0.5, 0.15, 0.8)
    return diurnal([(seg, peak_rate * f) for f in shape])


def intermittent(burst_rate: float, burst_s: int, idle_rate: float,
                 total_s: int) -> ArrivalProcess:
    """A short burst followed by a long near-idle stretch (low duty cycle)."""
    burst = burst_s * 1_000_000
    idle = (total_s - burst_s) * 1_000_000
    return diurnal([(burst, burst_rate), (idle, idle_rate)])


@dataclass(frozen=True)
class UserPopulation:
    """A fixed user base with a two-class weight skew.

    With skew s, the top (100-s)% of users (ids 0..h-1) carry exactly 90%
    of the total request weight; skew 0 is uniform.
    """

    n_users: int
    skew: int
    weights: tuple[float, ...]

    def hot_users(self) -> int:
        if self.skew == 0:
            return self.n_users
        return round(self.n_users * (100 - self.skew) / 100)


def build_skewed_population(n_users: int, skew: int) -> UserPopulation:
    """Two-class construction: h = round(n*(100-skew)/100) users share 0.9."""
    if not 0 <= skew <= 99:
        raise DomainError(f"skew must be in [0, 99] (got {skew})")
    if n_users < 100:
        raise DomainError(f"n_users must be >= 100 (got {n_users})")
    if skew == 0:
        return UserPopulation(n_users, 0, (1.0 / n_users,) * n_users)
    h = round(n_users * (100 - skew) / 100)
    weights = (0.9 / h,) * h + (0.1 / (n_users - h),) * (n_users - h)
    return UserPopulation(n_users, skew, weights)


def uniform_population(n_users: int = 100) -> UserPopulation:
    return build_skewed_population(n_users, 0)


@dataclass(frozen=True)
class WorkloadPlan:
    """Everything the engine needs to generate offered load."""

    arrivals: ArrivalProcess
    population: UserPopulation | None = None


def gen_arrivals(process: ArrivalProcess, class_weights, population, duration_us: int,
                 stream) -> list[Arrival]:
    """Generate the full arrival list for a run.

    Timestamps are strictly increasing integers in (0, duration_us]. Each
    arrival carries a class index sampled by class weight and a user id
    sampled from the population (0 when no population is given). Exactly
    one time draw, one class draw, and one user draw are consumed per
    arrival, in that order, so arrival times are insensitive to the class
    and user weight values.
    """
    if duration_us <= 0:
        raise ConfigError("duration must be positive")
    class_cum = list(itertools.accumulate(w for _, w in class_weights))
    user_cum = list(itertools.accumulate(population.weights)) if population else None
    rand = stream.random
    cls_bisect = bisect.bisect_right

    out: list[Arrival] = []
    append = out.append
    prev = 0

    def tag(t: int) -> None:
        nonlocal prev
        if t <= prev:
            t = prev + 1
        if t > duration_us:
            return
        prev = t
        cls = cls_bisect(class_cum, rand() * class_cum[-1])
        cls = min(cls, len(class_cum) - 1)
        if user_cum is None:
            rand()  # keep the per-arrival draw count fixed
            user = 0
        else:
            user = min(bisect.bisect_right(user_cum, rand() * user_cum[-1]),
                       len(user_cum) - 1)
        append((t, cls, user))

    if process.kind == "deterministic":
        period = max(1, round(1e6 / process.rate))
        for t in range(period, duration_us + 1, period):
            tag(t)
    elif process.kind == "poisson":
        scale = 1e6 / process.rate
        expovariate = stream.expovariate
        t = 0.0
        while True:
            t += expovariate(1.0) * scale
            ti = round(t)
            if ti > duration_us:
                break
            tag(ti)
    else:
        start = 0.0
        for seg_dur, seg_rate in process.segments:
            end = min(start + seg_dur, float(duration_us))
            scale = 1e6 / seg_rate
            t = start
            while True:
                t += stream.expovariate(1.0) * scale
                if t > end:
                    break
                tag(round(t))
            start += seg_dur
            if start >= duration_us:
                break
    return out
