"""Run results: latency samples, time series, counters, and exports.

A RunResult is assembled once by an engine (or the serverless executor)
and treated as immutable afterwards; merging results from concurrent
sweeps is safe. All emitters are byte-deterministic for identical runs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .errors import NoFeasibleRate, ValidationError
from .tracing import Trace, percentile


@dataclass
class RunResult:
    """Everything measured during one simulated run."""

    seed: int
    config_digest: str
    duration_us: int
    warmup_us: int
    window_us: int
    latencies: dict[str, list[int]] = field(default_factory=dict)
    tick_us: list[int] = field(default_factory=list)
    series: dict[str, dict[str, list]] = field(default_factory=dict)
    latency_p99_series: list[int] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    traces: list[Trace] = field(default_factory=list)
    cost: dict = field(default_factory=dict)
    scale_timeline: list[tuple[int, str, int]] = field(default_factory=list)
    service_order: list[str] = field(default_factory=list)

    def all_latencies(self) -> list[int]:
        out: list[int] = []
        for cls in sorted(self.latencies):
            out.extend(self.latencies[cls])
        return out

    def p99_us(self) -> int | None:
        samples = self.all_latencies()
        if not samples:
            return None
        return percentile(samples, 99)

    def measured_seconds(self) -> float:
        return (self.duration_us - self.warmup_us) / 1e6

    def completion_rate(self) -> float:
        return len(self.all_latencies()) / self.measured_seconds()

    def assert_conservation(self) -> None:
        c = self.counters
        if c["arrivals"] != c["completions"] + c["drops"] + c["in_flight_at_end"]:
            raise ValidationError(
                f"conservation violated: {c['arrivals']} arrivals != "
                f"{c['completions']} completions + {c['drops']} drops + "
                f"{c['in_flight_at_end']} in flight")


@dataclass(frozen=True)
class GoodputPoint:
    """One probed operating point of a goodput sweep or search."""

    offered_load: float
    goodput: float
    qos_met: bool
    p99_us: int = 0

    def __post_init__(self):
        if self.goodput > self.offered_load * (1 + 1e-9):
            raise ValidationError("goodput cannot exceed offered load")


def goodput(result: RunResult, qos_p99_us: int) -> float:
    """Throughput under QoS: completions/second if p99 <= target, else 0.

    The binary definition matches how skewed or degraded configurations
    are reported as delivering "almost zero" useful throughput.
    """
    p99 = result.p99_us()
    if p99 is None or p99 > qos_p99_us:
        return 0.0
    return result.completion_rate()


def goodput_search(topo, workload_template, policy, qos_p99_us: int, seed: int,
                   lo: float, hi: float, tol: float = 0.05,
                   duration_us: int = 15_000_000, warmup_us: int = 3_000_000,
                   probe_log: list | None = None) -> float:
    """Binary-search the largest offered Poisson rate that still meets QoS.

    Each probe is a fresh deterministic run whose seed derives from the
    probe index, so re-running the search is reproducible and probes may
    execute in any order. Raises NoFeasibleRate when even `lo` violates
    the target.
    """
    from . import engine  # local import: engine builds RunResults from this module
    from .rng import derive_seed
    from .workload import WorkloadPlan, poisson

    if not 0 < lo < hi:
        raise ValidationError(f"need 0 < lo < hi (got {lo}, {hi})")

    def probe(rate: float, idx: int) -> bool:
        plan = WorkloadPlan(arrivals=poisson(rate),
                            population=workload_template.population)
        result = engine.run(topo, plan, policy, derive_seed(seed, f"probe{idx}"),
                            duration_us, warmup_us)
        g = goodput(result, qos_p99_us)
        if probe_log is not None:
            p99 = result.p99_us() or 0
            # realized completion rate can exceed the nominal offered rate by
            # sampling noise; the point records throughput under QoS of the
            # offered load
            probe_log.append(GoodputPoint(rate, min(g, rate), g > 0, p99))
        return g > 0

    if not probe(lo, 0):
        raise NoFeasibleRate(f"QoS violated even at the lowest probed rate {lo} req/s")
    if probe(hi, 1):
        return hi
    idx = 2
    while (hi - lo) / lo > tol:
        mid = (lo + hi) / 2
        if probe(mid, idx):
            lo = mid
        else:
            hi = mid
        idx += 1
    return lo


# --------------------------------------------------------------------------
# CSV emission

CSV_KINDS = ("latency", "heatmap_latency", "heatmap_util", "goodput_curve", "scale_timeline")


def export_csv(result: RunResult, kind: str, path, points=None) -> None:
    """Write one deterministic CSV artifact for `result`.

    Heatmap kinds emit a services x ticks matrix, services ordered
    back-end first. `goodput_curve` ignores `result` and writes the given
    GoodputPoint sequence (x = point index unless points are (x, point)
    pairs).
    """
    if kind not in CSV_KINDS:
        raise ValidationError(f"unknown CSV kind {kind!r}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if kind == "latency":
            writer.writerow(["class", "latency_us"])
            for cls in sorted(result.latencies):
                for value in result.latencies[cls]:
                    writer.writerow([cls, value])
        elif kind in ("heatmap_latency", "heatmap_util"):
            key = "p99_us" if kind == "heatmap_latency" else "utilization"
            writer.writerow(["service"] + [str(t) for t in result.tick_us])
            for svc in result.service_order:
                row = result.series[svc][key]
                if key == "utilization":
                    writer.writerow([svc] + [f"{v:.6f}" for v in row])
                else:
                    writer.writerow([svc] + [str(v) for v in row])
        elif kind == "scale_timeline":
            writer.writerow(["t_us", "service", "instances"])
            for t, svc, count in result.scale_timeline:
                writer.writerow([t, svc, count])
        else:
            writer.writerow(["x", "offered_rps", "goodput_rps", "p99_us"])
            for entry in points or []:
                x, point = entry if isinstance(entry, tuple) else (points.index(entry), entry)
                writer.writerow([x, f"{point.offered_load:.6f}",
                                 f"{point.goodput:.6f}", point.p99_us])


def parse_heatmap_csv(path) -> tuple[list[int], dict[str, list[float]]]:
    """Read back a heatmap CSV (used by round-trip checks and plotting)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    ticks = [int(t) for t in rows[0][1:]]
    data = {row[0]: [float(v) for v in row[1:]] for row in rows[1:]}
    return ticks, data


def violation_ticks(result: RunResult, thresholds: dict[str, int]) -> dict[str, int | None]:
    """First tick index at which each service's windowed p99 exceeds its threshold."""
    out: dict[str, int | None] = {}
    for svc, limit in thresholds.items():
        out[svc] = None
        for i, value in enumerate(result.series[svc]["p99_us"]):
            if value > limit:
                out[svc] = i
                break
    return out


def time_above_qos_us(result: RunResult, qos_p99_us: int, start_us: int = 0,
                      end_us: int | None = None) -> int:
    """Total windowed time with end-to-end p99 above target inside [start, end)."""
    end = end_us if end_us is not None else result.duration_us
    total = 0
    for t, p99 in zip(result.tick_us, result.latency_p99_series):
        if start_us <= t - result.window_us and t <= end and p99 > qos_p99_us:
            total += result.window_us
    return total


def erlang_c_wait_us(arrival_rate_per_s: float, mean_service_us: float, servers: int) -> float:
    """Analytic M/M/c mean queueing wait (Erlang C), in microseconds.

    Kept here as the standing oracle the engine is validated against.
    """
    lam = arrival_rate_per_s / 1e6
    mu = 1.0 / mean_service_us
    a = lam / mu
    rho = a / servers
    if rho >= 1:
        return math.inf
    acc = sum(a ** k / math.factorial(k) for k in range(servers))
    top = a ** servers / math.factorial(servers) * (1 / (1 - rho))
    p_wait = top / (acc + top)
    return p_wait / (servers * mu - lam)
