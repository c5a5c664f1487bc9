"""Span-level tracing and analysis.

The engine records one span per call at RPC granularity (timestamped on
arrival at and departure from each service) and groups the spans of one
end-to-end request into a trace. Analysis operations are pure over these
immutable records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DomainError, EmptyInput, MalformedTrace


@dataclass(frozen=True, slots=True)
class Span:
    """One timed call segment at a service.

    `network_us` is request-processing time on the target's core,
    `compute_us` the application-compute portion, and `blocked_us` time
    the core stayed held waiting on blocking downstream calls. Child spans
    of synchronous calls nest inside the parent's interval.
    """

    trace_id: int
    span_id: int
    parent_id: int | None
    service: str
    start_us: int
    end_us: int
    network_us: int = 0
    compute_us: int = 0
    blocked_us: int = 0

    @property
    def duration_us(self) -> int:
        return self.end_us - self.start_us


@dataclass(frozen=True, slots=True)
class Trace:
    """All spans of one end-to-end request."""

    trace_id: int
    class_name: str
    user: int
    spans: tuple[Span, ...]

    def root(self) -> Span:
        roots = [s for s in self.spans if s.parent_id is None]
        if len(roots) != 1:
            raise MalformedTrace(
                f"trace {self.trace_id}: expected exactly one root span, found {len(roots)}")
        return roots[0]

    def latency_us(self) -> int:
        root = self.root()
        return root.end_us - root.start_us


def critical_path(trace: Trace) -> list[Span]:
    """Chain of spans that bounds the end-to-end latency.

    Starting at the root, repeatedly descend into the latest-finishing
    child (ties broken by smallest span id). For synchronous call trees
    the chain's nested durations telescope exactly to the root duration.
    """
    root = trace.root()
    children: dict[int, list[Span]] = {}
    for span in trace.spans:
        if span.parent_id is not None:
            children.setdefault(span.parent_id, []).append(span)
            if span.parent_id == span.span_id:
                raise MalformedTrace(f"trace {trace.trace_id}: span {span.span_id} is its own parent")
    path = [root]
    node = root
    while node.span_id in children:
        kids = children[node.span_id]
        node = max(kids, key=lambda s: (s.end_us, -s.span_id))
        if node.start_us < path[-1].start_us or node.end_us > path[-1].end_us:
            raise MalformedTrace(
                f"trace {trace.trace_id}: span {node.span_id} escapes its parent interval")
        path.append(node)
    return path


def per_tier_breakdown(traces) -> dict[str, float]:
    """Share of mean end-to-end latency attributable to each service.

    Uses exclusive time on the critical path (span duration minus the
    on-path child's duration), averaged over traces. Fractions sum to 1.
    """
    traces = list(traces)
    if not traces:
        raise EmptyInput("per_tier_breakdown needs at least one trace")
    acc: dict[str, float] = {}
    for trace in traces:
        path = critical_path(trace)
        total = path[0].duration_us
        if total <= 0:
            continue
        for i, span in enumerate(path):
            inner = path[i + 1].duration_us if i + 1 < len(path) else 0
            share = (span.duration_us - inner) / total
            acc[span.service] = acc.get(span.service, 0.0) + share
    n = len(traces)
    return {svc: share / n for svc, share in sorted(acc.items())}


def network_compute_ratio(traces) -> dict[str, tuple[float, float]]:
    """Per-service (network fraction, compute fraction) of core-held time.

    Totals are normalized by network + compute + blocked time, so the two
    fractions sum to at most 1 and the remainder is blocked time.
    """
    traces = list(traces)
    if not traces:
        raise EmptyInput("network_compute_ratio needs at least one trace")
    totals: dict[str, list[int]] = {}
    for trace in traces:
        for span in trace.spans:
            t = totals.setdefault(span.service, [0, 0, 0])
            t[0] += span.network_us
            t[1] += span.compute_us
            t[2] += span.blocked_us
    out: dict[str, tuple[float, float]] = {}
    for svc, (net, comp, blocked) in sorted(totals.items()):
        denom = net + comp + blocked
        out[svc] = (net / denom, comp / denom) if denom else (0.0, 0.0)
    return out


def percentile(samples, p: float) -> int:
    """Nearest-rank percentile: sorted value at 1-based index ceil(p/100 * n)."""
    data = sorted(samples)
    if not data:
        raise EmptyInput("percentile of empty sample set")
    if not 0 <= p <= 100:
        raise DomainError(f"percentile p must be in [0, 100] (got {p})")
    if p == 0:
        return data[0]
    rank = -(-int(p * len(data)) // 100)  # ceil(p/100 * n) without float error
    rank = max(1, min(len(data), rank))
    return data[rank - 1]


def export_traces_jsonl(traces, path) -> None:
    """Write one trace per line in the documented JSON schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            record = {
                "trace_id": trace.trace_id,
                "class": trace.class_name,
                "user": trace.user,
                "spans": [
                    {
                        "span_id": s.span_id,
                        "parent": s.parent_id,
                        "service": s.service,
                        "start_us": s.start_us,
                        "end_us": s.end_us,
                        "network_us": s.network_us,
                        "compute_us": s.compute_us,
                        "blocked_us": s.blocked_us,
                    }
                    for s in trace.spans
                ],
            }
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def load_traces_jsonl(path) -> list[Trace]:
    """Inverse of export_traces_jsonl."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            spans = tuple(
                Span(trace_id=rec["trace_id"], span_id=s["span_id"], parent_id=s["parent"],
                     service=s["service"], start_us=s["start_us"], end_us=s["end_us"],
                     network_us=s["network_us"], compute_us=s["compute_us"],
                     blocked_us=s["blocked_us"])
                for s in rec["spans"]
            )
            out.append(Trace(trace_id=rec["trace_id"], class_name=rec["class"],
                             user=rec["user"], spans=spans))
    return out
