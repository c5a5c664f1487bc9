"""Cluster-management levers: autoscaling, admission, faults, serverless.

This module owns the PolicySet handed to the engine and the pure policy
operations it calls at monitor ticks and fault triggers. It also houses
the serverless executor: an elastically scaled (unbounded-capacity)
variant of the simulator with cold starts, warm pools, state-store
handoffs, placement jitter, and a per-request cost ledger.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

from .errors import ConfigError, DurationMismatch, ValidationError
from .metrics import RunResult
from .rng import stream as rng_stream
from .topology import DistributionSpec, Topology, exp, render, require_valid
from .tracing import Span, Trace, percentile
from .workload import WorkloadPlan, gen_arrivals


@dataclass(frozen=True)
class NetworkProfile:
    """Per-hop propagation delay plus the network-stack acceleration knob.

    `stack_factor` divides every per-service network-processing draw
    (1 = native TCP; larger values model an offloaded/accelerated stack).
    """

    base_delay_us: int = 50
    stack_factor: float = 1.0

    def __post_init__(self):
        if self.stack_factor < 1:
            raise ConfigError(f"stack_factor must be >= 1 (got {self.stack_factor})")
        if self.base_delay_us < 0:
            raise ConfigError("base_delay_us must be >= 0")


@dataclass(frozen=True)
class AutoscalerPolicy:
    """Utilization-threshold reactive scaling with a startup delay."""

    threshold: float = 0.70
    window_us: int = 5_000_000
    startup_delay_us: int = 30_000_000
    step: int = 1
    scale_in: bool = False

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise ConfigError(f"threshold must be in (0, 1] (got {self.threshold})")
        if self.window_us <= 0 or self.startup_delay_us < 0 or self.step < 1:
            raise ConfigError("bad autoscaler parameters")


@dataclass(frozen=True)
class RateLimiterConfig:
    rate_per_s: float
    burst: int

    def __post_init__(self):
        if self.rate_per_s <= 0 or self.burst < 1:
            raise ConfigError("rate limiter needs rate > 0 and burst >= 1")


@dataclass(frozen=True)
class SlowServers:
    """Slow a deterministic seeded subset of hosts from `start_us` on."""

    fraction: float
    frequency: float
    start_us: int = 0


@dataclass(frozen=True)
class Misroute:
    """Pin all of a service's traffic to one instance for a window."""

    service: str
    instance_index: int
    start_us: int
    end_us: int


@dataclass(frozen=True)
class Hotspot:
    """Inflate a service's compute draws by a factor for a window.

    With a nonzero `ramp_us` the factor climbs linearly from 1 to `factor`
    over the ramp, modeling a gradually building hotspot rather than a
    step change.
    """

    service: str
    factor: float
    start_us: int
    end_us: int
    ramp_us: int = 0

    def factor_at(self, now_us: int) -> float:
        if self.ramp_us <= 0 or now_us >= self.start_us + self.ramp_us:
            return self.factor
        frac = (now_us - self.start_us) / self.ramp_us
        return 1.0 + (self.factor - 1.0) * frac


@dataclass(frozen=True)
class FaultPlan:
    slow_servers: SlowServers | None = None
    misroute: Misroute | None = None
    hotspot: Hotspot | None = None


def validate_fault_plan(plan: FaultPlan) -> None:
    if plan.slow_servers:
        s = plan.slow_servers
        if not 0 <= s.fraction <= 1:
            raise ValidationError(f"slow-server fraction must be in [0,1] (got {s.fraction})")
        if not 0 < s.frequency <= 1:
            raise ValidationError(f"slow-server frequency must be in (0,1] (got {s.frequency})")
    if plan.misroute and plan.misroute.start_us > plan.misroute.end_us:
        raise ValidationError("misroute window start must not exceed end")
    if plan.hotspot:
        if plan.hotspot.start_us > plan.hotspot.end_us:
            raise ValidationError("hotspot window start must not exceed end")
        if plan.hotspot.factor <= 0:
            raise ValidationError("hotspot factor must be positive")


@dataclass(frozen=True)
class ServerlessConfig:
    """Function-as-a-service execution and pricing model.

    Latency defaults are order-of-magnitude placeholders (the comparisons
    asserted downstream are orderings, not magnitudes). `memory_gb` is the
    flat per-function footprint used by the cost ledger.
    """

    enabled: bool = True
    cold_start: DistributionSpec = field(default_factory=lambda: exp(200_000))
    warm_pool_ttl_us: int = 60_000_000
    state_store: str = "s3_like"
    s3_transfer: DistributionSpec = field(default_factory=lambda: exp(20_000))
    memory_transfer: DistributionSpec = field(default_factory=lambda: exp(500))
    placement_jitter: DistributionSpec = field(default_factory=lambda: exp(500))
    price_per_req_gbs: float = 1.7e-5
    price_per_instance_hour: float = 2.0
    memory_gb: float = 1.0

    def __post_init__(self):
        if self.state_store not in ("s3_like", "remote_memory"):
            raise ConfigError(f"unknown state store {self.state_store!r}")
        if self.cold_start.mean_us < 0 or self.warm_pool_ttl_us < 0:
            raise ConfigError("bad serverless latency config")
        if self.s3_transfer.mean_us <= self.memory_transfer.mean_us:
            raise ConfigError("s3_like transfer mean must exceed remote_memory mean")

    def transfer_dist(self) -> DistributionSpec:
        return self.s3_transfer if self.state_store == "s3_like" else self.memory_transfer


@dataclass(frozen=True)
class PolicySet:
    """All run-time levers for one simulated run."""

    autoscaler: AutoscalerPolicy | None = None
    rate_limiter: RateLimiterConfig | None = None
    faults: FaultPlan | None = None
    serverless: ServerlessConfig | None = None
    network: NetworkProfile = field(default_factory=NetworkProfile)
    conn_pool_k: int = 8
    n_hosts: int = 100
    host_frequency: float = 1.0
    load_balance: str = "round_robin"
    monitor_window_us: int = 5_000_000
    collect_traces: bool = True

    def __post_init__(self):
        if self.conn_pool_k < 1:
            raise ConfigError("conn_pool_k must be >= 1")
        if self.n_hosts < 1:
            raise ConfigError("n_hosts must be >= 1")
        if not 0 < self.host_frequency <= 1:
            raise ConfigError("host_frequency must be in (0, 1]")
        if self.load_balance not in ("round_robin", "random"):
            raise ConfigError(f"unknown load balance policy {self.load_balance!r}")


# --------------------------------------------------------------------------
# Autoscaler

@dataclass(frozen=True)
class ServiceScaleState:
    live: int
    pending: int
    initial: int
    maximum: int


@dataclass(frozen=True)
class ScaleAction:
    service: str
    delta: int


def autoscale_tick(utilization: dict[str, float], policy: AutoscalerPolicy,
                   state: dict[str, ServiceScaleState]) -> list[ScaleAction]:
    """Decide scale actions from one window's utilization averages.

    Scale out when a service runs above threshold and has headroom
    (counting instances already being started); scale in, when enabled,
    one instance at a time below threshold/2 but never under the initial
    count.
    """
    actions: list[ScaleAction] = []
    for service, util in utilization.items():
        st = state[service]
        if util > policy.threshold and st.live + st.pending < st.maximum:
            actions.append(ScaleAction(
                service, min(policy.step, st.maximum - st.live - st.pending)))
        elif (policy.scale_in and util < policy.threshold / 2
              and st.live > st.initial and st.pending == 0):
            actions.append(ScaleAction(service, -1))
    return actions


# --------------------------------------------------------------------------
# Admission control

class TokenBucket:
    """Standard token bucket: refills continuously, admits while >= 1 token."""

    __slots__ = ("rate", "burst", "tokens", "last_us")

    def __init__(self, cfg: RateLimiterConfig, now_us: int = 0):
        self.rate = cfg.rate_per_s
        self.burst = cfg.burst
        self.tokens = float(cfg.burst)
        self.last_us = now_us

    def admit(self, now_us: int) -> bool:
        self.tokens = min(float(self.burst),
                          self.tokens + (now_us - self.last_us) * self.rate / 1e6)
        self.last_us = now_us
        if self.tokens >= 1.0:
            self.tokens -= 1.0
            return True
        return False


# --------------------------------------------------------------------------
# Fault helpers

def pick_slow_hosts(fraction: float, candidate_ids: list[int], n_hosts: int,
                    stream) -> list[int]:
    """Seeded choice of hosts to slow.

    The count comes from rounding fraction * total hosts (at least one for
    a nonzero fraction). Candidates are the hosts running stateless tiers:
    a hit on a shared storage shard degrades a monolith and a microservice
    deployment identically, so it carries no comparison signal.
    """
    n = round(fraction * n_hosts)
    if n == 0 and fraction > 0:
        n = 1
    n = min(n, len(candidate_ids))
    if n <= 0:
        return []
    return sorted(stream.sample(sorted(candidate_ids), n))


# --------------------------------------------------------------------------
# Serverless execution

_SL_INVOKE = 0
_SL_WORK_DONE = 1
_SL_CHILD_DONE = 2


class _FnCall:
    __slots__ = ("node", "req", "parent", "span_id", "t_invoke", "cold_us",
                 "net_us", "compute_us", "done_children", "seq_idx", "t_end")

    def __init__(self, node, req, parent):
        self.node = node
        self.req = req
        self.parent = parent
        self.span_id = req[4]
        req[4] += 1
        self.t_invoke = 0
        self.cold_us = 0
        self.net_us = 0
        self.compute_us = 0
        self.done_children = 0
        self.seq_idx = 0
        self.t_end = 0


def serverless_run(topo: Topology, plan: WorkloadPlan, cfg: ServerlessConfig,
                   seed: int, duration_us: int, warmup_us: int = 0) -> RunResult:
    """Run the workload on ephemeral per-call function instances.

    Capacity is effectively unbounded: a call spawns (or reuses a warm)
    function, so there is no queueing. Cold-start latency applies whenever
    no warm instance exists; warm instances expire after the pool TTL.
    Every parent->child handoff pays a state-store transfer draw, every
    hop adds placement jitter, and the cost ledger accumulates GB-seconds
    of billed function time.
    """
    if not cfg.enabled:
        raise ConfigError("serverless config is disabled")
    require_valid(topo)
    if not duration_us > warmup_us >= 0:
        raise ConfigError("need duration > warmup >= 0")

    from .engine import sample_duration_us  # shared draw semantics

    arrivals = gen_arrivals(plan.arrivals,
                            [(c.name, c.weight) for c in topo.classes],
                            plan.population, duration_us,
                            rng_stream(seed, "arrivals"))
    while arrivals and arrivals[-1][0] >= duration_us:
        arrivals.pop()

    pop_users = plan.population
    user_mult = ([w * pop_users.n_users for w in pop_users.weights]
                 if pop_users else None)
    svc_streams = {name: rng_stream(seed, f"svc:{name}") for name in topo.services}
    cold_streams = {name: rng_stream(seed, f"serverless:cold:{name}") for name in topo.services}
    transfer_stream = rng_stream(seed, "serverless:transfer")
    jitter_stream = rng_stream(seed, "serverless:jitter")
    warm: dict[str, list[int]] = {name: [] for name in topo.services}
    transfer_dist = cfg.transfer_dist()

    heap: list = []
    seq = 0

    def push(t, kind, payload):
        nonlocal seq
        heapq.heappush(heap, (t, seq, kind, payload))
        seq += 1

    latencies = {c.name: [] for c in topo.classes}
    traces: list[Trace] = []
    window_spans = {name: [] for name in topo.services}
    window_lat: list[int] = []
    series = {name: {"utilization": [], "p99_us": [], "queue_len": [], "instances": []}
              for name in topo.services}
    tick_list: list[int] = []
    lat_series: list[int] = []
    window_us = 5_000_000
    gb_s = 0.0
    billed = 0
    completions = 0

    def jitter() -> int:
        return max(0, round(sample_duration_us(cfg.placement_jitter, jitter_stream)))

    def invoke(call: _FnCall, t: int) -> None:
        svc = call.node.target
        pool = warm[svc]
        ttl_floor = t - cfg.warm_pool_ttl_us
        while pool and pool[0] < ttl_floor:
            heapq.heappop(pool)
        if pool:
            heapq.heappop(pool)  # consume the warm instance
            call.cold_us = 0
        else:
            call.cold_us = max(0, round(sample_duration_us(cfg.cold_start, cold_streams[svc])))
        call.t_invoke = t
        spec = topo.services[svc]
        stream = svc_streams[svc]
        nd = spec.network_time
        net = 0 if (nd.kind == "deterministic" and nd.mean_us == 0) else max(
            0, round(sample_duration_us(nd, stream)))
        scale = call.node.work_scale
        if spec.user_scaled and user_mult is not None:
            scale *= user_mult[call.req[2]]
        compute = max(1, round(sample_duration_us(spec.service_time, stream) * scale))
        call.net_us = net
        call.compute_us = compute
        push(t + call.cold_us + net + compute, _SL_WORK_DONE, call)

    def send_child(parent: _FnCall, node, t: int) -> None:
        child = _FnCall(node, parent.req, parent)
        transfer = max(0, round(sample_duration_us(transfer_dist, transfer_stream)))
        push(t + transfer + jitter(), _SL_INVOKE, child)

    def work_done(call: _FnCall, t: int) -> None:
        children = call.node.children
        if not children:
            complete(call, t)
            return
        if call.node.mode == "parallel":
            for child in children:
                send_child(call, child, t)
        else:
            call.seq_idx = 1
            send_child(call, children[0], t)

    def child_done(child: _FnCall, t: int) -> None:
        parent = child.parent
        parent.done_children += 1
        children = parent.node.children
        if parent.node.mode == "sequential" and parent.seq_idx < len(children):
            node = children[parent.seq_idx]
            parent.seq_idx += 1
            send_child(parent, node, t)
        if parent.done_children == len(children):
            complete(parent, t)

    def complete(call: _FnCall, t: int) -> None:
        nonlocal gb_s, billed, completions
        call.t_end = t
        svc = call.node.target
        heapq.heappush(warm[svc], t)
        gb_s += (t - call.t_invoke) / 1e6 * cfg.memory_gb
        billed += 1
        window_spans[svc].append(t - call.t_invoke)
        req = call.req
        if req[3] is not None:
            req[3].append(Span(
                trace_id=req[0], span_id=call.span_id,
                parent_id=call.parent.span_id if call.parent else None,
                service=svc, start_us=call.t_invoke, end_us=t,
                network_us=call.net_us, compute_us=call.compute_us,
                blocked_us=call.cold_us))
        if call.parent is None:
            completions += 1
            latency = t - req[5]
            window_lat.append(latency)
            if req[5] >= warmup_us:
                latencies[topo.classes[req[1]].name].append(latency)
            if req[3] is not None:
                traces.append(Trace(trace_id=req[0],
                                    class_name=topo.classes[req[1]].name,
                                    user=req[2], spans=tuple(req[3])))
        else:
            push(t + jitter(), _SL_CHILD_DONE, call)

    def tick(t: int) -> None:
        for name in topo.services:
            spans = window_spans[name]
            s = series[name]
            s["utilization"].append(0.0)
            s["p99_us"].append(percentile(spans, 99) if spans else 0)
            s["queue_len"].append(0)
            pool = warm[name]
            ttl_floor = t - cfg.warm_pool_ttl_us
            while pool and pool[0] < ttl_floor:
                heapq.heappop(pool)
            s["instances"].append(len(pool))
            spans.clear()
        tick_list.append(t)
        lat_series.append(percentile(window_lat, 99) if window_lat else 0)
        window_lat.clear()

    for t in range(window_us, duration_us, window_us):
        push(t, 3, None)  # monitor tick

    ai = 0
    n_arr = len(arrivals)
    while True:
        next_arrival = arrivals[ai][0] if ai < n_arr else None
        if heap and (next_arrival is None or heap[0][0] < next_arrival):
            t, _, kind, payload = heapq.heappop(heap)
            if kind == _SL_INVOKE:
                invoke(payload, t)
            elif kind == _SL_WORK_DONE:
                work_done(payload, t)
            elif kind == _SL_CHILD_DONE:
                child_done(payload, t)
            else:
                tick(t)
        elif next_arrival is not None:
            t, cls_idx, user = arrivals[ai]
            ai += 1
            # req: [trace_id, cls_idx, user, spans, next_span, t0]
            req = [ai - 1, cls_idx, user, [], 0, t]
            root = _FnCall(topo.classes[cls_idx].root, req, None)
            invoke(root, t)
        else:
            break

    import hashlib
    digest = hashlib.sha256("|".join([
        render(topo), repr(plan.arrivals), repr(plan.population), repr(cfg),
        str(seed), str(duration_us), str(warmup_us)]).encode()).hexdigest()
    result = RunResult(
        seed=seed, config_digest=digest, duration_us=duration_us,
        warmup_us=warmup_us, window_us=window_us,
        latencies=latencies, tick_us=tick_list, series=series,
        latency_p99_series=lat_series,
        counters={"arrivals": len(arrivals), "completions": completions,
                  "drops": 0, "in_flight_at_end": len(arrivals) - completions},
        traces=traces,
        cost={"instance_us_by_service": {}, "gb_s": gb_s, "billed_requests": billed},
        scale_timeline=[],
        service_order=topo.service_order_backend_first(),
    )
    result.assert_conservation()
    return result


# --------------------------------------------------------------------------
# Cost comparison

@dataclass(frozen=True)
class CostComparison:
    serverful_cost: float
    serverless_cost: float
    ratio: float  # serverful / serverless


def cost_report(serverful: RunResult, serverless: RunResult,
                cfg: ServerlessConfig) -> CostComparison:
    """Compare provisioned instance-hours against billed per-request GB-s."""
    if serverful.duration_us != serverless.duration_us:
        raise DurationMismatch(
            f"runs cover {serverful.duration_us}us vs {serverless.duration_us}us")
    instance_us = sum(serverful.cost["instance_us_by_service"].values())
    serverful_cost = instance_us / 3.6e9 * cfg.price_per_instance_hour
    serverless_cost = serverless.cost["gb_s"] * cfg.price_per_req_gbs
    ratio = serverful_cost / serverless_cost if serverless_cost else float("inf")
    return CostComparison(serverful_cost, serverless_cost, ratio)
