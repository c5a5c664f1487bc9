"""Deterministic discrete-event core.

One engine owns one run: an event heap ordered by (time, seq), service
instances with cores and FIFO queues, synchronous call-tree execution
with blocking-HTTP1 or pipelined-RPC semantics, host servers with
frequency multipliers, and routing. Time is integer microseconds; every
stochastic component draws from its own named stream, so identical
inputs give bit-identical results.

The load-bearing modeling choice: a core held on a blocked HTTP1 call
counts as utilized. That busy-wait is what lets a downstream connection
bottleneck masquerade as front-end saturation and fool a
utilization-threshold autoscaler.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from collections import deque

from . import management
from .errors import ConfigError, NoInstance, ValidationError
from .metrics import RunResult
from .rng import stream as rng_stream
from .tracing import Span, Trace, percentile
from .topology import CallNode, Topology, render, require_valid
from .workload import WorkloadPlan, gen_arrivals

# Event kinds (heap payload tag). Arrivals are merged from the pre-generated
# open-loop list rather than heaped, preserving arrival-first tie order.
NET_DELIVER = 0
END_COMPUTE = 1
RESPONSE = 2
SCALE_COMPLETE = 3
MONITOR_TICK = 4
FAULT_TRIGGER = 5


class HostServer:
    """A physical host; its frequency multiplier scales all on-core work."""

    __slots__ = ("id", "frequency", "capacity")

    def __init__(self, host_id: int, frequency: float = 1.0, capacity: int = 64):
        self.id = host_id
        self.frequency = frequency
        self.capacity = capacity


class _Pool:
    """Connection pool for one (caller instance, downstream service) pair."""

    __slots__ = ("in_use", "waiters")

    def __init__(self):
        self.in_use = 0
        self.waiters = deque()


class Instance:
    """One running copy of a service: cores, FIFO queue, connection pools."""

    __slots__ = ("service", "spec", "host", "cores", "busy", "queue", "pools",
                 "busy_accum", "last_t", "created_us", "retired")

    def __init__(self, service: str, spec, host: HostServer, created_us: int):
        self.service = service
        self.spec = spec
        self.host = host
        self.cores = spec.cores_per_instance
        self.busy = 0
        self.queue = deque()
        self.pools: dict[str, _Pool] = {}
        self.busy_accum = 0
        self.last_t = created_us
        self.created_us = created_us
        self.retired = False

    def account(self, now: int) -> None:
        self.busy_accum += self.busy * (now - self.last_t)
        self.last_t = now


class Router:
    """Instance selection: round-robin, seeded random, user-range sharding,
    or a misconfigured pin that sends everything to one instance."""

    __slots__ = ("policy", "rand", "rr", "misroute")

    def __init__(self, policy: str, rand):
        self.policy = policy
        self.rand = rand
        self.rr: dict[str, int] = {}
        self.misroute: dict[str, int] = {}

    def pick(self, service: str, n: int, shard_user: tuple[int, int] | None = None) -> int:
        if n <= 0:
            raise NoInstance(f"service {service} has no live instances")
        pin = self.misroute.get(service)
        if pin is not None:
            return min(pin, n - 1)
        if shard_user is not None:
            user, n_users = shard_user
            return min(user * n // n_users, n - 1)
        if self.policy == "random":
            return self.rand.randrange(n)
        idx = self.rr.get(service, 0) % n
        self.rr[service] = idx + 1
        return idx


class _Req:
    """Shared per-request state: identity, tagging, span accumulation."""

    __slots__ = ("trace_id", "cls_idx", "user", "t0", "spans", "next_span")

    def __init__(self, trace_id: int, cls_idx: int, user: int, t0: int, collect: bool):
        self.trace_id = trace_id
        self.cls_idx = cls_idx
        self.user = user
        self.t0 = t0
        self.spans = [] if collect else None
        self.next_span = 0


class _Call:
    """Activation record for one call-tree node at one instance."""

    __slots__ = ("node", "service", "req", "parent", "span_id", "instance",
                 "t_arrive", "t_start", "net_us", "compute_us", "t_compute_end",
                 "t_release", "holds_core", "done_children", "seq_idx",
                 "http1_queue", "unfinished_http1")

    def __init__(self, node: CallNode, req: _Req, parent: "_Call | None"):
        self.node = node
        self.service = node.target
        self.req = req
        self.parent = parent
        self.span_id = req.next_span
        req.next_span += 1
        self.instance = None
        self.t_arrive = 0
        self.t_start = 0
        self.net_us = 0
        self.compute_us = 0
        self.t_compute_end = 0
        self.t_release = 0
        self.holds_core = False
        self.done_children = 0
        self.seq_idx = 0
        self.http1_queue = None
        self.unfinished_http1 = 0


def sample_duration_us(dist, stream) -> float:
    """One raw draw from a distribution spec, in (float) microseconds."""
    if dist.kind == "deterministic":
        return dist.mean_us
    if dist.kind == "exponential":
        return stream.expovariate(1.0) * dist.mean_us
    # lognormal parameterized so the arithmetic mean equals mean_us
    mu = math.log(dist.mean_us) - dist.sigma ** 2 / 2.0
    return stream.lognormvariate(mu, dist.sigma)


def sample_service_time(dist, freq: float, stream) -> int:
    """Service-time draw under a frequency multiplier.

    Returns draw/freq rounded to the nearest microsecond, minimum 1.
    """
    if not 0 < freq <= 1:
        raise ConfigError(f"frequency multiplier must be in (0, 1] (got {freq})")
    return max(1, round(sample_duration_us(dist, stream) / freq))


class Engine:
    """Single-threaded simulator for one (topology, workload, policy, seed) run."""

    def __init__(self, topo: Topology, plan: WorkloadPlan, policy, seed: int,
                 duration_us: int, warmup_us: int = 0):
        if not duration_us > warmup_us >= 0:
            raise ConfigError("need duration > warmup >= 0")
        require_valid(topo)
        policy = policy if policy is not None else management.PolicySet()
        net = policy.network
        if net.stack_factor < 1:
            raise ConfigError(f"stack_factor must be >= 1 (got {net.stack_factor})")
        self.topo = topo
        self.plan = plan
        self.policy = policy
        self.seed = seed
        self.duration_us = duration_us
        self.warmup_us = warmup_us
        self.base_delay = net.base_delay_us
        self.stack_factor = net.stack_factor
        self.pool_k = policy.conn_pool_k
        self.collect_traces = policy.collect_traces
        self.window_us = (policy.autoscaler.window_us
                          if policy.autoscaler else policy.monitor_window_us)

        self.heap: list = []
        self.seq = 0
        self.now = 0

        self.svc_streams = {name: rng_stream(seed, f"svc:{name}") for name in topo.services}
        self.router = Router(policy.load_balance, rng_stream(seed, "route"))
        self.fault_stream = rng_stream(seed, "faults")

        pop = plan.population
        self.n_users = pop.n_users if pop else 1
        self.user_mult = ([w * pop.n_users for w in pop.weights] if pop else None)

        self.hosts = [HostServer(i, frequency=policy.host_frequency)
                      for i in range(policy.n_hosts)]
        self.instances: dict[str, list[Instance]] = {}
        self.spawned: dict[str, int] = {}
        self._storage_host_cursor = policy.n_hosts - 1
        for name, spec in topo.services.items():
            self.instances[name] = []
            self.spawned[name] = 0
            for _ in range(spec.initial_instances):
                self._add_instance(name, 0)

        self.hotspot: dict[str, "management.Hotspot"] = {}
        self.pending_scale: dict[str, int] = {name: 0 for name in topo.services}
        self.bucket = (management.TokenBucket(policy.rate_limiter)
                       if policy.rate_limiter else None)

        # metric accumulators
        self.arrivals = 0
        self.completions = 0
        self.drops = 0
        self.latencies: dict[str, list[int]] = {c.name: [] for c in topo.classes}
        self.window_spans: dict[str, list[int]] = {name: [] for name in topo.services}
        self.window_latencies: list[int] = []
        self.tick_us: list[int] = []
        self.series = {name: {"utilization": [], "p99_us": [], "queue_len": [], "instances": []}
                       for name in topo.services}
        self.latency_p99_series: list[int] = []
        self.traces: list[Trace] = []
        self.scale_timeline: list[tuple[int, str, int]] = [
            (0, name, len(self.instances[name])) for name in topo.services]
        self.retired_instance_us: dict[str, int] = {name: 0 for name in topo.services}

        if self.window_us < duration_us:
            self._push(self.window_us, MONITOR_TICK, None)
        self._schedule_faults()

    # -- construction helpers ------------------------------------------------

    def _push(self, t: int, kind: int, payload) -> None:
        heapq.heappush(self.heap, (t, self.seq, kind, payload))
        self.seq += 1

    def _host_for(self, service: str, ordinal: int) -> HostServer:
        # Stateless tiers are column-packed (the j-th replica of every tier
        # shares host j, as a bin-packing scheduler would); storage shards
        # get dedicated hosts from the tail of the host list.
        spec = self.topo.services[service]
        if spec.is_storage():
            host = self.hosts[self._storage_host_cursor % len(self.hosts)]
            self._storage_host_cursor -= 1
            return host
        return self.hosts[ordinal % len(self.hosts)]

    def _add_instance(self, service: str, now: int) -> Instance:
        spec = self.topo.services[service]
        inst = Instance(service, spec, self._host_for(service, self.spawned[service]), now)
        self.spawned[service] += 1
        self.instances[service].append(inst)
        return inst

    def _schedule_faults(self) -> None:
        plan = self.policy.faults
        if plan is None:
            return
        management.validate_fault_plan(plan)
        if plan.slow_servers:
            self._push(plan.slow_servers.start_us, FAULT_TRIGGER, ("slow", True))
        if plan.misroute:
            self._push(plan.misroute.start_us, FAULT_TRIGGER, ("misroute", True))
            self._push(plan.misroute.end_us, FAULT_TRIGGER, ("misroute", False))
        if plan.hotspot:
            self._push(plan.hotspot.start_us, FAULT_TRIGGER, ("hotspot", True))
            self._push(plan.hotspot.end_us, FAULT_TRIGGER, ("hotspot", False))

    def config_digest(self) -> str:
        blob = "|".join([
            render(self.topo), repr(self.plan.arrivals),
            repr(self.plan.population), repr(self.policy),
            str(self.seed), str(self.duration_us), str(self.warmup_us),
        ])
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    # -- network -------------------------------------------------------------

    def set_network_profile(self, profile) -> None:
        """Swap the network profile: later network_time draws divide by the
        new stack factor; per-hop base delay changes with it."""
        if profile.stack_factor < 1:
            raise ConfigError(f"stack_factor must be >= 1 (got {profile.stack_factor})")
        self.base_delay = profile.base_delay_us
        self.stack_factor = profile.stack_factor

    def _hop_us(self, from_service: str | None, to_service: str) -> int:
        if from_service is None:
            return 0
        crossing = (self.topo.services[from_service].placement
                    != self.topo.services[to_service].placement)
        extra = self.topo.edge_cloud_rtt_us // 2 if crossing else 0
        return self.base_delay + extra

    # -- core lifecycle -------------------------------------------------------

    def _route_instance(self, service: str, user: int) -> Instance:
        live = self.instances[service]
        spec = self.topo.services[service]
        shard = (user, self.n_users) if (spec.shard_by_user and self.user_mult) else None
        return live[self.router.pick(service, len(live), shard)]

    def _deliver(self, call: _Call, now: int) -> None:
        inst = call.instance
        call.t_arrive = now
        if inst.busy < inst.cores:
            self._start_service(call, now)
        else:
            inst.queue.append(call)

    def _start_service(self, call: _Call, now: int) -> None:
        inst = call.instance
        inst.account(now)
        inst.busy += 1
        assert inst.busy <= inst.cores
        call.holds_core = True
        call.t_start = now
        spec = inst.spec
        freq = inst.host.frequency
        stream = self.svc_streams[call.service]
        net_dist = spec.network_time
        if net_dist.mean_us == 0 and net_dist.kind == "deterministic":
            net = 0
        else:
            net = max(0, round(sample_duration_us(net_dist, stream)
                               / (self.stack_factor * freq)))
        scale = call.node.work_scale
        hot = self.hotspot.get(call.service)
        if hot is not None:
            scale *= hot.factor_at(now)
        if spec.user_scaled and self.user_mult is not None:
            scale *= self.user_mult[call.req.user]
        compute = max(1, round(sample_duration_us(spec.service_time, stream) * scale / freq))
        call.net_us = net
        call.compute_us = compute
        self._push(now + net + compute, END_COMPUTE, call)

    def _release_core(self, call: _Call, now: int) -> None:
        call.holds_core = False
        call.t_release = now
        inst = call.instance
        inst.account(now)
        inst.busy -= 1
        if inst.queue and not inst.retired:
            self._start_service(inst.queue.popleft(), now)

    def _maybe_release(self, call: _Call, now: int) -> None:
        # A caller core stays held (busy-wait) while any blocking-HTTP1
        # child has not yet completed; pipelined waits do not hold it.
        if call.holds_core and call.unfinished_http1 == 0:
            self._release_core(call, now)

    def _end_compute(self, call: _Call, now: int) -> None:
        call.t_compute_end = now
        children = call.node.children
        if not children:
            self._finish(call, now)
            return
        call.unfinished_http1 = sum(
            1 for c in children if c.protocol == "http1_blocking")
        if call.node.mode == "parallel":
            http1 = []
            for child in children:
                if child.protocol == "http1_blocking":
                    http1.append(child)
                else:
                    self._send_child(call, child, now)
            call.http1_queue = deque(http1)
            if http1:
                self._issue_http1(call, call.http1_queue.popleft(), now)
        else:
            self._issue_next_sequential(call, now)
        self._maybe_release(call, now)

    def _issue_next_sequential(self, call: _Call, now: int) -> None:
        child = call.node.children[call.seq_idx]
        call.seq_idx += 1
        if child.protocol == "http1_blocking":
            self._issue_http1(call, child, now)
        else:
            self._send_child(call, child, now)

    def _issue_http1(self, call: _Call, node: CallNode, now: int) -> None:
        pool = call.instance.pools.get(node.target)
        if pool is None:
            pool = call.instance.pools[node.target] = _Pool()
        if pool.in_use < self.pool_k:
            pool.in_use += 1
            self._send_child(call, node, now)
        else:
            # Busy-wait: the caller core stays held until a connection frees.
            pool.waiters.append((call, node))

    def _send_child(self, parent: _Call, node: CallNode, now: int) -> None:
        child = _Call(node, parent.req, parent)
        child.instance = self._route_instance(node.target, parent.req.user)
        hop = self._hop_us(parent.service, node.target)
        if hop:
            self._push(now + hop, NET_DELIVER, child)
        else:
            self._deliver(child, now)

    def _response(self, child: _Call, now: int) -> None:
        parent = child.parent
        if child.node.protocol == "http1_blocking":
            pool = parent.instance.pools[child.node.target]
            assert pool.in_use <= self.pool_k
            if pool.waiters:
                waiter_call, waiter_node = pool.waiters.popleft()
                self._send_child(waiter_call, waiter_node, now)
            else:
                pool.in_use -= 1
            parent.unfinished_http1 -= 1
        parent.done_children += 1
        children = parent.node.children
        if parent.node.mode == "sequential":
            if parent.seq_idx < len(children):
                self._issue_next_sequential(parent, now)
        elif parent.http1_queue:
            self._issue_http1(parent, parent.http1_queue.popleft(), now)
        if parent.done_children == len(children):
            self._finish(parent, now)
        else:
            self._maybe_release(parent, now)

    def _finish(self, call: _Call, now: int) -> None:
        if call.holds_core:
            self._release_core(call, now)
        req = call.req
        self.window_spans[call.service].append(now - call.t_arrive)
        if req.spans is not None:
            req.spans.append(Span(
                trace_id=req.trace_id, span_id=call.span_id,
                parent_id=call.parent.span_id if call.parent else None,
                service=call.service, start_us=call.t_arrive, end_us=now,
                network_us=call.net_us, compute_us=call.compute_us,
                blocked_us=call.t_release - call.t_compute_end))
        if call.parent is None:
            self.completions += 1
            latency = now - req.t0
            self.window_latencies.append(latency)
            if req.t0 >= self.warmup_us:
                self.latencies[self.topo.classes[req.cls_idx].name].append(latency)
            if req.spans is not None:
                self.traces.append(Trace(
                    trace_id=req.trace_id,
                    class_name=self.topo.classes[req.cls_idx].name,
                    user=req.user, spans=tuple(req.spans)))
        else:
            hop = self._hop_us(call.service, call.parent.service)
            if hop:
                self._push(now + hop, RESPONSE, call)
            else:
                self._response(call, now)

    # -- admission and arrivals ------------------------------------------------

    def _arrival(self, t: int, cls_idx: int, user: int) -> None:
        self.arrivals += 1
        if self.bucket is not None and not self.bucket.admit(t):
            self.drops += 1
            return
        req = _Req(self.arrivals - 1, cls_idx, user, t, self.collect_traces)
        root = _Call(self.topo.classes[cls_idx].root, req, None)
        root.instance = self._route_instance(root.service, user)
        self._deliver(root, t)

    # -- control-plane events ----------------------------------------------------

    def _monitor(self, now: int) -> None:
        utils: dict[str, float] = {}
        window_start = now - self.window_us
        for name in self.topo.services:
            busy = 0
            capacity = 0
            queue_len = 0
            for inst in self.instances[name]:
                inst.account(now)
                busy += inst.busy_accum
                inst.busy_accum = 0
                capacity += inst.cores * (now - max(inst.created_us, window_start))
                queue_len += len(inst.queue)
            util = busy / capacity if capacity else 0.0
            utils[name] = util
            spans = self.window_spans[name]
            s = self.series[name]
            s["utilization"].append(util)
            s["p99_us"].append(percentile(spans, 99) if spans else 0)
            s["queue_len"].append(queue_len)
            s["instances"].append(len(self.instances[name]))
            spans.clear()
        self.tick_us.append(now)
        self.latency_p99_series.append(
            percentile(self.window_latencies, 99) if self.window_latencies else 0)
        self.window_latencies.clear()

        scaler = self.policy.autoscaler
        if scaler is not None:
            state = {
                name: management.ServiceScaleState(
                    live=len(self.instances[name]),
                    pending=self.pending_scale[name],
                    initial=self.topo.services[name].initial_instances,
                    maximum=self.topo.services[name].max_instances)
                for name in self.topo.services
            }
            for action in management.autoscale_tick(utils, scaler, state):
                if action.delta > 0:
                    self.pending_scale[action.service] += action.delta
                    for _ in range(action.delta):
                        self._push(now + scaler.startup_delay_us, SCALE_COMPLETE,
                                   action.service)
                else:
                    self._retire_one(action.service, now)
        next_tick = now + self.window_us
        if next_tick < self.duration_us:
            self._push(next_tick, MONITOR_TICK, None)

    def _retire_one(self, service: str, now: int) -> None:
        # Scale-in only removes an idle instance; skip the tick otherwise.
        live = self.instances[service]
        for i in range(len(live) - 1, -1, -1):
            inst = live[i]
            if inst.busy == 0 and not inst.queue:
                inst.account(now)
                inst.retired = True
                self.retired_instance_us[service] += now - inst.created_us
                live.pop(i)
                self.scale_timeline.append((now, service, len(live)))
                return

    def _scale_complete(self, service: str, now: int) -> None:
        self.pending_scale[service] -= 1
        if len(self.instances[service]) >= self.topo.services[service].max_instances:
            return
        self._add_instance(service, now)
        self.scale_timeline.append((now, service, len(self.instances[service])))

    def _fault(self, payload, now: int) -> None:
        plan = self.policy.faults
        kind, begin = payload
        if kind == "slow":
            frac, mult = plan.slow_servers.fraction, plan.slow_servers.frequency
            for host_id in management.pick_slow_hosts(
                    frac, self._stateless_host_ids(), len(self.hosts), self.fault_stream):
                self.hosts[host_id].frequency = mult
        elif kind == "misroute":
            if begin:
                self.router.misroute[plan.misroute.service] = plan.misroute.instance_index
            else:
                self.router.misroute.pop(plan.misroute.service, None)
        else:
            if begin:
                self.hotspot[plan.hotspot.service] = plan.hotspot
            else:
                self.hotspot.pop(plan.hotspot.service, None)

    def _stateless_host_ids(self) -> list[int]:
        ids = set()
        for name, spec in self.topo.services.items():
            if spec.is_storage():
                continue
            for inst in self.instances[name]:
                ids.add(inst.host.id)
        return sorted(ids)

    # -- main loop ----------------------------------------------------------------

    def run(self) -> RunResult:
        arrivals = gen_arrivals(
            self.plan.arrivals,
            [(c.name, c.weight) for c in self.topo.classes],
            self.plan.population,
            self.duration_us,
            rng_stream(self.seed, "arrivals"),
        )
        # Arrivals of exactly t == duration are generated but fall outside the
        # processed horizon [0, duration).
        while arrivals and arrivals[-1][0] >= self.duration_us:
            arrivals.pop()
        heap = self.heap
        duration = self.duration_us
        n_arrivals = len(arrivals)
        ai = 0
        pop = heapq.heappop
        while True:
            next_arrival = arrivals[ai][0] if ai < n_arrivals else None
            # Ties between an arrival and a scheduled event go to the arrival.
            if heap and (next_arrival is None or heap[0][0] < next_arrival):
                t, _, kind, payload = pop(heap)
                if t >= duration:
                    break
                self.now = t
                if kind == NET_DELIVER:
                    self._deliver(payload, t)
                elif kind == END_COMPUTE:
                    self._end_compute(payload, t)
                elif kind == RESPONSE:
                    self._response(payload, t)
                elif kind == MONITOR_TICK:
                    self._monitor(t)
                elif kind == SCALE_COMPLETE:
                    self._scale_complete(payload, t)
                else:
                    self._fault(payload, t)
            elif next_arrival is not None:
                t, cls_idx, user = arrivals[ai]
                ai += 1
                self.now = t
                self._arrival(t, cls_idx, user)
            else:
                break
        return self._result()

    def _result(self) -> RunResult:
        cost_us = dict(self.retired_instance_us)
        for name, live in self.instances.items():
            for inst in live:
                cost_us[name] = cost_us.get(name, 0) + (self.duration_us - inst.created_us)
        result = RunResult(
            seed=self.seed,
            config_digest=self.config_digest(),
            duration_us=self.duration_us,
            warmup_us=self.warmup_us,
            window_us=self.window_us,
            latencies=self.latencies,
            tick_us=self.tick_us,
            series=self.series,
            latency_p99_series=self.latency_p99_series,
            counters={
                "arrivals": self.arrivals,
                "completions": self.completions,
                "drops": self.drops,
                "in_flight_at_end": self.arrivals - self.completions - self.drops,
            },
            traces=self.traces,
            cost={"instance_us_by_service": cost_us, "gb_s": 0.0, "billed_requests": 0},
            scale_timeline=self.scale_timeline,
            service_order=self.topo.service_order_backend_first(),
        )
        result.assert_conservation()
        return result


def run(topo: Topology, plan: WorkloadPlan, policy, seed: int,
        duration_us: int, warmup_us: int = 0) -> RunResult:
    """Simulate one run and return its immutable RunResult."""
    return Engine(topo, plan, policy, seed, duration_us, warmup_us).run()
