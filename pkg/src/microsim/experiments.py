"""Named experiments binding topology, workload, policies, and exports.

Each experiment function takes a Scenario, writes deterministic CSV/JSON
artifacts into the output directory, prints a short outcome line per
case, and returns a summary dict (also written as summary.json).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, replace
from pathlib import Path

from . import engine, management, metrics, presets, tracing, workload
from .errors import ConfigError, NoFeasibleRate
from .management import (AutoscalerPolicy, FaultPlan, Hotspot, PolicySet,
                         ServerlessConfig, SlowServers)
from .metrics import GoodputPoint, export_csv, goodput, goodput_search
from .rng import derive_seed
from .topology import (CallNode, Topology, load_topology,
                       zero_load_span_means_us)
from .workload import (UserPopulation, WorkloadPlan, build_skewed_population,
                       diurnal_day, intermittent, poisson)

EXPERIMENTS = ("single_run", "backpressure", "cascading", "freq_sweep",
               "skew_sweep", "slow_server_sweep", "edge_vs_cloud",
               "serverless_compare", "recovery_compare", "goodput_search")


@dataclass
class Scenario:
    """One experiment invocation: topology ref, workload, policies, sweeps."""

    experiment: str
    preset: str | None = None
    topology_file: str | None = None
    seed: int = 1
    duration_s: float | None = None
    warmup_s: float | None = None
    out_dir: str = "out"
    # workload block
    arrivals: str | None = None      # "poisson 500" | "deterministic 200" | "diurnal 30:100,30:400"
    rate: float | None = None
    users: int = 100
    skew: int = 0
    # policy block
    autoscale: bool = False
    threshold: float = 0.70
    window_s: float = 5.0
    startup_delay_s: float = 30.0
    rate_limit: tuple[float, int] | None = None
    fault_slow: tuple[float, float, float] | None = None       # frac, freq, start_s
    fault_misroute: tuple[str, int, float, float] | None = None
    fault_hotspot: tuple[str, float, float, float] | None = None
    serverless: bool = False
    state_store: str = "s3_like"
    pool_k: int = 8
    # sweep params
    skews: tuple[int, ...] = (0, 20, 40, 60, 80, 90, 95)
    freqs: tuple[float, ...] = (1.0, 0.9, 0.8, 0.7, 0.65, 0.6, 0.55, 0.5, 0.45, 0.4)
    loads: tuple[float, ...] = ()
    rates: tuple[float, ...] = ()

    def resolve_topology(self) -> Topology:
        if self.topology_file:
            return load_topology(Path(self.topology_file).read_text(encoding="utf-8"))
        return presets.preset(self.preset or _DEFAULT_PRESET[self.experiment])


_DEFAULT_PRESET = {
    "single_run": "two_tier",
    "backpressure": "two_tier",
    "cascading": "social_network",
    "freq_sweep": "social_network",
    "skew_sweep": "social_network",
    "slow_server_sweep": "social_network",
    "edge_vs_cloud": "swarm_edge",
    "serverless_compare": "two_tier",
    "recovery_compare": "social_network",
    "goodput_search": "two_tier",
}


def _us(seconds: float) -> int:
    return int(round(seconds * 1_000_000))


def _arrival_process(scenario: Scenario, default_rate: float):
    if scenario.arrivals:
        return _parse_arrivals(scenario.arrivals)
    return poisson(scenario.rate or default_rate)


def _parse_arrivals(text: str):
    parts = text.split()
    kind = parts[0]
    if kind in ("poisson", "deterministic"):
        if len(parts) != 2:
            raise ConfigError(f"bad arrivals spec {text!r}")
        return poisson(float(parts[1])) if kind == "poisson" else \
            workload.deterministic(float(parts[1]))
    if kind == "diurnal":
        segs = []
        for item in parts[1].split(","):
            dur_s, rate = item.split(":")
            segs.append((_us(float(dur_s)), float(rate)))
        return workload.diurnal(segs)
    raise ConfigError(f"unknown arrivals kind {kind!r}")


def _population(scenario: Scenario) -> UserPopulation:
    return build_skewed_population(scenario.users, scenario.skew)


def _policy(scenario: Scenario, collect_traces: bool = False, **overrides) -> PolicySet:
    scaler = None
    if scenario.autoscale:
        scaler = AutoscalerPolicy(threshold=scenario.threshold,
                                  window_us=_us(scenario.window_s),
                                  startup_delay_us=_us(scenario.startup_delay_s))
    limiter = None
    if scenario.rate_limit:
        limiter = management.RateLimiterConfig(rate_per_s=scenario.rate_limit[0],
                                               burst=int(scenario.rate_limit[1]))
    faults = _fault_plan(scenario)
    serverless_cfg = ServerlessConfig(state_store=scenario.state_store) \
        if scenario.serverless else None
    kwargs = dict(autoscaler=scaler, rate_limiter=limiter, faults=faults,
                  serverless=serverless_cfg, conn_pool_k=scenario.pool_k,
                  monitor_window_us=_us(scenario.window_s),
                  collect_traces=collect_traces)
    kwargs.update(overrides)
    return PolicySet(**kwargs)


def _fault_plan(scenario: Scenario) -> FaultPlan | None:
    slow = mis = hot = None
    if scenario.fault_slow:
        frac, freq, start_s = scenario.fault_slow
        slow = SlowServers(fraction=frac, frequency=freq, start_us=_us(start_s))
    if scenario.fault_misroute:
        svc, idx, s0, s1 = scenario.fault_misroute
        mis = management.Misroute(service=svc, instance_index=int(idx),
                                  start_us=_us(s0), end_us=_us(s1))
    if scenario.fault_hotspot:
        svc, factor, s0, s1 = scenario.fault_hotspot
        hot = Hotspot(service=svc, factor=factor, start_us=_us(s0), end_us=_us(s1))
    if slow or mis or hot:
        return FaultPlan(slow_servers=slow, misroute=mis, hotspot=hot)
    return None


def _write_summary(out: Path, summary: dict) -> None:
    out.joinpath("summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_run_artifacts(out: Path, tag: str, result) -> None:
    export_csv(result, "latency", out / f"{tag}_latency.csv")
    export_csv(result, "heatmap_util", out / f"{tag}_heatmap_util.csv")
    export_csv(result, "heatmap_latency", out / f"{tag}_heatmap_latency.csv")
    export_csv(result, "scale_timeline", out / f"{tag}_scale_timeline.csv")
    if result.traces:
        tracing.export_traces_jsonl(result.traces, out / f"{tag}_traces.jsonl")


def _rewrite_protocols(node: CallNode, protocol: str) -> CallNode:
    return replace(node, protocol=protocol,
                   children=tuple(_rewrite_protocols(c, protocol) for c in node.children))


def _with_protocol(topo: Topology, protocol: str) -> Topology:
    classes = tuple(replace(c, root=_rewrite_protocols(c.root, protocol))
                    for c in topo.classes)
    return replace(topo, classes=classes)


def _qos_us(topo: Topology) -> int:
    # Experiments treat the largest per-class target as the end-to-end QoS.
    return max(c.qos_target_p99_us for c in topo.classes)


# --------------------------------------------------------------------------
# Experiments

def run_single(scenario: Scenario, out: Path) -> dict:
    topo = scenario.resolve_topology()
    plan = WorkloadPlan(_arrival_process(scenario, default_rate=500),
                        _population(scenario))
    policy = _policy(scenario, collect_traces=True)
    duration = _us(scenario.duration_s or 30.0)
    warmup = _us(scenario.warmup_s if scenario.warmup_s is not None else 2.0)
    result = engine.run(topo, plan, policy, scenario.seed, duration, warmup)
    _write_run_artifacts(out, "run", result)
    qos = _qos_us(topo)
    summary = {
        "counters": result.counters,
        "p99_us": result.p99_us(),
        "qos_p99_us": qos,
        "goodput_rps": goodput(result, qos),
        "config_digest": result.config_digest,
    }
    print(f"single_run: p99={summary['p99_us']}us qos={qos}us "
          f"goodput={summary['goodput_rps']:.1f}rps")
    return summary


# Offered rates for the backpressure demonstration. Case A drives the
# pipelined front-end past its compute capacity (a hotspot autoscaling can
# fix); Case B offers less than half of that, yet the single blocked
# connection per instance still saturates the front-end.
_BP_RATE_CASE_A = 4900.0
_BP_RATE_CASE_B = 2000.0


def run_backpressure(scenario: Scenario, out: Path) -> dict:
    base = scenario.resolve_topology()
    qos = _qos_us(base)
    duration = _us(scenario.duration_s or 90.0)
    scenario = replace(scenario, autoscale=True)

    cases = {
        "case_a": (_with_protocol(base, "rpc_pipelined"), _BP_RATE_CASE_A, 8),
        "case_b": (base, _BP_RATE_CASE_B, 1),
        "case_b_k8": (base, _BP_RATE_CASE_B, 8),
    }
    summary: dict = {"qos_p99_us": qos, "window_us": _us(scenario.window_s)}
    for tag, (topo, rate, pool_k) in cases.items():
        plan = WorkloadPlan(poisson(scenario.rate or rate), _population(scenario))
        policy = _policy(replace(scenario, pool_k=pool_k))
        result = engine.run(topo, plan, policy, scenario.seed, duration, 0)
        _write_run_artifacts(out, tag, result)
        front, down = topo.classes[0].root.target, topo.classes[0].root.children[0].target
        first_scale = next((t for t, svc, _ in result.scale_timeline
                            if t > 0 and svc == front), None)
        summary[tag] = {
            "offered_rps": rate,
            "pool_k": pool_k,
            "front_util": result.series[front]["utilization"],
            "downstream_util": result.series[down]["utilization"],
            "p99_series_us": result.latency_p99_series,
            "tick_us": result.tick_us,
            "front_instances": result.series[front]["instances"],
            "first_scale_us": first_scale,
            "counters": result.counters,
        }
        print(f"backpressure {tag}: peak front util="
              f"{max(result.series[front]['utilization']):.2f} "
              f"final p99={result.latency_p99_series[-1]}us")
    return summary


_CASCADE_RATE = 450.0
_CASCADE_HOTSPOT = ("post_db", 7.0, 25.0, 115.0)  # service, factor, start_s, end_s
_CASCADE_RAMP_S = 80.0
_CASCADE_WINDOW_S = 1.0


def run_cascading(scenario: Scenario, out: Path) -> dict:
    topo = scenario.resolve_topology()
    svc, factor, s0, s1 = scenario.fault_hotspot or _CASCADE_HOTSPOT
    hotspot = Hotspot(service=svc, factor=factor, start_us=_us(s0), end_us=_us(s1),
                      ramp_us=_us(_CASCADE_RAMP_S))
    plan = WorkloadPlan(_arrival_process(scenario, _CASCADE_RATE), _population(scenario))
    policy = _policy(scenario)
    policy = replace(policy, faults=FaultPlan(hotspot=hotspot),
                     monitor_window_us=_us(_CASCADE_WINDOW_S))
    duration = _us(scenario.duration_s or (s1 + 10.0))
    result = engine.run(topo, plan, policy, scenario.seed, duration, 0)
    _write_run_artifacts(out, "cascade", result)

    spans0 = zero_load_span_means_us(topo)
    thresholds = {name: int(round(5 * spans0[name])) for name in spans0}
    ticks = metrics.violation_ticks(result, thresholds)
    chain = _chain_to(topo, svc)
    summary = {
        "hotspot": {"service": svc, "factor": factor, "start_us": _us(s0),
                    "end_us": _us(s1), "ramp_us": hotspot.ramp_us},
        "thresholds_us": thresholds,
        "violation_tick": ticks,
        "chain_backend_to_frontend": chain,
        "chain_violation_ticks": [ticks.get(name) for name in chain],
        "window_us": policy.monitor_window_us,
    }
    print(f"cascading: chain {chain} violation ticks {summary['chain_violation_ticks']}")
    return summary


def _chain_to(topo: Topology, target: str) -> list[str]:
    """Call chain from `target` back up to the front-end (deepest class wins)."""
    best: list[str] = []

    def visit(node: CallNode, path: list[str]) -> None:
        nonlocal best
        path = path + [node.target]
        if node.target == target and len(path) > len(best):
            best = path
        for child in node.children:
            visit(child, path)

    for cls in topo.classes:
        visit(cls.root, [])
    return list(reversed(best))


_FREQ_SEARCH = dict(lo=20.0, hi=2500.0, tol=0.1)


def run_freq_sweep(scenario: Scenario, out: Path) -> dict:
    """Tail latency across a (frequency x load) grid per topology.

    The sensitivity comparison runs every topology at the same absolute
    reference load (half the first topology's fault-free max), so the
    graphs see equivalent total demand while frequency drops.
    """
    names = [scenario.preset] if scenario.preset else ["social_network", "social_monolith"]
    freqs = scenario.freqs
    summary: dict = {"freqs": list(freqs)}
    pop = _population(scenario)
    reference = goodput_search(presets.preset(names[0]),
                               WorkloadPlan(poisson(1.0), pop), _policy(scenario),
                               _qos_us(presets.preset(names[0])),
                               derive_seed(scenario.seed, f"freq:{names[0]}"),
                               **_FREQ_SEARCH)
    half_load = reference * 0.5
    summary["reference_max_rps"] = reference
    summary["half_load_rps"] = half_load
    for name in names:
        topo = presets.preset(name)
        qos = _qos_us(topo)
        loads = list(scenario.loads) or [round(reference * f, 1) for f in
                                         (0.25, 0.5, 0.75, 1.0)]
        rows = []
        min_freq = None
        for freq in freqs:
            row = []
            for load in loads:
                policy = _policy(scenario, host_frequency=freq)
                plan = WorkloadPlan(poisson(load), pop)
                result = engine.run(topo, plan, policy,
                                    derive_seed(scenario.seed, f"{name}:{freq}:{load}"),
                                    _us(scenario.duration_s or 12.0), _us(2.0))
                row.append(result.p99_us() or 0)
            rows.append(row)
            policy = _policy(scenario, host_frequency=freq)
            plan = WorkloadPlan(poisson(half_load), pop)
            result = engine.run(topo, plan, policy,
                                derive_seed(scenario.seed, f"{name}:half:{freq}"),
                                _us(scenario.duration_s or 12.0), _us(2.0))
            if (result.p99_us() or 0) <= qos:
                min_freq = freq if min_freq is None else min(min_freq, freq)
        path = out / f"freq_heatmap_{name}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("freq," + ",".join(str(l) for l in loads) + "\n")
            for freq, row in zip(freqs, rows):
                fh.write(f"{freq}," + ",".join(str(v) for v in row) + "\n")
        summary[name] = {"loads": loads, "qos_p99_us": qos, "p99_matrix_us": rows,
                         "min_freq_meeting_qos_at_half_load": min_freq}
        print(f"freq_sweep {name}: min feasible freq at {half_load:.0f}rps = {min_freq}")
    return summary


_SKEW_SEARCH = dict(lo=8.0, hi=1600.0, tol=0.1)


def run_skew_sweep(scenario: Scenario, out: Path) -> dict:
    topo = scenario.resolve_topology()
    qos = _qos_us(topo)
    points = []
    results = {}
    for skew in scenario.skews:
        pop = build_skewed_population(scenario.users, skew)
        plan = WorkloadPlan(poisson(1.0), pop)
        try:
            # One seed for every skew: probe i at a given rate replays the
            # same arrival realization, so the sweep is noise-monotone.
            rate = goodput_search(topo, plan, _policy(scenario), qos,
                                  scenario.seed, **_SKEW_SEARCH)
        except NoFeasibleRate:
            rate = 0.0
        results[skew] = rate
        points.append((skew, GoodputPoint(rate, rate, rate > 0)))
        print(f"skew_sweep skew={skew}: goodput={rate:.1f}rps")
    export_csv(None, "goodput_curve", out / "goodput_vs_skew.csv", points=points)
    return {"qos_p99_us": qos, "goodput_by_skew": {str(k): v for k, v in results.items()}}


_SLOW_FRACTION = 0.01
_SLOW_FREQ = 0.5
_SLOW_SEARCH = dict(lo=20.0, hi=2500.0, tol=0.1)
_SLOW_OPERATING_POINT = 0.9  # fraction of fault-free max used as offered load


def run_slow_server_sweep(scenario: Scenario, out: Path) -> dict:
    """Goodput of the deployment at its nominal operating point when a
    fraction of hosts degrades, for the graph and its monolith."""
    names = [scenario.preset] if scenario.preset else ["social_network", "social_monolith"]
    frac, freq, start_s = scenario.fault_slow or (_SLOW_FRACTION, _SLOW_FREQ, 0.0)
    summary: dict = {"fraction": frac, "frequency": freq}
    points = []
    for name in names:
        topo = presets.preset(name)
        qos = _qos_us(topo)
        pop = _population(scenario)
        plan_proto = WorkloadPlan(poisson(1.0), pop)
        fault_free = goodput_search(topo, plan_proto, _policy(scenario), qos,
                                    derive_seed(scenario.seed, f"slow:{name}"),
                                    **_SLOW_SEARCH)
        operating = fault_free * _SLOW_OPERATING_POINT
        faults = FaultPlan(slow_servers=SlowServers(
            fraction=frac, frequency=freq, start_us=_us(start_s)))
        policy = _policy(scenario)
        policy = replace(policy, faults=faults)
        result = engine.run(topo, WorkloadPlan(poisson(operating), pop), policy,
                            derive_seed(scenario.seed, f"slowrun:{name}"),
                            _us(scenario.duration_s or 20.0), _us(4.0))
        degraded = min(goodput(result, qos), operating)
        ratio = degraded / fault_free if fault_free else 0.0
        summary[name] = {
            "qos_p99_us": qos,
            "fault_free_goodput_rps": fault_free,
            "offered_under_fault_rps": operating,
            "goodput_under_fault_rps": degraded,
            "retained_fraction": ratio,
            "p99_under_fault_us": result.p99_us(),
        }
        points.append((name, GoodputPoint(operating, degraded, degraded > 0,
                                          result.p99_us() or 0)))
        print(f"slow_server {name}: fault-free={fault_free:.0f}rps "
              f"under-fault={degraded:.0f}rps retained={ratio:.2f}")
    export_csv(None, "goodput_curve", out / "goodput_slow_servers.csv", points=points)
    return summary


_EDGE_RATES = (100.0, 200.0, 400.0, 700.0, 1000.0, 1400.0, 2000.0, 2800.0)


def run_edge_vs_cloud(scenario: Scenario, out: Path) -> dict:
    rates = list(scenario.rates) or list(_EDGE_RATES)
    summary: dict = {"rates": rates}
    tail_target = None
    for name in ("swarm_edge", "swarm_cloud"):
        topo = presets.preset(name)
        qos = _qos_us(topo)
        tail_target = qos if tail_target is None else min(tail_target, qos)
        pop = _population(scenario)
        points = []
        p99s = []
        for i, rate in enumerate(rates):
            plan = WorkloadPlan(poisson(rate), pop)
            result = engine.run(topo, plan, _policy(scenario),
                                derive_seed(scenario.seed, f"{name}:{i}"),
                                _us(scenario.duration_s or 15.0), _us(3.0))
            p99 = result.p99_us() or 0
            p99s.append(p99)
            points.append((rate, GoodputPoint(rate, goodput(result, qos), p99 <= qos, p99)))
        export_csv(None, "goodput_curve", out / f"latency_vs_load_{name}.csv",
                   points=points)
        summary[name] = {"qos_p99_us": qos, "p99_by_rate_us": p99s}
        print(f"edge_vs_cloud {name}: p99 at {rates[0]}rps = {p99s[0]}us")
    edge, cloud = summary["swarm_edge"], summary["swarm_cloud"]
    max_under = lambda entry: max(
        (r for r, p in zip(rates, entry["p99_by_rate_us"]) if p <= tail_target),
        default=0.0)
    summary["tail_target_us"] = tail_target
    summary["edge_max_rps_under_target"] = max_under(edge)
    summary["cloud_max_rps_under_target"] = max_under(cloud)
    return summary


_SERVERLESS_COMPARE_RATE = 150.0
_SERVERLESS_PEAK = 3400.0


def run_serverless_compare(scenario: Scenario, out: Path) -> dict:
    topo = scenario.resolve_topology()
    qos = _qos_us(topo)
    pop = _population(scenario)
    seed = scenario.seed

    # (a) state-store comparison under identical seeds
    plan = WorkloadPlan(poisson(scenario.rate or _SERVERLESS_COMPARE_RATE), pop)
    dur = _us(scenario.duration_s or 20.0)
    medians = {}
    for store in ("s3_like", "remote_memory"):
        cfg = ServerlessConfig(state_store=store)
        result = management.serverless_run(topo, plan, cfg, seed, dur)
        medians[store] = tracing.percentile(result.all_latencies(), 50)
        export_csv(result, "latency", out / f"serverless_{store}_latency.csv")

    # (b) diurnal pattern: serverful autoscaler vs serverless elasticity
    day = diurnal_day(_SERVERLESS_PEAK, segment_s=30)
    day_dur = sum(d for d, _ in day.segments)
    day_plan = WorkloadPlan(day, pop)
    serverful_policy = _policy(replace(scenario, autoscale=True))
    serverful = engine.run(topo, day_plan, serverful_policy, seed, day_dur, 0)
    mem_cfg = ServerlessConfig(state_store="remote_memory")
    lambda_like = management.serverless_run(topo, day_plan, mem_cfg, seed, day_dur)
    steps = _step_up_times(day)
    above = {
        "serverful_us": sum(metrics.time_above_qos_us(serverful, qos, t0, t1)
                            for t0, t1 in steps),
        "serverless_us": sum(metrics.time_above_qos_us(lambda_like, qos, t0, t1)
                             for t0, t1 in steps),
    }
    export_csv(serverful, "scale_timeline", out / "serverful_scale_timeline.csv")

    # (c) cost for an intermittent, low-duty workload
    low_duty = WorkloadPlan(intermittent(200.0, 20, 2.0, 300), pop)
    cheap_dur = 300_000_000
    serverful_idle = engine.run(topo, low_duty, _policy(scenario), seed, cheap_dur, 0)
    lambda_idle = management.serverless_run(topo, low_duty, mem_cfg, seed, cheap_dur)
    costs = management.cost_report(serverful_idle, lambda_idle, mem_cfg)

    summary = {
        "median_latency_us": medians,
        "qos_p99_us": qos,
        "time_above_qos_after_step_up": above,
        "intermittent_cost": dataclasses.asdict(costs),
    }
    print(f"serverless: s3 median={medians['s3_like']}us "
          f"mem median={medians['remote_memory']}us; step-up violation "
          f"serverful={above['serverful_us']}us serverless={above['serverless_us']}us; "
          f"cost ratio={costs.ratio:.1f}x")
    return summary


def _step_up_times(process) -> list[tuple[int, int]]:
    """Windows following each load increase in a diurnal pattern."""
    out = []
    t = 0
    prev_rate = None
    for dur, rate in process.segments:
        if prev_rate is not None and rate > prev_rate:
            out.append((t, t + dur))
        t += dur
        prev_rate = rate
    return out


_RECOVERY_HOTSPOT = ("post_db", 3.0, 30.0, 50.0)
_RECOVERY_RATES = {"social_network": 420.0, "social_monolith": 420.0}


def run_recovery_compare(scenario: Scenario, out: Path) -> dict:
    svc, factor, s0, s1 = scenario.fault_hotspot or _RECOVERY_HOTSPOT
    duration = _us(scenario.duration_s or 150.0)
    summary: dict = {"hotspot": {"service": svc, "factor": factor,
                                 "start_us": _us(s0), "end_us": _us(s1)}}
    for name in ("social_network", "social_monolith"):
        topo = presets.preset(name)
        qos = _qos_us(topo)
        plan = WorkloadPlan(poisson(scenario.rate or _RECOVERY_RATES[name]),
                            _population(scenario))
        policy = _policy(replace(scenario, autoscale=True))
        policy = replace(policy, faults=FaultPlan(hotspot=Hotspot(
            service=svc, factor=factor, start_us=_us(s0), end_us=_us(s1))))
        result = engine.run(topo, plan, policy, scenario.seed, duration, 0)
        _write_run_artifacts(out, f"recovery_{name}", result)
        violation, recovery = _violation_window(result, qos)
        summary[name] = {
            "qos_p99_us": qos,
            "violation_start_us": violation,
            "qos_restored_us": recovery,
            "recovery_time_us": (recovery - violation)
            if violation is not None and recovery is not None else None,
        }
        print(f"recovery {name}: violated at {violation}us, restored at {recovery}us")
    return summary


def _violation_window(result, qos_us: int) -> tuple[int | None, int | None]:
    """First violating tick and the first tick after it where QoS holds again
    (and keeps holding for the remainder or at least two ticks)."""
    violation = None
    recovery = None
    series = list(zip(result.tick_us, result.latency_p99_series))
    for i, (t, p99) in enumerate(series):
        if violation is None:
            if p99 > qos_us:
                violation = t
        elif p99 <= qos_us:
            follow = [q for _, q in series[i + 1:i + 3]]
            if all(q <= qos_us for q in follow):
                recovery = t
                break
    return violation, recovery


def run_goodput_search(scenario: Scenario, out: Path) -> dict:
    topo = scenario.resolve_topology()
    qos = _qos_us(topo)
    plan = WorkloadPlan(poisson(1.0), _population(scenario))
    log: list[GoodputPoint] = []
    try:
        rate = goodput_search(topo, plan, _policy(scenario), qos, scenario.seed,
                              lo=scenario.rates[0] if scenario.rates else 20.0,
                              hi=scenario.rates[-1] if scenario.rates else 3000.0,
                              tol=0.05, probe_log=log)
    except NoFeasibleRate:
        rate = 0.0
    export_csv(None, "goodput_curve", out / "goodput_probes.csv",
               points=[(i, p) for i, p in enumerate(log)])
    print(f"goodput_search: max sustainable rate={rate:.1f}rps (qos {qos}us)")
    return {"qos_p99_us": qos, "max_rate_rps": rate,
            "probes": [dataclasses.asdict(p) for p in log]}


_RUNNERS = {
    "single_run": run_single,
    "backpressure": run_backpressure,
    "cascading": run_cascading,
    "freq_sweep": run_freq_sweep,
    "skew_sweep": run_skew_sweep,
    "slow_server_sweep": run_slow_server_sweep,
    "edge_vs_cloud": run_edge_vs_cloud,
    "serverless_compare": run_serverless_compare,
    "recovery_compare": run_recovery_compare,
    "goodput_search": run_goodput_search,
}


def run_experiment(scenario: Scenario) -> dict:
    """Execute one named experiment; writes artifacts and summary.json."""
    if scenario.experiment not in _RUNNERS:
        raise ConfigError(f"unknown experiment {scenario.experiment!r}; "
                          f"choose from {', '.join(EXPERIMENTS)}")
    out = Path(scenario.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = _RUNNERS[scenario.experiment](scenario, out)
    _write_summary(out, summary)
    return summary
