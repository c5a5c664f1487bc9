"""Topology parsing, validation, presets, and the monolith transform."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import microsim as ms
from microsim.presets import PRESET_NAMES
from microsim.topology import (class_compute_demand_us, det, exp, logn,
                               render, require_valid, resolve_qos)

MINIMAL_DOC = """
[service a]
service_time = det 1000
network_time = det 0
cores = 1
instances = 1
max_instances = 1
tier = logic
placement = cloud

[class only]
weight = 1.0
qos_p99_us = 5000
-> a seq rpc
"""


def test_load_minimal_document():
    topo = ms.load_topology(MINIMAL_DOC)
    assert len(topo.services) == 1
    assert len(topo.classes) == 1
    assert topo.services["a"].service_time == det(1000)
    assert topo.classes[0].root.target == "a"


def test_weight_sum_violation_rejected():
    doc = MINIMAL_DOC.replace("weight = 1.0", "weight = 0.5") + """
[class extra]
weight = 0.4
-> a seq rpc
"""
    with pytest.raises(ms.ValidationError, match="sum"):
        ms.load_topology(doc)


def test_dangling_target_named_in_error():
    doc = MINIMAL_DOC.replace("-> a seq rpc", "-> ghost seq rpc")
    with pytest.raises(ms.ValidationError, match="ghost"):
        ms.load_topology(doc)


def test_unknown_keys_rejected():
    doc = MINIMAL_DOC.replace("cores = 1", "cores = 1\nflavor = vanilla")
    with pytest.raises(ms.ParseError, match="flavor"):
        ms.load_topology(doc)


def test_nonpositive_mean_rejected():
    doc = MINIMAL_DOC.replace("service_time = det 1000", "service_time = exp 0")
    with pytest.raises(ms.ValidationError):
        ms.load_topology(doc)


def _service(name, **kw):
    defaults = dict(service_time=exp(1000), network_time=det(0))
    defaults.update(kw)
    return ms.ServiceSpec(name=name, **defaults)


def _topo(services, classes, rtt=0):
    return ms.Topology(services={s.name: s for s in services},
                       classes=tuple(classes), edge_cloud_rtt_us=rtt)


def test_validate_reports_instance_bounds():
    topo = _topo([_service("a", initial_instances=3, max_instances=2)],
                 [ms.RequestClass("c", ms.CallNode("a"), 1.0, 1000)])
    issues = ms.validate(topo)
    assert len(issues) == 1
    assert "max_instances" in issues[0].message


def test_validate_reports_negative_sigma():
    topo = _topo([_service("a", service_time=logn(1000, -0.5))],
                 [ms.RequestClass("c", ms.CallNode("a"), 1.0, 1000)])
    issues = ms.validate(topo)
    assert len(issues) == 1
    assert "sigma" in issues[0].message


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_validate_clean(name):
    assert ms.validate(ms.preset(name)) == []


def test_two_tier_shape():
    topo = ms.preset("two_tier")
    assert len(topo.services) == 2
    root = topo.classes[0].root
    assert root.children[0].protocol == "http1_blocking"


def test_swarm_cloud_edge_devices_call_cloud():
    topo = ms.preset("swarm_cloud")
    assert topo.edge_cloud_rtt_us > 0
    edge = [s for s in topo.services.values() if s.placement == "edge"]
    assert edge and all(s.tier_kind == "edge_device" for s in edge)
    # every class enters at an edge device and reaches a cloud service
    for cls in topo.classes:
        assert topo.services[cls.root.target].placement == "edge"
        targets = [n.target for n in cls.root.walk()]
        assert any(topo.services[t].placement == "cloud" for t in targets)


def test_unknown_preset():
    with pytest.raises(ms.UnknownPreset):
        ms.preset("ghost")


def test_monolith_sums_sequential_chain():
    a, b, c = (_service(n, service_time=det(m)) for n, m in
               [("a", 1000), ("b", 2000), ("c", 3000)])
    db = _service("db", service_time=det(4000), tier_kind="database")
    tree = ms.CallNode("a", children=(
        ms.CallNode("b", children=(
            ms.CallNode("c", children=(ms.CallNode("db"),)),)),))
    topo = _topo([a, b, c, db], [ms.RequestClass("w", tree, 1.0, 10**6)])
    mono = ms.to_monolith(topo)
    spec = mono.services["monolith"]
    assert spec.service_time.mean_us == pytest.approx(6000)
    assert mono.services["db"].service_time == det(4000)
    targets = [n.target for n in mono.classes[0].root.walk()]
    assert targets[0] == "monolith" and "db" in targets


def test_monolith_of_two_tier_keeps_cache():
    topo = ms.preset("two_tier")
    mono = ms.to_monolith(topo)
    assert set(mono.services) == {"monolith", "kvcache"}
    front = topo.services["front"]
    assert mono.services["monolith"].service_time.mean_us == pytest.approx(
        front.service_time.mean_us)
    assert mono.services["kvcache"] == topo.services["kvcache"]


def test_monolith_parallel_fanout_counts_total_work():
    # Parallel branches of 1000us and 2000us: demand is the 3000us total,
    # not the 2000us critical path.
    a = _service("a", service_time=det(1))
    b = _service("b", service_time=det(1000))
    c = _service("c", service_time=det(2000))
    tree = ms.CallNode("a", mode="parallel",
                       children=(ms.CallNode("b"), ms.CallNode("c")))
    topo = _topo([a, b, c], [ms.RequestClass("w", tree, 1.0, 10**6)])
    mono = ms.to_monolith(topo)
    assert mono.services["monolith"].service_time.mean_us == pytest.approx(3001)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_monolith_preserves_per_class_demand(name):
    topo = ms.preset(name)
    mono = ms.to_monolith(topo)
    base = mono.services["monolith"].service_time.mean_us
    for cls, mcls in zip(topo.classes, mono.classes):
        before = class_compute_demand_us(topo, cls, stateless_only=True)
        after = base * mcls.root.work_scale
        assert abs(before - after) / before < 1e-9
        # storage demand is preserved verbatim
        storage_before = (class_compute_demand_us(topo, cls)
                          - before)
        storage_after = sum(
            topo.services[n.target].service_time.mean_us * n.work_scale
            for n in mcls.root.walk() if n.target != "monolith")
        assert storage_after == pytest.approx(storage_before)


def test_monolith_requires_stateless_tier():
    db = _service("db", tier_kind="database")
    topo = _topo([db], [ms.RequestClass("w", ms.CallNode("db"), 1.0, 1000)])
    with pytest.raises(ms.ValidationError):
        ms.to_monolith(topo)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_render_round_trips_presets(name):
    topo = resolve_qos(ms.preset(name))
    assert ms.load_topology(render(topo)) == topo


_dist = st.one_of(
    st.floats(1.0, 1e6).map(lambda m: det(round(m, 3))),
    st.floats(1.0, 1e6).map(lambda m: exp(round(m, 3))),
    st.tuples(st.floats(1.0, 1e6), st.floats(0.0, 3.0)).map(
        lambda t: logn(round(t[0], 3), round(t[1], 3))),
)


@st.composite
def _topologies(draw):
    n = draw(st.integers(1, 5))
    names = [f"s{i}" for i in range(n)]
    services = []
    for name in names:
        services.append(ms.ServiceSpec(
            name=name,
            service_time=draw(_dist),
            network_time=draw(st.one_of(st.just(det(0)), _dist)),
            cores_per_instance=draw(st.integers(1, 8)),
            initial_instances=(ini := draw(st.integers(1, 4))),
            max_instances=draw(st.integers(ini, 8)),
            tier_kind=draw(st.sampled_from(ms.topology.TIERS)),
            placement=draw(st.sampled_from(["cloud", "edge"])),
            shard_by_user=draw(st.booleans()),
            user_scaled=draw(st.booleans()),
        ))

    def tree(depth, used):
        target = draw(st.sampled_from(names))
        children = ()
        if depth < 2 and draw(st.booleans()):
            children = tuple(tree(depth + 1, used) for _ in range(draw(st.integers(1, 2))))
        return ms.CallNode(
            target=target, mode=draw(st.sampled_from(["sequential", "parallel"])),
            protocol=draw(st.sampled_from(["rpc_pipelined", "http1_blocking"])),
            children=children,
            work_scale=float(draw(st.integers(1, 5))),
        )

    classes = [ms.RequestClass("c0", tree(0, set()), 1.0,
                               draw(st.integers(1, 10**7)))]
    return ms.Topology(services={s.name: s for s in services},
                       classes=tuple(classes),
                       edge_cloud_rtt_us=draw(st.integers(0, 10**6)))


@settings(max_examples=50, deadline=None)
@given(_topologies())
def test_render_round_trips_generated(topo):
    require_valid(topo)
    assert ms.load_topology(render(topo)) == topo
