"""Built-in topology presets.

Each preset is a reduced-fidelity, documented approximation of one of the
benchmark service architectures: a two-tier webserver/cache pair, a
social network (front-end, logic fan-out, cache/database layers), an
e-commerce shop, and the drone-swarm service in its edge-heavy and
cloud-heavy configurations. Service-time means are exponential with
documented means chosen so each preset saturates at desk-scale request
rates; QoS targets are explicit per class.
"""

from __future__ import annotations

from .errors import UnknownPreset
from .topology import (CallNode, RequestClass, ServiceSpec, Topology, det, exp,
                       require_valid, to_monolith)

PRESET_NAMES = ("two_tier", "social_network", "social_monolith", "ecommerce",
                "swarm_edge", "swarm_cloud")


def _svc(name, mean_us, net_us, cores, instances, max_instances, tier,
         placement="cloud", shard=False, user_scaled=False) -> ServiceSpec:
    return ServiceSpec(
        name=name, service_time=exp(mean_us), network_time=det(net_us),
        cores_per_instance=cores, initial_instances=instances,
        max_instances=max_instances, tier_kind=tier, placement=placement,
        shard_by_user=shard, user_scaled=user_scaled)


def _call(target, children=(), mode="sequential", protocol="rpc_pipelined",
          scale=1.0) -> CallNode:
    return CallNode(target=target, mode=mode, protocol=protocol,
                    children=tuple(children), work_scale=scale)


def two_tier() -> Topology:
    """Webserver in front of an in-memory key-value cache.

    The front-end edge is blocking HTTP1: with a small connection pool the
    cache can throttle the front-end long before either tier runs out of
    compute, which is the backpressure demonstration setup.
    """
    services = {
        "front": _svc("front", 1500, 200, cores=4, instances=2, max_instances=4,
                      tier="frontend"),
        "kvcache": _svc("kvcache", 1000, 200, cores=2, instances=8, max_instances=8,
                        tier="cache"),
    }
    get = RequestClass(
        name="get", weight=1.0, qos_target_p99_us=30_000,
        root=_call("front", [_call("kvcache", protocol="http1_blocking")],
                   protocol="http1_blocking"))
    return require_valid(Topology(services=services, classes=(get,)))


# Social-network sizing knobs, µs unless noted. The timeline tier is the
# wide parallel fan-out every request rides; the timeline cache is sharded
# by user range and its per-request work scales with the caller's traffic
# share (hot users have long timelines and large follower broadcasts).
_SN_FANOUT = 12
_SN_QOS_US = 200_000


def social_network() -> Topology:
    """Twelve-service social network: front-end, logic fan-out, storage.

    Structural approximation of the full graph (which has ~3x more
    services than modeled here): one load-balanced front-end, five logic
    tiers with a wide parallel timeline fan-out, three caches, three
    databases.
    """
    services = {
        "front": _svc("front", 1000, 200, cores=4, instances=6, max_instances=12,
                      tier="frontend"),
        "read_tl": _svc("read_tl", 1200, 200, cores=2, instances=6, max_instances=12,
                        tier="logic"),
        "compose": _svc("compose", 1500, 200, cores=2, instances=6, max_instances=12,
                        tier="logic"),
        "timeline_svc": _svc("timeline_svc", 1500, 200, cores=2, instances=6,
                             max_instances=12, tier="logic"),
        "text_svc": _svc("text_svc", 800, 200, cores=1, instances=6, max_instances=12,
                         tier="logic"),
        "graph_svc": _svc("graph_svc", 800, 200, cores=1, instances=6, max_instances=12,
                          tier="logic"),
        "tl_cache": _svc("tl_cache", 1100, 150, cores=3, instances=4, max_instances=4,
                         tier="cache", shard=True, user_scaled=True),
        "post_cache": _svc("post_cache", 500, 150, cores=2, instances=6, max_instances=6,
                           tier="cache"),
        "social_cache": _svc("social_cache", 400, 150, cores=2, instances=6,
                             max_instances=6, tier="cache"),
        "post_db": _svc("post_db", 2500, 150, cores=1, instances=3, max_instances=3,
                        tier="database"),
        "social_db": _svc("social_db", 2000, 150, cores=2, instances=6, max_instances=6,
                          tier="database"),
        "media_db": _svc("media_db", 1800, 150, cores=2, instances=6, max_instances=6,
                         tier="database"),
    }
    tl_branch = [_call("timeline_svc", [_call("tl_cache")]) for _ in range(_SN_FANOUT)]
    read = RequestClass(
        name="read_timeline", weight=0.6, qos_target_p99_us=_SN_QOS_US,
        root=_call("front", protocol="http1_blocking", children=[
            _call("read_tl", protocol="http1_blocking", mode="parallel", children=[
                *tl_branch,
                _call("post_cache", [_call("post_db")]),
                _call("social_cache", [_call("social_db")]),
            ]),
        ]))
    compose = RequestClass(
        name="compose_post", weight=0.4, qos_target_p99_us=_SN_QOS_US,
        root=_call("front", protocol="http1_blocking", children=[
            _call("compose", protocol="http1_blocking", mode="parallel", children=[
                _call("text_svc"),
                _call("graph_svc", [_call("social_cache", [_call("social_db")])]),
                *[_call("timeline_svc", [_call("tl_cache")]) for _ in range(_SN_FANOUT)],
                _call("post_db"),
                _call("media_db"),
            ]),
        ]))
    return require_valid(Topology(services=services, classes=(read, compose)))


def social_monolith() -> Topology:
    """The social network with all stateless tiers collapsed into one binary."""
    return to_monolith(social_network())


def ecommerce() -> Topology:
    """Clothing shop: browsing is cheap, placing an order takes an order of
    magnitude longer (login, cart, payment, shipping, serialized commit)."""
    services = {
        "front": _svc("front", 1000, 250, cores=4, instances=4, max_instances=8,
                      tier="frontend"),
        "catalogue": _svc("catalogue", 800, 200, cores=2, instances=4, max_instances=8,
                          tier="logic"),
        "recommender": _svc("recommender", 2500, 150, cores=2, instances=2,
                            max_instances=4, tier="logic"),
        "orders": _svc("orders", 15_000, 200, cores=2, instances=4, max_instances=8,
                       tier="logic"),
        "login": _svc("login", 1000, 150, cores=1, instances=2, max_instances=4,
                      tier="logic"),
        "cart": _svc("cart", 1200, 150, cores=1, instances=2, max_instances=4,
                     tier="logic"),
        "payment": _svc("payment", 12_000, 150, cores=2, instances=4, max_instances=8,
                        tier="logic"),
        "shipping": _svc("shipping", 1500, 150, cores=1, instances=2, max_instances=4,
                         tier="logic"),
        "queue_master": _svc("queue_master", 2000, 150, cores=1, instances=1,
                             max_instances=1, tier="logic"),
        "wishlist": _svc("wishlist", 600, 100, cores=1, instances=2, max_instances=4,
                         tier="logic"),
        "item_cache": _svc("item_cache", 300, 100, cores=2, instances=4, max_instances=4,
                           tier="cache"),
        "catalogue_db": _svc("catalogue_db", 1200, 100, cores=2, instances=4,
                             max_instances=4, tier="database"),
        "orders_db": _svc("orders_db", 2000, 100, cores=2, instances=2, max_instances=2,
                          tier="database"),
        "users_db": _svc("users_db", 1500, 100, cores=2, instances=2, max_instances=2,
                         tier="database"),
    }
    browse = RequestClass(
        name="browse", weight=0.8, qos_target_p99_us=60_000,
        root=_call("front", protocol="http1_blocking", children=[
            _call("catalogue", mode="parallel", protocol="http1_blocking", children=[
                _call("item_cache", [_call("catalogue_db")]),
                _call("recommender"),
                _call("wishlist"),
            ]),
        ]))
    order = RequestClass(
        name="place_order", weight=0.2, qos_target_p99_us=400_000,
        root=_call("front", protocol="http1_blocking", children=[
            _call("orders", protocol="http1_blocking", children=[
                _call("login", [_call("users_db")]),
                _call("cart", [_call("item_cache")]),
                _call("payment"),
                _call("shipping"),
                _call("queue_master", [_call("orders_db")]),
            ]),
        ]))
    return require_valid(Topology(services=services, classes=(browse, order)))


_SWARM_RTT_US = 20_000  # edge <-> cloud round trip (wireless + WAN)


def swarm_edge() -> Topology:
    """Drone swarm computing on-board: no WAN hop, but wimpy edge cores."""
    services = {
        "drone_ctrl": _svc("drone_ctrl", 800, 300, cores=1, instances=8,
                           max_instances=8, tier="edge_device", placement="edge"),
        "motion": _svc("motion", 1200, 300, cores=1, instances=8, max_instances=8,
                       tier="edge_device", placement="edge"),
        "image_rec": _svc("image_rec", 9000, 300, cores=1, instances=8, max_instances=8,
                          tier="edge_device", placement="edge"),
        "route_cloud": _svc("route_cloud", 1500, 200, cores=4, instances=2,
                            max_instances=4, tier="logic", placement="cloud"),
    }
    telemetry = RequestClass(
        name="telemetry", weight=0.8, qos_target_p99_us=60_000,
        root=_call("drone_ctrl", [_call("motion", [_call("image_rec")])]))
    plan_route = RequestClass(
        name="plan_route", weight=0.2, qos_target_p99_us=80_000,
        root=_call("drone_ctrl", [_call("route_cloud")]))
    return require_valid(Topology(services=services, classes=(telemetry, plan_route),
                                  edge_cloud_rtt_us=_SWARM_RTT_US))


def swarm_cloud() -> Topology:
    """Drone swarm offloading compute: every request pays the WAN round trip
    but runs on fast, plentiful cloud cores."""
    services = {
        "sensor": _svc("sensor", 300, 300, cores=1, instances=8, max_instances=8,
                       tier="edge_device", placement="edge"),
        "motion_cloud": _svc("motion_cloud", 900, 200, cores=4, instances=4,
                             max_instances=8, tier="logic", placement="cloud"),
        "image_rec_cloud": _svc("image_rec_cloud", 3000, 200, cores=4, instances=8,
                                max_instances=8, tier="logic", placement="cloud"),
        "obstacle_cloud": _svc("obstacle_cloud", 600, 200, cores=4, instances=2,
                               max_instances=4, tier="logic", placement="cloud"),
        "route_cloud": _svc("route_cloud", 1500, 200, cores=4, instances=2,
                            max_instances=4, tier="logic", placement="cloud"),
    }
    telemetry = RequestClass(
        name="telemetry", weight=0.8, qos_target_p99_us=60_000,
        root=_call("sensor", [
            _call("motion_cloud", mode="parallel", children=[
                _call("image_rec_cloud"),
                _call("obstacle_cloud"),
            ]),
        ]))
    plan_route = RequestClass(
        name="plan_route", weight=0.2, qos_target_p99_us=80_000,
        root=_call("sensor", [_call("route_cloud")]))
    return require_valid(Topology(services=services, classes=(telemetry, plan_route),
                                  edge_cloud_rtt_us=_SWARM_RTT_US))


_BUILDERS = {
    "two_tier": two_tier,
    "social_network": social_network,
    "social_monolith": social_monolith,
    "ecommerce": ecommerce,
    "swarm_edge": swarm_edge,
    "swarm_cloud": swarm_cloud,
}


def preset(name: str) -> Topology:
    """Return a validated built-in topology by name."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise UnknownPreset(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}") from None
    return builder()
