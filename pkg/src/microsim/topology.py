"""Service dependency graphs: domain types, config parsing, transforms.

A topology declares services (with timing distributions and instance
limits), request classes (weighted call trees over those services), and
the extra round-trip cost of crossing the edge/cloud boundary. Values are
immutable after construction and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ParseError, ValidationError

TIERS = ("frontend", "logic", "cache", "database", "edge_device")
STORAGE_TIERS = ("cache", "database")
DIST_KINDS = ("deterministic", "exponential", "lognormal")
MODES = ("sequential", "parallel")
PROTOCOLS = ("rpc_pipelined", "http1_blocking")

_DIST_TOKENS = {"det": "deterministic", "exp": "exponential", "logn": "lognormal"}
_DIST_NAMES = {v: k for k, v in _DIST_TOKENS.items()}
_TIER_TOKENS = {"frontend": "frontend", "logic": "logic", "cache": "cache",
                "database": "database", "edge": "edge_device"}
_TIER_NAMES = {v: k for k, v in _TIER_TOKENS.items()}
_MODE_TOKENS = {"seq": "sequential", "par": "parallel"}
_MODE_NAMES = {v: k for k, v in _MODE_TOKENS.items()}
_PROTO_TOKENS = {"rpc": "rpc_pipelined", "http1": "http1_blocking"}
_PROTO_NAMES = {v: k for k, v in _PROTO_TOKENS.items()}


@dataclass(frozen=True)
class DistributionSpec:
    """A service-time or network-time distribution, in microseconds.

    `mean_us` must be positive for compute distributions; a deterministic
    mean of zero is the documented way to express "no network processing".
    """

    kind: str
    mean_us: float
    sigma: float = 0.0

    def cv2(self) -> float:
        """Squared coefficient of variation of the distribution."""
        if self.kind == "deterministic":
            return 0.0
        if self.kind == "exponential":
            return 1.0
        return math.exp(self.sigma ** 2) - 1.0


def det(mean_us: float) -> DistributionSpec:
    return DistributionSpec("deterministic", float(mean_us))


def exp(mean_us: float) -> DistributionSpec:
    return DistributionSpec("exponential", float(mean_us))


def logn(mean_us: float, sigma: float) -> DistributionSpec:
    return DistributionSpec("lognormal", float(mean_us), float(sigma))


@dataclass(frozen=True)
class ServiceSpec:
    """One microservice tier.

    `shard_by_user` routes requests to instances by user-id range instead
    of round-robin (stateful storage shards). `user_scaled` multiplies the
    per-request work by the requesting user's share of total traffic,
    normalized so a uniform population leaves work unchanged; it models
    tiers whose cost grows with a user's footprint (timeline length,
    follower broadcast).
    """

    name: str
    service_time: DistributionSpec
    network_time: DistributionSpec = det(0)
    cores_per_instance: int = 1
    initial_instances: int = 1
    max_instances: int = 1
    tier_kind: str = "logic"
    placement: str = "cloud"
    shard_by_user: bool = False
    user_scaled: bool = False

    def is_storage(self) -> bool:
        return self.tier_kind in STORAGE_TIERS


@dataclass(frozen=True)
class CallNode:
    """One call site in a request's call tree.

    `mode` applies to the children (issue them in order, or together and
    join at the latest completion). `protocol` is how the caller invokes
    this target: `http1_blocking` occupies a caller connection and holds
    the caller's core for the whole exchange, `rpc_pipelined` releases it.
    `work_scale` multiplies the target's per-call compute draw, letting
    call sites of different weight share one service definition.
    """

    target: str
    mode: str = "sequential"
    protocol: str = "rpc_pipelined"
    children: tuple["CallNode", ...] = ()
    work_scale: float = 1.0

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class RequestClass:
    name: str
    root: CallNode
    weight: float
    qos_target_p99_us: int = 0  # 0 = derive default at load time


@dataclass(frozen=True)
class Topology:
    """A validated service graph plus its request classes."""

    services: dict[str, ServiceSpec]
    classes: tuple[RequestClass, ...]
    edge_cloud_rtt_us: int = 0

    def service_order_backend_first(self) -> list[str]:
        """Service names ordered deepest call-tree position first.

        This is the row ordering used by heatmap exports (back-end at the
        top, front-end at the bottom).
        """
        depth: dict[str, int] = {name: 0 for name in self.services}

        def visit(node: CallNode, d: int) -> None:
            if node.target in depth:
                depth[node.target] = max(depth[node.target], d)
            for child in node.children:
                visit(child, d + 1)

        for cls in self.classes:
            visit(cls.root, 0)
        return sorted(self.services, key=lambda n: (-depth[n], n))


@dataclass(frozen=True)
class Issue:
    """One validation finding: where it is and what is wrong."""

    location: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.location}: {self.message}"


# --------------------------------------------------------------------------
# Validation

def _check_dist(d: DistributionSpec, loc: str, allow_zero_mean: bool) -> list[Issue]:
    issues = []
    if d.kind not in DIST_KINDS:
        issues.append(Issue(loc, f"unknown distribution kind {d.kind!r}"))
        return issues
    if not math.isfinite(d.mean_us):
        issues.append(Issue(loc, "mean must be finite"))
    elif d.mean_us < 0 or (d.mean_us == 0 and not (allow_zero_mean and d.kind == "deterministic")):
        issues.append(Issue(loc, f"mean must be positive (got {d.mean_us})"))
    if d.sigma < 0:
        issues.append(Issue(loc, f"sigma must be >= 0 (got {d.sigma})"))
    return issues


def validate(topo: Topology) -> list[Issue]:
    """Check every structural invariant; empty list means the topology is valid."""
    issues: list[Issue] = []
    if not topo.services:
        issues.append(Issue("topology", "at least one service required"))
    if not topo.classes:
        issues.append(Issue("topology", "at least one request class required"))
    if topo.edge_cloud_rtt_us < 0:
        issues.append(Issue("topology", "edge_cloud_rtt_us must be >= 0"))

    for name, spec in topo.services.items():
        loc = f"service {name}"
        if spec.name != name:
            issues.append(Issue(loc, f"name mismatch: keyed {name!r}, spec says {spec.name!r}"))
        issues += _check_dist(spec.service_time, f"{loc}: service_time", allow_zero_mean=False)
        issues += _check_dist(spec.network_time, f"{loc}: network_time", allow_zero_mean=True)
        if spec.cores_per_instance < 1:
            issues.append(Issue(loc, "cores_per_instance must be >= 1"))
        if spec.initial_instances < 1:
            issues.append(Issue(loc, "initial_instances must be >= 1"))
        if spec.initial_instances > spec.max_instances:
            issues.append(Issue(loc, f"initial_instances ({spec.initial_instances}) exceeds "
                                     f"max_instances ({spec.max_instances})"))
        if spec.tier_kind not in TIERS:
            issues.append(Issue(loc, f"unknown tier_kind {spec.tier_kind!r}"))
        if spec.placement not in ("cloud", "edge"):
            issues.append(Issue(loc, f"unknown placement {spec.placement!r}"))

    total_weight = 0.0
    for cls in topo.classes:
        loc = f"class {cls.name}"
        total_weight += cls.weight
        if not 0.0 <= cls.weight <= 1.0:
            issues.append(Issue(loc, f"weight must be in [0,1] (got {cls.weight})"))
        if cls.qos_target_p99_us < 0:
            issues.append(Issue(loc, "qos_target_p99_us must be >= 0"))
        for node in cls.root.walk():
            if node.target not in topo.services:
                issues.append(Issue(loc, f"call target {node.target!r} is not a declared service"))
            if node.mode not in MODES:
                issues.append(Issue(loc, f"unknown mode {node.mode!r}"))
            if node.protocol not in PROTOCOLS:
                issues.append(Issue(loc, f"unknown protocol {node.protocol!r}"))
            if node.work_scale <= 0:
                issues.append(Issue(loc, f"work_scale must be > 0 (got {node.work_scale})"))
    if topo.classes and abs(total_weight - 1.0) > 1e-9:
        issues.append(Issue("classes", f"class weights sum to {total_weight!r}, expected 1"))
    return issues


def require_valid(topo: Topology) -> Topology:
    issues = validate(topo)
    if issues:
        raise ValidationError("; ".join(str(i) for i in issues))
    return topo


# --------------------------------------------------------------------------
# Demand and zero-load latency helpers

def class_compute_demand_us(topo: Topology, cls: RequestClass,
                            stateless_only: bool = False) -> float:
    """Total mean compute work one request of `cls` places on the graph.

    Sums service-time means over every call-tree node (fan-out counts each
    call), i.e. total work rather than critical-path length.
    """
    total = 0.0
    for node in cls.root.walk():
        spec = topo.services[node.target]
        if stateless_only and spec.is_storage():
            continue
        total += spec.service_time.mean_us * node.work_scale
    return total


def class_zero_load_mean_us(topo: Topology, cls: RequestClass) -> float:
    """Approximate mean end-to-end latency of `cls` on an idle system.

    Sequential children add up; a parallel join is approximated by its
    longest branch mean. Network hop propagation delays are excluded (they
    are a run-time profile knob, not a topology property).
    """

    def visit(node: CallNode) -> float:
        spec = topo.services[node.target]
        own = spec.service_time.mean_us * node.work_scale + spec.network_time.mean_us
        if not node.children:
            return own
        branches = [visit(c) for c in node.children]
        if node.mode == "parallel":
            return own + max(branches)
        return own + sum(branches)

    return visit(cls.root)


def zero_load_span_means_us(topo: Topology) -> dict[str, float]:
    """Mean idle-system inclusive span per service (hop delays excluded).

    Each service's value averages the zero-load span means of all its call
    sites, weighted by class weight; parallel joins contribute their
    longest branch mean. Used to set per-tier violation thresholds.
    """
    totals: dict[str, float] = {}
    weights: dict[str, float] = {}

    def visit(node: CallNode, w: float) -> float:
        spec = topo.services[node.target]
        own = spec.service_time.mean_us * node.work_scale + spec.network_time.mean_us
        branches = [visit(c, w) for c in node.children]
        if branches:
            own += max(branches) if node.mode == "parallel" else sum(branches)
        totals[node.target] = totals.get(node.target, 0.0) + w * own
        weights[node.target] = weights.get(node.target, 0.0) + w
        return own

    for cls in topo.classes:
        visit(cls.root, cls.weight)
    return {svc: totals[svc] / weights[svc] for svc in totals}


def default_qos_p99_us(topo: Topology, cls: RequestClass) -> int:
    """QoS target used when a class does not state one: 5x zero-load mean."""
    return int(round(5.0 * class_zero_load_mean_us(topo, cls)))


def resolve_qos(topo: Topology) -> Topology:
    """Fill in missing per-class QoS targets with the documented default."""
    classes = tuple(
        cls if cls.qos_target_p99_us > 0
        else replace(cls, qos_target_p99_us=default_qos_p99_us(topo, cls))
        for cls in topo.classes
    )
    return replace(topo, classes=classes)


# --------------------------------------------------------------------------
# Monolith transform

def to_monolith(topo: Topology) -> Topology:
    """Collapse every non-storage tier into a single "monolith" service.

    The monolith's mean per-request compute equals the collapsed tiers'
    total mean demand for each class exactly (per-class call-site scales
    absorb the differences). Its distribution is lognormal with the
    variance of the summed component draws, since a monolith executes the
    same component work in one process and the sum concentrates. Cache and
    database tiers and their call sites are preserved; the monolith issues
    them together (parallel), matching the async storage clients the
    collapsed tiers used. Core capacity is preserved in aggregate.
    """
    stateless = {n: s for n, s in topo.services.items() if not s.is_storage()}
    if not stateless:
        raise ValidationError("topology has only cache/database tiers; nothing to collapse")

    demands: list[float] = []
    variances: list[float] = []
    storage_children: list[tuple[CallNode, ...]] = []
    for cls in topo.classes:
        demand = 0.0
        var = 0.0
        kept: list[CallNode] = []

        def visit(node: CallNode) -> None:
            nonlocal demand, var
            spec = topo.services[node.target]
            if spec.is_storage():
                kept.append(node)  # preserved verbatim, subtree included
                return
            m = spec.service_time.mean_us * node.work_scale
            demand += m
            var += (m ** 2) * spec.service_time.cv2()
            for child in node.children:
                visit(child)

        visit(cls.root)
        if demand <= 0:
            raise ValidationError(f"class {cls.name} exercises no collapsible tier")
        demands.append(demand)
        variances.append(var)
        storage_children.append(tuple(kept))

    weights = [cls.weight for cls in topo.classes]
    base_mean = sum(w * d for w, d in zip(weights, demands))
    pooled_var = sum(w * v for w, v in zip(weights, variances))
    cv2 = pooled_var / (base_mean ** 2)
    if cv2 > 0:
        service_time = logn(base_mean, math.sqrt(math.log1p(cv2)))
    else:
        service_time = det(base_mean)

    total_cores = sum(s.initial_instances * s.cores_per_instance for s in stateless.values())
    total_max_cores = sum(s.max_instances * s.cores_per_instance for s in stateless.values())
    cpi = max(s.cores_per_instance for s in stateless.values())
    front = topo.services[topo.classes[0].root.target]
    mono = ServiceSpec(
        name="monolith",
        service_time=service_time,
        network_time=front.network_time,
        cores_per_instance=cpi,
        initial_instances=max(1, math.ceil(total_cores / cpi)),
        max_instances=max(1, math.ceil(total_max_cores / cpi)),
        tier_kind="frontend",
        placement=front.placement,
    )

    services = {"monolith": mono}
    services.update({n: s for n, s in topo.services.items() if s.is_storage()})
    classes = []
    for cls, demand, kept in zip(topo.classes, demands, storage_children):
        root = CallNode(
            target="monolith",
            mode="parallel",
            protocol=cls.root.protocol,
            children=kept,
            work_scale=demand / base_mean,
        )
        classes.append(replace(cls, root=root))
    return Topology(services=services, classes=tuple(classes),
                    edge_cloud_rtt_us=topo.edge_cloud_rtt_us)


# --------------------------------------------------------------------------
# Config document parsing

def _parse_dist(value: str, loc: str) -> DistributionSpec:
    parts = value.split()
    if not parts or parts[0] not in _DIST_TOKENS:
        raise ParseError(f"{loc}: expected 'det|exp|logn <mean_us> [sigma]', got {value!r}")
    kind = _DIST_TOKENS[parts[0]]
    try:
        mean = float(parts[1])
        sigma = float(parts[2]) if len(parts) > 2 else 0.0
    except (IndexError, ValueError) as err:
        raise ParseError(f"{loc}: bad distribution parameters in {value!r}") from err
    if len(parts) > 3 or (kind != "lognormal" and len(parts) > 2):
        raise ParseError(f"{loc}: too many parameters in {value!r}")
    return DistributionSpec(kind, mean, sigma)


def _parse_bool(value: str, loc: str) -> bool:
    if value in ("yes", "true", "on"):
        return True
    if value in ("no", "false", "off"):
        return False
    raise ParseError(f"{loc}: expected yes/no, got {value!r}")


_SERVICE_KEYS = {"service_time", "network_time", "cores", "instances", "max_instances",
                 "tier", "placement", "shard_by_user", "user_scaled"}
_CLASS_KEYS = {"weight", "qos_p99_us"}


def load_topology(text: str) -> Topology:
    """Parse the line-oriented topology document format.

    See the package README for the schema. Unknown keys are rejected; the
    parsed topology is validated before being returned.
    """
    services: dict[str, ServiceSpec] = {}
    classes: list[RequestClass] = []
    edge_cloud_rtt = 0

    section: tuple[str, str] | None = None  # ("service"|"class", name)
    svc_fields: dict = {}
    cls_fields: dict = {}
    tree_lines: list[tuple[int, str, int]] = []  # (indent, line, lineno)

    def finish_section() -> None:
        nonlocal section, svc_fields, cls_fields, tree_lines
        if section is None:
            return
        kind, name = section
        if kind == "service":
            if "service_time" not in svc_fields:
                raise ParseError(f"service {name}: missing service_time")
            if "max_instances" not in svc_fields and "initial_instances" in svc_fields:
                svc_fields["max_instances"] = svc_fields["initial_instances"]
            services[name] = ServiceSpec(name=name, **svc_fields)
        else:
            if "weight" not in cls_fields:
                raise ParseError(f"class {name}: missing weight")
            if not tree_lines:
                raise ParseError(f"class {name}: missing call tree")
            root = _parse_tree(tree_lines, name)
            classes.append(RequestClass(name=name, root=root,
                                        weight=cls_fields["weight"],
                                        qos_target_p99_us=cls_fields.get("qos_p99_us", 0)))
        section, svc_fields, cls_fields, tree_lines = None, {}, {}, []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            finish_section()
            parts = stripped[1:-1].split()
            if len(parts) != 2 or parts[0] not in ("service", "class"):
                raise ParseError(f"line {lineno}: bad section header {stripped!r}")
            if parts[0] == "service" and parts[1] in services:
                raise ParseError(f"line {lineno}: duplicate service {parts[1]!r}")
            if parts[0] == "class" and any(c.name == parts[1] for c in classes):
                raise ParseError(f"line {lineno}: duplicate class {parts[1]!r}")
            section = (parts[0], parts[1])
            continue
        if stripped.startswith("->"):
            if section is None or section[0] != "class":
                raise ParseError(f"line {lineno}: call-tree line outside a class section")
            indent = len(line) - len(line.lstrip())
            tree_lines.append((indent, stripped, lineno))
            continue
        if "=" not in stripped:
            raise ParseError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        loc = f"line {lineno}"
        try:
            if section is None:
                if key == "edge_cloud_rtt_us":
                    edge_cloud_rtt = int(value)
                else:
                    raise ParseError(f"{loc}: unknown top-level key {key!r}")
            elif section[0] == "service":
                if key not in _SERVICE_KEYS:
                    raise ParseError(f"{loc}: unknown service key {key!r}")
                if key in ("service_time", "network_time"):
                    svc_fields[key] = _parse_dist(value, loc)
                elif key == "cores":
                    svc_fields["cores_per_instance"] = int(value)
                elif key == "instances":
                    svc_fields["initial_instances"] = int(value)
                elif key == "max_instances":
                    svc_fields["max_instances"] = int(value)
                elif key == "tier":
                    if value not in _TIER_TOKENS:
                        raise ParseError(f"{loc}: unknown tier {value!r}")
                    svc_fields["tier_kind"] = _TIER_TOKENS[value]
                elif key == "placement":
                    if value not in ("cloud", "edge"):
                        raise ParseError(f"{loc}: unknown placement {value!r}")
                    svc_fields["placement"] = value
                else:
                    svc_fields[key] = _parse_bool(value, loc)
            else:
                if key not in _CLASS_KEYS:
                    raise ParseError(f"{loc}: unknown class key {key!r}")
                if key == "weight":
                    cls_fields["weight"] = float(value)
                else:
                    cls_fields["qos_p99_us"] = int(value)
        except ValueError as err:
            raise ParseError(f"{loc}: bad value {value!r} for {key!r}") from err
    finish_section()

    topo = Topology(services=services, classes=tuple(classes),
                    edge_cloud_rtt_us=edge_cloud_rtt)
    require_valid(topo)
    return resolve_qos(topo)


def _parse_tree(lines: list[tuple[int, str, int]], cls_name: str) -> CallNode:
    """Build a call tree from '-> target [seq|par] [rpc|http1] [xN]' lines."""

    def parse_line(stripped: str, lineno: int) -> dict:
        tokens = stripped[2:].split()
        if not tokens:
            raise ParseError(f"line {lineno}: empty call-tree entry")
        fields = {"target": tokens[0], "mode": "sequential",
                  "protocol": "rpc_pipelined", "work_scale": 1.0}
        for tok in tokens[1:]:
            if tok in _MODE_TOKENS:
                fields["mode"] = _MODE_TOKENS[tok]
            elif tok in _PROTO_TOKENS:
                fields["protocol"] = _PROTO_TOKENS[tok]
            elif tok.startswith("x"):
                try:
                    fields["work_scale"] = float(tok[1:])
                except ValueError as err:
                    raise ParseError(f"line {lineno}: bad work scale {tok!r}") from err
            else:
                raise ParseError(f"line {lineno}: unknown call-tree token {tok!r}")
        return fields

    root_indent = lines[0][0]
    if sum(1 for ind, _, _ in lines if ind == root_indent) != 1:
        raise ParseError(f"class {cls_name}: call tree must have exactly one root")

    # Recursive descent over the indentation structure.
    def build(start: int, end: int) -> CallNode:
        indent, stripped, lineno = lines[start]
        fields = parse_line(stripped, lineno)
        children = []
        i = start + 1
        while i < end:
            child_indent = lines[i][0]
            if child_indent <= indent:
                raise ParseError(f"line {lines[i][2]}: inconsistent call-tree indentation")
            j = i + 1
            while j < end and lines[j][0] > child_indent:
                j += 1
            children.append(build(i, j))
            i = j
        return CallNode(children=tuple(children), **fields)

    return build(0, len(lines))


# --------------------------------------------------------------------------
# Rendering (inverse of load_topology)

def _render_dist(d: DistributionSpec) -> str:
    mean = repr(d.mean_us) if d.mean_us != int(d.mean_us) else str(int(d.mean_us))
    if d.kind == "lognormal":
        return f"{_DIST_NAMES[d.kind]} {mean} {d.sigma!r}"
    return f"{_DIST_NAMES[d.kind]} {mean}"


def _render_float(x: float) -> str:
    return str(int(x)) if x == int(x) else repr(x)


def render(topo: Topology) -> str:
    """Serialize a topology so that load_topology(render(t)) == resolve_qos(t)."""
    out: list[str] = []
    if topo.edge_cloud_rtt_us:
        out.append(f"edge_cloud_rtt_us = {topo.edge_cloud_rtt_us}")
        out.append("")
    for name, spec in topo.services.items():
        out.append(f"[service {name}]")
        out.append(f"service_time = {_render_dist(spec.service_time)}")
        out.append(f"network_time = {_render_dist(spec.network_time)}")
        out.append(f"cores = {spec.cores_per_instance}")
        out.append(f"instances = {spec.initial_instances}")
        out.append(f"max_instances = {spec.max_instances}")
        out.append(f"tier = {_TIER_NAMES[spec.tier_kind]}")
        out.append(f"placement = {spec.placement}")
        if spec.shard_by_user:
            out.append("shard_by_user = yes")
        if spec.user_scaled:
            out.append("user_scaled = yes")
        out.append("")
    for cls in topo.classes:
        out.append(f"[class {cls.name}]")
        out.append(f"weight = {_render_float(cls.weight)}")
        if cls.qos_target_p99_us:
            out.append(f"qos_p99_us = {cls.qos_target_p99_us}")

        def emit(node: CallNode, depth: int) -> None:
            tokens = [node.target, _MODE_NAMES[node.mode], _PROTO_NAMES[node.protocol]]
            if node.work_scale != 1.0:
                tokens.append(f"x{node.work_scale!r}")
            out.append("  " * depth + "-> " + " ".join(tokens))
            for child in node.children:
                emit(child, depth + 1)

        emit(cls.root, 0)
        out.append("")
    return "\n".join(out).rstrip() + "\n"
