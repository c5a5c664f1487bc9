"""Deterministic discrete-event simulator for microservice dependency graphs.

Reproduces, at desk scale, cluster-management and tail-at-scale phenomena
of multi-tier services: backpressure between tiers, cascading QoS
violations, autoscaler blind spots, goodput collapse under request skew
and slow servers, frequency-scaling sensitivity, edge-vs-cloud trade-offs
and serverless latency/cost trade-offs.
"""

from .engine import Engine, run, sample_service_time
from .errors import (ConfigError, DomainError, DurationMismatch, EmptyInput,
                     MalformedTrace, MicrosimError, NoFeasibleRate, NoInstance,
                     ParseError, UnknownPreset, ValidationError)
from .management import (AutoscalerPolicy, FaultPlan, Hotspot, Misroute,
                         NetworkProfile, PolicySet, RateLimiterConfig,
                         ServerlessConfig, SlowServers, cost_report,
                         serverless_run)
from .metrics import GoodputPoint, RunResult, export_csv, goodput, goodput_search
from .presets import PRESET_NAMES, preset
from .topology import (CallNode, DistributionSpec, Issue, RequestClass,
                       ServiceSpec, Topology, load_topology, render,
                       to_monolith, validate)
from .tracing import (Span, Trace, critical_path, network_compute_ratio,
                      per_tier_breakdown, percentile)
from .workload import (ArrivalProcess, UserPopulation, WorkloadPlan,
                       build_skewed_population, deterministic, diurnal,
                       gen_arrivals, poisson, uniform_population)

__version__ = "0.1.0"
