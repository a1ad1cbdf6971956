"""Experiment files, sweeps and CSV export.

An experiment file is plain ``section.key=value`` lines::

    # HS25-4 with vFtree and a K/3 port filter
    topology.ports=12
    routing.mode=adaptive
    routing.triggering=2TH
    routing.delta=3
    queuing.scheme=vftree
    traffic.pattern=HS25-4
    sweep.loads=0.2,0.6,1.0

Environment variables named ``FTSIM_<SECTION>_<KEY>`` override file values.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .engine import MetricsSeries, SimConfig, run
from .errors import ConfigError, FlowControlError, RoutingError, TopologyError
from .queuing import QueueScheme
from .routing import MODES, TRIGGERS, RoutingConfig
from .switch import SwitchConfig
from .topology import RLFT, PortRef, RLFTParams, build_rlft
from .traffic import IHS_FRACTION, TrafficPattern, named_pattern, scaled_hotspots

ENV_PREFIX = "FTSIM_"


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _stage(text: str):
    low = text.strip().lower()
    if low in ("all", "*"):
        return "all"
    return int(low)


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _ports(text: str) -> tuple:
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        stage, index, port = (int(x) for x in item.split(":"))
        out.append(PortRef(stage, index, port))
    return tuple(out)


def _mode(text: str) -> str:
    low = text.strip().lower()
    if low not in MODES:
        raise ValueError(f"expected one of {', '.join(MODES)}")
    return low


def _trigger(text: str) -> str:
    by_upper = {t.upper(): t for t in TRIGGERS}
    got = by_upper.get(text.strip().upper())
    if got is None:
        raise ValueError(f"expected one of {', '.join(TRIGGERS)}")
    return got


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_seq(xs, fmt=str) -> str:
    return ",".join(fmt(x) for x in xs)


# key -> (attribute, parser, formatter)
_KEYS = {
    "topology.ports": ("ports", int, str),
    "topology.stages": ("stages", int, str),
    "routing.mode": ("mode", _mode, str),
    "routing.triggering": ("triggering", _trigger, str),
    "routing.ltth_frac": ("ltth_frac", float, _fmt_float),
    "routing.htth_frac": ("htth_frac", float, _fmt_float),
    "routing.stage": ("stage", _stage, str),
    "routing.delta": ("delta", int, str),
    "queuing.scheme": ("scheme", str, str),
    "queuing.vcs": ("vcs", int, str),
    "switch.voq": ("voq", _bool, lambda b: "true" if b else "false"),
    "switch.buffer_bytes": ("buffer_bytes", int, str),
    "switch.mtu_bytes": ("mtu_bytes", int, str),
    "traffic.pattern": ("pattern", str, str),
    "traffic.load": ("load", float, _fmt_float),
    "traffic.hotspot_frac": ("hotspot_frac", float, _fmt_float),
    "traffic.hotspots": ("hotspots", _ints, _fmt_seq),
    "traffic.ihs_ports": ("ihs_ports", _ports, lambda ps: _fmt_seq(ps, lambda p: f"{p.stage}:{p.index}:{p.port}")),
    "sim.duration_ns": ("duration_ns", int, str),
    "sim.warmup_ns": ("warmup_ns", int, str),
    "sim.seed": ("seed", int, str),
    "sim.metrics_bin_ns": ("metrics_bin_ns", int, str),
    "sim.audit_interval_ns": ("audit_interval_ns", int, str),
    "link.bandwidth_gbps": ("bandwidth_gbps", float, _fmt_float),
    "link.propagation_ns": ("propagation_ns", int, str),
    "sweep.loads": ("loads", _floats, lambda xs: _fmt_seq(xs, _fmt_float)),
    "sweep.seeds": ("seeds", _ints, _fmt_seq),
    "sweep.jobs": ("jobs", int, str),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to run one configuration, or sweep it over loads and seeds."""

    ports: int = 8
    stages: int = 3
    mode: str = "deterministic"
    triggering: str = "NoTH"
    ltth_frac: float = 0.25
    htth_frac: float = 0.5
    stage: int | str = "all"
    delta: int = 1
    scheme: str = "1Q"
    vcs: int | None = None
    voq: bool = False
    buffer_bytes: int = 192_000
    mtu_bytes: int = 4000
    pattern: str = "uniform"
    load: float = 1.0
    hotspot_frac: float | None = None
    hotspots: tuple = ()
    ihs_ports: tuple = ()
    duration_ns: int = 3_000_000
    warmup_ns: int = 1_000_000
    seed: int = 1
    metrics_bin_ns: int = 10_000
    audit_interval_ns: int = 100_000
    bandwidth_gbps: float = 100.0
    propagation_ns: int = 6
    loads: tuple = ()
    seeds: tuple = ()
    jobs: int = 1
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        # normalise the scheme spelling so round trips compare equal
        object.__setattr__(self, "scheme", QueueScheme(self.scheme, self.vcs).variant)

    # sub-configs

    def topology(self) -> RLFTParams:
        return RLFTParams(self.ports, self.stages)

    def rlft(self) -> RLFT:
        cached = self._cache.get("rlft")
        if cached is None:
            cached = self._cache["rlft"] = build_rlft(self.topology())
        return cached

    def queue_scheme(self) -> QueueScheme:
        return QueueScheme(self.scheme, self.vcs)

    def switch_config(self) -> SwitchConfig:
        return SwitchConfig(self.voq, self.buffer_bytes, self.mtu_bytes)

    @property
    def capacity(self) -> int:
        return self.switch_config().capacity(self.queue_scheme().vcs)

    def routing_config(self) -> RoutingConfig:
        cap = self.capacity
        cfg = RoutingConfig(
            self.mode,
            self.triggering,
            ltth=credits_from_fraction(self.ltth_frac, cap),
            htth=credits_from_fraction(self.htth_frac, cap),
            stage=self.stage,
            delta=self.delta,
        )
        return cfg.validate(self.ports // 2, cap)

    def traffic(self, load: float | None = None) -> TrafficPattern:
        """``pattern`` is ``uniform``, ``hs``, ``ihs`` or a name such as ``HS25-4``."""
        load = self.load if load is None else load
        nodes = self.topology().nodes
        name = self.pattern.strip().lower()
        if name == "hs":
            base = TrafficPattern("hs", load, 0.10, scaled_hotspots(nodes, 1))
        elif name == "ihs":
            base = TrafficPattern("ihs", load, IHS_FRACTION)
        else:
            base = named_pattern(self.pattern, nodes, load)
        frac = base.fraction if self.hotspot_frac is None else self.hotspot_frac
        hot = self.hotspots or base.hotspots
        for h in hot:
            if not 0 <= h < nodes:
                raise ConfigError(f"hotspot {h} is not a node of a {nodes}-node tree")
        return TrafficPattern(base.variant, load, frac, tuple(hot), tuple(self.ihs_ports))

    def sim_config(self, seed: int | None = None) -> SimConfig:
        return SimConfig(
            duration_ns=self.duration_ns,
            warmup_ns=self.warmup_ns,
            seed=self.seed if seed is None else seed,
            metrics_bin_ns=self.metrics_bin_ns,
            audit_interval_ns=self.audit_interval_ns,
            bandwidth_gbps=self.bandwidth_gbps,
            propagation_ns=self.propagation_ns,
        )

    def validate(self) -> "ExperimentSpec":
        self.topology()
        self.routing_config()
        self.traffic()
        self.sim_config().serialization_ns(self.mtu_bytes)
        for x in self.loads:
            if not 0.0 <= x <= 1.0:
                raise ConfigError(f"load point {x} outside [0, 1]")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        return self

    @property
    def config_id(self) -> str:
        return config_id(self.routing_config(), self.queue_scheme(), self.voq)

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    def render(self) -> str:
        """This configuration as an experiment file; ``parse_config`` reads it back unchanged."""
        lines = []
        defaults = ExperimentSpec()
        for key, (attr, _, fmt) in _KEYS.items():
            value = getattr(self, attr)
            if value is None or (value == getattr(defaults, attr) and key not in _ALWAYS_RENDERED):
                continue
            lines.append(f"{key}={fmt(value)}")
        return "\n".join(lines) + "\n"


_ALWAYS_RENDERED = {"topology.ports", "topology.stages", "routing.mode", "queuing.scheme", "traffic.pattern"}


def credits_from_fraction(frac: float, capacity: int) -> int:
    """Threshold fraction of a VC's credits, rounded to the nearest count."""
    if not 0.0 <= frac <= 1.0:
        raise ConfigError(f"threshold fraction must be in [0, 1], got {frac}")
    return int(frac * capacity + 0.5)


def parse_config(text: str, env: Mapping[str, str] | None = None) -> ExperimentSpec:
    """Read an experiment file; ``env`` (e.g. ``os.environ``) may override keys."""
    values: dict[str, object] = {}
    where: dict[str, int | None] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        _assign(values, where, key.lower(), value, lineno)

    for name, value in sorted((env or {}).items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX) :].lower()
        section, _, key = rest.partition("_")
        dotted = f"{section}.{key}"
        if dotted not in _KEYS:
            raise ConfigError(f"environment variable {name} does not name a config key")
        _assign(values, where, dotted, value, None)

    try:
        spec = ExperimentSpec(**values)
    except (ConfigError, TopologyError) as exc:
        raise ConfigError(str(exc)) from None

    # cross-field checks, reported at the line of the key most likely at fault
    checks = (
        (("topology.ports", "topology.stages"), spec.topology),
        (("routing.ltth_frac", "routing.htth_frac", "routing.delta", "routing.triggering", "routing.mode", "queuing.vcs"), spec.routing_config),
        (("traffic.hotspot_frac", "traffic.hotspots", "traffic.pattern", "traffic.load"), spec.traffic),
        (("sim.warmup_ns", "sim.duration_ns", "link.bandwidth_gbps", "switch.mtu_bytes"), spec.validate),
    )
    for keys, check in checks:
        try:
            check()
        except (ConfigError, TopologyError, RoutingError) as exc:
            lines = [where[k] for k in keys if where.get(k) is not None]
            raise ConfigError(str(exc), line=lines[0] if lines else None) from None
    return spec


def _assign(values, where, key, value, lineno):
    entry = _KEYS.get(key)
    if entry is None:
        raise ConfigError(f"unknown key {key!r}", line=lineno)
    attr, parse, _ = entry
    try:
        values[attr] = parse(value)
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key}: {value!r} ({exc})", line=lineno) from None
    where[key] = lineno


def load_config(path: str, env: Mapping[str, str] | None = None) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, os.environ if env is None else env)


def config_id(routing: RoutingConfig, scheme: QueueScheme, voq: bool = False) -> str:
    """Short label such as ``ADAP-2TH-1S-Kd3+FLOW2SL3+VOQ``."""
    if routing.mode == "deterministic":
        head = "DMODK"
    elif routing.mode == "oblivious":
        head = "OBLIV"
    else:
        stage = "*" if routing.stage == "all" else str(routing.stage)
        ports = "K" if routing.delta == 1 else f"Kd{routing.delta}"
        head = f"ADAP-{routing.triggering}-{stage}S-{ports}"
    out = f"{head}+{scheme.label}"
    return out + "+VOQ" if voq else out


def run_spec(spec: ExperimentSpec, load: float | None = None, seed: int | None = None) -> MetricsSeries:
    return run(
        spec.rlft(),
        spec.routing_config(),
        spec.queue_scheme(),
        spec.traffic(load),
        spec.sim_config(seed),
        spec.switch_config(),
    )


class SweepRow(NamedTuple):
    config_id: str
    load_frac: float
    throughput_frac: float
    throughput_min: float
    throughput_max: float


def _sweep_point(job):
    spec, load, seed = job
    try:
        return run_spec(spec, load, seed).steady_state()
    except (FlowControlError, ConfigError, RoutingError) as exc:
        raise type(exc)(f"{spec.config_id} load={load} seed={seed}: {exc}") from exc


def sweep(specs: ExperimentSpec | Iterable[ExperimentSpec], jobs: int | None = None) -> list[SweepRow]:
    """Steady-state throughput per (configuration, load), averaged over seeds."""
    if isinstance(specs, ExperimentSpec):
        specs = [specs]
    specs = [s.validate() for s in specs]
    work = []
    for spec in specs:
        if not spec.loads:
            raise ConfigError(f"{spec.config_id}: sweep needs at least one load point")
        for load in spec.loads:
            for seed in spec.seeds or (spec.seed,):
                work.append((spec, load, seed))
    if jobs is None:
        jobs = max(s.jobs for s in specs)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_sweep_point, work))
    else:
        results = [_sweep_point(w) for w in work]

    grouped: dict[tuple, list] = {}
    for (spec, load, _), value in zip(work, results):
        grouped.setdefault((spec.config_id, float(load)), []).append(value)
    rows = [
        SweepRow(cid, load, float(np.mean(v)), float(np.min(v)), float(np.max(v)))
        for (cid, load), v in grouped.items()
    ]
    return sorted(rows, key=lambda r: (r.config_id, r.load_frac))


SERIES_COLUMNS = ("time_ns", "delivered_frac", "injected_frac")
SWEEP_COLUMNS = SweepRow._fields


def _f6(x: float) -> str:
    return f"{x:.6f}"


def series_rows(series: MetricsSeries) -> list[list[str]]:
    return [
        [str(int(t)), _f6(d), _f6(i)]
        for t, d, i in zip(series.time_ns, series.delivered_frac, series.injected_frac)
    ]


def to_csv(data: MetricsSeries | Iterable[SweepRow]) -> str:
    """CSV text for a throughput series or a sweep table."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    if isinstance(data, MetricsSeries):
        out.writerow(SERIES_COLUMNS)
        out.writerows(series_rows(data))
    else:
        out.writerow(SWEEP_COLUMNS)
        for r in data:
            out.writerow([r.config_id, _f6(r.load_frac), _f6(r.throughput_frac), _f6(r.throughput_min), _f6(r.throughput_max)])
    return buf.getvalue()


def export_csv(data: MetricsSeries | Iterable[SweepRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(data))


# keep the key table and the dataclass in step
assert {a for a, _, _ in _KEYS.values()} == {f.name for f in fields(ExperimentSpec)} - {"_cache"}
