"""SFC request generation with trace-driven or synthetic time-varying demands."""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

R1 = 2  # node resources: cpu (GHz), mem (GB)
R2 = 1  # link resources: bandwidth (MBps)


class TraceError(ValueError):
    pass


@dataclass
class TraceSeries:
    cpu: np.ndarray  # GHz
    mem: np.ndarray  # GB
    net: np.ndarray  # MBps
    skipped: int = 0
    name: str = ""

    def __len__(self):
        return len(self.cpu)


# (wanted substring, preferred unit substrings, scale to target unit)
_COLUMNS = {
    "cpu": ("cpu usage", ("mhz",), 1e-3),
    "mem": ("memory usage", ("kb",), 1e-6),
    "net": ("network transmitted", ("kb/s", "kb"), 1e-3),
}


def _pick_column(header, wanted, preferred):
    hits = [i for i, h in enumerate(header) if wanted in h.lower()]
    if not hits:
        return None
    for unit in preferred:
        for i in hits:
            if unit in header[i].lower() and "%" not in header[i]:
                return i
    for i in hits:
        if "%" not in header[i]:
            return i
    return hits[0]


def ingest_trace(source):
    """Parse a Bitbrains-style resource-usage file.

    CPU usage in MHz, memory usage in KB and network transmit throughput in
    KB/s are converted to GHz, GB and MBps.  Rows with unparsable fields are
    skipped and counted in ``TraceSeries.skipped``.
    """
    path = Path(source)
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceError(f"{path}: empty trace file")
    first = lines[0]
    delim = max([";", ",", "\t"], key=first.count)
    rows = list(csv.reader(io.StringIO("\n".join(lines)), delimiter=delim))
    header = [h.strip() for h in rows[0]]
    idx = {}
    for key, (wanted, preferred, _) in _COLUMNS.items():
        col = _pick_column(header, wanted, preferred)
        if col is None:
            raise TraceError(f"{path}: missing required column matching '{wanted}'")
        idx[key] = col
    values = {k: [] for k in _COLUMNS}
    skipped = 0
    for row in rows[1:]:
        try:
            parsed = {k: float(row[i].strip()) for k, i in idx.items()}
        except (IndexError, ValueError):
            skipped += 1
            continue
        if any(not math.isfinite(v) or v < 0 for v in parsed.values()):
            skipped += 1
            continue
        for k, v in parsed.items():
            values[k].append(v)
    if not values["cpu"]:
        raise TraceError(f"{path}: no parsable rows ({skipped} skipped)")
    arrays = {k: np.asarray(v) * _COLUMNS[k][2] for k, v in values.items()}
    return TraceSeries(arrays["cpu"], arrays["mem"], arrays["net"], skipped, path.name)


@dataclass
class WorkloadConfig:
    arrival_rate: float = 10.0
    chain_length: tuple = (2, 5)
    topology: str = "linear"  # linear | dag
    lifetime: tuple = (1, 100)
    latency_limit: tuple = (20.0, 50.0)
    processing_delay: tuple = (1.0, 5.0)
    demand_mode: str = "synthetic"  # synthetic | trace
    # synthetic base levels per entity (uniform ranges)
    cpu_level: tuple = (0.025, 0.275)
    mem_level: tuple = (0.05, 0.55)
    bw_level: tuple = (0.001, 0.015)
    amplitude: tuple = (0.1, 0.6)  # relative to the base level
    noise: float = 0.1  # relative uniform noise half-width
    period: tuple = (20, 100)
    trace_files: tuple = ()
    trace_scale: tuple = (1.0, 1.0, 1.0)  # cpu, mem, net multipliers

    def __post_init__(self):
        self.chain_length = tuple(self.chain_length)
        self.lifetime = tuple(self.lifetime)
        lo, hi = self.chain_length
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid chain_length range {self.chain_length}")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be > 0")
        if self.topology not in ("linear", "dag"):
            raise ValueError(f"unknown SFC topology mode {self.topology!r}")
        if self.demand_mode not in ("synthetic", "trace"):
            raise ValueError(f"unknown demand mode {self.demand_mode!r}")
        if self.demand_mode == "trace" and not self.trace_files:
            raise ValueError("demand_mode 'trace' needs trace_files")

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(eq=False)
class Vnf:
    sfc_id: int
    index: int
    demand_trace: np.ndarray  # (T, R1)
    processing_delay: float
    arrival: int

    @property
    def key(self):
        return (self.sfc_id, self.index)

    def __repr__(self):
        return f"Vnf{self.key}"


@dataclass(eq=False)
class VnfLink:
    sfc_id: int
    src: int  # vnf index within the SFC
    dst: int
    demand_trace: np.ndarray  # (T, R2)
    deadline: float
    arrival: int

    @property
    def key(self):
        return (self.sfc_id, self.src, self.dst)

    def __repr__(self):
        return f"VnfLink{self.key}"


@dataclass(eq=False)
class SfcRequest:
    id: int
    arrival_time: int
    lifetime: int
    latency_limit: float
    vnfs: list
    vnf_links: list
    _adjacent: dict = field(default=None, init=False, repr=False)
    node_trace: np.ndarray = field(default=None, init=False, repr=False)  # (T, n, R1)
    link_trace: np.ndarray = field(default=None, init=False, repr=False)  # (T, m, R2)

    @property
    def expiry(self):
        return self.arrival_time + self.lifetime

    def adjacent_links(self, index):
        """(upstream, downstream) VNF links of VNF ``index``."""
        if self._adjacent is None:
            adj = {i: ([], []) for i in range(len(self.vnfs))}
            for l in self.vnf_links:
                adj[l.dst][0].append(l)
                adj[l.src][1].append(l)
            self._adjacent = adj
        return self._adjacent[index]

    def demand_rows(self, t):
        """(n, R1) VNF and (m, R2) link demands at slot ``t``."""
        if self.node_trace is None:
            self.node_trace = np.stack([v.demand_trace for v in self.vnfs], axis=1)
            self.link_trace = (np.stack([l.demand_trace for l in self.vnf_links], axis=1)
                               if self.vnf_links else np.zeros((len(self.node_trace), 0, R2)))
        i = (t - self.arrival_time) % len(self.node_trace)
        return self.node_trace[i], self.link_trace[i]

    def parent_link(self, index):
        up = self.adjacent_links(index)[0]
        return up[0] if up else None


def demand_at(entity, t):
    """Demand vector of a VNF or VNF link at slot ``t`` (wraps cyclically)."""
    trace = entity.demand_trace
    return trace[(t - entity.arrival) % len(trace)]


def _synthetic(rng, level, cfg, length, count):
    """(length, count) sinusoid-plus-noise series, one column per entity."""
    base = rng.uniform(*level, size=count)
    amp = base * rng.uniform(*cfg.amplitude, size=count)
    period = rng.integers(cfg.period[0], cfg.period[1] + 1, size=count)
    phase = rng.uniform(0, 2 * np.pi, size=count)
    t = np.arange(length)[:, None]
    noise = rng.uniform(-cfg.noise, cfg.noise, size=(length, count)) * base
    return np.maximum(base + amp * np.sin(2 * np.pi * t / period + phase) + noise, 0.0)


def _window(rng, series, length):
    start = rng.integers(len(series))
    return series[(start + np.arange(length)) % len(series)]


class WorkloadGenerator:
    """Deterministic stream of SFC requests for one seed."""

    def __init__(self, config=None, seed=0, traces=None):
        self.config = config or WorkloadConfig()
        self.rng = np.random.default_rng(seed)
        self.next_id = 0
        self.traces = traces
        if self.config.demand_mode == "trace" and self.traces is None:
            self.traces = [ingest_trace(p) for p in self.config.trace_files]

    def arrivals(self, t):
        count = self.rng.poisson(self.config.arrival_rate)
        return [self.generate(t) for _ in range(count)]

    def _node_traces(self, length, count):
        """(length, count, R1) demand series for ``count`` VNFs."""
        cfg = self.config
        if cfg.demand_mode == "synthetic":
            cpu = _synthetic(self.rng, cfg.cpu_level, cfg, length, count)
            mem = _synthetic(self.rng, cfg.mem_level, cfg, length, count)
            return np.stack([cpu, mem], axis=2)
        out = np.empty((length, count, R1))
        for i in range(count):
            tr = self.traces[self.rng.integers(len(self.traces))]
            start = self.rng.integers(len(tr))
            sel = (start + np.arange(length)) % len(tr)
            out[:, i, 0] = tr.cpu[sel] * cfg.trace_scale[0]
            out[:, i, 1] = tr.mem[sel] * cfg.trace_scale[1]
        return out

    def _link_traces(self, length, count):
        cfg = self.config
        if cfg.demand_mode == "synthetic":
            return _synthetic(self.rng, cfg.bw_level, cfg, length, count)[:, :, None]
        out = np.empty((length, count, R2))
        for i in range(count):
            tr = self.traces[self.rng.integers(len(self.traces))]
            out[:, i, 0] = _window(self.rng, tr.net, length) * cfg.trace_scale[2]
        return out

    def generate(self, t):
        cfg = self.config
        rng = self.rng
        sid = self.next_id
        self.next_id += 1
        lifetime = int(rng.integers(cfg.lifetime[0], cfg.lifetime[1] + 1))
        latency = float(rng.uniform(*cfg.latency_limit))
        n = int(rng.integers(cfg.chain_length[0], cfg.chain_length[1] + 1))
        length = lifetime + 1
        node_trace = self._node_traces(length, n)
        delays = rng.uniform(*cfg.processing_delay, size=n)
        vnfs = [Vnf(sid, i, node_trace[:, i, :], float(delays[i]), t) for i in range(n)]
        if cfg.topology == "linear":
            parents = list(range(n - 1))
        else:
            parents = [int(rng.integers(i)) for i in range(1, n)]
        link_trace = self._link_traces(length, n - 1)
        links = [VnfLink(sid, parents[i - 1], i, link_trace[:, i - 1, :], latency, t)
                 for i in range(1, n)]
        sfc = SfcRequest(sid, t, lifetime, latency, vnfs, links)
        sfc.node_trace, sfc.link_trace = node_trace, link_trace
        return sfc


def generate_sfc(rng, params, t, sfc_id=0):
    """Single SFC from a seed or Generator; see :class:`WorkloadGenerator`."""
    gen = WorkloadGenerator(params, seed=0)
    gen.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    gen.next_id = sfc_id
    return gen.generate(t)


def load_workload_config(path):
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml
        doc = yaml.safe_load(text)
    else:
        doc = json.loads(text)
    return WorkloadConfig.from_dict(doc)
