"""Experiment configuration: JSON in, dataclasses out, and back."""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import TOL_MARGINAL, DelayMeasure, Field, HistoryBuffer, SystemSpec, validate_system
from .errors import ConfigError

INITIAL_KINDS = ("constant", "polynomial", "samples")
SYSTEM_KINDS = ("hyperbolic", "heat")
SOLVERS = ("moc", "fv")


@dataclass
class Atom:
    theta: float
    weight: list


@dataclass
class DelayConfig:
    atoms: list = field(default_factory=list)
    density_breakpoints: Optional[list] = None
    density_values: Optional[list] = None


@dataclass
class SystemConfig:
    kind: str = "hyperbolic"
    velocities: list = field(default_factory=lambda: [1.0])
    coupling: list = field(default_factory=lambda: [[0.0]])
    delay: Optional[DelayConfig] = None
    positivity: bool = True
    heat_k: float = 0.0
    heat_sigma: float = 1.0


@dataclass
class InitialData:
    """``constant``: one value per component; ``polynomial``: ascending coefficients
    per component; ``samples``: per-component values on a uniform grid of [0, 1]."""

    kind: str = "constant"
    data: list = field(default_factory=lambda: [1.0])


@dataclass
class RunConfig:
    t_final: float = 20.0
    dt: float = 0.01
    m_cells: int = 200
    cfl: float = 1.0
    output_stride: int = 1
    solvers: list = field(default_factory=lambda: ["moc", "fv"])
    snapshot_times: list = field(default_factory=list)


@dataclass
class AnalysisConfig:
    root_box: Optional[list] = None
    extra_boxes: list = field(default_factory=list)
    samples_per_side: int = 64
    window_fraction: float = 0.5
    tol_marginal: float = TOL_MARGINAL
    abscissa_tol: float = 1e-5
    im_cap: Optional[float] = None
    re_min: Optional[float] = None
    re_max: Optional[float] = None


@dataclass
class VerifyConfig:
    lambdas: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 5.0])
    random_specs: int = 20
    resolvent_m: int = 64
    positivity_specs: int = 10
    positivity_t_final: float = 4.0
    convergence_m: list = field(default_factory=lambda: [50, 100, 200, 400])
    convergence_t: float = 5.0
    min_slope: float = 0.8


@dataclass
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    initial: InitialData = field(default_factory=InitialData)
    history: Optional[InitialData] = None
    run: RunConfig = field(default_factory=RunConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    # ---- conversion to domain objects

    def system_spec(self) -> SystemSpec:
        s = self.system
        mu = None
        if s.delay is not None:
            mu = DelayMeasure(
                tuple((a.theta, a.weight) for a in s.delay.atoms),
                s.delay.density_breakpoints,
                s.delay.density_values,
            )
        return SystemSpec(s.velocities, s.coupling, mu)

    def initial_field(self, m: Optional[int] = None) -> Field:
        return build_field(self.initial, len(self.system.velocities), m or self.run.m_cells, "initial")

    def history_buffer(self, dt: float, y0: Field) -> HistoryBuffer:
        if self.history is None:
            return HistoryBuffer.constant(y0, dt)
        f = build_field(self.history, len(self.system.velocities), y0.m, "history")
        return HistoryBuffer.constant(f, dt)

    # ---- serialization

    def to_dict(self) -> dict:
        return _strip_none(asdict(self))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_field(init: InitialData, n: int, m: int, where: str) -> Field:
    x = np.linspace(0.0, 1.0, m + 1)
    if init.kind == "constant":
        c = np.asarray(init.data, dtype=float).ravel()
        if c.size == 1:
            c = np.repeat(c, n)
        if c.size != n:
            raise ConfigError(f"need {n} constants, got {c.size}", field=f"{where}.data")
        return Field.constant(c, m)
    comps = init.data
    if len(comps) != n:
        raise ConfigError(f"need one entry per component ({n}), got {len(comps)}", field=f"{where}.data")
    vals = np.zeros((m + 1, n))
    for i, c in enumerate(comps):
        c = np.asarray(c, dtype=float).ravel()
        if init.kind == "polynomial":
            vals[:, i] = np.polynomial.polynomial.polyval(x, c)
        else:
            if c.size < 2:
                raise ConfigError("samples need at least two values", field=f"{where}.data[{i}]")
            vals[:, i] = np.interp(x, np.linspace(0.0, 1.0, c.size), c)
    return Field.from_values(vals)


def _strip_none(obj):
    if isinstance(obj, dict):
        return {k: _strip_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_strip_none(v) for v in obj]
    return obj


# ---------------------------------------------------------------- parsing

def _line_of(text: Optional[str], key: str) -> Optional[int]:
    if not text:
        return None
    leaf = key.split(".")[-1].split("[")[0]
    m = re.search(r'"%s"\s*:' % re.escape(leaf), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Reader:
    def __init__(self, text=None):
        self.text = text

    def fail(self, msg, key):
        raise ConfigError(msg, field=key, line=_line_of(self.text, key))

    def section(self, d, key, allowed):
        if not isinstance(d, dict):
            self.fail("expected an object", key)
        extra = set(d) - set(allowed)
        if extra:
            self.fail(f"unknown keys {sorted(extra)}", key)
        return d

    def num(self, v, key, positive=False, nonneg=False):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail("expected a number", key)
        v = float(v)
        if not math.isfinite(v):
            self.fail("must be finite", key)
        if positive and v <= 0:
            self.fail("must be > 0", key)
        if nonneg and v < 0:
            self.fail("must be >= 0", key)
        return v

    def integer(self, v, key, minimum=1):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
            self.fail("expected an integer", key)
        if v < minimum:
            self.fail(f"must be >= {minimum}", key)
        return int(v)

    def vector(self, v, key, **kw):
        if not isinstance(v, list):
            self.fail("expected an array", key)
        return [self.num(x, f"{key}[{i}]", **kw) for i, x in enumerate(v)]

    def matrix(self, v, key, n=None):
        if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
            self.fail("expected an array of arrays", key)
        rows = [self.vector(r, f"{key}[{i}]") for i, r in enumerate(v)]
        if n is not None and (len(rows) != n or any(len(r) != n for r in rows)):
            self.fail(f"expected a {n}x{n} matrix", key)
        return rows


def parse_config(data, text: Optional[str] = None) -> ExperimentConfig:
    rd = _Reader(text)
    rd.section(data, "<root>", ("system", "initial", "history", "run", "analysis", "verify"))
    if "system" not in data:
        rd.fail("missing section", "system")
    system = _parse_system(rd, data["system"])
    n = len(system.velocities)
    cfg = ExperimentConfig(system=system)
    if "initial" in data:
        cfg.initial = _parse_initial(rd, data["initial"], "initial", n)
    if "history" in data:
        cfg.history = _parse_initial(rd, data["history"], "history", n)
    if "run" in data:
        cfg.run = _parse_run(rd, data["run"])
    if "analysis" in data:
        cfg.analysis = _parse_analysis(rd, data["analysis"])
    if "verify" in data:
        cfg.verify = _parse_verify(rd, data["verify"])
    if system.kind == "hyperbolic":
        v = validate_system(cfg.system_spec(), positivity=False)
        if not v.ok:
            rd.fail("; ".join(v.violations), "system")
    return cfg


def _parse_system(rd, d):
    rd.section(d, "system", ("kind", "velocities", "coupling", "delay", "positivity", "heat_k", "heat_sigma"))
    s = SystemConfig()
    s.kind = d.get("kind", "hyperbolic")
    if s.kind not in SYSTEM_KINDS:
        rd.fail(f"kind must be one of {SYSTEM_KINDS}", "system.kind")
    if "positivity" in d:
        if not isinstance(d["positivity"], bool):
            rd.fail("expected true/false", "system.positivity")
        s.positivity = d["positivity"]
    if s.kind == "heat":
        s.heat_k = rd.num(d.get("heat_k", 0.0), "system.heat_k", nonneg=True)
        s.heat_sigma = rd.num(d.get("heat_sigma", 1.0), "system.heat_sigma", positive=True)
        return s
    if "velocities" not in d:
        rd.fail("missing", "system.velocities")
    s.velocities = rd.vector(d["velocities"], "system.velocities")
    n = len(s.velocities)
    if n == 0:
        rd.fail("need at least one component", "system.velocities")
    s.coupling = rd.matrix(d.get("coupling", [[0.0] * n for _ in range(n)]), "system.coupling", n)
    if "delay" in d and d["delay"] is not None:
        dd = rd.section(d["delay"], "system.delay", ("atoms", "density_breakpoints", "density_values"))
        dc = DelayConfig()
        for j, a in enumerate(dd.get("atoms", [])):
            key = f"system.delay.atoms[{j}]"
            rd.section(a, key, ("theta", "weight"))
            if "theta" not in a or "weight" not in a:
                rd.fail("atom needs theta and weight", key)
            dc.atoms.append(Atom(rd.num(a["theta"], key + ".theta"), rd.matrix(a["weight"], key + ".weight", n)))
        if "density_breakpoints" in dd:
            dc.density_breakpoints = rd.vector(dd["density_breakpoints"], "system.delay.density_breakpoints")
            vals = dd.get("density_values")
            if not isinstance(vals, list) or len(vals) != len(dc.density_breakpoints) - 1:
                rd.fail("need one matrix per density piece", "system.delay.density_values")
            dc.density_values = [rd.matrix(v, f"system.delay.density_values[{p}]", n) for p, v in enumerate(vals)]
        s.delay = dc
    return s


def _parse_initial(rd, d, key, n):
    rd.section(d, key, ("kind", "data"))
    kind = d.get("kind", "constant")
    if kind not in INITIAL_KINDS:
        rd.fail(f"kind must be one of {INITIAL_KINDS}", key + ".kind")
    if "data" not in d:
        rd.fail("missing", key + ".data")
    if kind == "constant":
        data = rd.vector(d["data"], key + ".data")
        if len(data) not in (1, n):
            rd.fail(f"need 1 or {n} values", key + ".data")
    else:
        if not isinstance(d["data"], list) or len(d["data"]) != n:
            rd.fail(f"need one array per component ({n})", key + ".data")
        data = [rd.vector(c, f"{key}.data[{i}]") for i, c in enumerate(d["data"])]
    return InitialData(kind, data)


def _parse_run(rd, d):
    rd.section(d, "run", ("t_final", "dt", "m_cells", "cfl", "output_stride", "solvers", "snapshot_times"))
    r = RunConfig()
    if "t_final" in d:
        r.t_final = rd.num(d["t_final"], "run.t_final", positive=True)
    if "dt" in d:
        r.dt = rd.num(d["dt"], "run.dt", positive=True)
    if "m_cells" in d:
        r.m_cells = rd.integer(d["m_cells"], "run.m_cells", 4)
    if "cfl" in d:
        r.cfl = rd.num(d["cfl"], "run.cfl", positive=True)
        if r.cfl > 1:
            rd.fail("must be <= 1", "run.cfl")
    if "output_stride" in d:
        r.output_stride = rd.integer(d["output_stride"], "run.output_stride")
    if "solvers" in d:
        if not isinstance(d["solvers"], list) or not set(d["solvers"]) <= set(SOLVERS) or not d["solvers"]:
            rd.fail(f"expected a non-empty subset of {SOLVERS}", "run.solvers")
        r.solvers = list(d["solvers"])
    if "snapshot_times" in d:
        r.snapshot_times = rd.vector(d["snapshot_times"], "run.snapshot_times", nonneg=True)
    return r


def _parse_analysis(rd, d):
    rd.section(d, "analysis", tuple(AnalysisConfig.__dataclass_fields__))
    a = AnalysisConfig()
    for key in ("root_box",):
        if key in d and d[key] is not None:
            a.root_box = _box(rd, d[key], "analysis.root_box")
    a.extra_boxes = [_box(rd, b, f"analysis.extra_boxes[{i}]") for i, b in enumerate(d.get("extra_boxes", []))]
    if "samples_per_side" in d:
        a.samples_per_side = rd.integer(d["samples_per_side"], "analysis.samples_per_side", 16)
    if "window_fraction" in d:
        a.window_fraction = rd.num(d["window_fraction"], "analysis.window_fraction", positive=True)
        if a.window_fraction >= 1:
            rd.fail("must be < 1", "analysis.window_fraction")
    for key in ("tol_marginal", "abscissa_tol"):
        if key in d:
            setattr(a, key, rd.num(d[key], f"analysis.{key}", positive=True))
    if d.get("im_cap") is not None:
        a.im_cap = rd.num(d["im_cap"], "analysis.im_cap", positive=True)
    for key in ("re_min", "re_max"):
        if d.get(key) is not None:
            setattr(a, key, rd.num(d[key], f"analysis.{key}"))
    return a


def _box(rd, b, key):
    v = rd.vector(b, key)
    if len(v) != 4 or not (v[0] < v[1] and v[2] < v[3]):
        rd.fail("box is [re_min, re_max, im_min, im_max] with min < max", key)
    return v


def _parse_verify(rd, d):
    rd.section(d, "verify", tuple(VerifyConfig.__dataclass_fields__))
    v = VerifyConfig()
    if "lambdas" in d:
        v.lambdas = rd.vector(d["lambdas"], "verify.lambdas", positive=True)
    for key, lo in (("random_specs", 0), ("resolvent_m", 4), ("positivity_specs", 0)):
        if key in d:
            setattr(v, key, rd.integer(d[key], f"verify.{key}", lo))
    if "convergence_m" in d:
        ms = d["convergence_m"]
        if not isinstance(ms, list) or len(ms) < 2:
            rd.fail("need at least two resolutions", "verify.convergence_m")
        v.convergence_m = [rd.integer(x, f"verify.convergence_m[{i}]", 4) for i, x in enumerate(ms)]
    for key in ("positivity_t_final", "convergence_t", "min_slope"):
        if key in d:
            setattr(v, key, rd.num(d[key], f"verify.{key}", positive=True))
    return v


def loads(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from exc
    return parse_config(data, text)


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
