"""Job configuration, end-to-end runs, residual panel and field serialization."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import tensors as T
from .chart import Chart, ContractViolation, DISK, TORUS
from .higgs import build_C_from_moduli, build_nabla, nabla_metric
from .solver import SolverConfig, newton_solve, pde_residual

log = logging.getLogger(__name__)

SCHEMA = "conserv-stat/1"

EXIT_OK = 0
EXIT_NONCONVERGED = 2
EXIT_OBSTRUCTION = 3
EXIT_CONFIG = 4
EXIT_IO = 5

CONVENTIONS = {
    "metric": "g = exp(u) (dx^2 + dy^2), h = exp(u)",
    "curvature": "S_g = 2K = -exp(-u) lap(u)",
    "tensor_norm": "|C|^2 = g^ia g^jb g^kc C_ijk C_abc",
    "trace": "tau_i = g^jk C_ijk = 16 Re(w dz)",
    "divergence": "(div C)_jk = g^il (nabla_l C)_ijk",
    "cubic": "Q = q dz^3, C0 = Q + conj(Q)",
    "pde": "lap(u) - 4 exp(u) + 4 |q|^2 exp(-2u) = 0",
    "stencil": "5-point laplacian, centered first differences",
}

PANEL_KEYS = (
    "hitchin_residual", "normalization_residual", "field_equation_residual",
    "dtau", "divtau", "dbar_q", "dbar_w", "torsion", "nabla_g_plus_C",
)
ROUNDTRIP_KEYS = ("roundtrip_w_error", "roundtrip_q_error")

FIELD_NAMES = ("u", "c_xxx", "c_xxy", "c_xyy", "c_yyy")
COMPLEX_FIELD_NAMES = ("w", "q")


class ConfigError(ValueError):
    """Invalid job configuration or malformed input files (exit code 4)."""


class OutputError(OSError):
    """Failure writing reports or dumps (exit code 5)."""


# -- configuration ---------------------------------------------------------

def parse_complex(v) -> complex:
    if isinstance(v, bool):
        raise ConfigError(f"not a complex number: {v!r}")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", "").replace("i", "j"))
        except ValueError:
            raise ConfigError(f"cannot parse complex number {v!r}") from None
    if isinstance(v, dict) and set(v) <= {"re", "im"}:
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    raise ConfigError(f"not a complex number: {v!r}")


def parse_poly(v) -> tuple[complex, ...]:
    """A constant, or a list of coefficients ``[a0, a1, ...]`` of ``a0 + a1 z + ...``."""
    coeffs = [parse_complex(c) for c in v] if isinstance(v, list) else [parse_complex(v)]
    if not coeffs:
        raise ConfigError("empty coefficient list")
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    return tuple(coeffs)


def eval_poly(coeffs, z: np.ndarray) -> np.ndarray:
    out = np.zeros(np.shape(z), dtype=complex)
    for c in reversed(coeffs):
        out = out * z + c
    return out


def _encode_poly(coeffs) -> list:
    return [[c.real, c.imag] for c in coeffs]


def parse_chart(d: dict, grid: int | None = None) -> Chart:
    if not isinstance(d, dict):
        raise ConfigError("'chart' must be an object")
    kind = str(d.get("kind", TORUS)).lower()
    nx = int(grid if grid is not None else d.get("nx", 64))
    ny = int(grid if grid is not None else d.get("ny", nx))
    try:
        if kind == TORUS:
            return Chart(TORUS, nx, ny, rho=float(d.get("rho", 1.0)))
        if kind == DISK:
            return Chart(DISK, nx, ny, half_width=float(d.get("L", 1.0)))
    except ContractViolation as e:
        raise ConfigError(str(e)) from None
    raise ConfigError(f"unknown chart kind {kind!r}")


@dataclass
class JobConfig:
    chart: Chart
    w: tuple[complex, ...] = (0j,)
    q: tuple[complex, ...] = (1 + 0j,)
    solver: SolverConfig = field(default_factory=SolverConfig)
    out_dir: Path | None = None
    dump: bool = False
    thresholds: dict = field(default_factory=lambda: {"conservative": 1e-6, "normalized": 1e-6})
    allow_nonholomorphic: bool = False
    metric_u: float = 0.0

    @classmethod
    def from_dict(cls, d: dict, grid: int | None = None) -> JobConfig:
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {"chart", "moduli", "solver", "outputs", "thresholds",
                 "allow_nonholomorphic", "metric"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        chart = parse_chart(d.get("chart", {}), grid)
        moduli = d.get("moduli", {})
        if not isinstance(moduli, dict):
            raise ConfigError("'moduli' must be an object")
        w = parse_poly(moduli.get("w", 0))
        q = parse_poly(moduli.get("q", 1))

        solver_d = d.get("solver", {})
        names = {f.name for f in dc_fields(SolverConfig)}
        if not isinstance(solver_d, dict) or set(solver_d) - names:
            raise ConfigError(f"solver keys must be among {sorted(names)}")
        try:
            solver = SolverConfig(**solver_d)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad solver settings: {e}") from None

        outputs = d.get("outputs", {})
        out_dir = outputs.get("dir")
        thresholds = {"conservative": 1e-6, "normalized": 1e-6}
        thresholds.update({k: float(v) for k, v in d.get("thresholds", {}).items()})
        return cls(chart=chart, w=w, q=q, solver=solver,
                   out_dir=Path(out_dir) if out_dir else None,
                   dump=bool(outputs.get("dump", False)),
                   thresholds=thresholds,
                   allow_nonholomorphic=bool(d.get("allow_nonholomorphic", False)),
                   metric_u=float(d.get("metric", {}).get("u", 0.0)))

    @classmethod
    def load(cls, path, grid: int | None = None) -> JobConfig:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        return cls.from_dict(d, grid)

    def validate(self, mode: str) -> None:
        nonconstant = len(self.w) > 1 or len(self.q) > 1
        if self.chart.periodic and nonconstant:
            if mode != "verify" or not self.allow_nonholomorphic:
                raise ConfigError(
                    "holomorphic differentials on the torus chart are constants; "
                    "non-constant moduli need a verify job with allow_nonholomorphic")

    def moduli_fields(self) -> tuple[np.ndarray, np.ndarray]:
        z = self.chart.z
        return eval_poly(self.w, z), eval_poly(self.q, z)


# -- residual panel --------------------------------------------------------

def _norm_pair(chart: Chart, f: np.ndarray, region: str) -> dict:
    f = np.abs(np.asarray(f))
    if f.ndim > 2:
        comps = f.reshape((-1,) + chart.shape)
        sup = max(chart.sup_norm(c, region) for c in comps)
        l2 = math.sqrt(sum(chart.l2_norm(c, region) ** 2 for c in comps))
    else:
        sup, l2 = chart.sup_norm(f, region), chart.l2_norm(f, region)
    return {"l2": float(l2), "sup": float(sup)}


def residual_fields(chart: Chart, u: np.ndarray, C: T.Sym3Tensor, moduli=None) -> dict:
    """Every residual field of the diagnostic panel for a structure ``(C, g)``.

    ``moduli`` is an optional ``(w, q)`` pair to compare the recovered moduli
    data against.
    """
    g = T.ConformalMetric(chart, u)
    T.check_same_chart(g, C)
    C0, tau = T.decompose3(C, g)
    q_rec = T.extract_cubic(C0, g)
    w_rec = T.extract_abelian(tau)
    dtau, divtau = T.harmonicity_residual(tau, g)
    conn = build_nabla(C, g)
    out = {
        "hitchin_residual": pde_residual(chart, u, q_rec),
        "normalization_residual": T.normalization_residual(C0, g),
        "field_equation_residual": T.field_equation_residual(C, g).comps,
        "dtau": dtau,
        "divtau": divtau,
        "dbar_q": chart.wirtinger(q_rec)[1],
        "dbar_w": chart.wirtinger(w_rec)[1],
        "torsion": conn.torsion(),
        "nabla_g_plus_C": nabla_metric(conn, g) + C.full(),
    }
    if moduli is not None:
        w, q = moduli
        out["roundtrip_w_error"] = w_rec - w
        out["roundtrip_q_error"] = q_rec - q
    return out


def residual_panel(chart: Chart, u, C: T.Sym3Tensor, moduli=None, region: str = "interior") -> dict:
    res = residual_fields(chart, u, C, moduli)
    return {k: _norm_pair(chart, v, region) for k, v in res.items()}


def verdicts(panel: dict, thresholds: dict) -> dict:
    return {
        "conservative": panel["field_equation_residual"]["sup"] <= thresholds["conservative"],
        "normalized": panel["normalization_residual"]["sup"] <= thresholds["normalized"],
    }


# -- runs --------------------------------------------------------------------

@dataclass
class RunResult:
    report: dict
    fields: dict | None
    exit_code: int


def _chart_meta(chart: Chart) -> dict:
    d = chart.describe()
    d.update(hx=chart.hx, hy=chart.hy)
    return d


def _assemble(mode: str, chart: Chart, u, C, moduli, thresholds, solver=None,
              seconds: float = 0.0, extra: dict | None = None) -> dict:
    panel = residual_panel(chart, u, C, moduli, "interior")
    report = {
        "schema": SCHEMA,
        "mode": mode,
        "chart": _chart_meta(chart),
        "conventions": CONVENTIONS,
        "panel_region": "interior",
        "panel": panel,
        "core_panel": residual_panel(chart, u, C, moduli, "core"),
        "thresholds": dict(thresholds),
        "verdicts": verdicts(panel, thresholds),
        "solver": solver,
        "timing": {"seconds": round(seconds, 6)},
    }
    if extra:
        report.update(extra)
    return report


def _structure_fields(u, C: T.Sym3Tensor, w, q) -> dict:
    out = {"u": u}
    out.update(zip(FIELD_NAMES[1:], C.components()))
    out.update(w=w, q=q)
    return out


def _solve_structure(cfg: JobConfig):
    chart = cfg.chart
    w, q = cfg.moduli_fields()
    rep = newton_solve(chart, q, cfg.solver)
    g = T.ConformalMetric(chart, rep.final_u)
    C = build_C_from_moduli(w, q, g)
    return rep, g, C, w, q


def _exit_code(rep) -> int:
    if rep.obstruction_detected:
        return EXIT_OBSTRUCTION
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def run_forward(cfg: JobConfig) -> RunResult:
    """Solve for the metric, build ``(C, g)`` and evaluate the residual panel."""
    cfg.validate("solve")
    t0 = time.perf_counter()
    rep, g, C, w, q = _solve_structure(cfg)
    moduli_meta = {"moduli": {"w": _encode_poly(cfg.w), "q": _encode_poly(cfg.q)}}
    report = _assemble("solve", cfg.chart, g.u, C, (w, q), cfg.thresholds,
                       rep.summary(), time.perf_counter() - t0, moduli_meta)
    log.info("solve: converged=%s iterations=%d", rep.converged, rep.iterations)
    return RunResult(report, _structure_fields(g.u, C, w, q), _exit_code(rep))


def run_roundtrip(cfg: JobConfig) -> RunResult:
    """Forward construction followed by recovery of ``(w, q)`` from ``(C, g)``."""
    cfg.validate("roundtrip")
    t0 = time.perf_counter()
    rep, g, C, w, q = _solve_structure(cfg)
    C0, tau = T.decompose3(C, g)
    w_rec = T.extract_abelian(tau)
    q_rec = T.extract_cubic(C0, g)
    region = cfg.chart.mask
    roundtrip = {
        "w_error_sup": float(np.max(np.abs(w_rec - w)[region])),
        "q_error_sup": float(np.max(np.abs(q_rec - q)[region])),
    }
    extra = {"moduli": {"w": _encode_poly(cfg.w), "q": _encode_poly(cfg.q)},
             "roundtrip": roundtrip}
    report = _assemble("roundtrip", cfg.chart, g.u, C, (w, q), cfg.thresholds,
                       rep.summary(), time.perf_counter() - t0, extra)
    return RunResult(report, _structure_fields(g.u, C, w, q), _exit_code(rep))


def run_verify(chart: Chart, fields: dict, thresholds: dict | None = None) -> RunResult:
    """Recompute the panel for an externally supplied ``(C, g)``; no solve."""
    t0 = time.perf_counter()
    missing = [n for n in FIELD_NAMES if n not in fields]
    if missing:
        raise ConfigError(f"verify needs fields {missing}")
    u = np.asarray(fields["u"], dtype=float)
    C = T.Sym3Tensor(*(np.asarray(fields[n], dtype=float) for n in FIELD_NAMES[1:]))
    moduli = (fields["w"], fields["q"]) if "w" in fields and "q" in fields else None
    thr = {"conservative": 1e-6, "normalized": 1e-6}
    thr.update(thresholds or {})
    try:
        report = _assemble("verify", chart, u, C, moduli, thr, None, time.perf_counter() - t0)
    except ContractViolation as e:
        raise ConfigError(f"malformed fields: {e}") from None
    return RunResult(report, None, EXIT_OK)


def verify_config(cfg: JobConfig) -> RunResult:
    """Verify the structure built from the configured moduli on the constant metric ``metric.u``."""
    cfg.validate("verify")
    chart = cfg.chart
    w, q = cfg.moduli_fields()
    u = np.full(chart.shape, cfg.metric_u)
    C = build_C_from_moduli(w, q, T.ConformalMetric(chart, u))
    return run_verify(chart, _structure_fields(u, C, w, q), cfg.thresholds)


# -- serialization ---------------------------------------------------------

def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: dict, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report_json(report), encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write report {path}: {e}") from e
    return path


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_f64(path: Path, a: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(a, dtype="<f8").tobytes())


def dump_fields(chart: Chart, fields: dict, directory) -> Path:
    """Write each component as raw little-endian float64 plus a JSON sidecar."""
    directory = Path(directory)
    entries = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for name, a in fields.items():
            a = np.asarray(a)
            if a.shape != chart.shape:
                raise ContractViolation(f"field {name} does not match the chart")
            if np.iscomplexobj(a):
                files = [f"{name}.re", f"{name}.im"]
                _write_f64(directory / files[0], a.real)
                _write_f64(directory / files[1], a.imag)
                entries.append({"name": name, "kind": "complex", "files": files})
            else:
                files = [f"{name}.f64"]
                _write_f64(directory / files[0], a)
                entries.append({"name": name, "kind": "real", "files": files})
        sidecar = dict(chart.describe(), schema=SCHEMA, dtype="<f8",
                       order="row-major, y-outer, x-inner", components=entries)
        (directory / "fields.json").write_text(
            json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write field dumps to {directory}: {e}") from e
    return directory


def load_fields(directory) -> tuple[Chart, dict]:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "fields.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read sidecar in {directory}: {e}") from None
    try:
        chart = parse_chart(meta)
        comps = meta["components"]
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed sidecar: {e}") from None
    nbytes = chart.nx * chart.ny * 8
    out = {}
    for entry in comps:
        try:
            arrays = []
            for fname in entry["files"]:
                raw = (directory / fname).read_bytes()
                if len(raw) != nbytes:
                    raise ConfigError(
                        f"{fname}: expected {nbytes} bytes for a {chart.ny}x{chart.nx} field, got {len(raw)}")
                arrays.append(np.frombuffer(raw, dtype="<f8").reshape(chart.shape).astype(float))
            if entry["kind"] == "complex":
                out[entry["name"]] = arrays[0] + 1j * arrays[1]
            else:
                out[entry["name"]] = arrays[0]
        except (KeyError, TypeError, IndexError) as e:
            raise ConfigError(f"malformed sidecar entry {entry!r}: {e}") from None
        except OSError as e:
            raise ConfigError(f"cannot read dump file: {e}") from None
    return chart, out
