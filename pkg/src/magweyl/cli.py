"""Command-line experiment runner.

``magweyl run <config.json>`` evaluates one Planck parameter,
``magweyl sweep <config.json>`` a whole ladder and
``magweyl render <report.json>`` turns a report into plot data. Each
config is one JSON document naming an experiment; reports are a CSV of
rows plus a JSON document with the config echo, tolerances, pass/fail
verdicts and an environment fingerprint.

Exit codes: 0 all checks pass, 1 a tolerance fails, 2 invalid config,
3 numerical failure.
"""
import argparse
import json
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import coherent, geometry, moyal, quantize
from .errors import MagweylError, ValidationError
from .geometry import PhaseSpacePoint
from .hilbert import PositionGrid, WaveFunction

SCHEMA = 1
EXPERIMENTS = (
    "flux-check", "gauge-check", "spectrum", "identity", "overlap-sweep", "berezin-sweep",
    "pullback-sweep", "axioms-sweep", "star-crosscheck", "state-continuity",
)
CSV_COLUMNS = ("series", "hbar", "measured", "reference", "abs_error")
# default tolerances per experiment; configs may override any key
DEFAULT_TOLERANCES = {
    "flux-check": {"abs": 1e-8},
    "gauge-check": {"abs": 1e-8},
    "spectrum": {"rel": 5e-3},
    "identity": {"abs": 1e-3},
    "overlap-sweep": {"abs": 1e-5, "monotone": True},
    "berezin-sweep": {"final_abs": 2e-2, "ratio": 0.735},
    "pullback-sweep": {"final_rel": 0.05},
    "axioms-sweep": {"final_fraction": 0.1, "norm_step": 0.05},
    "star-crosscheck": {"abs": 1e-3},
    "state-continuity": {"limit_abs": 1e-3, "lipschitz": 2.0},
}
TOLERANCE_KEYS = ("abs", "rel", "monotone", "ratio", "final_abs", "final_rel", "final_fraction", "norm_step",
                  "limit_abs", "lipschitz")
REFERENCE_EXPERIMENTS = ("berezin-sweep", "pullback-sweep", "state-continuity")


# ---------------------------------------------------------------------------
# configuration


def _line_of(text, key):
    if text is None:
        return None
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return None


@dataclass
class ExperimentConfig:
    """A validated experiment description."""

    experiment: str
    field: dict
    gauge: str | None = None
    fiducial: str = "gaussian"
    grid: dict | None = None
    hbar: float | None = None
    ladder: list | None = None
    symbols: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: str = "report"
    seed: int = 0
    source: str | None = None

    @classmethod
    def from_dict(cls, record, text=None):
        def fail(key, msg):
            line = _line_of(text, key)
            where = f" (line {line})" if line else ""
            raise ValidationError(f"config field {key!r}{where}: {msg}")

        if not isinstance(record, dict):
            raise ValidationError("config must be a JSON object")
        known = {"schema", "experiment", "field", "gauge", "fiducial", "grid", "hbar", "ladder", "symbols",
                 "options", "tolerances", "output", "seed"}
        for key in record:
            if key not in known:
                fail(key, "unknown key")
        if record.get("schema", SCHEMA) != SCHEMA:
            fail("schema", f"unsupported schema {record.get('schema')!r}")
        tag = record.get("experiment")
        if tag not in EXPERIMENTS:
            fail("experiment", f"unknown experiment {tag!r}")
        fld = record.get("field", {"family": "zero", "dim": 1})
        if not isinstance(fld, dict) or fld.get("family") not in geometry.FIELD_FAMILIES:
            fail("field", f"unknown field family {fld.get('family') if isinstance(fld, dict) else fld!r}")
        try:
            B = geometry.field_from_config(fld)
            A = geometry.vector_potential(B, record.get("gauge"))
        except MagweylError as exc:
            fail("gauge" if "gauge" in str(exc) else "field", str(exc))
        fid = record.get("fiducial", "gaussian")
        if fid not in coherent.FIDUCIAL_KINDS:
            fail("fiducial", f"unknown fiducial {fid!r}")
        grid = record.get("grid")
        if grid is not None:
            if not isinstance(grid, dict) or not {"half_width", "points"} <= set(grid):
                fail("grid", "needs half_width and points")
            try:
                PositionGrid(B.dim, float(grid["half_width"]), int(grid["points"]), cap=np.inf)
            except MagweylError as exc:
                fail("grid", str(exc))
        hbar = record.get("hbar")
        if hbar is not None and not (isinstance(hbar, (int, float)) and 0 < hbar <= 1):
            fail("hbar", "must lie in (0, 1]")
        ladder = record.get("ladder")
        if ladder is not None:
            if not isinstance(ladder, list) or not ladder or not all(isinstance(h, (int, float)) for h in ladder):
                fail("ladder", "must be a non-empty list of numbers")
            if any(not 0 < h <= 1 for h in ladder):
                fail("ladder", "values must lie in (0, 1]")
            if any(a <= b for a, b in zip(ladder, ladder[1:])):
                fail("ladder", "must be strictly decreasing")
        symbols = record.get("symbols", {})
        if not isinstance(symbols, dict):
            fail("symbols", "must be an object")
        for name, rec in symbols.items():
            try:
                quantize.symbol_from_config({"dim": B.dim, **rec})
            except (MagweylError, KeyError, TypeError, ValueError) as exc:
                fail(name, f"bad symbol: {exc}")
        tol = record.get("tolerances", {})
        if not isinstance(tol, dict):
            fail("tolerances", "must be an object")
        for key, val in tol.items():
            if key not in TOLERANCE_KEYS:
                fail(key, "unknown tolerance")
            if not isinstance(val, (bool, int, float)):
                fail(key, "tolerance must be a number or boolean")
        seed = record.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            fail("seed", "must be a non-negative integer")
        output = record.get("output", tag)
        if not isinstance(output, str) or not output or os.sep in output:
            fail("output", "must be a plain file stem")
        opts = record.get("options", {})
        if not isinstance(opts, dict):
            fail("options", "must be an object")
        cfg = cls(tag, dict(fld), record.get("gauge"), fid, grid, hbar, ladder, dict(symbols), dict(opts),
                  {**DEFAULT_TOLERANCES[tag], **tol}, output, seed, text)
        try:
            _EXPERIMENT_CHECKS.get(tag, lambda c: None)(cfg)
        except (KeyError, TypeError, ValueError, IndexError, MagweylError) as exc:
            key = exc.args[0] if isinstance(exc, KeyError) else "options"
            fail(key, f"invalid experiment setup: {exc}")
        return cfg

    @classmethod
    def load(cls, path):
        text = Path(path).read_text()
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(record, text)

    def echo(self):
        out = {k: getattr(self, k) for k in ("experiment", "field", "gauge", "fiducial", "grid", "hbar", "ladder",
                                             "symbols", "options", "tolerances", "output", "seed")}
        out["schema"] = SCHEMA
        return out

    # built objects
    @property
    def B(self):
        return geometry.field_from_config(self.field)

    @property
    def A(self):
        return geometry.vector_potential(self.B, self.gauge)

    @property
    def dim(self):
        return int(self.field.get("dim", 2))

    def fiducial_vector(self):
        return coherent.FiducialVector(self.fiducial, self.dim)

    def symbol(self, name):
        rec = self.symbols[name]
        return quantize.symbol_from_config({"dim": self.dim, **rec})

    def position_grid(self, default_half=6.0, default_points=32):
        g = self.grid or {}
        return PositionGrid(self.dim, float(g.get("half_width", default_half)), int(g.get("points", default_points)),
                            cap=np.inf)

    def point(self, key, default=None):
        val = self.options.get(key, default)
        return PhaseSpacePoint.from_array(val)

    def rungs(self, sweep):
        if sweep:
            return list(self.ladder) if self.ladder else quantize.dyadic_ladder(7)
        if self.hbar is not None:
            return [float(self.hbar)]
        return [float(self.ladder[0])] if self.ladder else [1.0]


def _check_points(cfg, *keys):
    n = cfg.dim
    for key in keys:
        if key in cfg.options and len(cfg.options[key]) != 2 * n:
            raise ValueError(f"{key} must have {2 * n} entries")


_EXPERIMENT_CHECKS = {
    "gauge-check": lambda c: (c.symbol(c.options.get("symbol", "f")),
                              geometry.gauge_from_config({"dim": c.dim, **c.options["rho"]})),
    "spectrum": lambda c: (c.symbol(c.options.get("symbol", "h")),
                           c.options.get("levels") and c.B.constant_matrix()),
    "overlap-sweep": lambda c: _check_points(c, "Z", "Y") or (c.options["Z"], c.options["Y"]),
    "berezin-sweep": lambda c: _check_points(c, "Z", "g_center"),
    "pullback-sweep": lambda c: _check_points(c, "X", "Y", "Zt") or (c.options["X"], c.options["Y"], c.options["Zt"]),
    "axioms-sweep": lambda c: _check_axioms(c),
    "star-crosscheck": lambda c: (c.symbol("f"), c.symbol("g")),
    "state-continuity": lambda c: (c.symbol(c.options.get("symbol", "g")), _check_points(c, "Z")),
}


def _check_axioms(cfg):
    if not cfg.B.is_constant:
        raise ValueError("axioms-sweep needs a zero or constant field")
    for p in cfg.options["pairs"]:
        if len(p["f"]) != cfg.dim or len(p["g"]) != cfg.dim:
            raise ValueError(f"each pair needs {cfg.dim} one-dimensional factors")
        _factors(p["f"]), _factors(p["g"])
    if "rieffel" in cfg.options and len(_factors(cfg.options["rieffel"])) != cfg.dim:
        raise ValueError(f"rieffel needs {cfg.dim} one-dimensional factors")


def _factors(records):
    return [quantize.symbol_from_config({"family": "gaussian", "dim": 1, **r}) for r in records]


# ---------------------------------------------------------------------------
# experiments; each returns rows (series, hbar, measured, reference)


def _exp_flux_check(cfg, hbar, rng):
    B, A = cfg.B, cfg.A
    rows = []
    box = float(cfg.options.get("box", 1.0))
    for k in range(int(cfg.options.get("cases", 100))):
        a, b, c = rng.uniform(-box, box, size=(3, cfg.dim))
        cycle = (geometry.circulation_segment(A, a, b) + geometry.circulation_segment(A, b, c)
                 + geometry.circulation_segment(A, c, a))
        rows.append((f"case{k}", hbar, float(cycle), float(geometry.flux_triangle(B, a, b, c))))
    return rows


def _exp_gauge_check(cfg, hbar, rng):
    f = cfg.symbol(cfg.options.get("symbol", "f"))
    rho = geometry.gauge_from_config({"dim": cfg.dim, **cfg.options["rho"]})
    grid = cfg.position_grid()
    A = cfg.A
    A2 = geometry.gauge_transform(A, rho)
    core = quantize.weyl_core(f, hbar, grid)
    S1 = quantize.op_A(f, A, hbar, grid, core=core)
    S2 = quantize.op_A(f, A2, hbar, grid, core=core)
    phase = np.exp(1j * rho(grid.points()) / hbar)
    conj = S1.conjugated_by(phase)
    scale = np.linalg.norm(S1.kernel)
    defect = np.linalg.norm(S2.kernel - conj.kernel) / scale
    rows = [("op_A", hbar, float(defect), 0.0)]
    if cfg.options.get("wrong", False):
        W1 = quantize.wrong_op(f, A, hbar, grid, core=core)
        W2 = quantize.wrong_op(f, A2, hbar, grid, core=core)
        wrong = np.linalg.norm(W2.kernel - W1.conjugated_by(phase).kernel) / np.linalg.norm(W1.kernel)
        rows.append(("wrong_op", hbar, float(wrong), None))
    return rows


def _exp_spectrum(cfg, hbar, rng):
    f = cfg.symbol(cfg.options.get("symbol", "h"))
    grid = cfg.position_grid()
    S = quantize.op_A(f, cfg.A, hbar, grid)
    evals = np.linalg.eigvalsh(0.5 * (S.matrix + S.matrix.conj().T))
    count = int(cfg.options.get("count", 5))
    if cfg.options.get("levels", False):
        # degenerate Landau levels: cluster values, reference hbar b0 (2n + 1)
        b0 = abs(cfg.B.constant_matrix()[0, 1])
        found = quantize.spectral_plateaus(evals, count)
        found += [float("nan")] * (count - len(found))
        return [(f"level{n}", hbar, e, hbar * b0 * (2 * n + 1)) for n, e in enumerate(found)]
    mass = float(cfg.options.get("mass", 1.0))
    return [(f"level{n}", hbar, float(e), hbar * mass * (2 * n + 1)) for n, e in enumerate(evals[:count])]


def _exp_identity(cfg, hbar, rng):
    v = cfg.fiducial_vector()
    A = cfg.A
    state = cfg.options.get("state", "coherent")
    cells = coherent.PhaseCells(half_width=cfg.options.get("half_width"))
    if state == "coherent":
        Z = cfg.point("Z", [0.0] * (2 * cfg.dim))
        u = coherent.coherent_vector(v, A, hbar, Z).wave
    else:
        grid = cfg.position_grid(7.0, 2 * math.ceil(7.0 / (0.25 * math.sqrt(hbar))))
        u = WaveFunction(grid, coherent.FiducialVector("hermite", cfg.dim)(grid.points())).normalized()
    return [("identity", hbar, float(coherent.resolution_of_identity(u, v, A, hbar, cells)), 1.0)]


def _exp_overlap(cfg, hbar, rng):
    v = cfg.fiducial_vector()
    A = cfg.A
    Z, Y = cfg.point("Z"), cfg.point("Y")
    grid = coherent.coherent_grid(v, hbar, [Z, Y], A)
    p = coherent.transition_probability(coherent.coherent_vector(v, A, hbar, Z, grid),
                                        coherent.coherent_vector(v, A, hbar, Y, grid))
    ref = None
    if cfg.B.family == "zero" and cfg.fiducial == "gaussian":
        ref = coherent.free_transition_probability(Z, Y, hbar)
    return [("transition", hbar, p, ref)]


def _gaussian_bump(center, variance):
    center = np.asarray(center, float)
    return lambda Y: np.exp(-0.5 * np.sum((np.asarray(Y) - center) ** 2, axis=-1) / variance)


def _exp_berezin(cfg, hbar, rng):
    v = cfg.fiducial_vector()
    Z = cfg.point("Z", [0.0] * (2 * cfg.dim))
    g = _gaussian_bump(cfg.options.get("g_center", Z.as_array()), float(cfg.options.get("g_variance", 4.0)))
    val = coherent.berezin_average(g, v, cfg.A, hbar, Z, bound=1.0)
    return [("berezin", hbar, float(val), float(g(Z.as_array())))]


def _exp_pullback(cfg, hbar, rng):
    v = cfg.fiducial_vector()
    X, Y, Zt = cfg.point("X"), cfg.point("Y"), cfg.point("Zt")
    val = coherent.pullback_form(v, cfg.A, hbar, X, Y, Zt)
    return [("pullback", hbar, float(val), float(geometry.sigma_B(cfg.B, X.x, Y, Zt)))]


def _exp_axioms(cfg, hbar, rng):
    # factor k of the product symbol is a function of (x_k, xi_k + A_k(x)); for zero or constant
    # fields its magnetic quantization is the tensor product of the field-free factor operators
    decay = float(cfg.options.get("decay", 14.0))
    rows = []
    for k, pair in enumerate(cfg.options["pairs"]):
        f, g = _factors(pair["f"]), _factors(pair["g"])
        grids = [moyal.factor_grid([a, b, a * b], hbar, decay=decay) for a, b in zip(f, g)]
        rep = moyal.factorized_defects(f, g, hbar, grids=grids)
        rows += [
            (f"von_neumann{k}", hbar, rep.von_neumann_defect, None),
            (f"dirac{k}", hbar, rep.dirac_defect, None),
            (f"norm{k}", hbar, rep.norm_value, None),
        ]
    if "rieffel" in cfg.options:
        r = _factors(cfg.options["rieffel"])
        grids = [moyal.factor_grid([a], hbar, decay=decay) for a in r]
        rows.append(("rieffel", hbar, moyal.factorized_norm(r, hbar, grids), None))
    return rows


def _exp_star(cfg, hbar, rng):
    f, g = cfg.symbol("f"), cfg.symbol("g")
    grid = cfg.position_grid(6.0, 32)
    S = moyal.star_operator(f, g, cfg.A, hbar, grid)
    n = cfg.dim
    mids = [S.midpoint_axis(j) for j in range(n)]
    etas = [S.eta_axis(j) for j in range(n)]
    rows = []
    for k in range(int(cfg.options.get("points", 9))):
        x = np.array([m[np.argmin(np.abs(m - c))] for m, c in zip(mids, rng.uniform(-1, 1, n))])
        xi = np.array([e[np.argmin(np.abs(e - c))] for e, c in zip(etas, rng.uniform(-1, 1, n))])
        X = PhaseSpacePoint(x, xi)
        direct = moyal.star_direct(f, g, cfg.B, hbar, X)
        op = complex(S(x, xi))
        rows.append((f"re{k}", hbar, float(np.real(direct)), float(np.real(op))))
        rows.append((f"im{k}", hbar, float(np.imag(direct)), float(np.imag(op))))
    return rows


def _exp_state(cfg, hbar, rng):
    g = cfg.symbol(cfg.options.get("symbol", "g"))
    Z = cfg.point("Z", [0.0] * (2 * cfg.dim))
    family = cfg.options.get("family", "constant")
    scale = (1.0 + hbar) if family == "linear" else 1.0
    val = coherent.coherent_expectation(g, cfg.fiducial_vector(), cfg.A, cfg.B, hbar, Z).real * scale
    return [("state", hbar, float(val), float(np.real(g(Z.x, Z.xi))))]


_RUNNERS = {
    "flux-check": _exp_flux_check, "gauge-check": _exp_gauge_check, "spectrum": _exp_spectrum,
    "identity": _exp_identity, "overlap-sweep": _exp_overlap, "berezin-sweep": _exp_berezin,
    "pullback-sweep": _exp_pullback, "axioms-sweep": _exp_axioms, "star-crosscheck": _exp_star,
    "state-continuity": _exp_state,
}


# ---------------------------------------------------------------------------
# reports


@dataclass
class SweepReport:
    """Rows ``(series, hbar, measured, reference, abs_error)`` plus verdicts."""

    config: dict
    rows: list
    runtime_ms: list
    checks: dict
    environment: dict
    seed: int

    @property
    def passed(self):
        return all(self.checks.values())

    def csv(self):
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            lines.append(",".join("" if x is None else (x if isinstance(x, str) else repr(float(x))) for x in row))
        return "\n".join(lines) + "\n"

    def to_json(self):
        return {
            "schema": SCHEMA,
            "config": self.config,
            "columns": list(CSV_COLUMNS),
            "rows": [list(r) for r in self.rows],
            "runtime_ms": self.runtime_ms,
            "checks": self.checks,
            "passed": self.passed,
            "seed": self.seed,
            "environment": self.environment,
        }


def environment_fingerprint():
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "machine": platform.machine(),
        "system": platform.system(),
    }


def _with_error(rows):
    out = []
    for series, hbar, measured, ref in rows:
        err = None if ref is None else abs(measured - ref)
        out.append((series, hbar, measured, ref, err))
    return out


def evaluate_checks(experiment, rows, tolerances):
    """Pass/fail verdicts recomputed from rows and tolerances alone."""
    checks = {}
    by_series = {}
    for r in rows:
        by_series.setdefault(r[0], []).append(r)
    ladder_rows = {s: [r for r in rs if r[1] != 0.0] for s, rs in by_series.items()}
    if "abs" in tolerances:
        checks["abs"] = all(r[4] is None or r[4] <= tolerances["abs"] for r in rows if r[1] != 0.0)
    if "rel" in tolerances:
        checks["rel"] = all(r[4] is None or r[4] <= tolerances["rel"] * abs(r[3]) for r in rows)
    if tolerances.get("monotone"):
        checks["monotone"] = all(all(a[2] > b[2] for a, b in zip(rs, rs[1:])) for rs in ladder_rows.values())
    if "ratio" in tolerances:
        ok = True
        for rs in ladder_rows.values():
            errs = [r[4] for r in rs if r[4] is not None]
            ok &= all(b <= tolerances["ratio"] * a for a, b in zip(errs, errs[1:]))
        checks["ratio"] = ok
    if "final_abs" in tolerances:
        checks["final_abs"] = all(rs[-1][4] is not None and rs[-1][4] <= tolerances["final_abs"]
                                  for rs in ladder_rows.values() if rs)
    if "final_rel" in tolerances:
        checks["final_rel"] = all(rs[-1][4] <= tolerances["final_rel"] * max(1.0, abs(rs[-1][3]))
                                  for rs in ladder_rows.values() if rs and rs[-1][4] is not None)
    if "final_fraction" in tolerances:
        defect = {s: rs for s, rs in ladder_rows.items() if s.startswith(("von_neumann", "dirac")) and len(rs) > 1}
        checks["final_fraction"] = all(rs[-1][2] <= tolerances["final_fraction"] * rs[0][2] for rs in defect.values())
    if "norm_step" in tolerances:
        norms = {s: rs for s, rs in ladder_rows.items() if s == "rieffel"}
        checks["norm_step"] = bool(norms) and all(
            abs(b[2] - a[2]) <= tolerances["norm_step"] * abs(a[2]) for rs in norms.values() for a, b in zip(rs, rs[1:])
        )
    if "limit_abs" in tolerances:
        limits = [r for r in rows if r[1] == 0.0]
        checks["limit_abs"] = bool(limits) and all(r[4] is not None and r[4] <= tolerances["limit_abs"] for r in limits)
    if "lipschitz" in tolerances:
        ok = True
        for rs in ladder_rows.values():
            ok &= all(abs(a[2] - b[2]) <= tolerances["lipschitz"] * abs(a[1] - b[1]) for a, b in zip(rs, rs[1:]))
        checks["lipschitz"] = ok
    return checks


def _rung(args):
    cfg, hbar, index = args
    rng = np.random.default_rng([cfg.seed, index])
    start = time.perf_counter()
    rows = _RUNNERS[cfg.experiment](cfg, hbar, rng)
    return rows, 1000.0 * (time.perf_counter() - start)


def _limit_rows(cfg, rows, rungs):
    if cfg.experiment not in REFERENCE_EXPERIMENTS or len(rungs) < 3:
        return []
    out = []
    series = {}
    for r in rows:
        series.setdefault(r[0], []).append(r)
    for name, rs in series.items():
        try:
            limit, _, _ = coherent.richardson_limit([r[1] for r in rs], [r[2] for r in rs])
        except MagweylError:
            continue
        out.append((name, 0.0, float(limit), rs[-1][3]))
    return out


def execute(cfg, sweep=False, threads=1):
    """Run an experiment and assemble its report (no files written)."""
    rungs = [float("nan")] if cfg.experiment == "flux-check" else cfg.rungs(sweep)
    jobs = [(cfg, h, i) for i, h in enumerate(rungs)]
    try:
        if threads > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_rung, jobs))
        else:
            results = [_rung(j) for j in jobs]
    except MagweylError as exc:
        exc.args = (f"{cfg.experiment}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise
    # series-major, ladder order within each series
    grouped = {}
    for rows, _ in results:
        for r in rows:
            grouped.setdefault(r[0], []).append(r)
    raw_sorted = [r for rs in grouped.values() for r in rs]
    if sweep:
        raw_sorted += _limit_rows(cfg, raw_sorted, rungs)
    rows = _with_error(raw_sorted)
    checks = evaluate_checks(cfg.experiment, rows, cfg.tolerances)
    return SweepReport(cfg.echo(), rows, [round(ms, 3) for _, ms in results], checks, environment_fingerprint(),
                       cfg.seed)


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report, out_dir, stem):
    out_dir = Path(out_dir)
    _atomic_write(out_dir / f"{stem}.csv", report.csv())
    _atomic_write(out_dir / f"{stem}.json", json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    return out_dir / f"{stem}.csv", out_dir / f"{stem}.json"


def run(cfg, out_dir=".", threads=1):
    """Evaluate one rung, write CSV and JSON, return the report."""
    report = execute(cfg, sweep=False, threads=threads)
    write_report(report, out_dir, cfg.output)
    return report


def sweep(cfg, out_dir=".", threads=1):
    """Evaluate every rung of the ladder, append extrapolated limits, write files."""
    report = execute(cfg, sweep=True, threads=threads)
    write_report(report, out_dir, cfg.output)
    return report


def render(report_path, out_dir=None):
    """Two-column plot data per series plus a summary table.

    Returns the list of written paths.
    """
    report_path = Path(report_path)
    try:
        data = json.loads(report_path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read report {report_path}: {exc.strerror}") from exc
    out_dir = Path(out_dir) if out_dir else report_path.parent
    stem = report_path.stem
    rows = data.get("rows", [])
    written = []
    series = {}
    for r in rows:
        series.setdefault(r[0], []).append(r)
    for name, rs in series.items():
        refs = {r[3] for r in rs if r[3] is not None}
        lines = [f"# series {name}"]
        if len(refs) == 1:
            lines.append(f"# reference {refs.pop()!r}")
        lines.append("# hbar value")
        lines += [f"{r[1]!r} {r[2]!r}" for r in rs]
        path = out_dir / f"{stem}_{name}.dat"
        _atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)
    summary = [f"experiment: {data.get('config', {}).get('experiment', '?')}", f"passed: {data.get('passed')}"]
    for key, ok in sorted(data.get("checks", {}).items()):
        summary.append(f"check {key}: {'pass' if ok else 'FAIL'}")
    if not rows:
        summary.append("no rows")
    else:
        summary.append(f"{'series':<14} {'hbar':>12} {'measured':>14} {'reference':>14} {'abs_error':>11}")
        for r in rows:
            ref = "" if r[3] is None else f"{r[3]:.6g}"
            err = "" if r[4] is None else f"{r[4]:.3e}"
            summary.append(f"{r[0]:<14} {r[1]:>12.6g} {r[2]:>14.8g} {ref:>14} {err:>11}")
    path = out_dir / f"{stem}_summary.txt"
    _atomic_write(path, "\n".join(summary) + "\n")
    written.append(path)
    return written


# ---------------------------------------------------------------------------
# entry point


def _threads(value):
    if value is not None:
        return value
    env = os.environ.get("MAGWEYL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError(f"MAGWEYL_THREADS must be an integer, got {env!r}") from exc
    return 1


def build_parser():
    parser = argparse.ArgumentParser(prog="magweyl", description="Magnetic Weyl calculus experiments.")
    parser.add_argument("--out-dir", default=None, help="directory for reports (default: next to the input)")
    parser.add_argument("--threads", type=int, default=None, help="worker processes for ladder rungs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "evaluate one Planck parameter"), ("sweep", "evaluate the whole ladder")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
    p = sub.add_parser("render", help="write plot data and a summary from a report")
    p.add_argument("report")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        threads = _threads(args.threads)
        if args.command == "render":
            for path in render(args.report, args.out_dir):
                print(path)
            return 0
        cfg = ExperimentConfig.load(args.config)
        out_dir = args.out_dir or str(Path(args.config).resolve().parent)
        report = (sweep if args.command == "sweep" else run)(cfg, out_dir, threads)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (MagweylError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    for key, ok in sorted(report.checks.items()):
        print(f"{key}: {'pass' if ok else 'FAIL'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
