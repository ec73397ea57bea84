"""Experiment orchestration: h-sweeps, exponent fits and reports.

Config files are INI-style with four sections::

    [surface]
    preset = cylinder-circular radius=1 length=1
    # or profile expressions:  B = x / a = 0 / b = 1 / c = 1 / p = 2*pi / z_range = 0 1
    # or a curve file:         curve = path.txt / kind = cylinder|cone / z_range = 1 2

    [experiment]
    mode = ansatz            # ansatz | eig | both | kirchhoff
    bc = V2
    kind = full              # full | simplified
    n_list = 2 3 4 5 6       # h = n^-4; or h_list = 0.08 0.04 0.02
    seed = 0

    [eig]
    tol = 1e-7
    maxit = 500
    element = mitc           # mitc | trilinear
    n_t = 2
    theta_min = 32
    theta_per_wave = 16
    n_z = 32

    [output]
    dir = out
    name = sweep
    format = csv             # csv | svg | both
    timing = yes             # "no" writes wall_ms = 0 for byte-stable files

Profile expressions use the variable ``x`` for both theta and z.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import os
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import sympy as sp

from . import geometry
from .ansatz import bump, n_of_h, optimal_ansatz, shell_kirchhoff_field
from ._symbolic import TH, Z
from .errors import ConfigError, InsufficientData, IoFailure, KornLabError, NonPositiveValue
from .operators import QuadratureSpec, korn_functionals
from .solver import ResolutionPolicy, korn_constant

MODES = ("ansatz", "eig", "both", "kirchhoff")
CSV_COLUMNS = ("h", "n", "mode", "bc", "kind", "value", "iters", "residual", "wall_ms")


@dataclass
class ExperimentConfig:
    surface: dict
    mode: str = "ansatz"
    bc: str = "V2"
    kind: str = "full"
    h_list: tuple = ()
    seed: int = 0
    phi: Optional[str] = None
    interval: Optional[tuple] = None
    eig_tol: float = 1e-7
    eig_maxit: int = 500
    element: str = "mitc"
    policy: ResolutionPolicy = field(default_factory=ResolutionPolicy)
    quad_theta_per_wave: int = 32
    out_dir: str = "out"
    name: str = "sweep"
    formats: tuple = ("csv",)
    timing: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.bc not in ("V1", "V2", "V3"):
            raise ConfigError(f"bc must be V1, V2 or V3, got {self.bc!r}")
        if self.kind not in ("full", "simplified"):
            raise ConfigError(f"kind must be full or simplified, got {self.kind!r}")
        hs = tuple(float(h) for h in self.h_list)
        if not hs:
            raise ConfigError("empty h list")
        if any(not 0 < h < 1 for h in hs):
            raise ConfigError("h values must lie in (0, 1)")
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ConfigError("h values must be strictly decreasing")
        self.h_list = hs
        for f in self.formats:
            if f not in ("csv", "svg"):
                raise ConfigError(f"unknown output format {f!r}")


def _floats(text, key):
    try:
        return tuple(float(sp.sympify(v)) for v in text.replace(",", " ").split())
    except (sp.SympifyError, TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {text!r} as numbers") from None


def _formats(text):
    text = text.strip().lower()
    return ("csv", "svg") if text == "both" else (text,)


def new_parser():
    """Config parser that keeps key case (``B`` and ``b`` are different profiles)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read an INI config file; ``overrides`` replaces fields after parsing."""
    cp = new_parser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return config_from_parser(cp, base=Path(path).parent, overrides=overrides)


def config_from_parser(cp: configparser.ConfigParser, base=Path("."), overrides=None):
    if not cp.has_section("surface"):
        raise ConfigError("missing [surface] section")
    surface = dict(cp["surface"])
    if "curve" in surface and not os.path.isabs(surface["curve"]):
        surface["curve"] = str(Path(base) / surface["curve"])
    ex = cp["experiment"] if cp.has_section("experiment") else {}
    eg = cp["eig"] if cp.has_section("eig") else {}
    out = cp["output"] if cp.has_section("output") else {}
    if "h_list" in ex and "n_list" in ex:
        raise ConfigError("give either h_list or n_list, not both")
    if "h_list" in ex:
        hs = _floats(ex["h_list"], "h_list")
    elif "n_list" in ex:
        ns = _floats(ex["n_list"], "n_list")
        if any(n < 1 or n != int(n) for n in ns):
            raise ConfigError("n_list entries must be positive integers")
        hs = tuple(float(int(n)) ** -4 for n in ns)
    else:
        hs = ()
    try:
        kw = dict(
            surface=surface,
            mode=ex.get("mode", "ansatz").strip(),
            bc=ex.get("bc", "V2").strip(),
            kind=ex.get("kind", "full").strip(),
            h_list=hs,
            seed=int(ex.get("seed", 0)),
            phi=ex.get("phi"),
            interval=_floats(ex["interval"], "interval") if "interval" in ex else None,
            eig_tol=float(eg.get("tol", 1e-7)),
            eig_maxit=int(eg.get("maxit", 500)),
            element=eg.get("element", "mitc").strip(),
            policy=ResolutionPolicy(int(eg.get("n_t", 2)), int(eg.get("theta_min", 32)),
                                    int(eg.get("theta_per_wave", 16)), int(eg.get("n_z", 32))),
            out_dir=out.get("dir", "out"),
            name=out.get("name", "sweep"),
            formats=_formats(out.get("format", "csv")),
            timing=out.get("timing", "yes").strip().lower() in ("yes", "true", "1", "on"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    kw.update(overrides or {})
    return ExperimentConfig(**kw)


def build_surface_from_config(surface: dict):
    """Surface from a ``[surface]`` section (preset, profiles or curve file)."""
    surface = dict(surface)
    if "preset" in surface:
        name = surface["preset"].split()[0] if surface["preset"].split() else ""
        if name not in ("cylinder-circular", "cylinder-ellipse", "cone-circle", "cylinder-flat-patch"):
            raise ConfigError(f"unknown surface preset {name!r}")
        return geometry.parse_preset(surface["preset"])
    if "curve" in surface:
        kind = surface.get("kind", "cylinder").strip()
        curve = geometry.read_curve_file(surface["curve"]).reparametrize()
        if kind == "cylinder":
            zr = _floats(surface.get("z_range", "0 1"), "z_range")
            return geometry.cylinder_from_curve(curve, zr)
        if kind == "cone":
            zr = _floats(surface.get("z_range", "1 2"), "z_range")
            return geometry.cone_from_curve(curve, zr)
        raise ConfigError(f"curve kind must be cylinder or cone, got {kind!r}")
    keys = ("B", "a", "b", "c", "p", "z_range")
    missing = [k for k in keys if k not in surface]
    if missing:
        raise ConfigError(f"[surface] needs preset, curve or all of {keys}; missing {missing}")
    try:
        p = float(sp.sympify(surface["p"]))
        for k in ("B", "a", "b", "c"):
            sp.sympify(surface[k])
    except sp.SympifyError as exc:
        raise ConfigError(f"cannot parse surface expression: {exc}") from None
    zr = _floats(surface["z_range"], "z_range")
    # the raw strings go to build_surface, which binds x to its own real symbol
    return geometry.build_surface(surface["B"], surface["a"], surface["b"], surface["c"], p, zr,
                                  name=surface.get("name", "profiles"))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    h: float
    n: int
    mode: str
    bc: str
    kind: str
    value: float
    iters: int
    residual: float
    wall_ms: float


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float


@dataclass
class SweepResult:
    rows: list
    fits: dict
    seed: int
    config: Optional[ExperimentConfig] = None

    def by_mode(self, mode):
        return [r for r in self.rows if r.mode == mode]


def flat_arc(s, n=8192, tol=1e-14):
    """Longest theta-interval on which c vanishes (for Kirchhoff fields)."""
    th = np.arange(n) * (s.p / n)
    flat = np.abs(s.c(th)) <= tol
    if not flat.any():
        raise ConfigError(f"surface {s.name!r} has no flat arc for a Kirchhoff field")
    best, start = (0, 0), None
    for i, f in enumerate(np.append(flat, False)):
        if f and start is None:
            start = i
        elif not f and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    return th[best[0]], th[best[1] - 1]


def default_kirchhoff_phi(s):
    lo, hi = flat_arc(s)
    L0, L1 = s.z_range
    return bump(TH, lo, hi) * sp.sin(sp.pi * (Z - L0) / (L1 - L0)) ** 2


def _quad_for(cfg, n):
    return QuadratureSpec(n_theta=max(128, cfg.quad_theta_per_wave * max(n, 1)))


def _run_one(cfg: ExperimentConfig, s, mode, h):
    t0 = time.perf_counter()
    n = n_of_h(h)
    iters, residual = 0, 0.0
    try:
        if mode == "ansatz":
            fa = optimal_ansatz(s, h, interval=cfg.interval)
            q_full, q_simp, _ = korn_functionals(s, fa.field, h, _quad_for(cfg, n))
            value = q_full if cfg.kind == "full" else q_simp
        elif mode == "kirchhoff":
            phi = sp.sympify(cfg.phi) if cfg.phi else default_kirchhoff_phi(s)
            kf = shell_kirchhoff_field(s, phi)
            q_full, q_simp, _ = korn_functionals(s, kf.field, h, QuadratureSpec(n_theta=512))
            value = q_full if cfg.kind == "full" else q_simp
        else:
            res = korn_constant(s, h, cfg.bc, cfg.policy, cfg.kind, cfg.element,
                                tol=cfg.eig_tol, maxit=cfg.eig_maxit, seed=cfg.seed)
            value, iters, residual = res.lam, res.iterations, res.residual
    except KornLabError as exc:
        exc.args = (f"h={h:.6g}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise
    wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
    return SweepRow(float(h), n, mode, cfg.bc, cfg.kind, float(value), int(iters), float(residual),
                    float(round(wall, 3)))


def run_sweep(cfg: ExperimentConfig, surface=None) -> SweepResult:
    """One row per h and mode, sorted by (mode, h descending), with a fit per mode."""
    s = surface if surface is not None else build_surface_from_config(cfg.surface)
    modes = ("ansatz", "eig") if cfg.mode == "both" else (cfg.mode,)
    jobs = [(m, h) for m in modes for h in cfg.h_list]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            rows = list(ex.map(lambda job: _run_one(cfg, s, *job), jobs))
    else:
        rows = [_run_one(cfg, s, *job) for job in jobs]
    rows.sort(key=lambda r: (r.mode, -r.h))
    fits = {}
    for m in modes:
        sub = [r for r in rows if r.mode == m]
        if len(sub) >= 3:
            fits[m] = fit_exponent(sub)
    return SweepResult(rows, fits, cfg.seed, cfg)


def fit_exponent(rows) -> FitResult:
    """Least squares of log(value) against log(h).

    ``rows`` holds SweepRow objects or ``(h, value)`` pairs.
    """
    pts = [(r.h, r.value) if isinstance(r, SweepRow) else (float(r[0]), float(r[1])) for r in rows]
    if len(pts) < 3:
        raise InsufficientData(f"need at least 3 rows for a fit, got {len(pts)}")
    h = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(h <= 0) or np.any(v <= 0):
        raise NonPositiveValue("log-log fit needs positive h and values")
    x, y = np.log(h), np.log(v)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - A @ (slope, intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _g(v):
    return format(v, ".17g")


def format_csv(rows, fit: Optional[FitResult], seed) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_g(r.h), r.n, r.mode, r.bc, r.kind, _g(r.value), r.iters, _g(r.residual),
                    _g(r.wall_ms)])
    slope, r2 = (_g(fit.slope), _g(fit.r_squared)) if fit else ("nan", "nan")
    buf.write(f"# slope={slope} r2={r2} seed={seed}\n")
    return buf.getvalue()


def parse_csv(text):
    """Rows and footer fields of a report produced by :func:`format_csv`."""
    lines = text.splitlines()
    footer = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            for item in line[1:].split():
                k, v = item.split("=", 1)
                footer[k] = v
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    rows = [SweepRow(float(h), int(n), m, bc, k, float(v), int(it), float(res), float(wm))
            for h, n, m, bc, k, v, it, res, wm in reader]
    return rows, footer


def format_svg(rows, fit: Optional[FitResult], title="", width=480, height=360) -> str:
    """Log-log scatter of (h, value) with the fitted line, as an SVG document."""
    margin = 56
    x = np.log10([r.h for r in rows])
    y = np.log10([r.value for r in rows])
    xlo, xhi = x.min() - 0.1, x.max() + 0.1
    ylo, yhi = y.min() - 0.2, y.max() + 0.2
    px = lambda v: margin + (v - xlo) / (xhi - xlo) * (width - 2 * margin)
    py = lambda v: height - margin - (v - ylo) / (yhi - ylo) * (height - 2 * margin)
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width),
                     height=str(height), viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(width), height=str(height), fill="white")
    ET.SubElement(svg, "line", x1=str(margin), y1=str(height - margin), x2=str(width - margin),
                  y2=str(height - margin), stroke="black")
    ET.SubElement(svg, "line", x1=str(margin), y1=str(margin), x2=str(margin),
                  y2=str(height - margin), stroke="black")
    lab = ET.SubElement(svg, "text", x=str(width / 2), y=str(height - 12), attrib={"text-anchor": "middle"})
    lab.text = "log10 h"
    lab = ET.SubElement(svg, "text", x="14", y=str(height / 2),
                        transform=f"rotate(-90 14 {height / 2})", attrib={"text-anchor": "middle"})
    lab.text = "log10 value"
    for xv, yv in zip(x, y):
        ET.SubElement(svg, "circle", cx=f"{px(xv):.2f}", cy=f"{py(yv):.2f}", r="4", fill="#1f77b4")
    if fit is not None:
        ends = np.array([xlo, xhi])
        yy = (fit.slope * ends * math.log(10) + fit.intercept) / math.log(10)
        ET.SubElement(svg, "line", x1=f"{px(ends[0]):.2f}", y1=f"{py(yy[0]):.2f}",
                      x2=f"{px(ends[1]):.2f}", y2=f"{py(yy[1]):.2f}", stroke="#d62728")
        cap = ET.SubElement(svg, "text", x=str(margin + 8), y=str(margin - 8))
        cap.text = f"{title} slope={fit.slope:.4f} r2={fit.r_squared:.4f}".strip()
    return ET.tostring(svg, encoding="unicode", xml_declaration=False)


def emit_report(result: SweepResult, formats=("csv",), out_dir="out", name="sweep"):
    """Write one CSV and/or SVG per mode; returns the written paths."""
    if not result.rows:
        raise ValueError("empty sweep result")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from None
    modes = sorted({r.mode for r in result.rows})
    paths = []
    for m in modes:
        rows = result.by_mode(m)
        stem = name if len(modes) == 1 else f"{name}_{m}"
        fit = result.fits.get(m)
        for fmt in formats:
            if fmt == "csv":
                text, path = format_csv(rows, fit, result.seed), out / f"{stem}.csv"
            elif fmt == "svg":
                text, path = format_svg(rows, fit, m), out / f"{stem}.svg"
            else:
                raise ValueError(f"unknown format {fmt!r}")
            try:
                with open(path, "w", newline="") as fh:
                    fh.write(text)
            except OSError as exc:
                raise IoFailure(f"cannot write {path}: {exc}") from None
            paths.append(path)
    return paths


def geometry_report(s) -> dict:
    """Summary numbers printed by the geometry-check command."""
    th = np.linspace(0.0, s.p, 257)[:-1]
    z = np.linspace(*s.z_range, 33)
    TT, ZZ = np.meshgrid(th, z, indexing="ij")
    At = s.A_theta(TT, ZZ)
    cod, gau = geometry.codazzi_gauss_residual(s)
    cmin, cmax = s.c_range()
    return dict(name=s.name, p=s.p, z_range=tuple(s.z_range), A_z_min=float(np.min(s.A_z(z))),
                A_theta_min=float(At.min()), A_theta_max=float(At.max()), c_min=float(cmin),
                c_max=float(cmax), uniformly_convex=bool(s.uniformly_convex),
                codazzi=float(cod), gauss=float(gau))

