"""Library metrics and metric-file loading."""
from __future__ import annotations

import json
import re
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import logging

import numpy as np

from . import expr as E
from .riemann import MetricSpec

log = logging.getLogger(__name__)

__all__ = [
    "flat",
    "conf_flat",
    "sphere_stereographic",
    "schwarzschild",
    "random_perturbed",
    "load_metric",
    "MetricConfigError",
    "sample_points",
]


class MetricConfigError(ValueError):
    """Bad metric name, file, or contents."""


def _coords(n):
    return tuple(f"x{i + 1}" for i in range(n))


def _diag(n, entries, coords, signature, name):
    g = np.empty((n, n), dtype=object)
    for a in range(n):
        for b in range(n):
            g[a, b] = entries[a] if a == b else E.const(0)
    return MetricSpec(n, coords, g, signature, name)


def flat(n: int, sig: int = 0) -> MetricSpec:
    """diag(-1,...,-1, 1,...,1) with ``sig`` minus signs."""
    entries = [E.const(-1 if a < sig else 1) for a in range(n)]
    return _diag(n, entries, _coords(n), (n - sig, sig), f"flat({n})")


def conf_flat(n: int, ups: str | E.Expression = "x1", sig: int = 0) -> MetricSpec:
    """exp(2 ups) times the flat metric."""
    coords = _coords(n)
    u = E.parse(ups, coords) if isinstance(ups, str) else ups
    fac = E.exp(E.const(2) * u)
    entries = [(-fac if a < sig else fac) for a in range(n)]
    return _diag(n, entries, coords, (n - sig, sig), f"conf_flat({n}, {u})")


def sphere_stereographic(n: int) -> MetricSpec:
    """Round unit sphere, 4 / (1 + |x|^2)^2 times the flat metric."""
    coords = _coords(n)
    r2 = sum((E.coord(i) * E.coord(i) for i in range(1, n)), E.coord(0) * E.coord(0))
    fac = E.const(4) * (E.const(1) + r2) ** E.const(-2)
    return _diag(n, [fac] * n, coords, (n, 0), f"sphere_stereographic({n})")


def schwarzschild(mass: float = 1.0) -> MetricSpec:
    """Static chart (t, r, th, ph), signature (-+++)."""
    coords = ("t", "r", "th", "ph")
    m = E.const(mass) if not float(mass).is_integer() else E.const(int(mass))
    r = E.coord(1)
    th = E.coord(2)
    f = E.const(1) - E.const(2) * m / r
    entries = [-f, E.const(1) / f, r * r, r * r * E.sin(th) * E.sin(th)]
    return _diag(4, entries, coords, (3, 1), f"schwarzschild({mass})")


def random_perturbed(n: int, seed: int, eps: float = 0.05, sig: int = 0) -> MetricSpec:
    """delta (or diag(-1,1,..)) plus eps times a symmetric grid of random quadratics."""
    rng = np.random.default_rng(seed)
    coords = _coords(n)
    x = [E.coord(i) for i in range(n)]
    g = np.empty((n, n), dtype=object)
    for a in range(n):
        for b in range(a, n):
            c0 = rng.uniform(-1, 1)
            lin = rng.uniform(-1, 1, n)
            quad = rng.uniform(-1, 1, (n, n))
            poly = E.const(round(float(c0), 6))
            for i in range(n):
                poly = poly + E.const(round(float(lin[i]), 6)) * x[i]
                for j in range(i, n):
                    poly = poly + E.const(round(float(quad[i, j]), 6)) * x[i] * x[j]
            entry = E.const(eps) * poly
            if a == b:
                entry = E.const(-1 if a < sig else 1) + entry
            g[a, b] = entry
            g[b, a] = entry
    return MetricSpec(n, coords, g, (n - sig, sig), f"random({n}, seed={seed})")


_BUILTIN = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$")


def _builtin(name: str, dim: int | None) -> MetricSpec:
    m = _BUILTIN.match(name)
    if not m:
        raise MetricConfigError(f"cannot parse metric name {name!r}")
    kind, args = m.group(1), m.group(2)
    parts = [s.strip() for s in args.split(",")] if args else []
    try:
        if kind == "flat":
            n = int(parts[0]) if parts else dim
            sig = int(parts[1]) if len(parts) > 1 else 0
            return flat(n, sig)
        if kind == "conf_flat":
            n = int(parts[0]) if parts else dim
            ups = ",".join(parts[1:]) if len(parts) > 1 else "x1"
            return conf_flat(n, ups)
        if kind == "sphere_stereographic":
            return sphere_stereographic(int(parts[0]) if parts else dim)
        if kind == "schwarzschild":
            return schwarzschild(float(parts[0]) if parts else 1.0)
        if kind == "random":
            n = int(parts[0]) if parts else dim
            seed = int(parts[1]) if len(parts) > 1 else 0
            return random_perturbed(n, seed)
    except (TypeError, ValueError, E.ExprSyntaxError) as exc:
        raise MetricConfigError(f"bad arguments for {kind}: {exc}") from exc
    raise MetricConfigError(f"unknown builtin metric {kind!r}")


def load_metric(source: str, dim: int | None = None) -> MetricSpec:
    """Load a builtin (``flat(4)``, ``schwarzschild(1)``, ...) or a TOML/JSON metric file."""
    path = Path(source)
    if path.suffix.lower() in (".toml", ".json") and path.exists():
        try:
            if path.suffix.lower() == ".toml":
                data = tomllib.loads(path.read_text())
            else:
                data = json.loads(path.read_text())
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise MetricConfigError(f"{path}: {exc}") from exc
        try:
            n = int(data["dim"])
            coords = list(data["coords"])
            rows = data["g"]
        except KeyError as exc:
            raise MetricConfigError(f"{path}: missing field {exc}") from exc
        if len(coords) != n or len(rows) != n or any(len(r) != n for r in rows):
            raise MetricConfigError(f"{path}: dimension mismatch")
        sig = data.get("signature")
        try:
            spec = MetricSpec.from_strings(rows, coords, tuple(sig) if sig else None, path.stem)
        except (E.ExprSyntaxError, ValueError) as exc:
            raise MetricConfigError(f"{path}: {exc}") from exc
        if dim is not None and dim != n:
            raise MetricConfigError(f"{path}: file has dim {n}, requested {dim}")
        return spec
    if path.suffix.lower() in (".toml", ".json"):
        raise MetricConfigError(f"metric file {source} not found")
    spec = _builtin(source, dim)
    if dim is not None and spec.n != dim:
        raise MetricConfigError(f"{source} has dimension {spec.n}, requested {dim}")
    return spec


def sample_points(metric: MetricSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """Points in the metric's sampling box, away from coordinate singularities."""
    n = metric.n
    if metric.name.startswith("schwarzschild"):
        # r in [3, 8], theta away from the axis; any extra flat directions in [-1, 1]
        lo = np.array([-1.0, 3.0, 0.6, -1.0] + [-1.0] * (n - 4))
        hi = np.array([1.0, 8.0, 2.5, 1.0] + [1.0] * (n - 4))
    elif metric.name.startswith("random"):
        lo, hi = -0.5 * np.ones(n), 0.5 * np.ones(n)
    else:
        lo, hi = -0.8 * np.ones(n), 0.8 * np.ones(n)
    pts = []
    while len(pts) < count:
        p = rng.uniform(lo, hi)
        if abs(np.linalg.det(metric.value(p))) > 1e-6:
            pts.append(p)
        else:
            log.info("resampling: %s is degenerate at %s", metric.name, p)
    return np.array(pts)
