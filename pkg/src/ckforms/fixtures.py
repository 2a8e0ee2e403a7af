"""Known conformal Killing forms on curved metrics, used as test and suite fixtures.

Each fixture is only a candidate until :func:`ckforms.prolongation.cke_residual`
confirms it; the suites check that before relying on it.
"""
from __future__ import annotations

import numpy as np

from . import expr as E
from .forms import FormField, hodge_star
from .metrics import schwarzschild
from .riemann import MetricSpec

__all__ = [
    "schwarzschild_killing_yano",
    "schwarzschild_killing_vector",
    "schwarzschild_fixtures",
    "schwarzschild_times_line",
    "product_fixtures",
    "symmetric_metric",
    "translation_killing_form",
]


def schwarzschild_killing_yano() -> FormField:
    """The 2-form r^3 sin(th) dth ^ dph on the Schwarzschild chart."""
    r, th = E.coord(1), E.coord(2)
    return FormField.from_components(4, 2, {(2, 3): r * r * r * E.sin(th)})


def schwarzschild_killing_vector(metric: MetricSpec, which: str = "t") -> FormField:
    """Metric dual of d/dt or d/dph: a Killing 1-form."""
    idx = {"t": 0, "ph": 3}[which]
    comps = {(a,): metric.g[a, idx] for a in range(4) if not metric.g[a, idx].is_zero()}
    return FormField.from_components(4, 1, comps)


def schwarzschild_fixtures(mass: float = 1.0) -> dict[str, tuple[MetricSpec, FormField]]:
    """Candidate solutions of each degree 1..3 on the Schwarzschild chart."""
    m = schwarzschild(mass)
    ky = schwarzschild_killing_yano()
    kt = schwarzschild_killing_vector(m, "t")
    return {
        "ky2": (m, ky),
        "star_ky2": (m, hodge_star(ky, m)),
        "kv_t": (m, kt),
        "kv_ph": (m, schwarzschild_killing_vector(m, "ph")),
        "star_kv_t": (m, hodge_star(kt, m)),
    }


def schwarzschild_times_line(mass: float = 1.0) -> MetricSpec:
    """Schwarzschild plus dw^2: Ricci flat in five dimensions."""
    base = schwarzschild(mass)
    g = np.empty((5, 5), dtype=object)
    for a in range(5):
        for b in range(5):
            g[a, b] = base.g[a, b] if a < 4 and b < 4 else E.const(1 if a == b else 0)
    return MetricSpec(5, base.coords + ("w",), g, (4, 1), f"schwarzschild_times_line({mass})")


def product_fixtures(mass: float = 1.0) -> dict[str, tuple[MetricSpec, FormField]]:
    """Candidate solutions of degree 1..4 on Schwarzschild x R."""
    m = schwarzschild_times_line(mass)
    r, th = E.coord(1), E.coord(2)
    ky = FormField.from_components(5, 2, {(2, 3): r * r * r * E.sin(th)})
    kt = FormField.from_components(5, 1, {(0,): m.g[0, 0]})
    return {
        "ky2": (m, ky),
        "star_ky2": (m, hodge_star(ky, m)),
        "kv_t": (m, kt),
        "kv_w": (m, FormField.from_components(5, 1, {(4,): 1})),
        "star_kv_t": (m, hodge_star(kt, m)),
    }


def symmetric_metric(n: int, seed: int, eps: float = 0.05) -> MetricSpec:
    """delta + eps * random quadratics in x2..xn: d/dx1 is a Killing field and curvature is generic."""
    rng = np.random.default_rng(seed)
    coords = tuple(f"x{i + 1}" for i in range(n))
    x = [E.coord(i) for i in range(n)]
    g = np.empty((n, n), dtype=object)
    for a in range(n):
        for b in range(a, n):
            poly = E.const(round(float(rng.uniform(-1, 1)), 6))
            for i in range(1, n):
                poly = poly + E.const(round(float(rng.uniform(-1, 1)), 6)) * x[i]
                for j in range(i, n):
                    poly = poly + E.const(round(float(rng.uniform(-1, 1)), 6)) * x[i] * x[j]
            entry = E.const(eps) * poly
            if a == b:
                entry = E.const(1) + entry
            g[a, b] = g[b, a] = entry
    return MetricSpec(n, coords, g, (n, 0), f"symmetric({n}, seed={seed})")


def translation_killing_form(metric: MetricSpec) -> FormField:
    """g(d/dx1, .), Killing for :func:`symmetric_metric`."""
    n = metric.n
    return FormField.from_components(n, 1, {(a,): metric.g[a, 0] for a in range(n)})
