"""Metrics given by coordinate expressions, their curvature, and covariant derivatives.

Every weighted object is handled through its representative in the active
scale.  Quantities are computed as jets at a point: the metric is expanded
to total order N by exact symbolic differentiation, and everything else
(Christoffels, curvature, derivatives of curvature) follows by jet algebra.

Curvature conventions: ``[nabla_a, nabla_b] v^c = R_ab^c_d v^d`` and
``Ric_ab = R_ca^c_b``; Schouten ``P`` satisfies ``Ric = (n-2) P + J g``.
"""
from __future__ import annotations

import itertools
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as E
from .jets import Jet, jeinsum, jet_space

__all__ = [
    "MetricSpec",
    "RescaleData",
    "WeightedTensorField",
    "CurvatureStack",
    "grid_jet",
    "christoffel",
    "curvature",
    "covariant_derivative",
    "nabla",
    "rescale",
    "rescale_field",
    "MAX_JET_ORDER",
]

MAX_JET_ORDER = 4


class SingularMetricError(ValueError):
    pass


def _expr_grid(rows, coords) -> np.ndarray:
    grid = np.empty(np.shape(rows), dtype=object)
    for idx in itertools.product(*(range(s) for s in grid.shape)):
        v = rows
        for i in idx:
            v = v[i]
        grid[idx] = E.parse(v, coords) if isinstance(v, str) else E.const(v) if not isinstance(v, E.Expression) else v
    return grid


def grid_jet(grid: np.ndarray, point: Sequence[float], order: int, evaluator: E.Evaluator | None = None) -> Jet:
    """Taylor jet of an object array of expressions about ``point``."""
    n = len(point)
    if order > MAX_JET_ORDER:
        raise ValueError(f"jet order {order} exceeds the cap {MAX_JET_ORDER}")
    space = jet_space(n, MAX_JET_ORDER)
    ev = evaluator or E.Evaluator(point)
    m = space.size(order)
    data = np.zeros(grid.shape + (m,))
    for idx in itertools.product(*(range(s) for s in grid.shape)):
        e = grid[idx]
        if isinstance(e, E.Const) and e.is_zero():
            continue
        for j in range(m):
            alpha = space.monomials[j]
            d = e
            for var, a in enumerate(alpha):
                for _ in range(a):
                    d = E.diff(d, var)
                    if d.is_zero():
                        break
            if not d.is_zero():
                data[idx + (j,)] = ev(d) / space.factorial[j]
    return Jet(data, space)


@dataclass(eq=False)
class MetricSpec:
    """A (pseudo-)Riemannian metric g_ab given componentwise by expressions in the chart."""

    n: int
    coords: tuple[str, ...]
    g: np.ndarray  # (n, n) object array of Expressions
    signature: tuple[int, int] | None = None
    name: str = "metric"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.coords = tuple(self.coords)
        if len(self.coords) != self.n:
            raise ValueError(f"{self.n} coordinates expected, got {len(self.coords)}")
        if self.g.shape != (self.n, self.n):
            raise ValueError(f"metric grid must be {self.n}x{self.n}")
        for a in range(self.n):
            for b in range(a + 1, self.n):
                if str(self.g[a, b]) != str(self.g[b, a]):
                    raise ValueError(f"metric not symmetric: g[{a}][{b}] != g[{b}][{a}]")

    @classmethod
    def from_strings(cls, rows, coords, signature=None, name="metric") -> "MetricSpec":
        coords = tuple(coords)
        return cls(len(coords), coords, _expr_grid(rows, coords), signature, name)

    def jet(self, point: Sequence[float], order: int) -> Jet:
        key = (tuple(float(x) for x in point), order)
        hit = self._cache.get(key)
        if hit is None:
            hit = grid_jet(self.g, point, order)
            self._cache[key] = hit
            if len(self._cache) > 64:
                self._cache.pop(next(iter(self._cache)))
        return hit

    def value(self, point) -> np.ndarray:
        return self.jet(point, 0).value


@dataclass(frozen=True)
class RescaleData:
    """Conformal change g -> exp(2 ups) g; ``grad`` holds the expressions for d ups."""

    ups: E.Expression
    n: int

    @property
    def grad(self) -> list[E.Expression]:
        return [E.diff(self.ups, i) for i in range(self.n)]

    @classmethod
    def parse(cls, src: str, coords) -> "RescaleData":
        return cls(E.parse(src, coords), len(coords))

    def jet(self, point, order) -> Jet:
        g = np.empty((), dtype=object)
        g[()] = self.ups
        return grid_jet(g, point, order)


@dataclass
class WeightedTensorField:
    """Component grid of a weighted tensor; ``valence`` has one letter per slot, 'd' (covariant) or 'u'."""

    components: np.ndarray
    valence: str
    weight: float = 0.0

    def __post_init__(self):
        if self.components.ndim != len(self.valence):
            raise ValueError("component grid rank does not match valence")

    def jet(self, point, order) -> Jet:
        return grid_jet(self.components, point, order)


def _letters(k, skip=""):
    pool = [c for c in string.ascii_letters if c not in skip and c != "z"]
    return pool[:k]


def nabla(T: Jet, gamma: Jet, kinds: str, tractor_conn: Jet | None = None) -> Jet:
    """Covariant derivative of a jet tensor; the derivative index becomes axis 0.

    ``kinds`` names each axis: 'd' covariant, 'u' contravariant, 't' tractor
    (uses ``tractor_conn``), anything else is passed through unchanged.
    """
    if len(kinds) != T.ndim:
        raise ValueError(f"kinds {kinds!r} do not match tensor rank {T.ndim}")
    out = T.partial()
    T = T.truncate(out.order)  # the connection terms need no more than the partial carries
    r = T.ndim
    idx = _letters(r + 2)
    a, e = idx[r], idx[r + 1]
    src = "".join(idx[:r])
    for i, kind in enumerate(kinds):
        if kind not in "dut":
            continue
        tgt = src[:i] + e + src[i + 1 :]
        res = a + src
        b = src[i]
        if kind == "d":
            term = jeinsum(f"{e}{a}{b},{tgt}->{res}", gamma, T)
            out = out - term
        elif kind == "u":
            term = jeinsum(f"{b}{a}{e},{tgt}->{res}", gamma, T)
            out = out + term
        else:
            term = jeinsum(f"{a}{b}{e},{tgt}->{res}", tractor_conn, T)
            out = out + term
    return out


class CurvatureStack:
    """Metric, Christoffels and curvature at a point, all as jets.

    ``metric_order`` is the total order of the metric jet; curvature then
    carries ``metric_order - 2`` further derivatives and the Cotton tensor
    one fewer.
    """

    def __init__(self, metric: MetricSpec, point: Sequence[float], metric_order: int = 3):
        if metric_order > MAX_JET_ORDER:
            raise ValueError(f"metric jet order {metric_order} exceeds cap {MAX_JET_ORDER}")
        if metric_order < 2:
            raise ValueError("curvature needs a metric jet of order at least 2")
        self.metric = metric
        self.point = tuple(float(x) for x in point)
        self.n = n = metric.n
        self.order = metric_order
        g = metric.jet(point, metric_order)
        if abs(np.linalg.det(g.value)) < 1e-14:
            raise SingularMetricError(f"metric degenerate at {self.point}")
        self.g = g
        self.ginv = g.inv()
        dg = g.partial()  # dg[c, a, b] = d_c g_ab
        lower = 0.5 * (dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg)
        # lower[d, b, c] = 1/2 (d_b g_dc + d_c g_db - d_d g_bc)
        self.gamma = jeinsum("ad,dbc->abc", self.ginv, lower)
        dG = self.gamma.partial()  # dG[m, c, b, d] = d_m Gamma^c_bd
        # R_ab^c_d = d_a G^c_bd - d_b G^c_ad + G^c_ae G^e_bd - G^c_be G^e_ad
        t1 = dG.transpose(0, 2, 1, 3)  # [a, b, c, d]
        quad = jeinsum("cae,ebd->abcd", self.gamma, self.gamma)
        R = t1 - t1.transpose(1, 0, 2, 3) + quad - quad.transpose(1, 0, 2, 3)
        self.riemann_ud = R  # R_ab^c_d
        self.riemann = jeinsum("ce,abed->abcd", g, R)
        self.ricci = jeinsum("cacb->ab", R)
        sc = jeinsum("ab,ab->", self.ginv, self.ricci)
        self.J = sc / (2.0 * (n - 1))
        gN = g.truncate(self.J.order)
        self.P = (self.ricci - jeinsum(",ab->ab", self.J, gN)) / (n - 2)
        gP = jeinsum("ca,bd->abcd", gN, self.P)
        # 2 g_c[a P_b]d + 2 g_d[b P_a]c
        pterm = gP - gP.transpose(1, 0, 2, 3) + gP.transpose(1, 0, 3, 2) - gP.transpose(0, 1, 3, 2)
        self.weyl = self.riemann - pterm
        self._cotton = None
        self._dweyl = None
        self._tconn = None

    # -- derived quantities ------------------------------------------------

    @property
    def cotton(self) -> Jet:
        """A_abc = nabla_b P_ca - nabla_c P_ba."""
        if self._cotton is None:
            if self.order < 3:
                raise ValueError("Cotton tensor needs a metric jet of order 3")
            dP = self.nabla(self.P, "dd")  # [b, c, a] = nabla_b P_ca
            self._cotton = dP.transpose(2, 0, 1) - dP.transpose(2, 1, 0)
        return self._cotton

    @property
    def dweyl(self) -> Jet:
        """nabla_e C_abcd with the derivative index first."""
        if self._dweyl is None:
            if self.order < 3:
                raise ValueError("nabla C needs a metric jet of order 3")
            self._dweyl = self.nabla(self.weyl, "dddd")
        return self._dweyl

    @property
    def Pup(self) -> Jet:
        """P_a^b."""
        return jeinsum("ac,cb->ab", self.P, self.ginv.truncate(self.P.order))

    @property
    def tractor_connection_coeffs(self) -> Jet:
        """Connection matrix on splitting components (alpha, mu_b, tau); see ``tractors``."""
        if self._tconn is None:
            n = self.n
            N = self.P.order
            sp = self.g.space
            A = np.zeros((n, n + 2, n + 2, sp.size(N)))
            A[np.arange(n), 0, 1 + np.arange(n), 0] = -1.0
            A[:, 1:-1, 1:-1, :] = -self.gamma.truncate(N).data.transpose(1, 2, 0, 3)
            A[:, 1:-1, -1, :] = self.g.truncate(N).data
            A[:, 1:-1, 0, :] = self.P.data
            A[:, -1, 1:-1, :] = -self.Pup.data
            self._tconn = Jet(A, sp)
        return self._tconn

    def nabla(self, T: Jet, kinds: str) -> Jet:
        return nabla(T, self.gamma, kinds, self._tconn_if_needed(kinds))

    def _tconn_if_needed(self, kinds):
        return self.tractor_connection_coeffs if "t" in kinds else None

    def raise_index(self, T: Jet, axis: int) -> Jet:
        r = T.ndim
        idx = _letters(r + 1)
        src = "".join(idx[:r])
        new = idx[r]
        return jeinsum(f"{src[axis]}{new},{src}->{src[:axis] + new + src[axis + 1:]}", self.ginv, T)

    def value(self, name: str) -> np.ndarray:
        return getattr(self, name).value


def christoffel(m: MetricSpec, p) -> np.ndarray:
    """Gamma^a_bc at ``p`` as an (n, n, n) array."""
    return CurvatureStack(m, p, 2).gamma.value


def curvature(m: MetricSpec, p, jet_order: int = 1) -> CurvatureStack:
    """Curvature stack at ``p`` carrying ``jet_order`` further derivatives of curvature."""
    if not 0 <= jet_order <= 2:
        raise ValueError("jet_order must be 0, 1 or 2")
    return CurvatureStack(m, p, jet_order + 2)


def covariant_derivative(f: WeightedTensorField, m: MetricSpec, p, order: int = 1) -> Jet:
    """nabla f as a jet of order ``order - 1``; ``order`` is the jet order of f used."""
    cs = CurvatureStack(m, p, max(order + 1, 2))
    T = f.jet(p, order)
    return cs.nabla(T, f.valence)


def rescale(m: MetricSpec, u: RescaleData) -> MetricSpec:
    """The metric exp(2 ups) g."""
    fac = E.exp(E.const(2) * u.ups)
    g = np.empty_like(m.g)
    for a in range(m.n):
        for b in range(m.n):
            g[a, b] = m.g[a, b] if m.g[a, b].is_zero() else fac * m.g[a, b]
    return MetricSpec(m.n, m.coords, g, m.signature, f"{m.name}~rescaled")


def rescale_field(f: WeightedTensorField, u: RescaleData) -> WeightedTensorField:
    """Representative of the same weighted tensor in the scale exp(2 ups) g."""
    fac = E.exp(E.const(f.weight) * u.ups) if f.weight else None
    comps = np.empty_like(f.components)
    for idx in itertools.product(*(range(s) for s in comps.shape)):
        c = f.components[idx]
        comps[idx] = c if fac is None or c.is_zero() else fac * c
    return WeightedTensorField(comps, f.valence, f.weight)
