"""Dense antisymmetric forms, type projections, and Weyl actions on forms.

Formulas written with sequentially labelled indices (a^1 a^2 ..., c^1 c^2)
carry an implicit skew over each such set.  Here every such skew is made
explicit with :func:`alt`.  All routines accept plain arrays or jets; the
metric arguments must be of the matching kind.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from . import expr as E
from .jets import Jet, jeinsum

__all__ = [
    "alt",
    "sym",
    "FormField",
    "project_cftf",
    "project_E1k",
    "project_E1k0",
    "project_E2k0",
    "e1k_violation",
    "e2k_violations",
    "trace_pair",
    "hash_action",
    "blacklozenge",
    "lozenge",
    "hodge_star",
    "hodge_star_array",
    "levi_civita",
    "wedge_basis",
]


@lru_cache(maxsize=None)
def _perms(m: int):
    out = []
    for p in itertools.permutations(range(m)):
        inv = sum(1 for i in range(m) for j in range(i + 1, m) if p[i] > p[j])
        out.append((p, -1.0 if inv % 2 else 1.0))
    return out


def _on_data(T, fn):
    return Jet(fn(T.data), T.space) if isinstance(T, Jet) else fn(np.asarray(T))


def _alt_data(d: np.ndarray, axes, sign=True):
    axes = list(axes)
    m = len(axes)
    if m < 2:
        return d
    # (anti)symmetrise the first m-1 axes, then average over the transpositions
    # (i, last): these are coset representatives of S_{m-1} in S_m
    d = _alt_data(d, axes[:-1], sign)
    out = d.copy()
    s = -1.0 if sign else 1.0
    for a in axes[:-1]:
        out += s * np.swapaxes(d, a, axes[-1])
    return out / m


def alt(T, axes=None):
    """Normalised antisymmetrisation over the given tensor axes (all by default)."""
    nd = T.ndim
    ax = list(range(nd)) if axes is None else list(axes)
    return _on_data(T, lambda d: _alt_data(d, ax, True))


def sym(T, axes=None):
    nd = T.ndim
    ax = list(range(nd)) if axes is None else list(axes)
    return _on_data(T, lambda d: _alt_data(d, ax, False))


def _letters(n):
    return "abcdefghijklmnopqrstuvwxy"[:n]


def trace_pair(T, ginv, i: int, j: int):
    """Contract tensor axes i and j of a covariant tensor with the inverse metric."""
    r = T.ndim
    L = list(_letters(r))
    x, y = L[i], L[j]
    out = "".join(c for k, c in enumerate(L) if k not in (i, j))
    return jeinsum(f"{x}{y},{''.join(L)}->{out}", ginv, T)


def _g_wedge(g, nu, k):
    """g_{c a^1} nu_{a^2..a^k} skewed over the a indices (c first)."""
    r = nu.ndim
    L = _letters(r + 2)
    c, a1, rest = L[0], L[1], L[2 : 2 + r]
    prod = jeinsum(f"{c}{a1},{rest}->{c}{a1}{rest}", g, nu)
    return alt(prod, range(1, k + 1))


def project_E1k(T, k=None):
    """Remove the totally skew part of T_{c a^1..a^k} (T assumed skew in the a's)."""
    if k is None or k == T.ndim - 1:
        return T - alt(T)
    return T - alt(T, range(k + 1))


def project_cftf(T, g, ginv, k=None):
    """Projection of T_{c a^1..a^k} (skew in the a's) to the trace-free E(1,k) part.

    Axes after the first k+1 are carried along untouched.
    """
    k = T.ndim - 1 if k is None else k
    n = g.shape[0]
    S = project_E1k(T, k)
    tr = trace_pair(S, ginv, 0, 1)
    if k == 1:
        L = _letters(tr.ndim + 2)
        gg = jeinsum(f"{L[:2]},{L[2:]}->{L}", g, tr)
        return S - gg / n
    nu = tr * (k / (n - k + 1.0))
    return S - _g_wedge(g, nu, k)


project_E1k0 = project_cftf


def e1k_violation(T):
    """Size of the totally skew part; zero on E(1,k)."""
    return float(np.max(np.abs(_val(alt(T))))) if T.size else 0.0


def _val(T):
    return T.value if isinstance(T, Jet) else np.asarray(T)


def e2k_violations(T) -> tuple[float, float, float]:
    """The three defining skew conditions of E(2,k) for T_{c^1 c^2 a^1..a^k}."""
    v = _val(T)
    r = v.ndim
    k = r - 2
    v1 = np.max(np.abs(_alt_data(v, range(r))))
    v2 = np.max(np.abs(_alt_data(v, range(1, r))))
    v3 = np.max(np.abs(_alt_data(v, range(r - 1)))) if k >= 1 else 0.0
    return float(v1), float(v2), float(v3)


# ---------------------------------------------------------------- E(2,k)_0 projection


def _skew_basis(n, k):
    """Basis of k-forms as dense arrays (one per increasing multi-index)."""
    combos = list(itertools.combinations(range(n), k))
    B = np.zeros((len(combos),) + (n,) * k)
    for j, idx in enumerate(combos):
        for p, s in _perms(k):
            B[(j,) + tuple(idx[i] for i in p)] = s
    return B


def _gram(ginv, r):
    """Gram matrix of rank-r covariant tensors under ginv on every slot (flattened)."""
    G = ginv
    for _ in range(r - 1):
        G = np.multiply.outer(G, ginv)
    # reorder (i1 j1 i2 j2 ...) -> (i1 i2 .. j1 j2 ..)
    order = [2 * i for i in range(r)] + [2 * i + 1 for i in range(r)]
    n = ginv.shape[0]
    return G.transpose(order).reshape(n**r, n**r)


def project_E2k0(T: np.ndarray, g: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Orthogonal (w.r.t. the metric) projection of T_{c^1c^2 a^1..a^k} onto E(2,k)_0.

    The subspace is cut out numerically inside (2-forms) x (k-forms) by the
    three skew conditions and all traces; the orthogonal complement taken with
    the metric-induced pairing makes the projection equivariant.
    """
    T = np.asarray(T, dtype=float)
    n = g.shape[0]
    k = T.ndim - 2
    B2 = _skew_basis(n, 2)
    Bk = _skew_basis(n, k)
    basis = np.einsum("iab,j...->ijab...", B2, Bk).reshape(len(B2) * len(Bk), -1)
    # linear conditions on coefficient vectors, evaluated on all basis elements at once
    r = k + 2
    full = basis.reshape((-1,) + (n,) * r)
    nb = full.shape[0]
    conds = [
        _alt_data(full, range(1, r + 1)).reshape(nb, -1),
        _alt_data(full, range(2, r + 1)).reshape(nb, -1),
        _alt_data(full, range(1, r)).reshape(nb, -1),
    ]
    for i, j in [(0, 2), (0, 1), (2, 3)] if k >= 2 else [(0, 2), (0, 1)]:
        conds.append(np.einsum(_trace_spec(r, i, j).replace(",", ",Z").replace("->", "->Z"), ginv, full).reshape(nb, -1))
    M = np.concatenate(conds, axis=1).T
    # null space of M within the coefficient space
    _, s, vt = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0] if len(s) else 1.0)))
    null = vt[rank:].T
    if null.shape[1] == 0:
        return np.zeros_like(T)
    V = basis.T @ null  # dense columns spanning E(2,k)_0
    G = _gram(ginv, r)
    A = V.T @ G @ V
    coeff = np.linalg.solve(A, V.T @ G @ T.ravel())
    return (V @ coeff).reshape(T.shape)


def _trace_spec(r, i, j):
    L = list(_letters(r))
    out = "".join(c for m, c in enumerate(L) if m not in (i, j))
    return f"{L[i]}{L[j]},{''.join(L)}->{out}"


# ---------------------------------------------------------------- curvature actions


def hash_action(A, T, lead: int = 0):
    """Natural action of an End(TM)-valued object on a covariant tensor.

    ``A`` has ``lead`` extra leading axes and then (up, down) = A^c_b;
    the result has those leading axes followed by the axes of T.
    Sum over slots of -A^c_{slot} T(..c..).
    """
    r = T.ndim
    Lr = "abcdefghijk"[:lead]
    L = "lmnopqrstuv"[:r]
    out = None
    for i in range(r):
        tgt = L[:i] + "w" + L[i + 1 :]
        term = jeinsum(f"{Lr}w{L[i]},{tgt}->{Lr}{L}", A, T)
        out = term if out is None else out + term
    return -out


def _raise_last2(C, ginv):
    return jeinsum("abrs,rp,sq->abpq", C, ginv, ginv)


def _raise_last(C, ginv):
    return jeinsum("abcr,rp->abcp", C, ginv)


def blacklozenge(C, f, ginv):
    """(C bl f)_{c a^2..a^k} for a k-form f, k >= 2."""
    k = f.ndim
    if k < 2:
        raise ValueError("blacklozenge needs k >= 2")
    Cup = _raise_last2(C, ginv)  # C_{ab}^{pq}
    rest = "efghij"[: k - 2]
    t1 = jeinsum(f"cbpq,pq{rest}->cb{rest}", Cup, f)
    out = t1
    if k >= 3:
        r4 = rest[1:]
        t2 = jeinsum(f"dbpq,pqc{r4}->cbd{r4}", Cup, f)
        out = out + t2
    out = alt(out, range(1, k))
    return out * ((k - 2) / k)


def lozenge(C, f, g, ginv):
    """(C loz f)_{c^1 c^2 a^1..a^k} for a k-form f, k >= 2."""
    k = f.ndim
    n = g.shape[0]
    if k < 2:
        raise ValueError("lozenge needs k >= 2")
    if k == n:
        raise ValueError("lozenge needs k <= n-1")
    C3 = _raise_last(C, ginv)  # C_{abc}^p
    rest = "efghij"[: k - 1]
    t1 = jeinsum(f"xyap,p{rest}->xya{rest}", C3, f)
    r2 = rest[1:]
    t2 = jeinsum(f"abxp,py{r2}->xyab{r2}", C3, f)
    out = t1 + t2
    bl = blacklozenge(C, f, ginv)  # (c, a^2..a^k)
    t3 = jeinsum(f"xa,y{rest}->xya{rest}", g, bl)
    out = out + t3 * (k / (n - k))
    out = alt(out, (0, 1))
    return alt(out, range(2, k + 2))


# ---------------------------------------------------------------- Hodge star


@lru_cache(maxsize=None)
def levi_civita(n: int) -> np.ndarray:
    eps = np.zeros((n,) * n)
    for p, s in _perms(n):
        eps[p] = s
    return eps


def hodge_star_array(f, g: np.ndarray) -> np.ndarray:
    """(*f)_{b..} = 1/k! f^{a..} eps_{a.. b..} with eps = sqrt|det g| [symbol]."""
    f = np.asarray(f)
    n = g.shape[0]
    k = f.ndim
    ginv = np.linalg.inv(g)
    fu = f
    for ax in range(k):
        fu = np.moveaxis(np.tensordot(ginv, fu, axes=([1], [ax])), 0, ax)
    eps = np.sqrt(abs(np.linalg.det(g))) * levi_civita(n)
    return np.tensordot(fu, eps, axes=(list(range(k)), list(range(k)))) / math.factorial(k)


def _sym_det_inv(g: np.ndarray):
    n = g.shape[0]
    diag = all(g[a, b].is_zero() for a in range(n) for b in range(n) if a != b)
    if diag:
        det = g[0, 0]
        for a in range(1, n):
            det = det * g[a, a]
        inv = np.empty_like(g)
        for a in range(n):
            for b in range(n):
                inv[a, b] = E.const(1) / g[a, a] if a == b else E.const(0)
        return det, inv
    # general case by cofactors
    def minor_det(rows, cols):
        if len(rows) == 1:
            return g[rows[0], cols[0]]
        out = E.const(0)
        for j, c in enumerate(cols):
            sub = minor_det(rows[1:], cols[:j] + cols[j + 1 :])
            term = g[rows[0], c] * sub
            out = out + term if j % 2 == 0 else out - term
        return out

    idx = list(range(n))
    det = minor_det(idx, idx)
    inv = np.empty_like(g)
    for a in range(n):
        for b in range(n):
            cof = minor_det([r for r in idx if r != b], [c for c in idx if c != a])
            inv[a, b] = (cof if (a + b) % 2 == 0 else -cof) / det
    return det, inv


def hodge_star(f: "FormField", metric, sign_of_det: int | None = None) -> "FormField":
    """Conformal Hodge star on expression forms: E^k[w] -> E^{n-k}[n-2k+w]."""
    n = metric.n
    k = f.k
    det, inv = _sym_det_inv(metric.g)
    if sign_of_det is None:
        sig = metric.signature
        sign_of_det = -1 if (sig is not None and sig[1] % 2 == 1) else 1
    vol = E.sqrt(det if sign_of_det > 0 else -det)
    comps = {}
    for b in itertools.combinations(range(n), n - k):
        total = E.const(0)
        for a in itertools.combinations(range(n), k):
            if set(a) & set(b):
                continue
            s = levi_civita(n)[a + b]
            # f^{a} = inv[a_i, c_i] f_{c}; sum over increasing c
            raised = E.const(0)
            for c in itertools.combinations(range(n), k):
                fc = f.components[c]
                if fc.is_zero():
                    continue
                # determinant of the k x k block of the inverse metric
                blk = E.const(0)
                for p, ps in _perms(k):
                    term = E.const(ps)
                    zero = False
                    for i in range(k):
                        e = inv[a[i], c[p[i]]]
                        if e.is_zero():
                            zero = True
                            break
                        term = term * e
                    if not zero:
                        blk = blk + term
                if not blk.is_zero():
                    raised = raised + blk * fc
            if not raised.is_zero():
                total = total + raised * E.const(int(s))
        comps[b] = total if total.is_zero() else vol * total
    return FormField.from_components(n, n - k, comps, weight=n - 2 * k + f.weight)


# ---------------------------------------------------------------- expression forms


class FormField:
    """A weighted k-form whose components are expressions in the chart."""

    def __init__(self, n: int, k: int, components: np.ndarray, weight: float):
        self.n = n
        self.k = k
        self.components = components
        self.weight = weight

    @classmethod
    def from_components(cls, n, k, comps: dict, weight=None, coords=None) -> "FormField":
        """Build from {increasing index tuple: expression or string}; the rest by antisymmetry."""
        grid = np.empty((n,) * k, dtype=object)
        for idx in itertools.product(range(n), repeat=k):
            grid[idx] = E.const(0)
        for idx, v in comps.items():
            idx = tuple(idx)
            if len(set(idx)) != k:
                continue
            if isinstance(v, str):
                v = E.parse(v, coords)
            elif not isinstance(v, E.Expression):
                v = E.const(v)
            order = sorted(range(k), key=lambda i: idx[i])
            base = tuple(idx[i] for i in order)
            sign = dict(_perms(k))[tuple(order)] if k > 1 else 1.0
            val = v if sign > 0 else -v
            for p, s in _perms(k):
                grid[tuple(base[i] for i in p)] = val if s > 0 else -val
        return cls(n, k, grid, k + 1 if weight is None else weight)

    def jet(self, point, order):
        from .riemann import grid_jet

        if self.k == 0:
            return grid_jet(self.components, point, order)
        # evaluate increasing components only, fill by antisymmetry
        n, k = self.n, self.k
        combos = list(itertools.combinations(range(n), k))
        sub = np.empty(len(combos), dtype=object)
        for j, c in enumerate(combos):
            sub[j] = self.components[c]
        J = grid_jet(sub, point, order)
        data = np.zeros((n,) * k + (J.data.shape[-1],))
        for j, c in enumerate(combos):
            for p, s in _perms(k):
                data[tuple(c[i] for i in p)] = s * J.data[j]
        return Jet(data, J.space)

    def __add__(self, other):
        return FormField(self.n, self.k, self.components + other.components, self.weight)

    def scaled(self, c) -> "FormField":
        grid = np.empty_like(self.components)
        for idx in np.ndindex(grid.shape):
            grid[idx] = self.components[idx] * E.const(c)
        return FormField(self.n, self.k, grid, self.weight)

    def rescaled(self, u) -> "FormField":
        """Representative in the scale exp(2 ups) g."""
        fac = E.exp(E.const(self.weight) * u.ups)
        grid = np.empty_like(self.components)
        for idx in np.ndindex(grid.shape):
            c = self.components[idx]
            grid[idx] = c if c.is_zero() else fac * c
        return FormField(self.n, self.k, grid, self.weight)

    def __repr__(self):
        nz = sum(1 for c in itertools.combinations(range(self.n), self.k) if not self.components[c].is_zero())
        return f"FormField(n={self.n}, k={self.k}, weight={self.weight}, nonzero={nz})"


def wedge_basis(n: int, k: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations(range(n), k))
