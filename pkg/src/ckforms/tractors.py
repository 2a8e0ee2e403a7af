"""Standard tractors and form-tractors in a chosen scale.

Every tractor index is stored by its coefficients in the frame
(Y, Z^1, ..., Z^n, X) attached to the active metric, so a standard tractor
V = alpha Y + mu_a Z^a + tau X is the vector (alpha, mu_1..mu_n, tau).
Pairing two tractor indices uses the Gram matrix of that frame,

    H = [[0, 0, 1], [0, g^{-1}, 0], [1, 0, 0]],

and the metric h_AB itself has coefficients [[0, 0, 1], [0, g, 0], [1, 0, 0]].

A (k+1)-form-tractor is F = YY sigma + ZZ mu + WW phi + XX rho with the
projectors built from alternated products of Y, Z, X.  Slot values here are
plain covariant forms (the paper's weights), densely F[0, a..] = sigma/(k+1),
F[a0..ak] = mu, F[n+1, 0, a2..] = phi/(k(k+1)), F[n+1, a..] = rho/(k+1),
with the remaining entries fixed by antisymmetry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forms import alt
from .jets import Jet, jeinsum
from .riemann import CurvatureStack

__all__ = [
    "frame_X",
    "frame_Y",
    "frame_Z",
    "frame_Z_lower",
    "tractor_metric",
    "tractor_gram",
    "projectors",
    "FormTractor",
    "tractor_connection",
    "normal_form_tractor_connection",
    "tractor_D",
    "tractor_curvature",
    "tractor_curvature_action",
    "scale_matrix",
    "transform_tractor",
    "transform_form_slots",
    "transform_scale",
]


# ---------------------------------------------------------------- frame


def frame_X(n: int) -> np.ndarray:
    v = np.zeros(n + 2)
    v[n + 1] = 1.0
    return v


def frame_Y(n: int) -> np.ndarray:
    v = np.zeros(n + 2)
    v[0] = 1.0
    return v


def frame_Z(n: int) -> np.ndarray:
    """Z_A^a as an (n, n+2) array: row a is the tractor Z^a."""
    Z = np.zeros((n, n + 2))
    Z[np.arange(n), 1 + np.arange(n)] = 1.0
    return Z


def frame_Z_lower(g) -> np.ndarray:
    """Z_{Aa} = g_ab Z_A^b as an (n, n+2) array."""
    g = np.asarray(g)
    n = g.shape[0]
    Z = np.zeros((n, n + 2))
    Z[:, 1 : n + 1] = g
    return Z


def _block(mid, n, dtype=float):
    out = np.zeros((n + 2, n + 2) + mid.shape[2:], dtype=dtype)
    out[0, n + 1] = 1.0
    out[n + 1, 0] = 1.0
    out[1 : n + 1, 1 : n + 1] = mid
    return out


def tractor_metric(g):
    """Coefficients of h_AB in the frame (array or jet)."""
    if isinstance(g, Jet):
        n = g.shape[0]
        d = np.zeros((n + 2, n + 2, g.data.shape[-1]))
        d[0, n + 1, 0] = d[n + 1, 0, 0] = 1.0
        d[1 : n + 1, 1 : n + 1] = g.data
        return Jet(d, g.space)
    g = np.asarray(g)
    return _block(g, g.shape[0])


def tractor_gram(ginv):
    """Pairing matrix h^{AB} on frame coefficients (array or jet)."""
    return tractor_metric(ginv)


# ---------------------------------------------------------------- projectors


def _outer(vectors):
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out


def projectors(n: int, k: int) -> dict[str, np.ndarray]:
    """Dense projectors with k+1 lower tractor indices first, then upper form indices.

    Keys 'Y', 'Z', 'W', 'X' give YY^k, ZZ^{k+1}, WW^{k-1}, XX^k in the
    normalisation where contracting with a form (full index sum) produces
    the alternated tractor.  Also returns the single-index 'X0', 'Y0', 'Z0'.
    """
    T = n + 2
    r = k + 1
    Z1 = frame_Z(n).T  # [A, a]
    Y1 = frame_Y(n)
    X1 = frame_X(n)

    def alt_tr(arr):
        return alt(arr, range(r))

    def build(first, nz):
        parts = list(first) + [Z1] * nz
        arr = parts[0]
        for p in parts[1:]:
            arr = np.multiply.outer(arr, p)
        # axes: interleaved tractor / tensor; move tractor axes first
        tr_axes, ten_axes, pos = [], [], 0
        for p in parts:
            tr_axes.append(pos)
            if p.ndim == 2:
                ten_axes.append(pos + 1)
            pos += p.ndim
        return alt_tr(arr.transpose(tr_axes + ten_axes))

    out = {
        "Y0": Y1,
        "X0": X1,
        "Z0": Z1,
        "Y": build([Y1], k),
        "Z": build([], k + 1),
        "X": build([X1], k),
    }
    if k >= 1:
        out["W"] = build([X1, Y1], k - 1)
    assert out["Y"].shape == (T,) * r + (n,) * k
    return out


# ---------------------------------------------------------------- form tractors


def _data(x):
    return x.data if isinstance(x, Jet) else np.asarray(x, dtype=float)


@dataclass
class FormTractor:
    """Slot form of a section of the (k+1)-form-tractor bundle in the active scale.

    ``lead`` counts extra leading tensor axes carried by every slot (for
    instance the derivative index of a connection).  Slots may be arrays or
    jets; ``phi`` is None when k = 0.
    """

    k: int
    sigma: object
    mu: object
    phi: object
    rho: object
    weight: float = 0.0
    lead: int = 0

    @property
    def n(self) -> int:
        return self.mu.shape[self.lead]

    def slots(self):
        return (self.sigma, self.mu, self.phi, self.rho)

    def _is_jet(self):
        return any(isinstance(s, Jet) for s in self.slots() if s is not None)

    def to_dense(self):
        """Dense (n+2)^(k+1) antisymmetric realisation (after any leading axes)."""
        n, k, L = self.n, self.k, self.lead
        jet = self._is_jet()
        space = None
        if jet:
            js = [s for s in self.slots() if isinstance(s, Jet)]
            space = js[0].space
            N = min(s.order for s in js)
            m = space.size(N)

        def prep(s):
            if s is None:
                return None
            if isinstance(s, Jet):
                return s.truncate(N).data
            s = np.asarray(s, dtype=float)
            if jet:
                d = np.zeros(s.shape + (m,))
                d[..., 0] = s
                return d
            return s

        sig, mu, phi, rho = (prep(s) for s in self.slots())
        lead_shape = mu.shape[:L]
        tail = (mu.shape[-1],) if jet else ()
        F = np.zeros(lead_shape + (n + 2,) * (k + 1) + tail)
        inner = slice(1, n + 1)
        pre = (slice(None),) * L
        F[pre + (0,) + (inner,) * k] = sig
        F[pre + (inner,) * (k + 1)] = mu
        if k >= 1:
            F[pre + (n + 1, 0) + (inner,) * (k - 1)] = phi
        F[pre + (n + 1,) + (inner,) * k] = rho
        if jet:
            return Jet(F, space).apply(lambda d: _alt_tail(d, L, k + 1))
        return _alt_tail(F, L, k + 1)

    @classmethod
    def from_dense(cls, F, k: int, weight: float = 0.0, lead: int = 0) -> "FormTractor":
        if isinstance(F, Jet):
            wrap = lambda d: Jet(d, F.space)  # noqa: E731
            d = F.data
        else:
            wrap = lambda d: d  # noqa: E731
            d = np.asarray(F)
        n = d.shape[lead] - 2
        inner = slice(1, n + 1)
        pre = (slice(None),) * lead
        sig = wrap((k + 1) * d[pre + (0,) + (inner,) * k])
        mu = wrap(d[pre + (inner,) * (k + 1)].copy())
        phi = wrap(k * (k + 1) * d[pre + (n + 1, 0) + (inner,) * (k - 1)]) if k >= 1 else None
        rho = wrap((k + 1) * d[pre + (n + 1,) + (inner,) * k])
        return cls(k, sig, mu, phi, rho, weight, lead)

    def slot_weights(self):
        k, w = self.k, self.weight
        return (k + 1 + w, k + 1 + w, k - 1 + w, k - 1 + w)

    def max_abs(self) -> dict[str, float]:
        names = ("sigma", "mu", "phi", "rho")
        out = {}
        for nm, s in zip(names, self.slots()):
            if s is None:
                continue
            v = s.value if isinstance(s, Jet) else np.asarray(s)
            out[nm] = float(np.max(np.abs(v))) if v.size else 0.0
        return out

    def __sub__(self, other: "FormTractor") -> "FormTractor":
        def d(a, b):
            return None if a is None else a - b

        return FormTractor(
            self.k, d(self.sigma, other.sigma), d(self.mu, other.mu), d(self.phi, other.phi),
            d(self.rho, other.rho), self.weight, self.lead,
        )

    def __add__(self, other: "FormTractor") -> "FormTractor":
        def a(x, y):
            return None if x is None else x + y

        return FormTractor(
            self.k, a(self.sigma, other.sigma), a(self.mu, other.mu), a(self.phi, other.phi),
            a(self.rho, other.rho), self.weight, self.lead,
        )

    def scaled(self, c: float) -> "FormTractor":
        def m(x):
            return None if x is None else x * c

        return FormTractor(self.k, *(m(s) for s in self.slots()), self.weight, self.lead)

    def values(self) -> "FormTractor":
        def v(s):
            return None if s is None else (s.value if isinstance(s, Jet) else np.asarray(s))

        return FormTractor(self.k, *(v(s) for s in self.slots()), self.weight, self.lead)


def _alt_tail(d: np.ndarray, lead: int, r: int) -> np.ndarray:
    from .forms import _alt_data

    return _alt_data(d, range(lead, lead + r))


# ---------------------------------------------------------------- connections


def tractor_connection(V: Jet, cs: CurvatureStack, kinds: str) -> Jet:
    """Covariant derivative of a tractor-tensor jet; 't' marks tractor axes."""
    return cs.nabla(V, kinds)


def _truncate_all(*xs):
    js = [x for x in xs if isinstance(x, Jet)]
    if not js:
        return xs
    N = min(x.order for x in js)
    return tuple(x.truncate(N) if isinstance(x, Jet) else x for x in xs)


def normal_form_tractor_connection(F: FormTractor, cs: CurvatureStack) -> FormTractor:
    """Slot-wise derivative of a (k+1)-form-tractor; the derivative index leads."""
    k = F.k
    if k < 1:
        raise ValueError("form-tractor connection implemented for k >= 1")
    d = cs.nabla
    dsig = d(F.sigma, "d" * k)
    dmu = d(F.mu, "d" * (k + 1))
    dphi = d(F.phi, "d" * (k - 1))
    drho = d(F.rho, "d" * k)
    N = min(dsig.order, dmu.order, dphi.order, drho.order)
    g = cs.g.truncate(N)
    P = cs.P.truncate(N) if cs.P.order >= N else cs.P
    Pup = cs.Pup
    sig, mu, phi, rho = (x.truncate(N) for x in F.slots())
    A = "bcdefgh"[:k]
    s_sig = dsig - mu * (k + 1) - jeinsum(f"p{A[0]},{A[1:]}->p{A}", g, phi)
    s_sig = alt(s_sig, range(1, k + 1))
    s_mu = dmu + jeinsum(f"pa,{A}->pa{A}", P, sig) + jeinsum(f"pa,{A}->pa{A}", g, rho)
    s_mu = alt(s_mu, range(1, k + 2))
    s_phi = dphi + jeinsum(f"pq,q{A[1:]}->p{A[1:]}", Pup, sig) * k - rho * k
    s_rho = drho - jeinsum(f"pq,q{A}->p{A}", Pup, mu) * (k + 1) + jeinsum(f"p{A[0]},{A[1:]}->p{A}", P, phi)
    s_rho = alt(s_rho, range(1, k + 1))
    return FormTractor(k, s_sig, s_mu, s_phi, s_rho, F.weight, F.lead + 1)


def tractor_D(V: Jet, w: float, cs: CurvatureStack, kinds: str = "") -> Jet:
    """D_A V for a weight-w tractor/tensor field jet; the new tractor axis leads.

    Components (Y, Z, X): ((n+2w-2) w V, (n+2w-2) nabla_b V, -(Delta V + w J V)).
    """
    n = cs.n
    dV = cs.nabla(V, kinds)
    ddV = cs.nabla(dV, "d" + kinds)
    N = ddV.order
    ginv = cs.ginv.truncate(min(N, cs.ginv.order))
    lap = jeinsum("ab,ab...->...", ginv, ddV)
    J = cs.J
    box = lap + jeinsum(",...->...", J, V.truncate(N)) * w
    c = n + 2 * w - 2
    r = V.ndim
    out = np.zeros((n + 2,) + V.shape + (V.space.size(N),))
    out[0] = c * w * V.truncate(N).data
    out[1 : n + 1] = c * dV.truncate(N).data
    out[n + 1] = -box.data
    return Jet(out, V.space) if r >= 0 else None


def tractor_curvature(cs: CurvatureStack) -> Jet:
    """Omega_{ab CE} on frame coefficients: Z Z C - 2 X_[C Z_E]^e A_eab."""
    n = cs.n
    C = cs.weyl
    A = cs.cotton
    N = A.order
    C = C.truncate(N)
    sp = C.space
    O = np.zeros((n, n, n + 2, n + 2, sp.size(N)))
    O[:, :, 1 : n + 1, 1 : n + 1] = C.data
    Aeab = A.data.transpose(1, 2, 0, 3)  # [a, b, e]
    O[:, :, n + 1, 1 : n + 1] = -Aeab
    O[:, :, 1 : n + 1, n + 1] = Aeab
    return Jet(O, sp)


def tractor_curvature_action(cs: CurvatureStack) -> Jet:
    """Omega_ab^C_E as a matrix acting on frame coefficient vectors."""
    O = tractor_curvature(cs)
    H = tractor_gram(cs.ginv.truncate(O.order))
    return jeinsum("abIJ,JK->abIK", O, H)


# ---------------------------------------------------------------- change of scale


def scale_matrix(ups: float, dups, ginv) -> np.ndarray:
    """Frame-coefficient map for a weight-0 standard tractor from g to exp(2 ups) g.

    (alpha, mu, tau) -> (alpha, mu + Y alpha, tau - Y.mu - |Y|^2 alpha / 2),
    followed by the representative factors (e^ups, e^ups, e^-ups).
    """
    dups = np.asarray(dups, dtype=float)
    ginv = np.asarray(ginv)
    n = len(dups)
    up = ginv @ dups
    M = np.eye(n + 2)
    M[1 : n + 1, 0] = dups
    M[n + 1, 1 : n + 1] = -up
    M[n + 1, 0] = -0.5 * dups @ up
    D = np.diag([math.exp(ups)] * (n + 1) + [math.exp(-ups)])
    return D @ M


def transform_tractor(T, ups: float, dups, ginv, weight: float = 0.0, axes=None) -> np.ndarray:
    """Frame coefficients in the scale exp(2 ups) g of a tractor tensor given in g."""
    T = np.asarray(T, dtype=float)
    L = scale_matrix(ups, dups, ginv)
    axes = range(T.ndim) if axes is None else axes
    out = T
    for ax in axes:
        out = np.moveaxis(np.tensordot(L, out, axes=([1], [ax])), 0, ax)
    return out * math.exp(weight * ups)


def transform_form_slots(F: FormTractor, ups: float, dups, ginv) -> FormTractor:
    """Slot components of the same form-tractor in the scale exp(2 ups) g (values only)."""
    k = F.k
    if F.lead:
        # leading indices are unweighted one-form slots: transform slice by slice
        Fv = F.values()
        n = Fv.mu.shape[F.lead]
        parts = []
        for idx in np.ndindex(*(n,) * F.lead):
            sl = FormTractor(k, *(None if s is None else s[idx] for s in Fv.slots()), F.weight)
            parts.append(transform_form_slots(sl, ups, dups, ginv))
        shape = (n,) * F.lead

        def stack(name):
            if getattr(parts[0], name) is None:
                return None
            arr = np.stack([getattr(q, name) for q in parts])
            return arr.reshape(shape + arr.shape[1:])

        return FormTractor(k, stack("sigma"), stack("mu"), stack("phi"), stack("rho"), F.weight, F.lead)
    Fv = F.values()
    sig, mu, phi, rho = Fv.slots()
    dups = np.asarray(dups, dtype=float)
    up = np.asarray(ginv) @ dups
    u2 = float(dups @ up)
    A = "bcdefgh"[:k]
    ws, wm, wp, wr = F.slot_weights()
    e = math.exp
    isig = np.einsum(f"p,p{A[1:]}->{A[1:]}", up, sig) if k >= 1 else None
    s_hat = sig
    m_hat = mu + alt(np.einsum(f"a,{A}->a{A}", dups, sig))
    if k >= 1:
        p_hat = phi + k * isig
        r_hat = (
            rho
            - 0.5 * u2 * sig
            - (k + 1) * np.einsum(f"p,p{A}->{A}", up, mu)
            + alt(np.einsum(f"{A[0]},{A[1:]}->{A}", dups, phi) + k * np.einsum(f"{A[0]},{A[1:]}->{A}", dups, isig))
        )
    else:
        p_hat = None
        r_hat = rho - 0.5 * u2 * sig - np.einsum("p,p->", up, mu)
    return FormTractor(
        k,
        e(ws * ups) * s_hat,
        e(wm * ups) * m_hat,
        None if p_hat is None else e(wp * ups) * p_hat,
        e(wr * ups) * r_hat,
        F.weight,
    )


def transform_scale(obj, ups: float, dups, ginv, weight: float = 0.0):
    """Dispatch: FormTractor slots, or dense tractor coefficient arrays."""
    if isinstance(obj, FormTractor):
        return transform_form_slots(obj, ups, dups, ginv)
    return transform_tractor(obj, ups, dups, ginv, weight)
