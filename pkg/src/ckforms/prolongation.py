"""Conformal Killing forms: the equation, its prolongation, and the invariant connection.

A conformal Killing k-form sigma (weight k+1) satisfies
``project_cftf(nabla sigma) = 0``.  Its prolongation is the quadruple
(sigma, mu, nu, rho) and the splitting operator packages this into the
form-tractor DD(sigma) with slots (sigma, mu/(k+1), nu, -rho).

Operators acting on form-tractors take a :class:`FormTractor` in slot form
and return a one-form-valued :class:`FormTractor` whose slots carry the
derivative index c first.  Where only pointwise values are needed the slots
may be plain arrays; the sigma slot must be a jet of order >= 1 for the
first-order operators ``phi`` and ``psi``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import expr as E
from .forms import FormField, alt, blacklozenge, lozenge, project_cftf
from .jets import Jet, jeinsum
from .riemann import CurvatureStack, MetricSpec, RescaleData
from .tractors import (
    FormTractor,
    normal_form_tractor_connection,
    tractor_curvature,
)

__all__ = [
    "ProlongedSolution",
    "CKResidual",
    "ck_residual_jet",
    "cke_residual",
    "prolong_jet",
    "prolong",
    "prolong_start_residuals",
    "splitting_D",
    "extract",
    "phi",
    "psi",
    "psi_tilde",
    "psi_tilde_constructive",
    "ck_connection",
    "grad_black_down_closed",
    "grad_black_down_direct",
    "grad_white_closed",
    "grad_white_direct",
    "flat_solution",
    "flat_solution_basis",
    "flat_solution_generator",
    "normality_check",
    "whitelozenge_check",
    "Measurement",
]

_L = "fghijkmno"  # spare index letters for form slots


def _val(x):
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


def _check_k(k, n):
    if not 1 <= k <= n - 1:
        raise ValueError(f"form degree k={k} outside 1..{n - 1}")


# ---------------------------------------------------------------- the equation


@dataclass
class CKResidual:
    """Trace-free, non-skew part of nabla sigma at each sampled point."""

    grids: list
    points: np.ndarray

    @property
    def max_norm(self) -> float:
        return max((float(np.max(np.abs(g))) for g in self.grids), default=0.0)


def ck_residual_jet(sigma: Jet, cs: CurvatureStack) -> Jet:
    k = sigma.ndim
    _check_k(k, cs.n)
    d = cs.nabla(sigma, "d" * k)
    N = d.order
    return project_cftf(d, cs.g.truncate(N), cs.ginv.truncate(N))


def cke_residual(sigma: FormField, metric: MetricSpec, points, order: int = 1) -> CKResidual:
    """Evaluate the conformal Killing operator on sigma at each point."""
    _check_k(sigma.k, metric.n)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grids = []
    for p in pts:
        cs = CurvatureStack(metric, p, max(2, order + 1))
        grids.append(ck_residual_jet(sigma.jet(p, order), cs).value)
    return CKResidual(grids, pts)


# ---------------------------------------------------------------- prolongation


@dataclass
class ProlongedSolution:
    """(sigma, mu, nu, rho) in the active scale; entries are jets."""

    sigma: Jet
    mu: Jet
    nu: Jet
    rho: Jet

    @property
    def k(self) -> int:
        return self.sigma.ndim


def _div(T: Jet, cs: CurvatureStack) -> Jet:
    """g^{pq} nabla_p T_{q ...}."""
    d = cs.nabla(T, "d" * T.ndim)
    R = _L[: T.ndim - 1]
    return jeinsum(f"pq,pq{R}->{R}", cs.ginv.truncate(d.order), d)


def prolong_jet(sigma: Jet, cs: CurvatureStack) -> ProlongedSolution:
    """The map sigma -> (sigma, alt nabla sigma, k/(n-k+1) div sigma, rho)."""
    k = sigma.ndim
    n = cs.n
    _check_k(k, n)
    ds = cs.nabla(sigma, "d" * k)
    mu = alt(ds)
    div = jeinsum(f"pq,pq{_L[:k - 1]}->{_L[:k - 1]}", cs.ginv.truncate(ds.order), ds)
    nu = div * (k / (n - k + 1.0))
    tf = project_cftf(ds, cs.g.truncate(ds.order), cs.ginv.truncate(ds.order))
    t1 = _div(tf, cs) / (n * k)
    t2 = cs.nabla(div, "d" * (k - 1)) / (n - k + 1.0)
    N = min(t1.order, t2.order, cs.P.order)
    A = _L[:k]
    t3 = jeinsum(f"{A[0]}p,p{A[1:]}->{A}", cs.Pup.truncate(N), sigma.truncate(N))
    rho = alt(t1.truncate(N) - t2.truncate(N) - t3, range(k))
    return ProlongedSolution(sigma, mu, nu, rho)


def prolong(sigma: FormField, metric: MetricSpec, point, sigma_order: int = 3, metric_order: int = 3):
    cs = CurvatureStack(metric, point, metric_order)
    return prolong_jet(sigma.jet(point, sigma_order), cs)


def _bl_deriv(C, dC, sig, dsig, ginv):
    """nabla_e (C bl sigma) by the Leibniz rule, e first; dsig[e] replaces nabla_e sigma."""
    return np.stack([blacklozenge(dC[e], sig, ginv) + blacklozenge(C, dsig[e], ginv) for e in range(len(dC))])


def _loz_deriv(C, dC, sig, dsig, g, ginv):
    return np.stack([lozenge(dC[e], sig, g, ginv) + lozenge(C, dsig[e], g, ginv) for e in range(len(dC))])


def _replacement(mu, nu, g):
    """mu_{e a..} + g_{e a^1} nu_{a^2..} skewed over the a's: stands in for nabla_e sigma."""
    k = mu.ndim - 1
    A = _L[:k]
    gnu = np.einsum(f"e{A[0]},{A[1:]}->e{A}", g, nu)
    return mu + alt(gnu, range(1, k + 1))


def prolong_start_residuals(sol: ProlongedSolution, cs: CurvatureStack, k1_cotton_coeff: float = 1.0) -> dict:
    """Left minus right side of each equation of the prolonged system at the point.

    For k = 1 the last equation is checked as
    nabla_c rho_a = P_ca nu - P_c^p mu_pa + coeff * A_apc sigma^p.
    """
    k = sol.k
    n = cs.n
    g, gi = cs.g.value, cs.ginv.value
    P, Pup = cs.P.value, cs.Pup.value
    C = cs.weyl.value
    Acot = cs.cotton.value
    sig, mu, nu, rho = (_val(x) for x in (sol.sigma, sol.mu, sol.nu, sol.rho))
    ds = cs.nabla(sol.sigma, "d" * k).value
    dmu = cs.nabla(sol.mu, "d" * (k + 1)).value
    dnu = cs.nabla(sol.nu, "d" * (k - 1)).value
    drho = cs.nabla(sol.rho, "d" * k).value
    A = _L[:k]
    out = {}
    out["sigma"] = ds - _replacement(mu, nu, g)
    C3 = np.einsum("abcr,rp->abcp", C, gi)
    rhs_mu = (k + 1) * (
        np.einsum(f"cx,{A}->cx{A}", g, rho)
        - np.einsum(f"cx,{A}->cx{A}", P, sig)
        - 0.5 * np.einsum(f"xycp,p{A[1:]}->cxy{A[1:]}", C3, sig)
    )
    out["mu"] = dmu - alt(rhs_mu, range(1, k + 2))
    rhs_nu = -k * (rho + np.einsum(f"cp,p{A[1:]}->c{A[1:]}", Pup, sig))
    if k >= 2:
        rhs_nu = rhs_nu + k * (k - 1) / (2.0 * (n - k)) * blacklozenge(C, sig, gi)
    out["nu"] = dnu - rhs_nu
    Aup = np.einsum("pq,qxy->pxy", gi, Acot)  # A^p_{xy}
    if k == 1:
        rhs = (
            np.einsum("ca,->ca", P, nu)
            - np.einsum("cp,pa->ca", Pup, mu)
            + k1_cotton_coeff * np.einsum("apc,p->ca", Acot, gi @ sig)
        )
        out["rho"] = drho - rhs
        return out
    R2 = A[2:]
    rhs = (
        np.einsum(f"c{A[0]},{A[1:]}->c{A}", P, nu)
        - np.einsum(f"cp,p{A}->c{A}", Pup, mu)
        + 0.5 * np.einsum(f"pxy,pc{R2}->cxy{R2}", Aup, sig)
        - np.einsum(f"pcx,p{A[1:]}->cx{A[1:]}", Aup, sig)
        + 0.5 * np.einsum(f"xycp,p{R2}->cxy{R2}", C3, nu)
    )
    # nabla_{a1} (C bl sigma)_{c a2..} from the jet of sigma
    bl = blacklozenge(cs.weyl.truncate(1), sol.sigma.truncate(1), cs.ginv.truncate(1))
    dbl = cs.nabla(bl, "d" * k).value  # [a1, c, a2..]
    rhs = rhs - k / (2.0 * (n - k)) * np.swapaxes(dbl, 0, 1)
    out["rho"] = drho - alt(rhs, range(1, k + 1))
    return out


# ---------------------------------------------------------------- splitting operator


def splitting_D(sigma: Jet, cs: CurvatureStack) -> FormTractor:
    """DD(sigma) in slot form: (sigma, mu/(k+1), nu, -rho)."""
    sol = prolong_jet(sigma, cs)
    k = sol.k
    N = sol.rho.order
    return FormTractor(
        k,
        sol.sigma.truncate(N),
        sol.mu.truncate(N) / (k + 1),
        sol.nu.truncate(N),
        -sol.rho,
        weight=0.0,
    )


def extract(F: FormTractor):
    """The sigma slot, (k+1) XX . F."""
    return F.sigma


def _slots_as_prolonged(F: FormTractor):
    k = F.k
    sig = F.sigma
    mu = _val(F.mu) * (k + 1)
    nu = _val(F.phi)
    rho = -_val(F.rho)
    return sig, mu, nu, rho


# ---------------------------------------------------------------- Phi, Psi, Psi-tilde


def _common_parts(F: FormTractor, cs: CurvatureStack):
    k = F.k
    n = cs.n
    if k < 2:
        raise ValueError("this operator is defined for k >= 2")
    if k >= n:
        raise ValueError("k must be at most n-1")
    sig, mu, nu, rho = _slots_as_prolonged(F)
    s0 = _val(sig)
    g, gi = cs.g.value, cs.ginv.value
    C = cs.weyl.value
    C3 = np.einsum("abcr,rp->abcp", C, gi)
    A = _L[:k]
    z = -0.5 * np.einsum(f"xycp,p{A[1:]}->cxy{A[1:]}", C3, s0)
    z = alt(z, range(1, k + 2))
    w = k * (k - 1) / (2.0 * (n - k)) * blacklozenge(C, s0, gi)
    return sig, s0, mu, nu, g, gi, C, C3, z, w


def _zero_top(k, n, lead=1):
    return np.zeros((n,) * lead + (n,) * k)


def _dbl_from_jets(sig: Jet, cs: CurvatureStack):
    """nabla_e (C bl sigma) from the sigma jet, e first."""
    bl = blacklozenge(cs.weyl.truncate(1), sig.truncate(1), cs.ginv.truncate(1))
    return cs.nabla(bl, "d" * bl.ndim).value


def _dloz_from_jets(sig: Jet, cs: CurvatureStack):
    loz = lozenge(cs.weyl.truncate(1), sig.truncate(1), cs.g.truncate(1), cs.ginv.truncate(1))
    return cs.nabla(loz, "d" * loz.ndim).value


def _phi_rho(F, cs, dbl):
    """XX-slot of Phi given nabla_e (C bl sigma) as dbl[e, c, a2..]."""
    k, n = F.k, cs.n
    sig, s0, mu, nu, g, gi, C, C3, z, w = _common_parts(F, cs)
    Aup = np.einsum("pq,qxy->pxy", gi, cs.cotton.value)
    A = _L[:k]
    R2 = A[2:]
    r = (
        np.einsum(f"pcx,p{A[1:]}->cx{A[1:]}", Aup, s0)
        - 0.5 * np.einsum(f"pxy,pc{R2}->cxy{R2}", Aup, s0)
        - 0.5 * np.einsum(f"xycp,p{R2}->cxy{R2}", C3, nu)
        + k / (2.0 * (n - k)) * np.swapaxes(dbl, 0, 1)
    )
    return z, w, alt(r, range(1, k + 1))


def phi(F: FormTractor, cs: CurvatureStack) -> FormTractor:
    """The first-order operator Phi_c; the sigma slot of F must be a jet of order >= 1."""
    if not isinstance(F.sigma, Jet):
        raise TypeError("phi needs the sigma slot as a jet")
    z, w, r = _phi_rho(F, cs, _dbl_from_jets(F.sigma, cs))
    return FormTractor(F.k, _zero_top(F.k, cs.n), z, w, r, F.weight, lead=1)


def _div_loz(dloz, gi):
    """g^{eq} (nabla_e C loz sigma)_{q c a..}."""
    return np.einsum("eq,eq...->...", gi, dloz)


def psi(F: FormTractor, cs: CurvatureStack) -> FormTractor:
    """Psi_c = Phi_c + XX nabla^p (C loz sigma)_{p c a..} / (n-2)."""
    ph = phi(F, cs)
    n = cs.n
    extra = _div_loz(_dloz_from_jets(F.sigma, cs), cs.ginv.value) / (n - 2.0)
    return FormTractor(F.k, ph.sigma, ph.mu, ph.phi, ph.rho + extra, F.weight, lead=1)


def psi_tilde_constructive(F: FormTractor, cs: CurvatureStack) -> FormTractor:
    """Psi with every nabla sigma replaced by mu + g nu (values of the slots of F)."""
    k, n = F.k, cs.n
    sig, s0, mu, nu, g, gi, C, *_ = _common_parts(F, cs)
    dC = cs.dweyl.value
    Ds = _replacement(mu, nu, g)
    dbl = _bl_deriv(C, dC, s0, Ds, gi)
    z, w, r = _phi_rho(F, cs, dbl)
    dloz = _loz_deriv(C, dC, s0, Ds, g, gi)
    r = r + _div_loz(dloz, gi) / (n - 2.0)
    return FormTractor(k, _zero_top(k, n), z, w, r, F.weight, lead=1)


def _T_of_sigma(s0, mu, nu, cs):
    """T(sigma)_{c a..}, skewed over the a's (k >= 2)."""
    k, n = s0.ndim, cs.n
    g, gi = cs.g.value, cs.ginv.value
    C = cs.weyl.value
    Cup = np.einsum("abrs,rp,sq->abpq", C, gi, gi)
    C3 = np.einsum("abcr,rp->abcp", C, gi)
    dCup = np.einsum("eabrs,rp,sq->eabpq", cs.dweyl.value, gi, gi)
    Acot = cs.cotton.value
    Aup = np.einsum("pq,qxy->pxy", gi, Acot)
    Aup2 = np.einsum("xrs,rp,sq->xpq", Acot, gi, gi)
    A = _L[:k]
    R2 = A[2:]
    t = 0.5 * np.einsum(f"cxypq,pq{R2}->cxy{R2}", dCup, s0)
    t = t + 2.0 * np.einsum(f"pcx,p{A[1:]}->cx{A[1:]}", Aup, s0)
    t = t - np.einsum(f"pxy,pc{R2}->cxy{R2}", Aup, s0)
    t = t - np.einsum(f"cx,ypq,pq{R2}->cxy{R2}", g, Aup2, s0)
    t = t - np.einsum(f"cxpq,pq{A[1:]}->cx{A[1:]}", Cup, mu)
    t = t - np.einsum(f"yxpq,pqc{R2}->cxy{R2}", Cup, mu)
    t = t - (n - k - 1.0) / k * np.einsum(f"xycp,p{R2}->cxy{R2}", C3, nu)
    return alt(t, range(1, k + 1))


def psi_tilde(F: FormTractor, cs: CurvatureStack) -> FormTractor:
    """The algebraic invariant operator Psi-tilde_c, closed form; k = 1 uses the tractor curvature."""
    k, n = F.k, cs.n
    if k == 1:
        return _psi_tilde_k1(F, cs)
    sig, s0, mu, nu, g, gi, C, C3, z, w = _common_parts(F, cs)
    Acot = cs.cotton.value
    A3 = np.einsum("xyr,rp->xyp", Acot, gi)  # A_{xy}^p
    A = _L[:k]
    r = np.einsum(f"xcp,p{A[1:]}->cx{A[1:]}", A3, s0)
    r = alt(r, range(1, k + 1)) + (k - 1) / (2.0 * (n - k)) * _T_of_sigma(s0, mu, nu, cs)
    return FormTractor(k, _zero_top(k, n), z, w, r, F.weight, lead=1)


def _psi_tilde_k1(F: FormTractor, cs: CurvatureStack) -> FormTractor:
    """k = 1: half the contraction Omega_{p c A0 A1} sigma^p, read back into slots.

    The factor 1/2 matches the mu/(k+1) normalisation of the splitting operator;
    it agrees with the k >= 2 closed form evaluated at k = 1.
    """
    s0 = _val(F.sigma)
    Om = tractor_curvature(cs).value  # [a, b, I, J]
    dense = 0.5 * np.einsum("pcIJ,p->cIJ", Om, cs.ginv.value @ s0)
    return FormTractor.from_dense(dense, 1, F.weight, lead=1)


def ck_connection(F: FormTractor, cs: CurvatureStack) -> FormTractor:
    """k-nabla F = nabla F - Psi-tilde(F); slots of F must be jets of order >= 1."""
    dF = normal_form_tractor_connection(F, cs).values()
    pt = psi_tilde(F, cs)
    return dF - pt


# ---------------------------------------------------------------- closed forms vs Leibniz expansion


def grad_black_down_direct(s0, mu, nu, cs) -> np.ndarray:
    """nabla_{a1} (C bl sigma)_{c a2..} by Leibniz with nabla sigma -> mu + g nu; skewed over the a's."""
    g, gi = cs.g.value, cs.ginv.value
    dbl = _bl_deriv(cs.weyl.value, cs.dweyl.value, s0, _replacement(mu, nu, g), gi)
    return alt(np.swapaxes(dbl, 0, 1), range(1, s0.ndim + 1))


def grad_black_down_closed(s0, mu, nu, cs) -> np.ndarray:
    k = s0.ndim
    g, gi = cs.g.value, cs.ginv.value
    C = cs.weyl.value
    Cup = np.einsum("abrs,rp,sq->abpq", C, gi, gi)
    C3 = np.einsum("abcr,rp->abcp", C, gi)
    dCup = np.einsum("eabrs,rp,sq->eabpq", cs.dweyl.value, gi, gi)
    Aup = np.einsum("pq,qxy->pxy", gi, cs.cotton.value)
    A = _L[:k]
    R2, R3 = A[2:], A[3:]
    t = 0.5 * np.einsum(f"cxypq,pq{R2}->cxy{R2}", dCup, s0)
    t = t - np.einsum(f"pxy,pc{R2}->cxy{R2}", Aup, s0)
    t = t + 2.0 * np.einsum(f"pcx,p{A[1:]}->cx{A[1:]}", Aup, s0)
    t = t - np.einsum(f"cxpq,pq{A[1:]}->cx{A[1:]}", Cup, mu)
    t = t - np.einsum(f"yxpq,pqc{R2}->cxy{R2}", Cup, mu)
    t = t + np.einsum(f"xycp,p{R2}->cxy{R2}", C3, nu) / k
    if k >= 3:
        t = t - np.einsum(f"cx,yzpq,pq{R3}->cxyz{R3}", g, Cup, nu) / k
    return (k - 2.0) / k * alt(t, range(1, k + 1))


def grad_white_direct(s0, mu, nu, cs) -> np.ndarray:
    """nabla^q (C loz sigma)_{q c a..} by Leibniz with nabla sigma -> mu + g nu."""
    g, gi = cs.g.value, cs.ginv.value
    dloz = _loz_deriv(cs.weyl.value, cs.dweyl.value, s0, _replacement(mu, nu, g), g, gi)
    return _div_loz(dloz, gi)


def grad_white_closed(s0, mu, nu, cs) -> np.ndarray:
    """Closed form of nabla^q (C loz sigma)_{q c a..} (mu in the C-bracket)."""
    k, n = s0.ndim, cs.n
    g, gi = cs.g.value, cs.ginv.value
    C = cs.weyl.value
    Cup = np.einsum("abrs,rp,sq->abpq", C, gi, gi)
    C3 = np.einsum("abcr,rp->abcp", C, gi)
    dCup = np.einsum("eabrs,rp,sq->eabpq", cs.dweyl.value, gi, gi)
    Acot = cs.cotton.value
    Aup = np.einsum("pq,qxy->pxy", gi, Acot)
    Aup2 = np.einsum("xrs,rp,sq->xpq", Acot, gi, gi)
    A3 = np.einsum("xyr,rp->xyp", Acot, gi)
    A = _L[:k]
    R2, R3 = A[2:], A[3:]
    b = 0.5 * np.einsum(f"cxypq,pq{R2}->cxy{R2}", dCup, s0)
    b = b - np.einsum(f"cxpq,pq{A[1:]}->cx{A[1:]}", Cup, mu)
    b = b - np.einsum(f"yxpq,pqc{R2}->cxy{R2}", Cup, mu)
    b = b + (n - k - 1.0) * (
        np.einsum(f"pxy,pc{R2}->cxy{R2}", Aup, s0) + 2.0 * np.einsum(f"pxc,p{A[1:]}->cx{A[1:]}", Aup, s0)
    )
    b = b + (n - k + 1.0) / k * np.einsum(f"xycp,p{R2}->cxy{R2}", C3, nu)
    if k >= 3:
        b = b + (k - 2.0) / k * np.einsum(f"cx,yzpq,pq{R3}->cxyz{R3}", g, Cup, nu)
    b = b - (k - 1.0) * np.einsum(f"cx,ypq,pq{R2}->cxy{R2}", g, Aup2, s0)
    out = (n - 2.0) / (2.0 * (n - k)) * b + (n - 2.0) * np.einsum(f"xcp,p{A[1:]}->cx{A[1:]}", A3, s0)
    return alt(out, range(1, k + 1))


# ---------------------------------------------------------------- flat-model solutions


def _parallel_frame(n: int):
    """L[I, J]: frame coefficients at x of the flat parallel tractor e_J (expressions)."""
    x = [E.coord(i) for i in range(n)]
    zero, one = E.const(0), E.const(1)
    L = np.empty((n + 2, n + 2), dtype=object)
    L[:] = zero
    r2 = x[0] * x[0]
    for i in range(1, n):
        r2 = r2 + x[i] * x[i]
    L[0, 0] = one
    for b in range(n):
        L[0, 1 + b] = x[b]
        L[1 + b, 1 + b] = one
        L[1 + b, n + 1] = -x[b]
    L[0, n + 1] = E.const(-0.5) * r2
    L[n + 1, n + 1] = one
    return L


def _det_obj(M):
    m = M.shape[0]
    acc = E.const(0)
    for p in itertools.permutations(range(m)):
        inv = sum(1 for i in range(m) for j in range(i + 1, m) if p[i] > p[j])
        term = E.const(1)
        zero = False
        for i in range(m):
            e = M[i, p[i]]
            if e.is_zero():
                zero = True
                break
            term = term * e
        if zero:
            continue
        acc = acc - term if inv % 2 else acc + term
    return acc


def flat_solution(J: tuple[int, ...], n: int, ups: E.Expression | str | None = None, coords=None) -> FormField:
    """sigma = (k+1) XX . F for F the parallel tractor form alt(e_J0 x ... x e_Jk).

    With ``ups`` the metric is exp(2 ups) delta.  The XX-slot of a tractor
    form only picks up its conformal weight under a change of scale, so the
    representative there is exp((k+1) ups) times the flat one.
    """
    k = len(J) - 1
    if k < 1 or k > n - 1:
        raise ValueError("need 1 <= k <= n-1")
    coords = coords or tuple(f"x{i + 1}" for i in range(n))
    if ups is not None:
        u = E.parse(ups, coords) if isinstance(ups, str) else ups
        return flat_solution(J, n, None, coords).rescaled(RescaleData(u, n))
    L = _parallel_frame(n)
    comps = {}
    norm = E.const(1) / E.const(math.factorial(k))
    for a in itertools.combinations(range(n), k):
        rows = (0,) + tuple(1 + i for i in a)
        sub = np.empty((k + 1, k + 1), dtype=object)
        for i, I in enumerate(rows):
            for j, Jj in enumerate(J):
                sub[i, j] = L[I, Jj]
        d = _det_obj(sub)
        comps[a] = d if d.is_zero() else norm * d
    return FormField.from_components(n, k, comps, weight=k + 1)


def flat_solution_generator(F0: np.ndarray, ups: E.Expression | str | None = None, coords=None) -> FormField:
    """sigma = (k+1) XX . F for the parallel tractor form F equal to F0 at the origin of the flat chart.

    F0 is a constant skew (n+2)^(k+1) array of frame coefficients in the flat
    scale.  With ``ups`` the base metric is exp(2 ups) delta and sigma is the
    representative in that scale.
    """
    F0 = np.asarray(F0, dtype=float)
    k = F0.ndim - 1
    n = F0.shape[0] - 2
    if k < 1 or k > n - 1:
        raise ValueError("need a skew array of rank k+1 with 1 <= k <= n-1")
    if np.max(np.abs(alt(F0) - F0), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(F0))):
        raise ValueError("F0 must be totally skew")
    out = None
    for J in itertools.combinations(range(n + 2), k + 1):
        c = F0[J]
        if c == 0.0:
            continue
        term = flat_solution(J, n, ups, coords).scaled(math.factorial(k + 1) * c)
        out = term if out is None else out + term
    if out is None:
        return FormField.from_components(n, k, {}, weight=k + 1)
    return out


def flat_solution_basis(n: int, k: int, ups=None) -> list[FormField]:
    """One solution per increasing (k+1)-subset of the n+2 frame indices."""
    return [flat_solution(J, n, ups) for J in itertools.combinations(range(n + 2), k + 1)]


# ---------------------------------------------------------------- checks


@dataclass
class Measurement:
    """Per-point values of a scalar diagnostic and their maximum."""

    name: str
    per_point: list

    @property
    def maximum(self) -> float:
        return max(self.per_point, default=0.0)


def _max_slots(F: FormTractor) -> float:
    return max(F.max_abs().values(), default=0.0)


def normality_check(sigma: FormField, metric: MetricSpec, points, tol: float = 1e-6) -> Measurement:
    """max |Psi-tilde(DD sigma)| per point; also insists sigma solves the equation there."""
    vals = []
    for p in np.atleast_2d(points):
        cs = CurvatureStack(metric, p, 3)
        sj = sigma.jet(p, 3)
        res = float(np.max(np.abs(ck_residual_jet(sj, cs).value)))
        if res > tol:
            raise ValueError(f"sigma does not solve the conformal Killing equation at {p} (residual {res:.2e})")
        F = splitting_D(sj, cs)
        vals.append(_max_slots(psi_tilde(F, cs)))
    return Measurement("normality", vals)


def whitelozenge_check(sigma: FormField, metric: MetricSpec, points) -> Measurement:
    vals = []
    for p in np.atleast_2d(points):
        cs = CurvatureStack(metric, p, 2)
        L = lozenge(cs.weyl.value, sigma.jet(p, 0).value, cs.g.value, cs.ginv.value)
        vals.append(float(np.max(np.abs(L))))
    return Measurement("whitelozenge", vals)
