"""Tractor extensions of conformal Killing forms and helicity raising/lowering.

A weighted k-form sigma extends to tractor-valued forms

    M-bar sigma   in E_{a^{k-l} B^l}[k-l+1]   (1 <= l <= k-1)
    M-under sigma in E_{a^{k+l} B^l}[k+l+1]   (1 <= l <= n-k-1)

stored densely with the tensor axes first and the tractor axes (frame
coefficients, as in :mod:`ckforms.tractors`) after them.  Contracting these
with parallel or prolonged tractors produces new conformal Killing objects:
forms of neighbouring degree from an almost Einstein scale, forms two
degrees away from a conformal Killing field, and conformal Killing tensors
from products.  Every such construction has a curvature obstruction, which
the functions here report rather than assume.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import expr as E
from .forms import FormField, _alt_data, alt, project_cftf, trace_pair
from .jets import Jet, jeinsum
from .prolongation import Measurement, splitting_D
from .riemann import CurvatureStack, MetricSpec
from .tractors import tractor_curvature, tractor_D, tractor_gram

__all__ = [
    "TractorValuedForm",
    "mbar",
    "mbar_jet",
    "munder",
    "munder_jet",
    "x_slot",
    "charac_rhs_bar",
    "charac_rhs_under",
    "coupled_cke_residual",
    "kappa_omega",
    "kappa_action",
    "omega_action",
    "action_closed_forms",
    "coupled_connection",
    "coupled_kill_check",
    "coupling_constant",
    "helicity_lemma_sides",
    "EinsteinTractor",
    "EinsteinResidual",
    "scale_field",
    "einstein_tractor",
    "almost_einstein_residual",
    "lower_jet",
    "raise_jet",
    "contract_einstein",
    "curvature_obstructions",
    "ckv_pair_lower_jet",
    "ckv_pair_raise_jet",
    "ckv_pair_obstructions",
    "contract_splitting",
    "ckv_power_form_jet",
    "power_form_condition",
    "CKTensor",
    "ck_tensor",
    "project_sym_tf",
    "ck_tensor_product",
    "ck_tensor_residual",
    "gradient_field_from_ckv",
    "splitting_gradient",
]

# einsum letters; 'c' is kept for the derivative index and 'z' is reserved by jeinsum
_POOL = "abdefghijklmnopqrstuvwxy"


def _val(x):
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


# ---------------------------------------------------------------- tractor-valued forms


@dataclass
class TractorValuedForm:
    """``lead`` extra axes, then r tensor (form) axes, then l tractor axes."""

    data: object
    r: int
    l: int
    weight: float
    lead: int = 0

    @property
    def kinds(self) -> str:
        return "." * self.lead + "d" * self.r + "t" * self.l

    @property
    def tractor_axes(self) -> range:
        s = self.lead + self.r
        return range(s, s + self.l)

    @property
    def value(self) -> np.ndarray:
        return _val(self.data)

    def values(self) -> "TractorValuedForm":
        return TractorValuedForm(self.value, self.r, self.l, self.weight, self.lead)


def _embed(T, head: int, l: int, n: int, top: bool):
    """Place T into the Z^l block (top=False) or the X Z^(l-1) block, then alternate the tractor axes."""
    is_jet = isinstance(T, Jet)
    d = T.data if is_jet else np.asarray(T, dtype=float)
    used = head + (l - 1 if top else l)
    out = np.zeros(d.shape[:head] + (n + 2,) * l + d.shape[used:])
    inner = slice(1, n + 1)
    pre = (slice(None),) * head
    if top:
        out[pre + (n + 1,) + (inner,) * (l - 1)] = d
    else:
        out[pre + (inner,) * l] = d
    out = _alt_data(out, range(head, head + l))
    return Jet(out, T.space) if is_jet else out


def x_slot(T, head: int, l: int, n: int):
    """The tractor-valued form X_{[B^1} Z_{B^2}^{b^2} .. Z_{B^l]}^{b^l} T_{.. b^2..b^l}."""
    return _embed(T, head, l, n, top=True)


def mbar_jet(sigma: Jet, cs: CurvatureStack, l: int) -> TractorValuedForm:
    """(n-k+1) Z^l sigma - l X Z^(l-1) nabla^p sigma_{a.. p ..}."""
    k, n = sigma.ndim, cs.n
    if not 1 <= l <= k - 1:
        raise ValueError(f"mbar needs 1 <= l <= k-1, got l={l}, k={k}")
    r = k - l
    ds = cs.nabla(sigma, "d" * k)
    N = ds.order
    tau = trace_pair(ds, cs.ginv.truncate(N), 0, 1 + r)
    data = _embed(sigma.truncate(N) * (n - k + 1.0), r, l, n, top=False) + _embed(tau * (-float(l)), r, l, n, top=True)
    return TractorValuedForm(data, r, l, k - l + 1.0)


def munder_jet(sigma: Jet, cs: CurvatureStack, l: int) -> TractorValuedForm:
    """(k+1) Z^l g sigma - l X Z^(l-1) g nabla sigma, alternated over all tensor indices."""
    k, n = sigma.ndim, cs.n
    if not 1 <= l <= n - k - 1:
        raise ValueError(f"munder needs 1 <= l <= n-k-1, got l={l}, k={k}, n={n}")
    r = k + l
    ds = cs.nabla(sigma, "d" * k)
    N = ds.order
    g = cs.g.truncate(N)
    A, B = _POOL[:r], _POOL[r : r + l]
    gs = [f"{A[k + i]}{B[i]}" for i in range(l)]
    z = jeinsum(",".join([A[:k]] + gs) + f"->{A}{B}", sigma.truncate(N), *([g] * l))
    z = alt(z, range(r)) * (k + 1.0)
    xs = ",".join([A[k] + A[:k]] + gs[1:]) + f"->{A}{B[1:]}"
    x = alt(jeinsum(xs, ds, *([g] * (l - 1))), range(r)) * (-float(l))
    data = _embed(z, r, l, n, top=False) + _embed(x, r, l, n, top=True)
    return TractorValuedForm(data, r, l, k + l + 1.0)


def mbar(sigma: FormField, metric: MetricSpec, point, l: int, order: int = 1) -> TractorValuedForm:
    cs = CurvatureStack(metric, point, max(3, order + 2))
    return mbar_jet(sigma.jet(point, order + 1), cs, l)


def munder(sigma: FormField, metric: MetricSpec, point, l: int, order: int = 1) -> TractorValuedForm:
    cs = CurvatureStack(metric, point, max(3, order + 2))
    return munder_jet(sigma.jet(point, order + 1), cs, l)


# ---------------------------------------------------------------- coupled equations


def _weyl_mixed(cs):
    """C_c^p_a^q as [c, p, a, q]."""
    gi = cs.ginv.value
    return np.einsum("cxay,xp,yq->cpaq", cs.weyl.value, gi, gi)


def charac_rhs_bar(s0: np.ndarray, cs: CurvatureStack, l: int) -> np.ndarray:
    """l(k-1)(n-k+1)/(n-k) X-slot of C_c^p_[a1^q sigma_{p .. q ..]}, c first."""
    k, n = s0.ndim, cs.n
    r = k - l
    Cm = _weyl_mixed(cs)
    A = _POOL[: r - 1]
    Bd = _POOL[r - 1 : k - 2]
    t = np.einsum(f"cpxq,p{A}q{Bd}->cx{A}{Bd}", Cm, s0)
    t = alt(t, range(1, k))
    t = t * (l * (k - 1) * (n - k + 1.0) / (n - k))
    return x_slot(t, 1 + r, l, n)


def charac_rhs_under(s0: np.ndarray, cs: CurvatureStack, l: int) -> np.ndarray:
    """-l(k+1) X-slot of C_{c[a^{k+1} a^1}^p sigma_{|p| a^2..a^k} g_{a^{k+2}..] b^2..}."""
    k, n = s0.ndim, cs.n
    r = k + l
    g = cs.g.value
    C3 = np.einsum("abcr,rp->abcp", cs.weyl.value, cs.ginv.value)
    A, B = _POOL[:r], _POOL[r : r + l]
    gs = [f"{A[k + i]}{B[i]}" for i in range(1, l)]
    spec = ",".join([f"c{A[k]}{A[0]}p", "p" + A[1:k]] + gs) + f"->c{A}{B[1:]}"
    t = np.einsum(spec, C3, s0, *([g] * (l - 1)))
    t = alt(t, range(1, r + 1)) * (-float(l) * (k + 1))
    return x_slot(t, 1 + r, l, n)


def _coupled_derivative(V: TractorValuedForm, cs: CurvatureStack) -> np.ndarray:
    return cs.nabla(V.data, V.kinds).value


def _project(T, cs, r):
    return project_cftf(T, cs.g.value, cs.ginv.value, k=r)


def _extension(sigma_jet, cs, l, side):
    if side == "bar":
        return mbar_jet(sigma_jet, cs, l)
    if side == "under":
        return munder_jet(sigma_jet, cs, l)
    raise ValueError(f"side must be 'bar' or 'under', got {side!r}")


def coupled_cke_residual(sigma: FormField, l: int, side: str, metric: MetricSpec, points) -> Measurement:
    """Projected nabla of the extension minus the X-slot Weyl term, per point."""
    vals = []
    for p in np.atleast_2d(points):
        cs = CurvatureStack(metric, p, 3)
        sj = sigma.jet(p, 2)
        V = _extension(sj, cs, l, side)
        lhs = _coupled_derivative(V, cs)
        rhs = charac_rhs_bar(sj.value, cs, l) if side == "bar" else charac_rhs_under(sj.value, cs, l)
        vals.append(float(np.max(np.abs(_project(lhs - rhs, cs, V.r)))))
    return Measurement(f"coupled_cke.{side}.l{l}", vals)


# ---------------------------------------------------------------- kappa, omega and their double actions


def _xz(n):
    """X_[E0 Z_E1]^e as [E0, E1, e]."""
    d = np.zeros((n + 2, n + 2, n))
    d[n + 1, 1 + np.arange(n), np.arange(n)] = 1.0
    return _alt_data(d, (0, 1))


def kappa_omega(cs: CurvatureStack) -> dict[str, np.ndarray]:
    """kappa_{c E0 E1 F0 F1} = X_E0E1^e Omega_{c e F0 F1}; omega_{c E0 E1 f0 f1} = X_E0E1^e C_{c e f0 f1}."""
    XZ = _xz(cs.n)
    O = tractor_curvature(cs).value
    return {
        "kappa": np.einsum("IJe,ceKL->cIJKL", XZ, O),
        "omega": np.einsum("IJe,cefg->cIJfg", XZ, cs.weyl.value),
    }


def _pair_action(M, V, i, j):
    """sum over E, F of M[c, E, B, F, D] V[..E(i)..F(j)..] with B at axis i and D at axis j."""
    L = _POOL[: V.ndim]
    src = list(L)
    src[i], src[j] = "P", "Q"
    return np.einsum(f"cP{L[i]}Q{L[j]},{''.join(src)}->c{L}", M, V, optimize=True)


def kappa_action(K: np.ndarray, V: TractorValuedForm, cs: CurvatureStack) -> np.ndarray:
    """kappa_c ## V: both endomorphism factors on distinct tractor slots (ordered pairs)."""
    H = tractor_gram(cs.ginv.value)
    M = np.einsum("cIBJD,IE,JF->cEBFD", K, H, H)
    v = V.value
    out = np.zeros((cs.n,) + v.shape)
    for i, j in itertools.permutations(V.tractor_axes, 2):
        out += _pair_action(M, v, i, j)
    return out


def omega_action(W: np.ndarray, V: TractorValuedForm, cs: CurvatureStack) -> np.ndarray:
    """omega_c ## V: tractor factor on a tractor slot, tensor factor on a form slot."""
    H = tractor_gram(cs.ginv.value)
    M = np.einsum("cIBjd,IE,jf->cEBfd", W, H, cs.ginv.value)
    v = V.value
    out = np.zeros((cs.n,) + v.shape)
    for i in V.tractor_axes:
        for j in range(V.lead, V.lead + V.r):
            out += _pair_action(M, v, i, j)
    return out


def coupled_connection(V: TractorValuedForm, cs: CurvatureStack, x: float) -> np.ndarray:
    """nabla^x V = nabla V + x (omega## + kappa##) V at the point; V must be a jet."""
    out = _coupled_derivative(V, cs)
    if x != 0.0:
        ko = kappa_omega(cs)
        out = out + x * (omega_action(ko["omega"], V, cs) + kappa_action(ko["kappa"], V, cs))
    return out


def coupling_constant(side: str, n: int, k: int) -> float:
    """2/(n-k) for the bar extension, 2/k for the under extension."""
    return 2.0 / (n - k) if side == "bar" else 2.0 / k


def coupled_kill_check(
    sigma: FormField, l: int, side: str, metric: MetricSpec, points, x: float | None = None
) -> Measurement:
    """Projected nabla^x of the extension per point; zero for solutions at the right constant."""
    k, n = sigma.k, metric.n
    x = coupling_constant(side, n, k) if x is None else x
    vals = []
    for p in np.atleast_2d(points):
        cs = CurvatureStack(metric, p, 3)
        V = _extension(sigma.jet(p, 2), cs, l, side)
        vals.append(float(np.max(np.abs(_project(coupled_connection(V, cs, x), cs, V.r)))))
    return Measurement(f"coupled_kill.{side}.l{l}", vals)


def action_closed_forms(s0: np.ndarray, cs: CurvatureStack, l: int, side: str) -> dict[str, np.ndarray]:
    """Closed forms of omega## and kappa## on the extensions, as dense arrays (c first)."""
    k, n = s0.ndim, cs.n
    g = cs.g.value
    C = cs.weyl.value
    if side == "bar":
        r = k - l
        Cm = _weyl_mixed(cs)
        Ad = _POOL[: r - 1]
        Bd = _POOL[r - 1 : k - 2]
        w = np.einsum(f"cpxq,p{Ad}q{Bd}->cx{Ad}{Bd}", Cm, s0)
        w = _alt_data(_alt_data(w, range(1, r + 1)), range(1 + r, k))
        w = w * (-0.5 * l * (k - l) * (n - k + 1))
        if l >= 2:
            A = _POOL[:r]
            Bdd = _POOL[r + 1 : k - 1]
            kap = np.einsum(f"cpyq,{A}qp{Bdd}->c{A}y{Bdd}", Cm, s0)
            kap = _alt_data(_alt_data(kap, range(1, r + 1)), range(1 + r, k))
            kap = kap * (-0.5 * l * (l - 1) * (n - k + 1))
        else:
            kap = np.zeros_like(w)
        return {"omega": x_slot(w, 1 + r, l, n), "kappa": x_slot(kap, 1 + r, l, n)}
    r = k + l
    A, B = _POOL[:r], _POOL[r : r + l]
    C3 = np.einsum("abcr,rp->abcp", C, cs.ginv.value)
    t2 = np.einsum(
        ",".join([f"c{A[k]}{A[0]}p", "p" + A[1:k]] + [f"{A[k + i]}{B[i]}" for i in range(1, l)]) + f"->c{A}{B[1:]}",
        C3, s0, *([g] * (l - 1)),
    )
    t2 = _alt_data(t2, range(1, r + 1))
    if l >= 2:
        gs = [f"{A[k + i]}{B[i]}" for i in range(2, l)]
        t1 = np.einsum(
            ",".join([f"c{A[k + 1]}{B[1]}{A[k]}", A[:k]] + gs) + f"->c{A}{B[1:]}", C, s0, *([g] * (l - 2))
        )
        t1 = _alt_data(_alt_data(t1, range(1, r + 1)), range(1 + r, r + l))
    else:
        t1 = np.zeros_like(t2)
    w = 0.5 * l * (k + 1) * ((l - 1) * t1 + k * t2)
    kap = -0.5 * l * (l - 1) * (k + 1) * t1
    return {"omega": x_slot(w, 1 + r, l, n), "kappa": x_slot(kap, 1 + r, l, n)}


def helicity_lemma_sides(sigma_jet: Jet, cs: CurvatureStack, l: int, part: str) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the second-derivative identities for solutions, before projection.

    part 'a': nabla_c nabla^p sigma_{a^{k-l} p b^2..b^l} against
    (n-k+1)[-(k-1)/(n-k) C_c^p_[a1^q sigma_{p .. q ..]} - P_c^p sigma_{a.. p ..}].
    part 'b': nabla_c nabla_{a^{k+1}} sigma_{a^1..a^k} (alternated) against
    (k+1)[C_{c a^{k+1} a^1}^p sigma_{p a^2..} - P_{c a^{k+1}} sigma_{a..}].
    The caller projects on (c, first r form indices).
    """
    k, n = sigma_jet.ndim, cs.n
    s0 = sigma_jet.value
    dds = cs.nabla(cs.nabla(sigma_jet, "d" * k), "d" * (k + 1)).value  # [c, e, a..]
    gi = cs.ginv.value
    P = cs.P.value
    if part == "a":
        r = k - l
        lhs = trace_pair(dds, gi, 1, 2 + r)
        Cm = _weyl_mixed(cs)
        Ad = _POOL[: r - 1]
        Bd = _POOL[r - 1 : k - 2]
        t = np.einsum(f"cpxq,p{Ad}q{Bd}->cx{Ad}{Bd}", Cm, s0)
        t = -(k - 1.0) / (n - k) * alt(t, range(1, k))
        A = _POOL[:r]
        Bd = _POOL[r : k - 1]
        t = t - np.einsum(f"cp,{A}p{Bd}->c{A}{Bd}", P @ gi, s0)
        return lhs, (n - k + 1.0) * t
    if part == "b":
        A = _POOL[: k + 1]
        lhs = alt(np.einsum(f"c{A[k]}{A[:k]}->c{A}", dds), range(1, k + 2))
        C3 = np.einsum("abcr,rp->abcp", cs.weyl.value, gi)
        t = np.einsum(f"c{A[k]}{A[0]}p,p{A[1:k]}->c{A}", C3, s0) - np.einsum(f"c{A[k]},{A[:k]}->c{A}", P, s0)
        return lhs, (k + 1.0) * alt(t, range(1, k + 2))
    raise ValueError("part must be 'a' or 'b'")


# ---------------------------------------------------------------- almost Einstein scales


def scale_field(alpha, metric: MetricSpec) -> FormField:
    """A weight-1 density from an expression, string or number."""
    if isinstance(alpha, FormField):
        return alpha
    if isinstance(alpha, str):
        alpha = E.parse(alpha, metric.coords)
    elif not isinstance(alpha, E.Expression):
        alpha = E.const(alpha)
    grid = np.empty((), dtype=object)
    grid[()] = alpha
    return FormField(metric.n, 0, grid, 1.0)


@dataclass
class EinsteinTractor:
    """alpha and I_A = D_A alpha / n at one point (jets)."""

    alpha: Jet
    I: Jet

    @property
    def top(self) -> float:
        """X^A I_A = alpha."""
        return float(self.alpha.value)


def einstein_tractor(alpha: Jet, cs: CurvatureStack) -> EinsteinTractor:
    """I = alpha Y + nabla alpha Z - (Delta alpha + J alpha)/n X in frame coefficients."""
    return EinsteinTractor(alpha, tractor_D(alpha, 1.0, cs) / float(cs.n))


@dataclass
class EinsteinResidual:
    scalar: Measurement
    tractor: Measurement


def almost_einstein_residual(alpha, metric: MetricSpec, points) -> EinsteinResidual:
    """Trace-free part of (nabla nabla + P) alpha, and nabla I, per point."""
    a = scale_field(alpha, metric)
    sc, tr = [], []
    for p in np.atleast_2d(points):
        cs = CurvatureStack(metric, p, 3)
        aj = a.jet(p, 3)
        dd = cs.nabla(cs.nabla(aj, ""), "d").value
        T = 0.5 * (dd + dd.T) + cs.P.value * float(aj.value)
        T = T - cs.g.value * np.einsum("ab,ab->", cs.ginv.value, T) / cs.n
        sc.append(float(np.max(np.abs(T))))
        I = einstein_tractor(aj, cs).I
        tr.append(float(np.max(np.abs(cs.nabla(I, "t").value))))
    return EinsteinResidual(Measurement("almost_einstein.scalar", sc), Measurement("almost_einstein.tractor", tr))


# ---------------------------------------------------------------- lowering and raising with a scale


def lower_jet(alpha: Jet, sigma: Jet, cs: CurvatureStack) -> Jet:
    """alpha nabla^p sigma_{a.. p} - (n-k+1) (nabla^p alpha) sigma_{a.. p}, weight k.

    With this ordering the result is minus I^B contracted into the l = 1 bar extension.
    """
    k, n = sigma.ndim, cs.n
    ds = cs.nabla(sigma, "d" * k)
    N = ds.order
    gi = cs.ginv.truncate(N)
    div = trace_pair(ds, gi, 0, k)
    A = _POOL[: k - 1]
    da = alpha.partial().truncate(N)
    t1 = jeinsum(f",{A}->{A}", alpha.truncate(N), div)
    t2 = jeinsum(f"q,qp,{A}p->{A}", da, gi, sigma.truncate(N))
    return t1 - t2 * (n - k + 1.0)


def raise_jet(alpha: Jet, sigma: Jet, cs: CurvatureStack) -> Jet:
    """alpha nabla_{a^{k+1}} sigma_{a..} - (k+1) (nabla_{a^{k+1}} alpha) sigma_{a..}, alternated; weight k+2.

    Minus I^B contracted into the l = 1 under extension.
    """
    k = sigma.ndim
    ds = cs.nabla(sigma, "d" * k)
    N = ds.order
    A = _POOL[: k + 1]
    da = alpha.partial().truncate(N)
    t1 = jeinsum(f",{A[k]}{A[:k]}->{A}", alpha.truncate(N), ds)
    t2 = jeinsum(f"{A[k]},{A[:k]}->{A}", da, sigma.truncate(N))
    return alt(t1 - t2 * (k + 1.0))


def contract_einstein(I, V: TractorValuedForm, cs: CurvatureStack) -> np.ndarray:
    """I^B V_{.. B} over the last tractor axis (values)."""
    H = tractor_gram(cs.ginv.value)
    return np.einsum("I,IJ,...J->...", _val(I), H, V.value)


def curvature_obstructions(sigma: np.ndarray, cs: CurvatureStack) -> dict[str, np.ndarray | None]:
    """Projected Weyl contractions deciding whether lowering / raising gives a solution.

    'lower': C_{c a^1}^{pq} sigma_{a^2..a^{k-1} p q} on E(1,k-1)_0 (2 <= k <= n-1);
    'raise': C_{c a^{k+1} a^1}^p sigma_{p a^2..a^k} on E(1,k+1)_0 (1 <= k <= n-2).
    """
    k, n = sigma.ndim, cs.n
    g, gi = cs.g.value, cs.ginv.value
    C = cs.weyl.value
    out: dict[str, np.ndarray | None] = {"lower": None, "raise": None}
    if 2 <= k <= n - 1:
        Cup = np.einsum("abrs,rp,sq->abpq", C, gi, gi)
        A = _POOL[: k - 2]
        t = np.einsum(f"cxpq,{A}pq->cx{A}", Cup, sigma)
        out["lower"] = project_cftf(alt(t, range(1, k)), g, gi, k=k - 1)
    if 1 <= k <= n - 2:
        C3 = np.einsum("abcr,rp->abcp", C, gi)
        A = _POOL[: k + 1]
        t = np.einsum(f"c{A[k]}{A[0]}p,p{A[1:k]}->c{A}", C3, sigma)
        out["raise"] = project_cftf(alt(t, range(1, k + 2)), g, gi, k=k + 1)
    return out


# ---------------------------------------------------------------- pairing with a conformal Killing field


def ckv_pair_lower_jet(sigma: Jet, tau: Jet, cs: CurvatureStack) -> Jet:
    """2 sigma^p nabla^q tau_{a.. p q} + (n-k+1) (nabla^p sigma^q) tau_{a.. p q}, weight k-1."""
    k, n = tau.ndim, cs.n
    if sigma.ndim != 1 or k < 2:
        raise ValueError("need a one-form sigma and a k-form tau with k >= 2")
    dt = cs.nabla(tau, "d" * k)
    ds = cs.nabla(sigma, "d")
    N = min(dt.order, ds.order)
    gi = cs.ginv.truncate(N)
    A = _POOL[: k - 2]
    div = trace_pair(dt.truncate(N), gi, 0, k)  # [a.., p]
    t1 = jeinsum(f"{A}p,pq,q->{A}", div, gi, sigma.truncate(N))
    t2 = jeinsum(f"xy,xp,yq,{A}pq->{A}", ds.truncate(N), gi, gi, tau.truncate(N))
    return t1 * 2.0 + t2 * (n - k + 1.0)


def ckv_pair_raise_jet(sigma: Jet, tau: Jet, cs: CurvatureStack) -> Jet:
    """2 sigma_{a^{k+1}} nabla_{a^{k+2}} tau_{a..} + (k+1) (nabla_{a^{k+1}} sigma_{a^{k+2}}) tau_{a..}, alternated."""
    k = tau.ndim
    if sigma.ndim != 1:
        raise ValueError("sigma must be a one-form")
    dt = cs.nabla(tau, "d" * k)
    ds = cs.nabla(sigma, "d")
    N = min(dt.order, ds.order)
    A = _POOL[: k + 2]
    t1 = jeinsum(f"{A[k]},{A[k + 1]}{A[:k]}->{A}", sigma.truncate(N), dt.truncate(N))
    t2 = jeinsum(f"{A[k]}{A[k + 1]},{A[:k]}->{A}", ds.truncate(N), tau.truncate(N))
    return alt(t1 * 2.0 + t2 * (k + 1.0))


def ckv_pair_obstructions(sigma: np.ndarray, tau: np.ndarray, cs: CurvatureStack) -> dict[str, np.ndarray | None]:
    """Projected Weyl terms whose vanishing makes the paired forms solutions.

    'lower' (3 <= k <= n-1):
    (n-k+1) C^r_c^{pq} tau_{a.. pq} sigma_r + (k-2) C_{c a^1}^{pq} tau_{p a^2.. q r} sigma^r;
    'raise' (1 <= k <= n-3):
    2 C_{c a^{k+1} a^1}^p tau_{p a^2..} sigma_{a^{k+2}} - C^p_{c a^{k+1} a^{k+2}} tau_{a..} sigma_p.
    """
    k, n = tau.ndim, cs.n
    g, gi = cs.g.value, cs.ginv.value
    C = cs.weyl.value
    sup = gi @ sigma
    out: dict[str, np.ndarray | None] = {"lower": None, "raise": None}
    if 3 <= k <= n - 1:
        Cup = np.einsum("abrs,rp,sq->abpq", C, gi, gi)
        A = _POOL[: k - 2]
        t = (n - k + 1.0) * np.einsum(f"xcpq,{A}pq,x->c{A}", Cup, tau, sup)
        Ad = A[1:]
        t = t + (k - 2.0) * np.einsum(f"c{A[0]}pq,p{Ad}qr,r->c{A}", Cup, tau, sup)
        out["lower"] = project_cftf(alt(t, range(1, k - 1)), g, gi, k=k - 2)
    if 1 <= k <= n - 3:
        C3 = np.einsum("abcr,rp->abcp", C, gi)
        A = _POOL[: k + 2]
        t = 2.0 * np.einsum(f"c{A[k]}{A[0]}p,p{A[1:k]},{A[k + 1]}->c{A}", C3, tau, sigma)
        t = t - np.einsum(f"pc{A[k]}{A[k + 1]},{A[:k]},p->c{A}", C, tau, sup)
        out["raise"] = project_cftf(alt(t, range(1, k + 3)), g, gi, k=k + 2)
    return out


def contract_splitting(V: TractorValuedForm, S: np.ndarray, cs: CurvatureStack) -> np.ndarray:
    """V_{.. R S} S^{RS}: contract the last two tractor axes with a dense 2-tractor."""
    H = tractor_gram(cs.ginv.value)
    return np.einsum("IK,JL,KL,...IJ->...", H, H, S, V.value)


def ckv_power_form_jet(sigma: Jet, p: int, cs: CurvatureStack) -> Jet:
    """sigma_{a^0} mu_{a^1 a^2} ... mu_{a^{2p-1} a^{2p}}, mu = nabla_[a sigma_b]; weight 2p+2."""
    n = cs.n
    if sigma.ndim != 1:
        raise ValueError("sigma must be a one-form")
    if not 1 <= p <= (n - 2) // 2:
        raise ValueError(f"p must lie in 1..{(n - 2) // 2}")
    mu = alt(cs.nabla(sigma, "d"))
    N = mu.order
    out = sigma.truncate(N)
    for j in range(p):
        r = out.ndim
        A = _POOL[: r + 2]
        out = jeinsum(f"{A[:r]},{A[r:]}->{A}", out, mu)
    return alt(out)


def power_form_condition(sigma: np.ndarray, cs: CurvatureStack) -> np.ndarray:
    """sigma_{[a^0} C_{a^1 a^2] c}^d sigma_d."""
    C = cs.weyl.value
    sup = cs.ginv.value @ sigma
    t = np.einsum("a,bcxd,d->abcx", sigma, C, sup)
    return alt(t, range(3))


# ---------------------------------------------------------------- conformal Killing tensors


@dataclass
class CKTensor:
    """Symmetric trace-free valence-m tensor of weight 2m (values at a point)."""

    m: int
    t: np.ndarray

    @property
    def weight(self) -> int:
        return 2 * self.m


def _sym_basis_map(n, m):
    """Dense symmetric (m)-tensors spanned by the monomials of degree m."""
    combos = list(itertools.combinations_with_replacement(range(n), m))
    B = np.zeros((len(combos),) + (n,) * m)
    for j, c in enumerate(combos):
        for perm in set(itertools.permutations(c)):
            B[(j,) + perm] = 1.0
    return B


def project_sym_tf(S: np.ndarray, g: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Trace-free part of a symmetric tensor: S - sym(g x Q) with Q chosen to kill every trace."""
    m = S.ndim
    n = g.shape[0]
    S = _alt_data(S, range(m), sign=False) if m >= 2 else S
    if m < 2:
        return S
    B = _sym_basis_map(n, m - 2) if m > 2 else np.ones((1,))
    cols = []
    for Q in B:
        GQ = _alt_data(np.multiply.outer(g, Q), range(m), sign=False)
        cols.append(np.einsum("ab,ab...->...", ginv, GQ).ravel())
    M = np.array(cols).T
    rhs = np.einsum("ab,ab...->...", ginv, S).ravel()
    coef, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    Q = np.tensordot(coef, B, axes=1)
    return S - _alt_data(np.multiply.outer(g, Q), range(m), sign=False)


def _product_spec(ranks, plan):
    """Subscripts for the contraction: slot 0 of each form is free, the plan pairs the rest."""
    letters = iter(_POOL)
    subs = [[None] * r for r in ranks]
    free = []
    for i, r in enumerate(ranks):
        if r < 1:
            raise ValueError("every factor needs at least one index")
        subs[i][0] = next(letters)
        free.append(subs[i][0])
    metric_subs = []
    seen = set()
    for (i, s), (j, t) in plan:
        for key in ((i, s), (j, t)):
            if key in seen or not 1 <= key[1] < ranks[key[0]]:
                raise ValueError(f"bad or repeated slot {key} in contraction plan")
            seen.add(key)
        x, y = next(letters), next(letters)
        subs[i][s], subs[j][t] = x, y
        metric_subs.append(x + y)
    dangling = [(i, s) for i, r in enumerate(ranks) for s in range(1, r) if subs[i][s] is None]
    if dangling:
        raise ValueError(f"contraction plan leaves slots {dangling} uncontracted")
    return ["".join(s) for s in subs], metric_subs, "".join(free)


def ck_tensor_product(forms: list, plan: list, cs: CurvatureStack) -> Jet:
    """Contraction of the forms over the planned slot pairs (free slot 0 of each), as a jet.

    Symmetrisation and the trace-free part are applied by :func:`ck_tensor`.
    """
    ranks = [f.ndim for f in forms]
    if (sum(ranks) - len(ranks)) % 2:
        raise ValueError("sum of ranks minus the valence must be even")
    fsubs, msubs, out = _product_spec(ranks, plan)
    N = min(f.order for f in forms)
    gi = cs.ginv.truncate(N)
    spec = ",".join(fsubs + msubs) + "->" + out
    return jeinsum(spec, *[f.truncate(N) for f in forms], *([gi] * len(msubs)))


def ck_tensor(product: Jet, cs: CurvatureStack) -> CKTensor:
    m = product.ndim
    return CKTensor(m, project_sym_tf(product.value, cs.g.value, cs.ginv.value))


def ck_tensor_residual(product: Jet, cs: CurvatureStack) -> np.ndarray:
    """Symmetric trace-free part of nabla t; trace terms in t drop out, so the raw product is used."""
    m = product.ndim
    d = cs.nabla(product, "d" * m).value
    return project_sym_tf(d, cs.g.value, cs.ginv.value)


# ---------------------------------------------------------------- gradient fields and the prolonged field


def gradient_field_from_ckv(alpha: Jet, sigma: Jet, cs: CurvatureStack) -> Jet:
    """(nabla_a alpha) s - alpha nabla_a s with s = alpha nabla^p sigma_p - n (nabla^p alpha) sigma_p."""
    s = lower_jet(alpha, sigma, cs)
    ds = cs.nabla(s, "")
    N = ds.order
    da = alpha.partial().truncate(N)
    return jeinsum("a,->a", da, s.truncate(N)) - jeinsum(",a->a", alpha.truncate(N), ds)


def splitting_gradient(sigma: Jet, cs: CurvatureStack) -> tuple[np.ndarray, np.ndarray]:
    """nabla_a of the dense 2-tractor DD sigma, and Omega_{p a C D} sigma^p, for a one-form sigma."""
    F = splitting_D(sigma, cs)
    dense = F.to_dense()
    d = cs.nabla(dense, "tt").value
    O = tractor_curvature(cs).value
    return d, np.einsum("paIJ,p->aIJ", O, cs.ginv.value @ sigma.value)
