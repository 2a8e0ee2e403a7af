"""Truncated Taylor jets of tensor fields at a point.

A :class:`Jet` stores, for every tensor component, the Taylor coefficients of
that component about the base point up to some total order N.  The last axis
of ``Jet.data`` runs over monomials ordered by degree, so truncating to a
lower order is a slice.  Products are truncated polynomial products and are
carried out by :func:`jeinsum`, which otherwise behaves like ``np.einsum``
on the tensor axes.

Differentiating a jet lowers its order by one, so a field entered to order N
supports N derivatives before only its value at the base point remains.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

__all__ = ["JetSpace", "Jet", "jeinsum", "jet_space", "constant_jet"]


class JetSpace:
    """Monomial bookkeeping for n variables up to total degree ``max_order``."""

    def __init__(self, n: int, max_order: int):
        self.n = n
        self.max_order = max_order
        monos: list[tuple[int, ...]] = []
        for deg in range(max_order + 1):
            for combo in itertools.combinations_with_replacement(range(n), deg):
                alpha = [0] * n
                for c in combo:
                    alpha[c] += 1
                monos.append(tuple(alpha))
        self.monomials = monos
        self.index = {m: j for j, m in enumerate(monos)}
        self.degree = np.array([sum(m) for m in monos])
        self.size_at = [int(np.sum(self.degree <= d)) for d in range(max_order + 1)]
        self.factorial = np.array([math.prod(math.factorial(a) for a in m) for m in monos], dtype=float)
        self._mult: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._deriv: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def size(self, order: int) -> int:
        return self.size_at[order]

    def order_of(self, size: int) -> int:
        return self.size_at.index(size)

    def mult_table(self, order: int):
        """Index pairs (i, j) with deg i + deg j <= order, their product slot, and a scatter matrix."""
        hit = self._mult.get(order)
        if hit is not None:
            return hit
        m = self.size(order)
        I, J, K = [], [], []
        for i in range(m):
            for j in range(m):
                if self.degree[i] + self.degree[j] <= order:
                    prod = tuple(a + b for a, b in zip(self.monomials[i], self.monomials[j]))
                    I.append(i)
                    J.append(j)
                    K.append(self.index[prod])
        S = np.zeros((len(K), m))
        S[np.arange(len(K)), K] = 1.0
        out = (np.array(I), np.array(J), S)
        self._mult[order] = out
        return out

    def mult_groups(self, order: int):
        """The product table grouped by left monomial: [(i, js)] and the scatter matrix in that row order."""
        hit = self._mult.get(("groups", order))
        if hit is not None:
            return hit
        I, J, S = self.mult_table(order)
        rows = np.argsort(I, kind="stable")
        out = ([(i, J[I == i]) for i in range(self.size(order))], S[rows])
        self._mult[("groups", order)] = out
        return out

    def deriv_table(self, order: int, var: int):
        """Map coefficients of an order-``order`` jet to those of its ``var`` partial."""
        hit = self._deriv.get((order, var))
        if hit is not None:
            return hit
        m_out = self.size(order - 1)
        src, dst, fac = [], [], []
        for j in range(m_out):
            alpha = list(self.monomials[j])
            alpha[var] += 1
            src.append(self.index[tuple(alpha)])
            dst.append(j)
            fac.append(alpha[var])
        out = (np.array(src), np.array(dst), np.array(fac, dtype=float))
        self._deriv[(order, var)] = out
        return out


@lru_cache(maxsize=None)
def jet_space(n: int, max_order: int = 4) -> JetSpace:
    return JetSpace(n, max_order)


class Jet:
    """Tensor-valued truncated Taylor polynomial; ``data[..., m]`` is the coefficient of monomial m."""

    __array_priority__ = 100

    def __init__(self, data: np.ndarray, space: JetSpace):
        self.data = np.asarray(data, dtype=float)
        self.space = space
        if self.data.shape[-1] not in space.size_at:
            raise ValueError(f"jet axis of length {self.data.shape[-1]} matches no order")

    @property
    def order(self) -> int:
        return self.space.order_of(self.data.shape[-1])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.data.ndim - 1

    @property
    def value(self) -> np.ndarray:
        return self.data[..., 0]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.data[..., : self.space.size(order)], self.space)

    def partial(self) -> "Jet":
        """All first partials; the new derivative axis comes first."""
        N = self.order
        if N == 0:
            raise ValueError("jet of order 0 cannot be differentiated")
        out = np.zeros((self.space.n,) + self.shape + (self.space.size(N - 1),))
        for var in range(self.space.n):
            src, dst, fac = self.space.deriv_table(N, var)
            out[var][..., dst] = self.data[..., src] * fac
        return Jet(out, self.space)

    def _coerce(self, other):
        if isinstance(other, Jet):
            N = min(self.order, other.order)
            return self.truncate(N).data, other.truncate(N).data
        other = np.asarray(other, dtype=float)
        pad = np.zeros(other.shape + (self.data.shape[-1],))
        pad[..., 0] = other
        return self.data, pad

    def __add__(self, other):
        a, b = self._coerce(other)
        return Jet(a + b, self.space)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._coerce(other)
        return Jet(a - b, self.space)

    def __rsub__(self, other):
        a, b = self._coerce(other)
        return Jet(b - a, self.space)

    def __neg__(self):
        return Jet(-self.data, self.space)

    def __mul__(self, s):
        if isinstance(s, Jet):
            if s.ndim or self.ndim:
                raise TypeError("use jeinsum for tensor products of jets")
            return jeinsum(",->", self, s)
        return Jet(self.data * float(s), self.space)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return Jet(self.data / float(s), self.space)

    def transpose(self, *axes) -> "Jet":
        axes = tuple(axes) + (self.ndim,)
        return Jet(self.data.transpose(axes), self.space)

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        if Ellipsis in key or len(key) > self.ndim:
            raise IndexError("jets index tensor axes only")
        return Jet(self.data[key], self.space)

    def apply(self, fn) -> "Jet":
        """Apply a linear map acting on tensor axes only (``fn`` sees data with the jet axis last)."""
        return Jet(fn(self.data), self.space)

    def inv(self) -> "Jet":
        """Matrix inverse over the two tensor axes (Neumann series about the base value)."""
        if self.ndim != 2:
            raise ValueError("inv expects a matrix-valued jet")
        g0inv = np.linalg.inv(self.value)
        H = Jet(self.data.copy(), self.space)
        H.data[..., 0] = 0.0
        K = jeinsum("ab,bc->ac", -g0inv, H)  # nilpotent part
        out = constant_jet(g0inv, self.space, self.order)
        term = constant_jet(np.eye(self.shape[0]), self.space, self.order)
        acc = term
        for _ in range(self.order):
            term = jeinsum("ab,bc->ac", K, term)
            acc = acc + term
        return jeinsum("ab,bc->ac", acc, out)

    def __repr__(self):
        return f"Jet(shape={self.shape}, order={self.order})"


def constant_jet(value, space: JetSpace, order: int) -> Jet:
    value = np.asarray(value, dtype=float)
    data = np.zeros(value.shape + (space.size(order),))
    data[..., 0] = value
    return Jet(data, space)


def _split_spec(spec: str):
    ins, out = spec.split("->")
    return ins.split(","), out


_SMALL_PRODUCT = 1 << 16


def _pair(sa: str, a, sb: str, b, so: str):
    """Contract two operands (Jet or ndarray) into subscripts ``so``."""
    if isinstance(a, Jet) and isinstance(b, Jet):
        space = a.space
        N = min(a.order, b.order)
        if a.data.size * b.data.size < _SMALL_PRODUCT:
            # small tensors: a single batched einsum over all monomial pairs
            I, J, S = space.mult_table(N)
            ai = a.data[..., : space.size(N)][..., I]
            bj = b.data[..., : space.size(N)][..., J]
            return Jet(np.einsum(f"{sa}z,{sb}z->{so}z", ai, bj, optimize=True) @ S, space)
        # large tensors: one BLAS contraction per left monomial
        groups, S = space.mult_groups(N)
        parts = [np.einsum(f"{sa},{sb}z->{so}z", a.data[..., i], b.data[..., js], optimize=True) for i, js in groups]
        return Jet(np.concatenate(parts, axis=-1) @ S, space)
    if isinstance(a, Jet):
        return Jet(np.einsum(f"{sa}z,{sb}->{so}z", a.data, np.asarray(b), optimize=True), a.space)
    if isinstance(b, Jet):
        return Jet(np.einsum(f"{sa},{sb}z->{so}z", np.asarray(a), b.data, optimize=True), b.space)
    return np.einsum(f"{sa},{sb}->{so}", a, b, optimize=True)


def jeinsum(spec: str, *ops):
    """Einstein summation over tensor axes with truncated products over the jet axis.

    Operands may be Jets or plain arrays (treated as constants).  Several
    operands are folded left to right, keeping only indices still needed.
    The subscript ``z`` is reserved.
    """
    ins, out = _split_spec(spec.replace(" ", ""))
    if len(ins) != len(ops):
        raise ValueError("operand count does not match subscripts")
    if "z" in spec:
        raise ValueError("subscript 'z' is reserved for the jet axis")
    if len(ops) == 1:
        a = ops[0]
        if isinstance(a, Jet):
            return Jet(np.einsum(f"{ins[0]}z->{out}z", a.data), a.space)
        return np.einsum(f"{ins[0]}->{out}", a)
    acc_s, acc = ins[0], ops[0]
    for j in range(1, len(ops)):
        sb = ins[j]
        later = set("".join(ins[j + 1 :]) + out)
        keep = []
        for ch in acc_s + sb:
            if ch == ".":
                continue
            if ch in later and ch not in keep:
                keep.append(ch)
        ell = "..." if ("..." in acc_s or "..." in sb) else ""
        so = ell + "".join(keep) if j < len(ops) - 1 else out
        acc = _pair(acc_s, acc, sb, ops[j], so)
        acc_s = so
    return acc
