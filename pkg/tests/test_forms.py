import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckforms import expr as E
from ckforms.forms import (
    FormField,
    alt,
    blacklozenge,
    e1k_violation,
    e2k_violations,
    hash_action,
    hodge_star,
    hodge_star_array,
    levi_civita,
    lozenge,
    project_cftf,
    project_E1k,
    project_E2k0,
    sym,
    trace_pair,
    wedge_basis,
)
from ckforms.metrics import random_perturbed, schwarzschild
from ckforms.riemann import CurvatureStack

N = 5
seeds = st.integers(0, 2**32 - 1)


def _mx(a):
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def _metric(rng, n=N, neg=0):
    A = rng.normal(size=(n, n)) * 0.3
    g = np.diag([-1.0] * neg + [1.0] * (n - neg)) + A + A.T
    g[0, 0] += -1.0 if neg else 1.0
    return g


def _form(rng, k, n=N):
    return alt(rng.normal(size=(n,) * k))


def _hook(rng, k, n=N):
    """Random tensor T_{c a^1..a^k} skew in the a's."""
    return alt(rng.normal(size=(n,) * (k + 1)), range(1, k + 1))


@pytest.fixture(scope="module")
def weyl5():
    cs = CurvatureStack(random_perturbed(5, 3), [0.1, -0.2, 0.3, 0.05, 0.2], 2)
    return cs.weyl.value, cs.g.value, cs.ginv.value


# ---------------------------------------------------------------- symmetrisers


class TestSkew:
    @given(seeds, st.integers(1, 4))
    @settings(max_examples=20)
    def test_alt_idempotent(self, seed, r):
        T = np.random.default_rng(seed).normal(size=(3,) * r)
        assert np.allclose(alt(alt(T)), alt(T))
        assert np.allclose(sym(sym(T)), sym(T))

    @given(seeds, st.integers(2, 5), st.booleans())
    @settings(max_examples=20)
    def test_matches_permutation_sum(self, seed, r, skew):
        T = np.random.default_rng(seed).normal(size=(2,) * (r + 1))
        axes = list(range(1, r + 1))
        ref = np.zeros_like(T)
        for p in itertools.permutations(range(r)):
            inv = sum(p[i] > p[j] for i in range(r) for j in range(i + 1, r))
            ref += (-1.0) ** (inv * skew) * T.transpose([0] + [1 + q for q in p])
        ref /= math.factorial(r)
        got = alt(T, axes) if skew else sym(T, axes)
        assert np.allclose(got, ref, atol=1e-14)

    @given(seeds)
    @settings(max_examples=20)
    def test_alt_kills_symmetric(self, seed):
        T = np.random.default_rng(seed).normal(size=(4, 4, 4))
        assert _mx(alt(sym(T, (0, 1)))) <= 1e-14

    def test_levi_civita(self):
        eps = levi_civita(4)
        assert eps[0, 1, 2, 3] == 1 and eps[1, 0, 2, 3] == -1 and eps[0, 0, 1, 2] == 0
        assert np.sum(np.abs(eps)) == math.factorial(4)

    def test_wedge_basis(self):
        assert len(wedge_basis(5, 2)) == 10
        assert wedge_basis(3, 3) == [(0, 1, 2)]


# ---------------------------------------------------------------- E(1,k) projection


class TestCftf:
    @given(seeds, st.integers(1, 4))
    @settings(max_examples=30)
    def test_idempotent_and_typed(self, seed, k):
        rng = np.random.default_rng(seed)
        g = _metric(rng)
        gi = np.linalg.inv(g)
        P = project_cftf(_hook(rng, k), g, gi)
        assert np.allclose(project_cftf(P, g, gi), P, atol=1e-10)
        assert e1k_violation(P) <= 1e-10
        assert _mx(trace_pair(P, gi, 0, 1)) <= 1e-10

    @given(seeds, st.integers(1, 4))
    @settings(max_examples=30)
    def test_kills_skew_and_trace_parts(self, seed, k):
        rng = np.random.default_rng(seed)
        g = _metric(rng, neg=1)
        gi = np.linalg.inv(g)
        skew = _form(rng, k + 1)
        nu = _form(rng, k - 1) if k > 1 else rng.normal()
        if k == 1:
            pure = g * nu
        else:
            pure = alt(np.multiply.outer(g, nu), range(1, k + 1))
        assert _mx(project_cftf(skew + pure, g, gi)) <= 1e-10

    def test_e1k_removes_skew(self, rng):
        T = _hook(rng, 2)
        assert e1k_violation(project_E1k(T)) <= 1e-14

    def test_trailing_axes_carried(self, rng):
        g = _metric(rng)
        gi = np.linalg.inv(g)
        T = np.stack([_hook(rng, 2) for _ in range(3)], axis=-1)
        P = project_cftf(T, g, gi, k=2)
        for j in range(3):
            assert np.allclose(P[..., j], project_cftf(T[..., j], g, gi))


# ---------------------------------------------------------------- E(2,k)_0 projection


class TestE2k0:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_idempotent_self_adjoint(self, rng, k):
        g = _metric(rng, n=4)
        gi = np.linalg.inv(g)
        T, S = (alt(alt(rng.normal(size=(4,) * (k + 2)), (0, 1)), range(2, k + 2)) for _ in range(2))
        P = project_E2k0(T, g, gi)
        assert np.allclose(project_E2k0(P, g, gi), P, atol=1e-10)
        assert max(e2k_violations(P)) <= 1e-10
        assert _mx(trace_pair(P, gi, 0, 2)) <= 1e-10

        def pair(x, y):
            for _ in range(k + 2):
                x = np.tensordot(gi, x, axes=([1], [0]))
                x = np.moveaxis(x, 0, -1)
            return float(np.sum(x * y))

        assert pair(P, S) == pytest.approx(pair(T, project_E2k0(S, g, gi)), rel=1e-9, abs=1e-10)

    def test_weyl_lies_in_e22(self, weyl5):
        C, g, gi = weyl5
        assert np.allclose(project_E2k0(C, g, gi), C, atol=1e-12)


# ---------------------------------------------------------------- Weyl actions


class TestActions:
    def test_identity_scales_by_rank(self, rng):
        T = rng.normal(size=(3, 3, 3))
        assert np.allclose(hash_action(np.eye(3), T), -3 * T)

    @given(seeds)
    @settings(max_examples=20)
    def test_action_is_representation(self, seed):
        rng = np.random.default_rng(seed)
        A, B = rng.normal(size=(2, 3, 3))
        T = rng.normal(size=(3, 3))
        comm = hash_action(A, hash_action(B, T)) - hash_action(B, hash_action(A, T))
        # the dual representation on covariant slots: [A#, B#] = [A, B]#
        assert np.allclose(comm, hash_action(A @ B - B @ A, T))

    def test_leading_axes(self, rng):
        A = rng.normal(size=(2, 3, 3))
        T = rng.normal(size=(3, 3))
        out = hash_action(A, T, lead=1)
        assert np.allclose(out[1], hash_action(A[1], T))

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_lozenge_lands_in_e2k0(self, weyl5, k):
        C, g, gi = weyl5
        L = lozenge(C, _form(np.random.default_rng(k), k), g, gi)
        assert np.allclose(project_E2k0(L, g, gi), L, atol=1e-12)

    @pytest.mark.parametrize("k", [3, 4])
    def test_blacklozenge_tracefree_hook(self, weyl5, k):
        C, g, gi = weyl5
        B = blacklozenge(C, _form(np.random.default_rng(k), k), gi)
        assert _mx(B) > 1e-3
        assert e1k_violation(B) <= 1e-14
        assert _mx(trace_pair(B, gi, 0, 1)) <= 1e-14

    def test_blacklozenge_vanishes_for_two_forms(self, weyl5):
        C, g, gi = weyl5
        assert _mx(blacklozenge(C, _form(np.random.default_rng(0), 2), gi)) == 0.0

    def test_rank_guards(self, weyl5):
        C, g, gi = weyl5
        with pytest.raises(ValueError):
            blacklozenge(C, np.zeros(5), gi)
        with pytest.raises(ValueError):
            lozenge(C, _form(np.random.default_rng(0), 5), g, gi)


# ---------------------------------------------------------------- Hodge star


class TestHodge:
    @given(seeds, st.integers(0, 4), st.integers(0, 1))
    @settings(max_examples=30)
    def test_star_star(self, seed, k, neg):
        rng = np.random.default_rng(seed)
        n = 4
        g = _metric(rng, n=n, neg=neg)
        f = _form(rng, k, n) if k else np.array(rng.normal())
        s = np.sign(np.linalg.det(g))
        twice = hodge_star_array(hodge_star_array(f, g), g)
        assert np.allclose(twice, s * (-1) ** (k * (n - k)) * f, atol=1e-9)

    def test_symbolic_matches_numeric(self):
        m = schwarzschild(1.0)
        f = FormField.from_components(4, 2, {(0, 1): "r*th", (2, 3): "r^3*sin(th)", (1, 3): "t"}, coords=m.coords)
        p = [0.3, 4.0, 1.2, 0.5]
        got = hodge_star(f, m).jet(p, 0).value
        assert np.allclose(got, hodge_star_array(f.jet(p, 0).value, m.value(p)), atol=1e-12)

    def test_weight(self):
        m = schwarzschild(1.0)
        f = FormField.from_components(4, 1, {(0,): "1"}, coords=m.coords)
        assert hodge_star(f, m).weight == 4 - 2 + 2


# ---------------------------------------------------------------- expression forms


class TestFormField:
    def test_antisymmetric_fill(self):
        f = FormField.from_components(3, 2, {(1, 0): "x1"}, coords=("x1", "x2", "x3"))
        v = f.jet([2.0, 0, 0], 0).value
        assert v[1, 0] == 2.0 and v[0, 1] == -2.0 and v[0, 0] == 0.0
        assert f.weight == 3

    def test_repeated_index_ignored(self):
        f = FormField.from_components(3, 2, {(1, 1): "x1"}, coords=("x1", "x2", "x3"))
        assert _mx(f.jet([1, 1, 1], 0).value) == 0.0

    def test_jet_skew_to_all_orders(self):
        f = FormField.from_components(4, 3, {(0, 1, 2): "x1*x4", (1, 2, 3): "sin(x2)"}, coords=("x1", "x2", "x3", "x4"))
        J = f.jet([0.1, 0.2, 0.3, 0.4], 2)
        assert np.allclose(alt(J).data, J.data)

    def test_rescaled_picks_up_weight(self):
        coords = ("x1", "x2", "x3")
        f = FormField.from_components(3, 1, {(0,): "x2"}, coords=coords)

        class U:
            ups = E.parse("x3", coords)

        p = [0.0, 2.0, 0.5]
        assert f.rescaled(U).jet(p, 0).value[0] == pytest.approx(2.0 * math.exp(2 * 0.5))

    def test_add_and_scale(self):
        coords = ("x1", "x2")
        f = FormField.from_components(2, 1, {(0,): "x1", (1,): "1"}, coords=coords)
        h = f + f.scaled(2.0)
        assert np.allclose(h.jet([1.5, 0], 0).value, [4.5, 3.0])
