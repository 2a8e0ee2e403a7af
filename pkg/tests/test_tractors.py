import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckforms import expr as E
from ckforms.forms import alt
from ckforms.jets import Jet, jet_space
from ckforms.metrics import random_perturbed
from ckforms.riemann import CurvatureStack, RescaleData, grid_jet, rescale
from ckforms.tractors import (
    FormTractor,
    frame_X,
    frame_Y,
    frame_Z,
    frame_Z_lower,
    normal_form_tractor_connection,
    scale_matrix,
    tractor_curvature_action,
    tractor_D,
    tractor_gram,
    tractor_metric,
    transform_form_slots,
    transform_scale,
    transform_tractor,
)

N = 5
P0 = np.array([0.1, -0.2, 0.3, 0.05, 0.2])
seeds = st.integers(0, 2**32 - 1)


def _mx(a):
    return float(np.max(np.abs(a)))


@pytest.fixture(scope="module")
def metric():
    return random_perturbed(N, 3)


@pytest.fixture(scope="module")
def stack(metric):
    return CurvatureStack(metric, P0, 4)


def _random_slots(rng, k, n=N, order=None):
    """Random slot forms; jets of the given order when ``order`` is set."""
    sp = jet_space(n, 4)

    def f(r):
        if order is None:
            return alt(rng.normal(size=(n,) * r)) if r else np.array(rng.normal())
        return alt(Jet(rng.normal(size=(n,) * r + (sp.size(order),)), sp))

    return FormTractor(k, f(k), f(k + 1), f(k - 1) if k >= 1 else None, f(k))


# ---------------------------------------------------------------- frame and metric


class TestFrame:
    def test_null_pairing(self):
        H = tractor_metric(np.eye(N))
        X, Y = frame_X(N), frame_Y(N)
        assert X @ H @ X == 0 and Y @ H @ Y == 0 and X @ H @ Y == 1

    def test_z_orthogonal_to_x_y(self, rng):
        g = np.eye(N) + 0.1 * np.diag(rng.uniform(size=N))
        H = tractor_metric(g)
        Z = frame_Z(N)
        assert _mx(Z @ H @ frame_X(N)) == 0 and _mx(Z @ H @ frame_Y(N)) == 0
        assert np.allclose(Z @ H @ Z.T, g)
        assert np.allclose(frame_Z_lower(g), g @ Z)

    def test_gram_inverts_metric(self, stack):
        g = stack.g.value
        assert np.allclose(tractor_metric(g) @ tractor_gram(np.linalg.inv(g)), np.eye(N + 2))

    def test_metric_parallel(self, stack):
        assert _mx(stack.nabla(tractor_metric(stack.g), "tt").data) <= 1e-12


# ---------------------------------------------------------------- form-tractor slots


class TestFormTractor:
    @given(seeds, st.integers(0, 4))
    @settings(max_examples=25)
    def test_dense_round_trip(self, seed, k):
        F = _random_slots(np.random.default_rng(seed), k)
        back = FormTractor.from_dense(F.to_dense(), k)
        assert max((back - F).max_abs().values()) <= 1e-12

    def test_dense_is_skew(self, rng):
        D = _random_slots(rng, 2).to_dense()
        assert np.allclose(alt(D), D)

    def test_jet_round_trip(self, rng):
        F = _random_slots(rng, 2, order=2)
        back = FormTractor.from_dense(F.to_dense(), 2)
        assert max((back - F).max_abs().values()) <= 1e-12

    def test_algebra(self, rng):
        F, G = _random_slots(rng, 2), _random_slots(rng, 2)
        S = F + G.scaled(-1.0)
        assert max((S - (F - G)).max_abs().values()) == 0.0
        assert F.slot_weights() == (3, 3, 1, 1)

    def test_zero_form_has_no_phi(self, rng):
        F = _random_slots(rng, 0)
        assert F.phi is None and "phi" not in F.max_abs()


# ---------------------------------------------------------------- connection and curvature


class TestConnection:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_slots_match_dense(self, stack, k):
        F = _random_slots(np.random.default_rng(k), k, order=1)
        dense = stack.nabla(F.to_dense(), "t" * (k + 1))
        slots = normal_form_tractor_connection(F, stack)
        assert _mx(dense.value - slots.to_dense().value) <= 1e-12

    def test_needs_positive_degree(self, stack, rng):
        with pytest.raises(ValueError):
            normal_form_tractor_connection(_random_slots(rng, 0, order=1), stack)

    def test_curvature_is_commutator(self, stack, rng):
        sp = stack.g.space
        V = Jet(rng.normal(size=(N + 2, sp.size(2))), sp)
        ddV = stack.nabla(stack.nabla(V, "t"), "dt").value
        comm = ddV - ddV.transpose(1, 0, 2)
        Om = tractor_curvature_action(stack).value
        assert _mx(comm) > 1e-2
        assert np.allclose(comm, np.einsum("abIK,K->abI", Om, V.value), atol=1e-11)

    def test_curvature_kills_x(self, stack):
        Om = tractor_curvature_action(stack).value
        assert _mx(Om @ frame_X(N)) <= 1e-14

    def test_curvature_skew_in_h(self, stack):
        Om = tractor_curvature_action(stack).value
        h = tractor_metric(stack.g.value)
        lowered = np.einsum("abIK,KJ->abIJ", Om, h)
        assert _mx(lowered + lowered.transpose(0, 1, 3, 2)) <= 1e-12


# ---------------------------------------------------------------- change of scale


class TestScale:
    @given(seeds, st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
    @settings(max_examples=25)
    def test_composition(self, seed, u1, u2):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(N, N)) * 0.2
        ginv = np.linalg.inv(np.eye(N) + A + A.T)
        d1, d2 = rng.normal(size=(2, N))
        first = scale_matrix(u1, d1, ginv)
        second = scale_matrix(u2, d2, math.exp(-2 * u1) * ginv)
        assert np.allclose(second @ first, scale_matrix(u1 + u2, d1 + d2, ginv), atol=1e-10)

    @given(seeds, st.floats(-0.5, 0.5))
    @settings(max_examples=25)
    def test_preserves_tractor_metric(self, seed, u):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(N, N)) * 0.2
        g = np.eye(N) + A + A.T
        L = scale_matrix(u, rng.normal(size=N), np.linalg.inv(g))
        # coefficients are lower: h^{AB} is the invariant pairing
        Hg = tractor_gram(np.linalg.inv(g))
        Hh = tractor_gram(math.exp(-2 * u) * np.linalg.inv(g))
        assert np.allclose(L.T @ Hh @ L, Hg, atol=1e-10)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_slots_match_dense(self, rng, k):
        g = random_perturbed(N, 3).value(P0)
        gi = np.linalg.inv(g)
        F = _random_slots(rng, k)
        ups, dups = 0.3, rng.normal(size=N)
        by_slots = transform_form_slots(F, ups, dups, gi)
        by_dense = FormTractor.from_dense(transform_tractor(F.to_dense(), ups, dups, gi), k)
        assert max((by_slots - by_dense).max_abs().values()) <= 1e-12
        assert max((transform_scale(F, ups, dups, gi) - by_slots).max_abs().values()) == 0.0

    def test_leading_axis(self, rng):
        gi = np.eye(N)
        F = _random_slots(rng, 2)
        # the leading axis is an unweighted one-form index of length n
        stacked = FormTractor(2, *(np.stack([j * s for j in range(N)]) for s in F.slots()), lead=1)
        dups = np.full(N, 0.1)
        out = transform_form_slots(stacked, 0.2, dups, gi)
        one = transform_form_slots(F, 0.2, dups, gi)
        for j in range(N):
            assert np.allclose(out.mu[j], j * one.mu) and np.allclose(out.rho[j], j * one.rho)

    @pytest.mark.parametrize("w", [1.5, -1.0])
    def test_D_operator_invariant(self, metric, w):
        u = RescaleData.parse("0.3*x1 - 0.2*x2*x3 + 0.1*x4^2", metric.coords)
        V = E.parse("x1*x2 + sin(x3) + x5^2", metric.coords)
        Vh = E.exp(E.const(w) * u.ups) * V

        def jet(e):
            a = np.empty((), dtype=object)
            a[()] = e
            return grid_jet(a, P0, 2)

        D = tractor_D(jet(V), w, CurvatureStack(metric, P0, 2)).value
        Dh = tractor_D(jet(Vh), w, CurvatureStack(rescale(metric, u), P0, 2)).value
        U = u.jet(P0, 1)
        gi = metric.value(P0)
        moved = transform_tractor(D, U.value, U.partial().value, np.linalg.inv(gi), weight=w - 1)
        assert _mx(moved - Dh) <= 1e-11 * (1 + _mx(Dh))
