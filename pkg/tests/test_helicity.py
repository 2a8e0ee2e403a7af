import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckforms import expr as E
from ckforms import helicity as H
from ckforms.fixtures import symmetric_metric, translation_killing_form
from ckforms.forms import FormField, alt, project_cftf
from ckforms.jets import jeinsum
from ckforms.metrics import flat, random_perturbed, sample_points, schwarzschild, sphere_stereographic
from ckforms.prolongation import ck_residual_jet, flat_solution, splitting_D
from ckforms.riemann import CurvatureStack, RescaleData, rescale
from ckforms.tractors import frame_X, tractor_gram, transform_tractor

SCHW_P = np.array([0.2, 4.0, 1.1, 0.3])
PROD_P = np.array([0.2, 4.0, 1.1, 0.3, 0.3])


def _mx(a):
    a = a.value if hasattr(a, "value") and not isinstance(a, np.ndarray) else a
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


@pytest.fixture(scope="module")
def schw_cs():
    return CurvatureStack(schwarzschild(1.0), SCHW_P, 3)


@pytest.fixture(scope="module")
def prod_cs(schw5):
    return CurvatureStack(schw5["ky2"][0], PROD_P, 3)


@pytest.fixture(scope="module")
def rescaled5():
    m = random_perturbed(5, 3)
    p = np.array([0.1, -0.2, 0.3, 0.05, 0.2])
    u = RescaleData.parse("0.3*x1 - 0.2*x2*x3 + 0.1*x4^2 + 0.05*x5", m.coords)
    ups = E.evaluate(u.ups, p)
    dups = np.array([E.evaluate(x, p) for x in u.grad])
    return m, u, p, CurvatureStack(m, p, 3), CurvatureStack(rescale(m, u), p, 3), ups, dups


def _random_form(n, k, coords, seed):
    rng = np.random.default_rng(seed)
    comps = {}
    for a in itertools.combinations(range(n), k):
        c = rng.uniform(-1, 1, 3)
        comps[a] = f"{c[0]:.3f}*x1*x2 + {c[1]:.3f}*sin(x{a[-1] + 1}) + {c[2]:.3f}*x3^2"
    return FormField.from_components(n, k, comps, coords=coords)


# ---------------------------------------------------------------- tractor extensions


class TestExtensions:
    def test_shapes_and_weights(self, schw_cs, schw):
        sj = schw["ky2"][1].jet(SCHW_P, 2)
        V = H.mbar_jet(sj, schw_cs, 1)
        assert V.value.shape == (4, 6) and V.weight == 2.0 and V.kinds == "dt"
        U = H.munder_jet(sj, schw_cs, 1)
        assert U.value.shape == (4, 4, 4, 6) and U.weight == 4.0 and list(U.tractor_axes) == [3]

    def test_range_guards(self, schw_cs, schw):
        sj = schw["kv_t"][1].jet(SCHW_P, 2)
        with pytest.raises(ValueError):
            H.mbar_jet(sj, schw_cs, 1)
        with pytest.raises(ValueError):
            H.munder_jet(sj, schw_cs, 3)
        with pytest.raises(ValueError):
            H._extension(sj, schw_cs, 1, "sideways")

    def test_z_block_carries_sigma(self, schw_cs, schw):
        # contracting the tractor slot with X picks out the Z-block: (n-k+1) sigma
        sj = schw["ky2"][1].jet(SCHW_P, 2)
        V = H.mbar_jet(sj, schw_cs, 1).value
        Xup = tractor_gram(schw_cs.ginv.value) @ frame_X(4)
        assert _mx(V @ Xup) == 0.0
        assert np.allclose(V[:, 1:5], 3 * sj.value)

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_scale_covariance(self, rescaled5, k):
        m, u, p, cs, csh, ups, dups = rescaled5
        s = _random_form(5, k, m.coords, k)
        for side, ls in (("bar", range(1, k)), ("under", range(1, 5 - k))):
            for l in ls:
                V = H._extension(s.jet(p, 2), cs, l, side)
                Vh = H._extension(s.rescaled(u).jet(p, 2), csh, l, side)
                moved = transform_tractor(V.value, ups, dups, cs.ginv.value, V.weight, axes=V.tractor_axes)
                assert _mx(moved - Vh.value) <= 1e-10 * _mx(Vh.value), (side, l)

    def test_wrappers(self, schw):
        m, s = schw["ky2"]
        assert H.mbar(s, m, SCHW_P, 1).value.shape == (4, 6)
        assert H.munder(s, m, SCHW_P, 1).value.shape == (4, 4, 4, 6)


# ---------------------------------------------------------------- coupled equations


class TestCoupled:
    @pytest.mark.parametrize("side", ["bar", "under"])
    def test_characterisation_on_fixtures(self, schw, schw5, side):
        for fx, p in ((schw, SCHW_P), (schw5, PROD_P)):
            for name, (m, s) in fx.items():
                n, k = m.n, s.k
                ls = range(1, k) if side == "bar" else range(1, n - k)
                for l in ls:
                    assert H.coupled_cke_residual(s, l, side, m, [p]).maximum <= 1e-10, (name, l)

    def test_characterisation_fails_off_solutions(self, rescaled5):
        m, u, p, *_ = rescaled5
        s = _random_form(5, 2, m.coords, 9)
        assert H.coupled_cke_residual(s, 1, "bar", m, [p]).maximum > 1e-3
        assert H.coupled_cke_residual(s, 1, "under", m, [p]).maximum > 1e-3

    def test_kill_theorem_and_control(self, schw, schw5):
        worst, gap = 0.0, 0.0
        for fx, p in ((schw, SCHW_P), (schw5, PROD_P)):
            for name, (m, s) in fx.items():
                n, k = m.n, s.k
                for side, ls in (("bar", range(1, k)), ("under", range(1, n - k))):
                    for l in ls:
                        worst = max(worst, H.coupled_kill_check(s, l, side, m, [p]).maximum)
                        x = 1.5 * H.coupling_constant(side, n, k)
                        gap = max(gap, H.coupled_kill_check(s, l, side, m, [p], x=x).maximum)
        assert worst <= 1e-10
        assert gap > 1e-3

    def test_coupling_constants(self):
        assert H.coupling_constant("bar", 5, 2) == pytest.approx(2 / 3)
        assert H.coupling_constant("under", 5, 2) == pytest.approx(1.0)

    def test_closed_forms_of_actions(self, schw5, prod_cs):
        ko = H.kappa_omega(prod_cs)
        seen = 0.0
        for name, (m, s) in schw5.items():
            k = s.k
            sj = s.jet(PROD_P, 2)
            for side, ls in (("bar", range(1, k)), ("under", range(1, 5 - k))):
                for l in ls:
                    V = H._extension(sj, prod_cs, l, side).values()
                    cf = H.action_closed_forms(sj.value, prod_cs, l, side)
                    om = H.omega_action(ko["omega"], V, prod_cs)
                    ka = H.kappa_action(ko["kappa"], V, prod_cs)
                    assert _mx(om - cf["omega"]) <= 1e-10 * (1 + _mx(om)), (name, side, l)
                    assert _mx(ka - cf["kappa"]) <= 1e-10 * (1 + _mx(ka)), (name, side, l)
                    seen = max(seen, _mx(om), _mx(ka))
        assert seen > 1e-3

    def test_kappa_omega_weights(self, rescaled5):
        m, u, p, cs, csh, ups, dups = rescaled5
        gi = cs.ginv.value
        a, b = H.kappa_omega(cs), H.kappa_omega(csh)
        k_moved = transform_tractor(a["kappa"], ups, dups, gi, 0.0, axes=(1, 2, 3, 4))
        w_moved = transform_tractor(a["omega"], ups, dups, gi, 2.0, axes=(1, 2))
        assert _mx(k_moved - b["kappa"]) <= 1e-10 * _mx(b["kappa"])
        assert _mx(w_moved - b["omega"]) <= 1e-10 * _mx(b["omega"])

    def test_kappa_annihilated_by_x(self, random5):
        m, p = random5
        cs = CurvatureStack(m, p, 3)
        K = H.kappa_omega(cs)["kappa"]
        Xu = tractor_gram(cs.ginv.value) @ frame_X(5)
        assert _mx(K) > 1e-3
        for ax in (1, 2, 3, 4):
            assert _mx(np.tensordot(K, Xu, axes=([ax], [0]))) <= 1e-14


# ---------------------------------------------------------------- second-derivative identities


class TestHelicityLemma:
    def test_both_parts_on_fixtures(self, schw, schw5):
        for fx, p in ((schw, SCHW_P), (schw5, PROD_P)):
            for name, (m, s) in fx.items():
                cs = CurvatureStack(m, p, 3)
                sj = s.jet(p, 3)
                k = s.k
                for l in range(1, k):
                    lhs, rhs = H.helicity_lemma_sides(sj, cs, l, "a")
                    assert _mx(project_cftf(lhs - rhs, cs.g.value, cs.ginv.value, k=k - l)) <= 1e-10 * (1 + _mx(lhs))
                lhs, rhs = H.helicity_lemma_sides(sj, cs, 0, "b")
                assert _mx(project_cftf(lhs - rhs, cs.g.value, cs.ginv.value, k=k + 1)) <= 1e-10 * (1 + _mx(lhs))

    def test_bad_part(self, schw_cs, schw):
        with pytest.raises(ValueError):
            H.helicity_lemma_sides(schw["ky2"][1].jet(SCHW_P, 3), schw_cs, 1, "c")


# ---------------------------------------------------------------- almost Einstein scales


class TestEinstein:
    @pytest.mark.parametrize(
        "metric,alpha",
        [
            (flat(4), "1"),
            (flat(4), "1 + x1^2 + x2^2 + x3^2 + x4^2"),
            (flat(4), "2 - x1 + 0.3*x2"),
            (schwarzschild(1.0), "1"),
            (sphere_stereographic(4), "1"),
        ],
    )
    def test_parallel(self, metric, alpha):
        pts = sample_points(metric, 2, np.random.default_rng(0))
        r = H.almost_einstein_residual(alpha, metric, pts)
        assert r.scalar.maximum <= 1e-10 and r.tractor.maximum <= 1e-10

    def test_not_einstein(self):
        m = random_perturbed(4, 1)
        r = H.almost_einstein_residual("1", m, sample_points(m, 1, np.random.default_rng(0)))
        assert r.scalar.maximum > 1e-3 and r.tractor.maximum > 1e-3

    def test_top_slot_is_alpha(self):
        m = flat(4)
        p = [0.1, 0.2, 0.3, 0.4]
        cs = CurvatureStack(m, p, 3)
        aj = H.scale_field("1 + x1^2", m).jet(p, 3)
        I = H.einstein_tractor(aj, cs)
        assert I.top == pytest.approx(1.01)
        assert float(I.I.value @ tractor_gram(cs.ginv.value) @ frame_X(4)) == pytest.approx(1.01)

    def test_scale_field_inputs(self):
        m = flat(3)
        for a in ("x1", E.coord(0), 2.0):
            assert H.scale_field(a, m).k == 0
        f = H.scale_field("x1", m)
        assert H.scale_field(f, m) is f


class TestLowerRaise:
    @staticmethod
    def _lower_coeff(n, k):
        return (-1.0) ** (k + 1) * (k - 1) * (n - k + 1) / (2.0 * (n - k))

    def test_obstruction_constants(self, schw, schw5):
        for fx, p in ((schw, SCHW_P), (schw5, PROD_P)):
            for name, (m, s) in fx.items():
                cs = CurvatureStack(m, p, 3)
                n, k = m.n, s.k
                aj = H.scale_field("1", m).jet(p, 3)
                sj = s.jet(p, 3)
                obs = H.curvature_obstructions(sj.value, cs)
                I = H.einstein_tractor(aj.truncate(2), cs).I
                if k >= 2:
                    lo = H.lower_jet(aj, sj, cs)
                    res = ck_residual_jet(lo, cs).value
                    assert _mx(res - self._lower_coeff(n, k) * obs["lower"]) <= 1e-10 * (1 + _mx(res)), name
                    V = H.mbar_jet(sj.truncate(2), cs, 1)
                    assert _mx(lo.value + H.contract_einstein(I, V, cs)) <= 1e-10 * (1 + _mx(lo)), name
                if k <= n - 2:
                    ra = H.raise_jet(aj, sj, cs)
                    res = ck_residual_jet(ra, cs).value
                    assert _mx(res - (k + 1) * obs["raise"]) <= 1e-10 * (1 + _mx(res)), name
                    V = H.munder_jet(sj.truncate(2), cs, 1)
                    assert _mx(ra.value + H.contract_einstein(I, V, cs)) <= 1e-10 * (1 + _mx(ra)), name

    def test_star_killing_yano_lowers_to_killing(self, schw):
        m, s = schw["star_ky2"]
        pts = sample_points(m, 3, np.random.default_rng(4))
        for p in pts:
            cs = CurvatureStack(m, p, 3)
            lo = H.lower_jet(H.scale_field("1", m).jet(p, 3), s.jet(p, 3), cs)
            d = cs.nabla(lo, "d").value
            assert _mx(lo) > 1e-2
            assert _mx(d + d.T) <= 1e-10 * _mx(d)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=10)
    def test_k2_lower_obstruction_vanishes(self, seed):
        cs = CurvatureStack(random_perturbed(5, 3), [0.1, -0.2, 0.3, 0.05, 0.2], 2)
        s0 = alt(np.random.default_rng(seed).normal(size=(5, 5)))
        assert _mx(H.curvature_obstructions(s0, cs)["lower"]) <= 1e-12

    def test_obstructions_out_of_range(self, schw_cs):
        obs = H.curvature_obstructions(np.ones(4), schw_cs)
        assert obs["lower"] is None and obs["raise"] is not None


# ---------------------------------------------------------------- conformal Killing fields acting on forms


class TestPairing:
    def test_obstruction_constants(self, schw5):
        fields = [nm for nm, (_, s) in schw5.items() if s.k == 1]
        for sn in fields:
            for tn, (m, t) in schw5.items():
                cs = CurvatureStack(m, PROD_P, 3)
                sj, tj = schw5[sn][1].jet(PROD_P, 3), t.jet(PROD_P, 3)
                n, k = m.n, t.k
                obs = H.ckv_pair_obstructions(sj.value, tj.value, cs)
                if 3 <= k <= n - 1:
                    res = ck_residual_jet(H.ckv_pair_lower_jet(sj, tj, cs), cs).value
                    assert _mx(res - (n - k + 1.0) / (n - k) * obs["lower"]) <= 1e-9 * (1 + _mx(res)), (sn, tn)
                if 1 <= k <= n - 3:
                    res = ck_residual_jet(H.ckv_pair_raise_jet(sj, tj, cs), cs).value
                    assert _mx(res + (k + 1.0) * obs["raise"]) <= 1e-9 * (1 + _mx(res)), (sn, tn)

    def test_dual_through_splitting(self, schw5, prod_cs):
        # contracting the extension with DD of the field reproduces the pairing, up to normalisation
        sj = schw5["kv_t"][1].jet(PROD_P, 3)
        tj = schw5["star_ky2"][1].jet(PROD_P, 3)
        S = splitting_D(sj, prod_cs).to_dense().value
        out = H.ckv_pair_lower_jet(sj, tj, prod_cs).value
        d = H.contract_splitting(H.mbar_jet(tj.truncate(2), prod_cs, 2), S, prod_cs)
        c = float(d.ravel() @ out.ravel() / (out.ravel() @ out.ravel()))
        assert _mx(out) > 1e-3 and _mx(d - c * out) <= 1e-10 * _mx(d)

    def test_guards(self, schw_cs, schw):
        a = schw["ky2"][1].jet(SCHW_P, 3)
        with pytest.raises(ValueError):
            H.ckv_pair_lower_jet(a, a, schw_cs)
        with pytest.raises(ValueError):
            H.ckv_pair_raise_jet(a, a, schw_cs)


class TestPowerForms:
    def test_rotation_on_flat(self):
        n = 4
        Lam = np.zeros((n, n))
        Lam[0, 1], Lam[1, 0], Lam[2, 3], Lam[3, 2] = 1.0, -1.0, 0.5, -0.5
        m = flat(n)
        comps = {(a,): " + ".join(f"({Lam[a, b]})*x{b + 1}" for b in range(n)) for a in range(n)}
        s = FormField.from_components(n, 1, comps, coords=m.coords)
        for p in sample_points(m, 3, np.random.default_rng(0)):
            cs = CurvatureStack(m, p, 3)
            out = H.ckv_power_form_jet(s.jet(p, 3), 1, cs)
            assert out.shape == (4, 4, 4) and _mx(out) > 1e-2
            assert _mx(ck_residual_jet(out, cs)) <= 1e-12

    def test_curved_residual_is_the_condition(self):
        # off conformal flatness the output is a solution exactly when the Weyl condition vanishes
        m = symmetric_metric(4, 7, eps=0.2)
        s = translation_killing_form(m)
        for p in sample_points(m, 2, np.random.default_rng(1)):
            cs = CurvatureStack(m, p, 3)
            sj = s.jet(p, 3)
            assert _mx(ck_residual_jet(sj, cs)) <= 1e-12
            res = _mx(ck_residual_jet(H.ckv_power_form_jet(sj, 1, cs), cs))
            cond = _mx(H.power_form_condition(sj.value, cs))
            assert res > 1e-3 and cond > 1e-3

    def test_schwarzschild_fields_unobstructed_or_reported(self, schw):
        for name in ("kv_t", "kv_ph"):
            m, s = schw[name]
            cs = CurvatureStack(m, SCHW_P, 3)
            sj = s.jet(SCHW_P, 3)
            cond = _mx(H.power_form_condition(sj.value, cs))
            res = _mx(ck_residual_jet(H.ckv_power_form_jet(sj, 1, cs), cs))
            assert (res <= 1e-10) == (cond <= 1e-10)

    def test_guards(self, schw_cs, schw):
        with pytest.raises(ValueError):
            H.ckv_power_form_jet(schw["ky2"][1].jet(SCHW_P, 3), 1, schw_cs)
        with pytest.raises(ValueError):
            H.ckv_power_form_jet(schw["kv_t"][1].jet(SCHW_P, 3), 2, schw_cs)


# ---------------------------------------------------------------- conformal Killing tensors


class TestCKTensors:
    @pytest.mark.parametrize(
        "names,plan",
        [
            (("ky2", "ky2"), [((0, 1), (1, 1))]),
            (("star_ky2", "star_ky2"), [((0, 1), (1, 1))]),
            (("kv_t", "kv_t"), []),
            (("kv_t", "kv_ph"), []),
            (("kv_t", "ky2", "ky2"), [((1, 1), (2, 1))]),
        ],
    )
    def test_products_on_schwarzschild(self, schw, names, plan):
        m = schw["ky2"][0]
        for p in sample_points(m, 2, np.random.default_rng(2)):
            cs = CurvatureStack(m, p, 3)
            prod = H.ck_tensor_product([schw[nm][1].jet(p, 3) for nm in names], plan, cs)
            T = H.ck_tensor(prod, cs)
            assert T.m == len(names) and T.weight == 2 * len(names)
            assert _mx(H.ck_tensor_residual(prod, cs)) <= 1e-11 * (1 + _mx(prod))

    def test_killing_square_on_symmetric_metric(self):
        m = symmetric_metric(4, 3, eps=0.2)
        sj_p = sample_points(m, 1, np.random.default_rng(2))[0]
        cs = CurvatureStack(m, sj_p, 3)
        sj = translation_killing_form(m).jet(sj_p, 3)
        assert _mx(H.ck_tensor_residual(H.ck_tensor_product([sj, sj], [], cs), cs)) <= 1e-12

    def test_generic_product_fails(self, rescaled5):
        m, u, p, cs, *_ = rescaled5
        a = _random_form(5, 1, m.coords, 1).jet(p, 3)
        assert _mx(H.ck_tensor_residual(H.ck_tensor_product([a, a], [], cs), cs)) > 1e-3

    @pytest.mark.parametrize("plan", [[((0, 0), (1, 1))], [((0, 1), (1, 1)), ((0, 1), (1, 1))], []])
    def test_bad_plans(self, schw_cs, schw, plan):
        a = schw["ky2"][1].jet(SCHW_P, 3)
        with pytest.raises(ValueError):
            H.ck_tensor_product([a, a], plan, schw_cs)

    @given(st.integers(0, 2**32 - 1), st.integers(2, 4))
    @settings(max_examples=15)
    def test_sym_tf_projection(self, seed, m):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(4, 4)) * 0.2
        g = np.eye(4) + A + A.T
        gi = np.linalg.inv(g)
        S = H.project_sym_tf(rng.normal(size=(4,) * m), g, gi)
        assert np.allclose(H.project_sym_tf(S, g, gi), S, atol=1e-10)
        assert _mx(np.einsum("ab,ab...->...", gi, S)) <= 1e-10

    def test_square_identity(self, schw, schw5):
        # sigma_a^e.. sigma_be.. equals the tractor square of the top extension over (n-k+1)^2
        for fx, p in ((schw, SCHW_P), (schw5, PROD_P)):
            for name, (m, s) in fx.items():
                k, n = s.k, m.n
                if k < 2:
                    continue
                cs = CurvatureStack(m, p, 3)
                sj = s.jet(p, 2)
                V = H.mbar_jet(sj, cs, k - 1).value
                Hm, gi = tractor_gram(cs.ginv.value), cs.ginv.value
                L = "bcdefgh"[: k - 1]
                R = "ijklmno"[: k - 1]
                metr = ",".join(f"{a}{b}" for a, b in zip(L, R))
                lhs = np.einsum(f"x{L},y{R},{metr}->xy", sj.value, sj.value, *[gi] * (k - 1))
                rhs = np.einsum(f"x{L},y{R},{metr}->xy", V, V, *[Hm] * (k - 1))
                assert _mx(lhs - rhs / (n - k + 1) ** 2) <= 1e-10 * (1 + _mx(lhs)), name


# ---------------------------------------------------------------- gradient fields


class TestGradient:
    @pytest.mark.parametrize("J,alpha", [((0, 5), "1"), ((1, 5), "1"), ((2, 3), "1"), ((1, 5), "1 + x1^2 + x2^2 + x3^2 + x4^2")])
    def test_flat(self, J, alpha):
        m = flat(4)
        s = flat_solution(J, 4)
        a = H.scale_field(alpha, m)
        for p in sample_points(m, 2, np.random.default_rng(1)):
            cs = CurvatureStack(m, p, 3)
            out = H.gradient_field_from_ckv(a.jet(p, 4), s.jet(p, 4), cs)
            assert _mx(ck_residual_jet(out, cs)) <= 1e-12 * (1 + _mx(out))

    def test_nontrivial_example(self):
        # dilation with the scale 1 + |x|^2 gives a nonzero gradient field
        m = flat(4)
        p = np.array([0.2, -0.1, 0.3, 0.1])
        cs = CurvatureStack(m, p, 3)
        a = H.scale_field("1 + x1^2 + x2^2 + x3^2 + x4^2", m).jet(p, 4)
        out = H.gradient_field_from_ckv(a, flat_solution((0, 5), 4).jet(p, 4), cs)
        assert _mx(out) > 1e-2

    def test_splitting_gradient_is_half_curvature(self, schw):
        for name in ("kv_t", "kv_ph"):
            m, s = schw[name]
            for p in sample_points(m, 2, np.random.default_rng(3)):
                cs = CurvatureStack(m, p, 3)
                d, om = H.splitting_gradient(s.jet(p, 3), cs)
                assert _mx(om) > 1e-3
                assert _mx(d - 0.5 * om) <= 1e-11 * (1 + _mx(d))

    @pytest.mark.parametrize("J", [(1, 5), (0, 5), (1, 2)])
    def test_scale_contraction_parallel_on_flat(self, J):
        m = flat(4)
        s = flat_solution(J, 4)
        a = H.scale_field("1 + x1^2 + x2^2 + x3^2 + x4^2", m)
        p = np.array([0.3, -0.2, 0.1, 0.25])
        cs = CurvatureStack(m, p, 3)
        I = H.einstein_tractor(a.jet(p, 3), cs).I
        S = splitting_D(s.jet(p, 3), cs).to_dense()
        N = min(I.order, S.order)
        v = jeinsum("D,DE,CE->C", I.truncate(N), tractor_gram(cs.ginv.truncate(N)), S.truncate(N))
        assert _mx(cs.nabla(v, "t").value) <= 1e-12
