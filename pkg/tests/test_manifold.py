import numpy as np
import pytest

from segreopt import tensor as tc
from segreopt.manifold import (
    CPModel,
    DegenerateInputError,
    SegrePoint,
    align_and_error,
    complement_bases,
    incoherence,
    project_tangent,
    retract_thosvd,
    tangent_basis,
    tangent_dim,
    tangent_from_coords,
)


def random_point(rng, shape, weight=None):
    us = []
    for p in shape:
        u = rng.standard_normal(p)
        us.append(u / np.linalg.norm(u))
    return SegrePoint(weight if weight is not None else float(rng.uniform(0.5, 3.0)), tuple(us))


def dense_projector(point):
    """Projector as an explicit p* x p* matrix (oracle for small shapes)."""
    p_star = int(np.prod(point.shape))
    cols = []
    for j in range(p_star):
        e = np.zeros(p_star)
        e[j] = 1.0
        cols.append(project_tangent(point, e.reshape(point.shape)).ravel())
    return np.column_stack(cols)


class TestSegrePoint:
    def test_requires_unit_factors(self):
        with pytest.raises(ValueError):
            SegrePoint(1.0, (np.array([1.0, 1.0]), np.array([1.0, 0.0])))

    def test_requires_nonzero_weight(self):
        with pytest.raises(ValueError):
            SegrePoint(0.0, (np.array([1.0, 0.0]), np.array([1.0, 0.0])))

    def test_embed_matches_outer(self):
        rng = np.random.default_rng(0)
        pt = random_point(rng, (3, 4, 2), weight=-2.5)
        assert np.allclose(pt.embed(), tc.outer_rank_one(-2.5, pt.factors))
        assert abs(tc.fro_norm(pt.embed()) - 2.5) < 1e-10

    def test_stored_factors_renormalized(self):
        u = np.array([1.0 + 3e-8, 0.0])
        pt = SegrePoint(1.0, (u, np.array([0.0, 1.0])))
        for f in pt.factors:
            assert abs(np.linalg.norm(f) - 1.0) <= 1e-12


class TestCPModel:
    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(1)
        with pytest.raises(ValueError):
            CPModel((random_point(rng, (2, 2)), random_point(rng, (3, 2))))

    def test_factor_matrix_round_trip(self):
        rng = np.random.default_rng(2)
        model = CPModel(tuple(random_point(rng, (4, 3)) for _ in range(3)))
        rebuilt = CPModel.from_factors(model.weights,
                                       [model.factor_matrix(l) for l in range(2)])
        assert np.allclose(rebuilt.embed(), model.embed())


class TestProjectTangent:
    def test_point_is_fixed(self):
        rng = np.random.default_rng(3)
        pt = random_point(rng, (4, 3, 5))
        x = pt.embed()
        assert np.allclose(project_tangent(pt, x), x, atol=1e-12)

    def test_doubly_orthogonal_direction_killed(self):
        e1 = np.array([1.0, 0.0])
        e2 = np.array([0.0, 1.0])
        pt = SegrePoint(1.0, (e1, e1))
        x = tc.outer_rank_one(1.0, [e2, e2])
        assert np.allclose(project_tangent(pt, x), 0.0)

    def test_idempotent_and_self_adjoint(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            pt = random_point(rng, (3, 4, 2))
            x = rng.standard_normal(pt.shape)
            px = project_tangent(pt, x)
            ppx = project_tangent(pt, px)
            assert np.allclose(ppx, px, atol=1e-10)
            # residual orthogonal to the range
            assert abs(tc.inner(x - px, px)) <= 1e-10 * max(tc.fro_norm(x) ** 2, 1.0)

    def test_contraction(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            pt = random_point(rng, (4, 3))
            x = rng.standard_normal(pt.shape)
            assert tc.fro_norm(project_tangent(pt, x)) <= tc.fro_norm(x) * (1 + 1e-12)

    def test_matches_dense_projector_oracle(self):
        rng = np.random.default_rng(6)
        pt = random_point(rng, (3, 2, 2))
        mat = dense_projector(pt)
        assert np.allclose(mat, mat.T, atol=1e-10)
        assert np.allclose(mat @ mat, mat, atol=1e-10)
        x = rng.standard_normal(pt.shape)
        assert np.allclose(mat @ x.ravel(), project_tangent(pt, x).ravel(), atol=1e-12)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(7)
        pt = random_point(rng, (3, 3))
        with pytest.raises(ValueError):
            project_tangent(pt, np.zeros((2, 2)))

    def test_projector_rank_equals_manifold_dim(self):
        rng = np.random.default_rng(8)
        for shape in [(2, 2), (3, 2), (2, 3, 2), (4, 4, 4)]:
            pt = random_point(rng, shape)
            rank = np.linalg.matrix_rank(dense_projector(pt), tol=1e-8)
            assert rank == tangent_dim(shape)


class TestTangentBasis:
    def test_dimension_d2(self):
        rng = np.random.default_rng(9)
        pt = random_point(rng, (2, 2))
        assert tangent_basis(pt).dim == 3

    def test_gram_is_identity(self):
        rng = np.random.default_rng(10)
        pt = random_point(rng, (4, 3, 2))
        b = tangent_basis(pt)
        flat = b.vectors.reshape(b.dim, -1)
        assert np.allclose(flat @ flat.T, np.eye(b.dim), atol=1e-10)

    def test_vectors_lie_in_tangent_space(self):
        rng = np.random.default_rng(11)
        pt = random_point(rng, (3, 3, 2))
        b = tangent_basis(pt)
        for v in b.vectors:
            assert np.allclose(project_tangent(pt, v), v, atol=1e-10)

    def test_expansion_equals_projector(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            pt = random_point(rng, (4, 3, 5))
            b = tangent_basis(pt)
            x = rng.standard_normal(pt.shape)
            flat = b.vectors.reshape(b.dim, -1)
            expansion = (flat.T @ (flat @ x.ravel())).reshape(pt.shape)
            assert np.allclose(expansion, project_tangent(pt, x), atol=1e-9)

    def test_coords_round_trip(self):
        rng = np.random.default_rng(13)
        pt = random_point(rng, (3, 4, 2))
        comps = complement_bases(pt)
        coords = rng.standard_normal(tangent_dim(pt.shape))
        xi = tangent_from_coords(pt, comps, coords)
        flat = tangent_basis(pt).vectors.reshape(len(coords), -1)
        assert np.allclose(flat @ xi.ravel(), coords, atol=1e-10)


class TestRetraction:
    def test_fixed_point_on_rank_one(self):
        # the same tensor comes back; the representative is canonical, so the
        # weight matches in magnitude (its sign absorbs factor sign flips)
        rng = np.random.default_rng(14)
        pt = random_point(rng, (4, 3, 5), weight=2.0)
        back = retract_thosvd(pt.embed())
        assert np.allclose(back.embed(), pt.embed(), rtol=1e-12, atol=1e-12)
        assert abs(back.weight) == pytest.approx(2.0, rel=1e-12)
        again = retract_thosvd(back.embed())
        assert again.weight == pytest.approx(back.weight, rel=1e-12)

    def test_negative_weight_recovered(self):
        rng = np.random.default_rng(15)
        pt = random_point(rng, (3, 3, 3), weight=-1.7)
        back = retract_thosvd(pt.embed())
        assert np.allclose(back.embed(), pt.embed(), rtol=1e-12, atol=1e-12)

    def test_d2_matches_svd_oracle(self):
        rng = np.random.default_rng(16)
        for _ in range(20):
            x = rng.standard_normal((8, 6))
            pt = retract_thosvd(x)
            u_mat, s, vt = np.linalg.svd(x)
            u, v = u_mat[:, 0], vt[0]
            # apply the same sign convention as the implementation
            if u[np.argmax(np.abs(u))] < 0:
                u = -u
            if v[np.argmax(np.abs(v))] < 0:
                v = -v
            lam = float(x.ravel() @ np.outer(u, v).ravel())
            assert abs(abs(pt.weight) - s[0]) <= 1e-10 * s[0]
            assert np.allclose(pt.factors[0], u, atol=1e-10)
            assert np.allclose(pt.factors[1], v, atol=1e-10)
            assert pt.weight == pytest.approx(lam, rel=1e-10)

    def test_second_order_retraction_slope(self):
        rng = np.random.default_rng(17)
        pt = random_point(rng, (6, 5, 4), weight=1.0)
        x = pt.embed()
        xi = project_tangent(pt, rng.standard_normal(pt.shape))
        xi /= tc.fro_norm(xi)
        hs = [1e-1, 1e-2, 1e-3, 1e-4]
        resids = []
        for h in hs:
            target = x + h * xi
            resids.append(tc.fro_norm(retract_thosvd(target).embed() - target))
        slope = np.polyfit(np.log(hs), np.log(resids), 1)[0]
        assert 1.8 <= slope <= 2.2

    def test_zero_tensor_degenerate(self):
        with pytest.raises(DegenerateInputError):
            retract_thosvd(np.zeros((3, 3, 3)))


class TestIncoherence:
    def test_orthonormal_factors_zero(self):
        eye = np.eye(4)
        model = CPModel.from_factors([1.0, 2.0], [eye[:, :2]] * 3)
        mus, eta = incoherence(model)
        assert mus == [0.0, 0.0, 0.0]
        assert eta == 0.0

    def test_identical_components_maximal(self):
        rng = np.random.default_rng(18)
        pt = random_point(rng, (5, 5))
        model = CPModel((pt, SegrePoint(2.0, pt.factors)))
        mus, eta = incoherence(model)
        assert mus[0] == pytest.approx(5.0, rel=1e-12)
        assert eta == pytest.approx(1.0, rel=1e-12)

    def test_rank_one_is_zero_by_convention(self):
        rng = np.random.default_rng(19)
        model = CPModel((random_point(rng, (3, 3)),))
        assert incoherence(model) == ([0.0, 0.0], 0.0)

    def test_ar1_eta_is_rho_and_rotation_invariant(self):
        from segreopt.harness import gen_coherent_factors
        rng = np.random.default_rng(20)
        rho = 0.75
        mats = [gen_coherent_factors(12, 3, rho, rng) for _ in range(3)]
        model = CPModel.from_factors([1.0, 1.0, 1.0], mats)
        _, eta = incoherence(model)
        assert eta == pytest.approx(rho, abs=1e-10)
        # direct pairwise-product oracle
        worst = max(abs(float(m[:, i] @ m[:, j]))
                    for m in mats for i in range(3) for j in range(3) if i != j)
        assert eta == pytest.approx(worst, abs=1e-12)


class TestAlignAndError:
    def _model(self, rng, shape=(4, 3, 2), r=3):
        return CPModel(tuple(random_point(rng, shape, weight=float(rng.uniform(1, 3)))
                             for _ in range(r)))

    def test_identical_models(self):
        rng = np.random.default_rng(21)
        m = self._model(rng)
        rep = align_and_error(m, m)
        assert rep.max_component_error == 0.0
        assert rep.rel_frobenius_error == 0.0
        assert rep.permutation == (0, 1, 2)

    def test_reversed_order_matched(self):
        rng = np.random.default_rng(22)
        m = self._model(rng)
        rev = CPModel(tuple(reversed(m.components)))
        rep = align_and_error(rev, m)
        assert rep.max_component_error <= 1e-12
        assert rep.permutation == (2, 1, 0)

    def test_sign_group_all_patterns(self):
        # every sign pattern of the factors is undone via the weight flip
        rng = np.random.default_rng(23)
        m = self._model(rng, r=2)
        first = m.components[0]
        for pattern in range(8):
            signs = [(-1.0 if pattern & (1 << l) else 1.0) for l in range(3)]
            flipped = SegrePoint(first.weight,
                                 tuple(s * f for s, f in zip(signs, first.factors)))
            est = CPModel((flipped, m.components[1]))
            rep = align_and_error(est, m)
            assert rep.max_component_error <= 1e-12
            expected_flip = -1 if np.prod(signs) < 0 else 1
            assert rep.sign_flips[0] == expected_flip

    def test_rank_mismatch(self):
        rng = np.random.default_rng(24)
        m = self._model(rng, r=2)
        with pytest.raises(ValueError):
            align_and_error(m, CPModel(m.components[:1]))

    def test_reported_metrics_match_direct_computation(self):
        rng = np.random.default_rng(25)
        truth = self._model(rng)
        est = CPModel(tuple(
            retract_thosvd(c.embed() + 0.05 * abs(c.weight) * rng.standard_normal(c.shape))
            for c in truth.components))
        rep = align_and_error(est, truth)
        direct_max = max(
            tc.fro_norm(e.embed() - t.embed()) / abs(t.weight)
            for e, t in zip(rep.aligned.components, truth.components))
        assert rep.max_component_error == pytest.approx(direct_max, rel=1e-12)
        direct_rel = tc.fro_norm(rep.aligned.embed() - truth.embed()) / tc.fro_norm(truth.embed())
        assert rep.rel_frobenius_error == pytest.approx(direct_rel, rel=1e-9)


class TestPerturbationBounds:
    """Numerical checks of the tangent-space perturbation inequalities."""

    def test_own_component_quadratic_bound(self):
        rng = np.random.default_rng(26)
        d = 3
        checked = 0
        while checked < 100:
            truth = random_point(rng, (6, 5, 4), weight=float(rng.uniform(1.0, 4.0)))
            t_emb = truth.embed()
            delta = rng.standard_normal(truth.shape)
            delta *= rng.uniform(0.01, 1.0 / (4 * d)) * abs(truth.weight) / tc.fro_norm(delta)
            est = retract_thosvd(t_emb + delta)
            diff = tc.fro_norm(est.embed() - t_emb)
            if diff / abs(truth.weight) > 1.0 / (4 * d):
                continue
            checked += 1
            resid = tc.fro_norm(t_emb - project_tangent(est, t_emb))
            assert resid <= 3 * d * diff**2 / abs(truth.weight) + 1e-12

    def test_cross_component_bound(self):
        from segreopt.harness import gen_coherent_factors
        rng = np.random.default_rng(27)
        d = 3
        checked = 0
        while checked < 100:
            rho = float(rng.choice([0.0, 0.3, 0.6]))
            mats = [gen_coherent_factors(8, 2, rho, rng) for _ in range(d)]
            lams = rng.uniform(1.0, 3.0, size=2)
            truth = CPModel.from_factors(lams, mats)
            _, eta = incoherence(truth)
            ests, diffs = [], []
            ok = True
            for c in truth.components:
                delta = rng.standard_normal(c.shape)
                delta *= rng.uniform(0.01, 1.0 / (4 * d)) * abs(c.weight) / tc.fro_norm(delta)
                e = retract_thosvd(c.embed() + delta)
                if tc.inner(e.embed(), c.embed()) < 0:
                    ok = False
                    break
                ests.append(e)
                diffs.append(tc.fro_norm(e.embed() - c.embed()))
            if not ok:
                continue
            checked += 1
            for i, j in ((0, 1), (1, 0)):
                lhs = tc.fro_norm(project_tangent(
                    ests[i], ests[j].embed() - truth.components[j].embed()))
                eps_i = diffs[i] / abs(truth.components[i].weight)
                eps_j = diffs[j] / abs(truth.components[j].weight)
                rhs = (np.sqrt(2) * (d + 1) * diffs[j]
                       * ((eps_j + eta) ** (d - 1) + eps_i))
                assert lhs <= rhs + 1e-12
