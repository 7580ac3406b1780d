import math

import numpy as np
import pytest

from varimp.spd import (
    CholeskyParams,
    NotSpdError,
    Spd3,
    Sym3,
    cholesky_decode,
    cholesky_encode,
    log_euclidean_mean,
    spd_ema,
    spd_exp,
    spd_log,
    sym_eig,
)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def random_spd(rng, lo=1e-3, hi=1e3):
    lam = np.exp(rng.uniform(math.log(lo), math.log(hi), size=3))
    q = random_rotation(rng)
    return (q * lam) @ q.T


class TestSym3:
    def test_stores_six_entries(self):
        s = Sym3.from_matrix([[1, 2, 3], [2, 4, 5], [3, 5, 6]])
        assert np.array_equal(s.six(), [1, 4, 6, 2, 3, 5])
        assert np.array_equal(s.mat(), s.mat().T)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            Sym3.from_matrix([[1, 2, 0], [0, 1, 0], [0, 0, 1]])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Sym3(1.0, 1.0, math.nan, 0.0, 0.0, 0.0)

    def test_spd_certification(self):
        Spd3.from_matrix(np.eye(3))
        with pytest.raises(NotSpdError):
            Spd3.from_matrix(np.diag([1.0, 1.0, -0.5]))
        with pytest.raises(NotSpdError):
            Spd3.from_matrix(np.diag([1.0, 1.0, 0.0]))


class TestSymEig:
    def test_already_diagonal(self):
        pair = sym_eig(np.diag([3.0, 2.0, 1.0]))
        assert np.allclose(pair.lam, [3, 2, 1])
        assert np.allclose(pair.q, np.eye(3))

    def test_identity_degenerate(self):
        pair = sym_eig(np.eye(3))
        assert np.allclose(pair.lam, [1, 1, 1])
        assert np.allclose(pair.q @ pair.q.T, np.eye(3), atol=1e-10)

    def test_hand_derived_block(self):
        # Characteristic polynomial of the 2x2 block [[2,1],[1,2]] gives
        # eigenvalues 3 and 1 with eigenvectors (1,±1)/sqrt(2).
        pair = sym_eig([[2.0, 1, 0], [1, 2, 0], [0, 0, 5]])
        assert np.allclose(pair.lam, [5, 3, 1], atol=1e-12)
        v3 = pair.q[:, 1]
        expected = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
        assert np.allclose(np.abs(v3), expected, atol=1e-12)

    def test_matches_lapack_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            m = random_spd(rng) if rng.random() < 0.5 else rng.standard_normal((3, 3))
            m = 0.5 * (m + m.T)
            pair = sym_eig(m)
            # descending order
            assert pair.lam[0] >= pair.lam[1] >= pair.lam[2]
            # orthonormal, right-handed
            assert np.abs(pair.q.T @ pair.q - np.eye(3)).max() < 1e-10
            assert np.linalg.det(pair.q) > 0
            # reconstruction
            scale = max(1.0, np.abs(m).max())
            assert np.abs(pair.reconstruct() - m).max() < 1e-9 * scale
            # eigenvalues against LAPACK
            ref = np.sort(np.linalg.eigvalsh(m))[::-1]
            assert np.allclose(pair.lam, ref, atol=1e-9 * scale)

    def test_deterministic_signs(self):
        rng = np.random.default_rng(3)
        m = random_spd(rng)
        p1, p2 = sym_eig(m), sym_eig(m.copy())
        assert np.array_equal(p1.q, p2.q)
        assert np.array_equal(p1.lam, p2.lam)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            sym_eig(np.full((3, 3), np.inf))


class TestLogExp:
    def test_log_identity_is_zero(self):
        assert np.allclose(spd_log(np.eye(3)).mat(), 0.0)

    def test_exp_diagonal(self):
        out = spd_exp(np.diag([1.0, 0.0, -1.0]))
        assert np.allclose(out.mat(), np.diag([math.e, 1.0, 1.0 / math.e]), atol=1e-12)

    def test_round_trip_random(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            k = random_spd(rng)
            back = spd_exp(spd_log(k)).mat()
            assert np.abs(back - k).max() < 1e-8 * np.abs(k).max()

    def test_log_rejects_non_spd(self):
        with pytest.raises(NotSpdError):
            spd_log(np.diag([1.0, 1.0, -1.0]))


class TestLogEuclideanMean:
    def test_single_element(self):
        k = np.array([[2.0, 0.5, 0], [0.5, 1.0, 0], [0, 0, 3.0]])
        assert np.allclose(log_euclidean_mean([k]).mat(), k, atol=1e-12)

    def test_commuting_diagonal(self):
        out = log_euclidean_mean([np.eye(3), math.e**2 * np.eye(3)])
        assert np.allclose(out.mat(), math.e * np.eye(3), atol=1e-12)

    def test_against_extended_precision_oracle(self):
        # Oracle: per-matrix log via mpmath symmetric eigendecomposition at
        # 50 digits, averaged entrywise, exponentiated back.
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 50

        def mp_logm(a):
            e, v = mpmath.eigsy(mpmath.matrix(a.tolist()))
            d = mpmath.diag([mpmath.log(x) for x in e])
            return v * d * v.T

        def mp_expm(a):
            e, v = mpmath.eigsy(a)
            d = mpmath.diag([mpmath.exp(x) for x in e])
            return v * d * v.T

        rng = np.random.default_rng(23)
        mats = [(r * np.array([4.0, 1.0, 1.0])) @ r.T
                for r in (random_rotation(rng) for _ in range(8))]
        acc = mpmath.zeros(3)
        for m in mats:
            acc += mp_logm(m)
        expected = np.array(mp_expm(acc / len(mats)).tolist(), dtype=float)
        got = log_euclidean_mean(mats).mat()
        assert np.abs(got - expected).max() < 1e-9

    def test_determinant_is_geometric_mean(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            mats = [random_spd(rng, 1e-2, 1e2) for _ in range(rng.integers(2, 9))]
            det_mean = np.linalg.det(log_euclidean_mean(mats).mat())
            geo = math.exp(np.mean([math.log(np.linalg.det(m)) for m in mats]))
            assert abs(det_mean - geo) < 1e-9 * geo

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            log_euclidean_mean([])


class TestCholeskyCodec:
    def test_identity(self):
        p = cholesky_encode(np.eye(3))
        assert np.allclose(p.as_array(), 0.0, atol=1e-15)

    def test_diagonal(self):
        p = cholesky_encode(np.diag([4.0, 1.0, 0.25]))
        assert np.allclose(
            p.as_array(),
            [math.log(2), 0.0, -math.log(2), 0.0, 0.0, 0.0],
            atol=1e-14,
        )

    def test_hand_cholesky(self):
        # L = [[sqrt2,0,0],[1/sqrt2, sqrt(3/2), 0],[0,0,1]], checked by
        # multiplying L L^T back out by hand.
        p = cholesky_encode([[2.0, 1, 0], [1, 2, 0], [0, 0, 1]])
        assert abs(p.a1 - 0.5 * math.log(2)) < 1e-14
        assert abs(p.l21 - 1 / math.sqrt(2)) < 1e-14
        assert abs(p.a2 - 0.5 * math.log(1.5)) < 1e-14
        assert abs(p.a3) < 1e-14
        assert abs(p.l31) < 1e-14 and abs(p.l32) < 1e-14

    def test_round_trip(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            k = random_spd(rng, 1e-2, 1e2)
            back = cholesky_decode(cholesky_encode(k)).mat()
            assert np.abs(back - k).max() < 1e-10 * max(1.0, np.abs(k).max())

    def test_decode_total_on_random_params(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            p = CholeskyParams.from_array(rng.uniform(-4, 4, size=6))
            k = cholesky_decode(p)  # construction certifies SPD
            assert sym_eig(k).lam.min() > 0

    def test_encode_rejects_non_spd(self):
        with pytest.raises(NotSpdError):
            cholesky_encode(np.diag([1.0, -2.0, 3.0]))


class TestSpdEma:
    def test_alpha_one_passthrough(self):
        rng = np.random.default_rng(19)
        k = random_spd(rng)
        out = spd_ema(np.eye(3), k, alpha=1.0, eps=0.0)
        assert np.abs(out.mat() - k).max() < 1e-9 * np.abs(k).max()

    def test_scalar_log_blend(self):
        # exp(0.8*log(1) + 0.2*log(e^5)) = e, per-eigenvalue.
        out = spd_ema(np.eye(3), math.e**5 * np.eye(3), alpha=0.2, eps=0.0)
        assert np.allclose(out.mat(), math.e * np.eye(3), atol=1e-9)

    def test_geometric_decay_to_constant_target(self):
        rng = np.random.default_rng(29)
        raw = random_spd(rng, 1.0, 10.0)
        target = spd_log(raw).mat()
        k = random_spd(rng, 1.0, 10.0)
        prev_dist = np.linalg.norm(spd_log(k).mat() - target)
        for _ in range(12):
            k = spd_ema(k, raw, alpha=0.2, eps=0.0)
            dist = np.linalg.norm(spd_log(k).mat() - target)
            assert abs(dist - 0.8 * prev_dist) < 1e-9 * max(1.0, prev_dist)
            prev_dist = dist

    def test_commuting_inputs_interpolate_eigenvalues_geometrically(self):
        rng = np.random.default_rng(31)
        q = random_rotation(rng)
        lp, lr = np.array([4.0, 2.0, 0.5]), np.array([1.0, 8.0, 2.0])
        prev = (q * lp) @ q.T
        raw = (q * lr) @ q.T
        out = spd_ema(prev, raw, alpha=0.3, eps=0.0)
        expected = (q * (lp**0.7 * lr**0.3)) @ q.T
        assert np.abs(out.mat() - expected).max() < 1e-9

    def test_result_symmetric_spd(self):
        rng = np.random.default_rng(37)
        out = spd_ema(random_spd(rng), random_spd(rng), alpha=0.2, eps=1e-6)
        m = out.mat()
        assert np.abs(m - m.T).max() < 1e-9
        assert sym_eig(m).lam.min() > 0

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            spd_ema(np.eye(3), np.eye(3), alpha=0.0)
        with pytest.raises(ValueError):
            spd_ema(np.eye(3), np.eye(3), alpha=1.5)
