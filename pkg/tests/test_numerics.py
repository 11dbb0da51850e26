import numpy as np
import pytest

from cimtrain.numerics import (Quantizer, derive_rng, hadamard, make_rng, matmul,
                               outer, quantize)


def loop_matmul(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for kk in range(k):
                s += a[i, kk] * b[kk, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(a, np.eye(2)), a)

    def test_hand_checked_1x1(self):
        out = matmul([[1.0, 2.0]], [[3.0], [4.0]])
        assert out.shape == (1, 1) and out[0, 0] == 11.0

    def test_matches_triple_loop_exactly(self):
        rng = make_rng(7)
        a = rng.standard_normal((7, 5))
        b = rng.standard_normal((5, 3))
        assert np.array_equal(matmul(a, b), loop_matmul(a, b))

    def test_exact_on_all_small_shapes(self):
        rng = make_rng(11)
        for m in range(1, 9):
            for k in range(1, 9):
                for n in range(1, 9):
                    a = rng.standard_normal((m, k))
                    b = rng.standard_normal((k, n))
                    assert np.array_equal(matmul(a, b), loop_matmul(a, b))

    def test_associativity_with_identity(self):
        rng = make_rng(3)
        a = rng.standard_normal((4, 4))
        b = rng.standard_normal((4, 4))
        ab = matmul(a, b)
        assert np.array_equal(matmul(matmul(a, np.eye(4)), b), ab)
        assert np.array_equal(matmul(a, matmul(np.eye(4), b)), ab)

    def test_distributivity_on_exact_values(self):
        # small integers are exact in float64, so distributivity holds bitwise
        rng = make_rng(5)
        a = rng.integers(-8, 9, size=(5, 6)).astype(float)
        b = rng.integers(-8, 9, size=(6, 4)).astype(float)
        c = rng.integers(-8, 9, size=(6, 4)).astype(float)
        assert np.array_equal(matmul(a, b + c), matmul(a, b) + matmul(a, c))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            matmul(np.array([[np.inf, 1.0]]), np.ones((2, 1)))


class TestHadamard:
    def test_ones_and_zeros(self):
        rng = make_rng(1)
        a = rng.standard_normal((3, 4))
        assert np.array_equal(hadamard(a, np.ones_like(a)), a)
        assert np.array_equal(hadamard(a, np.zeros_like(a)), np.zeros_like(a))

    def test_hand_checked(self):
        out = hadamard([[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]])
        assert np.array_equal(out, [[5.0, 12.0], [21.0, 32.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            hadamard(np.ones((2, 2)), np.ones((2, 3)))


class TestOuter:
    def test_zero_vector(self):
        assert np.array_equal(outer(np.zeros(3), np.ones(4)), np.zeros((3, 4)))

    def test_basis_vectors(self):
        u = np.zeros(3)
        u[1] = 1.0
        v = np.zeros(4)
        v[2] = 1.0
        out = outer(u, v)
        assert out[1, 2] == 1.0 and np.sum(out) == 1.0

    def test_matches_loops(self):
        rng = make_rng(2)
        u = rng.standard_normal(5)
        v = rng.standard_normal(7)
        expect = np.array([[ui * vj for vj in v] for ui in u])
        assert np.array_equal(outer(u, v), expect)

    def test_accepts_column_matrices(self):
        out = outer(np.array([[2.0], [3.0]]), np.array([[4.0]]))
        assert np.array_equal(out, [[8.0], [12.0]])


class TestQuantizer:
    def test_fine_grid_error_bound(self):
        q = Quantizer(bits=24, range=1.0)
        rng = make_rng(4)
        x = rng.uniform(-1, 1, size=1000)
        assert np.max(np.abs(quantize(x, q) - x)) <= 1.0 / 2**23

    def test_one_bit_grid(self):
        q = Quantizer(bits=1, range=1.0)
        assert quantize(np.array([0.3]), q)[0] == 1.0
        assert quantize(np.array([-0.3]), q)[0] == -1.0
        out = quantize(np.array([-2.0, 2.0]), q)
        assert set(out.tolist()) <= {-1.0, 1.0}

    def test_stochastic_mean(self):
        # range 1.75, 3 bits -> step 0.5, so 0.25 sits between levels 0 and 0.5
        q = Quantizer(bits=3, range=1.75, mode="stochastic")
        rng = make_rng(9)
        draws = quantize(np.full(10**5, 0.25), q, rng)
        assert set(np.unique(draws).tolist()) == {0.0, 0.5}
        sigma_mean = 0.25 / np.sqrt(10**5)
        assert abs(draws.mean() - 0.25) <= 3 * sigma_mean

    def test_idempotent_nearest(self):
        q = Quantizer(bits=5, range=2.0)
        rng = make_rng(6)
        once = quantize(rng.uniform(-3, 3, size=500), q)
        assert np.array_equal(quantize(once, q), once)

    def test_monotone(self):
        q = Quantizer(bits=4, range=1.0)
        x = np.linspace(-1.5, 1.5, 2001)
        out = quantize(x, q)
        assert np.all(np.diff(out) >= 0)

    def test_error_halves_per_bit(self):
        x = np.linspace(-1, 1, 40001)
        prev = None
        for bits in range(2, 10):
            err = np.max(np.abs(quantize(x, Quantizer(bits=bits, range=1.0)) - x))
            if prev is not None:
                assert err <= prev / 2 * 1.001
            prev = err

    def test_ties_round_to_even_level(self):
        q = Quantizer(bits=3, range=1.75)  # step 0.5
        # 0.25 is equidistant from levels 0 (k=0, even) and 0.5 (k=1, odd)
        assert quantize(np.array([0.25]), q)[0] == 0.0
        # 0.75 sits between k=1 and k=2 -> even k=2
        assert quantize(np.array([0.75]), q)[0] == 1.0

    def test_levels_cover_symmetric_zero_inclusive_grid(self):
        q = Quantizer(bits=3, range=1.0)
        lv = q.levels
        assert len(lv) == 2**3 - 1
        assert 0.0 in lv.tolist()
        assert np.allclose(lv, -lv[::-1])

    def test_invalid_parameters(self):
        with pytest.raises(ValueError, match="range"):
            Quantizer(bits=4, range=0.0)
        with pytest.raises(ValueError, match="bits"):
            Quantizer(bits=0, range=1.0)
        with pytest.raises(ValueError, match="rng"):
            quantize(np.zeros(3), Quantizer(bits=2, range=1.0, mode="stochastic"))


class TestRng:
    def test_same_seed_same_stream(self):
        a = make_rng(42).standard_normal(100)
        b = make_rng(42).standard_normal(100)
        assert np.array_equal(a, b)

    def test_derived_streams_are_distinct_and_stable(self):
        a1 = derive_rng(42, "init").standard_normal(10)
        a2 = derive_rng(42, "init").standard_normal(10)
        b = derive_rng(42, "shuffle").standard_normal(10)
        assert np.array_equal(a1, a2)
        assert not np.array_equal(a1, b)
