import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esnrl.errors import InitError, ParameterError
from esnrl.linalg import RngStream, spectral_norm
from esnrl.reservoir import (
    ReservoirParams,
    StructuredInitSpec,
    feature_directions,
    init_standard,
    init_structured,
    run,
    shift_blocks,
    step,
    zero_state,
)


def _loop_step(A, C, zeta, x, z):
    """Element-wise recomputation of relu(Ax + Cz + zeta)."""
    n = A.shape[0]
    out = np.empty(n)
    for i in range(n):
        s = zeta[i]
        for j in range(n):
            s += A[i, j] * x[j]
        for j in range(C.shape[1]):
            s += C[i, j] * z[j]
        out[i] = s if s > 0 else 0.0
    return out


class TestParams:
    def test_shapes_validated(self):
        with pytest.raises(ParameterError):
            ReservoirParams(np.eye(3), np.ones((2, 1)), np.zeros(3))
        with pytest.raises(ParameterError):
            ReservoirParams(np.ones((2, 3)), np.ones((2, 1)), np.zeros(2))
        with pytest.raises(ParameterError):
            ReservoirParams(np.eye(2), np.ones((2, 1)), np.zeros(3))

    def test_non_finite_rejected(self):
        with pytest.raises(ParameterError):
            ReservoirParams(np.array([[np.inf]]), np.ones((1, 1)), np.zeros(1))

    def test_arrays_read_only(self):
        p = ReservoirParams(np.eye(2), np.ones((2, 1)), np.zeros(2))
        with pytest.raises(ValueError):
            p.A[0, 0] = 5.0

    def test_json_roundtrip(self):
        p = init_standard(7, 2, 0.05, 0.9, RngStream(3))
        q = ReservoirParams.from_json(p.to_json())
        assert p == q
        assert q.activation == "relu"

    def test_json_shape_mismatch(self):
        doc = init_standard(3, 1, 0.05, 0.9, RngStream(3)).to_dict()
        doc["n"] = 4
        with pytest.raises(ParameterError):
            ReservoirParams.from_dict(doc)


class TestInitStandard:
    def test_spectral_target(self):
        p = init_standard(300, 2, 0.05, 1.0, RngStream(0))
        assert spectral_norm(p.A) == pytest.approx(1.0, rel=1e-8)
        assert (p.n, p.d) == (300, 2)

    def test_ranges(self):
        p = init_standard(5, 1, 0.05, 0.5, RngStream(1))
        assert np.all(np.abs(p.C) <= 0.05) and np.all(np.abs(p.zeta) <= 0.05)

    def test_deterministic(self):
        assert init_standard(20, 2, 0.05, 0.9, RngStream(4)) == init_standard(20, 2, 0.05, 0.9, RngStream(4))

    @pytest.mark.parametrize("kw", [dict(spectral_target=0.0), dict(spectral_target=-1.0),
                                    dict(weight_range=0.0), dict(n=0), dict(d=0)])
    def test_bad_parameters(self, kw):
        args = dict(n=4, d=1, weight_range=0.05, spectral_target=1.0)
        args.update(kw)
        with pytest.raises(ParameterError):
            init_standard(rng=RngStream(0), **args)

    def test_zero_draw(self, monkeypatch):
        import esnrl.reservoir as res

        monkeypatch.setattr(res, "sample_uniform", lambda rng, lo, hi, count: np.zeros(count))
        with pytest.raises(InitError):
            res.init_standard(3, 1, 0.05, 1.0, RngStream(0))


class TestInitStructured:
    def test_dimension(self):
        spec = StructuredInitSpec(N=3, T0=2, R=1.0, M_T0=1.0, d=1)
        p = init_structured(spec, RngStream(0))
        assert p.n == spec.n == 12

    def test_block_identities(self):
        spec = StructuredInitSpec(N=4, T0=3, R=0.7, M_T0=2.0, d=2)
        p = init_structured(spec, RngStream(2))
        h = p.n // 2
        Ab = p.A[:h, :h]
        assert np.array_equal(p.A[:h, h:], -Ab)
        assert np.array_equal(p.A[h:, :h], -Ab)
        assert np.array_equal(p.A[h:, h:], Ab)
        assert np.array_equal(p.C[h:], -p.C[:h])
        assert np.array_equal(p.zeta[h:], -p.zeta[:h])
        m = spec.memory_dim
        S, c = shift_blocks(spec.d, spec.T0)
        assert np.array_equal(Ab[:m, :m], S)
        assert np.array_equal(Ab[:, m:], np.zeros((h, spec.N)))
        assert np.array_equal(p.C[:m], c)
        assert np.array_equal(p.zeta[:m], np.zeros(m))
        a = feature_directions(p, spec)
        assert np.allclose(Ab[m:, :m], a @ S)

    def test_ball_membership_and_bias_range(self):
        spec = StructuredInitSpec(N=50, T0=4, R=0.3, M_T0=5.0, d=1)
        p = init_structured(spec, RngStream(5))
        a = feature_directions(p, spec)
        assert np.all(np.linalg.norm(a, axis=1) <= spec.R)
        bound = max(spec.M_T0 * spec.R, 1.0)
        assert np.all(np.abs(p.zeta[spec.memory_dim: spec.memory_dim + spec.N]) <= bound)

    @pytest.mark.parametrize("kw", [dict(N=0), dict(T0=-1), dict(R=0.0), dict(M_T0=-1.0), dict(d=0)])
    def test_spec_validation(self, kw):
        args = dict(N=2, T0=1, R=1.0, M_T0=1.0, d=1)
        args.update(kw)
        with pytest.raises(ParameterError):
            StructuredInitSpec(**args)


def delay_line_holds(seed: int) -> bool:
    """Top-minus-bottom state difference replays the last T0+1 inputs exactly."""
    gen = np.random.default_rng(seed)
    d, T0, N = int(gen.integers(1, 3)), int(gen.integers(0, 5)), int(gen.integers(1, 8))
    spec = StructuredInitSpec(N, T0, float(gen.uniform(0.1, 2.0)), float(gen.uniform(0.5, 3.0)), d)
    p = init_structured(spec, RngStream(seed))
    Z = gen.uniform(-1, 1, (T0 + 12, d))
    X = run(p, zero_state(p), Z).states
    h, m = p.n // 2, spec.memory_dim
    for k in range(T0 + 2, X.shape[0]):
        delta = X[k, :h] - X[k, h:]
        window = np.concatenate([Z[k - 1 - j] for j in range(T0 + 1)])
        if not np.array_equal(delta[:m], window):
            return False
    return True


class TestDelayLine:
    @pytest.mark.parametrize("seed", range(10))
    def test_delay_line(self, seed):
        assert delay_line_holds(seed)

    def test_linear_difference_law(self):
        spec = StructuredInitSpec(N=5, T0=2, R=1.0, M_T0=1.0, d=2)
        p = init_structured(spec, RngStream(8))
        h = p.n // 2
        Ab, Cb, zb = p.A[:h, :h], p.C[:h], p.zeta[:h]
        Z = np.random.default_rng(8).uniform(-1, 1, (30, 2))
        X = run(p, zero_state(p), Z).states
        D = X[:, :h] - X[:, h:]
        for k in range(Z.shape[0]):
            np.testing.assert_allclose(D[k + 1], Ab @ D[k] + Cb @ Z[k] + zb, atol=1e-12)


class TestStep:
    def test_relu_clamps(self):
        p = ReservoirParams(np.zeros((2, 2)), np.eye(2), np.zeros(2))
        assert np.array_equal(step(p, np.zeros(2), [1.0, -2.0]), [1.0, 0.0])

    def test_bias_only(self):
        p = ReservoirParams(np.zeros((2, 2)), np.zeros((2, 2)), np.array([0.3, -0.3]))
        assert np.array_equal(step(p, np.array([5.0, 1.0]), [7.0, 2.0]), [0.3, 0.0])

    def test_matches_elementwise_oracle(self):
        p = init_standard(15, 3, 0.05, 0.9, RngStream(11))
        gen = np.random.default_rng(0)
        x, z = np.abs(gen.standard_normal(15)), gen.standard_normal(3)
        np.testing.assert_allclose(step(p, x, z), _loop_step(p.A, p.C, p.zeta, x, z),
                                   rtol=1e-14, atol=1e-15)

    def test_dimension_mismatch(self):
        p = init_standard(4, 2, 0.05, 0.9, RngStream(0))
        with pytest.raises(ParameterError):
            step(p, np.zeros(3), np.zeros(2))
        with pytest.raises(ParameterError):
            step(p, np.zeros(4), np.zeros(3))


class TestRun:
    def test_empty_inputs(self):
        p = init_standard(4, 2, 0.05, 0.9, RngStream(0))
        traj = run(p, np.ones(4), np.zeros((0, 2)))
        assert len(traj) == 1 and np.array_equal(traj[0], np.ones(4))

    def test_consistent_with_step(self):
        p = init_standard(6, 2, 0.05, 0.9, RngStream(1))
        Z = np.random.default_rng(1).standard_normal((3, 2))
        traj = run(p, zero_state(p), Z)
        assert len(traj) == 4
        for k in range(3):
            np.testing.assert_allclose(traj[k + 1], step(p, traj[k], Z[k]), rtol=1e-13, atol=1e-15)

    def test_non_finite_input(self):
        p = init_standard(4, 1, 0.05, 0.9, RngStream(0))
        with pytest.raises(ParameterError):
            run(p, zero_state(p), [[np.nan]])

    @given(seed=st.integers(0, 2**32), steps=st.integers(1, 40))
    @settings(max_examples=30, deadline=None)
    def test_non_negative(self, seed, steps):
        p = init_standard(10, 2, 0.5, 1.2, RngStream(seed))
        Z = np.random.default_rng(seed).standard_normal((steps, 2))
        assert run(p, zero_state(p), Z).states.min() >= 0.0


def fading_memory_holds(target: float, seed: int) -> bool:
    p = init_standard(40, 2, 0.05, target, RngStream(seed))
    gen = np.random.default_rng(seed)
    Z = gen.uniform(-1, 1, (60, 2))
    x0, x1 = np.abs(gen.standard_normal(40)), np.abs(gen.standard_normal(40))
    a, b = run(p, x0, Z).states, run(p, x1, Z).states
    gap = np.linalg.norm(a - b, axis=1)
    bound = target ** np.arange(gap.size) * np.linalg.norm(x0 - x1)
    return bool(np.all(gap <= bound * (1 + 1e-12) + 1e-15))


class TestFadingMemory:
    @pytest.mark.parametrize("target", [0.5, 0.9])
    @pytest.mark.parametrize("seed", range(5))
    def test_contraction(self, target, seed):
        assert fading_memory_holds(target, seed)

    def test_boundedness(self):
        rho, M = 0.8, 1.0
        p = init_standard(30, 2, 0.05, rho, RngStream(2))
        Z = np.random.default_rng(2).uniform(-1, 1, (200, 2))
        Z /= np.maximum(1.0, np.linalg.norm(Z, axis=1))[:, None]
        x0 = np.full(30, 3.0)
        X = run(p, x0, Z).states
        cap = (spectral_norm_rect(p.C) * M + np.linalg.norm(p.zeta)) / (1 - rho)
        k = np.arange(X.shape[0])
        assert np.all(np.linalg.norm(X, axis=1) <= cap + rho**k * np.linalg.norm(x0) + 1e-12)


def spectral_norm_rect(M):
    return float(np.linalg.svd(M, compute_uv=False)[0])
