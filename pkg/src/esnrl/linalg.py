"""Seeded sampling and the regularised least-squares solver."""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, SingularityError

__all__ = [
    "RngStream",
    "sample_uniform",
    "sample_gaussian",
    "sample_uniform_ball",
    "ridge_solve",
    "ridge_objective",
    "spectral_norm",
]

_U64 = (1 << 64) - 1


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream)``.

    Backed by a counter-based bit generator. Distinct ``stream`` ids give
    statistically independent streams for the same seed, so every
    consumer in a pipeline can own its own stream.
    """

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed)
        if not 0 <= seed <= _U64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.stream = int(stream)
        ss = np.random.SeedSequence([seed, self.stream])
        self._gen = np.random.Generator(np.random.Philox(ss))

    def substream(self, stream: int) -> "RngStream":
        """Fresh stream sharing this seed; independent of the parent's state."""
        return RngStream(self.seed, stream)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def get_state(self) -> dict:
        return self._gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self._gen.bit_generator.state = state

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def _check_count(count):
    count = int(count)
    if count < 0:
        raise ParameterError(f"count must be non-negative, got {count}")
    return count


def sample_uniform(rng: RngStream, lo: float, hi: float, count: int) -> np.ndarray:
    """``count`` i.i.d. draws from U[lo, hi)."""
    count = _check_count(count)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ParameterError("interval bounds must be finite")
    if lo > hi:
        raise ParameterError(f"lo={lo} exceeds hi={hi}")
    if lo == hi:
        return np.full(count, float(lo))
    return rng.generator.uniform(lo, hi, count)


def sample_gaussian(rng: RngStream, mean: float, std: float, count: int) -> np.ndarray:
    """``count`` i.i.d. draws from N(mean, std**2)."""
    count = _check_count(count)
    if not std >= 0:
        raise ParameterError(f"std must be non-negative, got {std}")
    if std == 0:
        return np.full(count, float(mean))
    return rng.generator.normal(mean, std, count)


def sample_uniform_ball(rng: RngStream, dim: int, radius: float) -> np.ndarray:
    """One draw from the uniform law on the closed ``dim``-ball.

    Direction is a normalised Gaussian vector and the radius follows the
    inverse CDF ``radius * U**(1/dim)``, which avoids the exponential
    rejection rate of box sampling in high dimension.
    """
    dim = int(dim)
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    if not radius >= 0:
        raise ParameterError(f"radius must be non-negative, got {radius}")
    if radius == 0:
        return np.zeros(dim)
    gen = rng.generator
    direction = gen.standard_normal(dim)
    norm = np.linalg.norm(direction)
    while norm == 0.0:  # probability zero, but keep the draw well defined
        direction = gen.standard_normal(dim)
        norm = np.linalg.norm(direction)
    r = radius * gen.random() ** (1.0 / dim)
    out = direction * (r / norm)
    # guard the rounding of r/norm * norm against landing just outside
    n_out = np.linalg.norm(out)
    if n_out > radius:
        out *= radius / n_out
    return out


def _as_design(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ParameterError(f"design matrix must be 2-D and non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ParameterError("design matrix has non-finite entries")
    if y is None:
        return X
    y = np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise ParameterError(f"target length {y.shape} does not match {X.shape[0]} rows")
    if not np.all(np.isfinite(y)):
        raise ParameterError("targets have non-finite entries")
    return X, y


def ridge_solve(X, y, lam: float) -> np.ndarray:
    """Minimiser of ``sum_k (W @ X[k] - y[k])**2 + lam * ||W||**2``.

    Rows of ``X`` are samples. Solved through the thin SVD
    ``X = U S V^T`` as ``W = V diag(s / (s^2 + lam)) U^T y``; the Gram
    matrix is never formed or inverted.

    Raises :class:`SingularityError` when ``lam == 0`` and ``X`` is
    column-rank deficient.
    """
    X, y = _as_design(X, y)
    if not (np.isfinite(lam) and lam >= 0):
        raise ParameterError(f"lambda must be finite and non-negative, got {lam}")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    n = X.shape[1]
    if lam == 0:
        tol = max(X.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        if s.size < n or s[-1] <= tol:
            raise SingularityError("design matrix is column-rank deficient and lambda = 0")
        filt = 1.0 / s
    else:
        filt = s / (s * s + lam)
    return Vt.T @ (filt * (U.T @ y))


def ridge_objective(X, y, W, lam: float) -> float:
    r = np.asarray(X) @ np.asarray(W) - np.asarray(y)
    return float(r @ r + lam * (np.asarray(W) @ np.asarray(W)))


def spectral_norm(M) -> float:
    """Largest singular value of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParameterError(f"matrix must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ParameterError("matrix has non-finite entries")
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])
