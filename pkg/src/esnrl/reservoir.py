"""Echo State Network reservoirs with ReLU activation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InitError, ParameterError
from .linalg import RngStream, sample_uniform, sample_uniform_ball, spectral_norm

__all__ = [
    "ReservoirParams",
    "ReservoirTrajectory",
    "StructuredInitSpec",
    "init_standard",
    "init_structured",
    "relu",
    "step",
    "run",
    "zero_state",
    "shift_blocks",
    "feature_directions",
]

ACTIVATION = "relu"


def relu(u):
    return np.maximum(u, 0.0)


def _finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} has non-finite entries")


@dataclass(frozen=True, eq=False)
class ReservoirParams:
    """Fixed reservoir weights ``(A, C, zeta)`` defining ``x' = relu(Ax + Cz + zeta)``."""

    A: np.ndarray
    C: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=float)
        C = np.ascontiguousarray(self.C, dtype=float)
        zeta = np.ascontiguousarray(self.zeta, dtype=float)
        if C.ndim == 1:
            C = C.reshape(-1, 1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ParameterError(f"A must be square and non-empty, got {A.shape}")
        n = A.shape[0]
        if C.ndim != 2 or C.shape[0] != n or C.shape[1] < 1:
            raise ParameterError(f"C must be {n}xd, got {C.shape}")
        if zeta.shape != (n,):
            raise ParameterError(f"zeta must have length {n}, got {zeta.shape}")
        for name, arr in (("A", A), ("C", C), ("zeta", zeta)):
            _finite(name, arr)
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "zeta", zeta)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.C.shape[1]

    @property
    def activation(self) -> str:
        return ACTIVATION

    def __eq__(self, other):
        if not isinstance(other, ReservoirParams):
            return NotImplemented
        return (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.C, other.C)
            and np.array_equal(self.zeta, other.zeta)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "activation": ACTIVATION,
            "n": self.n,
            "d": self.d,
            "A": self.A.ravel().tolist(),
            "C": self.C.ravel().tolist(),
            "zeta": self.zeta.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ReservoirParams":
        if doc.get("activation", ACTIVATION) != ACTIVATION:
            raise ParameterError(f"unsupported activation {doc.get('activation')!r}")
        n, d = int(doc["n"]), int(doc["d"])
        try:
            A = np.asarray(doc["A"], dtype=float).reshape(n, n)
            C = np.asarray(doc["C"], dtype=float).reshape(n, d)
        except ValueError as exc:
            raise ParameterError(f"weight arrays do not match header n={n}, d={d}") from exc
        return cls(A, C, np.asarray(doc["zeta"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ReservoirParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class StructuredInitSpec:
    N: int
    T0: int
    R: float
    M_T0: float
    d: int

    def __post_init__(self):
        if self.N < 1 or self.T0 < 0 or self.d < 1:
            raise ParameterError(f"need N >= 1, T0 >= 0, d >= 1; got {self}")
        if not (self.R > 0 and self.M_T0 > 0):
            raise ParameterError(f"need R > 0 and M_T0 > 0; got {self}")

    @property
    def memory_dim(self) -> int:
        return self.d * (self.T0 + 1)

    @property
    def n(self) -> int:
        return 2 * (self.memory_dim + self.N)


@dataclass(frozen=True, eq=False)
class ReservoirTrajectory:
    """States ``x_0..x_L`` (rows) driven by inputs ``z_0..z_{L-1}``."""

    states: np.ndarray
    inputs: np.ndarray = field(default=None)

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, k):
        return self.states[k]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def init_standard(n: int, d: int, weight_range: float, spectral_target: float,
                  rng: RngStream) -> ReservoirParams:
    """I.i.d. uniform weights with ``A`` rescaled to a prescribed 2-norm."""
    if n < 1 or d < 1:
        raise ParameterError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if not weight_range > 0:
        raise ParameterError(f"weight_range must be positive, got {weight_range}")
    if not spectral_target > 0:
        raise ParameterError(f"spectral_target must be positive, got {spectral_target}")
    w = weight_range
    A = sample_uniform(rng, -w, w, n * n).reshape(n, n)
    C = sample_uniform(rng, -w, w, n * d).reshape(n, d)
    zeta = sample_uniform(rng, -w, w, n)
    norm = spectral_norm(A)
    if norm == 0.0:
        raise InitError("reservoir matrix draw is identically zero")
    return ReservoirParams(A * (spectral_target / norm), C, zeta)


def shift_blocks(d: int, T0: int):
    """Delay-line blocks ``S`` (shift down by ``d``) and ``c`` (inject into top)."""
    m = d * (T0 + 1)
    S = np.zeros((m, m))
    S[d:, : m - d] = np.eye(m - d)
    c = np.zeros((m, d))
    c[:d] = np.eye(d)
    return S, c


def init_structured(spec: StructuredInitSpec, rng: RngStream) -> ReservoirParams:
    """Doubled delay-line reservoir with random ReLU features.

    The top and bottom halves of the state are driven by ``+u`` and ``-u``,
    so their difference ``relu(u) - relu(-u) = u`` evolves linearly: the
    first ``d (T0 + 1)`` coordinates of that difference carry the last
    ``T0 + 1`` inputs and the remaining ``N`` carry ``a_i . window + zeta_i``.
    """
    m, N = spec.memory_dim, spec.N
    a = np.vstack([sample_uniform_ball(rng, m, spec.R) for _ in range(N)])
    bound = max(spec.M_T0 * spec.R, 1.0)
    zs = sample_uniform(rng, -bound, bound, N)

    S, c = shift_blocks(spec.d, spec.T0)
    half = m + N
    A_bar = np.zeros((half, half))
    A_bar[:m, :m] = S
    A_bar[m:, :m] = a @ S
    C_bar = np.vstack([c, a @ c])
    zeta_bar = np.concatenate([np.zeros(m), zs])

    A = np.block([[A_bar, -A_bar], [-A_bar, A_bar]])
    C = np.vstack([C_bar, -C_bar])
    zeta = np.concatenate([zeta_bar, -zeta_bar])
    return ReservoirParams(A, C, zeta)


def feature_directions(params: ReservoirParams, spec: StructuredInitSpec) -> np.ndarray:
    """Recover the ``N`` ball samples (rows) from a structured reservoir."""
    m, N, d = spec.memory_dim, spec.N, spec.d
    a = np.empty((N, m))
    a[:, :d] = params.C[m : m + N]
    a[:, d:] = params.A[m : m + N, : m - d]
    return a


def _check_state(params, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (params.n,):
        raise ParameterError(f"state must have length {params.n}, got {x.shape}")
    _finite("state", x)
    return x


def _check_inputs(params, inputs):
    Z = np.asarray(inputs, dtype=float)
    if Z.size == 0:
        return Z.reshape(0, params.d)
    if Z.ndim == 1:
        Z = Z.reshape(-1, params.d) if params.d > 1 else Z.reshape(-1, 1)
    if Z.ndim != 2 or Z.shape[1] != params.d:
        raise ParameterError(f"inputs must have {params.d} columns, got {Z.shape}")
    _finite("inputs", Z)
    return Z


def step(params: ReservoirParams, x, z) -> np.ndarray:
    """One reservoir update ``relu(A x + C z + zeta)``."""
    x = _check_state(params, x)
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape != (params.d,):
        raise ParameterError(f"input must have length {params.d}, got {z.shape}")
    _finite("input", z)
    return relu(params.A @ x + params.C @ z + params.zeta)


def run(params: ReservoirParams, x0, inputs) -> ReservoirTrajectory:
    """Drive the reservoir from ``x0``; returns ``len(inputs) + 1`` states."""
    x0 = _check_state(params, x0)
    Z = _check_inputs(params, inputs)
    U = np.ascontiguousarray(Z @ params.C.T + params.zeta)
    X = kernels.relu_run(params.A, U, np.ascontiguousarray(x0))
    return ReservoirTrajectory(X, Z)


def zero_state(params: ReservoirParams) -> np.ndarray:
    return np.zeros(params.n)
