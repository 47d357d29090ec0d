"""Linear value readouts on reservoir states.

A readout ``W`` scores a reservoir state by ``W @ x``. It is fitted
offline by ridge regression on Bellman differences ``x_k - gamma x_{k+1}``
against the rewards, improved greedily by scoring each candidate action
through one reservoir step, and optionally tracked online with a
stochastic temporal-difference update.

Reward alignment
----------------
A transition ``(obs_k, a_k) -> reward_k`` is fed to the reservoir as
input ``z_k`` and produces ``x_{k+1}``. With ``alignment="post"`` (the
default) ``reward_k`` is attached to the state it produced, so the
regression rows are ``x_{k+1} - gamma x_{k+2}`` against ``reward_k`` and a
greedy score ``W @ x_{k+1}(a)`` includes the immediate reward of ``a``.
``alignment="pre"`` pairs ``reward_k`` with ``x_k`` instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError
from .linalg import ridge_solve
from .reservoir import ReservoirParams, ReservoirTrajectory, run, step, zero_state

__all__ = [
    "ValueModel",
    "StepSizeSchedule",
    "AutocorrDiagnostics",
    "GreedyPolicy",
    "build_bellman_design",
    "fit_readout",
    "fit_offline",
    "value_of",
    "greedy_action",
    "online_update",
    "bellman_residual",
    "autocorr_diagnostics",
    "attached_rewards",
]

ALIGNMENTS = ("post", "pre")


def _check_gamma(gamma):
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"discount must lie in [0, 1), got {gamma}")


def _check_alignment(alignment):
    if alignment not in ALIGNMENTS:
        raise ParameterError(f"alignment must be one of {ALIGNMENTS}, got {alignment!r}")


@dataclass(frozen=True, eq=False)
class ValueModel:
    W: np.ndarray
    gamma: float
    lam: float
    alignment: str = "post"

    def __post_init__(self):
        W = np.ascontiguousarray(self.W, dtype=float).reshape(-1)
        if not np.all(np.isfinite(W)):
            raise ParameterError("readout has non-finite entries")
        _check_gamma(self.gamma)
        _check_alignment(self.alignment)
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.W.size

    def __eq__(self, other):
        if not isinstance(other, ValueModel):
            return NotImplemented
        return (np.array_equal(self.W, other.W) and self.gamma == other.gamma
                and self.lam == other.lam and self.alignment == other.alignment)

    __hash__ = None

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "gamma": self.gamma, "lambda": self.lam,
                "alignment": self.alignment}

    @classmethod
    def from_dict(cls, doc: dict) -> "ValueModel":
        return cls(np.asarray(doc["W"], dtype=float), float(doc["gamma"]),
                   float(doc["lambda"]), doc.get("alignment", "post"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ValueModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class StepSizeSchedule:
    """Robbins-Monro steps ``a / (b + k + 1)``."""

    a: float = 1.0
    b: float = 100.0

    def __post_init__(self):
        if not self.a > 0:
            raise ParameterError(f"step-size numerator must be positive, got {self.a}")
        if not self.b > -1:
            raise ParameterError(f"step-size offset must exceed -1, got {self.b}")

    def __call__(self, k: int) -> float:
        return self.a / (self.b + k + 1)

    def alphas(self, steps: int) -> np.ndarray:
        return self.a / (self.b + np.arange(steps) + 1.0)


# --------------------------------------------------------------------------
# offline fitting


def _states(traj) -> np.ndarray:
    X = traj.states if isinstance(traj, ReservoirTrajectory) else np.asarray(traj, dtype=float)
    if X.ndim != 2:
        raise ParameterError(f"states must be a 2-D array, got shape {X.shape}")
    return X


def build_bellman_design(states, rewards, gamma: float):
    """Rows ``x_k - gamma x_{k+1}`` paired with ``rewards[k]``.

    ``states`` holds one more row than ``rewards``.
    """
    _check_gamma(gamma)
    X = _states(states)
    r = np.asarray(rewards, dtype=float).reshape(-1)
    if X.shape[0] != r.size + 1:
        raise ParameterError(
            f"need len(states) == len(rewards) + 1, got {X.shape[0]} and {r.size}")
    if r.size == 0:
        raise ParameterError("need at least one transition")
    return X[:-1] - gamma * X[1:], r


def _aligned(states, rewards, washout, alignment):
    """States and rewards sliced according to the alignment, washout removed."""
    _check_alignment(alignment)
    X = _states(states)
    r = np.asarray(rewards, dtype=float).reshape(-1)
    if X.shape[0] != r.size + 1:
        raise ParameterError(
            f"trajectory has {X.shape[0]} states for {r.size} rewards; expected one more state")
    if alignment == "post":
        X, r = X[1:], r[:-1]
    washout = int(washout)
    if washout < 0:
        raise ParameterError(f"washout must be non-negative, got {washout}")
    if r.size - washout < 1:
        raise ParameterError(f"washout {washout} leaves no regression rows")
    return X[washout:], r[washout:]


def fit_readout(states, rewards, gamma: float, lam: float, washout: int = 0,
                alignment: str = "post") -> ValueModel:
    """Ridge-regress the readout on the Bellman design of a driven trajectory."""
    X, r = _aligned(states, rewards, washout, alignment)
    D, y = build_bellman_design(X, r, gamma)
    return ValueModel(ridge_solve(D, y, lam), gamma, lam, alignment)


def fit_offline(params: ReservoirParams, experience, gamma: float, lam: float,
                washout: int = 0, x0=None, alignment: str = "post") -> ValueModel:
    """Drive the reservoir with the recorded inputs, then fit the readout."""
    if experience.inputs.shape[1] != params.d:
        raise ParameterError(
            f"experience has {experience.inputs.shape[1]} input columns, reservoir expects {params.d}")
    traj = run(params, zero_state(params) if x0 is None else x0, experience.inputs)
    return fit_readout(traj, experience.rewards, gamma, lam, washout, alignment)


def bellman_residual(states, rewards, model: ValueModel, washout: int = 0) -> float:
    """Mean squared Bellman residual of ``model`` on the aligned trajectory."""
    X, r = _aligned(states, rewards, washout, model.alignment)
    D, y = build_bellman_design(X, r, model.gamma)
    res = D @ model.W - y
    return float(res @ res / res.size)


def value_of(model: ValueModel, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.n:
        raise ParameterError(f"state has length {x.size}, readout expects {model.n}")
    return float(model.W @ x)


# --------------------------------------------------------------------------
# greedy improvement


def _split_input(params: ReservoirParams, obs):
    obs = np.asarray(obs, dtype=float).reshape(-1)
    do = obs.size
    if not 0 < do < params.d:
        raise ParameterError(
            f"observation of length {do} leaves no action columns in a d={params.d} reservoir")
    return obs, params.C[:, :do], np.ascontiguousarray(params.C[:, do:])


def _candidates(candidates, da):
    cands = np.asarray(candidates, dtype=float)
    if cands.ndim == 1:
        cands = cands.reshape(-1, 1) if da == 1 else cands.reshape(1, -1)
    if cands.ndim != 2 or cands.shape[0] < 1 or cands.shape[1] != da:
        raise ParameterError(f"candidates must have shape (m, {da}) with m >= 1, got {cands.shape}")
    if not np.all(np.isfinite(cands)):
        raise ParameterError("candidates have non-finite entries")
    return np.ascontiguousarray(cands)


def candidate_scores(params: ReservoirParams, model: ValueModel, x, obs, candidates) -> np.ndarray:
    """``W @ relu(A x + C (obs, a) + zeta)`` for every candidate ``a``."""
    obs, c_obs, c_act = _split_input(params, obs)
    cands = _candidates(candidates, c_act.shape[1])
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != params.n or model.n != params.n:
        raise ParameterError("state, readout and reservoir sizes disagree")
    base = params.A @ x + c_obs @ obs + params.zeta
    return kernels.candidate_values(base, c_act, np.ascontiguousarray(model.W), cands)


def greedy_action(params: ReservoirParams, model: ValueModel, x, obs, candidates):
    """Best candidate and its score; ties go to the earliest candidate."""
    a, v, _ = _greedy(params, model, x, obs, candidates)
    return a, v


def _greedy(params, model, x, obs, candidates):
    scores = candidate_scores(params, model, x, obs, candidates)
    i = int(np.argmax(scores))
    cands = _candidates(candidates, params.d - np.asarray(obs).size)
    return cands[i].copy(), float(scores[i]), i


class GreedyPolicy:
    """Stateful greedy policy that carries its own reservoir state.

    ``sampler(rng)`` returns the candidate set for one decision. The
    reservoir is advanced with the executed ``(obs, action)`` after each
    call; the chosen candidate's score and index are kept in ``scores``
    and ``chosen``.
    """

    policy_id = "greedy"

    def __init__(self, params: ReservoirParams, model: ValueModel, sampler, x0=None):
        self.params = params
        self.model = model
        self.sampler = sampler
        self.x = zero_state(params) if x0 is None else np.asarray(x0, dtype=float).copy()
        self.scores: list[float] = []
        self.chosen: list[int] = []

    def __call__(self, obs, rng):
        a, v, i = _greedy(self.params, self.model, self.x, obs, self.sampler(rng))
        self.x = step(self.params, self.x, np.concatenate([np.asarray(obs, float).reshape(-1), a]))
        self.scores.append(v)
        self.chosen.append(i)
        return a


# --------------------------------------------------------------------------
# online update


def online_update(params: ReservoirParams, model: ValueModel, x, obs, candidates,
                  reward: float, alpha: float, gamma_eff: float | None = None) -> ValueModel:
    """One step ``W <- W - alpha x (W x - r - gamma_eff max_a W x+(a))``.

    ``reward`` is the reward attached to ``x`` and ``x+(a)`` is the next
    state reached by playing ``a`` after observing ``obs``.
    """
    if not (math.isfinite(alpha) and alpha > 0):
        raise ParameterError(f"step size must be positive, got {alpha}")
    g = model.gamma if gamma_eff is None else float(gamma_eff)
    if not 0.0 <= g <= 1.0:
        raise ParameterError(f"effective discount must lie in [0, 1], got {g}")
    x = np.asarray(x, dtype=float).reshape(-1)
    best = float(np.max(candidate_scores(params, model, x, obs, candidates)))
    d = float(model.W @ x) - float(reward) - g * best
    return ValueModel(model.W - alpha * d * x, model.gamma, model.lam, model.alignment)


def attached_rewards(rewards, alignment: str = "post") -> np.ndarray:
    """Reward attached to each state ``x_k`` of a recorded run, ``k = 0..L-1``."""
    _check_alignment(alignment)
    r = np.asarray(rewards, dtype=float).reshape(-1)
    if alignment == "pre":
        return r.copy()
    out = np.empty_like(r)
    out[0] = 0.0
    out[1:] = r[:-1]
    return out


# --------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class AutocorrDiagnostics:
    sigma: np.ndarray
    kappa: float
    eig_min: float
    eig_max: float
    tau: float | None
    condition_holds: bool | None

    def summary(self) -> dict:
        finite = math.isfinite(self.kappa)
        return {
            "kappa": self.kappa if finite else None,
            "sigma_singular": not finite,
            "eig_min": self.eig_min,
            "eig_max": self.eig_max,
            "tau": self.tau,
            "condition_holds": self.condition_holds,
        }


def autocorr_diagnostics(states, washout: int = 0, tau: float | None = None,
                         gamma: float | None = None) -> AutocorrDiagnostics:
    """Empirical second-moment matrix of the states and its condition number.

    ``kappa = lambda_max / lambda_min`` of ``Sigma = mean x x^T``. It is
    infinite when there are fewer post-washout states than dimensions or
    ``Sigma`` is numerically singular. The report states whether
    ``tau < 1 / kappa``; ``tau`` defaults to ``gamma`` when that is given.
    """
    X = _states(states)[int(washout):]
    if X.shape[0] == 0:
        raise ParameterError("washout removes every state")
    n = X.shape[1]
    sigma = X.T @ X / X.shape[0]
    eig = np.linalg.eigvalsh(sigma)
    lo, hi = float(eig[0]), float(eig[-1])
    singular = X.shape[0] < n or hi == 0.0 or lo <= n * np.finfo(float).eps * hi
    kappa = math.inf if singular else hi / lo
    if tau is None:
        tau = gamma
    holds = None if tau is None else bool(tau < 1.0 / kappa)
    return AutocorrDiagnostics(sigma, kappa, max(lo, 0.0), hi, tau, holds)
