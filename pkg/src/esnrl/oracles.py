"""Closed-form and integrated ground truth for both control problems.

Market maker
    The continuous-time LQ solution (gain ``h``), the discrete-time
    solution (coefficient ``p``), its stationary Gaussian law and two
    numerical checks: the fixed-point property of that law under the
    transition operator and a one-step Bellman identity by Gauss-Hermite
    quadrature.

    The discrete value function is ``v(y) = -alpha p y^2 + const`` for the
    reward ``r - alpha a^2 - beta y^2`` charged on the inventory held before
    the move. The action that attains the Bellman maximum for this ``v`` is
    ``-g y`` with ``g = gamma p / (1 + gamma p)`` (which equals ``p - 1``
    when ``alpha == beta``), not ``-p y``. Both feedbacks are exposed: the
    ``p``-based quantities for reference and the ``g``-based ones for the
    policy that is actually optimal.

Bee World
    The Euler-Lagrange system of the smoothed continuous-time problem and
    its adaptive integration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .environments import DEFAULT_OMEGA
from .errors import DomainError, NumericalError, ParameterError, StiffnessError

__all__ = [
    "MMContinuousSolution",
    "MMDiscreteSolution",
    "EulerLagrangeState",
    "BeeOptimalTrajectory",
    "mm_continuous",
    "mm_discrete",
    "mm_one_step_gain",
    "mm_stationary_fixed_point_check",
    "mm_bellman_check",
    "simulate_stationary_std",
    "bee_euler_lagrange_rhs",
    "integrate_optimal_bee",
    "export_csv",
]


def _positive(**kw):
    for name, val in kw.items():
        if not (math.isfinite(val) and val > 0):
            raise ParameterError(f"{name} must be positive and finite, got {val}")


# --------------------------------------------------------------------------
# market maker: continuous time


@dataclass(frozen=True)
class MMContinuousSolution:
    h: float
    alpha: float
    beta: float
    delta: float
    sigma: float
    r_base: float

    def value_at(self, y):
        y = np.asarray(y, dtype=float)
        return -self.alpha * self.h * y**2 + (self.r_base - self.alpha * self.h * self.sigma**2) / self.delta

    def action(self, y):
        return -self.h * np.asarray(y, dtype=float)

    @property
    def stationary_variance(self) -> float:
        return self.sigma**2 / (2.0 * self.h)

    def residual(self) -> float:
        """``alpha h^2 + alpha delta h - beta``; zero for the exact gain."""
        return self.alpha * self.h**2 + self.alpha * self.delta * self.h - self.beta


def mm_continuous(alpha: float, beta: float, delta: float, sigma: float,
                  r_base: float = 0.0) -> MMContinuousSolution:
    _positive(alpha=alpha, beta=beta, delta=delta, sigma=sigma)
    ad = alpha * delta
    # rationalised root: avoids cancellation when beta << (alpha delta)^2
    h = 2.0 * beta / (ad + math.sqrt(ad * ad + 4.0 * alpha * beta))
    return MMContinuousSolution(h, alpha, beta, delta, sigma, r_base)


# --------------------------------------------------------------------------
# market maker: discrete time


@dataclass(frozen=True)
class MMDiscreteSolution:
    p: float
    alpha: float
    beta: float
    gamma: float
    sigma: float
    r_base: float

    def value_at(self, y):
        y = np.asarray(y, dtype=float)
        a, p, g = self.alpha, self.p, self.gamma
        return -a * p * y**2 + (self.r_base - g * a * p * self.sigma**2) / (1.0 - g)

    def action(self, y):
        """Feedback ``-p y`` as stated alongside the closed form."""
        return -self.p * np.asarray(y, dtype=float)

    @property
    def stationary_std(self) -> float:
        """Std of the stationary law of ``y' = (1 - p) y + sigma N``."""
        return self.sigma / math.sqrt(self.p * (2.0 - self.p))

    @property
    def optimal_gain(self) -> float:
        """Gain ``g`` of the feedback ``-g y`` that maximises the Bellman right side."""
        gp = self.gamma * self.p
        return gp / (1.0 + gp)

    def optimal_action(self, y):
        return -self.optimal_gain * np.asarray(y, dtype=float)

    @property
    def optimal_stationary_std(self) -> float:
        g = self.optimal_gain
        return self.sigma / math.sqrt(g * (2.0 - g))

    def expected_cost(self, gain: float | None = None) -> float:
        """Stationary ``E[alpha a^2 + beta y^2]`` under ``a = -gain y`` (default: optimal)."""
        g = self.optimal_gain if gain is None else float(gain)
        var = self.sigma**2 / (g * (2.0 - g))
        return (self.alpha * g * g + self.beta) * var

    def closed_form_p(self) -> float:
        """Recompute ``p`` from the quoted formula (self-consistency check)."""
        a, b, g = self.alpha, self.beta, self.gamma
        B = a * (g - 1.0) + g * b
        return (B + math.sqrt(B * B + 4.0 * a * b * g)) / (2.0 * g * a)

    def quadratic_residual(self) -> float:
        """Residual of ``gamma a p^2 - (a(gamma-1) + gamma b) p - b = 0``."""
        a, b, g, p = self.alpha, self.beta, self.gamma, self.p
        return g * a * p * p - (a * (g - 1.0) + g * b) * p - b


def mm_discrete(alpha: float, beta: float, gamma: float, sigma: float,
                r_base: float = 0.0) -> MMDiscreteSolution:
    _positive(alpha=alpha, beta=beta, sigma=sigma)
    if not 0.0 < gamma < 1.0:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    B = alpha * (gamma - 1.0) + gamma * beta
    disc = math.sqrt(B * B + 4.0 * alpha * beta * gamma)
    # the two algebraically equal forms; pick the one without cancellation
    p = (B + disc) / (2.0 * gamma * alpha) if B >= 0 else 2.0 * beta / (disc - B)
    return MMDiscreteSolution(p, alpha, beta, gamma, sigma, r_base)


def mm_one_step_gain(alpha: float, beta: float, gamma: float, eta: float,
                     epsilon: float = 1.0) -> float:
    """Feedback gain of one greedy step away from the policy ``N(0, s^2) - eta y``.

    Rewards are charged on the action and the post-move inventory,
    ``-(alpha a^2 + beta y'^2)``. The value of the mean-reverting policy is
    ``-c2 y^2 + const`` with ``c2 = (alpha eta^2 + beta rho^2) / (1 - gamma rho^2)``,
    ``rho = 1 - eps eta``, and the greedy action against it is
    ``-eps (beta + gamma c2) / (alpha + eps^2 (beta + gamma c2)) y``.
    """
    _positive(alpha=alpha, beta=beta, epsilon=epsilon)
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"gamma must lie in [0, 1), got {gamma}")
    rho = 1.0 - epsilon * eta
    if not gamma * rho * rho < 1.0:
        raise ParameterError("initial policy value is unbounded for these parameters")
    c2 = (alpha * eta * eta + beta * rho * rho) / (1.0 - gamma * rho * rho)
    k = beta + gamma * c2
    return epsilon * k / (alpha + epsilon * epsilon * k)


def _gauss_pdf(x, std):
    return np.exp(-0.5 * (x / std) ** 2) / (math.sqrt(2.0 * math.pi) * std)


def _apply_transition(sol: MMDiscreteSolution, grid, nodes: int):
    std = sol.stationary_std
    t, w = np.polynomial.legendre.leggauss(nodes)
    half = 8.0 * std
    x = half * t
    w = half * w
    s = _gauss_pdf(x, std)
    mean = (1.0 - sol.p) * x
    kern = _gauss_pdf(grid[:, None] - mean[None, :], sol.sigma)
    return kern @ (w * s)


def mm_stationary_fixed_point_check(sol: MMDiscreteSolution, grid, quad_points: int = 2000,
                                    tol: float = 1e-6) -> float:
    """``max |T s*(y) - s*(y)|`` over ``grid`` for the stationary density ``s*``.

    ``T`` is the Gaussian transition operator of ``y' = (1 - p) y + sigma N``
    and the integral runs over ``[-8 std, 8 std]`` with Gauss-Legendre
    nodes. The quadrature error is estimated against a rule with half the
    nodes; :class:`NumericalError` is raised when that estimate exceeds
    ``tol``.
    """
    quad_points = int(quad_points)
    if quad_points < 64:
        raise ParameterError(f"quad_points must be >= 64, got {quad_points}")
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0 or not np.all(np.isfinite(grid)):
        raise ParameterError("grid must be non-empty and finite")
    if not 0.0 < sol.p < 2.0:
        raise ParameterError(f"no stationary law for p={sol.p}")
    fine = _apply_transition(sol, grid, quad_points)
    coarse = _apply_transition(sol, grid, quad_points // 2)
    estimate = float(np.max(np.abs(fine - coarse)))
    if estimate > tol:
        raise NumericalError(
            f"quadrature with {quad_points} nodes not converged (estimate {estimate:.3g} > {tol})")
    return float(np.max(np.abs(fine - _gauss_pdf(grid, sol.stationary_std))))


def mm_bellman_check(sol: MMDiscreteSolution, ys, feedback: str = "optimal",
                     nodes: int = 64) -> float:
    """Max over ``ys`` of ``|v(y) - (R(y, a) + gamma E v(y + a + sigma N))|``.

    ``R(y, a) = r - alpha a^2 - beta y^2`` and ``a`` is ``-g y``
    (``feedback="optimal"``) or ``-p y`` (``feedback="printed"``). The
    expectation uses Gauss-Hermite quadrature, exact for this quadratic.
    """
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if feedback == "optimal":
        a = sol.optimal_action(ys)
    elif feedback == "printed":
        a = sol.action(ys)
    else:
        raise ParameterError(f"feedback must be 'optimal' or 'printed', got {feedback!r}")
    x, w = np.polynomial.hermite.hermgauss(int(nodes))
    noise = math.sqrt(2.0) * sol.sigma * x
    nxt = (ys + a)[:, None] + noise[None, :]
    ev = sol.value_at(nxt) @ w / math.sqrt(math.pi)
    rhs = sol.r_base - sol.alpha * a * a - sol.beta * ys * ys + sol.gamma * ev
    return float(np.max(np.abs(sol.value_at(ys) - rhs)))


def simulate_stationary_std(gain: float, sigma: float, steps: int, rng, burn_in: int = 1000) -> float:
    """Sample std of ``y' = (1 - gain) y + sigma N`` after a burn-in."""
    steps, burn_in = int(steps), int(burn_in)
    noise = rng.generator.standard_normal(steps + burn_in)
    y = kernels.ar1_path(1.0 - gain, sigma, noise, 0.0)
    return float(np.std(y[burn_in:]))


# --------------------------------------------------------------------------
# Bee World: Euler-Lagrange system

ORIENTATIONS = {"printed": 1.0, "ascent": -1.0}


@dataclass(frozen=True)
class EulerLagrangeState:
    v: float
    y: float
    tau: float


def bee_euler_lagrange_rhs(s: EulerLagrangeState, eps_pen: float, c: float, gamma: float,
                           omega: float, forcing: bool = True, orientation: str = "printed"):
    """``(dv, dy, dtau)`` of the bee's optimality system.

    ``dv = -(2c cos^2(k) / pi) (4c cos(omega tau) cos(2 pi y) / eps_pen + log(gamma) tan(k))``
    with ``k = pi v / (2c)``. ``orientation="ascent"`` flips the sign of
    ``dv``; ``forcing=False`` removes the nectar term.
    """
    _positive(eps_pen=eps_pen, c=c, omega=omega)
    if not 0.0 < gamma < 1.0:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    if orientation not in ORIENTATIONS:
        raise ParameterError(f"orientation must be one of {sorted(ORIENTATIONS)}")
    if not abs(s.v) < c:
        raise DomainError(f"|v| = {abs(s.v)} is not below c = {c}")
    k = math.pi * s.v / (2.0 * c)
    push = 4.0 * c * math.cos(omega * s.tau) * math.cos(2.0 * math.pi * s.y) / eps_pen if forcing else 0.0
    dv = -ORIENTATIONS[orientation] * (2.0 * c * math.cos(k) ** 2 / math.pi) * (
        push + math.log(gamma) * math.tan(k))
    return dv, s.v, 1.0


@dataclass(frozen=True, eq=False)
class BeeOptimalTrajectory:
    t: np.ndarray
    v: np.ndarray
    y: np.ndarray
    average_nectar: float
    steps: int
    orientation: str

    @property
    def tau(self) -> np.ndarray:
        return self.t

    def nectar(self, omega: float) -> np.ndarray:
        return 1.0 + np.cos(omega * self.t) * np.sin(2.0 * np.pi * self.y)


def integrate_optimal_bee(eps_pen: float = 1e-5, c: float = 0.1, gamma: float = 0.5,
                          omega: float = DEFAULT_OMEGA, y0: float = 0.0, v0: float = 0.0,
                          horizon: float = 250.0, tol: float = 1e-8,
                          orientation: str = "ascent", forcing: bool = True,
                          margin: float = 1e-12, h_min: float = 1e-12,
                          max_steps: int = 2_000_000) -> BeeOptimalTrajectory:
    """Integrate the bee's optimality system with an adaptive Dormand-Prince pair.

    The time-average nectar is integrated alongside the trajectory, so it
    carries the same error control. Stages that bring ``|v|`` within
    ``margin`` of ``c`` are rejected and the step halved.

    ``orientation="ascent"`` (default) runs the system with ``dv``
    negated, which moves the bee towards the nectar maxima;
    ``"printed"`` runs it exactly as displayed, where the bee is pushed
    into the ``|v| -> c`` boundary layer and the step size collapses.

    Raises :class:`StiffnessError` (with ``.partial``) when the step size
    underflows ``h_min`` or ``max_steps`` is exhausted.
    """
    _positive(eps_pen=eps_pen, c=c, omega=omega, horizon=horizon, tol=tol)
    if not 0.0 < gamma < 1.0:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    if not abs(v0) < c:
        raise DomainError(f"|v0| = {abs(v0)} is not below c = {c}")
    if orientation not in ORIENTATIONS:
        raise ParameterError(f"orientation must be one of {sorted(ORIENTATIONS)}")
    t, v, y, q, count, status = kernels.bee_el_integrate(
        float(eps_pen), float(c), float(gamma), float(omega), ORIENTATIONS[orientation],
        1.0 if forcing else 0.0, float(y0), float(v0), float(horizon), float(tol), float(tol),
        1e-6, float(h_min), float(margin), int(max_steps))
    partial_avg = float(q[-1] / t[-1]) if t[-1] > 0 else float("nan")
    traj = BeeOptimalTrajectory(t, v, np.mod(y, 1.0), partial_avg, int(count), orientation)
    if status != 0:
        reason = "step size underflow" if status == 1 else f"{max_steps} steps exhausted"
        raise StiffnessError(f"integration stopped at t={t[-1]:.6g}: {reason}", partial=traj)
    return traj


def export_csv(path, columns: dict) -> None:
    """Write equal-length arrays as named CSV columns (e.g. grid and value)."""
    names = list(columns)
    data = [np.asarray(columns[k]).reshape(-1) for k in names]
    if len({d.size for d in data}) > 1:
        raise ParameterError("columns must have equal length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([repr(float(x)) for x in row])
