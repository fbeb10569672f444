"""Two-drug optimal therapy: adjoint system, control law and forward-backward sweep.

The problem maximises int_0^tf x + z + w - (A1 u1^2 + A2 u2^2)/2 dt, written
as pointwise minimisation of

    H = A1/2 u1^2 + A2/2 u2^2 - x - z - w + sum_i lam_i f_i

with adjoints lam' = -dH/dstate and lam(tf) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, SolverError
from .model import ModelParams, _check_control, _check_state, field
from .simulate import METHODS, TimeGrid, Trajectory, integrate, objective_value

MODES = ("fbsm", "paper")


class Adjoint(NamedTuple):
    l1: float
    l2: float
    l3: float
    l4: float
    l5: float


@dataclass(frozen=True)
class SweepConfig:
    """Iteration policy for ``solve``.

    ``mode="fbsm"`` iterates forward/backward passes to a fixed point with a
    relaxed control update; ``mode="paper"`` runs a single interleaved Euler
    pass that steps the state forward and the adjoint backward together.
    """

    max_iters: int = 200
    tol: float = 1e-4
    relaxation: float = 0.5
    mode: str = "fbsm"

    def __post_init__(self):
        if isinstance(self.max_iters, bool) or int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise DomainError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        object.__setattr__(self, "max_iters", int(self.max_iters))
        if not (math.isfinite(self.tol) and self.tol >= 0):
            raise DomainError(f"tol must be a nonnegative real, got {self.tol!r}")
        if not (0.0 < self.relaxation <= 1.0):
            raise DomainError(f"relaxation must lie in (0, 1], got {self.relaxation!r}")
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}; expected one of {MODES}")


@dataclass(frozen=True)
class SweepSolution:
    trajectory: Trajectory
    objective: float
    iterations: int
    converged: bool
    final_delta: float


def _adjoint_field(p: ModelParams, x, y, v, z, w, l1, l2, l3, l4, l5, u1, u2):
    # -dH/d(x, y, v, z, w); works on floats or equally shaped arrays
    bu = p.beta * (1.0 - u1)
    return (
        1.0 + l1 * (p.d + bu * v) - l2 * bu * v - l4 * p.c * y * z - l5 * p.g * v * w,
        l2 * (p.a + p.p * z) - l3 * (1.0 - u2) * p.a * p.N - l4 * p.c * x * z,
        l1 * bu * x - l2 * bu * x + l3 * (p.mu + p.q * w) - l5 * p.g * x * w,
        1.0 + l2 * p.p * y + l4 * (p.h - p.c * x * y),
        1.0 + l3 * p.q * v + l5 * (p.alpha - p.g * x * v),
    )


def _check_adjoint(lam) -> Adjoint:
    lam = Adjoint(*(float(c) for c in lam))
    for name, value in zip(Adjoint._fields, lam):
        if not math.isfinite(value):
            raise DomainError(f"adjoint component {name} is not finite: {value!r}")
    return lam


def adjoint_rhs(p: ModelParams, s, lam, u1: float, u2: float) -> np.ndarray:
    """Time derivative of the adjoint variables along (s, u)."""
    s, lam = _check_state(s), _check_adjoint(lam)
    u1, u2 = _check_control("u1", u1), _check_control("u2", u2)
    return np.array(_adjoint_field(p, *s, *lam, u1, u2))


def _characterization(p: ModelParams, x, v, y, l1, l2, l3):
    u1 = np.clip(p.beta / p.A1 * (l2 - l1) * x * v, 0.0, 1.0)
    u2 = np.clip(l3 * p.a * p.N * y / p.A2, 0.0, 1.0)
    return u1, u2


def optimal_controls(p: ModelParams, s, lam) -> tuple[float, float]:
    """Pointwise minimiser of H over [0, 1]^2."""
    x, y, v, _, _ = _check_state(s)
    l1, l2, l3, _, _ = _check_adjoint(lam)
    u1, u2 = _characterization(p, x, v, y, l1, l2, l3)
    return float(u1), float(u2)


def hamiltonian(p: ModelParams, s, lam, u1: float, u2: float) -> float:
    s, lam = _check_state(s), _check_adjoint(lam)
    u1, u2 = _check_control("u1", u1), _check_control("u2", u2)
    f = field(p, *s, u1, u2)
    return (0.5 * p.A1 * u1 ** 2 + 0.5 * p.A2 * u2 ** 2 - s.x - s.z - s.w
            + math.fsum(li * fi for li, fi in zip(lam, f)))


def hamiltonian_control_gradient(p: ModelParams, s, lam, u1, u2):
    """(dH/du1, dH/du2); accepts arrays of nodes as well as scalars."""
    x, y, v = s[0], s[1], s[2]
    l1, l2, l3 = lam[0], lam[1], lam[2]
    return (p.A1 * u1 + (l1 - l2) * p.beta * x * v,
            p.A2 * u2 - l3 * p.a * p.N * y)


def _controls_from(p: ModelParams, S: np.ndarray, L: np.ndarray) -> np.ndarray:
    u1, u2 = _characterization(p, S[:, 0], S[:, 2], S[:, 1], L[:, 0], L[:, 1], L[:, 2])
    return np.column_stack([u1, u2])


def control_change(new: np.ndarray, old: np.ndarray) -> float:
    """Largest per-control sup-norm change relative to the larger of the two schedules."""
    worst = 0.0
    for j in range(new.shape[1]):
        diff = float(np.max(np.abs(new[:, j] - old[:, j])))
        scale = max(float(np.max(np.abs(new[:, j]))), float(np.max(np.abs(old[:, j]))))
        if diff > 0.0:
            worst = max(worst, diff / scale)
    return worst


def backward_adjoints(p: ModelParams, S: np.ndarray, U: np.ndarray, grid: TimeGrid,
                      method: str = "rk4") -> np.ndarray:
    """Integrate the adjoints from lam(tf) = 0 back to t0 along nodal states and controls.

    RK4 evaluates the state at half steps by cubic Hermite interpolation, which
    keeps the backward pass fourth order.
    """
    n, h = grid.n, grid.h
    L = np.zeros((n + 1, 5))
    Sl = S.tolist()
    u1s, u2s = U[:, 0].tolist(), U[:, 1].tolist()

    def g(s, lam, u1, u2):
        return _adjoint_field(p, *s, *lam, u1, u2)

    lam = (0.0,) * 5
    if method == "euler":
        for j in range(n, 0, -1):
            k = g(Sl[j], lam, u1s[j], u2s[j])
            lam = tuple(lam[i] - h * k[i] for i in range(5))
            L[j - 1] = lam
        return L
    F = np.array(field(p, S[:, 0], S[:, 1], S[:, 2], S[:, 3], S[:, 4], U[:, 0], U[:, 1])).T
    mid = (0.5 * (S[1:] + S[:-1]) + (h / 8.0) * (F[:-1] - F[1:])).tolist()
    half, sixth = 0.5 * h, h / 6.0
    for j in range(n, 0, -1):
        sm = mid[j - 1]
        um1, um2 = 0.5 * (u1s[j] + u1s[j - 1]), 0.5 * (u2s[j] + u2s[j - 1])
        k1 = g(Sl[j], lam, u1s[j], u2s[j])
        k2 = g(sm, [lam[i] - half * k1[i] for i in range(5)], um1, um2)
        k3 = g(sm, [lam[i] - half * k2[i] for i in range(5)], um1, um2)
        k4 = g(Sl[j - 1], [lam[i] - h * k3[i] for i in range(5)], u1s[j - 1], u2s[j - 1])
        lam = tuple(lam[i] - sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(5))
        if not all(math.isfinite(c) for c in lam):
            raise SolverError(f"adjoint became non-finite at node {j - 1}")
        L[j - 1] = lam
    return L


def _solve_single_pass(p: ModelParams, s0, grid: TimeGrid, cfg: SweepConfig) -> SweepSolution:
    # One interleaved pass: the state steps forward from node i while the
    # adjoint steps back from node n - i using the freshly computed state i + 1.
    n, h = grid.n, grid.h
    S = np.empty((n + 1, 5))
    L = np.zeros((n + 1, 5))
    U = np.zeros((n + 1, 2))
    S[0] = s0
    for i in range(n):
        x, y, v, z, w = S[i]
        u1, u2 = U[i]
        k = field(p, x, y, v, z, w, u1, u2)
        S[i + 1] = [x + h * k[0], y + h * k[1], v + h * k[2], z + h * k[3], w + h * k[4]]
        if not np.all(np.isfinite(S[i + 1])):
            raise SolverError(f"state became non-finite at step {i + 1}",
                              partial=Trajectory(grid, S[: i + 1], controls=U, adjoints=L))
        back = n - i
        dl = _adjoint_field(p, *S[i + 1], *L[back], u1, u2)
        L[back - 1] = L[back] - h * np.array(dl)
        x1, y1, v1 = S[i + 1, 0], S[i + 1, 1], S[i + 1, 2]
        l1, l2, l3 = L[back - 1, :3]
        U[i + 1] = [min(1.0, max(p.beta / p.A1 * (l2 * v1 * x1 - l1 * v1 * x1), 0.0)),
                    min(1.0, max(l3 * p.a * p.N * y1 / p.A2, 0.0))]
    traj = Trajectory(grid, S, controls=U, adjoints=L)
    delta = control_change(_controls_from(p, S, L), U)
    return SweepSolution(traj, objective_value(traj, p), 1, delta <= cfg.tol, delta)


def _relax(target: np.ndarray, U: np.ndarray, cfg: SweepConfig) -> np.ndarray:
    """Convex-combination update; nodes whose target sits on a bound and whose
    relaxed value is already within tolerance of it are placed on the bound,
    since relaxation alone only approaches a bound geometrically."""
    new = cfg.relaxation * target + (1.0 - cfg.relaxation) * U
    scale = np.maximum(np.max(np.abs(target), axis=0), np.max(np.abs(U), axis=0))
    on_bound = (target == 0.0) | (target == 1.0)
    snap = on_bound & (np.abs(new - target) <= cfg.tol * scale)
    new[snap] = target[snap]
    return new


def solve(p: ModelParams, s0, grid: TimeGrid, cfg: SweepConfig = SweepConfig(),
          method: str = "rk4") -> SweepSolution:
    """Compute an optimal therapy schedule by the forward-backward sweep.

    In ``fbsm`` mode each iteration integrates the state forward under the
    current controls, the adjoints backward from zero terminal values, and
    evaluates the control law on the result. The iteration stops once that
    characterization differs from the current controls by at most ``cfg.tol``
    (relative sup-norm); otherwise the controls move to
    ``relaxation * characterization + (1 - relaxation) * current``. The
    returned state and adjoints are the ones generated by the returned controls.

    Non-convergence is reported through ``converged=False``. A state blow-up
    raises SolverError with the partial trajectory attached.
    """
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")
    s0 = _check_state(s0)
    if min(s0) < 0:
        raise DomainError(f"initial state must be nonnegative, got {tuple(s0)!r}")
    if cfg.mode == "paper":
        return _solve_single_pass(p, s0, grid, cfg)

    U = np.zeros((grid.n + 1, 2))
    delta = math.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        traj, mon = integrate(p, s0, grid, U, method)
        if mon.blowup:
            raise SolverError(f"state blew up at step {mon.abort_step} (iteration {it})", partial=traj)
        S = traj.states
        L = backward_adjoints(p, S, U, grid, method)
        target = _controls_from(p, S, L)
        delta = control_change(target, U)
        if delta <= cfg.tol:
            converged = True
            break
        if it < cfg.max_iters:
            U = _relax(target, U, cfg)
    traj = Trajectory(grid, S, controls=U, adjoints=L)
    return SweepSolution(traj, objective_value(traj, p), it, converged, delta)
