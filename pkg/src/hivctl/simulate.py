"""Fixed-step forward integration with positivity and boundedness monitors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .model import ModelParams, State, field, jacobian

# Negative values above this are round-off and are clamped to zero.
CLAMP_TOL = 1e-9
# Slack allowed on the x + y bound before a sample counts as a violation.
BOUND_SLACK = 1e-6

METHODS = ("euler", "rk4")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0 = t_0 < ... < t_n = tf."""

    tf: float
    n: int
    t0: float = 0.0

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise DomainError(f"grid n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if not (math.isfinite(self.t0) and math.isfinite(self.tf)) or not self.tf > self.t0:
            raise DomainError(f"grid needs finite tf > t0, got t0={self.t0!r}, tf={self.tf!r}")

    @property
    def h(self) -> float:
        return (self.tf - self.t0) / self.n

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.tf, self.n + 1)


@dataclass(frozen=True)
class Trajectory:
    """Samples on a grid. ``states`` is (k, 5) with k = n + 1 unless the run blew up.

    ``controls`` is (n + 1, 2) and ``adjoints`` is (n + 1, 5) when present.
    """

    grid: TimeGrid
    states: np.ndarray
    controls: Optional[np.ndarray] = None
    adjoints: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("states", "controls", "adjoints"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def complete(self) -> bool:
        return len(self.states) == self.grid.n + 1

    @property
    def times(self) -> np.ndarray:
        return self.grid.times[: len(self.states)]

    @property
    def final(self) -> State:
        return State(*self.states[-1])


@dataclass(frozen=True)
class MonitorReport:
    """What the monitors saw during a run.

    min_component is taken before round-off clamping. ``negative_steps`` counts
    samples with a component below -CLAMP_TOL. ``abort_step`` is the index of
    the first non-finite sample when ``blowup`` is set.
    """

    min_component: float
    bound_violations: int
    blowup: bool
    bound: float = math.inf
    negative_steps: int = 0
    abort_step: Optional[int] = None


def stable_step(p: ModelParams, states, h_max: float = 0.01, safety: float = 0.25) -> float:
    """Largest step <= h_max with ``h * rho(J) <= safety`` at every given state.

    Used to pick a fixed step for stiff parameter sets before a run; the
    integration itself never adapts.
    """
    rho = max(float(np.max(np.abs(np.linalg.eigvals(jacobian(p, s))))) for s in states)
    return h_max if rho == 0 else min(h_max, safety / rho)


def _check_schedule(controls, n: int) -> Optional[np.ndarray]:
    if controls is None:
        return None
    u = np.asarray(controls, dtype=float)
    if u.shape != (n + 1, 2):
        raise DomainError(f"control schedule must have shape {(n + 1, 2)}, got {u.shape}")
    if not np.all(np.isfinite(u)) or np.any(u < 0.0) or np.any(u > 1.0):
        raise DomainError("control schedule values must lie in [0, 1]")
    return u


def integrate(p: ModelParams, s0, grid: TimeGrid, controls=None, method: str = "rk4"):
    """Integrate the (controlled) model on ``grid``.

    ``controls`` holds node values (u1, u2) of shape (n + 1, 2); absent means
    no therapy. Euler uses the value at the left node. RK4 uses the left node,
    the nodal average at the half step and the right node.

    Returns ``(Trajectory, MonitorReport)``. A non-finite state aborts the run
    and the trajectory stops at the last finite sample.
    """
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")
    s0 = [float(c) for c in s0]
    if len(s0) != 5 or not all(math.isfinite(c) for c in s0):
        raise DomainError(f"initial state must be five finite numbers, got {s0!r}")
    if min(s0) < 0:
        raise DomainError(f"initial state must be nonnegative, got {s0!r}")
    n, h = grid.n, grid.h
    u = _check_schedule(controls, n)
    uu = np.zeros((n + 1, 2)) if u is None else u
    u1s, u2s = uu[:, 0].tolist(), uu[:, 1].tolist()

    lam, d, beta, a, pp, mu, N, q, c, hh, g, al = (
        p.lam, p.d, p.beta, p.a, p.p, p.mu, p.N, p.q, p.c, p.h, p.g, p.alpha)
    aN = a * N

    def f(x, y, v, z, w, u1, u2):
        inf = beta * (1.0 - u1) * x * v
        return (lam - d * x - inf,
                inf - a * y - pp * y * z,
                aN * (1.0 - u2) * y - mu * v - q * v * w,
                c * x * y * z - hh * z,
                g * x * v * w - al * w)

    delta = min(d, a)
    bound = s0[0] + s0[1] + (lam / delta if delta > 0 else math.inf)
    out = np.empty((n + 1, 5))
    out[0] = s0
    s = tuple(s0)
    min_comp = min(s0)
    violations = negative = 0
    aborted = None
    half = 0.5 * h
    sixth = h / 6.0
    for i in range(n):
        x, y, v, z, w = s
        if method == "euler":
            k = f(x, y, v, z, w, u1s[i], u2s[i])
            nxt = [x + h * k[0], y + h * k[1], v + h * k[2], z + h * k[3], w + h * k[4]]
        else:
            ua, ub = u1s[i], u2s[i]
            uma, umb = 0.5 * (ua + u1s[i + 1]), 0.5 * (ub + u2s[i + 1])
            k1 = f(x, y, v, z, w, ua, ub)
            k2 = f(x + half * k1[0], y + half * k1[1], v + half * k1[2], z + half * k1[3],
                   w + half * k1[4], uma, umb)
            k3 = f(x + half * k2[0], y + half * k2[1], v + half * k2[2], z + half * k2[3],
                   w + half * k2[4], uma, umb)
            k4 = f(x + h * k3[0], y + h * k3[1], v + h * k3[2], z + h * k3[3], w + h * k3[4],
                   u1s[i + 1], u2s[i + 1])
            nxt = [s[j] + sixth * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) for j in range(5)]
        if not all(math.isfinite(cmp) for cmp in nxt):
            aborted = i + 1
            break
        lo = min(nxt)
        if lo < min_comp:
            min_comp = lo
        if lo < 0.0:
            if lo < -CLAMP_TOL:
                negative += 1
            nxt = [0.0 if -CLAMP_TOL <= cmp < 0.0 else cmp for cmp in nxt]
        if nxt[0] + nxt[1] > bound + BOUND_SLACK:
            violations += 1
        s = tuple(nxt)
        out[i + 1] = s

    states = out if aborted is None else out[:aborted]
    traj = Trajectory(grid, states, controls=u)
    monitor = MonitorReport(min_comp, violations, aborted is not None, bound, negative, aborted)
    return traj, monitor


def objective_value(traj: Trajectory, p: ModelParams) -> float:
    """Trapezoid quadrature of x + z + w - (A1 u1^2 + A2 u2^2) / 2 over the grid."""
    if traj.controls is None:
        raise DomainError("objective needs a trajectory that carries controls")
    if not traj.complete:
        raise DomainError("objective needs a complete trajectory")
    S, U = traj.states, traj.controls
    integrand = S[:, 0] + S[:, 3] + S[:, 4] - 0.5 * (p.A1 * U[:, 0] ** 2 + p.A2 * U[:, 1] ** 2)
    return float(np.trapezoid(integrand, dx=traj.grid.h))
