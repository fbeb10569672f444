"""Five-compartment HIV model with trilinear CTL and antibody growth.

State ordering is (x, y, v, z, w): uninfected CD4+ T cells, infected cells,
free virus, CTLs and antibodies. Everything here is a pure function of its
arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConsistencyError, DomainError, NumericError, SingularParameterError

# Relative residual accepted for a closed-form equilibrium.
RESIDUAL_TOL = 1e-8
# Half-width of the band around zero in which an eigenvalue real part is inconclusive.
EPS_STAB = 1e-7
# |R - 1| at or below this counts as sitting on a threshold.
THRESHOLD_BAND = 1e-12

LABELS = ("Ef", "E1", "E2", "E3", "E4")

# Literature ranges for the rates; single values were assumed rather than measured.
PARAM_RANGES = {
    "lam": (1.0, 10.0),
    "d": (0.007, 0.1),
    "beta": (0.00025, 0.5),
    "a": (0.2, 0.3),
    "mu": (2.06, 3.81),
    "N": (6.25, 23599.9),
    "p": (1.0e-4, 4.048e-4),
    "c": (0.0051, 3.912),
    "h": (0.004, 8.087),
    "q": (0.12, 0.12),
    "g": (0.00013, 0.00013),
    "alpha": (0.12, 0.12),
}

RATE_NAMES = ("lam", "d", "beta", "a", "p", "mu", "N", "q", "c", "h", "g", "alpha")


@dataclass(frozen=True)
class ModelParams:
    """Biological rates plus the two treatment cost weights.

    Defaults reproduce the reference scenario (E4 endemic and stable).
    """

    lam: float = 1.0
    d: float = 0.1
    beta: float = 0.00025
    a: float = 0.2
    p: float = 0.001
    mu: float = 2.4
    N: float = 2000.0
    q: float = 0.01
    c: float = 0.03
    h: float = 0.2
    g: float = 0.00013
    alpha: float = 0.12
    A1: float = 250.0
    A2: float = 2500.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise DomainError(f"parameter {f.name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise DomainError(f"parameter {f.name} is not finite: {value!r}")
            object.__setattr__(self, f.name, float(value))
        for name in RATE_NAMES:
            if getattr(self, name) < 0:
                raise DomainError(f"rate {name} must be nonnegative, got {getattr(self, name)}")
        if self.A1 <= 0 or self.A2 <= 0:
            raise DomainError(f"cost weights must be positive, got A1={self.A1}, A2={self.A2}")


class State(NamedTuple):
    x: float
    y: float
    v: float
    z: float
    w: float


class Stability(str, Enum):
    STABLE = "LocallyAsymptoticallyStable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class Thresholds:
    r0: float
    rCtl: float
    rW: float
    rCtlW1: float
    rCtlW2: float

    def as_dict(self) -> dict:
        return {"r0": self.r0, "rCtl": self.rCtl, "rW": self.rW,
                "rCtlW1": self.rCtlW1, "rCtlW2": self.rCtlW2}


@dataclass(frozen=True)
class EquilibriumReport:
    """Existence, location and local stability of one steady state.

    ``point`` holds the closed-form coordinates whenever they can be evaluated,
    even if the point is not biologically admissible (``exists`` is then False).
    """

    label: str
    exists: bool
    point: Optional[State]
    stability: Optional[Stability] = None
    eigenvalues: Optional[np.ndarray] = None
    thresholds: Optional[Thresholds] = None
    reason: str = ""
    analytic: Optional[Stability] = None
    numeric: Optional[Stability] = None


def _check_state(s) -> State:
    s = State(*(float(c) for c in s))
    for name, value in zip(State._fields, s):
        if not math.isfinite(value):
            raise DomainError(f"state component {name} is not finite: {value!r}")
    return s


def _check_control(name: str, u: float) -> float:
    u = float(u)
    if not (0.0 <= u <= 1.0):
        raise DomainError(f"control {name} must lie in [0, 1], got {u!r}")
    return u


def field(p: ModelParams, x, y, v, z, w, u1=0.0, u2=0.0):
    """Controlled vector field on raw floats (or broadcastable arrays), no validation."""
    infection = p.beta * (1.0 - u1) * x * v
    return (
        p.lam - p.d * x - infection,
        infection - p.a * y - p.p * y * z,
        p.a * p.N * (1.0 - u2) * y - p.mu * v - p.q * v * w,
        p.c * x * y * z - p.h * z,
        p.g * x * v * w - p.alpha * w,
    )


def rhs_controlled(p: ModelParams, s, u1: float, u2: float) -> np.ndarray:
    """Time derivative of the state under drug efficacies ``u1`` (RTI) and ``u2`` (PI)."""
    s = _check_state(s)
    u1 = _check_control("u1", u1)
    u2 = _check_control("u2", u2)
    return np.array(field(p, *s, u1, u2))


def rhs_uncontrolled(p: ModelParams, s) -> np.ndarray:
    return rhs_controlled(p, s, 0.0, 0.0)


def jacobian(p: ModelParams, s) -> np.ndarray:
    """Jacobian of the uncontrolled vector field at ``s``."""
    x, y, v, z, w = _check_state(s)
    return np.array([
        [-p.d - p.beta * v, 0.0, -p.beta * x, 0.0, 0.0],
        [p.beta * v, -p.a - p.p * z, p.beta * x, -p.p * y, 0.0],
        [0.0, p.a * p.N, -p.mu - p.q * w, 0.0, -p.q * v],
        [p.c * y * z, p.c * x * z, 0.0, p.c * x * y - p.h, 0.0],
        [p.g * v * w, 0.0, p.g * x * w, 0.0, p.g * x * v - p.alpha],
    ])


# --- reproduction numbers -------------------------------------------------

def _nonzero(value: float, name: str, where: str) -> float:
    if value == 0.0:
        raise SingularParameterError(name, where)
    return value


def _ctl_margin(p: ModelParams) -> float:
    # lambda*mu*c - a*N*beta*h; positive iff CTLs can be sustained
    return p.lam * p.mu * p.c - p.a * p.N * p.beta * p.h


def _antibody_margin(p: ModelParams) -> float:
    # lambda*g - alpha*beta
    return p.lam * p.g - p.alpha * p.beta


def r0(p: ModelParams) -> float:
    _nonzero(p.d * p.mu, "d*mu", "R0")
    return p.lam * p.N * p.beta / (p.d * p.mu)


def r_ctl(p: ModelParams) -> float:
    _nonzero(p.d * p.mu * p.c, "d*mu*c", "R_CTL")
    return (p.N * p.beta / p.mu) * _ctl_margin(p) / (p.d * p.mu * p.c)


def r_w(p: ModelParams) -> float:
    _nonzero(p.mu * p.d * p.g, "mu*d*g", "R_W")
    return p.N * p.beta * _antibody_margin(p) / (p.mu * p.d * p.g)


def r_ctl_w1(p: ModelParams) -> float:
    _nonzero(p.alpha * p.mu * p.c, "alpha*mu*c", "R_CTL,W_1")
    return p.a * p.N * p.h * p.g / (p.alpha * p.mu * p.c)


def r_ctl_w2(p: ModelParams) -> float:
    _nonzero(p.a * p.h * p.d * p.g, "a*h*d*g", "R_CTL,W_2")
    return p.alpha * p.beta * p.c * _antibody_margin(p) / (p.a * p.h * p.d * p.g ** 2)


def thresholds(p: ModelParams) -> Thresholds:
    """All five reproduction numbers; raises SingularParameterError on a vanishing denominator."""
    return Thresholds(r0(p), r_ctl(p), r_w(p), r_ctl_w1(p), r_ctl_w2(p))


# --- equilibria -----------------------------------------------------------

def equilibrium_point(p: ModelParams, label: str) -> State:
    """Closed-form coordinates of a steady state, whether or not it is admissible."""
    if label == "Ef":
        return State(p.lam / _nonzero(p.d, "d", "Ef"), 0.0, 0.0, 0.0, 0.0)
    if label == "E1":
        R0 = r0(p)
        _nonzero(p.beta * p.N * p.a, "a*N*beta", "E1")
        return State(p.mu / (p.beta * p.N),
                     p.d * p.mu * (R0 - 1.0) / (p.a * p.N * p.beta),
                     p.d * (R0 - 1.0) / p.beta, 0.0, 0.0)
    if label == "E2":
        K = _nonzero(_ctl_margin(p), "lambda*mu*c - a*N*beta*h", "E2")
        _nonzero(p.d * p.mu * p.c * p.p, "d*mu*c*p", "E2")
        return State(K / (p.d * p.mu * p.c),
                     p.d * p.h * p.mu / K,
                     p.a * p.N * p.d * p.h / K,
                     (p.a / p.p) * (r_ctl(p) - 1.0), 0.0)
    if label == "E3":
        L = _nonzero(_antibody_margin(p), "lambda*g - alpha*beta", "E3")
        _nonzero(p.d * p.g * p.a * p.q, "d*g*a*q", "E3")
        return State(L / (p.d * p.g),
                     p.alpha * p.beta / (p.a * p.g),
                     p.alpha * p.d / L, 0.0,
                     (p.mu / p.q) * (r_w(p) - 1.0))
    if label == "E4":
        L = _nonzero(_antibody_margin(p), "lambda*g - alpha*beta", "E4")
        _nonzero(p.d * p.g * p.c * p.p * p.q, "d*g*c*p*q", "E4")
        return State(L / (p.d * p.g),
                     p.h * p.d * p.g / (p.c * L),
                     p.alpha * p.d / L,
                     (p.a / p.p) * (r_ctl_w2(p) - 1.0),
                     (p.mu / p.q) * (r_ctl_w1(p) - 1.0))
    raise ValueError(f"unknown equilibrium label {label!r}")


def _existence(p: ModelParams, label: str) -> tuple[bool, str]:
    if label == "Ef":
        return True, ""
    if label == "E1":
        R0 = r0(p)
        return (R0 > 1.0, "" if R0 > 1.0 else f"R0 = {R0!r} <= 1")
    if label == "E2":
        if _ctl_margin(p) <= 0.0:
            return False, "lambda*mu*c - a*N*beta*h <= 0"
        R = r_ctl(p)
        return (R > 1.0, "" if R > 1.0 else f"R_CTL = {R!r} <= 1")
    if label == "E3":
        R = r_w(p)
        return (R > 1.0, "" if R > 1.0 else f"R_W = {R!r} <= 1")
    if label == "E4":
        R1, R2 = r_ctl_w1(p), r_ctl_w2(p)
        ok = R1 > 1.0 and R2 > 1.0
        return ok, "" if ok else f"R_CTL,W_1 = {R1!r}, R_CTL,W_2 = {R2!r} (both must exceed 1)"
    raise ValueError(f"unknown equilibrium label {label!r}")


def _residual(p: ModelParams, s: State) -> float:
    return float(np.max(np.abs(field(p, *s)))) / max(1.0, max(abs(c) for c in s))


def equilibrium(p: ModelParams, label: str, classify: bool = True) -> EquilibriumReport:
    """Build the report for one steady state.

    Raises SingularParameterError only when the existence test or the
    coordinates of an existing point need a vanishing denominator.
    """
    exists, reason = _existence(p, label)
    try:
        point = equilibrium_point(p, label)
    except SingularParameterError:
        if exists:
            raise
        point = None
    try:
        snapshot = thresholds(p)
    except SingularParameterError:
        snapshot = None
    if exists:
        res = _residual(p, point)
        if not res <= RESIDUAL_TOL:
            raise NumericError(f"{label} residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
    report = EquilibriumReport(label, exists, point, thresholds=snapshot, reason=reason)
    return classify_stability(p, report) if classify else report


def equilibria(p: ModelParams) -> list[EquilibriumReport]:
    """Reports for Ef, E1, E2, E3 and E4, in that order, with stability filled in."""
    return [equilibrium(p, label) for label in LABELS]


# --- stability ------------------------------------------------------------

def _sign_verdict(value: float, band: float) -> Stability:
    if value < -band:
        return Stability.STABLE
    if value > band:
        return Stability.UNSTABLE
    return Stability.MARGINAL


def _threshold_verdict(R: float) -> Stability:
    # R < 1 -> the associated eigenvalue is negative
    return _sign_verdict(R - 1.0, THRESHOLD_BAND)


def analytic_verdict(p: ModelParams, label: str) -> Stability:
    """Local stability predicted by the threshold conditions alone."""
    if label == "Ef":
        return _threshold_verdict(r0(p))
    if label == "E1":
        verdicts = {_threshold_verdict(r_w(p)), _threshold_verdict(r_ctl(p))}
    elif label == "E2":
        verdicts = {_threshold_verdict(r_ctl_w1(p))}
    elif label == "E3":
        verdicts = {_threshold_verdict(r_ctl_w2(p))}
    elif label == "E4":
        return Stability.STABLE
    else:
        raise ValueError(f"unknown equilibrium label {label!r}")
    if Stability.UNSTABLE in verdicts:
        return Stability.UNSTABLE
    if Stability.MARGINAL in verdicts:
        return Stability.MARGINAL
    return Stability.STABLE


def numeric_verdict(eigenvalues: np.ndarray) -> Stability:
    return _sign_verdict(float(np.max(np.real(eigenvalues))), EPS_STAB)


# Components that decouple at each boundary equilibrium; the rest form the
# block whose characteristic polynomial the Routh-Hurwitz argument addresses.
_COUPLED_BLOCK = {
    "Ef": [1, 2],
    "E1": [0, 1, 2],
    "E2": [0, 1, 2, 3],
    "E3": [0, 1, 2, 4],
    "E4": [0, 1, 2, 3, 4],
}


def characteristic_polynomial(p: ModelParams, label: str, point: State) -> np.ndarray:
    """Monic characteristic polynomial of the coupled Jacobian block (highest power first)."""
    J = jacobian(p, point)
    idx = _COUPLED_BLOCK[label]
    return np.poly(J[np.ix_(idx, idx)])


def hurwitz_stable(coeffs) -> bool:
    """Routh-Hurwitz test: True iff every root of the polynomial has negative real part.

    ``coeffs`` are ordered from the highest power down with a positive leading term.
    """
    a = np.asarray(coeffs, dtype=float)
    if a[0] <= 0:
        raise ValueError("leading coefficient must be positive")
    a = a / a[0]
    n = len(a) - 1
    if np.any(a[1:] <= 0):
        return False

    def coef(k):
        return a[k] if 0 <= k <= n else 0.0

    H = np.array([[coef(2 * (j + 1) - (i + 1)) for j in range(n)] for i in range(n)])
    return all(np.linalg.det(H[:k, :k]) > 0 for k in range(1, n + 1))


def routh_hurwitz_coefficients(p: ModelParams, label: str, point: Optional[State] = None) -> tuple:
    """Closed-form coefficients of the non-trivial characteristic factor.

    E1 gives (A, B, C) of the cubic, E2 and E3 give (A, B, C, D) of the
    quartics and E4 gives (A, B, C, D, E) of the quintic. The closed-form D and
    E of the quintic do not match the Jacobian; ``characteristic_polynomial``
    is the reliable source for E4.
    """
    x, y, v, z, w = point if point is not None else equilibrium_point(p, label)
    d, a, mu, beta, N = p.d, p.a, p.mu, p.beta, p.N
    pz, qw, bv = p.p * z, p.q * w, beta * v
    if label == "E1":
        R0 = r0(p)
        return (a + mu + d * R0,
                a * d + mu * d * R0 + a * d * (R0 - 1.0),
                a * d * mu * (R0 - 1.0))
    if label == "E2":
        h = p.h
        return (d + a + mu + bv + pz,
                (d + bv) * (a + mu) + a * mu + pz * (d + mu + h + bv) - a * N * beta * x,
                a * mu * (d + bv) + pz * (mu * d + h * d + mu * h + mu * bv + h * bv) - a * N * beta * d * x,
                pz * (mu * h * d + mu * h * bv - a * N * beta * h * y))
    if label == "E3":
        al = p.alpha
        return (a + d + mu + bv + qw,
                (d + bv) * (a + mu) + a * mu + (d + a + al + bv) * qw - a * N * beta * x,
                a * mu * (d + bv) + (a * d + al * d + a * al + a * bv) * qw - a * N * d * beta * x,
                a * d * al * qw)
    if label == "E4":
        h, al = p.h, p.alpha
        A = a + d + mu + bv + pz + qw
        B = ((d + bv) * (a + mu) + a * mu + pz * (d + h + mu + bv + qw)
             + qw * (d + a + al + bv) - a * N * beta * x)
        C = (a * mu * (d + bv) + pz * (d * mu + d * h + mu * h + mu * bv + h * bv)
             + qw * (a * d + al * d + a * al + a * bv) + pz * qw * (d + al + h + bv)
             - a * N * beta * d * x)
        D = (a * d * qw + pz * (d * h * mu + mu * h * bv - a * N * beta * h * y)
             + pz * qw * (d * al + al * bv + h * al))
        E = al * h * d * (pz * qw + a * N * bv - a * N * beta * x)
        return (A, B, C, D, E)
    raise ValueError(f"no closed-form coefficient list for {label!r}")


def disease_free_eigenvalues(p: ModelParams) -> np.ndarray:
    """Closed-form spectrum of the Jacobian at Ef."""
    R0 = r0(p)
    s = p.a + p.mu
    disc = complex(s * s - 4.0 * p.a * p.mu * (1.0 - R0))
    root = np.sqrt(disc)
    return np.array([-p.d, -p.alpha, -p.h, (-s - root) / 2.0, (-s + root) / 2.0], dtype=complex)


# Diagonal entries that are eigenvalues at each point, paired with the threshold
# whose excess over 1 fixes their sign (None: always negative).
_DECOUPLED = {
    "Ef": [(0, None), (3, None), (4, None)],
    "E1": [(3, r_ctl), (4, r_w)],
    "E2": [(4, r_ctl_w1)],
    "E3": [(3, r_ctl_w2)],
    "E4": [],
}


def _decoupled_signs_agree(p: ModelParams, label: str, J: np.ndarray) -> bool:
    for idx, threshold in _DECOUPLED[label]:
        value = J[idx, idx]
        if abs(value) <= EPS_STAB:
            continue
        if threshold is None:
            if value > 0:
                return False
            continue
        excess = threshold(p) - 1.0
        if abs(excess) > THRESHOLD_BAND and (excess > 0) != (value > 0):
            return False
    return True


def classify_stability(p: ModelParams, report: EquilibriumReport) -> EquilibriumReport:
    """Fill in eigenvalues and a stability verdict backed by two independent routes.

    The threshold conditions give the analytic verdict; the eigenvalues of the
    full Jacobian give the numeric one. If either is Marginal the result is
    Marginal. A contradiction is accepted, with the numeric verdict, only at an
    endemic point whose threshold-governed eigenvalues have the predicted signs
    while the coupled block fails the Routh-Hurwitz test, since that block's
    stability is asserted rather than implied by the thresholds. Any other
    contradiction raises ConsistencyError.
    """
    if not report.exists:
        return replace(report, stability=Stability.NOT_APPLICABLE, eigenvalues=None,
                       analytic=None, numeric=None)
    J = jacobian(p, report.point)
    try:
        eig = np.linalg.eigvals(J)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigenvalue computation failed at {report.label}: {exc}") from exc
    if not np.all(np.isfinite(eig)):
        raise NumericError(f"non-finite eigenvalues at {report.label}")
    eig = np.array(sorted(eig, key=lambda e: (e.real, e.imag)), dtype=complex)
    analytic = analytic_verdict(p, report.label)
    numeric = numeric_verdict(eig)
    reason = report.reason
    if analytic == numeric:
        verdict = numeric
    elif Stability.MARGINAL in (analytic, numeric):
        verdict = Stability.MARGINAL
    elif (report.label != "Ef" and analytic == Stability.STABLE
          and _decoupled_signs_agree(p, report.label, J)
          and not hurwitz_stable(characteristic_polynomial(p, report.label, report.point))):
        verdict = numeric
        reason = (reason + "; " if reason else "") + "Routh-Hurwitz conditions fail on the coupled block"
    else:
        raise ConsistencyError(f"stability verdicts disagree at {report.label}",
                               analytic=analytic.value, numeric=numeric.value)
    return replace(report, stability=verdict, eigenvalues=eig, analytic=analytic,
                   numeric=numeric, reason=reason)
