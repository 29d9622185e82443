"""Contraction models, step-size regimes, steady-state bounds, and audits.

The one-step behaviour of each method is summarized by a small nonnegative
matrix recursion z+ <= A z + b coupling the average-iterate error, the
consensus deviation, and (for tracking) the tracker deviation, all measured
as stacked norms. The spectral radius of A certifies geometric decay of the
transient, and the resolvent (I - A)^{-1} applied to b yields the
steady-state bounds. ``audit_recursions`` replays the inequalities row by
row against a recorded trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .problems import DriftProfile
from .records import TrajectoryRecord

# relative slack admitted when checking a step size against a regime boundary,
# so alpha = max_stepsize(...) itself always passes
_REGIME_RTOL = 1e-12

AUDIT_SLACK = 1e-9


class RegimeError(ValueError):
    """Constants or step size outside the range where a statement applies."""


class AuditViolation(RuntimeError):
    """A recorded trajectory broke one of the one-step inequalities."""


@dataclass(frozen=True)
class ContractionModel:
    """Nonnegative one-step recursion z+ <= A z + b with rho = spectral radius of A."""

    A: NDArray[np.float64]
    b: NDArray[np.float64]
    rho: float

    def __post_init__(self):
        if (self.A < 0).any():
            raise ValueError("contraction matrix must be entrywise nonnegative")


def _validate_constants(mu: float, lipschitz: float, beta: float) -> None:
    if not 0 < mu <= lipschitz:
        raise RegimeError(f"constants must satisfy 0 < mu <= L, got mu={mu}, L={lipschitz}")
    if not 0 <= beta < 1:
        raise RegimeError(f"beta must lie in [0, 1), got {beta}")


def _validate_stepsize(alpha: float, limit: float, description: str) -> None:
    if alpha <= 0:
        raise RegimeError(f"step size must be positive, got {alpha}")
    if alpha > limit * (1 + _REGIME_RTOL):
        raise RegimeError(
            f"step size {alpha} exceeds the admissible {description} = {limit}"
        )


def _rho_2x2(A: NDArray[np.float64]) -> float:
    # nonnegative 2x2: discriminant >= 0, both eigenvalues real
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    root = math.sqrt(max(tr * tr - 4 * det, 0.0))
    return max(abs(tr + root), abs(tr - root)) / 2


def _rho_3x3(A: NDArray[np.float64]) -> float:
    tr = A[0, 0] + A[1, 1] + A[2, 2]
    minors = (
        A[0, 0] * A[1, 1]
        - A[0, 1] * A[1, 0]
        + A[0, 0] * A[2, 2]
        - A[0, 2] * A[2, 0]
        + A[1, 1] * A[2, 2]
        - A[1, 2] * A[2, 1]
    )
    det = float(np.linalg.det(A))
    coeffs = (-tr, minors, -det)
    roots = np.roots([1.0, *coeffs])
    real = roots.real[np.abs(roots.imag) <= 1e-8 * (1 + np.abs(roots.real))]
    if real.size == 0:
        return float(np.abs(roots).max())
    # the dominant eigenvalue of a nonnegative matrix is real; polish it
    x = float(real.max())
    for _ in range(50):
        p = ((x + coeffs[0]) * x + coeffs[1]) * x + coeffs[2]
        dp = (3 * x + 2 * coeffs[0]) * x + coeffs[1]
        if dp == 0:
            break
        step = p / dp
        x -= step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            break
    return x


def diffusion_contraction(
    alpha: float,
    mu: float,
    lipschitz: float,
    beta: float,
    delta_x: float = 0.0,
    grad_bound: float = 0.0,
    n: int = 1,
) -> ContractionModel:
    """2x2 recursion for diffusion over [avg_error, consensus_dev] stacked norms."""
    _validate_constants(mu, lipschitz, beta)
    _validate_stepsize(alpha, 2 / (mu + lipschitz), "2/(mu + L)")
    contraction = 1 - alpha * mu / 2
    A = np.array(
        [
            [contraction, alpha * lipschitz],
            [alpha * beta * lipschitz, beta],
        ]
    )
    root_n = math.sqrt(n)
    b = np.array(
        [
            contraction * root_n * delta_x,
            alpha * beta * lipschitz * root_n * delta_x + alpha * beta * root_n * grad_bound,
        ]
    )
    return ContractionModel(A=A, b=b, rho=_rho_2x2(A))


def dgt_contraction(
    alpha: float,
    mu: float,
    lipschitz: float,
    beta: float,
    delta_x: float = 0.0,
    grad_drift: float = 0.0,
    n: int = 1,
) -> ContractionModel:
    """3x3 recursion for tracking over [y_dev, consensus_dev, avg_error] stacked norms."""
    _validate_constants(mu, lipschitz, beta)
    _validate_stepsize(alpha, (1 - beta) / (2 * lipschitz), "(1 - beta)/(2L)")
    _validate_stepsize(alpha, 2 / (mu + lipschitz), "2/(mu + L)")
    A = np.array(
        [
            [(1 + beta) / 2, 5 * lipschitz, 3 * lipschitz],
            [alpha * beta, beta, 0.0],
            [0.0, alpha * lipschitz, 1 - alpha * mu / 2],
        ]
    )
    root_n = math.sqrt(n)
    b = np.array(
        [
            lipschitz * root_n * delta_x + root_n * grad_drift,
            0.0,
            root_n * delta_x,
        ]
    )
    return ContractionModel(A=A, b=b, rho=_rho_3x3(A))


def max_stepsize(algorithm: str, mu: float, lipschitz: float, beta: float) -> float:
    """Largest step size with a certified contraction rate for the method."""
    _validate_constants(mu, lipschitz, beta)
    gap = 1 - beta
    if algorithm == "diffusion":
        return mu * gap / (10 * lipschitz**2)
    if algorithm == "dgt":
        return min(
            3 * gap**2 / (80 * lipschitz),
            gap / (2 * mu),
            gap**2 * mu / (768 * lipschitz**2),
        )
    raise ValueError(f"no step-size certificate for algorithm {algorithm!r}")


def resolvent_majorant(
    alpha: float, mu: float, lipschitz: float, beta: float
) -> NDArray[np.float64]:
    """Entrywise upper bound on (I - A)^{-1} for the tracking recursion."""
    L = lipschitz
    gap = 1 - beta
    prefactor = 8 / (gap**2 * alpha * mu)
    return prefactor * np.array(
        [
            [alpha * mu * gap / 2, 6 * alpha * L**2, 3 * L * gap],
            [alpha**2 * beta * mu / 2, alpha * mu * gap / 4, 3 * alpha * beta * L],
            [alpha**2 * beta * L, alpha * L * gap / 2, gap**2 / 2],
        ]
    )


def diffusion_bound(
    alpha: float,
    mu: float,
    lipschitz: float,
    beta: float,
    delta_x: float,
    grad_bound: float,
) -> float:
    """Steady-state tracking-error bound for diffusion, per-agent scale."""
    _validate_constants(mu, lipschitz, beta)
    _validate_stepsize(
        alpha, max_stepsize("diffusion", mu, lipschitz, beta), "mu(1 - beta)/(10 L^2)"
    )
    gap = 1 - beta
    return (4 / (alpha * mu) + 4 * beta * lipschitz / (mu * gap)) * delta_x + (
        6 * alpha * beta * lipschitz * grad_bound / (mu * gap)
    )


def dgt_bound(
    alpha: float,
    mu: float,
    lipschitz: float,
    beta: float,
    delta_x: float,
    grad_drift: float,
) -> float:
    """Steady-state tracking-error bound for gradient tracking, per-agent scale."""
    _validate_constants(mu, lipschitz, beta)
    gap = 1 - beta
    _validate_stepsize(
        alpha, gap**2 * mu / (768 * lipschitz**2), "(1 - beta)^2 mu/(768 L^2)"
    )
    return (4 / (alpha * mu) + 40 * beta * lipschitz / (gap**2 * mu)) * delta_x + (
        16 * alpha * beta * lipschitz / (gap**2 * mu)
    ) * grad_drift


def steady_state_bound(
    algorithm: str,
    alpha: float,
    mu: float,
    lipschitz: float,
    beta: float,
    drift: DriftProfile,
) -> float:
    """Dispatch to the method's steady-state bound with the measured drift."""
    if algorithm == "diffusion":
        return diffusion_bound(alpha, mu, lipschitz, beta, drift.delta_x, drift.grad_bound)
    if algorithm == "dgt":
        return dgt_bound(alpha, mu, lipschitz, beta, drift.delta_x, drift.grad_drift)
    raise ValueError(f"no steady-state bound for algorithm {algorithm!r}")


@dataclass(frozen=True)
class AuditEntry:
    """Result of replaying one inequality: the worst slack-adjusted excess."""

    name: str
    max_violation: float
    worst_iteration: int
    enforced: bool = True


@dataclass(frozen=True)
class AuditReport:
    algorithm: str
    entries: tuple[AuditEntry, ...]

    def clean(self) -> bool:
        return all(e.max_violation <= 0 for e in self.entries if e.enforced)

    def to_text(self) -> str:
        lines = [
            f"{e.name}: max_violation={e.max_violation:.6e} "
            f"worst_iteration={e.worst_iteration} enforced={e.enforced}"
            for e in self.entries
        ]
        return "\n".join(lines)


def _violation_entry(name, lhs, rhs, enforced=True) -> AuditEntry:
    excess = lhs - rhs - AUDIT_SLACK * (1 + rhs)
    worst = int(np.argmax(excess))
    return AuditEntry(
        name=name,
        max_violation=float(excess[worst]),
        worst_iteration=worst + 1,
        enforced=enforced,
    )


def audit_recursions(
    record: TrajectoryRecord,
    drift: DriftProfile,
    algorithm: str | None = None,
    strict: bool = True,
) -> AuditReport:
    """Replay the per-step inequalities of the contraction model on a record.

    The recorded series are stacked norms divided by sqrt(n), so the model
    is built with n=1 and applies to them verbatim. For tracking runs the
    squared-average variant of the tracker inequality is also evaluated and
    reported, but never enforced: it is dimensionally inconsistent with the
    linear recursion and kept for reference only.
    """
    meta = record.metadata
    algorithm = algorithm if algorithm is not None else meta.algorithm
    if algorithm not in ("diffusion", "dgt"):
        raise ValueError(f"no audited recursion for algorithm {algorithm!r}")
    if len(record) < 2:
        raise ValueError("record too short to audit: need at least one step")

    if algorithm == "diffusion":
        model = diffusion_contraction(
            meta.alpha,
            meta.mu,
            meta.lipschitz,
            meta.beta,
            delta_x=drift.delta_x,
            grad_bound=drift.grad_bound,
            n=1,
        )
        names = ("avg_error_step", "consensus_step")
        series = np.vstack([record.avg_error, record.consensus_dev])
    else:
        if record.y_dev is None:
            raise ValueError("tracker series missing: record was not produced by dgt")
        model = dgt_contraction(
            meta.alpha,
            meta.mu,
            meta.lipschitz,
            meta.beta,
            delta_x=drift.delta_x,
            grad_drift=drift.grad_drift,
            n=1,
        )
        names = ("tracker_step", "consensus_step", "avg_error_step")
        series = np.vstack([record.y_dev, record.consensus_dev, record.avg_error])

    if not np.isfinite(series).all():
        raise ValueError("record contains non-finite values; audit requires finite series")

    lhs = series[:, 1:]
    rhs = model.A @ series[:, :-1] + model.b[:, None]
    entries = [_violation_entry(name, lhs[i], rhs[i]) for i, name in enumerate(names)]

    if algorithm == "dgt":
        # reference-only variant with the squared average error in the
        # tracker row; the sqrt(n) restores the stacked-norm square
        t, c, a = series[0, :-1], series[1, :-1], series[2, :-1]
        root_n = math.sqrt(meta.n)
        rhs_sq = (
            (1 + meta.beta) / 2 * t
            + 5 * meta.lipschitz * c
            + 3 * meta.lipschitz * root_n * a**2
            + model.b[0]
        )
        entries.append(
            _violation_entry("tracker_step_squared_variant", lhs[0], rhs_sq, enforced=False)
        )

    report = AuditReport(algorithm=algorithm, entries=tuple(entries))
    if strict:
        offenders = [e for e in report.entries if e.enforced and e.max_violation > 0]
        if offenders:
            worst = max(offenders, key=lambda e: e.max_violation)
            raise AuditViolation(
                f"{worst.name} inequality violated at iteration "
                f"{worst.worst_iteration} by {worst.max_violation:.3e}"
            )
    return report
