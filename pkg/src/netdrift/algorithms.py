"""Decentralized first-order iterations for drifting objectives.

Four methods share one state container and one run harness:

- ``diffusion``: adapt-then-combine; each agent takes a local gradient step
  against the newly revealed objective and averages with its neighbors.
- ``dgt``: diffusion on top of a gradient-tracking recursion; an auxiliary
  stack ``y`` follows the network-average gradient, so the method removes
  the steady-state consensus bias that plain diffusion keeps paying for.
- ``extra`` and ``exact_diffusion``: history-correction baselines that
  difference consecutive gradients; both need one diffusion-style bootstrap
  step before their two-term recursion is defined.

All step functions are pure: they take a state and return a new one, never
mutating arrays in place. Mixing is applied through the sparse view of the
weight matrix, so each update touches neighbor values only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .problems import DynamicObjective
from .records import RunMetadata, TrajectoryRecord
from .topology import WeightMatrix

ALGORITHMS = ("diffusion", "dgt", "extra", "exact_diffusion")


class StepError(RuntimeError):
    """A single iteration could not be executed."""


class SequencingError(StepError):
    """A two-term recursion was invoked before its history was bootstrapped."""


class ShapeMismatchError(ValueError):
    """Objective, weight matrix, and state disagree on network size or dimension."""


@dataclass(frozen=True)
class AlgorithmState:
    """Iterate stacks for one method at one time index.

    ``x_stack`` holds one row per agent. The optional stacks are only
    populated by the methods that need them: ``y_stack`` is the tracker,
    ``prev_grad_stack`` holds the gradients evaluated at the previous
    objective/iterate pair, and ``prev_x_stack`` the previous iterates.
    """

    x_stack: NDArray[np.float64]
    step_count: int
    y_stack: NDArray[np.float64] | None = None
    prev_grad_stack: NDArray[np.float64] | None = None
    prev_x_stack: NDArray[np.float64] | None = None


def _check_compatible(objective: DynamicObjective, wm: WeightMatrix, x_stack) -> None:
    if wm.n != objective.n:
        raise ShapeMismatchError(
            f"weight matrix is {wm.n}x{wm.n} but the objective couples {objective.n} agents"
        )
    if x_stack.shape != (objective.n, objective.d):
        raise ShapeMismatchError(
            f"state shape {x_stack.shape} does not match ({objective.n}, {objective.d})"
        )


def init_state(
    algorithm: str,
    objective: DynamicObjective,
    wm: WeightMatrix,
    x0: NDArray[np.float64] | None = None,
) -> AlgorithmState:
    """Build the starting state for ``algorithm`` (all-zeros iterates by default)."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if x0 is None:
        x0 = np.zeros((objective.n, objective.d))
    else:
        x0 = np.array(x0, dtype=np.float64)
    _check_compatible(objective, wm, x0)
    if algorithm == "dgt":
        g0 = objective.gradient_stack(0, x0)
        return AlgorithmState(x_stack=x0, step_count=0, y_stack=g0, prev_grad_stack=g0.copy())
    return AlgorithmState(x_stack=x0, step_count=0)


def _mix(wm: WeightMatrix, stack: NDArray[np.float64]) -> NDArray[np.float64]:
    return wm.csr @ stack


def _half_mix(wm: WeightMatrix, stack: NDArray[np.float64]) -> NDArray[np.float64]:
    # (I + W)/2 applied without forming the dense average
    return 0.5 * (stack + wm.csr @ stack)


def diffusion_step(
    state: AlgorithmState,
    objective: DynamicObjective,
    wm: WeightMatrix,
    alpha: float,
    k: int,
) -> AlgorithmState:
    """Adapt against the objective revealed at k+1, then combine."""
    if state.y_stack is not None or state.prev_x_stack is not None:
        raise StepError("diffusion state must not carry auxiliary stacks")
    grads = objective.gradient_stack(k + 1, state.x_stack)
    x_new = _mix(wm, state.x_stack - alpha * grads)
    return replace(state, x_stack=x_new, step_count=state.step_count + 1)


def dgt_step(
    state: AlgorithmState,
    objective: DynamicObjective,
    wm: WeightMatrix,
    alpha: float,
    k: int,
) -> AlgorithmState:
    """Descend along the tracker, combine, then refresh the tracker.

    The tracker update adds the gradient innovation at the new iterate and
    subtracts the one recorded at the old, which preserves the invariant
    that the network average of ``y`` equals the network average of the
    current local gradients.
    """
    if state.y_stack is None or state.prev_grad_stack is None:
        raise StepError("tracking step requires y_stack and prev_grad_stack")
    x_new = _mix(wm, state.x_stack - alpha * state.y_stack)
    g_new = objective.gradient_stack(k + 1, x_new)
    y_new = _mix(wm, state.y_stack) + g_new - state.prev_grad_stack
    return AlgorithmState(
        x_stack=x_new,
        step_count=state.step_count + 1,
        y_stack=y_new,
        prev_grad_stack=g_new,
    )


def extra_bootstrap(
    state: AlgorithmState,
    objective: DynamicObjective,
    wm: WeightMatrix,
    alpha: float,
) -> AlgorithmState:
    """One diffusion-style step that seeds the two-term recursion."""
    grads = objective.gradient_stack(1, state.x_stack)
    x_new = _mix(wm, state.x_stack - alpha * grads)
    return AlgorithmState(
        x_stack=x_new,
        step_count=state.step_count + 1,
        prev_grad_stack=grads,
        prev_x_stack=state.x_stack,
    )


def extra_step(
    state: AlgorithmState,
    objective: DynamicObjective,
    wm: WeightMatrix,
    alpha: float,
    k: int,
) -> AlgorithmState:
    """Gradient-difference correction with mixed current and half-mixed past iterates."""
    if state.prev_x_stack is None or state.prev_grad_stack is None:
        raise SequencingError("extra_step called before extra_bootstrap seeded the history")
    grads = objective.gradient_stack(k + 1, state.x_stack)
    x_new = (
        state.x_stack
        + _mix(wm, state.x_stack)
        - _half_mix(wm, state.prev_x_stack)
        - alpha * (grads - state.prev_grad_stack)
    )
    return AlgorithmState(
        x_stack=x_new,
        step_count=state.step_count + 1,
        prev_grad_stack=grads,
        prev_x_stack=state.x_stack,
    )


def exact_diffusion_bootstrap(
    state: AlgorithmState,
    objective: DynamicObjective,
    wm: WeightMatrix,
    alpha: float,
) -> AlgorithmState:
    grads = objective.gradient_stack(1, state.x_stack)
    x_new = _half_mix(wm, state.x_stack - alpha * grads)
    return AlgorithmState(
        x_stack=x_new,
        step_count=state.step_count + 1,
        prev_grad_stack=grads,
        prev_x_stack=state.x_stack,
    )


def exact_diffusion_step(
    state: AlgorithmState,
    objective: DynamicObjective,
    wm: WeightMatrix,
    alpha: float,
    k: int,
) -> AlgorithmState:
    """Adapt-correct-combine written with the correction variable eliminated."""
    if state.prev_x_stack is None or state.prev_grad_stack is None:
        raise SequencingError(
            "exact_diffusion_step called before exact_diffusion_bootstrap seeded the history"
        )
    grads = objective.gradient_stack(k + 1, state.x_stack)
    inner = (
        2.0 * state.x_stack
        - state.prev_x_stack
        - alpha * (grads - state.prev_grad_stack)
    )
    return AlgorithmState(
        x_stack=_half_mix(wm, inner),
        step_count=state.step_count + 1,
        prev_grad_stack=grads,
        prev_x_stack=state.x_stack,
    )


_BOOTSTRAPS = {"extra": extra_bootstrap, "exact_diffusion": exact_diffusion_bootstrap}
_STEPS = {
    "diffusion": diffusion_step,
    "dgt": dgt_step,
    "extra": extra_step,
    "exact_diffusion": exact_diffusion_step,
}


def run(
    algorithm: str,
    objective: DynamicObjective,
    wm: WeightMatrix,
    alpha: float,
    horizon: int,
    initial_state: AlgorithmState | None = None,
    seed: int = 0,
    scenario: str | None = None,
) -> TrajectoryRecord:
    """Run ``horizon`` steps and record the error series at every iterate.

    The recorded series are, per iteration k: the root mean square distance
    of the agent iterates to the current optimum divided by the problem's
    normalization constant, the root mean square consensus deviation, the
    distance of the average iterate to the optimum, and (tracking only) the
    root mean square tracker deviation. All deviation series are stacked
    norms divided by sqrt(n), which lets the one-step inequalities of the
    analysis module apply to the recorded series without size factors.
    Overflow during divergent runs is recorded as non-finite values rather
    than raised.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if alpha <= 0:
        raise ValueError("step size must be positive")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if horizon > objective.horizon:
        raise ValueError(
            f"requested horizon {horizon} exceeds the objective's {objective.horizon}"
        )
    state = initial_state if initial_state is not None else init_state(algorithm, objective, wm)
    _check_compatible(objective, wm, state.x_stack)

    normalization = float(getattr(objective, "normalization", 1.0))
    length = horizon + 1
    tracking = np.empty(length)
    consensus = np.empty(length)
    avg_error = np.empty(length)
    y_dev = np.empty(length) if algorithm == "dgt" else None
    identity_max = 0.0 if algorithm == "dgt" else None

    step = _STEPS[algorithm]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(length):
            x = state.x_stack
            opt = objective.optimum(k)
            diff = x - opt
            tracking[k] = np.sqrt(np.mean(np.sum(diff**2, axis=1))) / normalization
            x_bar = x.mean(axis=0)
            centered = x - x_bar
            consensus[k] = np.sqrt(np.mean(np.sum(centered**2, axis=1)))
            avg_error[k] = np.linalg.norm(x_bar - opt)
            if algorithm == "dgt":
                y = state.y_stack
                y_bar = y.mean(axis=0)
                y_dev[k] = np.sqrt(np.mean(np.sum((y - y_bar) ** 2, axis=1)))
                gap = np.linalg.norm(y_bar - state.prev_grad_stack.mean(axis=0))
                if gap > identity_max or not np.isfinite(gap):
                    identity_max = float(gap)
            if k == horizon:
                break
            try:
                if k == 0 and algorithm in _BOOTSTRAPS and state.prev_x_stack is None:
                    state = _BOOTSTRAPS[algorithm](state, objective, wm, alpha)
                else:
                    state = step(state, objective, wm, alpha, k)
            except Exception as exc:
                raise StepError(f"{algorithm} step failed at iteration {k}") from exc

    meta = RunMetadata(
        algorithm=algorithm,
        alpha=float(alpha),
        beta=float(wm.beta),
        scenario=scenario if scenario is not None else type(objective).__name__,
        seed=int(seed),
        n=int(objective.n),
        d=int(objective.d),
        horizon=int(horizon),
        mu=float(objective.mu),
        lipschitz=float(objective.lipschitz),
        normalization=normalization,
    )
    return TrajectoryRecord(
        metadata=meta,
        iterations=np.arange(length, dtype=np.int64),
        tracking_error=tracking,
        consensus_dev=consensus,
        avg_error=avg_error,
        y_dev=y_dev,
        tracker_identity_max=identity_max,
    )
