"""Config-driven experiment harness.

A text config (``key = value`` lines) selects a scenario, a topology, a
step-size grid, and the methods to compare. ``run_suite`` builds the network
and the drifting objective, tunes each method's step size by tail error,
reruns it at the tuned value, and persists one CSV per run plus a summary
table. Everything is seeded, so identical configs produce byte-identical
output trees.

Scenarios:

- ``I``: streaming least squares with the optimum moving on the unit circle.
- ``II``: shifting consensus, targets reassigned by p+1 positions per step,
  so per-agent gradients jump violently while their average stays fixed.
- ``III``: the same construction with a unit shift per step.
- ``static``: shift 0, i.e. a fixed consensus problem with zero drift.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .algorithms import ALGORITHMS, init_state, run
from .analysis import RegimeError, steady_state_bound
from .problems import DriftProfile, drift_profile, least_squares_stream, shifting_consensus
from .records import TrajectoryRecord, read_record, write_record
from .topology import (
    Graph,
    WeightMatrix,
    build_complete,
    build_cycle,
    build_grid,
    build_line,
    build_random,
    calibrate_beta,
    metropolis_weights,
    uniform_neighbor_weights,
)

OUTPUT_ROOT_ENV = "NETDRIFT_OUTPUT"

SCENARIOS = ("I", "II", "III", "static")
TOPOLOGIES = ("cycle", "line", "grid", "complete", "random")
WEIGHT_RULES = ("uniform", "metropolis")
INITS = ("zeros", "optimum")

SUMMARY_HEADER = ["algorithm", "alpha", "beta", "n", "steady_state_error", "theory_bound"]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class DivergenceError(RuntimeError):
    """A run produced non-finite tracking error."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite tracking error first appears at iteration {iteration}")
        self.iteration = iteration


class TuningError(RuntimeError):
    """Every step size on the tuning grid diverged."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment.

    ``n`` sizes the network for scenario I; scenarios II/III/static derive
    n = 2p+1 from ``p``. ``stepsizes`` overrides the default tuning grid of
    ``grid_points`` log-spaced values spanning [1e-4, 1] * 2/(mu+L).
    ``shift`` defaults to p+1 for scenario II, 1 for III, and 0 for static.
    """

    scenario: str
    topology: str = "cycle"
    n: int | None = None
    rows: int | None = None
    cols: int | None = None
    edge_probability: float | None = None
    target_beta: float | None = None
    weight_rule: str = "uniform"
    horizon: int = 1000
    stepsizes: tuple[float, ...] | None = None
    grid_points: int = 30
    algorithms: tuple[str, ...] = ("diffusion", "dgt")
    seed: int = 0
    tail_fraction: float = 0.2
    output_dir: str | None = None
    p: int | None = None
    spacing_m: float = 1.0
    shift: int | None = None
    rows_per_agent: int = 1
    init: str = "zeros"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}")
        if self.weight_rule not in WEIGHT_RULES:
            raise ConfigError(f"unknown weight rule {self.weight_rule!r}")
        if self.init not in INITS:
            raise ConfigError(f"unknown init {self.init!r}; expected one of {INITS}")
        if self.horizon < 10:
            raise ConfigError(f"horizon must be at least 10, got {self.horizon}")
        if not 0 < self.tail_fraction <= 0.5:
            raise ConfigError(f"tail_fraction must lie in (0, 0.5], got {self.tail_fraction}")
        if self.stepsizes is not None:
            object.__setattr__(self, "stepsizes", tuple(float(a) for a in self.stepsizes))
            if not self.stepsizes:
                raise ConfigError("stepsizes must be nonempty when given")
            if any(a <= 0 for a in self.stepsizes):
                raise ConfigError("stepsizes must be positive")
            if any(b <= a for a, b in zip(self.stepsizes, self.stepsizes[1:])):
                raise ConfigError("stepsizes must be strictly increasing")
        if self.grid_points < 1:
            raise ConfigError("grid_points must be positive")
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not self.algorithms:
            raise ConfigError("algorithms must be nonempty")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms {unknown}; expected among {ALGORITHMS}")
        if self.scenario == "I":
            if self.n is None:
                raise ConfigError("scenario I needs n, the number of agents")
        else:
            if self.p is None or self.p < 1:
                raise ConfigError("scenarios II/III/static need p >= 1")
            if self.scenario == "static" and self.shift not in (None, 0):
                raise ConfigError("the static scenario has shift 0 by definition")

    @property
    def network_size(self) -> int:
        return self.n if self.scenario == "I" else 2 * self.p + 1

    @property
    def resolved_shift(self) -> int:
        if self.shift is not None:
            return self.shift
        return {"II": self.p + 1, "III": 1, "static": 0}.get(self.scenario, 0)


_INT_KEYS = {"n", "rows", "cols", "horizon", "seed", "p", "shift", "grid_points", "rows_per_agent"}
_FLOAT_KEYS = {"edge_probability", "target_beta", "spacing_m", "tail_fraction"}
_STR_KEYS = {"scenario", "topology", "weight_rule", "output_dir", "init"}
_LIST_KEYS = {"stepsizes", "algorithms"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the ``key = value`` config format (# comments, blank lines ok)."""
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key == "stepsizes":
                kwargs[key] = tuple(float(tok) for tok in value.split(","))
            elif key == "algorithms":
                kwargs[key] = tuple(tok.strip() for tok in value.split(","))
            else:
                kwargs[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: cannot parse {key} = {value!r}") from exc
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Path | str) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def build_network(config: ExperimentConfig) -> tuple[Graph, WeightMatrix]:
    """Materialize the topology and its mixing matrix for the config."""
    size = config.network_size
    if config.topology == "random":
        if config.target_beta is not None:
            _, graph, wm = calibrate_beta(size, config.target_beta, config.seed)
            return graph, wm
        if config.edge_probability is None:
            raise ConfigError("random topology needs edge_probability or target_beta")
        graph = build_random(size, config.edge_probability, config.seed)
    elif config.topology == "cycle":
        graph = build_cycle(size)
    elif config.topology == "line":
        graph = build_line(size)
    elif config.topology == "complete":
        graph = build_complete(size)
    else:
        if config.rows is None or config.cols is None:
            raise ConfigError("grid topology needs rows and cols")
        if config.rows * config.cols != size:
            raise ConfigError(
                f"grid {config.rows}x{config.cols} does not hold {size} agents"
            )
        graph = build_grid(config.rows, config.cols)
    rule = uniform_neighbor_weights if config.weight_rule == "uniform" else metropolis_weights
    return graph, rule(graph)


def build_objective(config: ExperimentConfig):
    if config.scenario == "I":
        return least_squares_stream(
            n=config.n,
            horizon=config.horizon,
            seed=config.seed,
            rows_per_agent=config.rows_per_agent,
        )
    return shifting_consensus(
        p=config.p,
        spacing_m=config.spacing_m,
        shift=config.resolved_shift,
        horizon=config.horizon,
    )


def steady_state_error(record: TrajectoryRecord, tail_fraction: float) -> float:
    """Mean normalized tracking error over the final ceil(tail_fraction*M) steps."""
    series = record.tracking_error
    finite = np.isfinite(series)
    if not finite.all():
        raise DivergenceError(int(np.argmin(finite)))
    window = math.ceil(tail_fraction * (len(series) - 1))
    if window < 1:
        raise ValueError("tail window is empty; record too short for this tail_fraction")
    return float(series[-window:].mean())


def _tail_max(record: TrajectoryRecord, tail_fraction: float) -> float:
    window = math.ceil(tail_fraction * (len(record) - 1))
    return float(record.tracking_error[-window:].max())


def default_grid(config: ExperimentConfig, mu: float, lipschitz: float) -> tuple[float, ...]:
    top = 2 / (mu + lipschitz)
    return tuple(top * np.logspace(-4.0, 0.0, config.grid_points))


def select_best(grid, scores) -> float:
    """Pick the score-minimizing step size, resolving ties toward larger steps."""
    best_alpha = None
    best_score = math.inf
    for alpha, score in zip(grid, scores):
        if math.isfinite(score) and score <= best_score:
            best_alpha, best_score = alpha, score
    if best_alpha is None:
        raise TuningError(f"every step size diverged: {[float(a) for a in grid]}")
    return best_alpha


def run_single(config, objective, wm, algorithm, alpha) -> TrajectoryRecord:
    """One configured run of a method on a prebuilt objective and network."""
    initial = None
    if config.init == "optimum":
        x0 = np.tile(objective.optimum(0), (objective.n, 1))
        initial = init_state(algorithm, objective, wm, x0)
    return run(
        algorithm,
        objective,
        wm,
        alpha,
        config.horizon,
        initial_state=initial,
        seed=config.seed,
        scenario=config.scenario,
    )


def tune_stepsize(
    config: ExperimentConfig,
    algorithm: str,
    _context: tuple | None = None,
) -> tuple[float, TrajectoryRecord]:
    """Sweep the grid with a shared seed; return the best step and its record."""
    if _context is None:
        objective = build_objective(config)
        _, wm = build_network(config)
    else:
        objective, wm = _context
    grid = config.stepsizes or default_grid(config, objective.mu, objective.lipschitz)
    scores = []
    records = []
    for alpha in grid:
        record = run_single(config, objective, wm, algorithm, alpha)
        records.append(record)
        try:
            scores.append(steady_state_error(record, config.tail_fraction))
        except DivergenceError:
            scores.append(math.inf)
    best = select_best(grid, scores)
    return float(best), records[list(grid).index(best)]


@dataclass(frozen=True)
class SummaryRow:
    algorithm: str
    alpha: float
    beta: float
    n: int
    steady_state_error: float
    theory_bound: float | None


@dataclass(frozen=True)
class SuiteResult:
    directory: Path
    rows: tuple[SummaryRow, ...]
    records: dict = field(default_factory=dict)


def resolve_output_dir(config: ExperimentConfig) -> Path:
    sub = Path(config.output_dir) if config.output_dir else Path(f"suite_{config.scenario}")
    if sub.is_absolute():
        return sub
    return Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / sub


def run_suite(config: ExperimentConfig) -> SuiteResult:
    """Tune every requested method, rerun at the tuned step, persist, summarize.

    The summary's theory_bound column holds the steady-state bound divided by
    the problem's normalization constant, so it compares directly against the
    steady_state_error column; it is left empty when the tuned step size
    falls outside the regime where the bound applies.
    """
    directory = resolve_output_dir(config)
    directory.mkdir(parents=True, exist_ok=True)
    objective = build_objective(config)
    _, wm = build_network(config)
    drift = drift_profile(objective)

    rows = []
    records = {}
    for algorithm in config.algorithms:
        alpha, _ = tune_stepsize(config, algorithm, _context=(objective, wm))
        record = run_single(config, objective, wm, algorithm, alpha)
        error = steady_state_error(record, config.tail_fraction)
        try:
            bound = steady_state_bound(
                algorithm, alpha, objective.mu, objective.lipschitz, wm.beta, drift
            )
            bound /= record.metadata.normalization
        except (RegimeError, ValueError):
            bound = None
        meta = replace(
            record.metadata,
            delta_x=drift.delta_x,
            grad_bound=drift.grad_bound,
            grad_drift=drift.grad_drift,
            extra={
                **record.metadata.extra,
                "steady_state_tail_max": _tail_max(record, config.tail_fraction),
            },
        )
        record = replace(record, metadata=meta)
        write_record(record, directory / f"{algorithm}.csv")
        records[algorithm] = record
        rows.append(
            SummaryRow(
                algorithm=algorithm,
                alpha=alpha,
                beta=float(wm.beta),
                n=objective.n,
                steady_state_error=error,
                theory_bound=bound,
            )
        )

    _write_summary(rows, directory / "summary.csv")
    return SuiteResult(directory=directory, rows=tuple(rows), records=records)


def _write_summary(rows, path: Path) -> None:
    lines = [",".join(SUMMARY_HEADER)]
    for row in rows:
        bound = "" if row.theory_bound is None else repr(float(row.theory_bound))
        lines.append(
            f"{row.algorithm},{row.alpha!r},{row.beta!r},{row.n},"
            f"{row.steady_state_error!r},{bound}"
        )
    path.write_text("\n".join(lines) + "\n")


def audit_record_file(csv_path: Path | str):
    """Load a persisted record plus its drift constants, ready for auditing."""
    record = read_record(Path(csv_path))
    meta = record.metadata
    if meta.delta_x is None or meta.grad_bound is None or meta.grad_drift is None:
        raise ValueError(
            "record sidecar carries no drift constants; re-run the suite or pass them explicitly"
        )
    drift = DriftProfile(
        delta_x=meta.delta_x, grad_bound=meta.grad_bound, grad_drift=meta.grad_drift
    )
    return record, drift
