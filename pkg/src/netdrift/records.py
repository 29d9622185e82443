"""Trajectory records: per-iteration error series plus run metadata.

A record captures everything needed to audit a finished run from disk: the
CSV holds the per-iteration series (header `k,tracking_error,consensus_dev,
avg_error,y_dev`), and a JSON sidecar next to it holds the metadata (the
constants of the problem and network, the step size, and the seed).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

CSV_HEADER = ["k", "tracking_error", "consensus_dev", "avg_error", "y_dev"]


@dataclass(frozen=True)
class RunMetadata:
    """Constants identifying a run; enough to re-evaluate bounds and audits."""

    algorithm: str
    alpha: float
    beta: float
    scenario: str
    seed: int
    n: int
    d: int
    horizon: int
    mu: float
    lipschitz: float
    normalization: float
    delta_x: float | None = None
    grad_bound: float | None = None
    grad_drift: float | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-iteration error series for one run.

    tracking_error is the headline metric: the root mean square distance of
    agent iterates to the current optimum, divided by the squared norm of
    the optimum. consensus_dev and y_dev are root mean square deviations
    from the network averages; avg_error is the distance of the average
    iterate to the optimum. All three are stacked norms divided by sqrt(n)
    (replicating the average across agents before stacking), so they live
    on a common per-agent scale.
    """

    metadata: RunMetadata
    iterations: NDArray[np.int64]
    tracking_error: NDArray[np.float64]
    consensus_dev: NDArray[np.float64]
    avg_error: NDArray[np.float64]
    y_dev: NDArray[np.float64] | None = None
    tracker_identity_max: float | None = None

    def __post_init__(self):
        length = len(self.iterations)
        for series in (self.tracking_error, self.consensus_dev, self.avg_error):
            if len(series) != length:
                raise ValueError("record series lengths disagree")
        if self.y_dev is not None and len(self.y_dev) != length:
            raise ValueError("record series lengths disagree")

    def __len__(self) -> int:
        return len(self.iterations)


def sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ".meta.json")


def write_record(record: TrajectoryRecord, csv_path: Path) -> None:
    """Persist the CSV series and the JSON metadata sidecar."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for idx in range(len(record)):
            y_val = "" if record.y_dev is None else repr(float(record.y_dev[idx]))
            writer.writerow(
                [
                    int(record.iterations[idx]),
                    repr(float(record.tracking_error[idx])),
                    repr(float(record.consensus_dev[idx])),
                    repr(float(record.avg_error[idx])),
                    y_val,
                ]
            )
    payload = {
        "metadata": asdict(record.metadata),
        "tracker_identity_max": record.tracker_identity_max,
    }
    sidecar_path(csv_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_record(csv_path: Path) -> TrajectoryRecord:
    """Load a record written by :func:`write_record`."""
    csv_path = Path(csv_path)
    iterations: list[int] = []
    columns: dict[str, list[float]] = {name: [] for name in CSV_HEADER[1:]}
    with open(csv_path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for row in reader:
            iterations.append(int(row[0]))
            for name, value in zip(CSV_HEADER[1:], row[1:]):
                columns[name].append(float(value) if value != "" else math.nan)
    payload = json.loads(sidecar_path(csv_path).read_text())
    meta = RunMetadata(**payload["metadata"])
    y_raw = np.array(columns["y_dev"])
    y_dev = None if np.isnan(y_raw).all() else y_raw
    return TrajectoryRecord(
        metadata=meta,
        iterations=np.array(iterations, dtype=np.int64),
        tracking_error=np.array(columns["tracking_error"]),
        consensus_dev=np.array(columns["consensus_dev"]),
        avg_error=np.array(columns["avg_error"]),
        y_dev=y_dev,
        tracker_identity_max=payload.get("tracker_identity_max"),
    )
