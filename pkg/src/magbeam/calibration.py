"""Minimax grid-search calibration of the two model scale factors.

The forward model carries two dimensionless knobs: the stiffness scale
(applied to E I) and the field scale k_b. Both are fitted against
experimental tip-tracking records by exhaustive grid search minimizing
the maximum in-plane tip position error over the dataset.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .beam import BeamFormulation, RobotParams, TipPose
from .equilibrium import SolverSettings, SweepPoint, sweep
from .geomag import ContractViolation, DipoleSource, FieldCalibration, RingPairConfig

PLANE_AXES = {"xy": (0, 1), "xz": (0, 2), "xyz": (0, 1, 2)}


@dataclass(frozen=True)
class ExperimentRecord:
    """One tracked data point: measured magnet angles and tip position.

    ``tip`` holds NaN for components the tracking plane does not observe;
    ``plane`` names the observed plane ('xy', 'xz' or 'xyz' for full 3D).
    """

    theta1: float  # [rad]
    theta2: float  # [rad]
    tip: np.ndarray  # [m], NaN where unobserved
    plane: str = "xy"

    def __post_init__(self):
        tip = np.asarray(self.tip, dtype=float)
        if tip.shape != (3,):
            raise ContractViolation("tip must be a 3-vector")
        object.__setattr__(self, "tip", tip)
        if self.plane not in PLANE_AXES:
            raise ContractViolation(f"unknown plane tag {self.plane!r}")
        axes = PLANE_AXES[self.plane]
        finite = np.isfinite(tip)
        if finite.sum() < 2:
            raise ContractViolation("at least two finite tip components required")
        for k in range(3):
            if (k in axes) != bool(finite[k]):
                raise ContractViolation(
                    f"plane tag {self.plane!r} inconsistent with tip components"
                )

    @property
    def axes(self) -> tuple[int, ...]:
        return PLANE_AXES[self.plane]


def in_plane_error(record: ExperimentRecord, predicted_position) -> float:
    """Euclidean distance between measurement and prediction, projected
    onto the record's measurement plane."""
    pred = np.asarray(predicted_position, dtype=float)
    axes = list(record.axes)
    return float(np.linalg.norm(record.tip[axes] - pred[axes]))


@dataclass(frozen=True)
class FitMetrics:
    max_abs_error: float  # [m]
    mean_abs_error: float  # [m]
    std_error: float  # [m], population standard deviation
    r_squared: float

    def as_dict_mm(self) -> dict:
        return {
            "max_abs_error_mm": self.max_abs_error * 1e3,
            "mean_abs_error_mm": self.mean_abs_error * 1e3,
            "std_error_mm": self.std_error * 1e3,
            "r_squared": self.r_squared,
        }


def evaluate_metrics(
    records: list[ExperimentRecord],
    predictions: list[TipPose],
) -> FitMetrics:
    """Error statistics of model predictions against tracked records.

    Per-record error is the in-plane Euclidean distance. R^2 is computed
    over the stacked observed position components, with the total sum of
    squares taken about each component's own mean (equivalently, about
    the mean deflection; a constant baseline shift cancels).
    """
    if len(records) != len(predictions):
        raise ContractViolation("records and predictions must have equal length")
    if len(records) < 2:
        raise ContractViolation("need at least two records")
    errors = np.array([
        in_plane_error(r, p.position) for r, p in zip(records, predictions)
    ])
    ss_res = 0.0
    ss_tot = 0.0
    for axis in range(3):
        meas = np.array([r.tip[axis] for r in records if axis in r.axes])
        pred = np.array([
            p.position[axis] for r, p in zip(records, predictions) if axis in r.axes
        ])
        if meas.size == 0:
            continue
        ss_res += float(np.sum((meas - pred) ** 2))
        ss_tot += float(np.sum((meas - meas.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else (1.0 if ss_res == 0.0 else -np.inf)
    return FitMetrics(
        max_abs_error=float(errors.max()),
        mean_abs_error=float(errors.mean()),
        std_error=float(errors.std()),
        r_squared=r2,
    )


@dataclass(frozen=True)
class CalibrationGrid:
    """Search grid for the (stiffness scale, field scale) pair."""

    ke_values: np.ndarray = field(
        default_factory=lambda: np.linspace(0.009, 0.018, 25)
    )
    kb_values: np.ndarray = field(
        default_factory=lambda: np.linspace(3.5, 4.5, 25)
    )

    def __post_init__(self):
        for name in ("ke_values", "kb_values"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim != 1 or v.size == 0:
                raise ContractViolation(f"{name} must be a nonempty 1-D sequence")
            if v.size > 1 and not np.all(np.diff(v) > 0):
                raise ContractViolation(f"{name} must be strictly increasing")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class CalibrationResult:
    ke_star: float
    kb_star: float
    grid: CalibrationGrid
    error_surface: np.ndarray  # [m], shape (n_ke, n_kb), max-abs error per cell
    metrics_at_optimum: FitMetrics


def _predict_records(
    records: list[ExperimentRecord],
    params: RobotParams,
    pair_template: RingPairConfig,
    source: DipoleSource,
    cal: FieldCalibration,
    settings: SolverSettings,
    mode: BeamFormulation,
) -> list[SweepPoint]:
    t1 = [r.theta1 for r in records]
    t2 = [r.theta2 for r in records]
    return sweep(
        params, pair_template, source, cal, settings, mode, t1, t2,
        zipped=True, warm_start=True,
    )


def _cell_score(
    records: list[ExperimentRecord],
    params: RobotParams,
    pair_template: RingPairConfig,
    source: DipoleSource,
    ke: float,
    kb: float,
    settings: SolverSettings,
    mode: BeamFormulation,
) -> float:
    cell_params = replace(params, stiffness_scale=float(ke))
    points = _predict_records(
        records, cell_params, pair_template, source,
        FieldCalibration(float(kb)), settings, mode,
    )
    worst = 0.0
    for rec, pt in zip(records, points):
        if pt.result is None or not pt.result.converged:
            return math.inf
        worst = max(worst, in_plane_error(rec, pt.result.tip.position))
    return worst


def default_thread_count() -> int:
    """Worker count from MAGBEAM_THREADS (0 or unset = automatic)."""
    raw = os.environ.get("MAGBEAM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else min(8, os.cpu_count() or 1)


class CalibrationError(RuntimeError):
    """No feasible grid cell (all forward solves diverged)."""


def grid_search_calibrate(
    records: list[ExperimentRecord],
    params: RobotParams,
    pair_template: RingPairConfig,
    source: DipoleSource,
    grid: CalibrationGrid = CalibrationGrid(),
    settings: SolverSettings = SolverSettings(),
    mode: BeamFormulation = BeamFormulation.CORRECTED,
    threads: int | None = None,
) -> CalibrationResult:
    """Exhaustive minimax search over the calibration grid.

    Every cell stores the maximum in-plane tip error over the records;
    diverging cells score +inf. The argmin cell wins, ties broken
    lexicographically by (ke, kb). Rows are evaluated in a thread pool;
    the reduction is deterministic regardless of execution order.
    """
    if not records:
        raise ContractViolation("records must be nonempty")

    def row(i: int) -> np.ndarray:
        ke = grid.ke_values[i]
        return np.array([
            _cell_score(records, params, pair_template, source, ke, kb,
                        settings, mode)
            for kb in grid.kb_values
        ])

    n_ke = grid.ke_values.size
    workers = threads if threads is not None else default_thread_count()
    if workers > 1 and n_ke > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(row, range(n_ke)))
    else:
        rows = [row(i) for i in range(n_ke)]
    surface = np.vstack(rows)

    if not np.any(np.isfinite(surface)):
        raise CalibrationError("every grid cell diverged")
    best = np.min(surface)
    i, j = min(map(tuple, np.argwhere(surface == best)))
    ke_star = float(grid.ke_values[i])
    kb_star = float(grid.kb_values[j])

    opt_params = replace(params, stiffness_scale=ke_star)
    points = _predict_records(
        records, opt_params, pair_template, source,
        FieldCalibration(kb_star), settings, mode,
    )
    preds = [
        pt.result.tip if pt.result is not None
        else TipPose(np.full(3, np.nan), np.array([1.0, 0.0, 0.0]))
        for pt in points
    ]
    metrics = evaluate_metrics(records, preds)
    return CalibrationResult(
        ke_star=ke_star, kb_star=kb_star, grid=grid,
        error_surface=surface, metrics_at_optimum=metrics,
    )


def notch_to_angle(notch_position: float, slope: float, offset: float) -> float:
    """Linear notch-position-to-rotation transform.

    ``slope`` is in rad/m and ``offset`` in m; returns
    slope * (notch_position - offset).
    """
    if not (math.isfinite(notch_position) and math.isfinite(slope)
            and math.isfinite(offset)):
        raise ContractViolation("notch transform inputs must be finite")
    return slope * (notch_position - offset)


def load_experiment_csv(
    path,
    notch_slope: float | None = None,
    notch_offset: float | None = None,
) -> list[ExperimentRecord]:
    """Read experiment records from CSV.

    Expected columns: ``theta1_deg,theta2_deg,x_mm,y_mm,z_mm`` with angles
    in degrees and positions in millimeters; an empty ``z_mm`` marks a
    planar top-view (x-y) record, an empty ``y_mm`` a side-view (x-z)
    one. When both notch parameters are given, a ``notch_mm`` column
    replaces ``theta1_deg`` (slope in rad/m, offset in m). A missing
    ``theta2_deg`` defaults to 0.
    """
    use_notch = notch_slope is not None and notch_offset is not None
    records: list[ExperimentRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ContractViolation(f"{path}: empty CSV")
        cols = set(reader.fieldnames)
        needed = {"x_mm", "y_mm"} | ({"notch_mm"} if use_notch else {"theta1_deg"})
        missing = needed - cols
        if missing:
            raise ContractViolation(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            def num(key, default=None):
                raw = (row.get(key) or "").strip()
                if raw == "":
                    return default
                try:
                    return float(raw)
                except ValueError as exc:
                    raise ContractViolation(
                        f"{path}:{line}: bad value for {key}: {raw!r}"
                    ) from exc

            if use_notch:
                theta1 = notch_to_angle(num("notch_mm") * 1e-3, notch_slope,
                                        notch_offset)
            else:
                theta1 = math.radians(num("theta1_deg"))
            theta2 = math.radians(num("theta2_deg", 0.0))
            x = num("x_mm")
            y = num("y_mm")
            z = num("z_mm")
            if x is None:
                raise ContractViolation(f"{path}:{line}: x_mm is required")
            tip = np.array([
                x * 1e-3,
                np.nan if y is None else y * 1e-3,
                np.nan if z is None else z * 1e-3,
            ])
            if y is None and z is None:
                raise ContractViolation(f"{path}:{line}: need y_mm or z_mm")
            plane = "xyz" if (y is not None and z is not None) else (
                "xy" if y is not None else "xz"
            )
            records.append(ExperimentRecord(theta1, theta2, tip, plane))
    if not records:
        raise ContractViolation(f"{path}: no data rows")
    return records
