"""Operator-side DC state estimation and residual-based bad data detection."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import TooFewSamplesError, UnobservableError
from .grid_model import MeasurementModel

RTU_SIGMA = 0.05


@dataclass(frozen=True, eq=False)
class MeasurementVector:
    z: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma is not None and np.any(np.asarray(self.sigma) <= 0):
            raise ValueError("measurement noise std must be positive")

    def __len__(self):
        return len(self.z)


@dataclass(frozen=True, eq=False)
class EstimationResult:
    x_hat: np.ndarray  # non-reference angles, radians
    residual: float  # infinity norm
    passed: bool | None = None


def draw_measurements(model: MeasurementModel, x: np.ndarray, rng: np.random.Generator,
                      sigma: float | np.ndarray = RTU_SIGMA) -> MeasurementVector:
    """``z = H x + e`` with independent ``e_i ~ N(0, sigma_i^2)``."""
    sig = np.broadcast_to(np.asarray(sigma, float), (model.H.shape[0],))
    z = model.H @ x + rng.standard_normal(len(sig)) * sig
    return MeasurementVector(z, np.array(sig))


def wls_estimate(model: MeasurementModel, z, gamma: float | None = None) -> EstimationResult:
    """``x_hat = (H^T W H)^-1 H^T W z`` solved through a QR factorisation of
    ``W^(1/2) H``; the residual is ``||z - H x_hat||_inf``."""
    z = np.asarray(getattr(z, "z", z), float)
    if z.shape != (model.H.shape[0],):
        raise ValueError(f"expected {model.H.shape[0]} measurements, got {z.shape}")
    sw, q, r = model._qr
    d = np.abs(np.diag(r))
    if d.size and d.min() <= 1e-12 * d.max():
        raise UnobservableError("measurement set does not make the network observable")
    x_hat = np.linalg.solve(r, q.T @ (sw * z))
    res = float(np.max(np.abs(z - model.H @ x_hat)))
    passed = None if gamma is None else bdd_check(res, gamma)
    return EstimationResult(x_hat, res, passed)


def calibrate_threshold(residuals, quantile: float = 0.95) -> float:
    """Empirical quantile with linear interpolation between order statistics."""
    r = np.asarray(residuals, float)
    if r.size < 100:
        raise TooFewSamplesError(f"need at least 100 residual samples, got {r.size}")
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie strictly between 0 and 1")
    return float(np.quantile(r, quantile, method="linear"))


def bdd_check(residual: float, gamma: float) -> bool:
    """Measurements pass only when the residual is strictly below ``gamma``."""
    return residual < gamma


def write_estimation_report(path, buses, before_deg, after_deg, residual, gamma) -> None:
    passed = "" if gamma is None else bdd_check(residual, gamma)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus", "angle_deg_before", "angle_deg_after", "residual", "gamma", "pass"])
        for b, x0, x1 in zip(buses, before_deg, after_deg):
            w.writerow([b, repr(float(x0)), repr(float(x1)), repr(float(residual)),
                        "" if gamma is None else repr(float(gamma)), passed])


def read_measurements_csv(path, model: MeasurementModel) -> np.ndarray:
    """Read ``measurement_id,value`` rows into a vector aligned with ``model``."""
    z = np.full(model.H.shape[0], np.nan)
    with open(path, newline="") as fh:
        for rec in csv.reader(line for line in fh if not line.startswith("#")):
            if not rec or rec[0] == "measurement_id":
                continue
            z[model.row_index[rec[0]]] = float(rec[1])
    if np.isnan(z).any():
        missing = [model.measurements[k].label for k in np.flatnonzero(np.isnan(z))]
        raise ValueError(f"{path}: missing measurements {missing[:5]}...")
    return z


def write_measurements_csv(path, model: MeasurementModel, z) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["measurement_id", "value"])
        for m, v in zip(model.measurements, np.asarray(getattr(z, "z", z))):
            w.writerow([m.label, repr(float(v))])
