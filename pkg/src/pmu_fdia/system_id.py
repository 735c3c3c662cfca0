"""Drift-matrix identification from PMU samples and line-parameter extraction.

The regression theorem for a stable OU process gives
``C(lag) = exp(A * lag) C(0)``, so ``A = log(C(lag) C(0)^-1) / lag``.
The time constant of the target load fixes the scale, after which the line
coefficients follow as ``W_tj = tau_t * A_tj``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.linalg

from .errors import (
    IdentificationError,
    ImaginaryResidueError,
    PrincipalLogError,
    SingularInputError,
    TooFewSamplesError,
)
from .stochastic_sim import PmuTrace


@dataclass(frozen=True, eq=False)
class LagCorrelation:
    mean: np.ndarray
    C0: np.ndarray
    C_lag: np.ndarray
    lag: float  # seconds
    M: int
    N: int
    buses: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class IdentifiedModel:
    A_hat: np.ndarray
    tau: float
    coefficients: Mapping[int, float]  # neighbour -> W_tj (positive)
    target: int
    buses: tuple[int, ...]

    @property
    def susceptances(self) -> dict[int, float]:
        return {j: -w for j, w in self.coefficients.items()}


def lag_correlation(trace: PmuTrace, M: int = 1) -> LagCorrelation:
    """Sample mean, covariance and ``M``-sample lag correlation.

    The lagged sum pairs sample ``i`` with sample ``i - M`` and is
    normalised by ``N - M - 1``.
    """
    x = np.asarray(trace.angles, float)
    N = x.shape[0]
    if M < 1:
        raise ValueError("lag M must be at least one sample")
    if N < M + 2:
        raise TooFewSamplesError(f"need at least M + 2 = {M + 2} samples, got {N}")
    mu = x.mean(axis=0)
    d = x - mu
    C0 = d.T @ d / (N - 1)
    scale = np.abs(x).max(axis=0)
    flat = (np.ptp(x, axis=0) == 0) | (np.diag(C0) <= (4 * np.finfo(float).eps * scale) ** 2)
    if np.any(flat):
        quiet = [b for b, f in zip(trace.buses, flat) if f]
        raise SingularInputError(f"zero-variance angle series at buses {quiet}")
    C_lag = d[M:].T @ d[:-M] / (N - M - 1)
    return LagCorrelation(mu, C0, C_lag, M * trace.interval, M, N, tuple(trace.buses))


# ---------------------------------------------------------------------------
# principal matrix logarithm

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _sqrtm_triangular(T: np.ndarray) -> np.ndarray:
    n = T.shape[0]
    R = np.zeros_like(T)
    for j in range(n):
        R[j, j] = np.sqrt(T[j, j])
        for i in range(j - 1, -1, -1):
            s = T[i, j] - R[i, i + 1:j] @ R[i + 1:j, j]
            R[i, j] = s / (R[i, i] + R[j, j])
    return R


def _log_near_identity(T: np.ndarray) -> np.ndarray:
    # log(I + X) = int_0^1 X (I + s X)^-1 ds, by Gauss-Legendre on [0, 1]
    n = T.shape[0]
    eye = np.eye(n, dtype=T.dtype)
    X = T - eye
    out = np.zeros_like(T)
    for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
        s = 0.5 * (node + 1.0)
        out += 0.5 * weight * np.linalg.solve(eye + s * X, X)
    return out


def _log_schur(m: np.ndarray) -> np.ndarray:
    T, Z = scipy.linalg.schur(m.astype(complex), output="complex")
    k = 0
    while np.linalg.norm(T - np.eye(T.shape[0]), 1) > 0.25:
        T = _sqrtm_triangular(T)
        k += 1
        if k > 64:
            raise PrincipalLogError("inverse scaling and squaring did not converge")
    L = (2.0 ** k) * _log_near_identity(T)
    return Z @ L @ Z.conj().T


def matrix_log_principal(m, cond_limit: float = 1e8) -> np.ndarray:
    """Principal logarithm of a square matrix.

    Uses the eigendecomposition when the eigenvector matrix has condition
    number at most ``cond_limit`` and a Schur-based inverse scaling and
    squaring method otherwise.  The result is complex whenever the
    computation went through complex arithmetic; real inputs have a real
    principal logarithm up to rounding.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    n = m.shape[0]
    if n == 0:
        return m.astype(float)
    scale = np.linalg.norm(m, 2)
    w, V = np.linalg.eig(m)
    if scale == 0 or np.min(np.abs(w)) <= n * np.finfo(float).eps * scale:
        raise SingularInputError("matrix is singular; logarithm undefined")
    tol = 1e3 * np.finfo(float).eps
    on_cut = (w.real < 0) & (np.abs(w.imag) <= tol * np.abs(w))
    if np.any(on_cut):
        raise PrincipalLogError(
            f"eigenvalue {w[on_cut][0]:.6g} lies on the negative real axis; "
            "the principal logarithm does not exist (lag too long or data too noisy?)")

    if np.linalg.cond(V) <= cond_limit:
        L = (V * np.log(w.astype(complex))) @ np.linalg.inv(V)
    else:
        L = _log_schur(m)
    if np.isrealobj(m) and np.allclose(L.imag, 0.0, atol=0.0):
        return L.real
    return L


def estimate_A(corr: LagCorrelation, imag_tol: float = 1e-6) -> np.ndarray:
    """``A_hat = log(C(lag) C(0)^-1) / lag`` with the imaginary residue discarded."""
    try:
        G = np.linalg.solve(corr.C0.T, corr.C_lag.T).T
    except np.linalg.LinAlgError:
        raise SingularInputError("zero-lag correlation matrix is singular") from None
    L = matrix_log_principal(G) / corr.lag
    if np.iscomplexobj(L):
        imag = np.linalg.norm(L.imag)
        if imag > imag_tol * np.linalg.norm(L.real):
            raise ImaginaryResidueError(
                f"log has imaginary part of norm {imag:.3g} (relative {imag / np.linalg.norm(L.real):.3g})")
        L = L.real
    return L


def _time_constant_regression(trace: PmuTrace, n: int):
    if n < 2:
        raise TooFewSamplesError("need at least two injection samples")
    if len(trace.injection) < n:
        raise TooFewSamplesError(
            f"trace holds {len(trace.injection)} injection samples, {n} requested")
    p = np.asarray(trace.injection[:n], float)
    delta = trace.angle(trace.target)[:n]
    Y = np.diff(delta) / trace.interval
    X = p.mean() - p[:-1]
    return X, Y


def estimate_time_constant(trace: PmuTrace, n: int = 10) -> float:
    """Least-squares fit of ``d(delta_t)/dt = (mean(P_t) - P_t) / tau``
    over the first ``n`` samples of the trace."""
    X, Y = _time_constant_regression(trace, n)
    if not np.any(X):
        raise SingularInputError("injection series is constant; regressor is degenerate")
    coef, *_ = np.linalg.lstsq(X[:, None], Y, rcond=None)
    inv_tau = float(coef[0])
    if not inv_tau > 0:
        raise IdentificationError(f"fitted 1/tau = {inv_tau:.4g} is not positive")
    return 1.0 / inv_tau


def time_constant_normal_equation(trace: PmuTrace, n: int = 10) -> float:
    """Explicit ``(X^T X)^-1 X^T Y`` form of :func:`estimate_time_constant`."""
    X, Y = _time_constant_regression(trace, n)
    return float((X @ X) / (X @ Y))


def extract_line_params(A_hat: np.ndarray, tau: float, region) -> IdentifiedModel:
    """``W_tj = tau * A_hat[t, j]`` for every neighbour ``j`` of the target.

    ``region`` supplies ``target``, ``neighbors`` and ``buses``; the last
    gives the row/column order of ``A_hat``.
    """
    if not tau > 0:
        raise IdentificationError(f"time constant must be positive, got {tau}")
    buses = tuple(region.buses)
    t = buses.index(region.target)
    coeffs = {}
    for j in sorted(region.neighbors):
        w = tau * float(A_hat[t, buses.index(j)])
        if not w > 0:
            raise IdentificationError(
                f"extracted coefficient for line {region.target}-{j} is {w:.4g}, not positive")
        coeffs[j] = w
    return IdentifiedModel(np.asarray(A_hat), float(tau), coeffs, region.target, buses)


def identify(trace: PmuTrace, region, M: int = 1, n: int = 10) -> IdentifiedModel:
    """Identification chain: lag correlation, drift matrix, time constant,
    line coefficients.  ``trace.buses`` must follow ``region.buses``."""
    if tuple(trace.buses) != tuple(region.buses) or trace.target != region.target:
        raise ValueError("trace buses / target do not match the attack region")
    A_hat = estimate_A(lag_correlation(trace, M))
    tau = estimate_time_constant(trace, n)
    return extract_line_params(A_hat, tau, region)


def identification_rows(model: IdentifiedModel, true_tau: float | None = None,
                        true_coefficients: Mapping[int, float] | None = None):
    """Rows ``(quantity, true, estimated, rel_error)``; ``true`` is None when
    ground truth is unknown."""
    def row(name, truth, est):
        if truth is None:
            return (name, None, est, None)
        return (name, truth, est, abs(est - truth) / abs(truth))

    rows = [row(f"tau_{model.target}", true_tau, model.tau)]
    for j, w in model.coefficients.items():
        truth = None if true_coefficients is None else -true_coefficients[j]
        rows.append(row(f"B_{j}_{model.target}", truth, -w))
    return rows


def write_identification_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "true", "estimated", "rel_error"])
        for q, truth, est, err in rows:
            w.writerow([q, "" if truth is None else repr(float(truth)), repr(float(est)),
                        "" if err is None else repr(float(err))])


def read_identification_csv(path) -> tuple[float, dict[int, float], int]:
    """Return ``(tau, {neighbour: W}, target)`` from an identification CSV."""
    tau, coeffs, target = None, {}, None
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            q = rec["quantity"]
            est = float(rec["estimated"])
            if q.startswith("tau_"):
                tau, target = est, int(q[4:])
            elif q.startswith("B_"):
                j, t = (int(v) for v in q[2:].split("_"))
                coeffs[j] = -est
                target = t
    if tau is None:
        raise ValueError(f"{path}: no time constant row")
    return tau, coeffs, target
