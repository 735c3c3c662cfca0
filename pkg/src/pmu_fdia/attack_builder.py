"""Targeted attack construction inside the attacking region.

The adversary shifts the operator's view of one load-bus angle from
``delta_t`` to ``delta_t_fake`` by rewriting the flows on lines incident to
the target and the injections of the target and its neighbours.  Only the
line coefficients ``W_tj`` of those lines are needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InfeasibleTargetError, MissingParameterError, UnobservableError
from .grid_model import GridCase, MeasurementModel, neighbors


@dataclass(frozen=True)
class AttackRegion:
    target: int
    neighbors: frozenset[int]
    generator_adjacent: frozenset[int] = frozenset()

    @property
    def buses(self) -> tuple[int, ...]:
        return tuple(sorted(self.neighbors | {self.target}))

    @property
    def size(self) -> int:
        return len(self.neighbors) + 1


def determine_region(case: GridCase, target: int) -> AttackRegion:
    """Target bus plus every bus directly connected to it.

    Generator measurements cannot be manipulated, so the target and all of
    its neighbours must be load buses.  Region buses that touch a generator
    are flagged in ``generator_adjacent``.
    """
    if case.is_generator(target):
        raise InfeasibleTargetError(f"target {target} is a generator bus; its measurements cannot be attacked")
    nbrs = neighbors(case, target)
    gens = sorted(j for j in nbrs if case.is_generator(j))
    if gens:
        raise InfeasibleTargetError(
            f"target {target}: neighbouring generator buses {gens} would need manipulated injections")
    region = nbrs | {target}
    adjacent = {b for b in region if any(case.is_generator(j) for j in neighbors(case, b))}
    return AttackRegion(target, frozenset(nbrs), frozenset(adjacent))


@dataclass(frozen=True)
class AttackSpec:
    target_angle: float  # radians, the angle the operator should see
    reference_angles: Mapping[int, float]  # PMU angles for the target and its neighbours

    @classmethod
    def from_trace(cls, trace, target_angle: float, window: int = 60) -> "AttackSpec":
        """Reference angles as the mean of the last ``window`` PMU samples."""
        recent = trace.angles[-window:]
        return cls(target_angle, dict(zip(trace.buses, recent.mean(axis=0))))


@dataclass(frozen=True, eq=False)
class AttackVector:
    deltas: Mapping[int, float]  # measurement row -> additive delta (per-unit)
    c: float  # implied deviation of the target angle (radians)
    target: int
    target_angle: float
    labels: Mapping[int, str] = field(default_factory=dict)

    def dense(self, n_rows: int) -> np.ndarray:
        a = np.zeros(n_rows)
        for row, d in self.deltas.items():
            a[row] = d
        return a

    def apply(self, z: np.ndarray) -> np.ndarray:
        z = np.array(z, dtype=float)
        for row, d in self.deltas.items():
            z[row] += d
        return z


def build_attack_vector(region: AttackRegion, model, spec: AttackSpec,
                        meas_model: MeasurementModel, z=None) -> AttackVector:
    """Fake flows ``P~_tj = W_tj (delta~_t - delta_j)``, fake target injection
    ``P~_t = sum_j P~_tj`` and neighbour injections ``P~_j = P_j + P~_jt - P_jt``.

    The pre-attack flows ``P_tj`` are evaluated from the PMU reference angles
    with the identified coefficients, so the adversary needs no RTU data.
    The returned deltas are fake minus pre-attack values, mapped onto the
    stored meter directions.  ``z`` is only used for a length check.
    """
    t = region.target
    if z is not None and len(np.asarray(getattr(z, "z", z))) != meas_model.H.shape[0]:
        raise ValueError("measurement vector does not match the measurement model")
    angles = spec.reference_angles
    missing = [b for b in region.buses if b not in angles]
    if missing:
        raise MissingParameterError(f"no reference angle for buses {missing}")
    if not np.isfinite(spec.target_angle):
        raise ValueError("target angle must be finite")

    fake_t = spec.target_angle
    c = fake_t - angles[t]
    deltas: dict[int, float] = {}
    labels = {}

    def add(row, value):
        deltas[row] = float(deltas.get(row, 0.0) + value)
        labels[row] = meas_model.measurements[row].label

    inj_t = 0.0
    for j in sorted(region.neighbors):
        try:
            w = model.coefficients[j]
        except KeyError:
            raise MissingParameterError(f"no identified coefficient for line {t}-{j}") from None
        flow_now = w * (angles[t] - angles[j])
        flow_fake = w * (fake_t - angles[j])
        d = flow_fake - flow_now
        rows = [k for k, m in enumerate(meas_model.measurements)
                if m.kind == "flow" and {m.bus, m.to_bus} == {t, j}]
        if len(rows) != 1:
            raise InfeasibleTargetError(f"expected one flow meter on line {t}-{j}, found {len(rows)}")
        row, sign = meas_model.flow_row(t, j)
        add(row, sign * d)
        inj_t += d
        # P~_jt = -P~_tj in the lossless model
        add(meas_model.injection_row(j), -d)
    add(meas_model.injection_row(t), inj_t)
    return AttackVector(deltas, float(c), t, float(fake_t), labels)


def estimated_jacobian(meas_model: MeasurementModel, case: GridCase, model) -> np.ndarray:
    """Operator Jacobian with the target's line coefficients replaced by the
    identified ones, i.e. the ``H_hat`` implied by the adversary's knowledge."""
    H = np.array(meas_model.H)
    col = meas_model.column_index
    t = model.target
    for j, w_hat in model.coefficients.items():
        dw = w_hat - case.line_coefficient(t, j)
        # dP_tj/d(delta_t) = W, dP_tj/d(delta_j) = -W, and the same on the
        # injection rows of t (+) and j (-)
        row, sign = meas_model.flow_row(t, j)
        for r, s in ((row, sign), (meas_model.injection_row(t), 1.0),
                     (meas_model.injection_row(j), -1.0)):
            if t in col:
                H[r, col[t]] += s * dw
            if j in col:
                H[r, col[j]] -= s * dw
    return H


def predict_residual_shift(H_true, H_hat, c, W=None) -> float:
    """``||(I - H (H^T W H)^-1 H^T W) (H_hat - H) c||_inf``, the residual
    inflation an attack ``a = H_hat c`` adds on top of the noise residual."""
    H = np.asarray(H_true, float)
    dH = np.asarray(H_hat, float) - H
    c = np.asarray(c, float)
    if dH.shape != H.shape or c.shape != (H.shape[1],):
        raise ValueError("shape mismatch between H, H_hat and c")
    w = np.ones(H.shape[0]) if W is None else np.asarray(W, float)
    if w.ndim == 2:
        w = np.diag(w)
    v = dH @ c
    gain = H.T @ (w[:, None] * H)
    if np.linalg.matrix_rank(gain) < H.shape[1]:
        raise UnobservableError("gain matrix H^T W H is singular")
    proj = H @ np.linalg.solve(gain, H.T @ (w * v))
    return float(np.max(np.abs(v - proj), initial=0.0))


def write_attack_csv(attack: AttackVector, meas_model: MeasurementModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# target: {attack.target}\n")
        fh.write(f"# target_angle_rad: {float(attack.target_angle)!r}\n")
        fh.write(f"# c_rad: {float(attack.c)!r}\n")
        fh.write("measurement_id,delta_pu\n")
        for row in sorted(attack.deltas):
            fh.write(f"{meas_model.measurements[row].label},{float(attack.deltas[row])!r}\n")


def read_attack_csv(path, meas_model: MeasurementModel) -> np.ndarray:
    """Dense attack vector aligned with ``meas_model`` rows."""
    a = np.zeros(meas_model.H.shape[0])
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("measurement_id"):
                continue
            label, value = line.split(",")
            a[meas_model.row_index[label]] += float(value)
    return a
