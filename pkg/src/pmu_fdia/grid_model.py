"""Grid cases, DC power flow and the DC measurement Jacobian.

Physical flows use the positive line coefficient ``W_ij = 1/x_ij`` so that
``P_ij = W_ij * (delta_i - delta_j)``.  The susceptance reported to users is
``B_ij = -W_ij``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import (
    CaseFormatError,
    DanglingBranchError,
    DisconnectedGridError,
    DuplicateBusError,
    NonPositiveReactanceError,
    ReferenceBusError,
    UnknownBusError,
)

GENERATOR = "generator"
LOAD = "load"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # GENERATOR or LOAD
    ps: float  # static active injection, per-unit


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    x: float  # series reactance, per-unit

    @property
    def coefficient(self) -> float:
        """Positive line coefficient ``W = 1/x``."""
        return 1.0 / self.x

    @property
    def susceptance(self) -> float:
        """Reported susceptance ``B = -1/x``."""
        return -1.0 / self.x


@dataclass(frozen=True)
class GridCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    reference_bus: int
    base_mva: float = 100.0

    def __post_init__(self):
        _validate(self)

    @functools.cached_property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @functools.cached_property
    def index(self) -> dict[int, int]:
        """Bus id -> position in :attr:`buses`."""
        return {b: k for k, b in enumerate(self.bus_ids)}

    def bus(self, bus_id: int) -> Bus:
        try:
            return self.buses[self.index[bus_id]]
        except KeyError:
            raise UnknownBusError(f"unknown bus {bus_id}") from None

    def is_generator(self, bus_id: int) -> bool:
        return self.bus(bus_id).kind == GENERATOR

    @property
    def load_buses(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind == LOAD)

    @property
    def generator_buses(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind == GENERATOR)

    @property
    def static_injections(self) -> np.ndarray:
        return np.array([b.ps for b in self.buses])

    def line_coefficient(self, i: int, j: int) -> float:
        """Total coefficient of all branches between buses ``i`` and ``j``."""
        w = sum(br.coefficient for br in self.branches
                if {br.from_bus, br.to_bus} == {i, j})
        if w == 0.0:
            raise UnknownBusError(f"no branch between {i} and {j}")
        return w

    @functools.cached_property
    def laplacian(self) -> np.ndarray:
        """Bus coefficient matrix, ``dP/d(delta)`` over all buses."""
        n = len(self.buses)
        lap = np.zeros((n, n))
        for br in self.branches:
            i, j, w = self.index[br.from_bus], self.index[br.to_bus], br.coefficient
            lap[i, i] += w
            lap[j, j] += w
            lap[i, j] -= w
            lap[j, i] -= w
        lap.flags.writeable = False
        return lap


def _validate(case: GridCase) -> None:
    ids = [b.id for b in case.buses]
    seen = set()
    for i in ids:
        if i in seen:
            raise DuplicateBusError(f"duplicate bus id {i}")
        seen.add(i)
    for b in case.buses:
        if b.kind not in (GENERATOR, LOAD):
            raise CaseFormatError(f"bus {b.id}: unknown kind {b.kind!r}")
    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                raise DanglingBranchError(
                    f"branch {br.from_bus}-{br.to_bus} refers to missing bus {end}")
        if br.from_bus == br.to_bus:
            raise CaseFormatError(f"branch {br.from_bus}-{br.to_bus} is a self loop")
        if not br.x > 0:
            raise NonPositiveReactanceError(
                f"branch {br.from_bus}-{br.to_bus} has reactance {br.x}")
    if case.reference_bus not in seen:
        raise ReferenceBusError(f"reference bus {case.reference_bus} does not exist")
    ref = next(b for b in case.buses if b.id == case.reference_bus)
    if ref.kind != GENERATOR:
        raise ReferenceBusError(f"reference bus {ref.id} is not a generator bus")

    adj = {i: set() for i in ids}
    for br in case.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    stack, reached = [ids[0]], {ids[0]}
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in reached:
                reached.add(nb)
                stack.append(nb)
    if len(reached) != len(ids):
        missing = sorted(set(ids) - reached)
        raise DisconnectedGridError(f"buses {missing} are not connected to bus {ids[0]}")


# ---------------------------------------------------------------------------
# case file parsing

_KINDS = {"G": GENERATOR, "G*": GENERATOR, "L": LOAD}


def load_case(text: str, base_mva: float = 100.0) -> GridCase:
    """Parse the two-section plain-text case format.

    ``[buses]`` rows are ``id,kind,Ps`` with kind one of ``G``, ``L`` or
    ``G*`` (the reference generator).  ``[branches]`` rows are
    ``from,to,x``.  Lines starting with ``#`` are comments and a column
    header row is allowed at the top of each section.
    """
    section = None
    buses, branches, refs = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("buses", "branches"):
                raise CaseFormatError(f"line {lineno}: unknown section [{section}]")
            continue
        parts = [p.strip() for p in line.split(",")]
        if section is None:
            raise CaseFormatError(f"line {lineno}: data outside of a section")
        if parts[0].lower() in ("id", "from"):
            continue  # header row
        if len(parts) != 3:
            raise CaseFormatError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            if section == "buses":
                kind = parts[1].upper()
                if kind not in _KINDS:
                    raise CaseFormatError(f"line {lineno}: bus kind must be G, G* or L")
                bus_id = int(parts[0])
                buses.append(Bus(bus_id, _KINDS[kind], float(parts[2])))
                if kind == "G*":
                    refs.append(bus_id)
            else:
                branches.append(Branch(int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            if isinstance(exc, CaseFormatError):
                raise
            raise CaseFormatError(f"line {lineno}: {exc}") from None
    if not buses:
        raise CaseFormatError("case has no buses")
    if len(refs) != 1:
        raise ReferenceBusError(f"expected exactly one reference bus (G*), found {len(refs)}")
    return GridCase(tuple(buses), tuple(branches), refs[0], base_mva)


def case_to_text(case: GridCase) -> str:
    out = ["[buses]", "id,kind,Ps"]
    for b in case.buses:
        kind = "L" if b.kind == LOAD else ("G*" if b.id == case.reference_bus else "G")
        out.append(f"{b.id},{kind},{b.ps!r}")
    out += ["[branches]", "from,to,x"]
    out += [f"{br.from_bus},{br.to_bus},{br.x!r}" for br in case.branches]
    return "\n".join(out) + "\n"


def load_case_file(path) -> GridCase:
    with open(path) as fh:
        return load_case(fh.read())


@functools.lru_cache(maxsize=None)
def ieee39() -> GridCase:
    """The IEEE 39-bus system shipped with the package."""
    text = resources.files("pmu_fdia.data").joinpath("ieee39.case").read_text()
    return load_case(text)


# ---------------------------------------------------------------------------
# topology and power flow

def neighbors(case: GridCase, bus: int) -> set[int]:
    case.bus(bus)
    out = set()
    for br in case.branches:
        if br.from_bus == bus:
            out.add(br.to_bus)
        elif br.to_bus == bus:
            out.add(br.from_bus)
    return out


def dc_power_flow(case: GridCase) -> np.ndarray:
    """Bus angles (radians, case bus order) with the reference angle at zero.

    The reference bus absorbs any imbalance of the static injections.
    """
    keep = [k for k, b in enumerate(case.bus_ids) if b != case.reference_bus]
    lap = case.laplacian
    theta = np.zeros(len(case.buses))
    theta[keep] = np.linalg.solve(lap[np.ix_(keep, keep)], case.static_injections[keep])
    return theta


def injections(case: GridCase, theta: np.ndarray) -> np.ndarray:
    """DC bus injections ``P_i = sum_j W_ij (delta_i - delta_j)`` for angles ``theta``."""
    return case.laplacian @ np.asarray(theta)


# ---------------------------------------------------------------------------
# measurement model

@dataclass(frozen=True)
class Measurement:
    kind: str  # "injection" or "flow"
    bus: int  # injection bus, or from-bus of a flow
    to_bus: int | None = None

    @property
    def label(self) -> str:
        if self.kind == "injection":
            return f"P_{self.bus}"
        return f"P_{self.bus}_{self.to_bus}"


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """Linear DC measurement model ``z = H x + e``.

    Rows are all bus injections (case bus order) followed by one flow per
    branch in its stored direction.  Columns are the non-reference bus
    angles in case order.
    """

    H: np.ndarray
    measurements: tuple[Measurement, ...]
    state_buses: tuple[int, ...]
    reference_bus: int
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        w = np.ones(self.H.shape[0]) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (self.H.shape[0],) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per measurement")
        object.__setattr__(self, "weights", w)
        for arr in (self.H, self.weights):
            arr.flags.writeable = False

    @property
    def W(self) -> np.ndarray:
        return np.diag(self.weights)

    @functools.cached_property
    def row_index(self) -> dict[str, int]:
        return {m.label: k for k, m in enumerate(self.measurements)}

    @functools.cached_property
    def column_index(self) -> dict[int, int]:
        return {b: k for k, b in enumerate(self.state_buses)}

    def injection_row(self, bus: int) -> int:
        return self.row_index[f"P_{bus}"]

    def flow_row(self, i: int, j: int) -> tuple[int, float]:
        """Row carrying the flow between ``i`` and ``j`` and the sign mapping
        the ``i -> j`` direction onto the stored meter direction."""
        if f"P_{i}_{j}" in self.row_index:
            return self.row_index[f"P_{i}_{j}"], 1.0
        if f"P_{j}_{i}" in self.row_index:
            return self.row_index[f"P_{j}_{i}"], -1.0
        raise UnknownBusError(f"no flow meter between {i} and {j}")

    def with_weights(self, weights) -> "MeasurementModel":
        return MeasurementModel(self.H, self.measurements, self.state_buses,
                                self.reference_bus, np.asarray(weights, float))

    def state_vector(self, theta_all: np.ndarray, case: GridCase) -> np.ndarray:
        """Drop the reference angle from a full (case-ordered) angle vector."""
        theta_all = np.asarray(theta_all)
        return theta_all[[case.index[b] for b in self.state_buses]] - theta_all[case.index[self.reference_bus]]

    @functools.cached_property
    def _qr(self):
        sw = np.sqrt(self.weights)
        q, r = np.linalg.qr(sw[:, None] * self.H)
        return sw, q, r


def build_measurement_jacobian(case: GridCase, weights=None) -> MeasurementModel:
    ids = case.bus_ids
    states = tuple(b for b in ids if b != case.reference_bus)
    col = {b: k for k, b in enumerate(states)}
    n_rows = len(ids) + len(case.branches)
    H = np.zeros((n_rows, len(states)))
    meas = []

    def put(row, bus, value):
        if bus in col:
            H[row, col[bus]] += value

    for row, b in enumerate(ids):
        meas.append(Measurement("injection", b))
    for br in case.branches:
        w = br.coefficient
        put(case.index[br.from_bus], br.from_bus, w)
        put(case.index[br.from_bus], br.to_bus, -w)
        put(case.index[br.to_bus], br.to_bus, w)
        put(case.index[br.to_bus], br.from_bus, -w)
    for k, br in enumerate(case.branches):
        row = len(ids) + k
        w = br.coefficient
        put(row, br.from_bus, w)
        put(row, br.to_bus, -w)
        meas.append(Measurement("flow", br.from_bus, br.to_bus))
    return MeasurementModel(H, tuple(meas), states, case.reference_bus, weights)
