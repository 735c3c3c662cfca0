import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmu_fdia import grid_model
from pmu_fdia.errors import (
    CaseFormatError,
    DanglingBranchError,
    DisconnectedGridError,
    DuplicateBusError,
    NonPositiveReactanceError,
    ReferenceBusError,
    UnknownBusError,
)
from conftest import CHAIN, TWO_BUS


def _brute_injections(case, theta_all):
    # independent DC flow evaluation: loop over branches, no matrices
    p = {b: 0.0 for b in case.bus_ids}
    flows = []
    for br in case.branches:
        i, j = case.index[br.from_bus], case.index[br.to_bus]
        f = (theta_all[i] - theta_all[j]) / br.x
        flows.append(f)
        p[br.from_bus] += f
        p[br.to_bus] -= f
    return np.array([p[b] for b in case.bus_ids] + flows)


def _fd_jacobian(case, eps=1e-6):
    cols = [b for b in case.bus_ids if b != case.reference_bus]
    base = np.zeros(len(case.bus_ids))
    J = np.zeros((len(case.bus_ids) + len(case.branches), len(cols)))
    for k, b in enumerate(cols):
        up, dn = base.copy(), base.copy()
        up[case.index[b]] += eps
        dn[case.index[b]] -= eps
        J[:, k] = (_brute_injections(case, up) - _brute_injections(case, dn)) / (2 * eps)
    return J


def test_two_bus_case_parses(two_bus):
    assert len(two_bus.buses) == 2 and len(two_bus.branches) == 1
    assert two_bus.reference_bus == 1
    assert two_bus.load_buses == (2,)


def test_two_bus_jacobian_by_hand(two_bus):
    # P_1 = 10(d1 - d2), P_2 = 10(d2 - d1), P_12 = 10(d1 - d2); d1 = 0
    m = grid_model.build_measurement_jacobian(two_bus)
    assert m.H.shape == (3, 1)
    assert [x.label for x in m.measurements] == ["P_1", "P_2", "P_1_2"]
    np.testing.assert_allclose(m.H[:, 0], [-10.0, 10.0, -10.0], rtol=1e-15)


def test_two_bus_jacobian_reversed_branch():
    text = TWO_BUS.replace("1,2,0.1", "2,1,0.1")
    m = grid_model.build_measurement_jacobian(grid_model.load_case(text))
    # stored direction 2 -> 1: P_21 = 10 d2
    np.testing.assert_allclose(m.H[:, 0], [-10.0, 10.0, 10.0], rtol=1e-15)
    assert m.measurements[2].label == "P_2_1"


def test_jacobian_matches_finite_differences(chain):
    m = grid_model.build_measurement_jacobian(chain)
    np.testing.assert_allclose(m.H, _fd_jacobian(chain), atol=1e-7)


def test_chain_middle_injection_has_three_nonzeros(chain):
    m = grid_model.build_measurement_jacobian(chain)
    row = m.H[m.injection_row(3)]
    assert np.count_nonzero(row) == 3  # buses 2, 3, 4, none of them the reference
    np.testing.assert_allclose(row[m.column_index[3]], 1 / 0.2 + 1 / 0.25)


def test_flow_rows_have_two_nonzeros_except_at_reference(chain):
    m = grid_model.build_measurement_jacobian(chain)
    for k, meas in enumerate(m.measurements):
        if meas.kind != "flow":
            continue
        touches_ref = chain.reference_bus in (meas.bus, meas.to_bus)
        assert np.count_nonzero(m.H[k]) == (1 if touches_ref else 2)


def test_flow_row_reproduces_coefficient_times_angle_difference(ieee39, ieee39_meas, rng):
    theta = rng.normal(0, 0.2, len(ieee39.bus_ids))
    theta[ieee39.index[ieee39.reference_bus]] = 0.0
    x = ieee39_meas.state_vector(theta, ieee39)
    z = ieee39_meas.H @ x
    for br in ieee39.branches:
        row, sign = ieee39_meas.flow_row(br.from_bus, br.to_bus)
        expect = (theta[ieee39.index[br.from_bus]] - theta[ieee39.index[br.to_bus]]) / br.x
        assert sign == 1.0
        assert z[row] == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_ieee39_dimensions(ieee39, ieee39_meas):
    assert len(ieee39.buses) == 39 and len(ieee39.branches) == 46
    assert ieee39_meas.H.shape == (85, 38)
    assert ieee39.reference_bus not in ieee39_meas.state_buses
    np.testing.assert_array_equal(ieee39_meas.W, np.eye(85))


def test_ieee39_injection_rows_balance(ieee39, ieee39_meas):
    # injection rows plus the implicit reference column sum to zero
    inj = ieee39_meas.H[:39]
    ref_col = -inj.sum(axis=1)
    ref = ieee39.index[ieee39.reference_bus]
    lap = ieee39.laplacian
    np.testing.assert_allclose(ref_col, lap[:, ref], atol=1e-9)


@given(st.lists(st.floats(-1, 1), min_size=38, max_size=38))
@settings(max_examples=50, deadline=None)
def test_power_balance_over_all_injections(ieee39_meas, x):
    z = ieee39_meas.H @ np.array(x)
    assert abs(z[:39].sum()) <= 1e-9 * max(1.0, np.abs(z).max())


def test_coefficient_and_susceptance(ieee39):
    for br in ieee39.branches:
        assert br.coefficient > 0
        assert br.susceptance == -br.coefficient
    assert ieee39.line_coefficient(14, 15) == ieee39.line_coefficient(15, 14)


def test_neighbors():
    assert grid_model.neighbors(grid_model.ieee39(), 15) == {14, 16}
    assert grid_model.neighbors(grid_model.load_case(TWO_BUS), 1) == {2}
    chain3 = grid_model.load_case("[buses]\n1,G*,0\n2,L,0\n3,L,0\n[branches]\n1,2,1\n2,3,1\n")
    assert grid_model.neighbors(chain3, 2) == {1, 3}
    with pytest.raises(UnknownBusError):
        grid_model.neighbors(chain3, 99)


def test_dc_power_flow_reproduces_injections(ieee39):
    theta = grid_model.dc_power_flow(ieee39)
    assert theta[ieee39.index[ieee39.reference_bus]] == 0.0
    p = _brute_injections(ieee39, theta)[:39]
    ref = ieee39.index[ieee39.reference_bus]
    keep = np.arange(39) != ref
    np.testing.assert_allclose(p[keep], ieee39.static_injections[keep], atol=1e-9)
    # the slack picks up the imbalance; the lossless total is zero
    assert p.sum() == pytest.approx(0.0, abs=1e-9)


def test_jacobian_is_deterministic():
    text = grid_model.case_to_text(grid_model.ieee39())
    a = grid_model.build_measurement_jacobian(grid_model.load_case(text)).H
    b = grid_model.build_measurement_jacobian(grid_model.load_case(text)).H
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(a, grid_model.build_measurement_jacobian(grid_model.ieee39()).H)


@pytest.mark.parametrize("text, err", [
    (TWO_BUS + "2,99,0.1\n", DanglingBranchError),
    (TWO_BUS.replace("2,L,-0.5", "1,L,-0.5"), DuplicateBusError),
    (TWO_BUS.replace("1,2,0.1", "1,2,0"), NonPositiveReactanceError),
    (TWO_BUS.replace("1,2,0.1", "1,2,-0.3"), NonPositiveReactanceError),
    (TWO_BUS.replace("2,L,-0.5", "2,L,-0.5\n3,L,0"), DisconnectedGridError),
    (TWO_BUS.replace("1,G*,0.5", "1,G,0.5"), ReferenceBusError),
    (TWO_BUS.replace("1,G*,0.5", "1,G*,0.5\n3,G*,0"), ReferenceBusError),
    (TWO_BUS.replace("1,2,0.1", "1,2"), CaseFormatError),
    (TWO_BUS.replace("0.1", "abc"), CaseFormatError),
    (TWO_BUS.replace("[branches]", "[lines]"), CaseFormatError),
    (TWO_BUS.replace("2,L", "2,X"), CaseFormatError),
])
def test_load_case_errors(text, err):
    with pytest.raises(err):
        grid_model.load_case(text)


def test_reference_must_be_generator():
    case = grid_model.load_case(TWO_BUS)
    with pytest.raises(ReferenceBusError):
        grid_model.GridCase(case.buses, case.branches, reference_bus=2)


def test_case_text_roundtrip(tmp_path, ieee39):
    path = tmp_path / "c.case"
    path.write_text(grid_model.case_to_text(ieee39))
    again = grid_model.load_case_file(path)
    assert again == ieee39


def test_custom_weights(chain):
    w = np.linspace(1, 2, 8)
    m = grid_model.build_measurement_jacobian(chain, weights=w)
    np.testing.assert_array_equal(np.diag(m.W), w)
    with pytest.raises(ValueError):
        grid_model.build_measurement_jacobian(chain, weights=-w)
