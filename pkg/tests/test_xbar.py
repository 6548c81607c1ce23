import numpy as np
import pytest

from memcore import xbar as X
from memcore.device import DeviceParams, device_current
from memcore.errors import ConfigError, ConvergenceError, FormatError, OverdriveError
from memcore.xbar import (Crossbar, CrossbarGeometry, SolverConfig, ideal_forward,
                          load_crossbar_csv, save_crossbar_csv, solve_dense,
                          solve_jacobi)

P = DeviceParams()
TIGHT = SolverConfig(tolerance=1e-12, max_iterations=500_000)


def make_crossbar(m, n, rw, states):
    return Crossbar(CrossbarGeometry(m, n, rw), np.asarray(states, dtype=float), P)


def test_geometry_validation():
    with pytest.raises(ConfigError):
        CrossbarGeometry(0, 3)
    with pytest.raises(ConfigError):
        CrossbarGeometry(3, 3, -1.0)
    with pytest.raises(ConfigError):
        make_crossbar(2, 2, 1.5, [[0.5, 0.5]])   # wrong shape


def test_ideal_1x2_no_parasitics():
    xb = make_crossbar(1, 2, 0.0, [[1.0, 1.0]])
    sol = solve_jacobi(xb, [0.2], SolverConfig(conduction_mode="sinh"))
    want = device_current(P, 1.0, 0.2)
    assert sol.column_currents == pytest.approx([want, want], rel=1e-15)
    assert want == pytest.approx(2.0e-5, rel=2e-5)
    # linearized mode uses the small-signal slope instead
    lin = solve_jacobi(xb, [0.2], SolverConfig())
    assert lin.column_currents == pytest.approx([2.0e-5, 2.0e-5], rel=1e-15)
    assert np.all(lin.row_node_voltages == 0.2)
    assert np.all(lin.col_node_voltages == 0.0)
    assert lin.iterations == 0


def test_dense_matches_jacobi_on_1x2():
    xb = make_crossbar(1, 2, 0.0, [[1.0, 1.0]])
    sj = solve_jacobi(xb, [0.2])
    sd = solve_dense(xb, [0.2])
    assert sd.column_currents == pytest.approx(sj.column_currents, rel=1e-15)


def test_hand_assembled_2x2():
    """Independent 8-equation nodal assembly of the 2x2, Rw=1.5 case."""
    rw = 1.5
    gw = 1.0 / rw
    g = 1e-4                      # every device at 10 kOhm small-signal
    v1, v2 = 0.5, -0.5
    # Unknowns: [r11, r12, r21, r22, c11, c12, c21, c22]
    A = np.zeros((8, 8))
    b = np.zeros(8)
    # Row nodes: driver - r(i,1) - r(i,2); device to c(i,j).
    A[0, 0] = gw + gw + g; A[0, 1] = -gw; A[0, 4] = -g; b[0] = gw * v1
    A[1, 1] = gw + g;      A[1, 0] = -gw; A[1, 5] = -g
    A[2, 2] = gw + gw + g; A[2, 3] = -gw; A[2, 6] = -g; b[2] = gw * v2
    A[3, 3] = gw + g;      A[3, 2] = -gw; A[3, 7] = -g
    # Column nodes: c(1,j) - c(2,j) - ground; device to r(i,j).
    A[4, 4] = gw + g;      A[4, 6] = -gw; A[4, 0] = -g
    A[5, 5] = gw + g;      A[5, 7] = -gw; A[5, 1] = -g
    A[6, 6] = gw + gw + g; A[6, 4] = -gw; A[6, 2] = -g
    A[7, 7] = gw + gw + g; A[7, 5] = -gw; A[7, 3] = -g
    ref = np.linalg.solve(A, b)
    ref_currents = np.array([
        g * (ref[0] - ref[4]) + g * (ref[2] - ref[6]),
        g * (ref[1] - ref[5]) + g * (ref[3] - ref[7]),
    ])

    xb = make_crossbar(2, 2, rw, np.full((2, 2), 1.0))   # x=1 -> 10 kOhm
    sd = solve_dense(xb, [v1, v2])
    sj = solve_jacobi(xb, [v1, v2], TIGHT)
    assert sd.column_currents == pytest.approx(ref_currents, rel=1e-12)
    assert sj.column_currents == pytest.approx(ref_currents, rel=1e-9)
    assert sd.row_node_voltages.flatten() == pytest.approx(ref[:4], rel=1e-12)
    assert sd.col_node_voltages.flatten() == pytest.approx(ref[4:], rel=1e-12)


def test_oracle_equivalence_random(rng):
    for _ in range(8):
        m, n = rng.integers(1, 13, size=2)
        for rw in (0.0, 1.5, 15.0):
            xb = make_crossbar(int(m), int(n), rw, rng.uniform(0.001, 1.0, (m, n)))
            v = rng.uniform(-0.5, 0.5, m)
            sj = solve_jacobi(xb, v, TIGHT)
            sd = solve_dense(xb, v)
            assert sj.column_currents == pytest.approx(sd.column_currents, rel=1e-6)


def test_superposition_linearized(rng):
    xb = make_crossbar(4, 4, 1.5, rng.uniform(0.001, 1.0, (4, 4)))
    u = rng.uniform(-0.25, 0.25, 4)
    v = rng.uniform(-0.25, 0.25, 4)
    cfg = SolverConfig(tolerance=1e-13, max_iterations=500_000)
    su = solve_jacobi(xb, u, cfg).column_currents
    sv = solve_jacobi(xb, v, cfg).column_currents
    suv = solve_jacobi(xb, u + v, cfg).column_currents
    assert suv == pytest.approx(su + sv, rel=1e-9)
    du = solve_dense(xb, u).column_currents
    dv = solve_dense(xb, v).column_currents
    duv = solve_dense(xb, u + v).column_currents
    assert duv == pytest.approx(du + dv, rel=1e-12)


def test_monotone_degradation_single_row(rng):
    states = rng.uniform(0.001, 1.0, (6, 5))
    drive = np.zeros(6)
    drive[0] = 0.3
    previous = None
    for rw in (0.0, 1.5, 15.0, 150.0):
        xb = make_crossbar(6, 5, rw, states)
        cur = np.abs(solve_jacobi(xb, drive, TIGHT).column_currents)
        if previous is not None:
            assert np.all(cur <= previous + 1e-18)
        previous = cur


def test_solve_is_read_only(rng):
    states = rng.uniform(0.001, 1.0, (5, 4))
    xb = make_crossbar(5, 4, 1.5, states.copy())
    before = xb.states.copy()
    solve_jacobi(xb, rng.uniform(-0.5, 0.5, 5), TIGHT)
    solve_dense(xb, rng.uniform(-0.5, 0.5, 5))
    assert np.array_equal(xb.states, before)


def test_determinism_and_kernel_parity(rng):
    states = rng.uniform(0.001, 1.0, (9, 7))
    xb = make_crossbar(9, 7, 1.5, states)
    v = rng.uniform(-0.5, 0.5, 9)
    a = solve_jacobi(xb, v, TIGHT)
    b = solve_jacobi(xb, v, TIGHT)
    assert np.array_equal(a.column_currents, b.column_currents)
    assert a.iterations == b.iterations
    if X.HAVE_NUMBA:
        X.HAVE_NUMBA = False
        try:
            c = solve_jacobi(xb, v, TIGHT)
        finally:
            X.HAVE_NUMBA = True
        assert np.array_equal(a.column_currents, c.column_currents)
        assert np.array_equal(a.row_node_voltages, c.row_node_voltages)
        assert a.iterations == c.iterations


def test_overdrive_rejected():
    xb = make_crossbar(2, 2, 1.5, np.full((2, 2), 0.5))
    with pytest.raises(OverdriveError):
        solve_jacobi(xb, [1.4, 0.0])
    with pytest.raises(OverdriveError):
        solve_dense(xb, [0.0, -2.0])


def test_convergence_error_carries_residual():
    xb = make_crossbar(16, 16, 1.5, np.full((16, 16), 0.5))
    with pytest.raises(ConvergenceError) as exc:
        solve_jacobi(xb, np.full(16, 0.2), SolverConfig(tolerance=1e-12, max_iterations=3))
    assert exc.value.residual > 1e-12
    assert exc.value.iterations == 3


def test_input_shape_errors():
    xb = make_crossbar(3, 2, 1.5, np.full((3, 2), 0.5))
    with pytest.raises(ConfigError):
        solve_jacobi(xb, [0.1, 0.2])
    with pytest.raises(ConfigError):
        solve_jacobi(xb, [0.1, np.nan, 0.0])


def test_dense_node_guard():
    xb = make_crossbar(110, 100, 1.5, np.full((110, 100), 0.5))
    with pytest.raises(ConfigError):
        solve_dense(xb, np.zeros(110))


def test_sinh_vs_linearized_small_signal(rng):
    # at |V| <= 0.5 the sinh correction is at most (b*V)^2/6 ~ 1.05e-4
    xb = make_crossbar(6, 4, 1.5, rng.uniform(0.001, 1.0, (6, 4)))
    v = rng.uniform(-0.5, 0.5, 6)
    lin = solve_jacobi(xb, v, TIGHT).column_currents
    cfg = SolverConfig(tolerance=1e-12, max_iterations=500_000, conduction_mode="sinh")
    nl = solve_jacobi(xb, v, cfg).column_currents
    assert nl == pytest.approx(lin, rel=1.1e-4)
    assert not np.array_equal(nl, lin)


def test_parasitic_deviation_moderate_grid():
    # 60x30 grid, devices uniform in the 1-10 MOhm trained band: converged
    # currents sit ~0.05% from the zero-wire values (shared IR drops).
    rng = np.random.default_rng(7)
    r = rng.uniform(1e6, 10e6, (60, 30))
    states = 1.0 / (P.a1 * P.b * r)
    xb = make_crossbar(60, 30, 1.5, states)
    v = rng.uniform(-0.5, 0.5, 60)
    ideal = xb.conductances().T @ v
    sol = solve_jacobi(xb, v, TIGHT)
    dev = np.linalg.norm(sol.column_currents - ideal) / np.linalg.norm(ideal)
    assert dev < 1e-3
    assert dev > 1e-5   # the parasitics are real; zero would mean no wires


def test_ideal_forward():
    w = np.eye(4)
    v = np.array([0.1, -0.2, 0.3, 0.0])
    assert np.array_equal(ideal_forward(w, v), v)
    assert np.array_equal(ideal_forward(np.zeros((4, 2)), v), np.zeros(2))
    with pytest.raises(ConfigError):
        ideal_forward(np.zeros((3, 2)), v)


def test_csv_round_trip(tmp_path, rng):
    xb = make_crossbar(4, 6, 1.5, rng.uniform(0.001, 1.0, (4, 6)))
    path = tmp_path / "grid.csv"
    save_crossbar_csv(xb, path)
    back = load_crossbar_csv(path)
    assert back.geometry == xb.geometry
    assert np.array_equal(back.states, xb.states)


def test_csv_format_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,header\n1,2,3\n")
    with pytest.raises(FormatError):
        load_crossbar_csv(bad)
    bad.write_text("rows,cols,wire_resistance\n2,2,1.5\n0.5,0.5\n")
    with pytest.raises(FormatError):
        load_crossbar_csv(bad)
    with pytest.raises(FormatError):
        load_crossbar_csv(tmp_path / "missing.csv")
