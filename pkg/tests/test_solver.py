import numpy as np
import pytest

from kinetic_continua.analytic import example_fields
from kinetic_continua.constitutive import MaterialParams
from kinetic_continua.errors import BlowUp, ConfigError, DegenerateY
from kinetic_continua.solver import (
    BoundarySpec,
    FieldState,
    Grid,
    Problem,
    SideBC,
    SolverConfig,
    SourceSpec,
    diagnostics,
    energy_theorem_balance,
    evaluate,
    gradient,
    laplacian,
    run,
    stable_dt,
    step_rk4,
)
from kinetic_continua.solver.config import initial_state, parse_scenario, smooth_state
from kinetic_continua.solver.equations import apply_plane_flow, constrained_B
from kinetic_continua.solver.io import SNAPSHOT_COLUMNS, read_snapshot, read_table, write_diagnostics, write_snapshot
from kinetic_continua.tensors import skw


def periodic_problem(n=16, params=None, mode="independent_B", **cfg):
    grid = Grid(cells=(n, n), periodic=(True, True))
    params = params or MaterialParams(eta1=0.02, eta3=0.01, alpha=0.5, beta=0.02, gamma=0.1)
    return Problem(grid, params, SourceSpec(), BoundarySpec(), SolverConfig(constraint_mode=mode, **cfg))


def test_grid_nodes_and_weights():
    g = Grid(cells=(8, 4), lengths=(2.0, 1.0), periodic=(True, False))
    assert g.shape == (8, 5)
    assert g.h == (0.25, 0.25)
    assert np.isclose(g.integrate(np.ones(g.shape)), 2.0)
    assert Grid(cells=(8, 0)).shape == (9, 1)
    for bad in [dict(cells=(0, 0)), dict(cells=(2, 0)), dict(lengths=(0.0, 1.0))]:
        with pytest.raises(ValueError):
            Grid(**bad)


def test_periodic_derivatives_are_second_order():
    errs = []
    for n in (16, 32):
        g = Grid(cells=(n, n), periodic=(True, True))
        z1, z2 = g.mesh()
        f = np.sin(2 * np.pi * z1) * np.cos(2 * np.pi * z2)
        kinds = (("periodic", "periodic"), ("periodic", "periodic"))
        gr = gradient(f[..., None], g, kinds)[..., 0, :2]
        exact = 2 * np.pi * np.stack([np.cos(2 * np.pi * z1) * np.cos(2 * np.pi * z2),
                                      -np.sin(2 * np.pi * z1) * np.sin(2 * np.pi * z2)], -1)
        lap = laplacian(f[..., None], g, kinds)[..., 0]
        errs.append((np.abs(gr - exact).max(), np.abs(lap + 8 * np.pi**2 * f).max()))
    assert errs[0][0] / errs[1][0] > 3.8
    assert errs[0][1] / errs[1][1] > 3.8


def test_constrained_B_modes():
    L = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(constrained_B(L, "B_equals_L"), L)
    assert np.allclose(constrained_B(L, "B_equals_skwL"), skw(L))


def test_plane_flow_masks():
    s = FieldState.uniform((2, 2), u=(1, 2, 3), Y=np.ones((3, 3)), B=np.ones((3, 3)), H=np.ones((3, 3)))
    apply_plane_flow(s)
    assert np.array_equal(s.u[0, 0], [1, 2, 0])
    assert s.H[0, 0, 2, 2] == 1 and s.H[0, 0, 0, 2] == 0
    assert s.Y[0, 0, 2, 2] == 1 and s.Y[0, 0, 1, 2] == 0
    assert s.B[0, 0, 2, 2] == 0 and s.B[0, 0, 0, 1] == 1


def test_uniform_state_is_steady_without_losses():
    prob = periodic_problem(8, MaterialParams(eta1=0.1, eta3=0.1, beta=0.1))
    s = FieldState.uniform(prob.grid.shape, rho=1.2, u=(0.3, -0.1, 0), Y=np.diag([1.0, 2.0, 0.5]),
                           H=np.diag([0.2, 0.1, 0.05]))
    rates, _ = evaluate(s, prob)
    for name in rates.arrays():
        assert np.abs(getattr(rates, name)).max() < 1e-14


def test_smooth_run_conserves_mass_and_symmetry():
    prob = periodic_problem(16, dt=None)
    s = smooth_state(prob.grid)
    m0 = prob.grid.integrate(s.rho)
    res = run(s, prob, t_end=0.05)
    f = res.final
    assert abs(prob.grid.integrate(f.rho) - m0) < 1e-12 * m0  # flux form on a periodic grid
    assert np.array_equal(f.H, np.swapaxes(f.H, -1, -2))
    assert np.array_equal(f.Y, np.swapaxes(f.Y, -1, -2))
    assert res.max_projection("H") == 0.0
    assert res.times[0] == 0.0 and res.times[-1] == 0.05


def test_example2_temporal_decay():
    p = MaterialParams(alpha=2.0, beta=0.05)
    grid = Grid(cells=(8, 0), periodic=(True, False))
    prob = Problem(grid, p, SourceSpec(), BoundarySpec(), SolverConfig(dt=1e-3 / 2.0, constraint_mode="B_equals_L"))
    ex = example_fields("2_temporal", p, v=(0, 1.0, 0))
    res = run(ex.state(grid), prob, t_end=0.5)
    expected = ex.state(grid, 0.5).H
    assert np.abs(res.final.H - expected).max() < 1e-10 * np.abs(expected).max()


def test_snapshot_cadence_lands_exactly():
    prob = periodic_problem(8)
    res = run(smooth_state(prob.grid), prob, t_end=0.03, snapshot_every=0.01)
    assert np.allclose(res.times, [0.0, 0.01, 0.02, 0.03], rtol=0, atol=1e-15)
    assert len(res.snapshots) == len(res.diagnostics) == 4


def test_degenerate_inertia_raises():
    prob = periodic_problem(8, MaterialParams(eta3=0.5))
    s = smooth_state(prob.grid)
    s.Y[:] = 0.0
    s.B[:] = 0.0
    with pytest.raises(DegenerateY) as info:
        evaluate(s, prob)
    assert info.value.cell is not None


def test_blow_up_is_reported_with_time():
    prob = periodic_problem(8, mode="B_equals_L", dt=50.0)
    with pytest.raises(BlowUp) as info:
        run(smooth_state(prob.grid), prob, t_end=5000.0)
    assert info.value.time is not None


def test_stable_dt_scales_with_cfl():
    a = periodic_problem(16, cfl=0.4)
    b = periodic_problem(16, cfl=0.8)
    s = smooth_state(a.grid)
    assert np.isclose(stable_dt(s, b), 2 * stable_dt(s, a))
    assert periodic_problem(16, dt=1e-4).config.dt == stable_dt(s, periodic_problem(16, dt=1e-4))


def test_psd_projection_logs_magnitude():
    prob = periodic_problem(8)
    s = smooth_state(prob.grid)
    s.H[0, 0] = np.diag([0.5, -1e-3, 0.3])
    log = []
    new = step_rk4(s, 1e-4, prob, log, 0.0)
    assert log and log[0][1] == "H" and log[0][2] > 0
    assert np.linalg.eigvalsh(new.H).min() >= -1e-15


def test_energy_balance_keys_and_diagnostics():
    prob = periodic_problem(16)
    s = smooth_state(prob.grid)
    b = energy_theorem_balance(s, prob)
    assert set(b) == {"dE", "external", "boundary", "internal", "residual", "scale"}
    assert np.allclose(b["boundary"], 0.0)
    d = diagnostics(s, prob)
    for key in ("mass", "kinetic_energy_trace", "energy_balance_residual_norm", "min_eig_H", "W11", "collision11"):
        assert np.isfinite(d[key])


def test_wall_loss_boundary_rate():
    p = MaterialParams(gamma_hat=0.5)
    grid = Grid(cells=(8, 8))
    sides = {k: SideBC(velocity="free_slip", ferment="loss") for k in ("zeta1_lo", "zeta1_hi", "zeta2_lo", "zeta2_hi")}
    sides["zeta2_hi"] = SideBC(velocity="free_slip", ferment="loss", gamma_hat=2.0)
    prob = Problem(grid, p, SourceSpec(), BoundarySpec(sides), SolverConfig(constraint_mode="B_equals_L"))
    H = np.diag([0.0, 1.0, 0.0])
    s = FieldState.uniform(grid.shape, H=H)
    rates, _ = evaluate(s, prob)
    assert np.allclose(rates.H[:, 0], -0.5 * H)
    assert np.allclose(rates.H[1:-1, -1], -2.0 * H)
    assert np.allclose(rates.H[1:-1, 1:-1], 0.0)


def test_boundary_spec_validation():
    with pytest.raises(ConfigError):
        SideBC(velocity="sticky")
    with pytest.raises(ConfigError):
        SideBC(ferment="dirichlet")
    with pytest.raises(ConfigError):
        BoundarySpec({"zeta1_lo": SideBC()}).validate(Grid(cells=(8, 8), periodic=(True, False)))
    with pytest.raises(ValueError):
        SourceSpec(S=np.array([[0, 1.0, 0], [0, 0, 0], [0, 0, 0]]))
    with pytest.raises(ValueError):
        SolverConfig(cfl=1.5)


# snapshot io and scenario parsing -----------------------------------------------------

def test_snapshot_round_trip(tmp_path):
    grid = Grid(cells=(4, 5), lengths=(1.0, 2.0))
    s = smooth_state(grid, thermal=True)
    path = tmp_path / "s.csv"
    write_snapshot(path, grid, s, ["a b"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# a b"
    assert lines[1].split(",") == SNAPSHOT_COLUMNS
    back, z1, z2 = read_snapshot(path)
    for name in ("rho", "u", "Y", "B", "H", "eps"):
        assert np.array_equal(getattr(back, name), getattr(s, name))
    assert np.array_equal(z2, grid.mesh()[1])
    s.eps = None
    write_snapshot(path, grid, s)
    assert read_snapshot(path)[0].eps is None


def test_diagnostics_table(tmp_path):
    path = tmp_path / "d.csv"
    write_diagnostics(path, [0.0, 0.5], [{"a": 1.0, "b": 2.0}, {"a": 3.0, "b": 4.0}], ["h"])
    cols, data = read_table(path)
    assert cols == ["tau", "a", "b"]
    assert np.array_equal(data, [[0.0, 1.0, 2.0], [0.5, 3.0, 4.0]])


BASE = """
[grid]
cells = [8, 8]
periodic = [true, false]
[material]
eta1 = 0.1
[boundary.zeta2_lo]
velocity = "velocity_dirichlet"
[boundary.zeta2_hi]
velocity = "velocity_dirichlet"
velocity_value = [1.0, 0.0, 0.0]
[initial]
kind = "uniform"
H = [0.1, 0.1, 0.1, 0.0, 0.0, 0.0]
B = [0, 1, 0, 0, 0, 0, 0, 0, 0]
"""


def test_scenario_parsing_and_initial_state():
    cfg = parse_scenario(BASE)
    s = initial_state(cfg)
    assert cfg.grid.shape == (8, 9)
    assert np.allclose(s.u[:, -1], [1.0, 0, 0]) and np.allclose(s.u[:, 0], 0.0)
    assert np.allclose(s.H[0, 0], 0.1 * np.diag([1, 1, 1]))
    assert s.B[0, 0, 0, 1] == 1.0
    assert len(cfg.config_hash) == 64
    assert parse_scenario(BASE).config_hash == cfg.config_hash
    assert parse_scenario(BASE + "\n").config_hash != cfg.config_hash


@pytest.mark.parametrize(
    "extra,key",
    [
        ("[solver]\nspeed = 1\n", "solver.speed"),
        ("[nonsense]\nx = 1\n", "nonsense"),
        ("[boundary.top]\nvelocity = 'free_slip'\n", "boundary.top"),
        ("[sources]\nS = [[0, 1, 0], [0, 0, 0], [0, 0, 0]]\n", "sources.S"),
        ("[sources]\nf = [1, 2]\n", "sources.f"),
        ("[output]\ncolour = 'red'\n", "output.colour"),
    ],
)
def test_scenario_errors_name_the_key(extra, key):
    with pytest.raises(ConfigError) as info:
        parse_scenario(BASE + extra)
    assert info.value.key == key


def test_scenario_rejects_bad_values():
    with pytest.raises(ConfigError):
        parse_scenario(BASE.replace("eta1 = 0.1", "eta1 = -0.1"))
    with pytest.raises(ConfigError):
        parse_scenario(BASE.replace('kind = "uniform"', 'kind = "magic"'))
    with pytest.raises(ConfigError) as info:
        parse_scenario(BASE.replace("[grid]", "[grid"))
    assert "line" in str(info.value)
    with pytest.raises(ConfigError) as info:
        initial_state(parse_scenario(BASE.replace('kind = "uniform"', 'kind = "file"\npath = "missing.csv"')))
    assert info.value.key == "initial.path"


def test_file_initial_condition(tmp_path):
    cfg = parse_scenario(BASE)
    s = initial_state(cfg)
    write_snapshot(tmp_path / "init.csv", cfg.grid, s)
    text = BASE.replace('kind = "uniform"', 'kind = "file"\npath = "init.csv"')
    back = initial_state(parse_scenario(text, base_dir=str(tmp_path)))
    assert np.array_equal(back.H, s.H) and np.array_equal(back.u, s.u)
