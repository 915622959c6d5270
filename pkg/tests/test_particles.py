import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from kinetic_continua import particles as P
from kinetic_continua.errors import DegenerateConfiguration, PreconditionViolated
from kinetic_continua.tensors import skew_from_axial


def random_system(seed, n=16, force=None):
    rng = np.random.default_rng(seed)
    return P.ParticleSystem(
        masses=rng.uniform(0.5, 2.0, n),
        positions=rng.normal(size=(n, 3)),
        velocities=0.3 * rng.normal(size=(n, 3)),
        force=force,
    )


@settings(max_examples=20)
@given(st.integers(0, 10**6))
def test_fit_identities_hold_at_machine_level(seed):
    system = random_system(seed, force=P.smooth_random_force(seed))
    traj, _, _ = P.simulate(system, 1e-2, 5)
    for a in traj:
        scale = 1 + np.abs(a.H_tilde).max()
        assert np.abs(P.moment_split_residual(a)).max() <= 1e-12 * scale
        assert np.allclose(a.K, a.Y @ a.B.T, atol=1e-12 * scale)
        assert np.linalg.eigvalsh(a.H).min() >= -1e-12 * scale
        assert np.linalg.eigvalsh(a.Y).min() >= -1e-12 * (1 + np.abs(a.Y).max())


def test_affine_motion_has_no_ferment():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(10, 3))
    B = rng.normal(size=(3, 3))
    system = P.ParticleSystem(masses=np.ones(10), positions=x, velocities=x @ B.T + [0.1, 0.2, 0.3])
    a = P.aggregates(system, P.initial_frame(system))
    assert np.allclose(a.B, B)
    assert np.allclose(a.H, 0.0, atol=1e-13)
    assert np.allclose(a.x_dot, B @ x.mean(axis=0) + [0.1, 0.2, 0.3])


def test_counter_streams_have_ferment_v_v():
    rng = np.random.default_rng(2)
    base = rng.normal(size=(8, 3))
    v = np.array([0.0, 0.7, 0.2])
    system = P.ParticleSystem(
        masses=np.ones(16), positions=np.vstack([base, base]), velocities=np.vstack([np.tile(v, (8, 1)), np.tile(-v, (8, 1))])
    )
    a = P.aggregates(system, P.initial_frame(system))
    assert np.allclose(a.B, 0.0, atol=1e-14)
    assert np.allclose(a.H, np.outer(v, v), atol=1e-14)


def test_rank_deficient_cloud_is_fitted_on_its_range():
    x = np.array([[-1.0, 0, 0], [1.0, 0, 0], [0.0, 0, 0]])
    v = np.array([[0.0, 1.0, 0.5], [0.0, -1.0, 0.5], [0.0, 0.0, 0.5]])
    system = P.ParticleSystem(masses=np.ones(3), positions=x, velocities=v)
    a = P.aggregates(system, P.initial_frame(system))
    assert np.allclose(a.B[:, 1:], 0.0)
    assert np.allclose(a.B[:, 0], [0.0, -1.0, 0.0])
    assert np.abs(P.moment_split_residual(a)).max() < 1e-14


def test_degenerate_configuration():
    x = np.ones((4, 3))
    with pytest.raises(DegenerateConfiguration):
        P.fit_affine_rate(P.ParticleSystem(masses=np.ones(4), positions=x, velocities=np.zeros((4, 3))))
    moving = P.ParticleSystem(masses=np.ones(4), positions=x, velocities=np.eye(4, 3))
    assert np.allclose(P.fit_affine_rate(moving), 0.0)
    with pytest.raises(DegenerateConfiguration):
        P.ParticleSystem(masses=[1.0], positions=[[0, 0, 0]], velocities=[[0, 0, 0]])
    with pytest.raises(DegenerateConfiguration):
        P.ParticleSystem(masses=[1.0, -1.0], positions=np.zeros((2, 3)), velocities=np.eye(2, 3))


def test_balance_residuals_second_order():
    ratios = []
    norms = []
    for dt in (0.02, 0.01):
        system = random_system(3, n=24, force=P.smooth_random_force(3))
        n = int(round(0.4 / dt))
        traj, _, _ = P.simulate(system, dt, n)
        norms.append(P.residual_norms(traj, dt))
    for key in norms[0]:
        ratios.append(norms[0][key] / norms[1][key])
    assert min(ratios) > 3.8, ratios


def test_free_particles_conserve_tensor_energy():
    traj, _, _ = P.simulate(random_system(4), 1e-2, 200, sample_every=10)
    drift = P.conservation_check(traj)
    scale = np.abs(P.tensor_energy_invariant(traj[0])).max()
    assert np.abs(drift).max() <= 1e-12 * scale


def test_free_particle_momentum_and_inertia_residuals_vanish():
    # x_dot is constant and Y quadratic in time, so central differences are exact for them
    traj, _, _ = P.simulate(random_system(5), 1e-2, 20)
    norms = P.residual_norms(traj, 1e-2)
    assert norms["momentum"] == 0.0
    assert norms["inertia"] < 1e-12
    assert norms["moment_of_momentum"] < 1e-11


def test_gravity_drift_is_second_order():
    drifts = []
    for dt in (0.02, 0.01):
        traj, _, _ = P.simulate(random_system(6, force=P.uniform_gravity([0.0, 0.0, -1.0])), dt, int(round(1 / dt)))
        drifts.append(np.abs(P.conservation_check(traj)).max())
    assert drifts[1] < 1e-10 or drifts[0] / drifts[1] > 3.5


def test_varying_force_violates_precondition():
    traj, _, _ = P.simulate(random_system(7, force=P.central_harmonic(1.0, center=(5.0, 0, 0))), 1e-2, 10)
    with pytest.raises(PreconditionViolated):
        P.conservation_check(traj)


def test_rotating_observer_sees_objective_H_and_Y():
    system = random_system(8)
    w = np.array([0.3, -0.2, 0.5])
    t = 0.7
    Q = expm(t * skew_from_axial(w))
    Wq = skew_from_axial(w) @ Q  # dQ/dt
    x, v = system.positions, system.velocities
    rotated = P.ParticleSystem(masses=system.masses, positions=x @ Q.T, velocities=v @ Q.T + x @ Wq.T)
    a = P.aggregates(system, P.initial_frame(system))
    b = P.aggregates(rotated, P.initial_frame(rotated))
    assert np.allclose(b.H, Q @ a.H @ Q.T, atol=1e-10)
    assert np.allclose(b.Y, Q @ a.Y @ Q.T, atol=1e-10)
    assert not np.allclose(b.W, Q @ a.W @ Q.T, atol=1e-6)


def test_trajectory_csv(tmp_path):
    traj, _, _ = P.simulate(random_system(9), 1e-2, 4)
    path = tmp_path / "t.csv"
    P.write_trajectory_csv(path, traj, 1e-2, ["hello"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# hello"
    cols = lines[1].split(",")
    assert cols[:7] == ["tau", "x1", "x2", "x3", "xdot1", "xdot2", "xdot3"]
    assert len(lines) == 2 + len(traj)
    assert all(len(line.split(",")) == len(cols) for line in lines[2:])


def test_step_rejects_nonpositive_dt():
    system = random_system(10)
    with pytest.raises(ValueError):
        P.step(system, P.initial_frame(system), 0.0)
