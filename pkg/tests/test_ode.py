import numpy as np
import pytest

from epibound.errors import IntegrationError, NumericalError, ValidationError
from epibound.ode import IvpSpec, Trajectory, integrate


def decay(t, y):
    return -y


def rotation(t, y):
    return np.array([-y[1], y[0]])


def test_scalar_decay():
    traj = integrate(IvpSpec(decay, [1.0], [0.0, 1.0]))
    assert abs(traj.states[-1, 0] - np.exp(-1)) < 1e-8


def test_constant_is_exact():
    traj = integrate(IvpSpec(lambda t, y: np.zeros(1), [0.3], [0.0, 0.7, 5.0]))
    assert np.all(traj.states[:, 0] == 0.3)


def test_rotation_quarter_turn():
    traj = integrate(IvpSpec(rotation, [1.0, 0.0], [0.0, np.pi / 2]))
    np.testing.assert_allclose(traj.states[-1], [0.0, 1.0], atol=1e-8)


def test_output_rows_match_times():
    times = np.linspace(0, 2, 7)
    traj = integrate(IvpSpec(decay, [1.0, 2.0], times))
    assert traj.states.shape == (7, 2)
    np.testing.assert_allclose(traj.states[:, 1], 2 * np.exp(-times), atol=1e-9)
    np.testing.assert_array_equal(traj.at(times[3]), traj.states[3])
    with pytest.raises(KeyError):
        traj.at(0.123)


def test_first_output_after_t0():
    traj = integrate(IvpSpec(decay, [1.0], [0.5, 1.0], t0=0.0))
    assert traj.states[0, 0] == pytest.approx(np.exp(-0.5), abs=1e-9)


@pytest.mark.parametrize(
    "rhs, y0, t, exact",
    [
        (decay, [1.0], 3.0, lambda t: np.array([np.exp(-t)])),
        (rotation, [1.0, 0.0], 4.0, lambda t: np.array([np.cos(t), np.sin(t)])),
        (lambda t, y: y * (1 - y), [0.1], 5.0,
         lambda t: np.array([0.1 * np.exp(t) / (1 - 0.1 + 0.1 * np.exp(t))])),
    ],
)
def test_halving_tolerance_does_not_increase_error(rhs, y0, t, exact):
    errs = []
    for tol in (1e-6, 5e-7, 2.5e-7, 1.25e-7):
        traj = integrate(IvpSpec(rhs, y0, [0.0, t], abs_tol=tol, rel_tol=tol))
        errs.append(np.max(np.abs(traj.states[-1] - exact(t))))
    for coarse, fine in zip(errs, errs[1:]):
        assert fine <= coarse + 1e-15


def test_splitting_interval_invariant():
    whole = integrate(IvpSpec(rotation, [1.0, 0.0], [0.0, 3.0]))
    first = integrate(IvpSpec(rotation, [1.0, 0.0], [0.0, 1.3]))
    second = integrate(IvpSpec(rotation, first.states[-1], [1.3, 3.0]))
    np.testing.assert_allclose(second.states[-1], whole.states[-1], atol=10 * 1e-10 * 3)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(output_times=[1.0, 0.5]),
        dict(output_times=[0.0, 0.0]),
        dict(output_times=[]),
        dict(output_times=[0.0, 1.0], abs_tol=0.0),
        dict(output_times=[0.0, 1.0], rel_tol=-1.0),
        dict(output_times=[0.0, 2.0], t1=1.0),
        dict(output_times=[0.0, 1.0], t0=0.5),
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(ValidationError):
        IvpSpec(decay, [1.0], **kwargs)


def test_non_finite_rhs_raises():
    with pytest.raises(NumericalError):
        integrate(IvpSpec(lambda t, y: np.array([np.nan]), [1.0], [0.0, 1.0]))


def test_blow_up_reports_failure():
    with pytest.raises((IntegrationError, NumericalError)):
        integrate(IvpSpec(lambda t, y: y**2, [1.0], [0.0, 2.0]))


def test_trajectory_shape_check():
    with pytest.raises(ValidationError):
        Trajectory(np.arange(3.0), np.zeros((2, 1)))
