"""Stochastic plant models, sensors, Kalman filtering, and waypoint control laws.

Two plant families are supported:

* ``unicycle2``: second-order unicycle with state (x, y, v, heading), controls
  (acceleration, turn rate), driven by a dynamic-feedback-linearized PD law.
* ``linear_drift``: 2-D linear dynamics with a constant drift matrix, controls
  are velocity commands, driven by a proportional law with drift cancellation.

All functions accept a leading batch axis on states/estimates; a single state
is the degenerate batch. Process noise follows the Euler–Maruyama convention:
``step_dynamics`` computes ``x + f(x, u, w)*dt``, so callers drawing
``n ~ N(0, Q_w)`` must pass ``w = n / sqrt(dt)`` for the diffusion term to
integrate at the proper ``sqrt(dt)`` rate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NonStabilizableError

logger = logging.getLogger(__name__)

ODOMETRY = "odometry"
LOCALIZATION = "localization"


@dataclass(frozen=True)
class PlantModel:
    """Continuous-time plant with isotropic process noise and Euler step dt."""

    kind: str  # "unicycle2" | "linear_drift"
    sigma_w: float
    dt: float
    drift_self: float = -0.3
    drift_cross: float = 0.1

    def __post_init__(self):
        if self.kind not in ("unicycle2", "linear_drift"):
            raise InvalidInputError(f"unknown plant kind {self.kind!r}")
        if self.dt <= 0:
            raise InvalidInputError("dt must be positive")
        if self.sigma_w < 0:
            raise InvalidInputError("sigma_w must be nonnegative")

    @property
    def n_x(self) -> int:
        return 4 if self.kind == "unicycle2" else 2

    @property
    def n_u(self) -> int:
        return 2

    @property
    def process_noise_cov(self) -> np.ndarray:
        return self.sigma_w**2 * np.eye(self.n_x)

    @property
    def drift_matrix(self) -> np.ndarray:
        return np.array([[self.drift_self, self.drift_cross], [self.drift_cross, self.drift_self]])

    def f(self, x: np.ndarray, u: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
        """State derivative f(x, u, w)."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape[-1] != self.n_x or u.shape[-1] != self.n_u:
            raise InvalidInputError(
                f"dimension mismatch: state {x.shape} control {u.shape} for {self.kind}"
            )
        if self.kind == "unicycle2":
            v, th = x[..., 2], x[..., 3]
            out = np.stack([v * np.cos(th), v * np.sin(th), u[..., 0], u[..., 1]], axis=-1)
        else:
            out = x @ self.drift_matrix.T + u
        if w is not None:
            w = np.asarray(w, dtype=float)
            if w.shape[-1] != self.n_x:
                raise InvalidInputError(f"noise dimension {w.shape} != {self.n_x}")
            out = out + w
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """d f / d x at a single linearization state."""
        x = np.asarray(x, dtype=float)
        if self.kind == "linear_drift":
            return self.drift_matrix.copy()
        v, th = x[2], x[3]
        a = np.zeros((4, 4))
        a[0, 2] = math.cos(th)
        a[0, 3] = -v * math.sin(th)
        a[1, 2] = math.sin(th)
        a[1, 3] = v * math.cos(th)
        return a


@dataclass(frozen=True)
class SensorModel:
    """Identity-observation sensors: z = x + v, v ~ N(0, sigma^2 I) per mode."""

    sigma_od: float
    sigma_lo: float
    odometry_rate: float
    localization_rate: float

    def __post_init__(self):
        if min(self.sigma_od, self.sigma_lo) < 0:
            raise InvalidInputError("sensor noise must be nonnegative")
        if min(self.odometry_rate, self.localization_rate) <= 0:
            raise InvalidInputError("sensor rates must be positive")

    def sigma(self, mode: str) -> float:
        return self.sigma_lo if mode == LOCALIZATION else self.sigma_od

    def rate(self, mode: str) -> float:
        return self.localization_rate if mode == LOCALIZATION else self.odometry_rate

    def noise_cov(self, mode: str, n: int) -> np.ndarray:
        return self.sigma(mode) ** 2 * np.eye(n)


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)

    def check_psd(self, tol: float = 1e-9) -> None:
        eigmin = float(np.linalg.eigvalsh(self.cov).min())
        if eigmin < -tol:
            raise InvalidInputError(f"covariance not PSD (eigmin={eigmin:.3e})")


@dataclass
class ControlLaw:
    """Per-segment feedback law with its termination data.

    ``target`` is the 2-D waypoint; ``target_state`` the full nominal state at
    arrival (zero speed, approach heading). ``delta_t`` and ``qss`` are filled
    in by scenario preparation (nominal-duration sweep, steady-state filter).
    """

    index: int
    target: np.ndarray
    target_state: np.ndarray
    gains: dict
    eps_mean: float
    eps_var: float
    reach_radius: float
    delta_t: float | None = None
    qss: np.ndarray | None = None

    def __post_init__(self):
        if self.eps_mean <= 0 or self.eps_var <= 0:
            raise InvalidInputError("trigger tolerances must be positive")


@dataclass(frozen=True)
class SteadyStateBelief:
    waypoint_state: np.ndarray
    covariance: np.ndarray


def step_dynamics(state, control, model: PlantModel, noise_sample) -> np.ndarray:
    """One Euler–Maruyama step: x + f(x, u, w) * dt (see module docstring for w scaling)."""
    return np.asarray(state, dtype=float) + model.f(state, control, noise_sample) * model.dt


def measure(state, mode: str, sensors: SensorModel, noise_sample) -> np.ndarray:
    """Identity measurement z = x + sigma_mode * n for a standard-normal sample n."""
    state = np.asarray(state, dtype=float)
    n = np.asarray(noise_sample, dtype=float)
    if n.shape != state.shape:
        raise InvalidInputError(f"noise shape {n.shape} != state shape {state.shape}")
    return state + sensors.sigma(mode) * n


def kalman_predict(belief: GaussianBelief, control, model: PlantModel, dt: float | None = None) -> GaussianBelief:
    """EKF prediction linearized about the current mean."""
    dt = model.dt if dt is None else dt
    mean = belief.mean + model.f(belief.mean, control) * dt
    a = model.jacobian(belief.mean)
    f_mat = np.eye(model.n_x) + a * dt
    cov = f_mat @ belief.cov @ f_mat.T + model.sigma_w**2 * dt * np.eye(model.n_x)
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def kalman_update(belief: GaussianBelief, measurement, sensors: SensorModel, mode: str) -> GaussianBelief:
    """Measurement update under the identity observation map."""
    n = belief.mean.shape[-1]
    r = sensors.noise_cov(mode, n)
    s = belief.cov + r
    try:
        gain = belief.cov @ np.linalg.inv(s)
    except np.linalg.LinAlgError as exc:
        raise InvalidInputError("innovation covariance not invertible") from exc
    mean = belief.mean + gain @ (np.asarray(measurement, dtype=float) - belief.mean)
    cov = (np.eye(n) - gain) @ belief.cov
    cov = 0.5 * (cov + cov.T)
    eigmin = float(np.linalg.eigvalsh(cov).min())
    if eigmin < -1e-9:
        raise InvalidInputError(f"posterior covariance not PSD (eigmin={eigmin:.3e})")
    return GaussianBelief(mean, cov)


def measurement_steps(rate: float, dt: float, n_steps: int) -> np.ndarray:
    """Step indices (1-based) after which a sensor running at ``rate`` updates.

    Updates fire whenever accumulated time crosses a multiple of the period;
    both the engines and the steady-state solver share this cadence.
    """
    period = 1.0 / rate
    t = (np.arange(1, n_steps + 1)) * dt
    counts = np.floor(t / period + 1e-9).astype(int)
    prev = np.concatenate([[0], counts[:-1]])
    return np.flatnonzero(counts > prev) + 1


def _supercycle_steps(rate: float, dt: float, limit: int = 10000) -> int | None:
    """Smallest n with n*dt an exact multiple of the sensor period, if any."""
    for n in range(1, limit + 1):
        q = n * dt * rate
        if abs(q - round(q)) < 1e-9 and round(q) >= 1:
            return n
    return None


def steady_state_covariance(
    model: PlantModel,
    sensors: SensorModel,
    waypoint_state: np.ndarray,
    mode: str = LOCALIZATION,
    tol: float = 1e-8,
    max_cycles: int = 100000,
) -> SteadyStateBelief:
    """Fixed point of the discrete predict/update recursion at a waypoint.

    The recursion linearizes the plant at ``waypoint_state``, predicts every
    ``dt``, and updates at the sensor cadence of ``mode``. Convergence is
    declared when the covariance at successive cadence-cycle boundaries moves
    by less than ``tol`` in max norm.
    """
    waypoint_state = np.asarray(waypoint_state, dtype=float)
    n = model.n_x
    a = model.jacobian(waypoint_state)
    f_mat = np.eye(n) + a * model.dt
    q = model.sigma_w**2 * model.dt * np.eye(n)
    r = sensors.noise_cov(mode, n)
    cycle = _supercycle_steps(sensors.rate(mode), model.dt)
    if cycle is None:
        cycle = max(1, int(round(1.0 / (sensors.rate(mode) * model.dt))))
    update_at = set(measurement_steps(sensors.rate(mode), model.dt, cycle).tolist())

    p = r.copy()
    for _ in range(max_cycles):
        prev = p
        for k in range(1, cycle + 1):
            p = f_mat @ p @ f_mat.T + q
            if k in update_at:
                gain = p @ np.linalg.inv(p + r)
                p = (np.eye(n) - gain) @ p
            p = 0.5 * (p + p.T)
        if np.abs(p - prev).max() < tol:
            return SteadyStateBelief(waypoint_state, p)
    raise NonStabilizableError(
        f"covariance recursion did not converge within {max_cycles} cycles"
    )


def dfl_lqg_control(estimate, law: ControlLaw, v_min: float = 0.05) -> np.ndarray:
    """Unicycle waypoint controller on feedback-linearized position dynamics.

    Accepts a GaussianBelief or a raw (batched) mean array. Estimated speeds
    below ``v_min`` are clamped to ``sign(v) * v_min`` before the turn-rate
    division (the linearization is singular at v = 0).
    """
    mean = estimate.mean if isinstance(estimate, GaussianBelief) else np.asarray(estimate, dtype=float)
    batched = mean.ndim > 1
    m = np.atleast_2d(mean)
    if m.shape[-1] != 4:
        raise InvalidInputError("DFL controller requires a 4-D unicycle state")
    g = law.gains
    k1, k2, k3, k4 = g["k1"], g["k2"], g["k3"], g["k4"]
    v, th = m[:, 2], m[:, 3]
    cth, sth = np.cos(th), np.sin(th)
    ex = k1 * (law.target[0] - m[:, 0]) - k2 * v * cth
    ey = k3 * (law.target[1] - m[:, 1]) - k4 * v * sth
    slow = np.abs(v) < v_min
    if slow.any() and not batched:
        logger.debug("speed %.4f below v_min=%.3f, clamping", float(v[0]), v_min)
    v_eff = np.where(slow, np.where(v < 0, -v_min, v_min), v)
    u1 = ex * cth + ey * sth
    u2 = (ey * cth - ex * sth) / v_eff
    u = np.stack([u1, u2], axis=-1)
    return u if batched else u[0]


def linear_drift_control(estimate, law: ControlLaw, model: PlantModel) -> np.ndarray:
    """Proportional velocity command toward the waypoint with drift cancellation."""
    mean = estimate.mean if isinstance(estimate, GaussianBelief) else np.asarray(estimate, dtype=float)
    batched = mean.ndim > 1
    m = np.atleast_2d(mean)
    kp = law.gains.get("kp", 0.7)
    u = kp * (law.target[None, :] - m) - m @ model.drift_matrix.T
    return u if batched else u[0]


def trigger_fired(law: ControlLaw, mode: str, *, belief: GaussianBelief | None = None, elapsed: float | None = None) -> bool:
    """Segment termination rule.

    mode "on": the estimate's position is within ``eps_mean`` of the waypoint
    and the covariance is within ``eps_var`` (Frobenius) of the steady state.
    mode "notOn": the elapsed time reached the nominal segment duration.
    """
    if mode == "on":
        if belief is None:
            raise InvalidInputError("mode 'on' requires a belief")
        if law.qss is None:
            raise InvalidInputError("control law has no steady-state covariance")
        dmean = float(np.linalg.norm(belief.mean[:2] - law.target))
        dcov = float(np.linalg.norm(belief.cov - law.qss, ord="fro"))
        return dmean < law.eps_mean and dcov < law.eps_var
    if mode == "notOn":
        if elapsed is None:
            raise InvalidInputError("mode 'notOn' requires elapsed time")
        if law.delta_t is None:
            raise InvalidInputError("control law has no nominal duration")
        return elapsed >= law.delta_t - 1e-12
    raise InvalidInputError(f"unknown trigger mode {mode!r}")
