"""Batched closed-loop execution of one waypoint segment.

One engine serves both consumers: the abstraction propagates particle clouds
(shared filter covariance, linearized at the cloud mean), and the Monte Carlo
harness advances many independent missions (per-run covariances). States,
estimates, and noise draws are vectorized over the batch axis; noise is drawn
for the full batch every step so the consumed stream is independent of which
members have already finished.

Localization phases within a segment:

* ``off``   — odometry measurements, no localization power draw
* ``boot``  — odometry measurements, boot-energy draw, time-triggered
* ``boot_tail`` — boot completes ``boot_remaining`` seconds into the segment;
  odometry/boot before that instant, localization/full power after; the
  segment then ends on the convergence trigger
* ``on``    — localization measurements, convergence trigger

Time-triggered segments run exactly ``delta_t``; convergence triggers are
evaluated after each localization update (the belief only changes
meaningfully when a measurement arrives).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import plant as pl
from .errors import ControlTimeoutError
from .scenario import Scenario

PHASE_OFF, PHASE_BOOT, PHASE_ON = 0, 1, 2
_PHASE_CODE = {"off": PHASE_OFF, "boot": PHASE_BOOT, "on": PHASE_ON}


@dataclass
class SegmentResult:
    x: np.ndarray  # (B, n) final true states (last position for collided members)
    xhat: np.ndarray  # (B, n) final estimates
    cov: np.ndarray  # (n, n) shared or (B, n, n) per-member
    collided: np.ndarray  # (B,) bool
    t_end: np.ndarray  # (B,) seconds into the segment at collision/trigger
    costs: np.ndarray  # (B, 3) energy, energy_loc, duration


def _make_controller(sc: Scenario, law: pl.ControlLaw):
    """Batched feedback law with gains hoisted and saturation baked in."""
    c = sc.controller
    tx, ty = float(law.target[0]), float(law.target[1])
    if sc.plant.kind == "unicycle2":
        k1, k2, k3, k4 = (law.gains[k] for k in ("k1", "k2", "k3", "k4"))
        v_min, v_max, a_max, w_max = c.v_min, c.sat_speed, c.sat_accel, c.sat_turn

        def control(m: np.ndarray) -> np.ndarray:
            v, th = m[:, 2], m[:, 3]
            cth, sth = np.cos(th), np.sin(th)
            ex = k1 * (tx - m[:, 0]) - k2 * v * cth
            ey = k3 * (ty - m[:, 1]) - k4 * v * sth
            v_eff = np.where(np.abs(v) < v_min, np.where(v < 0, -v_min, v_min), v)
            u1 = ex * cth + ey * sth
            u2 = (ey * cth - ex * sth) / v_eff
            if a_max is not None:
                u1 = np.clip(u1, -a_max, a_max)
            if w_max is not None:
                u2 = np.clip(u2, -w_max, w_max)
            if v_max is not None:
                u1 = np.where(v >= v_max, np.minimum(u1, 0.0), u1)
                u1 = np.where(v <= -v_max, np.maximum(u1, 0.0), u1)
            return np.stack([u1, u2], axis=-1)

    else:
        kp = law.gains.get("kp", 0.7)
        drift_t = sc.plant.drift_matrix.T
        target = np.array([tx, ty])
        v_max = c.sat_speed

        def control(m: np.ndarray) -> np.ndarray:
            u = kp * (target[None, :] - m) - m @ drift_t
            if v_max is not None:
                norm = np.linalg.norm(u, axis=-1, keepdims=True)
                u = u * np.where(norm > v_max, v_max / np.maximum(norm, 1e-12), 1.0)
            return u

    return control


def run_segment(
    x: np.ndarray,
    xhat: np.ndarray,
    cov: np.ndarray,
    law: pl.ControlLaw,
    sc: Scenario,
    mode: str,
    rng: np.random.Generator,
    boot_remaining: float = 0.0,
    weights: np.ndarray | None = None,
    recorder=None,
) -> SegmentResult:
    """Advance a batch one segment; see the module docstring for semantics.

    ``recorder`` is an optional callable
    ``(t_local, x, xhat, cov_traces, phase_code, stepped_mask)`` invoked after
    every sub-step for trace collection.
    """
    model, sensors = sc.plant, sc.sensors
    dt = model.dt
    n = model.n_x
    x = np.array(x, dtype=float, ndmin=2)
    xhat = np.array(xhat, dtype=float, ndmin=2)
    cov = np.array(cov, dtype=float)
    batch = len(x)
    shared_cov = cov.ndim == 2
    eye = np.eye(n)
    q_step = model.sigma_w**2 * dt * eye

    active = np.ones(batch, dtype=bool)
    collided = np.zeros(batch, dtype=bool)
    t_end = np.zeros(batch)
    costs = np.zeros((batch, 3))

    time_limited = mode in ("off", "boot")
    if time_limited:
        if law.delta_t is None:
            raise ControlTimeoutError("segment has no nominal duration")
        n_steps = max(1, int(round(law.delta_t / dt)))
    else:
        n_steps = int(round(sc.controller.t_max / dt))
    t_switch = boot_remaining if mode == "boot_tail" else 0.0

    control = _make_controller(sc, law)
    checker = sc.collision()
    generic_fp = sc.footprint.kind == "rectangle"
    q_noise = model.sigma_w / math.sqrt(dt)
    od_period = 1.0 / sensors.odometry_rate
    lo_period = 1.0 / sensors.localization_rate
    r_od = sensors.noise_cov(pl.ODOMETRY, n)
    r_lo = sensors.noise_cov(pl.LOCALIZATION, n)
    rates = {phase: sc.cost_rates(phase) for phase in ("off", "boot", "on")}
    # next pending measurement instant of the phase-appropriate sensor
    meas_next = od_period if mode in ("off", "boot", "boot_tail") else lo_period
    switched = mode != "boot_tail"

    step = 0
    while active.any():
        step += 1
        if step > n_steps:
            if time_limited:
                break
            raise ControlTimeoutError(
                f"segment {law.index} trigger did not fire within t_max={sc.controller.t_max}s"
            )
        t_prev, t_now = (step - 1) * dt, step * dt

        # Phase bookkeeping (boot_tail splits its switch step pro rata).
        if mode == "off":
            phases = (("off", dt),)
        elif mode == "boot":
            phases = (("boot", dt),)
        elif mode == "on":
            phases = (("on", dt),)
        elif t_now <= t_switch + 1e-12:
            phases = (("boot", dt),)
        elif t_prev >= t_switch - 1e-12:
            phases = (("on", dt),)
        else:
            phases = (("boot", t_switch - t_prev), ("on", t_now - t_switch))
        if not switched and t_now > t_switch + 1e-12:
            switched = True  # localization comes up: fresh cadence from t_switch
            meas_next = t_switch + lo_period
        loc_phase = mode == "on" or (mode == "boot_tail" and switched)

        all_active = bool(active.all())

        # Control and plant step.
        u = control(xhat)
        w = q_noise * rng.standard_normal((batch, n))
        x_new = x + (model.f(x, u) + w) * dt
        if all_active:
            x = x_new
            for phase, span in phases:
                costs += rates[phase] * span
            t_end[:] = t_now
        else:
            x[active] = x_new[active]
            for phase, span in phases:
                costs[active] += rates[phase] * span
            t_end[active] = t_now

        # Collision at sub-step resolution.
        hit = checker(x[:, :2], x[:, 3] if generic_fp else None)
        new_coll = active & hit
        if new_coll.any():
            collided |= new_coll
            active &= ~new_coll
            all_active = False

        # Filter prediction.
        xhat_new = xhat + model.f(xhat, u) * dt
        if all_active:
            xhat = xhat_new
        else:
            xhat[active] = xhat_new[active]
        if shared_cov:
            if active.any():
                lin = _lin_mean(xhat, active, weights)
                f_mat = eye + model.jacobian(lin) * dt
                cov = f_mat @ cov @ f_mat.T + q_step
                cov = 0.5 * (cov + cov.T)
        else:
            f_b = _batched_transition(model, xhat, dt)
            cov_new = f_b @ cov @ f_b.transpose(0, 2, 1) + q_step
            cov_new = 0.5 * (cov_new + cov_new.transpose(0, 2, 1))
            if all_active:
                cov = cov_new
            else:
                cov[active] = cov_new[active]

        # Measurement update at the active sensor's cadence.
        checked_trigger = False
        if t_now >= meas_next - 1e-9:
            meas_next += lo_period if loc_phase else od_period
            r_mat = r_lo if loc_phase else r_od
            sigma = sensors.sigma_lo if loc_phase else sensors.sigma_od
            z = x + sigma * rng.standard_normal((batch, n))
            innov = z - xhat
            if shared_cov:
                gain = cov @ np.linalg.inv(cov + r_mat)
                if all_active:
                    xhat = xhat + innov @ gain.T
                else:
                    xhat[active] += innov[active] @ gain.T
                cov = (eye - gain) @ cov
                cov = 0.5 * (cov + cov.T)
            else:
                gain = np.linalg.solve(cov + r_mat, cov).transpose(0, 2, 1)
                upd = np.einsum("bij,bj->bi", gain, innov)
                if all_active:
                    xhat = xhat + upd
                else:
                    xhat[active] += upd[active]
                cov_new = (eye - gain) @ cov
                cov_new = 0.5 * (cov_new + cov_new.transpose(0, 2, 1))
                if all_active:
                    cov = cov_new
                else:
                    cov[active] = cov_new[active]
            checked_trigger = loc_phase and not time_limited

        # Convergence trigger: position estimate near the waypoint, covariance
        # near its steady state; evaluated right after localization updates.
        if checked_trigger:
            d = xhat[:, :2] - law.target
            mean_ok = d[:, 0] ** 2 + d[:, 1] ** 2 < law.eps_mean**2
            if shared_cov:
                cov_ok = np.linalg.norm(cov - law.qss, ord="fro") < law.eps_var
                done = active & mean_ok if cov_ok else None
            else:
                dcov = np.linalg.norm(cov - law.qss, axis=(1, 2))
                done = active & mean_ok & (dcov < law.eps_var)
            if done is not None and done.any():
                active &= ~done

        if recorder is not None:
            stepped = active | new_coll
            cov_tr = np.full(batch, np.trace(cov)) if shared_cov else np.trace(cov, axis1=1, axis2=2)
            recorder(t_now, x, xhat, cov_tr, _PHASE_CODE[phases[-1][0]], stepped)

    return SegmentResult(x=x, xhat=xhat, cov=cov, collided=collided, t_end=t_end, costs=costs)


def _lin_mean(xhat: np.ndarray, active: np.ndarray, weights: np.ndarray | None) -> np.ndarray:
    if weights is None:
        return xhat[active].mean(axis=0)
    w = weights[active]
    return (w[:, None] * xhat[active]).sum(axis=0) / w.sum()


def _batched_transition(model: pl.PlantModel, xhat: np.ndarray, dt: float) -> np.ndarray:
    batch, n = xhat.shape
    if model.kind == "linear_drift":
        return np.broadcast_to(np.eye(n) + model.drift_matrix * dt, (batch, n, n)).copy()
    v, th = xhat[:, 2], xhat[:, 3]
    f_b = np.broadcast_to(np.eye(4), (batch, 4, 4)).copy()
    f_b[:, 0, 2] = np.cos(th) * dt
    f_b[:, 0, 3] = -v * np.sin(th) * dt
    f_b[:, 1, 2] = np.sin(th) * dt
    f_b[:, 1, 3] = v * np.cos(th) * dt
    return f_b
