"""Scenario configuration: schema-validated YAML in, prepared problem instance out.

A scenario bundles everything a mission needs: workspace geometry, robot
footprint, plant and sensor models, the waypoint list, boot/power parameters
for the localization module, the objective selection, and controller settings.
``Scenario.control_laws()`` finishes preparation by sweeping the noise-free
closed loop for nominal segment durations and solving the steady-state filter
covariance at every waypoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import plant as pl
from .errors import InvalidInputError, UnreachableWaypointError
from .geometry import Circle, CollisionChecker, Footprint, Rect, Shape, Workspace
from .util import text_sha256

COST_NAMES = ("energy", "energy_loc", "duration")
OBJECTIVE_NAMES = ("ptarg", "pcoll", "energy", "duration")

DEFAULT_GAINS_UNICYCLE = {"k1": 1.0, "k2": 2.236, "k3": 1.0, "k4": 2.236}
DEFAULT_GAINS_LINEAR = {"kp": 0.7}


@dataclass(frozen=True)
class BootModel:
    t_boot: float
    e_boot: float

    @property
    def rate(self) -> float:
        """Localization power draw while booting (J consumed over t_boot)."""
        return self.e_boot / self.t_boot if self.t_boot > 0 else 0.0


@dataclass(frozen=True)
class PowerModel:
    p_on: float  # extra draw while localization is active
    p_base: float  # motors + CPU, always on


@dataclass(frozen=True)
class ControllerConfig:
    gains: dict
    eps_mean: float = 0.05
    eps_var: float = 0.01
    v_min: float = 0.05
    reach_radius: float = 0.25
    t_max: float = 120.0
    sat_speed: float | None = None
    sat_accel: float | None = None
    sat_turn: float | None = None


@dataclass
class Scenario:
    name: str
    plant: pl.PlantModel
    sensors: pl.SensorModel
    workspace: Workspace
    footprint: Footprint
    waypoints: np.ndarray  # (N, 2)
    initial_state: np.ndarray  # (n_x,)
    boot: BootModel
    power: PowerModel
    objectives: tuple[str, ...]
    controller: ControllerConfig
    source_hash: str = ""
    _laws: list[pl.ControlLaw] | None = field(default=None, repr=False)
    _checker: CollisionChecker | None = field(default=None, repr=False)

    @property
    def n_segments(self) -> int:
        return len(self.waypoints)

    def collision(self) -> CollisionChecker:
        """Precompiled collision test for this workspace and footprint."""
        if self._checker is None:
            self._checker = CollisionChecker(self.workspace, self.footprint)
        return self._checker

    def cost_rates(self, phase: str) -> np.ndarray:
        """(energy, energy_loc, duration) rates for a localization phase."""
        loc = {"off": 0.0, "boot": self.boot.rate, "on": self.power.p_on}[phase]
        return np.array([self.power.p_base + loc, loc, 1.0])

    def control_input(self, mean: np.ndarray, law: pl.ControlLaw) -> np.ndarray:
        """Dispatch to the plant's feedback law and apply saturation bounds."""
        c = self.controller
        if self.plant.kind == "unicycle2":
            u = pl.dfl_lqg_control(mean, law, v_min=c.v_min)
            u = np.atleast_2d(u)
            if c.sat_accel is not None:
                u[:, 0] = np.clip(u[:, 0], -c.sat_accel, c.sat_accel)
            if c.sat_turn is not None:
                u[:, 1] = np.clip(u[:, 1], -c.sat_turn, c.sat_turn)
            if c.sat_speed is not None:
                v = np.atleast_2d(mean)[:, 2]
                u[:, 0] = np.where(v >= c.sat_speed, np.minimum(u[:, 0], 0.0), u[:, 0])
                u[:, 0] = np.where(v <= -c.sat_speed, np.maximum(u[:, 0], 0.0), u[:, 0])
        else:
            u = np.atleast_2d(pl.linear_drift_control(mean, law, self.plant))
            if c.sat_speed is not None:
                norm = np.linalg.norm(u, axis=-1, keepdims=True)
                scale = np.where(norm > c.sat_speed, c.sat_speed / np.maximum(norm, 1e-12), 1.0)
                u = u * scale
        return u if np.asarray(mean).ndim > 1 else u[0]

    def control_laws(self) -> list[pl.ControlLaw]:
        """Per-segment laws with nominal durations and steady-state covariances."""
        if self._laws is None:
            self._laws = _prepare_laws(self)
        return self._laws

    def nominal_durations(self) -> np.ndarray:
        return np.array([law.delta_t for law in self.control_laws()])


def _approach_headings(waypoints: np.ndarray, start: np.ndarray) -> np.ndarray:
    pts = np.vstack([start[None, :2], waypoints])
    deltas = np.diff(pts, axis=0)
    headings = np.zeros(len(waypoints))
    prev = 0.0
    for i, d in enumerate(deltas):
        if np.hypot(*d) > 1e-12:
            prev = math.atan2(d[1], d[0])
        headings[i] = prev
    return headings


def _prepare_laws(sc: Scenario) -> list[pl.ControlLaw]:
    headings = _approach_headings(sc.waypoints, sc.initial_state)
    laws = []
    for i, wp in enumerate(sc.waypoints):
        if sc.plant.kind == "unicycle2":
            target_state = np.array([wp[0], wp[1], 0.0, headings[i]])
        else:
            target_state = np.asarray(wp, dtype=float)
        laws.append(
            pl.ControlLaw(
                index=i + 1,
                target=np.asarray(wp, dtype=float),
                target_state=target_state,
                gains=dict(sc.controller.gains),
                eps_mean=sc.controller.eps_mean,
                eps_var=sc.controller.eps_var,
                reach_radius=sc.controller.reach_radius,
            )
        )

    # Noise-free chained sweep: nominal durations for the time-triggered mode.
    dt = sc.plant.dt
    state = sc.initial_state.copy()
    for law in laws:
        steps = 0
        max_steps = int(round(sc.controller.t_max / dt))
        while True:
            u = sc.control_input(state, law)
            state = pl.step_dynamics(state, u, sc.plant, None)
            steps += 1
            if np.linalg.norm(state[:2] - law.target) < law.reach_radius:
                break
            if steps > max_steps:
                raise UnreachableWaypointError(law.index)
        law.delta_t = steps * dt

    for law in laws:
        law.qss = pl.steady_state_covariance(sc.plant, sc.sensors, law.target_state).covariance
    return laws


# -- YAML loading ------------------------------------------------------------


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidInputError(f"{path}: YAML parse error: {exc}") from exc
    sc = scenario_from_dict(raw, name=path.stem)
    sc.source_hash = text_sha256(text)
    return sc


def scenario_from_dict(raw: dict, name: str = "scenario") -> Scenario:
    if not isinstance(raw, dict):
        raise InvalidInputError("scenario document must be a mapping")
    dyn = _section(raw, "dynamics")
    kind = _field(dyn, "kind", str, "dynamics.kind")
    drift = dyn.get("drift", {})
    model = pl.PlantModel(
        kind=kind,
        sigma_w=_field(dyn, "sigma_w", (int, float), "dynamics.sigma_w"),
        dt=float(dyn.get("dt", 0.05)),
        drift_self=float(drift.get("self", -0.3)),
        drift_cross=float(drift.get("cross", 0.1)),
    )

    sen = _section(raw, "sensors")
    sensors = pl.SensorModel(
        sigma_od=_field(sen, "sigma_od", (int, float), "sensors.sigma_od"),
        sigma_lo=_field(sen, "sigma_lo", (int, float), "sensors.sigma_lo"),
        odometry_rate=float(sen.get("odometry_rate", 20.0)),
        localization_rate=float(sen.get("localization_rate", 16.0)),
    )

    ws_raw = _section(raw, "workspace")
    bounds = _rect_from(_field(ws_raw, "bounds", list, "workspace.bounds"), "workspace.bounds")
    obstacles = tuple(
        _shape_from(ob, f"workspace.obstacles[{k}]") for k, ob in enumerate(ws_raw.get("obstacles", []))
    )
    target = _shape_from(_field(ws_raw, "target", dict, "workspace.target"), "workspace.target")
    workspace = Workspace(bounds=bounds, obstacles=obstacles, target=target)
    workspace.validate()

    fp_raw = raw.get("footprint", {"kind": "point"})
    footprint = Footprint(
        kind=fp_raw.get("kind", "point"),
        radius=float(fp_raw.get("radius", 0.0)),
        width=float(fp_raw.get("width", 0.0)),
        height=float(fp_raw.get("height", 0.0)),
    )

    waypoints = np.asarray(_field(raw, "waypoints", list, "waypoints"), dtype=float)
    if waypoints.ndim != 2 or waypoints.shape[1] != 2 or len(waypoints) < 1:
        raise InvalidInputError("waypoints: expected a nonempty list of [x, y] pairs")

    init = np.asarray(_field(raw, "initial_state", list, "initial_state"), dtype=float)
    if len(init) == 2 and model.n_x == 4:
        init = np.array([init[0], init[1], 0.0, 0.0])
    if len(init) != model.n_x:
        raise InvalidInputError(f"initial_state: expected {model.n_x} components, got {len(init)}")

    boot_raw = _section(raw, "boot")
    boot = BootModel(
        t_boot=_field(boot_raw, "t_boot", (int, float), "boot.t_boot"),
        e_boot=_field(boot_raw, "e_boot", (int, float), "boot.e_boot"),
    )
    if boot.t_boot < 0 or boot.e_boot < 0:
        raise InvalidInputError("boot: t_boot and e_boot must be nonnegative")

    pw = _section(raw, "power")
    power = PowerModel(
        p_on=_field(pw, "p_on", (int, float), "power.p_on"),
        p_base=_field(pw, "p_base", (int, float), "power.p_base"),
    )
    if power.p_on < 0 or power.p_base < 0:
        raise InvalidInputError("power: demands must be nonnegative")

    objectives = tuple(raw.get("objectives", ["ptarg", "pcoll", "energy"]))
    if len(objectives) < 2:
        raise InvalidInputError("objectives: at least two are required")
    for obj in objectives:
        if obj not in OBJECTIVE_NAMES:
            raise InvalidInputError(f"objectives: unknown name {obj!r} (choose from {OBJECTIVE_NAMES})")

    ctl_raw = raw.get("controller", {})
    default_gains = DEFAULT_GAINS_UNICYCLE if kind == "unicycle2" else DEFAULT_GAINS_LINEAR
    sat = ctl_raw.get("saturation", {})
    controller = ControllerConfig(
        gains={**default_gains, **ctl_raw.get("gains", {})},
        eps_mean=float(ctl_raw.get("eps_mean", 0.05)),
        eps_var=float(ctl_raw.get("eps_var", 0.01)),
        v_min=float(ctl_raw.get("v_min", 0.05)),
        reach_radius=float(ctl_raw.get("reach_radius", 0.25)),
        t_max=float(ctl_raw.get("t_max", 120.0)),
        sat_speed=_opt_float(sat, "speed"),
        sat_accel=_opt_float(sat, "accel"),
        sat_turn=_opt_float(sat, "turn_rate"),
    )

    return Scenario(
        name=str(raw.get("name", name)),
        plant=model,
        sensors=sensors,
        workspace=workspace,
        footprint=footprint,
        waypoints=waypoints,
        initial_state=init,
        boot=boot,
        power=power,
        objectives=objectives,
        controller=controller,
    )


def _section(raw: dict, key: str) -> dict:
    if key not in raw or not isinstance(raw[key], dict):
        raise InvalidInputError(f"{key}: required section missing or not a mapping")
    return raw[key]


def _field(d: dict, key: str, types, path: str):
    if key not in d:
        raise InvalidInputError(f"{path}: required field missing")
    val = d[key]
    if not isinstance(val, types) or isinstance(val, bool):
        raise InvalidInputError(f"{path}: expected {types}, got {type(val).__name__}")
    return val


def _opt_float(d: dict, key: str) -> float | None:
    return float(d[key]) if key in d and d[key] is not None else None


def _rect_from(vals, path: str) -> Rect:
    if not (isinstance(vals, list) and len(vals) == 4):
        raise InvalidInputError(f"{path}: expected [xmin, ymin, xmax, ymax]")
    return Rect(float(vals[0]), float(vals[1]), float(vals[2]), float(vals[3]))


def _shape_from(d: dict, path: str) -> Shape:
    if not isinstance(d, dict) or "type" not in d:
        raise InvalidInputError(f"{path}: expected a mapping with a 'type' field")
    if d["type"] == "rect":
        try:
            return Rect(float(d["xmin"]), float(d["ymin"]), float(d["xmax"]), float(d["ymax"]))
        except KeyError as exc:
            raise InvalidInputError(f"{path}: rect needs xmin/ymin/xmax/ymax") from exc
    if d["type"] == "circle":
        try:
            return Circle(float(d["cx"]), float(d["cy"]), float(d["r"]))
        except KeyError as exc:
            raise InvalidInputError(f"{path}: circle needs cx/cy/r") from exc
    raise InvalidInputError(f"{path}: unknown shape type {d['type']!r}")
