#!/usr/bin/env python3
"""Regenerate the shipped example scenarios in scenarios/.

Waypoint layouts are parametric reconstructions (arcs, corridors, serpentines)
rather than published coordinates; run this script after editing a layout.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import yaml

OUT = Path(__file__).resolve().parent.parent / "scenarios"


def _round2(pts) -> list[list[float]]:
    return [[round(float(x), 2), round(float(y), 2)] for x, y in pts]


def _resample(pts: np.ndarray, n: int) -> np.ndarray:
    """n points equally spaced by arc length along a polyline."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    want = np.linspace(0, s[-1], n + 1)[1:]
    return np.vstack([np.interp(want, s, pts[:, k]) for k in range(2)]).T


def unicycle_base(name: str, waypoints, initial, workspace, target, eps_var: float = 0.01) -> dict:
    return {
        "name": name,
        "dynamics": {"kind": "unicycle2", "sigma_w": 0.01, "dt": 0.05},
        "sensors": {"sigma_od": 0.2, "sigma_lo": 0.03, "odometry_rate": 20.0, "localization_rate": 16.0},
        "workspace": workspace | {"target": target},
        "footprint": {"kind": "point"},
        "initial_state": initial,
        "waypoints": waypoints,
        "boot": {"t_boot": 5.0, "e_boot": 40.0},
        "power": {"p_on": 8.0, "p_base": 42.0},
        "objectives": ["ptarg", "pcoll", "energy"],
        "controller": {
            "gains": {"k1": 1.0, "k2": 2.236, "k3": 1.0, "k4": 2.236},
            "eps_mean": 0.03,
            "eps_var": eps_var,
            "v_min": 0.05,
            "reach_radius": 0.2,
            "t_max": 120.0,
            "saturation": {"speed": 0.5, "accel": 1.0, "turn_rate": 2.0},
        },
    }


def open_trajectory() -> dict:
    t = np.linspace(0, 1, 200)
    pts = np.stack([1.0 + 7.8 * t, 1.0 + 7.8 * t**2], axis=1)
    wps = _resample(pts, 26)
    return unicycle_base(
        "unicycle_open",
        _round2(wps),
        [1.0, 1.0, 0.0, 0.5],
        {
            "bounds": [0, 0, 10, 10],
            "obstacles": [
                {"type": "rect", "xmin": 2.0, "ymin": 6.0, "xmax": 4.0, "ymax": 7.5},
                {"type": "circle", "cx": 7.6, "cy": 3.2, "r": 0.8},
                {"type": "rect", "xmin": 0.5, "ymin": 4.0, "xmax": 1.5, "ymax": 5.5},
            ],
        },
        {"type": "rect", "xmin": 8.57, "ymin": 8.57, "xmax": 9.03, "ymax": 9.03},
    )


def narrow_trajectory() -> dict:
    legs = np.array(
        [
            [1.0, 8.0],
            [4.4, 8.0],
            [5.0, 7.4],
            [5.0, 4.2],
            [5.6, 3.4],
            [8.5, 2.4],
        ]
    )
    wps = _resample(legs, 27)
    return unicycle_base(
        "unicycle_narrow",
        _round2(wps),
        [1.0, 8.0, 0.0, 0.0],
        {
            "bounds": [0, 0, 10, 10],
            "obstacles": [
                {"type": "rect", "xmin": 3.7, "ymin": 4.2, "xmax": 4.55, "ymax": 7.0},
                {"type": "rect", "xmin": 5.45, "ymin": 4.4, "xmax": 6.3, "ymax": 7.2},
                {"type": "rect", "xmin": 5.06, "ymin": 5.0, "xmax": 5.45, "ymax": 5.6},
                {"type": "rect", "xmin": 2.0, "ymin": 1.0, "xmax": 3.5, "ymax": 2.5},
                {"type": "circle", "cx": 7.4, "cy": 5.6, "r": 0.7},
            ],
        },
        {"type": "rect", "xmin": 8.27, "ymin": 2.17, "xmax": 8.73, "ymax": 2.63},
    )


def winding_trajectory() -> dict:
    legs = np.array(
        [
            [1.0, 1.5],
            [8.3, 1.5],
            [8.3, 4.5],
            [1.7, 4.5],
            [1.7, 7.6],
            [8.6, 7.6],
        ]
    )
    wps = _resample(legs, 39)
    return unicycle_base(
        "unicycle_winding",
        _round2(wps),
        [1.0, 1.5, 0.0, 0.0],
        {
            "bounds": [0, 0, 10, 10],
            "obstacles": [
                {"type": "rect", "xmin": 3.0, "ymin": 2.4, "xmax": 7.0, "ymax": 3.7},
                {"type": "rect", "xmin": 3.0, "ymin": 5.3, "xmax": 7.0, "ymax": 6.7},
                {"type": "rect", "xmin": 4.6, "ymin": 3.7, "xmax": 5.4, "ymax": 4.44},
                {"type": "circle", "cx": 9.35, "cy": 3.0, "r": 0.55},
                {"type": "rect", "xmin": 0.3, "ymin": 2.8, "xmax": 0.95, "ymax": 6.2},
            ],
        },
        {"type": "rect", "xmin": 8.37, "ymin": 7.37, "xmax": 8.83, "ymax": 7.83},
    )


def pc_profile(name: str, p_base: float, loc_rate: float) -> dict:
    legs = np.array(
        [
            [1.0, 0.8],
            [9.0, 0.8],
            [9.0, 2.5],
            [1.0, 2.5],
            [1.0, 4.2],
            [8.9, 4.2],
        ]
    )
    wps = _resample(legs, 40)
    return {
        "name": name,
        "dynamics": {"kind": "linear_drift", "sigma_w": 0.07, "dt": 0.05,
                     "drift": {"self": -0.3, "cross": 0.1}},
        "sensors": {"sigma_od": 0.2, "sigma_lo": 0.03, "odometry_rate": 20.0,
                    "localization_rate": loc_rate},
        "workspace": {
            "bounds": [0, 0, 10, 5],
            "obstacles": [
                {"type": "rect", "xmin": 2.5, "ymin": 1.45, "xmax": 7.5, "ymax": 1.95},
                {"type": "rect", "xmin": 2.5, "ymin": 3.05, "xmax": 7.5, "ymax": 3.55},
                {"type": "rect", "xmin": 1.35, "ymin": 3.3, "xmax": 1.75, "ymax": 3.9},
                {"type": "rect", "xmin": 1.35, "ymin": 4.52, "xmax": 1.75, "ymax": 5.0},
            ],
            "target": {"type": "rect", "xmin": 8.62, "ymin": 3.92, "xmax": 9.18, "ymax": 4.48},
        },
        "footprint": {"kind": "point"},
        "initial_state": [1.0, 0.8],
        "waypoints": _round2(wps),
        "boot": {"t_boot": 5.0, "e_boot": 40.0},
        "power": {"p_on": 8.0, "p_base": p_base},
        "objectives": ["ptarg", "pcoll", "energy", "duration"],
        "controller": {
            "gains": {"kp": 0.5},
            "eps_mean": 0.05,
            "eps_var": 0.01,
            "reach_radius": 0.2,
            "t_max": 120.0,
        },
    }


def main() -> None:
    OUT.mkdir(exist_ok=True)
    docs = [
        open_trajectory(),
        narrow_trajectory(),
        winding_trajectory(),
        pc_profile("pc_profile_a", p_base=36.0, loc_rate=10.0),
        pc_profile("pc_profile_b", p_base=34.0, loc_rate=16.0),
    ]
    for doc in docs:
        path = OUT / f"{doc['name']}.yaml"
        path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")
        print("wrote", path)


if __name__ == "__main__":
    main()
