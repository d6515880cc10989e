"""Deterministic strand geometries for the standard experiments.

All generators put the root at the origin with gravity along -y.

* ``vertical(n, length)``: straight strand hanging down from the root.
* ``horizontal(n, length)``: straight strand along +x (a cantilever).
* ``helix(n, radius, pitch, turns)``: helix with axis -y starting at the root,
  useful as a 3D curve with constant curvature and torsion.
* ``coil(n, radius, pitch, turns, lead)``: a curl hanging below a straight
  ``lead`` segment; a coiled hair-like strand.
* ``hair(n, length, ...)``: a strand leaving the scalp sideways, arching over
  and falling down with a gentle out-of-plane wave.
"""
import numpy as np

from .errors import UnknownScenario
from .kinematics import StrandGeometry


def vertical(n=20, length=1.0):
    y = -np.linspace(0.0, length, n)
    return StrandGeometry(np.column_stack([np.zeros(n), y, np.zeros(n)]))


def horizontal(n=20, length=1.0):
    x = np.linspace(0.0, length, n)
    return StrandGeometry(np.column_stack([x, np.zeros(n), np.zeros(n)]))


def helix(n=40, radius=0.03, pitch=0.05, turns=2.0):
    """Vertices equally spaced in parameter along ``turns`` windings."""
    phi = np.linspace(0.0, 2 * np.pi * turns, n)
    pts = np.column_stack(
        [radius * (np.cos(phi) - 1.0), -pitch * phi / (2 * np.pi), radius * np.sin(phi)]
    )
    return StrandGeometry(pts)


def coil(n=60, radius=0.02, pitch=0.03, turns=4.0, lead=0.1):
    n_lead = max(3, int(round(n * lead / (lead + 2 * np.pi * radius * turns))))
    y_lead = -np.linspace(0.0, lead, n_lead)
    straight = np.column_stack([np.zeros(n_lead), y_lead, np.zeros(n_lead)])
    phi = np.linspace(0.0, 2 * np.pi * turns, n - n_lead + 1)[1:]
    curl = np.column_stack(
        [
            radius * (1.0 - np.cos(phi)),
            -lead - pitch * phi / (2 * np.pi) - 0.25 * radius * np.sin(phi),
            radius * np.sin(phi),
        ]
    )
    return StrandGeometry(np.vstack([straight, curl]))


def hair(n=40, length=0.5, arch=0.06, wave=0.01, waves=2.0):
    """Arc over a head-like bump then a falling tail, sampled at equal arc length."""
    s = np.linspace(0.0, 1.0, 400)
    # sideways exit that curls over into a downward fall
    angle = -0.5 * np.pi * np.clip(s / 0.5, 0.0, 1.0) ** 1.5
    heading = np.column_stack([np.cos(angle), np.sin(angle), np.zeros_like(s)])
    heading[:, 2] = wave / arch * np.sin(2 * np.pi * waves * s) * np.clip(s / 0.2, 0, 1)
    heading /= np.linalg.norm(heading, axis=1, keepdims=True)
    ds = np.diff(s)[:, None] * length
    pts = np.vstack([np.zeros(3), np.cumsum(0.5 * (heading[1:] + heading[:-1]) * ds, axis=0)])
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    target = np.linspace(0.0, arc[-1], n)
    resampled = np.column_stack([np.interp(target, arc, pts[:, k]) for k in range(3)])
    return StrandGeometry(resampled)


GENERATORS = {
    "vertical": vertical,
    "horizontal": horizontal,
    "helix": helix,
    "coil": coil,
    "hair": hair,
}


def generate_scenario(name, **params):
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {sorted(GENERATORS)}") from None
    return gen(**params).validate()
