"""Divergence-free initial velocity fields."""

from __future__ import annotations

import numpy as np

from . import fields
from .fields import Grid


def taylor_green(grid: Grid, amplitude: float = 1.0, three_d: bool = True) -> np.ndarray:
    """Taylor-Green vortex ``(sin x cos y cos z, -cos x sin y cos z, 0)`` in box units.

    With ``three_d=False`` the ``cos z`` factor is dropped; that planar field
    is a steady Euler flow whose projected nonlinearity vanishes.
    """
    x, y, z = grid.x * (2 * np.pi / grid.L)
    cz = np.cos(z) if three_d else 1.0
    u = np.stack([
        np.sin(x) * np.cos(y) * cz,
        -np.cos(x) * np.sin(y) * cz,
        np.zeros(grid.shape),
    ])
    return amplitude * u


def beltrami(grid: Grid, amplitude: float = 1.0) -> np.ndarray:
    """ABC flow with A = B = C: ``curl u = u``, so ``(u.grad)u = grad(|u|^2/2)``."""
    x, y, z = grid.x * (2 * np.pi / grid.L)
    return amplitude * np.stack([
        np.sin(z) + np.cos(y),
        np.sin(x) + np.cos(z),
        np.sin(y) + np.cos(x),
    ])


def random_velocity(grid: Grid, seed: int, slope: float = -2.0, kmax: int | None = None,
                    energy: float = 1.0) -> np.ndarray:
    """Random solenoidal band-limited field with spectral amplitude ``~ |k|^slope``.

    Rescaled so that ``||u||_{0,2}^2 / L^3 = energy``.
    """
    u = fields.random_solenoidal(grid, seed, kmax=kmax, slope=slope)
    norm2 = fields.norm_lp(grid, u, 2) ** 2 / grid.volume
    return u * np.sqrt(energy / norm2) if norm2 > 0 else u


def make_initial(grid: Grid, kind: str, seed: int = 0, slope: float = -2.0, amplitude: float = 1.0) -> np.ndarray:
    if kind == "taylor-green":
        return taylor_green(grid, amplitude)
    if kind == "taylor-green-2d":
        return taylor_green(grid, amplitude, three_d=False)
    if kind == "beltrami":
        return beltrami(grid, amplitude)
    if kind == "random":
        return random_velocity(grid, seed, slope=slope, energy=amplitude**2)
    if kind == "zero":
        return grid.zeros(3)
    raise ValueError(f"unknown initial data kind {kind!r}")
