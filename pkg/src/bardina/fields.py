"""Periodic grid, spectral transforms, differential operators and norms.

Fields are plain numpy arrays whose last three axes are the ``(N, N, N)``
grid (axis 0 is x1).  A scalar field has shape ``(N, N, N)``, a vector
field ``(3, N, N, N)`` and a tensor field ``(3, 3, N, N, N)``.  Their
spectral twins use the real-to-complex half-space layout of
:func:`scipy.fft.rfftn` over the same three axes.

Normalization: the forward transform is unscaled and the inverse carries
``1/N**3``, so Parseval reads ``sum |f|**2 = sum' |F|**2 / N**3`` with the
half-space weights of :func:`spectral_weights`.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

AXES = (-3, -2, -1)
EPS_DIV = 1e-10


def _workers() -> int:
    value = os.environ.get("BARDINA_THREADS")
    return max(1, int(value)) if value else 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid of ``N**3`` points on a box of edge ``L``."""

    N: int
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.N < 8 or self.N % 2:
            raise ValueError(f"N must be even and >= 8, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N // 2 + 1)

    @property
    def volume(self) -> float:
        return self.L**3

    @cached_property
    def x(self) -> np.ndarray:
        """Node coordinates, shape ``(3, N, N, N)``."""
        x1 = np.arange(self.N) * self.h
        return np.stack(np.meshgrid(x1, x1, x1, indexing="ij"))

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer wave numbers m in [-N/2, N/2), shape ``(3, N, N, N//2+1)``."""
        m = np.fft.fftfreq(self.N, 1.0 / self.N)
        mz = np.fft.rfftfreq(self.N, 1.0 / self.N)
        return np.stack(np.meshgrid(m, m, mz, indexing="ij"))

    @cached_property
    def k(self) -> np.ndarray:
        """Wave vectors ``2*pi*m/L``."""
        return self.modes * (2 * np.pi / self.L)

    @cached_property
    def k_odd(self) -> np.ndarray:
        """Wave vectors with Nyquist components zeroed, used for odd derivatives."""
        k = self.k.copy()
        k[np.abs(self.modes) == self.N // 2] = 0.0
        return k

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.k**2, axis=0)

    @cached_property
    def k2_odd(self) -> np.ndarray:
        return np.sum(self.k_odd**2, axis=0)

    @cached_property
    def weights(self) -> np.ndarray:
        """Half-space multiplicities: 1 on the kz=0 and Nyquist planes, else 2."""
        w = np.full(self.N // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w, self.spectral_shape)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keeps modes with every ``|m_i| < N/3``."""
        return np.all(np.abs(self.modes) < self.N / 3, axis=0)

    def zeros(self, *components: int) -> np.ndarray:
        return np.zeros((*components, *self.shape))


def _check_finite(f: np.ndarray) -> None:
    if not np.all(np.isfinite(f)):
        raise ValueError("field contains non-finite values")


def forward(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Unscaled forward transform over the trailing grid axes."""
    if f.shape[-3:] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    _check_finite(f)
    return sfft.rfftn(f, axes=AXES, workers=_workers())


def inverse(grid: Grid, F: np.ndarray) -> np.ndarray:
    if F.shape[-3:] != grid.spectral_shape:
        raise ValueError(f"spectrum shape {F.shape} does not match grid {grid.spectral_shape}")
    _check_finite(F)
    return sfft.irfftn(F, s=grid.shape, axes=AXES, workers=_workers())


def spectral_weights(grid: Grid) -> np.ndarray:
    return grid.weights


# -- differential operators -------------------------------------------------


def _symbol(grid: Grid, alpha: tuple[int, int, int]) -> np.ndarray:
    """Fourier symbol of D^alpha; odd powers drop the Nyquist component."""
    sym = np.ones(grid.spectral_shape, dtype=complex)
    for axis, power in enumerate(alpha):
        if power:
            k = grid.k_odd[axis] if power % 2 else grid.k[axis]
            sym = sym * (1j * k) ** power
    return sym


def gradient_hat(grid: Grid, F: np.ndarray) -> np.ndarray:
    """Spectral gradient; a new axis of length 3 is inserted before the grid axes."""
    return 1j * grid.k_odd * F[..., None, :, :, :]


def divergence_hat(grid: Grid, V: np.ndarray) -> np.ndarray:
    """Contract the last component axis (length 3) with ``i k``."""
    return np.sum(1j * grid.k_odd * V, axis=-4)


def gradient(grid: Grid, f: np.ndarray) -> np.ndarray:
    return inverse(grid, gradient_hat(grid, forward(grid, f)))


def divergence(grid: Grid, v: np.ndarray) -> np.ndarray:
    return inverse(grid, divergence_hat(grid, forward(grid, v)))


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    return inverse(grid, -grid.k2 * forward(grid, f))


def derivative(grid: Grid, f: np.ndarray, alpha: tuple[int, int, int]) -> np.ndarray:
    return inverse(grid, _symbol(grid, alpha) * forward(grid, f))


def leray_project_hat(grid: Grid, V: np.ndarray) -> np.ndarray:
    """Apply ``I - k k^T / |k|^2`` per mode; modes with ``k = 0`` pass through."""
    k = grid.k_odd
    k2 = grid.k2_odd
    safe = np.where(k2 > 0, k2, 1.0)
    kv = np.sum(k * V, axis=0) / safe
    return V - k * kv


def leray_project(grid: Grid, v: np.ndarray) -> np.ndarray:
    return inverse(grid, leray_project_hat(grid, forward(grid, v)))


# -- inner products and norms -----------------------------------------------


def inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    """Discrete L2 product ``h^3 sum f.g`` summed over all components."""
    return float(np.sum(f * g) * grid.h**3)


def inner_hat(grid: Grid, F: np.ndarray, G: np.ndarray) -> float:
    """Same product evaluated on the spectral side through Parseval."""
    return float(np.sum(grid.weights * np.real(F * np.conj(G))) * grid.volume / grid.N**6)


def norm2_hat(grid: Grid, F: np.ndarray) -> float:
    """Squared L2 norm from spectral coefficients."""
    return float(np.sum(grid.weights * np.abs(F) ** 2) * grid.volume / grid.N**6)


def magnitude(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Pointwise Euclidean magnitude over any leading component axes."""
    if f.ndim == 3:
        return np.abs(f)
    return np.sqrt(np.sum(f.reshape(-1, *grid.shape) ** 2, axis=0))


def _lp(grid: Grid, mag: np.ndarray, p: float) -> float:
    if p == np.inf:
        return float(mag.max())
    if p == 1:
        return float(mag.sum() * grid.h**3)
    if p == 2:
        return float(np.sqrt(np.sum(mag**2) * grid.h**3))
    raise ValueError(f"unsupported p={p}; expected 1, 2 or inf")


def norm_lp(grid: Grid, f: np.ndarray, p: float = 2) -> float:
    """L^p norm by the rectangle rule; vector fields use the pointwise magnitude."""
    return _lp(grid, magnitude(f, grid), p)


def multi_indices(order: int):
    return [a for a in itertools.product(range(order + 1), repeat=3) if sum(a) == order]


def derivative_magnitude(grid: Grid, f: np.ndarray, order: int, F: np.ndarray | None = None) -> np.ndarray:
    """``|D^order f|(x) = sup over |alpha| = order of |D^alpha f(x)|``."""
    if order == 0:
        return magnitude(f, grid)
    if F is None:
        F = forward(grid, f)
    out = None
    for alpha in multi_indices(order):
        mag = magnitude(inverse(grid, _symbol(grid, alpha) * F), grid)
        out = mag if out is None else np.maximum(out, mag)
    return out


def norm_wmp(grid: Grid, f: np.ndarray, m: int, p: float = 2) -> float:
    """``||f||_{m,p} = sum_{j<=m} ||D^j f||_{L^p}`` with the sup-over-multi-index convention."""
    if m not in range(5):
        raise ValueError(f"unsupported derivative order m={m}; expected 0..4")
    if p not in (1, 2, np.inf):
        raise ValueError(f"unsupported p={p}; expected 1, 2 or inf")
    F = forward(grid, f) if m else None
    return sum(_lp(grid, derivative_magnitude(grid, f, j, F), p) for j in range(m + 1))


def max_divergence(grid: Grid, v: np.ndarray) -> float:
    return float(np.abs(divergence(grid, v)).max())


def is_divergence_free(grid: Grid, v: np.ndarray, eps: float = EPS_DIV) -> bool:
    scale = norm_lp(grid, v, 2)
    return max_divergence(grid, v) <= eps * max(scale, np.finfo(float).tiny)


# -- random fields ------------------------------------------------------------


def rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed directly by the seed (platform stable)."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def random_field(
    grid: Grid,
    seed: int,
    components: tuple[int, ...] = (),
    kmax: int | None = None,
    slope: float = 0.0,
) -> np.ndarray:
    """Band-limited random field with modes ``|m_i| <= kmax`` and amplitude ``~ |k|^slope``.

    The default ``kmax`` keeps every mode inside the 2/3-rule band.  For a
    pointwise product of two fields to be exact on the grid use
    :func:`product_kmax` instead.
    """
    if kmax is None:
        kmax = (grid.N - 1) // 3
    noise = rng(seed).standard_normal((*components, *grid.shape))
    F = sfft.rfftn(noise, axes=AXES)
    band = np.all(np.abs(grid.modes) <= kmax, axis=0)
    kk = np.sqrt(grid.k2)
    shape = np.where(kk > 0, kk, 1.0) ** slope
    return inverse(grid, F * band * shape)


def product_kmax(grid: Grid) -> int:
    """Largest per-axis mode such that a product of two fields stays below Nyquist."""
    return (grid.N // 2 - 1) // 2


def random_solenoidal(grid: Grid, seed: int, kmax: int | None = None, slope: float = 0.0) -> np.ndarray:
    v = random_field(grid, seed, (3,), kmax=kmax, slope=slope)
    return leray_project(grid, v)
