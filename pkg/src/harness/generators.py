"""
Deterministic test data.

2-D images cover a square of side Config.DOMAIN_EXTENT, so the pixel spacing
is extent / n unless given explicitly. Shapes are built on doubled integer
pixel coordinates (2i - (n - 1)), which keeps centred images exactly
symmetric under both flips and the 90 degree rotation.
"""

from typing import Optional, Sequence

import numpy as np

from src.affine.regression import AffineFit
from src.config.settings import Config
from src.fields.grid import ScalarField, VectorField, GridShape


IMAGE_KINDS = ("disk", "disk-offset", "squares", "ramp-ellipse", "step")
DEFAULT_OFFSET = (0.2, 0.0)


def image_spacing(n: int, spacing: Optional[float] = None) -> float:
    return Config.DOMAIN_EXTENT / n if spacing is None else float(spacing)


def _doubled(n: int):
    """Doubled centred pixel coordinates, exact integers stored as floats."""
    i, j = np.indices((n, n))
    return (2 * i - (n - 1)).astype(float), (2 * j - (n - 1)).astype(float)


def _check_n(n: int, minimum: int = 2) -> None:
    if int(n) != n or n < minimum:
        raise ValueError(f"n must be an integer >= {minimum}, got {n}")


def gen_disk(n: int, radius_frac: float = 0.25, center_offset_frac: Sequence[float] = (0.0, 0.0),
             spacing: Optional[float] = None) -> ScalarField:
    """Indicator of a disk of radius radius_frac * n pixels, shifted by center_offset_frac * n."""
    _check_n(n)
    if not 0 < radius_frac < 0.5:
        raise ValueError(f"radius_frac must lie in (0, 0.5), got {radius_frac}")
    c1, c2 = (float(c) for c in center_offset_frac)
    if max(abs(c1), abs(c2)) + radius_frac > 0.5:
        raise ValueError(f"Disk with radius {radius_frac} and offset ({c1}, {c2}) leaves the domain")

    x1, x2 = _doubled(n)
    radius = 2.0 * radius_frac * n
    inside = (x1 - 2.0 * c1 * n) ** 2 + (x2 - 2.0 * c2 * n) ** 2 <= radius ** 2
    return ScalarField.from_array(inside.astype(float), spacing=image_spacing(n, spacing))


def gen_squares(n: int, spacing: Optional[float] = None) -> ScalarField:
    """Concentric centred squares: 0.5 in the core, 1 in the middle band, 0 outside."""
    _check_n(n)
    x1, x2 = _doubled(n)
    rho = np.maximum(np.abs(x1), np.abs(x2)) / (2.0 * n)
    values = np.where(rho < 0.15, 0.5, np.where(rho < 0.3, 1.0, 0.0))
    return ScalarField.from_array(values, spacing=image_spacing(n, spacing))


def ellipse_mask(n: int) -> np.ndarray:
    """Support of the bump in gen_ramp_ellipse."""
    x1, x2 = _doubled(n)
    t1, t2 = x1 / (2.0 * n), x2 / (2.0 * n)
    return ((t1 - 0.08) / 0.22) ** 2 + ((t2 + 0.05) / 0.14) ** 2 < 1.0


def gen_ramp_ellipse(n: int, spacing: Optional[float] = None) -> ScalarField:
    """
    Affine ramp 0.5 + 0.4 (t1 + t2) on normalised coordinates t in (-1/2, 1/2),
    plus an elliptical bump that jumps by 0.25 at its rim and rises to a smooth dome.
    """
    _check_n(n)
    x1, x2 = _doubled(n)
    t1, t2 = x1 / (2.0 * n), x2 / (2.0 * n)
    background = np.clip(0.5 + 0.4 * (t1 + t2), 0.0, 1.0)

    radial = ((t1 - 0.08) / 0.22) ** 2 + ((t2 + 0.05) / 0.14) ** 2
    mask = ellipse_mask(n)
    bump = np.where(mask, 0.25 + 0.2 * (1.0 - radial), 0.0)
    return ScalarField.from_array(background + bump, spacing=image_spacing(n, spacing))


def gen_step(n: int, spacing: float = 1.0, height: float = 1.0) -> ScalarField:
    """1-D piecewise-constant step: 0 on the left half, ``height`` on the right."""
    _check_n(n)
    values = np.where(np.arange(n) < n // 2, 0.0, float(height))
    return ScalarField.from_array(values, spacing=spacing)


def gen_affine(shape: GridShape, c0: float = 0.3, c1: float = 0.01, c2: float = -0.02) -> ScalarField:
    """c0 + c1 x1 + c2 x2 on centred coordinates."""
    return AffineFit(c0, c1, c2 if shape.dims == 2 else None).evaluate(shape)


def gen_smooth_field(n: int, seed: int = Config.SEED, spacing: float = 1.0, terms: int = 4) -> VectorField:
    """Random low-frequency trigonometric vector field on an n x n grid."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    x1, x2 = _doubled(n)
    t1, t2 = x1 / (2.0 * n), x2 / (2.0 * n)

    channels = []
    for _ in range(2):
        channel = np.zeros((n, n))
        for _ in range(terms):
            k1, k2 = rng.integers(0, 3, size=2)
            amplitude = rng.standard_normal()
            phase = rng.uniform(0.0, 2.0 * np.pi)
            channel += amplitude * np.cos(2.0 * np.pi * (k1 * t1 + k2 * t2) + phase)
        channels.append(channel)
    return VectorField(GridShape.square(n, spacing), np.stack(channels))


def add_noise(f: ScalarField, sigma: float = Config.NOISE_SIGMA, seed: int = Config.SEED) -> ScalarField:
    """f + sigma * N(0, 1) i.i.d. from numpy's default generator seeded with ``seed``."""
    if not sigma >= 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return f.with_values(f.values)
    rng = np.random.default_rng(seed)
    return f.with_values(f.values + sigma * rng.standard_normal(f.shape.array_shape))


def generate(kind: str, n: int, spacing: Optional[float] = None, **options) -> ScalarField:
    """Dispatch by image kind name."""
    if kind == "disk":
        return gen_disk(n, options.get("radius_frac", 0.25), spacing=spacing)
    if kind == "disk-offset":
        offset = options.get("offset") or DEFAULT_OFFSET
        return gen_disk(n, options.get("radius_frac", 0.25), offset, spacing=spacing)
    if kind == "squares":
        return gen_squares(n, spacing)
    if kind == "ramp-ellipse":
        return gen_ramp_ellipse(n, spacing)
    if kind == "step":
        return gen_step(n, 1.0 if spacing is None else spacing)
    raise ValueError(f"Unknown image kind '{kind}', expected one of {IMAGE_KINDS}")
