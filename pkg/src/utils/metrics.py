import numpy as np

from src.fields.grid import ScalarField, VectorField


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, ScalarField) else np.asarray(x, dtype=float)


def relative_l2(reference, other) -> float:
    """||reference - other|| / ||reference||; the plain distance when the reference is zero."""
    a, b = _values(reference), _values(other)
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch: {a.shape} vs {b.shape}")
    distance = float(np.linalg.norm((a - b).ravel()))
    scale = float(np.linalg.norm(a.ravel()))
    return distance / scale if scale > 0 else distance


def linf_distance(reference, other) -> float:
    a, b = _values(reference), _values(other)
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def symmetry_defect(u: ScalarField) -> float:
    """Max deviation of a square image from its two flips and its 90 degree rotation."""
    values = u.values
    if u.shape.dims != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("symmetry_defect needs a square 2-D image")
    return max(
        linf_distance(values, values[::-1, :]),
        linf_distance(values, values[:, ::-1]),
        linf_distance(values, np.rot90(values)),
    )


def transpose_defect(u: ScalarField) -> float:
    """Max deviation of a square image from its transpose, the one symmetry the discretisation keeps exactly."""
    values = u.values
    if u.shape.dims != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("transpose_defect needs a square 2-D image")
    return linf_distance(values, values.T)


def gradient_symmetry_defect(g: VectorField) -> float:
    """
    Largest violation of the gradient relations of a symmetric image.

    Forward differences live half a cell off the pixels, so across its own
    axis a component is odd about the shifted centre (g1[i] = -g1[n-2-i]);
    across the other axis it is even. The transpose relation is g1 = g2^T.
    """
    if g.shape.dims != 2 or g.shape.n1 != g.shape.n2:
        raise ValueError("gradient_symmetry_defect needs a square 2-D field")
    g1, g2 = g.values
    return max(
        float(np.max(np.abs(g1[:-1, :] + g1[-2::-1, :]))),
        float(np.max(np.abs(g1 - g1[:, ::-1]))),
        float(np.max(np.abs(g2[:, :-1] + g2[:, -2::-1]))),
        float(np.max(np.abs(g2 - g2[::-1, :]))),
        float(np.max(np.abs(g1 - g2.T))),
    )
