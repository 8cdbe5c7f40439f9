"""Ambient models: signature-aware inner products and the three space forms.

The ambient is Euclidean R^N or Lorentz space L^N (one negative direction,
fixed to the first coordinate). Space forms are normalized to <x,x> = eps*R^2
with R the curvature radius, i.e. curvature eps/R^2; the hyperbolic model is
the upper sheet x_1 > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AmbientSpace",
    "SpaceForm",
    "GeometryError",
    "DegenerateSubspaceError",
    "inner",
    "sq_norm",
    "contains",
    "orthonormal_complement",
]

EUCLIDEAN = "euclidean"
LORENTZIAN = "lorentzian"


class GeometryError(ValueError):
    """Dimension mismatches, rank deficiency, invalid model parameters."""


class DegenerateSubspaceError(GeometryError):
    """A (Lorentzian) subspace is light-like or numerically degenerate."""


@dataclass(frozen=True)
class AmbientSpace:
    dimension: int
    signature: str = EUCLIDEAN

    def __post_init__(self):
        if self.dimension < 1:
            raise GeometryError("ambient dimension must be positive")
        if self.signature not in (EUCLIDEAN, LORENTZIAN):
            raise GeometryError(f"unknown signature {self.signature!r}")
        if self.signature == LORENTZIAN and self.dimension < 2:
            raise GeometryError("Lorentzian ambient requires dimension >= 2")

    @property
    def metric_diag(self) -> np.ndarray:
        d = np.ones(self.dimension)
        if self.signature == LORENTZIAN:
            d[0] = -1.0
        return d


@dataclass(frozen=True)
class SpaceForm:
    epsilon: int
    radius: float = 1.0
    ambient: AmbientSpace = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.epsilon not in (-1, 0, 1):
            raise GeometryError("epsilon must be -1, 0 or +1")
        if self.radius <= 0:
            raise GeometryError("radius must be positive")
        if self.ambient is None:
            raise GeometryError("space form requires an ambient space")
        if self.epsilon == -1 and self.ambient.signature != LORENTZIAN:
            raise GeometryError("hyperbolic space form requires a Lorentzian ambient")
        if self.epsilon in (0, 1) and self.ambient.signature != EUCLIDEAN:
            raise GeometryError("flat/spherical space form requires a Euclidean ambient")


def _check_dims(x: np.ndarray, y: np.ndarray, space: AmbientSpace):
    if x.shape[-1] != space.dimension or y.shape[-1] != space.dimension:
        raise GeometryError(
            f"dimension mismatch: vectors of size {x.shape[-1]}, {y.shape[-1]} "
            f"in ambient of dimension {space.dimension}"
        )


def inner(x, y, space: AmbientSpace) -> np.ndarray:
    """Signature inner product; Lorentzian flips the sign of the first coordinate."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dims(x, y, space)
    if space.signature == EUCLIDEAN:
        return np.einsum("...i,...i->...", x, y)
    return np.einsum("...i,...i->...", x * space.metric_diag, y)


def sq_norm(x, space: AmbientSpace) -> np.ndarray:
    return inner(x, x, space)


def contains(x, sf: SpaceForm, tol: float) -> bool:
    """Membership in the space form; eps=0 means the flat ambient itself."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != sf.ambient.dimension:
        raise GeometryError(
            f"dimension mismatch: vector of size {x.shape[-1]} in ambient of "
            f"dimension {sf.ambient.dimension}"
        )
    if sf.epsilon == 0:
        return True
    target = sf.epsilon * sf.radius**2
    ok = np.abs(sq_norm(x, sf.ambient) - target) <= tol
    if sf.epsilon == -1:
        ok = np.logical_and(ok, x[..., 0] > 0.0)
    return bool(np.all(ok))


def _project_out(v: np.ndarray, frame: list, signs: list, diag: np.ndarray) -> np.ndarray:
    for u, s in zip(frame, signs):
        v = v - s * float(np.dot(v * diag, u)) * u
    return v


def orthonormal_complement(
    basis, space: AmbientSpace, tol: float = 1e-10
) -> list[np.ndarray]:
    """Orthonormal basis of the orthogonal complement of span(basis).

    Deterministic: Gram-Schmidt over the input vectors followed by the
    canonical coordinate vectors in order. Each returned u has <u,u> = +-1;
    a Lorentzian light-like span is rejected.
    """
    vectors = [np.asarray(v, dtype=float) for v in basis]
    n = space.dimension
    for v in vectors:
        if v.shape != (n,):
            raise GeometryError(f"basis vector of shape {v.shape} in dimension {n}")
    diag = space.metric_diag

    if vectors:
        gram = np.array([[inner(a, b, space) for b in vectors] for a in vectors])
        scale = max(1.0, float(np.max(np.abs(gram))))
        if abs(np.linalg.det(gram)) <= tol * scale ** len(vectors):
            raise DegenerateSubspaceError(
                "spanned subspace is degenerate w.r.t. the ambient inner product "
                f"(|det Gram| = {abs(np.linalg.det(gram)):.3e})"
            )

    frame: list[np.ndarray] = []
    signs: list[float] = []
    for v in vectors:
        w = _project_out(v, frame, signs, diag)
        n2 = float(np.dot(w * diag, w))
        if abs(n2) <= tol * max(1.0, float(np.dot(w, w))):
            raise GeometryError("rank-deficient or degenerate input basis")
        w = w / np.sqrt(abs(n2))
        frame.append(w)
        signs.append(1.0 if n2 > 0 else -1.0)

    complement: list[np.ndarray] = []
    comp_signs: list[float] = []
    for i in range(n):
        if len(frame) + len(complement) == n:
            break
        v = np.zeros(n)
        v[i] = 1.0
        w = _project_out(v, frame, signs, diag)
        w = _project_out(w, complement, comp_signs, diag)
        n2 = float(np.dot(w * diag, w))
        if abs(n2) <= tol:
            continue
        w = w / np.sqrt(abs(n2))
        complement.append(w)
        comp_signs.append(1.0 if n2 > 0 else -1.0)
    if len(frame) + len(complement) != n:
        raise DegenerateSubspaceError(
            "could not complete an orthonormal frame (degenerate complement)"
        )
    return complement
