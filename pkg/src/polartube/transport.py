"""Normal-connection machinery: parallel transport, flatness, frame isometries.

Transport integrates the Weingarten form d xi/dt = -f_*(A_xi gamma'(t)) with
classical fourth-order steps, re-projecting onto the normal space after every
step. A ParallelIsometry maps a flat fiber (R^s or L^s) isometrically onto a
parallel flat normal subbundle; its frames are either closed-form expressions
over the base parameters or a transported lattice with multilinear
interpolation in between.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from polartube.ambient import EUCLIDEAN, LORENTZIAN, GeometryError, inner
from polartube.expr import Expression
from polartube.immersion import Immersion, grid_axes

__all__ = [
    "TransportResult",
    "ParamPath",
    "ParallelIsometry",
    "FlatnessError",
    "transport",
    "transport_frame",
    "holonomy_defect",
    "build_parallel_isometry",
]

DEFAULT_STEPS_PER_UNIT = 64


class FlatnessError(GeometryError):
    """Path-independence defect above tolerance while building an isometry."""


@dataclass
class TransportResult:
    vector: np.ndarray
    normality_drift: float
    norm_drift: float


class ParamPath:
    """Curve in the parameter domain: expression-defined or a polyline."""

    def __init__(self, point_fn, velocity_fn, t0: float, t1: float):
        self.point = point_fn
        self.velocity = velocity_fn
        self.t0 = float(t0)
        self.t1 = float(t1)

    @classmethod
    def from_expressions(cls, exprs: list[Expression], t0: float, t1: float) -> "ParamPath":
        if any(len(e.variables) != 1 for e in exprs):
            raise GeometryError("path expressions must have exactly one variable")
        derivs = [e.derivative(e.variables[0]) for e in exprs]

        def point(t):
            return np.array([e.eval_value(np.array([t])) for e in exprs])

        def velocity(t):
            return np.array([d.eval_value(np.array([t])) for d in derivs])

        return cls(point, velocity, t0, t1)

    @classmethod
    def from_polyline(cls, waypoints) -> "ParamPath":
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or len(pts) < 2:
            raise GeometryError("polyline needs at least two waypoints")
        seg = pts[1:] - pts[:-1]
        lengths = np.linalg.norm(seg, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        total = float(cum[-1])
        if total == 0.0:
            raise GeometryError("polyline has zero length")

        def locate(t):
            t = min(max(t, 0.0), total)
            i = int(np.searchsorted(cum, t, side="right") - 1)
            i = min(i, len(seg) - 1)
            return i, t - cum[i]

        def point(t):
            i, s = locate(t)
            if lengths[i] == 0.0:
                return pts[i].copy()
            return pts[i] + seg[i] * (s / lengths[i])

        def velocity(t):
            i, _ = locate(t)
            if lengths[i] == 0.0:
                return np.zeros(pts.shape[1])
            return seg[i] / lengths[i]

        return cls(point, velocity, 0.0, total)

    @property
    def length(self) -> float:
        return self.t1 - self.t0


def _weingarten_rhs(f: Immersion, p: np.ndarray, vel: np.ndarray, vectors: np.ndarray):
    """d xi/dt = -f_*(A_xi vel) for each row of `vectors`."""
    _, J, H, g = f.metric_and_jets(p)
    diag = f.ambient.metric_diag
    out = np.empty_like(vectors)
    for r, xi in enumerate(vectors):
        M = np.einsum("nij,n->ij", H, xi * diag)
        A = np.linalg.solve(g, M)
        out[r] = -J @ (A @ vel)
    return out


def transport_frame(
    f: Immersion, path: ParamPath, frame: np.ndarray, steps: int
) -> tuple[np.ndarray, float, float]:
    """Transport several normal vectors along one path; shared jet evaluations.

    Returns (transported frame, max normality drift, max norm drift), drifts
    measured before the per-step re-projection.
    """
    if steps < 2:
        raise GeometryError("step count must be at least 2")
    frame = np.array(frame, dtype=float)
    diag = f.ambient.metric_diag
    sq0 = np.einsum("rn,n,rn->r", frame, diag, frame)
    h = (path.t1 - path.t0) / steps
    t = path.t0
    xi = frame
    norm_drift = 0.0
    normality_drift = 0.0
    for _ in range(steps):
        p1 = path.point(t)
        k1 = _weingarten_rhs(f, p1, path.velocity(t), xi)
        p2 = path.point(t + 0.5 * h)
        v2 = path.velocity(t + 0.5 * h)
        k2 = _weingarten_rhs(f, p2, v2, xi + 0.5 * h * k1)
        k3 = _weingarten_rhs(f, p2, v2, xi + 0.5 * h * k2)
        p4 = path.point(t + h)
        k4 = _weingarten_rhs(f, p4, path.velocity(t + h), xi + h * k3)
        xi = xi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        # measure drifts, then re-project onto the normal space at the new point
        _, J, _, g = f.metric_and_jets(path.point(t))
        sq = np.einsum("rn,n,rn->r", xi, diag, xi)
        norm_drift = max(norm_drift, float(np.max(np.abs(sq - sq0))))
        coeff = np.linalg.solve(g, np.einsum("ni,n,rn->ir", J, diag, xi)).T
        tangential = coeff @ J.T
        normality_drift = max(normality_drift, float(np.max(np.abs(tangential))))
        xi = xi - tangential
    return xi, normality_drift, norm_drift


def transport(f: Immersion, path: ParamPath, xi0, steps: int) -> TransportResult:
    """Parallel-transport one normal vector along the path."""
    xi0 = np.asarray(xi0, dtype=float)
    p0 = path.point(path.t0)
    _, J, _, g = f.metric_and_jets(p0)
    tang = J.T @ (xi0 * f.ambient.metric_diag)
    if np.max(np.abs(tang)) > 1e-6 * max(1.0, float(np.linalg.norm(xi0))):
        raise GeometryError(
            f"initial vector is not normal (tangential residual {np.max(np.abs(tang)):.3e})"
        )
    out, ndrift, qdrift = transport_frame(f, path, xi0[None, :], steps)
    return TransportResult(out[0], ndrift, qdrift)


def holonomy_defect(
    f: Immersion,
    corner,
    extents,
    axes: tuple[int, int] = (0, 1),
    steps: int = DEFAULT_STEPS_PER_UNIT,
) -> float:
    """Transport an orthonormal normal frame around a parameter rectangle.

    `extents` are the side lengths along the two chosen axes; a 1-dimensional
    domain has no rectangles and the defect is zero by convention.
    """
    if f.k < 2:
        return 0.0
    corner = np.asarray(corner, dtype=float)
    a, b = axes
    ea = np.zeros(f.k)
    eb = np.zeros(f.k)
    ea[a], eb[b] = extents[0], extents[1]
    loop = ParamPath.from_polyline(
        [corner, corner + ea, corner + ea + eb, corner + eb, corner]
    )
    frame = np.array(f.normal_basis(corner))
    total_steps = max(2, int(steps * loop.length))
    out, _, _ = transport_frame(f, loop, frame, total_steps)
    return float(np.max(np.linalg.norm(out - frame, axis=1)))


def _signature_gram_schmidt(frame: np.ndarray, diag: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Re-orthonormalize rows against the ambient signature, preserving order."""
    out = np.array(frame, dtype=float)
    for i in range(len(out)):
        v = out[i]
        for j in range(i):
            v = v - signs[j] * float(np.dot(v * diag, out[j])) * out[j]
        n2 = float(np.dot(v * diag, v))
        if abs(n2) < 1e-14:
            raise GeometryError("frame degenerated during re-orthonormalization")
        out[i] = v / np.sqrt(abs(n2))
        if (n2 > 0) != (signs[i] > 0):
            raise GeometryError("frame vector changed causal character")
    return out


def _frame_signs(frame: np.ndarray, diag: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    gram = np.einsum("rn,n,sn->rs", frame, diag, frame)
    signs = np.sign(np.diag(gram))
    if np.any(signs == 0) or np.max(np.abs(gram - np.diag(np.diag(gram)))) > tol or np.max(
        np.abs(np.abs(np.diag(gram)) - 1.0)
    ) > tol:
        raise GeometryError(
            f"frame is not orthonormal (Gram residual {np.max(np.abs(gram - np.diag(signs))):.3e})"
        )
    return signs


class ParallelIsometry:
    """Parallel vector-bundle isometry phi: M1 x E^s -> E inside the normal bundle.

    Frames are stored either as expressions over the base variables or on a
    sample lattice (with multilinear interpolation plus re-orthonormalization
    off-lattice). apply(p, Y) = sum_j Y_j xi_j(p).
    """

    def __init__(
        self,
        base: Immersion,
        rank: int,
        fiber_signature: str,
        frame_exprs: list[list[Expression]] | None = None,
        lattice: list[np.ndarray] | None = None,
        frames: np.ndarray | None = None,
        path_independence_defect: float = 0.0,
        certificates: dict | None = None,
    ):
        self.base = base
        self.rank = rank
        self.fiber_signature = fiber_signature
        self.frame_exprs = frame_exprs
        self.lattice = lattice
        self.frames = frames
        self.path_independence_defect = path_independence_defect
        self.certificates = certificates or {}
        if frame_exprs is None and frames is None:
            raise GeometryError("isometry needs expression frames or a frame lattice")

    # -- fiber model

    @property
    def fiber_diag(self) -> np.ndarray:
        d = np.ones(self.rank)
        if self.fiber_signature == LORENTZIAN:
            d[0] = -1.0
        return d

    def fiber_inner(self, Y, Z) -> float:
        Y = np.asarray(Y, dtype=float)
        Z = np.asarray(Z, dtype=float)
        return float(np.sum(Y * self.fiber_diag * Z))

    # -- frames

    def frame_at(self, p) -> np.ndarray:
        """(s, N) frame at a base point."""
        p = np.asarray(p, dtype=float)
        if self.frame_exprs is not None:
            return np.array(
                [[c.eval_value(p) for c in vec] for vec in self.frame_exprs], dtype=float
            )
        return self._interpolated_frame(p)

    def _interpolated_frame(self, p: np.ndarray) -> np.ndarray:
        axes = self.lattice
        idx = []
        weights = []
        for a, x in zip(axes, p):
            if x < a[0] - 1e-12 or x > a[-1] + 1e-12:
                raise GeometryError(f"point {p} outside the frame lattice hull")
            i = int(np.searchsorted(a, x, side="right") - 1)
            i = min(max(i, 0), len(a) - 2) if len(a) > 1 else 0
            if len(a) == 1:
                idx.append((0, 0))
                weights.append((1.0, 0.0))
            else:
                w = (x - a[i]) / (a[i + 1] - a[i])
                idx.append((i, i + 1))
                weights.append((1.0 - w, w))
        acc = np.zeros_like(self.frames[(0,) * len(axes)])
        for corner in itertools.product(*[range(2)] * len(axes)):
            w = 1.0
            pos = []
            for d, c in enumerate(corner):
                w *= weights[d][c]
                pos.append(idx[d][c])
            if w != 0.0:
                acc = acc + w * self.frames[tuple(pos)]
        diag = self.base.ambient.metric_diag
        signs = np.sign(np.einsum("rn,n,rn->r", acc, diag, acc))
        return _signature_gram_schmidt(acc, diag, signs)

    def apply(self, p, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if Y.shape != (self.rank,):
            raise GeometryError(f"fiber vector of shape {Y.shape}, expected ({self.rank},)")
        return self.frame_at(p).T @ Y

    def pull_back(self, p, v) -> np.ndarray:
        """Fiber coordinates of an ambient vector lying in E(p)."""
        frame = self.frame_at(p)
        diag = self.base.ambient.metric_diag
        return self.fiber_diag * np.einsum("rn,n,n->r", frame, diag, np.asarray(v, dtype=float))

    # -- constructors

    @classmethod
    def from_expressions(
        cls,
        base: Immersion,
        frame_exprs: list[list[Expression]],
        grid_counts,
        tol: float = 1e-8,
    ) -> "ParallelIsometry":
        """Wrap closed-form frames, verifying orthonormality, normality, parallelism."""
        s = len(frame_exprs)
        if any(len(vec) != base.N for vec in frame_exprs):
            raise GeometryError("each frame vector needs one expression per ambient coordinate")
        diag = base.ambient.metric_diag
        pts = np.stack(
            np.meshgrid(*grid_axes(base.domain, grid_counts), indexing="ij"), axis=-1
        ).reshape(-1, base.k)
        _, J, _, g = base.metric_and_jets(pts)
        gram_resid = normal_resid = parallel_resid = 0.0
        values = []
        grads = []
        for vec in frame_exprs:
            jets = [c.eval_jet2(pts) for c in vec]
            values.append(np.stack([j.value for j in jets], axis=-1))  # (B, N)
            grads.append(np.stack([j.grad for j in jets], axis=-2))  # (B, N, k)
        V = np.stack(values, axis=1)  # (B, s, N)
        gram = np.einsum("brn,n,bqn->brq", V, diag, V)
        signs = np.sign(np.einsum("brn,n,brn->br", V, diag, V)[0])
        expected = np.diag(signs)
        gram_resid = float(np.max(np.abs(gram - expected)))
        if np.sum(signs < 0) > 1:
            raise GeometryError("more than one time-like frame direction")
        fiber_signature = LORENTZIAN if np.any(signs < 0) else EUCLIDEAN
        if fiber_signature == LORENTZIAN and signs[0] > 0:
            raise GeometryError("time-like frame direction must come first")
        tangential = np.einsum("bni,n,brn->bri", J, diag, V)
        normal_resid = float(np.max(np.abs(tangential)))
        for G in grads:  # (B, N, k): derivative of one frame vector
            coeff = np.linalg.solve(g, np.einsum("bni,n,bnj->bij", J, diag, G))
            normal_part = G - np.einsum("bni,bij->bnj", J, coeff)
            parallel_resid = max(parallel_resid, float(np.max(np.abs(normal_part))))
        if gram_resid > tol or normal_resid > tol:
            raise GeometryError(
                f"frames violate isometry invariants (gram {gram_resid:.3e}, "
                f"normal {normal_resid:.3e})"
            )
        certs = {
            "gram_residual": gram_resid,
            "normality_residual": normal_resid,
            "parallelism_residual": parallel_resid,
        }
        return cls(
            base,
            s,
            fiber_signature,
            frame_exprs=frame_exprs,
            certificates=certs,
        )

    @classmethod
    def from_lattice(
        cls,
        base: Immersion,
        lattice: list[np.ndarray],
        frames: np.ndarray,
        fiber_signature: str,
        path_independence_defect: float,
        certificates: dict | None = None,
    ) -> "ParallelIsometry":
        return cls(
            base,
            frames.shape[-2],
            fiber_signature,
            lattice=lattice,
            frames=frames,
            path_independence_defect=path_independence_defect,
            certificates=certificates,
        )

    def to_json_dict(self) -> dict:
        """Lattice + frames, binary-exact (floats round-trip through repr)."""
        if self.frames is None:
            axes = grid_axes(self.base.domain, [9] * self.base.k)
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=-1)
            frames = np.stack([self.frame_at(p) for p in pts]).reshape(
                tuple(len(a) for a in axes) + (self.rank, self.base.N)
            )
            lattice = axes
        else:
            frames, lattice = self.frames, self.lattice
        return {
            "rank": self.rank,
            "fiber_signature": self.fiber_signature,
            "lattice": [a.tolist() for a in lattice],
            "frames": frames.tolist(),
            "path_independence_defect": self.path_independence_defect,
            "certificates": dict(self.certificates),
        }


def build_parallel_isometry(
    f: Immersion,
    seed_frame,
    grid_counts,
    steps_per_edge: int = 16,
    flatness_tol: float = 1e-5,
) -> ParallelIsometry:
    """Transport a seed frame over the whole lattice along canonical axis paths.

    The canonical path to a lattice node walks axis 1 first, then axis 2, and
    so on. The path-independence certificate is the worst two-edge-order
    commutator over all lattice cells of every axis pair; construction fails
    above `flatness_tol`.
    """
    seed = np.array(seed_frame, dtype=float)
    diag = f.ambient.metric_diag
    signs = _frame_signs(seed, diag)
    if np.sum(signs < 0) > 1:
        raise GeometryError("more than one time-like seed direction")
    fiber_signature = LORENTZIAN if np.any(signs < 0) else EUCLIDEAN
    axes = grid_axes(f.domain, grid_counts)
    base_point = np.array([a[0] for a in axes])
    _, J, _, g = f.metric_and_jets(base_point)
    tang = np.einsum("ni,n,rn->ri", J, diag, seed)
    if np.max(np.abs(tang)) > 1e-8:
        raise GeometryError(
            f"seed frame is not normal at the base point (residual {np.max(np.abs(tang)):.3e})"
        )

    shape = tuple(len(a) for a in axes)
    frames = np.zeros(shape + seed.shape)
    frames[(0,) * len(shape)] = seed

    def edge_path(idx_from, axis, direction=1):
        p = np.array([axes[d][i] for d, i in enumerate(idx_from)])
        q = p.copy()
        q[axis] = axes[axis][idx_from[axis] + direction]
        return ParamPath.from_polyline([p, q])

    for idx in np.ndindex(shape):
        if all(i == 0 for i in idx):
            continue
        last = max(d for d, i in enumerate(idx) if i > 0)
        prev = list(idx)
        prev[last] -= 1
        prev = tuple(prev)
        path = edge_path(prev, last)
        moved, _, _ = transport_frame(f, path, frames[prev], steps_per_edge)
        frames[idx] = _signature_gram_schmidt(moved, diag, signs)

    worst = 0.0
    worst_cell = None
    for a_ax in range(len(shape)):
        for b_ax in range(a_ax + 1, len(shape)):
            for idx in np.ndindex(shape):
                if idx[a_ax] + 1 >= shape[a_ax] or idx[b_ax] + 1 >= shape[b_ax]:
                    continue
                via_a = transport_frame(f, edge_path(idx, a_ax), frames[idx], steps_per_edge)[0]
                ia = list(idx)
                ia[a_ax] += 1
                via_ab = transport_frame(f, edge_path(tuple(ia), b_ax), via_a, steps_per_edge)[0]
                via_b = transport_frame(f, edge_path(idx, b_ax), frames[idx], steps_per_edge)[0]
                ib = list(idx)
                ib[b_ax] += 1
                via_ba = transport_frame(f, edge_path(tuple(ib), a_ax), via_b, steps_per_edge)[0]
                d = float(np.max(np.linalg.norm(via_ab - via_ba, axis=1)))
                if d > worst:
                    worst, worst_cell = d, (idx, a_ax, b_ax)
    if worst > flatness_tol:
        raise FlatnessError(
            f"subbundle is not flat along the grid: commutator defect {worst:.3e} "
            f"at cell {worst_cell}"
        )
    return ParallelIsometry.from_lattice(
        f,
        axes,
        frames,
        fiber_signature,
        path_independence_defect=worst,
        certificates={"steps_per_edge": steps_per_edge},
    )
