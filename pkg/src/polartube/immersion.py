"""Pointwise immersion calculus and grid-level tests for net hypotheses.

An immersion is a list of coordinate expressions over a shared ordered
variable list, mapping an axis-aligned parameter box into a (possibly
Lorentzian) ambient space, optionally constrained to a space form. All
extrinsic quantities (differential, fundamental forms, shape operators) come
from exact jets; intrinsic Christoffel symbols come from central differences
of the induced metric, which is all the classifiers need.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from polartube.ambient import (
    AmbientSpace,
    GeometryError,
    SpaceForm,
    contains,
    inner,
    orthonormal_complement,
)
from polartube.expr import Expression

__all__ = [
    "Immersion",
    "ProductChart",
    "SecondFundamentalForm",
    "PrincipalNormalDecomposition",
    "SubbundleReport",
    "NotImmersedError",
    "NonFlatNormalBundleError",
    "ClusterAmbiguityError",
    "grid_points",
    "grid_axes",
    "adaptedness_defect",
    "leaf_constancy_defect",
    "principal_normal_decomposition",
    "subbundle_character",
    "christoffel_lower",
]

DEFAULT_CHRISTOFFEL_STEP = 1e-3


class NotImmersedError(GeometryError):
    """Differential rank below the parameter dimension at a sampled point."""


class NonFlatNormalBundleError(GeometryError):
    """Shape operators fail to commute at the requested tolerance."""


class ClusterAmbiguityError(GeometryError):
    """Two principal normals closer than the clustering tolerance."""


@dataclass(frozen=True)
class ProductChart:
    """Partition of the ordered variable list into consecutive factor blocks."""

    factor_dims: tuple[int, ...]

    def __post_init__(self):
        if any(d < 1 for d in self.factor_dims):
            raise GeometryError("factor dimensions must be positive")

    @property
    def total_dim(self) -> int:
        return sum(self.factor_dims)

    def blocks(self) -> list[list[int]]:
        out, start = [], 0
        for d in self.factor_dims:
            out.append(list(range(start, start + d)))
            start += d
        return out


@dataclass
class SecondFundamentalForm:
    """alpha(d_i, d_j) as ambient vectors, with the max tangency residual."""

    components: np.ndarray  # (k, k, N)
    tangency_residual: float


@dataclass
class PrincipalNormalDecomposition:
    etas: list[np.ndarray]          # principal normals, ambient vectors
    bases: list[np.ndarray]         # (k, d_a) tangent-coordinate bases of E_a
    lambdas: list[np.ndarray]       # eigenvalue vector of each eta w.r.t. the frame
    frame: list[np.ndarray]         # the orthonormal normal frame used
    commutation_residual: float
    reconstruction_residual: float


@dataclass
class SubbundleReport:
    orthogonal_net_defect: float
    totally_geodesic_defect_complement: float
    umbilical_defect: float
    spherical_defect: float
    totally_geodesic_defect: float


def grid_axes(domain, counts, inset: float = 0.0) -> list[np.ndarray]:
    axes = []
    for (lo, hi), n in zip(domain, counts):
        a, b = lo + inset, hi - inset
        if not (b > a):
            raise GeometryError(f"empty axis [{lo}, {hi}] after inset {inset}")
        axes.append(np.linspace(a, b, n))
    return axes


def grid_points(domain, counts, inset: float = 0.0) -> np.ndarray:
    """Row-major sample lattice over the box, shape (prod(counts), k)."""
    axes = grid_axes(domain, counts, inset)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


class Immersion:
    """Expression-defined map from a parameter box into an ambient space."""

    def __init__(
        self,
        coords: list[Expression],
        domain,
        ambient: AmbientSpace,
        target: SpaceForm | None = None,
        name: str = "",
    ):
        if not coords:
            raise GeometryError("immersion needs at least one coordinate expression")
        variables = coords[0].variables
        for c in coords:
            if c.variables != variables:
                raise GeometryError("all coordinate expressions must share one variable list")
        if len(coords) != ambient.dimension:
            raise GeometryError(
                f"{len(coords)} coordinates for ambient dimension {ambient.dimension}"
            )
        domain = tuple((float(lo), float(hi)) for lo, hi in domain)
        if len(domain) != len(variables):
            raise GeometryError("domain box must have one interval per variable")
        for lo, hi in domain:
            if not (hi > lo):
                raise GeometryError("domain intervals must be nonempty")
        if target is not None and target.ambient != ambient:
            raise GeometryError("target space form lives in a different ambient")
        self.coords = list(coords)
        self.variables = variables
        self.domain = domain
        self.ambient = ambient
        self.target = target
        self.name = name

    # -- basic data

    @property
    def k(self) -> int:
        return len(self.variables)

    @property
    def N(self) -> int:
        return self.ambient.dimension

    def __repr__(self):
        label = self.name or "immersion"
        return f"<{label}: {self.k} -> {self.N} ({self.ambient.signature})>"

    def value(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.stack([c.eval_value(p) for c in self.coords], axis=-1)

    def jets(self, p):
        """(value (...,N), differential (...,N,k), second derivatives (...,N,k,k))."""
        jets = [c.eval_jet2(p) for c in self.coords]
        v = np.stack([j.value for j in jets], axis=-1)
        J = np.stack([j.grad for j in jets], axis=-2)
        H = np.stack([j.hess for j in jets], axis=-3)
        return v, J, H

    def differential(self, p) -> np.ndarray:
        _, J, _ = self.jets(p)
        return J

    def first_fundamental_form(self, p) -> np.ndarray:
        J = self.differential(p)
        g = np.einsum("...ni,n,...nj->...ij", J, self.ambient.metric_diag, J)
        return g

    def metric_and_jets(self, p):
        v, J, H = self.jets(p)
        g = np.einsum("...ni,n,...nj->...ij", J, self.ambient.metric_diag, J)
        return v, J, H, g

    def normal_basis(self, p, tol: float = 1e-10) -> list[np.ndarray]:
        J = self.differential(np.asarray(p, dtype=float))
        if J.ndim != 2:
            raise GeometryError("normal_basis takes a single point")
        return orthonormal_complement([J[:, j] for j in range(self.k)], self.ambient, tol)

    def tangential_coefficients(self, J, g, v) -> np.ndarray:
        """Coefficients X with f_*X equal to the tangential part of ambient v."""
        rhs = np.einsum("...ni,n,...n->...i", J, self.ambient.metric_diag, v)
        return np.linalg.solve(g, rhs[..., None])[..., 0]

    def second_fundamental_form(self, p) -> SecondFundamentalForm:
        v, J, H, g = self.metric_and_jets(np.asarray(p, dtype=float))
        if J.ndim != 2:
            raise GeometryError("second_fundamental_form takes a single point")
        k, N = self.k, self.N
        comps = np.empty((k, k, N))
        resid = 0.0
        for i in range(k):
            for j in range(k):
                vec = H[:, i, j]
                X = self.tangential_coefficients(J, g, vec)
                alpha = vec - J @ X
                comps[i, j] = alpha
                resid = max(resid, float(np.max(np.abs(J.T @ (alpha * self.ambient.metric_diag)))))
        comps = 0.5 * (comps + comps.transpose(1, 0, 2))
        return SecondFundamentalForm(comps, resid)

    def shape_operator(self, p, xi, tol: float = 1e-6) -> np.ndarray:
        """g-self-adjoint A with g(A X, Y) = <alpha(X,Y), xi>; xi must be normal."""
        v, J, H, g = self.metric_and_jets(np.asarray(p, dtype=float))
        xi = np.asarray(xi, dtype=float)
        tang = J.T @ (xi * self.ambient.metric_diag)
        scale = max(1.0, float(np.linalg.norm(xi)))
        if np.max(np.abs(tang)) > tol * scale:
            raise GeometryError(
                f"xi is not normal (tangential residual {np.max(np.abs(tang)):.3e})"
            )
        M = np.einsum("nij,n->ij", H, xi * self.ambient.metric_diag)
        return np.linalg.solve(g, M)

    def shape_operator_unchecked(self, J, H, g, xi) -> np.ndarray:
        M = np.einsum("...nij,n->...ij", H, np.asarray(xi, dtype=float) * self.ambient.metric_diag)
        return np.linalg.solve(g, M)

    # -- validation

    def min_singular_value(self, points) -> float:
        _, J, _ = self.jets(points)
        return float(np.min(np.linalg.svd(J, compute_uv=False)[..., -1]))

    def validate(self, grid_counts, rank_tol: float = 1e-8, surface_tol: float = 1e-8):
        pts = grid_points(self.domain, grid_counts)
        sigma = self.min_singular_value(pts)
        if sigma <= rank_tol:
            raise NotImmersedError(
                f"differential rank deficient on the grid (min sigma {sigma:.3e})"
            )
        if self.target is not None and self.target.epsilon != 0:
            vals = self.value(pts)
            if not contains(vals, self.target, surface_tol):
                err = np.max(
                    np.abs(
                        inner(vals, vals, self.ambient)
                        - self.target.epsilon * self.target.radius**2
                    )
                )
                raise GeometryError(f"image leaves the target space form (defect {err:.3e})")
        return sigma


# -- net / subbundle classifiers ------------------------------------------------


def adaptedness_defect(f: Immersion, chart: ProductChart, points) -> float:
    """max |alpha(d_i, d_j)| over mixed factor pairs and sample points."""
    if chart.total_dim != f.k:
        raise GeometryError("chart does not match the immersion's parameter count")
    blocks = chart.blocks()
    worst = 0.0
    for p in np.atleast_2d(np.asarray(points, dtype=float)):
        alpha = f.second_fundamental_form(p).components
        for bi, bj in itertools.combinations(range(len(blocks)), 2):
            for i in blocks[bi]:
                for j in blocks[bj]:
                    worst = max(worst, float(np.linalg.norm(alpha[i, j])))
    return worst


def _span_basis(M: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(M)
    return q


def _max_principal_angle(A: np.ndarray, B: np.ndarray) -> float:
    s = np.linalg.svd(_span_basis(A).T @ _span_basis(B), compute_uv=False)
    return float(np.arccos(np.clip(np.min(s), -1.0, 1.0)))


def leaf_constancy_defect(
    f: Immersion, chart: ProductChart, factor: int, grid_counts
) -> float:
    """Drift of span f_*(D-perp) along the factor-D grid directions (radians)."""
    blocks = chart.blocks()
    D = blocks[factor]
    comp = [i for i in range(f.k) if i not in D]
    axes = grid_axes(f.domain, grid_counts)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    shape = tuple(len(a) for a in axes)
    _, J, _ = f.jets(pts)
    spans = J[:, :, comp].reshape(shape + (f.N, len(comp)))
    worst = 0.0
    for axis in D:
        for idx in np.ndindex(shape):
            if idx[axis] + 1 >= shape[axis]:
                continue
            nxt = list(idx)
            nxt[axis] += 1
            worst = max(worst, _max_principal_angle(spans[idx], spans[tuple(nxt)]))
    return worst


def christoffel_lower(f: Immersion, p, h: float = DEFAULT_CHRISTOFFEL_STEP) -> np.ndarray:
    """Gamma_{ij,l} = <nabla_{d_i} d_j, d_l> by central differences of the metric."""
    p = np.asarray(p, dtype=float)
    k = f.k
    dg = np.empty((k, k, k))  # dg[i] = d_i g
    for i in range(k):
        e = np.zeros(k)
        e[i] = h
        dg[i] = (f.first_fundamental_form(p + e) - f.first_fundamental_form(p - e)) / (2 * h)
    out = np.empty((k, k, k))
    for i in range(k):
        for j in range(k):
            for l in range(k):
                out[i, j, l] = 0.5 * (dg[i][j, l] + dg[j][i, l] - dg[l][i, j])
    return out


def _eta_components(f: Immersion, S, C, p, h):
    """Least-squares mean-curvature normal of the S-block at p.

    Returns (h_l lower components on C, eta upper components on C,
    umbilical residual, totally-geodesic residual).
    """
    gamma = christoffel_lower(f, p, h)
    g = f.first_fundamental_form(p)
    C_ijl = gamma[np.ix_(S, S, C)]
    gS = g[np.ix_(S, S)]
    denom = float(np.sum(gS * gS))
    h_l = np.einsum("ij,ijl->l", gS, C_ijl) / denom
    resid = C_ijl - gS[:, :, None] * h_l[None, None, :]
    umb = float(np.max(np.abs(resid))) if resid.size else 0.0
    tg = float(np.max(np.abs(C_ijl))) if C_ijl.size else 0.0
    eta_up = np.linalg.solve(g[np.ix_(C, C)], h_l)
    return h_l, eta_up, umb, tg, gamma, g


def subbundle_character(
    f: Immersion,
    chart: ProductChart,
    factor: int,
    points,
    h: float = DEFAULT_CHRISTOFFEL_STEP,
) -> SubbundleReport:
    """Orthogonality / totally-geodesic / umbilical / spherical defects of one factor."""
    blocks = chart.blocks()
    S = blocks[factor]
    C = [i for i in range(f.k) if i not in S]
    if not C:
        raise GeometryError("factor fills the whole tangent space; nothing to test against")
    orth = tg_comp = umb = sph = tg_fac = 0.0
    for p in np.atleast_2d(np.asarray(points, dtype=float)):
        _, eta_up, umb_p, tg_p, gamma, g = _eta_components(f, S, C, p, h)
        orth = max(orth, float(np.max(np.abs(g[np.ix_(S, C)]))))
        umb = max(umb, umb_p)
        tg_fac = max(tg_fac, tg_p)
        comp_block = gamma[np.ix_(C, C, S)]
        tg_comp = max(tg_comp, float(np.max(np.abs(comp_block))))
        # spherical: <nabla_X eta, Z> = 0 for X in the factor, Z in the complement
        for i in S:
            e = np.zeros(f.k)
            e[i] = h
            _, eta_plus, _, _, _, _ = _eta_components(f, S, C, p + e, h)
            _, eta_minus, _, _, _, _ = _eta_components(f, S, C, p - e, h)
            deta = (eta_plus - eta_minus) / (2 * h)
            for zi, z in enumerate(C):
                val = 0.0
                for mi, m in enumerate(C):
                    val += deta[mi] * g[m, z] + eta_up[mi] * gamma[i, m, z]
                sph = max(sph, abs(val))
    return SubbundleReport(
        orthogonal_net_defect=orth,
        totally_geodesic_defect_complement=tg_comp,
        umbilical_defect=umb,
        spherical_defect=max(sph, umb),
        totally_geodesic_defect=tg_fac,
    )


def principal_normal_decomposition(
    f: Immersion,
    p,
    cluster_tol: float = 1e-4,
    flat_tol: float = 1e-6,
    rng: np.random.Generator | None = None,
    frame: list | None = None,
) -> PrincipalNormalDecomposition:
    """Joint eigendecomposition of the commuting shape-operator family at p.

    Requires a flat normal bundle at p (commutators below flat_tol). The
    returned splitting satisfies alpha(X, Y) = sum_a <X^a, Y^a> eta_a up to the
    reported reconstruction residual. Passing an orthonormal normal `frame`
    restricts the family to the subbundle it spans (used for focal data);
    the default is the full normal basis.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    p = np.asarray(p, dtype=float)
    v, J, H, g = f.metric_and_jets(p)
    if frame is None:
        frame = f.normal_basis(p)
    else:
        frame = [np.asarray(x, dtype=float) for x in frame]
    m = len(frame)
    L = np.linalg.cholesky(g)
    Linv = np.linalg.inv(L)
    tilde = []
    for xi in frame:
        A = f.shape_operator_unchecked(J, H, g, xi)
        tilde.append(Linv @ g @ A @ Linv.T)  # L^{-1} M L^{-T}, symmetric
    scale = max(1.0, max(float(np.linalg.norm(T)) for T in tilde))
    comm = 0.0
    for a in range(m):
        for b in range(a + 1, m):
            comm = max(comm, float(np.linalg.norm(tilde[a] @ tilde[b] - tilde[b] @ tilde[a])))
    comm /= scale**2
    if comm > flat_tol:
        raise NonFlatNormalBundleError(
            f"shape operators do not commute (residual {comm:.3e} > {flat_tol:.1e})"
        )
    coeffs = rng.standard_normal(m)
    T = sum(c * A for c, A in zip(coeffs, tilde))
    T = 0.5 * (T + T.T)
    _, V = np.linalg.eigh(T)
    lam = np.array([[V[:, i] @ A @ V[:, i] for A in tilde] for i in range(f.k)])  # (k, m)

    # cluster eigenvalue vectors
    labels = [-1] * f.k
    centers: list[np.ndarray] = []
    members: list[list[int]] = []
    for i in range(f.k):
        placed = False
        for c, ctr in enumerate(centers):
            if np.linalg.norm(lam[i] - ctr) < cluster_tol:
                members[c].append(i)
                centers[c] = np.mean(lam[members[c]], axis=0)
                labels[i] = c
                placed = True
                break
        if not placed:
            labels[i] = len(centers)
            centers.append(lam[i].copy())
            members.append([i])
    for a in range(len(centers)):
        for b in range(a + 1, len(centers)):
            d = float(np.linalg.norm(centers[a] - centers[b]))
            if d < cluster_tol:
                raise ClusterAmbiguityError(
                    f"principal normals {a} and {b} separated by only {d:.3e}"
                )

    signs = np.array([inner(xi, xi, f.ambient) for xi in frame])
    etas, bases, lambdas = [], [], []
    for c, idxs in enumerate(members):
        Vc = V[:, idxs]
        # per-cluster refinement: re-diagonalize the restricted operators jointly
        lam_c = np.array([np.trace(Vc.T @ A @ Vc) / len(idxs) for A in tilde])
        eta = sum(s * l * xi for s, l, xi in zip(signs, lam_c, frame))
        etas.append(np.asarray(eta))
        bases.append(Linv.T @ Vc)
        lambdas.append(lam_c)

    # reconstruction residual of the splitting identity (E-component of alpha)
    alpha_full = f.second_fundamental_form(p).components
    diag = f.ambient.metric_diag
    alpha = np.zeros_like(alpha_full)
    for s, xi in zip(signs, frame):
        coeff = np.einsum("ijn,n->ij", alpha_full, xi * diag)
        alpha += s * coeff[:, :, None] * xi[None, None, :]
    recon = np.zeros_like(alpha)
    for c, idxs in enumerate(members):
        Vc = V[:, idxs]
        P = Vc @ Vc.T  # projector in the orthonormal tilde frame
        tilde_basis = L.T  # column i = tilde coords of d_i
        proj = tilde_basis.T @ P @ tilde_basis  # <d_i^a, d_j^a>
        recon += proj[:, :, None] * etas[c][None, None, :]
    residual = float(np.max(np.abs(recon - alpha)))
    return PrincipalNormalDecomposition(
        etas=etas,
        bases=bases,
        lambdas=lambdas,
        frame=frame,
        commutation_residual=comm,
        reconstruction_residual=residual,
    )
