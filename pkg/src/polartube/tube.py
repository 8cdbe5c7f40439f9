"""Forward constructions: partial tubes, products, warped and quasi-warped
products, tubes over curves, endpoint representations.

Every construction produces an evaluator f(p0, p1) = f1(p1) + phi_{p1}(f0(p0))
(space forms use the shifted fiber f0 - e1 internally, so one code path serves
all curvatures) together with its closed-form geometry: the P operator,
differential and shape-operator blocks, induced metric blocks and warping
functions. When the frames are closed-form expressions the tube itself is
assembled symbolically, so every block can be cross-checked against exact jets
of the assembled map.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from polartube.ambient import (
    EUCLIDEAN,
    LORENTZIAN,
    AmbientSpace,
    GeometryError,
    SpaceForm,
    inner,
    orthonormal_complement,
)
from polartube.expr import Expression
from polartube.immersion import (
    Immersion,
    ProductChart,
    grid_axes,
    grid_points,
    principal_normal_decomposition,
)
from polartube.transport import ParallelIsometry

__all__ = [
    "PartialTubeSpec",
    "FocalData",
    "TubeGeometry",
    "TubeResult",
    "OmegaResult",
    "OmegaViolationError",
    "FactorSpec",
    "P_operator",
    "compute_focal_data",
    "omega_contains",
    "build_tube",
    "build_product",
    "build_warped",
    "build_curve_tube",
    "build_quasiwarped_multi",
    "endpoint_representation",
    "arclength_reparametrize",
]


class OmegaViolationError(GeometryError):
    """Fiber samples on or across a focal hyperplane; P would be singular."""

    def __init__(self, message, offenders=None):
        super().__init__(message)
        self.offenders = offenders or []


@dataclass
class PartialTubeSpec:
    """The defining triple (f0, f1, phi) plus the space-form bookkeeping.

    For epsilon != 0 the fiber is stored user-facing (unshifted); `e1` is the
    fiber vector with phi(e1) = base position, and the evaluator uses
    f0 - e1 internally.
    """

    fiber: Immersion
    base: Immersion
    phi: ParallelIsometry
    epsilon: int = 0
    e1: np.ndarray | None = None
    fiber_shift: np.ndarray | None = None
    base_chart: ProductChart | None = None
    base_factors: list[Immersion] | None = None
    radius: float = 1.0

    def __post_init__(self):
        s = self.phi.rank
        if self.fiber.N != s:
            raise GeometryError(
                f"fiber maps into dimension {self.fiber.N}, phi has rank {s}"
            )
        expected_sig = self.phi.fiber_signature
        if self.fiber.ambient.signature != expected_sig:
            raise GeometryError(
                f"fiber ambient signature {self.fiber.ambient.signature!r} does not "
                f"match phi's fiber signature {expected_sig!r}"
            )
        if self.epsilon != 0 and self.e1 is None:
            raise GeometryError("space-form tubes need the distinguished fiber vector e1")
        if self.e1 is not None:
            self.e1 = np.asarray(self.e1, dtype=float)
        if self.fiber_shift is not None:
            self.fiber_shift = np.asarray(self.fiber_shift, dtype=float)
        shared = set(self.fiber.variables) & set(self.base.variables)
        if shared:
            raise GeometryError(f"fiber and base share variable names {sorted(shared)}")

    @property
    def shift(self) -> np.ndarray:
        """Internal fiber offset subtracted from f0 in the evaluator and in Omega.

        Defaults to e1 when phi carries the base position in E (so the
        evaluator reduces to phi(f0)); an explicit fiber_shift overrides it
        (multi-factor assemblies where only some slots are position-like).
        """
        if self.fiber_shift is not None:
            return self.fiber_shift
        if self.e1 is not None:
            return self.e1
        return np.zeros(self.phi.rank)

    def shifted_fiber_value(self, p0) -> np.ndarray:
        return self.fiber.value(p0) - self.shift


@dataclass
class FocalData:
    """Per base-grid-point focal sheets: fiber vectors V_i with <Y,V_i> = 1 singular."""

    points: np.ndarray                 # (B, k1)
    sheets: list[list[np.ndarray]]     # fiber vectors per point
    multiplicities: list[list[int]]
    consistency_residual: float        # max |phi(V_i) - eta_i| over the grid


@dataclass
class OmegaResult:
    contained: bool
    margin: float                 # min over sheets of |<Y,V_i> - 1|
    min_singular: float           # min singular value of P over the grid
    agree: bool                   # the two tests gave the same verdict


class TubeGeometry:
    """Closed-form evaluators attached to a partial tube."""

    def __init__(self, spec: PartialTubeSpec):
        self.spec = spec

    def P(self, p0, p1) -> np.ndarray:
        spec = self.spec
        Y = spec.shifted_fiber_value(p0)
        xi = spec.phi.apply(p1, Y)
        A = spec.base.shape_operator(np.asarray(p1, dtype=float), xi)
        return np.eye(spec.base.k) - A

    def fiber_differential_block(self, p0, p1) -> np.ndarray:
        """f_* on fiber directions: phi_{p1}(f0_* X0), shape (N, k0)."""
        J0 = self.spec.fiber.differential(np.asarray(p0, dtype=float))
        frame = self.spec.phi.frame_at(p1)  # (s, N)
        return frame.T @ J0

    def base_differential_block(self, p0, p1) -> np.ndarray:
        """f_* on base directions: f1_* P X1, shape (N, k1)."""
        J1 = self.spec.base.differential(np.asarray(p1, dtype=float))
        return J1 @ self.P(p0, p1)

    def metric_fiber_block(self, p0) -> np.ndarray:
        return self.spec.fiber.first_fundamental_form(np.asarray(p0, dtype=float))

    def metric_base_block(self, p0, p1) -> np.ndarray:
        """g1(p0)(X, Y) = g1(P X, P Y)."""
        g1 = self.spec.base.first_fundamental_form(np.asarray(p1, dtype=float))
        P = self.P(p0, p1)
        return P.T @ g1 @ P

    def metric_factor_block(self, a: int, p0, p) -> np.ndarray:
        """Per-factor block g_a(p0) = g_a(P_a X, P_a Y) for a product base.

        `p` is the full base point; the factor immersion is evaluated on its own
        variables and the normal vector is the projection of phi(f0-e1) onto the
        factor's ambient coordinate block.
        """
        spec = self.spec
        if spec.base_factors is None or spec.base_chart is None:
            raise GeometryError("factor blocks need a product base")
        factor = spec.base_factors[a]
        blocks = spec.base_chart.blocks()
        p = np.asarray(p, dtype=float)
        p_a = p[blocks[a]]
        offs = np.cumsum([0] + [f.N for f in spec.base_factors])
        sl = slice(offs[a], offs[a + 1])
        Y = spec.shifted_fiber_value(p0)
        xi = spec.phi.apply(p, Y)[sl]
        A = factor.shape_operator(p_a, xi)
        P_a = np.eye(factor.k) - A
        g_a = factor.first_fundamental_form(p_a)
        return P_a.T @ g_a @ P_a

    def shape_base_block(self, p0, p1, xi) -> np.ndarray:
        """A^f_xi on base directions: P^{-1} A^{f1}_xi, shape (k1, k1)."""
        A1 = self.spec.base.shape_operator(np.asarray(p1, dtype=float), xi)
        return np.linalg.solve(self.P(p0, p1), A1)


@dataclass
class TubeResult:
    spec: PartialTubeSpec
    chart: ProductChart
    geometry: TubeGeometry
    immersion: Immersion | None            # assembled expression map, when frames allow
    evaluate: object                       # callable (p) -> ambient point, p = (p0, p1)
    rho: dict = field(default_factory=dict)  # warping evaluators, keyed per factor
    focal: FocalData | None = None
    construction_report: dict = field(default_factory=dict)

    @property
    def k0(self) -> int:
        return self.spec.fiber.k

    def split_point(self, p):
        p = np.asarray(p, dtype=float)
        return p[: self.k0], p[self.k0 :]


# -- operator & focal geometry --------------------------------------------------


def P_operator(spec: PartialTubeSpec, p0, p1) -> np.ndarray:
    return TubeGeometry(spec).P(p0, p1)


def compute_focal_data(
    spec: PartialTubeSpec, base_counts, cluster_tol: float = 1e-6, seed: int = 0
) -> FocalData:
    """Principal normals of the base w.r.t. E, pulled back to fiber vectors."""
    rng = np.random.default_rng(seed)
    base = spec.base
    pts = grid_points(base.domain, base_counts)
    sheets, mults = [], []
    consistency = 0.0
    fd = spec.phi.fiber_diag
    for p in pts:
        frame = spec.phi.frame_at(p)
        dec = principal_normal_decomposition(
            base, p, cluster_tol=cluster_tol, rng=rng, frame=[v for v in frame]
        )
        Vs, ms = [], []
        for eta, basis, lam in zip(dec.etas, dec.bases, dec.lambdas):
            V = fd * lam  # <V, e_j>_fiber = lambda_j  =>  V^j = eps_j lambda_j
            Vs.append(V)
            ms.append(basis.shape[1])
            consistency = max(
                consistency, float(np.max(np.abs(spec.phi.apply(p, V) - eta)))
            )
        sheets.append(Vs)
        mults.append(ms)
    return FocalData(pts, sheets, mults, consistency)


def omega_contains(
    spec: PartialTubeSpec,
    Y,
    tol: float = 1e-6,
    focal: FocalData | None = None,
    base_counts=None,
    sigma_floor: float = 1e-8,
) -> OmegaResult:
    """Membership of a fiber vector in Omega, with margin and singular value.

    Both the focal-sheet margin min |<Y,V_i> - 1| and the minimum singular
    value of P are computed; their verdicts must agree, otherwise the result
    is flagged. `Y` is the user-facing fiber value (shifted internally when
    epsilon != 0).
    """
    if focal is None:
        if base_counts is None:
            base_counts = [9] * spec.base.k
        focal = compute_focal_data(spec, base_counts)
    Yt = np.asarray(Y, dtype=float) - spec.shift
    fd = spec.phi.fiber_diag
    margin = np.inf
    for Vs in focal.sheets:
        for V in Vs:
            margin = min(margin, abs(float(np.sum(Yt * fd * V)) - 1.0))
    min_sig = np.inf
    for p in focal.points:
        xi = spec.phi.apply(p, Yt)
        A = spec.base.shape_operator(p, xi)
        P = np.eye(spec.base.k) - A
        min_sig = min(min_sig, float(np.min(np.linalg.svd(P, compute_uv=False))))
    by_margin = margin > tol
    by_sigma = min_sig > sigma_floor
    return OmegaResult(
        contained=bool(by_margin and by_sigma),
        margin=float(margin),
        min_singular=float(min_sig),
        agree=bool(by_margin == by_sigma),
    )


# -- assembly -------------------------------------------------------------------


def _assemble_expressions(spec: PartialTubeSpec) -> Immersion | None:
    """Symbolic tube map f = f1 + sum_j (f0_j - e1_j) xi_j when frames are exprs."""
    if spec.phi.frame_exprs is None:
        return None
    fiber, base = spec.fiber, spec.base
    allvars = fiber.variables + base.variables
    shift = spec.shift
    coords = []
    for c in range(base.N):
        expr = base.coords[c].with_variables(allvars)
        for j in range(spec.phi.rank):
            y_j = fiber.coords[j].with_variables(allvars) - float(shift[j])
            expr = expr + y_j * spec.phi.frame_exprs[j][c].with_variables(allvars)
        coords.append(expr)
    target = None
    if spec.epsilon != 0:
        target = SpaceForm(spec.epsilon, spec.radius, base.ambient)
    name = f"tube({fiber.name or 'f0'},{base.name or 'f1'})"
    return Immersion(
        coords, list(fiber.domain) + list(base.domain), base.ambient, target, name=name
    )


def build_tube(
    spec: PartialTubeSpec,
    fiber_counts=None,
    base_counts=None,
    omega_tol: float = 1e-6,
    seed: int = 0,
) -> TubeResult:
    """Construct the partial tube, verifying the admissibility invariants.

    Checks: fiber and base are immersed on their grids, every sampled fiber
    value lies in Omega (focal margin and P-singular-value tests), and for
    epsilon != 0 the fiber lies on the fiber space form and phi maps e1 to the
    base position.
    """
    fiber, base = spec.fiber, spec.base
    if fiber_counts is None:
        fiber_counts = [9] * fiber.k
    if base_counts is None:
        base_counts = [9] * base.k
    report: dict = {}
    report["fiber_min_singular"] = fiber.validate(fiber_counts)
    report["base_min_singular"] = base.validate(base_counts)

    base_pts = grid_points(base.domain, base_counts)
    fiber_pts = grid_points(fiber.domain, fiber_counts)

    if spec.epsilon != 0:
        fsf = SpaceForm(spec.epsilon, spec.radius, fiber.ambient)
        vals = fiber.value(fiber_pts)
        sq = inner(vals, vals, fiber.ambient)
        closure = float(np.max(np.abs(sq - spec.epsilon * spec.radius**2)))
        if closure > 1e-8:
            raise GeometryError(
                f"fiber leaves the fiber space form (|<f0,f0>-eps R^2| = {closure:.3e})"
            )
        if spec.epsilon == -1 and np.any(vals[..., 0] <= 0):
            raise GeometryError("fiber leaves the upper hyperboloid sheet")
        report["fiber_spaceform_defect"] = closure
    if spec.e1 is not None:
        pos_defect = 0.0
        for p in base_pts:
            pos_defect = max(
                pos_defect,
                float(np.max(np.abs(spec.phi.apply(p, spec.e1) - base.value(p)))),
            )
        if pos_defect > 1e-8:
            raise GeometryError(
                f"phi(e1) differs from the base position (defect {pos_defect:.3e})"
            )
        report["position_section_defect"] = pos_defect

    focal = compute_focal_data(spec, base_counts, seed=seed)
    report["focal_consistency"] = focal.consistency_residual
    offenders = []
    worst_margin = np.inf
    worst_sigma = np.inf
    for p0 in fiber_pts:
        res = omega_contains(spec, fiber.value(p0), tol=omega_tol, focal=focal)
        worst_margin = min(worst_margin, res.margin)
        worst_sigma = min(worst_sigma, res.min_singular)
        if not res.contained:
            offenders.append((p0.tolist(), res.margin, res.min_singular))
    if offenders:
        head = "; ".join(
            f"p0={o[0]} margin={o[1]:.3e} sigma={o[2]:.3e}" for o in offenders[:5]
        )
        raise OmegaViolationError(
            f"{len(offenders)} fiber samples violate the immersion condition: {head}",
            offenders,
        )
    report["omega_margin"] = float(worst_margin)
    report["omega_min_singular"] = float(worst_sigma)

    immersion = _assemble_expressions(spec)
    geometry = TubeGeometry(spec)
    chart_dims = (fiber.k,) + (
        tuple(spec.base_chart.factor_dims) if spec.base_chart else (base.k,)
    )
    chart = ProductChart(chart_dims)

    if immersion is not None:
        evaluate = immersion.value
    else:
        def evaluate(p, _spec=spec):
            p = np.asarray(p, dtype=float)
            p0, p1 = p[: _spec.fiber.k], p[_spec.fiber.k:]
            Y = _spec.shifted_fiber_value(p0)
            return _spec.base.value(p1) + _spec.phi.apply(p1, Y)

    return TubeResult(
        spec=spec,
        chart=chart,
        geometry=geometry,
        immersion=immersion,
        evaluate=evaluate,
        focal=focal,
        construction_report=report,
    )


# -- products -------------------------------------------------------------------


def build_product(
    factors: list[Immersion], target: SpaceForm | None = None
) -> tuple[Immersion, ProductChart]:
    """Concatenate immersions on orthogonal coordinate blocks.

    With a spherical/hyperbolic `target` the factor radii must satisfy the
    extrinsic radius relation (eps=1: R^2 = sum R_i^2; eps=-1: -R^2 = -R_0^2 +
    sum of the rest), each factor carrying its own space-form target.
    """
    if len(factors) < 2:
        raise GeometryError("a product needs at least two factors")
    allvars: list[str] = []
    for f in factors:
        for v in f.variables:
            if v in allvars:
                raise GeometryError(f"factors share variable name {v!r}")
            allvars.append(v)
    N = sum(f.N for f in factors)
    signature = EUCLIDEAN
    if factors[0].ambient.signature == LORENTZIAN:
        signature = LORENTZIAN
    for f in factors[1:]:
        if f.ambient.signature == LORENTZIAN:
            raise GeometryError("only the first factor may be Lorentzian")
    ambient = AmbientSpace(N, signature)

    if target is not None:
        radii = []
        for i, f in enumerate(factors):
            if f.target is None:
                raise GeometryError(
                    f"extrinsic product requires factor {i} to carry a space-form target"
                )
            radii.append(f.target.radius)
        if target.epsilon == 1:
            lhs, rhs = target.radius**2, sum(r**2 for r in radii)
        elif target.epsilon == -1:
            if factors[0].target.epsilon != -1:
                raise GeometryError("hyperbolic extrinsic product needs a hyperbolic first factor")
            lhs = -target.radius**2
            rhs = -radii[0] ** 2 + sum(r**2 for r in radii[1:])
        else:
            raise GeometryError("extrinsic product target must be curved")
        if abs(lhs - rhs) > 1e-9:
            raise GeometryError(
                f"radius relation violated: target side {lhs:.12g}, factor side {rhs:.12g}"
            )

    coords: list[Expression] = []
    for f in factors:
        coords.extend(c.with_variables(allvars) for c in f.coords)
    domain = [iv for f in factors for iv in f.domain]
    name = "x".join(f.name or f"f{i}" for i, f in enumerate(factors))
    prod = Immersion(coords, domain, ambient, target, name=name)
    chart = ProductChart(tuple(f.k for f in factors))
    return prod, chart


# -- warped / quasi-warped builders ----------------------------------------------


@dataclass
class FactorSpec:
    """One factor of a quasi-warped assembly.

    kind "spherical": immersion into a centered sphere (its E-slot is the
    position direction); kind "curve": one-dimensional factor with a chosen
    flat parallel subbundle given by `frames` (expressions over the curve's
    variable, coordinates in the factor's own ambient); kind "flat": no
    E-slot at all.
    """

    immersion: Immersion
    kind: str
    frames: list[list[Expression]] | None = None

    @property
    def radius(self) -> float:
        if self.immersion.target is None:
            raise GeometryError("spherical factor needs a space-form target")
        return self.immersion.target.radius


def _const_vector(values, allvars) -> list[Expression]:
    return [Expression.number(float(v), allvars) for v in values]


def build_quasiwarped_multi(
    factors: list[FactorSpec],
    f0: Immersion,
    extra_flat: int = 0,
    epsilon: int = 0,
    fiber_counts=None,
    base_counts=None,
    seed: int = 0,
) -> TubeResult:
    """Assemble the multi-factor quasi-warped tube over a product base.

    Spherical factors contribute their position direction to E with
    phi(e_a) = f_a / R_a; curve factors contribute their chosen flat parallel
    subbundles; `extra_flat` appends constant directions (identity gauge).
    For epsilon != 0 every factor must be spherical (first one hyperbolic when
    epsilon = -1) or a curve whose first frame is the position direction, and
    the result lives on the space form of the combined radius.
    """
    order = {"spherical": 0, "hyperbolic": 0, "curve": 1, "flat": 2}
    kinds = [fs.kind for fs in factors]
    if kinds != sorted(kinds, key=lambda k: order[k]):
        raise GeometryError("factor order must be spherical, then curve, then flat")
    if epsilon != 0 and any(fs.kind == "flat" for fs in factors):
        raise GeometryError("flat factors are not available on curved space forms")

    base, chart = build_product(
        [fs.immersion for fs in factors],
        target=None,
    )
    allvars = base.variables
    offs = np.cumsum([0] + [fs.immersion.N for fs in factors])
    N_total = base.N + extra_flat
    signature = base.ambient.signature
    ambient = AmbientSpace(N_total, signature)

    if extra_flat:
        zero = Expression.number(0.0, allvars)
        coords = list(base.coords) + [zero] * extra_flat
        base = Immersion(coords, base.domain, ambient, None, name=base.name)
    else:
        base = Immersion(base.coords, base.domain, ambient, None, name=base.name)

    frame_exprs: list[list[Expression]] = []
    shift_list: list[float] = []
    sph_radii: list[float] = []
    fiber_index_of_factor: dict[int, slice] = {}
    for a, fs in enumerate(factors):
        f_a = fs.immersion
        sl = slice(offs[a], offs[a + 1])
        if fs.kind in ("spherical", "hyperbolic"):
            R_a = fs.radius
            vec = [Expression.number(0.0, allvars) for _ in range(N_total)]
            for c_local, c_expr in enumerate(f_a.coords):
                vec[offs[a] + c_local] = c_expr.with_variables(allvars) * (1.0 / R_a)
            fiber_index_of_factor[a] = slice(len(frame_exprs), len(frame_exprs) + 1)
            frame_exprs.append(vec)
            shift_list.append(R_a)
            sph_radii.append(R_a)
        elif fs.kind == "curve":
            if f_a.k != 1:
                raise GeometryError("curve factors must be one-dimensional")
            if f_a.ambient.signature != EUCLIDEAN:
                raise GeometryError("curve factors must live in a Euclidean block")
            if not fs.frames:
                raise GeometryError("curve factors need their flat parallel frames")
            start = len(frame_exprs)
            for vec_local in fs.frames:
                if len(vec_local) != f_a.N:
                    raise GeometryError("curve frame coordinates must match the factor ambient")
                vec = [Expression.number(0.0, allvars) for _ in range(N_total)]
                for c_local, c_expr in enumerate(vec_local):
                    vec[offs[a] + c_local] = c_expr.with_variables(allvars)
                frame_exprs.append(vec)
                if epsilon != 0 and len(frame_exprs) - start == 1:
                    shift_list.append(fs.radius)  # first frame = position/R_a
                else:
                    shift_list.append(0.0)
            fiber_index_of_factor[a] = slice(start, len(frame_exprs))
        elif fs.kind == "flat":
            fiber_index_of_factor[a] = slice(0, 0)
        else:
            raise GeometryError(f"unknown factor kind {fs.kind!r}")
    for j in range(extra_flat):
        vec = [Expression.number(0.0, allvars) for _ in range(N_total)]
        vec[base.N - extra_flat + j] = Expression.number(1.0, allvars)
        frame_exprs.append(vec)
        shift_list.append(0.0)

    s = len(frame_exprs)
    if f0.N != s:
        raise GeometryError(f"f0 maps into dimension {f0.N}, assembled fiber has rank {s}")

    phi = ParallelIsometry.from_expressions(
        base, frame_exprs, base_counts or [7] * base.k
    )
    if phi.fiber_signature != f0.ambient.signature:
        raise GeometryError(
            f"f0 ambient signature {f0.ambient.signature!r} does not match the "
            f"assembled fiber signature {phi.fiber_signature!r}"
        )

    shift = np.array(shift_list)
    e1 = None
    radius = 1.0
    if epsilon == 1:
        # every factor contributes its position slot, so phi(shift) = base position
        e1 = shift
        radius = float(np.sqrt(sum(r * r for r in shift_list)))
    elif epsilon == -1:
        e1 = shift
        r2 = -shift_list[0] ** 2 + sum(r * r for r in shift_list[1:])
        if r2 >= 0:
            raise GeometryError("hyperbolic radius relation violated by the factors")
        radius = float(np.sqrt(-r2))
    spec = PartialTubeSpec(
        fiber=f0,
        base=base,
        phi=phi,
        epsilon=epsilon,
        e1=e1,
        fiber_shift=shift,
        base_chart=chart,
        base_factors=[fs.immersion for fs in factors],
        radius=radius,
    )

    result = build_tube(
        spec, fiber_counts=fiber_counts, base_counts=base_counts, seed=seed
    )

    # warping evaluators, one per non-flat factor
    rho: dict = {}
    slot = 0
    for a, fs in enumerate(factors):
        if fs.kind in ("spherical", "hyperbolic"):
            R_a = fs.radius
            rho[a] = f0.coords[slot].with_variables(f0.variables) * (1.0 / R_a)
            slot += 1
        elif fs.kind == "curve":
            f_a = fs.immersion
            tvar = f_a.variables[0]
            gamma2 = [c.derivative(tvar).derivative(tvar) for c in f_a.coords]
            expr = Expression.number(1.0, ())
            shift = spec.shift
            sl = fiber_index_of_factor[a]
            for local_j, j in enumerate(range(sl.start, sl.stop)):
                y_j = f0.coords[j] - float(shift[j])
                pairing = Expression.number(0.0, ())
                for c_local in range(f_a.N):
                    pairing = pairing + gamma2[c_local] * fs.frames[local_j][c_local]
                expr = expr - y_j * pairing
            rho[a] = expr
        else:
            rho[a] = Expression.number(1.0, ())
    result.rho = rho
    return result


def build_warped(
    f0: Immersion,
    f1: Immersion,
    preset: str = "generic",
    fiber_counts=None,
    base_counts=None,
    seed: int = 0,
) -> TubeResult:
    """Warped product of f0 and a spherical (or hyperbolic) base.

    The base must lie in a centered sphere/hyperboloid inside the leading
    coordinate subspace; E is spanned by the position direction plus the
    trailing constant directions, so phi is closed-form. Returns the tube with
    rho(p0) = (first fiber coordinate)/R1 attached (equal to <f0,e1>/R1 in the
    Euclidean fiber). preset "cone" is the s=1 case over a unit-normalized
    base; "rotation" documents that the base is an umbilical sphere chart.
    """
    if preset not in ("generic", "rotation", "cone"):
        raise GeometryError(f"unknown preset {preset!r}")
    s = f0.N
    if preset == "cone" and s != 1:
        raise GeometryError("cone preset requires a one-dimensional fiber space")
    if f1.target is None or f1.target.epsilon == 0:
        raise GeometryError("warped base must carry a spherical or hyperbolic target")
    hyperbolic = f1.target.epsilon == -1
    R1 = f1.target.radius
    N = f1.N
    if s > 1:
        # base must be contained in the leading N-s+1 coordinates
        pts = grid_points(f1.domain, base_counts or [9] * f1.k)
        tail = f1.value(pts)[..., N - (s - 1):]
        worst = float(np.max(np.abs(tail))) if tail.size else 0.0
        if worst > 1e-9:
            raise GeometryError(
                f"base is not contained in the leading coordinate subspace "
                f"(trailing residual {worst:.3e})"
            )
    allvars = f1.variables
    vec_pos = [c.with_variables(allvars) * (1.0 / R1) for c in f1.coords]
    frame_exprs = [vec_pos]
    for j in range(s - 1):
        vals = np.zeros(N)
        vals[N - (s - 1) + j] = 1.0
        frame_exprs.append(_const_vector(vals, allvars))
    phi = ParallelIsometry.from_expressions(f1, frame_exprs, base_counts or [9] * f1.k)

    epsilon = 0
    radius = 1.0
    if f0.target is not None and f0.target.epsilon != 0:
        # fiber on a space form => whole tube on the matching space form
        epsilon = f0.target.epsilon
        radius = f0.target.radius
        if hyperbolic and epsilon != -1:
            raise GeometryError("hyperbolic base requires a hyperbolic fiber space form")
    e1 = np.zeros(s)
    e1[0] = R1  # phi(e1) = base position for every curvature here

    rho = f0.coords[0].with_variables(f0.variables) * (1.0 / R1)
    vals = rho.eval_value(grid_points(f0.domain, fiber_counts or [9] * f0.k))
    if np.min(vals) < 0 < np.max(vals):
        raise GeometryError("warping function changes sign on the fiber grid")

    spec = PartialTubeSpec(
        fiber=f0, base=f1, phi=phi, epsilon=epsilon, e1=e1, radius=radius
    )
    result = build_tube(spec, fiber_counts=fiber_counts, base_counts=base_counts, seed=seed)
    result.rho = {"rho": rho}
    return result


def build_curve_tube(
    gamma,
    phi: ParallelIsometry,
    f0: Immersion,
    fiber_counts=None,
    base_counts=None,
    seed: int = 0,
) -> TubeResult:
    """Partial tube over a unit-speed curve, with rho(p0,t) = 1 - <gamma'', phi_t(f0-e1)>.

    `gamma` is a one-dimensional Immersion (checked unit speed to 1e-6) or a
    ReparametrizedCurve from arclength_reparametrize. On a space form the
    frames must contain the position direction as the first fiber slot.
    """
    if isinstance(gamma, ReparametrizedCurve):
        return _build_numeric_curve_tube(gamma, phi, f0, fiber_counts, base_counts)
    if gamma.k != 1:
        raise GeometryError("curve tubes need a one-dimensional base")
    pts = grid_points(gamma.domain, base_counts or [33])
    _, J, _ = gamma.jets(pts)
    speed = inner(J[..., 0], J[..., 0], gamma.ambient)
    worst = float(np.max(np.abs(speed - 1.0)))
    if worst > 1e-6:
        raise GeometryError(
            f"curve is not unit speed (max |<g',g'>-1| = {worst:.3e}); "
            "use arclength_reparametrize to opt in to numeric reparametrization"
        )
    epsilon = 0
    radius = 1.0
    e1 = None
    if gamma.target is not None and gamma.target.epsilon != 0:
        epsilon = gamma.target.epsilon
        radius = gamma.target.radius
        if f0.target is None or f0.target.epsilon != epsilon:
            raise GeometryError("space-form curve tubes need the fiber on the matching form")
        e1 = np.zeros(phi.rank)
        e1[0] = radius  # first frame must be position/R
    spec = PartialTubeSpec(
        fiber=f0, base=gamma, phi=phi, epsilon=epsilon, e1=e1, radius=radius
    )
    result = build_tube(spec, fiber_counts=fiber_counts, base_counts=base_counts, seed=seed)

    tvar = gamma.variables[0]
    gamma2 = [c.derivative(tvar).derivative(tvar) for c in gamma.coords]
    diag = gamma.ambient.metric_diag
    expr = Expression.number(1.0, ())
    shift = spec.shift
    for j in range(phi.rank):
        y_j = f0.coords[j] - float(shift[j])
        pairing = Expression.number(0.0, ())
        for c in range(gamma.N):
            pairing = pairing + gamma2[c] * phi.frame_exprs[j][c] * float(diag[c])
        expr = expr - y_j * pairing
    result.rho = {"rho": expr}
    return result


# -- numeric arc-length reparametrization ----------------------------------------


class ReparametrizedCurve:
    """Unit-speed reparametrization of an expression curve, s -> gamma(t(s)).

    t(s) comes from cumulative quadrature of |gamma'| and a monotone (PCHIP)
    inverse; value/first/second derivatives in s use the exact chain rule with
    dt/ds = 1/|gamma'(t)|, so the reported curve is exactly unit speed.
    """

    def __init__(self, gamma: Immersion, n_samples: int = 512):
        from scipy.integrate import cumulative_trapezoid
        from scipy.interpolate import PchipInterpolator

        if gamma.k != 1:
            raise GeometryError("can only reparametrize a one-dimensional immersion")
        self.gamma = gamma
        lo, hi = gamma.domain[0]
        ts = np.linspace(lo, hi, n_samples)
        _, J, _ = gamma.jets(ts[:, None])
        speeds = np.sqrt(inner(J[..., 0], J[..., 0], gamma.ambient))
        arc = np.concatenate([[0.0], cumulative_trapezoid(speeds, ts)])
        self.length = float(arc[-1])
        self._t_of_s = PchipInterpolator(arc, ts)
        self.domain = ((0.0, self.length),)
        self.ambient = gamma.ambient
        self.target = gamma.target
        self.N = gamma.N
        self.k = 1

    def t_of_s(self, s):
        return float(self._t_of_s(s))

    def jets012(self, s: float):
        """(value, d/ds, d^2/ds^2) of the unit-speed curve at s."""
        t = self.t_of_s(s)
        v, J, H = self.gamma.jets(np.array([t]))
        d1 = J[:, 0]
        d2 = H[:, 0, 0]
        diag = self.gamma.ambient.metric_diag
        sp2 = float(np.sum(d1 * diag * d1))
        sp = np.sqrt(sp2)
        tp = 1.0 / sp  # dt/ds
        tpp = -float(np.sum(d1 * diag * d2)) / sp2**2
        value = v
        ds1 = d1 * tp
        ds2 = d2 * tp * tp + d1 * tpp
        return value, ds1, ds2


def arclength_reparametrize(gamma: Immersion, n_samples: int = 512) -> ReparametrizedCurve:
    return ReparametrizedCurve(gamma, n_samples)


def _build_numeric_curve_tube(
    curve: ReparametrizedCurve,
    phi: ParallelIsometry,
    f0: Immersion,
    fiber_counts=None,
    base_counts=None,
) -> TubeResult:
    """Tube over a numerically reparametrized curve: numeric evaluator + rho."""
    if phi.frame_exprs is None:
        raise GeometryError("numeric curve tubes need expression frames over the original parameter")
    diag = curve.ambient.metric_diag
    s_axis = np.linspace(0.0, curve.length, (base_counts or [33])[0])

    def frames_at_s(s):
        t = curve.t_of_s(s)
        return np.array(
            [[c.eval_value(np.array([t])) for c in vec] for vec in phi.frame_exprs]
        )

    def evaluate(p):
        p = np.asarray(p, dtype=float)
        p0, s = p[:-1], p[-1]
        value, _, _ = curve.jets012(s)
        return value + frames_at_s(s).T @ f0.value(p0)

    def rho(p):
        p = np.asarray(p, dtype=float)
        p0, s = p[:-1], p[-1]
        _, _, d2 = curve.jets012(s)
        fr = frames_at_s(s)
        return 1.0 - float(np.sum(d2 * diag * (fr.T @ f0.value(p0))))

    # admissibility: rho bounded away from zero on the sample grid
    f0_pts = grid_points(f0.domain, fiber_counts or [9] * f0.k)
    worst = min(
        abs(rho(np.concatenate([p0, [s]]))) for p0 in f0_pts for s in s_axis
    )
    if worst < 1e-6:
        raise OmegaViolationError(
            f"fiber touches a focal hyperplane of the curve (min |rho| = {worst:.3e})"
        )
    # dummy spec for reporting; geometry closures are not available numerically
    result = TubeResult(
        spec=None,  # type: ignore[arg-type]
        chart=ProductChart((f0.k, 1)),
        geometry=None,  # type: ignore[arg-type]
        immersion=None,
        evaluate=evaluate,
        rho={"rho": rho},
        construction_report={"min_abs_rho": float(worst), "curve_length": curve.length},
    )
    return result


# -- endpoint representation ------------------------------------------------------


def endpoint_representation(
    base: Immersion,
    phi: ParallelIsometry,
    f0: Immersion,
    fiber_counts=None,
    base_counts=None,
    seed: int = 0,
    curvature_step: float = 2e-3,
) -> TubeResult:
    """psi = G(phi(f0 x id)): the tube with phi spanning the full normal bundle.

    Requires rank(phi) = N - dim(base). When the total dimension is 2 the
    construction report carries a flatness certificate: the Gauss curvature of
    the induced metric (Brioschi formula on finite differences of g) compared
    against the target model curvature eps/R^2.
    """
    if phi.rank != base.N - base.k:
        raise GeometryError(
            f"phi has rank {phi.rank}, the full normal bundle has rank {base.N - base.k}"
        )
    if base.k + f0.k < 2:
        raise GeometryError("endpoint representation needs total dimension >= 2")
    epsilon = 0
    radius = 1.0
    e1 = None
    if base.target is not None and base.target.epsilon != 0:
        epsilon = base.target.epsilon
        radius = base.target.radius
        e1 = np.zeros(phi.rank)
        e1[0] = radius
    spec = PartialTubeSpec(
        fiber=f0, base=base, phi=phi, epsilon=epsilon, e1=e1, radius=radius
    )
    result = build_tube(spec, fiber_counts=fiber_counts, base_counts=base_counts, seed=seed)
    if result.immersion is not None and result.immersion.k == 2:
        target_K = 0.0 if epsilon == 0 else epsilon / radius**2
        pts = grid_points(
            result.immersion.domain, [5] * 2, inset=3 * curvature_step
        )
        worst = 0.0
        for p in pts:
            K = _gauss_curvature_fd(result.immersion, p, curvature_step)
            worst = max(worst, abs(K - target_K))
        result.construction_report["flatness_certificate"] = worst
        result.construction_report["model_curvature"] = target_K
    return result


def _gauss_curvature_fd(f: Immersion, p, h: float) -> float:
    """Brioschi formula on central differences of the induced metric."""
    p = np.asarray(p, dtype=float)

    def g(q):
        return f.first_fundamental_form(q)

    def d(axis, fun, q):
        e = np.zeros(2)
        e[axis] = h
        return (fun(q + e) - fun(q - e)) / (2 * h)

    def dd(ax1, ax2, fun, q):
        if ax1 == ax2:
            e = np.zeros(2)
            e[ax1] = h
            return (fun(q + e) - 2 * fun(q) + fun(q - e)) / (h * h)
        e1 = np.zeros(2)
        e2 = np.zeros(2)
        e1[ax1], e2[ax2] = h, h
        return (fun(q + e1 + e2) - fun(q + e1 - e2) - fun(q - e1 + e2) + fun(q - e1 - e2)) / (
            4 * h * h
        )

    G = g(p)
    E, F, Gg = G[0, 0], G[0, 1], G[1, 1]
    Eu, Ev = d(0, g, p)[0, 0], d(1, g, p)[0, 0]
    Gu, Gv = d(0, g, p)[1, 1], d(1, g, p)[1, 1]
    Fu, Fv = d(0, g, p)[0, 1], d(1, g, p)[0, 1]
    Evv = dd(1, 1, g, p)[0, 0]
    Guu = dd(0, 0, g, p)[1, 1]
    Fuv = dd(0, 1, g, p)[0, 1]
    B1 = np.array(
        [
            [-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev],
            [Fv - 0.5 * Gu, E, F],
            [0.5 * Gv, F, Gg],
        ]
    )
    B2 = np.array([[0.0, 0.5 * Ev, 0.5 * Gu], [0.5 * Ev, E, F], [0.5 * Gu, F, Gg]])
    det_g = E * Gg - F * F
    return float((np.linalg.det(B1) - np.linalg.det(B2)) / (det_g * det_g))
