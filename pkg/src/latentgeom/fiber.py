"""The unidentifiable fiber as a mixing-matrix group action.

An invertible r2 x r2 matrix q with unit row sums acts on chain parameters
by a' = a q^{-1}, b' = q b, leaving p1 and therefore the observed (Y1, Y3)
marginal exactly unchanged.  Matrices keeping (a', b') entrywise
nonnegative form the validity polytope; for r2 = 2 it is described in
closed form by the (pi, rho) parametrisation with rows (pi, 1 - pi) and
(rho, 1 - rho).  Pushing (pi, rho) to the polytope corners produces the
maximally informative boundary representations with structural zeros; the
tangent rank of the action at the identity measures the fiber dimension,
r2 (r2 - 1) at interior points whenever r2 < min(r1, r3).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryPoint,
    DegenerateInput,
    InvalidMixing,
    InvalidParameter,
    RejectionStall,
    ShapeMismatch,
    SingularMixing,
)
from .model import (
    INTERIOR_EPS,
    RANK_CUTOFF,
    SUM_TOL,
    ChainParams,
    _frozen,
)

#: entries in (-CLAMP_EPS, 0) are roundoff and snap to exact zero
CLAMP_EPS = 1e-12
#: |det| at or below this counts as singular
DET_EPS = 1e-12


@dataclass(frozen=True)
class MixingMatrix:
    """Invertible matrix with unit row sums acting on the latent labels.

    Entries may be any reals; whether the action keeps the parameters
    nonnegative is checked by :func:`apply_mixing`, not here.
    """

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 2:
            raise InvalidParameter(f"q must be square of size >= 2, got {q.shape}")
        if not np.isfinite(q).all():
            raise InvalidParameter("q contains non-finite entries")
        sums = q.sum(axis=1)
        if (np.abs(sums - 1.0) > SUM_TOL).any():
            which = int(np.flatnonzero(np.abs(sums - 1.0) > SUM_TOL)[0])
            raise InvalidParameter(
                f"row {which} of q sums to {sums[which]!r}, not 1"
            )
        det = float(np.linalg.det(q))
        if abs(det) <= DET_EPS:
            raise SingularMixing(f"|det q| = {abs(det):.3e} <= {DET_EPS}")
        object.__setattr__(self, "q", _frozen(q))

    @classmethod
    def from_pi_rho(cls, pi: float, rho: float) -> "MixingMatrix":
        """The 2 x 2 parametrisation with rows (pi, 1 - pi), (rho, 1 - rho)."""
        return cls(np.array([[pi, 1.0 - pi], [rho, 1.0 - rho]]))

    @classmethod
    def identity(cls, r2: int) -> "MixingMatrix":
        return cls(np.eye(r2))

    @property
    def size(self) -> int:
        return self.q.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.q))


def _clamp_rows(name: str, rows: np.ndarray) -> np.ndarray:
    """Snap roundoff negatives to exact zero, reject real ones, renormalise."""
    worst = float(rows.min())
    if worst < -CLAMP_EPS:
        idx = tuple(int(x) for x in np.argwhere(rows == rows.min())[0])
        raise InvalidMixing(name, idx, worst)
    out = rows.copy()
    out[(out > -CLAMP_EPS) & (out < 0.0)] = 0.0
    out[out == 0.0] = 0.0  # normalise -0.0 away
    return out / out.sum(axis=1, keepdims=True)


def apply_mixing(params: ChainParams, q: MixingMatrix) -> ChainParams:
    """Transform the parameters along the fiber: a' = a q^{-1}, b' = q b.

    The observed (Y1, Y3) marginal is exactly invariant because the factors
    cancel inside the matrix product.  Entries of a' or b' in
    (-1e-12, 0) are snapped to exact zero and the row renormalised; larger
    negativity means q left the validity polytope and raises
    :class:`InvalidMixing` with the most violated entry.
    """
    r2 = params.shape.r2
    if q.size != r2:
        raise ShapeMismatch(f"q is {q.size} x {q.size}, model has r2 = {r2}")
    det = q.det
    if abs(det) <= DET_EPS:
        raise SingularMixing(f"|det q| = {abs(det):.3e} <= {DET_EPS}")
    if r2 == 2:
        # analytic inverse keeps boundary zeros exact: row i of a q^{-1} is
        # ((a_i0 - rho)/(pi - rho), (pi - a_i0)/(pi - rho))
        pi = float(q.q[0, 0])
        rho = float(q.q[1, 0])
        col = params.a[:, 0]
        a_new = np.column_stack([(col - rho) / (pi - rho),
                                 (pi - col) / (pi - rho)])
    else:
        a_new = np.linalg.solve(q.q.T, params.a.T).T
    b_new = q.q @ params.b
    a_new = _clamp_rows("a", a_new)
    b_new = _clamp_rows("b", b_new)
    return ChainParams(params.shape, params.p1, a_new, b_new)


@dataclass(frozen=True)
class RhoPiBounds:
    """Closed-form validity bounds for the 2 x 2 mixing parametrisation.

    On the branch pi > rho the action stays in the polytope exactly for
    rho in [0, rho_max] and pi in [pi_min, 1], where rho_max = min_i a(i, 0)
    (achieved at row ``i_min``) and pi_min = max_i a(i, 0) (row ``i_max``).
    The mirrored branch pi < rho uses the same numbers with the roles
    swapped: pi in [0, rho_max], rho in [pi_min, 1].
    """

    rho_max: float
    pi_min: float
    i_min: int
    i_max: int

    def __post_init__(self):
        if not (0.0 <= self.rho_max <= self.pi_min <= 1.0):
            raise InvalidParameter(
                f"bounds must satisfy 0 <= rho_max <= pi_min <= 1, got "
                f"({self.rho_max!r}, {self.pi_min!r})"
            )


def rho_pi_bounds(params: ChainParams) -> RhoPiBounds:
    """Extremes of the first column of p(Y2|Y1); requires r2 = 2."""
    if params.shape.r2 != 2:
        raise InvalidParameter("rho/pi bounds are defined for r2 = 2 only")
    col = params.a[:, 0]
    i_min = int(np.argmin(col))
    i_max = int(np.argmax(col))
    return RhoPiBounds(rho_max=float(col[i_min]), pi_min=float(col[i_max]),
                       i_min=i_min, i_max=i_max)


@dataclass(frozen=True)
class ExtremeMixing:
    """A boundary mixing matrix together with the degeneracy it induces.

    ``zeros`` lists (matrix, row, col) entries of the transformed
    parameters that are forced to exact zero, with matrix "a" for
    p(Y2'|Y1) and "b" for p(Y3|Y2')."""

    q: MixingMatrix
    branch: str
    zeros: tuple[tuple[str, int, int], ...]


def _b_side_interval(b: np.ndarray) -> tuple[float, int, float, int]:
    """Range of u for which u b[0, :] + (1 - u) b[1, :] stays nonnegative.

    Returns (u_lo, k_lo, u_hi, k_hi) where the bounds are attained with an
    exact zero at columns k_lo / k_hi.  Requires the two rows of b to
    differ somewhere on each side; otherwise no mixing can push b to its
    boundary and :class:`DegenerateInput` is raised.
    """
    b0, b1 = b[0], b[1]
    hi_candidates = [(b1[k] / (b1[k] - b0[k]), k)
                     for k in range(b.shape[1]) if b0[k] < b1[k]]
    lo_candidates = [(b1[k] / (b1[k] - b0[k]), k)
                     for k in range(b.shape[1]) if b0[k] > b1[k]]
    if not hi_candidates or not lo_candidates:
        raise DegenerateInput(
            "rows of p(Y3|Y2) do not straddle; no boundary mixing exists"
        )
    u_hi, k_hi = min(hi_candidates)
    u_lo, k_lo = max(lo_candidates)
    return u_lo, k_lo, u_hi, k_hi


def extreme_mixings(params: ChainParams, side: str = "a") -> list[ExtremeMixing]:
    """The boundary mixings that make a transformed factor degenerate.

    ``side = "a"``: the two informative corners of the (pi, rho) validity
    region, (pi_min, rho_max) and its mirrored twin, each driving an exact
    zero into *both* columns of the transformed p(Y2'|Y1).

    ``side = "b"``: the transposed construction, pushing the rows of
    q b to the boundary instead, so each row of the transformed p(Y3|Y2')
    acquires a zero.

    Requires r2 = 2 and interior parameters; parameters already on the
    fiber boundary (rho_max = 0 or pi_min = 1) raise
    :class:`DegenerateInput`, as does a pinched region rho_max = pi_min,
    where the corner matrix would be singular.
    """
    if params.shape.r2 != 2:
        raise InvalidParameter("extreme mixings are defined for r2 = 2 only")
    if side not in ("a", "b"):
        raise InvalidParameter(f"side must be 'a' or 'b', got {side!r}")
    if side == "a":
        bounds = rho_pi_bounds(params)
        if bounds.rho_max <= 0.0 or bounds.pi_min >= 1.0:
            raise DegenerateInput(
                "p(Y2|Y1) already touches the boundary; no extreme vertex"
            )
        if bounds.pi_min == bounds.rho_max:
            raise DegenerateInput(
                "constant p(Y2 = 1|Y1): the validity rectangle pinches to a "
                "segment and the informative corner is singular"
            )
        zeros = (("a", bounds.i_min, 0), ("a", bounds.i_max, 1))
        mirrored_zeros = (("a", bounds.i_max, 0), ("a", bounds.i_min, 1))
        return [
            ExtremeMixing(
                q=MixingMatrix.from_pi_rho(bounds.pi_min, bounds.rho_max),
                branch="main", zeros=zeros),
            ExtremeMixing(
                q=MixingMatrix.from_pi_rho(bounds.rho_max, bounds.pi_min),
                branch="mirrored", zeros=mirrored_zeros),
        ]
    if params.min_entry <= 0.0:
        raise DegenerateInput("b-side construction requires interior parameters")
    u_lo, k_lo, u_hi, k_hi = _b_side_interval(params.b)
    zeros = (("b", 0, k_hi), ("b", 1, k_lo))
    mirrored_zeros = (("b", 0, k_lo), ("b", 1, k_hi))
    return [
        ExtremeMixing(q=MixingMatrix.from_pi_rho(u_hi, u_lo),
                      branch="main", zeros=zeros),
        ExtremeMixing(q=MixingMatrix.from_pi_rho(u_lo, u_hi),
                      branch="mirrored", zeros=mirrored_zeros),
    ]


def sample_fiber(params: ChainParams, n: int, seed: int = 0) -> list[ChainParams]:
    """Draw n points of the fiber through ``params`` by rejection.

    Proposals are q = I + t M with M a seeded standard-normal matrix
    recentred to zero row sums; t adapts towards roughly 25% acceptance
    (doubled on acceptance, shrunk by 2^(-1/3) on rejection).  If fewer
    than n points are accepted within the cap of max(200, 100 n) attempts,
    a :class:`RejectionStall` warning reports the acceptance rate and the
    accepted points are returned as-is.
    """
    if n < 0:
        raise InvalidParameter(f"n must be >= 0, got {n}")
    if params.min_entry <= 0.0:
        raise BoundaryPoint("fiber sampling requires interior parameters")
    r2 = params.shape.r2
    rng = np.random.default_rng(seed)
    eye = np.eye(r2)
    out: list[ChainParams] = []
    t = 0.5
    cap = max(200, 100 * n)
    attempts = 0
    while len(out) < n and attempts < cap:
        attempts += 1
        m = rng.standard_normal((r2, r2))
        m -= m.mean(axis=1, keepdims=True)
        try:
            q = MixingMatrix(eye + t * m)
            out.append(apply_mixing(params, q))
            t = min(t * 2.0, 4.0)
        except (SingularMixing, InvalidMixing):
            t = max(t * 2.0 ** (-1.0 / 3.0), 1e-8)
    if len(out) < n:
        warnings.warn(
            RejectionStall(
                f"accepted {len(out)}/{n} fiber points in {attempts} attempts "
                f"({len(out) / attempts:.1%} acceptance)"
            )
        )
    return out


def _row_sum_zero_basis(r2: int) -> list[np.ndarray]:
    basis = []
    for j in range(r2):
        for l in range(r2 - 1):
            m = np.zeros((r2, r2))
            m[j, l] = 1.0
            m[j, r2 - 1] = -1.0
            basis.append(m)
    return basis


def fiber_dimension(params: ChainParams) -> int:
    """Tangent dimension of the mixing orbit at the identity.

    The derivative of q -> (a q^{-1}, q b) at q = I in direction M is
    (-a M, M b), a linear map on the r2 (r2 - 1) dimensional space of
    zero-row-sum matrices; its numerical rank (relative cutoff 1e-8) is the
    orbit dimension.  At interior points with r2 < min(r1, r3) this equals
    r2 (r2 - 1); in the large-r2 regime it reports the smaller value t - m.

    Parameters with boundary zeros raise :class:`BoundaryPoint`, except for
    one-sided degeneracy (p1 interior and exactly one of a, b interior),
    which is allowed with a warning since the rank may or may not drop.
    """
    p1_ok = params.p1.min() > INTERIOR_EPS
    a_ok = params.a.min() > INTERIOR_EPS
    b_ok = params.b.min() > INTERIOR_EPS
    if not (p1_ok and a_ok and b_ok):
        if p1_ok and (a_ok or b_ok):
            warnings.warn(
                "one-sided degenerate parameters: orbit rank reported as found",
                UserWarning,
            )
        else:
            raise BoundaryPoint("fiber dimension requires (one-sided) interior "
                                "parameters")
    rows = []
    for m in _row_sum_zero_basis(params.shape.r2):
        rows.append(np.concatenate([(-params.a @ m).ravel(),
                                    (m @ params.b).ravel()]))
    mat = np.vstack(rows)
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_CUTOFF * sv[0]))
