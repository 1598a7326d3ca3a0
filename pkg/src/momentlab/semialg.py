"""Basic semi-algebraic sets, the catalog of test domains, and violation measurement.

Sign convention is g_j(x) >= 0 throughout; constraints supplied in the <= 0
convention must be negated by the caller at construction time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from momentlab.polycore import Polynomial, eval_poly, half_degree


@dataclass(frozen=True)
class LojasiewiczHint:
    """Exponent (in (0, 1]) and optional constant of d(x, X) <= c * violation(x)^exponent."""

    exponent: float
    constant: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.exponent <= 1.0:
            raise ValueError("Lojasiewicz exponent must lie in (0, 1]")
        if self.constant is not None and self.constant <= 0:
            raise ValueError("Lojasiewicz constant must be positive")


def _ball_polynomial(n: int, radius: float) -> Polynomial:
    terms = {tuple([0] * n): radius * radius}
    for i in range(n):
        terms[tuple(2 if j == i else 0 for j in range(n))] = -1.0
    return Polynomial(n, terms)


@dataclass(frozen=True)
class SemiAlgebraicSet:
    """X = {x : g_j(x) >= 0 for all j, h_i(x) = 0 for all i}."""

    n: int
    inequalities: tuple = ()
    equalities: tuple = ()
    radius: Optional[float] = None
    lojasiewicz_hint: Optional[LojasiewiczHint] = None
    name: str = "custom"
    box: Optional[tuple] = None  # (lower, upper) arrays bounding X, for samplers

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        for p in self.inequalities + self.equalities:
            if p.n != self.n:
                raise ValueError("constraint dimension does not match set dimension")
        if self.radius is not None:
            if self.radius <= 0:
                raise ValueError("radius must be positive")
            ball = _ball_polynomial(self.n, self.radius)
            if all(g != ball for g in self.inequalities):
                raise ValueError("radius set but R^2 - |x|^2 not present in inequalities")

    @property
    def max_half_degree(self) -> int:
        """d = max over all ceil(deg/2) of the defining polynomials."""
        degs = [half_degree(p) for p in self.inequalities + self.equalities]
        return max(degs, default=0)

    def bounding_box(self) -> tuple:
        if self.box is not None:
            lo, hi = self.box
            return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        if self.radius is not None:
            r = self.radius
            return -r * np.ones(self.n), r * np.ones(self.n)
        raise ValueError(f"no bounding box known for set {self.name!r}")


def violation(X: SemiAlgebraicSet, x) -> float:
    """max over 0, -g_j(x) and |h_i(x)|; zero exactly on X up to float round-off."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != X.n:
        raise ValueError(f"point has dimension {x.size}, set has {X.n}")
    worst = 0.0
    for g in X.inequalities:
        worst = max(worst, -eval_poly(g, x))
    for h in X.equalities:
        worst = max(worst, abs(eval_poly(h, x)))
    return worst


def violation_many(X: SemiAlgebraicSet, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    worst = np.zeros(pts.shape[0])
    for g in X.inequalities:
        worst = np.maximum(worst, -g.eval_many(pts))
    for h in X.equalities:
        worst = np.maximum(worst, np.abs(h.eval_many(pts)))
    return worst


def archimedean_augment(X: SemiAlgebraicSet, R: float, sample_check: int = 0,
                        seed: int = 0) -> SemiAlgebraicSet:
    """Append g0 = R^2 - |x|^2 and record the radius. Idempotent.

    The caller asserts X is contained in the R-ball; that is not machine
    checkable in general, so at most a sampling warning is emitted.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    ball = _ball_polynomial(X.n, R)
    if any(g == ball for g in X.inequalities):
        return replace(X, radius=R if X.radius is None else X.radius)
    if sample_check > 0:
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-2 * R, 2 * R, size=(sample_check, X.n))
        inside = pts[violation_many(X, pts) <= 1e-9]
        if inside.size and np.any(np.sum(inside ** 2, axis=1) > R * R + 1e-9):
            warnings.warn(f"sampled a point of X outside the ball of radius {R}")
    return replace(X, inequalities=X.inequalities + (ball,), radius=R)


# ----------------------------------------------------------------------------
# catalog


def make_catalog_set(kind: str, **params) -> SemiAlgebraicSet:
    """Construct a catalog domain: ball, simplex, hypercube, sphere, polytope,
    box_product, or custom. Scale and dimension are keyword parameters."""
    builder = _CATALOG.get(kind)
    if builder is None:
        raise ValueError(f"unknown catalog kind {kind!r}; have {sorted(_CATALOG)}")
    return builder(**params)


def _make_ball(n: int, R: float = 1.0) -> SemiAlgebraicSet:
    if R <= 0:
        raise ValueError("ball radius must be positive")
    return SemiAlgebraicSet(
        n=n, inequalities=(_ball_polynomial(n, R),), radius=R,
        lojasiewicz_hint=LojasiewiczHint(1.0), name=f"ball(n={n},R={R:g})",
        box=(-R * np.ones(n), R * np.ones(n)))


def _make_sphere(n: int, R: float = 1.0) -> SemiAlgebraicSet:
    # one equality plus the redundant ball inequality, so T/Q and R certificates
    # all apply to the same description
    if R <= 0:
        raise ValueError("sphere radius must be positive")
    ball = _ball_polynomial(n, R)
    return SemiAlgebraicSet(
        n=n, inequalities=(ball,), equalities=(ball,), radius=R,
        lojasiewicz_hint=LojasiewiczHint(1.0), name=f"sphere(n={n},R={R:g})",
        box=(-R * np.ones(n), R * np.ones(n)))


def _make_simplex(n: int, K: float = 1.0) -> SemiAlgebraicSet:
    if K <= 0:
        raise ValueError("simplex scale must be positive")
    gs = [Polynomial.variable(n, i) for i in range(n)]
    cap = Polynomial.constant(n, K) - sum(gs, Polynomial.zero(n))
    return SemiAlgebraicSet(
        n=n, inequalities=tuple(gs) + (cap,),
        lojasiewicz_hint=LojasiewiczHint(1.0), name=f"simplex(n={n},K={K:g})",
        box=(np.zeros(n), K * np.ones(n)))


def _make_hypercube(n: int, R: float = 1.0) -> SemiAlgebraicSet:
    if R <= 0:
        raise ValueError("hypercube scale must be positive")
    gs = []
    for i in range(n):
        xi = Polynomial.variable(n, i)
        gs.append(Polynomial.constant(n, R * R) - xi * xi)
    return SemiAlgebraicSet(
        n=n, inequalities=tuple(gs),
        lojasiewicz_hint=LojasiewiczHint(1.0), name=f"hypercube(n={n},R={R:g})",
        box=(-R * np.ones(n), R * np.ones(n)))


def _make_polytope(A, b) -> SemiAlgebraicSet:
    """{x : Ax <= b}, stored row-wise as b_i - <a_i, x> >= 0."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if A.ndim != 2 or A.shape[0] != b.size:
        raise ValueError("polytope needs matrix A and matching vector b")
    n = A.shape[1]
    gs = []
    for i in range(A.shape[0]):
        terms = {tuple([0] * n): b[i]}
        for j in range(n):
            if A[i, j] != 0.0:
                terms[tuple(1 if k == j else 0 for k in range(n))] = -A[i, j]
        gs.append(Polynomial(n, terms))
    _warn_if_empty_polytope(A, b)
    box = _polytope_box(A, b)
    return SemiAlgebraicSet(
        n=n, inequalities=tuple(gs),
        lojasiewicz_hint=LojasiewiczHint(1.0), name=f"polytope(m={A.shape[0]},n={n})",
        box=box)


def _warn_if_empty_polytope(A: np.ndarray, b: np.ndarray) -> None:
    # feasibility LP; emptiness is reported, not rejected
    from scipy.optimize import linprog

    res = linprog(np.zeros(A.shape[1]), A_ub=A, b_ub=b,
                  bounds=[(None, None)] * A.shape[1], method="highs")
    if not res.success:
        warnings.warn("polytope appears to be empty (feasibility LP failed)")


def _polytope_box(A: np.ndarray, b: np.ndarray) -> Optional[tuple]:
    from scipy.optimize import linprog

    n = A.shape[1]
    lo, hi = np.empty(n), np.empty(n)
    for j in range(n):
        c = np.zeros(n)
        c[j] = 1.0
        rlo = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
        rhi = linprog(-c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
        if not (rlo.success and rhi.success):
            return None
        lo[j], hi[j] = rlo.fun, -rhi.fun
    return lo, hi


@dataclass(frozen=True)
class SimpleSetProduct:
    """Product of simple factors; each factor is (kind, dimension, scale)."""

    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(tuple(f) for f in self.factors))
        for kind, ni, scale in self.factors:
            if kind not in ("ball", "simplex", "hypercube"):
                raise ValueError(f"unsupported simple-set kind {kind!r}")
            if ni < 1:
                raise ValueError("factor dimension must be >= 1")
            if scale <= 0:
                raise ValueError("factor scale must be positive")

    @property
    def n(self) -> int:
        return sum(ni for _, ni, _ in self.factors)

    def check_scaling_convention(self) -> None:
        """Transport of the error bounds to scaled factors assumes scale >= 1."""
        if any(scale < 1.0 for _, _, scale in self.factors):
            warnings.warn("factor scale < 1: scaled-domain rate transport not covered")

    def as_semialgebraic(self) -> SemiAlgebraicSet:
        n = self.n
        gs = []
        offset = 0
        lo = np.empty(n)
        hi = np.empty(n)
        for kind, ni, scale in self.factors:
            idx = list(range(offset, offset + ni))
            sub = make_catalog_set(kind, n=ni, **({"K": scale} if kind == "simplex" else {"R": scale}))
            for g in sub.inequalities:
                gs.append(_embed(g, n, idx))
            blo, bhi = sub.bounding_box()
            lo[idx], hi[idx] = blo, bhi
            offset += ni
        name = "x".join(f"{k}({ni},{s:g})" for k, ni, s in self.factors)
        return SemiAlgebraicSet(n=n, inequalities=tuple(gs),
                                lojasiewicz_hint=LojasiewiczHint(1.0),
                                name=f"product[{name}]", box=(lo, hi))


def _embed(p: Polynomial, n: int, coords: Sequence[int]) -> Polynomial:
    """Reinterpret a polynomial in len(coords) variables inside R^n."""
    out = {}
    for alpha, c in p.terms.items():
        key = [0] * n
        for e, j in zip(alpha, coords):
            key[j] = e
        out[tuple(key)] = c
    return Polynomial(n, out)


def _make_box_product(factors) -> SemiAlgebraicSet:
    return SimpleSetProduct(tuple(factors)).as_semialgebraic()


def _make_custom(n: int, inequalities=(), equalities=(), radius=None,
                 lojasiewicz=None, box=None, name: str = "custom") -> SemiAlgebraicSet:
    hint = None
    if lojasiewicz is not None:
        hint = lojasiewicz if isinstance(lojasiewicz, LojasiewiczHint) else LojasiewiczHint(**lojasiewicz)
    X = SemiAlgebraicSet(n=n, inequalities=tuple(inequalities),
                         equalities=tuple(equalities),
                         lojasiewicz_hint=hint, name=name, box=box)
    if radius is not None:
        X = archimedean_augment(X, radius)
    return X


_CATALOG = {
    "ball": _make_ball,
    "sphere": _make_sphere,
    "simplex": _make_simplex,
    "hypercube": _make_hypercube,
    "polytope": _make_polytope,
    "box_product": _make_box_product,
    "custom": _make_custom,
}


def rejection_sample(X: SemiAlgebraicSet, count: int, seed: int = 0,
                     tol: float = 1e-9, max_tries: int = 200000,
                     polish_equalities: bool = True) -> np.ndarray:
    """Sample points of X by rejection in the bounding box.

    Sets with equalities are sampled by projecting box points onto the zero set
    first (plain rejection almost never hits a variety).
    """
    rng = np.random.default_rng(seed)
    lo, hi = X.bounding_box()
    kept = []
    tries = 0
    batch = max(4 * count, 256)
    while len(kept) < count and tries < max_tries:
        pts = rng.uniform(lo, hi, size=(batch, X.n))
        tries += batch
        if X.equalities and polish_equalities:
            pts = np.array([_project_to_equalities(X, p) for p in pts])
        ok = violation_many(X, pts) <= tol
        kept.extend(pts[ok])
    if len(kept) < count:
        raise RuntimeError(f"sampler starvation: kept {len(kept)}/{count} after {tries} draws")
    return np.array(kept[:count])


def restore_feasibility(X: SemiAlgebraicSet, x: np.ndarray,
                        iters: int = 40) -> Optional[np.ndarray]:
    """Gauss-Newton steps onto the violated constraints; None on failure."""
    z = np.asarray(x, dtype=float).copy()
    for _ in range(iters):
        residuals, jacs = [], []
        for h in X.equalities:
            residuals.append(eval_poly(h, z))
            jacs.append([eval_poly(d, z) for d in h.gradient()])
        for g in X.inequalities:
            val = eval_poly(g, z)
            if val < 0.0:
                residuals.append(val)
                jacs.append([eval_poly(d, z) for d in g.gradient()])
        if not residuals:
            return z
        F = np.asarray(residuals)
        if np.abs(F).max() <= 1e-13:
            return z
        J = np.asarray(jacs, dtype=float)
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        if not np.all(np.isfinite(step)):
            return None
        z = z + step
    return z if violation(X, z) <= 1e-9 else None


def _poly_hessian(p: Polynomial, x: np.ndarray) -> np.ndarray:
    n = p.n
    H = np.empty((n, n))
    grads = p.gradient()
    for i in range(n):
        row = grads[i].gradient()
        for j in range(n):
            H[i, j] = eval_poly(row[j], x)
    return H


def local_extremum(f: Polynomial, X: SemiAlgebraicSet, x0: np.ndarray,
                   maximize: bool = False, act_tol: float = 1e-6,
                   iters: int = 120):
    """Polish a feasible point to a nearby local extremum of f over X.

    Phase one is projected-gradient ascent with Gauss-Newton restoration onto
    the active constraints; phase two runs Newton on the KKT system of the
    final active set. Returns (point, value) at a feasible point, or None when
    restoration fails. Local solvers routinely stop short on curved constraint
    surfaces; this keeps grid-plus-polish estimates trustworthy to round-off.
    """
    p = f if maximize else -1.0 * f
    x = restore_feasibility(X, np.asarray(x0, dtype=float))
    if x is None:
        return None
    grad_p = p.gradient()

    def active_constraints(z):
        cons = list(X.equalities)
        cons += [g for g in X.inequalities if abs(eval_poly(g, z)) <= act_tol]
        return cons

    def value(z):
        return eval_poly(p, z)

    best_x, best_v = x, value(x)
    step = 0.1
    for _ in range(iters):
        g = np.array([eval_poly(d, best_x) for d in grad_p])
        cons = active_constraints(best_x)
        direction = g
        if cons:
            J = np.array([[eval_poly(d, best_x) for d in c.gradient()] for c in cons])
            lam, *_ = np.linalg.lstsq(J.T, g, rcond=None)
            # a positive multiplier means the ascent direction already points
            # into the feasible side of that inequality: release it
            keep = []
            for c, l in zip(cons, lam):
                if c in X.equalities or l <= 1e-12:
                    keep.append(c)
            if keep:
                J = np.array([[eval_poly(d, best_x) for d in c.gradient()] for c in keep])
                tang, *_ = np.linalg.lstsq(J, J @ g, rcond=None)
                direction = g - tang
        nrm = float(np.linalg.norm(direction))
        if nrm <= 1e-14:
            break
        improved = False
        trial_step = step
        for _ in range(30):
            cand = restore_feasibility(X, best_x + trial_step * direction / max(nrm, 1e-30))
            if cand is not None and violation(X, cand) <= 1e-9:
                v = value(cand)
                if v > best_v + 1e-16:
                    best_x, best_v = cand, v
                    improved = True
                    step = trial_step * 1.5
                    break
            trial_step *= 0.5
        if not improved:
            if step <= 1e-12:
                break
            step *= 0.25

    # KKT Newton refinement on the final active set
    cons = active_constraints(best_x)
    if cons:
        m = len(cons)
        lam = np.zeros(m)
        J0 = np.array([[eval_poly(d, best_x) for d in c.gradient()] for c in cons])
        lam, *_ = np.linalg.lstsq(J0.T, np.array([eval_poly(d, best_x) for d in grad_p]),
                                  rcond=None)
        z = best_x.copy()
        for _ in range(12):
            J = np.array([[eval_poly(d, z) for d in c.gradient()] for c in cons])
            gp = np.array([eval_poly(d, z) for d in grad_p])
            F = np.concatenate([gp - J.T @ lam,
                                np.array([eval_poly(c, z) for c in cons])])
            if np.abs(F).max() <= 1e-13:
                break
            H = _poly_hessian(p, z)
            for c, l in zip(cons, lam):
                H = H - l * _poly_hessian(c, z)
            KKT = np.block([[H, -J.T], [J, np.zeros((m, m))]])
            try:
                delta = np.linalg.lstsq(KKT, -F, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            z = z + delta[:X.n]
            lam = lam + delta[X.n:]
        if violation(X, z) <= 1e-9 and value(z) > best_v:
            best_x, best_v = z, value(z)

    f_val = best_v if maximize else -best_v
    return best_x, f_val


def _project_to_equalities(X: SemiAlgebraicSet, x0: np.ndarray) -> np.ndarray:
    from scipy.optimize import minimize

    cons = [{"type": "eq", "fun": (lambda z, h=h: eval_poly(h, z)),
             "jac": (lambda z, h=h: np.array([eval_poly(d, z) for d in h.gradient()]))}
            for h in X.equalities]
    cons += [{"type": "ineq", "fun": (lambda z, g=g: eval_poly(g, z)),
              "jac": (lambda z, g=g: np.array([eval_poly(d, z) for d in g.gradient()]))}
             for g in X.inequalities]
    res = minimize(lambda z: np.sum((z - x0) ** 2), x0, jac=lambda z: 2 * (z - x0),
                   constraints=cons, method="SLSQP",
                   options={"maxiter": 120, "ftol": 1e-14})
    return res.x
