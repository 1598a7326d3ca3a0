"""Assembly and solution of the lower-bound hierarchies.

Six programs are covered: the moment and SOS sides of the preordering (T),
quadratic-module (Q), and reduced (R) certificates. Moment programs carry the
pseudo-moment vector as a free block linked to PSD localizing blocks; SOS
programs carry one Gram block per certificate term plus free polynomial
multipliers on equalities (T, Q) or nonnegative scalars on squared equalities
(R).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from momentlab import sdpcore
from momentlab.momentkit import preordering_products
from momentlab.polycore import (
    Polynomial,
    count_monomials,
    half_degree,
    l1_norm,
    monomial_basis,
)
from momentlab.sdpcore import Block, ConicProgram, Solution, SolveOptions
from momentlab.semialg import SemiAlgebraicSet, rejection_sample


class LevelTooLowError(ValueError):
    pass


@dataclass(frozen=True)
class HierarchyKind:
    certificate: str  # T | Q | R
    side: str         # moment | sos

    def __post_init__(self):
        if self.certificate not in ("T", "Q", "R"):
            raise ValueError(f"unknown certificate {self.certificate!r}")
        if self.side not in ("moment", "sos"):
            raise ValueError(f"unknown side {self.side!r}")


@dataclass
class Relaxation:
    """A flattened hierarchy program plus the structure needed to read it back."""

    program: ConicProgram
    kind: HierarchyKind
    level: int
    objective: Polynomial
    domain: SemiAlgebraicSet
    psd_specs: list
    # moment side: slice of the pseudo-moment vector inside x
    y_slice: Optional[slice] = None
    # sos side: index of the bound variable c and the multiplier layout
    c_index: Optional[int] = None
    tau_layout: list = field(default_factory=list)

    def value(self, sol: Solution) -> float:
        """Bound carried by a solution: mlb on the moment side, lb on the SOS side."""
        return sol.primal_value if self.kind.side == "moment" else -sol.primal_value

    def pseudo_moments(self, sol: Solution):
        from momentlab.momentkit import TruncatedSequence

        if self.y_slice is None:
            raise ValueError("not a moment-side relaxation")
        return TruncatedSequence(self.domain.n, 2 * self.level, sol.x[self.y_slice])


def _check_level(f: Polynomial, X: SemiAlgebraicSet, r: int) -> None:
    need = max([half_degree(f)] + [half_degree(g) for g in X.inequalities]
               + [half_degree(h) for h in X.equalities])
    if r < need:
        raise LevelTooLowError(f"level r={r} below required {need}")


def _monomial_sum_index(basis, alpha, beta, gamma=None):
    total = tuple(a + b for a, b in zip(alpha, beta))
    if gamma is not None:
        total = tuple(a + g for a, g in zip(total, gamma))
    return basis.index(total)


def build_moment_relaxation(f: Polynomial, X: SemiAlgebraicSet, certificate: str,
                            r: int, max_psd_size: int = 400) -> Relaxation:
    """Level-r moment program: minimize l_y(f) over y0 = 1 and the localizing
    constraints of the chosen certificate."""
    _check_level(f, X, r)
    n = X.n
    big = monomial_basis(n, 2 * r)
    s2r = len(big)
    specs = preordering_products(X, r, kind=certificate)
    psd_specs = [s for s in specs if s.constraint_kind == "psd"]
    zero_specs = [s for s in specs if s.constraint_kind == "zero"]
    scalar_specs = [s for s in specs if s.constraint_kind == "scalar_zero"]

    blocks = [Block("free", s2r)]
    offsets = [0]
    for spec in psd_specs:
        size = count_monomials(n, spec.matrix_order)
        if size > max_psd_size:
            raise ValueError(f"PSD block of size {size} exceeds cap {max_psd_size}")
        offsets.append(offsets[-1] + blocks[-1].scalar_len)
        blocks.append(Block("psd", size))

    rows, cols, vals, rhs = [], [], [], []

    def add_entry(row, col, val):
        rows.append(row)
        cols.append(col)
        vals.append(val)

    # y_0 = 1
    add_entry(0, 0, 1.0)
    rhs.append(1.0)
    row = 1

    for spec, off in zip(psd_specs, offsets[1:]):
        rb = monomial_basis(n, spec.matrix_order)
        size = len(rb)
        p = 0
        for i in range(size):
            ai = rb.monomial(i)
            for j in range(i, size):
                aj = rb.monomial(j)
                w = 1.0 if i == j else np.sqrt(2.0)
                add_entry(row, off + p, 1.0)
                for gamma, cg in spec.weight.terms.items():
                    add_entry(row, _monomial_sum_index(big, ai, aj, gamma), -w * cg)
                rhs.append(0.0)
                row += 1
                p += 1

    for spec in zero_specs:
        gb = monomial_basis(n, 2 * spec.matrix_order)
        for gamma in gb.exponents:
            for delta, ch in spec.weight.terms.items():
                add_entry(row, _monomial_sum_index(big, gamma, delta), ch)
            rhs.append(0.0)
            row += 1

    for spec in scalar_specs:
        for delta, ch in spec.weight.terms.items():
            add_entry(row, big.index(delta), ch)
        rhs.append(0.0)
        row += 1

    num_vars = sum(b.scalar_len for b in blocks)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(row, num_vars))
    c = np.zeros(num_vars)
    for alpha, cf in f.terms.items():
        c[big.index(alpha)] = cf
    program = ConicProgram(tuple(blocks), c, A, np.array(rhs))
    return Relaxation(program=program, kind=HierarchyKind(certificate, "moment"),
                      level=r, objective=f, domain=X, psd_specs=psd_specs,
                      y_slice=slice(0, s2r))


def build_sos_relaxation(f: Polynomial, X: SemiAlgebraicSet, certificate: str,
                         r: int, max_psd_size: int = 400) -> Relaxation:
    """Level-r SOS program: maximize c with f - c in the chosen certificate cone,
    written as coefficient matching over the monomials of degree <= 2r."""
    _check_level(f, X, r)
    n = X.n
    big = monomial_basis(n, 2 * r)
    specs = preordering_products(X, r, kind=certificate)
    psd_specs = [s for s in specs if s.constraint_kind == "psd"]
    eq_specs = [s for s in specs if s.constraint_kind in ("zero", "scalar_zero")]

    # free block: [c, tau coefficient vectors...] for T/Q; nonneg taus for R
    tau_layout = []
    free_len = 1
    nonneg_len = 0
    for spec in eq_specs:
        if spec.constraint_kind == "zero":
            size = count_monomials(n, 2 * spec.matrix_order)
            tau_layout.append((spec, slice(free_len, free_len + size)))
            free_len += size
        else:
            tau_layout.append((spec, nonneg_len))
            nonneg_len += 1

    blocks = [Block("free", free_len)]
    if nonneg_len:
        blocks.append(Block("nonneg", nonneg_len))
    gram_offsets = []
    offset = sum(b.scalar_len for b in blocks)
    for spec in psd_specs:
        size = count_monomials(n, spec.matrix_order)
        if size > max_psd_size:
            raise ValueError(f"PSD block of size {size} exceeds cap {max_psd_size}")
        gram_offsets.append(offset)
        blocks.append(Block("psd", size))
        offset += blocks[-1].scalar_len

    nonneg_offset = free_len if nonneg_len else None
    row_of = {alpha: i for i, alpha in enumerate(big.exponents)}
    rows, cols, vals = [], [], []

    def add_entry(alpha, col, val):
        rows.append(row_of[alpha])
        cols.append(col)
        vals.append(val)

    zero = tuple([0] * n)
    add_entry(zero, 0, 1.0)

    for spec, loc in tau_layout:
        if spec.constraint_kind == "zero":
            tb = monomial_basis(n, 2 * spec.matrix_order)
            for k, delta in enumerate(tb.exponents):
                for eta, ch in spec.weight.terms.items():
                    add_entry(tuple(a + b for a, b in zip(delta, eta)),
                              loc.start + k, ch)
        else:
            for eta, ch in spec.weight.terms.items():
                add_entry(eta, nonneg_offset + loc, ch)

    for spec, off in zip(psd_specs, gram_offsets):
        rb = monomial_basis(n, spec.matrix_order)
        size = len(rb)
        p = 0
        for i in range(size):
            ai = rb.monomial(i)
            for j in range(i, size):
                aj = rb.monomial(j)
                # G[i,j] = svec_p (i==j) or svec_p / sqrt2, appearing twice off-diagonal
                scale = 1.0 if i == j else np.sqrt(2.0)
                for gamma, cg in spec.weight.terms.items():
                    alpha = tuple(a + b + g for a, b, g in zip(ai, aj, gamma))
                    add_entry(alpha, off + p, scale * cg)
                p += 1

    b_vec = np.zeros(len(big))
    for alpha, cf in f.terms.items():
        b_vec[row_of[alpha]] = cf
    num_vars = sum(b.scalar_len for b in blocks)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(big), num_vars))
    c_vec = np.zeros(num_vars)
    c_vec[0] = -1.0  # maximize c
    program = ConicProgram(tuple(blocks), c_vec, A, b_vec)
    return Relaxation(program=program, kind=HierarchyKind(certificate, "sos"),
                      level=r, objective=f, domain=X, psd_specs=psd_specs,
                      c_index=0, tau_layout=tau_layout)


def solve_relaxation(rel: Relaxation, opts: Optional[SolveOptions] = None):
    sol = sdpcore.solve(rel.program, opts)
    return rel.value(sol), sol


# ----------------------------------------------------------------------------
# certificates


@dataclass
class CertificateTerm:
    weight: Polynomial
    gram: np.ndarray
    contribution: Polynomial


@dataclass
class CertificateExtract:
    bound: float
    terms: list
    residual: float


def certificate_extract(sol: Solution, rel: Relaxation) -> CertificateExtract:
    """Gram matrices per certificate term and the l1 reconstruction residual
    of f - c* against the recovered representation."""
    if rel.kind.side != "sos":
        raise ValueError("certificates live on the SOS side")
    if sol.status != "optimal":
        raise ValueError(f"cannot extract a certificate from status {sol.status!r}")
    n = rel.domain.n
    cval = float(sol.x[rel.c_index])
    blocks = sol.blocks
    # locate gram blocks: they are the psd blocks in declaration order
    gram_blocks = [B for B, blk in zip(blocks, rel.program.blocks) if blk.kind == "psd"]
    terms = []
    total = Polynomial.zero(n)
    for spec, G in zip(rel.psd_specs, gram_blocks):
        rb = monomial_basis(n, spec.matrix_order)
        sq = Polynomial.zero(n)
        for i in range(len(rb)):
            for j in range(len(rb)):
                if G[i, j] != 0.0:
                    ai, aj = rb.monomial(i), rb.monomial(j)
                    sq = sq + Polynomial.monomial(n, tuple(a + b for a, b in zip(ai, aj)), G[i, j])
        contribution = spec.weight * sq
        terms.append(CertificateTerm(spec.weight, G, contribution))
        total = total + contribution
    nonneg_vals = None
    for B, blk in zip(blocks, rel.program.blocks):
        if blk.kind == "nonneg":
            nonneg_vals = B
    for spec, loc in rel.tau_layout:
        if spec.constraint_kind == "zero":
            tb = monomial_basis(n, 2 * spec.matrix_order)
            tau = Polynomial.from_vector(tb, sol.x[loc])
            contribution = spec.weight * tau
        else:
            contribution = spec.weight * float(nonneg_vals[loc])
        terms.append(CertificateTerm(spec.weight, np.empty((0, 0)), contribution))
        total = total + contribution
    residual = l1_norm(rel.objective - Polynomial.constant(n, cval) - total)
    return CertificateExtract(bound=cval, terms=terms, residual=residual)


# ----------------------------------------------------------------------------
# ladders and reference minima


@dataclass
class RelaxationResult:
    level: int
    certificate: str
    side: str
    value: float
    status: str
    gap: float
    seconds: float
    iterations: int


@dataclass
class LadderReport:
    results: list
    monotonicity_violations: list


def run_ladder(f: Polynomial, X: SemiAlgebraicSet, certificate: str,
               levels: Sequence[int], opts: Optional[SolveOptions] = None,
               sides: Sequence[str] = ("moment", "sos"),
               tol: float = 1e-7, workers: int = 1) -> LadderReport:
    """Solve the chosen hierarchy at each level, both sides by default.

    Levels are independent solves; with workers > 1 they run on a thread pool
    (the backing linear algebra releases the interpreter lock), and results are
    collected in submission order so output stays deterministic.
    """
    tasks = [(r, side) for r in sorted(levels) for side in sides]

    def run_one(task):
        r, side = task
        build = build_moment_relaxation if side == "moment" else build_sos_relaxation
        start = time.perf_counter()
        rel = build(f, X, certificate, r)
        value, sol = solve_relaxation(rel, opts)
        elapsed = time.perf_counter() - start
        return RelaxationResult(level=r, certificate=certificate, side=side,
                                value=value, status=sol.status, gap=np.nan,
                                seconds=elapsed, iterations=sol.iterations)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, tasks))
    else:
        results = [run_one(t) for t in tasks]

    by_key = {(res.level, res.side): res for res in results}
    violations = []
    last = {}
    for r in sorted(levels):
        values = {}
        for side in sides:
            res = by_key[(r, side)]
            values[side] = res.value
            if side in last and res.value < last[side] - 2 * tol:
                violations.append(f"{certificate}/{side}: level {r} value "
                                  f"{res.value:.9g} below previous {last[side]:.9g}")
            last[side] = res.value
        if len(values) == 2:
            gap = abs(values["moment"] - values["sos"])
            by_key[(r, "moment")].gap = gap
            by_key[(r, "sos")].gap = gap
    return LadderReport(results=results, monotonicity_violations=violations)


def estimate_minimum(f: Polynomial, X: SemiAlgebraicSet, samples: int = 4096,
                     starts: int = 8, seed: int = 0,
                     return_point: bool = False):
    """Grid/sample + multistart local descent upper estimate of min f over X.

    The returned value is the objective at the best feasible point found, so it
    always upper-bounds the true minimum; it is documented as an estimate.
    """
    rng = np.random.default_rng(seed)
    lo, hi = X.bounding_box()
    pts = rng.uniform(lo, hi, size=(samples, X.n))
    from momentlab.semialg import violation_many

    keep = pts[violation_many(X, pts) <= 1e-9]
    try:
        sampled = rejection_sample(X, max(starts * 4, 32), seed=seed + 1)
        keep = np.vstack([keep, sampled]) if keep.size else sampled
    except RuntimeError:
        pass
    if keep.size == 0:
        raise RuntimeError(f"could not find feasible points of {X.name}")
    vals = f.eval_many(keep)
    order = np.argsort(vals)
    best = float(vals[order[0]])
    best_point = keep[order[0]]

    from momentlab.semialg import local_extremum

    for idx in order[:starts]:
        polished = local_extremum(f, X, keep[idx], maximize=False)
        if polished is not None and polished[1] < best:
            best_point, best = polished
    if return_point:
        return best, np.asarray(best_point, dtype=float)
    return best


def estimate_maximum(f: Polynomial, X: SemiAlgebraicSet, **kw) -> float:
    return -estimate_minimum(-f, X, **kw)
