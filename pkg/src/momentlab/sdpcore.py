"""Dense conic solver for equality-constrained programs over PSD cones,
nonnegative orthants, and free variables.

The solver is operator splitting (ADMM) on

    minimize  c'x   subject to  Ax = b,  x in K,

with the splitting x = z: the x-update is an equality-constrained quadratic
step solved through one Cholesky factorization of A A' (reused across all
iterations and penalty updates), the z-update projects block-wise onto K, and
scaled dual updates close the loop. PSD blocks are stored in symmetric-packed
form with sqrt(2) off-diagonal scaling so the flattening is an isometry and
dual residuals keep their meaning.

Sized for desk-scale moment relaxations (PSD blocks up to a few hundred); a
solve call is single-threaded and deterministic given its options, and
distinct calls share no state.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

_SQRT2 = math.sqrt(2.0)


# ----------------------------------------------------------------------------
# blocks and symmetric packing


@dataclass(frozen=True)
class Block:
    kind: str  # psd | nonneg | free
    size: int  # matrix side for psd, vector length otherwise

    def __post_init__(self):
        if self.kind not in ("psd", "nonneg", "free"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("block size must be positive")

    @property
    def scalar_len(self) -> int:
        return self.size * (self.size + 1) // 2 if self.kind == "psd" else self.size


def packed_indices(size: int) -> tuple:
    """Upper-triangle (row, col) arrays in the row-major packed order."""
    rows, cols = [], []
    for i in range(size):
        for j in range(i, size):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def packed_weights(size: int) -> np.ndarray:
    rows, cols = packed_indices(size)
    return np.where(rows == cols, 1.0, _SQRT2)


def svec(M: np.ndarray) -> np.ndarray:
    size = M.shape[0]
    rows, cols = packed_indices(size)
    return M[rows, cols] * packed_weights(size)


def smat(v: np.ndarray, size: int) -> np.ndarray:
    rows, cols = packed_indices(size)
    vals = v / packed_weights(size)
    M = np.zeros((size, size))
    M[rows, cols] = vals
    M[cols, rows] = vals
    return M


def psd_project(M: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (eigenvalue clamping)."""
    M = np.asarray(M, dtype=float)
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > 1e-12 * scale:
        raise ValueError("matrix is not symmetric to within 1e-12")
    sym = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(sym)
    if w[0] >= 0:
        return sym
    out = (V * np.maximum(w, 0.0)) @ V.T
    return 0.5 * (out + out.T)


# ----------------------------------------------------------------------------
# program and solution containers


@dataclass(frozen=True)
class ConicProgram:
    """minimize c'x subject to Ax = b and x in the product cone of blocks."""

    blocks: tuple
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray

    def __post_init__(self):
        blocks = tuple(blk if isinstance(blk, Block) else Block(*blk) for blk in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        c = np.asarray(self.c, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        A = sp.csr_matrix(self.A, dtype=float)
        n = sum(blk.scalar_len for blk in blocks)
        if c.size != n:
            raise ValueError(f"objective length {c.size} != scalarized length {n}")
        if A.shape != (b.size, n):
            raise ValueError(f"constraint matrix shape {A.shape} incompatible with "
                             f"{b.size} rows and {n} columns")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.b.size

    def block_slices(self) -> list:
        out, offset = [], 0
        for blk in self.blocks:
            out.append(slice(offset, offset + blk.scalar_len))
            offset += blk.scalar_len
        return out

    def unpack(self, x: np.ndarray) -> list:
        vals = []
        for blk, sl in zip(self.blocks, self.block_slices()):
            seg = x[sl]
            vals.append(smat(seg, blk.size) if blk.kind == "psd" else seg.copy())
        return vals

    def dump(self, path) -> None:
        """Sparse text dump: header of block sizes, then nonzero c/b entries and
        A triplets, for cross-checking against external solvers."""
        buf = io.StringIO()
        buf.write("# momentlab conic program: minimize c'x s.t. Ax=b, x in K\n")
        buf.write("blocks " + " ".join(f"{blk.kind}:{blk.size}" for blk in self.blocks) + "\n")
        buf.write(f"dims {self.num_rows} {self.num_vars}\n")
        for name, vec in (("c", self.c), ("b", self.b)):
            for i, v in enumerate(vec):
                if v != 0.0:
                    buf.write(f"{name} {i} {v!r}\n")
        coo = self.A.tocoo()
        for i, j, v in zip(coo.row, coo.col, coo.data):
            buf.write(f"A {i} {j} {v!r}\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())


@dataclass
class Residuals:
    primal: float
    dual: float
    gap: float

    def worst(self) -> float:
        return max(self.primal, self.dual, self.gap)


@dataclass
class Solution:
    status: str  # optimal | max_iters | infeasible_certificate
    primal_value: float
    dual_value: float
    blocks: list
    x: np.ndarray
    y: np.ndarray
    residuals: Residuals
    iterations: int
    certificate_ray: Optional[np.ndarray] = None


@dataclass
class SolveOptions:
    tol: float = 1e-7
    max_iters: int = 100000
    rho: float = 1.0
    over_relax: float = 1.6
    check_every: int = 25
    adapt_every: int = 50
    stall_window: int = 500
    scale: bool = True
    warm: Optional[Solution] = None


# ----------------------------------------------------------------------------
# cone operations with precomputed packing indices


class _ConeOps:
    def __init__(self, blocks: Sequence[Block], slices):
        self.entries = []
        for blk, sl in zip(blocks, slices):
            if blk.kind == "psd":
                rows, cols = packed_indices(blk.size)
                inv_w = 1.0 / packed_weights(blk.size)
                self.entries.append((blk, sl, rows, cols, inv_w))
            else:
                self.entries.append((blk, sl, None, None, None))

    def project(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        for blk, sl, rows, cols, inv_w in self.entries:
            if blk.kind == "psd":
                seg = out[sl] * inv_w
                M = np.zeros((blk.size, blk.size))
                M[rows, cols] = seg
                M[cols, rows] = seg
                w, V = np.linalg.eigh(M)
                if w[0] < 0.0:
                    P = (V * np.maximum(w, 0.0)) @ V.T
                    out[sl] = P[rows, cols] / inv_w
            elif blk.kind == "nonneg":
                np.maximum(out[sl], 0.0, out=out[sl])
        return out

    def dist_dual_cone(self, v: np.ndarray) -> float:
        """Distance-like measure of v to K* (free components must vanish)."""
        worst = 0.0
        for blk, sl, rows, cols, inv_w in self.entries:
            seg = v[sl]
            if blk.kind == "psd":
                M = np.zeros((blk.size, blk.size))
                vals = seg * inv_w
                M[rows, cols] = vals
                M[cols, rows] = vals
                w = np.linalg.eigvalsh(M)
                worst = max(worst, float(np.linalg.norm(np.minimum(w, 0.0))))
            elif blk.kind == "nonneg":
                worst = max(worst, float(np.linalg.norm(np.minimum(seg, 0.0))))
            else:
                worst = max(worst, float(np.linalg.norm(seg)))
        return worst


def _equilibrate(program: ConicProgram, iters: int = 8):
    """Ruiz-style row/column equilibration. Column scaling is per-entry on free
    and nonneg blocks but uniform on each PSD block, preserving the cone."""
    A = program.A.tocsc().astype(float)
    m, n = A.shape
    d_row = np.ones(m)
    d_col = np.ones(n)
    slices = program.block_slices()
    for _ in range(iters):
        B = abs(A)
        rn = np.sqrt(B.max(axis=1).toarray().ravel())
        rn[rn == 0] = 1.0
        A = sp.diags(1.0 / rn) @ A
        d_row /= rn
        B = abs(A)
        cn = np.sqrt(B.max(axis=0).toarray().ravel())
        cn[cn == 0] = 1.0
        for blk, sl in zip(program.blocks, slices):
            if blk.kind == "psd":
                g = cn[sl]
                pos = g[g > 0]
                cn[sl] = np.exp(np.mean(np.log(pos))) if pos.size else 1.0
        A = A @ sp.diags(1.0 / cn)
        d_col /= cn
    return A.tocsr(), d_row, d_col


# ----------------------------------------------------------------------------
# main solve loop


def solve(program: ConicProgram, opts: Optional[SolveOptions] = None) -> Solution:
    opts = opts or SolveOptions()
    m, n = program.num_rows, program.num_vars
    slices = program.block_slices()
    cone = _ConeOps(program.blocks, slices)

    if opts.scale:
        A, d_row, d_col = _equilibrate(program)
    else:
        A, d_row, d_col = program.A.astype(float), np.ones(m), np.ones(n)
    b = d_row * program.b
    c = d_col * program.c
    b_scale = max(1.0, float(np.linalg.norm(b)))
    c_scale = max(1.0, float(np.linalg.norm(c)))
    b = b / b_scale
    c = c / c_scale

    AT = A.T.tocsr()
    gram = (A @ AT).toarray()
    ridge = 0.0
    chol = None
    for _ in range(4):
        try:
            chol = sla.cho_factor(gram + ridge * np.eye(m), lower=True)
            break
        except np.linalg.LinAlgError:
            ridge = max(ridge * 100.0, 1e-12 * max(1.0, float(np.trace(gram)) / m))
    if chol is None:
        raise np.linalg.LinAlgError("could not factor A A^T")

    rho = opts.rho
    z = np.zeros(n)
    u = np.zeros(n)
    if opts.warm is not None:
        z = (opts.warm.x / d_col) / b_scale
        slack = program.c - program.A.T @ opts.warm.y
        u = -(d_col * slack) / (c_scale * rho)

    def report(z_cur, nu_cur):
        x_orig = d_col * z_cur * b_scale
        y_orig = -c_scale * (d_row * nu_cur)
        pv = float(program.c @ x_orig)
        dv = float(program.b @ y_orig)
        rp = float(np.linalg.norm(program.A @ x_orig - program.b)
                   / (1.0 + np.linalg.norm(program.b)))
        rd = float(cone.dist_dual_cone(program.c - program.A.T @ y_orig)
                   / (1.0 + np.linalg.norm(program.c)))
        gap = abs(pv - dv) / (1.0 + abs(pv) + abs(dv))
        return x_orig, y_orig, pv, dv, Residuals(rp, rd, gap)

    nu = np.zeros(m)
    best = None
    stall_anchor = math.inf
    stall_count = 0
    status = "max_iters"
    certificate = None
    it = 0

    for it in range(1, opts.max_iters + 1):
        v = z - u
        rhs = A @ (rho * v - c) - rho * b
        nu = sla.cho_solve(chol, rhs)
        x = v - (c + AT @ nu) / rho
        x_hat = opts.over_relax * x + (1.0 - opts.over_relax) * z
        z_new = cone.project(x_hat + u)
        u = u + x_hat - z_new
        dz = float(np.linalg.norm(z_new - z))
        z = z_new

        if it % opts.check_every == 0 or it == opts.max_iters:
            x_orig, y_orig, pv, dv, res = report(z, nu)
            if best is None or res.worst() < best[5].worst():
                best = (x_orig, y_orig, pv, dv, it, res)
            if res.worst() <= opts.tol:
                status = "optimal"
                break
            if res.worst() > 0.5 * stall_anchor:
                stall_count += opts.check_every
            else:
                stall_anchor = res.worst()
                stall_count = 0
            if stall_count >= opts.stall_window:
                ray = _infeasibility_ray(program, cone, y_orig)
                if ray is not None:
                    status = "infeasible_certificate"
                    certificate = ray
                    break
                stall_count = 0
                stall_anchor = res.worst()

        if it % opts.adapt_every == 0:
            rp_s = float(np.linalg.norm(A @ z - b))
            rd_s = rho * dz
            if rp_s > 10.0 * rd_s and rho < 1e6:
                rho *= 2.0
                u /= 2.0
            elif rd_s > 10.0 * rp_s and rho > 1e-6:
                rho /= 2.0
                u *= 2.0

    if best is None:
        best = (*report(z, nu)[:4], it, report(z, nu)[4])
    x_orig, y_orig, pv, dv, _, res = best
    return Solution(status=status, primal_value=pv, dual_value=dv,
                    blocks=program.unpack(x_orig), x=x_orig, y=y_orig,
                    residuals=res, iterations=it, certificate_ray=certificate)


def _infeasibility_ray(program: ConicProgram, cone: _ConeOps,
                       y_candidate: np.ndarray) -> Optional[np.ndarray]:
    """Normalized improving-ray test: a y with A'y in K* and b'y < 0 certifies
    primal infeasibility."""
    nrm = float(np.linalg.norm(y_candidate))
    if nrm < 1e-12:
        return None
    for sgn in (1.0, -1.0):
        cand = sgn * y_candidate / nrm
        if (program.b @ cand) < -1e-9 and cone.dist_dual_cone(program.A.T @ cand) <= 1e-7:
            return cand
    return None
