"""Semi-implicit time stepping for the Ginzburg-Landau equation.

The equation y_t = (1+ib) Lap y - (1+ic)|y|^2 y + f is advanced with the
stiff dispersion treated implicitly through a sparse factorization reused
every step, and the cubic term handled explicitly:

* ``imex_be``: backward Euler on the linear part, cubic frozen at the old
  state (first order);
* ``imex_cn``: Crank-Nicolson on the linear part with Strang splitting
  around the cubic flow (second order).  The cubic subflow
  y' = -(1+ic)|y|^2 y is integrated exactly:
  y -> y (1 + 2 tau |y|^2)^(-(1+ic)/2),
  which is an unconditional contraction of |y|.

A stiffness cap dt_sub * max|y|^2 <= 1/2 is enforced adaptively by halving
the internal substep (macro slices stay on the uniform time grid).

The L2 norm over the quadrature weights is non-increasing for homogeneous
boundary data and zero source: the (mirrored-ghost) discrete Laplacian is
self-adjoint and nonpositive in the trapezoid-weighted inner product, the
Crank-Nicolson amplification of each mode has modulus <= 1, and the cubic
flow shrinks |y| pointwise.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .grid import GridError, SpaceTimeGrid, grad

VALID_SOLVER_BC = ("dirichlet0", "neumann0", "dirichlet_data", "neumann_data")
STIFFNESS_CAP = 0.5


class SolverError(RuntimeError):
    pass


@dataclass
class SolveConfig:
    b: float = 0.0
    c: float = 0.0
    bc: str = "dirichlet0"
    scheme: str = "imex_cn"
    bc_data: object | None = None     # callable t -> values at boundary nodes
    source: object | None = None      # callable t -> (ny+1, nx+1) complex array
    max_halvings: int = 10

    def __post_init__(self):
        if self.bc not in VALID_SOLVER_BC:
            raise GridError(f"bc must be one of {VALID_SOLVER_BC}")
        if self.scheme not in ("imex_be", "imex_cn"):
            raise GridError("scheme must be 'imex_be' or 'imex_cn'")
        if self.bc.endswith("_data") and self.bc_data is None:
            raise GridError(f"bc {self.bc!r} requires bc_data")


# ---------------------------------------------------------------------------
# linear system assembly
# ---------------------------------------------------------------------------

@dataclass
class _LinearOps:
    """Laplacian restricted to unknown nodes plus boundary coupling."""

    unknown_mask: np.ndarray        # bool over grid nodes
    idx_of_node: np.ndarray         # -1 where not unknown
    L: sps.csr_matrix               # unknowns x unknowns
    B: sps.csr_matrix | None        # unknowns x boundary samples (Dirichlet)
    b_nodes: tuple | None           # (iy, ix) arrays of Dirichlet bnd nodes
    neumann_rhs_scale: np.ndarray | None  # per-unknown factor for flux data
    _factor_cache: dict = field(default_factory=dict)


def _square_dirichlet_ops(grid: SpaceTimeGrid) -> _LinearOps:
    ny1, nx1 = grid.ny + 1, grid.nx + 1
    unknown = grid.interior_mask
    idx = -np.ones((ny1, nx1), dtype=np.int64)
    idx[unknown] = np.arange(np.count_nonzero(unknown))
    biy, bix = np.nonzero(grid.boundary_mask)
    bidx = -np.ones((ny1, nx1), dtype=np.int64)
    bidx[biy, bix] = np.arange(biy.size)

    n = np.count_nonzero(unknown)
    h2 = grid.h ** 2
    rowsL, colsL, valsL = [], [], []
    rowsB, colsB, valsB = [], [], []
    for iy, ix in zip(*np.nonzero(unknown)):
        r = idx[iy, ix]
        rowsL.append(r); colsL.append(r); valsL.append(-4.0 / h2)
        for jy, jx in ((iy, ix - 1), (iy, ix + 1), (iy - 1, ix), (iy + 1, ix)):
            if unknown[jy, jx]:
                rowsL.append(r); colsL.append(idx[jy, jx]); valsL.append(1.0 / h2)
            else:
                rowsB.append(r); colsB.append(bidx[jy, jx]); valsB.append(1.0 / h2)
    L = sps.csr_matrix((valsL, (rowsL, colsL)), shape=(n, n))
    B = sps.csr_matrix((valsB, (rowsB, colsB)), shape=(n, biy.size))
    return _LinearOps(unknown_mask=unknown, idx_of_node=idx, L=L, B=B,
                      b_nodes=(biy, bix), neumann_rhs_scale=None)


def _square_neumann_ops(grid: SpaceTimeGrid) -> _LinearOps:
    ny1, nx1 = grid.ny + 1, grid.nx + 1
    unknown = np.ones((ny1, nx1), dtype=bool)
    idx = np.arange(ny1 * nx1, dtype=np.int64).reshape(ny1, nx1)
    h2 = grid.h ** 2
    rows, cols, vals = [], [], []
    flux = np.zeros(ny1 * nx1)
    for iy in range(ny1):
        for ix in range(nx1):
            r = idx[iy, ix]
            rows.append(r); cols.append(r); vals.append(-4.0 / h2)
            for jy, jx in ((iy, ix - 1), (iy, ix + 1), (iy - 1, ix), (iy + 1, ix)):
                if 0 <= jy < ny1 and 0 <= jx < nx1:
                    rows.append(r); cols.append(idx[jy, jx]); vals.append(1.0 / h2)
                else:
                    # mirrored ghost: neighbor reflected across the wall
                    my, mx = 2 * iy - jy, 2 * ix - jx
                    rows.append(r); cols.append(idx[my, mx]); vals.append(1.0 / h2)
                    flux[r] += 2.0 / grid.h  # inhomogeneous flux data weight
    L = sps.csr_matrix((vals, (rows, cols)), shape=(ny1 * nx1, ny1 * nx1))
    return _LinearOps(unknown_mask=unknown, idx_of_node=idx, L=L, B=None,
                      b_nodes=None, neumann_rhs_scale=flux)


def _disk_dirichlet_ops(grid: SpaceTimeGrid) -> _LinearOps:
    # Shortley-Weller at cut nodes, homogeneous boundary value on the circle
    ny1, nx1 = grid.ny + 1, grid.nx + 1
    act = grid.active_mask
    unknown = act.copy()
    idx = -np.ones((ny1, nx1), dtype=np.int64)
    idx[unknown] = np.arange(np.count_nonzero(unknown))
    h = grid.h
    rows, cols, vals = [], [], []

    def intercept(iy, ix, axis, d):
        if axis == 0:  # x direction
            c_par, c_perp = grid.x1_nodes[ix], grid.x2_nodes[iy]
        else:
            c_par, c_perp = grid.x2_nodes[iy], grid.x1_nodes[ix]
        root = np.sqrt(max(1.0 - c_perp * c_perp, 0.0))
        return min(max((root - d * c_par) / h, 1e-3), 1.0)

    for iy, ix in zip(*np.nonzero(unknown)):
        r = idx[iy, ix]
        diag = 0.0
        for axis, (jm, jp) in enumerate((((iy, ix - 1), (iy, ix + 1)),
                                         ((iy - 1, ix), (iy + 1, ix)))):
            has_m = act[jm]
            has_p = act[jp]
            if has_m and has_p:
                diag += -2.0 / h ** 2
                for j in (jm, jp):
                    rows.append(r); cols.append(idx[j]); vals.append(1.0 / h ** 2)
            else:
                a_p = 1.0 if has_p else intercept(iy, ix, axis, +1)
                a_m = 1.0 if has_m else intercept(iy, ix, axis, -1)
                diag += -2.0 / (a_p * a_m * h ** 2)
                if has_p:
                    rows.append(r); cols.append(idx[jp])
                    vals.append(2.0 / (a_p * (a_p + a_m) * h ** 2))
                if has_m:
                    rows.append(r); cols.append(idx[jm])
                    vals.append(2.0 / (a_m * (a_p + a_m) * h ** 2))
        rows.append(r); cols.append(r); vals.append(diag)
    n = np.count_nonzero(unknown)
    L = sps.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return _LinearOps(unknown_mask=unknown, idx_of_node=idx, L=L, B=None,
                      b_nodes=None, neumann_rhs_scale=None)


def build_linear_ops(grid: SpaceTimeGrid, bc: str) -> _LinearOps:
    key = ("linear_ops", bc if not bc.endswith("_data") else bc.split("_")[0] + "0")
    cache = getattr(grid, "_op_cache", None)
    if cache is None:
        cache = {}
        grid._op_cache = cache
    if key not in cache:
        kind = key[1]
        if grid.spec.shape == "unit_square":
            if kind == "dirichlet0":
                cache[key] = _square_dirichlet_ops(grid)
            else:
                cache[key] = _square_neumann_ops(grid)
        else:
            if kind != "dirichlet0":
                raise GridError("unit_disk solver supports Dirichlet only")
            cache[key] = _disk_dirichlet_ops(grid)
    return cache[key]


def _factorized(ops: _LinearOps, kappa: complex):
    """LU (with iterative fallback) of (I - kappa L), cached per kappa."""
    key = kappa
    if key in ops._factor_cache:
        return ops._factor_cache[key]
    n = ops.L.shape[0]
    A = (sps.identity(n, dtype=complex, format="csr") - kappa * ops.L).tocsc()
    try:
        lu = spla.splu(A)
        solve = lu.solve
    except RuntimeError:
        def solve(rhs, A=A):
            x, info = spla.gmres(A, rhs, rtol=1e-10, maxiter=2000)
            if info != 0:
                res = np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
                raise SolverError(f"linear solver failed: info={info}, rel residual={res:.3e}")
            return x
    ops._factor_cache[key] = solve
    return solve


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def _cubic_flow(y: np.ndarray, tau: float, c: float) -> np.ndarray:
    """Exact flow of y' = -(1+ic)|y|^2 y over time tau >= 0."""
    m = 1.0 + 2.0 * tau * np.abs(y) ** 2
    return y * m ** (-0.5) * np.exp(-0.5j * c * np.log(m))


def _boundary_node_values(grid, cfg, t):
    if cfg.bc == "dirichlet0":
        biy, bix = np.nonzero(grid.boundary_mask)
        return np.zeros(biy.size, dtype=complex)
    return np.asarray(cfg.bc_data(t), dtype=complex)


def _gather(arr, mask):
    return arr[mask]


def _scatter(grid, ops, vec, bvals, cfg):
    out = grid.zeros()
    out[ops.unknown_mask] = vec
    if grid.spec.shape == "unit_square" and cfg.bc.startswith("dirichlet"):
        biy, bix = np.nonzero(grid.boundary_mask)
        out[biy, bix] = bvals
    return out


def _substep(y, t, dt_sub, cfg, grid, ops):
    """One linear(+source) update over [t, t+dt_sub] at the unknown nodes."""
    kb = 1.0 + 1j * cfg.b
    yv = _gather(y, ops.unknown_mask)

    def src(tt):
        if cfg.source is None:
            return 0.0
        return _gather(np.asarray(cfg.source(tt), dtype=complex), ops.unknown_mask)

    def bnd(tt):
        if cfg.bc.startswith("dirichlet") and ops.B is not None:
            return _boundary_node_values(grid, cfg, tt)
        return None

    def flux(tt):
        # bc_data returns d y/d nu over grid nodes (only boundary rows count)
        if cfg.bc == "neumann_data":
            return np.asarray(cfg.bc_data(tt), dtype=complex).ravel()
        return None

    if cfg.scheme == "imex_cn":
        kappa = 0.5 * dt_sub * kb
        solve = _factorized(ops, kappa)
        rhs = yv + kappa * (ops.L @ yv)
        g0, g1 = bnd(t), bnd(t + dt_sub)
        if g0 is not None:
            rhs = rhs + kappa * (ops.B @ (g0 + g1))
        f0, f1 = flux(t), flux(t + dt_sub)
        if f0 is not None:
            rhs = rhs + kappa * ops.neumann_rhs_scale * (f0 + f1)
        rhs = rhs + 0.5 * dt_sub * (src(t) + src(t + dt_sub))
        new = solve(rhs)
        return _scatter(grid, ops, new, g1, cfg)

    # imex_be: implicit linear, explicit cubic folded in by the caller
    kappa = dt_sub * kb
    solve = _factorized(ops, kappa)
    rhs = yv + dt_sub * src(t + dt_sub)
    g1 = bnd(t + dt_sub)
    if g1 is not None:
        rhs = rhs + kappa * (ops.B @ g1)
    f1 = flux(t + dt_sub)
    if f1 is not None:
        rhs = rhs + kappa * ops.neumann_rhs_scale * f1
    new = solve(rhs)
    return _scatter(grid, ops, new, g1, cfg)


def required_substeps(state: np.ndarray, dt: float, max_halvings: int) -> int:
    """Smallest power-of-two substep count meeting dt_sub * max|y|^2 <= 1/2."""
    n_sub = 1
    peak = float(np.abs(state).max()) ** 2
    for _ in range(max_halvings + 1):
        if (dt / n_sub) * peak <= STIFFNESS_CAP:
            return n_sub
        n_sub *= 2
    raise SolverError("stiffness cap not reachable within max_halvings")


def step(state: np.ndarray, t: float, cfg: SolveConfig, grid: SpaceTimeGrid,
         n_sub: int | None = None) -> np.ndarray:
    """Advance one macro step of size grid.dt from time t.

    The stiffness cap dt_sub * max|y|^2 <= 1/2 triggers internal halving;
    NaN/Inf in the result aborts.
    """
    grid.check_field(state, "state")
    ops = build_linear_ops(grid, cfg.bc)
    dt = grid.dt
    if n_sub is None:
        n_sub = required_substeps(state, dt, cfg.max_halvings)
    dt_sub = dt / n_sub

    y = state
    for k in range(n_sub):
        tk = t + k * dt_sub
        if cfg.scheme == "imex_cn":
            y = _cubic_flow(y, 0.5 * dt_sub, cfg.c)
            y = _substep(y, tk, dt_sub, cfg, grid, ops)
            y = _cubic_flow(y, 0.5 * dt_sub, cfg.c)
            if cfg.bc.startswith("dirichlet") and grid.spec.shape == "unit_square":
                # reimpose the trace the cubic half-step perturbed
                biy, bix = np.nonzero(grid.boundary_mask)
                y[biy, bix] = _boundary_node_values(grid, cfg, tk + dt_sub)
        else:
            cubic = -(1 + 1j * cfg.c) * np.abs(y) ** 2 * y
            y = _substep(y + dt_sub * cubic, tk, dt_sub, cfg, grid, ops)
        if not np.all(np.isfinite(y[grid.active_mask])):
            raise SolverError(f"non-finite state at t={tk + dt_sub:.6g}")
    return y


@dataclass
class SolveResult:
    Y: np.ndarray                 # (nt+1, ny+1, nx+1)
    l2_norms: np.ndarray          # (nt+1,)
    substeps: np.ndarray          # (nt,)

    @property
    def trajectory(self):
        return self.Y


def solve(y0: np.ndarray, cfg: SolveConfig, grid: SpaceTimeGrid) -> SolveResult:
    """March nt macro steps, recording slices and per-step diagnostics."""
    y0 = np.asarray(y0, dtype=complex)
    grid.check_field(y0, "initial data")
    wsp = grid.quad_weights_space
    Y = np.empty((grid.nt + 1, grid.ny + 1, grid.nx + 1), dtype=complex)
    y = y0.copy()
    if cfg.bc == "dirichlet0" and grid.spec.shape == "unit_square":
        biy, bix = np.nonzero(grid.boundary_mask)
        y[biy, bix] = 0.0
    Y[0] = y
    norms = [float(np.sqrt(np.sum(wsp * np.abs(y) ** 2)))]
    subs = []
    for k in range(grid.nt):
        n_sub = required_substeps(y, grid.dt, cfg.max_halvings)
        y = step(y, grid.t_nodes[k], cfg, grid, n_sub=n_sub)
        Y[k + 1] = y
        norms.append(float(np.sqrt(np.sum(wsp * np.abs(y) ** 2))))
        subs.append(n_sub)
    return SolveResult(Y=Y, l2_norms=np.array(norms), substeps=np.array(subs))


# ---------------------------------------------------------------------------
# diagnostics and manufactured sources
# ---------------------------------------------------------------------------

def _grad_energy(y: np.ndarray, grid: SpaceTimeGrid) -> float:
    """Discrete H1 seminorm paired with the 5-point Laplacian.

    On the square this is the forward-difference face energy with trapezoid
    row weights, for which summation by parts against the stencil Laplacian
    is exact (both Dirichlet and mirrored-ghost Neumann).  On the disk the
    centered-gradient quadrature energy is used instead.
    """
    if grid.spec.shape == "unit_square":
        h = grid.h
        w_row = np.full(grid.ny + 1, h)
        w_row[0] = w_row[-1] = h / 2
        w_col = np.full(grid.nx + 1, h)
        w_col[0] = w_col[-1] = h / 2
        ex = np.sum(w_row[:, None] * np.abs(np.diff(y, axis=-1)) ** 2) / h
        ey = np.sum(w_col[None, :] * np.abs(np.diff(y, axis=-2)) ** 2) / h
        return float(ex + ey)
    g1, g2 = grad(y, grid)
    return float(np.sum(grid.quad_weights_space
                        * (np.abs(g1) ** 2 + np.abs(g2) ** 2)))


def energy_balance(Y: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Normalized residuals of the discrete energy identity per step.

    residual_k = | (||y_{k+1}||^2 - ||y_k||^2) / (2 dt)
                  + ||grad y_{k+1/2}||^2 + ||y_{k+1/2}||_{L4}^4 | / scale_k

    with the gradient energy taken in the seminorm paired with the stencil
    Laplacian, so the linear Crank-Nicolson flow contributes no spatial
    defect and the residual isolates the time-discretization error.
    """
    Y = grid.check_field(np.asarray(Y, dtype=complex), "trajectory")
    wsp = grid.quad_weights_space
    dt = grid.dt
    out = np.empty(Y.shape[0] - 1)
    for k in range(Y.shape[0] - 1):
        n1 = float(np.sum(wsp * np.abs(Y[k + 1]) ** 2))
        n0 = float(np.sum(wsp * np.abs(Y[k]) ** 2))
        ymid = 0.5 * (Y[k] + Y[k + 1])
        gsq = _grad_energy(ymid, grid)
        l4 = float(np.sum(wsp * np.abs(ymid) ** 4))
        ddt = (n1 - n0) / (2 * dt)
        scale = max(abs(ddt), gsq, l4, 1e-300)
        out[k] = abs(ddt + gsq + l4) / scale
    return out


def manufactured_source(field, grid: SpaceTimeGrid, coeffs) -> np.ndarray:
    """f = F y* sampled analytically on the space-time grid."""
    fn = manufactured_source_fn(field, coeffs)
    out = np.empty((grid.nt + 1, grid.ny + 1, grid.nx + 1), dtype=complex)
    pts = np.stack([grid.X1, grid.X2], axis=-1)
    for k, t in enumerate(grid.t_nodes):
        out[k] = fn(t, pts)
    out[:, ~grid.active_mask] = 0.0
    return out


def manufactured_source_fn(field, coeffs):
    """Callable (t, points) -> F y*(t, points) from analytic derivatives."""
    b, c = coeffs.b, coeffs.c

    def fn(t, pts):
        v = field.value(t, pts)
        return (field.dt(t, pts) - (1 + 1j * b) * field.lap(t, pts)
                + (1 + 1j * c) * np.abs(v) ** 2 * v)

    return fn


def grid_source(field, grid: SpaceTimeGrid, coeffs):
    """Solver-ready source callable t -> samples on grid nodes."""
    pts = np.stack([grid.X1, grid.X2], axis=-1)
    fn = manufactured_source_fn(field, coeffs)

    def src(t):
        out = fn(t, pts)
        out[~grid.active_mask] = 0.0
        return out

    return src


def dirichlet_data_from(field, grid: SpaceTimeGrid):
    """Boundary-node trace callable for dirichlet_data runs (square grids)."""
    biy, bix = np.nonzero(grid.boundary_mask)
    pts = np.stack([grid.X1[biy, bix], grid.X2[biy, bix]], axis=-1)

    def data(t):
        return field.value(t, pts)

    return data


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_MAGIC = b"GLCTRAJ1"


def save_trajectory(path, Y: np.ndarray, grid: SpaceTimeGrid) -> None:
    """Binary trajectory: header (shape, nx, ny, nt, T) + row-major complex128 LE."""
    Y = np.ascontiguousarray(np.asarray(Y, dtype="<c16"))
    shape_code = 0 if grid.spec.shape == "unit_square" else 1
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIId", shape_code, grid.nx, grid.ny, grid.nt, grid.T))
        fh.write(Y.tobytes())


def load_trajectory(path):
    """Returns (Y, meta dict)."""
    header = "<IIIId"
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise SolverError("not a trajectory file")
        shape_code, nx, ny, nt, T = struct.unpack(
            header, fh.read(struct.calcsize(header)))
        data = fh.read()
    Y = np.frombuffer(data, dtype="<c16").reshape(nt + 1, ny + 1, nx + 1).copy()
    meta = {"shape": "unit_square" if shape_code == 0 else "unit_disk",
            "nx": nx, "ny": ny, "nt": nt, "T": T}
    return Y, meta


def export_trajectory_csv(path, Y: np.ndarray, grid: SpaceTimeGrid) -> None:
    """CSV trajectory for small grids: t, x1, x2, re, im."""
    import csv

    if (grid.nx + 1) * (grid.ny + 1) * (grid.nt + 1) > 2_000_000:
        raise SolverError("trajectory too large for CSV export")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x1", "x2", "re", "im"])
        for k, t in enumerate(grid.t_nodes):
            for iy in range(grid.ny + 1):
                for ix in range(grid.nx + 1):
                    w.writerow([format(t, ".17g"),
                                format(grid.X1[iy, ix], ".17g"),
                                format(grid.X2[iy, ix], ".17g"),
                                format(Y[k, iy, ix].real, ".17g"),
                                format(Y[k, iy, ix].imag, ".17g")])
