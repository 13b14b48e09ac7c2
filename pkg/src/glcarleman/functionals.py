"""Both sides of the global Carleman inequalities, with lambda/mu scans.

Interior variant (weight family j1, observation on Q_omega):

    LHS = int_Q (lam phi)^{-1} theta^2 (|y_t|^2 + |Lap y|^2)
        + int_Q theta^2 (|y|^6 + |y|^2 |grad y|^2)
        + lam mu^2 int_Q theta^2 phi (lam^2 mu^2 phi^2 |y|^2 + |grad y|^2
                                      + lam phi |y|^4)
    RHS = int_Q theta^2 |G y|^2
        + lam^2 mu^2 int_{Q_omega} theta^2 phi^2 (lam mu^2 phi |y|^2 + |y|^4)

Boundary variant (family j2, Dirichlet trace, observation through the
normal derivative on Sigma_0):

    RHS = int_Q theta^2 |G y|^2
        + lam mu int_{Sigma_0} phi theta^2 (d psi2 / d nu) |dy/dnu|^2

Linear variants drop every cubic term and use |y_t - (1+ib) Lap y|^2 as the
source.

The inequality constants are existential, so every report carries the raw
bracket values of both sides and the ratio rhs/lhs; scans flag the smallest
lambda past which the ratio is stable (successive change <= 10%).

Numerics: theta^2 spans hundreds of orders of magnitude (for family j2 it
underflows doubles for every lambda > 1), so each (lambda, mu) cell is
evaluated with a common log-offset: weights exp(2 ell - log_scale) with
log_scale = max_Q 2 ell.  Both sides share the offset, leaving the ratio
exact; reported totals are the raw bracket times exp(-log_scale).
Integrands are assembled as exp(2 ell + log g - log_scale) with flush to
exact zero below -700, and quadrature sums are compensated.  Square corner
nodes are excluded from all weighted integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gloperator import GLCoeffs, apply_G, time_derivative
from .grid import GridError, SpaceTimeGrid, boundary_values, grad, laplacian
from .weights import CarlemanParams, FLUSH_LOG, eval_psi

DIRICHLET_TRACE_TOL = 1e-10
STABILIZATION_TOL = 0.10

VARIANTS = ("interior", "boundary", "linear_interior", "linear_boundary")


class FunctionalError(ValueError):
    pass


@dataclass
class CarlemanReport:
    variant: str
    lam: float
    mu: float
    lhs_total: float
    rhs_total: float
    lhs_breakdown: dict
    rhs_breakdown: dict
    ratio: float                 # rhs_total / lhs_total
    log_scale: float             # raw value = reported * exp(log_scale)
    degenerate: bool = False
    skipped: bool = False
    obs_negative: bool = False

    def as_row(self) -> dict:
        row = {"variant": self.variant, "lambda": self.lam, "mu": self.mu,
               "lhs_total": self.lhs_total, "rhs_total": self.rhs_total,
               "ratio": self.ratio, "log_scale": self.log_scale,
               "degenerate": int(self.degenerate), "skipped": int(self.skipped),
               "obs_negative": int(self.obs_negative)}
        for k, v in self.lhs_breakdown.items():
            row[f"lhs_{k}"] = v
        for k, v in self.rhs_breakdown.items():
            row[f"rhs_{k}"] = v
        return row


@dataclass
class TrajectoryData:
    """Stencil quantities of one trajectory, precomputed once per scan."""

    Y: np.ndarray
    abs2: np.ndarray
    yt_abs2: np.ndarray
    lap_abs2: np.ndarray
    grad_abs2: np.ndarray
    G_abs2: np.ndarray
    lin_src_abs2: np.ndarray      # |y_t - (1+ib) Lap y|^2
    dnu_abs2: np.ndarray          # |dy/dnu|^2 at boundary samples
    trace_max: float


def prepare_trajectory(Y: np.ndarray, grid: SpaceTimeGrid,
                       coeffs: GLCoeffs) -> TrajectoryData:
    Y = grid.check_field(np.asarray(Y, dtype=complex), "trajectory")
    yt = time_derivative(Y, grid.dt)
    lap = laplacian(Y, grid, "ghost_from_field")
    g1, g2 = grad(Y, grid)
    G = apply_G(Y, grid, coeffs, "ghost_from_field")
    lin = yt - (1 + 1j * coeffs.b) * lap
    dnu_abs2 = np.abs(boundary_normal_derivative(Y, grid)) ** 2
    trace = boundary_values(Y, grid)
    return TrajectoryData(
        Y=Y, abs2=np.abs(Y) ** 2, yt_abs2=np.abs(yt) ** 2,
        lap_abs2=np.abs(lap) ** 2,
        grad_abs2=np.abs(g1) ** 2 + np.abs(g2) ** 2,
        G_abs2=np.abs(G) ** 2,
        lin_src_abs2=np.abs(lin) ** 2,
        dnu_abs2=dnu_abs2,
        trace_max=float(np.abs(trace).max()),
    )


def boundary_normal_derivative(Y, grid):
    from .grid import normal_derivative
    return normal_derivative(Y, grid)


@dataclass
class WeightTables:
    """Per-(family, mu): spatial and temporal factors of the weight family."""

    params: CarlemanParams
    exp_mu_psi: np.ndarray       # grid nodes
    K: float
    sigma: np.ndarray            # interior time nodes (1..nt-1)
    b_exp_mu_psi: np.ndarray     # boundary samples
    b_dpsi_dnu: np.ndarray       # d psi / d nu at boundary samples

    def log_theta2(self):
        """2 ell on interior times, shape (nt-1, ny+1, nx+1), and its max."""
        two_ell = 2.0 * self.params.lam * (self.exp_mu_psi - self.K)[None] \
            * self.sigma[:, None, None]
        return two_ell

    def phi(self):
        return self.exp_mu_psi[None] * self.sigma[:, None, None]


def weight_tables(params: CarlemanParams, grid: SpaceTimeGrid) -> WeightTables:
    if abs(params.T - grid.T) > 1e-12 * grid.T:
        raise FunctionalError(
            f"weight horizon T={params.T} disagrees with grid T={grid.T}")
    pts = np.stack([grid.X1, grid.X2], axis=-1)
    psi = eval_psi(grid.spec, params.which_psi, pts, check_omega=False)
    t_int = grid.t_nodes[1:-1]
    bpts = grid.boundary_points
    bpsi = eval_psi(grid.spec, params.which_psi, bpts, check_omega=False)
    dnu = np.einsum("bi,bi->b", bpsi.grad_psi, grid.boundary_normals)
    return WeightTables(
        params=params,
        exp_mu_psi=np.exp(params.mu * psi.psi),
        K=float(np.exp(2 * params.mu * psi.sup)),
        sigma=1.0 / (t_int * (grid.T - t_int)),
        b_exp_mu_psi=np.exp(params.mu * bpsi.psi),
        b_dpsi_dnu=dnu,
    )


class _CellQuadrature:
    """Weighted integrals for one (lambda, mu) cell with a shared log offset."""

    def __init__(self, tables: WeightTables, grid: SpaceTimeGrid):
        self.grid = grid
        self.tables = tables
        two_ell = tables.log_theta2()
        lam = tables.params.lam
        self.b_two_ell_t = 2.0 * lam * (tables.b_exp_mu_psi - tables.K)
        # shared offset must dominate boundary samples too (psi peaks on Gamma
        # for the boundary family); 2 ell < 0 peaks at the smallest sigma
        b_max = float(self.b_two_ell_t.max() * tables.sigma.min()) \
            if tables.b_exp_mu_psi.size else -np.inf
        self.log_scale = max(float(two_ell.max()), b_max)
        self.two_ell = two_ell
        self.phi = tables.phi()
        self.wsp = grid.space_weights(exclude_corners=True)
        _, wt_full = grid.time_weights("Q")
        self.wt = wt_full[1:-1]          # endpoint integrands vanish (theta -> 0)

    def vol(self, g, phi_power: float = 0.0, inv_lam_phi: bool = False,
            mask=None) -> float:
        """Integral of theta^2 phi^power g (optionally 1/(lam phi)) over Q."""
        g = np.asarray(g, dtype=float)[1:-1]
        logw = self.two_ell - self.log_scale
        lam = self.tables.params.lam
        with np.errstate(divide="ignore"):
            logg = np.where(g > 0, np.log(np.where(g > 0, g, 1.0)), -np.inf)
            logphi = np.log(self.phi)
        arg = logw + logg + phi_power * logphi
        if inv_lam_phi:
            arg = arg - np.log(lam) - logphi
        vals = np.where(arg > FLUSH_LOG, np.exp(np.maximum(arg, FLUSH_LOG)), 0.0)
        wsp = self.wsp if mask is None else self.wsp * mask
        slice_sums = np.einsum("tij,ij->t", vals, wsp)
        return float(math.fsum((slice_sums * self.wt).tolist()))

    def boundary(self, g_b, phi_power: float = 1.0, signed_factor=None) -> float:
        """Integral over Sigma_0 of theta^2 phi^power [factor] g.

        g_b has shape (nt+1, nb); the signed factor (d psi/d nu) may make the
        integrand negative, so this path works with linear values, flushing
        magnitudes below the log window.
        """
        if self.grid.spec.gamma0 == "none":
            raise GridError("boundary term requested with gamma0 = 'none'")
        g = np.asarray(g_b, dtype=float)[1:-1]
        sig = self.tables.sigma[:, None]
        two_ell = self.b_two_ell_t[None, :] * sig - self.log_scale
        bphi = self.tables.b_exp_mu_psi[None, :] * sig
        with np.errstate(divide="ignore", over="ignore"):
            mag = np.abs(g)
            logmag = np.where(mag > 0, np.log(np.where(mag > 0, mag, 1.0)), -np.inf)
            arg = two_ell + logmag + phi_power * np.log(bphi)
        vals = np.where(arg > FLUSH_LOG, np.exp(np.maximum(arg, FLUSH_LOG)), 0.0)
        vals *= np.sign(g)
        if signed_factor is not None:
            vals = vals * signed_factor[None, :]
        per_t = vals @ self.grid.boundary_weights
        return float(math.fsum((per_t * self.wt).tolist()))


def _lhs_terms(cell: _CellQuadrature, data: TrajectoryData, lam, mu,
               cubic: bool) -> dict:
    out = {
        "energy_t": cell.vol(data.yt_abs2, inv_lam_phi=True),
        "energy_lap": cell.vol(data.lap_abs2, inv_lam_phi=True),
        "w_l2": lam ** 3 * mu ** 4 * cell.vol(data.abs2, phi_power=3.0),
        "w_grad": lam * mu ** 2 * cell.vol(data.grad_abs2, phi_power=1.0),
    }
    if cubic:
        out["sextic"] = cell.vol(data.abs2 ** 3)
        out["mixed"] = cell.vol(data.abs2 * data.grad_abs2)
        out["w_l4"] = lam ** 2 * mu ** 2 * cell.vol(data.abs2 ** 2, phi_power=2.0)
    return out


def evaluate_cell(data: TrajectoryData, tables: WeightTables,
                  grid: SpaceTimeGrid, variant: str,
                  omega_mask=None) -> CarlemanReport:
    """One CarlemanReport for one trajectory and one (lambda, mu)."""
    if variant not in VARIANTS:
        raise FunctionalError(f"variant must be one of {VARIANTS}")
    params = tables.params
    lam, mu = params.lam, params.mu
    boundary_like = variant.endswith("boundary")
    cubic = not variant.startswith("linear")
    family_needed = "j2_boundary" if boundary_like else "j1_interior"
    if params.family != family_needed:
        raise FunctionalError(
            f"variant {variant!r} requires weight family {family_needed!r}, "
            f"got {params.family!r}")
    if boundary_like:
        if grid.spec.gamma0 != "full_boundary":
            raise FunctionalError("boundary variant requires gamma0 = full_boundary")
        if grid.spec.shape == "unit_square" \
                and data.trace_max > DIRICHLET_TRACE_TOL * (1 + np.abs(data.Y).max()):
            raise FunctionalError(
                f"trajectory violates the homogeneous Dirichlet trace "
                f"(max |y| on Gamma = {data.trace_max:.3e})")

    cell = _CellQuadrature(tables, grid)
    lhs = _lhs_terms(cell, data, lam, mu, cubic)

    rhs = {}
    obs_negative = False
    if cubic:
        rhs["source"] = cell.vol(data.G_abs2)
    else:
        rhs["source"] = cell.vol(data.lin_src_abs2)
    if boundary_like:
        obs = lam * mu * cell.boundary(data.dnu_abs2, phi_power=1.0,
                                       signed_factor=tables.b_dpsi_dnu)
        obs_negative = obs < 0
        rhs["obs_boundary"] = obs
    else:
        om = grid.omega_mask if omega_mask is None else omega_mask
        rhs["obs_l2"] = lam ** 3 * mu ** 4 * cell.vol(data.abs2, phi_power=3.0, mask=om)
        if cubic:
            rhs["obs_l4"] = lam ** 2 * mu ** 2 * cell.vol(data.abs2 ** 2,
                                                          phi_power=2.0, mask=om)

    lhs_total = float(sum(lhs.values()))
    rhs_total = float(sum(rhs.values()))
    degenerate = lhs_total == 0.0 and rhs_total == 0.0
    ratio = rhs_total / lhs_total if lhs_total > 0 else float("nan")
    return CarlemanReport(variant=variant, lam=lam, mu=mu,
                          lhs_total=lhs_total, rhs_total=rhs_total,
                          lhs_breakdown=lhs, rhs_breakdown=rhs, ratio=ratio,
                          log_scale=cell.log_scale, degenerate=degenerate,
                          obs_negative=obs_negative)


# -- spec-level convenience wrappers ----------------------------------------

def lhs_interior(Y, params: CarlemanParams, grid, coeffs) -> dict:
    data = prepare_trajectory(Y, grid, coeffs)
    tables = weight_tables(params, grid)
    cell = _CellQuadrature(tables, grid)
    return _lhs_terms(cell, data, params.lam, params.mu, cubic=True)


def rhs_interior(Y, params: CarlemanParams, grid, coeffs) -> dict:
    data = prepare_trajectory(Y, grid, coeffs)
    tables = weight_tables(params, grid)
    cell = _CellQuadrature(tables, grid)
    om = grid.omega_mask
    return {
        "source": cell.vol(data.G_abs2),
        "obs_l2": params.lam ** 3 * params.mu ** 4
                  * cell.vol(data.abs2, phi_power=3.0, mask=om),
        "obs_l4": params.lam ** 2 * params.mu ** 2
                  * cell.vol(data.abs2 ** 2, phi_power=2.0, mask=om),
    }


def _require_family(params, family):
    if params.family != family:
        raise FunctionalError(f"weight family {family!r} required, "
                              f"got {params.family!r}")


def lhs_boundary(Y, params: CarlemanParams, grid, coeffs) -> dict:
    """LHS breakdown of the boundary inequality (family j2 weights)."""
    _require_family(params, "j2_boundary")
    data = prepare_trajectory(Y, grid, coeffs)
    tables = weight_tables(params, grid)
    cell = _CellQuadrature(tables, grid)
    return _lhs_terms(cell, data, params.lam, params.mu, cubic=True)


def rhs_boundary(Y, params: CarlemanParams, grid, coeffs) -> dict:
    """Source plus normal-derivative observation term of the boundary RHS."""
    _require_family(params, "j2_boundary")
    data = prepare_trajectory(Y, grid, coeffs)
    tables = weight_tables(params, grid)
    cell = _CellQuadrature(tables, grid)
    obs = params.lam * params.mu * cell.boundary(
        data.dnu_abs2, phi_power=1.0, signed_factor=tables.b_dpsi_dnu)
    return {"source": cell.vol(data.G_abs2), "obs_boundary": obs}


def carleman_report(Y, params: CarlemanParams, grid, coeffs,
                    variant: str = "interior") -> CarlemanReport:
    data = prepare_trajectory(Y, grid, coeffs)
    tables = weight_tables(params, grid)
    return evaluate_cell(data, tables, grid, variant)


def linear_variant(Y, params: CarlemanParams, grid, coeffs,
                   which: str) -> CarlemanReport:
    """Cubic-free variants: 'neumann_05a' (interior obs) / 'dirichlet_05b'."""
    names = {"neumann_05a": "linear_interior", "dirichlet_05b": "linear_boundary"}
    if which not in names:
        raise FunctionalError("which must be 'neumann_05a' or 'dirichlet_05b'")
    return carleman_report(Y, params, grid, coeffs, names[which])


# -- scans -------------------------------------------------------------------

@dataclass
class ScanResult:
    variant: str
    reports: list
    stabilization_lambda: dict   # mu -> least stable lambda (or None)

    def rows(self):
        return [r.as_row() for r in self.reports]


def _stabilization(lams, ratios) -> float | None:
    """Least lambda beyond which successive ratio changes stay <= 10%."""
    order = np.argsort(lams)
    lams = np.asarray(lams)[order]
    ratios = np.asarray(ratios)[order]
    ok = np.zeros(lams.size, dtype=bool)
    for i in range(lams.size):
        later = ratios[i:]
        if later.size < 2 or np.any(~np.isfinite(later)) or np.any(later <= 0):
            continue
        changes = np.abs(np.diff(later)) / later[:-1]
        ok[i] = bool(np.all(changes <= STABILIZATION_TOL))
    hits = np.nonzero(ok)[0]
    return float(lams[hits[0]]) if hits.size else None


def lambda_scan(Y, grid: SpaceTimeGrid, lambdas, mus, variant: str,
                coeffs: GLCoeffs, T: float | None = None) -> ScanResult:
    """CarlemanReport per (lambda, mu) for one trajectory, plus stabilization."""
    T = grid.T if T is None else T
    data = prepare_trajectory(Y, grid, coeffs)
    family = "j2_boundary" if variant.endswith("boundary") else "j1_interior"
    reports = []
    stab = {}
    for mu in mus:
        ratios = []
        for lam in lambdas:
            params = CarlemanParams(lam=float(lam), mu=float(mu), T=T, family=family)
            tables = weight_tables(params, grid)
            rep = evaluate_cell(data, tables, grid, variant)
            reports.append(rep)
            ratios.append(rep.ratio)
        stab[float(mu)] = _stabilization(list(map(float, lambdas)), ratios)
    return ScanResult(variant=variant, reports=reports, stabilization_lambda=stab)


def suite_worst_constant(scans: list, lam: float, mu: float) -> float:
    """C_emp = max over a suite of reports of lhs/rhs at one (lambda, mu)."""
    vals = []
    for scan in scans:
        for rep in scan.reports:
            if rep.lam == lam and rep.mu == mu and not rep.degenerate:
                if rep.rhs_total > 0:
                    vals.append(rep.lhs_total / rep.rhs_total)
                else:
                    vals.append(float("inf"))
    if not vals:
        return float("nan")
    return float(max(vals))
