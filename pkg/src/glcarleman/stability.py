"""State observation experiments: conditional stability of the difference map.

Two forward solves with identical boundary data and differing initial data
produce u1, u2 and z = u1 - u2 (which then satisfies homogeneous boundary
conditions by construction).  The interior-observation estimate compares

    lhs      = int_{Q_eps} (|z|^2 + |grad z|^2)
    rhs_obs  = int_{Q_omega} (|z|^2 + |z|^4)

through the conditional constant C(u2) = C ||u2||_{L^inf L^6}^8; the
empirical constant c_emp = lhs / (||u2||^8 rhs_obs) is reported (and its
u1-normalized twin).  The boundary variant observes the normal derivative:

    rhs_obs  = int_{Sigma_0} |d z / d nu|^2,     c_emp = lhs / rhs_obs.

The difference z is always computed from the two solves; no difference
equation is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import SpaceTimeGrid, boundary_values, grad, integrate_q, integrate_sigma, normal_derivative
from .solver import SolveConfig, solve

TRACE_TOL = 1e-10


class StabilityError(ValueError):
    pass


@dataclass
class StabilityReport:
    variant: str
    epsilon: float
    lhs: float
    rhs_obs: float
    c_u2: float
    c_u1: float
    c_emp: float
    c_emp_u1: float
    degenerate: bool
    perturbation_scale: float = float("nan")

    def as_row(self) -> dict:
        return {"variant": self.variant, "epsilon": self.epsilon,
                "delta": self.perturbation_scale, "lhs": self.lhs,
                "rhs_obs": self.rhs_obs, "c_u2": self.c_u2, "c_u1": self.c_u1,
                "c_emp": self.c_emp, "c_emp_u1": self.c_emp_u1,
                "degenerate": int(self.degenerate)}


def linf_l6_norm(U: np.ndarray, grid: SpaceTimeGrid) -> float:
    """max over time slices of (int |u|^6 dx)^(1/6) via spatial quadrature."""
    U = grid.check_field(np.asarray(U, dtype=complex), "field")
    wsp = grid.quad_weights_space
    vals = np.einsum("tij,ij->t", np.abs(U) ** 6, wsp)
    return float(np.max(vals) ** (1.0 / 6.0))


def run_pair(y0_a: np.ndarray, y0_b: np.ndarray, cfg: SolveConfig,
             grid: SpaceTimeGrid):
    """Solve twice with shared config; returns (u1, u2, z = u1 - u2)."""
    u1 = solve(y0_a, cfg, grid).Y
    u2 = solve(y0_b, cfg, grid).Y
    return u1, u2, u1 - u2


def _grad_sq(Z: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    g1, g2 = grad(Z, grid)
    return np.abs(g1) ** 2 + np.abs(g2) ** 2


def stability_interior(z: np.ndarray, u2: np.ndarray, grid: SpaceTimeGrid,
                       eps: float, u1: np.ndarray | None = None,
                       delta: float = float("nan")) -> StabilityReport:
    """Interior-observation report for a difference trajectory z."""
    if not 0 < eps < grid.T / 2:
        raise StabilityError("eps must lie in (0, T/2)")
    z = grid.check_field(np.asarray(z, dtype=complex), "difference")
    az2 = np.abs(z) ** 2
    lhs = integrate_q(az2 + _grad_sq(z, grid), grid, "Q_eps", eps=eps)
    rhs = integrate_q(az2 + az2 ** 2, grid, "Q_omega")
    c_u2 = linf_l6_norm(u2, grid) ** 8
    c_u1 = linf_l6_norm(u1, grid) ** 8 if u1 is not None else float("nan")
    degenerate = rhs == 0.0
    c_emp = lhs / (c_u2 * rhs) if (rhs > 0 and c_u2 > 0) else float("nan")
    c_emp_u1 = lhs / (c_u1 * rhs) if (rhs > 0 and c_u1 > 0) else float("nan")
    return StabilityReport(variant="interior", epsilon=eps, lhs=lhs, rhs_obs=rhs,
                           c_u2=c_u2, c_u1=c_u1, c_emp=c_emp, c_emp_u1=c_emp_u1,
                           degenerate=degenerate, perturbation_scale=delta)


def stability_boundary(z: np.ndarray, grid: SpaceTimeGrid, eps: float,
                       delta: float = float("nan")) -> StabilityReport:
    """Boundary-observation report; z must carry a zero Dirichlet trace."""
    if not 0 < eps < grid.T / 2:
        raise StabilityError("eps must lie in (0, T/2)")
    z = grid.check_field(np.asarray(z, dtype=complex), "difference")
    trace = np.abs(boundary_values(z, grid)).max()
    scale = 1.0 + float(np.abs(z).max())
    if trace > TRACE_TOL * scale:
        raise StabilityError(
            f"difference trace on Gamma is {trace:.3e}; the pair was not "
            "solved with identical Dirichlet data")
    az2 = np.abs(z) ** 2
    lhs = integrate_q(az2 + _grad_sq(z, grid), grid, "Q_eps", eps=eps)
    dnu = normal_derivative(z, grid)
    rhs = integrate_sigma(np.abs(dnu) ** 2, grid)
    degenerate = rhs == 0.0
    c_emp = lhs / rhs if rhs > 0 else float("nan")
    return StabilityReport(variant="boundary", epsilon=eps, lhs=lhs, rhs_obs=rhs,
                           c_u2=float("nan"), c_u1=float("nan"), c_emp=c_emp,
                           c_emp_u1=float("nan"), degenerate=degenerate,
                           perturbation_scale=delta)


def perturbation_suite(y0: np.ndarray, w: np.ndarray, deltas, eps_list,
                       cfg: SolveConfig, grid: SpaceTimeGrid,
                       variants=("interior", "boundary")) -> list:
    """Reports for u2 from y0 and u1 from y0 + delta w, over deltas x eps."""
    reports = []
    u2 = solve(y0, cfg, grid).Y
    for delta in deltas:
        u1 = solve(y0 + delta * np.asarray(w), cfg, grid).Y
        z = u1 - u2
        for eps in eps_list:
            if "interior" in variants:
                reports.append(stability_interior(z, u2, grid, eps, u1=u1,
                                                  delta=delta))
            if "boundary" in variants:
                reports.append(stability_boundary(z, grid, eps, delta=delta))
    return reports
