"""Coefficient algebra and discrete Ginzburg-Landau operators.

The cubic complex Ginzburg-Landau operator is

    F y = y_t - (1 + i b) Lap y + (1 + i c) |y|^2 y.

Dividing by -(1+ib) normalizes the Laplacian:

    P y = (alpha1 + i beta1) y_t + Lap y,
    G y = P y - (alpha2 + i beta2) |y|^2 y,          F = -(1 + i b) G,

with alpha1 = -1/(1+b^2), beta1 = b/(1+b^2), alpha2 = (1+bc)/(1+b^2),
beta2 = (c-b)/(1+b^2).  The admissible coefficient regime is certified by a
witness pair (r0, delta0): |b| <= r0 < 1, alpha2 > 0, |beta2| <= delta0 alpha2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import SpaceTimeGrid, laplacian


class CoeffError(ValueError):
    pass


@dataclass(frozen=True)
class GLCoeffs:
    b: float
    c: float
    alpha1: float
    beta1: float
    alpha2: float
    beta2: float
    gamma1: complex
    gamma2: complex


def derive_coeffs(b: float, c: float) -> GLCoeffs:
    d = 1.0 + b * b
    alpha1 = -1.0 / d
    beta1 = b / d
    alpha2 = (1.0 + b * c) / d
    beta2 = (c - b) / d
    return GLCoeffs(
        b=b, c=c, alpha1=alpha1, beta1=beta1, alpha2=alpha2, beta2=beta2,
        gamma1=1.0 / (alpha1 + 1j * beta1),
        gamma2=alpha2 + 1j * beta2,
    )


@dataclass
class Condition1Report:
    r0: float
    delta0: float
    clauses: dict
    margins: dict
    passed: bool


def check_condition1(coeffs: GLCoeffs, r0: float, delta0: float) -> Condition1Report:
    """Does the witness pair (r0, delta0) certify the admissible regime?"""
    if not 0 < r0 < 1:
        raise CoeffError("r0 must lie in (0, 1)")
    if not 0 < delta0 < 0.125:
        raise CoeffError("delta0 must lie in (0, 1/8)")
    clauses = {
        "abs_b_le_r0": abs(coeffs.b) <= r0,
        "alpha2_positive": coeffs.alpha2 > 0,
        "beta2_bounded": abs(coeffs.beta2) <= delta0 * coeffs.alpha2,
    }
    margins = {
        "abs_b_le_r0": r0 - abs(coeffs.b),
        "alpha2_positive": coeffs.alpha2,
        "beta2_bounded": delta0 * coeffs.alpha2 - abs(coeffs.beta2),
    }
    return Condition1Report(r0=r0, delta0=delta0, clauses=clauses,
                            margins=margins, passed=all(clauses.values()))


def least_delta0(coeffs: GLCoeffs) -> float | None:
    """Smallest feasible delta0 = |beta2| / alpha2, or None when alpha2 <= 0."""
    if coeffs.alpha2 <= 0:
        return None
    return abs(coeffs.beta2) / coeffs.alpha2


def coefficient_relations(coeffs: GLCoeffs) -> dict:
    """Round-off-level residuals of the coefficient identities.

    Returns absolute errors of:
      (alpha1^2 + beta1^2)(1 + b^2) = 1
      |gamma1|^2 = 1 + b^2
      Im(gamma1 gamma2) = (alpha1 beta2 - alpha2 beta1) |gamma1|^2
      1 - beta1^2 |gamma1|^2 = -alpha1
      1 - alpha1^2 |gamma1|^2 = -alpha1 b^2
      1 - beta1^2 |gamma1|^2 + beta1 alpha1 |gamma1|^2 = (1 - b)/(1 + b^2)
    """
    a1, b1, a2, b2 = coeffs.alpha1, coeffs.beta1, coeffs.alpha2, coeffs.beta2
    g1sq = abs(coeffs.gamma1) ** 2
    b = coeffs.b
    return {
        "norm_identity": abs((a1 * a1 + b1 * b1) * (1 + b * b) - 1.0),
        "gamma1_modulus": abs(g1sq - (1 + b * b)),
        "im_gamma1_gamma2": abs((coeffs.gamma1 * coeffs.gamma2).imag
                                - (a1 * b2 - a2 * b1) * g1sq),
        "one_minus_beta1sq": abs(1 - b1 * b1 * g1sq + a1),
        "one_minus_alpha1sq": abs(1 - a1 * a1 * g1sq + a1 * b * b),
        "mixed_relation": abs(1 - b1 * b1 * g1sq + b1 * a1 * g1sq
                              - (1 - b) / (1 + b * b)),
    }


def time_derivative(Y: np.ndarray, dt: float) -> np.ndarray:
    """d/dt along axis 0: centered second order, one-sided at the endpoints."""
    Y = np.asarray(Y)
    if Y.shape[0] < 3:
        raise CoeffError("time derivative needs at least 3 slices")
    out = np.empty_like(Y)
    out[1:-1] = (Y[2:] - Y[:-2]) / (2 * dt)
    out[0] = (-3 * Y[0] + 4 * Y[1] - Y[2]) / (2 * dt)
    out[-1] = (3 * Y[-1] - 4 * Y[-2] + Y[-3]) / (2 * dt)
    return out


def apply_P(Y: np.ndarray, grid: SpaceTimeGrid, coeffs: GLCoeffs,
            bc: str = "ghost_from_field") -> np.ndarray:
    """P y = (alpha1 + i beta1) y_t + Lap y on a trajectory."""
    Y = grid.check_field(np.asarray(Y, dtype=np.complex128), "trajectory")
    yt = time_derivative(Y, grid.dt)
    return (coeffs.alpha1 + 1j * coeffs.beta1) * yt + laplacian(Y, grid, bc)


def apply_G(Y: np.ndarray, grid: SpaceTimeGrid, coeffs: GLCoeffs,
            bc: str = "ghost_from_field") -> np.ndarray:
    """G y = P y - (alpha2 + i beta2) |y|^2 y."""
    Y = np.asarray(Y, dtype=np.complex128)
    out = apply_P(Y, grid, coeffs, bc)
    out -= coeffs.gamma2 * np.abs(Y) ** 2 * Y
    return out


def apply_F(Y: np.ndarray, grid: SpaceTimeGrid, coeffs: GLCoeffs,
            bc: str = "ghost_from_field") -> np.ndarray:
    """F y = y_t - (1+ib) Lap y + (1+ic) |y|^2 y."""
    Y = grid.check_field(np.asarray(Y, dtype=np.complex128), "trajectory")
    yt = time_derivative(Y, grid.dt)
    return (yt - (1 + 1j * coeffs.b) * laplacian(Y, grid, bc)
            + (1 + 1j * coeffs.c) * np.abs(Y) ** 2 * Y)
