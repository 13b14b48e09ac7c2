"""Closed-form space-time test fields with full analytic jets.

A field is a finite sum of separable modes

    v(t, x) = sum_m  c_m * tau_m(t) * f_m(x1) * g_m(x2),

where each 1-D factor carries its value and first two derivatives in closed
form.  That gives v_t, grad v, Hess v, Lap v and grad v_t exactly, which the
identity laboratory consumes (its pointwise checks use no stencils), and
which the method of manufactured solutions uses to generate sources.

Every constructed field self-checks its supplied derivatives against central
finite differences at a few random points (relative error <= 1e-6).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FieldError(ValueError):
    pass


class Atom:
    """1-D factor with derivatives: ev(s) -> (f, f', f'')."""

    def ev(self, s: np.ndarray):
        raise NotImplementedError


@dataclass(frozen=True)
class SinAtom(Atom):
    freq: float
    phase: float = 0.0

    def ev(self, s):
        arg = self.freq * s + self.phase
        f = np.sin(arg)
        return f, self.freq * np.cos(arg), -self.freq ** 2 * f


@dataclass(frozen=True)
class ExpAtom(Atom):
    """exp(a s) with complex rate a."""

    rate: complex

    def ev(self, s):
        f = np.exp(self.rate * np.asarray(s, dtype=complex))
        return f, self.rate * f, self.rate ** 2 * f


@dataclass(frozen=True)
class PolyAtom(Atom):
    """Polynomial sum_k coeffs[k] * s**k."""

    coeffs: tuple

    def ev(self, s):
        s = np.asarray(s, dtype=float)
        c = self.coeffs
        n = len(c)
        f = sum(c[k] * s ** k for k in range(n))
        d1 = sum(k * c[k] * s ** (k - 1) for k in range(1, n))
        d2 = sum(k * (k - 1) * c[k] * s ** (k - 2) for k in range(2, n))
        zero = np.zeros_like(s)
        return f + zero, d1 + zero, d2 + zero


def bubble_atom() -> PolyAtom:
    """s (1 - s): vanishes at s in {0, 1}."""
    return PolyAtom((0.0, 1.0, -1.0))


def time_bubble_atom(T: float) -> PolyAtom:
    """t (T - t): vanishes at the time endpoints."""
    return PolyAtom((0.0, T, -1.0))


@dataclass(frozen=True)
class Mode:
    coef: complex
    t_atom: Atom
    x1_atom: Atom
    x2_atom: Atom


class AnalyticField:
    """Sum of separable modes with exact derivatives up to second order."""

    def __init__(self, modes, self_check: bool = True, check_box=((0.1, 0.9), (0.1, 0.9)),
                 check_times=(0.3, 0.6)):
        if not modes:
            raise FieldError("at least one mode required")
        self.modes = list(modes)
        if self_check:
            self._self_check(check_box, check_times)

    # -- jet evaluation ----------------------------------------------------
    def _parts(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        return t, x[..., 0], x[..., 1]

    def value(self, t, x):
        t, x1, x2 = self._parts(t, x)
        out = 0
        for m in self.modes:
            tau, _, _ = m.t_atom.ev(t)
            f, _, _ = m.x1_atom.ev(x1)
            g, _, _ = m.x2_atom.ev(x2)
            out = out + m.coef * tau * f * g
        return np.asarray(out, dtype=complex)

    def dt(self, t, x):
        t, x1, x2 = self._parts(t, x)
        out = 0
        for m in self.modes:
            _, taup, _ = m.t_atom.ev(t)
            f, _, _ = m.x1_atom.ev(x1)
            g, _, _ = m.x2_atom.ev(x2)
            out = out + m.coef * taup * f * g
        return np.asarray(out, dtype=complex)

    def grad(self, t, x):
        t, x1, x2 = self._parts(t, x)
        g1 = 0
        g2 = 0
        for m in self.modes:
            tau, _, _ = m.t_atom.ev(t)
            f, fp, _ = m.x1_atom.ev(x1)
            g, gp, _ = m.x2_atom.ev(x2)
            g1 = g1 + m.coef * tau * fp * g
            g2 = g2 + m.coef * tau * f * gp
        return np.stack([np.asarray(g1, dtype=complex),
                         np.asarray(g2, dtype=complex)], axis=-1)

    def grad_dt(self, t, x):
        t, x1, x2 = self._parts(t, x)
        g1 = 0
        g2 = 0
        for m in self.modes:
            _, taup, _ = m.t_atom.ev(t)
            f, fp, _ = m.x1_atom.ev(x1)
            g, gp, _ = m.x2_atom.ev(x2)
            g1 = g1 + m.coef * taup * fp * g
            g2 = g2 + m.coef * taup * f * gp
        return np.stack([np.asarray(g1, dtype=complex),
                         np.asarray(g2, dtype=complex)], axis=-1)

    def hess(self, t, x):
        t, x1, x2 = self._parts(t, x)
        h11 = 0
        h12 = 0
        h22 = 0
        for m in self.modes:
            tau, _, _ = m.t_atom.ev(t)
            f, fp, fpp = m.x1_atom.ev(x1)
            g, gp, gpp = m.x2_atom.ev(x2)
            h11 = h11 + m.coef * tau * fpp * g
            h12 = h12 + m.coef * tau * fp * gp
            h22 = h22 + m.coef * tau * f * gpp
        h11 = np.asarray(h11, dtype=complex)
        h12 = np.asarray(h12, dtype=complex)
        h22 = np.asarray(h22, dtype=complex)
        out = np.empty(h11.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = h11
        out[..., 0, 1] = h12
        out[..., 1, 0] = h12
        out[..., 1, 1] = h22
        return out

    def lap(self, t, x):
        h = self.hess(t, x)
        return h[..., 0, 0] + h[..., 1, 1]

    # -- validation ---------------------------------------------------------
    def _self_check(self, box, times, rtol=1e-6):
        rng = np.random.default_rng(0)
        pts = np.column_stack([
            rng.uniform(box[0][0], box[0][1], 5),
            rng.uniform(box[1][0], box[1][1], 5),
        ])
        ts = np.asarray(rng.uniform(times[0], times[1], 5))
        eps = 1e-6
        scale = np.abs(self.value(ts, pts)).max() + 1.0

        vt_fd = (self.value(ts + eps, pts) - self.value(ts - eps, pts)) / (2 * eps)
        if np.abs(vt_fd - self.dt(ts, pts)).max() > rtol * (np.abs(vt_fd).max() + scale):
            raise FieldError("dt inconsistent with finite differences")
        for j in range(2):
            dx = np.zeros((1, 2))
            dx[0, j] = eps
            g_fd = (self.value(ts, pts + dx) - self.value(ts, pts - dx)) / (2 * eps)
            g_an = self.grad(ts, pts)[..., j]
            if np.abs(g_fd - g_an).max() > rtol * (np.abs(g_fd).max() + scale):
                raise FieldError("grad inconsistent with finite differences")
            h_fd = (self.grad(ts, pts + dx) - self.grad(ts, pts - dx)) / (2 * eps)
            h_an = self.hess(ts, pts)[..., j, :]
            if np.abs(h_fd - h_an).max() > 1e-4 * (np.abs(h_an).max() + scale):
                raise FieldError("hess inconsistent with finite differences")

    # -- sampling helpers ----------------------------------------------------
    def sample(self, grid, times=None) -> np.ndarray:
        """Sample values on all grid nodes for the given times (default all)."""
        times = grid.t_nodes if times is None else np.asarray(times)
        pts = np.stack([grid.X1, grid.X2], axis=-1)
        out = np.empty((times.size, grid.ny + 1, grid.nx + 1), dtype=complex)
        for k, t in enumerate(times):
            out[k] = self.value(t, pts)
        out[:, ~grid.active_mask] = 0.0
        return out


def scaled(field: AnalyticField, s: complex) -> AnalyticField:
    return AnalyticField([Mode(m.coef * s, m.t_atom, m.x1_atom, m.x2_atom)
                          for m in field.modes], self_check=False)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def random_trig_field(seed: int, T: float, n_modes: int = 4,
                      amplitude: float = 1.0) -> AnalyticField:
    """Random trigonometric sum: modes exp((s+iw)t) sin(k1 pi x1 + p1) sin(...)."""
    rng = np.random.default_rng(seed)
    modes = []
    for _ in range(n_modes):
        coef = amplitude * (rng.normal() + 1j * rng.normal()) / np.sqrt(n_modes)
        rate = complex(rng.uniform(-0.5, 0.5), rng.uniform(-2.0, 2.0))
        k1 = rng.integers(1, 4) * np.pi
        k2 = rng.integers(1, 4) * np.pi
        modes.append(Mode(coef, ExpAtom(rate),
                          SinAtom(k1, rng.uniform(0, np.pi)),
                          SinAtom(k2, rng.uniform(0, np.pi))))
    return AnalyticField(modes, check_times=(0.2 * T, 0.8 * T))


def bubble_sine_field(T: float) -> AnalyticField:
    """v = (1+i) t (T-t) sin(pi x1) sin(pi x2)."""
    return AnalyticField([Mode(1 + 1j, time_bubble_atom(T),
                               SinAtom(np.pi), SinAtom(np.pi))],
                         check_times=(0.2 * T, 0.8 * T))


def oscillating_bubble_field() -> AnalyticField:
    """v = exp(i t) x1 (1-x1) x2 (1-x2)."""
    return AnalyticField([Mode(1.0, ExpAtom(1j), bubble_atom(), bubble_atom())])


def manufactured_reference() -> AnalyticField:
    """y* = exp(-t) sin(pi x1) sin(pi x2): Dirichlet-compatible reference."""
    return AnalyticField([Mode(1.0, ExpAtom(-1.0), SinAtom(np.pi), SinAtom(np.pi))])


def random_initial_field(grid, seed: int, amplitude: float = 1.0,
                         bc: str = "dirichlet0", n_modes: int = 4) -> np.ndarray:
    """Random smooth initial data compatible with the boundary condition.

    Dirichlet data uses sine modes (zero trace); Neumann data uses cosine
    modes (zero normal derivative).  At most 8 modes.
    """
    if n_modes > 8:
        raise FieldError("at most 8 modes")
    rng = np.random.default_rng(seed)
    X1, X2 = grid.X1, grid.X2
    out = np.zeros_like(X1, dtype=complex)
    for _ in range(n_modes):
        c = (rng.normal() + 1j * rng.normal()) / np.sqrt(2 * n_modes)
        k1, k2 = rng.integers(1, 4), rng.integers(1, 4)
        if bc.startswith("dirichlet"):
            out += c * np.sin(k1 * np.pi * X1) * np.sin(k2 * np.pi * X2)
        else:
            out += c * np.cos(k1 * np.pi * X1) * np.cos(k2 * np.pi * X2)
    peak = np.abs(out).max()
    if peak > 0:
        out *= amplitude / peak
    out[~grid.active_mask] = 0.0
    return out
