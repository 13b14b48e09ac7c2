import numpy as np
import pytest

from glcarleman.grid import DomainSpec, build_grid
from glcarleman.weights import (CarlemanParams, WeightError,
                                check_time_monotonicity,
                                derivative_consistency, eval_psi, eval_weight,
                                export_envelope_csv, theta_sq_times,
                                verify_psi_admissibility, weight_envelope)


class TestEvalPsi:
    def test_square_psi1_at_center(self, square_spec):
        s = eval_psi(square_spec, "psi1", np.array([0.5, 0.5]))
        assert s.psi == pytest.approx(1 / 16)
        assert np.abs(s.grad_psi).max() < 1e-15
        assert s.sup == 1 / 16

    def test_disk_psi1_boundary(self, disk_spec):
        x = np.array([[1.0, 0.0], [0.0, -1.0]])
        s = eval_psi(disk_spec, "psi1", x)
        assert np.abs(s.psi).max() < 1e-15
        # outward normal is x itself on the unit circle
        dn = np.einsum("bi,bi->b", s.grad_psi, x)
        assert dn == pytest.approx([-2.0, -2.0])

    def test_psi2_values(self, square_spec):
        s = eval_psi(square_spec, "psi2", np.array([0.0, 0.0]))
        assert s.psi == pytest.approx(2.0)
        assert s.grad_psi[0] == pytest.approx(1.0)
        assert s.grad_psi[1] == pytest.approx(0.0)
        assert s.lap_psi == pytest.approx(0.0)
        assert s.sup == 3.0

    def test_lap_matches_hessian_trace(self, square_spec, rng):
        x = rng.uniform(0.05, 0.95, size=(40, 2))
        s = eval_psi(square_spec, "psi1", x)
        tr = s.hess_psi[..., 0, 0] + s.hess_psi[..., 1, 1]
        assert np.abs(tr - s.lap_psi).max() < 1e-14

    def test_critical_point_outside_omega_raises(self):
        spec = DomainSpec(omega_center=(0.2, 0.2), omega_radius=0.05)
        with pytest.raises(WeightError):
            eval_psi(spec, "psi1", np.array([0.3, 0.3]))


class TestAdmissibility:
    def test_square_psi1_passes(self, square_spec, grid32):
        rep = verify_psi_admissibility(square_spec, "psi1", grid32)
        assert rep.passed
        assert rep.min_grad_outside_omega > 0

    def test_disk_psi1_passes(self, disk_spec, disk_grid):
        rep = verify_psi_admissibility(disk_spec, "psi1", disk_grid)
        assert rep.passed

    def test_psi2_passes_with_vacuous_boundary(self, square_spec, grid32):
        rep = verify_psi_admissibility(square_spec, "psi2", grid32)
        assert rep.passed
        assert rep.clauses["boundary_clauses_vacuous"]

    def test_misplaced_omega_fails_not_raises(self):
        spec = DomainSpec(omega_center=(0.2, 0.2), omega_radius=0.05)
        g = build_grid(spec, 32, 32, 32, 1.0)
        rep = verify_psi_admissibility(spec, "psi1", g)
        assert not rep.passed
        assert not rep.clauses["critical_point_in_omega"]
        assert rep.min_grad_outside_omega == pytest.approx(0.0, abs=1e-14)


class TestEvalWeight:
    def test_phi_at_zero_psi(self, square_spec):
        s = eval_psi(square_spec, "psi1", np.array([0.0, 0.5]), check_omega=False)
        w = eval_weight(CarlemanParams(lam=2, mu=2, T=1.0), s, 0.5)
        assert w.phi == pytest.approx(4.0)

    def test_disk_center_values(self, disk_spec):
        s = eval_psi(disk_spec, "psi1", np.array([0.0, 0.0]))
        w = eval_weight(CarlemanParams(lam=2, mu=2, T=1.0), s, 0.5)
        assert w.phi == pytest.approx(4 * np.e ** 2)
        assert w.rho == pytest.approx(4 * (np.e ** 2 - np.e ** 4))

    def test_t_outside_open_interval(self, square_spec):
        s = eval_psi(square_spec, "psi1", np.array([0.5, 0.5]))
        params = CarlemanParams(lam=2, mu=2, T=1.0)
        for t in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(WeightError):
                eval_weight(params, s, t)

    def test_parameter_validation(self):
        with pytest.raises(WeightError):
            CarlemanParams(lam=0.5, mu=2, T=1.0)
        with pytest.raises(WeightError):
            CarlemanParams(lam=2, mu=1.0, T=1.0)

    def test_rho_negative_interior(self, square_spec, rng):
        x = rng.uniform(0.0, 1.0, size=(50, 2))
        s = eval_psi(square_spec, "psi1", x, check_omega=False)
        t = rng.uniform(0.01, 0.99, size=50)
        w = eval_weight(CarlemanParams(lam=4, mu=3, T=1.0), s, t)
        assert np.all(w.rho < 0)
        assert np.all(w.phi > 0)

    def test_grad_ell_formula(self, square_spec, rng):
        # grad ell = lam mu phi grad psi; lap ell = lam mu^2 phi |grad psi|^2
        #            + lam mu phi lap psi
        x = rng.uniform(0.1, 0.9, size=(20, 2))
        s = eval_psi(square_spec, "psi1", x, check_omega=False)
        params = CarlemanParams(lam=3, mu=2.5, T=1.0)
        w = eval_weight(params, s, 0.4)
        lhs = w.grad_ell
        rhs = params.lam * params.mu * w.phi[..., None] * s.grad_psi
        assert np.abs(lhs - rhs).max() < 1e-12 * np.abs(rhs).max()
        g2 = np.einsum("...i,...i->...", s.grad_psi, s.grad_psi)
        lap_rhs = params.lam * params.mu ** 2 * w.phi * g2 \
            + params.lam * params.mu * w.phi * s.lap_psi
        assert np.abs(w.lap_ell - lap_rhs).max() < 1e-12 * np.abs(lap_rhs).max()

    def test_rho_t_pointwise_bound(self, square_spec, rng):
        # |rho_t| <= T exp(2 mu |psi|_sup) phi^2
        T = 1.3
        x = rng.uniform(0.0, 1.0, size=(60, 2))
        s = eval_psi(square_spec, "psi1", x, check_omega=False)
        t = rng.uniform(0.02, T - 0.02, size=60)
        for mu in (1.5, 3.0):
            w = eval_weight(CarlemanParams(lam=2, mu=mu, T=T), s, t)
            bound = T * np.exp(2 * mu * s.sup) * w.phi ** 2
            assert np.all(np.abs(w.rho_t) <= bound * (1 + 1e-12))

    def test_ell_tt_envelope_bound(self, square_spec, rng):
        # |ell_tt| <= C lam phi^3 exp(3 mu |psi|_sup) with a moderate C
        T = 1.0
        x = rng.uniform(0.0, 1.0, size=(60, 2))
        s = eval_psi(square_spec, "psi1", x, check_omega=False)
        t = rng.uniform(0.02, 0.98, size=60)
        params = CarlemanParams(lam=5, mu=2, T=T)
        w = eval_weight(params, s, t)
        bound = 10.0 * params.lam * w.phi ** 3 * np.exp(3 * params.mu * s.sup)
        assert np.all(np.abs(w.ell_tt) <= bound)


class TestDerivativeConsistency:
    @pytest.mark.parametrize("which,family", [("psi1", "j1_interior"),
                                              ("psi2", "j2_boundary")])
    def test_analytic_vs_fd(self, square_spec, which, family):
        params = CarlemanParams(lam=4, mu=2, T=1.0, family=family)
        pts = np.array([[0.3, 0.4], [0.55, 0.7], [0.8, 0.25]])
        times = np.array([0.3, 0.5, 0.66])
        errs = derivative_consistency(params, square_spec, which, pts, times)
        assert max(errs.values()) <= 1e-6


class TestEnvelope:
    def test_lambda_linearity(self, square_spec, grid32):
        e1 = weight_envelope(CarlemanParams(lam=2, mu=2, T=1.0), grid32)
        e2 = weight_envelope(CarlemanParams(lam=4, mu=2, T=1.0), grid32)
        inner = slice(1, -1)
        assert np.allclose(e2.log_theta[inner], 2 * e1.log_theta[inner],
                           rtol=1e-13)

    def test_endpoint_sentinels(self, square_spec, grid32):
        env = weight_envelope(CarlemanParams(lam=2, mu=2, T=1.0), grid32)
        assert np.all(np.isneginf(env.log_theta[0]))
        assert np.all(np.isneginf(env.log_theta[-1]))

    def test_time_symmetry_and_monotonicity(self, square_spec, grid32):
        env = weight_envelope(CarlemanParams(lam=3, mu=2, T=1.0), grid32)
        rep = check_time_monotonicity(env, grid32)
        assert rep["monotone_first_half"]
        assert rep["symmetric"]

    def test_strict_increase_first_half(self, square_spec, grid32):
        env = weight_envelope(CarlemanParams(lam=3, mu=2, T=1.0), grid32)
        mid = grid32.nt // 2
        lt = env.log_theta[1:mid + 1][:, grid32.active_mask]
        assert np.all(np.diff(lt, axis=0) > 0)

    def test_mu_monotonicity_of_phi(self, square_spec):
        # phi strictly increasing in mu where psi > 0
        s = eval_psi(square_spec, "psi1", np.array([0.5, 0.5]))
        phis = [eval_weight(CarlemanParams(lam=2, mu=mu, T=1.0), s, 0.5).phi
                for mu in (1.5, 2.0, 3.0)]
        assert phis[0] < phis[1] < phis[2]

    def test_csv_export(self, square_spec, tmp_path):
        g = build_grid(square_spec, 16, 16, 16, 1.0)
        env = weight_envelope(CarlemanParams(lam=2, mu=2, T=1.0), g)
        path = tmp_path / "env.csv"
        export_envelope_csv(env, g, path)
        header = path.read_text().splitlines()[0]
        assert header == "t,x1,x2,log_theta,phi"


class TestThetaSqTimes:
    def test_flush_to_zero(self):
        out = theta_sq_times(np.array([-400.0]), np.array([1.0]))
        assert out[0] == 0.0

    def test_matches_direct_product(self):
        lt = np.array([-5.0, -50.0])
        g = np.array([3.0, 2.0])
        out = theta_sq_times(lt, g)
        assert np.allclose(out, np.exp(2 * lt) * g, rtol=1e-13)

    def test_rejects_negative(self):
        with pytest.raises(WeightError):
            theta_sq_times(np.array([-1.0]), np.array([-2.0]))
