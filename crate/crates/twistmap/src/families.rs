//! Builtin map families: the completely integrable quadratic family and the
//! generalized standard family obtained by adding a trigonometric-polynomial
//! potential.
//!
//! The integrable family has generating function S(q, Q) = h(Q - q) with
//! h(s) = ½ sᵀA⁻¹s for a symmetric positive definite matrix A; the lift is
//! the shear (q, p) ↦ (q + A p, p) with frequency map p ↦ A p.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::sync::Arc;

use crate::error::MapError;
use crate::map::{GeneratingFn, ModeMap, PositivityConstants, Potential, TwistMap};

/// Completely integrable quadratic generating function
/// S(q, Q) = ½ (Q-q)ᵀ A⁻¹ (Q-q).
#[derive(Debug, Clone)]
pub struct QuadraticIntegrable {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
}

impl QuadraticIntegrable {
    /// `a` must be symmetric positive definite.
    pub fn new(a: DMatrix<f64>) -> Result<Self, MapError> {
        let d = a.nrows();
        if a.ncols() != d {
            return Err(MapError::DimensionMismatch { expected: d, got: a.ncols() });
        }
        if (&a - a.transpose()).amax() > 1e-12 * a.amax().max(1.0) {
            return Err(MapError::NotPositiveDefinite);
        }
        let chol = a.clone().cholesky().ok_or(MapError::NotPositiveDefinite)?;
        let a_inv = chol.inverse();
        Ok(Self { a, a_inv })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn matrix_inverse(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    /// Frequency map ∇ℓ(p) = A p of the lift (q, p) ↦ (q + ∇ℓ(p), p).
    pub fn frequency(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.a * p
    }

    /// The convex profile ℓ(p) = ½ pᵀ A p whose Fenchel dual is h.
    pub fn ell(&self, p: &DVector<f64>) -> f64 {
        0.5 * (p.transpose() * &self.a * p)[(0, 0)]
    }

    /// Per-step action h(s) = ½ sᵀ A⁻¹ s of a straight segment of length s.
    pub fn h(&self, s: &DVector<f64>) -> f64 {
        0.5 * (s.transpose() * &self.a_inv * s)[(0, 0)]
    }

    /// Exact positivity constants: α and β are the extreme eigenvalues of
    /// A⁻¹ and the rate bound is 2‖A⁻¹‖.
    pub fn constants(&self) -> PositivityConstants {
        let eig = self.a_inv.clone().symmetric_eigen().eigenvalues;
        let min = eig.min();
        let max = eig.max();
        PositivityConstants {
            alpha: min,
            beta: max,
            rate_bound: Some(2.0 * max),
        }
    }
}

impl GeneratingFn for QuadraticIntegrable {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, q: &DVector<f64>, qn: &DVector<f64>) -> f64 {
        let s = qn - q;
        0.5 * (s.transpose() * &self.a_inv * &s)[(0, 0)]
    }

    fn d_q(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DVector<f64> {
        -(&self.a_inv * (qn - q))
    }

    fn d_qn(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DVector<f64> {
        &self.a_inv * (qn - q)
    }

    fn d2_qq(&self, _q: &DVector<f64>, _qn: &DVector<f64>) -> DMatrix<f64> {
        self.a_inv.clone()
    }

    fn d2_q_qn(&self, _q: &DVector<f64>, _qn: &DVector<f64>) -> DMatrix<f64> {
        -self.a_inv.clone()
    }

    fn d2_qn_qn(&self, _q: &DVector<f64>, _qn: &DVector<f64>) -> DMatrix<f64> {
        self.a_inv.clone()
    }

    fn explicit_forward(&self, q: &DVector<f64>, p: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        Some((q + &self.a * p, p.clone()))
    }

    fn explicit_inverse(&self, qn: &DVector<f64>, pn: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        Some((qn - &self.a * pn, pn.clone()))
    }
}

/// One term a·cos(2π⟨ν, q⟩ + φ) of a trigonometric polynomial.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrigTerm {
    pub wavevector: Vec<i64>,
    pub amplitude: f64,
    pub phase: f64,
}

/// A real trigonometric polynomial G(q) = Σ a_k cos(2π⟨ν_k, q⟩ + φ_k) on T^d.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    dim: usize,
    terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn new(dim: usize, terms: Vec<TrigTerm>) -> Self {
        assert!(terms.iter().all(|t| t.wavevector.len() == dim), "wavevector dimension mismatch");
        Self { dim, terms }
    }

    /// The single-mode potential -cos(2π q₁)/(2π)² that drives the
    /// generalized standard map; its Hessian has entries in [-1, 1].
    pub fn standard_kick(dim: usize) -> Self {
        let two_pi = std::f64::consts::TAU;
        let mut nu = vec![0_i64; dim];
        nu[0] = 1;
        Self::new(
            dim,
            vec![TrigTerm {
                wavevector: nu,
                amplitude: -1.0 / (two_pi * two_pi),
                phase: 0.0,
            }],
        )
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    /// Scale every amplitude by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| TrigTerm { amplitude: t.amplitude * s, ..t.clone() })
            .collect();
        Self { dim: self.dim, terms }
    }

    fn angle(&self, term: &TrigTerm, q: &DVector<f64>) -> f64 {
        let mut dot = 0.0;
        for (i, &ni) in term.wavevector.iter().enumerate() {
            // reduce each product mod 1 to keep the lift periodicity tight
            dot += (ni as f64 * q[i]).fract();
        }
        std::f64::consts::TAU * dot + term.phase
    }
}

impl Potential for TrigPoly {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| t.amplitude * self.angle(t, q).cos()).sum()
    }

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let two_pi = std::f64::consts::TAU;
        let mut g = DVector::zeros(self.dim);
        for t in &self.terms {
            let s = -t.amplitude * self.angle(t, q).sin() * two_pi;
            for (i, &ni) in t.wavevector.iter().enumerate() {
                g[i] += s * ni as f64;
            }
        }
        g
    }

    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let two_pi = std::f64::consts::TAU;
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            let c = -t.amplitude * self.angle(t, q).cos() * two_pi * two_pi;
            for (i, &ni) in t.wavevector.iter().enumerate() {
                for (j, &nj) in t.wavevector.iter().enumerate() {
                    h[(i, j)] += c * ni as f64 * nj as f64;
                }
            }
        }
        h
    }

    /// Ĝ(ν) of the expansion G(q) = Σ_ν Ĝ(ν) e^{2πi⟨ν,q⟩}:
    /// a·cos(2π⟨ν,q⟩+φ) contributes (a/2)e^{iφ} at ν and (a/2)e^{-iφ} at -ν.
    fn modes(&self) -> Option<ModeMap> {
        let mut map: std::collections::BTreeMap<Vec<i64>, Complex64> = std::collections::BTreeMap::new();
        for t in &self.terms {
            let half = Complex64::from_polar(t.amplitude / 2.0, t.phase);
            let neg: Vec<i64> = t.wavevector.iter().map(|x| -x).collect();
            *map.entry(t.wavevector.clone()).or_insert(Complex64::new(0.0, 0.0)) += half;
            *map.entry(neg).or_insert(Complex64::new(0.0, 0.0)) += half.conj();
        }
        Some(
            map.into_iter()
                .map(|(k, v)| (k, (v.re, v.im)))
                .collect(),
        )
    }
}

/// The integrable shear with A = I (generating function ½‖Q-q‖²).
pub fn shear(dim: usize) -> TwistMap {
    quadratic_integrable(DMatrix::identity(dim, dim)).expect("identity is SPD")
}

/// Completely integrable family for an SPD matrix A.
pub fn quadratic_integrable(a: DMatrix<f64>) -> Result<TwistMap, MapError> {
    let gen = QuadraticIntegrable::new(a)?;
    let constants = gen.constants();
    Ok(TwistMap::new(Arc::new(gen), constants))
}

/// Generalized standard family S_ε(q, Q) = ½(Q-q)ᵀA⁻¹(Q-q) + ε G(q).
pub fn standard_family(a: DMatrix<f64>, g: TrigPoly, epsilon: f64) -> Result<TwistMap, MapError> {
    Ok(quadratic_integrable(a)?.with_potential(Arc::new(g), epsilon))
}

/// The classic d=1 standard family with kick -cos(2πq)/(2π)².
pub fn standard_map(epsilon: f64) -> TwistMap {
    standard_family(DMatrix::identity(1, 1), TrigPoly::standard_kick(1), epsilon)
        .expect("identity is SPD")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{validate_spec, PhasePoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn shear_maps_by_momentum() {
        let map = shear(1);
        let x = PhasePoint::from_slices(&[0.0], &[0.5]).unwrap();
        let y = map.eval(&x).unwrap();
        assert_eq!(y.q[0], 0.5);
        assert_eq!(y.p[0], 0.5);
    }

    #[test]
    fn standard_family_closed_form_update() {
        let map = standard_map(0.1);
        let x = PhasePoint::from_slices(&[0.25], &[0.0]).unwrap();
        let y = map.eval(&x).unwrap();
        let kick = 0.1 / std::f64::consts::TAU; // εG'(1/4) = ε sin(π/2)/(2π)
        assert!((y.q[0] - (0.25 + kick)).abs() < 1e-15, "Q = {}", y.q[0]);
        assert!((y.p[0] - kick).abs() < 1e-15, "P = {}", y.p[0]);
    }

    #[test]
    fn closed_form_agrees_with_implicit_solve() {
        let map = standard_map(0.1);
        let mut r = rng();
        for _ in 0..50 {
            let x = PhasePoint::from_slices(
                &[r.gen_range(-1.0..1.0)],
                &[r.gen_range(-1.0..1.0)],
            )
            .unwrap();
            let a = map.eval(&x).unwrap();
            let b = map.eval_implicit(&x).unwrap();
            assert!((a.q[0] - b.q[0]).abs() < 1e-11);
            assert!((a.p[0] - b.p[0]).abs() < 1e-11);
        }
    }

    #[test]
    fn lift_equivariance_under_integer_shifts() {
        let map = standard_map(0.3);
        let x = PhasePoint::from_slices(&[0.37], &[0.21]).unwrap();
        let y = map.eval(&x).unwrap();
        for k in [-2_i64, 1, 5] {
            let shifted = PhasePoint::from_slices(&[0.37 + k as f64], &[0.21]).unwrap();
            let ys = map.eval(&shifted).unwrap();
            assert!((ys.q[0] - k as f64 - y.q[0]).abs() < 1e-12, "k={k}");
            assert!((ys.p[0] - y.p[0]).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        let map = standard_map(0.1);
        let x = PhasePoint::from_slices(&[0.5], &[0.5]).unwrap();
        let back = map.eval_inverse(&map.eval(&x).unwrap()).unwrap();
        assert!((back.q[0] - 0.5).abs() < 1e-10);
        assert!((back.p[0] - 0.5).abs() < 1e-10);

        let y = PhasePoint::from_slices(&[0.5], &[0.5]).unwrap();
        let pre = map.eval_inverse(&y).unwrap();
        let fwd = map.eval(&pre).unwrap();
        assert!((fwd.q[0] - 0.5).abs() < 1e-10 && (fwd.p[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn shear_inverse_example() {
        let map = shear(1);
        let x = PhasePoint::from_slices(&[0.5], &[0.5]).unwrap();
        let pre = map.eval_inverse(&x).unwrap();
        assert!((pre.q[0] - 0.0).abs() < 1e-14);
        assert!((pre.p[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn standard_inverse_of_worked_example() {
        let map = standard_map(0.1);
        let x = map
            .eval(&PhasePoint::from_slices(&[0.25], &[0.0]).unwrap())
            .unwrap();
        let pre = map.eval_inverse(&x).unwrap();
        assert!((pre.q[0] - 0.25).abs() < 1e-10);
        assert!(pre.p[0].abs() < 1e-10);
    }

    #[test]
    fn tangent_of_shear_is_unit_shear() {
        let map = shear(1);
        let df = map
            .tangent(&PhasePoint::from_slices(&[0.3], &[-0.7]).unwrap())
            .unwrap();
        let expected = [[1.0, 1.0], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((df[(i, j)] - expected[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tangent_of_standard_family_at_half() {
        // closed form DF = [[1+εG'', 1], [εG'', 1]] with G''(1/2) = -1
        let map = standard_map(0.1);
        let df = map
            .tangent(&PhasePoint::from_slices(&[0.5], &[0.0]).unwrap())
            .unwrap();
        assert!((df[(0, 0)] - 0.9).abs() < 1e-12);
        assert!((df[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((df[(1, 0)] + 0.1).abs() < 1e-12);
        assert!((df[(1, 1)] - 1.0).abs() < 1e-12);
        let det = df[(0, 0)] * df[(1, 1)] - df[(0, 1)] * df[(1, 0)];
        assert!((det - 1.0).abs() < 1e-12);
        assert!((df.trace() - 1.9).abs() < 1e-12);
    }

    #[test]
    fn tangent_determinant_is_one_on_random_points() {
        let map = standard_map(0.1);
        let mut r = rng();
        for _ in 0..100 {
            let x = PhasePoint::from_slices(
                &[r.gen_range(-1.0..1.0)],
                &[r.gen_range(-1.0..1.0)],
            )
            .unwrap();
            let df = map.tangent(&x).unwrap();
            assert!((df.determinant() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn tangent_matches_finite_differences_of_the_map() {
        let map = standard_map(0.2);
        let mut r = rng();
        let h = 1e-6;
        for _ in 0..20 {
            let q0 = r.gen_range(-1.0..1.0);
            let p0 = r.gen_range(-1.0..1.0);
            let df = map
                .tangent(&PhasePoint::from_slices(&[q0], &[p0]).unwrap())
                .unwrap();
            let f = |q: f64, p: f64| {
                let y = map
                    .eval(&PhasePoint::from_slices(&[q], &[p]).unwrap())
                    .unwrap();
                (y.q[0], y.p[0])
            };
            let (qp, pp) = f(q0 + h, p0);
            let (qm, pm) = f(q0 - h, p0);
            let (qp2, pp2) = f(q0, p0 + h);
            let (qm2, pm2) = f(q0, p0 - h);
            let fd = [
                [(qp - qm) / (2.0 * h), (qp2 - qm2) / (2.0 * h)],
                [(pp - pm) / (2.0 * h), (pp2 - pm2) / (2.0 * h)],
            ];
            for i in 0..2 {
                for j in 0..2 {
                    assert!(
                        (df[(i, j)] - fd[i][j]).abs() < 1e-6 * df[(i, j)].abs().max(1.0),
                        "block ({i},{j}): analytic {} vs fd {}",
                        df[(i, j)],
                        fd[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn validate_shear_reports_unit_constants() {
        let map = shear(1);
        let report = validate_spec(&map, 400, &mut rng());
        assert!(report.passes(), "{report:?}");
        assert!((report.alpha_estimate - 1.0).abs() < 1e-12);
        assert!((report.beta_estimate - 1.0).abs() < 1e-12);
        assert!((report.rate_estimate - 2.0).abs() < 1e-12);
    }

    #[test]
    fn validate_diag_family_constants() {
        let a = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0]));
        let map = quadratic_integrable(a).unwrap();
        let report = validate_spec(&map, 400, &mut rng());
        assert!(report.passes(), "{report:?}");
        assert!((report.alpha_estimate - 0.5).abs() < 0.05);
        assert!((report.beta_estimate - 1.0).abs() < 0.05);
        assert!((report.rate_estimate - 2.0).abs() < 1e-12);
        let exact = QuadraticIntegrable::new(DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0])))
            .unwrap()
            .constants();
        assert!((exact.alpha - 0.5).abs() < 1e-15 && (exact.beta - 1.0).abs() < 1e-15);
    }

    #[test]
    fn potential_leaves_positivity_and_rate_unchanged() {
        let plain = shear(1);
        let kicked = standard_map(0.1);
        let rp = validate_spec(&plain, 300, &mut rng());
        let rk = validate_spec(&kicked, 300, &mut rng());
        assert!((rp.alpha_estimate - rk.alpha_estimate).abs() < 1e-12);
        assert!((rp.beta_estimate - rk.beta_estimate).abs() < 1e-12);
        assert!((rp.rate_estimate - rk.rate_estimate).abs() < 1e-12);
    }

    #[test]
    fn trig_poly_derivatives_match_finite_differences() {
        let g = TrigPoly::new(
            2,
            vec![
                TrigTerm { wavevector: vec![1, 0], amplitude: 0.3, phase: 0.4 },
                TrigTerm { wavevector: vec![2, -1], amplitude: -0.2, phase: 1.1 },
            ],
        );
        let q = DVector::from_row_slice(&[0.13, -0.41]);
        let h = 1e-6;
        let grad = g.gradient(&q);
        let hess = g.hessian(&q);
        for i in 0..2 {
            let mut e = DVector::zeros(2);
            e[i] = h;
            let fd = (g.value(&(&q + &e)) - g.value(&(&q - &e))) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7);
            let fg = (g.gradient(&(&q + &e)) - g.gradient(&(&q - &e))) / (2.0 * h);
            for j in 0..2 {
                assert!((fg[j] - hess[(j, i)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn trig_poly_modes_are_conjugate_symmetric() {
        let g = TrigPoly::new(
            2,
            vec![TrigTerm { wavevector: vec![1, 2], amplitude: 0.5, phase: 0.7 }],
        );
        let modes = g.modes().unwrap();
        let plus = modes.get(&vec![1, 2]).unwrap();
        let minus = modes.get(&vec![-1, -2]).unwrap();
        assert!((plus.0 - minus.0).abs() < 1e-15);
        assert!((plus.1 + minus.1).abs() < 1e-15);
    }

    /// A generating function with no closed form, to exercise the implicit
    /// Newton path end to end.
    struct QuarticCoupling;

    impl GeneratingFn for QuarticCoupling {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, q: &DVector<f64>, qn: &DVector<f64>) -> f64 {
            let s = qn[0] - q[0];
            0.5 * s * s + 0.05 * s * s * s * s
        }
        fn d_q(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DVector<f64> {
            let s = qn[0] - q[0];
            DVector::from_row_slice(&[-(s + 0.2 * s * s * s)])
        }
        fn d_qn(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DVector<f64> {
            let s = qn[0] - q[0];
            DVector::from_row_slice(&[s + 0.2 * s * s * s])
        }
        fn d2_qq(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DMatrix<f64> {
            let s = qn[0] - q[0];
            DMatrix::from_row_slice(1, 1, &[1.0 + 0.6 * s * s])
        }
        fn d2_q_qn(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DMatrix<f64> {
            let s = qn[0] - q[0];
            DMatrix::from_row_slice(1, 1, &[-(1.0 + 0.6 * s * s)])
        }
        fn d2_qn_qn(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DMatrix<f64> {
            let s = qn[0] - q[0];
            DMatrix::from_row_slice(1, 1, &[1.0 + 0.6 * s * s])
        }
    }

    #[test]
    fn custom_generating_function_through_newton_path() {
        let gen = QuarticCoupling;
        let constants = estimate_constants_for_test(&gen);
        let map = TwistMap::new(Arc::new(QuarticCoupling), constants);
        let x = PhasePoint::from_slices(&[0.2], &[0.7]).unwrap();
        let y = map.eval(&x).unwrap();
        // exactness of the solve
        let r = (map.ds_dq(&x.q, &y.q) + &x.p).norm();
        assert!(r <= 1e-12, "twist relation residual {r}");
        let back = map.eval_inverse(&y).unwrap();
        assert!((back.q[0] - 0.2).abs() < 1e-10 && (back.p[0] - 0.7).abs() < 1e-10);
    }

    fn estimate_constants_for_test(gen: &dyn GeneratingFn) -> PositivityConstants {
        crate::map::estimate_constants(gen, 2000, &mut rng())
    }
}
