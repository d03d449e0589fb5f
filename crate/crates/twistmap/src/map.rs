//! Symplectic twist maps of the annulus T^d × R^d defined by generating
//! functions.
//!
//! A lift F(q, p) = (Q, P) is encoded by a scalar generating function
//! S(q, Q) through the exactness relations
//!
//! ```text
//! p = -∂S/∂q (q, Q),      P = ∂S/∂Q (q, Q),
//! ```
//!
//! together with the shift periodicity S(q + k, Q + k) = S(q, Q) for integer
//! k. Strong positivity of the mixed block ∂²S/∂q∂Q makes the relation
//! p = -∂S/∂q solvable for Q, so the forward map is computed by a damped
//! Newton iteration (or a closed form when the family provides one).
//!
//! A potential term ε·G(q) added to S deforms the map exactly:
//! F_ε(q, p) = F(q, p + ε∇G(q)), which is how perturbed families are
//! evaluated here.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::MapError;

/// Maximum iterations for the inner Newton solve on the twist relation.
const NEWTON_MAX_ITERS: usize = 50;
/// Absolute residual target for the inner Newton solve.
const NEWTON_TOL: f64 = 1e-12;

/// A lifted phase-space point (q, p) ∈ R^d × R^d.
///
/// Angle variables are stored as lifted reals; reduction mod 1 happens only
/// at reporting time.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl PhasePoint {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Result<Self, MapError> {
        if q.len() != p.len() {
            return Err(MapError::DimensionMismatch {
                expected: q.len(),
                got: p.len(),
            });
        }
        if !(q.iter().all(|x| x.is_finite()) && p.iter().all(|x| x.is_finite())) {
            return Err(MapError::NonFinite);
        }
        Ok(Self { q, p })
    }

    /// Convenience constructor from slices.
    pub fn from_slices(q: &[f64], p: &[f64]) -> Result<Self, MapError> {
        Self::new(DVector::from_row_slice(q), DVector::from_row_slice(p))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Evaluator interface for a generating function S(q, qn) and its
/// derivatives up to second order. `qn` is the image configuration (the
/// second slot of S).
///
/// Index convention for the mixed block: `d2_q_qn(q, qn)[(i, j)]` is
/// ∂²S/∂q_i ∂qn_j.
pub trait GeneratingFn: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, q: &DVector<f64>, qn: &DVector<f64>) -> f64;
    fn d_q(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DVector<f64>;
    fn d_qn(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DVector<f64>;
    fn d2_qq(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DMatrix<f64>;
    fn d2_q_qn(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DMatrix<f64>;
    fn d2_qn_qn(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DMatrix<f64>;

    /// Closed-form image (Q, P) of (q, p) under the unperturbed map, when
    /// the family has one. The default forces the implicit Newton solve.
    fn explicit_forward(&self, _q: &DVector<f64>, _p: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }

    /// Closed-form preimage (q, p) of (qn, pn), when available.
    fn explicit_inverse(&self, _qn: &DVector<f64>, _pn: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }
}

/// Fourier modes of a real potential: ν ↦ Ĝ(ν) with Ĝ(-ν) = conj Ĝ(ν).
/// Keys are integer wavevectors; values are (re, im) pairs.
pub type ModeMap = BTreeMap<Vec<i64>, (f64, f64)>;

/// A periodic potential G: T^d → R with gradient and Hessian evaluators.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, q: &DVector<f64>) -> f64;
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// Finite Fourier support when the potential is a trigonometric
    /// polynomial; `None` for general potentials.
    fn modes(&self) -> Option<ModeMap> {
        None
    }
}

/// Strong-positivity constants of a generating function:
/// -β‖v‖² ≤ ∂²S/∂q∂Q (v, v) ≤ -α‖v‖², plus the optional rate bound
/// ‖∂²S/∂q²‖∞ + ‖∂²S/∂Q²‖∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityConstants {
    pub alpha: f64,
    pub beta: f64,
    /// `None` means unbounded rate.
    pub rate_bound: Option<f64>,
}

/// A symplectic twist map S_ε(q, Q) = S(q, Q) + ε·G(q), immutable after
/// construction and safe to share across workers. With no potential this is
/// a plain map; with one it is a member of an exact symplectic deformation
/// family.
#[derive(Clone)]
pub struct TwistMap {
    base: Arc<dyn GeneratingFn>,
    potential: Option<Arc<dyn Potential>>,
    epsilon: f64,
    constants: PositivityConstants,
}

impl TwistMap {
    pub fn new(base: Arc<dyn GeneratingFn>, constants: PositivityConstants) -> Self {
        Self {
            base,
            potential: None,
            epsilon: 0.0,
            constants,
        }
    }

    /// Attach a potential term ε·G(q) to the generating function.
    pub fn with_potential(mut self, g: Arc<dyn Potential>, epsilon: f64) -> Self {
        assert_eq!(g.dim(), self.dim(), "potential dimension mismatch");
        self.potential = Some(g);
        self.epsilon = epsilon;
        self
    }

    /// Same family at a different perturbation strength.
    pub fn at_epsilon(&self, epsilon: f64) -> Self {
        let mut other = self.clone();
        other.epsilon = epsilon;
        other
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn potential(&self) -> Option<&Arc<dyn Potential>> {
        self.potential.as_ref()
    }

    pub fn base(&self) -> &Arc<dyn GeneratingFn> {
        &self.base
    }

    pub fn constants(&self) -> PositivityConstants {
        self.constants
    }

    /// Effective generating function value S_ε(q, qn) = S(q, qn) + ε G(q).
    pub fn s(&self, q: &DVector<f64>, qn: &DVector<f64>) -> f64 {
        let mut v = self.base.value(q, qn);
        if let Some(g) = &self.potential {
            v += self.epsilon * g.value(q);
        }
        v
    }

    /// ∂S_ε/∂q = ∂S/∂q + ε ∇G(q).
    pub fn ds_dq(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DVector<f64> {
        let mut v = self.base.d_q(q, qn);
        if let Some(g) = &self.potential {
            v += g.gradient(q) * self.epsilon;
        }
        v
    }

    /// ∂S_ε/∂qn (the potential contributes nothing here).
    pub fn ds_dqn(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DVector<f64> {
        self.base.d_qn(q, qn)
    }

    /// ∂²S_ε/∂q² = ∂²S/∂q² + ε D²G(q).
    pub fn d2s_qq(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.base.d2_qq(q, qn);
        if let Some(g) = &self.potential {
            m += g.hessian(q) * self.epsilon;
        }
        m
    }

    /// Mixed block ∂²S_ε/∂q∂qn, untouched by the potential.
    pub fn d2s_q_qn(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DMatrix<f64> {
        self.base.d2_q_qn(q, qn)
    }

    pub fn d2s_qn_qn(&self, q: &DVector<f64>, qn: &DVector<f64>) -> DMatrix<f64> {
        self.base.d2_qn_qn(q, qn)
    }

    /// Momentum after absorbing the potential kick: p + ε∇G(q).
    fn kicked_momentum(&self, q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        match &self.potential {
            Some(g) => p + g.gradient(q) * self.epsilon,
            None => p.clone(),
        }
    }

    /// Forward image F_ε(q, p). Uses the family's closed form when present,
    /// otherwise the implicit Newton solve on the twist relation.
    pub fn eval(&self, x: &PhasePoint) -> Result<PhasePoint, MapError> {
        self.check_dim(x)?;
        let p_eff = self.kicked_momentum(&x.q, &x.p);
        if let Some((qn, pn)) = self.base.explicit_forward(&x.q, &p_eff) {
            return PhasePoint::new(qn, pn);
        }
        self.forward_newton(&x.q, &p_eff)
    }

    /// Forward image computed by the implicit Newton solve even when a
    /// closed form exists. Exposed so the two routes can be cross-checked.
    pub fn eval_implicit(&self, x: &PhasePoint) -> Result<PhasePoint, MapError> {
        self.check_dim(x)?;
        let p_eff = self.kicked_momentum(&x.q, &x.p);
        self.forward_newton(&x.q, &p_eff)
    }

    /// Preimage F_ε⁻¹(Q, P): solve ∂S/∂Q (q, Q) = P for q, then
    /// p = -∂S/∂q (q, Q) - ε∇G(q).
    pub fn eval_inverse(&self, x: &PhasePoint) -> Result<PhasePoint, MapError> {
        self.check_dim(x)?;
        let (q, p_eff) = match self.base.explicit_inverse(&x.q, &x.p) {
            Some(pair) => pair,
            None => self.inverse_newton(&x.q, &x.p)?,
        };
        let p = match &self.potential {
            Some(g) => &p_eff - g.gradient(&q) * self.epsilon,
            None => p_eff,
        };
        PhasePoint::new(q, p)
    }

    /// n-fold forward iterate.
    pub fn iterate(&self, x: &PhasePoint, n: usize) -> Result<PhasePoint, MapError> {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.eval(&y)?;
        }
        Ok(y)
    }

    /// Tangent map DF_ε at x, a 2d×2d symplectic matrix in (δq, δp) blocks.
    ///
    /// With M = ∂²S/∂q∂Q, H = ∂²S_ε/∂q², K = ∂²S/∂Q² evaluated at
    /// (q, Q(q, p)):
    ///
    /// ```text
    ///        [ -M⁻¹ H          -M⁻¹      ]
    /// DF  =  [ Mᵀ - K M⁻¹ H    -K M⁻¹    ]
    /// ```
    pub fn tangent(&self, x: &PhasePoint) -> Result<DMatrix<f64>, MapError> {
        let image = self.eval(x)?;
        self.tangent_at_pair(&x.q, &image.q)
    }

    /// Tangent map assembled from a known (q, Q) generating pair.
    pub fn tangent_at_pair(&self, q: &DVector<f64>, qn: &DVector<f64>) -> Result<DMatrix<f64>, MapError> {
        let d = self.dim();
        let m = self.d2s_q_qn(q, qn);
        let h = self.d2s_qq(q, qn);
        let k = self.d2s_qn_qn(q, qn);
        let m_lu = m.clone().lu();
        if m_lu.determinant().abs() < 1e-14 {
            return Err(MapError::SingularTwistBlock);
        }
        let m_inv = m_lu.try_inverse().ok_or(MapError::SingularTwistBlock)?;
        let tl = -(&m_inv) * &h;
        let tr = -m_inv.clone();
        let bl = m.transpose() - &k * &m_inv * &h;
        let br = -(&k) * &m_inv;
        let mut df = DMatrix::zeros(2 * d, 2 * d);
        df.view_mut((0, 0), (d, d)).copy_from(&tl);
        df.view_mut((0, d), (d, d)).copy_from(&tr);
        df.view_mut((d, 0), (d, d)).copy_from(&bl);
        df.view_mut((d, d), (d, d)).copy_from(&br);
        Ok(df)
    }

    fn check_dim(&self, x: &PhasePoint) -> Result<(), MapError> {
        if x.dim() != self.dim() {
            return Err(MapError::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// Damped Newton on r(Q) = ∂S/∂q (q, Q) + p_eff = 0, starting from the
    /// strong-positivity prediction Q = q + p_eff/α.
    fn forward_newton(&self, q: &DVector<f64>, p_eff: &DVector<f64>) -> Result<PhasePoint, MapError> {
        let alpha = self.constants.alpha.max(1e-8);
        let mut qn = q + p_eff / alpha;
        let mut res = self.base.d_q(q, &qn) + p_eff;
        for _ in 0..NEWTON_MAX_ITERS {
            if res.norm() <= NEWTON_TOL {
                let pn = self.base.d_qn(q, &qn);
                return PhasePoint::new(qn, pn);
            }
            let jac = self.base.d2_q_qn(q, &qn);
            let lu = jac.lu();
            if lu.determinant().abs() < 1e-300 {
                return Err(MapError::SingularTwistBlock);
            }
            let step = lu
                .solve(&(-&res))
                .ok_or(MapError::SingularTwistBlock)?;
            // Backtrack until the residual actually shrinks.
            let mut t = 1.0;
            let base_norm = res.norm();
            loop {
                let trial = &qn + &step * t;
                let trial_res = self.base.d_q(q, &trial) + p_eff;
                if trial_res.norm() < base_norm || t < 1e-4 {
                    qn = trial;
                    res = trial_res;
                    break;
                }
                t *= 0.5;
            }
        }
        if res.norm() <= NEWTON_TOL {
            let pn = self.base.d_qn(q, &qn);
            return PhasePoint::new(qn, pn);
        }
        Err(MapError::NonConvergence {
            iters: NEWTON_MAX_ITERS,
            residual: res.norm(),
        })
    }

    /// Damped Newton on r(q) = ∂S/∂Q (q, Q) - P = 0.
    fn inverse_newton(&self, qn: &DVector<f64>, pn: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>), MapError> {
        let alpha = self.constants.alpha.max(1e-8);
        let mut q = qn - pn / alpha;
        let mut res = self.base.d_qn(&q, qn) - pn;
        for _ in 0..NEWTON_MAX_ITERS {
            if res.norm() <= NEWTON_TOL {
                let p_eff = -self.base.d_q(&q, qn);
                return Ok((q, p_eff));
            }
            let jac = self.base.d2_q_qn(&q, qn).transpose();
            let lu = jac.lu();
            if lu.determinant().abs() < 1e-300 {
                return Err(MapError::SingularTwistBlock);
            }
            let step = lu
                .solve(&(-&res))
                .ok_or(MapError::SingularTwistBlock)?;
            let mut t = 1.0;
            let base_norm = res.norm();
            loop {
                let trial = &q + &step * t;
                let trial_res = self.base.d_qn(&trial, qn) - pn;
                if trial_res.norm() < base_norm || t < 1e-4 {
                    q = trial;
                    res = trial_res;
                    break;
                }
                t *= 0.5;
            }
        }
        if res.norm() <= NEWTON_TOL {
            let p_eff = -self.base.d_q(&q, qn);
            return Ok((q, p_eff));
        }
        Err(MapError::NonConvergence {
            iters: NEWTON_MAX_ITERS,
            residual: res.norm(),
        })
    }
}

/// Structural validation report: sampled residuals for periodicity,
/// derivative/finite-difference consistency, estimated positivity constants
/// and rate bound, plus exactness and symplecticity of the assembled map.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub periodicity_residual: f64,
    pub gradient_fd_error: f64,
    pub hessian_fd_error: f64,
    /// min over samples of the Rayleigh quotient of -∂²S/∂q∂Q.
    pub alpha_estimate: f64,
    /// max over samples of the Rayleigh quotient of -∂²S/∂q∂Q.
    pub beta_estimate: f64,
    /// max over samples of ‖∂²S/∂q²‖ + ‖∂²S/∂Q²‖ (spectral norms, base S).
    pub rate_estimate: f64,
    pub exactness_residual: f64,
    pub symplectic_residual: f64,
    pub twist_positive: bool,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.periodicity_residual <= 1e-9
            && self.gradient_fd_error <= 1e-6
            && self.hessian_fd_error <= 1e-6
            && self.exactness_residual <= 1e-12
            && self.symplectic_residual <= 1e-10
            && self.twist_positive
    }
}

/// Sample structural residuals of a map. The positivity constants α, β are
/// estimated as extremal Rayleigh quotients of -∂²S/∂q∂Q over the samples;
/// the rate estimate uses the unperturbed S (a potential ε·G(q) leaves α, β
/// and the declared rate untouched).
pub fn validate_spec<R: Rng>(map: &TwistMap, samples: usize, rng: &mut R) -> ValidationReport {
    let d = map.dim();
    let mut periodicity = 0.0_f64;
    let mut grad_err = 0.0_f64;
    let mut hess_err = 0.0_f64;
    let mut alpha = f64::INFINITY;
    let mut beta = f64::NEG_INFINITY;
    let mut rate = 0.0_f64;
    let mut exact = 0.0_f64;
    let mut sympl = 0.0_f64;
    let mut twist_ok = true;
    let jmat = standard_symplectic_matrix(d);

    for _ in 0..samples {
        let q = DVector::from_fn(d, |_, _| rng.gen_range(-1.5..1.5));
        let qn = &q + DVector::from_fn(d, |_, _| rng.gen_range(-1.5..1.5));
        let v = random_unit(d, rng);

        // Shift periodicity of the full S_ε on a random integer vector.
        let k = DVector::from_fn(d, |_, _| rng.gen_range(-3_i64..=3) as f64);
        let shifted = map.s(&(&q + &k), &(&qn + &k));
        periodicity = periodicity.max((shifted - map.s(&q, &qn)).abs());

        // Analytic derivatives vs central differences of S_ε.
        grad_err = grad_err.max(gradient_fd_error(map, &q, &qn));
        hess_err = hess_err.max(hessian_fd_error(map, &q, &qn));

        // Rayleigh quotients of the mixed block.
        let m = map.d2s_q_qn(&q, &qn);
        let ray = -(v.transpose() * &m * &v)[(0, 0)];
        alpha = alpha.min(ray);
        beta = beta.max(ray);
        if ray <= 0.0 {
            twist_ok = false;
        }

        // Rate from the base blocks.
        let hqq = map.base.d2_qq(&q, &qn);
        let hkk = map.base.d2_qn_qn(&q, &qn);
        rate = rate.max(spectral_norm(&hqq) + spectral_norm(&hkk));

        // Exactness and symplecticity of the assembled map at (q, p).
        let p = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        if let Ok(x) = PhasePoint::new(q.clone(), p.clone()) {
            if let Ok(image) = map.eval(&x) {
                let r1 = (map.ds_dq(&q, &image.q) + &p).norm();
                let r2 = (map.ds_dqn(&q, &image.q) - &image.p).norm();
                exact = exact.max(r1.max(r2));
            }
            if let Ok(df) = map.tangent(&x) {
                let res = df.transpose() * &jmat * &df - &jmat;
                sympl = sympl.max(res.amax());
            }
        }
    }

    ValidationReport {
        samples,
        periodicity_residual: periodicity,
        gradient_fd_error: grad_err,
        hessian_fd_error: hess_err,
        alpha_estimate: alpha,
        beta_estimate: beta,
        rate_estimate: rate,
        exactness_residual: exact,
        symplectic_residual: sympl,
        twist_positive: twist_ok,
    }
}

/// The 2d×2d matrix J with blocks [[0, I], [-I, 0]].
pub fn standard_symplectic_matrix(d: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        j[(i, d + i)] = 1.0;
        j[(d + i, i)] = -1.0;
    }
    j
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn random_unit<R: Rng>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Max relative error between analytic gradients of S_ε and central finite
/// differences (step 1e-5).
pub fn gradient_fd_error(map: &TwistMap, q: &DVector<f64>, qn: &DVector<f64>) -> f64 {
    let h = 1e-5;
    let d = map.dim();
    let gq = map.ds_dq(q, qn);
    let gn = map.ds_dqn(q, qn);
    let mut worst = 0.0_f64;
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = h;
        let fd_q = (map.s(&(q + &e), qn) - map.s(&(q - &e), qn)) / (2.0 * h);
        let fd_n = (map.s(q, &(qn + &e)) - map.s(q, &(qn - &e))) / (2.0 * h);
        worst = worst.max((fd_q - gq[i]).abs() / gq[i].abs().max(1.0));
        worst = worst.max((fd_n - gn[i]).abs() / gn[i].abs().max(1.0));
    }
    worst
}

/// Max relative error between analytic Hessian blocks of S_ε and central
/// finite differences of the gradients.
pub fn hessian_fd_error(map: &TwistMap, q: &DVector<f64>, qn: &DVector<f64>) -> f64 {
    let h = 1e-5;
    let d = map.dim();
    let hqq = map.d2s_qq(q, qn);
    let hqn = map.d2s_q_qn(q, qn);
    let hnn = map.d2s_qn_qn(q, qn);
    let mut worst = 0.0_f64;
    for j in 0..d {
        let mut e = DVector::zeros(d);
        e[j] = h;
        let fd_qq = (map.ds_dq(&(q + &e), qn) - map.ds_dq(&(q - &e), qn)) / (2.0 * h);
        let fd_qn = (map.ds_dq(q, &(qn + &e)) - map.ds_dq(q, &(qn - &e))) / (2.0 * h);
        let fd_nn = (map.ds_dqn(q, &(qn + &e)) - map.ds_dqn(q, &(qn - &e))) / (2.0 * h);
        for i in 0..d {
            worst = worst.max((fd_qq[i] - hqq[(i, j)]).abs() / hqq[(i, j)].abs().max(1.0));
            worst = worst.max((fd_qn[i] - hqn[(i, j)]).abs() / hqn[(i, j)].abs().max(1.0));
            worst = worst.max((fd_nn[i] - hnn[(i, j)]).abs() / hnn[(i, j)].abs().max(1.0));
        }
    }
    worst
}

/// Estimate positivity constants by sampling when they are not known
/// analytically.
pub fn estimate_constants<R: Rng>(gen: &dyn GeneratingFn, samples: usize, rng: &mut R) -> PositivityConstants {
    let d = gen.dim();
    let mut alpha = f64::INFINITY;
    let mut beta = f64::NEG_INFINITY;
    let mut rate = 0.0_f64;
    for _ in 0..samples {
        let q = DVector::from_fn(d, |_, _| rng.gen_range(-1.5..1.5));
        let qn = &q + DVector::from_fn(d, |_, _| rng.gen_range(-1.5..1.5));
        let v = random_unit(d, rng);
        let m = gen.d2_q_qn(&q, &qn);
        let ray = -(v.transpose() * &m * &v)[(0, 0)];
        alpha = alpha.min(ray);
        beta = beta.max(ray);
        rate = rate.max(spectral_norm(&gen.d2_qq(&q, &qn)) + spectral_norm(&gen.d2_qn_qn(&q, &qn)));
    }
    PositivityConstants {
        alpha,
        beta,
        rate_bound: Some(rate),
    }
}
