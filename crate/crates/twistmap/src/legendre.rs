//! Fenchel–Legendre duality for completely integrable families.
//!
//! A completely integrable lift (q, p) ↦ (q + ∇ℓ(p), p) has generating
//! function S(q, Q) = h(Q - q) where h is the Fenchel dual of ℓ:
//!
//! ```text
//! h(s) = sup_p ( ⟨s, p⟩ - ℓ(p) ),
//! ```
//!
//! and Legendre duality gives ∇h = (∇ℓ)⁻¹. For the quadratic profile
//! ℓ(p) = ½ pᵀA p the dual is exactly h(s) = ½ sᵀA⁻¹s.

use nalgebra::{DMatrix, DVector};

use crate::error::MapError;

/// A smooth uniformly convex function R^d → R with evaluators for the value,
/// gradient (the frequency map) and Hessian.
pub trait ConvexProfile: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, p: &DVector<f64>) -> f64;
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64>;
}

/// Quadratic profile ℓ(p) = ½ pᵀA p with A symmetric positive definite.
#[derive(Debug, Clone)]
pub struct QuadraticProfile {
    a: DMatrix<f64>,
}

impl QuadraticProfile {
    pub fn new(a: DMatrix<f64>) -> Result<Self, MapError> {
        if a.clone().cholesky().is_none() {
            return Err(MapError::NotPositiveDefinite);
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl ConvexProfile for QuadraticProfile {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, p: &DVector<f64>) -> f64 {
        0.5 * (p.transpose() * &self.a * p)[(0, 0)]
    }

    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.a * p
    }

    fn hessian(&self, _p: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
}

/// Fenchel dual of a convex profile, evaluated by solving ∇ℓ(p) = s with
/// Newton's method. The supremum is attained at the unique critical point
/// because ℓ is uniformly convex.
pub struct FenchelDual<'a> {
    ell: &'a dyn ConvexProfile,
}

impl<'a> FenchelDual<'a> {
    pub fn new(ell: &'a dyn ConvexProfile) -> Self {
        Self { ell }
    }

    /// The maximizer p*(s) with ∇ℓ(p*) = s, i.e. ∇h(s).
    pub fn gradient(&self, s: &DVector<f64>) -> Result<DVector<f64>, MapError> {
        let mut p = s.clone();
        for _ in 0..60 {
            let res = self.ell.gradient(&p) - s;
            if res.norm() <= 1e-13 {
                return Ok(p);
            }
            let step = self
                .ell
                .hessian(&p)
                .lu()
                .solve(&-res)
                .ok_or(MapError::SingularTwistBlock)?;
            p += step;
        }
        let res = (self.ell.gradient(&p) - s).norm();
        if res <= 1e-10 {
            Ok(p)
        } else {
            Err(MapError::NonConvergence { iters: 60, residual: res })
        }
    }

    /// h(s) = ⟨s, p*⟩ - ℓ(p*).
    pub fn value(&self, s: &DVector<f64>) -> Result<f64, MapError> {
        let p = self.gradient(s)?;
        Ok(s.dot(&p) - self.ell.value(&p))
    }

    /// D²h(s) = (D²ℓ(p*))⁻¹.
    pub fn hessian(&self, s: &DVector<f64>) -> Result<DMatrix<f64>, MapError> {
        let p = self.gradient(s)?;
        self.ell
            .hessian(&p)
            .try_inverse()
            .ok_or(MapError::SingularTwistBlock)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_dual_is_inverse_quadratic() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let ell = QuadraticProfile::new(a.clone()).unwrap();
        let dual = FenchelDual::new(&ell);
        let a_inv = a.try_inverse().unwrap();
        for s in [
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[-0.3, 0.7]),
            DVector::from_row_slice(&[2.0, -1.5]),
        ] {
            let expect = 0.5 * (s.transpose() * &a_inv * &s)[(0, 0)];
            let got = dual.value(&s).unwrap();
            assert!((got - expect).abs() < 1e-12, "h({s:?}) = {got}, want {expect}");
        }
    }

    /// Non-quadratic convex profile ℓ(p) = ½‖p‖² + 0.1 Σ cosh(p_i).
    struct CoshProfile(usize);

    impl ConvexProfile for CoshProfile {
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, p: &DVector<f64>) -> f64 {
            0.5 * p.norm_squared() + 0.1 * p.iter().map(|x| x.cosh()).sum::<f64>()
        }
        fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
            DVector::from_fn(self.0, |i, _| p[i] + 0.1 * p[i].sinh())
        }
        fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_fn(self.0, self.0, |i, j| {
                if i == j {
                    1.0 + 0.1 * p[i].cosh()
                } else {
                    0.0
                }
            })
        }
    }

    #[test]
    fn legendre_duality_grad_h_inverts_grad_ell() {
        let ell = CoshProfile(2);
        let dual = FenchelDual::new(&ell);
        for p in [
            DVector::from_row_slice(&[0.2, -0.9]),
            DVector::from_row_slice(&[1.4, 0.3]),
        ] {
            let s = ell.gradient(&p);
            let back = dual.gradient(&s).unwrap();
            assert!((back - &p).norm() < 1e-8, "∇h ∘ ∇ℓ should be the identity");
        }
    }

    #[test]
    fn dual_hessian_inverts_profile_hessian() {
        let ell = CoshProfile(1);
        let dual = FenchelDual::new(&ell);
        let p = DVector::from_row_slice(&[0.6]);
        let s = ell.gradient(&p);
        let dh = dual.hessian(&s).unwrap();
        let dl = ell.hessian(&p);
        assert!(((&dh * &dl)[(0, 0)] - 1.0).abs() < 1e-10);
    }
}
