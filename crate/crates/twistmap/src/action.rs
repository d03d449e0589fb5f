//! Discrete variational structure of twist maps: actions of finite
//! configuration segments, their gradients and block-tridiagonal Hessians,
//! constrained minimizers, the subharmonic potential W of an (m, n) rotation
//! vector with its periodicity defect, and the first-order (Melnikov)
//! potential of a perturbed family.
//!
//! The action of a segment (q_0, …, q_N) is Σ_j S_ε(q_j, q_{j+1}). Interior
//! critical points satisfy the orbit equations
//! ∂S/∂Q (q_{j-1}, q_j) + ∂S/∂q (q_j, q_{j+1}) = 0, so minimizers pulled
//! back through p_j = -∂S/∂q (q_j, q_{j+1}) are genuine orbit segments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ActionError, RotationError};
use crate::map::{Potential, TwistMap};

/// Gradient norm target for minimizers.
const GRAD_TOL: f64 = 1e-11;
/// Smallest-eigenvalue slack for the positive-semidefinite certificate.
const CERT_TOL: f64 = -1e-9;
/// Action gap below which two local minimizers count as tied.
const TIE_TOL: f64 = 1e-12;

/// A rational rotation vector (m, n) with m ∈ Z^d, n ≥ 1 and
/// gcd(m_1, …, m_d, n) = 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RotationVector {
    m: Vec<i64>,
    n: i64,
}

impl RotationVector {
    pub fn new(m: Vec<i64>, n: i64) -> Result<Self, RotationError> {
        if m.is_empty() {
            return Err(RotationError::EmptyVector);
        }
        if n < 1 {
            return Err(RotationError::NonPositivePeriod);
        }
        let mut g = n;
        for &mi in &m {
            g = gcd(g, mi.abs());
        }
        if g != 1 {
            return Err(RotationError::NotCoprime { m, n, gcd: g });
        }
        Ok(Self { m, n })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self) -> &[i64] {
        &self.m
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    /// The lattice shift m as a real vector.
    pub fn shift(&self) -> DVector<f64> {
        DVector::from_fn(self.m.len(), |i, _| self.m[i] as f64)
    }

    /// One step of the resonant translation, m/n.
    pub fn step(&self) -> DVector<f64> {
        self.shift() / self.n as f64
    }
}

impl std::fmt::Display for RotationVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({:?}, {})", self.m, self.n)
    }
}

impl<'de> Deserialize<'de> for RotationVector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            m: Vec<i64>,
            n: i64,
        }
        let raw = Raw::deserialize(de)?;
        RotationVector::new(raw.m, raw.n).map_err(serde::de::Error::custom)
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Boundary condition of a configuration path.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryKind {
    /// All points are variables.
    Free,
    /// First and last points are pinned.
    FixedEndpoints,
    /// q_N = q_0 + m with N = n; endpoints pinned to the shift.
    PeriodicShift(RotationVector),
}

/// A finite configuration segment q_0, …, q_N with a boundary tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationPath {
    pub points: Vec<DVector<f64>>,
    pub boundary: BoundaryKind,
}

impl ConfigurationPath {
    pub fn new(points: Vec<DVector<f64>>, boundary: BoundaryKind) -> Result<Self, ActionError> {
        if points.len() < 2 {
            return Err(ActionError::PathTooShort);
        }
        if let BoundaryKind::PeriodicShift(rot) = &boundary {
            let n = points.len() - 1;
            if n != rot.n() as usize {
                return Err(ActionError::BoundaryMismatch);
            }
            let gap = (points[n].clone() - &points[0] - rot.shift()).amax();
            if gap > 1e-9 {
                return Err(ActionError::BoundaryMismatch);
            }
        }
        Ok(Self { points, boundary })
    }

    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    /// Indices of the variable points under the boundary tag.
    fn free_range(&self) -> std::ops::Range<usize> {
        match self.boundary {
            BoundaryKind::Free => 0..self.points.len(),
            _ => 1..self.points.len() - 1,
        }
    }
}

/// Symmetric block-tridiagonal matrix with d×d blocks; the sub-diagonal is
/// the transpose of `upper`.
#[derive(Debug, Clone)]
pub struct BlockTridiag {
    d: usize,
    pub diag: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
}

impl BlockTridiag {
    pub fn zeros(nblocks: usize, d: usize) -> Self {
        Self {
            d,
            diag: vec![DMatrix::zeros(d, d); nblocks],
            upper: vec![DMatrix::zeros(d, d); nblocks.saturating_sub(1)],
        }
    }

    pub fn nblocks(&self) -> usize {
        self.diag.len()
    }

    pub fn size(&self) -> usize {
        self.d * self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let k = self.nblocks();
        let mut m = DMatrix::zeros(k * self.d, k * self.d);
        for j in 0..k {
            m.view_mut((j * self.d, j * self.d), (self.d, self.d)).copy_from(&self.diag[j]);
        }
        for j in 0..k.saturating_sub(1) {
            m.view_mut((j * self.d, (j + 1) * self.d), (self.d, self.d)).copy_from(&self.upper[j]);
            m.view_mut(((j + 1) * self.d, j * self.d), (self.d, self.d))
                .copy_from(&self.upper[j].transpose());
        }
        m
    }

    /// Add τ to the diagonal.
    pub fn shift_diagonal(&mut self, tau: f64) {
        for b in &mut self.diag {
            for i in 0..self.d {
                b[(i, i)] += tau;
            }
        }
    }

    /// Thomas-style block elimination with Cholesky pivots. Returns `None`
    /// when the matrix is not positive definite (some Schur complement
    /// fails to factor), which callers use as an indefiniteness signal.
    pub fn cholesky_solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let k = self.nblocks();
        let d = self.d;
        assert_eq!(rhs.len(), k * d);
        let mut pivots: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>> = Vec::with_capacity(k);
        let mut w: Vec<DVector<f64>> = Vec::with_capacity(k);
        let mut c = self.diag[0].clone();
        for j in 0..k {
            if j > 0 {
                let a_prev = &self.upper[j - 1];
                // Schur complement: C_j = B_j - A_{j-1}ᵀ C_{j-1}⁻¹ A_{j-1}
                let solved = pivots[j - 1].solve(a_prev);
                c = &self.diag[j] - a_prev.transpose() * solved;
            }
            let chol = c.clone().cholesky()?;
            let r_j = rhs.rows(j * d, d).into_owned();
            let w_j = if j == 0 {
                r_j
            } else {
                let prev = pivots[j - 1].solve(&w[j - 1]);
                r_j - self.upper[j - 1].transpose() * prev
            };
            pivots.push(chol);
            w.push(w_j);
        }
        let mut x: Vec<DVector<f64>> = vec![DVector::zeros(d); k];
        x[k - 1] = pivots[k - 1].solve(&w[k - 1]);
        for j in (0..k - 1).rev() {
            let rhs_j = &w[j] - &self.upper[j] * &x[j + 1];
            x[j] = pivots[j].solve(&rhs_j);
        }
        let mut out = DVector::zeros(k * d);
        for j in 0..k {
            out.rows_mut(j * d, d).copy_from(&x[j]);
        }
        Some(out)
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        let dense = self.to_dense();
        let sym = (&dense + dense.transpose()) * 0.5;
        sym.symmetric_eigen().eigenvalues.min()
    }
}

/// Action of a path together with its gradient and Hessian over the free
/// points.
#[derive(Debug, Clone)]
pub struct ActionEvaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: BlockTridiag,
}

/// Evaluate the action Σ_j S_ε(q_j, q_{j+1}) with derivatives over the free
/// points of the path.
pub fn action(map: &TwistMap, path: &ConfigurationPath) -> Result<ActionEvaluation, ActionError> {
    if path.points.len() < 2 {
        return Err(ActionError::PathTooShort);
    }
    let d = map.dim();
    let pts = &path.points;
    let value: f64 = (0..pts.len() - 1).map(|j| map.s(&pts[j], &pts[j + 1])).sum();

    let range = path.free_range();
    let free: Vec<usize> = range.collect();
    let k = free.len();
    let mut gradient = DVector::zeros(k * d);
    let mut hessian = BlockTridiag::zeros(k, d);

    for (slot, &j) in free.iter().enumerate() {
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        if j > 0 {
            g += map.ds_dqn(&pts[j - 1], &pts[j]);
            h += map.d2s_qn_qn(&pts[j - 1], &pts[j]);
        }
        if j + 1 < pts.len() {
            g += map.ds_dq(&pts[j], &pts[j + 1]);
            h += map.d2s_qq(&pts[j], &pts[j + 1]);
        }
        gradient.rows_mut(slot * d, d).copy_from(&g);
        hessian.diag[slot] = h;
        if slot + 1 < k && free[slot + 1] == j + 1 {
            hessian.upper[slot] = map.d2s_q_qn(&pts[j], &pts[j + 1]);
        }
    }
    Ok(ActionEvaluation { value, gradient, hessian })
}

/// Momenta along a path: p_j = -∂S_ε/∂q (q_j, q_{j+1}) for j < N, and the
/// arrival momentum p_N = ∂S_ε/∂Q (q_{N-1}, q_N).
pub fn path_momenta(map: &TwistMap, points: &[DVector<f64>]) -> (Vec<DVector<f64>>, DVector<f64>) {
    let mut ps = Vec::with_capacity(points.len() - 1);
    for j in 0..points.len() - 1 {
        ps.push(-map.ds_dq(&points[j], &points[j + 1]));
    }
    let p_end = map.ds_dqn(&points[points.len() - 2], &points[points.len() - 1]);
    (ps, p_end)
}

/// Result of a multistart constrained minimization.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub path: ConfigurationPath,
    pub value: f64,
    pub grad_norm: f64,
    pub hessian_min_eig: f64,
    /// Number of distinct local minimizers found by the multistart.
    pub multiplicity: usize,
}

/// Minimize the action over interior points with pinned endpoints, using
/// damped Newton steps on the block-tridiagonal system with Armijo
/// backtracking; indefinite Hessians are shifted until they factor.
///
/// The multistart runs 1 + 2d + N seeds: the straight segment plus interior
/// copies shifted by ±1/(2N) along each axis and by k/N along the segment
/// direction. The smallest-action minimizer wins; ties within 1e-12 go to
/// the lexicographically smallest interior point.
pub fn minimize_fixed_endpoints(
    map: &TwistMap,
    q_start: &DVector<f64>,
    q_end: &DVector<f64>,
    steps: usize,
) -> Result<MinimizeResult, ActionError> {
    assert!(steps >= 1, "need at least one step");
    let d = map.dim();
    if steps == 1 {
        // no interior freedom: the two-point path is the minimizer
        let path = ConfigurationPath::new(vec![q_start.clone(), q_end.clone()], BoundaryKind::FixedEndpoints)?;
        let value = map.s(q_start, q_end);
        return Ok(MinimizeResult {
            path,
            value,
            grad_norm: 0.0,
            hessian_min_eig: f64::INFINITY,
            multiplicity: 1,
        });
    }

    let straight: Vec<DVector<f64>> = (0..=steps)
        .map(|j| q_start + (q_end - q_start) * (j as f64 / steps as f64))
        .collect();
    let dir = {
        let diff = q_end - q_start;
        let n = diff.norm();
        if n > 1e-12 {
            diff / n
        } else {
            DVector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 })
        }
    };

    let mut seeds: Vec<Vec<DVector<f64>>> = vec![straight.clone()];
    let shift = 1.0 / (2.0 * steps as f64);
    for axis in 0..d {
        for sign in [1.0, -1.0] {
            let mut s = straight.clone();
            for q in s.iter_mut().take(steps).skip(1) {
                q[axis] += sign * shift;
            }
            seeds.push(s);
        }
    }
    for k in 1..=steps {
        let mut s = straight.clone();
        let offset = &dir * (k as f64 / steps as f64);
        for q in s.iter_mut().take(steps).skip(1) {
            *q += &offset;
        }
        seeds.push(s);
    }

    let mut found: Vec<(f64, Vec<DVector<f64>>, f64, f64)> = Vec::new();
    for seed in &seeds {
        if let Some((pts, value, gnorm)) = newton_minimize(map, seed, BoundaryKind::FixedEndpoints) {
            let path = ConfigurationPath { points: pts.clone(), boundary: BoundaryKind::FixedEndpoints };
            let eval = action(map, &path)?;
            let min_eig = if eval.hessian.nblocks() > 0 {
                eval.hessian.smallest_eigenvalue()
            } else {
                f64::INFINITY
            };
            if min_eig >= CERT_TOL {
                found.push((value, pts, gnorm, min_eig));
            }
        }
    }
    if found.is_empty() {
        return Err(ActionError::NonConvergence { starts: seeds.len(), grad_norm: f64::NAN });
    }

    // Deduplicate local minimizers, then pick the smallest action with the
    // lexicographic tie-break.
    let mut distinct: Vec<(f64, Vec<DVector<f64>>, f64, f64)> = Vec::new();
    for cand in found {
        let dup = distinct.iter().any(|(_, pts, _, _)| path_distance(pts, &cand.1) < 1e-8);
        if !dup {
            distinct.push(cand);
        }
    }
    let multiplicity = distinct.len();
    distinct.sort_by(|a, b| {
        match a.0.partial_cmp(&b.0).unwrap() {
            std::cmp::Ordering::Equal => std::cmp::Ordering::Equal,
            other if (a.0 - b.0).abs() <= TIE_TOL => {
                let _ = other;
                lex_compare(&a.1, &b.1)
            }
            other => other,
        }
    });
    let best = distinct.into_iter().next().unwrap();
    Ok(MinimizeResult {
        path: ConfigurationPath { points: best.1, boundary: BoundaryKind::FixedEndpoints },
        value: best.0,
        grad_norm: best.2,
        hessian_min_eig: best.3,
        multiplicity,
    })
}

fn path_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

fn lex_compare(a: &[DVector<f64>], b: &[DVector<f64>]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        for i in 0..x.len() {
            match x[i].partial_cmp(&y[i]).unwrap() {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
    }
    std::cmp::Ordering::Equal
}

/// Damped Newton descent on the interior points. Returns the full path, the
/// action value and the final gradient norm on success.
fn newton_minimize(
    map: &TwistMap,
    seed: &[DVector<f64>],
    boundary: BoundaryKind,
) -> Option<(Vec<DVector<f64>>, f64, f64)> {
    let d = map.dim();
    let mut pts = seed.to_vec();
    let path_of = |pts: &[DVector<f64>]| ConfigurationPath { points: pts.to_vec(), boundary: boundary.clone() };
    let mut eval = action(map, &path_of(&pts)).ok()?;
    let k = eval.gradient.len() / d;
    if k == 0 {
        return Some((pts, eval.value, 0.0));
    }
    for _ in 0..200 {
        let gnorm = eval.gradient.amax();
        if gnorm <= GRAD_TOL {
            return Some((pts, eval.value, gnorm));
        }
        // Newton direction, shifting the Hessian until it factors.
        let rhs = -&eval.gradient;
        let mut h = eval.hessian.clone();
        let mut dir = h.cholesky_solve(&rhs);
        let mut tau = 1e-8;
        while dir.is_none() && tau < 1e8 {
            h = eval.hessian.clone();
            h.shift_diagonal(tau);
            dir = h.cholesky_solve(&rhs);
            tau *= 10.0;
        }
        let dir = dir?;
        let slope = eval.gradient.dot(&dir);
        let descending = if slope < 0.0 { dir } else { rhs.clone() };
        let slope = eval.gradient.dot(&descending);

        // Armijo backtracking, factor 0.5, slope 1e-4.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = pts.clone();
            for (slot, q) in trial.iter_mut().skip(if matches!(boundary, BoundaryKind::Free) { 0 } else { 1 }).take(k).enumerate() {
                *q += descending.rows(slot * d, d) * t;
            }
            let trial_eval = action(map, &path_of(&trial)).ok()?;
            if trial_eval.value <= eval.value + 1e-4 * t * slope {
                pts = trial;
                eval = trial_eval;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // line search stalled: accept only if we are already at a
            // critical point
            let gnorm = eval.gradient.amax();
            return if gnorm <= 1e-9 { Some((pts, eval.value, gnorm)) } else { None };
        }
    }
    let gnorm = eval.gradient.amax();
    if gnorm <= 1e-9 {
        Some((pts, eval.value, gnorm))
    } else {
        None
    }
}

/// Subharmonic potential W(q) of a rotation vector: the minimal action of
/// paths from q to q + m in n steps, together with the periodicity defect
/// Δ(q) = ∂S/∂Q (q_{n-1}, q_n) + ∂S/∂q (q_0, q_1) = p_n - p_0, which is the
/// gradient of W.
#[derive(Debug, Clone)]
pub struct SubharmonicEval {
    pub value: f64,
    pub defect: DVector<f64>,
    pub path: Vec<DVector<f64>>,
    pub p_start: DVector<f64>,
    pub p_end: DVector<f64>,
    pub hessian_min_eig: f64,
    pub multiplicity: usize,
    pub grad_norm: f64,
}

pub fn subharmonic_potential(
    map: &TwistMap,
    rot: &RotationVector,
    q: &DVector<f64>,
) -> Result<SubharmonicEval, ActionError> {
    let n = rot.n() as usize;
    let q_end = q + rot.shift();
    let min = minimize_fixed_endpoints(map, q, &q_end, n)?;
    let pts = &min.path.points;
    let p_start = -map.ds_dq(&pts[0], &pts[1]);
    let p_end = map.ds_dqn(&pts[n - 1], &pts[n]);
    let defect = &p_end - &p_start;
    Ok(SubharmonicEval {
        value: min.value,
        defect,
        path: pts.clone(),
        p_start,
        p_end,
        hessian_min_eig: min.hessian_min_eig,
        multiplicity: min.multiplicity,
        grad_norm: min.grad_norm,
    })
}

/// First-order potential of a perturbed family at rotation vector (m, n):
/// the finite resonant sum Σ_{j=0}^{n-1} G(q + j m/n), evaluated exactly at
/// each requested point (no optimization involved).
pub fn melnikov_potential(g: &dyn Potential, rot: &RotationVector, points: &[DVector<f64>]) -> Vec<f64> {
    let step = rot.step();
    points
        .iter()
        .map(|q| {
            (0..rot.n())
                .map(|j| g.value(&(q + &step * j as f64)))
                .sum()
        })
        .collect()
}

/// Range (min, max) of the first-order potential over an N^d sample grid.
pub fn melnikov_range(g: &dyn Potential, rot: &RotationVector, resolution: usize) -> (f64, f64) {
    let pts = crate::fourier::grid_points(g.dim(), resolution);
    let vals = melnikov_potential(g, rot, &pts);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}
