//! Discrete Fourier analysis on uniform N^d grids over the torus T^d and
//! trigonometric interpolation of grid samples.
//!
//! Grids are row-major with axis 0 slowest; the sample at multi-index
//! (k_0, …, k_{d-1}) sits at q = (k_0/N, …, k_{d-1}/N). Spectra are
//! normalized so that a sample of e^{2πi⟨ν,q⟩} has coefficient 1 at ν.

use nalgebra::DVector;
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Uniform grid points of T^d at resolution N per axis, row-major.
pub fn grid_points(dim: usize, n: usize) -> Vec<DVector<f64>> {
    let total = n.pow(dim as u32);
    (0..total)
        .map(|idx| {
            let multi = index_to_multi(idx, dim, n);
            DVector::from_fn(dim, |a, _| multi[a] as f64 / n as f64)
        })
        .collect()
}

pub fn index_to_multi(idx: usize, dim: usize, n: usize) -> Vec<usize> {
    let mut multi = vec![0; dim];
    let mut rest = idx;
    for a in (0..dim).rev() {
        multi[a] = rest % n;
        rest /= n;
    }
    multi
}

pub fn multi_to_index(multi: &[usize], n: usize) -> usize {
    multi.iter().fold(0, |acc, &k| acc * n + k)
}

/// Normalized complex spectrum of a real scalar field sampled on an N^d grid.
#[derive(Debug, Clone)]
pub struct GridSpectrum {
    dim: usize,
    n: usize,
    coeffs: Vec<Complex64>,
}

impl GridSpectrum {
    /// Forward DFT of real samples (row-major grid layout).
    pub fn analyze(values: &[f64], dim: usize, n: usize) -> Self {
        let total = n.pow(dim as u32);
        assert_eq!(values.len(), total, "sample count must be N^d");
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            for base in 0..total {
                if (base / stride) % n != 0 {
                    continue;
                }
                for t in 0..n {
                    line[t] = data[base + t * stride];
                }
                fft.process(&mut line);
                for t in 0..n {
                    data[base + t * stride] = line[t];
                }
            }
        }
        let scale = 1.0 / total as f64;
        for c in &mut data {
            *c *= scale;
        }
        Self { dim, n, coeffs: data }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Signed frequency of a raw axis index.
    fn freq_of(&self, k: usize) -> i64 {
        if k < self.n.div_ceil(2) {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// Coefficient at wavevector ν (each component within the grid band).
    pub fn mode(&self, nu: &[i64]) -> Complex64 {
        assert_eq!(nu.len(), self.dim);
        let mut multi = Vec::with_capacity(self.dim);
        for &f in nu {
            let wrapped = f.rem_euclid(self.n as i64) as usize;
            multi.push(wrapped);
        }
        self.coeffs[multi_to_index(&multi, self.n)]
    }

    /// All modes with magnitude above `threshold`, as (ν, coefficient).
    pub fn modes_above(&self, threshold: f64) -> Vec<(Vec<i64>, Complex64)> {
        let total = self.coeffs.len();
        let mut out = Vec::new();
        for idx in 0..total {
            let c = self.coeffs[idx];
            if c.norm() > threshold {
                let multi = index_to_multi(idx, self.dim, self.n);
                let nu: Vec<i64> = multi.iter().map(|&k| self.freq_of(k)).collect();
                out.push((nu, c));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Trigonometric interpolation at an arbitrary point of T^d. Nyquist
    /// modes are evaluated as cosines, which keeps the interpolant real.
    pub fn eval(&self, q: &DVector<f64>) -> f64 {
        assert_eq!(q.len(), self.dim);
        let total = self.coeffs.len();
        let mut sum = Complex64::new(0.0, 0.0);
        let half = self.n as i64 / 2;
        let even = self.n % 2 == 0;
        for idx in 0..total {
            let c = self.coeffs[idx];
            if c.norm() == 0.0 {
                continue;
            }
            let multi = index_to_multi(idx, self.dim, self.n);
            let mut basis = Complex64::new(1.0, 0.0);
            for a in 0..self.dim {
                let f = self.freq_of(multi[a]);
                if even && f.abs() == half {
                    basis *= Complex64::new((std::f64::consts::TAU * half as f64 * q[a]).cos(), 0.0);
                } else {
                    basis *= Complex64::from_polar(1.0, std::f64::consts::TAU * f as f64 * q[a]);
                }
            }
            sum += c * basis;
        }
        sum.re
    }

    /// Largest coefficient magnitude outside ν = 0.
    pub fn max_nonzero_mode(&self) -> f64 {
        let mut best = 0.0_f64;
        for idx in 1..self.coeffs.len() {
            best = best.max(self.coeffs[idx].norm());
        }
        // index 0 is ν = 0 only when all digits are zero; other indices may
        // still wrap to zero for n = 1, which cannot happen on real grids
        best
    }
}

/// Per-component spectra of a vector field sampled on an N^d grid
/// (`values[i]` is the d-vector at grid index i, flattened row-major).
pub fn vector_spectrum(values: &[f64], dim: usize, n: usize) -> Vec<GridSpectrum> {
    let total = n.pow(dim as u32);
    assert_eq!(values.len(), total * dim);
    (0..dim)
        .map(|comp| {
            let component: Vec<f64> = (0..total).map(|i| values[i * dim + comp]).collect();
            GridSpectrum::analyze(&component, dim, n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_modes_of_a_plane_wave() {
        let n = 16;
        let pts = grid_points(1, n);
        let values: Vec<f64> = pts
            .iter()
            .map(|q| (std::f64::consts::TAU * 3.0 * q[0]).cos())
            .collect();
        let spec = GridSpectrum::analyze(&values, 1, n);
        let c = spec.mode(&[3]);
        assert!((c.re - 0.5).abs() < 1e-12 && c.im.abs() < 1e-12);
        assert!(spec.mode(&[2]).norm() < 1e-12);
    }

    #[test]
    fn two_dimensional_modes() {
        let n = 8;
        let pts = grid_points(2, n);
        let values: Vec<f64> = pts
            .iter()
            .map(|q| (std::f64::consts::TAU * (q[0] + 2.0 * q[1])).sin())
            .collect();
        let spec = GridSpectrum::analyze(&values, 2, n);
        // sin(2π⟨(1,2),q⟩) = (e^{i·} - e^{-i·})/2i → coefficient -i/2 at (1,2)
        let c = spec.mode(&[1, 2]);
        assert!(c.re.abs() < 1e-12 && (c.im + 0.5).abs() < 1e-12, "{c}");
    }

    #[test]
    fn interpolation_reproduces_low_degree_trig_polynomials() {
        let n = 32;
        let f = |q: f64| 0.3 + (std::f64::consts::TAU * q).cos() - 0.2 * (std::f64::consts::TAU * 5.0 * q).sin();
        let values: Vec<f64> = grid_points(1, n).iter().map(|q| f(q[0])).collect();
        let spec = GridSpectrum::analyze(&values, 1, n);
        for &x in &[0.0, 0.123, 0.5, 0.987] {
            let got = spec.eval(&DVector::from_row_slice(&[x]));
            assert!((got - f(x)).abs() < 1e-11, "at {x}: {got} vs {}", f(x));
        }
    }

    #[test]
    fn interpolation_matches_samples_in_two_dimensions() {
        let n = 8;
        let pts = grid_points(2, n);
        let values: Vec<f64> = pts
            .iter()
            .map(|q| (std::f64::consts::TAU * q[0]).cos() * (std::f64::consts::TAU * q[1]).sin())
            .collect();
        let spec = GridSpectrum::analyze(&values, 2, n);
        for (i, q) in pts.iter().enumerate() {
            let got = spec.eval(q);
            assert!((got - values[i]).abs() < 1e-11);
        }
    }
}
