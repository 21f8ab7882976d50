//! Uniform periodic grids on [-L, L)ⁿ and Fourier transforms scaled so that
//! discrete sums approximate integrals over ℝⁿ.
//!
//! The forward transform is
//!
//! ```text
//! f̂(ξ_k) = (2π)^{-n/2} Σ_j f(x_j) e^{-i ξ_k·x_j} Δxⁿ,   x_j = -L + jΔx,  ξ_k = πk/L,
//! ```
//!
//! so Parseval reads Σ|f|² Δxⁿ = Σ|f̂|² (π/L)ⁿ and the pairing
//! Σ f g Δxⁿ = Σ f̂ conj(ĝ) (π/L)ⁿ holds exactly on the grid.
//!
//! Spectral coefficients are stored in FFT order along every axis: storage
//! index `j` carries wavenumber `k = j` for `j < N/2` and `k = j - N` otherwise.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::{Error, Result};

/// Largest dimension supported by grid work.
pub const MAX_GRID_DIM: usize = 3;

/// Uniform periodic grid on [-L, L)ⁿ with N points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    points: usize,
    half_width: f64,
}

impl Grid {
    pub fn new(dim: usize, points: usize, half_width: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_GRID_DIM {
            return Err(Error::InvalidInput(format!(
                "grid dimension must lie in 1..={MAX_GRID_DIM}, got {dim}"
            )));
        }
        if points < 8 || points % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "points per axis must be even and at least 8, got {points}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidInput(format!("half width must be positive, got {half_width}")));
        }
        Ok(Self {
            dim,
            points,
            half_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Total number of samples Nⁿ.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Δxⁿ.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// (π/L)ⁿ.
    pub fn freq_cell_volume(&self) -> f64 {
        (PI / self.half_width).powi(self.dim as i32)
    }

    /// Coordinate of sample `j` along any axis.
    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    /// Signed wavenumber of storage index `j` along any axis.
    pub fn wavenumber(&self, j: usize) -> i64 {
        let n = self.points as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Frequency ξ of storage index `j` along any axis.
    pub fn frequency(&self, j: usize) -> f64 {
        PI * self.wavenumber(j) as f64 / self.half_width
    }

    /// Per-axis indices of flat row-major index `idx` (last axis fastest).
    pub fn unravel(&self, mut idx: usize) -> [usize; MAX_GRID_DIM] {
        let mut out = [0; MAX_GRID_DIM];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.points;
            idx /= self.points;
        }
        out
    }

    /// Physical point of flat index `idx`.
    pub fn point(&self, idx: usize) -> [f64; MAX_GRID_DIM] {
        let ix = self.unravel(idx);
        let mut x = [0.0; MAX_GRID_DIM];
        for a in 0..self.dim {
            x[a] = self.coordinate(ix[a]);
        }
        x
    }

    /// Euclidean norm of the physical point of flat index `idx`.
    pub fn radius(&self, idx: usize) -> f64 {
        let x = self.point(idx);
        x[..self.dim].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// |ξ| for every spectral storage index.
    pub fn frequency_magnitudes(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let ix = self.unravel(idx);
                ix[..self.dim]
                    .iter()
                    .map(|&j| self.frequency(j).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Mask of coefficients kept by the 2/3 rule: every axis wavenumber |k| ≤ N/3.
    pub fn dealias_mask(&self) -> Vec<bool> {
        let cut = (self.points / 3) as i64;
        (0..self.len())
            .map(|idx| {
                let ix = self.unravel(idx);
                ix[..self.dim].iter().all(|&j| self.wavenumber(j).abs() <= cut)
            })
            .collect()
    }

    /// Samples a function of the physical point on the grid.
    pub fn sample<F>(&self, f: F) -> RealField
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let values = (0..self.len())
            .into_par_iter()
            .map(|idx| {
                let x = self.point(idx);
                f(&x[..self.dim])
            })
            .collect();
        RealField { grid: *self, values }
    }

    fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Real samples on a grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} samples, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> RealField {
        RealField {
            grid: self.grid,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> RealField {
        self.map(|v| c * v)
    }

    /// Riemann sum Σ f Δxⁿ.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// (Σ |f|^r Δxⁿ)^{1/r} for finite r ≥ 1.
    pub fn lp_norm(&self, r: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.abs().powf(r)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / r)
    }

    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Complex Fourier coefficients on a grid, FFT storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coefs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: Grid, coefs: Vec<Complex64>) -> Result<Self> {
        if coefs.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "spectral field has {} coefficients, grid expects {}",
                coefs.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, coefs })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coefs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coefs(&self) -> &[Complex64] {
        &self.coefs
    }

    pub fn coefs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefs
    }

    /// Σ |f̂|² (π/L)ⁿ.
    pub fn norm_sq(&self) -> f64 {
        self.coefs.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.freq_cell_volume()
    }

    /// L² norm of |ξ|^s f via Plancherel.
    pub fn weighted_norm(&self, xi_abs: &[f64], s: f64) -> f64 {
        let sum: f64 = self
            .coefs
            .iter()
            .zip(xi_abs)
            .map(|(c, &x)| {
                let w = if s == 0.0 { 1.0 } else { x.powf(2.0 * s) };
                w * c.norm_sqr()
            })
            .sum();
        (sum * self.grid.freq_cell_volume()).sqrt()
    }

    /// Storage index of the coefficient at wavenumber -k for storage index `idx`.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let n = self.grid.points;
        let ix = self.grid.unravel(idx);
        let mut out = 0;
        for a in 0..self.grid.dim {
            out = out * n + (n - ix[a]) % n;
        }
        out
    }

    /// max |f̂(-k) - conj f̂(k)| relative to max |f̂|.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.coefs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..self.coefs.len())
            .map(|i| (self.coefs[self.mirror_index(i)] - self.coefs[i].conj()).norm())
            .fold(0.0f64, f64::max);
        worst / scale
    }

    pub fn add_scaled(&mut self, other: &SpectralField, c: Complex64) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        for (a, b) in self.coefs.iter_mut().zip(&other.coefs) {
            *a += c * b;
        }
        Ok(())
    }

    /// Zeroes every coefficient outside the 2/3-rule box.
    pub fn dealias(&mut self, mask: &[bool]) {
        for (c, &keep) in self.coefs.iter_mut().zip(mask) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
}

type PlanKey = (usize, bool);

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((len, forward))
        .or_insert_with(|| {
            let dir = if forward {
                FftDirection::Forward
            } else {
                FftDirection::Inverse
            };
            FftPlanner::new().plan_fft(len, dir)
        })
        .clone()
}

/// Unnormalised in-place n-dimensional FFT over row-major data.
fn fft_nd(grid: &Grid, data: &mut [Complex64], forward: bool) {
    let n = grid.points;
    let fft = plan(n, forward);
    let total = data.len();
    for axis in 0..grid.dim {
        // stride between consecutive elements along `axis`
        let stride = n.pow((grid.dim - 1 - axis) as u32);
        if stride == 1 {
            data.par_chunks_mut(n).for_each(|line| fft.process(line));
            continue;
        }
        let block = stride * n;
        data.par_chunks_mut(block).for_each(|chunk| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for offset in 0..stride {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = chunk[offset + j * stride];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    chunk[offset + j * stride] = *v;
                }
            }
        });
        debug_assert_eq!(total % block, 0);
    }
}

/// (-1)^{Σ_a j_a}: the phase e^{iπk} from the offset x₀ = -L.
fn parity(grid: &Grid, idx: usize) -> f64 {
    let ix = grid.unravel(idx);
    let s: usize = ix[..grid.dim].iter().sum();
    if s % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Forward transform of a real field.
pub fn forward(f: &RealField) -> Result<SpectralField> {
    if f.values.len() != f.grid.len() {
        return Err(Error::InvalidInput("field length does not match its grid".into()));
    }
    if let Some(i) = f.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
    }
    let grid = f.grid;
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&grid, &mut data, true);
    let scale = (grid.spacing() / (2.0 * PI).sqrt()).powi(grid.dim as i32);
    data.par_iter_mut().enumerate().for_each(|(idx, c)| *c *= scale * parity(&grid, idx));
    Ok(SpectralField { grid, coefs: data })
}

/// Inverse transform; returns the complex samples before projection onto ℝ.
pub fn inverse_complex(f: &SpectralField) -> Result<Vec<Complex64>> {
    if let Some(i) = f.coefs.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::InvalidInput(format!("non-finite coefficient at index {i}")));
    }
    let grid = f.grid;
    let scale = (PI / grid.half_width / (2.0 * PI).sqrt()).powi(grid.dim as i32);
    let mut data: Vec<Complex64> = f
        .coefs
        .par_iter()
        .enumerate()
        .map(|(idx, c)| c * (scale * parity(&grid, idx)))
        .collect();
    fft_nd(&grid, &mut data, false);
    Ok(data)
}

/// Inverse transform, keeping the real part.
pub fn inverse(f: &SpectralField) -> Result<RealField> {
    let data = inverse_complex(f)?;
    Ok(RealField {
        grid: f.grid,
        values: data.into_iter().map(|c| c.re).collect(),
    })
}

/// Inverse transform together with max |Im| relative to max(1, max |Re|).
pub fn inverse_with_residue(f: &SpectralField) -> Result<(RealField, f64)> {
    let data = inverse_complex(f)?;
    let (mut re_max, mut im_max) = (0.0f64, 0.0f64);
    for c in &data {
        re_max = re_max.max(c.re.abs());
        im_max = im_max.max(c.im.abs());
    }
    let residue = im_max / re_max.max(1.0);
    let field = RealField {
        grid: f.grid,
        values: data.into_iter().map(|c| c.re).collect(),
    };
    Ok((field, residue))
}

/// Multiplies every coefficient by `sym(|ξ_k|)`.
pub fn apply_multiplier<S>(f: &SpectralField, sym: S) -> Result<SpectralField>
where
    S: Fn(f64) -> Complex64 + Sync,
{
    let xi = f.grid.frequency_magnitudes();
    let factors: Vec<Complex64> = xi.par_iter().map(|&x| sym(x)).collect();
    if let Some(i) = factors.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::NonFiniteSymbol { xi: xi[i] });
    }
    let coefs = f.coefs.iter().zip(&factors).map(|(c, s)| c * s).collect();
    Ok(SpectralField { grid: f.grid, coefs })
}

/// Real-valued radial multiplier, the common case.
pub fn apply_real_multiplier<S>(f: &SpectralField, sym: S) -> Result<SpectralField>
where
    S: Fn(f64) -> f64 + Sync,
{
    apply_multiplier(f, |x| Complex64::new(sym(x), 0.0))
}

/// ∫ f g dx as the Riemann sum Σ f g Δxⁿ.
pub fn plancherel_pairing(f: &RealField, g: &RealField) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(s * f.grid.cell_volume())
}

/// The same pairing evaluated on the frequency side: Re Σ f̂ conj(ĝ) (π/L)ⁿ.
pub fn plancherel_pairing_spectral(f: &RealField, g: &RealField) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    let fh = forward(f)?;
    let gh = forward(g)?;
    let s: f64 = fh.coefs.iter().zip(&gh.coefs).map(|(a, b)| (a * b.conj()).re).sum();
    Ok(s * f.grid.freq_cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize, l: f64) -> Grid {
        Grid::new(1, n, l).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(4, 16, 1.0).is_err());
        assert!(Grid::new(1, 15, 1.0).is_err());
        assert!(Grid::new(1, 6, 1.0).is_err());
        assert!(Grid::new(2, 16, 0.0).is_err());
    }

    #[test]
    fn cell_volume_tiles_the_box() {
        let g = Grid::new(3, 12, 2.5).unwrap();
        let total = g.cell_volume() * g.len() as f64;
        assert!((total - 5.0f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn constant_maps_to_zero_mode() {
        let g = Grid::new(2, 16, 3.0).unwrap();
        let f = g.sample(|_| 1.0);
        let fh = forward(&f).unwrap();
        for (i, c) in fh.coefs().iter().enumerate() {
            if i != 0 {
                assert!(c.norm() < 1e-13, "mode {i}: {c}");
            }
        }
        assert!(fh.coefs()[0].norm() > 1.0);
    }

    #[test]
    fn cosine_has_two_modes() {
        let l = 4.0;
        let g = grid1(32, l);
        let f = g.sample(|x| (PI * x[0] / l).cos());
        let fh = forward(&f).unwrap();
        let big: Vec<usize> = (0..32).filter(|&i| fh.coefs()[i].norm() > 1e-12).collect();
        assert_eq!(big.len(), 2);
        let ks: Vec<i64> = big.iter().map(|&i| g.wavenumber(i)).collect();
        assert!(ks.contains(&1) && ks.contains(&-1));
        assert!((fh.coefs()[big[0]].norm() - fh.coefs()[big[1]].norm()).abs() < 1e-13);
    }

    #[test]
    fn nonfinite_samples_rejected() {
        let g = grid1(8, 1.0);
        let mut f = RealField::zeros(g);
        f.values_mut()[3] = f64::NAN;
        assert!(forward(&f).is_err());
        assert!(RealField::new(g, vec![0.0; 7]).is_err());
    }

    #[test]
    fn laplacian_eigenfunction() {
        let l = 3.0;
        let g = grid1(64, l);
        let f = g.sample(|x| (PI * x[0] / l).cos());
        let out = inverse(&apply_real_multiplier(&forward(&f).unwrap(), |x| x * x).unwrap()).unwrap();
        let c = (PI / l).powi(2);
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - c * b).abs() < 1e-10);
        }
    }

    #[test]
    fn symbol_failure_reports_frequency() {
        let g = grid1(16, 1.0);
        let fh = forward(&g.sample(|x| x[0])).unwrap();
        let err = apply_real_multiplier(&fh, |x| 1.0 / x).unwrap_err();
        assert_eq!(err, Error::NonFiniteSymbol { xi: 0.0 });
    }

    #[test]
    fn gaussian_pairing_is_sqrt_pi() {
        let g = grid1(256, 20.0);
        let f = g.sample(|x| (-x[0] * x[0] / 2.0).exp());
        let v = plancherel_pairing(&f, &f).unwrap();
        assert!((v / PI.sqrt() - 1.0).abs() < 1e-8);
        assert_eq!(plancherel_pairing(&RealField::zeros(g), &RealField::zeros(g)).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_transform_is_gaussian() {
        // the unitary transform of e^{-x²/2} is e^{-ξ²/2}
        let g = grid1(128, 16.0);
        let fh = forward(&g.sample(|x| (-x[0] * x[0] / 2.0).exp())).unwrap();
        for j in 0..128 {
            let xi = g.frequency(j);
            let c = fh.coefs()[j];
            assert!((c.re - (-xi * xi / 2.0).exp()).abs() < 1e-12);
            assert!(c.im.abs() < 1e-12);
        }
    }

    #[test]
    fn pairing_mismatch_rejected() {
        let a = RealField::zeros(grid1(8, 1.0));
        let b = RealField::zeros(grid1(8, 2.0));
        assert!(matches!(plancherel_pairing(&a, &b), Err(Error::GridMismatch(_))));
    }
}
