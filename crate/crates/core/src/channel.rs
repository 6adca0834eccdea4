//! The measuring device as an information channel.
//!
//! A [`ChannelModel`] carries two kernels: `Γ` maps the intrinsic density to
//! the predicted one and `Λ` does the same for the probability current,
//!
//! ```text
//! ρ_pd(x) = ∫ Γ(x, x') ρ_in(x') dx'      j_pd(x) = ∫ Λ(x, x') j_in(x') dx'
//! ```
//!
//! Kernels are stored as dense `n × n` matrices and applied with the grid's
//! trapezoid weights. They are normalized in both arguments, so that
//! `Σ_j K_ij w_j = 1` for every row and `Σ_i w_i K_ij = 1` for every column.
//! The predicted state is rebuilt from `(ρ_pd, j_pd)` by polar decomposition.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::state::{descriptors, DescriptorSet, Observable, PhysicalUnits, WaveFunction};

/// Target accuracy of the alternating row/column rescaling.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;
pub const MAX_SCALING_SWEEPS: usize = 10_000;

/// Density floor for phase reconstruction, relative to `max ρ`.
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Largest current allowed below the density floor, relative to `max |j|`.
pub const CURRENT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    /// `∫K(x, x') dx' = 1` for every `x`.
    Row,
    /// `∫K(x, x') dx = 1` for every `x'`; conserves total probability.
    Column,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    grid: Grid,
    values: Vec<f64>,
    mode: NormalizationMode,
    identity: bool,
}

impl Kernel {
    /// Discrete Dirac delta: `K_ij = δ_ij / w_i`.
    pub fn identity(grid: Grid) -> Self {
        let n = grid.len();
        let w = grid.trapezoid_weights();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0 / w[i];
        }
        Kernel { grid, values, mode: NormalizationMode::Both, identity: true }
    }

    /// Takes a user-supplied non-negative matrix (row-major) and normalizes it.
    pub fn from_matrix(grid: Grid, values: Vec<f64>, mode: NormalizationMode) -> Result<Self> {
        let n = grid.len();
        if values.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, actual: values.len() });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("kernel entries must be finite and non-negative".into()));
        }
        let mut kernel = Kernel { grid, values, mode, identity: false };
        kernel.normalize()?;
        Ok(kernel)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn mode(&self) -> NormalizationMode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.len() + j]
    }

    /// `Σ_j K_ij w_j` for each row.
    pub fn row_sums(&self) -> Vec<f64> {
        let w = self.grid.trapezoid_weights();
        self.values.chunks_exact(self.grid.len()).map(|row| dot(row, &w)).collect()
    }

    /// `Σ_i w_i K_ij` for each column.
    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.grid.len();
        let w = self.grid.trapezoid_weights();
        let mut sums = vec![0.0; n];
        for (row, wi) in self.values.chunks_exact(n).zip(&w) {
            sums.iter_mut().zip(row).for_each(|(s, k)| *s += wi * k);
        }
        sums
    }

    /// Largest deviation of the row and column sums from one.
    pub fn normalization_error(&self) -> (f64, f64) {
        let dev = |v: Vec<f64>| v.into_iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        (dev(self.row_sums()), dev(self.column_sums()))
    }

    /// `Σ_j K_ij w_j f_j`.
    pub fn apply_real(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.len();
        if f.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: f.len() });
        }
        if self.identity {
            return Ok(f.to_vec());
        }
        let wf: Vec<f64> = self.grid.trapezoid_weights().iter().zip(f).map(|(w, v)| w * v).collect();
        Ok(self.values.par_chunks_exact(n).map(|row| dot(row, &wf)).collect())
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let out = self.apply_real(&f.real_parts())?;
        GridFunction::from_real(self.grid, &out)
    }

    fn normalize(&mut self) -> Result<()> {
        let n = self.grid.len();
        let w = self.grid.trapezoid_weights();
        let mut a = vec![1.0; n];
        let mut b = vec![1.0; n];
        let rows = |b: &[f64], values: &[f64]| -> Vec<f64> {
            let wb: Vec<f64> = b.iter().zip(&w).map(|(b, w)| b * w).collect();
            values.par_chunks_exact(n).map(|row| dot(row, &wb)).collect()
        };
        let cols = |a: &[f64], values: &[f64]| -> Vec<f64> {
            let mut sums = vec![0.0; n];
            for ((row, wi), ai) in values.chunks_exact(n).zip(&w).zip(a) {
                let c = wi * ai;
                sums.iter_mut().zip(row).for_each(|(s, k)| *s += c * k);
            }
            sums
        };
        let invert = |sums: Vec<f64>| -> Result<Vec<f64>> {
            sums.into_iter()
                .map(|s| if s > 0.0 { Ok(1.0 / s) } else { Err(Error::InvalidArgument("kernel has an all-zero row or column".into())) })
                .collect()
        };
        match self.mode {
            NormalizationMode::Row => a = invert(rows(&b, &self.values))?,
            NormalizationMode::Column => b = invert(cols(&a, &self.values))?,
            NormalizationMode::Both if self.is_symmetric() => {
                // K = D G D; the fixed point of d ← sqrt(d / (G W d)) makes
                // rows, and by symmetry columns, integrate to one.
                let mut d = vec![1.0; n];
                let mut converged = false;
                for _ in 0..MAX_SCALING_SWEEPS {
                    let s = rows(&d, &self.values);
                    let mut err = 0.0f64;
                    for (di, si) in d.iter_mut().zip(&s) {
                        if !(*si > 0.0) {
                            return Err(Error::InvalidArgument("kernel has an all-zero row or column".into()));
                        }
                        err = err.max((*di * si - 1.0).abs());
                        *di = (*di / si).sqrt();
                    }
                    if err <= NORMALIZATION_TOLERANCE {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::NotConverged("kernel row/column scaling"));
                }
                a = d.clone();
                b = d;
            }
            NormalizationMode::Both => {
                let mut converged = false;
                for _ in 0..MAX_SCALING_SWEEPS {
                    a = invert(rows(&b, &self.values))?;
                    b = invert(cols(&a, &self.values))?;
                    // columns are exact after the last update; check rows
                    let err = rows(&b, &self.values)
                        .iter()
                        .zip(&a)
                        .map(|(s, ai)| (ai * s - 1.0).abs())
                        .fold(0.0, f64::max);
                    if err <= NORMALIZATION_TOLERANCE {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::NotConverged("kernel row/column scaling"));
                }
            }
        }
        for (row, ai) in self.values.chunks_exact_mut(n).zip(&a) {
            row.iter_mut().zip(&b).for_each(|(k, bj)| *k *= ai * bj);
        }
        Ok(())
    }

    fn is_symmetric(&self) -> bool {
        let n = self.grid.len();
        (0..n).into_par_iter().all(|i| (0..i).all(|j| self.values[i * n + j] == self.values[j * n + i]))
    }

    /// Row-major CSV: header `x,<x'_0>,...`, then one `x_i,K_i0,...` row per point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let xs = self.grid.points();
        let mut header = vec!["x".to_string()];
        header.extend(xs.iter().map(|x| x.to_string()));
        w.write_record(&header)?;
        for (row, x) in self.values.chunks_exact(self.grid.len()).zip(&xs) {
            let mut rec = vec![x.to_string()];
            rec.extend(row.iter().map(|k| k.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout produced by [`Kernel::write_csv`] and normalizes it per `mode`.
    pub fn read_csv<R: Read>(input: R, mode: NormalizationMode) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r.headers()?.clone();
        let xs = parse_all(header.iter().skip(1))?;
        let grid = Grid::from_points(&xs)?;
        let mut values = Vec::with_capacity(xs.len() * xs.len());
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            let fields = parse_all(rec.iter())?;
            if fields.len() != xs.len() + 1 {
                return Err(Error::Format(format!("kernel row {rows} has {} fields", fields.len())));
            }
            if rows >= xs.len() || (fields[0] - grid.x(rows)).abs() > 1e-6 * grid.spacing() {
                return Err(Error::Format(format!("kernel row {rows} does not match the column grid")));
            }
            values.extend_from_slice(&fields[1..]);
            rows += 1;
        }
        if rows != xs.len() {
            return Err(Error::Format(format!("kernel has {rows} rows for {} columns", xs.len())));
        }
        Kernel::from_matrix(grid, values, mode)
    }
}

fn parse_all<'a>(fields: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    fields
        .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("'{s}': {e}"))))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianChannelSpec {
    pub gamma: f64,
    pub grid: Grid,
}

/// `Γ(x, x') ∝ exp(-(x - x')² / 2γ²)`, doubly normalized.
///
/// Widths below half a grid spacing cannot be resolved and give the
/// identity kernel.
pub fn build_gaussian_kernel(spec: &GaussianChannelSpec) -> Result<Kernel> {
    let gamma = spec.gamma;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("device width must be finite and >= 0, got {gamma}")));
    }
    let grid = spec.grid;
    if gamma < 0.5 * grid.spacing() {
        return Ok(Kernel::identity(grid));
    }
    let n = grid.len();
    let xs = grid.points();
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * gamma);
    let inv = 1.0 / (2.0 * gamma * gamma);
    let mut values = vec![0.0; n * n];
    values.par_chunks_exact_mut(n).enumerate().for_each(|(i, row)| {
        for (j, k) in row.iter_mut().enumerate() {
            let d = xs[i] - xs[j];
            *k = norm * (-d * d * inv).exp();
        }
    });
    Kernel::from_matrix(grid, values, NormalizationMode::Both)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub gamma_kernel: Kernel,
    pub lambda_kernel: Kernel,
    pub label: String,
}

impl ChannelModel {
    pub fn new(gamma_kernel: Kernel, lambda_kernel: Kernel, label: impl Into<String>) -> Result<Self> {
        if gamma_kernel.grid != lambda_kernel.grid {
            return Err(Error::GridMismatch);
        }
        Ok(ChannelModel { gamma_kernel, lambda_kernel, label: label.into() })
    }

    pub fn ideal(grid: Grid) -> Self {
        ChannelModel { gamma_kernel: Kernel::identity(grid), lambda_kernel: Kernel::identity(grid), label: "ideal".into() }
    }

    /// Gaussian kernels of width `gamma` for density and `lambda_width` for current.
    pub fn gaussian(grid: Grid, gamma: f64, lambda_width: f64) -> Result<Self> {
        let g = build_gaussian_kernel(&GaussianChannelSpec { gamma, grid })?;
        let l = if lambda_width == gamma {
            g.clone()
        } else {
            build_gaussian_kernel(&GaussianChannelSpec { gamma: lambda_width, grid })?
        };
        ChannelModel::new(g, l, format!("gaussian(gamma={gamma}, lambda={lambda_width})"))
    }

    pub fn grid(&self) -> &Grid {
        &self.gamma_kernel.grid
    }
}

/// Pushes `(ρ_in, j_in)` through the channel.
pub fn apply_channel(channel: &ChannelModel, rho_in: &GridFunction, j_in: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    rho_in.check_same_grid(j_in)?;
    let rho_pd = channel.gamma_kernel.apply(rho_in)?;
    let j_pd = channel.lambda_kernel.apply(j_in)?;
    Ok((rho_pd, j_pd))
}

/// Rebuilds `Ψ_pd = √ρ · e^{iφ}` with `φ' = m j / (ħ ρ)`.
///
/// The phase is pinned to zero at the leftmost point above the density floor.
/// Phase steps are recovered by inverting the central-difference current
/// exactly: with amplitudes `a_i` and link fluxes
/// `t_i = a_i a_{i+1} sin(φ_{i+1} - φ_i)`, the discrete current satisfies
/// `t_{i-1} + t_i = 2 m h j_i / ħ`, which is solved left to right. A pair
/// `(ρ, j)` taken from a grid state is therefore reproduced up to a global
/// phase. Links touching points below the floor carry no phase step, which
/// requires the current to vanish there as well.
pub fn reconstruct_predicted_state(rho_pd: &GridFunction, j_pd: &GridFunction, units: PhysicalUnits) -> Result<WaveFunction> {
    rho_pd.check_same_grid(j_pd)?;
    let grid = *rho_pd.grid();
    let rho = rho_pd.real_parts();
    let j = j_pd.real_parts();
    let rho_max = rho.iter().cloned().fold(0.0, f64::max);
    if !(rho_max > 0.0) {
        return Err(Error::ZeroNorm);
    }
    if let Some(i) = rho.iter().position(|&r| r < -1e-12 * rho_max || !r.is_finite()) {
        return Err(Error::InvalidArgument(format!("density is negative at x = {}", grid.x(i))));
    }
    let rho_floor = DENSITY_FLOOR * rho_max;
    let j_floor = CURRENT_FLOOR * j.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    if let Some(i) = (0..grid.len()).find(|&i| rho[i] < rho_floor && j[i].abs() > j_floor) {
        return Err(Error::InconsistentChannelOutput { x: grid.x(i), current: j[i] });
    }

    let h = grid.spacing();
    let amplitude: Vec<f64> = rho.iter().map(|r| r.max(0.0).sqrt()).collect();
    let anchor = rho.iter().position(|&r| r >= rho_floor).unwrap_or(0);
    let mut phase = vec![0.0; grid.len()];
    let mut flux = 0.0;
    for i in anchor..grid.len() - 1 {
        flux = 2.0 * units.mass * h * j[i] / units.hbar - flux;
        let step = if rho[i] >= rho_floor && rho[i + 1] >= rho_floor {
            (flux / (amplitude[i] * amplitude[i + 1])).clamp(-1.0, 1.0).asin()
        } else {
            0.0
        };
        phase[i + 1] = phase[i] + step;
    }
    let values = rho
        .iter()
        .zip(&phase)
        .map(|(&r, &p)| Complex64::from_polar(r.max(0.0).sqrt(), p))
        .collect();
    WaveFunction::normalized(GridFunction::new(grid, values)?, units)
}

/// Mean and deviation of `A` on the predicted state.
pub fn pd_descriptors(state_pd: &WaveFunction, observable: &Observable) -> Result<DescriptorSet> {
    descriptors(state_pd, observable, false)
}

/// Energy descriptors of the oscillator ground state, intrinsic and after a
/// Gaussian channel of width `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedForms {
    pub mean_pd: f64,
    pub dev_pd: f64,
    pub mean_in: f64,
    pub dev_in: f64,
}

pub fn oscillator_closed_forms(units: PhysicalUnits, gamma: f64) -> ClosedForms {
    let PhysicalUnits { hbar, mass: m, omega: w } = units;
    let g2 = gamma * gamma;
    let b = hbar + 2.0 * m * w * g2;
    ClosedForms {
        mean_pd: w * (hbar * hbar + b * b) / (4.0 * b),
        dev_pd: std::f64::consts::SQRT_2 * m * w * w * g2 * (hbar + m * w * g2) / b,
        mean_in: 0.5 * hbar * w,
        dev_in: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use crate::state::{current, density};
    use std::f64::consts::PI;

    fn gaussian_density(grid: Grid, var: f64) -> GridFunction {
        GridFunction::from_real_fn(grid, |x| (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt())
    }

    #[test]
    fn closed_form_values() {
        let u = PhysicalUnits::natural();
        let c0 = oscillator_closed_forms(u, 0.0);
        assert_eq!((c0.mean_pd, c0.dev_pd, c0.mean_in, c0.dev_in), (0.5, 0.0, 0.5, 0.0));
        let c1 = oscillator_closed_forms(u, 1.0);
        assert!((c1.mean_pd - 10.0 / 12.0).abs() < 1e-15);
        assert!((c1.dev_pd - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-15);
        let c5 = oscillator_closed_forms(u, 0.5);
        assert!((c5.mean_pd - 3.25 / 6.0).abs() < 1e-15);
        assert!((c5.dev_pd - 2f64.sqrt() * 0.25 * 1.25 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_mean_matches_gaussian_moments() {
        // independent route: Ψ_pd is a real Gaussian with position variance s² = σ² + γ²,
        // so ⟨H⟩ = ħ²/(8 m s²) + m ω² s² / 2
        let u = PhysicalUnits::new(1.3, 0.7, 2.1).unwrap();
        for gamma in [0.0, 0.2, 1.0, 3.0] {
            let s2 = u.oscillator_sigma().powi(2) + gamma * gamma;
            let mean = u.hbar * u.hbar / (8.0 * u.mass * s2) + 0.5 * u.mass * u.omega * u.omega * s2;
            assert!((oscillator_closed_forms(u, gamma).mean_pd - mean).abs() < 1e-12 * mean);
        }
    }

    #[test]
    fn zero_width_gives_identity() {
        let grid = Grid::symmetric(5.0, 64).unwrap();
        let k = build_gaussian_kernel(&GaussianChannelSpec { gamma: 0.0, grid }).unwrap();
        assert_eq!(k, Kernel::identity(grid));
        let tiny = build_gaussian_kernel(&GaussianChannelSpec { gamma: 0.4 * grid.spacing(), grid }).unwrap();
        assert_eq!(tiny, Kernel::identity(grid));
        let rho = gaussian_density(grid, 1.0);
        assert_eq!(k.apply(&rho).unwrap().real_parts(), rho.real_parts());
        assert!(build_gaussian_kernel(&GaussianChannelSpec { gamma: -1.0, grid }).is_err());
    }

    #[test]
    fn gaussian_kernel_is_doubly_normalized() {
        let grid = Grid::symmetric(12.0 * 0.5f64.sqrt(), 512).unwrap();
        let k = build_gaussian_kernel(&GaussianChannelSpec { gamma: 1.0, grid }).unwrap();
        let (row, col) = k.normalization_error();
        assert!(row < 1e-10 && col < 1e-10, "{row:e} {col:e}");
        assert!(k.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn gaussian_convolution_closure() {
        let grid = Grid::symmetric(15.0, 1024).unwrap();
        let (s2, gamma) = (0.5, 1.0);
        let k = build_gaussian_kernel(&GaussianChannelSpec { gamma, grid }).unwrap();
        let out = k.apply(&gaussian_density(grid, s2)).unwrap();
        let expect = gaussian_density(grid, s2 + gamma * gamma);
        for i in grid.len() / 4..3 * grid.len() / 4 {
            assert!((out.values()[i].re - expect.values()[i].re).abs() < 1e-6);
        }
    }

    #[test]
    fn dirac_limit_is_continuous() {
        let sigma = 0.5f64.sqrt();
        let grid = Grid::symmetric(12.0 * sigma, 2048).unwrap();
        let rho = gaussian_density(grid, sigma * sigma);
        let mut prev = f64::INFINITY;
        for frac in [0.5, 0.2, 0.1, 0.05] {
            let k = build_gaussian_kernel(&GaussianChannelSpec { gamma: frac * sigma, grid }).unwrap();
            let out = k.apply(&rho).unwrap();
            let diff = out.sub(&rho).unwrap().max_abs();
            assert!(diff < prev, "γ = {frac}σ: {diff} !< {prev}");
            prev = diff;
        }
    }

    #[test]
    fn channel_conserves_probability_and_zero_current() {
        let grid = Grid::symmetric(8.0, 400).unwrap();
        let ch = ChannelModel::gaussian(grid, 0.7, 1.2).unwrap();
        let rho = gaussian_density(grid, 0.8);
        let j = GridFunction::zeros(grid);
        let (rho_pd, j_pd) = apply_channel(&ch, &rho, &j).unwrap();
        assert!((integrate(&rho_pd).re - integrate(&rho).re).abs() < 1e-10);
        assert!(rho_pd.real_parts().iter().all(|&v| v >= 0.0));
        assert_eq!(j_pd.max_abs(), 0.0);

        let other = GridFunction::zeros(Grid::symmetric(8.0, 401).unwrap());
        assert!(apply_channel(&ch, &rho, &other).is_err());
    }

    #[test]
    fn ideal_channel_is_transparent() {
        let grid = Grid::symmetric(8.0, 300).unwrap();
        let ch = ChannelModel::ideal(grid);
        let rho = gaussian_density(grid, 0.5);
        let j = rho.map(|x, v| v * x.sin());
        let (r, c) = apply_channel(&ch, &rho, &j).unwrap();
        assert!(r.sub(&rho).unwrap().max_abs() < 1e-15);
        assert!(c.sub(&j).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn row_and_column_modes() {
        let grid = Grid::new(0.0, 1.0, 16).unwrap();
        let raw: Vec<f64> = (0..256).map(|k| 1.0 + (k % 7) as f64).collect();
        let row = Kernel::from_matrix(grid, raw.clone(), NormalizationMode::Row).unwrap();
        assert!(row.normalization_error().0 < 1e-13);
        let col = Kernel::from_matrix(grid, raw.clone(), NormalizationMode::Column).unwrap();
        assert!(col.normalization_error().1 < 1e-13);
        let both = Kernel::from_matrix(grid, raw, NormalizationMode::Both).unwrap();
        let (r, c) = both.normalization_error();
        assert!(r < 1e-11 && c < 1e-11);
        assert!(Kernel::from_matrix(grid, vec![-1.0; 256], NormalizationMode::Row).is_err());
        assert!(Kernel::from_matrix(grid, vec![0.0; 256], NormalizationMode::Both).is_err());
    }

    #[test]
    fn kernel_csv_round_trip() {
        let grid = Grid::symmetric(3.0, 24).unwrap();
        let k = build_gaussian_kernel(&GaussianChannelSpec { gamma: 0.6, grid }).unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,-3,"));
        let back = Kernel::read_csv(buf.as_slice(), NormalizationMode::Both).unwrap();
        assert_eq!(back.grid(), k.grid());
        for (a, b) in back.values().iter().zip(k.values()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        assert!(Kernel::read_csv("x,0,1\n0,1\n".as_bytes(), NormalizationMode::Both).is_err());
    }

    #[test]
    fn reconstruction_of_real_density() {
        let grid = Grid::symmetric(8.0, 500).unwrap();
        let rho = gaussian_density(grid, 1.5);
        let s = reconstruct_predicted_state(&rho, &GridFunction::zeros(grid), PhysicalUnits::natural()).unwrap();
        for (v, r) in s.psi().values().iter().zip(rho.values()) {
            assert_eq!(v.im, 0.0);
            assert!((v.re - r.re.sqrt()).abs() < 1e-8);
        }
        // closed-form √ρ
        let x = grid.x(250);
        let expect = (2.0 * PI * 1.5f64).powf(-0.25) * (-x * x / (4.0 * 1.5)).exp();
        assert!((s.psi().values()[250].re - expect).abs() < 1e-9);
    }

    #[test]
    fn reconstruction_round_trip_of_boosted_packet() {
        let grid = Grid::symmetric(10.0, 4001).unwrap();
        let u = PhysicalUnits::natural();
        for k in [0.0, 1.0, 3.0] {
            let psi = GridFunction::from_fn(grid, |x| Complex64::from_polar((-(x * x) / 2.0).exp(), k * x));
            let s = WaveFunction::normalized(psi, u).unwrap();
            let rho = density(&s);
            let j = current(&s);
            let rec = reconstruct_predicted_state(&rho, &j, u).unwrap();
            let overlap = crate::grid::inner_product(rec.psi(), s.psi()).unwrap().norm();
            assert!(overlap >= 1.0 - 1e-6, "k = {k}: {overlap}");
            assert!(density(&rec).sub(&rho).unwrap().max_abs() < 1e-8);
        }
    }

    #[test]
    fn reconstruction_reproduces_current() {
        let grid = Grid::symmetric(8.0, 8001).unwrap();
        let u = PhysicalUnits::natural();
        let psi = GridFunction::from_fn(grid, |x| Complex64::from_polar((-(x * x) / 2.0).exp(), 0.5 * x + 0.1 * x * x));
        let s = WaveFunction::normalized(psi, u).unwrap();
        let j = current(&s);
        let rec = reconstruct_predicted_state(&density(&s), &j, u).unwrap();
        let jr = current(&rec);
        let worst = (1..grid.len() - 1).map(|i| (jr.values()[i].re - j.values()[i].re).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst:e}");
    }

    #[test]
    fn current_without_density_is_inconsistent() {
        let grid = Grid::symmetric(10.0, 400).unwrap();
        let rho = gaussian_density(grid, 0.3);
        // current spread much wider than the density
        let j = gaussian_density(grid, 9.0).scale(Complex64::new(0.1, 0.0));
        let err = reconstruct_predicted_state(&rho, &j, PhysicalUnits::natural()).unwrap_err();
        assert_eq!(err.code(), "inconsistent-channel-output");
    }
}
