//! Uniform 1D grids and the complex-valued functions that live on them.
//!
//! Every other module works on [`GridFunction`]s: quadrature is composite
//! trapezoid (Simpson is available through [`Quadrature`]), derivatives are
//! second-order central differences with one-sided second-order stencils at
//! the two end points. Nothing wraps around.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_min >= x_max {
            return Err(Error::InvalidGrid(format!("x_min ({x_min}) must be below x_max ({x_max})")));
        }
        if n < MIN_POINTS {
            return Err(Error::InvalidGrid(format!("need at least {MIN_POINTS} points, got {n}")));
        }
        Ok(Grid { x_min, x_max, n })
    }

    /// Grid on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Grid::new(-half_width, half_width, n)
    }

    /// Rebuilds a grid from tabulated abscissae, which must be uniformly spaced.
    pub fn from_points(xs: &[f64]) -> Result<Self> {
        if xs.len() < MIN_POINTS {
            return Err(Error::InvalidGrid(format!("need at least {MIN_POINTS} points, got {}", xs.len())));
        }
        let grid = Grid::new(xs[0], xs[xs.len() - 1], xs.len())?;
        let h = grid.spacing();
        for (i, &x) in xs.iter().enumerate() {
            if (x - grid.x(i)).abs() > 1e-6 * h {
                return Err(Error::InvalidGrid(format!("abscissa {i} ({x}) breaks uniform spacing")));
            }
        }
        Ok(grid)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.x_max
        } else {
            self.x_min + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Composite trapezoid weights; `sum_i w_i f(x_i)` integrates `f`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    pub fn weights(&self, rule: Quadrature) -> Vec<f64> {
        match rule {
            Quadrature::Trapezoid => self.trapezoid_weights(),
            Quadrature::Simpson => self.simpson_weights(),
        }
    }

    // Simpson 1/3 over an even number of intervals, closing with a 3/8
    // panel when the interval count is odd.
    fn simpson_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let intervals = self.n - 1;
        let mut w = vec![0.0; self.n];
        let simpson_end = if intervals.is_multiple_of(2) { intervals } else { intervals - 3 };
        for start in (0..simpson_end).step_by(2) {
            w[start] += h / 3.0;
            w[start + 1] += 4.0 * h / 3.0;
            w[start + 2] += h / 3.0;
        }
        if simpson_end < intervals {
            let s = simpson_end;
            let c = 3.0 * h / 8.0;
            w[s] += c;
            w[s + 1] += 3.0 * c;
            w[s + 2] += 3.0 * c;
            w[s + 3] += c;
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    Trapezoid,
    Simpson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), actual: values.len() });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        GridFunction::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        GridFunction { grid, values }
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        GridFunction::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> GridFunction {
        let values = self.values.iter().enumerate().map(|(i, &v)| f(self.grid.x(i), v)).collect();
        GridFunction { grid: self.grid, values }
    }

    pub fn scale(&self, factor: Complex64) -> GridFunction {
        self.map(|_, v| v * factor)
    }

    pub fn conj(&self) -> GridFunction {
        self.map(|_, v| v.conj())
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: Complex64, other: &GridFunction, b: Complex64) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&f, &g)| a * f + b * g).collect();
        Ok(GridFunction { grid: self.grid, values })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.axpby(Complex64::new(1.0, 0.0), other, Complex64::new(-1.0, 0.0))
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `sqrt(∫|f|² dx)`.
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        self.values.iter().zip(&w).map(|(v, w)| w * v.norm_sqr()).sum::<f64>().sqrt()
    }
}

pub fn integrate(f: &GridFunction) -> Complex64 {
    integrate_with(f, Quadrature::Trapezoid)
}

pub fn integrate_with(f: &GridFunction, rule: Quadrature) -> Complex64 {
    let w = f.grid.weights(rule);
    f.values.iter().zip(&w).map(|(v, w)| v * w).sum()
}

/// Quadrature of a real sampled function.
pub fn integrate_real(grid: &Grid, values: &[f64]) -> f64 {
    grid.trapezoid_weights().iter().zip(values).map(|(w, v)| w * v).sum()
}

/// `∫ conj(f)·g dx`.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<Complex64> {
    f.check_same_grid(g)?;
    let w = f.grid.trapezoid_weights();
    Ok(f.values.iter().zip(&g.values).zip(&w).map(|((a, b), w)| a.conj() * b * w).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

pub fn derivative(f: &GridFunction, order: DerivativeOrder) -> GridFunction {
    let h = f.grid.spacing();
    let v = &f.values;
    let n = v.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    match order {
        DerivativeOrder::First => {
            let c = 1.0 / (2.0 * h);
            out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) * c;
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - v[i - 1]) * c;
            }
            out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) * c;
        }
        DerivativeOrder::Second => {
            let c = 1.0 / (h * h);
            out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) * c;
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) * c;
            }
            out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) * c;
        }
    }
    GridFunction { grid: f.grid, values: out }
}

/// Scales `f` so that `∫|f|² dx = 1`.
pub fn normalize(f: &GridFunction) -> Result<GridFunction> {
    let norm = f.l2_norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::ZeroNorm);
    }
    Ok(f.scale(Complex64::new(1.0 / norm, 0.0)))
}
