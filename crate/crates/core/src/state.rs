//! Wavefunctions, observables and the intrinsic descriptors of a state.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{derivative, inner_product, normalize, DerivativeOrder, Grid, GridFunction};

/// Relative bound on `Im (Ψ, ÂΨ)`, scaled by `‖Ψ‖·‖ÂΨ‖`.
pub const IMAG_TOLERANCE: f64 = 1e-8;

/// Norm drift accepted by [`WaveFunction::new`].
pub const NORM_TOLERANCE: f64 = 1e-10;

pub const HBAR_SI: f64 = 1.054_571_817e-34;
pub const ELECTRON_MASS_SI: f64 = 9.109_383_701_5e-31;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalUnits {
    pub hbar: f64,
    pub mass: f64,
    pub omega: f64,
}

impl Default for PhysicalUnits {
    fn default() -> Self {
        PhysicalUnits::natural()
    }
}

impl PhysicalUnits {
    pub fn new(hbar: f64, mass: f64, omega: f64) -> Result<Self> {
        for (name, v) in [("hbar", hbar), ("mass", mass), ("omega", omega)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(PhysicalUnits { hbar, mass, omega })
    }

    /// ħ = m = ω = 1.
    pub fn natural() -> Self {
        PhysicalUnits { hbar: 1.0, mass: 1.0, omega: 1.0 }
    }

    pub fn si(mass: f64, omega: f64) -> Result<Self> {
        PhysicalUnits::new(HBAR_SI, mass, omega)
    }

    /// Ground-state position spread of the oscillator, `sqrt(ħ / 2mω)`.
    pub fn oscillator_sigma(&self) -> f64 {
        (self.hbar / (2.0 * self.mass * self.omega)).sqrt()
    }

    /// Oscillator energy quantum `ħω`.
    pub fn energy_scale(&self) -> f64 {
        self.hbar * self.omega
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    psi: GridFunction,
    units: PhysicalUnits,
}

impl WaveFunction {
    /// Wraps an already normalized function.
    pub fn new(psi: GridFunction, units: PhysicalUnits) -> Result<Self> {
        let norm_sq = psi.l2_norm().powi(2);
        if (norm_sq - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("wavefunction norm² is {norm_sq}, expected 1")));
        }
        Ok(WaveFunction { psi, units })
    }

    pub fn normalized(psi: GridFunction, units: PhysicalUnits) -> Result<Self> {
        Ok(WaveFunction { psi: normalize(&psi)?, units })
    }

    pub fn psi(&self) -> &GridFunction {
        &self.psi
    }

    pub fn grid(&self) -> &Grid {
        self.psi.grid()
    }

    pub fn units(&self) -> PhysicalUnits {
        self.units
    }

    pub fn with_phase(&self, theta: f64) -> WaveFunction {
        WaveFunction { psi: self.psi.scale(Complex64::from_polar(1.0, theta)), units: self.units }
    }

    pub fn conj(&self) -> WaveFunction {
        WaveFunction { psi: self.psi.conj(), units: self.units }
    }
}

/// `ρ(x) = |Ψ(x)|²`, stored with zero imaginary part.
pub fn density(state: &WaveFunction) -> GridFunction {
    state.psi.map(|_, v| Complex64::new(v.norm_sqr(), 0.0))
}

/// `j(x) = (ħ/m)·Im(Ψ*·∂Ψ/∂x)`.
pub fn current(state: &WaveFunction) -> GridFunction {
    let d = derivative(&state.psi, DerivativeOrder::First);
    let factor = state.units.hbar / state.units.mass;
    let values = state
        .psi
        .values()
        .iter()
        .zip(d.values())
        .map(|(p, dp)| Complex64::new(factor * (p.conj() * dp).im, 0.0))
        .collect();
    GridFunction::new(*state.grid(), values).expect("same grid")
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservableKind {
    Position,
    /// `-iħ ∂/∂x`
    Momentum,
    /// `-(ħ²/2m) d²/dx² + V(x)` with `V` tabulated on the grid.
    Hamiltonian { potential: Vec<f64> },
}

/// A linear operator applied matrix-free to grid functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    name: String,
    units: PhysicalUnits,
    kind: ObservableKind,
}

impl Observable {
    pub fn position(units: PhysicalUnits) -> Self {
        Observable { name: "position".into(), units, kind: ObservableKind::Position }
    }

    pub fn momentum(units: PhysicalUnits) -> Self {
        Observable { name: "momentum".into(), units, kind: ObservableKind::Momentum }
    }

    pub fn hamiltonian(units: PhysicalUnits, potential: Vec<f64>) -> Self {
        Observable { name: "energy".into(), units, kind: ObservableKind::Hamiltonian { potential } }
    }

    /// `Ĥ` with `V(x) = m ω² x² / 2` on `grid`.
    pub fn oscillator_hamiltonian(units: PhysicalUnits, grid: &Grid) -> Self {
        let k = units.mass * units.omega * units.omega;
        let potential = grid.points().into_iter().map(|x| 0.5 * k * x * x).collect();
        Observable::hamiltonian(units, potential)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ObservableKind {
        &self.kind
    }

    pub fn units(&self) -> PhysicalUnits {
        self.units
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        match &self.kind {
            ObservableKind::Position => Ok(f.map(|x, v| v * x)),
            ObservableKind::Momentum => {
                let factor = Complex64::new(0.0, -self.units.hbar);
                Ok(derivative(f, DerivativeOrder::First).scale(factor))
            }
            ObservableKind::Hamiltonian { potential } => {
                if potential.len() != f.grid().len() {
                    return Err(Error::LengthMismatch { expected: f.grid().len(), actual: potential.len() });
                }
                let kinetic = -self.units.hbar * self.units.hbar / (2.0 * self.units.mass);
                let d2 = derivative(f, DerivativeOrder::Second);
                let values = d2
                    .values()
                    .iter()
                    .zip(f.values())
                    .zip(potential)
                    .map(|((d2, v), pot)| d2 * kinetic + v * pot)
                    .collect();
                GridFunction::new(*f.grid(), values)
            }
        }
    }

    /// `(Â - a)f`.
    fn apply_shifted(&self, f: &GridFunction, shift: f64) -> Result<GridFunction> {
        let af = self.apply(f)?;
        af.axpby(Complex64::new(1.0, 0.0), f, Complex64::new(-shift, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HigherMoments {
    pub third: f64,
    pub fourth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescriptorSet {
    pub mean: f64,
    #[serde(rename = "dev")]
    pub deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub higher_moments: Option<HigherMoments>,
}

impl DescriptorSet {
    pub fn new(mean: f64, deviation: f64) -> Self {
        DescriptorSet { mean, deviation, higher_moments: None }
    }
}

/// Raw `(Ψ, ÂΨ)` together with the imaginary-part bound it is checked against.
pub fn expectation(state: &WaveFunction, observable: &Observable) -> Result<(Complex64, f64)> {
    let a_psi = observable.apply(state.psi())?;
    let z = inner_product(state.psi(), &a_psi)?;
    let bound = IMAG_TOLERANCE * state.psi().l2_norm() * a_psi.l2_norm();
    Ok((z, bound))
}

/// `⟨A⟩ = Re (Ψ, ÂΨ)`; fails when the imaginary part is not negligible.
pub fn in_mean(state: &WaveFunction, observable: &Observable) -> Result<f64> {
    let (z, bound) = expectation(state, observable)?;
    if z.im.abs() > bound {
        return Err(Error::NonSymmetricOperator { imag: z.im, bound });
    }
    Ok(z.re)
}

/// `σ(A) = ‖(Â - ⟨A⟩)Ψ‖`.
pub fn in_deviation(state: &WaveFunction, observable: &Observable) -> Result<f64> {
    let mean = in_mean(state, observable)?;
    Ok(observable.apply_shifted(state.psi(), mean)?.l2_norm())
}

/// `Re (Ψ, (Â - ⟨A⟩)^order Ψ)` for order 2, 3 or 4.
///
/// The power is split across both sides of the scalar product, so even
/// orders are squared norms and never negative.
pub fn central_moment(state: &WaveFunction, observable: &Observable, order: u32) -> Result<f64> {
    if !(2..=4).contains(&order) {
        return Err(Error::InvalidArgument(format!("central moment order must be 2, 3 or 4, got {order}")));
    }
    let mean = in_mean(state, observable)?;
    let once = observable.apply_shifted(state.psi(), mean)?;
    match order {
        2 => Ok(once.l2_norm().powi(2)),
        3 => {
            let twice = observable.apply_shifted(&once, mean)?;
            Ok(inner_product(&once, &twice)?.re)
        }
        _ => Ok(observable.apply_shifted(&once, mean)?.l2_norm().powi(2)),
    }
}

/// Mean and deviation, plus third and fourth central moments when asked.
pub fn descriptors(state: &WaveFunction, observable: &Observable, higher: bool) -> Result<DescriptorSet> {
    let mean = in_mean(state, observable)?;
    let deviation = in_deviation(state, observable)?;
    let higher_moments = if higher {
        Some(HigherMoments {
            third: central_moment(state, observable, 3)?,
            fourth: central_moment(state, observable, 4)?,
        })
    } else {
        None
    };
    Ok(DescriptorSet { mean, deviation, higher_moments })
}
