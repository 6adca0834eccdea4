//! Bound states of `Ĥ = -(ħ²/2m) d²/dx² + V(x)` on a Dirichlet grid.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::state::{Observable, PhysicalUnits, WaveFunction};
use crate::tridiag::SymTridiagonal;

/// Largest edge amplitude, relative to the peak, a returned state may have.
pub const BOUNDARY_DECAY: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `m ω² x² / 2` with `ω` taken from the units.
    Harmonic,
    /// Values tabulated on the solver grid.
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub units: PhysicalUnits,
}

impl PotentialSpec {
    pub fn harmonic(units: PhysicalUnits) -> Self {
        PotentialSpec { kind: PotentialKind::Harmonic, units }
    }

    pub fn table(values: Vec<f64>, units: PhysicalUnits) -> Self {
        PotentialSpec { kind: PotentialKind::Table(values), units }
    }

    pub fn values(&self, grid: &Grid) -> Result<Vec<f64>> {
        match &self.kind {
            PotentialKind::Harmonic => {
                let k = self.units.mass * self.units.omega * self.units.omega;
                Ok(grid.points().into_iter().map(|x| 0.5 * k * x * x).collect())
            }
            PotentialKind::Table(v) => {
                if v.len() != grid.len() {
                    return Err(Error::LengthMismatch { expected: grid.len(), actual: v.len() });
                }
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument(format!("potential value {i} is not finite")));
                }
                Ok(v.clone())
            }
        }
    }

    pub fn is_harmonic(&self) -> bool {
        matches!(self.kind, PotentialKind::Harmonic)
    }
}

#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub energies: Vec<f64>,
    pub states: Vec<WaveFunction>,
    hamiltonian: Observable,
}

impl EigenSolution {
    pub fn grid(&self) -> &Grid {
        self.states[0].grid()
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn hamiltonian(&self) -> &Observable {
        &self.hamiltonian
    }

    pub fn ground_state(&self) -> &WaveFunction {
        &self.states[0]
    }

    /// Writes `x,psi0,psi1,...` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["x".to_string()];
        header.extend((0..self.len()).map(|i| format!("psi{i}")));
        w.write_record(&header)?;
        let grid = *self.grid();
        for i in 0..grid.len() {
            let mut row = vec![grid.x(i).to_string()];
            row.extend(self.states.iter().map(|s| s.psi().values()[i].re.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Lowest `k` eigenpairs of the three-point discretization, boundary values
/// pinned to zero.
pub fn solve_bound_states(potential: &PotentialSpec, grid: &Grid, k: usize) -> Result<EigenSolution> {
    let n = grid.len();
    if k == 0 || k > n - 2 {
        return Err(Error::InvalidArgument(format!("cannot request {k} states on {} interior points", n - 2)));
    }
    let units = potential.units;
    let v = potential.values(grid)?;
    let h = grid.spacing();
    let t = units.hbar * units.hbar / (2.0 * units.mass * h * h);
    let diag: Vec<f64> = v[1..n - 1].iter().map(|vi| 2.0 * t + vi).collect();
    let off = vec![-t; n - 3];
    let matrix = SymTridiagonal::new(diag, off)?;

    let scale = 1.0 / h.sqrt();
    let mut energies = Vec::with_capacity(k);
    let mut states = Vec::with_capacity(k);
    for (index, (energy, vec)) in matrix.lowest(k)?.into_iter().enumerate() {
        let peak = vec.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let sign = vec.iter().find(|x| x.abs() > 1e-6 * peak).map_or(1.0, |x| x.signum());
        let edge = vec[0].abs().max(vec[vec.len() - 1].abs()) / peak;
        if edge >= BOUNDARY_DECAY {
            return Err(Error::DomainTooSmall { state: index, amplitude: edge });
        }
        let mut values = Vec::with_capacity(n);
        values.push(Complex64::new(0.0, 0.0));
        values.extend(vec.iter().map(|x| Complex64::new(sign * scale * x, 0.0)));
        values.push(Complex64::new(0.0, 0.0));
        let psi = GridFunction::new(*grid, values)?;
        energies.push(energy);
        states.push(WaveFunction::normalized(psi, units)?);
    }
    Ok(EigenSolution { energies, states, hamiltonian: Observable::hamiltonian(units, v) })
}

/// `‖ĤΨ - EΨ‖` for state `index`, using the grid operator and quadrature.
pub fn residual_norm(solution: &EigenSolution, index: usize) -> Result<f64> {
    let state = solution
        .states
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("no state with index {index}")))?;
    residual_of(&solution.hamiltonian, state.psi(), solution.energies[index])
}

pub fn residual_of(hamiltonian: &Observable, psi: &GridFunction, energy: f64) -> Result<f64> {
    let hpsi = hamiltonian.apply(psi)?;
    Ok(hpsi.axpby(Complex64::new(1.0, 0.0), psi, Complex64::new(-energy, 0.0))?.l2_norm())
}
