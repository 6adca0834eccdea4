//! End-to-end runs: intrinsic state → channel → predicted state → descriptors.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{apply_channel, oscillator_closed_forms, pd_descriptors, reconstruct_predicted_state, ChannelModel, ClosedForms};
use crate::eigen::{solve_bound_states, EigenSolution, PotentialSpec};
use crate::error::Result;
use crate::grid::{Grid, GridFunction};
use crate::state::{current, density, descriptors, DescriptorSet, Observable, PhysicalUnits, WaveFunction};

pub const DEFAULT_GRID_POINTS: usize = 2048;
/// Grid half-width in units of the widest length scale in play.
pub const DEFAULT_DOMAIN_FACTOR: f64 = 12.0;

#[derive(Debug, Clone)]
pub struct ChannelRun {
    pub rho_in: GridFunction,
    pub j_in: GridFunction,
    pub rho_pd: GridFunction,
    pub j_pd: GridFunction,
    pub state_pd: WaveFunction,
    pub in_desc: DescriptorSet,
    pub pd_desc: DescriptorSet,
}

pub fn run_channel(state_in: &WaveFunction, channel: &ChannelModel, observable: &Observable) -> Result<ChannelRun> {
    let rho_in = density(state_in);
    let j_in = current(state_in);
    let (rho_pd, j_pd) = apply_channel(channel, &rho_in, &j_in)?;
    let state_pd = reconstruct_predicted_state(&rho_pd, &j_pd, state_in.units())?;
    let in_desc = descriptors(state_in, observable, false)?;
    let pd_desc = pd_descriptors(&state_pd, observable)?;
    Ok(ChannelRun { rho_in, j_in, rho_pd, j_pd, state_pd, in_desc, pd_desc })
}

/// Symmetric grid of half-width `domain_factor · sqrt(σ² + γ²)`, wide enough
/// for both the intrinsic ground state and its blurred image.
pub fn oscillator_grid(units: PhysicalUnits, gamma: f64, n: usize, domain_factor: f64) -> Result<Grid> {
    let sigma = units.oscillator_sigma();
    Grid::symmetric(domain_factor * (sigma * sigma + gamma * gamma).sqrt(), n)
}

#[derive(Debug, Clone)]
pub struct OscillatorMeasurement {
    pub gamma: f64,
    pub solution: EigenSolution,
    pub channel_run: ChannelRun,
    pub closed: ClosedForms,
}

/// Ground state of the oscillator pushed through a Gaussian channel of
/// width `gamma` (same width for `Γ` and `Λ`), energy descriptors on both sides.
pub fn measure_oscillator(units: PhysicalUnits, gamma: f64, n: usize, domain_factor: f64) -> Result<OscillatorMeasurement> {
    let grid = oscillator_grid(units, gamma, n, domain_factor)?;
    let solution = solve_bound_states(&PotentialSpec::harmonic(units), &grid, 1)?;
    let channel = ChannelModel::gaussian(grid, gamma, gamma)?;
    let channel_run = run_channel(solution.ground_state(), &channel, solution.hamiltonian())?;
    Ok(OscillatorMeasurement { gamma, solution, channel_run, closed: oscillator_closed_forms(units, gamma) })
}

/// `|numeric - closed| / max(|closed|, 1e-12)`.
pub fn relative_error(numeric: f64, closed: f64) -> f64 {
    (numeric - closed).abs() / closed.abs().max(1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub mean_pd_numeric: f64,
    pub dev_pd_numeric: f64,
    pub mean_pd_closed: f64,
    pub dev_pd_closed: f64,
    pub rel_err_mean: f64,
    pub rel_err_dev: f64,
}

impl SweepRow {
    pub const HEADER: [&'static str; 7] =
        ["gamma", "mean_pd_numeric", "dev_pd_numeric", "mean_pd_closed", "dev_pd_closed", "rel_err_mean", "rel_err_dev"];

    pub fn from_measurement(m: &OscillatorMeasurement) -> Self {
        let pd = m.channel_run.pd_desc;
        SweepRow {
            gamma: m.gamma,
            mean_pd_numeric: pd.mean,
            dev_pd_numeric: pd.deviation,
            mean_pd_closed: m.closed.mean_pd,
            dev_pd_closed: m.closed.dev_pd,
            rel_err_mean: relative_error(pd.mean, m.closed.mean_pd),
            rel_err_dev: relative_error(pd.deviation, m.closed.dev_pd),
        }
    }
}

/// One row per width, in input order. Widths are processed in parallel.
pub fn sweep_gamma(units: PhysicalUnits, gammas: &[f64], n: usize, domain_factor: f64) -> Result<Vec<SweepRow>> {
    gammas
        .par_iter()
        .map(|&g| measure_oscillator(units, g, n, domain_factor).map(|m| SweepRow::from_measurement(&m)))
        .collect()
}
