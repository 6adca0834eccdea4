use std::fs::File;

use serde_json::{json, Value};

use qmeas_core::channel::{oscillator_closed_forms, ChannelModel, Kernel, NormalizationMode};
use qmeas_core::eigen::{residual_norm, solve_bound_states, EigenSolution, PotentialSpec};
use qmeas_core::grid::{Grid, GridFunction};
use qmeas_core::pipeline::{oscillator_grid, relative_error, run_channel, sweep_gamma, ChannelRun, SweepRow};
use qmeas_core::sampling::{
    confront, draw_samples, exp_quantifiers, single_sampling_fallacy_demo, spectral_probabilities, EmpiricalDistribution,
    Population, SampleSource, SamplingPlan, SamplingTarget, SpectralLine, Verdict,
};
use qmeas_core::state::{density, descriptors, DescriptorSet, Observable, PhysicalUnits, WaveFunction};

use crate::config::{ObservableChoice, PotentialSource, RunConfig, StateChoice, TargetChoice};
use crate::error::{CliError, EXIT_REFUTED};
use crate::report::{write_table, Artifacts, SCHEMA_VERSION};

pub struct Outcome {
    pub report: Value,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Outcome { report, exit_code: 0 }
    }
}

/// Everything derived from the config before any command-specific work.
struct Setup {
    units: PhysicalUnits,
    grid: Grid,
    potential: PotentialSpec,
    kernel: Option<Kernel>,
}

fn config_error(what: impl std::fmt::Display) -> CliError {
    CliError::Config(what.to_string())
}

fn read_potential_table(path: &std::path::Path, units: PhysicalUnits) -> Result<(Grid, PotentialSpec), CliError> {
    let file = File::open(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let mut reader = csv::Reader::from_reader(file);
    let (mut xs, mut vs) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let field = |j: usize| -> Result<f64, CliError> {
            record
                .get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| config_error(format!("{}: row {} needs numeric x,V", path.display(), i + 2)))
        };
        xs.push(field(0)?);
        vs.push(field(1)?);
    }
    let grid = Grid::from_points(&xs)?;
    Ok((grid, PotentialSpec::table(vs, units)))
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let units = cfg.physical_units()?;
    let kernel = match &cfg.kernel_file {
        Some(path) => {
            let file = File::open(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            Some(Kernel::read_csv(file, NormalizationMode::Both)?)
        }
        None => None,
    };
    let (grid, potential) = match &cfg.potential {
        PotentialSource::Harmonic => {
            let grid = match &kernel {
                Some(k) => *k.grid(),
                None => oscillator_grid(units, cfg.gamma, cfg.grid_n, cfg.domain)?,
            };
            (grid, PotentialSpec::harmonic(units))
        }
        PotentialSource::Table(path) => read_potential_table(path, units)?,
    };
    if let Some(k) = &kernel {
        if *k.grid() != grid {
            return Err(qmeas_core::Error::GridMismatch.into());
        }
    }
    Ok(Setup { units, grid, potential, kernel })
}

impl Setup {
    fn solve(&self, k: usize) -> Result<EigenSolution, CliError> {
        Ok(solve_bound_states(&self.potential, &self.grid, k)?)
    }

    fn channel(&self, cfg: &RunConfig) -> Result<ChannelModel, CliError> {
        Ok(match &self.kernel {
            Some(k) => ChannelModel::new(k.clone(), k.clone(), "kernel-file")?,
            None => ChannelModel::gaussian(self.grid, cfg.gamma, cfg.lambda_width())?,
        })
    }

    fn observable(&self, choice: ObservableChoice, solution: &EigenSolution) -> Observable {
        match choice {
            ObservableChoice::Hamiltonian => solution.hamiltonian().clone(),
            ObservableChoice::Position => Observable::position(self.units),
            ObservableChoice::Momentum => Observable::momentum(self.units),
        }
    }

    /// Closed forms apply to the oscillator ground state's energy through a
    /// Gaussian channel.
    fn closed_form(&self, cfg: &RunConfig) -> Option<qmeas_core::channel::ClosedForms> {
        let applies = self.potential.is_harmonic()
            && self.kernel.is_none()
            && cfg.state == 0
            && cfg.observable == ObservableChoice::Hamiltonian;
        applies.then(|| oscillator_closed_forms(self.units, cfg.gamma))
    }
}

fn envelope(command: &str, cfg: &RunConfig, mut body: Value) -> Result<Value, CliError> {
    let obj = body.as_object_mut().expect("reports are JSON objects");
    obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
    obj.insert("command".into(), json!(command));
    obj.insert("seed".into(), json!(cfg.seed));
    obj.insert("config_hash".into(), json!(cfg.config_hash()?));
    Ok(body)
}

fn units_json(u: PhysicalUnits) -> Value {
    json!({ "hbar": u.hbar, "mass": u.mass, "omega": u.omega })
}

fn grid_json(g: &Grid) -> Value {
    json!({ "x_min": g.x_min(), "x_max": g.x_max(), "n": g.len() })
}

fn observable_name(choice: ObservableChoice) -> &'static str {
    match choice {
        ObservableChoice::Hamiltonian => "hamiltonian",
        ObservableChoice::Position => "position",
        ObservableChoice::Momentum => "momentum",
    }
}

fn eigenstate(solution: &EigenSolution, index: usize) -> Result<&WaveFunction, CliError> {
    solution
        .states
        .get(index)
        .ok_or_else(|| config_error(format!("state {index} not solved (k = {})", solution.len())))
}

pub fn solve(cfg: &RunConfig, out: &Artifacts) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let solution = s.solve(cfg.k)?;
    let residuals = (0..solution.len()).map(|i| residual_norm(&solution, i)).collect::<Result<Vec<_>, _>>()?;
    let closed = s.potential.is_harmonic().then(|| {
        (0..solution.len()).map(|n| (n as f64 + 0.5) * s.units.hbar * s.units.omega).collect::<Vec<_>>()
    });
    let report = envelope(
        "solve",
        cfg,
        json!({
            "units": units_json(s.units),
            "grid": grid_json(&s.grid),
            "potential": if s.potential.is_harmonic() { "harmonic" } else { "table" },
            "energies": solution.energies,
            "residuals": residuals,
            "closed_form": closed.map(|e| json!({ "energies": e })),
        }),
    )?;
    out.write("eigen.csv", |w| Ok(solution.write_csv(w)?))?;
    out.write_json("solve.json", &report)?;
    Ok(Outcome::ok(report))
}

pub fn describe(cfg: &RunConfig, out: &Artifacts) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let solution = s.solve(cfg.state + 1)?;
    let state = eigenstate(&solution, cfg.state)?;
    let observable = s.observable(cfg.observable, &solution);
    let desc = descriptors(state, &observable, true)?;
    let report = envelope(
        "describe",
        cfg,
        json!({
            "units": units_json(s.units),
            "grid": grid_json(&s.grid),
            "observable": observable_name(cfg.observable),
            "state": cfg.state,
            "energy": solution.energies[cfg.state],
            "in": desc,
        }),
    )?;
    out.write_json("describe.json", &report)?;
    Ok(Outcome::ok(report))
}

fn closed_form_json(cfg: &RunConfig, s: &Setup, pd: Option<DescriptorSet>) -> Value {
    match s.closed_form(cfg) {
        None => Value::Null,
        Some(c) => {
            let mut v = json!(c);
            if let Some(pd) = pd {
                v["rel_err_mean"] = json!(relative_error(pd.mean, c.mean_pd));
                v["rel_err_dev"] = json!(relative_error(pd.deviation, c.dev_pd));
            }
            v
        }
    }
}

fn profiles(run: &ChannelRun) -> impl Iterator<Item = Vec<f64>> + '_ {
    let grid = *run.rho_in.grid();
    (0..grid.len()).map(move |i| {
        vec![grid.x(i), run.rho_in.values()[i].re, run.j_in.values()[i].re, run.rho_pd.values()[i].re, run.j_pd.values()[i].re]
    })
}

pub fn measure(cfg: &RunConfig, out: &Artifacts) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let solution = s.solve(cfg.state + 1)?;
    let state = eigenstate(&solution, cfg.state)?;
    let observable = s.observable(cfg.observable, &solution);
    let run = run_channel(state, &s.channel(cfg)?, &observable)?;
    let report = envelope(
        "measure",
        cfg,
        json!({
            "units": units_json(s.units),
            "grid": grid_json(&s.grid),
            "observable": observable_name(cfg.observable),
            "state": cfg.state,
            "gamma": cfg.gamma,
            "lambda": cfg.lambda_width(),
            "in": run.in_desc,
            "pd": run.pd_desc,
            "closed_form": closed_form_json(cfg, &s, Some(run.pd_desc)),
        }),
    )?;
    out.write("profiles.csv", |w| write_table(w, &["x", "rho_in", "j_in", "rho_pd", "j_pd"], profiles(&run)))?;
    out.write_json("measure.json", &report)?;
    Ok(Outcome::ok(report))
}

pub fn sweep(cfg: &RunConfig, out: &Artifacts) -> Result<Outcome, CliError> {
    if cfg.potential != PotentialSource::Harmonic || cfg.kernel_file.is_some() {
        return Err(config_error("sweep compares against oscillator closed forms: needs potential = harmonic and no kernel_file"));
    }
    let units = cfg.physical_units()?;
    let rows = sweep_gamma(units, &cfg.gammas, cfg.grid_n, cfg.domain)?;
    let report = envelope("sweep", cfg, json!({ "units": units_json(units), "rows": rows }))?;
    out.write("sweep.csv", |w| {
        write_table(
            w,
            &SweepRow::HEADER,
            rows.iter().map(|r| {
                vec![r.gamma, r.mean_pd_numeric, r.dev_pd_numeric, r.mean_pd_closed, r.dev_pd_closed, r.rel_err_mean, r.rel_err_dev]
            }),
        )
    })?;
    out.write_json("sweep.json", &report)?;
    Ok(Outcome::ok(report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Spectral,
    Position,
}

fn resolve_target(cfg: &RunConfig) -> Result<Target, CliError> {
    match (cfg.target, cfg.observable) {
        (TargetChoice::Auto | TargetChoice::Spectral, ObservableChoice::Hamiltonian) => Ok(Target::Spectral),
        (TargetChoice::Auto | TargetChoice::Position, ObservableChoice::Position) => Ok(Target::Position),
        (t, o) => Err(config_error(format!(
            "cannot sample {} with target {:?}: spectral draws need observable = hamiltonian, position draws need observable = position",
            observable_name(o),
            t
        ))),
    }
}

/// State preparation and the simulated measurement shared by `sample`,
/// `confront` and `fallacy`.
struct Experiment {
    setup: Setup,
    target: Target,
    run: ChannelRun,
    source: SampleSource,
}

fn prepare(cfg: &RunConfig) -> Result<Experiment, CliError> {
    let target = resolve_target(cfg)?;
    let s = setup(cfg)?;
    let solution = s.solve(cfg.state + 1)?;
    let state_in = eigenstate(&solution, cfg.state)?;
    let observable = s.observable(cfg.observable, &solution);
    let run = run_channel(state_in, &s.channel(cfg)?, &observable)?;
    let truth = match cfg.truth {
        StateChoice::In => state_in,
        StateChoice::Pd => &run.state_pd,
    };
    let source = match target {
        Target::Spectral => SampleSource::Spectral(spectral_lines(&s, cfg, truth)?),
        Target::Position => SampleSource::Density(density(truth)),
    };
    Ok(Experiment { setup: s, target, run, source })
}

/// Grows the eigenbasis (8, 16, 32, …, capped at `k_max`) until it captures
/// the state; high levels of a large basis may not fit the domain, so the
/// smallest sufficient basis is used.
fn spectral_lines(s: &Setup, cfg: &RunConfig, truth: &WaveFunction) -> Result<Vec<SpectralLine>, CliError> {
    let mut k = 8.max(cfg.state + 1).min(cfg.k_max);
    loop {
        let basis = s.solve(k)?;
        match spectral_probabilities(truth, &basis) {
            Err(qmeas_core::Error::KMaxTooSmall { .. }) if k < cfg.k_max => k = (2 * k).min(cfg.k_max),
            other => return Ok(other?),
        }
    }
}

impl Experiment {
    fn plan(&self, cfg: &RunConfig) -> Result<SamplingPlan, CliError> {
        let target = match self.target {
            Target::Spectral => SamplingTarget::Spectral {
                observable: Observable::hamiltonian(self.setup.units, self.setup.potential.values(&self.setup.grid)?),
                k_max: cfg.k_max,
            },
            Target::Position => SamplingTarget::PositionFromDensity,
        };
        Ok(SamplingPlan::new(cfg.n_samples, cfg.seed, cfg.noise_model(), target)?)
    }

    fn target_name(&self) -> &'static str {
        match self.target {
            Target::Spectral => "spectral",
            Target::Position => "position",
        }
    }
}

fn state_name(c: StateChoice) -> &'static str {
    match c {
        StateChoice::In => "in",
        StateChoice::Pd => "pd",
    }
}

struct Recorded {
    samples: Vec<f64>,
    distribution: EmpiricalDistribution,
    exp: DescriptorSet,
}

fn record(cfg: &RunConfig, ex: &Experiment) -> Result<Recorded, CliError> {
    let samples = draw_samples(&ex.plan(cfg)?, &ex.source)?;
    let distribution = EmpiricalDistribution::from_samples(&samples, cfg.binning)?;
    let exp = exp_quantifiers(&distribution);
    Ok(Recorded { samples, distribution, exp })
}

fn write_recordings(out: &Artifacts, rec: &Recorded) -> Result<(), CliError> {
    out.write("samples.csv", |w| Ok(qmeas_core::sampling::write_samples_csv(&rec.samples, w)?))?;
    out.write("distribution.csv", |w| Ok(rec.distribution.write_csv(w)?))
}

pub fn sample(cfg: &RunConfig, out: &Artifacts) -> Result<Outcome, CliError> {
    let ex = prepare(cfg)?;
    let rec = record(cfg, &ex)?;
    let report = envelope(
        "sample",
        cfg,
        json!({
            "observable": observable_name(cfg.observable),
            "target": ex.target_name(),
            "truth": state_name(cfg.truth),
            "gamma": cfg.gamma,
            "n_samples": cfg.n_samples,
            "noise": cfg.noise,
            "bins": rec.distribution.len(),
            "in": ex.run.in_desc,
            "pd": ex.run.pd_desc,
            "exp": rec.exp,
            "closed_form": closed_form_json(cfg, &ex.setup, Some(ex.run.pd_desc)),
        }),
    )?;
    write_recordings(out, &rec)?;
    out.write_json("sample.json", &report)?;
    Ok(Outcome::ok(report))
}

pub fn confront_cmd(cfg: &RunConfig, out: &Artifacts) -> Result<Outcome, CliError> {
    let ex = prepare(cfg)?;
    let rec = record(cfg, &ex)?;
    let pd = (cfg.against == StateChoice::Pd).then_some(ex.run.pd_desc);
    let r = confront(ex.run.in_desc, rec.exp, pd, cfg.tolerances());
    let report = envelope(
        "confront",
        cfg,
        json!({
            "observable": observable_name(cfg.observable),
            "target": ex.target_name(),
            "truth": state_name(cfg.truth),
            "gamma": cfg.gamma,
            "n_samples": cfg.n_samples,
            "noise": cfg.noise,
            "in": r.in_desc,
            "pd": r.pd_desc,
            "exp": r.exp_desc,
            "closed_form": closed_form_json(cfg, &ex.setup, Some(ex.run.pd_desc)),
            "reference": r.reference,
            "tolerances": r.tolerances,
            "comparisons": r.comparisons,
            "verdict": r.verdict,
            "suggested_upgradings": r.suggested_upgradings,
        }),
    )?;
    write_recordings(out, &rec)?;
    out.write_json("confront.json", &report)?;
    let exit_code = if r.verdict == Verdict::Refuted { EXIT_REFUTED } else { 0 };
    Ok(Outcome { report, exit_code })
}

/// Keeps the lines that carry probability and renormalizes them.
fn lines_to_distribution(lines: &[SpectralLine]) -> Result<EmpiricalDistribution, CliError> {
    let kept: Vec<_> = lines.iter().filter(|l| l.probability > 0.0).collect();
    let total: f64 = kept.iter().map(|l| l.probability).sum();
    Ok(EmpiricalDistribution::new(
        kept.iter().map(|l| l.value).collect(),
        kept.iter().map(|l| l.probability / total).collect(),
    )?)
}

pub fn fallacy(cfg: &RunConfig, out: &Artifacts) -> Result<Outcome, CliError> {
    let ex = prepare(cfg)?;
    let population = match &ex.source {
        SampleSource::Spectral(lines) => Population::Distribution(lines_to_distribution(lines)?),
        SampleSource::Density(rho) => Population::Density(GridFunction::clone(rho)),
    };
    let rows = single_sampling_fallacy_demo(&population, &cfg.sizes, cfg.trials, cfg.seed)?;
    let report = envelope(
        "fallacy",
        cfg,
        json!({
            "observable": observable_name(cfg.observable),
            "target": ex.target_name(),
            "truth": state_name(cfg.truth),
            "trials": cfg.trials,
            "rows": rows,
        }),
    )?;
    out.write("fallacy.csv", |w| {
        write_table(
            w,
            &["n", "estimator_variance", "scaled_variance", "population_variance"],
            rows.iter().map(|r| vec![r.n as f64, r.estimator_variance, r.scaled_variance, r.population_variance]),
        )
    })?;
    out.write_json("fallacy.json", &report)?;
    Ok(Outcome::ok(report))
}
