//! Simulated experiments: seeded draws of recorded values, device noise,
//! empirical quantifiers and the theory-vs-experiment confrontation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::EigenSolution;
use crate::error::{Error, Result};
use crate::grid::{inner_product, GridFunction};
use crate::state::{DescriptorSet, Observable, WaveFunction};

/// Minimum probability the spectral basis must capture.
pub const MIN_CAPTURED_PROBABILITY: f64 = 0.999;
/// Default number of recordings in a simulated measurement.
pub const DEFAULT_SAMPLES: usize = 100_000;
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceNoise {
    None,
    /// Zero-mean Gaussian added to every recorded value.
    AdditiveGaussian { width: f64 },
}

impl DeviceNoise {
    fn sampler(&self) -> Result<Option<Normal<f64>>> {
        match *self {
            DeviceNoise::None => Ok(None),
            DeviceNoise::AdditiveGaussian { width } if width >= 0.0 && width.is_finite() => {
                if width == 0.0 {
                    Ok(None)
                } else {
                    Ok(Some(Normal::new(0.0, width).map_err(|e| Error::InvalidArgument(e.to_string()))?))
                }
            }
            DeviceNoise::AdditiveGaussian { width } => {
                Err(Error::InvalidArgument(format!("noise width must be finite and >= 0, got {width}")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingTarget {
    PositionFromDensity,
    /// Eigenvalues of `observable`, using its lowest `k_max` eigenstates.
    Spectral { observable: Observable, k_max: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub n_samples: usize,
    pub seed: u64,
    pub noise: DeviceNoise,
    pub target: SamplingTarget,
}

impl SamplingPlan {
    pub fn new(n_samples: usize, seed: u64, noise: DeviceNoise, target: SamplingTarget) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        if let SamplingTarget::Spectral { k_max: 0, .. } = target {
            return Err(Error::InvalidArgument("k_max must be at least 1".into()));
        }
        noise.sampler()?;
        Ok(SamplingPlan { n_samples, seed, noise, target })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralLine {
    pub value: f64,
    pub probability: f64,
}

/// `p_s = |(ψ_s, Ψ)|²` over the eigenstates in `solution`.
pub fn spectral_probabilities(state: &WaveFunction, solution: &EigenSolution) -> Result<Vec<SpectralLine>> {
    let lines = solution
        .states
        .iter()
        .zip(&solution.energies)
        .map(|(basis, &value)| Ok(SpectralLine { value, probability: inner_product(basis.psi(), state.psi())?.norm_sqr() }))
        .collect::<Result<Vec<_>>>()?;
    let captured: f64 = lines.iter().map(|l| l.probability).sum();
    if captured < MIN_CAPTURED_PROBABILITY {
        return Err(Error::KMaxTooSmall { captured, required: MIN_CAPTURED_PROBABILITY });
    }
    Ok(lines)
}

#[derive(Debug, Clone)]
pub enum SampleSource {
    Spectral(Vec<SpectralLine>),
    Density(GridFunction),
}

/// Tabulated density sampled by exact inversion of its piecewise-linear CDF.
struct DensitySampler {
    xs: Vec<f64>,
    rho: Vec<f64>,
    cdf: Vec<f64>,
    h: f64,
}

impl DensitySampler {
    fn new(density: &GridFunction) -> Result<Self> {
        let grid = *density.grid();
        let rho: Vec<f64> = density.real_parts().into_iter().map(|r| r.max(0.0)).collect();
        let h = grid.spacing();
        let mut cdf = Vec::with_capacity(rho.len());
        cdf.push(0.0);
        for w in rho.windows(2) {
            let last = *cdf.last().unwrap();
            cdf.push(last + 0.5 * h * (w[0] + w[1]));
        }
        if !(*cdf.last().unwrap() > 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(DensitySampler { xs: grid.points(), rho, cdf, h })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let total = *self.cdf.last().unwrap();
        let target = rng.random::<f64>() * total;
        let cell = self.cdf.partition_point(|&c| c <= target).clamp(1, self.cdf.len() - 1) - 1;
        let mass = target - self.cdf[cell];
        let (ra, rb) = (self.rho[cell], self.rho[cell + 1]);
        let slope = (rb - ra) / self.h;
        let offset = if slope.abs() * self.h <= 1e-12 * ra.max(rb) {
            if ra > 0.0 { mass / ra } else { 0.5 * self.h }
        } else {
            // ra·s + slope·s²/2 = mass
            (-ra + (ra * ra + 2.0 * slope * mass).max(0.0).sqrt()) / slope
        };
        self.xs[cell] + offset.clamp(0.0, self.h)
    }
}

enum Sampler {
    Spectral { values: Vec<f64>, index: WeightedIndex<f64> },
    Density(DensitySampler),
}

impl Sampler {
    fn new(source: &SampleSource) -> Result<Self> {
        match source {
            SampleSource::Spectral(lines) => {
                let index = WeightedIndex::new(lines.iter().map(|l| l.probability))
                    .map_err(|e| Error::InvalidArgument(format!("spectral weights: {e}")))?;
                Ok(Sampler::Spectral { values: lines.iter().map(|l| l.value).collect(), index })
            }
            SampleSource::Density(d) => Ok(Sampler::Density(DensitySampler::new(d)?)),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Spectral { values, index } => values[index.sample(rng)],
            Sampler::Density(d) => d.sample(rng),
        }
    }
}

/// Deterministic in `(plan, source)`.
pub fn draw_samples(plan: &SamplingPlan, source: &SampleSource) -> Result<Vec<f64>> {
    let sampler = Sampler::new(source)?;
    let noise = plan.noise.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    Ok((0..plan.n_samples)
        .map(|_| {
            let v = sampler.sample(&mut rng);
            match &noise {
                Some(n) => v + n.sample(&mut rng),
                None => v,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// Width `2·IQR·N^(-1/3)`; falls back to `Distinct` when the IQR vanishes.
    FreedmanDiaconis,
    Width(f64),
    /// One entry per distinct recorded value.
    Distinct,
}

/// Recorded values `α_j` with relative frequencies `ν_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    frequencies: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(values: Vec<f64>, frequencies: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != frequencies.len() {
            return Err(Error::InvalidArgument(format!(
                "need matching non-empty values and frequencies, got {} and {}",
                values.len(),
                frequencies.len()
            )));
        }
        if frequencies.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidArgument("frequencies must be positive".into()));
        }
        let total: f64 = frequencies.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("frequencies sum to {total}, not 1")));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("values must be finite and strictly ascending".into()));
        }
        Ok(EmpiricalDistribution { values, frequencies })
    }

    /// Groups raw recordings. Each bin is represented by the mean of the
    /// samples it holds, so the overall mean is preserved.
    pub fn from_samples(samples: &[f64], binning: Binning) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no samples".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("samples must be finite".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let width = match binning {
            Binning::Distinct => None,
            Binning::Width(w) if w > 0.0 && w.is_finite() => Some(w),
            Binning::Width(w) => return Err(Error::InvalidArgument(format!("bin width must be positive, got {w}"))),
            Binning::FreedmanDiaconis => {
                let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
                let w = 2.0 * iqr / (sorted.len() as f64).cbrt();
                (w > 0.0).then_some(w)
            }
        };
        let n = sorted.len() as f64;
        let lo = sorted[0];
        let key = |v: f64| -> i64 {
            match width {
                Some(w) => ((v - lo) / w).floor() as i64,
                None => 0,
            }
        };
        let mut values = Vec::new();
        let mut frequencies = Vec::new();
        let mut start = 0;
        while start < sorted.len() {
            let k = key(sorted[start]);
            let first = sorted[start];
            let mut end = start + 1;
            while end < sorted.len() && if width.is_some() { key(sorted[end]) == k } else { sorted[end] == first } {
                end += 1;
            }
            let group = &sorted[start..end];
            let mean = group.iter().sum::<f64>() / group.len() as f64;
            // bin means of adjacent bins can only tie through rounding
            if let Some(&last) = values.last() {
                if mean <= last {
                    *frequencies.last_mut().unwrap() += group.len() as f64 / n;
                    start = end;
                    continue;
                }
            }
            values.push(mean.clamp(group[0], group[group.len() - 1]));
            frequencies.push(group.len() as f64 / n);
            start = end;
        }
        let total: f64 = frequencies.iter().sum();
        frequencies.iter_mut().for_each(|f| *f /= total);
        Ok(EmpiricalDistribution { values, frequencies })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `value,frequency` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["value", "frequency"])?;
        for (v, f) in self.values.iter().zip(&self.frequencies) {
            w.write_record([v.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Single-column `value` CSV of raw recordings.
pub fn write_samples_csv<W: std::io::Write>(samples: &[f64], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["value"])?;
    for v in samples {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `⟨A⟩ = Σ ν_j α_j`, `σ(A) = sqrt(Σ ν_j (α_j - ⟨A⟩)²)`.
pub fn exp_quantifiers(dist: &EmpiricalDistribution) -> DescriptorSet {
    let mean: f64 = dist.values.iter().zip(&dist.frequencies).map(|(a, f)| a * f).sum();
    let var: f64 = dist.values.iter().zip(&dist.frequencies).map(|(a, f)| f * (a - mean).powi(2)).sum();
    DescriptorSet::new(mean, var.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative bound on means.
    pub mean_rel: f64,
    /// Relative bound on deviations.
    pub dev_rel: f64,
    /// Theory values below this are compared absolutely, against this bound.
    pub abs_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { mean_rel: 0.05, dev_rel: 0.10, abs_threshold: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Confirmed,
    Refuted,
}

/// Remedies proposed when theory and experiment disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Upgrading {
    /// Improve the intrinsic state (better Hamiltonian or solution).
    U1,
    /// Improve the apparatus.
    U2,
    /// Add an explicit description of the measurement channel.
    U3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    In,
    Pd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub quantity: &'static str,
    pub theory: f64,
    pub experiment: f64,
    pub relative: bool,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfrontationReport {
    pub in_desc: DescriptorSet,
    pub pd_desc: Option<DescriptorSet>,
    pub exp_desc: DescriptorSet,
    pub tolerances: Tolerances,
    pub reference: Reference,
    pub comparisons: Vec<Comparison>,
    pub verdict: Verdict,
    pub suggested_upgradings: Vec<Upgrading>,
}

fn compare(quantity: &'static str, theory: f64, experiment: f64, rel: f64, abs_threshold: f64) -> Comparison {
    let diff = (experiment - theory).abs();
    if theory.abs() < abs_threshold {
        Comparison { quantity, theory, experiment, relative: false, bound: abs_threshold, passed: diff <= abs_threshold }
    } else {
        Comparison { quantity, theory, experiment, relative: true, bound: rel, passed: diff <= rel * theory.abs() }
    }
}

/// Compares experiment against the predicted descriptors when given, else
/// against the intrinsic ones.
pub fn confront(in_desc: DescriptorSet, exp_desc: DescriptorSet, pd_desc: Option<DescriptorSet>, tolerances: Tolerances) -> ConfrontationReport {
    let (reference, theory) = match pd_desc {
        Some(pd) => (Reference::Pd, pd),
        None => (Reference::In, in_desc),
    };
    let comparisons = vec![
        compare("mean", theory.mean, exp_desc.mean, tolerances.mean_rel, tolerances.abs_threshold),
        compare("dev", theory.deviation, exp_desc.deviation, tolerances.dev_rel, tolerances.abs_threshold),
    ];
    let confirmed = comparisons.iter().all(|c| c.passed);
    let suggested_upgradings = match (confirmed, reference) {
        (true, _) => vec![],
        (false, Reference::In) => vec![Upgrading::U1, Upgrading::U2, Upgrading::U3],
        (false, Reference::Pd) => vec![Upgrading::U1, Upgrading::U2],
    };
    ConfrontationReport {
        in_desc,
        pd_desc,
        exp_desc,
        tolerances,
        reference,
        comparisons,
        verdict: if confirmed { Verdict::Confirmed } else { Verdict::Refuted },
        suggested_upgradings,
    }
}

#[derive(Debug, Clone)]
pub enum Population {
    Distribution(EmpiricalDistribution),
    Density(GridFunction),
}

impl Population {
    fn variance(&self) -> Result<f64> {
        match self {
            Population::Distribution(d) => Ok(exp_quantifiers(d).deviation.powi(2)),
            Population::Density(rho) => {
                let grid = rho.grid();
                let w = grid.trapezoid_weights();
                let r = rho.real_parts();
                let mass: f64 = w.iter().zip(&r).map(|(w, r)| w * r).sum();
                if !(mass > 0.0) {
                    return Err(Error::ZeroNorm);
                }
                let moment = |p: i32, c: f64| -> f64 {
                    (0..grid.len()).map(|i| w[i] * r[i] * (grid.x(i) - c).powi(p)).sum::<f64>() / mass
                };
                let mean = moment(1, 0.0);
                Ok(moment(2, mean))
            }
        }
    }

    fn source(&self) -> SampleSource {
        match self {
            Population::Distribution(d) => SampleSource::Spectral(
                d.values.iter().zip(&d.frequencies).map(|(&value, &probability)| SpectralLine { value, probability }).collect(),
            ),
            Population::Density(rho) => SampleSource::Density(rho.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorVariance {
    pub n: usize,
    pub estimator_variance: f64,
    /// `estimator_variance · n`; flat in `n` when the `1/N` law holds.
    pub scaled_variance: f64,
    pub population_variance: f64,
}

/// Variance of the `N`-sample mean over `trials` repetitions, for each `N`.
///
/// Each ensemble size runs on its own ChaCha stream derived from `seed`, so
/// the table is independent of scheduling.
pub fn single_sampling_fallacy_demo(population: &Population, ensemble_sizes: &[usize], trials: usize, seed: u64) -> Result<Vec<EstimatorVariance>> {
    if ensemble_sizes.is_empty() || ensemble_sizes.contains(&0) {
        return Err(Error::InvalidArgument("ensemble sizes must be non-empty and positive".into()));
    }
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let population_variance = population.variance()?;
    let sampler = Sampler::new(&population.source())?;
    ensemble_sizes
        .par_iter()
        .enumerate()
        .map(|(stream, &n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream as u64);
            // Welford's update: identical means give exactly zero spread
            let (mut m, mut m2) = (0.0, 0.0);
            for t in 0..trials {
                let x = (0..n).map(|_| sampler.sample(&mut rng)).sum::<f64>() / n as f64;
                let delta = x - m;
                m += delta / (t + 1) as f64;
                m2 += delta * (x - m);
            }
            let var = m2 / (trials - 1) as f64;
            Ok(EstimatorVariance { n, estimator_variance: var, scaled_variance: var * n as f64, population_variance })
        })
        .collect()
}
