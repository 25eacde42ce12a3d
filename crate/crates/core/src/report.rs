//! Comparison reports between planned moment trajectories and simulated
//! samples: per-step moment tables with standard-error bands, histograms
//! with a target-density overlay, and density grids for plotting.

use serde::{Deserialize, Serialize};

use crate::catalog::DensitySpec;
use crate::controller::StepControl;
use crate::planner::MomentStateTrajectory;
use crate::realizer::RealizedDensity;
use crate::simulate::{empirical_moments, ClosedLoopResult};
use crate::{Error, Result};

/// Report thresholds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Standard-error multiplier for the pass bands.
    #[serde(default = "default_z")]
    pub z: f64,
    /// Histogram bin count.
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_z() -> f64 {
    4.0
}
fn default_bins() -> usize {
    50
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { z: default_z(), bins: default_bins() }
    }
}

impl ReportConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z > 0.0) || self.bins == 0 {
            return Err(Error::Config(
                "report.z must be positive and report.bins at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Planned vs empirical moments with their standard errors and band flags.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentComparison {
    pub planned: Vec<f64>,
    pub empirical: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// `|planned - empirical| <= z * SE`, per moment order.
    pub within_band: Vec<bool>,
}

impl MomentComparison {
    fn build(planned: &[f64], samples: &[f64], z: f64) -> Result<Self> {
        let order = planned.len();
        let empirical = empirical_moments(samples, order)?;
        let standard_errors = moment_standard_errors(samples, order);
        let within_band = planned
            .iter()
            .zip(empirical.values())
            .zip(&standard_errors)
            .map(|((p, e), se)| (p - e).abs() <= z * se)
            .collect();
        Ok(Self {
            planned: planned.to_vec(),
            empirical: empirical.values().to_vec(),
            standard_errors,
            within_band,
        })
    }

    pub fn all_within(&self) -> bool {
        self.within_band.iter().all(|f| *f)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepComparison {
    pub step: usize,
    pub moments: MomentComparison,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelMomentRow {
    pub step: usize,
    pub gain: f64,
    pub kernel_moments: Vec<f64>,
}

/// The full steering report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SteeringReport {
    pub z: f64,
    /// Planned vs empirical states, one entry per recorded step.
    pub per_step: Vec<StepComparison>,
    /// Terminal target moments vs the simulated terminal sample.
    pub terminal: MomentComparison,
    /// Gains `c(k)` in step order.
    pub gains: Vec<f64>,
    pub kernels: Vec<KernelMomentRow>,
    /// True iff every terminal moment sits inside its band.
    pub pass: bool,
}

/// Standard error of each sample raw moment: `sd(x^l) / sqrt(M)`.
pub fn moment_standard_errors(samples: &[f64], order: usize) -> Vec<f64> {
    let n = samples.len() as f64;
    (1..=order)
        .map(|l| {
            let powered: Vec<f64> = samples.iter().map(|x| x.powi(l as i32)).collect();
            let mean = powered.iter().sum::<f64>() / n;
            let var = powered.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
            (var / n).sqrt()
        })
        .collect()
}

/// Builds the steering report for one experiment.
pub fn build_report(
    result: &ClosedLoopResult,
    plan: &MomentStateTrajectory,
    controls: &[StepControl],
    target: &DensitySpec,
    z: f64,
) -> Result<SteeringReport> {
    if result.horizon != plan.horizon() {
        return Err(Error::Domain(format!(
            "result horizon {} does not match plan horizon {}",
            result.horizon,
            plan.horizon()
        )));
    }
    let order = plan.order();

    let mut per_step = Vec::new();
    for k in 0..=plan.horizon() {
        if let Some(samples) = result.states_at(k) {
            per_step.push(StepComparison {
                step: k,
                moments: MomentComparison::build(plan.state(k).values(), &samples, z)?,
            });
        }
    }

    let target_moments = target.moments_auto(order)?;
    let terminal = MomentComparison::build(target_moments.values(), &result.terminal, z)?;
    let pass = terminal.all_within();

    Ok(SteeringReport {
        z,
        per_step,
        terminal,
        gains: controls.iter().map(|c| c.gain).collect(),
        kernels: controls
            .iter()
            .map(|c| KernelMomentRow {
                step: c.step,
                gain: c.gain,
                kernel_moments: c.kernel_moments.values().to_vec(),
            })
            .collect(),
        pass,
    })
}

/// Uniform-bin histogram on density scale plus an optional overlay grid of a
/// reference density at ten times the bin resolution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistogramData {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `count / (total * width)`; integrates to one over the binned range.
    pub heights: Vec<f64>,
    pub overlay: Vec<(f64, f64)>,
}

/// Bins `samples` over `range`; values outside the range land in the nearest
/// edge bin so the counts always sum to the sample count.
pub fn export_histogram(
    samples: &[f64],
    bins: usize,
    range: (f64, f64),
    overlay: Option<&DensitySpec>,
) -> Result<HistogramData> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(Error::Domain("histogram needs at least one bin".into()));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("degenerate histogram range [{lo}, {hi}]")));
    }
    if samples.is_empty() {
        return Err(Error::Domain("histogram needs at least one sample".into()));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for x in samples {
        let idx = (((x - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    let total = samples.len() as f64;
    let heights = counts.iter().map(|c| *c as f64 / (total * width)).collect();
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let overlay = match overlay {
        Some(spec) => {
            let points = bins * 10 + 1;
            (0..points)
                .map(|i| {
                    let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
                    (x, spec.pdf(x))
                })
                .collect()
        }
        None => Vec::new(),
    };
    Ok(HistogramData { edges, counts, heights, overlay })
}

/// Histogram range default: sample mean plus/minus four sample deviations.
pub fn default_histogram_range(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt().max(f64::MIN_POSITIVE);
    (mean - 4.0 * sd, mean + 4.0 * sd)
}

/// Anything that can be evaluated pointwise as a density.
pub trait Pdf {
    fn density_at(&self, x: f64) -> f64;
}

impl Pdf for DensitySpec {
    fn density_at(&self, x: f64) -> f64 {
        self.pdf(x)
    }
}

impl Pdf for RealizedDensity {
    fn density_at(&self, x: f64) -> f64 {
        self.pdf(x)
    }
}

/// Equally spaced `(x, pdf(x))` pairs over `range`.
pub fn export_density_grid<P: Pdf + ?Sized>(
    density: &P,
    range: (f64, f64),
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = range;
    if points < 2 {
        return Err(Error::Domain("density grid needs at least 2 points".into()));
    }
    if !(hi > lo) {
        return Err(Error::Domain(format!("degenerate grid range [{lo}, {hi}]")));
    }
    Ok((0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            (x, density.density_at(x))
        })
        .collect())
}
