//! Closed-loop Monte Carlo execution.
//!
//! Runs `x(k+1) = a(k) x(k) + b(k) u(k) + w(k)` with
//! `u(k) = -c(k) a(k) x(k) + F(k)`, drawing `F(k)` from the realized step
//! kernels and `w(k)` from the Gaussian noise. Randomness is organized as
//! counter-based substreams keyed by `(seed, run, step, role)`, so results
//! do not depend on execution order or on how runs are distributed across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::StepControl;
use crate::moments::MomentSequence;
use crate::realizer::RealizedDensity;
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Which consumer a substream feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamRole {
    /// The initial state draw (step index 0).
    Initial,
    /// The kernel draw of a step.
    Kernel,
    /// The additive noise draw of a step.
    Noise,
}

impl StreamRole {
    fn tag(self) -> u64 {
        match self {
            StreamRole::Initial => 0,
            StreamRole::Kernel => 1,
            StreamRole::Noise => 2,
        }
    }
}

/// Independent generator for `(seed, run, step, role)`; the tuple is the
/// ChaCha key, so distinct tuples give unrelated streams.
pub fn substream(seed: u64, run: u64, step: u64, role: StreamRole) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&run.to_le_bytes());
    key[16..24].copy_from_slice(&step.to_le_bytes());
    key[24..32].copy_from_slice(&role.tag().to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

/// Monte Carlo controls.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record")]
    pub record_full_trajectories: bool,
}

fn default_runs() -> usize {
    2000
}
fn default_record() -> bool {
    true
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            runs: default_runs(),
            seed: 0,
            record_full_trajectories: default_record(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("simulation.runs must be at least 1".into()));
        }
        Ok(())
    }
}

/// All recorded samples of a closed-loop experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopResult {
    pub horizon: usize,
    /// Terminal states, one per run.
    pub terminal: Vec<f64>,
    /// Full state paths (run-major, length horizon + 1) when recorded.
    pub states: Option<Vec<Vec<f64>>>,
    /// Control samples, run-major, length horizon.
    pub controls: Vec<Vec<f64>>,
    /// Kernel draws, run-major, length horizon.
    pub kernel_draws: Vec<Vec<f64>>,
}

impl ClosedLoopResult {
    /// The recorded states at step `k` across runs; terminal states work
    /// without full recording.
    pub fn states_at(&self, k: usize) -> Option<Vec<f64>> {
        if k == self.horizon {
            return Some(self.terminal.clone());
        }
        self.states
            .as_ref()
            .map(|rows| rows.iter().map(|row| row[k]).collect())
    }
}

struct RunRecord {
    states: Vec<f64>,
    controls: Vec<f64>,
    kernels: Vec<f64>,
}

/// Executes `config.runs` independent closed-loop trajectories.
pub fn run_closed_loop(
    scenario: &Scenario,
    controls: &[StepControl],
    kernels: &[RealizedDensity],
    config: &SimulationConfig,
) -> Result<ClosedLoopResult> {
    config.validate()?;
    let horizon = scenario.horizon;
    if controls.len() != horizon || kernels.len() != horizon {
        return Err(Error::Domain(format!(
            "expected {horizon} controls and kernels, got {} and {}",
            controls.len(),
            kernels.len()
        )));
    }
    let sigma = scenario.noise_variance.sqrt();

    let rows: Vec<RunRecord> = (0..config.runs)
        .into_par_iter()
        .map(|run| -> Result<RunRecord> {
            let run_id = run as u64;
            let mut states = Vec::with_capacity(horizon + 1);
            let mut ctrl = Vec::with_capacity(horizon);
            let mut kern = Vec::with_capacity(horizon);
            let mut x = scenario
                .initial
                .sample(&mut substream(config.seed, run_id, 0, StreamRole::Initial));
            states.push(x);
            for k in 0..horizon {
                let f = kernels[k]
                    .sample(&mut substream(config.seed, run_id, k as u64, StreamRole::Kernel))?;
                let w: f64 = sigma
                    * <StandardNormal as Distribution<f64>>::sample(
                        &StandardNormal,
                        &mut substream(config.seed, run_id, k as u64, StreamRole::Noise),
                    );
                let u = -controls[k].gain * scenario.a(k) * x + f;
                x = scenario.a(k) * x + scenario.b(k) * u + w;
                if !x.is_finite() {
                    return Err(Error::Numerical(format!(
                        "state diverged at run {run}, step {k}"
                    )));
                }
                states.push(x);
                ctrl.push(u);
                kern.push(f);
            }
            Ok(RunRecord { states, controls: ctrl, kernels: kern })
        })
        .collect::<Result<_>>()?;

    let terminal = rows.iter().map(|r| r.states[horizon]).collect();
    let states = if config.record_full_trajectories {
        Some(rows.iter().map(|r| r.states.clone()).collect())
    } else {
        None
    };
    Ok(ClosedLoopResult {
        horizon,
        terminal,
        states,
        controls: rows.iter().map(|r| r.controls.clone()).collect(),
        kernel_draws: rows.into_iter().map(|r| r.kernels).collect(),
    })
}

/// Sample raw moments `m_l = (1/M) sum x_i^l`.
pub fn empirical_moments(samples: &[f64], order: usize) -> Result<MomentSequence> {
    if samples.is_empty() {
        return Err(Error::Domain("empirical moments need at least one sample".into()));
    }
    let n = samples.len() as f64;
    let values = (1..=order)
        .map(|l| samples.iter().map(|x| x.powi(l as i32)).sum::<f64>() / n)
        .collect();
    MomentSequence::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::gaussian_noise_moments;
    use crate::realizer::{default_reference, realize, RealizerConfig};
    use crate::scenario::test_support::example1_scenario;
    use crate::scenario::{GainSequence, GainSpec};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn trivial_kernel() -> RealizedDensity {
        let m = gaussian_noise_moments(1.0, 4).unwrap();
        let reference = default_reference(&m).unwrap();
        realize(&m, &reference, &RealizerConfig::default()).unwrap()
    }

    fn zero_gain_control(step: usize, kernel: &RealizedDensity) -> StepControl {
        StepControl {
            step,
            gain: 0.0,
            closed_loop_gain: 0.0,
            input_moments: kernel.target_moments.clone(),
            kernel_moments: kernel.target_moments.clone(),
            control_moments: kernel.target_moments.clone(),
            objective: 0.0,
        }
    }

    #[test]
    fn substreams_differ_by_any_key_component() {
        let mut a = substream(1, 2, 3, StreamRole::Kernel);
        let mut b = substream(1, 2, 3, StreamRole::Noise);
        let mut c = substream(1, 2, 4, StreamRole::Kernel);
        let mut d = substream(1, 3, 3, StreamRole::Kernel);
        let va: f64 = a.random();
        assert_ne!(va, b.random::<f64>());
        assert_ne!(va, c.random::<f64>());
        assert_ne!(va, d.random::<f64>());
        // Same key reproduces.
        let mut a2 = substream(1, 2, 3, StreamRole::Kernel);
        assert_eq!(va, a2.random::<f64>());
    }

    #[test]
    fn degenerate_loop_sums_kernel_and_noise() {
        // a = 0, b = 1, c = 0: x(1) = F(0) + w(0) with both standard normal.
        let mut scenario = example1_scenario();
        scenario.horizon = 1;
        scenario.gains = GainSpec {
            a: GainSequence::Constant(0.0),
            b: GainSequence::Constant(1.0),
        };
        let kernel = trivial_kernel();
        let control = zero_gain_control(0, &kernel);
        let config = SimulationConfig { runs: 20_000, seed: 9, record_full_trajectories: false };
        let result = run_closed_loop(&scenario, &[control], &[kernel], &config).unwrap();
        let m = empirical_moments(&result.terminal, 2).unwrap();
        let n = config.runs as f64;
        // Var of the second sample moment of N(0,2): (E x^4 - (E x^2)^2)/n = 8/n.
        let se = (8.0f64 / n).sqrt();
        assert!((m.moment(2) - 2.0).abs() <= 5.0 * se, "m2 {}", m.moment(2));
        assert!(m.moment(1).abs() <= 5.0 * (2.0f64 / n).sqrt());
    }

    #[test]
    fn zero_gain_records_kernel_draws_as_controls() {
        let mut scenario = example1_scenario();
        scenario.horizon = 2;
        let kernel = trivial_kernel();
        let controls = vec![zero_gain_control(0, &kernel), zero_gain_control(1, &kernel)];
        let kernels = vec![kernel.clone(), kernel];
        let config = SimulationConfig { runs: 50, seed: 4, record_full_trajectories: true };
        let result = run_closed_loop(&scenario, &controls, &kernels, &config).unwrap();
        assert_eq!(result.controls, result.kernel_draws);
    }

    #[test]
    fn identical_configs_reproduce_bitwise() {
        let mut scenario = example1_scenario();
        scenario.horizon = 2;
        let kernel = trivial_kernel();
        let controls = vec![zero_gain_control(0, &kernel), zero_gain_control(1, &kernel)];
        let kernels = vec![kernel.clone(), kernel];
        let config = SimulationConfig { runs: 500, seed: 77, record_full_trajectories: true };
        let r1 = run_closed_loop(&scenario, &controls, &kernels, &config).unwrap();
        let r2 = run_closed_loop(&scenario, &controls, &kernels, &config).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn serial_and_parallel_agree() {
        // Forcing a single rayon thread must not change any drawn value.
        let mut scenario = example1_scenario();
        scenario.horizon = 1;
        let kernel = trivial_kernel();
        let controls = vec![zero_gain_control(0, &kernel)];
        let kernels = vec![kernel];
        let config = SimulationConfig { runs: 256, seed: 5, record_full_trajectories: true };
        let parallel = run_closed_loop(&scenario, &controls, &kernels, &config).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool
            .install(|| run_closed_loop(&scenario, &controls, &kernels, &config))
            .unwrap();
        assert_eq!(parallel, serial);
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let scenario = example1_scenario();
        let kernel = trivial_kernel();
        let controls = vec![zero_gain_control(0, &kernel)];
        let err = run_closed_loop(
            &scenario,
            &controls,
            &[kernel],
            &SimulationConfig::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn empirical_moment_values() {
        let m = empirical_moments(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_abs_diff_eq!(m.moment(1), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.moment(2), 14.0 / 3.0, epsilon = 1e-15);

        let c = empirical_moments(&[2.0; 10], 4).unwrap();
        assert_eq!(c.values(), &[2.0, 4.0, 8.0, 16.0]);

        assert!(empirical_moments(&[], 2).is_err());
    }

    #[test]
    fn states_at_exposes_columns() {
        let result = ClosedLoopResult {
            horizon: 2,
            terminal: vec![5.0, 6.0],
            states: Some(vec![vec![1.0, 3.0, 5.0], vec![2.0, 4.0, 6.0]]),
            controls: vec![vec![0.0; 2]; 2],
            kernel_draws: vec![vec![0.0; 2]; 2],
        };
        assert_eq!(result.states_at(0).unwrap(), vec![1.0, 2.0]);
        assert_eq!(result.states_at(1).unwrap(), vec![3.0, 4.0]);
        assert_eq!(result.states_at(2).unwrap(), vec![5.0, 6.0]);
    }
}
