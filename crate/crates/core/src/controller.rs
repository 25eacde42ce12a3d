//! Per-step gain selection.
//!
//! For each transition the controller picks the feedback gain
//! `c in [0, 1]` minimizing the second moment of the control subject to the
//! moment dynamics and the Hankel positivity constraints. The recovered
//! input moments depend on `c` through the closed-loop gain `a (1 - b c)`,
//! which makes the cost a quadratic in `c`; it is minimized by a grid scan
//! over the feasible subset followed by golden-section refinement inside the
//! best feasible bracket. Ties resolve toward the smaller gain, which makes
//! the solver deterministic.

use serde::{Deserialize, Serialize};

use crate::moments::{deconvolve_moments, MomentSequence};
use crate::planner::{check_step_reachable, probe_gain, recover_input_moments};
use crate::scenario::Scenario;
use crate::{Error, Result};

const INV_GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Which moments enter the quadratic cost: the combined input `b F + w`
/// (the printed objective) or the kernel `F` behind the physical control.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    #[default]
    Paper,
    Physical,
}

/// Solver knobs for the gain search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Number of grid points probed on [0, 1].
    #[serde(default = "default_c_grid")]
    pub c_grid: usize,
    /// Width below which the refinement bracket stops shrinking.
    #[serde(default = "default_c_tolerance")]
    pub c_tolerance: f64,
    /// Relative eigenvalue tolerance for the Hankel tests.
    #[serde(default = "default_psd_tolerance")]
    pub psd_tolerance: f64,
    #[serde(default)]
    pub cost: CostVariant,
}

fn default_c_grid() -> usize {
    201
}
fn default_c_tolerance() -> f64 {
    1e-6
}
fn default_psd_tolerance() -> f64 {
    1e-9
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            c_grid: default_c_grid(),
            c_tolerance: default_c_tolerance(),
            psd_tolerance: default_psd_tolerance(),
            cost: CostVariant::default(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid < 3 {
            return Err(Error::Config(format!(
                "controller.c_grid must be at least 3, got {}",
                self.c_grid
            )));
        }
        if !(self.c_tolerance > 0.0) || !(self.psd_tolerance > 0.0) {
            return Err(Error::Config(
                "controller tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The per-step solution: gain, the moment sequences it induces, and the
/// attained cost.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepControl {
    pub step: usize,
    /// Feedback gain `c(k)` in [0, 1].
    #[serde(rename = "c")]
    pub gain: f64,
    /// `a (1 - b c)`.
    pub closed_loop_gain: f64,
    /// Moments of the combined input `b F + w`.
    pub input_moments: MomentSequence,
    /// Moments of the transition kernel `F`.
    pub kernel_moments: MomentSequence,
    /// Moments of the physical control `u = -c a x + F`.
    pub control_moments: MomentSequence,
    pub objective: f64,
}

/// Quadratic step cost at gain `c`.
///
/// With `U(c)` recovered from the moment dynamics at the closed-loop gain:
/// `J =  c^2 a^2 X_2 - 2 c a X_1 U_1(c) + U_2(c)`; the physical variant
/// replaces `U` by the deconvolved kernel moments.
pub fn control_objective(
    c: f64,
    xk: &MomentSequence,
    xk1: &MomentSequence,
    a: f64,
    b: f64,
    noise: &MomentSequence,
    variant: CostVariant,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Domain(format!("gain must lie in [0, 1], got {c}")));
    }
    let a_tilde = a * (1.0 - b * c);
    let input = recover_input_moments(xk, xk1, a_tilde)?;
    let (m1, m2) = match variant {
        CostVariant::Paper => (input.moment(1), input.moment(2)),
        CostVariant::Physical => {
            let kernel = deconvolve_moments(&input, b, noise)?;
            (kernel.moment(1), kernel.moment(2))
        }
    };
    Ok(c * c * a * a * xk.moment(2) - 2.0 * c * a * xk.moment(1) * m1 + m2)
}

/// Minimizes [`control_objective`] over the feasible gains of one step.
///
/// Errors with the feasibility report attached when no gain is feasible.
pub fn solve_step(
    xk: &MomentSequence,
    xk1: &MomentSequence,
    scenario: &Scenario,
    step: usize,
    config: &ControllerConfig,
) -> Result<StepControl> {
    config.validate()?;
    let report = check_step_reachable(xk, xk1, scenario, step, config.c_grid)?;
    if !report.feasible {
        return Err(Error::Infeasible {
            step,
            reason: "no gain in [0, 1] yields realizable kernel and control moments".into(),
            report: Some(Box::new(report)),
        });
    }

    let a = scenario.a(step);
    let b = scenario.b(step);
    let noise = scenario.noise_moments_for(xk.order())?;
    let feasible_at = |c: f64| -> Result<bool> {
        Ok(probe_gain(xk, xk1, a, b, &noise, c, config.psd_tolerance)?.margin >= 0.0)
    };
    let objective_at = |c: f64| -> Result<f64> {
        control_objective(c, xk, xk1, a, b, &noise, config.cost)
    };

    // Scan the feasible grid points; keep the evaluation order fixed so the
    // smaller-gain tie break is reproducible.
    let mut best: Option<(f64, f64)> = None; // (objective, gain)
    let consider = |j: f64, c: f64, best: &mut Option<(f64, f64)>| {
        let better = match best {
            None => true,
            Some((bj, bc)) => j < *bj || (j == *bj && c < *bc),
        };
        if better {
            *best = Some((j, c));
        }
    };

    let grid: Vec<f64> = (0..config.c_grid)
        .map(|i| i as f64 / (config.c_grid - 1) as f64)
        .collect();
    for &c in &grid {
        if feasible_at(c)? {
            consider(objective_at(c)?, c, &mut best);
        }
    }
    let (_, c_star) = best.expect("feasible step must expose a feasible grid point");

    // Golden-section refinement inside the feasible interval around the best
    // grid point, clipped to one grid spacing on each side.
    let spacing = 1.0 / (config.c_grid - 1) as f64;
    let interval = report
        .feasible_intervals
        .iter()
        .find(|[lo, hi]| *lo - 1e-12 <= c_star && c_star <= *hi + 1e-12)
        .copied()
        .unwrap_or([c_star, c_star]);
    let mut lo = interval[0].max(c_star - spacing);
    let mut hi = interval[1].min(c_star + spacing);
    while hi - lo > config.c_tolerance {
        let x1 = hi - INV_GOLDEN * (hi - lo);
        let x2 = lo + INV_GOLDEN * (hi - lo);
        let j1 = if feasible_at(x1)? {
            let j = objective_at(x1)?;
            consider(j, x1, &mut best);
            j
        } else {
            f64::INFINITY
        };
        let j2 = if feasible_at(x2)? {
            let j = objective_at(x2)?;
            consider(j, x2, &mut best);
            j
        } else {
            f64::INFINITY
        };
        if j1 <= j2 {
            hi = x2;
        } else {
            lo = x1;
        }
    }

    let (objective, gain) = best.expect("a feasible candidate was recorded");
    let probe = probe_gain(xk, xk1, a, b, &noise, gain, config.psd_tolerance)?;
    Ok(StepControl {
        step,
        gain,
        closed_loop_gain: probe.closed_loop_gain,
        input_moments: probe.input_moments,
        kernel_moments: probe.kernel_moments,
        control_moments: probe.control_moments,
        objective,
    })
}
