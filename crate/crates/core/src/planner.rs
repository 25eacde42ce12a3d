//! Moment-space trajectory planning and reachability.
//!
//! The state of the reduced system at step `k` is the vector of raw moments
//! `m_1 .. m_2n` of `x(k)`. A plan is a trajectory of such states; the
//! planner builds it by linear interpolation between the endpoint moment
//! vectors (the maximal-smoothness choice), checks every transition for
//! reachability under the additive noise, and can repair infeasible interior
//! states by inflating their even moments.
//!
//! Reachability of a transition `X(k) -> X(k+1)` under gain `c` means: with
//! the closed-loop gain `a(1 - b c)`, the recovered input moments deconvolve
//! (against the noise moments) into kernel moments whose Hankel matrix is
//! positive semidefinite, and the physical control moments pass the same
//! test. The test scans `c` over a grid of `[0, 1]` and refines interval
//! boundaries by bisection on the eigenvalue margin.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::moments::{
    binomial, deconvolve_moments, hankel_from_moments, moments_of_independent_sum,
    moments_of_scaled, MomentSequence,
};
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Bisection iterations used to sharpen feasibility interval boundaries.
const BOUNDARY_BISECTIONS: usize = 60;

/// Inflation factors beyond this are hopeless; the step is declared
/// irreparable.
const MAX_INFLATION: f64 = 1e12;

/// A sequence of `K + 1` moment states `X(0) .. X(K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentStateTrajectory {
    states: Vec<MomentSequence>,
}

impl MomentStateTrajectory {
    pub fn new(states: Vec<MomentSequence>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Domain(
                "a trajectory needs at least the two endpoint states".into(),
            ));
        }
        let order = states[0].order();
        if states.iter().any(|s| s.order() != order) {
            return Err(Error::Domain("trajectory states must share one order".into()));
        }
        Ok(Self { states })
    }

    /// Number of transitions `K`.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn order(&self) -> usize {
        self.states[0].order()
    }

    pub fn states(&self) -> &[MomentSequence] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &MomentSequence {
        &self.states[k]
    }
}

/// Linear interpolation `X(k) = ((K-k) X0 + k XK) / K`, the minimizer of the
/// summed squared state increments.
pub fn interpolate_states(
    x0: &MomentSequence,
    xk: &MomentSequence,
    horizon: usize,
) -> Result<MomentStateTrajectory> {
    if horizon < 1 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    if x0.order() != xk.order() {
        return Err(Error::Domain(format!(
            "endpoint order mismatch: {} vs {}",
            x0.order(),
            xk.order()
        )));
    }
    let kf = horizon as f64;
    let mut states = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        if k == 0 {
            states.push(x0.clone());
        } else if k == horizon {
            states.push(xk.clone());
        } else {
            let w = k as f64 / kf;
            let values: Vec<f64> = x0
                .values()
                .iter()
                .zip(xk.values())
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect();
            states.push(MomentSequence::new(values)?);
        }
    }
    MomentStateTrajectory::new(states)
}

/// Forward moment map for `x(k+1) = a_tilde x(k) + u` with `u` independent of
/// `x(k)`: the independent-sum expansion of the scaled state.
pub fn propagate_moments(
    xk: &MomentSequence,
    a_tilde: f64,
    input: &MomentSequence,
) -> Result<MomentSequence> {
    moments_of_independent_sum(&moments_of_scaled(xk, a_tilde), input)
}

/// Triangular inverse of [`propagate_moments`]: the unique input moment
/// sequence carrying `X(k)` onto `X(k+1)`. Always solvable; the result need
/// not be realizable by any distribution (check its Hankel matrix).
pub fn recover_input_moments(
    xk: &MomentSequence,
    xk1: &MomentSequence,
    a_tilde: f64,
) -> Result<MomentSequence> {
    if xk.order() != xk1.order() {
        return Err(Error::Domain(format!(
            "state order mismatch: {} vs {}",
            xk.order(),
            xk1.order()
        )));
    }
    let order = xk.order();
    let mut u = vec![0.0; order];
    let moment_u = |u: &[f64], i: usize| if i == 0 { 1.0 } else { u[i - 1] };
    for l in 1..=order {
        let mut partial = 0.0;
        for i in 1..=l {
            partial += binomial(l, i) * a_tilde.powi(i as i32) * xk.moment(i) * moment_u(&u, l - i);
        }
        u[l - 1] = xk1.moment(l) - partial;
    }
    MomentSequence::new(u)
}

/// The lower-triangular propagation matrix whose entry `(l, i)` (1-based) is
/// `C(l, i) a_tilde^i E[u^(l-i)]`; the moment dynamics read
/// `X(k+1) = A(U) X(k) + U`.
pub fn propagation_matrix(input: &MomentSequence, a_tilde: f64) -> DMatrix<f64> {
    let order = input.order();
    DMatrix::from_fn(order, order, |row, col| {
        let (l, i) = (row + 1, col + 1);
        if i > l {
            0.0
        } else {
            binomial(l, i) * a_tilde.powi(i as i32) * input.moment(l - i)
        }
    })
}

/// Feasibility evidence for one transition: which gains in `[0, 1]` admit a
/// realizable kernel, plus eigenvalue diagnostics at the best probed gain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepFeasibilityReport {
    pub step: usize,
    pub feasible: bool,
    /// Closed subintervals of [0, 1] where both Hankel tests pass.
    pub feasible_intervals: Vec<[f64; 2]>,
    /// Gain with the largest eigenvalue margin among all probes.
    pub best_gain: f64,
    /// `min_eig + tol (1 + max |eig|)` at the best gain, minimized over the
    /// kernel and control Hankel matrices; nonnegative iff feasible there.
    pub best_margin: f64,
    pub kernel_min_eigenvalue: f64,
    pub control_min_eigenvalue: f64,
    pub witness: Option<StepWitness>,
}

/// Input and kernel moments at a feasible gain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepWitness {
    pub gain: f64,
    pub input_moments: MomentSequence,
    pub kernel_moments: MomentSequence,
}

/// Everything derived from probing one gain value.
#[derive(Clone, Debug)]
pub(crate) struct GainProbe {
    pub gain: f64,
    pub closed_loop_gain: f64,
    pub margin: f64,
    pub kernel_min_eigenvalue: f64,
    pub control_min_eigenvalue: f64,
    pub input_moments: MomentSequence,
    pub kernel_moments: MomentSequence,
    pub control_moments: MomentSequence,
}

/// Derives input, kernel and control moments at gain `c` and evaluates both
/// Hankel margins. `margin >= 0` means the transition is realizable at `c`.
pub(crate) fn probe_gain(
    xk: &MomentSequence,
    xk1: &MomentSequence,
    a: f64,
    b: f64,
    noise: &MomentSequence,
    c: f64,
    tol: f64,
) -> Result<GainProbe> {
    let closed_loop_gain = a * (1.0 - b * c);
    let input_moments = recover_input_moments(xk, xk1, closed_loop_gain)?;
    let kernel_moments = deconvolve_moments(&input_moments, b, noise)?;
    // u = -c a x + F with F independent of x.
    let control_moments =
        moments_of_independent_sum(&moments_of_scaled(xk, -c * a), &kernel_moments)?;
    let kernel_hankel = hankel_from_moments(&kernel_moments);
    let control_hankel = hankel_from_moments(&control_moments);
    let km = kernel_hankel.psd_margin(tol);
    let cm = control_hankel.psd_margin(tol);
    Ok(GainProbe {
        gain: c,
        closed_loop_gain,
        margin: km.min(cm),
        kernel_min_eigenvalue: kernel_hankel.min_eigenvalue(),
        control_min_eigenvalue: control_hankel.min_eigenvalue(),
        input_moments,
        kernel_moments,
        control_moments,
    })
}

/// Scans `c` over a uniform grid of `[0, 1]` (plus bisection refinement of
/// the boundaries) and reports every feasible subinterval found.
pub fn check_step_reachable(
    xk: &MomentSequence,
    xk1: &MomentSequence,
    scenario: &Scenario,
    step: usize,
    c_grid: usize,
) -> Result<StepFeasibilityReport> {
    if step >= scenario.horizon {
        return Err(Error::Domain(format!(
            "step index {step} out of range for horizon {}",
            scenario.horizon
        )));
    }
    if c_grid < 3 {
        return Err(Error::Domain("gain grid needs at least 3 points".into()));
    }
    let a = scenario.a(step);
    let b = scenario.b(step);
    let tol = scenario.controller.psd_tolerance;
    let noise = scenario.noise_moments_for(xk.order())?;

    let grid: Vec<f64> = (0..c_grid)
        .map(|i| i as f64 / (c_grid - 1) as f64)
        .collect();
    let probes: Vec<GainProbe> = grid
        .iter()
        .map(|&c| probe_gain(xk, xk1, a, b, &noise, c, tol))
        .collect::<Result<_>>()?;

    let margin_at = |c: f64| -> Result<f64> {
        Ok(probe_gain(xk, xk1, a, b, &noise, c, tol)?.margin)
    };

    // Maximal feasible runs on the grid, boundaries sharpened by bisection.
    let mut intervals: Vec<[f64; 2]> = Vec::new();
    let mut i = 0;
    while i < probes.len() {
        if probes[i].margin < 0.0 {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < probes.len() && probes[i + 1].margin >= 0.0 {
            i += 1;
        }
        let lo = if start == 0 {
            0.0
        } else {
            bisect_boundary(&margin_at, grid[start - 1], grid[start])?
        };
        let hi = if i == probes.len() - 1 {
            1.0
        } else {
            bisect_boundary(&margin_at, grid[i + 1], grid[i])?
        };
        intervals.push([lo, hi]);
        i += 1;
    }

    // Best-margin probe; ties resolve to the smaller gain by scan order.
    let best = probes
        .iter()
        .max_by(|p, q| p.margin.partial_cmp(&q.margin).unwrap())
        .expect("grid is nonempty");
    let feasible = !intervals.is_empty();
    let witness = if feasible {
        Some(StepWitness {
            gain: best.gain,
            input_moments: best.input_moments.clone(),
            kernel_moments: best.kernel_moments.clone(),
        })
    } else {
        None
    };

    Ok(StepFeasibilityReport {
        step,
        feasible,
        feasible_intervals: intervals,
        best_gain: best.gain,
        best_margin: best.margin,
        kernel_min_eigenvalue: best.kernel_min_eigenvalue,
        control_min_eigenvalue: best.control_min_eigenvalue,
        witness,
    })
}

/// Bisection from an infeasible gain toward a feasible one; returns the
/// feasible-side endpoint of the final bracket.
fn bisect_boundary(
    margin_at: &dyn Fn(f64) -> Result<f64>,
    mut infeasible: f64,
    mut feasible: f64,
) -> Result<f64> {
    for _ in 0..BOUNDARY_BISECTIONS {
        let mid = 0.5 * (infeasible + feasible);
        if margin_at(mid)? >= 0.0 {
            feasible = mid;
        } else {
            infeasible = mid;
        }
        if (feasible - infeasible).abs() <= 1e-12 {
            break;
        }
    }
    Ok(feasible)
}

/// Per-step reachability reports for a whole plan; the plan is feasible iff
/// every step is.
pub fn check_plan(
    traj: &MomentStateTrajectory,
    scenario: &Scenario,
) -> Result<Vec<StepFeasibilityReport>> {
    if traj.horizon() != scenario.horizon {
        return Err(Error::Domain(format!(
            "plan horizon {} does not match scenario horizon {}",
            traj.horizon(),
            scenario.horizon
        )));
    }
    (0..traj.horizon())
        .map(|k| {
            check_step_reachable(
                traj.state(k),
                traj.state(k + 1),
                scenario,
                k,
                scenario.controller.c_grid,
            )
        })
        .collect()
}

/// Even moments of `m` inflated by `(1 + delta)^(l/2)`; odd moments kept.
fn inflate_even_moments(m: &MomentSequence, delta: f64) -> MomentSequence {
    let values: Vec<f64> = m
        .values()
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let l = idx + 1;
            if l % 2 == 0 {
                v * (1.0 + delta).powi((l / 2) as i32)
            } else {
                *v
            }
        })
        .collect();
    MomentSequence::new(values).expect("inflation preserves shape")
}

/// Walks the plan forward; whenever a transition is infeasible, inflates the
/// even moments of its destination state (doubling `delta` from 1e-3) until
/// the transition passes. Endpoints are never modified: a failing final
/// transition is irreparable and reported as such.
pub fn repair_plan(
    traj: &MomentStateTrajectory,
    scenario: &Scenario,
    max_iters: usize,
) -> Result<MomentStateTrajectory> {
    let horizon = traj.horizon();
    let mut states = traj.states().to_vec();
    let mut budget = max_iters;
    for k in 0..horizon {
        let report = check_step_reachable(
            &states[k],
            &states[k + 1],
            scenario,
            k,
            scenario.controller.c_grid,
        )?;
        if report.feasible {
            continue;
        }
        if k + 1 == horizon {
            // Destination is the fixed terminal state.
            return Err(Error::Infeasible {
                step: k,
                reason: "terminal state is not reachable and may not be modified".into(),
                report: Some(Box::new(report)),
            });
        }
        let original = states[k + 1].clone();
        let mut delta = 1e-3;
        loop {
            if budget == 0 {
                return Err(Error::Infeasible {
                    step: k,
                    reason: format!("repair budget exhausted at inflation {delta}"),
                    report: Some(Box::new(report)),
                });
            }
            budget -= 1;
            let trial = inflate_even_moments(&original, delta);
            let trial_report = check_step_reachable(
                &states[k],
                &trial,
                scenario,
                k,
                scenario.controller.c_grid,
            )?;
            if trial_report.feasible {
                states[k + 1] = trial;
                break;
            }
            delta *= 2.0;
            if delta > MAX_INFLATION {
                return Err(Error::Infeasible {
                    step: k,
                    reason: "even-moment inflation diverged without restoring feasibility"
                        .into(),
                    report: Some(Box::new(trial_report)),
                });
            }
        }
    }
    MomentStateTrajectory::new(states)
}
