//! End-to-end orchestration: plan, check (with repair), solve, realize,
//! simulate, report. Each stage writes its artifacts before the next stage
//! begins, and the simulation stage consumes only the serialized controls
//! and kernels, never in-memory copies.
//!
//! Output directory layout:
//!
//! ```text
//! plan.json                  moment states, one entry per step index
//! controls.json              per-step gain and moment arrays
//! kernels/<k>.json           realized kernel for step k
//! kernels/<k>.density.csv    kernel density grid (x, pdf)
//! samples.csv                one row per run
//! report.json                the steering report
//! hist_x<k>.csv              histogram of x(k) across runs
//! target_density.csv         target density grid for overlays
//! manifest.json              seed, hashes, timings (written last)
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{solve_step, StepControl};
use crate::planner::{
    check_plan, interpolate_states, repair_plan, MomentStateTrajectory, StepFeasibilityReport,
};
use crate::realizer::{realize, reference_from_moments, RealizedDensity};
use crate::report::{
    build_report, default_histogram_range, export_density_grid, export_histogram, SteeringReport,
};
use crate::scenario::Scenario;
use crate::simulate::{run_closed_loop, ClosedLoopResult};
use crate::{Error, Result};

/// Total feasibility probes the repair pass may spend.
const REPAIR_BUDGET: usize = 400;

/// Points in an exported density grid.
const DENSITY_GRID_POINTS: usize = 481;

/// How far the pipeline should run. Stages execute in the declaration
/// order; requesting a stage runs everything up to and including it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Plan,
    Check,
    Solve,
    Simulate,
    Report,
}

impl Stage {
    pub fn includes(self, other: Stage) -> bool {
        self >= other
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

/// Run metadata: identifies the inputs and certifies which bytes each stage
/// produced and consumed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_name: String,
    pub scenario_sha256: String,
    pub stage: Stage,
    pub seed: u64,
    pub runs: usize,
    pub artifacts: Vec<ArtifactRecord>,
    /// Artifacts re-read by the simulation stage.
    pub consumed: Vec<ArtifactRecord>,
    pub timings_ms: Vec<(String, u128)>,
}

/// Everything a pipeline invocation produced, up to the requested stage.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub scenario: Scenario,
    pub plan: MomentStateTrajectory,
    pub feasibility: Option<Vec<StepFeasibilityReport>>,
    pub controls: Option<Vec<StepControl>>,
    pub kernels: Option<Vec<RealizedDensity>>,
    pub result: Option<ClosedLoopResult>,
    pub report: Option<SteeringReport>,
    pub manifest: RunManifest,
}

#[derive(Serialize, Deserialize)]
struct PlanEntry {
    step: usize,
    moments: Vec<f64>,
}

struct ArtifactStore {
    root: PathBuf,
    records: Vec<ArtifactRecord>,
}

impl ArtifactStore {
    fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), records: Vec::new() })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        let digest = Sha256::digest(bytes);
        self.records.retain(|r| r.path != rel);
        self.records.push(ArtifactRecord {
            path: rel.to_string(),
            sha256: hex_string(&digest),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn read(&self, rel: &str) -> Result<(Vec<u8>, ArtifactRecord)> {
        let bytes = std::fs::read(self.root.join(rel))?;
        let digest = Sha256::digest(&bytes);
        let record = ArtifactRecord { path: rel.to_string(), sha256: hex_string(&digest) };
        Ok((bytes, record))
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn stage_err<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        other => Error::Stage { stage, source: Box::new(other) },
    })
}

fn plan_entries(traj: &MomentStateTrajectory) -> Vec<PlanEntry> {
    traj.states()
        .iter()
        .enumerate()
        .map(|(step, m)| PlanEntry { step, moments: m.values().to_vec() })
        .collect()
}

fn csv_from_result(result: &ClosedLoopResult) -> String {
    let horizon = result.horizon;
    let mut out = String::new();
    out.push_str("run");
    if result.states.is_some() {
        for k in 0..=horizon {
            let _ = write!(out, ",x{k}");
        }
    } else {
        let _ = write!(out, ",x{horizon}");
    }
    for k in 0..horizon {
        let _ = write!(out, ",u{k}");
    }
    for k in 0..horizon {
        let _ = write!(out, ",f{k}");
    }
    out.push('\n');
    let runs = result.terminal.len();
    for run in 0..runs {
        let _ = write!(out, "{run}");
        match &result.states {
            Some(rows) => {
                for v in &rows[run] {
                    let _ = write!(out, ",{v}");
                }
            }
            None => {
                let _ = write!(out, ",{}", result.terminal[run]);
            }
        }
        for v in &result.controls[run] {
            let _ = write!(out, ",{v}");
        }
        for v in &result.kernel_draws[run] {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn csv_from_histogram(h: &crate::report::HistogramData) -> String {
    let mut out = String::from("bin_left,bin_right,count,height\n");
    for i in 0..h.counts.len() {
        let _ = writeln!(out, "{},{},{},{}", h.edges[i], h.edges[i + 1], h.counts[i], h.heights[i]);
    }
    out
}

fn csv_from_grid(grid: &[(f64, f64)]) -> String {
    let mut out = String::from("x,pdf\n");
    for (x, p) in grid {
        let _ = writeln!(out, "{x},{p}");
    }
    out
}

/// Runs the pipeline on a validated scenario, writing artifacts into
/// `out_dir`, stopping after `stage`.
pub fn run_pipeline(scenario: &Scenario, stage: Stage, out_dir: &Path) -> Result<PipelineRun> {
    scenario.validate()?;
    let mut store = ArtifactStore::new(out_dir)?;
    let mut timings: Vec<(String, u128)> = Vec::new();
    let scenario_hash = hex_string(&Sha256::digest(serde_json::to_string(scenario)?.as_bytes()));
    let order = scenario.order();

    // Plan: endpoint moments and the smoothest interpolation between them.
    let t0 = Instant::now();
    let x0 = stage_err("plan", scenario.initial.moments_auto(order))?;
    let xk = stage_err("plan", scenario.target.moments_auto(order))?;
    let mut plan = stage_err("plan", interpolate_states(&x0, &xk, scenario.horizon))?;
    store.write_json("plan.json", &plan_entries(&plan))?;
    timings.push(("plan".into(), t0.elapsed().as_millis()));

    let mut feasibility = None;
    let mut controls: Option<Vec<StepControl>> = None;
    let mut kernels: Option<Vec<RealizedDensity>> = None;
    let mut result = None;
    let mut report = None;
    let mut consumed = Vec::new();

    if stage.includes(Stage::Check) {
        let t = Instant::now();
        let mut reports = stage_err("check", check_plan(&plan, scenario))?;
        if reports.iter().any(|r| !r.feasible) {
            plan = stage_err("check", repair_plan(&plan, scenario, REPAIR_BUDGET))?;
            reports = stage_err("check", check_plan(&plan, scenario))?;
            if let Some(bad) = reports.iter().find(|r| !r.feasible) {
                return Err(Error::Stage {
                    stage: "check",
                    source: Box::new(Error::Infeasible {
                        step: bad.step,
                        reason: "plan remained infeasible after repair".into(),
                        report: Some(Box::new(bad.clone())),
                    }),
                });
            }
            store.write_json("plan.json", &plan_entries(&plan))?;
        }
        feasibility = Some(reports);
        timings.push(("check".into(), t.elapsed().as_millis()));
    }

    if stage.includes(Stage::Solve) {
        let t = Instant::now();
        let mut solved = Vec::with_capacity(scenario.horizon);
        for k in 0..scenario.horizon {
            solved.push(stage_err(
                "solve",
                solve_step(plan.state(k), plan.state(k + 1), scenario, k, &scenario.controller),
            )?);
        }
        store.write_json("controls.json", &solved)?;

        let mut realized = Vec::with_capacity(scenario.horizon);
        for control in &solved {
            let reference = stage_err(
                "solve",
                reference_from_moments(
                    &control.kernel_moments,
                    scenario.realizer.reference_second_moment,
                ),
            )?;
            let rd = stage_err(
                "solve",
                realize(&control.kernel_moments, &reference, &scenario.realizer),
            )?;
            store.write_json(&format!("kernels/{}.json", control.step), &rd)?;
            let (mean, sd) = stage_err("solve", rd.reference.mean_and_sd())?;
            let grid = stage_err(
                "solve",
                export_density_grid(&rd, (mean - 8.0 * sd, mean + 8.0 * sd), DENSITY_GRID_POINTS),
            )?;
            store.write(
                &format!("kernels/{}.density.csv", control.step),
                csv_from_grid(&grid).as_bytes(),
            )?;
            realized.push(rd);
        }
        controls = Some(solved);
        kernels = Some(realized);
        timings.push(("solve".into(), t.elapsed().as_millis()));
    }

    if stage.includes(Stage::Simulate) {
        let t = Instant::now();
        // Stage isolation: simulation sees only the serialized artifacts.
        let (control_bytes, control_rec) = stage_err("simulate", store.read("controls.json"))?;
        let loaded_controls: Vec<StepControl> =
            stage_err("simulate", serde_json::from_slice(&control_bytes).map_err(Error::from))?;
        consumed.push(control_rec);
        let mut loaded_kernels = Vec::with_capacity(scenario.horizon);
        for k in 0..scenario.horizon {
            let (bytes, rec) = stage_err("simulate", store.read(&format!("kernels/{k}.json")))?;
            let rd: RealizedDensity =
                stage_err("simulate", serde_json::from_slice(&bytes).map_err(Error::from))?;
            consumed.push(rec);
            loaded_kernels.push(rd);
        }
        let sim = stage_err(
            "simulate",
            run_closed_loop(scenario, &loaded_controls, &loaded_kernels, &scenario.simulation),
        )?;
        store.write("samples.csv", csv_from_result(&sim).as_bytes())?;
        controls = Some(loaded_controls);
        kernels = Some(loaded_kernels);
        result = Some(sim);
        timings.push(("simulate".into(), t.elapsed().as_millis()));
    }

    if stage.includes(Stage::Report) {
        let t = Instant::now();
        let sim = result.as_ref().expect("simulate ran");
        let ctl = controls.as_ref().expect("solve ran");
        let built = stage_err(
            "report",
            build_report(sim, &plan, ctl, &scenario.target, scenario.report.z),
        )?;
        store.write_json("report.json", &built)?;

        for k in 0..=scenario.horizon {
            if let Some(samples) = sim.states_at(k) {
                let range = default_histogram_range(&samples);
                let hist = stage_err(
                    "report",
                    export_histogram(&samples, scenario.report.bins, range, Some(&scenario.target)),
                )?;
                store.write(&format!("hist_x{k}.csv"), csv_from_histogram(&hist).as_bytes())?;
            }
        }

        let (mean, sd) = stage_err("report", scenario.target.mean_and_sd())?;
        let grid = stage_err(
            "report",
            export_density_grid(
                &scenario.target,
                (mean - 6.0 * sd, mean + 6.0 * sd),
                DENSITY_GRID_POINTS,
            ),
        )?;
        store.write("target_density.csv", csv_from_grid(&grid).as_bytes())?;
        report = Some(built);
        timings.push(("report".into(), t.elapsed().as_millis()));
    }

    let manifest = RunManifest {
        scenario_name: scenario.name.clone(),
        scenario_sha256: scenario_hash,
        stage,
        seed: scenario.simulation.seed,
        runs: scenario.simulation.runs,
        artifacts: store.records.clone(),
        consumed,
        timings_ms: timings,
    };
    store.write_json("manifest.json", &manifest)?;

    Ok(PipelineRun {
        scenario: scenario.clone(),
        plan,
        feasibility,
        controls,
        kernels,
        result,
        report,
        manifest,
    })
}
