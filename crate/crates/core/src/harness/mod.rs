//! Experiment harness: random engagements, true and approximated cost
//! matrices, assignment comparison metrics and the PN-gain robustness study.

mod plot;
mod report;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{bottleneck_cost, solve_bap, Assignment, CostMatrix, T_INF};
use crate::datagen::{featurize, target_path, EngagementClass, GridAxis, SampleRanges, TargetPath};
use crate::dynamics::{VehicleParams, VehicleState, Vec3, ASSET, NOMINAL_PN_GAIN};
use crate::error::{Error, Result};
use crate::par::parallel_map;
use crate::surrogate::ApproximatorModel;
use crate::trajopt::{solve_min_time, ScpConfig, TrajOptProblem};

pub use plot::{emit_trajectory_plot, engagement_paths, render_svg, EngagementPaths};
pub use report::{emit_report, load_reports, write_report_csv, REPORT_CSV_HEADER};

/// `n` pursuers facing `n` targets defending `asset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    pub n: usize,
    pub pursuers: Vec<VehicleState>,
    pub targets: Vec<VehicleState>,
    pub class: EngagementClass,
    pub asset: Vec3,
}

impl Engagement {
    pub fn new(class: EngagementClass, pursuers: Vec<VehicleState>, targets: Vec<VehicleState>) -> Result<Self> {
        if pursuers.is_empty() || pursuers.len() != targets.len() {
            return Err(Error::invalid(format!(
                "engagement needs equal non-zero pursuer and target counts, got {} and {}",
                pursuers.len(),
                targets.len()
            )));
        }
        Ok(Self {
            n: pursuers.len(),
            pursuers,
            targets,
            class,
            asset: ASSET,
        })
    }
}

fn draw(axis: &GridAxis, rng: &mut ChaCha8Rng) -> f64 {
    if axis.hi > axis.lo {
        rng.gen_range(axis.lo..=axis.hi)
    } else {
        axis.lo
    }
}

/// Seeded uniform draws from the sampling region. Maneuvering targets are
/// re-drawn until nominal PN brings them to the asset.
pub fn generate_engagements(
    n: usize,
    count: usize,
    class: EngagementClass,
    seed: u64,
    ranges: &SampleRanges,
    params: &VehicleParams,
) -> Result<Vec<Engagement>> {
    if n == 0 || count == 0 {
        return Err(Error::invalid(format!("need n >= 1 and count >= 1, got n={n}, count={count}")));
    }
    ranges.validate()?;
    const MAX_REDRAWS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let pursuers = (0..n)
            .map(|_| {
                let r = Vec3::new(draw(&ranges.r_x, &mut rng), 0.0, draw(&ranges.r_z, &mut rng));
                VehicleState::new(r, Vec3::new(draw(&ranges.v_x, &mut rng), 0.0, 0.0))
            })
            .collect();
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let mut redraws = 0;
            let target = loop {
                let r = Vec3::new(draw(&ranges.r_tc_x, &mut rng), 0.0, draw(&ranges.r_tc_z, &mut rng));
                let t = match class {
                    EngagementClass::Stationary => break VehicleState::new(r, Vec3::ZERO),
                    EngagementClass::Maneuvering => {
                        VehicleState::new(r, Vec3::new(draw(&ranges.v_tc_x, &mut rng), 0.0, 0.0))
                    }
                };
                if target_path(class, &t, NOMINAL_PN_GAIN, params)?.is_some() {
                    break t;
                }
                redraws += 1;
                if redraws >= MAX_REDRAWS {
                    return Err(Error::invalid("no maneuvering target in the region reaches the asset"));
                }
            };
            targets.push(target);
        }
        out.push(Engagement::new(class, pursuers, targets)?);
    }
    Ok(out)
}

/// Knobs for truth cost-matrix construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    pub pn_gain: f64,
    /// Concurrent trajectory optimisations.
    pub workers: usize,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            pn_gain: NOMINAL_PN_GAIN,
            workers: 4,
        }
    }
}

fn target_paths(e: &Engagement, params: &VehicleParams, pn_gain: f64) -> Result<Vec<Option<TargetPath>>> {
    e.targets.iter().map(|t| target_path(e.class, t, pn_gain, params)).collect()
}

/// Minimum intercept times from the trajectory optimiser, one solve per
/// pair. Infeasible pairs, solver failures and targets that never reach the
/// asset at this gain get the sentinel.
pub fn build_cost_matrix_true(
    e: &Engagement,
    params: &VehicleParams,
    scp: &ScpConfig,
    truth: &TruthConfig,
) -> Result<CostMatrix> {
    params.validate()?;
    scp.validate()?;
    let paths = target_paths(e, params, truth.pn_gain)?;
    let pairs: Vec<(usize, usize)> = (0..e.n).flat_map(|i| (0..e.n).map(move |j| (i, j))).collect();
    let times = parallel_map(&pairs, truth.workers, |_, &(i, j)| {
        let Some(path) = &paths[j] else { return T_INF };
        let p = &e.pursuers[i];
        let problem = TrajOptProblem {
            pursuer_r0: p.r,
            pursuer_v0: p.v,
            target: path.trajectory.clone(),
            target_t_hit: path.t_hit,
            params: *params,
        };
        match solve_min_time(&problem, scp) {
            Ok(sol) if sol.status.is_feasible() && sol.t_f < T_INF => sol.t_f,
            _ => T_INF,
        }
    });
    CostMatrix::from_fn(e.n, T_INF, |i, j| times[i * e.n + j])
}

/// Surrogate intercept times, evaluated serially.
pub fn build_cost_matrix_approx(e: &Engagement, model: &ApproximatorModel) -> Result<CostMatrix> {
    if model.class != e.class {
        return Err(Error::invalid(format!(
            "{} model cannot price a {} engagement",
            model.class, e.class
        )));
    }
    let features: Vec<f64> = e
        .pursuers
        .iter()
        .flat_map(|p| e.targets.iter().flat_map(move |t| featurize(e.class, p, t)))
        .collect();
    let costs = model.approximate_batch(&features)?;
    CostMatrix::from_fn(e.n, model.sentinel, |i, j| costs[i * e.n + j])
}

/// Per-engagement comparison of the truth and surrogate assignments, both
/// priced on the true matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementOutcome {
    pub truth_assignment: Assignment,
    pub approx_assignment: Assignment,
    /// Truth-optimal bottleneck time `b`.
    pub b_true: f64,
    /// Bottleneck time `b̃` of the surrogate assignment on the true matrix.
    pub b_approx: f64,
    pub true_build_ms: f64,
    pub approx_build_ms: f64,
    pub true_bap_ms: f64,
    pub approx_bap_ms: f64,
}

impl EngagementOutcome {
    /// The truth assignment intercepts every target.
    pub fn feasible(&self) -> bool {
        self.b_true < T_INF
    }

    pub fn approx_intercepts_all(&self) -> bool {
        self.b_approx < T_INF
    }

    pub fn matched(&self) -> bool {
        self.b_approx == self.b_true
    }
}

/// Mean wall-clock times, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub true_build_ms: f64,
    pub approx_build_ms: f64,
    pub true_bap_ms: f64,
    pub approx_bap_ms: f64,
}

impl Timing {
    /// True over approximate cost-matrix build time.
    pub fn build_speedup(&self) -> f64 {
        self.true_build_ms / self.approx_build_ms
    }
}

/// Aggregate metrics for one engagement size, class and truth gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class: EngagementClass,
    pub n: usize,
    pub pn_gain: f64,
    pub engagements: usize,
    pub feasible_count: usize,
    /// Engagements the truth assignment cannot fully intercept; left out of
    /// the match and ratio statistics.
    pub excluded_infeasible: usize,
    /// Feasible engagements whose surrogate assignment intercepts all targets.
    pub all_intercepted_count: usize,
    pub matched_count: usize,
    /// Absent when no engagement is feasible.
    pub bottleneck_match_fraction: Option<f64>,
    /// Mean of `b̃ / b` over feasible engagements with `b̃ != b`; absent when
    /// there are none.
    pub mean_bottleneck_ratio: Option<f64>,
    pub timing: Timing,
    pub outcomes: Vec<EngagementOutcome>,
}

impl EvalReport {
    /// Aggregates per-engagement outcomes.
    pub fn from_outcomes(class: EngagementClass, n: usize, pn_gain: f64, outcomes: Vec<EngagementOutcome>) -> Self {
        let feasible: Vec<&EngagementOutcome> = outcomes.iter().filter(|o| o.feasible()).collect();
        let matched = feasible.iter().filter(|o| o.matched()).count();
        let ratios: Vec<f64> = feasible
            .iter()
            .filter(|o| !o.matched())
            .map(|o| o.b_approx / o.b_true)
            .collect();
        let mean = |f: fn(&EngagementOutcome) -> f64| {
            if outcomes.is_empty() {
                0.0
            } else {
                outcomes.iter().map(f).sum::<f64>() / outcomes.len() as f64
            }
        };
        Self {
            class,
            n,
            pn_gain,
            engagements: outcomes.len(),
            feasible_count: feasible.len(),
            excluded_infeasible: outcomes.len() - feasible.len(),
            all_intercepted_count: feasible.iter().filter(|o| o.approx_intercepts_all()).count(),
            matched_count: matched,
            bottleneck_match_fraction: (!feasible.is_empty()).then(|| matched as f64 / feasible.len() as f64),
            mean_bottleneck_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
            timing: Timing {
                true_build_ms: mean(|o| o.true_build_ms),
                approx_build_ms: mean(|o| o.approx_build_ms),
                true_bap_ms: mean(|o| o.true_bap_ms),
                approx_bap_ms: mean(|o| o.approx_bap_ms),
            },
            outcomes,
        }
    }

    /// Fraction of feasible engagements whose surrogate assignment
    /// intercepts every target.
    pub fn all_intercepted_fraction(&self) -> Option<f64> {
        (self.feasible_count > 0).then(|| self.all_intercepted_count as f64 / self.feasible_count as f64)
    }
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Compares assignments from a given true matrix and a surrogate matrix.
pub fn compare(
    truth: &CostMatrix,
    approx: &CostMatrix,
    true_build_ms: f64,
    approx_build_ms: f64,
) -> Result<EngagementOutcome> {
    if truth.n() != approx.n() {
        return Err(Error::DimensionMismatch {
            expected: truth.n(),
            actual: approx.n(),
        });
    }
    let start = Instant::now();
    let best = solve_bap(truth);
    let true_bap_ms = millis(start);
    let start = Instant::now();
    let guess = solve_bap(approx);
    let approx_bap_ms = millis(start);
    Ok(EngagementOutcome {
        b_true: best.value,
        b_approx: bottleneck_cost(truth, &guess.assignment)?,
        truth_assignment: best.assignment,
        approx_assignment: guess.assignment,
        true_build_ms,
        approx_build_ms,
        true_bap_ms,
        approx_bap_ms,
    })
}

fn check_batch(engagements: &[Engagement], model: &ApproximatorModel) -> Result<(EngagementClass, usize)> {
    let first = engagements
        .first()
        .ok_or_else(|| Error::invalid("no engagements to evaluate"))?;
    if let Some(e) = engagements.iter().find(|e| e.n != first.n || e.class != first.class) {
        return Err(Error::invalid(format!(
            "mixed batch: {} {}x{} alongside {} {}x{}",
            first.class, first.n, first.n, e.class, e.n, e.n
        )));
    }
    if model.class != first.class {
        return Err(Error::invalid(format!(
            "{} model cannot price a {} engagement",
            model.class, first.class
        )));
    }
    Ok((first.class, first.n))
}

/// Builds both matrices and solves both assignment problems for every
/// engagement. All engagements must share size and class.
pub fn evaluate(
    engagements: &[Engagement],
    model: &ApproximatorModel,
    params: &VehicleParams,
    scp: &ScpConfig,
    truth: &TruthConfig,
) -> Result<EvalReport> {
    let (class, n) = check_batch(engagements, model)?;
    let approx = approximate_all(engagements, model)?;
    evaluate_against(engagements, &approx, params, scp, truth).map(|o| EvalReport::from_outcomes(class, n, truth.pn_gain, o))
}

fn approximate_all(engagements: &[Engagement], model: &ApproximatorModel) -> Result<Vec<(CostMatrix, f64)>> {
    engagements
        .iter()
        .map(|e| {
            let start = Instant::now();
            let c = build_cost_matrix_approx(e, model)?;
            Ok((c, millis(start)))
        })
        .collect()
}

fn evaluate_against(
    engagements: &[Engagement],
    approx: &[(CostMatrix, f64)],
    params: &VehicleParams,
    scp: &ScpConfig,
    truth: &TruthConfig,
) -> Result<Vec<EngagementOutcome>> {
    engagements
        .iter()
        .zip(approx)
        .map(|(e, (c_approx, approx_ms))| {
            let start = Instant::now();
            let c_true = build_cost_matrix_true(e, params, scp, truth)?;
            compare(&c_true, c_approx, millis(start), *approx_ms)
        })
        .collect()
}

/// Re-prices maneuvering engagements against truths flown at each PN gain.
/// The surrogate matrices are built once and shared, since the model never
/// sees the gain.
pub fn robustness_eval(
    engagements: &[Engagement],
    model: &ApproximatorModel,
    params: &VehicleParams,
    scp: &ScpConfig,
    gains: &[f64],
    workers: usize,
) -> Result<Vec<EvalReport>> {
    let (class, n) = check_batch(engagements, model)?;
    if class != EngagementClass::Maneuvering {
        return Err(Error::invalid("robustness study needs maneuvering engagements"));
    }
    let approx = approximate_all(engagements, model)?;
    gains
        .iter()
        .map(|&pn_gain| {
            let truth = TruthConfig { pn_gain, workers };
            let outcomes = evaluate_against(engagements, &approx, params, scp, &truth)?;
            Ok(EvalReport::from_outcomes(class, n, pn_gain, outcomes))
        })
        .collect()
}
