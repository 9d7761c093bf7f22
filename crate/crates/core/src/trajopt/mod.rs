//! Minimum-time intercept trajectories by sequential convex programming.
//!
//! The free final time is handled by time dilation: with normalised time
//! `τ ∈ [0, 1]` and `t = σ τ`, the dynamics become `dx/dτ = σ f(x, u)`.
//! Each iteration linearises the dynamics (exactly discretised with
//! first-order-hold controls) and the target position at `σ` about the
//! previous iterate, then solves a second-order cone program minimising `σ`
//! plus an ℓ1 penalty on virtual control, inside trust regions.

mod discretize;
pub(crate) mod linalg;
mod oracle;
pub mod socp;

use serde::{Deserialize, Serialize};

use crate::dynamics::{state_derivative, Trajectory, Vec3, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use discretize::{linearize_interval, propagate_interval, Control, IntervalModel, State};
use socp::{BlockKkt, ConeProgram, Cones, IpmSettings, IpmStatus, SparseMatrix};

pub use oracle::{analytic_min_time_dragfree, reachable_distance};

// Variable scales used when assembling subproblems.
const POS_SCALE: f64 = 1e4;
const VEL_SCALE: f64 = 3e3;
const TIME_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajOptProblem {
    pub pursuer_r0: Vec3,
    pub pursuer_v0: Vec3,
    /// Target history; a single sample for a stationary target.
    pub target: Trajectory,
    /// Time the target reaches the asset, when it is maneuvering.
    pub target_t_hit: Option<f64>,
    pub params: VehicleParams,
}

impl TrajOptProblem {
    pub fn stationary(r0: Vec3, v0: Vec3, target: Vec3, params: VehicleParams) -> Self {
        Self {
            pursuer_r0: r0,
            pursuer_v0: v0,
            target: Trajectory::stationary(target),
            target_t_hit: None,
            params,
        }
    }

    pub fn maneuvering(r0: Vec3, v0: Vec3, target: Trajectory, t_hit: f64, params: VehicleParams) -> Self {
        Self {
            pursuer_r0: r0,
            pursuer_v0: v0,
            target,
            target_t_hit: Some(t_hit),
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.pursuer_r0.is_finite() && self.pursuer_v0.is_finite()) {
            return Err(Error::invalid("pursuer initial condition must be finite"));
        }
        if self.target.states.is_empty() {
            return Err(Error::invalid("target trajectory is empty"));
        }
        if let Some(t) = self.target_t_hit {
            if !(t > 0.0) {
                return Err(Error::invalid(format!("target time to asset must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn initial_separation(&self) -> f64 {
        (self.pursuer_r0 - self.target.position_at(0.0)).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScpConfig {
    pub num_nodes: usize,
    pub max_iters: usize,
    /// Trust region half-width on node positions, ft.
    pub trust_radius_position: f64,
    /// Trust region half-width on node velocities, ft/s.
    pub trust_radius_velocity: f64,
    /// Trust region on σ as a fraction of the reference value.
    pub trust_fraction_sigma: f64,
    /// Relative change in σ below which the iteration is converged.
    pub convergence_tol: f64,
    pub virtual_control_penalty: f64,
    /// Accepted virtual control, in scaled units (1 = 10⁴ ft).
    pub virtual_control_tol: f64,
    /// Accepted nonlinear defect between nodes, in scaled units.
    pub defect_tol: f64,
    pub subproblem_tol: f64,
    /// RK4 substeps per interval for discretisation.
    pub substeps: usize,
}

impl Default for ScpConfig {
    fn default() -> Self {
        Self {
            num_nodes: 31,
            max_iters: 30,
            trust_radius_position: 2000.0,
            trust_radius_velocity: 500.0,
            trust_fraction_sigma: 0.2,
            convergence_tol: 1e-4,
            virtual_control_penalty: 1e4,
            virtual_control_tol: 1e-4,
            defect_tol: 1e-4,
            subproblem_tol: 1e-7,
            substeps: 4,
        }
    }
}

impl ScpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.trust_radius_position,
            self.trust_radius_velocity,
            self.trust_fraction_sigma,
            self.convergence_tol,
            self.virtual_control_penalty,
            self.virtual_control_tol,
            self.defect_tol,
            self.subproblem_tol,
        ];
        if self.num_nodes < 10 {
            return Err(Error::invalid(format!("num_nodes must be at least 10, got {}", self.num_nodes)));
        }
        if self.max_iters == 0 || self.substeps == 0 {
            return Err(Error::invalid("max_iters and substeps must be positive"));
        }
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("trust radii and tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Feasible,
    InfeasibleIntercept,
    SolverFailed,
}

impl SolveStatus {
    pub fn is_feasible(self) -> bool {
        self == SolveStatus::Feasible
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajOptSolution {
    pub status: SolveStatus,
    pub t_f: f64,
    /// Node states at `t_f · k / (N - 1)`.
    pub states: Vec<VehicleState>,
    /// Node controls, interpolated linearly between nodes.
    pub controls: Vec<Vec3>,
    pub iterations: usize,
    pub virtual_control_norm: f64,
}

impl TrajOptSolution {
    fn failed(status: SolveStatus, iterations: usize) -> Self {
        Self {
            status,
            t_f: f64::INFINITY,
            states: Vec::new(),
            controls: Vec::new(),
            iterations,
            virtual_control_norm: f64::INFINITY,
        }
    }

    /// Node states as a uniformly sampled trajectory.
    pub fn trajectory(&self) -> Option<Trajectory> {
        if self.states.is_empty() {
            return None;
        }
        let dt = if self.states.len() > 1 && self.t_f > 0.0 {
            self.t_f / (self.states.len() - 1) as f64
        } else {
            1.0
        };
        Trajectory::new(dt, self.states.clone()).ok()
    }

    pub fn summary(&self, problem: &TrajOptProblem) -> SolutionSummary {
        let miss = (self.status == SolveStatus::Feasible).then(|| replay_nonlinear(self, problem).miss);
        SolutionSummary {
            status: self.status,
            t_f: self.t_f.is_finite().then_some(self.t_f),
            iterations: self.iterations,
            miss_ft: miss,
        }
    }
}

/// Compact JSON record of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub status: SolveStatus,
    pub t_f: Option<f64>,
    pub iterations: usize,
    pub miss_ft: Option<f64>,
}

#[derive(Debug, Clone)]
struct Reference {
    x: Vec<State>,
    u: Vec<Control>,
    sigma: f64,
}

fn to_state(s: &VehicleState) -> State {
    s.to_array()
}

/// Drag-free intercept estimate against a possibly moving target, by a few
/// fixed-point passes on the aim point.
fn intercept_time_estimate(problem: &TrajOptProblem) -> f64 {
    let p = &problem.params;
    let mut t = analytic_min_time_dragfree(problem.pursuer_r0, problem.pursuer_v0, problem.target.position_at(0.0), p);
    if problem.target.states.len() > 1 {
        for _ in 0..8 {
            let aim = problem.target.position_at(t);
            let next = analytic_min_time_dragfree(problem.pursuer_r0, problem.pursuer_v0, aim, p);
            if !next.is_finite() || (next - t).abs() < 1e-6 {
                t = if next.is_finite() { next } else { t };
                break;
            }
            t = next;
        }
    }
    t
}

/// Constant-acceleration arc that lands on the target at the estimated
/// intercept time.
fn initial_guess(problem: &TrajOptProblem, n: usize) -> Reference {
    let t = intercept_time_estimate(problem).clamp(1e-2, 1e3);
    let r0 = problem.pursuer_r0;
    let v0 = problem.pursuer_v0;
    let aim = problem.target.position_at(t);
    let accel = (aim - r0 - v0 * t) * (2.0 / (t * t));
    let u = accel.clamp_abs(problem.params.u_max).to_array();
    let mut x = Vec::with_capacity(n);
    for k in 0..n {
        let tk = t * k as f64 / (n - 1) as f64;
        let mut r = r0 + v0 * tk + accel * (0.5 * tk * tk);
        // the aim point can lie underground; the hard altitude bound
        // would then leave the first trust region empty
        r.z = r.z.max(0.0);
        let v = v0 + accel * tk;
        x.push(to_state(&VehicleState::new(r, v)));
    }
    Reference {
        x,
        u: vec![u; n],
        sigma: t,
    }
}

/// Column layout of the subproblem: per node `x(6) u(3) σ(1)` followed by
/// `ν⁺(6) ν⁻(6)` on every node but the last, which carries the capture
/// slack `ε` instead.
struct Layout {
    n: usize,
}

impl Layout {
    const INNER: usize = 22;
    const LAST: usize = 11;

    fn off(&self, k: usize) -> usize {
        k * Self::INNER
    }
    fn x(&self, k: usize, i: usize) -> usize {
        self.off(k) + i
    }
    fn u(&self, k: usize, i: usize) -> usize {
        self.off(k) + 6 + i
    }
    fn sigma(&self, k: usize) -> usize {
        self.off(k) + 9
    }
    fn nu_plus(&self, k: usize, i: usize) -> usize {
        self.off(k) + 10 + i
    }
    fn nu_minus(&self, k: usize, i: usize) -> usize {
        self.off(k) + 16 + i
    }
    fn eps(&self) -> usize {
        self.off(self.n - 1) + 10
    }
    fn num_vars(&self) -> usize {
        (self.n - 1) * Self::INNER + Self::LAST
    }
    fn var_sizes(&self) -> Vec<usize> {
        let mut v = vec![Self::INNER; self.n - 1];
        v.push(Self::LAST);
        v
    }
    fn row_sizes(&self) -> Vec<usize> {
        let mut v = vec![7; self.n - 1];
        v[0] += 6;
        v
    }
}

const STATE_SCALE: [f64; 6] = [POS_SCALE, POS_SCALE, POS_SCALE, VEL_SCALE, VEL_SCALE, VEL_SCALE];

struct Subproblem {
    prog: ConeProgram,
    layout: Layout,
}

fn build_subproblem(
    problem: &TrajOptProblem,
    config: &ScpConfig,
    sigma_fraction: f64,
    reference: &Reference,
    models: &[IntervalModel],
) -> Subproblem {
    let n = config.num_nodes;
    let lay = Layout { n };
    let nv = lay.num_vars();
    let su = problem.params.u_max;
    let ds = &STATE_SCALE;

    let mut c = vec![0.0; nv];
    c[lay.sigma(n - 1)] = 1.0;
    for k in 0..n - 1 {
        for i in 0..6 {
            c[lay.nu_plus(k, i)] = config.virtual_control_penalty;
            c[lay.nu_minus(k, i)] = config.virtual_control_penalty;
        }
    }
    c[lay.eps()] = config.virtual_control_penalty;

    let mut a = SparseMatrix::new(nv);
    let mut b = Vec::new();
    let x0 = [
        problem.pursuer_r0.x,
        problem.pursuer_r0.y,
        problem.pursuer_r0.z,
        problem.pursuer_v0.x,
        problem.pursuer_v0.y,
        problem.pursuer_v0.z,
    ];
    for i in 0..6 {
        a.push_row(&[(lay.x(0, i), 1.0)]);
        b.push(x0[i] / ds[i]);
    }
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(24);
    for (k, m) in models.iter().enumerate() {
        for i in 0..6 {
            row.clear();
            row.push((lay.x(k + 1, i), 1.0));
            for j in 0..6 {
                row.push((lay.x(k, j), -m.a[i][j] * ds[j] / ds[i]));
            }
            for j in 0..3 {
                row.push((lay.u(k, j), -m.bm[i][j] * su / ds[i]));
                row.push((lay.u(k + 1, j), -m.bp[i][j] * su / ds[i]));
            }
            row.push((lay.sigma(k), -m.s[i] * TIME_SCALE / ds[i]));
            row.push((lay.nu_plus(k, i), -1.0));
            row.push((lay.nu_minus(k, i), 1.0));
            a.push_row(&row);
            b.push(m.z[i] / ds[i]);
        }
        a.push_row(&[(lay.sigma(k + 1), 1.0), (lay.sigma(k), -1.0)]);
        b.push(0.0);
    }

    let mut g = SparseMatrix::new(nv);
    let mut h = Vec::new();
    let mut le = |g: &mut SparseMatrix, col: usize, coef: f64, rhs: f64| {
        g.push_row(&[(col, coef)]);
        h.push(rhs);
    };
    let sig_ref = reference.sigma / TIME_SCALE;
    let sig_rad = sigma_fraction * reference.sigma.max(0.05) / TIME_SCALE;
    let trust = [
        config.trust_radius_position / POS_SCALE,
        config.trust_radius_position / POS_SCALE,
        config.trust_radius_position / POS_SCALE,
        config.trust_radius_velocity / VEL_SCALE,
        config.trust_radius_velocity / VEL_SCALE,
        config.trust_radius_velocity / VEL_SCALE,
    ];
    for k in 0..n {
        for i in 0..3 {
            le(&mut g, lay.u(k, i), 1.0, 1.0);
            le(&mut g, lay.u(k, i), -1.0, 1.0);
        }
        if k > 0 {
            le(&mut g, lay.x(k, 2), -1.0, 0.0);
        }
        for i in 0..6 {
            let xr = reference.x[k][i] / ds[i];
            le(&mut g, lay.x(k, i), 1.0, xr + trust[i]);
            le(&mut g, lay.x(k, i), -1.0, -xr + trust[i]);
        }
        le(&mut g, lay.sigma(k), 1.0, sig_ref + sig_rad);
        le(&mut g, lay.sigma(k), -1.0, -(sig_ref - sig_rad).max(0.0));
        if k < n - 1 {
            for i in 0..6 {
                le(&mut g, lay.nu_plus(k, i), -1.0, 0.0);
                le(&mut g, lay.nu_minus(k, i), -1.0, 0.0);
            }
        } else {
            le(&mut g, lay.eps(), -1.0, 0.0);
        }
    }
    let nonneg = h.len();

    // ‖r_N - p_T(σ̄) - ṗ_T(σ̄)(σ - σ̄)‖ ≤ r_c + ε
    let p_t = problem.target.position_at(reference.sigma);
    let v_t = problem.target.velocity_at(reference.sigma);
    g.push_row(&[(lay.eps(), -1.0)]);
    h.push(problem.params.r_capture / POS_SCALE);
    for i in 0..3 {
        let slope = v_t[i] * TIME_SCALE / POS_SCALE;
        g.push_row(&[(lay.x(n - 1, i), -1.0), (lay.sigma(n - 1), slope)]);
        h.push(-(p_t[i] / POS_SCALE - slope * sig_ref));
    }

    Subproblem {
        prog: ConeProgram {
            c,
            a,
            b,
            g,
            h,
            cones: Cones { nonneg, soc: vec![4] },
        },
        layout: lay,
    }
}

struct Step {
    reference: Reference,
    virtual_control: f64,
}

fn solve_subproblem(
    problem: &TrajOptProblem,
    config: &ScpConfig,
    sigma_fraction: f64,
    reference: &Reference,
    models: &[IntervalModel],
) -> Option<Step> {
    let sub = build_subproblem(problem, config, sigma_fraction, reference, models);
    let lay = &sub.layout;
    let mut kkt = BlockKkt::new(&sub.prog, &lay.var_sizes(), &lay.row_sizes()).ok()?;
    let settings = IpmSettings {
        feastol: config.subproblem_tol,
        abstol: config.subproblem_tol,
        reltol: config.subproblem_tol,
        ..IpmSettings::default()
    };
    let sol = socp::solve(&sub.prog, &mut kkt, &settings).ok()?;
    if !matches!(sol.status, IpmStatus::Optimal | IpmStatus::Inaccurate) {
        return None;
    }
    let n = lay.n;
    let v = &sol.x;
    let su = problem.params.u_max;
    let mut x = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for k in 0..n {
        let mut s = [0.0; 6];
        for i in 0..6 {
            s[i] = v[lay.x(k, i)] * STATE_SCALE[i];
        }
        x.push(s);
        let mut c = [0.0; 3];
        for i in 0..3 {
            c[i] = (v[lay.u(k, i)] * su).clamp(-su, su);
        }
        u.push(c);
    }
    let mut vc = v[lay.eps()].max(0.0);
    for k in 0..n - 1 {
        for i in 0..6 {
            vc += v[lay.nu_plus(k, i)].max(0.0) + v[lay.nu_minus(k, i)].max(0.0);
        }
    }
    Some(Step {
        reference: Reference {
            x,
            u,
            sigma: (v[lay.sigma(n - 1)] * TIME_SCALE).max(0.0),
        },
        virtual_control: vc,
    })
}

fn linearize(problem: &TrajOptProblem, config: &ScpConfig, r: &Reference) -> (Vec<IntervalModel>, f64) {
    let n = config.num_nodes;
    let dtau = 1.0 / (n - 1) as f64;
    let mut defect: f64 = 0.0;
    let models: Vec<IntervalModel> = (0..n - 1)
        .map(|k| {
            let m = linearize_interval(&problem.params, &r.x[k], &r.u[k], &r.u[k + 1], r.sigma, dtau, config.substeps);
            for i in 0..6 {
                defect = defect.max((m.end[i] - r.x[k + 1][i]).abs() / STATE_SCALE[i]);
            }
            m
        })
        .collect();
    (models, defect)
}

fn finish(problem: &TrajOptProblem, r: Reference, iterations: usize, vc: f64) -> TrajOptSolution {
    let status = match problem.target_t_hit {
        Some(t_hit) if r.sigma > t_hit => SolveStatus::InfeasibleIntercept,
        _ => SolveStatus::Feasible,
    };
    TrajOptSolution {
        status,
        t_f: r.sigma,
        states: r.x.iter().map(VehicleState::from_array).collect(),
        controls: r.u.iter().map(|u| Vec3::from_array(*u)).collect(),
        iterations,
        virtual_control_norm: vc,
    }
}

/// Minimum-time intercept by sequential convex programming.
///
/// Returns an error only for invalid inputs; numerical trouble is reported
/// through [`SolveStatus`].
pub fn solve_min_time(problem: &TrajOptProblem, config: &ScpConfig) -> Result<TrajOptSolution> {
    problem.validate()?;
    config.validate()?;
    if problem.initial_separation() <= problem.params.r_capture {
        return Ok(TrajOptSolution {
            status: SolveStatus::Feasible,
            t_f: 0.0,
            states: vec![VehicleState::new(problem.pursuer_r0, problem.pursuer_v0)],
            controls: vec![Vec3::ZERO],
            iterations: 0,
            virtual_control_norm: 0.0,
        });
    }

    let mut reference = initial_guess(problem, config.num_nodes);
    let mut last: Option<(f64, f64)> = None;
    let mut stalled = 0;
    let mut sigma_fraction = config.trust_fraction_sigma;
    let mut last_change = 0.0;
    for iter in 0..=config.max_iters {
        let (models, defect) = linearize(problem, config, &reference);
        if let Some((dsig, vc)) = last {
            if dsig < config.convergence_tol && vc <= config.virtual_control_tol && defect < config.defect_tol {
                return Ok(finish(problem, reference, iter, vc));
            }
            // a stuck σ with persistent virtual control is a verdict of its
            // own; the defect need not settle for that
            if dsig < config.convergence_tol && vc > config.virtual_control_tol {
                stalled += 1;
                if stalled >= 3 {
                    return Ok(TrajOptSolution {
                        virtual_control_norm: vc,
                        ..TrajOptSolution::failed(SolveStatus::InfeasibleIntercept, iter)
                    });
                }
            } else {
                stalled = 0;
            }
        }
        if iter == config.max_iters {
            break;
        }
        let Some(step) = solve_subproblem(problem, config, sigma_fraction, &reference, &models) else {
            return Ok(TrajOptSolution::failed(SolveStatus::SolverFailed, iter + 1));
        };
        let change = step.reference.sigma - reference.sigma;
        // The subproblem is a degenerate LP in the controls, so σ can cycle
        // around the optimum; halve its trust region on every reversal.
        if change * last_change < 0.0 {
            sigma_fraction *= 0.5;
        }
        if change != 0.0 {
            last_change = change;
        }
        let dsig = change.abs() / reference.sigma.max(1e-3);
        last = Some((dsig, step.virtual_control));
        reference = step.reference;
    }
    Ok(TrajOptSolution::failed(SolveStatus::SolverFailed, config.max_iters))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replay {
    /// Distance to the target at `t_f`, ft.
    pub miss: f64,
    /// Lowest altitude along the replayed path, ft.
    pub min_altitude: f64,
}

/// Integrates the full nonlinear dynamics under the solution's controls
/// (first-order hold, step ≤ 1 ms) and measures the terminal miss.
pub fn replay_nonlinear(solution: &TrajOptSolution, problem: &TrajOptProblem) -> Replay {
    let mut s = VehicleState::new(problem.pursuer_r0, problem.pursuer_v0);
    let mut min_alt = s.r.z;
    let n = solution.controls.len();
    if n < 2 || solution.t_f <= 0.0 {
        return Replay {
            miss: (s.r - problem.target.position_at(0.0)).norm(),
            min_altitude: min_alt,
        };
    }
    let p = &problem.params;
    let interval = solution.t_f / (n - 1) as f64;
    let sub = (interval / 1e-3).ceil().max(1.0) as usize;
    let h = interval / sub as f64;
    for k in 0..n - 1 {
        let (u0, u1) = (solution.controls[k], solution.controls[k + 1]);
        let u_at = |f: f64| u0 * (1.0 - f) + u1 * f;
        for j in 0..sub {
            let f0 = j as f64 / sub as f64;
            let fh = (j as f64 + 0.5) / sub as f64;
            let f1 = (j + 1) as f64 / sub as f64;
            let shift = |k: (Vec3, Vec3), a: f64| VehicleState::new(s.r + k.0 * a, s.v + k.1 * a);
            let k1 = state_derivative(&s, u_at(f0), p);
            let k2 = state_derivative(&shift(k1, 0.5 * h), u_at(fh), p);
            let k3 = state_derivative(&shift(k2, 0.5 * h), u_at(fh), p);
            let k4 = state_derivative(&shift(k3, h), u_at(f1), p);
            s = VehicleState::new(
                s.r + (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * (h / 6.0),
                s.v + (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * (h / 6.0),
            );
            min_alt = min_alt.min(s.r.z);
        }
    }
    Replay {
        miss: (s.r - problem.target.position_at(solution.t_f)).norm(),
        min_altitude: min_alt,
    }
}

/// Nonlinear defect of a solution, for diagnostics: max node mismatch
/// after propagating each interval from its start node.
pub fn max_node_defect(solution: &TrajOptSolution, problem: &TrajOptProblem, substeps: usize) -> f64 {
    let n = solution.states.len();
    if n < 2 {
        return 0.0;
    }
    let dtau = 1.0 / (n - 1) as f64;
    (0..n - 1)
        .map(|k| {
            let end = propagate_interval(
                &problem.params,
                &solution.states[k].to_array(),
                &solution.controls[k].to_array(),
                &solution.controls[k + 1].to_array(),
                solution.t_f,
                dtau,
                substeps,
            );
            let next = solution.states[k + 1].to_array();
            (0..3).map(|i| (end[i] - next[i]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_pn_target, ASSET, TARGET_DT, TARGET_T_MAX};

    fn drag_free() -> VehicleParams {
        VehicleParams {
            beta: 0.0,
            u_max: 805.0,
            ..VehicleParams::default()
        }
    }

    #[test]
    fn zero_time_when_already_captured() {
        let p = VehicleParams::default();
        let prob = TrajOptProblem::stationary(
            Vec3::new(0.0, 0.0, 5000.0),
            Vec3::new(3000.0, 0.0, 0.0),
            Vec3::new(10.0, 0.0, 5000.0),
            p,
        );
        let sol = solve_min_time(&prob, &ScpConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert_eq!(sol.t_f, 0.0);
        let rep = replay_nonlinear(&sol, &prob);
        assert!((rep.miss - 10.0).abs() < 1e-12);
    }

    #[test]
    fn head_on_matches_oracle() {
        let p = drag_free();
        let r0 = Vec3::new(-10_000.0, 0.0, 5000.0);
        let v0 = Vec3::new(3000.0, 0.0, 0.0);
        let tgt = Vec3::new(0.0, 0.0, 5000.0);
        let prob = TrajOptProblem::stationary(r0, v0, tgt, p);
        let sol = solve_min_time(&prob, &ScpConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible, "{sol:?}");
        let oracle = analytic_min_time_dragfree(r0, v0, tgt, &p);
        assert!((sol.t_f - oracle).abs() / oracle < 0.02, "{} vs {oracle}", sol.t_f);
        assert!((sol.t_f - 2.49).abs() < 0.05);
        let rep = replay_nonlinear(&sol, &prob);
        assert!(rep.miss <= p.r_capture + 0.5, "miss {}", rep.miss);
    }

    #[test]
    fn deterministic() {
        let p = VehicleParams::default();
        let prob = TrajOptProblem::stationary(
            Vec3::new(-25_000.0, 0.0, 2000.0),
            Vec3::new(2800.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 21_000.0),
            p,
        );
        let a = solve_min_time(&prob, &ScpConfig::default()).unwrap();
        let b = solve_min_time(&prob, &ScpConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.status, SolveStatus::Feasible);
    }

    #[test]
    fn far_pursuer_cannot_beat_target_to_asset() {
        let p = VehicleParams::default();
        let tgt0 = VehicleState::new(ASSET + Vec3::new(2520.0, 0.0, 0.0), Vec3::new(-2500.0, 0.0, 0.0));
        let run = simulate_pn_target(tgt0, ASSET, 3.0, TARGET_DT, TARGET_T_MAX, &p, true).unwrap();
        assert!(run.reached && run.t_hit <= 1.05);
        let prob = TrajOptProblem::maneuvering(
            Vec3::new(-50_000.0, 0.0, 5000.0),
            Vec3::new(3000.0, 0.0, 0.0),
            run.trajectory,
            run.t_hit,
            p,
        );
        let sol = solve_min_time(&prob, &ScpConfig::default()).unwrap();
        assert_ne!(sol.status, SolveStatus::Feasible);
    }

    #[test]
    fn rejects_bad_config() {
        let prob = TrajOptProblem::stationary(Vec3::ZERO, Vec3::ZERO, Vec3::new(1e4, 0.0, 0.0), drag_free());
        let cfg = ScpConfig {
            num_nodes: 5,
            ..ScpConfig::default()
        };
        assert!(solve_min_time(&prob, &cfg).is_err());
    }
}
