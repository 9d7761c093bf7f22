//! Three-degree-of-freedom point-mass dynamics over a flat earth.
//!
//! Position is in feet with `z` pointing up, velocity in ft/s and control
//! acceleration in ft/s². Drag is quadratic in speed and scales with an
//! exponential atmosphere.

use std::io::Write;
use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity, ft/s².
pub const G0: f64 = 32.174;

/// Position of the defended asset that maneuvering targets home on.
pub const ASSET: Vec3 = Vec3::new(0.0, 0.0, 5000.0);

/// Navigation ratio assumed for maneuvering targets.
pub const NOMINAL_PN_GAIN: f64 = 3.0;

/// Integration step for target simulation, s.
pub const TARGET_DT: f64 = 0.01;

/// Horizon after which a target that has not reached the asset is given up on, s.
pub const TARGET_T_MAX: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Clamps each component to `[-bound, bound]`.
    pub fn clamp_abs(self, bound: f64) -> Vec3 {
        Vec3::new(
            self.x.clamp(-bound, bound),
            self.y.clamp(-bound, bound),
            self.z.clamp(-bound, bound),
        )
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, k: f64) -> Vec3 {
        Vec3::new(self.x / k, self.y / k, self.z / k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub r: Vec3,
    pub v: Vec3,
}

impl VehicleState {
    pub fn new(r: Vec3, v: Vec3) -> Self {
        Self { r, v }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.r.x, self.r.y, self.r.z, self.v.x, self.v.y, self.v.z]
    }

    pub fn from_array(a: &[f64; 6]) -> Self {
        Self::new(Vec3::new(a[0], a[1], a[2]), Vec3::new(a[3], a[4], a[5]))
    }

    /// Non-negative altitude is the only physical validity requirement.
    pub fn is_physical(&self) -> bool {
        self.r.is_finite() && self.v.is_finite() && self.r.z >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Ballistic coefficient C_D S / (2 m), ft²/slug.
    pub beta: f64,
    /// Sea-level density, slug/ft³.
    pub rho0: f64,
    /// Density scale height, ft.
    pub h0: f64,
    /// Per-axis acceleration bound, ft/s².
    pub u_max: f64,
    /// Capture radius, ft.
    pub r_capture: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            beta: 5e-3,
            rho0: 2.3769e-3,
            h0: 29_800.0,
            u_max: 25.0 * G0,
            r_capture: 20.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta >= 0.0
            && self.rho0 > 0.0
            && self.h0 > 0.0
            && self.u_max > 0.0
            && self.r_capture > 0.0
            && [self.beta, self.rho0, self.h0, self.u_max, self.r_capture]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid vehicle parameters {self:?}")))
        }
    }

    pub fn drag_free(&self) -> Self {
        Self { beta: 0.0, ..*self }
    }
}

pub fn atmospheric_density(altitude: f64, params: &VehicleParams) -> f64 {
    params.rho0 * (-altitude / params.h0).exp()
}

/// Returns `(dr, dv)` for the drag-perturbed double integrator.
pub fn state_derivative(s: &VehicleState, u: Vec3, params: &VehicleParams) -> (Vec3, Vec3) {
    let speed = s.v.norm();
    let drag = params.beta * atmospheric_density(s.r.z, params) * speed;
    (s.v, u - s.v * drag)
}

/// One classical RK4 step with the control held constant.
pub fn integrate_step(s: &VehicleState, u: Vec3, dt: f64, params: &VehicleParams) -> VehicleState {
    let shift = |k: (Vec3, Vec3), h: f64| VehicleState::new(s.r + k.0 * h, s.v + k.1 * h);
    let k1 = state_derivative(s, u, params);
    let k2 = state_derivative(&shift(k1, 0.5 * dt), u, params);
    let k3 = state_derivative(&shift(k2, 0.5 * dt), u, params);
    let k4 = state_derivative(&shift(k3, dt), u, params);
    VehicleState::new(
        s.r + (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * (dt / 6.0),
        s.v + (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * (dt / 6.0),
    )
}

/// True proportional navigation toward a fixed point.
///
/// The command is `gain * (Ω × v)` where Ω is the line-of-sight rotation
/// rate, clamped per axis to `u_max`. Inside the capture radius the
/// engagement is over and the command is zero.
pub fn pn_acceleration(target: &VehicleState, asset: Vec3, gain: f64, params: &VehicleParams) -> Vec3 {
    pn_acceleration_unclamped(target, asset, gain, params).clamp_abs(params.u_max)
}

pub(crate) fn pn_acceleration_unclamped(
    target: &VehicleState,
    asset: Vec3,
    gain: f64,
    params: &VehicleParams,
) -> Vec3 {
    let p = asset - target.r;
    let range_sq = p.dot(p);
    if range_sq.sqrt() < params.r_capture {
        return Vec3::ZERO;
    }
    let w = -target.v;
    let los_rate = p.cross(w) / range_sq;
    los_rate.cross(target.v) * gain
}

/// Uniformly sampled vehicle history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<VehicleState>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<VehicleState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("trajectory must have at least one sample"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("trajectory step must be positive, got {dt}")));
        }
        Ok(Self { dt, states })
    }

    /// A single-sample trajectory for a target that never moves.
    pub fn stationary(position: Vec3) -> Self {
        Self {
            dt: 1.0,
            states: vec![VehicleState::new(position, Vec3::ZERO)],
        }
    }

    pub fn duration(&self) -> f64 {
        (self.states.len() - 1) as f64 * self.dt
    }

    pub fn initial(&self) -> VehicleState {
        self.states[0]
    }

    fn bracket(&self, t: f64) -> Option<(usize, f64)> {
        if self.states.len() == 1 || t >= self.duration() {
            return None;
        }
        let t = t.max(0.0);
        let pos = t / self.dt;
        let i = (pos.floor() as usize).min(self.states.len() - 2);
        Some((i, pos - i as f64))
    }

    /// Linearly interpolated position. Before the first sample the initial
    /// position is returned; after the last one the vehicle is held in place.
    pub fn position_at(&self, t: f64) -> Vec3 {
        match self.bracket(t) {
            Some((i, f)) => self.states[i].r * (1.0 - f) + self.states[i + 1].r * f,
            None => self.states.last().map(|s| s.r).unwrap_or_default(),
        }
    }

    /// Velocity consistent with [`Trajectory::position_at`]: interpolated
    /// inside the sampled window and zero once the vehicle is held.
    pub fn velocity_at(&self, t: f64) -> Vec3 {
        match self.bracket(t) {
            Some((i, f)) => self.states[i].v * (1.0 - f) + self.states[i + 1].v * f,
            None => Vec3::ZERO,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "rx", "ry", "rz", "vx", "vy", "vz"])?;
        for (k, s) in self.states.iter().enumerate() {
            let t = k as f64 * self.dt;
            let row = [t, s.r.x, s.r.y, s.r.z, s.v.x, s.v.y, s.v.z];
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file).map_err(|e| Error::csv(path, e))
    }
}

/// Outcome of a proportional-navigation target simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct PnRun {
    pub trajectory: Trajectory,
    pub reached: bool,
    /// First sample time within the capture radius of the asset; the final
    /// simulated time when the asset was never reached.
    pub t_hit: f64,
}

/// Flies a target at the asset under true PN until it is within the capture
/// radius or `t_max` elapses. Capture is checked at sample points only.
pub fn simulate_pn_target(
    initial: VehicleState,
    asset: Vec3,
    gain: f64,
    dt: f64,
    t_max: f64,
    params: &VehicleParams,
    drag: bool,
) -> Result<PnRun> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("simulation step must be positive, got {dt}")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid(format!("simulation horizon must be positive, got {t_max}")));
    }
    let flight = if drag { *params } else { params.drag_free() };
    let mut states = vec![initial];
    let mut s = initial;
    if (s.r - asset).norm() <= params.r_capture {
        return Ok(PnRun {
            trajectory: Trajectory { dt, states },
            reached: true,
            t_hit: 0.0,
        });
    }
    let max_steps = (t_max / dt).ceil() as usize;
    for k in 1..=max_steps {
        let a = pn_acceleration(&s, asset, gain, params);
        s = integrate_step(&s, a, dt, &flight);
        states.push(s);
        if (s.r - asset).norm() <= params.r_capture {
            return Ok(PnRun {
                trajectory: Trajectory { dt, states },
                reached: true,
                t_hit: k as f64 * dt,
            });
        }
    }
    Ok(PnRun {
        trajectory: Trajectory { dt, states },
        reached: false,
        t_hit: max_steps as f64 * dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn density_at_reference_altitudes() {
        let p = params();
        assert_eq!(atmospheric_density(0.0, &p), p.rho0);
        assert!((atmospheric_density(p.h0, &p) - p.rho0 * (-1.0f64).exp()).abs() < 1e-18);
        assert!((atmospheric_density(2.0 * p.h0, &p) - p.rho0 * (-2.0f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn density_strictly_decreasing_and_positive() {
        let p = params();
        let mut prev = atmospheric_density(-5000.0, &p);
        for k in 1..200 {
            let rho = atmospheric_density(-5000.0 + 500.0 * k as f64, &p);
            assert!(rho > 0.0 && rho < prev);
            prev = rho;
        }
    }

    #[test]
    fn derivative_cases() {
        let p = params();
        let rest = VehicleState::default();
        assert_eq!(state_derivative(&rest, Vec3::ZERO, &p), (Vec3::ZERO, Vec3::ZERO));

        let free = p.drag_free();
        let s = VehicleState::new(Vec3::ZERO, Vec3::new(10.0, -3.0, 2.0));
        let (_, dv) = state_derivative(&s, Vec3::new(7.0, 0.0, 0.0), &free);
        assert_eq!(dv, Vec3::new(7.0, 0.0, 0.0));

        let b = 5e-3;
        let p = VehicleParams { beta: b, ..p };
        let s = VehicleState::new(Vec3::new(0.0, 0.0, 1000.0), Vec3::new(100.0, 0.0, 0.0));
        let (dr, dv) = state_derivative(&s, Vec3::ZERO, &p);
        let expected = -b * p.rho0 * (-1000.0 / p.h0).exp() * 100.0 * 100.0;
        assert_eq!(dr, s.v);
        assert!((dv.x - expected).abs() < 1e-12 * expected.abs());
        assert_eq!((dv.y, dv.z), (0.0, 0.0));
    }

    #[test]
    fn rk4_fixed_point_and_linear_motion() {
        let p = params();
        let rest = VehicleState::new(Vec3::new(1.0, 2.0, 3.0), Vec3::ZERO);
        assert_eq!(integrate_step(&rest, Vec3::ZERO, 0.37, &p), rest);

        let free = p.drag_free();
        let s = VehicleState::new(Vec3::new(-100.0, 4.0, 900.0), Vec3::new(2500.0, 0.0, 0.0));
        let mut cur = s;
        for k in 1..=50 {
            cur = integrate_step(&cur, Vec3::ZERO, 0.01, &free);
            assert_eq!(cur.v, s.v);
            let expect = s.r.x + 2500.0 * 0.01 * k as f64;
            assert!((cur.r.x - expect).abs() <= 1e-9 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn drag_dissipates_against_fine_reference() {
        let p = params();
        let s = VehicleState::new(Vec3::new(0.0, 0.0, 2000.0), Vec3::new(3000.0, 0.0, -400.0));
        let dt = 0.05;
        let coarse = integrate_step(&s, Vec3::ZERO, dt, &p);
        let mut fine = s;
        for _ in 0..10 {
            fine = integrate_step(&fine, Vec3::ZERO, dt / 10.0, &p);
        }
        assert!(coarse.v.norm() < s.v.norm());
        let e = |x: &VehicleState| x.v.dot(x.v);
        assert!((e(&coarse) - e(&fine)).abs() <= 1e-6 * e(&fine));
        assert!(e(&fine) <= e(&s));
    }

    #[test]
    fn pn_zero_cases() {
        let p = params();
        // flying straight at the asset
        let t = VehicleState::new(Vec3::new(10_000.0, 0.0, 5000.0), Vec3::new(-3000.0, 0.0, 0.0));
        assert_eq!(pn_acceleration(&t, ASSET, 3.0, &p), Vec3::ZERO);
        let off = VehicleState::new(Vec3::new(10_000.0, 0.0, 9000.0), Vec3::new(-3000.0, 0.0, 0.0));
        assert_eq!(pn_acceleration(&off, ASSET, 0.0, &p), Vec3::ZERO);
        let inside = VehicleState::new(ASSET + Vec3::new(5.0, 0.0, 0.0), Vec3::new(-3000.0, 0.0, 10.0));
        assert_eq!(pn_acceleration(&inside, ASSET, 3.0, &p), Vec3::ZERO);
    }

    #[test]
    fn pn_planar_matches_scalar_los_rate() {
        // In the x-z plane the LOS angle is atan2(dz, dx); its rate is
        // (dx * ddz - dz * ddx) / R², and true PN turns the velocity at
        // gain * rate * speed, perpendicular to v.
        let p = VehicleParams {
            u_max: 1e9,
            ..params()
        };
        let t = VehicleState::new(Vec3::new(12_000.0, 0.0, 20_000.0), Vec3::new(-2000.0, 0.0, 300.0));
        let dx = ASSET.x - t.r.x;
        let dz = ASSET.z - t.r.z;
        let (ddx, ddz) = (-t.v.x, -t.v.z);
        let rate = (dx * ddz - dz * ddx) / (dx * dx + dz * dz);
        let speed = t.v.norm();
        let a = pn_acceleration(&t, ASSET, 3.0, &p);
        assert!((a.norm() - 3.0 * rate.abs() * speed).abs() < 1e-9 * a.norm());
        assert!(a.dot(t.v).abs() <= 1e-9 * a.norm() * speed);
        assert_eq!(a.y, 0.0);
        // the turn pulls the heading toward the asset (LOS rotating the same way)
        let heading_rate = (t.v.x * a.z - t.v.z * a.x) / (speed * speed);
        assert!(heading_rate * rate > 0.0);

        let clamped = pn_acceleration(&t, ASSET, 3.0, &params());
        assert!(clamped.max_abs() <= params().u_max);
    }

    #[test]
    fn simulation_inside_capture() {
        let p = params();
        let s = VehicleState::new(ASSET + Vec3::new(0.0, 0.0, 10.0), Vec3::new(1.0, 0.0, 0.0));
        let run = simulate_pn_target(s, ASSET, 3.0, 0.01, 10.0, &p, true).unwrap();
        assert!(run.reached);
        assert_eq!(run.t_hit, 0.0);
        assert_eq!(run.trajectory.states.len(), 1);
    }

    #[test]
    fn straight_closure_time() {
        let p = params();
        let (c, d) = (2500.0, 9000.0);
        let s = VehicleState::new(ASSET + Vec3::new(d, 0.0, 0.0), Vec3::new(-c, 0.0, 0.0));
        let run = simulate_pn_target(s, ASSET, 3.0, 0.01, 20.0, &p, false).unwrap();
        assert!(run.reached);
        assert!((run.t_hit - (d - p.r_capture) / c).abs() <= 0.01);
        for st in &run.trajectory.states {
            assert!((st.r.z - ASSET.z).abs() < 1e-6 && st.r.y.abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_step() {
        let s = VehicleState::default();
        assert!(simulate_pn_target(s, ASSET, 3.0, 0.0, 1.0, &params(), true).is_err());
        assert!(simulate_pn_target(s, ASSET, 3.0, -1.0, 1.0, &params(), true).is_err());
    }

    #[test]
    fn offset_heading_reaches_and_gain_speeds_up() {
        let p = params();
        let range = 12_000.0;
        let heading = 30f64.to_radians();
        let speed = 3000.0;
        let r0 = ASSET + Vec3::new(range, 0.0, 0.0);
        // 30 degrees off the line of sight, climbing
        let v0 = Vec3::new(-speed * heading.cos(), 0.0, speed * heading.sin());
        let s = VehicleState::new(r0, v0);
        let g3 = simulate_pn_target(s, ASSET, 3.0, TARGET_DT, TARGET_T_MAX, &p, true).unwrap();
        let g5 = simulate_pn_target(s, ASSET, 5.0, TARGET_DT, TARGET_T_MAX, &p, true).unwrap();
        assert!(g3.reached && g5.reached);
        assert!(g5.t_hit <= g3.t_hit);
    }

    #[test]
    fn interpolation_holds_after_end() {
        let states = vec![
            VehicleState::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(10.0, 0.0, 0.0)),
            VehicleState::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(10.0, 0.0, 0.0)),
        ];
        let tr = Trajectory::new(0.1, states).unwrap();
        assert_eq!(tr.position_at(0.05), Vec3::new(0.5, 0.0, 0.0));
        assert_eq!(tr.position_at(5.0), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(tr.velocity_at(0.05), Vec3::new(10.0, 0.0, 0.0));
        assert_eq!(tr.velocity_at(5.0), Vec3::ZERO);
        assert!(Trajectory::new(0.1, vec![]).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let tr = Trajectory::stationary(Vec3::new(1.0, 2.0, 3.0));
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,rx,ry,rz,vx,vy,vz"));
        assert_eq!(lines.next(), Some("0,1,2,3,0,0,0"));
    }
}
