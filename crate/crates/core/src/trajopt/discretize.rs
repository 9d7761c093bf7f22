//! Linearisation of the time-dilated dynamics `dx/dτ = σ f(x, u)` about a
//! reference, with first-order-hold controls across each interval.

use crate::dynamics::{atmospheric_density, VehicleParams};

pub(crate) type State = [f64; 6];
pub(crate) type Control = [f64; 3];

/// Discrete affine model of one interval:
/// `x₊ = A x + Bm u + Bp u₊ + S σ + z`.
#[derive(Debug, Clone)]
pub(crate) struct IntervalModel {
    pub a: [[f64; 6]; 6],
    pub bm: [[f64; 3]; 6],
    pub bp: [[f64; 3]; 6],
    pub s: [f64; 6],
    pub z: [f64; 6],
    /// Nonlinear end state propagated from the reference node.
    pub end: State,
}

const PACK: usize = 6 + 36 + 18 + 18 + 6;
const PHI: usize = 6;
const PM: usize = 42;
const PP: usize = 60;
const SIG: usize = 78;

struct Drag {
    beta: f64,
    params: VehicleParams,
}

impl Drag {
    /// Returns `f(x, u)` and the coefficients needed for `J_x`.
    fn eval(&self, x: &[f64], u: &Control) -> ([f64; 6], f64, f64) {
        let v = [x[3], x[4], x[5]];
        let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let k = if self.beta > 0.0 {
            self.beta * atmospheric_density(x[2], &self.params)
        } else {
            0.0
        };
        let f = [
            v[0],
            v[1],
            v[2],
            u[0] - k * speed * v[0],
            u[1] - k * speed * v[1],
            u[2] - k * speed * v[2],
        ];
        (f, k, speed)
    }
}

/// `J_x m` for a column `m` given drag factor `k = βρ` and speed.
#[inline]
fn jac_col(x: &[f64], k: f64, speed: f64, h0: f64, m: &[f64], out: &mut [f64]) {
    out[0] = m[3];
    out[1] = m[4];
    out[2] = m[5];
    if k == 0.0 {
        out[3] = 0.0;
        out[4] = 0.0;
        out[5] = 0.0;
        return;
    }
    let v = [x[3], x[4], x[5]];
    let vm = v[0] * m[3] + v[1] * m[4] + v[2] * m[5];
    let along = if speed > 1e-12 { vm / speed } else { 0.0 };
    let alt = k / h0 * speed * m[2];
    for i in 0..3 {
        out[3 + i] = -k * (speed * m[3 + i] + v[i] * along) + alt * v[i];
    }
}

fn deriv(
    drag: &Drag,
    sigma: f64,
    u0: &Control,
    u1: &Control,
    frac: f64,
    y: &[f64; PACK],
    with_sens: bool,
) -> [f64; PACK] {
    let lm = 1.0 - frac;
    let lp = frac;
    let u = [
        lm * u0[0] + lp * u1[0],
        lm * u0[1] + lp * u1[1],
        lm * u0[2] + lp * u1[2],
    ];
    let x = &y[..6];
    let (f, k, speed) = drag.eval(x, &u);
    let mut dy = [0.0; PACK];
    for i in 0..6 {
        dy[i] = sigma * f[i];
    }
    if !with_sens {
        return dy;
    }
    let h0 = drag.params.h0;
    let mut col = [0.0; 6];
    let mut out = [0.0; 6];
    // Φ is stored column-major, 6 columns of 6
    for c in 0..6 {
        col.copy_from_slice(&y[PHI + 6 * c..PHI + 6 * c + 6]);
        jac_col(x, k, speed, h0, &col, &mut out);
        for i in 0..6 {
            dy[PHI + 6 * c + i] = sigma * out[i];
        }
    }
    for (base, w) in [(PM, lm), (PP, lp)] {
        for c in 0..3 {
            col.copy_from_slice(&y[base + 6 * c..base + 6 * c + 6]);
            jac_col(x, k, speed, h0, &col, &mut out);
            for i in 0..6 {
                dy[base + 6 * c + i] = sigma * out[i];
            }
            dy[base + 6 * c + 3 + c] += sigma * w;
        }
    }
    col.copy_from_slice(&y[SIG..SIG + 6]);
    jac_col(x, k, speed, h0, &col, &mut out);
    for i in 0..6 {
        dy[SIG + i] = sigma * out[i] + f[i];
    }
    dy
}

fn rk4_pack(
    drag: &Drag,
    sigma: f64,
    u0: &Control,
    u1: &Control,
    dtau: f64,
    substeps: usize,
    y: &mut [f64; PACK],
    with_sens: bool,
) {
    let h = 1.0 / substeps as f64;
    let len = if with_sens { PACK } else { 6 };
    for k in 0..substeps {
        let f0 = k as f64 * h;
        let k1 = deriv(drag, sigma, u0, u1, f0, y, with_sens);
        let mut tmp = *y;
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * h * dtau * k1[i];
        }
        let k2 = deriv(drag, sigma, u0, u1, f0 + 0.5 * h, &tmp, with_sens);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * h * dtau * k2[i];
        }
        let k3 = deriv(drag, sigma, u0, u1, f0 + 0.5 * h, &tmp, with_sens);
        for i in 0..len {
            tmp[i] = y[i] + h * dtau * k3[i];
        }
        let k4 = deriv(drag, sigma, u0, u1, f0 + h, &tmp, with_sens);
        for i in 0..len {
            y[i] += h * dtau / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
    }
}

/// Linearises one interval of normalised length `dtau` about `(x0, u0, u1, σ)`.
pub(crate) fn linearize_interval(
    params: &VehicleParams,
    x0: &State,
    u0: &Control,
    u1: &Control,
    sigma: f64,
    dtau: f64,
    substeps: usize,
) -> IntervalModel {
    let drag = Drag {
        beta: params.beta,
        params: *params,
    };
    let mut y = [0.0; PACK];
    y[..6].copy_from_slice(x0);
    for i in 0..6 {
        y[PHI + 6 * i + i] = 1.0;
    }
    rk4_pack(&drag, sigma, u0, u1, dtau, substeps, &mut y, true);

    let mut m = IntervalModel {
        a: [[0.0; 6]; 6],
        bm: [[0.0; 3]; 6],
        bp: [[0.0; 3]; 6],
        s: [0.0; 6],
        z: [0.0; 6],
        end: [0.0; 6],
    };
    m.end.copy_from_slice(&y[..6]);
    for i in 0..6 {
        for j in 0..6 {
            m.a[i][j] = y[PHI + 6 * j + i];
        }
        for j in 0..3 {
            m.bm[i][j] = y[PM + 6 * j + i];
            m.bp[i][j] = y[PP + 6 * j + i];
        }
        m.s[i] = y[SIG + i];
    }
    for i in 0..6 {
        let mut lin = m.s[i] * sigma;
        for j in 0..6 {
            lin += m.a[i][j] * x0[j];
        }
        for j in 0..3 {
            lin += m.bm[i][j] * u0[j] + m.bp[i][j] * u1[j];
        }
        m.z[i] = m.end[i] - lin;
    }
    m
}

/// Nonlinear propagation only.
pub(crate) fn propagate_interval(
    params: &VehicleParams,
    x0: &State,
    u0: &Control,
    u1: &Control,
    sigma: f64,
    dtau: f64,
    substeps: usize,
) -> State {
    let drag = Drag {
        beta: params.beta,
        params: *params,
    };
    let mut y = [0.0; PACK];
    y[..6].copy_from_slice(x0);
    rk4_pack(&drag, sigma, u0, u1, dtau, substeps, &mut y, false);
    let mut out = [0.0; 6];
    out.copy_from_slice(&y[..6]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> VehicleParams {
        VehicleParams {
            beta: 0.02,
            ..VehicleParams::default()
        }
    }

    /// Central finite differences of the nonlinear interval map.
    #[test]
    fn sensitivities_match_finite_differences() {
        let p = params();
        let x0 = [-9000.0, 10.0, 800.0, 2800.0, -40.0, 150.0];
        let u0 = [300.0, -100.0, 500.0];
        let u1 = [-200.0, 50.0, 700.0];
        let sigma = 4.0;
        let dtau = 1.0 / 30.0;
        let steps = 6;
        let m = linearize_interval(&p, &x0, &u0, &u1, sigma, dtau, steps);
        let prop = |x: &State, a: &Control, b: &Control, s: f64| propagate_interval(&p, x, a, b, s, dtau, steps);
        for j in 0..6 {
            let h = if j < 3 { 1.0 } else { 0.5 };
            let (mut xp, mut xm) = (x0, x0);
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (prop(&xp, &u0, &u1, sigma), prop(&xm, &u0, &u1, sigma));
            for i in 0..6 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - m.a[i][j]).abs() < 1e-6 * (1.0 + fd.abs()), "A[{i}][{j}] {fd} vs {}", m.a[i][j]);
            }
        }
        for j in 0..3 {
            let h = 1.0;
            for (which, b) in [(0, &m.bm), (1, &m.bp)] {
                let (mut up, mut um) = if which == 0 { (u0, u0) } else { (u1, u1) };
                up[j] += h;
                um[j] -= h;
                let (fp, fm) = if which == 0 {
                    (prop(&x0, &up, &u1, sigma), prop(&x0, &um, &u1, sigma))
                } else {
                    (prop(&x0, &u0, &up, sigma), prop(&x0, &u0, &um, sigma))
                };
                for i in 0..6 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!((fd - b[i][j]).abs() < 1e-7 * (1.0 + fd.abs()));
                }
            }
        }
        let h = 1e-3;
        let (fp, fm) = (prop(&x0, &u0, &u1, sigma + h), prop(&x0, &u0, &u1, sigma - h));
        for i in 0..6 {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            assert!((fd - m.s[i]).abs() < 1e-5 * (1.0 + fd.abs()));
        }
        // affine model reproduces the nonlinear end state at the reference
        for i in 0..6 {
            let mut lin = m.z[i] + m.s[i] * sigma;
            for j in 0..6 {
                lin += m.a[i][j] * x0[j];
            }
            for j in 0..3 {
                lin += m.bm[i][j] * u0[j] + m.bp[i][j] * u1[j];
            }
            assert!((lin - m.end[i]).abs() < 1e-6 * (1.0 + m.end[i].abs()));
        }
    }

    #[test]
    fn drag_free_interval_is_exact() {
        let p = params().drag_free();
        let x0 = [0.0, 0.0, 100.0, 1000.0, 0.0, 0.0];
        let u = [10.0, 0.0, -4.0];
        let end = propagate_interval(&p, &x0, &u, &u, 2.0, 0.5, 1);
        // one physical second of constant acceleration
        assert!((end[0] - (1000.0 + 5.0)).abs() < 1e-9);
        assert!((end[2] - (100.0 - 2.0)).abs() < 1e-9);
        assert!((end[3] - 1010.0).abs() < 1e-9);
    }
}
