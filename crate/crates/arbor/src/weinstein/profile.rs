//! One-dimensional profiles behind the model fields and their Lyapunov
//! functions.
//!
//! Everything is written for the `+` orientation in the pair coordinates
//! `(x, s)`; the `-` factor uses `s = -y`.

use std::sync::OnceLock;

/// C^3 step: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn step(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * t * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t)
}

pub fn step_d(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let u = t * (1.0 - t);
    140.0 * u * u * u
}

/// C^m step `I_t(m+1, m+1)` with its first two derivatives.
pub fn step_smooth(m: u32, t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let n = 2 * m + 1;
    let binom = |n: u32, k: u32| (1..=k).fold(1.0, |acc, i| acc * f64::from(n - k + i) / f64::from(i));
    let val = (m + 1..=n).map(|j| binom(n, j) * t.powi(j as i32) * (1.0 - t).powi((n - j) as i32)).sum();
    let c = f64::from(n) * binom(2 * m, m);
    let u = t * (1.0 - t);
    let d2 = if m == 0 { 0.0 } else { c * f64::from(m) * u.powi(m as i32 - 1) * (1.0 - 2.0 * t) };
    (val, c * u.powi(m as i32), d2)
}

/// Step rising over `[a, b]`, with derivative.
fn rise(z: f64, a: f64, b: f64) -> (f64, f64) {
    let w = b - a;
    (step((z - a) / w), step_d((z - a) / w) / w)
}

/// Birth-death coefficient: `v = c (s-1)(s-2)` on the core of the band.
pub const BIRTH_DEATH: f64 = 0.5;
/// Lower ramp of the band.
pub const BAND_LO: (f64, f64) = (0.62, 0.85);
/// Upper ramp of the band.
pub const BAND_HI: (f64, f64) = (2.15, 2.75);
/// Plateau and outer radius of the `x` cutoff of the factor tube.
pub const TUBE_X: (f64, f64) = (0.25, 0.6);
/// Plateau and outer radius of the cotangent splice around `y = 0`.
pub const COTANGENT_Y: (f64, f64) = (0.15, 0.3);
/// Ramp of the band gate.
pub const GATE: (f64, f64) = (0.3, 0.62);
/// Blend of the factor potential back to the base one in `x`.
const BLEND_X: (f64, f64) = (0.6, 1.2);
/// `x^2` weight of the potential on the gate ramp.
pub const GATE_WEIGHT: f64 = 1e-4;

const TABLE_STEP: f64 = 1e-4;
const KAPPA_FROM: f64 = 2.05;
const KAPPA_RAMP: f64 = 0.1;

/// Band bump `S(s)` and its derivative.
fn band(s: f64) -> (f64, f64) {
    let (a, da) = rise(s, BAND_LO.0, BAND_LO.1);
    let (b, db) = rise(s, BAND_HI.0, BAND_HI.1);
    (a * (1.0 - b), da * (1.0 - b) - a * db)
}

/// `s`-velocity of the factor on its axis, and its derivative.
pub fn axis_speed(s: f64) -> (f64, f64) {
    let (b, db) = band(s);
    let q = BIRTH_DEATH * (s - 1.0) * (s - 2.0);
    let dq = BIRTH_DEATH * (2.0 * s - 3.0);
    ((1.0 - b) * s / 2.0 + b * q, -db * s / 2.0 + (1.0 - b) / 2.0 + db * q + b * dq)
}

/// `k(s) = s/2 - v(s)` with derivative; the Hamiltonian is `M(x) k(s)`.
pub fn k(s: f64) -> (f64, f64) {
    let (v, dv) = axis_speed(s);
    (s / 2.0 - v, 0.5 - dv)
}

/// `M(x) = x m(x)` with `m` the tube cutoff, and `M'`.
pub fn tube(x: f64) -> (f64, f64) {
    let (r, dr) = rise(x.abs(), TUBE_X.0, TUBE_X.1);
    let m = 1.0 - r;
    (x * m, m - x.abs() * dr)
}

/// Cotangent splice weight `chi(y)` and derivative.
pub fn cotangent_weight(y: f64) -> (f64, f64) {
    let (r, dr) = rise(y.abs(), COTANGENT_Y.0, COTANGENT_Y.1);
    (1.0 - r, -dr * y.signum())
}

/// Band gate `b(s)` and derivative.
pub fn gate(s: f64) -> (f64, f64) {
    rise(s, GATE.0, GATE.1)
}

/// Blend `zeta(x)` and derivative.
pub fn blend(x: f64) -> (f64, f64) {
    let (r, dr) = rise(x.abs(), BLEND_X.0, BLEND_X.1);
    (r, dr * x.signum())
}

fn ramp(z: f64) -> (f64, f64) {
    if z <= 0.0 {
        (0.0, 0.0)
    } else if z < KAPPA_RAMP {
        (z * z / (2.0 * KAPPA_RAMP), z / KAPPA_RAMP)
    } else {
        (z - KAPPA_RAMP / 2.0, 1.0)
    }
}

/// Tabulated antiderivative with exact node slopes, read by cubic Hermite.
struct Table {
    lo: f64,
    vals: Vec<f64>,
    slopes: Vec<f64>,
}

impl Table {
    fn integrate(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = ((hi - lo) / TABLE_STEP).round() as usize;
        let slopes: Vec<f64> = (0..=n).map(|i| f(lo + i as f64 * TABLE_STEP)).collect();
        let mut vals = vec![0.0; n + 1];
        for i in 1..=n {
            vals[i] = vals[i - 1] + 0.5 * TABLE_STEP * (slopes[i - 1] + slopes[i]);
        }
        Self { lo, vals, slopes }
    }

    fn last(&self) -> f64 {
        *self.vals.last().unwrap_or(&0.0)
    }

    fn at(&self, s: f64) -> f64 {
        let n = self.vals.len() - 1;
        let u = (s - self.lo) / TABLE_STEP;
        if u <= 0.0 {
            return self.vals[0];
        }
        if u >= n as f64 {
            return self.vals[n];
        }
        let i = (u.floor() as usize).min(n - 1);
        let t = u - i as f64;
        let (h00, h10, h01, h11) = (
            2.0 * t.powi(3) - 3.0 * t * t + 1.0,
            t.powi(3) - 2.0 * t * t + t,
            -2.0 * t.powi(3) + 3.0 * t * t,
            t.powi(3) - t * t,
        );
        h00 * self.vals[i]
            + h10 * TABLE_STEP * self.slopes[i]
            + h01 * self.vals[i + 1]
            + h11 * TABLE_STEP * self.slopes[i + 1]
    }
}

/// Weights of the factor potential `A(s) x^2 + y^2 - (1 - zeta(x)) D(s)`.
pub struct Weights {
    ln_a0: f64,
    kappa: Table,
    mu0: f64,
    beta: f64,
    dip: Table,
}

fn kappa(s: f64) -> f64 {
    if s <= KAPPA_FROM {
        return 0.0;
    }
    let (v, dv) = axis_speed(s);
    2.0 * ramp(dv - 0.8).0 / v
}

impl Weights {
    fn new() -> Self {
        let kappa = Table::integrate(KAPPA_FROM, BAND_HI.1, kappa);
        let ln_a0 = (0.5f64).ln() - kappa.last();
        let mu0 = ln_a0.exp() / 20.0;
        // dip slope 2s - mu v, with mu = base + beta k R; beta makes the dip close at the band top
        let parts = |s: f64| {
            let v = axis_speed(s).0;
            let (q_up, _) = rise(s, 0.9, 0.95);
            let (q_dn, _) = rise(s, 2.05, 2.1);
            let base = 4.0 - (4.0 - mu0) * q_up * (1.0 - q_dn);
            (2.0 * s - base * v, k(s).0 * rise(s, 2.1, 2.2).0 * v)
        };
        let fixed = Table::integrate(BAND_LO.0, BAND_HI.1, |s| parts(s).0).last();
        let extra = Table::integrate(BAND_LO.0, BAND_HI.1, |s| parts(s).1).last();
        let beta = fixed / extra;
        let dip = Table::integrate(BAND_LO.0, BAND_HI.1, |s| {
            let (a, b) = parts(s);
            a - beta * b
        });
        Self { ln_a0, kappa, mu0, beta, dip }
    }

    pub fn get() -> &'static Self {
        static W: OnceLock<Weights> = OnceLock::new();
        W.get_or_init(Self::new)
    }

    /// Weight on the band core, `A(1) = A(2)`.
    pub fn core_weight(&self) -> f64 {
        self.ln_a0.exp()
    }

    /// `mu` in `G' = mu v`, for reference.
    pub fn dip_rate(&self) -> (f64, f64) {
        (self.mu0, self.beta)
    }

    /// `A(s)` and `A'(s)` above the cotangent plateau.
    fn upper(&self, s: f64) -> (f64, f64) {
        let eta = GATE_WEIGHT.ln();
        let (r1, d1) = rise(s, GATE.1, 0.95);
        let (r2, d2) = rise(s, 2.8, 3.2);
        let kv = if s <= KAPPA_FROM { 0.0 } else { self.kappa.at(s) };
        let ln = eta + (self.ln_a0 - eta) * r1 + kv + std::f64::consts::LN_2 * r2;
        let dln = (self.ln_a0 - eta) * d1 + kappa(s) + std::f64::consts::LN_2 * d2;
        let a = ln.exp();
        (a, a * dln)
    }

    /// `x^2` weight for a pair whose `|y| < 0.15` region carries the cotangent field.
    pub fn a_spliced(&self, s: f64) -> (f64, f64) {
        if s >= COTANGENT_Y.1 {
            return self.upper(s);
        }
        if s > -COTANGENT_Y.1 {
            let (c, dc) = cotangent_weight(s);
            return (GATE_WEIGHT * (1.0 - c), -GATE_WEIGHT * dc);
        }
        let (r, dr) = rise(-s, COTANGENT_Y.1, 0.75);
        (GATE_WEIGHT + (1.0 - GATE_WEIGHT) * r, -(1.0 - GATE_WEIGHT) * dr)
    }

    /// `x^2` weight for a standalone factor (no cotangent plateau).
    pub fn a_factor(&self, s: f64) -> (f64, f64) {
        let (a, da) = self.a_spliced(s);
        let (c, dc) = cotangent_weight(s);
        (a + GATE_WEIGHT * c, da + GATE_WEIGHT * dc)
    }

    /// Dip `D(s) >= 0` and `D'(s)`.
    pub fn dip(&self, s: f64) -> (f64, f64) {
        if s <= BAND_LO.0 || s >= BAND_HI.1 {
            return (0.0, 0.0);
        }
        let v = axis_speed(s).0;
        let (q_up, _) = rise(s, 0.9, 0.95);
        let (q_dn, _) = rise(s, 2.05, 2.1);
        let mu = 4.0 - (4.0 - self.mu0) * q_up * (1.0 - q_dn) + self.beta * k(s).0 * rise(s, 2.1, 2.2).0;
        (self.dip.at(s), 2.0 * s - mu * v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_step_derivatives() {
        for m in [3, 6] {
            for i in 1..100 {
                let t = i as f64 / 100.0;
                let (_, d, dd) = step_smooth(m, t);
                assert!((d - (step_smooth(m, t + 1e-6).0 - step_smooth(m, t - 1e-6).0) / 2e-6).abs() < 1e-5);
                assert!((dd - (step_smooth(m, t + 1e-6).1 - step_smooth(m, t - 1e-6).1) / 2e-6).abs() < 1e-4);
            }
            assert!((step_smooth(m, 0.5).0 - 0.5).abs() < 1e-14);
        }
        assert!((step_smooth(3, 0.3).0 - step(0.3)).abs() < 1e-14);
    }

    #[test]
    fn axis_speed_zeros() {
        assert_eq!(axis_speed(1.0).0, 0.0);
        assert_eq!(axis_speed(2.0).0, 0.0);
        assert!(axis_speed(1.5).0 < 0.0 && axis_speed(0.7).0 > 0.0 && axis_speed(2.5).0 > 0.0);
        assert_eq!(axis_speed(3.0).0, 1.5);
        for i in 1..400 {
            let s = i as f64 * 0.01;
            let (_, dv) = axis_speed(s);
            let fd = (axis_speed(s + 1e-6).0 - axis_speed(s - 1e-6).0) / 2e-6;
            assert!((dv - fd).abs() < 1e-6, "s={s}");
        }
    }

    #[test]
    fn weights_are_consistent() {
        let w = Weights::get();
        assert!(w.core_weight() > GATE_WEIGHT && w.core_weight() < 0.1);
        let mut worst_dip = 0.0f64;
        for i in 0..5000 {
            let s = -1.0 + i as f64 * 0.001;
            let (a, da) = w.a_spliced(s);
            let fd = (w.a_spliced(s + 1e-6).0 - w.a_spliced(s - 1e-6).0) / 2e-6;
            assert!((da - fd).abs() < 1e-5 * (1.0 + a), "s={s} {da} {fd}");
            assert!(a >= 0.0);
            if s > 0.0 {
                assert!(a + s * da / 2.0 >= -1e-12, "radial monotonicity at {s}");
            }
            let (d, dd) = w.dip(s);
            worst_dip = worst_dip.min(d);
            if s > 0.7 && s < 2.7 {
                let fd = (w.dip(s + 1e-5).0 - w.dip(s - 1e-5).0) / 2e-5;
                assert!((dd - fd).abs() < 1e-4, "dip slope at {s}: {dd} vs {fd}");
            }
        }
        assert!(worst_dip > -1e-9, "{worst_dip}");
        assert!((w.a_spliced(3.5).0 - 1.0).abs() < 1e-9);
        assert!((w.dip(2.7499).0).abs() < 1e-6);
    }
}
