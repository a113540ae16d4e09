//! The planar function `f(a, b)` used by the smoothing recursion.
//!
//! The zero curve runs in from `a = +inf` along `b = 0`, turns clockwise from
//! `a = 1` onward and crosses `a = 0` at `(0, h)` with vertical tangent, then
//! mirrors itself through that point and leaves along `b = 2h`. The turn ends
//! in a long, almost vertical tail so that the curve is nearly parallel to
//! `a = 0` wherever it is close to it. It is a graph
//! over `u = (a - b)/sqrt 2`, and `f` measures the offset along `(1, 1)`:
//! every level set `f = c` is the zero curve shifted by `c (1, 1)`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, SQRT_2};
use std::sync::OnceLock;

use super::HypersurfaceError;

const TABLE_INTERVALS: usize = 1024;

// 8-point Gauss-Legendre rule on [-1, 1].
const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

pub const MAX_SHARPNESS: f64 = 10.0;

/// Slow tail at the end of the turn: its share of the total angle, its share
/// of the parameter range, exponential decay rate, onset ramp width and the
/// point where the final cutoff starts. The angle left over decays
/// exponentially along most of the tail, which keeps the slope of the curve
/// below a fixed multiple of its distance to `a = 0`.
const TAIL_WEIGHT: f64 = 0.15;
const TAIL_WIDTH: f64 = 0.7;
const TAIL_DECAY: f64 = 8.0;
const TAIL_RAMP: f64 = 0.2;
const TAIL_CUTOFF: f64 = 0.9;

fn gauss<F: Fn(f64) -> f64>(lo: f64, hi: f64, f: F) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    GL_X.iter().zip(GL_W).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Smooth step, flat to all orders at 0 and 1, with slope `2k` at 1/2.
pub fn smooth_step(t: f64, k: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let h = k / t - k / (1.0 - t);
        if h > 700.0 {
            0.0
        } else {
            1.0 / (1.0 + h.exp())
        }
    }
}

/// `1 - smooth_step(t, k)` without cancellation near `t = 1`.
fn smooth_step_rest(t: f64, k: f64) -> f64 {
    smooth_step(1.0 - t, k)
}

const RAMP_NODES: usize = 512;
const PSI_INTERVALS: usize = 1 << 16;

#[cfg(test)]
fn step_integral_direct(z: f64) -> f64 {
    let n = 256;
    (0..n).map(|i| gauss(z * i as f64 / n as f64, z * (i + 1) as f64 / n as f64, |v| smooth_step(v, 1.0))).sum()
}

/// `int_0^z smooth_step(v, 1) dv`; the step is symmetric, so past 1 it is `z - 1/2`.
/// Inside the unit interval it is a cubic Hermite interpolant of a table.
fn step_integral(z: f64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    if z <= 0.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return z - 0.5;
    }
    let table = TABLE.get_or_init(|| {
        let dz = 1.0 / RAMP_NODES as f64;
        let mut t = vec![0.0; RAMP_NODES + 1];
        for i in 0..RAMP_NODES {
            t[i + 1] = t[i] + gauss(i as f64 * dz, (i + 1) as f64 * dz, |v| smooth_step(v, 1.0));
        }
        t
    });
    let dz = 1.0 / RAMP_NODES as f64;
    let i = ((z / dz) as usize).min(RAMP_NODES - 1);
    let (z0, z1) = (i as f64 * dz, (i + 1) as f64 * dz);
    let r = (z - z0) / dz;
    let (h00, h10, h01, h11) = (
        2.0 * r.powi(3) - 3.0 * r * r + 1.0,
        r.powi(3) - 2.0 * r * r + r,
        -2.0 * r.powi(3) + 3.0 * r * r,
        r.powi(3) - r * r,
    );
    h00 * table[i] + h10 * dz * smooth_step(z0, 1.0) + h01 * table[i + 1] + h11 * dz * smooth_step(z1, 1.0)
}

/// `1 - turn_step(t, k)`, accurate where the turn is nearly done.
fn turn_rest(t: f64, k: f64) -> f64 {
    let main = (1.0 - TAIL_WEIGHT) * smooth_step_rest(t / (1.0 - TAIL_WIDTH), k);
    let u = (t - (1.0 - TAIL_WIDTH)) / TAIL_WIDTH;
    if u <= 0.0 {
        return main + TAIL_WEIGHT;
    }
    let ramp = TAIL_RAMP * step_integral(u / TAIL_RAMP);
    let cut = smooth_step_rest((u - TAIL_CUTOFF) / (1.0 - TAIL_CUTOFF), 1.0);
    main + TAIL_WEIGHT * cut * (-TAIL_DECAY * ramp).exp()
}

/// Angle schedule of the turn: a main step of sharpness `k` followed by a tail.
pub fn turn_step(t: f64, k: f64) -> f64 {
    1.0 - turn_rest(t, k)
}

#[derive(Debug, Clone)]
pub struct SmoothingProfile {
    sharpness: f64,
    ell: f64,
    height: f64,
    h: f64,
    /// Curve positions at `s = i h`, first half only.
    table: Vec<[f64; 2]>,
    /// `f(w, 0)` and its `a`-derivative at `w = psi_lo + i psi_dw`.
    psi: Vec<[f64; 2]>,
    psi_lo: f64,
    psi_dw: f64,
}

/// A point of the zero curve with its co-orienting unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub s: f64,
    pub p: [f64; 2],
    pub normal: [f64; 2],
}

impl SmoothingProfile {
    pub fn new(sharpness: f64) -> Result<Self, HypersurfaceError> {
        if !(sharpness > 0.0 && sharpness <= MAX_SHARPNESS) {
            return Err(HypersurfaceError::Parameter(format!(
                "sharpness must lie in (0, {MAX_SHARPNESS}], got {sharpness}"
            )));
        }
        let k = sharpness;
        let n = TABLE_INTERVALS;
        let dt = 1.0 / n as f64;
        let cos_int: f64 =
            (0..n).map(|i| gauss(i as f64 * dt, (i + 1) as f64 * dt, |t| (FRAC_PI_2 * turn_rest(t, k)).sin())).sum();
        let ell = 1.0 / cos_int;
        let h = ell / n as f64;
        // heights accumulate from the flat ray, a-coordinates back from the
        // crossing so that they stay positive right up to it
        let mut table = vec![[0.0, 0.0]; n + 1];
        for i in 0..n {
            let (lo, hi) = (i as f64 * h, (i + 1) as f64 * h);
            table[i + 1][1] = table[i][1] + gauss(lo, hi, |s| dir_half(s, ell, k)[1]);
        }
        for i in (0..n).rev() {
            let (lo, hi) = (i as f64 * h, (i + 1) as f64 * h);
            table[i][0] = table[i + 1][0] - gauss(lo, hi, |s| dir_half(s, ell, k)[0]);
        }
        let height = table[n][1];
        let psi_lo = -1.0 - 2.0 * height;
        let psi_dw = (1.0 - psi_lo) / PSI_INTERVALS as f64;
        let mut p = Self { sharpness, ell, height, h, table, psi: Vec::new(), psi_lo, psi_dw };
        p.psi = (0..=PSI_INTERVALS)
            .map(|i| {
                let (v, g) = p.eval_exact(psi_lo + i as f64 * psi_dw, 0.0);
                [v, g[0]]
            })
            .collect();
        Ok(p)
    }

    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    /// Height `h` of the crossing point `(0, h)`.
    pub fn crossing_height(&self) -> f64 {
        self.height
    }

    /// Arclength of one turn; the crossing of `a = 0` sits at `s = ell`.
    pub fn turn_length(&self) -> f64 {
        self.ell
    }

    /// Tangent angle of the zero curve at arclength `s` (from `(1, 0)`).
    pub fn theta(&self, s: f64) -> f64 {
        if s <= 0.0 || s >= 2.0 * self.ell {
            PI
        } else if s <= self.ell {
            theta_half(s, self.ell, self.sharpness)
        } else {
            theta_half(2.0 * self.ell - s, self.ell, self.sharpness)
        }
    }

    fn gamma_half(&self, s: f64) -> [f64; 2] {
        if s >= self.ell {
            return self.table[TABLE_INTERVALS];
        }
        let i = ((s / self.h) as usize).min(TABLE_INTERVALS - 1);
        let lo = i as f64 * self.h;
        if s == lo {
            return self.table[i];
        }
        let (ell, k) = (self.ell, self.sharpness);
        [
            self.table[i + 1][0] - gauss(s, lo + self.h, |t| dir_half(t, ell, k)[0]),
            self.table[i][1] + gauss(lo, s, |t| dir_half(t, ell, k)[1]),
        ]
    }

    /// Point of the zero curve at arclength `s`.
    pub fn gamma(&self, s: f64) -> [f64; 2] {
        let two = 2.0 * self.ell;
        if s <= 0.0 {
            [1.0 - s, 0.0]
        } else if s >= two {
            [-1.0 - (s - two), 2.0 * self.height]
        } else if s <= self.ell {
            self.gamma_half(s)
        } else {
            let q = self.gamma_half(two - s);
            [-q[0], 2.0 * self.height - q[1]]
        }
    }

    fn u_half(&self, s: f64) -> f64 {
        let p = self.gamma_half(s);
        (p[0] - p[1]) * FRAC_1_SQRT_2
    }

    /// Arclength of the curve point whose `u` coordinate equals `u`.
    pub fn arclength_at(&self, u: f64) -> f64 {
        if u >= FRAC_1_SQRT_2 {
            return 1.0 - SQRT_2 * u;
        }
        let top = 1.0 + 2.0 * self.height;
        if u <= -top * FRAC_1_SQRT_2 {
            return 2.0 * self.ell - top - SQRT_2 * u;
        }
        if u < -self.height * FRAC_1_SQRT_2 {
            return 2.0 * self.ell - self.arclength_half(-u - SQRT_2 * self.height);
        }
        self.arclength_half(u)
    }

    fn arclength_half(&self, u: f64) -> f64 {
        let uat = |i: usize| (self.table[i][0] - self.table[i][1]) * FRAC_1_SQRT_2;
        // u decreases along the table
        let (mut lo, mut hi) = (0usize, TABLE_INTERVALS);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if uat(mid) >= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (s0, s1) = (lo as f64 * self.h, hi as f64 * self.h);
        let (u0, u1) = (uat(lo), uat(hi));
        let mut s = if u0 == u1 { s0 } else { s0 + (u - u0) / (u1 - u0) * (s1 - s0) };
        for _ in 0..8 {
            let th = self.theta(s);
            let du = (th.cos() - th.sin()) * FRAC_1_SQRT_2;
            let step = (self.u_half(s) - u) / du;
            s = (s - step).clamp(s0, s1);
            if step.abs() < 1e-15 {
                break;
            }
        }
        s
    }

    /// Value and gradient of `f` at `(a, b)`. Since `f(a, b) = b + f(a - b, 0)`,
    /// this is a cubic Hermite lookup in `a - b`.
    pub fn eval(&self, a: f64, b: f64) -> (f64, [f64; 2]) {
        let w = a - b;
        if w >= 1.0 {
            return (b, [0.0, 1.0]);
        }
        if w <= self.psi_lo {
            return (b - 2.0 * self.height, [0.0, 1.0]);
        }
        let x = (w - self.psi_lo) / self.psi_dw;
        let i = (x as usize).min(PSI_INTERVALS - 1);
        let r = x - i as f64;
        let ([p0, d0], [p1, d1]) = (self.psi[i], self.psi[i + 1]);
        let (m0, m1) = (d0 * self.psi_dw, d1 * self.psi_dw);
        let (r2, r3) = (r * r, r * r * r);
        let v =
            (2.0 * r3 - 3.0 * r2 + 1.0) * p0 + (r3 - 2.0 * r2 + r) * m0 + (3.0 * r2 - 2.0 * r3) * p1 + (r3 - r2) * m1;
        let dv = ((6.0 * r2 - 6.0 * r) * (p0 - p1) + (3.0 * r2 - 4.0 * r + 1.0) * m0 + (3.0 * r2 - 2.0 * r) * m1)
            / self.psi_dw;
        (b + v, [dv, 1.0 - dv])
    }

    /// Direct evaluation through the arclength inversion of the zero curve.
    pub fn eval_exact(&self, a: f64, b: f64) -> (f64, [f64; 2]) {
        if a - b >= 1.0 {
            return (b, [0.0, 1.0]);
        }
        if a - b <= -1.0 - 2.0 * self.height {
            return (b - 2.0 * self.height, [0.0, 1.0]);
        }
        let u = (a - b) * FRAC_1_SQRT_2;
        let s = self.arclength_at(u);
        let p = self.gamma(s);
        let value = 0.5 * (a + b - p[0] - p[1]);
        let th = self.theta(s);
        let (c, sn) = (th.cos(), th.sin());
        let slope = (c + sn) / (c - sn);
        (value, [0.5 * (1.0 - slope), 0.5 * (1.0 + slope)])
    }

    pub fn value(&self, a: f64, b: f64) -> f64 {
        self.eval(a, b).0
    }

    /// True where the level curve through `(a, b)` has not yet crossed its
    /// vertical tangency; strata built from `f` are cut off there.
    pub fn before_crossing(&self, a: f64, b: f64) -> bool {
        a - b >= -self.height
    }

    /// Zero curve sampled by arclength on `[s_min, s_max]`.
    pub fn zero_polyline(&self, s_min: f64, s_max: f64, ds: f64) -> Vec<CurvePoint> {
        let n = ((s_max - s_min) / ds).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| {
                let s = s_min + (s_max - s_min) * i as f64 / n as f64;
                let th = self.theta(s);
                CurvePoint { s, p: self.gamma(s), normal: [th.sin(), -th.cos()] }
            })
            .collect()
    }
}

fn theta_half(s: f64, ell: f64, k: f64) -> f64 {
    PI - FRAC_PI_2 * turn_step(s / ell, k)
}

/// Unit tangent `(cos theta, sin theta)` on the first half, computed from the
/// remaining turn so the a-component keeps its sign near the crossing.
fn dir_half(s: f64, ell: f64, k: f64) -> [f64; 2] {
    let phi = FRAC_PI_2 * turn_rest(s / ell, k);
    [-phi.sin(), phi.cos()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prof() -> SmoothingProfile {
        SmoothingProfile::new(1.0).unwrap()
    }

    #[test]
    fn spec_points() {
        let p = prof();
        assert_eq!(p.value(2.0, 0.0), 0.0);
        assert!((p.value(2.0, 0.5) - 0.5).abs() < 1e-15);
        let th = p.theta(p.turn_length());
        assert!(th.cos().abs() < 1e-9 && (th.sin() - 1.0).abs() < 1e-9);
        let c = p.gamma(p.turn_length());
        assert_eq!(c, [0.0, p.crossing_height()]);
        assert!(p.crossing_height() > 3.0 && p.crossing_height() < 4.0);
    }

    #[test]
    fn crossing_lands_on_axis() {
        // independent check: adaptive Simpson of the angle integrals
        for k in [0.3, 1.0, 4.0] {
            let p = SmoothingProfile::new(k).unwrap();
            let ell = p.turn_length();
            let n = 200_000;
            let (mut ax, mut bx) = (1.0, 0.0);
            let h = ell / n as f64;
            for i in 0..n {
                if i == n / 4 {
                    let q = p.gamma(ell / 4.0);
                    assert!((q[0] - ax).abs() < 1e-10 && (q[1] - bx).abs() < 1e-10);
                }
                let t0 = i as f64 * h;
                let f = |s: f64| theta_half(s, ell, k);
                let (c0, cm, c1) = (f(t0), f(t0 + h / 2.0), f(t0 + h));
                ax += h / 6.0 * (c0.cos() + 4.0 * cm.cos() + c1.cos());
                bx += h / 6.0 * (c0.sin() + 4.0 * cm.sin() + c1.sin());
            }
            assert!(ax.abs() < 1e-10 && (bx - p.crossing_height()).abs() < 1e-10, "{k}: {ax} {bx}");
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let p = prof();
        for &(a, b) in &[(0.4, 0.3), (0.05, 0.9), (-0.5, 1.7), (1.3, -0.2), (2.0, 2.0), (-2.0, -1.0), (0.0, 1.0)] {
            let (_, g) = p.eval(a, b);
            let e = 1e-6;
            let da = (p.value(a + e, b) - p.value(a - e, b)) / (2.0 * e);
            let db = (p.value(a, b + e) - p.value(a, b - e)) / (2.0 * e);
            assert!((g[0] - da).abs() < 1e-7 && (g[1] - db).abs() < 1e-7, "{a} {b}: {g:?} vs {da} {db}");
        }
        let (_, g) = p.eval(0.0, p.crossing_height());
        assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
    }

    #[test]
    fn zero_curve_and_levels() {
        let p = prof();
        for cp in p.zero_polyline(-1.0, 2.0 * p.turn_length() + 1.0, 0.01) {
            let (v, g) = p.eval(cp.p[0], cp.p[1]);
            assert!(v.abs() < 1e-12, "{cp:?} {v}");
            let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
            assert!((g[0] / n - cp.normal[0]).abs() < 1e-9 && (g[1] / n - cp.normal[1]).abs() < 1e-9);
            // level sets are translates along (1, 1)
            assert!((p.value(cp.p[0] + 0.7, cp.p[1] + 0.7) - 0.7).abs() < 1e-12);
        }
        // flat part is exactly b = 0, and f is positive above it
        for a in [1.0, 1.5, 2.9] {
            assert_eq!(p.value(a, 0.0), 0.0);
            assert!(p.value(a, 0.1) > 0.0);
        }
        // exactly one crossing of a = 0 among the curve points
        let pts = p.zero_polyline(-1.0, 2.0 * p.turn_length() + 1.0, 1e-3);
        let first_half: Vec<_> = pts.iter().filter(|c| c.s < p.turn_length() - 1e-9).collect();
        // the last stretch of the tail is below the smallest positive double
        assert!(first_half.iter().all(|c| c.p[0] >= 0.0));
        assert!(first_half.iter().filter(|c| c.s < p.turn_length() - 1e-2).all(|c| c.p[0] > 0.0));
        let second: Vec<_> = pts.iter().filter(|c| c.s > p.turn_length() + 1e-9).collect();
        assert!(second.iter().all(|c| c.p[0] <= 0.0));
        assert!(second.iter().filter(|c| c.s > p.turn_length() + 1e-2).all(|c| c.p[0] < 0.0));
    }

    #[test]
    fn lookup_matches_direct_evaluation() {
        for k in [0.5, 1.0, 10.0] {
            let p = SmoothingProfile::new(k).unwrap();
            let (mut ev, mut eg) = (0.0f64, 0.0f64);
            for i in 0..20000 {
                let w =
                    -1.0 - 2.0 * p.crossing_height() + (2.0 + 2.0 * p.crossing_height()) * (i as f64 + 0.37) / 20000.0;
                let (v, g) = p.eval(w, 0.3);
                let (ve, ge) = p.eval_exact(w, 0.3);
                ev = ev.max((v - ve).abs());
                eg = eg.max((g[0] - ge[0]).abs()).max((g[1] - ge[1]).abs());
            }
            assert!(ev < 1e-12 && eg < 1e-8, "{k}: {ev} {eg}");
        }
    }

    #[test]
    fn ramp_integral() {
        assert!((step_integral(1.0 - 1e-9) - 0.5).abs() < 1e-8);
        for i in 0..=200 {
            let z = i as f64 / 200.0 * 0.999 + 3e-4;
            assert!((step_integral(z) - step_integral_direct(z)).abs() < 1e-11, "{z}");
        }
        for z in [0.1, 0.3, 0.5, 0.77] {
            let d = (step_integral(z + 1e-6) - step_integral(z - 1e-6)) / 2e-6;
            assert!((d - smooth_step(z, 1.0)).abs() < 1e-7, "{z}");
        }
    }

    #[test]
    fn submersion_everywhere() {
        let p = prof();
        for i in -30..=30 {
            for j in -30..=30 {
                let (_, g) = p.eval(i as f64 * 0.1, j as f64 * 0.1);
                assert!(g[0] * g[0] + g[1] * g[1] >= 0.5 - 1e-12);
            }
        }
    }

    #[test]
    fn sharpness_range() {
        assert!(SmoothingProfile::new(0.0).is_err());
        assert!(SmoothingProfile::new(10.5).is_err());
        assert!(SmoothingProfile::new(10.0).is_ok());
        let e = 1e-6;
        for k in [0.5, 2.0] {
            let slope = (smooth_step(0.5 + e, k) - smooth_step(0.5 - e, k)) / (2.0 * e);
            assert!((slope - 2.0 * k).abs() < 1e-6);
        }
    }
}
