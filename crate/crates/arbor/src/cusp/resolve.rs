//! Local model of the `Sigma^{1,0}` resolution in coordinates
//! `(q_1..q_m, u, v, s, r, p_1..p_m)` with `omega = sum dq dp + du dv + ds dr`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CuspError;
use crate::geom::{hausdorff, orthonormal_rows, principal_cosines};

/// Default half-width of the blend window, as a fraction of `epsilon`.
pub const WIDTH_RATIO: f64 = 1.0 / 8.0;
pub const MAX_EPSILON: f64 = 0.2;
const FRAME_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SheetSign {
    Plus,
    Minus,
}

impl SheetSign {
    fn value(self) -> f64 {
        match self {
            Self::Plus => 1.0,
            Self::Minus => -1.0,
        }
    }
}

/// Quintic Hermite basis on [0, 1]: value, slope, curvature at 0, then at 1.
const HERMITE: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
];

/// Sheet profile: linear `±4 eps u - 4 eps^2` on the inner side of `±2 eps`,
/// `u^2` beyond, joined by a quintic on a window of half-width `width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HFunction {
    pub epsilon: f64,
    pub sign: SheetSign,
    pub width: f64,
    coef: [f64; 6],
}

impl HFunction {
    pub fn break_point(&self) -> f64 {
        2.0 * self.epsilon * self.sign.value()
    }

    /// The unsmoothed piecewise profile with its derivative.
    pub fn raw(&self, u: f64) -> (f64, f64) {
        let (e, sg) = (self.epsilon, self.sign.value());
        if sg * u <= 2.0 * e {
            (sg * 4.0 * e * u - 4.0 * e * e, sg * 4.0 * e)
        } else {
            (u * u, 2.0 * u)
        }
    }

    /// Value and derivative.
    pub fn eval(&self, u: f64) -> (f64, f64) {
        let b = self.break_point();
        if (u - b).abs() >= self.width {
            return self.raw(u);
        }
        let len = 2.0 * self.width;
        let t = (u - (b - self.width)) / len;
        let c = &self.coef;
        let v = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let dv = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        (v, dv / len)
    }

    /// Root of `h(u) = eps u`.
    pub fn diagonal_root(&self) -> f64 {
        let e = self.epsilon;
        let g = |u: f64| self.eval(u).0 - e * u;
        let (mut lo, mut hi) = (-3.0 * e, 3.0 * e);
        if g(lo) > 0.0 {
            std::mem::swap(&mut lo, &mut hi);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

pub fn make_h(epsilon: f64, sign: SheetSign, width: f64) -> Result<HFunction, CuspError> {
    if !(epsilon > 0.0) {
        return Err(CuspError::Parameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(width > 0.0 && width <= epsilon / 4.0) {
        return Err(CuspError::Parameter(format!("smoothing width must lie in (0, eps/4], got {width}")));
    }
    let mut h = HFunction { epsilon, sign, width, coef: [0.0; 6] };
    let b = h.break_point();
    let len = 2.0 * width;
    // second derivative of the raw profile on each side
    let curv = |u: f64| if sign.value() * u <= 2.0 * epsilon { 0.0 } else { 2.0 };
    let (ul, ur) = (b - width, b + width);
    let (fl, dl) = h.raw(ul);
    let (fr, dr) = h.raw(ur);
    let data = [fl, dl * len, curv(ul) * len * len, fr, dr * len, curv(ur) * len * len];
    for (w, basis) in data.iter().zip(HERMITE) {
        for (c, b) in h.coef.iter_mut().zip(basis) {
            *c += w * b;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumKind {
    /// The unresolved branch `v = u^2`.
    Cusp,
    /// Stable manifold of the thickened zero set, `v = eps u`.
    Diagonal,
    PlusSheet,
    MinusSheet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSample {
    pub p: Vec<f64>,
    pub stratum: StratumKind,
    pub frame: Vec<Vec<f64>>,
    /// Frame estimation failed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolveParams {
    pub epsilon: f64,
    /// Half-width of the blend window; `epsilon / 8` when absent.
    pub width: Option<f64>,
    pub u_range: [f64; 2],
    pub q_dim: usize,
    pub q_half: f64,
    pub samples: usize,
    pub seed: u64,
}

impl ResolveParams {
    pub fn new(epsilon: f64, samples: usize) -> Self {
        Self { epsilon, width: None, u_range: [-1.0, 1.0], q_dim: 1, q_half: 1.0, samples, seed: 0 }
    }

    fn width(&self) -> f64 {
        self.width.unwrap_or(WIDTH_RATIO * self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspResolution {
    pub epsilon: f64,
    pub width: f64,
    pub q_dim: usize,
    pub plus: HFunction,
    pub minus: HFunction,
    /// `(u, v)` where the sheets meet `v = eps u`.
    pub plus_root: [f64; 2],
    pub minus_root: [f64; 2],
    pub samples: Vec<StratumSample>,
}

/// Ambient point for the graph `v = g(u)` at `(q, u)` with `s = r = p = 0`.
fn embed(q: &[f64], u: f64, v: f64) -> Vec<f64> {
    let m = q.len();
    let mut out = vec![0.0; 2 * m + 4];
    out[..m].copy_from_slice(q);
    out[m] = u;
    out[m + 1] = v;
    out
}

fn graph_sample(q: &[f64], u: f64, kind: StratumKind, g: &dyn Fn(f64) -> f64) -> StratumSample {
    let m = q.len();
    let p = embed(q, u, g(u));
    let mut tangents = Vec::with_capacity(m + 1);
    let mut qq = q.to_vec();
    for i in 0..m {
        qq[i] = q[i] + FRAME_STEP;
        let a = embed(&qq, u, g(u));
        qq[i] = q[i] - FRAME_STEP;
        let b = embed(&qq, u, g(u));
        qq[i] = q[i];
        tangents.push(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * FRAME_STEP)).collect());
    }
    let a = embed(q, u + FRAME_STEP, g(u + FRAME_STEP));
    let b = embed(q, u - FRAME_STEP, g(u - FRAME_STEP));
    tangents.push(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * FRAME_STEP)).collect::<Vec<f64>>());
    let frame = orthonormal_rows(&tangents);
    let flagged = frame.len() != m + 1;
    StratumSample { p, stratum: kind, frame, flagged }
}

/// `n` values from `lo` to `hi` inclusive; the midpoint is hit exactly for odd
/// `n` on a symmetric range.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * (i as f64 / (n - 1) as f64)).collect(),
    }
}

fn q_values(params: &ResolveParams, n: usize, stream: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    (0..n).map(|_| (0..params.q_dim).map(|_| rng.random_range(-params.q_half..=params.q_half)).collect()).collect()
}

fn graph_stratum(
    params: &ResolveParams,
    kind: StratumKind,
    range: [f64; 2],
    n: usize,
    g: &(dyn Fn(f64) -> f64 + Sync),
) -> Vec<StratumSample> {
    graph_at(params, kind, linspace(range[0], range[1], n), g)
}

fn graph_at(
    params: &ResolveParams,
    kind: StratumKind,
    us: Vec<f64>,
    g: &(dyn Fn(f64) -> f64 + Sync),
) -> Vec<StratumSample> {
    let n = us.len();
    let qs = q_values(params, n, kind as u64);
    us.par_iter().zip(qs.par_iter()).map(|(&u, q)| graph_sample(q, u, kind, g)).collect()
}

fn validate(params: &ResolveParams) -> Result<(), CuspError> {
    let e = params.epsilon;
    if !(e > 0.0 && e <= MAX_EPSILON) {
        return Err(CuspError::Parameter(format!("epsilon must lie in (0, {MAX_EPSILON}], got {e}")));
    }
    if !(params.u_range[0] <= -3.0 * e && params.u_range[1] >= 3.0 * e) {
        return Err(CuspError::Parameter(format!("u range must contain [-3 eps, 3 eps], got {:?}", params.u_range)));
    }
    if params.samples < 3 || !(params.q_half >= 0.0) {
        return Err(CuspError::Parameter("need at least three samples and a non-negative q box".into()));
    }
    Ok(())
}

/// Samples of the unresolved branch `v = u^2` on a uniform `u` grid whose
/// point nearest the cusp is moved onto `u = 0`.
pub fn unresolved_cusp(params: &ResolveParams) -> Result<Vec<StratumSample>, CuspError> {
    validate(params)?;
    let mut us = linspace(params.u_range[0], params.u_range[1], params.samples);
    let nearest = (0..us.len()).min_by(|&a, &b| us[a].abs().total_cmp(&us[b].abs())).expect("samples >= 3");
    us[nearest] = 0.0;
    Ok(graph_at(params, StratumKind::Cusp, us, &|u| u * u))
}

/// Diagonal stratum over `|u| <= 2 eps` and the two sheets from their
/// intersection points outward, with `params.samples` points in total split
/// by `u`-length.
pub fn resolve_sigma10(params: &ResolveParams) -> Result<CuspResolution, CuspError> {
    validate(params)?;
    let e = params.epsilon;
    let width = params.width();
    let plus = make_h(e, SheetSign::Plus, width)?;
    let minus = make_h(e, SheetSign::Minus, width)?;
    let (up, um) = (plus.diagonal_root(), minus.diagonal_root());
    let ranges = [[-2.0 * e, 2.0 * e], [up, params.u_range[1]], [params.u_range[0], um]];
    let total: f64 = ranges.iter().map(|r| r[1] - r[0]).sum();
    let mut counts: Vec<usize> =
        ranges.iter().map(|r| ((r[1] - r[0]) / total * params.samples as f64).floor().max(1.0) as usize).collect();
    let assigned: usize = counts.iter().sum();
    counts[0] += params.samples.saturating_sub(assigned);
    let mut samples = graph_stratum(params, StratumKind::Diagonal, ranges[0], counts[0], &|u| e * u);
    samples.extend(graph_stratum(params, StratumKind::PlusSheet, ranges[1], counts[1], &|u| plus.eval(u).0));
    samples.extend(graph_stratum(params, StratumKind::MinusSheet, ranges[2], counts[2], &|u| minus.eval(u).0));
    Ok(CuspResolution {
        epsilon: e,
        width,
        q_dim: params.q_dim,
        plus_root: [up, plus.eval(up).0],
        minus_root: [um, minus.eval(um).0],
        plus,
        minus,
        samples,
    })
}

/// Local symplectic pairing in resolution coordinates.
pub fn local_omega(q_dim: usize, a: &[f64], b: &[f64]) -> f64 {
    let m = q_dim;
    let pair = |i: usize, j: usize| a[i] * b[j] - a[j] * b[i];
    (0..m).map(|i| pair(i, m + 4 + i)).sum::<f64>() + pair(m, m + 1) + pair(m + 2, m + 3)
}

/// Leaves of the foliation: in these coordinates spanned by `d/du` and the `d/dp_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoliationLocal {
    pub q_dim: usize,
}

impl FoliationLocal {
    pub fn span(&self, _p: &[f64]) -> Vec<Vec<f64>> {
        let m = self.q_dim;
        let unit = |i: usize| {
            let mut v = vec![0.0; 2 * m + 4];
            v[i] = 1.0;
            v
        };
        std::iter::once(unit(m)).chain((0..m).map(|i| unit(m + 4 + i))).collect()
    }

    /// Largest pairing between leaf tangent vectors.
    pub fn isotropy_defect(&self, p: &[f64]) -> f64 {
        let s = self.span(p);
        let mut worst: f64 = 0.0;
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                worst = worst.max(local_omega(self.q_dim, &s[a], &s[b]).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub samples: usize,
    pub flagged: usize,
    /// Largest dimension of stratum tangent meet leaf tangent.
    pub max_dim: usize,
    /// Smallest principal angle above `tol`.
    pub min_angle: f64,
    /// Per-sample intersection dimension, in input order.
    pub dims: Vec<usize>,
}

impl TangencyReport {
    pub fn tangential(&self) -> Vec<usize> {
        self.dims.iter().enumerate().filter(|(_, d)| **d > 0).map(|(i, _)| i).collect()
    }
}

/// Principal angles between each stratum tangent and the leaf through its
/// point; angles below `tol` count towards the intersection.
pub fn tangency_audit(samples: &[StratumSample], foliation: &FoliationLocal, tol: f64) -> TangencyReport {
    let per: Vec<(usize, f64, bool)> = samples
        .par_iter()
        .map(|s| {
            if s.flagged {
                return (0, f64::INFINITY, true);
            }
            let angles: Vec<f64> = principal_cosines(&s.frame, &foliation.span(&s.p))
                .into_iter()
                .map(|c| c.clamp(-1.0, 1.0).acos())
                .collect();
            let dim = angles.iter().filter(|a| **a < tol).count();
            let min = angles.iter().copied().filter(|a| *a >= tol).fold(f64::INFINITY, f64::min);
            (dim, min, false)
        })
        .collect();
    TangencyReport {
        samples: samples.len(),
        flagged: per.iter().filter(|p| p.2).count(),
        max_dim: per.iter().map(|p| p.0).max().unwrap_or(0),
        min_angle: per.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        dims: per.iter().map(|p| p.0).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Closeness {
    pub epsilon: f64,
    /// Hausdorff distance in the `(u, v)` slice between the resolved union and `v = u^2`.
    pub hausdorff: f64,
    /// Largest angle between the resolved and original tangent lines at equal `u`, `|u| > 3 eps`.
    pub max_angle_outside: f64,
    /// `C^1` distance of each sheet from `u^2` from its intersection point outward.
    pub c1_plus: f64,
    pub c1_minus: f64,
}

/// Compares the resolved `(u, v)` slice with the original branch on `|u| <= u_half`.
pub fn c1_closeness(epsilon: f64, u_half: f64, spacing: f64) -> Result<Closeness, CuspError> {
    let params = ResolveParams { u_range: [-u_half, u_half], ..ResolveParams::new(epsilon, 3) };
    validate(&params)?;
    if !(spacing > 0.0) {
        return Err(CuspError::Parameter("spacing must be positive".into()));
    }
    let width = params.width();
    let plus = make_h(epsilon, SheetSign::Plus, width)?;
    let minus = make_h(epsilon, SheetSign::Minus, width)?;
    let (up, um) = (plus.diagonal_root(), minus.diagonal_root());
    let n = |lo: f64, hi: f64| ((hi - lo) / spacing).ceil() as usize + 1;
    let diag: Vec<f64> = linspace(-2.0 * epsilon, 2.0 * epsilon, n(-2.0 * epsilon, 2.0 * epsilon));
    let pu: Vec<f64> = linspace(up, u_half, n(up, u_half));
    let mu: Vec<f64> = linspace(-u_half, um, n(-u_half, um));
    let mut resolved: Vec<Vec<f64>> = diag.iter().map(|&u| vec![u, epsilon * u]).collect();
    resolved.extend(pu.iter().map(|&u| vec![u, plus.eval(u).0]));
    resolved.extend(mu.iter().map(|&u| vec![u, minus.eval(u).0]));
    let original: Vec<Vec<f64>> =
        linspace(-u_half, u_half, n(-u_half, u_half)).into_iter().map(|u| vec![u, u * u]).collect();
    let angle = |u: f64, slope: f64| (slope.atan() - (2.0 * u).atan()).abs();
    let mut max_angle: f64 = 0.0;
    for (us, h) in [(&pu, &plus), (&mu, &minus)] {
        for &u in us.iter().filter(|u| u.abs() > 3.0 * epsilon) {
            max_angle = max_angle.max(angle(u, h.eval(u).1));
        }
    }
    let c1 = |us: &[f64], h: &HFunction| {
        us.iter()
            .map(|&u| {
                let (v, dv) = h.eval(u);
                (v - u * u).abs().max((dv - 2.0 * u).abs())
            })
            .fold(0.0, f64::max)
    };
    Ok(Closeness {
        epsilon,
        hausdorff: hausdorff(&resolved, &original),
        max_angle_outside: max_angle,
        c1_plus: c1(&pu, &plus),
        c1_minus: c1(&mu, &minus),
    })
}

/// `(u, v)` slice of a resolution: original branch dashed, resolved strata
/// solid, leaves as horizontal lines.
pub fn resolution_svg(res: &CuspResolution, u_half: f64) -> String {
    let e = res.epsilon;
    let v_lo = -4.0 * e * e - 0.25 * u_half * u_half;
    let v_hi = u_half * u_half;
    let (w, h) = (640.0, 480.0);
    let sx = |u: f64| (u + u_half) / (2.0 * u_half) * w;
    let sy = |v: f64| h - (v - v_lo) / (v_hi - v_lo) * h;
    let path = |pts: &[(f64, f64)]| {
        let mut d = String::new();
        for (i, (u, v)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.3},{:.3} ", if i == 0 { "M" } else { "L" }, sx(*u), sy(*v));
        }
        d
    };
    let curve = |lo: f64, hi: f64, g: &dyn Fn(f64) -> f64| -> Vec<(f64, f64)> {
        linspace(lo, hi, 400).into_iter().map(|u| (u, g(u))).filter(|(_, v)| *v <= v_hi).collect()
    };
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for v in linspace(v_lo, v_hi, 24) {
        let _ = writeln!(
            s,
            r##"<line x1="0" y1="{y:.3}" x2="{w}" y2="{y:.3}" stroke="#cccccc" stroke-width="0.5"/>"##,
            y = sy(v)
        );
    }
    let original = curve(-u_half, u_half, &|u| u * u);
    let _ = writeln!(s, r##"<path d="{}" fill="none" stroke="#888888" stroke-dasharray="6 4"/>"##, path(&original));
    let strata = [
        curve(-2.0 * e, 2.0 * e, &|u| e * u),
        curve(res.plus_root[0], u_half, &|u| res.plus.eval(u).0),
        curve(-u_half, res.minus_root[0], &|u| res.minus.eval(u).0),
    ];
    for (pts, color) in strata.iter().zip(["#1f4e9c", "#b22222", "#2e8b57"]) {
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path(pts));
    }
    for [u, v] in [res.plus_root, res.minus_root] {
        let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="black"/>"#, sx(u), sy(v));
    }
    s.push_str("</svg>\n");
    s
}
