//! Local predicates on sampled sheets: corners and tangency.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arrangement::Sheet;
use super::{ClassifierError, ClassifierTol};
use crate::geom::{dot, normalized, sub};
use crate::hypersurface::MAX_AMBIENT_DIM;

/// Highest tangency order reported.
pub const MAX_TANGENCY_ORDER: u8 = 3;

/// Empty-direction threshold as a fraction of the neighbourhood radius.
const EMPTY_REACH: f64 = 0.7;
/// Second-moment eigenvalue above which an empty direction spreads into a new axis.
const SPREAD_EIGEN: f64 = 0.25;
/// Neighbour centroid shift below which a point is taken as interior outright.
const CENTROID_SCREEN: f64 = 0.15;

/// Corner data of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerPoint {
    pub codim: usize,
    /// Unit outward directions of the boundary constraints, tangent to the sheet.
    pub outward: Vec<Vec<f64>>,
    /// Too few neighbours to decide.
    pub inconclusive: bool,
    /// Close to a face of the sampling window; not examined.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerStratification {
    pub points: Vec<CornerPoint>,
}

impl CornerStratification {
    pub fn codims(&self) -> Vec<usize> {
        self.points.iter().map(|c| c.codim).collect()
    }

    pub fn inconclusive_fraction(&self) -> f64 {
        let n = self.points.iter().filter(|c| !c.truncated).count();
        if n == 0 {
            return 0.0;
        }
        self.points.iter().filter(|c| c.inconclusive).count() as f64 / n as f64
    }
}

/// Unit test directions in `m` dimensions, fixed for reproducibility.
fn directions(m: usize) -> &'static [Vec<f64>] {
    static DIRS: OnceLock<Vec<Vec<Vec<f64>>>> = OnceLock::new();
    &DIRS.get_or_init(|| {
        (0..MAX_AMBIENT_DIM)
            .map(|m| match m {
                0 => Vec::new(),
                1 => vec![vec![1.0], vec![-1.0]],
                2 => (0..72)
                    .map(|i| {
                        let a = i as f64 * std::f64::consts::TAU / 72.0;
                        vec![a.cos(), a.sin()]
                    })
                    .collect(),
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
                    let mut out = Vec::new();
                    while out.len() < 120 * m * m {
                        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                        if dot(&v, &v) <= 1.0 {
                            out.extend(normalized(&v));
                        }
                    }
                    out
                }
            })
            .collect()
    })[m]
}

/// Codimension of the corner at sample `i`, from the directions in which the
/// sheet has no neighbours.
fn corner_at(sheet: &Sheet, i: usize, tol: &ClassifierTol) -> CornerPoint {
    let sp = &sheet.points[i];
    let m = sp.frame.len();
    let r = tol.corner_radius();
    let mut cp = CornerPoint { codim: 0, outward: Vec::new(), inconclusive: false, truncated: false };
    if m == 0 {
        return cp;
    }
    if sheet.window.depth(&sp.p) < r + tol.spacing {
        cp.truncated = true;
        return cp;
    }
    let local: Vec<Vec<f64>> = sheet
        .within(&sp.p, r)
        .into_iter()
        .filter(|&j| j != i)
        .map(|j| {
            let off = sub(&sheet.points[j].p, &sp.p);
            sp.frame.iter().map(|f| dot(f, &off)).collect()
        })
        .collect();
    if local.len() < 2 * m + 1 {
        cp.inconclusive = true;
        return cp;
    }
    let centroid: Vec<f64> = (0..m).map(|k| local.iter().map(|v| v[k]).sum::<f64>() / local.len() as f64).collect();
    if dot(&centroid, &centroid).sqrt() < CENTROID_SCREEN * r {
        return cp;
    }
    let empty: Vec<&Vec<f64>> =
        directions(m).iter().filter(|u| local.iter().all(|v| dot(v, u) < EMPTY_REACH * r)).collect();
    if empty.is_empty() {
        return cp;
    }
    let mean: Vec<f64> = (0..m).map(|k| empty.iter().map(|u| u[k]).sum::<f64>()).collect();
    let moment = DMatrix::from_fn(m, m, |a, b| empty.iter().map(|u| u[a] * u[b]).sum::<f64>() / empty.len() as f64);
    let eig = moment.symmetric_eigen();
    let mut axes: Vec<(f64, Vec<f64>)> = (0..m)
        .filter(|&k| eig.eigenvalues[k] >= SPREAD_EIGEN)
        .map(|k| {
            let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            if dot(&axis, &mean) < 0.0 {
                axis.iter_mut().for_each(|x| *x = -*x);
            }
            (eig.eigenvalues[k], axis)
        })
        .collect();
    axes.sort_by(|x, y| y.0.total_cmp(&x.0));
    for (_, axis) in axes {
        let mut w = vec![0.0; sp.p.len()];
        for (a, f) in sp.frame.iter().enumerate() {
            w.iter_mut().zip(f).for_each(|(x, fv)| *x += axis[a] * fv);
        }
        cp.outward.push(w);
    }
    cp.codim = cp.outward.len();
    cp
}

/// Per-point corner codimension of a sheet.
pub fn corner_stratification(sheet: &Sheet, tol: &ClassifierTol) -> CornerStratification {
    let points = (0..sheet.points.len()).into_par_iter().map(|i| corner_at(sheet, i, tol)).collect();
    CornerStratification { points }
}

/// Contact order of two sheets at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tangency {
    pub order: u8,
    pub flag: Option<TangencyFlag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TangencyFlag {
    /// Both arguments are the same sheet; the order is meaningless.
    SameSheet,
    /// The local fits were ill-conditioned; the order is a lower bound.
    Inconclusive,
}

/// Monomial exponents in `m` variables of total degree 1..=3.
fn monomials(m: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for deg in 1..=3u8 {
        let mut e = vec![0u8; m];
        collect_monomials(&mut e, 0, deg, &mut out);
    }
    out
}

fn collect_monomials(e: &mut Vec<u8>, k: usize, left: u8, out: &mut Vec<Vec<u8>>) {
    if k + 1 == e.len() {
        e[k] = left;
        out.push(e.clone());
        return;
    }
    for a in (0..=left).rev() {
        e[k] = a;
        collect_monomials(e, k + 1, left - a, out);
    }
    e[k] = 0;
}

/// Least-squares fit of `h(t) = sum c_a t^a` over the given samples.
fn fit_graph(tangent: &[Vec<f64>], height: &[f64], mons: &[Vec<u8>], scale: f64) -> Option<Vec<f64>> {
    if tangent.len() < 2 * mons.len() {
        return None;
    }
    let a = DMatrix::from_fn(tangent.len(), mons.len() + 1, |i, j| {
        if j == 0 {
            return 1.0;
        }
        mons[j - 1].iter().zip(&tangent[i]).map(|(&e, t)| (t / scale).powi(i32::from(e))).product()
    });
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let (smax, smin) = s.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &x| (hi.max(x), lo.min(x)));
    if smin <= 1e-8 * smax {
        return None;
    }
    let c = svd.solve(&DVector::from_column_slice(height), 1e-14).ok()?;
    // back to unscaled coefficients, constant term dropped
    Some(mons.iter().enumerate().map(|(j, e)| c[j + 1] / scale.powi(e.iter().map(|&x| i32::from(x)).sum())).collect())
}

/// Order of contact between sheets `a` and `b` at `point`, capped at
/// [`MAX_TANGENCY_ORDER`]. 0 means transverse.
pub fn tangency_order(a: &Sheet, b: &Sheet, point: &[f64], tol: &ClassifierTol) -> Result<Tangency, ClassifierError> {
    if a.id == b.id {
        return Ok(Tangency { order: MAX_TANGENCY_ORDER, flag: Some(TangencyFlag::SameSheet) });
    }
    let reach = tol.contact_dist.max(tol.spacing);
    let fa = a.foot(point, reach, tol.spacing).ok_or(ClassifierError::NotOnSheet(a.id))?;
    let fb = b.foot(point, reach, tol.spacing).ok_or(ClassifierError::NotOnSheet(b.id))?;
    let cos = dot(&fa.normal, &fb.normal).abs().min(1.0);
    if cos.acos() > tol.contact_angle {
        return Ok(Tangency { order: 0, flag: None });
    }
    let n = fa.normal.clone();
    let frame = crate::geom::complement_frame(&n);
    let m = frame.len();
    if m == 0 {
        return Ok(Tangency { order: 1, flag: None });
    }
    let mons = monomials(m);
    let r = tol.fit_radius();
    let fit = |s: &Sheet| {
        let (t, h): (Vec<Vec<f64>>, Vec<f64>) = s
            .within(point, r)
            .into_iter()
            .map(|j| {
                let off = sub(&s.points[j].p, point);
                (frame.iter().map(|f| dot(f, &off)).collect(), dot(&n, &off))
            })
            .unzip();
        fit_graph(&t, &h, &mons, r)
    };
    let (Some(ca), Some(cb)) = (fit(a), fit(b)) else {
        return Ok(Tangency { order: 1, flag: Some(TangencyFlag::Inconclusive) });
    };
    let agree = |deg: u8, limit: f64| {
        mons.iter()
            .zip(ca.iter().zip(&cb))
            .filter(|(e, _)| e.iter().sum::<u8>() == deg)
            .all(|(_, (x, y))| (x - y).abs() <= limit)
    };
    let mut order = 1;
    if agree(2, tol.quadratic_agreement) {
        order = 2;
        if agree(3, tol.cubic_agreement) {
            order = 3;
        }
    }
    Ok(Tangency { order, flag: None })
}
