//! Point samples of strata and of the Lagrangian model.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{conormal_direction, ArborealHypersurface, HypersurfaceError, Stratum};
use crate::geom::{complement_frame, dot, norm};
use crate::trees::VertexId;

pub const NEWTON_TOL: f64 = 1e-8;
pub const NEWTON_MAX_STEPS: usize = 50;

/// A sampled point of a sheet; `stratum` is the owning vertex id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub p: Vec<f64>,
    pub stratum: VertexId,
    pub frame: Vec<Vec<f64>>,
    /// Unit co-orienting normal.
    pub normal: Vec<f64>,
}

fn newton_project(s: &Stratum, seed: &[f64]) -> Option<Vec<f64>> {
    let mut x = seed.to_vec();
    for _ in 0..NEWTON_MAX_STEPS {
        let (v, g) = s.eval(&x);
        let gg = dot(&g, &g);
        if gg < 1e-24 {
            return None;
        }
        if v.abs() <= 1e-13 {
            break;
        }
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= v * gi / gg);
    }
    (s.eval(&x).0.abs() <= NEWTON_TOL).then_some(x)
}

fn cell_key(p: &[f64], cell: f64) -> Vec<i64> {
    p.iter().map(|x| (x / cell).floor() as i64).collect()
}

/// Coarse grid step, in fine cells, used to skip empty regions.
const COARSE: usize = 4;
/// Slack on the coarse screen for variation of the gradient across a cell.
const COARSE_SLACK: f64 = 2.0;

fn linear_index(idx: &[usize], counts: &[usize]) -> usize {
    idx.iter().zip(counts).fold(0, |acc, (i, n)| acc * n + i)
}

fn unlinear(mut k: usize, counts: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; counts.len()];
    for ax in (0..counts.len()).rev() {
        idx[ax] = k % counts[ax];
        k /= counts[ax];
    }
    idx
}

/// Fine seeds near the zero set: a coarse pass keeps the neighborhoods of
/// coarse points that may be close, returned in fine-grid order.
fn screened_seeds(stratum: &Stratum, spacing: f64) -> Vec<Vec<f64>> {
    let bx = &stratum.validity_box;
    if bx.is_empty() {
        return Vec::new();
    }
    let d = bx.dim();
    let counts = bx.grid_counts(spacing);
    let coarse_counts: Vec<usize> = counts.iter().map(|n| (n - 1).div_ceil(COARSE) + 1).collect();
    let total: usize = coarse_counts.iter().product();
    // every fine seed lies within COARSE / 2 fine steps per axis of a coarse point
    let half = COARSE / 2;
    let reach = COARSE_SLACK * spacing * (half + 1) as f64 * (d as f64).sqrt();
    let hits: Vec<Vec<usize>> = (0..total)
        .into_par_iter()
        .filter_map(|k| {
            let c: Vec<usize> =
                unlinear(k, &coarse_counts).iter().zip(&counts).map(|(i, n)| (i * COARSE).min(n - 1)).collect();
            let (v, g) = stratum.eval(&bx.grid_point(spacing, &c));
            (v.abs() <= reach * norm(&g)).then_some(c)
        })
        .collect();
    let mut fine = Vec::new();
    for c in hits {
        let lo: Vec<usize> = c.iter().map(|i| i.saturating_sub(half)).collect();
        let span: Vec<usize> =
            c.iter().zip(&lo).zip(&counts).map(|((i, l), n)| (i + half).min(n - 1) - l + 1).collect();
        let n: usize = span.iter().product();
        for k in 0..n {
            let off = unlinear(k, &span);
            let idx: Vec<usize> = lo.iter().zip(&off).map(|(l, o)| l + o).collect();
            fine.push(linear_index(&idx, &counts));
        }
    }
    fine.sort_unstable();
    fine.dedup();
    fine.into_iter().map(|k| bx.grid_point(spacing, &unlinear(k, &counts))).collect()
}

/// Grid seeding of the validity box, Newton projection along the gradient,
/// then one point kept per cell of size `spacing / 2` in seed order.
pub fn sample_stratum(stratum: &Stratum, spacing: f64) -> Result<Vec<SamplePoint>, HypersurfaceError> {
    if !(spacing > 0.0) {
        return Err(HypersurfaceError::Parameter(format!("spacing must be positive, got {spacing}")));
    }
    let reach = spacing * (stratum.validity_box.dim() as f64).sqrt();
    let seeds = screened_seeds(stratum, spacing);
    let projected: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|seed| {
            let (v, g) = stratum.eval(seed);
            if v.abs() > reach * norm(&g) {
                return None;
            }
            newton_project(stratum, seed).filter(|x| stratum.is_valid(x))
        })
        .collect();
    let mut kept: BTreeMap<Vec<i64>, ()> = BTreeMap::new();
    let mut out = Vec::new();
    for x in projected.into_iter().flatten() {
        if kept.insert(cell_key(&x, spacing / 2.0), ()).is_some() {
            continue;
        }
        let normal = conormal_direction(stratum, &x)?;
        let frame = complement_frame(&normal);
        out.push(SamplePoint { p: x, stratum: stratum.owner, frame, normal });
    }
    Ok(out)
}

/// Samples of every stratum, in stratum order.
pub fn sample_hypersurface(h: &ArborealHypersurface, spacing: f64) -> Result<Vec<SamplePoint>, HypersurfaceError> {
    let mut out = Vec::new();
    for s in &h.strata {
        out.extend(sample_stratum(s, spacing)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagrangianLabel {
    ZeroSection,
    Conormal(VertexId),
}

/// A point `(x, xi)` of the cotangent bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianPoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub label: LagrangianLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianModelSample {
    pub dim: usize,
    pub points: Vec<LagrangianPoint>,
}

/// Zero section on the validity grid plus rays `t n`, `0 < t <= fiber_length`,
/// over every hypersurface sample.
pub fn lagrangian_model(
    h: &ArborealHypersurface,
    spacing: f64,
    fiber_length: f64,
) -> Result<LagrangianModelSample, HypersurfaceError> {
    if !(spacing > 0.0 && fiber_length >= 0.0) {
        return Err(HypersurfaceError::Parameter("spacing must be positive and fiber length non-negative".into()));
    }
    let mut points: Vec<LagrangianPoint> = h
        .validity_box()
        .grid(spacing)
        .into_iter()
        .map(|x| LagrangianPoint { xi: vec![0.0; x.len()], x, label: LagrangianLabel::ZeroSection })
        .collect();
    let steps = (fiber_length / spacing).round() as usize;
    for sp in sample_hypersurface(h, spacing)? {
        for i in 1..=steps {
            let t = fiber_length * i as f64 / steps as f64;
            points.push(LagrangianPoint {
                x: sp.p.clone(),
                xi: sp.normal.iter().map(|n| t * n).collect(),
                label: LagrangianLabel::Conormal(sp.stratum),
            });
        }
    }
    Ok(LagrangianModelSample { dim: h.dim, points })
}
