//! Zero sets: grid seeds, Gauss-Newton refinement, clustering, eigen splitting
//! and the Morse-Bott* verdict.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::VectorFieldModel;
use super::WeinsteinError;
use crate::geom::{dot, norm, orthonormal_rows, pca, singular_values, Aabb, CellIndex};

/// Assumed Lipschitz bound of the fields, for screening grid seeds.
const SCREEN_LIPSCHITZ: f64 = 2.0;
/// Neighbourhood radius for tangent and boundary estimates, in grid steps.
const LOCAL_RADIUS: f64 = 2.5;
/// Linking distance of zero samples, in grid steps.
const LINK: f64 = 1.6;
/// Boundary points step this many grid steps outward to test repellence.
const REPEL_STEP: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroTol {
    pub spacing: f64,
    /// `|V|` accepted as a zero.
    pub residual: f64,
    /// `|Re lambda|` below which an eigenvalue counts as neutral.
    pub eigen: f64,
    /// Largest angle between `E^0` and the tangent of the zero set.
    pub angle: f64,
    pub max_iter: usize,
}

impl ZeroTol {
    pub fn new(spacing: f64) -> Self {
        Self { spacing, residual: 1e-10, eigen: 1e-4, angle: 1e-2, max_iter: 80 }
    }
}

/// Real invariant subspaces of a Jacobian, as orthonormal row frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSplit {
    pub eigenvalues: Vec<[f64; 2]>,
    pub plus: Vec<Vec<f64>>,
    pub minus: Vec<Vec<f64>>,
    pub zero: Vec<Vec<f64>>,
}

impl EigenSplit {
    pub fn dims(&self) -> [usize; 3] {
        [self.plus.len(), self.minus.len(), self.zero.len()]
    }
}

/// Null space of the product of `(J - lambda)` over a group of eigenvalues,
/// conjugate pairs combined into real quadratics.
fn invariant_subspace(j: &DMatrix<f64>, group: &[Complex<f64>]) -> Vec<Vec<f64>> {
    let n = j.nrows();
    if group.is_empty() {
        return Vec::new();
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mut m = id.clone();
    let mut used = vec![false; group.len()];
    for i in 0..group.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let l = group[i];
        if l.im.abs() > 1e-9 {
            if let Some(c) = (i + 1..group.len()).find(|&c| !used[c] && (group[c] - l.conj()).norm() < 1e-6) {
                used[c] = true;
            }
            m = &m * (j * j - j * (2.0 * l.re) + &id * l.norm_sqr());
        } else {
            m = &m * (j - &id * l.re);
        }
    }
    let svd = m.svd(false, true);
    let Some(vt) = svd.v_t else { return Vec::new() };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let rows: Vec<Vec<f64>> = order.iter().take(group.len()).map(|&r| vt.row(r).iter().copied().collect()).collect();
    orthonormal_rows(&rows)
}

pub fn eigen_split(j: &DMatrix<f64>, tol: f64) -> EigenSplit {
    let ev: Vec<Complex<f64>> = j.complex_eigenvalues().iter().copied().collect();
    let pick = |f: &dyn Fn(f64) -> bool| ev.iter().copied().filter(|c| f(c.re)).collect::<Vec<_>>();
    EigenSplit {
        eigenvalues: ev.iter().map(|c| [c.re, c.im]).collect(),
        plus: invariant_subspace(j, &pick(&|r| r > tol)),
        minus: invariant_subspace(j, &pick(&|r| r < -tol)),
        zero: invariant_subspace(j, &pick(&|r| r.abs() <= tol)),
    }
}

/// Sine of the largest principal angle between two frames of equal dimension.
pub fn subspace_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() {
        return 1.0;
    }
    if a.is_empty() {
        return 0.0;
    }
    let qb = orthonormal_rows(b);
    let res: Vec<Vec<f64>> = orthonormal_rows(a)
        .iter()
        .map(|t| {
            let mut r = t.clone();
            for e in &qb {
                let c = dot(t, e);
                r.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
            }
            r
        })
        .collect();
    singular_values(&res).first().copied().unwrap_or(0.0).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroPoint {
    pub p: Vec<f64>,
    pub phi: f64,
    pub split: EigenSplit,
    /// Estimated tangent of the zero set; `None` near the box faces.
    pub tangent: Option<Vec<Vec<f64>>>,
    /// Angle between `E^0` and the tangent.
    pub angle: Option<f64>,
    pub boundary: bool,
    pub outward: Option<Vec<f64>>,
    pub repellent: Option<bool>,
}

impl ZeroPoint {
    pub fn index(&self) -> usize {
        self.split.minus.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroComponent {
    pub label: usize,
    pub points: Vec<ZeroPoint>,
    /// Dimension of the zero set (most common `dim E^0`).
    pub dim: usize,
    pub index: usize,
    pub morse_bott: bool,
    pub max_angle: f64,
    /// `None` when no boundary point was found.
    pub boundary_repellent: Option<bool>,
    pub phi: f64,
    pub centroid: Vec<f64>,
}

impl ZeroComponent {
    pub fn dims_consistent(&self, ambient: usize) -> bool {
        self.points.iter().all(|p| p.split.dims().iter().sum::<usize>() == ambient)
    }

    pub fn is_lagrangian(&self, n: usize) -> bool {
        self.dim + self.index == n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroScan {
    pub components: Vec<ZeroComponent>,
    /// Seeds where Gauss-Newton did not converge.
    pub flagged: Vec<Vec<f64>>,
    pub seeds: usize,
}

enum Refined {
    Zero(Vec<f64>),
    Left,
    Stuck,
}

fn refine(model: &VectorFieldModel, bx: &Aabb, seed: &[f64], tol: &ZeroTol) -> Refined {
    let mut z = seed.to_vec();
    for _ in 0..tol.max_iter {
        let v = model.eval(&z);
        if norm(&v) <= tol.residual {
            return Refined::Zero(z);
        }
        let svd = model.jacobian(&z).svd(true, true);
        let smax = svd.singular_values.max();
        let Ok(step) = svd.solve(&DVector::from_column_slice(&v), 1e-8 * smax.max(1e-300)) else {
            return Refined::Stuck;
        };
        let mut step: Vec<f64> = step.iter().copied().collect();
        let len = norm(&step);
        if len > tol.spacing {
            step.iter_mut().for_each(|x| *x *= tol.spacing / len);
        }
        z.iter_mut().zip(&step).for_each(|(a, b)| *a -= b);
        if bx.depth(&z) < -tol.spacing {
            return Refined::Left;
        }
    }
    if norm(&model.eval(&z)) <= tol.residual {
        Refined::Zero(z)
    } else {
        Refined::Stuck
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

pub fn find_zero_components(model: &VectorFieldModel, bx: &Aabb, tol: &ZeroTol) -> Result<ZeroScan, WeinsteinError> {
    if bx.dim() != model.dim {
        return Err(WeinsteinError::Dimension { expected: model.dim, got: bx.dim() });
    }
    if !(tol.spacing > 0.0 && tol.residual > 0.0 && tol.eigen > 0.0 && tol.angle > 0.0) {
        return Err(WeinsteinError::Parameter("tolerances must be positive".into()));
    }
    let h = tol.spacing;
    let counts = bx.grid_counts(h);
    let total: usize = counts.iter().product();
    let screen = SCREEN_LIPSCHITZ * h * (model.dim as f64).sqrt() / 2.0;
    let refined: Vec<(Vec<f64>, Refined)> = (0..total)
        .into_par_iter()
        .filter_map(|flat| {
            let mut idx = vec![0; counts.len()];
            let mut rest = flat;
            for a in (0..counts.len()).rev() {
                idx[a] = rest % counts[a];
                rest /= counts[a];
            }
            let seed = bx.grid_point(h, &idx);
            if norm(&model.eval(&seed)) > screen {
                return None;
            }
            let r = refine(model, bx, &seed, tol);
            Some((seed, r))
        })
        .collect();
    let seeds = refined.len();
    let mut flagged = Vec::new();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut index = CellIndex::new(&[], h);
    for (seed, r) in refined {
        match r {
            Refined::Zero(z) if bx.contains(&z) => {
                if index.within(&kept, &z, 0.5 * h).is_empty() {
                    index.insert(&z, kept.len());
                    kept.push(z);
                }
            }
            Refined::Zero(_) | Refined::Left => {}
            Refined::Stuck => flagged.push(seed),
        }
    }
    let link = CellIndex::new(&kept, LINK * h);
    let mut parent: Vec<usize> = (0..kept.len()).collect();
    for i in 0..kept.len() {
        for j in link.within(&kept, &kept[i], LINK * h) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut label_of = vec![usize::MAX; kept.len()];
    for i in 0..kept.len() {
        let r = find(&mut parent, i);
        if label_of[r] == usize::MAX {
            label_of[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[label_of[r]].push(i);
    }
    let local = LOCAL_RADIUS * h;
    let components = groups
        .iter()
        .enumerate()
        .map(|(label, members)| {
            let pts: Vec<Vec<f64>> = members.iter().map(|&i| kept[i].clone()).collect();
            let near = CellIndex::new(&pts, local);
            let points: Vec<ZeroPoint> =
                (0..pts.len()).into_par_iter().map(|i| zero_point(model, bx, &pts, &near, i, tol)).collect();
            summarize(label, points, model.dim, tol.angle)
        })
        .collect();
    Ok(ZeroScan { components, flagged, seeds })
}

fn zero_point(
    model: &VectorFieldModel,
    bx: &Aabb,
    pts: &[Vec<f64>],
    near: &CellIndex,
    i: usize,
    tol: &ZeroTol,
) -> ZeroPoint {
    let h = tol.spacing;
    let local = LOCAL_RADIUS * h;
    let p = pts[i].clone();
    let split = eigen_split(&model.jacobian(&p), tol.eigen);
    let phi = model.lyapunov(&p).0;
    let mut zp =
        ZeroPoint { p, phi, split, tangent: None, angle: None, boundary: false, outward: None, repellent: None };
    if bx.depth(&zp.p) < local + h {
        return zp;
    }
    let nb: Vec<Vec<f64>> = near.within(pts, &zp.p, local).into_iter().map(|j| pts[j].clone()).collect();
    let (ev, axes) = pca(&nb);
    let top = ev.first().copied().unwrap_or(0.0);
    let k = if nb.len() < 3 || top < (0.2 * h).powi(2) { 0 } else { ev.iter().filter(|&&e| e > 0.1 * top).count() };
    let tangent: Vec<Vec<f64>> = axes.into_iter().take(k).collect();
    let gap = subspace_gap(&tangent, &zp.split.zero);
    zp.angle = Some(gap.asin());
    if k > 0 {
        let d = zp.p.len();
        let centroid: Vec<f64> =
            (0..d).map(|c| nb.iter().map(|q| q[c]).sum::<f64>() / nb.len() as f64 - zp.p[c]).collect();
        let mut off = vec![0.0; d];
        for t in &tangent {
            let c = dot(&centroid, t);
            off.iter_mut().zip(t).for_each(|(o, x)| *o += c * x);
        }
        let len = norm(&off);
        if len > 0.25 * local {
            let out: Vec<f64> = off.iter().map(|x| -x / len).collect();
            let probe: Vec<f64> = zp.p.iter().zip(&out).map(|(a, b)| a + REPEL_STEP * h * b).collect();
            zp.boundary = true;
            zp.repellent = Some(dot(&model.eval(&probe), &out) > 0.0);
            zp.outward = Some(out);
        }
    }
    zp.tangent = Some(tangent);
    zp
}

fn mode(values: impl Iterator<Item = usize>) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map_or(0, |(v, _)| v)
}

fn summarize(label: usize, points: Vec<ZeroPoint>, dim: usize, angle: f64) -> ZeroComponent {
    let n = points.len().max(1) as f64;
    let centroid = (0..dim).map(|c| points.iter().map(|p| p.p[c]).sum::<f64>() / n).collect();
    let checked: Vec<&ZeroPoint> = points.iter().filter(|p| p.angle.is_some()).collect();
    let max_angle = checked.iter().filter_map(|p| p.angle).fold(0.0, f64::max);
    let boundary: Vec<bool> = points.iter().filter_map(|p| p.repellent).collect();
    ZeroComponent {
        label,
        dim: mode(points.iter().map(|p| p.split.zero.len())),
        index: mode(points.iter().map(ZeroPoint::index)),
        morse_bott: checked.iter().all(|p| p.tangent.as_ref().is_some_and(|t| t.len() == p.split.zero.len()))
            && max_angle < angle,
        max_angle,
        boundary_repellent: if boundary.is_empty() { None } else { Some(boundary.iter().all(|&b| b)) },
        phi: points.iter().map(|p| p.phi).sum::<f64>() / n,
        centroid,
        points,
    }
}
