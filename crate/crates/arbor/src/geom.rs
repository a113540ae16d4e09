//! Small dense-vector helpers shared by the geometric modules.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn cube(dim: usize, half: f64) -> Self {
        Self { lo: vec![-half; dim], hi: vec![half; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(&self.lo).zip(&self.hi).all(|((x, lo), hi)| *x >= *lo && *x <= *hi)
    }

    /// Distance from `p` (inside) to the nearest face.
    pub fn depth(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.lo).zip(&self.hi).map(|((x, lo), hi)| (x - lo).min(hi - x)).fold(f64::INFINITY, f64::min)
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(lo, hi)| lo > hi)
    }

    /// Number of grid points along each axis for the given spacing.
    pub fn grid_counts(&self, spacing: f64) -> Vec<usize> {
        self.lo.iter().zip(&self.hi).map(|(lo, hi)| ((hi - lo) / spacing + 1e-9).floor() as usize + 1).collect()
    }

    /// Grid point with integer coordinates `idx`.
    pub fn grid_point(&self, spacing: f64, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.lo).map(|(&i, lo)| lo + i as f64 * spacing).collect()
    }

    /// Grid points with the given spacing, lexicographic order, last axis fastest.
    pub fn grid(&self, spacing: f64) -> Vec<Vec<f64>> {
        if self.is_empty() {
            return Vec::new();
        }
        let counts = self.grid_counts(spacing);
        let total: usize = counts.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; counts.len()];
        for _ in 0..total {
            out.push(self.grid_point(spacing, &idx));
            for ax in (0..counts.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < counts[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| a.iter().map(|x| x / n).collect())
}

/// Orthonormal basis of the complement of the unit vector `n`, by
/// Gram-Schmidt on coordinate vectors, skipping the one most aligned with `n`.
pub fn complement_frame(n: &[f64]) -> Vec<Vec<f64>> {
    let d = n.len();
    let skip = (0..d).max_by(|&i, &j| n[i].abs().total_cmp(&n[j].abs())).unwrap_or(0);
    let mut basis: Vec<Vec<f64>> = vec![n.to_vec()];
    for i in (0..d).filter(|&i| i != skip) {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        basis.push(v);
    }
    basis.remove(0);
    basis
}

/// Cosines of the principal angles between two subspaces given by row frames,
/// sorted in decreasing order.
pub fn principal_cosines(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let qa = orthonormal_rows(a);
    let qb = orthonormal_rows(b);
    let m = DMatrix::from_fn(qa.len(), qb.len(), |i, j| dot(&qa[i], &qb[j]));
    let mut s: Vec<f64> = m.singular_values().iter().map(|x| x.min(1.0)).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Orthonormalize rows, dropping numerically dependent ones.
pub fn orthonormal_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let mut v = r.clone();
        for _ in 0..2 {
            for b in &out {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nv = norm(&v);
        if nv > 1e-10 * norm(r).max(1e-300) {
            out.push(v.iter().map(|x| x / nv).collect());
        }
    }
    out
}

/// Singular values of a row-major matrix, decreasing.
pub fn singular_values(rows: &[Vec<f64>]) -> Vec<f64> {
    if rows.is_empty() || rows[0].is_empty() {
        return Vec::new();
    }
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Principal axes of a point cloud: (eigenvalues decreasing, unit axes).
pub fn pca(points: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = points.first().map_or(0, |p| p.len());
    if points.is_empty() {
        return (vec![0.0; d], Vec::new());
    }
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in points {
        let c = DVector::from_iterator(d, p.iter().zip(&mean).map(|(x, m)| x - m));
        cov += &c * c.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let mut pairs: Vec<(f64, Vec<f64>)> =
        (0..d).map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect())).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    (pairs.iter().map(|p| p.0.max(0.0)).collect(), pairs.into_iter().map(|p| p.1).collect())
}

/// Uniform hash grid over a point list.
pub struct CellIndex {
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<u32>>,
}

fn cell_key(p: &[f64], cell: f64) -> Vec<i64> {
    p.iter().map(|x| (x / cell).floor() as i64).collect()
}

impl CellIndex {
    pub fn new(points: &[Vec<f64>], cell: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_key(p, cell)).or_default().push(i as u32);
        }
        Self { cell, cells }
    }

    pub fn insert(&mut self, p: &[f64], id: usize) {
        self.cells.entry(cell_key(p, self.cell)).or_default().push(id as u32);
    }

    /// Indices of points within `r` of `p`, ascending.
    pub fn within(&self, points: &[Vec<f64>], p: &[f64], r: f64) -> Vec<usize> {
        let lo = cell_key(&p.iter().map(|x| x - r).collect::<Vec<_>>(), self.cell);
        let hi = cell_key(&p.iter().map(|x| x + r).collect::<Vec<_>>(), self.cell);
        let mut out = Vec::new();
        let mut k = lo.clone();
        loop {
            if let Some(ids) = self.cells.get(&k) {
                out.extend(ids.iter().map(|&i| i as usize).filter(|&i| dist(&points[i], p) <= r));
            }
            let mut ax = k.len();
            loop {
                if ax == 0 {
                    out.sort_unstable();
                    return out;
                }
                ax -= 1;
                if k[ax] < hi[ax] {
                    k[ax] += 1;
                    break;
                }
                k[ax] = lo[ax];
            }
        }
    }
}

/// Symmetric Hausdorff distance between two clouds.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let one_side = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let cell = 0.05;
        let idx = CellIndex::new(b, cell);
        a.par_iter()
            .map(|p| {
                let mut r = cell;
                loop {
                    let near = idx.within(b, p, r);
                    if let Some(d) = near.iter().map(|&j| dist(&b[j], p)).reduce(f64::min) {
                        return d;
                    }
                    if r > 1e3 {
                        return f64::INFINITY;
                    }
                    r *= 2.0;
                }
            })
            .reduce(|| 0.0, f64::max)
    };
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    one_side(a, b).max(one_side(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let b = Aabb::cube(2, 1.0);
        let g = b.grid(0.5);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], vec![-1.0, -1.0]);
        assert_eq!(g[1], vec![-1.0, -0.5]);
        assert!(b.contains(&[1.0, 1.0]) && !b.contains(&[1.1, 0.0]));
    }

    #[test]
    fn frames_are_orthonormal() {
        let n = normalized(&[0.3, -0.5, 0.8]).unwrap();
        let f = complement_frame(&n);
        assert_eq!(f.len(), 2);
        for (i, a) in f.iter().enumerate() {
            assert!(dot(a, &n).abs() < 1e-14);
            for (j, b) in f.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn angles_between_planes() {
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let t = 0.3f64;
        let b = vec![vec![1.0, 0.0, 0.0], vec![0.0, t.cos(), t.sin()]];
        let c = principal_cosines(&a, &b);
        assert!((c[0] - 1.0).abs() < 1e-14 && (c[1] - t.cos()).abs() < 1e-14);
    }

    #[test]
    fn pca_of_a_line() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let (ev, ax) = pca(&pts);
        assert!(ev[1] < 1e-12);
        assert!((ax[0][1] / ax[0][0] - 2.0).abs() < 1e-10);
    }
}
