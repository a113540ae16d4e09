//! Sampled sheet arrangements.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::geom::{complement_frame, dist, dot, norm, normalized, sub, Aabb};
use crate::hypersurface::{sample_stratum, ArborealHypersurface, SamplePoint, Stratum};
use crate::trees::VertexId;

use super::ClassifierError;

/// Exact description of a sheet, used to measure distances to it.
pub trait LevelSet: Send + Sync {
    /// Defining function and gradient; the gradient co-orients the sheet.
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>);
    /// Whether a zero of `eval` belongs to the sheet.
    fn is_valid(&self, x: &[f64]) -> bool;
}

impl LevelSet for Stratum {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        Stratum::eval(self, x)
    }

    fn is_valid(&self, x: &[f64]) -> bool {
        Stratum::is_valid(self, x)
    }
}

/// Piece of the hyperplane `normal . x = offset` cut out by `a . x >= b`.
#[derive(Debug, Clone)]
pub struct PlanePiece {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub constraints: Vec<(Vec<f64>, f64)>,
    pub window: Aabb,
}

impl LevelSet for PlanePiece {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (dot(&self.normal, x) - self.offset, self.normal.clone())
    }

    fn is_valid(&self, x: &[f64]) -> bool {
        self.window.contains(x) && self.constraints.iter().all(|(a, b)| dot(a, x) >= *b - 1e-12)
    }
}

/// A level set moved by a translation.
pub struct Translated {
    pub inner: Arc<dyn LevelSet>,
    pub offset: Vec<f64>,
}

impl LevelSet for Translated {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.inner.eval(&sub(x, &self.offset))
    }

    fn is_valid(&self, x: &[f64]) -> bool {
        self.inner.is_valid(&sub(x, &self.offset))
    }
}

/// Uniform hash grid over a point cloud.
#[derive(Debug, Clone)]
pub struct PointIndex {
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<u32>>,
}

impl PointIndex {
    pub fn new(points: &[SamplePoint], cell: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
        for (i, sp) in points.iter().enumerate() {
            cells.entry(key(&sp.p, cell)).or_default().push(i as u32);
        }
        Self { cell, cells }
    }

    /// Indices of points within `r` of `p`, ascending.
    pub fn within(&self, points: &[SamplePoint], p: &[f64], r: f64) -> Vec<usize> {
        let lo = key(&p.iter().map(|x| x - r).collect::<Vec<_>>(), self.cell);
        let hi = key(&p.iter().map(|x| x + r).collect::<Vec<_>>(), self.cell);
        let mut out = Vec::new();
        let mut k = lo.clone();
        loop {
            if let Some(ids) = self.cells.get(&k) {
                out.extend(ids.iter().map(|&i| i as usize).filter(|&i| dist(&points[i].p, p) <= r));
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

    /// Nearest point within `r`.
    pub fn nearest(&self, points: &[SamplePoint], p: &[f64], r: f64) -> Option<usize> {
        self.within(points, p, r).into_iter().min_by(|&a, &b| dist(&points[a].p, p).total_cmp(&dist(&points[b].p, p)))
    }
}

fn key(p: &[f64], cell: f64) -> Vec<i64> {
    p.iter().map(|x| (x / cell).floor() as i64).collect()
}

/// A sampled co-oriented sheet.
#[derive(Clone)]
pub struct Sheet {
    pub id: VertexId,
    pub points: Vec<SamplePoint>,
    /// Sampling window; boundary seen near its faces is a truncation.
    pub window: Aabb,
    pub level: Option<Arc<dyn LevelSet>>,
    index: PointIndex,
}

impl fmt::Debug for Sheet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sheet")
            .field("id", &self.id)
            .field("points", &self.points.len())
            .field("window", &self.window)
            .field("exact", &self.level.is_some())
            .finish()
    }
}

/// Where a point sits relative to a sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct Foot {
    pub distance: f64,
    pub point: Vec<f64>,
    /// Unit co-orienting normal at the foot.
    pub normal: Vec<f64>,
}

impl Sheet {
    pub fn new(
        id: VertexId,
        points: Vec<SamplePoint>,
        window: Aabb,
        level: Option<Arc<dyn LevelSet>>,
        spacing: f64,
    ) -> Self {
        let index = PointIndex::new(&points, spacing);
        Self { id, points, window, level, index }
    }

    pub fn index(&self) -> &PointIndex {
        &self.index
    }

    pub fn within(&self, p: &[f64], r: f64) -> Vec<usize> {
        self.index.within(&self.points, p, r)
    }

    /// Closest point of the sheet to `p`, if the sheet passes within `reach`.
    ///
    /// With a level set this is a Newton projection; otherwise the tangent
    /// plane of the nearest sample is used.
    pub fn foot(&self, p: &[f64], reach: f64, spacing: f64) -> Option<Foot> {
        if let Some(level) = &self.level {
            let (v, g) = level.eval(p);
            if v.abs() > 4.0 * reach * norm(&g) {
                return None;
            }
            let mut x = p.to_vec();
            for _ in 0..40 {
                let (v, g) = level.eval(&x);
                let gg = dot(&g, &g);
                if gg < 1e-24 {
                    return None;
                }
                if v.abs() <= 1e-14 * gg.sqrt() {
                    break;
                }
                x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= v * gi / gg);
            }
            let (v, g) = level.eval(&x);
            let d = dist(&x, p);
            if v.abs() > 1e-9 * norm(&g) || d > reach || !level.is_valid(&x) {
                return None;
            }
            return Some(Foot { distance: d, point: x, normal: normalized(&g)? });
        }
        let q = &self.points[self.index.nearest(&self.points, p, reach + 2.0 * spacing)?];
        let off = sub(p, &q.p);
        let h = dot(&q.normal, &off);
        let tangential = (dot(&off, &off) - h * h).max(0.0).sqrt();
        if h.abs() > reach || tangential > 1.5 * spacing {
            return None;
        }
        let point: Vec<f64> = p.iter().zip(&q.normal).map(|(x, n)| x - h * n).collect();
        Some(Foot { distance: h.abs(), point, normal: q.normal.clone() })
    }
}

/// Sheets sampled at a common spacing in a common ambient space.
#[derive(Debug, Clone)]
pub struct Arrangement {
    pub dim: usize,
    pub spacing: f64,
    pub sheets: Vec<Sheet>,
}

impl Arrangement {
    pub fn new(dim: usize, spacing: f64, sheets: Vec<Sheet>) -> Result<Self, ClassifierError> {
        if !(spacing > 0.0) {
            return Err(ClassifierError::Invalid(format!("spacing must be positive, got {spacing}")));
        }
        for s in &sheets {
            if s.window.dim() != dim {
                return Err(ClassifierError::Invalid(format!("sheet {} lives in dimension {}", s.id, s.window.dim())));
            }
            if let Some(sp) = s.points.iter().find(|sp| sp.p.len() != dim || sp.normal.len() != dim) {
                return Err(ClassifierError::Invalid(format!(
                    "sheet {} has a point of dimension {}",
                    s.id,
                    sp.p.len()
                )));
            }
        }
        let mut ids: Vec<VertexId> = sheets.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ClassifierError::Invalid("sheet ids repeat".into()));
        }
        Ok(Self { dim, spacing, sheets })
    }

    /// Samples every stratum, keeping the defining functions for distance queries.
    pub fn from_hypersurface(h: &ArborealHypersurface, spacing: f64) -> Result<Self, ClassifierError> {
        let mut sheets = Vec::new();
        for s in &h.strata {
            let points = sample_stratum(s, spacing)?;
            let level: Arc<dyn LevelSet> = Arc::new(s.clone());
            sheets.push(Sheet::new(s.owner, points, s.validity_box.clone(), Some(level), spacing));
        }
        Self::new(h.dim, spacing, sheets)
    }

    /// Moves every sheet by `offset`, in place.
    pub fn translate(&mut self, offset: &[f64]) {
        for s in &mut self.sheets {
            for sp in &mut s.points {
                sp.p.iter_mut().zip(offset).for_each(|(x, o)| *x += o);
            }
            s.window.lo.iter_mut().zip(offset).for_each(|(x, o)| *x += o);
            s.window.hi.iter_mut().zip(offset).for_each(|(x, o)| *x += o);
            s.level = s
                .level
                .take()
                .map(|inner| Arc::new(Translated { inner, offset: offset.to_vec() }) as Arc<dyn LevelSet>);
            s.index = PointIndex::new(&s.points, self.spacing);
        }
    }

    pub fn sheet(&self, id: VertexId) -> Option<&Sheet> {
        self.sheets.iter().find(|s| s.id == id)
    }
}

/// Samples a plane piece on the grid of its own frame.
pub fn plane_sheet(id: VertexId, piece: PlanePiece, spacing: f64) -> Result<Sheet, ClassifierError> {
    let d = piece.window.dim();
    let n = normalized(&piece.normal).ok_or_else(|| ClassifierError::Invalid("zero plane normal".into()))?;
    let piece = PlanePiece { offset: piece.offset / norm(&piece.normal), normal: n.clone(), ..piece };
    let frame = complement_frame(&n);
    let center: Vec<f64> = n.iter().map(|x| x * piece.offset).collect();
    let reach =
        piece.window.lo.iter().zip(&piece.window.hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt() + norm(&center);
    let half = (reach / spacing).ceil() * spacing;
    let mut points = Vec::new();
    for t in Aabb::cube(d - 1, half).grid(spacing) {
        let mut x = center.clone();
        for (tj, fj) in t.iter().zip(&frame) {
            x.iter_mut().zip(fj).for_each(|(xi, f)| *xi += tj * f);
        }
        if piece.is_valid(&x) {
            points.push(SamplePoint { p: x, stratum: id, frame: frame.clone(), normal: n.clone() });
        }
    }
    let window = piece.window.clone();
    Ok(Sheet::new(id, points, window, Some(Arc::new(piece)), spacing))
}
