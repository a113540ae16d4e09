//! Front maps `R^d -> R^(d+1)` and their Thom-Boardman strata on a grid.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CuspError;
use crate::geom::{pca, Aabb, CellIndex};

/// Required ratio between the smallest kept and largest dropped singular value.
pub const GAP_FACTOR: f64 = 10.0;
const JACOBIAN_STEP: f64 = 1e-6;
const HESSIAN_STEP: f64 = 1e-4;
const JET_STEP: f64 = 1e-3;
/// Offsets along the kernel at which the conormal is compared.
const LIFT_STEPS: [f64; 3] = [1e-2, 1.5e-2, 2e-2];

pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub struct FrontMap {
    pub name: String,
    /// Domain dimension `d`; the target has dimension `d + 1`.
    pub dim: usize,
    pub domain: Aabb,
    eval: MapFn,
    jacobian: Option<JacobianFn>,
}

impl fmt::Debug for FrontMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrontMap")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("closed_form_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl FrontMap {
    pub fn new(name: &str, domain: Aabb, eval: MapFn) -> Result<Self, CuspError> {
        let dim = domain.dim();
        if dim == 0 || domain.is_empty() {
            return Err(CuspError::Parameter("front map needs a non-empty domain box".into()));
        }
        let probe = eval(&domain.lo);
        if probe.len() != dim + 1 {
            return Err(CuspError::Dimension { expected: dim + 1, got: probe.len() });
        }
        Ok(Self { name: name.into(), dim, domain, eval, jacobian: None })
    }

    pub fn with_jacobian(mut self, jac: JacobianFn) -> Self {
        self.jacobian = Some(jac);
        self
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    /// `(d+1) x d` Jacobian, closed form when available.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(x);
        }
        let mut out = DMatrix::zeros(self.dim + 1, self.dim);
        let mut y = x.to_vec();
        for i in 0..self.dim {
            y[i] = x[i] + JACOBIAN_STEP;
            let fp = self.eval(&y);
            y[i] = x[i] - JACOBIAN_STEP;
            let fm = self.eval(&y);
            y[i] = x[i];
            for r in 0..=self.dim {
                out[(r, i)] = (fp[r] - fm[r]) / (2.0 * JACOBIAN_STEP);
            }
        }
        out
    }

    fn fixture(
        name: &str,
        dim: usize,
        min_dim: usize,
        half: f64,
        tail: fn(&[f64]) -> Vec<f64>,
        jac: fn(&[f64]) -> Vec<Vec<f64>>,
    ) -> Result<Self, CuspError> {
        if dim < min_dim || !(half > 0.0) {
            return Err(CuspError::Parameter(format!("{name} needs dimension >= {min_dim} and a positive box")));
        }
        // the leading `dim - min_dim` coordinates are passed through unchanged
        let lead = dim - min_dim;
        let eval: MapFn = Arc::new(move |x: &[f64]| {
            let mut out = x[..lead].to_vec();
            out.extend(tail(&x[lead..]));
            out
        });
        let jacobian: JacobianFn = Arc::new(move |x: &[f64]| {
            let mut m = DMatrix::zeros(dim + 1, dim);
            for i in 0..lead {
                m[(i, i)] = 1.0;
            }
            for (r, row) in jac(&x[lead..]).into_iter().enumerate() {
                for (c, v) in row.into_iter().enumerate() {
                    m[(lead + r, lead + c)] = v;
                }
            }
            m
        });
        Ok(Self::new(name, Aabb::cube(dim, half), eval)?.with_jacobian(jacobian))
    }

    /// `(q, u) -> (q, u, 0)`.
    pub fn immersion(dim: usize, half: f64) -> Result<Self, CuspError> {
        Self::fixture("immersion", dim, 1, half, |x| vec![x[0], 0.0], |_| vec![vec![1.0], vec![0.0]])
    }

    /// `(q, u) -> (q, u^2, u^3)`.
    pub fn cusp(dim: usize, half: f64) -> Result<Self, CuspError> {
        Self::fixture(
            "cusp",
            dim,
            1,
            half,
            |x| vec![x[0] * x[0], x[0].powi(3)],
            |x| vec![vec![2.0 * x[0]], vec![3.0 * x[0] * x[0]]],
        )
    }

    /// `(q, u) -> (q, u^2, 0)`.
    pub fn fold(dim: usize, half: f64) -> Result<Self, CuspError> {
        Self::fixture("fold", dim, 1, half, |x| vec![x[0] * x[0], 0.0], |x| vec![vec![2.0 * x[0]], vec![0.0]])
    }

    /// `(q, a, u) -> (q, a, 4u^3 + 2au, 3u^4 + au^2)`, deepest at `a = u = 0`.
    pub fn swallowtail(dim: usize, half: f64) -> Result<Self, CuspError> {
        Self::fixture(
            "swallowtail",
            dim,
            2,
            half,
            |x| {
                let (a, u) = (x[0], x[1]);
                vec![a, 4.0 * u.powi(3) + 2.0 * a * u, 3.0 * u.powi(4) + a * u * u]
            },
            |x| {
                let (a, u) = (x[0], x[1]);
                vec![vec![1.0, 0.0], vec![2.0 * u, 12.0 * u * u + 2.0 * a], vec![u * u, 12.0 * u.powi(3) + 2.0 * a * u]]
            },
        )
    }
}

/// Thin SVD sorted by decreasing singular value.
struct Spectrum {
    sv: Vec<f64>,
    left: Vec<DVector<f64>>,
    right: Vec<DVector<f64>>,
}

fn spectrum(j: &DMatrix<f64>) -> Spectrum {
    let svd = j.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Spectrum {
        sv: order.iter().map(|&i| svd.singular_values[i]).collect(),
        left: order.iter().map(|&i| u.column(i).into_owned()).collect(),
        right: order.iter().map(|&i| vt.row(i).transpose()).collect(),
    }
}

/// Number of singular values below `tol`, or `None` when the spectrum has no
/// gap of [`GAP_FACTOR`] at that split.
pub fn rank_drop(sv: &[f64], tol: f64) -> Option<usize> {
    let d = sv.len();
    let k = sv.iter().filter(|s| **s < tol).count();
    if k > 0 && k < d && sv[d - k - 1] < GAP_FACTOR * sv[d - k] {
        return None;
    }
    Some(k)
}

/// Count of values at least `GAP_FACTOR * tol`, `None` if any falls in between.
fn gapped_rank(sv: &[f64], tol: f64) -> Option<usize> {
    if sv.iter().any(|s| *s >= tol && *s < GAP_FACTOR * tol) {
        return None;
    }
    Some(sv.iter().filter(|s| **s >= GAP_FACTOR * tol).count())
}

/// Projector onto the complement of the span of the first `keep` left vectors.
fn coimage_projector(sp: &Spectrum, keep: usize) -> DMatrix<f64> {
    let n = sp.left[0].len();
    let mut p = DMatrix::identity(n, n);
    for u in &sp.left[..keep] {
        p -= u * u.transpose();
    }
    p
}

/// Unit conormal from the signed maximal minors, `None` at singular points.
fn conormal(j: &DMatrix<f64>) -> Option<DVector<f64>> {
    let d = j.ncols();
    let n = DVector::from_fn(d + 1, |i, _| {
        let rows: Vec<usize> = (0..=d).filter(|&r| r != i).collect();
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign * j.select_rows(&rows).determinant()
    });
    let len = n.norm();
    (len > 1e-12).then(|| n / len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TbType {
    Sigma0,
    Sigma10,
    /// Outside `Sigma^{1,0}`; see [`Degeneracy`].
    Sigma11,
    /// Rank drop two or more.
    Sigma2,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// The differential restricted to the `Sigma^1` tangent drops rank.
    Restriction,
    /// The conormal does not turn along the kernel, so the Legendrian lift
    /// is not immersed.
    Lift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbPoint {
    pub x: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub rank_drop: Option<usize>,
    pub ty: TbType,
    pub degeneracy: Option<Degeneracy>,
    /// Rank of the intrinsic derivative at a `Sigma^1` point, the local
    /// codimension of `Sigma^1` when it is smooth there.
    pub codim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbStratification {
    pub map: String,
    pub dim: usize,
    pub grid: f64,
    pub tol: f64,
    pub points: Vec<TbPoint>,
    /// Median of the pointwise codimensions over `Sigma^1`.
    pub sigma1_codim: Option<usize>,
    /// Codimension from the local dimension of the `Sigma^1` sample cloud;
    /// only meaningful when the grid resolves `Sigma^1` as a connected cloud.
    pub sigma1_cloud_codim: Option<usize>,
}

impl TbStratification {
    /// Points with rank drop exactly `k`.
    pub fn sigma(&self, k: usize) -> Vec<&TbPoint> {
        self.points.iter().filter(|p| p.rank_drop == Some(k)).collect()
    }

    pub fn of_type(&self, ty: TbType) -> Vec<&TbPoint> {
        self.points.iter().filter(|p| p.ty == ty).collect()
    }
}

/// Second-order data at a corank-one point: the `Sigma^1` tangent and the
/// ranks deciding `Sigma^{1,0}`.
fn classify_sigma1(
    fm: &FrontMap,
    x: &[f64],
    j: &DMatrix<f64>,
    sp: &Spectrum,
    tol: f64,
) -> (TbType, Option<Degeneracy>, Option<usize>) {
    let d = fm.dim;
    let kernel = &sp.right[d - 1];
    let proj = coimage_projector(sp, d - 1);
    // intrinsic derivative: how the kernel image leaves the image of dF
    let mut m = DMatrix::zeros(d + 1, d);
    let mut y = x.to_vec();
    for i in 0..d {
        y[i] = x[i] + HESSIAN_STEP;
        let jp = fm.jacobian(&y);
        y[i] = x[i] - HESSIAN_STEP;
        let jm = fm.jacobian(&y);
        y[i] = x[i];
        let col = &proj * ((jp - jm) * kernel / (2.0 * HESSIAN_STEP));
        m.set_column(i, &col);
    }
    let ms = spectrum(&m);
    let Some(r) = gapped_rank(&ms.sv, tol) else {
        return (TbType::Inconclusive, None, None);
    };
    if r == 0 {
        return (TbType::Sigma11, Some(Degeneracy::Restriction), Some(0));
    }
    let tangent: Vec<DVector<f64>> = ms.right[r..].to_vec();
    if !tangent.is_empty() {
        let jt = DMatrix::from_columns(&tangent.iter().map(|t| j * t).collect::<Vec<_>>());
        let rs = spectrum(&jt);
        match gapped_rank(&rs.sv, tol) {
            None => return (TbType::Inconclusive, None, Some(r)),
            Some(rt) if rt < tangent.len() => return (TbType::Sigma11, Some(Degeneracy::Restriction), Some(r)),
            _ => {}
        }
    }
    // the conormal must turn along the kernel
    for step in LIFT_STEPS {
        let at = |s: f64| -> Vec<f64> { x.iter().zip(kernel.iter()).map(|(a, k)| a + s * k).collect() };
        let (Some(np), Some(nm)) = (conormal(&fm.jacobian(&at(step))), conormal(&fm.jacobian(&at(-step)))) else {
            continue;
        };
        let nm = if np.dot(&nm) < 0.0 { -nm } else { nm };
        let turn = (np - nm).norm() / (2.0 * step);
        return match gapped_rank(&[turn], tol) {
            Some(1) => (TbType::Sigma10, None, Some(r)),
            Some(_) => (TbType::Sigma11, Some(Degeneracy::Lift), Some(r)),
            None => (TbType::Inconclusive, None, Some(r)),
        };
    }
    (TbType::Inconclusive, None, Some(r))
}

fn classify(fm: &FrontMap, x: &[f64], tol: f64) -> TbPoint {
    let j = fm.jacobian(x);
    let sp = spectrum(&j);
    let k = rank_drop(&sp.sv, tol);
    let (ty, degeneracy, codim) = match k {
        None => (TbType::Inconclusive, None, None),
        Some(0) => (TbType::Sigma0, None, None),
        Some(1) => classify_sigma1(fm, x, &j, &sp, tol),
        Some(_) => (TbType::Sigma2, None, None),
    };
    TbPoint { x: x.to_vec(), singular_values: sp.sv, rank_drop: k, ty, degeneracy, codim }
}

/// Median local dimension of a point cloud sampled on a grid of spacing `grid`.
fn local_dimension(points: &[Vec<f64>], grid: f64) -> Option<usize> {
    if points.is_empty() {
        return None;
    }
    let radius = 2.01 * grid;
    let idx = CellIndex::new(points, radius);
    let mut dims: Vec<usize> = points
        .iter()
        .map(|p| {
            let nb: Vec<Vec<f64>> = idx.within(points, p, radius).into_iter().map(|j| points[j].clone()).collect();
            if nb.len() < 2 {
                return 0;
            }
            let (ev, _) = pca(&nb);
            let top = ev.first().copied().unwrap_or(0.0);
            ev.iter().filter(|e| **e > 0.25 * top && **e > 0.0).count()
        })
        .collect();
    dims.sort_unstable();
    Some(dims[dims.len() / 2])
}

/// Classifies every grid point of the domain box by rank drop and, on
/// `Sigma^1`, by the `Sigma^{1,0}` conditions.
pub fn tb_stratify(fm: &FrontMap, grid: f64, tol: f64) -> Result<TbStratification, CuspError> {
    if !(grid > 0.0 && tol > 0.0) {
        return Err(CuspError::Parameter("grid and tolerance must be positive".into()));
    }
    let pts = fm.domain.grid(grid);
    let points: Vec<TbPoint> = pts.par_iter().map(|x| classify(fm, x, tol)).collect();
    let s1: Vec<Vec<f64>> = points.iter().filter(|p| p.rank_drop == Some(1)).map(|p| p.x.clone()).collect();
    let sigma1_cloud_codim = local_dimension(&s1, grid).map(|k| fm.dim - k);
    let mut codims: Vec<usize> = points.iter().filter_map(|p| p.codim).collect();
    codims.sort_unstable();
    let sigma1_codim = codims.get(codims.len() / 2).copied();
    Ok(TbStratification { map: fm.name.clone(), dim: fm.dim, grid, tol, points, sigma1_codim, sigma1_cloud_codim })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartVerdict {
    Sigma10,
    NotSigma10,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartCheck {
    pub point: Vec<f64>,
    pub kernel: Vec<f64>,
    /// Second and third derivatives along the kernel, modulo the image of dF.
    pub jet2: Vec<f64>,
    pub jet3: Vec<f64>,
    /// Singular values of `[jet2 jet3]`.
    pub conditioning: [f64; 2],
    pub verdict: ChartVerdict,
}

/// Compares the jets of `fm` at a corank-one point with those of
/// `(q, u) -> (q, u^2, u^3)`: the second and third kernel derivatives must
/// span the cokernel.
pub fn cusp_chart_check(fm: &FrontMap, x: &[f64], tol: f64) -> Result<ChartCheck, CuspError> {
    if x.len() != fm.dim {
        return Err(CuspError::Dimension { expected: fm.dim, got: x.len() });
    }
    let d = fm.dim;
    let sp = spectrum(&fm.jacobian(x));
    match rank_drop(&sp.sv, tol) {
        Some(1) => {}
        k => return Err(CuspError::NotSigma1 { rank_drop: k }),
    }
    let kernel = sp.right[d - 1].clone();
    let proj = coimage_projector(&sp, d - 1);
    let f = |s: f64| -> DVector<f64> {
        let y: Vec<f64> = x.iter().zip(kernel.iter()).map(|(a, k)| a + s * k).collect();
        DVector::from_vec(fm.eval(&y))
    };
    let h = JET_STEP;
    let (f0, f1, fm1, f2, fm2) = (f(0.0), f(h), f(-h), f(2.0 * h), f(-2.0 * h));
    let jet2 = &proj * ((&f1 - 2.0 * &f0 + &fm1) / (h * h));
    let jet3 = &proj * ((&f2 - 2.0 * &f1 + 2.0 * &fm1 - &fm2) / (2.0 * h * h * h));
    let s = spectrum(&DMatrix::from_columns(&[jet2.clone(), jet3.clone()])).sv;
    let verdict = match gapped_rank(&s, tol) {
        Some(2) => ChartVerdict::Sigma10,
        Some(_) => ChartVerdict::NotSigma10,
        None => ChartVerdict::Inconclusive,
    };
    Ok(ChartCheck {
        point: x.to_vec(),
        kernel: kernel.iter().copied().collect(),
        jet2: jet2.iter().copied().collect(),
        jet3: jet3.iter().copied().collect(),
        conditioning: [s[0], s[1]],
        verdict,
    })
}
