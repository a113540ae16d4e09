//! Piecewise-linear and smoothed arboreal hypersurfaces of a signed forest.
//!
//! Vertex `v` owns the coordinate `x_v`, in increasing vertex-id order. The
//! stratum of a depth-0 vertex is the hyperplane `x_v = 0`. Deeper strata are
//! the zero sets of the nested composition of the profile `f` along the chain
//! from the component root.

mod profile;
mod sample;

pub use profile::{smooth_step, CurvePoint, SmoothingProfile, MAX_SHARPNESS};
pub use sample::{
    lagrangian_model, sample_hypersurface, sample_stratum, LagrangianLabel, LagrangianModelSample, LagrangianPoint,
    SamplePoint, NEWTON_MAX_STEPS, NEWTON_TOL,
};

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::geom::{norm, Aabb};
use crate::trees::{chain_to_root, leafy_extend_with_map, LeafyForest, SignedForest, TreeError, VertexChain, VertexId};

pub const DEFAULT_BOX_HALF_WIDTH: f64 = 5.0;
/// Room past the deepest corner.
pub const BOX_MARGIN: f64 = 1.5;
pub const MEMBERSHIP_TOL: f64 = 1e-6;
pub const MAX_AMBIENT_DIM: usize = 6;
const GRADIENT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypersurfaceError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("gradient norm {0:e} below the numeric floor")]
    DegenerateNormal(f64),
    #[error("point has dimension {got}, expected {want}")]
    Dimension { got: usize, want: usize },
}

#[derive(Debug, Clone)]
pub enum Source {
    Forest(SignedForest),
    Leafy(LeafyForest),
}

#[derive(Debug, Clone)]
enum Model {
    Pl,
    Smoothed(Arc<SmoothingProfile>),
}

/// One co-oriented sheet.
#[derive(Debug, Clone)]
pub struct Stratum {
    pub owner: VertexId,
    pub chain: VertexChain,
    /// Coordinate of the equality `x_owner = 0`.
    pub coord: usize,
    /// Coordinates of the chain vertices, component root first.
    pub chain_coords: Vec<usize>,
    /// PL inequalities `sign * x_coord >= 0`, one per chain edge.
    pub pl_constraints: Vec<(usize, i8)>,
    pub validity_box: Aabb,
    model: Model,
}

impl Stratum {
    pub fn dim(&self) -> usize {
        self.validity_box.dim()
    }

    pub fn is_smoothed(&self) -> bool {
        matches!(self.model, Model::Smoothed(_))
    }

    /// Defining function and its gradient.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match &self.model {
            Model::Pl => {
                let mut g = vec![0.0; x.len()];
                g[self.coord] = 1.0;
                (x[self.coord], g)
            }
            Model::Smoothed(p) => {
                let (v, g, _) = eval_chain(p, &self.chain_coords, &self.chain.signs, x);
                (v, g)
            }
        }
    }

    /// Whether `x` lies in the region where this stratum is defined.
    pub fn is_valid(&self, x: &[f64]) -> bool {
        if !self.validity_box.contains(x) {
            return false;
        }
        match &self.model {
            Model::Pl => self.pl_constraints.iter().all(|&(c, s)| f64::from(s) * x[c] >= 0.0),
            Model::Smoothed(p) => eval_chain(p, &self.chain_coords, &self.chain.signs, x).2,
        }
    }
}

/// Nested evaluation along a chain. Returns value, gradient and whether every
/// level stays before its tangency with the lower sheet.
fn eval_chain(p: &SmoothingProfile, coords: &[usize], signs: &[i8], x: &[f64]) -> (f64, Vec<f64>, bool) {
    let k = signs.len();
    let mut grad = vec![0.0; x.len()];
    if k == 0 {
        grad[coords[0]] = 1.0;
        return (x[coords[0]], grad, true);
    }
    // innermost level uses x of the last vertex as its second argument
    let mut g = x[coords[k]];
    grad[coords[k]] = 1.0;
    let mut valid = true;
    for j in (1..=k).rev() {
        let s = f64::from(signs[j - 1]);
        let (a, b) = (s * x[coords[j - 1]], s * g);
        valid &= p.before_crossing(a, b);
        let (fv, fg) = p.eval(a, b);
        g = s * fv;
        grad.iter_mut().for_each(|v| *v *= fg[1]);
        grad[coords[j - 1]] += fg[0];
    }
    (g, grad, valid)
}

/// Stratified union of co-oriented sheets.
#[derive(Debug, Clone)]
pub struct ArborealHypersurface {
    pub dim: usize,
    /// Vertex owning each coordinate.
    pub coords: Vec<VertexId>,
    pub strata: Vec<Stratum>,
    pub source: Source,
    pub box_half_width: f64,
}

impl ArborealHypersurface {
    pub fn stratum_of(&self, v: VertexId) -> Option<&Stratum> {
        self.strata.iter().find(|s| s.owner == v)
    }

    /// Keeps only the strata owned by `owners`; the ambient space is unchanged.
    pub fn retain_strata(mut self, owners: &[VertexId]) -> Self {
        self.strata.retain(|s| owners.contains(&s.owner));
        self
    }

    pub fn validity_box(&self) -> Aabb {
        Aabb::cube(self.dim, self.box_half_width)
    }
}

/// Box half width holding every corner: depth `d` corners sit near height `d h`.
fn box_half_width(model: &Model, max_depth: usize) -> f64 {
    match model {
        Model::Pl => DEFAULT_BOX_HALF_WIDTH,
        Model::Smoothed(p) => DEFAULT_BOX_HALF_WIDTH.max(max_depth as f64 * p.crossing_height() + BOX_MARGIN),
    }
}

fn build(
    forest: &SignedForest,
    suppressed: &BTreeSet<VertexId>,
    model: Model,
    source: Source,
) -> Result<ArborealHypersurface, HypersurfaceError> {
    forest.validate()?;
    let coords = forest.vertices();
    let dim = coords.len();
    if dim > MAX_AMBIENT_DIM {
        return Err(HypersurfaceError::Parameter(format!("ambient dimension {dim} exceeds {MAX_AMBIENT_DIM}")));
    }
    let index = |v: VertexId| coords.binary_search(&v).expect("vertex of forest");
    let chains = coords.iter().map(|&v| chain_to_root(forest, v)).collect::<Result<Vec<_>, _>>()?;
    let half = box_half_width(&model, chains.iter().map(|c| c.depth()).max().unwrap_or(0));
    let mut strata = Vec::new();
    for (&v, chain) in coords.iter().zip(chains).filter(|(v, _)| !suppressed.contains(v)) {
        let chain_coords: Vec<usize> = chain.vertices.iter().map(|&w| index(w)).collect();
        let pl_constraints = chain.signs.iter().enumerate().map(|(j, &s)| (chain_coords[j], s)).collect();
        strata.push(Stratum {
            owner: v,
            coord: index(v),
            chain,
            chain_coords,
            pl_constraints,
            validity_box: Aabb::cube(dim, half),
            model: model.clone(),
        });
    }
    Ok(ArborealHypersurface { dim, coords, strata, source, box_half_width: half })
}

/// PL model: `x_v = 0` cut out by the signed chain inequalities.
pub fn build_pl_strata(forest: &SignedForest) -> Result<ArborealHypersurface, HypersurfaceError> {
    build(forest, &BTreeSet::new(), Model::Pl, Source::Forest(forest.clone()))
}

/// Smoothed model. For a leafy source the sheets of the marked leaves are
/// omitted and the sheets above them keep a free boundary.
pub fn build_smoothed(
    source: &Source,
    profile: &Arc<SmoothingProfile>,
) -> Result<ArborealHypersurface, HypersurfaceError> {
    match source {
        Source::Forest(f) => build(f, &BTreeSet::new(), Model::Smoothed(profile.clone()), source.clone()),
        Source::Leafy(lf) => {
            let (ext, _) = leafy_extend_with_map(lf)?;
            build(&ext, &lf.marked, Model::Smoothed(profile.clone()), source.clone())
        }
    }
}

/// Value and gradient of the smoothed defining function of vertex `alpha`.
pub fn eval_g(
    forest: &SignedForest,
    alpha: VertexId,
    profile: &SmoothingProfile,
    point: &[f64],
) -> Result<(f64, Vec<f64>), HypersurfaceError> {
    let coords = forest.vertices();
    if point.len() != coords.len() {
        return Err(HypersurfaceError::Dimension { got: point.len(), want: coords.len() });
    }
    let chain = chain_to_root(forest, alpha)?;
    let idx: Vec<usize> = chain.vertices.iter().map(|v| coords.binary_search(v).expect("forest vertex")).collect();
    let (v, g, _) = eval_chain(profile, &idx, &chain.signs, point);
    Ok((v, g))
}

/// Strata whose defining function is within `tol` of zero at a valid point.
pub fn membership(h: &ArborealHypersurface, point: &[f64], tol: f64) -> Vec<(VertexId, f64)> {
    h.strata
        .iter()
        .filter_map(|s| {
            let (v, _) = s.eval(point);
            (v.abs() <= tol && s.is_valid(point)).then_some((s.owner, v))
        })
        .collect()
}

/// Unit co-orienting covector of a stratum.
pub fn conormal_direction(stratum: &Stratum, point: &[f64]) -> Result<Vec<f64>, HypersurfaceError> {
    let (_, g) = stratum.eval(point);
    let n = norm(&g);
    if n < GRADIENT_FLOOR {
        return Err(HypersurfaceError::DegenerateNormal(n));
    }
    Ok(g.iter().map(|x| x / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{delete_root, Edge, SignedRootedTree};

    pub(crate) fn chain_forest(signs: &[i8]) -> SignedForest {
        let n = signs.len() as u32 + 1;
        let mut edges = vec![Edge { from: 0, to: 1, sign: None }];
        for (i, &s) in signs.iter().enumerate() {
            edges.push(Edge { from: i as u32 + 1, to: i as u32 + 2, sign: Some(s) });
        }
        delete_root(&SignedRootedTree { vertices: (0..=n).collect(), root: 0, edges })
    }

    fn prof() -> Arc<SmoothingProfile> {
        Arc::new(SmoothingProfile::new(1.0).unwrap())
    }

    #[test]
    fn pl_strata() {
        let h = build_pl_strata(&chain_forest(&[])).unwrap();
        assert_eq!(h.dim, 1);
        assert!(h.strata[0].pl_constraints.is_empty());
        let h = build_pl_strata(&chain_forest(&[1])).unwrap();
        assert_eq!(h.strata[1].coord, 1);
        assert_eq!(h.strata[1].pl_constraints, vec![(0, 1)]);
        assert!(h.strata[1].is_valid(&[0.5, 0.0]) && !h.strata[1].is_valid(&[-0.5, 0.0]));
        let h = build_pl_strata(&chain_forest(&[-1])).unwrap();
        assert_eq!(h.strata[1].pl_constraints, vec![(0, -1)]);
        let e = build_pl_strata(&SignedForest::default()).unwrap();
        assert!(e.strata.is_empty() && e.dim == 0);
    }

    #[test]
    fn recursion_examples() {
        let p = prof();
        let f = chain_forest(&[]);
        let (v, g) = eval_g(&f, 1, &p, &[0.3]).unwrap();
        assert_eq!((v, g), (0.3, vec![1.0]));
        let f = chain_forest(&[1]);
        assert_eq!(eval_g(&f, 2, &p, &[2.0, 0.0]).unwrap().0, 0.0);
        let f = chain_forest(&[-1]);
        assert_eq!(eval_g(&f, 2, &p, &[-2.0, 0.0]).unwrap().0, 0.0);
        assert!(eval_g(&f, 2, &p, &[1.0]).is_err());
        assert!(eval_g(&f, 9, &p, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn chain_rule_gradient() {
        let p = prof();
        for signs in [vec![1, 1], vec![1, -1], vec![-1, 1, -1]] {
            let f = chain_forest(&signs);
            let last = signs.len() as u32 + 1;
            let x: Vec<f64> =
                (0..f.len()).map(|i| 0.3 + 0.17 * i as f64 * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let (_, g) = eval_g(&f, last, &p, &x).unwrap();
            for k in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += 1e-6;
                xm[k] -= 1e-6;
                let fd = (eval_g(&f, last, &p, &xp).unwrap().0 - eval_g(&f, last, &p, &xm).unwrap().0) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-7, "{signs:?} {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn membership_and_normals() {
        let p = prof();
        let h = build_smoothed(&Source::Forest(chain_forest(&[])), &p).unwrap();
        assert_eq!(membership(&h, &[0.0], MEMBERSHIP_TOL), vec![(1, 0.0)]);
        let h = build_smoothed(&Source::Forest(chain_forest(&[1])), &p).unwrap();
        assert_eq!(membership(&h, &[2.0, 0.0], MEMBERSHIP_TOL), vec![(2, 0.0)]);
        assert!(membership(&h, &[-2.5, 2.5], MEMBERSHIP_TOL).is_empty());
        let n = conormal_direction(&h.strata[1], &[2.0, 0.0]).unwrap();
        assert_eq!(n, vec![0.0, 1.0]);
        assert_eq!(conormal_direction(&h.strata[0], &[0.0, 1.0]).unwrap(), vec![1.0, 0.0]);
        // approaching the attachment the normal turns into that of x_1 = 0
        let curve = p.zero_polyline(0.0, p.turn_length(), 1e-3);
        let near = curve[curve.len() - 2].p;
        let n = conormal_direction(&h.strata[1], &near).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-6 && n[1].abs() < 1e-3);
    }

    #[test]
    fn leafy_sheet_has_free_boundary() {
        let p = prof();
        let lf = LeafyForest { forest: chain_forest(&[]), marked: BTreeSet::from([1]) };
        let h = build_smoothed(&Source::Leafy(lf), &p).unwrap();
        assert_eq!(h.dim, 2);
        assert_eq!(h.strata.len(), 1);
        assert_eq!(h.strata[0].owner, 2);
        assert!(h.strata[0].is_valid(&[0.5, 0.2]));
        assert!(!h.strata[0].is_valid(&[-0.5, p.crossing_height()]));
    }
}
