//! Arboreal recognition of sampled hypersurface arrangements.
//!
//! Every predicate runs on samples with explicit tolerances. Geometry that the
//! samples cannot decide is reported as inconclusive, never as a failure.

mod arrangement;
mod local;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arrangement::{plane_sheet, Arrangement, Foot, LevelSet, PlanePiece, PointIndex, Sheet, Translated};
pub use local::{
    corner_stratification, tangency_order, CornerPoint, CornerStratification, Tangency, TangencyFlag,
    MAX_TANGENCY_ORDER,
};

use crate::geom::{dot, norm, orthonormal_rows, singular_values, sub, Aabb};
use crate::hypersurface::{ArborealHypersurface, HypersurfaceError};
use crate::trees::{canonical_form, Edge, Sign, SignedRootedTree, TreeJson, VertexId};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Hypersurface(#[from] HypersurfaceError),
    #[error("point is not within tolerance of sheet {0}")]
    NotOnSheet(VertexId),
}

/// Tolerances of the sampled predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTol {
    /// Sample spacing of the arrangement.
    pub spacing: f64,
    /// Distance under which a boundary point lies on another sheet.
    pub contact_dist: f64,
    /// Normal angle under which two sheets count as tangent.
    pub contact_angle: f64,
    /// Smallest singular value of stacked normal spaces for transversality.
    pub transverse_min: f64,
    /// Share of a sheet's boundary samples needed to accept an attachment.
    pub vote_fraction: f64,
    pub quadratic_agreement: f64,
    pub cubic_agreement: f64,
    /// Distance under which two sheets coincide.
    pub duplicate_dist: f64,
}

impl ClassifierTol {
    pub fn for_spacing(spacing: f64) -> Self {
        Self {
            spacing,
            contact_dist: 1e-3,
            contact_angle: 2e-2,
            transverse_min: 0.1,
            vote_fraction: 0.05,
            quadratic_agreement: 0.05,
            cubic_agreement: 0.5,
            duplicate_dist: 1e-6,
        }
    }

    pub fn corner_radius(&self) -> f64 {
        3.5 * self.spacing
    }

    pub fn fit_radius(&self) -> f64 {
        4.0 * self.spacing
    }

    /// Neighbourhood whose centre of mass decides an attachment sign.
    pub fn side_radius(&self) -> f64 {
        (5.0 * self.spacing).max(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Every point is interior to a unique sheet.
    UniqueInterior,
    /// Boundaries attach tangentially along a unique nested chain.
    Attachment,
    /// Unrelated corners meet transversally.
    Transversality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Arboreal,
    Generalized,
    NonArboreal { condition: Condition, reason: String },
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub condition: Condition,
    pub point: Vec<f64>,
    pub sheets: Vec<VertexId>,
    pub detail: String,
}

/// A recovered edge between sheets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub sheet: VertexId,
    pub onto: VertexId,
    pub sign: Sign,
    /// Contact order at `point`, capped at [`MAX_TANGENCY_ORDER`].
    pub tangency_order: u8,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermReport {
    pub verdict: Verdict,
    pub dim: usize,
    /// Root plus one vertex per sheet, plus one marked vertex per free boundary.
    pub tree: Option<TreeJson>,
    pub canonical: Option<String>,
    pub attachments: Vec<Attachment>,
    pub witnesses: Vec<Witness>,
    /// Boundary samples per sheet, by corner codimension.
    pub corner_counts: BTreeMap<VertexId, Vec<usize>>,
}

impl GermReport {
    fn new(dim: usize, verdict: Verdict) -> Self {
        Self {
            verdict,
            dim,
            tree: None,
            canonical: None,
            attachments: Vec::new(),
            witnesses: Vec::new(),
            corner_counts: BTreeMap::new(),
        }
    }

    pub fn is_arboreal(&self) -> bool {
        self.verdict == Verdict::Arboreal
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// What a boundary sample touches.
struct Contact {
    point: usize,
    /// The only tangent sheet (position) and its unit normal at the foot.
    tangent: Option<(usize, Vec<f64>)>,
    transverse: Option<usize>,
    /// Several sheets are tangent here, as happens near deeper corners.
    ambiguous: bool,
}

fn contacts(arr: &Arrangement, i: usize, corners: &CornerStratification, tol: &ClassifierTol) -> Vec<Contact> {
    let sheet = &arr.sheets[i];
    let boundary: Vec<usize> = corners
        .points
        .iter()
        .enumerate()
        .filter(|(_, c)| c.codim >= 1 && !c.truncated && !c.inconclusive)
        .map(|(k, _)| k)
        .collect();
    boundary
        .par_iter()
        .map(|&k| {
            let sp = &sheet.points[k];
            let mut tangent: Vec<(usize, Vec<f64>)> = Vec::new();
            let mut transverse = None;
            for (j, other) in arr.sheets.iter().enumerate() {
                if j == i {
                    continue;
                }
                let Some(f) = other.foot(&sp.p, tol.contact_dist, arr.spacing) else { continue };
                if f.distance > tol.contact_dist {
                    continue;
                }
                if dot(&sp.normal, &f.normal).abs().min(1.0).acos() <= tol.contact_angle {
                    tangent.push((j, f.normal));
                } else if transverse.is_none() {
                    transverse = Some(j);
                }
            }
            if tangent.is_empty() && transverse.is_none() {
                // a boundary stopping just short of a crossing sheet, straight ahead
                let reach = tol.corner_radius() + tol.spacing;
                let ahead = &corners.points[k].outward[0];
                transverse = arr.sheets.iter().enumerate().position(|(j, other)| {
                    j != i
                        && other.foot(&sp.p, reach, arr.spacing).is_some_and(|f| {
                            let step = sub(&f.point, &sp.p);
                            dot(&sp.normal, &f.normal).abs().min(1.0).acos() > tol.contact_angle
                                && dot(&step, ahead) >= 0.9 * norm(&step)
                        })
                });
            }
            let ambiguous = tangent.len() > 1;
            Contact { point: k, tangent: if ambiguous { None } else { tangent.pop() }, transverse, ambiguous }
        })
        .collect()
}

/// Per-sheet attachment evidence.
struct Boundary {
    contacts: Vec<Contact>,
    /// Sheets (positions) the boundary lies on tangentially.
    onto: BTreeSet<usize>,
    free: bool,
}

fn witness_point(arr: &Arrangement, i: usize, k: usize) -> Vec<f64> {
    arr.sheets[i].points[k].p.clone()
}

/// Signed side of sheet `i` relative to the co-orientation of sheet `j`,
/// from the signed distances of `i`'s samples near their contacts.
fn side(arr: &Arrangement, i: usize, j: usize, b: &Boundary, tol: &ClassifierTol) -> Option<(Sign, usize)> {
    let sheet = &arr.sheets[i];
    let lower = &arr.sheets[j];
    let r = tol.side_radius();
    let on_j: Vec<usize> =
        b.contacts.iter().filter(|c| c.tangent.as_ref().is_some_and(|t| t.0 == j)).map(|c| c.point).collect();
    let first = *on_j.first()?;
    let stride = on_j.len().div_ceil(SIDE_PROBES).max(1);
    let total: f64 = on_j
        .par_iter()
        .step_by(stride)
        .map(|&k| {
            sheet
                .within(&sheet.points[k].p, r)
                .into_iter()
                .filter_map(|q| {
                    let x = &sheet.points[q].p;
                    lower.foot(x, r, arr.spacing).map(|f| dot(&f.normal, &sub(x, &f.point)))
                })
                .sum::<f64>()
        })
        .sum();
    if total.abs() < 1e-12 {
        return None;
    }
    Some((if total > 0.0 { 1 } else { -1 }, first))
}

/// Contacts used for a sign decision.
const SIDE_PROBES: usize = 64;

fn inconclusive(dim: usize, reason: String) -> GermReport {
    GermReport::new(dim, Verdict::Inconclusive { reason })
}

fn non_arboreal(dim: usize, w: Witness, reason: String) -> GermReport {
    let mut r = GermReport::new(dim, Verdict::NonArboreal { condition: w.condition, reason });
    r.witnesses.push(w);
    r
}

/// Probe points of a sheet away from its window faces, at most `cap`.
fn probes(sheet: &Sheet, margin: f64, cap: usize) -> Vec<usize> {
    let inside: Vec<usize> =
        (0..sheet.points.len()).filter(|&k| sheet.window.depth(&sheet.points[k].p) >= margin).collect();
    let stride = inside.len().div_ceil(cap).max(1);
    inside.into_iter().step_by(stride).collect()
}

/// Two sheets sharing an open set.
fn find_duplicate(arr: &Arrangement, tol: &ClassifierTol) -> Option<Witness> {
    let margin = tol.corner_radius() + tol.spacing;
    for (i, a) in arr.sheets.iter().enumerate() {
        let pr = probes(a, margin, 400);
        if pr.is_empty() {
            continue;
        }
        for b in arr.sheets.iter().skip(i + 1) {
            let hits: Vec<usize> = pr
                .iter()
                .copied()
                .filter(|&k| {
                    let sp = &a.points[k];
                    b.foot(&sp.p, tol.duplicate_dist, arr.spacing).is_some_and(|f| {
                        f.distance <= tol.duplicate_dist && dot(&sp.normal, &f.normal).abs() >= 1.0 - 1e-9
                    })
                })
                .collect();
            if 2 * hits.len() > pr.len() {
                return Some(Witness {
                    condition: Condition::UniqueInterior,
                    point: a.points[hits[0]].p.clone(),
                    sheets: vec![a.id, b.id],
                    detail: format!("{} of {} probes of sheet {} lie on sheet {}", hits.len(), pr.len(), a.id, b.id),
                });
            }
        }
    }
    None
}

/// Normal space of a sheet at sample `k`: normal plus boundary outward directions.
fn normal_space(arr: &Arrangement, corners: &[CornerStratification], i: usize, k: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![arr.sheets[i].points[k].normal.clone()];
    rows.extend(corners[i].points[k].outward.iter().cloned());
    orthonormal_rows(&rows)
}

/// Condition (2): corners of sheets from distinct components meet transversally.
fn find_tangle(
    arr: &Arrangement,
    corners: &[CornerStratification],
    component: &[usize],
    tol: &ClassifierTol,
) -> Option<Witness> {
    let n = arr.sheets.len();
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let comps: BTreeSet<usize> = s.iter().map(|&i| component[i]).collect();
        if s.len() >= 2 && s.len() <= arr.dim + 1 && comps.len() == s.len() {
            subsets.push(s);
        }
    }
    subsets.sort_by_key(|s| (s.len(), s.clone()));
    let reach = 0.5 * arr.spacing;
    for s in subsets {
        let first = &arr.sheets[s[0]];
        let margin = tol.corner_radius() + tol.spacing;
        let found = probes(first, margin, usize::MAX).into_par_iter().find_map_first(|k| {
            let p = &first.points[k].p;
            let mut spaces = vec![normal_space(arr, corners, s[0], k)];
            for &j in &s[1..] {
                let other = &arr.sheets[j];
                let f = other.foot(p, reach, arr.spacing)?;
                let q = other.index().nearest(&other.points, &f.point, 2.0 * arr.spacing)?;
                if other.window.depth(&other.points[q].p) < margin {
                    return None;
                }
                let mut rows = vec![f.normal.clone()];
                rows.extend(corners[j].points[q].outward.iter().cloned());
                spaces.push(orthonormal_rows(&rows));
            }
            let expected: usize = spaces.iter().map(Vec::len).sum();
            let rows: Vec<Vec<f64>> = spaces.into_iter().flatten().collect();
            let sv = singular_values(&rows);
            let rank = sv.iter().filter(|&&x| x >= tol.transverse_min).count();
            if expected > arr.dim {
                return Some((k, format!("corners of total codimension {expected} meet in dimension {}", arr.dim)));
            }
            if rank < expected {
                let smin = sv.last().copied().unwrap_or(0.0);
                return Some((
                    k,
                    format!(
                        "intersection of dimension {} where {} is expected (smallest singular value {smin:.3e})",
                        arr.dim - rank,
                        arr.dim - expected
                    ),
                ));
            }
            None
        });
        if let Some((k, detail)) = found {
            return Some(Witness {
                condition: Condition::Transversality,
                point: first.points[k].p.clone(),
                sheets: s.iter().map(|&i| arr.sheets[i].id).collect(),
                detail,
            });
        }
    }
    None
}

/// Decides whether the arrangement is arboreal and recovers its signed rooted tree.
pub fn check_arboreal(arr: &Arrangement, tol: &ClassifierTol) -> Result<GermReport, ClassifierError> {
    if !(tol.spacing > 0.0 && tol.contact_dist > 0.0 && tol.contact_angle > 0.0) {
        return Err(ClassifierError::Invalid("tolerances must be positive".into()));
    }
    let dim = arr.dim;
    let n = arr.sheets.len();
    if let Some(w) = find_duplicate(arr, tol) {
        return Ok(non_arboreal(dim, w, "duplicate sheet".into()));
    }
    let corners: Vec<CornerStratification> = arr.sheets.iter().map(|s| corner_stratification(s, tol)).collect();
    for (s, c) in arr.sheets.iter().zip(&corners) {
        if c.inconclusive_fraction() > 0.2 {
            return Ok(inconclusive(dim, format!("sheet {} is too sparsely sampled", s.id)));
        }
    }
    let mut corner_counts = BTreeMap::new();
    for (s, c) in arr.sheets.iter().zip(&corners) {
        let mut counts = vec![0usize; dim];
        for p in c.points.iter().filter(|p| !p.truncated && p.codim >= 1) {
            counts[p.codim.min(dim - 1)] += 1;
        }
        corner_counts.insert(s.id, counts);
    }

    // condition (1): tangential attachments of every boundary
    let mut bounds = Vec::with_capacity(n);
    for i in 0..n {
        let cs = contacts(arr, i, &corners[i], tol);
        let need = ((tol.vote_fraction * cs.len() as f64).ceil() as usize).max(2);
        let mut votes = vec![0usize; n];
        let mut crossing = vec![0usize; n];
        let mut free = 0;
        for c in &cs {
            match (&c.tangent, c.transverse, c.ambiguous) {
                (_, _, true) => {}
                (Some((j, _)), _, _) => votes[*j] += 1,
                (None, Some(j), _) => crossing[j] += 1,
                (None, None, _) => free += 1,
            }
        }
        if let Some(j) = (0..n).find(|&j| crossing[j] >= need) {
            let c = cs.iter().find(|c| c.tangent.is_none() && !c.ambiguous && c.transverse == Some(j)).expect("voted");
            let w = Witness {
                condition: Condition::Attachment,
                point: witness_point(arr, i, c.point),
                sheets: vec![arr.sheets[i].id, arr.sheets[j].id],
                detail: format!(
                    "boundary of sheet {} ends on sheet {} transversally",
                    arr.sheets[i].id, arr.sheets[j].id
                ),
            };
            return Ok(non_arboreal(dim, w, "tangency order 0 at a boundary".into()));
        }
        let onto: BTreeSet<usize> = (0..n).filter(|&j| votes[j] >= need).collect();
        bounds.push(Boundary { contacts: cs, onto, free: free >= need });
    }

    // ancestors as the transitive closure of attachments
    let mut anc: Vec<BTreeSet<usize>> = bounds.iter().map(|b| b.onto.clone()).collect();
    loop {
        let next: Vec<BTreeSet<usize>> = (0..n)
            .map(|i| {
                let mut s = anc[i].clone();
                for &j in &anc[i] {
                    s.extend(anc[j].iter().copied());
                }
                s
            })
            .collect();
        if next == anc {
            break;
        }
        anc = next;
    }
    let mut parent: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let sheet_id = arr.sheets[i].id;
        if anc[i].contains(&i) {
            let c = &bounds[i].contacts[0];
            let w = Witness {
                condition: Condition::Attachment,
                point: witness_point(arr, i, c.point),
                sheets: anc[i].iter().map(|&j| arr.sheets[j].id).collect(),
                detail: format!("sheet {sheet_id} attaches to itself through a cycle"),
            };
            return Ok(non_arboreal(dim, w, "attachments are cyclic".into()));
        }
        if anc[i].is_empty() {
            continue;
        }
        let deepest: Vec<usize> = anc[i]
            .iter()
            .copied()
            .filter(|&j| {
                let mut rest = anc[i].clone();
                rest.remove(&j);
                anc[j] == rest
            })
            .collect();
        if deepest.len() != 1 {
            let c = bounds[i].contacts.iter().find(|c| c.tangent.is_some()).expect("attached");
            let w = Witness {
                condition: Condition::Attachment,
                point: witness_point(arr, i, c.point),
                sheets: std::iter::once(sheet_id).chain(anc[i].iter().map(|&j| arr.sheets[j].id)).collect(),
                detail: format!("sheets under the boundary of sheet {sheet_id} do not form a chain"),
            };
            return Ok(non_arboreal(dim, w, "attachment chain is not unique".into()));
        }
        parent[i] = Some(deepest[0]);
    }
    // boundary samples near a sheet that is not an ancestor
    for i in 0..n {
        let need = ((tol.vote_fraction * bounds[i].contacts.len() as f64).ceil() as usize).max(2);
        let mut stray = vec![0usize; n];
        for c in &bounds[i].contacts {
            if let Some((j, _)) = &c.tangent {
                if !anc[i].contains(j) {
                    stray[*j] += 1;
                }
            }
        }
        if let Some(j) = (0..n).find(|&j| stray[j] >= need) {
            let c = bounds[i].contacts.iter().find(|c| c.tangent.as_ref().is_some_and(|t| t.0 == j)).expect("voted");
            let w = Witness {
                condition: Condition::Attachment,
                point: witness_point(arr, i, c.point),
                sheets: vec![arr.sheets[i].id, arr.sheets[j].id],
                detail: "boundary touches a sheet outside its chain".into(),
            };
            return Ok(non_arboreal(dim, w, "attachment chain is not unique".into()));
        }
    }

    // tree assembly
    let ids: Vec<VertexId> = arr.sheets.iter().map(|s| s.id).collect();
    let mut next_id = ids.iter().copied().max().map_or(0, |m| m + 1);
    let root = if ids.contains(&0) {
        next_id += 1;
        next_id - 1
    } else {
        0
    };
    let mut vertices = vec![root];
    vertices.extend(&ids);
    let mut edges = Vec::new();
    let mut marked = BTreeSet::new();
    let mut attachments = Vec::new();
    let mut top: Vec<VertexId> = vec![0; n];
    for i in 0..n {
        let below = match parent[i] {
            Some(j) => {
                let Some((sign, k)) = side(arr, i, j, &bounds[i], tol) else {
                    return Ok(inconclusive(
                        dim,
                        format!("side of sheet {} against sheet {} is undecided", ids[i], ids[j]),
                    ));
                };
                let p = witness_point(arr, i, k);
                let order = tangency_order(&arr.sheets[i], &arr.sheets[j], &p, tol).map_or(1, |t| t.order);
                attachments.push(Attachment { sheet: ids[i], onto: ids[j], sign, tangency_order: order, point: p });
                Some((ids[j], sign))
            }
            None => None,
        };
        if bounds[i].free {
            let m = next_id;
            next_id += 1;
            vertices.push(m);
            marked.insert(m);
            edges.push(match below {
                Some((v, s)) => Edge { from: v, to: m, sign: Some(s) },
                None => Edge { from: root, to: m, sign: None },
            });
            edges.push(Edge { from: m, to: ids[i], sign: Some(1) });
        } else {
            edges.push(match below {
                Some((v, s)) => Edge { from: v, to: ids[i], sign: Some(s) },
                None => Edge { from: root, to: ids[i], sign: None },
            });
        }
    }
    let tree = SignedRootedTree { vertices, root, edges };
    tree.validate().map_err(|e| ClassifierError::Invalid(format!("recovered tree: {e}")))?;
    for (i, t) in top.iter_mut().enumerate() {
        let mut v = ids[i];
        while let Some(e) = tree.parent_edge(v) {
            if e.from == root {
                break;
            }
            v = e.from;
        }
        *t = v;
    }
    let comp_ids: Vec<VertexId> = top.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let component: Vec<usize> = top.iter().map(|t| comp_ids.binary_search(t).expect("listed")).collect();

    // condition (2)
    if let Some(w) = find_tangle(arr, &corners, &component, tol) {
        let mut r = non_arboreal(dim, w, "unrelated corners are not transverse".into());
        r.corner_counts = corner_counts;
        return Ok(r);
    }

    let verdict = if tree.vertices.len() > dim + 1 + marked.len() {
        Verdict::Inconclusive { reason: format!("{} sheets exceed a germ in dimension {dim}", n) }
    } else if marked.is_empty() {
        Verdict::Arboreal
    } else {
        Verdict::Generalized
    };
    let mut r = GermReport::new(dim, verdict);
    r.canonical = Some(canonical_form(&tree));
    r.tree = Some(TreeJson::from_tree(&tree, &marked));
    r.attachments = attachments;
    r.corner_counts = corner_counts;
    Ok(r)
}

/// Translates `h2` by `offset` and classifies the union with `h1`.
pub fn check_generic_union(
    h1: &ArborealHypersurface,
    h2: &ArborealHypersurface,
    offset: &[f64],
    tol: &ClassifierTol,
) -> Result<GermReport, ClassifierError> {
    if h1.dim != h2.dim || offset.len() != h1.dim {
        return Err(ClassifierError::Invalid("hypersurfaces and offset must share a dimension".into()));
    }
    if norm(offset) > MAX_UNION_OFFSET {
        return Err(ClassifierError::Invalid(format!("offset norm {} exceeds {MAX_UNION_OFFSET}", norm(offset))));
    }
    let a = Arrangement::from_hypersurface(h1, tol.spacing)?;
    let mut b = Arrangement::from_hypersurface(h2, tol.spacing)?;
    b.translate(offset);
    let shift = a.sheets.iter().map(|s| s.id).max().map_or(0, |m| m + 1);
    let mut sheets = a.sheets;
    for s in b.sheets {
        sheets.push(Sheet::new(s.id + shift, s.points, s.window, s.level, tol.spacing));
    }
    let arr = Arrangement::new(h1.dim, tol.spacing, sheets)?;
    check_arboreal(&arr, tol)
}

pub const MAX_UNION_OFFSET: f64 = 0.2;

/// Four planes through the codimension-2 line `x_1 = x_2 = 0` of R^3, the
/// hypersurface picture of a product of two A_2 germs.
pub fn product_fixture(spacing: f64) -> Result<Arrangement, ClassifierError> {
    let window = Aabb::cube(3, 1.0);
    let normals = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [1.0, -1.0, 0.0]];
    let sheets = normals
        .iter()
        .enumerate()
        .map(|(k, nrm)| {
            let piece =
                PlanePiece { normal: nrm.to_vec(), offset: 0.0, constraints: Vec::new(), window: window.clone() };
            plane_sheet(k as VertexId + 1, piece, spacing)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Arrangement::new(3, spacing, sheets)
}
