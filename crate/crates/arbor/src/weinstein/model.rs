//! Liouville fields on R^{2n} with coordinates `(x_0, y_0, x_1, y_1, ...)` and
//! `omega = sum dx_j ^ dy_j`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::factor::{FactorField, FactorKind};
use super::profile::{blend, cotangent_weight, gate, k, step_smooth, tube, Weights};
use super::{WeinsteinError, MAX_MODEL_VERTICES};
use crate::trees::{canonical_form, SignedRootedTree, VertexId};

/// Finite-difference step of [`VectorFieldModel::jacobian`].
pub const JACOBIAN_STEP: f64 = 1e-5;
/// Finite-difference step of [`liouville_residual`].
pub const LIOUVILLE_STEP: f64 = 1e-4;
/// Points with `|V|` at most this are treated as zeros by [`lyapunov_check`].
pub const ZERO_SPEED: f64 = 1e-6;
/// Smoothness of the thickening cutoff; the field carries its second derivative.
const CUTOFF_ORDER: u32 = 6;
/// Ratio between the potential weights of consecutive pairs in a tree model.
const PAIR_WEIGHT_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StructureTag {
    FactorProduct { kinds: Vec<FactorKind> },
    Splice { tree: String },
    Homotopy { t: f64, delta: f64 },
}

/// One symplectic pair of a tree model, attached to a non-root vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePair {
    pub vertex: VertexId,
    pub sigma: f64,
    /// Pairs of the strict ancestors (root excluded).
    pub ancestors: Vec<usize>,
    /// Earlier pairs, in preorder, incomparable with this one.
    pub excluded: Vec<usize>,
    /// False only for the stabilizing pair of the one-vertex tree.
    pub birth_death: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Thicken {
    delta: f64,
    t: f64,
    kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Field {
    Product(Vec<FactorField>),
    Tree(Vec<TreePair>),
    Thicken(Thicken),
}

/// A flat piece of the constructed zero set: coordinates in `free` range over
/// the whole line, the rest are fixed at `point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroFlat {
    pub point: Vec<f64>,
    pub free: Vec<usize>,
    pub index: usize,
}

impl ZeroFlat {
    pub fn distance(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.point)
            .enumerate()
            .filter(|(i, _)| !self.free.contains(i))
            .map(|(_, (a, b))| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldModel {
    pub dim: usize,
    pub tag: StructureTag,
    field: Field,
}

impl VectorFieldModel {
    pub fn pairs(&self) -> usize {
        self.dim / 2
    }

    pub fn tree_pairs(&self) -> Option<&[TreePair]> {
        match &self.field {
            Field::Tree(p) => Some(p),
            _ => None,
        }
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim);
        match &self.field {
            Field::Product(fs) => fs.iter().enumerate().flat_map(|(j, f)| f.eval(z[2 * j], z[2 * j + 1])).collect(),
            Field::Tree(pairs) => tree_eval(pairs, z),
            Field::Thicken(th) => th.eval(z),
        }
    }

    /// Central differences, `J[i][j] = dV_i / dz_j`.
    pub fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.dim, self.dim);
        let mut w = z.to_vec();
        for c in 0..self.dim {
            w[c] = z[c] + JACOBIAN_STEP;
            let a = self.eval(&w);
            w[c] = z[c] - JACOBIAN_STEP;
            let b = self.eval(&w);
            w[c] = z[c];
            for r in 0..self.dim {
                j[(r, c)] = (a[r] - b[r]) / (2.0 * JACOBIAN_STEP);
            }
        }
        j
    }

    /// Lyapunov function value and gradient.
    pub fn lyapunov(&self, z: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(z.len(), self.dim);
        match &self.field {
            Field::Product(fs) => {
                let mut val = 0.0;
                let mut grad = Vec::with_capacity(self.dim);
                for (j, f) in fs.iter().enumerate() {
                    let (v, g) = f.potential(z[2 * j], z[2 * j + 1]);
                    val += v;
                    grad.extend(g);
                }
                (val, grad)
            }
            Field::Tree(pairs) => tree_lyapunov(pairs, z),
            Field::Thicken(th) => th.lyapunov(z),
        }
    }

    /// The zero set as built, for product and tree models. Empty for the
    /// thickening family, whose zero set is not flat.
    pub fn zero_flats(&self) -> Vec<ZeroFlat> {
        match &self.field {
            Field::Product(fs) => {
                let mut out = vec![ZeroFlat { point: Vec::new(), free: Vec::new(), index: 0 }];
                for f in fs {
                    let choices: Vec<(Vec<f64>, bool, usize)> = match f.kind {
                        FactorKind::Y | FactorKind::Cotangent => vec![(vec![0.0, 0.0], true, 0)],
                        _ => f.zeros().into_iter().map(|(p, i)| (p.to_vec(), false, i)).collect(),
                    };
                    out = out
                        .into_iter()
                        .flat_map(|flat| {
                            choices.iter().map(move |(p, free, i)| {
                                let mut next = flat.clone();
                                if *free {
                                    next.free.push(next.point.len());
                                }
                                next.point.extend(p);
                                next.index += i;
                                next
                            })
                        })
                        .collect();
                }
                out
            }
            Field::Tree(pairs) => tree_zero_flats(pairs),
            Field::Thicken(_) => Vec::new(),
        }
    }

    /// Thickening family data `(delta, t, kappa)`.
    pub fn thicken_params(&self) -> Option<(f64, f64, f64)> {
        match &self.field {
            Field::Thicken(th) => Some((th.delta, th.t, th.kappa)),
            _ => None,
        }
    }
}

pub fn product_model(factors: &[FactorField]) -> Result<VectorFieldModel, WeinsteinError> {
    if factors.is_empty() {
        return Err(WeinsteinError::Parameter("empty product".into()));
    }
    Ok(VectorFieldModel {
        dim: 2 * factors.len(),
        tag: StructureTag::FactorProduct { kinds: factors.iter().map(|f| f.kind).collect() },
        field: Field::Product(factors.to_vec()),
    })
}

fn preorder(tree: &SignedRootedTree, v: VertexId, out: &mut Vec<VertexId>) {
    out.push(v);
    for (c, _) in tree.children(v) {
        preorder(tree, c, out);
    }
}

/// Spliced model of a tree with `n + 1` vertices on R^{2n}; one pair per
/// non-root vertex in preorder. The one-vertex tree gets the cotangent field
/// on R^2.
pub fn build_model(tree: &SignedRootedTree) -> Result<VectorFieldModel, WeinsteinError> {
    let nv = tree.vertices.len();
    if nv > MAX_MODEL_VERTICES {
        return Err(WeinsteinError::TooManyVertices(nv));
    }
    tree.validate().map_err(|e| WeinsteinError::Parameter(e.to_string()))?;
    let tag = StructureTag::Splice { tree: canonical_form(tree) };
    if nv == 1 {
        let pair = TreePair {
            vertex: tree.root,
            sigma: 1.0,
            ancestors: Vec::new(),
            excluded: Vec::new(),
            birth_death: false,
            weight: 1.0,
        };
        return Ok(VectorFieldModel { dim: 2, tag, field: Field::Tree(vec![pair]) });
    }
    let mut order = Vec::new();
    preorder(tree, tree.root, &mut order);
    order.remove(0);
    let rank = |v: VertexId| order.iter().position(|&w| w == v);
    let ancestors = |v: VertexId| {
        let mut out = Vec::new();
        let mut cur = v;
        while let Some(e) = tree.parent_edge(cur) {
            if let Some(r) = rank(e.from) {
                out.push(r);
            }
            cur = e.from;
        }
        out.sort_unstable();
        out
    };
    let anc: Vec<Vec<usize>> = order.iter().map(|&v| ancestors(v)).collect();
    let pairs = order
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let sign = tree.parent_edge(v).and_then(|e| e.sign).unwrap_or(1);
            let excluded = (0..j).filter(|&i| !anc[j].contains(&i)).collect();
            TreePair {
                vertex: v,
                sigma: f64::from(sign),
                ancestors: anc[j].clone(),
                excluded,
                birth_death: true,
                weight: PAIR_WEIGHT_RATIO.powi(j as i32),
            }
        })
        .collect::<Vec<_>>();
    Ok(VectorFieldModel { dim: 2 * pairs.len(), tag, field: Field::Tree(pairs) })
}

/// Gate products `g_j` and their `y` derivatives `dg[j][l] = dg_j / dy_l`.
fn gates(pairs: &[TreePair], z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = pairs.len();
    let b: Vec<(f64, f64)> = pairs
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let (v, d) = gate(p.sigma * z[2 * j + 1]);
            (v, p.sigma * d)
        })
        .collect();
    let mut g = vec![0.0; n];
    let mut dg = vec![vec![0.0; n]; n];
    for (j, p) in pairs.iter().enumerate() {
        if !p.birth_death {
            continue;
        }
        let factors: Vec<(usize, f64, f64)> = p
            .ancestors
            .iter()
            .map(|&a| (a, b[a].0, b[a].1))
            .chain(p.excluded.iter().map(|&e| (e, 1.0 - b[e].0, -b[e].1)))
            .collect();
        g[j] = factors.iter().map(|f| f.1).product();
        for (i, &(l, _, d)) in factors.iter().enumerate() {
            if d != 0.0 {
                let rest: f64 = factors.iter().enumerate().filter(|(q, _)| *q != i).map(|(_, f)| f.1).product();
                dg[j][l] += d * rest;
            }
        }
    }
    (g, dg)
}

fn tree_eval(pairs: &[TreePair], z: &[f64]) -> Vec<f64> {
    let (g, dg) = gates(pairs, z);
    let n = pairs.len();
    let h: Vec<f64> = (0..n)
        .map(|i| {
            if pairs[i].birth_death {
                pairs[i].sigma * tube(z[2 * i]).0 * k(pairs[i].sigma * z[2 * i + 1]).0
            } else {
                0.0
            }
        })
        .collect();
    let mut v = vec![0.0; 2 * n];
    for (j, p) in pairs.iter().enumerate() {
        let (x, y) = (z[2 * j], z[2 * j + 1]);
        let (chi, dchi) = cotangent_weight(y);
        let (m, dm) = tube(x);
        let (kv, dk) = k(p.sigma * y);
        let hx = -chi * y / 2.0 + g[j] * p.sigma * dm * kv;
        let mixed: f64 = (0..n).map(|i| h[i] * dg[i][j]).sum();
        let hy = -x / 2.0 * (chi + y * dchi) + g[j] * m * dk + mixed;
        v[2 * j] = x / 2.0 + hy;
        v[2 * j + 1] = y / 2.0 - hx;
    }
    v
}

fn tree_lyapunov(pairs: &[TreePair], z: &[f64]) -> (f64, Vec<f64>) {
    let w = Weights::get();
    let (g, dg) = gates(pairs, z);
    let n = pairs.len();
    let mut val = 0.0;
    let mut grad = vec![0.0; 2 * n];
    // (1 - zeta) D per pair, for the gate derivatives
    let mut well = vec![0.0; n];
    for (j, p) in pairs.iter().enumerate() {
        let (x, y) = (z[2 * j], z[2 * j + 1]);
        let s = p.sigma * y;
        let (a, da) = w.a_spliced(s);
        let (d, dd) = if p.birth_death { w.dip(s) } else { (0.0, 0.0) };
        let (zt, dz) = blend(x);
        well[j] = (1.0 - zt) * d;
        val += p.weight * (a * x * x + y * y - g[j] * well[j]);
        grad[2 * j] += p.weight * (2.0 * a * x + g[j] * dz * d);
        grad[2 * j + 1] += p.weight * (p.sigma * da * x * x + 2.0 * y - g[j] * (1.0 - zt) * p.sigma * dd);
    }
    for (i, p) in pairs.iter().enumerate() {
        for l in 0..n {
            grad[2 * l + 1] -= p.weight * well[i] * dg[i][l];
        }
    }
    (val, grad)
}

fn tree_zero_flats(pairs: &[TreePair]) -> Vec<ZeroFlat> {
    let n = pairs.len();
    let mut out = Vec::new();
    // a zero chain is an ancestor-closed path ending at some pair, or empty
    let mut ends: Vec<Option<usize>> = vec![None];
    ends.extend((0..n).filter(|&j| pairs[j].birth_death).map(Some));
    for end in ends {
        let chain: Vec<usize> = match end {
            None => Vec::new(),
            Some(j) => {
                let mut c = pairs[j].ancestors.clone();
                c.push(j);
                c
            }
        };
        for levels in 0..(1usize << chain.len()) {
            let mut point = vec![0.0; 2 * n];
            let mut free = Vec::new();
            let mut index = 0;
            for j in 0..n {
                match chain.iter().position(|&c| c == j) {
                    Some(pos) => {
                        let top = levels >> pos & 1 == 1;
                        point[2 * j + 1] = pairs[j].sigma * if top { 2.0 } else { 1.0 };
                        index += usize::from(!top);
                    }
                    None => free.push(2 * j),
                }
            }
            out.push(ZeroFlat { point, free, index });
        }
    }
    out
}

impl Thicken {
    fn cutoff(&self, r: f64) -> (f64, f64, f64) {
        let (s, ds, dds) = step_smooth(CUTOFF_ORDER, (r - self.delta) / self.delta);
        (1.0 - s, -ds / self.delta, -dds / (self.delta * self.delta))
    }

    /// Radial coefficient `a(r)` of `Y_t = a q` and `a'(r)`.
    fn coefficient(&self, r: f64) -> (f64, f64) {
        let (f, df, ddf) = self.cutoff(r);
        (0.5 * (1.0 - self.t * f - self.t * df * r), -0.5 * self.t * (2.0 * df + ddf * r))
    }

    fn split(z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (z.iter().step_by(2).copied().collect(), z.iter().skip(1).step_by(2).copied().collect())
    }

    fn eval(&self, z: &[f64]) -> Vec<f64> {
        let (q, p) = Self::split(z);
        let r: f64 = q.iter().map(|v| v * v).sum();
        let qp: f64 = q.iter().zip(&p).map(|(a, b)| a * b).sum();
        let (a, da) = self.coefficient(r);
        q.iter().zip(&p).flat_map(|(&qi, &pi)| [a * qi, pi - a * pi - 2.0 * da * qi * qp]).collect()
    }

    fn lyapunov(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let (q, p) = Self::split(z);
        let r: f64 = q.iter().map(|v| v * v).sum();
        let pp: f64 = p.iter().map(|v| v * v).sum();
        let (a, _) = self.coefficient(r);
        let psi = (1.0 - self.t * self.cutoff(r).0) * r;
        let e = (self.kappa * psi).exp();
        let val = psi + pp * e;
        let gq = 2.0 * a * 2.0 * (1.0 + self.kappa * pp * e);
        (val, q.iter().zip(&p).flat_map(|(&qi, &pi)| [gq * qi, 2.0 * e * pi]).collect())
    }

    /// Smallest `kappa` making the potential gradient-like: the `p` block of the
    /// field is `(1 - DY) p`, whose worst eigenvalue is paid for by `|Y|^2`.
    fn fit_kappa(&mut self) {
        let mut kappa: f64 = 0.0;
        for i in 1..=30_000 {
            let r = 4.0 * self.delta * i as f64 / 30_000.0;
            let (a, da) = self.coefficient(r);
            let top = a.max(a + 2.0 * da * r);
            let speed = a * a * r;
            if top > 1.0 && speed > 0.0 {
                kappa = kappa.max((top - 1.0) / (2.0 * speed));
            }
        }
        self.kappa = 1.25 * kappa;
    }
}

/// Cotangent lift of `Y_t` plus `p d_p` on R^{2m}, pairs `(q_i, p_i)`.
pub fn thicken_family(delta: f64, t: f64, m: usize) -> Result<VectorFieldModel, WeinsteinError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(WeinsteinError::Parameter(format!("delta must be positive, got {delta}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(WeinsteinError::Parameter(format!("t must lie in [0, 1], got {t}")));
    }
    if m == 0 {
        return Err(WeinsteinError::Parameter("need at least one q coordinate".into()));
    }
    let mut th = Thicken { delta, t, kappa: 0.0 };
    th.fit_kappa();
    Ok(VectorFieldModel { dim: 2 * m, tag: StructureTag::Homotopy { t, delta }, field: Field::Thicken(th) })
}

/// `Y_t` radial coefficient of the thickening family at `|q|^2 = r`.
pub fn thicken_coefficient(model: &VectorFieldModel, r: f64) -> Option<f64> {
    match &model.field {
        Field::Thicken(th) => Some(th.coefficient(r).0),
        _ => None,
    }
}

/// Uniform points in `[-half, half]^dim`.
pub fn random_points(dim: usize, count: usize, half: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..dim).map(|_| rng.random_range(-half..=half)).collect()).collect()
}

/// Largest deviation of `d(iota_V omega)` from `omega` over `points`, with
/// fourth-order central differences of step [`LIOUVILLE_STEP`].
pub fn liouville_residual(model: &VectorFieldModel, points: &[Vec<f64>]) -> f64 {
    let n = model.dim;
    let primitive = |z: &[f64]| {
        let v = model.eval(z);
        let mut l = vec![0.0; n];
        for j in 0..n / 2 {
            l[2 * j] = -v[2 * j + 1];
            l[2 * j + 1] = v[2 * j];
        }
        l
    };
    let mut worst = 0.0f64;
    for z in points {
        let mut d = vec![vec![0.0; n]; n];
        let mut w = z.clone();
        for i in 0..n {
            let mut at = |k: f64| {
                w[i] = z[i] + k * LIOUVILLE_STEP;
                let l = primitive(&w);
                w[i] = z[i];
                l
            };
            let (a2, a1, b1, b2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
            for kk in 0..n {
                d[i][kk] = (8.0 * (a1[kk] - b1[kk]) - (a2[kk] - b2[kk])) / (12.0 * LIOUVILLE_STEP);
            }
        }
        for i in 0..n {
            for kk in i + 1..n {
                let omega = if i % 2 == 0 && kk == i + 1 { 1.0 } else { 0.0 };
                worst = worst.max((d[i][kk] - d[kk][i] - omega).abs());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub checked: usize,
    /// Points skipped as zeros (`|V| <= 1e-6`).
    pub skipped: usize,
    /// Smallest `dphi(V)`.
    pub min_pairing: f64,
    /// Smallest `dphi(V) - delta (|V|^2 + |dphi|^2)`.
    pub worst_margin: f64,
    /// Largest `delta` for which the inequality holds at every checked point.
    pub max_delta: f64,
    pub delta: f64,
    pub holds: bool,
}

pub fn lyapunov_check(model: &VectorFieldModel, points: &[Vec<f64>], delta: f64) -> LyapunovReport {
    let mut rep = LyapunovReport {
        checked: 0,
        skipped: 0,
        min_pairing: f64::INFINITY,
        worst_margin: f64::INFINITY,
        max_delta: f64::INFINITY,
        delta,
        holds: true,
    };
    for z in points {
        let v = model.eval(z);
        let nv2: f64 = v.iter().map(|a| a * a).sum();
        if nv2.sqrt() <= ZERO_SPEED {
            rep.skipped += 1;
            continue;
        }
        let (_, g) = model.lyapunov(z);
        let ng2: f64 = g.iter().map(|a| a * a).sum();
        let pair: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        rep.checked += 1;
        rep.min_pairing = rep.min_pairing.min(pair);
        rep.worst_margin = rep.worst_margin.min(pair - delta * (nv2 + ng2));
        rep.max_delta = rep.max_delta.min(pair / (nv2 + ng2));
    }
    rep.holds = rep.worst_margin >= 0.0;
    rep
}
