//! Stable manifolds, skeleta and joints by integrating the field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::VectorFieldModel;
use super::zeros::{find_zero_components, ZeroComponent, ZeroScan, ZeroTol};
use super::WeinsteinError;
use crate::geom::{dist, dot, norm, normalized, pca, sub, Aabb, CellIndex};

/// Absolute local error tolerance of the integrator.
pub const FLOW_TOL: f64 = 1e-9;
/// Radius of the `E^-` spheres the stable manifolds are grown from.
pub const SEED_RADIUS: f64 = 1e-3;
/// Speed below which a trajectory counts as having reached a zero.
const STALL_SPEED: f64 = 1e-10;

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    LeftBox,
    Horizon,
    Stalled,
    /// Step size collapsed; the trajectory is cut there.
    StepFailure,
}

/// Integrates `dz/dt = sign V(z)` from `z0`, calling `visit` after each
/// accepted step. The step is capped so that each moves at most `max_move`.
pub fn integrate(
    model: &VectorFieldModel,
    z0: &[f64],
    sign: f64,
    horizon: f64,
    max_move: f64,
    bx: &Aabb,
    mut visit: impl FnMut(&[f64]),
) -> (Vec<f64>, Stop) {
    let f = |z: &[f64]| -> Vec<f64> { model.eval(z).into_iter().map(|v| sign * v).collect() };
    let n = z0.len();
    let mut z = z0.to_vec();
    let mut t = 0.0;
    let mut dt: f64 = 1e-2;
    let mut k1 = f(&z);
    while t < horizon {
        let speed = norm(&k1);
        if speed < STALL_SPEED {
            return (z, Stop::Stalled);
        }
        dt = dt.min(max_move / speed).min(horizon - t);
        if dt < 1e-12 {
            return (z, Stop::StepFailure);
        }
        let mut k: Vec<Vec<f64>> = vec![k1.clone()];
        for s in 1..7 {
            let zs: Vec<f64> = (0..n).map(|i| z[i] + dt * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>()).collect();
            k.push(f(&zs));
        }
        let z5: Vec<f64> = (0..n).map(|i| z[i] + dt * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>()).collect();
        let err =
            (0..n).map(|i| (dt * (0..7).map(|j| (B5[j] - B4[j]) * k[j][i]).sum::<f64>()).abs()).fold(0.0, f64::max);
        if err <= FLOW_TOL {
            t += dt;
            z = z5;
            k1 = k.swap_remove(6);
            visit(&z);
            if !bx.contains(&z) {
                return (z, Stop::LeftBox);
            }
        }
        let fac = if err > 0.0 { 0.9 * (FLOW_TOL / err).powf(0.2) } else { 5.0 };
        dt *= fac.clamp(0.2, 5.0);
    }
    (z, Stop::Horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonPoint {
    pub p: Vec<f64>,
    pub bone: usize,
    pub frame: Vec<Vec<f64>>,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bone {
    pub label: usize,
    /// Dimension of the marrow (zero component).
    pub marrow_dim: usize,
    pub index: usize,
    pub lagrangian: bool,
    pub phi: f64,
    pub centroid: Vec<f64>,
    /// Trajectories cut by step failure.
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSample {
    pub dim: usize,
    pub bones: Vec<Bone>,
    pub points: Vec<SkeletonPoint>,
    pub zeros: ZeroScan,
}

impl SkeletonSample {
    pub fn bone_points(&self, label: usize) -> Vec<&SkeletonPoint> {
        self.points.iter().filter(|p| p.bone == label).collect()
    }

    pub fn lagrangian_bones(&self) -> usize {
        self.bones.iter().filter(|b| b.lagrangian).count()
    }

    /// Largest `|omega(e_a, e_b)|` over the frames of all points.
    pub fn isotropy_defect(&self) -> f64 {
        self.points
            .iter()
            .flat_map(|p| {
                let f = &p.frame;
                (0..f.len()).flat_map(move |a| (a + 1..f.len()).map(move |b| omega(&f[a], &f[b]).abs()))
            })
            .fold(0.0, f64::max)
    }
}

pub fn omega(u: &[f64], v: &[f64]) -> f64 {
    (0..u.len() / 2).map(|j| u[2 * j] * v[2 * j + 1] - u[2 * j + 1] * v[2 * j]).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonParams {
    /// Spacing of the zero scan.
    pub grid: f64,
    /// Arc length between recorded trajectory points.
    pub spacing: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl SkeletonParams {
    pub fn new(grid: f64, spacing: f64) -> Self {
        Self { grid, spacing, horizon: 60.0, seed: 0 }
    }
}

/// Unit directions on the sphere of `basis`, dense enough that neighbouring
/// trajectories stay about `spacing` apart out to distance `reach`.
fn sphere_directions(basis: &[Vec<f64>], reach: f64, spacing: f64, seed: u64) -> Vec<Vec<f64>> {
    let k = basis.len();
    let combine = |c: &[f64]| -> Vec<f64> {
        let mut v = vec![0.0; basis[0].len()];
        for (ci, b) in c.iter().zip(basis) {
            v.iter_mut().zip(b).for_each(|(x, y)| *x += ci * y);
        }
        v
    };
    match k {
        0 => Vec::new(),
        1 => vec![combine(&[1.0]), combine(&[-1.0])],
        2 => {
            let m = ((std::f64::consts::TAU * reach / spacing).ceil() as usize).max(8);
            (0..m)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / m as f64;
                    combine(&[a.cos(), a.sin()])
                })
                .collect()
        }
        _ => {
            let m = ((reach / spacing).powi(k as i32 - 1) * 4.0).ceil() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(m);
            while out.len() < m {
                let c: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
                let r = norm(&c);
                if r > 0.1 && r <= 1.0 {
                    out.push(combine(&c.iter().map(|x| x / r).collect::<Vec<_>>()));
                }
            }
            out
        }
    }
}

/// Stable manifold of one zero component: the marrow points plus backward
/// trajectories from its `E^-` spheres, unthinned.
pub fn stable_manifold_sample(
    model: &VectorFieldModel,
    component: &ZeroComponent,
    bx: &Aabb,
    params: &SkeletonParams,
) -> Result<(Vec<Vec<f64>>, usize), WeinsteinError> {
    if !component.morse_bott {
        return Err(WeinsteinError::Parameter(format!("component {} is not Morse-Bott*", component.label)));
    }
    let reach = bx.lo.iter().zip(&bx.hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let mut seeds = Vec::new();
    for zp in &component.points {
        for d in sphere_directions(&zp.split.minus, reach, params.spacing, params.seed) {
            seeds.push(zp.p.iter().zip(&d).map(|(a, b)| a + SEED_RADIUS * b).collect::<Vec<f64>>());
        }
    }
    let runs: Vec<(Vec<Vec<f64>>, Stop)> = seeds
        .par_iter()
        .map(|s| {
            let mut pts = Vec::new();
            let mut last = s.clone();
            let (_, stop) = integrate(model, s, -1.0, params.horizon, 0.5 * params.spacing, bx, |z| {
                if dist(z, &last) >= params.spacing && bx.contains(z) {
                    last = z.to_vec();
                    pts.push(last.clone());
                }
            });
            (pts, stop)
        })
        .collect();
    let flagged = runs.iter().filter(|r| r.1 == Stop::StepFailure).count();
    let mut out: Vec<Vec<f64>> = component.points.iter().map(|p| p.p.clone()).collect();
    out.extend(runs.into_iter().flat_map(|r| r.0));
    Ok((out, flagged))
}

/// Keep points at least `gap` apart, first come first kept.
fn thin(points: Vec<Vec<f64>>, gap: f64) -> Vec<Vec<f64>> {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut idx = CellIndex::new(&[], gap);
    for p in points {
        if idx.within(&kept, &p, gap).is_empty() {
            idx.insert(&p, kept.len());
            kept.push(p);
        }
    }
    kept
}

/// Union of the stable manifolds of all zero components, labelled by component.
pub fn skeleton(
    model: &VectorFieldModel,
    bx: &Aabb,
    params: &SkeletonParams,
) -> Result<SkeletonSample, WeinsteinError> {
    if !(params.grid > 0.0 && params.spacing > 0.0 && params.horizon > 0.0) {
        return Err(WeinsteinError::Parameter("skeleton parameters must be positive".into()));
    }
    let zeros = find_zero_components(model, bx, &ZeroTol::new(params.grid))?;
    let n = model.pairs();
    let mut bones = Vec::new();
    let mut points = Vec::new();
    for c in &zeros.components {
        let (raw, flagged) = stable_manifold_sample(model, c, bx, params)?;
        let kept = thin(raw, 0.5 * params.spacing);
        let bone_dim = c.dim + c.index;
        let index = CellIndex::new(&kept, 2.5 * params.spacing);
        let frames: Vec<Vec<Vec<f64>>> = kept
            .par_iter()
            .map(|p| {
                let nb: Vec<Vec<f64>> =
                    index.within(&kept, p, 2.5 * params.spacing).into_iter().map(|j| kept[j].clone()).collect();
                if nb.len() < bone_dim + 1 {
                    return Vec::new();
                }
                pca(&nb).1.into_iter().take(bone_dim).collect()
            })
            .collect();
        for (p, frame) in kept.into_iter().zip(frames) {
            let phi = model.lyapunov(&p).0;
            points.push(SkeletonPoint { p, bone: c.label, frame, phi });
        }
        bones.push(Bone {
            label: c.label,
            marrow_dim: c.dim,
            index: c.index,
            lagrangian: c.is_lagrangian(n),
            phi: c.phi,
            centroid: c.centroid.clone(),
            flagged,
        });
    }
    Ok(SkeletonSample { dim: model.dim, bones, points, zeros })
}

/// Distance from the end of a forward trajectory of each point to the marrow
/// of its own bone.
pub fn flow_residuals(
    model: &VectorFieldModel,
    skel: &SkeletonSample,
    bx: &Aabb,
    horizon: f64,
    stride: usize,
) -> Vec<f64> {
    let marrow: Vec<Vec<Vec<f64>>> =
        skel.zeros.components.iter().map(|c| c.points.iter().map(|p| p.p.clone()).collect()).collect();
    skel.points
        .par_iter()
        .step_by(stride.max(1))
        .map(|sp| {
            let (end, _) = integrate(model, &sp.p, 1.0, horizon, 0.05, bx, |_| {});
            marrow[sp.bone].iter().map(|m| dist(m, &end)).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSample {
    pub bone_hi: usize,
    pub bone_lo: usize,
    /// Joint points on the lower bone, ambient coordinates.
    pub points: Vec<Vec<f64>>,
    /// The same points in marrow coordinates of the lower bone.
    pub front: Vec<Vec<f64>>,
    /// Mean direction from the joint into the upper bone.
    pub coorientation: Option<Vec<f64>>,
    /// Lower bone index below `n`.
    pub index_ok: bool,
    /// `phi` strictly larger on the upper marrow.
    pub phi_ok: bool,
}

/// Points of `bone_hi` within `shell_radius` of the marrow of `bone_lo`,
/// projected onto that marrow.
pub fn joint_detect(
    model: &VectorFieldModel,
    skel: &SkeletonSample,
    bone_hi: usize,
    bone_lo: usize,
    shell_radius: f64,
) -> Result<JointSample, WeinsteinError> {
    let find = |l: usize| {
        skel.zeros.components.iter().find(|c| c.label == l).ok_or(WeinsteinError::Parameter(format!("no bone {l}")))
    };
    let (hi, lo) = (find(bone_hi)?, find(bone_lo)?);
    let marrow: Vec<Vec<f64>> = lo.points.iter().map(|p| p.p.clone()).collect();
    let (_, axes) = pca(&marrow);
    let frame: Vec<Vec<f64>> = axes.into_iter().take(lo.dim).collect();
    let idx = CellIndex::new(&marrow, shell_radius.max(1e-6));
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for sp in skel.points.iter().filter(|p| p.bone == bone_hi) {
        let near = idx.within(&marrow, &sp.p, shell_radius);
        let Some(&j) = near.iter().min_by(|&&a, &&b| dist(&marrow[a], &sp.p).total_cmp(&dist(&marrow[b], &sp.p)))
        else {
            continue;
        };
        // foot on the flat marrow through its nearest sample
        let off: Vec<f64> = sp.p.iter().zip(&marrow[j]).map(|(a, b)| a - b).collect();
        let mut foot = marrow[j].clone();
        let mut normal_part = off.clone();
        for t in &frame {
            let c = dot(&off, t);
            foot.iter_mut().zip(t).for_each(|(f, x)| *f += c * x);
            normal_part.iter_mut().zip(t).for_each(|(f, x)| *f -= c * x);
        }
        points.push(foot);
        dirs.push(normal_part);
    }
    let points = thin(points, shell_radius / 4.0);
    let front = points.iter().map(|p| frame.iter().map(|t| dot(t, &sub(p, &lo.centroid))).collect()).collect();
    let coorientation = if dirs.is_empty() {
        None
    } else {
        let d = dirs[0].len();
        let mean: Vec<f64> = (0..d).map(|i| dirs.iter().map(|v| v[i]).sum::<f64>() / dirs.len() as f64).collect();
        normalized(&mean)
    };
    Ok(JointSample {
        bone_hi,
        bone_lo,
        front,
        points,
        coorientation,
        index_ok: lo.index < model.pairs(),
        phi_ok: hi.phi > lo.phi,
    })
}
