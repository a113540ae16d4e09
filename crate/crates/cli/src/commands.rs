use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use arbor::classifier::{check_arboreal, product_fixture, Arrangement, ClassifierTol, Sheet};
use arbor::cusp::{
    resolution_svg, resolve_sigma10, tangency_audit, unresolved_cusp, FoliationLocal, ResolveParams, StratumSample,
};
use arbor::geom::Aabb;
use arbor::hypersurface::{
    build_pl_strata, build_smoothed, lagrangian_model, sample_hypersurface, LagrangianModelSample, SamplePoint,
    SmoothingProfile, Source,
};
use arbor::trees::{canonical_form, delete_root, enumerate_signed_rooted_trees, TreeJson, VertexId};
use arbor::weinstein::{
    build_model, find_zero_components, liouville_residual, lyapunov_check, random_points, skeleton, SkeletonParams,
    ZeroTol,
};

use crate::config::{artifact, RunConfig};
use crate::export::{obj_3d, svg_2d, Drawn};
use crate::{BuildModel, CuspMode, ModelMode, UserError};

/// Liouville residual above which `model --verify` fails.
const LIOUVILLE_TOL: f64 = 1e-5;

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(UserError::wrap)
}

fn read_tree(bytes: &[u8], path: &Path) -> Result<TreeJson> {
    let tj: TreeJson = serde_json::from_slice(bytes).map_err(|e| UserError::msg(format!("{}: {e}", path.display())))?;
    tj.tree().map_err(UserError::wrap)?;
    Ok(tj)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes pretty JSON to `out`, or to stdout when absent.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => write_text(p, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Tables go to stdout when the JSON goes to a file, else to stderr.
fn table(out: Option<&Path>, lines: &[String]) {
    for l in lines {
        if out.is_some() {
            println!("{l}");
        } else {
            eprintln!("{l}");
        }
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{:.4}", if x.abs() < 5e-5 { 0.0 } else { *x })).collect();
    format!("({})", parts.join(", "))
}

#[derive(Serialize)]
struct EnumeratedTree {
    canonical: String,
    tree: TreeJson,
}

pub fn enumerate(cfg: &RunConfig, max: usize, out: Option<&Path>) -> Result<()> {
    let trees = enumerate_signed_rooted_trees(max).map_err(UserError::wrap)?;
    let list: Vec<EnumeratedTree> = trees
        .iter()
        .map(|t| EnumeratedTree { canonical: canonical_form(t), tree: TreeJson::from_tree(t, &BTreeSet::new()) })
        .collect();
    table(out, &[format!("{} trees with at most {max} vertices", list.len())]);
    emit(&artifact("enumerate", &max, cfg, None, list), out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumInfo {
    pub id: VertexId,
    pub window: Aabb,
    pub samples: usize,
}

/// Sample file written by `build` and read by `classify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildResult {
    pub dim: usize,
    pub model: String,
    pub spacing: f64,
    pub box_half_width: f64,
    pub tree: TreeJson,
    pub canonical: String,
    pub strata: Vec<StratumInfo>,
    pub points: Vec<SamplePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lagrangian: Option<LagrangianModelSample>,
}

#[derive(Serialize)]
struct BuildArgs<'a> {
    model: &'a BuildModel,
    lagrangian: bool,
}

pub fn build(
    cfg: &RunConfig,
    tree_path: &Path,
    model: &BuildModel,
    with_lagrangian: bool,
    out: Option<&Path>,
    svg: Option<&Path>,
    obj: Option<&Path>,
) -> Result<()> {
    let bytes = read_input(tree_path)?;
    let tj = read_tree(&bytes, tree_path)?;
    let tree = tj.tree().map_err(UserError::wrap)?;
    let h = if model.pl {
        if !tj.marked.is_empty() {
            return Err(UserError::msg("marked vertices need the smoothed model"));
        }
        build_pl_strata(&delete_root(&tree)).map_err(UserError::wrap)?
    } else {
        let profile = Arc::new(SmoothingProfile::new(cfg.build.sharpness).map_err(UserError::wrap)?);
        let source = if tj.marked.is_empty() {
            Source::Forest(delete_root(&tree))
        } else {
            Source::Leafy(tj.leafy().map_err(UserError::wrap)?)
        };
        build_smoothed(&source, &profile).map_err(UserError::wrap)?
    };
    if svg.is_some() && h.dim != 2 {
        return Err(UserError::msg(format!("SVG needs ambient dimension 2, got {}", h.dim)));
    }
    if obj.is_some() && h.dim != 3 {
        return Err(UserError::msg(format!("OBJ needs ambient dimension 3, got {}", h.dim)));
    }
    let spacing = cfg.build.spacing_for(h.dim);
    let points = sample_hypersurface(&h, spacing)?;
    let strata = h
        .strata
        .iter()
        .map(|s| StratumInfo {
            id: s.owner,
            window: s.validity_box.clone(),
            samples: points.iter().filter(|p| p.stratum == s.owner).count(),
        })
        .collect::<Vec<_>>();
    let lagrangian = if with_lagrangian { Some(lagrangian_model(&h, spacing, cfg.build.fiber_length)?) } else { None };
    let mut lines = vec![format!("ambient dimension {}, {} strata, spacing {spacing}", h.dim, strata.len())];
    lines.extend(strata.iter().map(|s| format!("  stratum {:>3}: {} samples", s.id, s.samples)));
    if strata.is_empty() {
        lines.push("  no strata: the Lagrangian model is the zero section".into());
    }
    table(out, &lines);
    let result = BuildResult {
        dim: h.dim,
        model: if model.pl { "pl" } else { "smoothed" }.into(),
        spacing,
        box_half_width: h.box_half_width,
        canonical: canonical_form(&tree),
        tree: tj,
        strata,
        points,
        lagrangian,
    };
    let drawn = || -> Vec<Drawn> {
        result.points.iter().map(|p| Drawn { p: &p.p, label: p.stratum as u64, normal: Some(&p.normal) }).collect()
    };
    if let Some(path) = svg {
        write_text(path, &svg_2d(&drawn(), &h.validity_box(), 3.0 * spacing, 8))?;
    }
    if let Some(path) = obj {
        write_text(path, &obj_3d(&drawn()))?;
    }
    let args = BuildArgs { model, lagrangian: with_lagrangian };
    emit(&artifact("build", &args, cfg, Some(&bytes), &result), out)
}

fn arrangement_from_samples(b: &BuildResult) -> Result<Arrangement> {
    let mut grouped: BTreeMap<VertexId, Vec<SamplePoint>> = BTreeMap::new();
    for p in &b.points {
        if p.p.len() != b.dim || p.normal.len() != b.dim {
            return Err(UserError::msg(format!("sample of dimension {} in a dimension {} file", p.p.len(), b.dim)));
        }
        grouped.entry(p.stratum).or_default().push(p.clone());
    }
    let mut sheets = Vec::new();
    for (id, pts) in grouped {
        let window = b
            .strata
            .iter()
            .find(|s| s.id == id)
            .map(|s| s.window.clone())
            .unwrap_or_else(|| Aabb::cube(b.dim, b.box_half_width));
        sheets.push(Sheet::new(id, pts, window, None, b.spacing));
    }
    Arrangement::new(b.dim, b.spacing, sheets).map_err(UserError::wrap)
}

pub fn classify(cfg: &RunConfig, samples: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let (arr, bytes, label) = match samples {
        Some(path) => {
            let bytes = read_input(path)?;
            let v: Value =
                serde_json::from_slice(&bytes).map_err(|e| UserError::msg(format!("{}: {e}", path.display())))?;
            // accept a full build artifact or its bare result
            let body = v.get("result").cloned().unwrap_or(v);
            let b: BuildResult = serde_json::from_value(body)
                .map_err(|e| UserError::msg(format!("{}: not a sample file: {e}", path.display())))?;
            (arrangement_from_samples(&b)?, Some(bytes), path.display().to_string())
        }
        None => {
            let spacing = cfg.build.spacing_for(3);
            (product_fixture(spacing)?, None, "product fixture".to_string())
        }
    };
    let tol = ClassifierTol::for_spacing(arr.spacing);
    let report = check_arboreal(&arr, &tol)?;
    let mut lines = vec![format!("{label}: {} sheets in dimension {}", arr.sheets.len(), arr.dim)];
    lines.push(format!("verdict: {}", serde_json::to_string(&report.verdict)?));
    if let Some(c) = &report.canonical {
        lines.push(format!("tree: {c}"));
    }
    table(out, &lines);
    emit(&artifact("classify", &label, cfg, bytes.as_deref(), &report), out)
}

#[derive(Serialize)]
struct SkeletonRecord<'a> {
    p: &'a [f64],
    stratum: usize,
    bone: usize,
    frame: &'a [Vec<f64>],
    phi: f64,
}

#[derive(Serialize)]
struct VerifyResult {
    points: usize,
    liouville_residual: f64,
    liouville_tol: f64,
    lyapunov: arbor::weinstein::LyapunovReport,
    passed: bool,
}

pub fn model(
    cfg: &RunConfig,
    tree_path: &Path,
    mode: &ModelMode,
    out: Option<&Path>,
    svg: Option<&Path>,
) -> Result<()> {
    let bytes = read_input(tree_path)?;
    let tj = read_tree(&bytes, tree_path)?;
    let tree = tj.tree().map_err(UserError::wrap)?;
    let m = build_model(&tree).map_err(UserError::wrap)?;
    let mc = &cfg.model;
    let bx = Aabb::cube(m.dim, mc.box_half);
    let grid = mc.grid_for(m.pairs());
    if svg.is_some() && !(mode.skeleton && m.dim == 2) {
        return Err(UserError::msg("SVG is written for skeletons of two-dimensional models only"));
    }
    if mode.zeros {
        let scan = find_zero_components(&m, &bx, &ZeroTol::new(grid))?;
        let mut lines = vec![format!(
            "{} zero components in [-{b}, {b}]^{} (grid {grid})",
            scan.components.len(),
            m.dim,
            b = mc.box_half
        )];
        lines.push(format!(
            "{:>5}  {:<28} {:>3} {:>5} {:>11} {:>10}",
            "label", "position", "dim", "index", "morse-bott*", "phi"
        ));
        for c in &scan.components {
            lines.push(format!(
                "{:>5}  {:<28} {:>3} {:>5} {:>11} {:>10.5}",
                c.label,
                fmt_point(&c.centroid),
                c.dim,
                c.index,
                c.morse_bott,
                c.phi
            ));
        }
        if !scan.flagged.is_empty() {
            lines.push(format!("{} flagged seeds", scan.flagged.len()));
        }
        table(out, &lines);
        return emit(&artifact("model", mode, cfg, Some(&bytes), &scan), out);
    }
    if mode.skeleton {
        let params = SkeletonParams { grid, spacing: mc.spacing, horizon: mc.horizon, seed: cfg.seed };
        let skel = skeleton(&m, &bx, &params)?;
        let mut lines = vec![format!("{} bones, {} samples", skel.bones.len(), skel.points.len())];
        lines.push(format!(
            "{:>5}  {:<28} {:>6} {:>5} {:>10} {:>10} {:>8}",
            "bone", "marrow", "marrow", "index", "lagrangian", "phi", "samples"
        ));
        for b in &skel.bones {
            lines.push(format!(
                "{:>5}  {:<28} {:>6} {:>5} {:>10} {:>10.5} {:>8}",
                b.label,
                fmt_point(&b.centroid),
                b.marrow_dim,
                b.index,
                b.lagrangian,
                b.phi,
                skel.bone_points(b.label).len()
            ));
        }
        lines.push(format!("isotropy defect {:.3e}", skel.isotropy_defect()));
        table(out, &lines);
        if let Some(path) = svg {
            let drawn: Vec<Drawn> =
                skel.points.iter().map(|p| Drawn { p: &p.p, label: p.bone as u64, normal: None }).collect();
            write_text(path, &svg_2d(&drawn, &bx, 3.0 * mc.spacing, usize::MAX))?;
        }
        let records: Vec<SkeletonRecord> = skel
            .points
            .iter()
            .map(|p| SkeletonRecord { p: &p.p, stratum: p.bone, bone: p.bone, frame: &p.frame, phi: p.phi })
            .collect();
        let result = serde_json::json!({
            "dim": skel.dim,
            "bones": skel.bones,
            "points": records,
        });
        return emit(&artifact("model", mode, cfg, Some(&bytes), result), out);
    }
    let pts = random_points(m.dim, mc.verify_points, mc.box_half, cfg.seed);
    let residual = liouville_residual(&m, &pts);
    let lyap = lyapunov_check(&m, &pts, mc.lyapunov_delta);
    let passed = residual < LIOUVILLE_TOL && lyap.min_pairing > 0.0;
    table(
        out,
        &[
            format!("Liouville residual {residual:.3e} over {} points (tolerance {LIOUVILLE_TOL:.0e})", pts.len()),
            format!(
                "Lyapunov: min dphi(V) {:.3e}, margin at delta {:.0e}: {:.3e}, largest delta {:.3e}, {} zeros skipped",
                lyap.min_pairing, lyap.delta, lyap.worst_margin, lyap.max_delta, lyap.skipped
            ),
            format!("verify: {}", if passed { "pass" } else { "FAIL" }),
        ],
    );
    let result = VerifyResult {
        points: pts.len(),
        liouville_residual: residual,
        liouville_tol: LIOUVILLE_TOL,
        lyapunov: lyap,
        passed,
    };
    emit(&artifact("model", mode, cfg, Some(&bytes), &result), out)?;
    if !passed {
        bail!("model verification failed");
    }
    Ok(())
}

#[derive(Serialize)]
struct CuspArgs<'a> {
    mode: &'a CuspMode,
    unresolved: bool,
}

#[derive(Serialize)]
struct AuditResult<'a> {
    epsilon: f64,
    unresolved: bool,
    report: arbor::cusp::TangencyReport,
    /// Samples where the stratum is tangent to a leaf.
    tangential: Vec<&'a StratumSample>,
}

pub fn cusp(
    cfg: &RunConfig,
    epsilon: Option<f64>,
    mode: &CuspMode,
    unresolved: bool,
    out: Option<&Path>,
    svg: Option<&Path>,
) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(e) = epsilon {
        cfg.cusp.epsilon = e;
        cfg.validate()?;
    }
    let cc = &cfg.cusp;
    let params = ResolveParams {
        epsilon: cc.epsilon,
        width: cc.width,
        u_range: [-cc.u_half, cc.u_half],
        q_dim: cc.q_dim,
        q_half: 1.0,
        samples: cc.samples,
        seed: cfg.seed,
    };
    let args = CuspArgs { mode, unresolved };
    if mode.resolve {
        let res = resolve_sigma10(&params).map_err(UserError::wrap)?;
        table(
            out,
            &[
                format!("epsilon {}, blend half-width {}", res.epsilon, res.width),
                format!("v = h_+(u) meets v = eps u at u = {:.12}, v = {:.12}", res.plus_root[0], res.plus_root[1]),
                format!("v = h_-(u) meets v = eps u at u = {:.12}, v = {:.12}", res.minus_root[0], res.minus_root[1]),
                format!("{} strata samples", res.samples.len()),
            ],
        );
        if let Some(path) = svg {
            write_text(path, &resolution_svg(&res, cc.u_half))?;
        }
        return emit(&artifact("cusp", &args, &cfg, None, &res), out);
    }
    let samples = if unresolved {
        unresolved_cusp(&params).map_err(UserError::wrap)?
    } else {
        resolve_sigma10(&params).map_err(UserError::wrap)?.samples
    };
    let report = tangency_audit(&samples, &FoliationLocal { q_dim: cc.q_dim }, cc.angle_tol);
    let tangential: Vec<&StratumSample> = report.tangential().into_iter().map(|i| &samples[i]).collect();
    table(
        out,
        &[
            format!(
                "{} {} samples, {} flagged",
                report.samples,
                if unresolved { "unresolved" } else { "resolved" },
                report.flagged
            ),
            format!("max tangency dimension {}", report.max_dim),
            format!("min principal angle {:.6} (atan eps = {:.6})", report.min_angle, cc.epsilon.atan()),
            format!("{} tangential samples", tangential.len()),
        ],
    );
    let result = AuditResult { epsilon: cc.epsilon, unresolved, report, tangential };
    emit(&artifact("cusp", &args, &cfg, None, &result), out)
}
