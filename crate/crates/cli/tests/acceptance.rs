//! Acceptance run: one PASS/FAIL line per criterion, failed checks listed
//! beneath it. Exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use arbor::classifier::{check_arboreal, product_fixture, Arrangement, ClassifierTol, Condition, Verdict};
use arbor::cusp::{
    resolve_sigma10, tangency_audit, tb_stratify, unresolved_cusp, FoliationLocal, FrontMap, ResolveParams, TbType,
};
use arbor::geom::Aabb;
use arbor::hypersurface::{build_smoothed, lagrangian_model, SmoothingProfile, Source};
use arbor::trees::{canonical_form, delete_root, enumerate_signed_rooted_trees, SignedRootedTree};
use arbor::weinstein::{
    build_model, eigen_split, find_zero_components, hausdorff, liouville_residual, lyapunov_check, make_factor,
    product_model, random_points, skeleton, thicken_coefficient, thicken_family, FactorKind, SkeletonParams, ZeroTol,
};

const EPS: [f64; 3] = [0.2, 0.1, 0.05];

#[derive(Default)]
struct Checks(Vec<(String, bool)>);

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.0.push((what.into(), ok));
    }
}

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Option<Duration>,
    run: fn(&mut Checks),
}

fn c1_cusp_roots(c: &mut Checks) {
    for e in EPS {
        let r = resolve_sigma10(&ResolveParams::new(e, 300)).unwrap();
        let (up, um) = (r.plus_root[0], r.minus_root[0]);
        c.check((up - 4.0 * e / 3.0).abs() < 1e-10, format!("eps {e}: plus root {up:.15} vs 4eps/3"));
        c.check((um + 4.0 * e / 5.0).abs() < 1e-10, format!("eps {e}: minus root {um:.15} vs -4eps/5"));
        // both roots on the diagonal v = eps u
        c.check(
            (r.plus_root[1] - e * up).abs() < 1e-12 && (r.minus_root[1] - e * um).abs() < 1e-12,
            format!("eps {e}: roots on the diagonal"),
        );
    }
}

fn c2_tangency(c: &mut Checks) {
    let leaves = FoliationLocal { q_dim: 1 };
    let samples = unresolved_cusp(&ResolveParams::new(0.1, 10_000)).unwrap();
    let rep = tangency_audit(&samples, &leaves, 1e-6);
    c.check(rep.max_dim == 1, format!("unresolved: max intersection dimension {}", rep.max_dim));
    let at: Vec<f64> = rep.tangential().into_iter().map(|i| samples[i].p[1]).collect();
    c.check(!at.is_empty() && at.iter().all(|u| u.abs() < 1e-12), format!("unresolved: tangency at u = {at:?}"));
    for e in EPS {
        let res = resolve_sigma10(&ResolveParams::new(e, 10_000)).unwrap();
        let rep = tangency_audit(&res.samples, &leaves, 1e-6);
        c.check(
            rep.samples == 10_000 && rep.flagged == 0,
            format!("eps {e}: {} samples, {} flagged", rep.samples, rep.flagged),
        );
        c.check(rep.max_dim == 0, format!("eps {e}: max intersection dimension {}", rep.max_dim));
        c.check(
            rep.min_angle >= 0.9 * e.atan(),
            format!("eps {e}: min principal angle {:.6} vs 0.9 atan(eps) = {:.6}", rep.min_angle, 0.9 * e.atan()),
        );
    }
}

fn c3_round_trip(c: &mut Checks) {
    let profile = Arc::new(SmoothingProfile::new(1.0).unwrap());
    let trees = enumerate_signed_rooted_trees(4).unwrap();
    let mut passed = 0;
    for t in &trees {
        let code = canonical_form(t);
        let h = build_smoothed(&Source::Forest(delete_root(t)), &profile).unwrap();
        let s = if h.dim <= 2 { 0.05 } else { 0.1 };
        let arr = Arrangement::from_hypersurface(&h, s).unwrap();
        let r = check_arboreal(&arr, &ClassifierTol::for_spacing(s)).unwrap();
        let ok = r.verdict == Verdict::Arboreal && r.canonical.as_deref() == Some(code.as_str());
        passed += usize::from(ok);
        c.check(ok, format!("{code}: {:?} {:?}", r.verdict, r.canonical));
    }
    c.check(passed == trees.len() && trees.len() == 1 + 1 + 3 + 10, format!("{passed}/{} trees", trees.len()));
}

fn c4_model_zeros(c: &mut Checks) {
    let m = build_model(&SignedRootedTree::from_canonical("(())").unwrap()).unwrap();
    let scan = find_zero_components(&m, &Aabb::cube(2, 3.0), &ZeroTol::new(0.05)).unwrap();
    let flats = m.zero_flats();
    let worst = scan
        .components
        .iter()
        .flat_map(|comp| comp.points.iter())
        .map(|p| flats.iter().map(|f| f.distance(&p.p)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    c.check(worst < 1e-6, format!("largest distance to a constructed zero {worst:.2e}"));
    c.check(scan.components.len() == 3, format!("{} components", scan.components.len()));
    let isolated = |y: f64, index: usize| {
        scan.components
            .iter()
            .any(|z| z.dim == 0 && z.index == index && (z.centroid[1] - y).abs() < 1e-6 && z.centroid[0].abs() < 1e-6)
    };
    c.check(isolated(2.0, 0), "index 0 zero at (0, 2)");
    c.check(isolated(1.0, 1), "index 1 zero at (0, 1)");
    c.check(
        scan.components.iter().any(|z| z.dim == 1 && z.index == 0 && z.centroid[1].abs() < 1e-9),
        "index 0 zero line y = 0",
    );
    c.check(scan.components.iter().all(|z| z.morse_bott), "all components Morse-Bott*");
}

fn c5_liouville_lyapunov(c: &mut Checks) {
    let mut models: Vec<(String, arbor::weinstein::VectorFieldModel)> = enumerate_signed_rooted_trees(5)
        .unwrap()
        .iter()
        .map(|t| (canonical_form(t), build_model(t).unwrap()))
        .collect();
    for t in [0.0, 0.5, 1.0] {
        models.push((format!("thicken t={t}"), thicken_family(0.5, t, 2).unwrap()));
    }
    let radial = make_factor(FactorKind::Radial, 0.2).unwrap();
    models.push(("radial".into(), product_model(&[radial, radial]).unwrap()));
    let (mut worst_res, mut worst_pair) = (0.0f64, f64::INFINITY);
    for (name, m) in &models {
        let pts = random_points(m.dim, 1000, 3.0, 7);
        let r = liouville_residual(m, &pts);
        let l = lyapunov_check(m, &pts, 0.0);
        worst_res = worst_res.max(r);
        worst_pair = worst_pair.min(l.min_pairing);
        if r >= 1e-5 || l.min_pairing <= 0.0 {
            c.check(false, format!("{name}: residual {r:.2e}, min dphi(V) {:.2e}", l.min_pairing));
        }
    }
    c.check(worst_res < 1e-5, format!("{} models: worst Liouville residual {worst_res:.2e}", models.len()));
    c.check(worst_pair > 0.0, format!("{} models: min dphi(V) {worst_pair:.2e} off zeros", models.len()));
    // radial field z/2 with phi = |z|^2: dphi(V) = |z|^2, |V|^2 + |dphi|^2 = 17|z|^2/4
    let m = product_model(&[radial, radial]).unwrap();
    let rep = lyapunov_check(&m, &random_points(4, 1000, 3.0, 2), 0.25);
    let oracle = 1.0 / (0.25 + 4.0);
    c.check(
        (rep.max_delta - oracle).abs() < 1e-12,
        format!("radial: largest delta {:.12} vs analytic 4/17", rep.max_delta),
    );
    c.check(
        rep.holds,
        format!(
            "radial: margin at delta = 0.25 is {:.3e}; largest certified delta is 4/17 = {oracle:.6}",
            rep.worst_margin
        ),
    );
}

fn c6_thicken_disk(c: &mut Checks) {
    let delta = 0.5;
    let m = thicken_family(delta, 1.0, 2).unwrap();
    let tol = ZeroTol::new(0.1);
    // zero set on the p = 0 slice against the disk |q|^2 <= delta, at the cell
    // centres of the zero-scan grid
    let (h, half): (f64, f64) = (tol.spacing, 1.0);
    let n = (2.0 * half / h).round() as usize;
    let mut mismatch = 0usize;
    for i in 0..n {
        for j in 0..n {
            let (q1, q2) = (-half + h * (i as f64 + 0.5), -half + h * (j as f64 + 0.5));
            let v = m.eval(&[q1, 0.0, q2, 0.0]);
            let zero = v.iter().map(|a| a * a).sum::<f64>().sqrt() <= tol.residual;
            mismatch += usize::from(zero != (q1 * q1 + q2 * q2 <= delta));
        }
    }
    let cell = h * h;
    c.check(
        (mismatch as f64) * cell < 2.0 * cell,
        format!("symmetric difference {mismatch} cells of area {cell} (limit 2 cells)"),
    );
    let bx = Aabb { lo: vec![-1.3, -0.4, -1.3, -0.4], hi: vec![1.3, 0.4, 1.3, 0.4] };
    let scan = find_zero_components(&m, &bx, &tol).unwrap();
    c.check(scan.components.len() == 1, format!("{} zero components", scan.components.len()));
    if let Some(z) = scan.components.first() {
        c.check(z.dim == 2, format!("zero set dimension {}", z.dim));
        c.check(z.max_angle < 1e-2, format!("E0 against disk tangent: {:.2e} rad", z.max_angle));
        c.check(z.boundary_repellent == Some(true), format!("boundary repellent {:?}", z.boundary_repellent));
    }
    let outside = thicken_coefficient(&m, delta * 1.05).unwrap();
    c.check(outside > 0.0, format!("radial coefficient at |q|^2 = 1.05 delta: {outside:.3e}"));
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mt = thicken_family(delta, t, 2).unwrap();
        let ev = eigen_split(&mt.jacobian(&[0.0; 4]), 1e-4).eigenvalues;
        let mut re: Vec<f64> = ev.iter().map(|l| l[0]).collect();
        re.sort_by(f64::total_cmp);
        let all_half = ev.iter().all(|l| (l[0] - 0.5).abs() < 1e-9 && l[1].abs() < 1e-9);
        c.check(all_half, format!("t = {t}: eigenvalues at the origin {re:.6?}, expected all 0.5"));
    }
}

fn c7_skeleton_agreement(c: &mut Checks) {
    let t = SignedRootedTree::from_canonical("(())").unwrap();
    let m = build_model(&t).unwrap();
    let skel = skeleton(&m, &Aabb::cube(2, 3.0), &SkeletonParams::new(0.02, 0.02)).unwrap();
    let h = build_smoothed(&Source::Forest(delete_root(&t)), &Arc::new(SmoothingProfile::new(0.5).unwrap())).unwrap();
    let lag = lagrangian_model(&h, 0.02, 2.0).unwrap();
    // (q, p) = (x, y), both clouds cropped to |q| <= 2.5
    let crop = |p: &Vec<f64>| p[0].abs() <= 2.5;
    let a: Vec<Vec<f64>> = skel.points.iter().map(|p| p.p.clone()).filter(crop).collect();
    let b: Vec<Vec<f64>> = lag.points.iter().map(|p| vec![p.x[0], p.xi[0]]).filter(crop).collect();
    let d = hausdorff(&a, &b);
    c.check(d <= 0.05, format!("Hausdorff distance {d:.4} on {} / {} points", a.len(), b.len()));
    let iso = skel.isotropy_defect();
    c.check(iso < 1e-3, format!("isotropy defect {iso:.2e} over {} samples", skel.points.len()));
    c.check(skel.lagrangian_bones() == 2, format!("{} Lagrangian bones", skel.lagrangian_bones()));
}

fn c8_tb(c: &mut Checks) {
    let h = 0.02;
    let cusp = FrontMap::cusp(2, 1.0).unwrap();
    let tb = tb_stratify(&cusp, h, h).unwrap();
    let s1 = tb.sigma(1);
    let off = s1.iter().map(|p| p.x[1].abs()).fold(0.0, f64::max);
    c.check(!s1.is_empty() && off <= h, format!("cusp: {} Sigma1 points, max |u| {off:.4} (grid {h})", s1.len()));
    c.check(s1.iter().all(|p| p.ty == TbType::Sigma10), "cusp: Sigma1 classified Sigma10");
    c.check(tb.sigma1_codim == Some(1), format!("cusp: Sigma1 codimension {:?}", tb.sigma1_codim));
    c.check(tb.of_type(TbType::Inconclusive).is_empty(), "cusp: no inconclusive points");
    let fold = tb_stratify(&FrontMap::fold(2, 1.0).unwrap(), h, h).unwrap();
    c.check(!fold.sigma(1).is_empty(), format!("fold: {} Sigma1 points", fold.sigma(1).len()));
    c.check(fold.of_type(TbType::Sigma10).is_empty(), "fold: rejected from Sigma10");
}

fn c9_product(c: &mut Checks) {
    let arr = product_fixture(0.1).unwrap();
    let r = check_arboreal(&arr, &ClassifierTol::for_spacing(0.1)).unwrap();
    let ok = matches!(&r.verdict, Verdict::NonArboreal { condition: Condition::Transversality, .. });
    c.check(ok, format!("verdict {:?}", r.verdict));
}

fn c10_determinism(c: &mut Checks) {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("t2.json"),
        r#"{"vertices":[0,1],"root":0,"edges":[{"from":0,"to":1,"sign":null}],"marked":[]}"#,
    )
    .unwrap();
    std::fs::write(
        d.join("t3.json"),
        r#"{"vertices":[0,1,2],"root":0,"edges":[{"from":0,"to":1,"sign":null},{"from":1,"to":2,"sign":1}],"marked":[]}"#,
    )
    .unwrap();
    std::fs::write(d.join("config.json"), r#"{"seed": 11, "cusp": {"samples": 4000}}"#).unwrap();
    let runs: [&[&str]; 12] = [
        &["enumerate", "--max", "4"],
        &["build", "t3.json", "--smoothed", "--lagrangian", "--svg", "OUT.svg"],
        &["build", "t3.json", "--pl"],
        &["classify", "b.json"],
        &["classify", "--product-fixture"],
        &["model", "t2.json", "--zeros"],
        &["model", "t2.json", "--skeleton", "--svg", "OUT.svg"],
        &["model", "t3.json", "--verify"],
        &["cusp", "--resolve", "--epsilon", "0.05", "--svg", "OUT.svg"],
        &["cusp", "--audit"],
        &["cusp", "--audit", "--unresolved"],
        &["cusp", "--audit", "--epsilon", "0.2"],
    ];
    let run = |args: &[&str], tag: &str| -> Option<(Vec<u8>, Option<Vec<u8>>)> {
        let out = format!("{tag}.json");
        let svg = format!("{tag}.svg");
        let args: Vec<String> =
            args.iter().map(|a| if *a == "OUT.svg" { svg.clone() } else { a.to_string() }).collect();
        let st = Command::new(env!("CARGO_BIN_EXE_arbor"))
            .current_dir(d)
            .args(["--config", "config.json"])
            .args(&args)
            .args(["--out", &out])
            .output()
            .unwrap();
        st.status.success().then(|| (std::fs::read(d.join(&out)).unwrap(), std::fs::read(d.join(&svg)).ok()))
    };
    // input for classify
    run(&["build", "t3.json", "--smoothed"], "b");
    for (k, args) in runs.iter().enumerate() {
        let first = run(args, &format!("r{k}a"));
        let second = run(args, &format!("r{k}b"));
        let same = first.is_some() && first == second;
        c.check(
            same,
            format!("arbor {}: {}", args.join(" "), if first.is_none() { "failed" } else { "byte-identical" }),
        );
        if let Some((json, _)) = &first {
            let v: serde_json::Value = serde_json::from_slice(json).unwrap();
            c.check(
                v["seed"] == 11 && v["config_digest"].as_str().is_some_and(|s| s.len() == 64),
                "seed and config digest recorded",
            );
        }
    }
    assert!(Path::new(env!("CARGO_BIN_EXE_arbor")).exists());
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "cusp intersections 4eps/3, -4eps/5",
            limit: Some(Duration::from_secs(1)),
            run: c1_cusp_roots,
        },
        Criterion { id: 2, name: "tangency elimination", limit: Some(Duration::from_secs(10)), run: c2_tangency },
        Criterion {
            id: 3,
            name: "round-trip classification, trees <= 4",
            limit: Some(Duration::from_secs(120)),
            run: c3_round_trip,
        },
        Criterion {
            id: 4,
            name: "model zeros of the 2-vertex tree",
            limit: Some(Duration::from_secs(30)),
            run: c4_model_zeros,
        },
        Criterion { id: 5, name: "Liouville and Lyapunov", limit: None, run: c5_liouville_lyapunov },
        Criterion { id: 6, name: "Morse-Bott* disk", limit: None, run: c6_thicken_disk },
        Criterion { id: 7, name: "skeleton vs Lagrangian model", limit: None, run: c7_skeleton_agreement },
        Criterion { id: 8, name: "Thom-Boardman stratification", limit: None, run: c8_tb },
        Criterion { id: 9, name: "non-arboreal product fixture", limit: None, run: c9_product },
        Criterion { id: 10, name: "CLI determinism", limit: None, run: c10_determinism },
    ];
    let mut failed = Vec::new();
    for cr in &criteria {
        let mut checks = Checks::default();
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| (cr.run)(&mut checks)));
        let elapsed = start.elapsed();
        if let Err(e) = outcome {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            checks.check(false, format!("panicked: {}", msg.unwrap_or_default()));
        }
        if let Some(limit) = cr.limit {
            checks.check(elapsed < limit, format!("runtime {elapsed:.2?} (limit {limit:?})"));
        }
        let ok = checks.0.iter().all(|(_, ok)| *ok);
        println!(
            "criterion {:>2} {}  {} ({:.2?}, {} checks)",
            cr.id,
            if ok { "PASS" } else { "FAIL" },
            cr.name,
            elapsed,
            checks.0.len()
        );
        for (what, _) in checks.0.iter().filter(|(_, ok)| !ok) {
            println!("      failed: {what}");
        }
        if !ok {
            failed.push(cr.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", criteria.len());
    } else {
        println!("acceptance: criteria {failed:?} fail");
        std::process::exit(1);
    }
}
