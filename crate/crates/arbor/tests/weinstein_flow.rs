use std::sync::Arc;

use arbor::geom::Aabb;
use arbor::hypersurface::{build_smoothed, lagrangian_model, SmoothingProfile, Source};
use arbor::trees::{delete_root, SignedRootedTree};
use arbor::weinstein::*;

fn tree(code: &str) -> (SignedRootedTree, VectorFieldModel) {
    let t = SignedRootedTree::from_canonical(code).unwrap();
    let m = build_model(&t).unwrap();
    (t, m)
}

#[test]
fn radial_skeleton_is_origin() {
    let m = product_model(&[make_factor(FactorKind::Radial, 0.2).unwrap()]).unwrap();
    let skel = skeleton(&m, &Aabb::cube(2, 2.0), &SkeletonParams::new(0.1, 0.05)).unwrap();
    assert_eq!(skel.bones.len(), 1);
    assert!(skel.points.iter().all(|p| p.p.iter().all(|x| x.abs() < 1e-9)), "{:?}", skel.points);
}

#[test]
fn x_plus_stable_curve() {
    let m = product_model(&[make_factor(FactorKind::Xplus, 0.2).unwrap()]).unwrap();
    let skel = skeleton(&m, &Aabb::cube(2, 2.6), &SkeletonParams::new(0.1, 0.02)).unwrap();
    let saddle = skel.bones.iter().find(|b| b.index == 1).unwrap();
    assert!((saddle.centroid[1] - 1.0).abs() < 1e-9);
    let pts = skel.bone_points(saddle.label);
    assert!(pts.iter().all(|p| p.p[0].abs() < 1e-6 && p.p[1] > 0.0 && p.p[1] < 2.0));
    let lo = pts.iter().map(|p| p.p[1]).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.p[1]).fold(0.0, f64::max);
    assert!(lo < 0.05 && hi > 1.95, "{lo} {hi}");
    // every skeleton point flows into its marrow
    let res = flow_residuals(&m, &skel, &Aabb::cube(2, 2.6), 200.0, 1);
    assert!(res.iter().all(|r| *r < 1e-3), "{res:?}");
}

#[test]
fn two_vertex_matches_lagrangian_model() {
    let (t, m) = tree("(())");
    let bx = Aabb::cube(2, 3.0);
    let skel = skeleton(&m, &bx, &SkeletonParams::new(0.02, 0.02)).unwrap();
    assert!(skel.isotropy_defect() < 1e-3);
    let h = build_smoothed(&Source::Forest(delete_root(&t)), &Arc::new(SmoothingProfile::new(0.5).unwrap())).unwrap();
    let lag = lagrangian_model(&h, 0.02, 2.0).unwrap();
    let crop = |p: &Vec<f64>| p[0].abs() <= 2.5;
    let a: Vec<Vec<f64>> = skel.points.iter().map(|p| p.p.clone()).filter(crop).collect();
    let b: Vec<Vec<f64>> = lag.points.iter().map(|p| vec![p.x[0], p.xi[0]]).filter(crop).collect();
    let d = hausdorff(&a, &b);
    assert!(d <= 0.05, "hausdorff {d}");
    assert_eq!(skel.lagrangian_bones(), 2);

    let saddle = skel.bones.iter().find(|b| b.index == 1).unwrap();
    let base = skel.bones.iter().find(|b| b.marrow_dim == 1).unwrap();
    let j = joint_detect(&m, &skel, saddle.label, base.label, 0.05).unwrap();
    assert_eq!(j.front.len(), 1, "{:?}", j.front);
    assert!(j.points[0][0].abs() < 0.02);
    assert!(j.index_ok && j.phi_ok);
    let c = j.coorientation.unwrap();
    assert!(c[1] > 0.99, "{c:?}");
}

#[test]
fn three_vertex_path_bones() {
    let (_, m) = tree("((-()))");
    let skel = skeleton(&m, &Aabb::cube(4, 3.0), &SkeletonParams::new(0.25, 0.15)).unwrap();
    let summary: Vec<_> =
        skel.bones.iter().map(|b| (b.marrow_dim, b.index, b.lagrangian, skel.bone_points(b.label).len())).collect();
    assert_eq!(skel.lagrangian_bones(), 3, "{summary:?}");
    assert!(skel.bones.iter().all(|b| b.flagged == 0), "{summary:?}");
}

#[test]
fn skeleton_is_deterministic() {
    let (_, m) = tree("(())");
    let p = SkeletonParams::new(0.05, 0.05);
    let a = skeleton(&m, &Aabb::cube(2, 3.0), &p).unwrap();
    let b = skeleton(&m, &Aabb::cube(2, 3.0), &p).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
