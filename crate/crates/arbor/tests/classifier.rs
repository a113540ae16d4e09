use std::sync::{Arc, OnceLock};
use std::time::Instant;

use arbor::classifier::{
    check_arboreal, check_generic_union, corner_stratification, plane_sheet, product_fixture, tangency_order,
    Arrangement, ClassifierTol, Condition, PlanePiece, TangencyFlag, Verdict,
};
use arbor::geom::Aabb;
use arbor::hypersurface::{build_smoothed, ArborealHypersurface, SmoothingProfile, Source};
use arbor::trees::{canonical_form, delete_root, enumerate_signed_rooted_trees, SignedForest, SignedRootedTree};

fn profile() -> Arc<SmoothingProfile> {
    static P: OnceLock<Arc<SmoothingProfile>> = OnceLock::new();
    P.get_or_init(|| Arc::new(SmoothingProfile::new(1.0).unwrap())).clone()
}

fn spacing_for(dim: usize) -> f64 {
    if dim <= 2 {
        0.05
    } else {
        0.1
    }
}

fn smoothed(code: &str) -> ArborealHypersurface {
    let t = SignedRootedTree::from_canonical(code).unwrap();
    build_smoothed(&Source::Forest(delete_root(&t)), &profile()).unwrap()
}

fn classify(code: &str) -> arbor::classifier::GermReport {
    let h = smoothed(code);
    let s = spacing_for(h.dim);
    let arr = Arrangement::from_hypersurface(&h, s).unwrap();
    check_arboreal(&arr, &ClassifierTol::for_spacing(s)).unwrap()
}

fn plane(normal: &[f64], constraints: Vec<(Vec<f64>, f64)>, id: u32, spacing: f64) -> arbor::classifier::Sheet {
    let window = Aabb::cube(normal.len(), 1.0);
    plane_sheet(id, PlanePiece { normal: normal.to_vec(), offset: 0.0, constraints, window }, spacing).unwrap()
}

#[test]
fn two_chain_round_trip() {
    for code in ["((+()))", "((-()))"] {
        let r = classify(code);
        assert_eq!(r.verdict, Verdict::Arboreal, "{}", r.to_json());
        assert_eq!(r.canonical.as_deref(), Some(code));
        assert_eq!(r.attachments.len(), 1);
        assert!(r.attachments[0].tangency_order >= 1);
    }
}

#[test]
fn every_small_tree_round_trips() {
    let start = Instant::now();
    for t in enumerate_signed_rooted_trees(4).unwrap() {
        let code = canonical_form(&t);
        let r = classify(&code);
        assert_eq!(r.verdict, Verdict::Arboreal, "{code}: {}", r.to_json());
        assert_eq!(r.canonical.as_deref(), Some(code.as_str()), "{code}");
        assert!(r.tree.as_ref().unwrap().vertices.len() <= r.dim + 1);
    }
    println!("round trip over trees with <= 4 vertices: {:?}", start.elapsed());
}

#[test]
fn transverse_planes_are_arboreal() {
    let s = 0.1;
    let arr = Arrangement::new(2, s, vec![plane(&[1.0, 0.0], vec![], 1, s), plane(&[0.0, 1.0], vec![], 2, s)]).unwrap();
    let r = check_arboreal(&arr, &ClassifierTol::for_spacing(s)).unwrap();
    assert_eq!(r.verdict, Verdict::Arboreal);
    assert_eq!(r.canonical.as_deref(), Some("(()())"));
}

#[test]
fn product_fixture_fails_transversality() {
    let arr = product_fixture(0.1).unwrap();
    let r = check_arboreal(&arr, &ClassifierTol::for_spacing(0.1)).unwrap();
    match &r.verdict {
        Verdict::NonArboreal { condition, .. } => assert_eq!(*condition, Condition::Transversality),
        v => panic!("{v:?}"),
    }
    assert_eq!(r.witnesses[0].sheets.len(), 3);
    // the witness lies on the common line
    let w = &r.witnesses[0].point;
    assert!(w[0].abs() < 0.1 && w[1].abs() < 0.1);
}

#[test]
fn corners_of_flat_pieces() {
    let s = 0.05;
    let tol = ClassifierTol::for_spacing(s);
    let flat = plane(&[0.0, 0.0, 1.0], vec![], 1, s);
    assert!(corner_stratification(&flat, &tol).codims().iter().all(|&k| k == 0));
    let quadrant = plane(&[0.0, 0.0, 1.0], vec![(vec![1.0, 0.0, 0.0], 0.0), (vec![0.0, 1.0, 0.0], 0.0)], 2, s);
    let cs = corner_stratification(&quadrant, &tol);
    let corner = quadrant.points.iter().position(|p| p.p[0].abs() < 1e-12 && p.p[1].abs() < 1e-12).unwrap();
    assert_eq!(cs.points[corner].codim, 2);
    let edge = quadrant.points.iter().position(|p| p.p[0].abs() < 1e-12 && (p.p[1] - 0.5).abs() < 1e-12).unwrap();
    assert_eq!(cs.points[edge].codim, 1);
    let inner =
        quadrant.points.iter().position(|p| (p.p[0] - 0.5).abs() < 1e-12 && (p.p[1] - 0.5).abs() < 1e-12).unwrap();
    assert_eq!(cs.points[inner].codim, 0);
}

#[test]
fn attached_sheet_has_a_codim_one_boundary() {
    let h = smoothed("((+()))");
    let s = spacing_for(2);
    let arr = Arrangement::from_hypersurface(&h, s).unwrap();
    let tol = ClassifierTol::for_spacing(s);
    let upper = arr.sheet(2).unwrap();
    let cs = corner_stratification(upper, &tol);
    let top = profile().crossing_height();
    let bnd: Vec<_> = (0..upper.points.len()).filter(|&k| cs.points[k].codim == 1).collect();
    assert!(!bnd.is_empty());
    for k in bnd {
        let p = &upper.points[k].p;
        assert!(p[0].abs() < 1e-3 && (p[1] - top).abs() < 4.0 * s, "{p:?}");
    }
    assert!(corner_stratification(arr.sheet(1).unwrap(), &tol).codims().iter().all(|&k| k == 0));
}

#[test]
fn tangency_orders() {
    let s = 0.05;
    let tol = ClassifierTol::for_spacing(s);
    let a = plane(&[1.0, 0.0], vec![], 1, s);
    let b = plane(&[0.0, 1.0], vec![], 2, s);
    assert_eq!(tangency_order(&a, &b, &[0.0, 0.0], &tol).unwrap().order, 0);
    let same = tangency_order(&a, &a, &[0.0, 0.0], &tol).unwrap();
    assert_eq!(same.flag, Some(TangencyFlag::SameSheet));

    let h = smoothed("((+()))");
    let arr = Arrangement::from_hypersurface(&h, s).unwrap();
    let contact = [0.0, profile().crossing_height()];
    let t = tangency_order(arr.sheet(2).unwrap(), arr.sheet(1).unwrap(), &contact, &tol).unwrap();
    assert!(t.order >= 1, "{t:?}");
}

#[test]
fn generic_unions() {
    let s = 0.05;
    let tol = ClassifierTol::for_spacing(s);
    let two = build_smoothed(&Source::Forest(SignedForest::from_singletons(&[1, 2])), &profile()).unwrap();
    let first = two.clone().retain_strata(&[1]);
    let second = two.retain_strata(&[2]);
    let par = check_generic_union(&first, &first, &[0.1, 0.0], &tol).unwrap();
    assert_eq!(par.verdict, Verdict::Arboreal);
    assert_eq!(par.canonical.as_deref(), Some("(()())"));
    let cross = check_generic_union(&first, &second, &[0.0, 0.0], &tol).unwrap();
    assert_eq!(cross.verdict, Verdict::Arboreal);
    let dup = check_generic_union(&first, &first, &[0.0, 0.0], &tol).unwrap();
    match dup.verdict {
        Verdict::NonArboreal { condition, .. } => assert_eq!(condition, Condition::UniqueInterior),
        v => panic!("{v:?}"),
    }
    assert!(check_generic_union(&first, &second, &[0.3, 0.0], &tol).is_err());
}

#[test]
fn leafy_sources_are_generalized() {
    use arbor::trees::LeafyForest;
    use std::collections::BTreeSet;
    for (expected, code) in [("((+()))", "(())"), ("((-(+())))", "((-()))")] {
        let f = delete_root(&SignedRootedTree::from_canonical(code).unwrap());
        let v = f.vertices().into_iter().find(|&v| f.is_leaf(v)).unwrap();
        let lf = LeafyForest { forest: f, marked: BTreeSet::from([v]) };
        let h = build_smoothed(&Source::Leafy(lf), &profile()).unwrap();
        let s = spacing_for(h.dim);
        let arr = Arrangement::from_hypersurface(&h, s).unwrap();
        let r = check_arboreal(&arr, &ClassifierTol::for_spacing(s)).unwrap();
        assert_eq!(r.verdict, Verdict::Generalized, "{}", r.to_json());
        assert_eq!(r.canonical.as_deref(), Some(expected));
        assert_eq!(r.tree.as_ref().unwrap().marked.len(), 1);
    }
}

#[test]
fn transverse_ending_fails_attachment() {
    let s = 0.05;
    let wall = plane(&[1.0, 0.0], vec![], 1, s);
    let half = plane(&[0.0, 1.0], vec![(vec![1.0, 0.0], 0.0)], 2, s);
    let arr = Arrangement::new(2, s, vec![wall, half]).unwrap();
    let r = check_arboreal(&arr, &ClassifierTol::for_spacing(s)).unwrap();
    match r.verdict {
        Verdict::NonArboreal { condition, .. } => assert_eq!(condition, Condition::Attachment),
        v => panic!("{v:?}"),
    }
    assert!(r.witnesses[0].point[0].abs() < 0.2);
}

#[test]
fn lone_half_line_is_generalized() {
    let s = 0.05;
    let half = plane(&[0.0, 1.0], vec![(vec![1.0, 0.0], 0.0)], 1, s);
    let arr = Arrangement::new(2, s, vec![half]).unwrap();
    let r = check_arboreal(&arr, &ClassifierTol::for_spacing(s)).unwrap();
    assert_eq!(r.verdict, Verdict::Generalized);
    assert_eq!(r.canonical.as_deref(), Some("((+()))"));
}

#[test]
fn verdicts_survive_halved_spacing() {
    for code in ["((+()))", "((-()))", "(()())", "((-())())"] {
        let h = smoothed(code);
        let coarse = spacing_for(h.dim);
        let mut seen = Vec::new();
        for s in [coarse, coarse / 2.0] {
            let arr = Arrangement::from_hypersurface(&h, s).unwrap();
            let r = check_arboreal(&arr, &ClassifierTol::for_spacing(s)).unwrap();
            seen.push((r.verdict, r.canonical));
        }
        assert_eq!(seen[0], seen[1], "{code}");
    }
}

/// Largest local dimension of a point cloud: principal axes whose spread
/// within `radius` of a probe exceeds `floor`.
fn cloud_dim(points: &[Vec<f64>], radius: f64, floor: f64) -> usize {
    let stride = points.len().div_ceil(40).max(1);
    points
        .iter()
        .step_by(stride)
        .map(|c| {
            let near: Vec<Vec<f64>> = points.iter().filter(|p| arbor::geom::dist(p, c) <= radius).cloned().collect();
            let (eig, _) = arbor::geom::pca(&near);
            eig.iter().filter(|&&e| e.max(0.0).sqrt() > floor).count()
        })
        .max()
        .unwrap_or(0)
}

#[test]
fn unrelated_corners_meet_in_the_expected_dimension() {
    // in R^3: a 2-chain and a lone vertex; the lone sheet meets the chain's
    // interiors in curves and the attached sheet's boundary in a point
    let h = smoothed("((+())())");
    let s = spacing_for(3);
    let tol = ClassifierTol::for_spacing(s);
    let arr = Arrangement::from_hypersurface(&h, s).unwrap();
    let lone = arr
        .sheets
        .iter()
        .find(|sh| {
            h.stratum_of(sh.id).unwrap().chain.depth() == 0
                && h.strata.iter().all(|t| t.chain.vertices.first() != Some(&sh.id) || t.owner == sh.id)
        })
        .unwrap();
    for other in arr.sheets.iter().filter(|sh| sh.id != lone.id) {
        let cs = corner_stratification(other, &tol);
        for k in 0..=1usize {
            let meet: Vec<Vec<f64>> = (0..other.points.len())
                .filter(|&q| cs.points[q].codim == k && !cs.points[q].truncated)
                .filter(|&q| lone.foot(&other.points[q].p, 0.5 * s, s).is_some())
                .map(|q| other.points[q].p.clone())
                .collect();
            if meet.is_empty() {
                continue;
            }
            let expected = 3 - k - 2;
            assert_eq!(cloud_dim(&meet, 6.0 * s, 1.5 * s), expected, "sheet {} codim {k}", other.id);
        }
    }
}

#[test]
fn report_json_round_trips() {
    let r = classify("((+())())");
    let text = r.to_json();
    let back: arbor::classifier::GermReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["verdict"]["kind"], "arboreal");
    assert!(v["tree"]["edges"].is_array());
}
