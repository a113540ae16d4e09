use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use arbor::geom::{dist, dot};
use arbor::hypersurface::{
    build_smoothed, eval_g, sample_stratum, ArborealHypersurface, SmoothingProfile, Source, Stratum,
};
use arbor::trees::{delete_root, enumerate_signed_rooted_trees, LeafyForest, SignedForest};
use proptest::prelude::*;

fn profile() -> Arc<SmoothingProfile> {
    static P: OnceLock<Arc<SmoothingProfile>> = OnceLock::new();
    P.get_or_init(|| Arc::new(SmoothingProfile::new(1.0).unwrap())).clone()
}

fn forests(max_vertices: usize) -> Vec<SignedForest> {
    enumerate_signed_rooted_trees(max_vertices).unwrap().iter().map(delete_root).collect()
}

fn spacing_for(dim: usize) -> f64 {
    if dim <= 2 {
        0.02
    } else {
        0.08
    }
}

/// Newton projection onto a stratum, returning the foot point if valid.
fn project(s: &Stratum, p: &[f64]) -> Option<Vec<f64>> {
    let mut x = p.to_vec();
    for _ in 0..60 {
        let (v, g) = s.eval(&x);
        let gg = dot(&g, &g);
        if v.abs() < 1e-14 {
            break;
        }
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= v * gi / gg);
    }
    (s.eval(&x).0.abs() < 1e-10 && s.is_valid(&x)).then_some(x)
}

#[test]
fn stratum_count_matches_vertices() {
    let p = profile();
    for f in forests(5) {
        let h = build_smoothed(&Source::Forest(f.clone()), &p).unwrap();
        assert_eq!(h.strata.len(), f.len());
        let leaves: BTreeSet<u32> = f.vertices().into_iter().filter(|&v| f.is_leaf(v)).collect();
        if let Some(&m) = leaves.iter().next() {
            let lf = LeafyForest { forest: f.clone(), marked: BTreeSet::from([m]) };
            let h = build_smoothed(&Source::Leafy(lf), &p).unwrap();
            assert_eq!(h.strata.len(), f.len());
            assert_eq!(h.dim, f.len() + 1);
            assert!(h.stratum_of(m).is_none());
        }
    }
}

#[test]
fn smoothed_agrees_with_pl_away_from_lower_strata() {
    let p = profile();
    for f in forests(4) {
        let h: ArborealHypersurface = build_smoothed(&Source::Forest(f), &p).unwrap();
        for s in &h.strata {
            for sp in sample_stratum(s, spacing_for(h.dim)).unwrap() {
                let far = s.pl_constraints.iter().all(|&(c, sg)| f64::from(sg) * sp.p[c] >= 1.0);
                if far {
                    assert!(sp.p[s.coord].abs() <= 1e-6, "{:?} off PL at {:?}", s.chain, sp.p);
                }
            }
        }
    }
}

#[test]
fn sheets_are_tangent_where_they_attach() {
    let p = profile();
    let mut checked = 0;
    for f in forests(4) {
        let h = build_smoothed(&Source::Forest(f), &p).unwrap();
        for s in h.strata.iter().filter(|s| s.chain.depth() >= 1) {
            let parent = s.chain.vertices[s.chain.depth() - 1];
            let lower = h.stratum_of(parent).unwrap();
            for sp in sample_stratum(s, spacing_for(h.dim)).unwrap() {
                let Some(foot) = project(lower, &sp.p) else { continue };
                if dist(&foot, &sp.p) > 1e-3 {
                    continue;
                }
                let (_, gl) = lower.eval(&foot);
                let nl: Vec<f64> = gl.iter().map(|x| x / dot(&gl, &gl).sqrt()).collect();
                let angle = dot(&sp.normal, &nl).abs().min(1.0).acos();
                assert!(angle <= 1e-2, "{:?}: angle {angle} at {:?}", s.chain, sp.p);
                // co-orientations agree, not just the tangent planes
                assert!(dot(&sp.normal, &nl) > 0.0);
                checked += 1;
            }
        }
    }
    assert!(checked > 20, "only {checked} near-contact samples");
}

#[test]
fn contact_lands_on_the_lower_sheet() {
    // the level-j tangency of a sheet lies exactly on the sheet one step down
    let p = profile();
    let f = delete_root(&arbor::trees::SignedRootedTree::from_canonical("((+(+())))").unwrap());
    let h = build_smoothed(&Source::Forest(f.clone()), &p).unwrap();
    let top = h.strata.iter().find(|s| s.chain.depth() == 2).unwrap();
    let mid = h.strata.iter().find(|s| s.chain.depth() == 1).unwrap();
    for x0 in [0.1, 0.4, 0.8, 1.5] {
        // g_2 = c with (x0, c) on the zero curve; the level-2 crossing is at x_1 = c, x_2 = h + c
        let c = (0..200).fold(0.5, |c: f64, _| c - p.value(x0, c) / p.eval(x0, c).1[1]);
        let q = [x0, c, p.crossing_height() + c];
        assert!(top.eval(&q).0.abs() < 1e-10);
        assert!(mid.eval(&q).0.abs() < 1e-10);
    }
}

fn depth_one_sign_flip(x: f64, y: f64, z: f64) {
    let p = profile();
    let plus = delete_root(&arbor::trees::SignedRootedTree::from_canonical("((+()))").unwrap());
    let minus = delete_root(&arbor::trees::SignedRootedTree::from_canonical("((-()))").unwrap());
    let gp = eval_g(&plus, 2, &p, &[-x, -y]).unwrap().0;
    let gm = eval_g(&minus, 2, &p, &[x, y]).unwrap().0;
    assert!((gm + gp).abs() <= 1e-12, "{gm} vs {gp}");
    // a third, unrelated coordinate plays no part
    let wide = delete_root(&arbor::trees::SignedRootedTree::from_canonical("((-())())").unwrap());
    let alpha = wide.components.iter().find(|c| c.len() == 2).unwrap();
    let child = alpha.edges[0].to;
    let coords = wide.vertices();
    let mut pt = vec![0.0; 3];
    pt[coords.binary_search(&alpha.root).unwrap()] = x;
    pt[coords.binary_search(&child).unwrap()] = y;
    pt[coords.iter().position(|v| *v != alpha.root && *v != child).unwrap()] = z;
    assert!((eval_g(&wide, child, &p, &pt).unwrap().0 - gm).abs() <= 1e-12);
}

#[test]
fn sign_flip_on_grid() {
    for i in -12..=12 {
        for j in -12..=12 {
            depth_one_sign_flip(i as f64 * 0.25, j as f64 * 0.25, 0.7);
        }
    }
}

proptest! {
    #[test]
    fn sign_flip_random(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
        depth_one_sign_flip(x, y, z);
    }

    #[test]
    fn gradient_nonzero_near_sheets(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
        let p = profile();
        for f in forests(4).into_iter().filter(|f| f.len() == 3) {
            let h = build_smoothed(&Source::Forest(f), &p).unwrap();
            for s in &h.strata {
                let (_, g) = s.eval(&[x, y, z]);
                prop_assert!(dot(&g, &g) > 1e-6);
            }
        }
    }
}
