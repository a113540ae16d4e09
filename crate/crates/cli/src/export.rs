use std::collections::BTreeMap;
use std::fmt::Write as _;

use arbor::geom::{dist, Aabb};

/// A labelled point with a unit normal, as drawn or written.
pub struct Drawn<'a> {
    pub p: &'a [f64],
    pub label: u64,
    pub normal: Option<&'a [f64]>,
}

const PALETTE: [&str; 6] = ["#1f4e9c", "#b22222", "#2e8b57", "#8a2be2", "#d2691e", "#008b8b"];

/// Orders a cloud sampled along curves into polylines by nearest-neighbour
/// chaining from an extreme point, breaking at gaps wider than `gap`.
fn chains(points: &[&[f64]], gap: f64) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        // start from the lexicographically smallest remaining point
        let start = *left
            .iter()
            .min_by(|&&a, &&b| points[a][0].total_cmp(&points[b][0]).then(points[a][1].total_cmp(&points[b][1])))
            .expect("non-empty");
        left.retain(|&i| i != start);
        let mut chain = vec![start];
        loop {
            let last = points[*chain.last().expect("non-empty")];
            let next =
                left.iter().enumerate().map(|(k, &i)| (k, dist(points[i], last))).min_by(|a, b| a.1.total_cmp(&b.1));
            match next {
                Some((k, d)) if d <= gap => chain.push(left.swap_remove(k)),
                _ => break,
            }
        }
        out.push(chain);
    }
    out
}

/// Two-dimensional picture: one polyline per label, with short arrows along
/// the normals every `arrow_every` samples.
pub fn svg_2d(points: &[Drawn], window: &Aabb, gap: f64, arrow_every: usize) -> String {
    let (w, h) = (600.0, 600.0);
    let (lo, hi) = (&window.lo, &window.hi);
    let sx = |x: f64| (x - lo[0]) / (hi[0] - lo[0]) * w;
    let sy = |y: f64| h - (y - lo[1]) / (hi[1] - lo[1]) * h;
    let mut by_label: BTreeMap<u64, Vec<&Drawn>> = BTreeMap::new();
    for d in points {
        by_label.entry(d.label).or_default().push(d);
    }
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    s.push_str(
        r#"<defs><marker id="arrow" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 z"/></marker></defs>"#,
    );
    s.push('\n');
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let arrow = 0.08 * (hi[0] - lo[0]);
    for (k, (label, pts)) in by_label.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<&[f64]> = pts.iter().map(|d| d.p).collect();
        for chain in chains(&coords, gap) {
            let mut path = String::new();
            for (i, &j) in chain.iter().enumerate() {
                let _ =
                    write!(path, "{}{:.3},{:.3} ", if i == 0 { "M" } else { "L" }, sx(coords[j][0]), sy(coords[j][1]));
            }
            let _ =
                writeln!(s, r#"<path data-label="{label}" d="{path}" fill="none" stroke="{color}" stroke-width="2"/>"#);
            for &j in chain.iter().step_by(arrow_every.max(1)) {
                if let Some(n) = pts[j].normal {
                    let (x, y) = (coords[j][0], coords[j][1]);
                    let _ = writeln!(
                        s,
                        r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{color}" marker-end="url(#arrow)"/>"#,
                        sx(x),
                        sy(y),
                        sx(x + arrow * n[0]),
                        sy(y + arrow * n[1])
                    );
                }
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Wavefront OBJ point cloud: one group per label, normals as `vn`.
pub fn obj_3d(points: &[Drawn]) -> String {
    let mut by_label: BTreeMap<u64, Vec<&Drawn>> = BTreeMap::new();
    for d in points {
        by_label.entry(d.label).or_default().push(d);
    }
    let mut s = String::new();
    let mut vertex = 0usize;
    for (label, pts) in by_label {
        let _ = writeln!(s, "g label_{label}");
        let start = vertex + 1;
        for d in &pts {
            let _ = writeln!(s, "v {:.6} {:.6} {:.6}", d.p[0], d.p[1], d.p[2]);
            if let Some(n) = d.normal {
                let _ = writeln!(s, "vn {:.6} {:.6} {:.6}", n[0], n[1], n[2]);
            }
            vertex += 1;
        }
        if vertex >= start {
            let ids: Vec<String> = (start..=vertex).map(|i| i.to_string()).collect();
            let _ = writeln!(s, "p {}", ids.join(" "));
        }
    }
    s
}
