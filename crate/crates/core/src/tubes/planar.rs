//! Planar convex-polygon helpers for two-dimensional cross-sections.

pub type P2 = [f64; 2];

#[inline]
fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (Andrew's monotone chain).
pub fn convex_hull(points: &[P2]) -> Vec<P2> {
    let mut pts: Vec<P2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<P2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<P2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Sutherland-Hodgman clip of a convex polygon by another (both CCW).
pub fn clip(subject: &[P2], clipper: &[P2]) -> Vec<P2> {
    let mut out = subject.to_vec();
    let m = clipper.len();
    for i in 0..m {
        if out.is_empty() {
            break;
        }
        let a = clipper[i];
        let b = clipper[(i + 1) % m];
        let input = std::mem::take(&mut out);
        let k = input.len();
        for j in 0..k {
            let p = input[j];
            let q = input[(j + 1) % k];
            let sp = cross(a, b, p);
            let sq = cross(a, b, q);
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

pub fn area(poly: &[P2]) -> f64 {
    let k = poly.len();
    (0..k)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % k];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
        / 2.0
}

pub fn centroid(poly: &[P2]) -> P2 {
    let k = poly.len();
    let a = area(poly);
    if a.abs() < 1e-300 {
        let n = k.max(1) as f64;
        return [
            poly.iter().map(|p| p[0]).sum::<f64>() / n,
            poly.iter().map(|p| p[1]).sum::<f64>() / n,
        ];
    }
    let mut c = [0.0, 0.0];
    for i in 0..k {
        let p = poly[i];
        let q = poly[(i + 1) % k];
        let w = p[0] * q[1] - q[0] * p[1];
        c[0] += (p[0] + q[0]) * w;
        c[1] += (p[1] + q[1]) * w;
    }
    [c[0] / (6.0 * a), c[1] / (6.0 * a)]
}

pub fn rotate(p: P2, m: &[[f64; 2]; 2]) -> P2 {
    [
        m[0][0] * p[0] + m[0][1] * p[1],
        m[1][0] * p[0] + m[1][1] * p[1],
    ]
}

/// Applies a 2x2 orthogonal map and restores CCW orientation.
pub fn transform(poly: &[P2], m: &[[f64; 2]; 2]) -> Vec<P2> {
    let mut out: Vec<P2> = poly.iter().map(|&p| rotate(p, m)).collect();
    if area(&out) < 0.0 {
        out.reverse();
    }
    out
}

/// Edges as `(unit outward normal, offset)`.
pub fn halfplanes(poly: &[P2]) -> Vec<(P2, f64)> {
    let k = poly.len();
    (0..k)
        .filter_map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % k];
            let n = [b[1] - a[1], a[0] - b[0]];
            let l = (n[0] * n[0] + n[1] * n[1]).sqrt();
            (l > 1e-15).then(|| {
                let n = [n[0] / l, n[1] / l];
                (n, n[0] * a[0] + n[1] * a[1])
            })
        })
        .collect()
}

pub fn contains(poly: &[P2], p: P2, tol: f64) -> bool {
    halfplanes(poly)
        .iter()
        .all(|(n, d)| n[0] * p[0] + n[1] * p[1] <= d + tol)
}

/// Signed distance to the boundary, positive inside.
pub fn depth(poly: &[P2], p: P2) -> f64 {
    halfplanes(poly)
        .iter()
        .map(|(n, d)| d - (n[0] * p[0] + n[1] * p[1]))
        .fold(f64::INFINITY, f64::min)
}

pub fn perimeter(poly: &[P2]) -> f64 {
    let k = poly.len();
    (0..k)
        .map(|i| norm2(sub2(poly[(i + 1) % k], poly[i])))
        .sum()
}

/// Point at arc length `s` along the boundary.
pub fn boundary_point(poly: &[P2], mut s: f64) -> P2 {
    let k = poly.len();
    for i in 0..k {
        let a = poly[i];
        let b = poly[(i + 1) % k];
        let l = norm2(sub2(b, a));
        if s <= l || i + 1 == k {
            let t = if l > 0.0 {
                (s / l).clamp(0.0, 1.0)
            } else {
                0.0
            };
            return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        }
        s -= l;
    }
    poly[0]
}

pub fn sub2(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn norm2(a: P2) -> f64 {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

/// Closest pair between segments `[p0, p1]` and `[q0, q1]`: returns
/// `(distance, parameter on the first segment)`.
pub fn segment_closest(p0: P2, p1: P2, q0: P2, q1: P2) -> (f64, f64) {
    let eval = |s: f64| -> (f64, f64) {
        let x = [p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])];
        (point_segment(x, q0, q1), s)
    };
    // The distance along the first segment is convex; golden-section
    // search is exact enough and avoids the degenerate-case algebra.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (eval(a).0, eval(b).0);
    for _ in 0..80 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = eval(a).0;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = eval(b).0;
        }
    }
    let mid = eval(0.5 * (lo + hi));
    [eval(0.0), eval(1.0), mid]
        .into_iter()
        .fold(
            (f64::INFINITY, 0.0),
            |acc, x| if x.0 < acc.0 { x } else { acc },
        )
}

pub fn point_segment(x: P2, a: P2, b: P2) -> f64 {
    let ab = sub2(b, a);
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 > 0.0 {
        (((x[0] - a[0]) * ab[0] + (x[1] - a[1]) * ab[1]) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm2([x[0] - a[0] - t * ab[0], x[1] - a[1] - t * ab[1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_and_clip() {
        let sq = convex_hull(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]]);
        assert_eq!(sq.len(), 4);
        assert!((area(&sq) - 1.0).abs() < 1e-15);
        let shifted: Vec<P2> = sq.iter().map(|p| [p[0] + 0.5, p[1] + 0.5]).collect();
        let c = clip(&sq, &shifted);
        assert!((area(&c) - 0.25).abs() < 1e-15);
        let cc = centroid(&c);
        assert!((cc[0] - 0.75).abs() < 1e-15 && (cc[1] - 0.75).abs() < 1e-15);
        assert!((depth(&sq, [0.5, 0.25]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn closest_segments() {
        let (d, s) = segment_closest([0.0, 1.0], [2.0, 1.0], [1.0, 0.0], [1.0, -1.0]);
        assert!((d - 1.0).abs() < 1e-12);
        assert!((s - 0.5).abs() < 1e-6);
    }
}
