//! Small dense vector helpers and the min-norm-point routine.
//!
//! Points are plain `Vec<f64>` / `&[f64]` in the hot tracing paths; matrix
//! work goes through `nalgebra`.

use nalgebra::{DMatrix, DVector};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[inline]
pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
#[inline]
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| scale(a, 1.0 / n))
}

pub fn to_dvec(a: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(a)
}

pub fn from_dvec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    from_dvec(&(m * to_dvec(v)))
}

/// Orthonormal basis of the orthogonal complement of `v` (unit) in R^n.
///
/// Deterministic: Gram-Schmidt on the standard basis, skipping the axis most
/// aligned with `v`.
pub fn complement_basis(v: &[f64]) -> Vec<Vec<f64>> {
    let n = v.len();
    let skip = (0..n)
        .max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs()))
        .unwrap_or(0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(1));
    for axis in (0..n).filter(|&i| i != skip) {
        let mut e = vec![0.0; n];
        e[axis] = 1.0;
        let mut w = axpy(&e, -dot(&e, v), v);
        for b in &basis {
            let c = dot(&w, b);
            w = axpy(&w, -c, b);
        }
        if let Some(u) = normalized(&w) {
            basis.push(u);
        }
    }
    basis
}

/// `(a - b) . (c - d)` without allocating.
#[inline]
fn ddot(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (c[i] - d[i]);
    }
    s
}

/// Euclidean distance from `x` to the segment `[a, b]`.
pub fn point_segment_distance(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let len2 = ddot(b, a, b, a);
    let t = if len2 > 0.0 {
        (ddot(x, a, b, a) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut s = 0.0;
    for i in 0..x.len() {
        let d = a[i] + t * (b[i] - a[i]) - x[i];
        s += d * d;
    }
    s.sqrt()
}

/// Distance between segments `[p0, p1]` and `[q0, q1]` in R^n.
pub fn segment_segment_distance(p0: &[f64], p1: &[f64], q0: &[f64], q1: &[f64]) -> f64 {
    let a = ddot(p1, p0, p1, p0);
    let e = ddot(q1, q0, q1, q0);
    let f = ddot(q1, q0, p0, q0);
    const EPS: f64 = 1e-300;
    let (s, t);
    if a <= EPS && e <= EPS {
        return dist(p0, q0);
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = ddot(p1, p0, p0, q0);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = ddot(p1, p0, q1, q0);
            let denom = a * e - b * b;
            let mut s0 = if denom > 1e-14 * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let mut acc = 0.0;
    for i in 0..p0.len() {
        let d = (p0[i] + s * (p1[i] - p0[i])) - (q0[i] + t * (q1[i] - q0[i]));
        acc += d * d;
    }
    acc.sqrt()
}

/// Minimum-norm point of the convex hull of `points` (Wolfe's algorithm).
///
/// Returns the point; its norm is the distance from the origin to the hull.
pub fn min_norm_point(points: &[Vec<f64>]) -> Vec<f64> {
    assert!(
        !points.is_empty(),
        "min_norm_point needs at least one point"
    );
    if points.len() == 1 {
        return points[0].clone();
    }
    let scale2 = points
        .iter()
        .map(|p| dot(p, p))
        .fold(0.0, f64::max)
        .max(1e-300);
    let tol = 1e-13;

    let start = (0..points.len())
        .min_by(|&i, &j| dot(&points[i], &points[i]).total_cmp(&dot(&points[j], &points[j])))
        .unwrap();
    let mut active: Vec<usize> = vec![start];
    let mut weights: Vec<f64> = vec![1.0];
    let combine = |active: &[usize], w: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; points[0].len()];
        for (&i, &wi) in active.iter().zip(w) {
            for (xk, pk) in x.iter_mut().zip(&points[i]) {
                *xk += wi * pk;
            }
        }
        x
    };

    for _major in 0..(50 * points.len() + 50) {
        let x = combine(&active, &weights);
        let (j, xp) = (0..points.len())
            .map(|j| (j, dot(&x, &points[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if dot(&x, &x) - xp <= tol * scale2 || active.contains(&j) {
            return x;
        }
        active.push(j);
        weights.push(0.0);

        loop {
            let Some(mu) = affine_minimizer(points, &active) else {
                // Degenerate active set: drop the newest point and stop.
                active.pop();
                weights.pop();
                return combine(&active, &weights);
            };
            if mu.iter().all(|&m| m > 1e-14) {
                weights = mu;
                break;
            }
            let mut theta = 1.0f64;
            for (w, m) in weights.iter().zip(&mu) {
                if *m <= 1e-14 {
                    let denom = w - m;
                    if denom > 0.0 {
                        theta = theta.min(w / denom);
                    }
                }
            }
            for (w, m) in weights.iter_mut().zip(&mu) {
                *w = theta * m + (1.0 - theta) * *w;
            }
            let mut k = 0;
            while k < active.len() {
                if weights[k] <= 1e-14 {
                    active.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
            if active.len() <= 1 {
                break;
            }
        }
    }
    combine(&active, &weights)
}

/// Barycentric weights of the point of minimal norm in the affine hull of
/// the selected points.
fn affine_minimizer(points: &[Vec<f64>], active: &[usize]) -> Option<Vec<f64>> {
    let m = active.len();
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            a[(r, c)] = dot(&points[i], &points[j]);
        }
        a[(r, m)] = 1.0;
        a[(m, r)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m + 1);
    b[m] = 1.0;
    let sol = a.lu().solve(&b)?;
    let mu: Vec<f64> = sol.iter().take(m).copied().collect();
    mu.iter().all(|v| v.is_finite()).then_some(mu)
}

/// Distance from `x` to the convex hull of `points`.
pub fn distance_to_hull(x: &[f64], points: &[Vec<f64>]) -> f64 {
    let shifted: Vec<Vec<f64>> = points.iter().map(|p| sub(p, x)).collect();
    norm(&min_norm_point(&shifted))
}

/// Distance between the convex hulls of two point sets.
pub fn hull_hull_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let diff: Vec<Vec<f64>> = a
        .iter()
        .flat_map(|p| b.iter().map(move |q| sub(p, q)))
        .collect();
    norm(&min_norm_point(&diff))
}

/// Affine rank of a point set (dimension of its affine hull).
pub fn affine_rank(points: &[Vec<f64>], tol: f64) -> usize {
    if points.len() <= 1 {
        return 0;
    }
    let n = points[0].len();
    let m = points.len() - 1;
    let mat = DMatrix::from_fn(n, m, |r, c| points[c + 1][r] - points[0][r]);
    let scale = mat.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    mat.svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > tol * scale * 1e3)
        .count()
}

/// `m^k` for a square matrix by repeated squaring.
pub fn mat_pow(m: &DMatrix<f64>, mut k: u64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        k >>= 1;
    }
    result
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_norm_point_of_segment() {
        let pts = vec![vec![1.0, -1.0], vec![1.0, 1.0]];
        let x = min_norm_point(&pts);
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12);
    }

    #[test]
    fn min_norm_point_origin_inside() {
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        assert!(norm(&min_norm_point(&pts)) < 1e-12);
    }

    #[test]
    fn min_norm_point_matches_segment_formula() {
        let a = vec![0.3, -0.2, 1.0];
        let b = vec![-0.5, 0.7, 0.4];
        let x = vec![0.1, 0.1, 0.1];
        let d1 = point_segment_distance(&x, &a, &b);
        let d2 = distance_to_hull(&x, &[a, b]);
        assert!((d1 - d2).abs() < 1e-10, "{d1} vs {d2}");
    }

    #[test]
    fn segment_distance_skew_lines() {
        let d = segment_segment_distance(
            &[0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[0.5, -1.0, 1.0],
            &[0.5, 1.0, 1.0],
        );
        assert!((d - 1.0).abs() < 1e-12);
        let h = hull_hull_distance(
            &[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
            &[vec![0.5, -1.0, 1.0], vec![0.5, 1.0, 1.0]],
        );
        assert!((h - 1.0).abs() < 1e-10);
    }

    #[test]
    fn complement_is_orthonormal() {
        let v = normalized(&[1.0, 2.0, -0.5, 0.3]).unwrap();
        let basis = complement_basis(&v);
        assert_eq!(basis.len(), 3);
        for (i, b) in basis.iter().enumerate() {
            assert!(dot(b, &v).abs() < 1e-12);
            for c in &basis[i + 1..] {
                assert!(dot(b, c).abs() < 1e-12);
            }
            assert!((norm(b) - 1.0).abs() < 1e-12);
        }
    }
}
