use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::planar::{self, P2};
use super::{PeriodicTube, TubeError};
use crate::flow::{unfold, SymbolWord, UnfoldingChain};
use crate::geometry::ConvexPolytope;
use crate::linalg::dot;
use crate::rotations::Order;

/// Convex cross-section in tube coordinates (`x0` at the origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrossSection {
    Interval {
        lo: f64,
        hi: f64,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
    /// Limit of an irrational rotation orbit of polygon constraints.
    Disc {
        center: [f64; 2],
        radius: f64,
        hausdorff: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionOptions {
    /// Rotated constraint copies used first for an irrational rotation.
    pub orbit_constraints: usize,
    /// The copy count doubles up to this until the disc test is decided.
    pub max_orbit_constraints: usize,
    /// Polygon-to-disc threshold on the Hausdorff distance.
    pub disc_tol: f64,
    /// Orders up to this are treated as finite.
    pub max_order: usize,
}

impl Default for SectionOptions {
    fn default() -> Self {
        Self {
            orbit_constraints: 1000,
            max_orbit_constraints: 64_000,
            disc_tol: 1e-6,
            max_order: 10_000,
        }
    }
}

impl CrossSection {
    pub fn centroid(&self) -> Vec<f64> {
        match self {
            Self::Interval { lo, hi } => vec![0.5 * (lo + hi)],
            Self::Polygon { vertices } => planar::centroid(vertices).to_vec(),
            Self::Disc { center, .. } => center.to_vec(),
        }
    }

    /// Copy with coordinates measured from `c`.
    pub fn shifted(&self, c: &[f64]) -> Self {
        match self {
            Self::Interval { lo, hi } => Self::Interval {
                lo: lo - c[0],
                hi: hi - c[0],
            },
            Self::Polygon { vertices } => Self::Polygon {
                vertices: vertices
                    .iter()
                    .map(|p| [p[0] - c[0], p[1] - c[1]])
                    .collect(),
            },
            Self::Disc {
                center,
                radius,
                hausdorff,
            } => Self::Disc {
                center: [center[0] - c[0], center[1] - c[1]],
                radius: *radius,
                hausdorff: *hausdorff,
            },
        }
    }

    /// Distance to the boundary, positive inside.
    pub fn depth(&self, w: &[f64]) -> f64 {
        match self {
            Self::Interval { lo, hi } => (w[0] - lo).min(hi - w[0]),
            Self::Polygon { vertices } => planar::depth(vertices, [w[0], w[1]]),
            Self::Disc { center, radius, .. } => {
                radius - planar::norm2(planar::sub2([w[0], w[1]], *center))
            }
        }
    }

    /// Euclidean distance from `w` to the closed region.
    pub fn distance(&self, w: &[f64]) -> f64 {
        let d = self.depth(w);
        if d >= 0.0 {
            return 0.0;
        }
        match self {
            Self::Polygon { vertices } => {
                let k = vertices.len();
                (0..k)
                    .map(|i| {
                        planar::point_segment([w[0], w[1]], vertices[i], vertices[(i + 1) % k])
                    })
                    .fold(f64::INFINITY, f64::min)
            }
            _ => -d,
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Self::Interval { lo, hi } => (vec![*lo], vec![*hi]),
            Self::Polygon { vertices } => {
                let mut lo = vec![f64::INFINITY; 2];
                let mut hi = vec![f64::NEG_INFINITY; 2];
                for p in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                (lo, hi)
            }
            Self::Disc { center, radius, .. } => (
                vec![center[0] - radius, center[1] - radius],
                vec![center[0] + radius, center[1] + radius],
            ),
        }
    }

    /// Evenly spaced boundary points.
    pub fn boundary_samples(&self, count: usize) -> Vec<Vec<f64>> {
        match self {
            Self::Interval { lo, hi } => vec![vec![*lo], vec![*hi]],
            Self::Polygon { vertices } => {
                let per = planar::perimeter(vertices);
                (0..count)
                    .map(|i| {
                        planar::boundary_point(vertices, per * i as f64 / count as f64).to_vec()
                    })
                    .collect()
            }
            Self::Disc { center, radius, .. } => (0..count)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / count as f64;
                    vec![center[0] + radius * a.cos(), center[1] + radius * a.sin()]
                })
                .collect(),
        }
    }

    /// Region image under an orthogonal map of the cross-section plane.
    pub fn transformed(&self, m: &DMatrix<f64>) -> Self {
        match self {
            Self::Interval { lo, hi } => {
                let s = m[(0, 0)];
                let (a, b) = (s * lo, s * hi);
                Self::Interval {
                    lo: a.min(b),
                    hi: a.max(b),
                }
            }
            Self::Polygon { vertices } => Self::Polygon {
                vertices: planar::transform(vertices, &mat2(m)),
            },
            Self::Disc {
                center,
                radius,
                hausdorff,
            } => Self::Disc {
                center: planar::rotate(*center, &mat2(m)),
                radius: *radius,
                hausdorff: *hausdorff,
            },
        }
    }

    /// Hausdorff distance between two convex regions of the same kind.
    pub fn hausdorff(&self, other: &Self) -> f64 {
        match (self, other) {
            (Self::Interval { lo: a, hi: b }, Self::Interval { lo: c, hi: d }) => {
                (a - c).abs().max((b - d).abs())
            }
            (
                Self::Disc {
                    center: c1,
                    radius: r1,
                    ..
                },
                Self::Disc {
                    center: c2,
                    radius: r2,
                    ..
                },
            ) => planar::norm2(planar::sub2(*c1, *c2)) + (r1 - r2).abs(),
            (Self::Polygon { vertices: a }, Self::Polygon { vertices: b }) => {
                let one = |x: &[P2], y: &CrossSection| {
                    x.iter().map(|p| y.distance(p)).fold(0.0, f64::max)
                };
                one(a, other).max(one(b, self))
            }
            _ => f64::INFINITY,
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            Self::Interval { lo, hi } => hi - lo,
            Self::Polygon { vertices } => planar::area(vertices),
            Self::Disc { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }
}

fn mat2(m: &DMatrix<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Recomputes the cross-section of a solved tube.
pub fn cross_section(
    p: &ConvexPolytope,
    tube: &PeriodicTube,
    opts: &SectionOptions,
) -> Result<CrossSection, TubeError> {
    if p.dim > 3 {
        return Err(TubeError::UnsupportedDimension(p.dim));
    }
    let chain = unfold(p, &SymbolWord::periodic(tube.word_core.clone()))?;
    compute(
        p,
        &chain,
        &tube.x0,
        &tube.v,
        &tube.basis,
        &tube.r0_perp_matrix(),
        tube.order,
        opts,
    )
}

/// Intersection over one period of the projected shared facets, then over
/// the orbit of `R0`. Coordinates are relative to the projection of `xp`.
#[allow(clippy::too_many_arguments)]
pub(super) fn compute(
    p: &ConvexPolytope,
    chain: &UnfoldingChain,
    xp: &[f64],
    _v: &[f64],
    basis: &[Vec<f64>],
    r0_perp: &DMatrix<f64>,
    order: Order,
    opts: &SectionOptions,
) -> Result<CrossSection, TubeError> {
    let project = |y: &[f64]| -> Vec<f64> {
        let d: Vec<f64> = y.iter().zip(xp).map(|(a, b)| a - b).collect();
        basis.iter().map(|b| dot(b, &d)).collect()
    };
    let tol = 1e-9 * p.scale();
    let letters = &chain.word.letters;
    match p.dim {
        2 => {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for (j, &f) in letters.iter().enumerate() {
                let cs: Vec<f64> = p.facets[f]
                    .vertices
                    .iter()
                    .map(|&vi| project(&chain.placements[j].apply(&p.vertices[vi]))[0])
                    .collect();
                lo = lo.max(cs.iter().copied().fold(f64::INFINITY, f64::min));
                hi = hi.min(cs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
            if r0_perp[(0, 0)] < 0.0 {
                let (a, b) = (lo, hi);
                lo = a.max(-b);
                hi = b.min(-a);
            }
            if hi - lo <= tol {
                return Err(TubeError::EmptyCrossSection);
            }
            Ok(CrossSection::Interval { lo, hi })
        }
        3 => {
            let mut poly: Option<Vec<P2>> = None;
            for (j, &f) in letters.iter().enumerate() {
                let pts: Vec<P2> = p.facets[f]
                    .vertices
                    .iter()
                    .map(|&vi| {
                        let c = project(&chain.placements[j].apply(&p.vertices[vi]));
                        [c[0], c[1]]
                    })
                    .collect();
                let hull = planar::convex_hull(&pts);
                poly = Some(match poly {
                    None => hull,
                    Some(cur) => planar::clip(&cur, &hull),
                });
            }
            let omega1 = poly.unwrap_or_default();
            if omega1.len() < 3 || planar::area(&omega1) <= tol * tol {
                return Err(TubeError::EmptyCrossSection);
            }
            let m = mat2(r0_perp);
            match order {
                Order::Finite(o) => {
                    let mut cur = omega1.clone();
                    let mut rm = [[1.0, 0.0], [0.0, 1.0]];
                    for _ in 1..o {
                        rm = mul2(&m, &rm);
                        cur = planar::clip(&cur, &planar::transform(&omega1, &rm));
                        if cur.len() < 3 {
                            return Err(TubeError::EmptyCrossSection);
                        }
                    }
                    if planar::area(&cur) <= tol * tol {
                        return Err(TubeError::EmptyCrossSection);
                    }
                    Ok(CrossSection::Polygon { vertices: cur })
                }
                Order::InfiniteSuspected(_) => rotation_closure(&omega1, &m, opts),
            }
        }
        n => Err(TubeError::UnsupportedDimension(n)),
    }
}

fn mul2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Intersection of `R^m Omega_1` over the first rotations, computed in
/// the polar dual: the intersection of half-planes `a . w <= h` with
/// `h > 0` is the polar of the hull of the points `a / h`.
fn rotation_closure(
    omega1: &[P2],
    m: &[[f64; 2]; 2],
    opts: &SectionOptions,
) -> Result<CrossSection, TubeError> {
    let hp = planar::halfplanes(omega1);
    if hp.iter().any(|(_, h)| *h <= 0.0) {
        // The rotation centre must be interior.
        return Err(TubeError::EmptyCrossSection);
    }
    let angle = m[1][0].atan2(m[0][0]);
    let mut count = opts.orbit_constraints.max(1);
    loop {
        let (verts, r_in, hausdorff) = closure_polygon(&hp, angle, count);
        // Orbit gaps shrink like 1/count, the polygon error like their square.
        if hausdorff < opts.disc_tol || count >= opts.max_orbit_constraints {
            return Ok(if hausdorff < opts.disc_tol {
                CrossSection::Disc {
                    center: [0.0, 0.0],
                    radius: r_in,
                    hausdorff,
                }
            } else {
                CrossSection::Polygon { vertices: verts }
            });
        }
        count = (count * 2).min(opts.max_orbit_constraints);
    }
}

fn closure_polygon(hp: &[(P2, f64)], angle: f64, count: usize) -> (Vec<P2>, f64, f64) {
    let mut dual: Vec<P2> = Vec::with_capacity(hp.len() * count);
    for k in 0..count {
        let (s, c) = (k as f64 * angle).sin_cos();
        for (a, h) in hp {
            dual.push([(c * a[0] - s * a[1]) / h, (s * a[0] + c * a[1]) / h]);
        }
    }
    let mut hull = planar::convex_hull(&dual);
    // Constraint families related by the rotation itself produce
    // near-duplicate dual points whose polar vertices are ill-conditioned.
    let mut kept: Vec<P2> = Vec::with_capacity(hull.len());
    for p in hull.drain(..) {
        if kept
            .last()
            .is_none_or(|l| planar::norm2(planar::sub2(p, *l)) > 1e-9 * planar::norm2(p))
        {
            kept.push(p);
        }
    }
    while kept.len() > 1
        && planar::norm2(planar::sub2(kept[0], kept[kept.len() - 1]))
            <= 1e-9 * planar::norm2(kept[0])
    {
        kept.pop();
    }
    let hull = kept;
    let q = hull.len();
    let mut verts = Vec::with_capacity(q);
    for i in 0..q {
        let a = hull[i];
        let b = hull[(i + 1) % q];
        let det = a[0] * b[1] - a[1] * b[0];
        verts.push([(b[1] - a[1]) / det, (a[0] - b[0]) / det]);
    }
    let r_in = 1.0 / hull.iter().map(|p| planar::norm2(*p)).fold(0.0, f64::max);
    let r_out = verts.iter().map(|p| planar::norm2(*p)).fold(0.0, f64::max);
    (verts, r_in, r_out - r_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_under_golden_rotation_closes_to_disc() {
        let sq = vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
        let th = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let m = [[th.cos(), -th.sin()], [th.sin(), th.cos()]];
        let opts = SectionOptions {
            orbit_constraints: 4000,
            max_orbit_constraints: 4000,
            ..Default::default()
        };
        match rotation_closure(&sq, &m, &opts).unwrap() {
            CrossSection::Disc {
                radius, hausdorff, ..
            } => {
                assert!((radius - 1.0).abs() < 1e-12);
                assert!(hausdorff < 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }
}
