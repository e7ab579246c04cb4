use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::linalg::{affine_rank, dist, distance_to_hull, dot, hull_hull_distance, norm};
use crate::linalg::{point_segment_distance, segment_segment_distance};
use crate::tol::Tolerance;

/// Closed half-space `normal . x <= offset` with a unit outward normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Signed violation `normal . x - offset` (positive outside).
    #[inline]
    pub fn excess(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }

    /// Affine reflection in the supporting hyperplane.
    pub fn reflect_point(&self, x: &[f64]) -> Vec<f64> {
        let e = 2.0 * self.excess(x);
        x.iter()
            .zip(&self.normal)
            .map(|(xi, ni)| xi - e * ni)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    /// Index into `ConvexPolytope::halfspaces`; equal to the facet index.
    pub halfspace: usize,
    pub vertices: Vec<usize>,
}

/// An `(n-2)`-dimensional face; lower-dimensional faces are contained in these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFace {
    pub facets: (usize, usize),
    pub vertices: Vec<usize>,
}

/// The billiard table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexPolytope {
    pub name: String,
    pub dim: usize,
    pub halfspaces: Vec<Halfspace>,
    pub vertices: Vec<Vec<f64>>,
    pub facets: Vec<Facet>,
    pub skeleton: Vec<SkeletonFace>,
    pub tol: f64,
    #[serde(skip)]
    skeleton_points: Vec<Vec<Vec<f64>>>,
}

impl PartialEq for ConvexPolytope {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.halfspaces == other.halfspaces
            && self.vertices == other.vertices
            && self.facets == other.facets
            && self.skeleton == other.skeleton
    }
}

/// Vertices of `{x : a_i . x <= b_i}` by exhaustive `n`-subset intersection.
pub(crate) fn enumerate_vertices(
    normals: &[Vec<f64>],
    offsets: &[f64],
    dim: usize,
    tol: f64,
) -> Vec<Vec<f64>> {
    let m = normals.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    if m < dim {
        return out;
    }
    let scale = offsets.iter().fold(1.0f64, |s, b| s.max(b.abs()));
    let mut idx: Vec<usize> = (0..dim).collect();
    loop {
        let a = DMatrix::from_fn(dim, dim, |r, c| normals[idx[r]][c]);
        let b = DVector::from_fn(dim, |r, _| offsets[idx[r]]);
        if let Some(x) = a.lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            let ok = x.iter().all(|v| v.is_finite())
                && normals
                    .iter()
                    .zip(offsets)
                    .all(|(nr, &d)| dot(nr, &x) - d <= tol * scale * 10.0);
            if ok && !out.iter().any(|v| dist(v, &x) <= tol * scale * 100.0) {
                out.push(x);
            }
        }
        // next combination
        let mut i = dim;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + m - dim {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        if idx[i] == i + m - dim {
            return out;
        }
        idx[i] += 1;
        for j in i + 1..dim {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

impl ConvexPolytope {
    /// Builds the polytope from unit-normal half-spaces, removing redundant ones.
    pub fn from_halfspaces(
        name: impl Into<String>,
        halfspaces: Vec<Halfspace>,
        tol: &Tolerance,
    ) -> Result<Self, GeometryError> {
        let t = tol.geometry;
        let dim = halfspaces
            .first()
            .map(|h| h.normal.len())
            .ok_or(GeometryError::DegeneratePolytope)?;
        if dim < 2 {
            return Err(GeometryError::DimensionTooSmall(dim));
        }
        for (i, h) in halfspaces.iter().enumerate() {
            if h.normal.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    found: h.normal.len(),
                });
            }
            if !h.offset.is_finite() || h.normal.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::NonFinite);
            }
            let nn = norm(&h.normal);
            if (nn - 1.0).abs() > t.max(1e-12) * 10.0 {
                return Err(GeometryError::NonUnitNormal { index: i, norm: nn });
            }
        }
        // Guard the exhaustive subset enumeration against pathological inputs.
        if dim > 6 || halfspaces.len() > 64 {
            return Err(GeometryError::UnsupportedDimension(dim));
        }

        let normals: Vec<Vec<f64>> = halfspaces.iter().map(|h| h.normal.clone()).collect();
        if let Some(dir) = recession_direction(&normals, dim, t) {
            return Err(GeometryError::UnboundedPolytope(dir));
        }
        let offsets: Vec<f64> = halfspaces.iter().map(|h| h.offset).collect();
        let vertices = enumerate_vertices(&normals, &offsets, dim, t);
        if vertices.len() < dim + 1 || affine_rank(&vertices, t) < dim {
            return Err(GeometryError::DegeneratePolytope);
        }
        let scale = vertices.iter().map(|v| norm(v)).fold(1.0, f64::max);
        let on = |h: &Halfspace, v: &[f64]| h.excess(v).abs() <= t * scale * 100.0;

        // Keep halfspaces that support a genuine facet; drop duplicates.
        let mut kept: Vec<Halfspace> = Vec::new();
        let mut facet_vertices: Vec<Vec<usize>> = Vec::new();
        for h in &halfspaces {
            let vs: Vec<usize> = (0..vertices.len())
                .filter(|&i| on(h, &vertices[i]))
                .collect();
            let pts: Vec<Vec<f64>> = vs.iter().map(|&i| vertices[i].clone()).collect();
            if vs.len() < dim || affine_rank(&pts, t) != dim - 1 {
                continue;
            }
            if facet_vertices.contains(&vs) {
                continue;
            }
            kept.push(h.clone());
            facet_vertices.push(vs);
        }
        let facets: Vec<Facet> = facet_vertices
            .iter()
            .enumerate()
            .map(|(i, vs)| Facet {
                halfspace: i,
                vertices: vs.clone(),
            })
            .collect();

        let mut skeleton: Vec<SkeletonFace> = Vec::new();
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        for i in 0..facets.len() {
            for j in i + 1..facets.len() {
                let common: Vec<usize> = facets[i]
                    .vertices
                    .iter()
                    .copied()
                    .filter(|v| facets[j].vertices.contains(v))
                    .collect();
                if common.is_empty() {
                    continue;
                }
                let pts: Vec<Vec<f64>> = common.iter().map(|&k| vertices[k].clone()).collect();
                if affine_rank(&pts, t) == dim - 2 && seen.insert(common.clone()) {
                    skeleton.push(SkeletonFace {
                        facets: (i, j),
                        vertices: common,
                    });
                }
            }
        }

        let mut p = Self {
            name: name.into(),
            dim,
            halfspaces: kept,
            vertices,
            facets,
            skeleton,
            tol: t,
            skeleton_points: Vec::new(),
        };
        p.cache_skeleton();
        Ok(p)
    }

    fn cache_skeleton(&mut self) {
        self.skeleton_points = self
            .skeleton
            .iter()
            .map(|f| {
                f.vertices
                    .iter()
                    .map(|&k| self.vertices[k].clone())
                    .collect()
            })
            .collect();
    }

    /// Restores derived caches after deserialization.
    pub fn rehydrate(mut self) -> Self {
        self.cache_skeleton();
        self
    }

    pub fn num_facets(&self) -> usize {
        self.halfspaces.len()
    }

    /// Vertex coordinates of every skeleton face.
    pub fn skeleton_points(&self) -> &[Vec<Vec<f64>>] {
        &self.skeleton_points
    }

    /// Largest constraint violation at `x` (non-positive inside).
    pub fn max_excess(&self, x: &[f64]) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.excess(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.max_excess(x) <= self.tol * self.scale() * 10.0
    }

    /// Length scale used to make tolerances relative.
    pub fn scale(&self) -> f64 {
        self.vertices.iter().map(|v| norm(v)).fold(1.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(dist(a, b));
            }
        }
        d
    }

    /// Average of the vertices; an interior point.
    pub fn vertex_centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for v in &self.vertices {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi;
            }
        }
        let k = self.vertices.len() as f64;
        c.iter_mut().for_each(|ci| *ci /= k);
        c
    }

    /// Radius of the largest inscribed ball.
    pub fn inradius(&self) -> f64 {
        // Vertices of {(x, r) : n.x + r <= d, -r <= 0} in R^{n+1}.
        let n = self.dim;
        let mut normals: Vec<Vec<f64>> = self
            .halfspaces
            .iter()
            .map(|h| {
                let mut v = h.normal.clone();
                v.push(1.0);
                v
            })
            .collect();
        let mut offsets: Vec<f64> = self.halfspaces.iter().map(|h| h.offset).collect();
        let mut neg = vec![0.0; n + 1];
        neg[n] = -1.0;
        normals.push(neg);
        offsets.push(0.0);
        enumerate_vertices(&normals, &offsets, n + 1, self.tol)
            .iter()
            .map(|v| v[n])
            .fold(0.0, f64::max)
    }

    /// Euclidean distance from `x` to the singular skeleton.
    pub fn distance_to_skeleton(&self, x: &[f64]) -> Result<f64, GeometryError> {
        if x.len() != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let violation = self.max_excess(x);
        if violation > self.tol * self.scale() * 10.0 {
            return Err(GeometryError::PointOutside { violation });
        }
        Ok(self.skeleton_distance_unchecked(x))
    }

    /// Skeleton distance without the containment check (hot path).
    pub fn skeleton_distance_unchecked(&self, x: &[f64]) -> f64 {
        self.skeleton_points
            .iter()
            .map(|pts| match pts.len() {
                1 => dist(x, &pts[0]),
                2 => point_segment_distance(x, &pts[0], &pts[1]),
                _ => distance_to_hull(x, pts),
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from the segment `[a, b]` to the skeleton.
    pub fn segment_skeleton_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.skeleton_points
            .iter()
            .map(|pts| match pts.len() {
                1 => point_segment_distance(&pts[0], a, b),
                2 => segment_segment_distance(a, b, &pts[0], &pts[1]),
                _ => hull_hull_distance(&[a.to_vec(), b.to_vec()], pts),
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Volume by recursive pyramid decomposition over the face lattice.
    pub fn volume(&self) -> f64 {
        let all: Vec<usize> = (0..self.vertices.len()).collect();
        let facets: Vec<Vec<usize>> = self.facets.iter().map(|f| f.vertices.clone()).collect();
        face_volume(&self.vertices, &all, &facets, self.dim, self.tol)
    }
}

/// `k`-volume of the face with vertex set `face`, whose facets are `sub`.
fn face_volume(
    vertices: &[Vec<f64>],
    face: &[usize],
    sub: &[Vec<usize>],
    k: usize,
    tol: f64,
) -> f64 {
    let pts: Vec<Vec<f64>> = face.iter().map(|&i| vertices[i].clone()).collect();
    if k == 0 {
        return 1.0;
    }
    if k == 1 {
        let mut best: f64 = 0.0;
        for a in &pts {
            for b in &pts {
                best = best.max(dist(a, b));
            }
        }
        return best;
    }
    let n = pts[0].len();
    let mut c = vec![0.0; n];
    for p in &pts {
        for (ci, pi) in c.iter_mut().zip(p) {
            *ci += pi / pts.len() as f64;
        }
    }
    let mut total = 0.0;
    for s in sub {
        let spts: Vec<Vec<f64>> = s.iter().map(|&i| vertices[i].clone()).collect();
        // Facets of `s`: maximal proper intersections with the other members of `sub`.
        let mut subsub: Vec<Vec<usize>> = Vec::new();
        for t in sub {
            if t == s {
                continue;
            }
            let common: Vec<usize> = s.iter().copied().filter(|v| t.contains(v)).collect();
            if common.len() < k - 1 {
                continue;
            }
            let cpts: Vec<Vec<f64>> = common.iter().map(|&i| vertices[i].clone()).collect();
            if affine_rank(&cpts, tol) == k - 2 && !subsub.contains(&common) {
                subsub.push(common);
            }
        }
        let base = face_volume(vertices, s, &subsub, k - 1, tol);
        let h = distance_to_affine_hull(&c, &spts);
        total += base * h / k as f64;
    }
    total
}

fn distance_to_affine_hull(x: &[f64], pts: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let m = pts.len() - 1;
    if m == 0 {
        return dist(x, &pts[0]);
    }
    let a = DMatrix::from_fn(n, m, |r, c| pts[c + 1][r] - pts[0][r]);
    let b = DVector::from_fn(n, |r, _| x[r] - pts[0][r]);
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&b, 1e-12).unwrap_or_else(|_| DVector::zeros(m));
    (b - a * coef).norm()
}

/// A nonzero `u` with `n_i . u <= 0` for all `i`, if one exists.
fn recession_direction(normals: &[Vec<f64>], dim: usize, tol: f64) -> Option<Vec<f64>> {
    let mut ns = normals.to_vec();
    let mut offs = vec![0.0; normals.len()];
    for k in 0..dim {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        ns.push(e.clone());
        offs.push(1.0);
        e[k] = -1.0;
        ns.push(e);
        offs.push(1.0);
    }
    enumerate_vertices(&ns, &offs, dim, tol)
        .into_iter()
        .find(|v| norm(v) > 1e-6)
}

/// Open `eps`-neighbourhood of the skeleton.
#[derive(Debug, Clone, Copy)]
pub struct SkeletonNeighborhood<'a> {
    pub eps: f64,
    pub parent: &'a ConvexPolytope,
}

impl<'a> SkeletonNeighborhood<'a> {
    pub fn new(parent: &'a ConvexPolytope, eps: f64) -> Self {
        Self { eps, parent }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.parent.skeleton_distance_unchecked(x) < self.eps
    }
}
