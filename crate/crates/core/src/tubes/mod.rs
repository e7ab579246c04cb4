//! Periodic tubes: the fixed-point construction of central orbits,
//! cross-sections, bounded enumeration and boundary recurrence checks.
//!
//! Tube coordinates: a point `x0 + sum_i w_i basis_i + t v` has cross-section
//! coordinate `w` and height `t`. The unfolded isometry over one period is
//! `A x = R0 x + tau`; a line with offset `w` reappears after one period
//! with offset `R0^{-1} w`.

mod boundary;
mod enumerate;
pub mod planar;
mod section;

pub use boundary::{
    boundary_singular_trace, check_p2prime, return_map_lipschitz, tube_orbit_segments, BoundaryHit,
    BoundaryTrace, LipschitzReport, OrbitSegment, P2Report, P2Sample,
};
pub use enumerate::{
    enumerate_candidates, enumerate_tubes, enumerate_tubes_with, exhaustive_feasible,
    EnumerationMethod, EnumerationOptions, SearchBounds, TubeAtlas,
};
pub use section::{cross_section, CrossSection, SectionOptions};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{trace_with, unfold, BilliardState, FlowError, SymbolWord, Termination};
use crate::flow::{TraceConfig, TraceLimits};
use crate::geometry::ConvexPolytope;
use crate::linalg::{complement_basis, dist, dot};
use crate::rotations::{classify_rotation, Order};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TubeError {
    #[error("fixed space of the linear part is degenerate for this word")]
    SingularFixedSpace,
    #[error("cross-section is empty")]
    EmptyCrossSection,
    #[error("invalid word: {0}")]
    InvalidWord(String),
    #[error("cross-sections are not supported in dimension {0}")]
    UnsupportedDimension(usize),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "SO")]
    Preserving,
    #[serde(rename = "O-minus")]
    Reversing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTube {
    /// One period of the symbol word, ending with the facet `x0` lies on.
    pub word_core: Vec<usize>,
    /// True when the input word was odd and had to be traversed twice.
    pub doubled: bool,
    pub start_facet: usize,
    pub x0: Vec<f64>,
    pub v: Vec<f64>,
    pub length: f64,
    /// Linear part of the composed unfolding isometry (row-major).
    pub r0: Vec<Vec<f64>>,
    /// Orthonormal basis of the hyperplane orthogonal to `v`.
    pub basis: Vec<Vec<f64>>,
    /// `R0` restricted to `v`-perp in `basis` coordinates.
    pub r0_perp: Vec<Vec<f64>>,
    pub rotation_angles: Vec<f64>,
    pub orientation: Orientation,
    /// Order of `R0` on the cross-section: the integer `q` for which
    /// nearby orbits close after `q` periods.
    pub order: Order,
    pub cross_section: Option<CrossSection>,
    pub maximal: bool,
    /// Distance of the central orbit to the skeleton.
    pub clearance: f64,
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn matrix(r: &[Vec<f64>]) -> DMatrix<f64> {
    let n = r.len();
    let m = r.first().map_or(0, |x| x.len());
    DMatrix::from_fn(n, m, |i, j| r[i][j])
}

impl PeriodicTube {
    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn period(&self) -> usize {
        self.word_core.len()
    }

    pub fn r0_matrix(&self) -> DMatrix<f64> {
        matrix(&self.r0)
    }

    pub fn r0_perp_matrix(&self) -> DMatrix<f64> {
        matrix(&self.r0_perp)
    }

    /// Ambient point `x0 + sum w_i basis_i`.
    pub fn offset_point(&self, w: &[f64]) -> Vec<f64> {
        let mut x = self.x0.clone();
        for (wi, b) in w.iter().zip(&self.basis) {
            for (xk, bk) in x.iter_mut().zip(b) {
                *xk += wi * bk;
            }
        }
        x
    }

    /// Cross-section coordinates and height of an ambient point.
    pub fn coordinates(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let d: Vec<f64> = y.iter().zip(&self.x0).map(|(a, b)| a - b).collect();
        (
            self.basis.iter().map(|b| dot(b, &d)).collect(),
            dot(&self.v, &d),
        )
    }

    /// State on the start facet along the tube line with offset `w`, and
    /// the height of that point.
    pub fn state_at(&self, p: &ConvexPolytope, w: &[f64]) -> (BilliardState, f64) {
        let h = &p.halfspaces[self.start_facet];
        let base = self.offset_point(w);
        let s = (h.offset - dot(&h.normal, &base)) / dot(&h.normal, &self.v);
        let pos: Vec<f64> = base.iter().zip(&self.v).map(|(b, v)| b + s * v).collect();
        (
            BilliardState::new(pos, self.v.clone(), Some(self.start_facet)),
            s,
        )
    }

    pub fn central_state(&self) -> BilliardState {
        BilliardState::new(self.x0.clone(), self.v.clone(), Some(self.start_facet))
    }
}

/// Largest deviation of the central orbit from `(x0, v)` after each of
/// `periods` periods.
pub fn closure_error(
    p: &ConvexPolytope,
    tube: &PeriodicTube,
    periods: usize,
) -> Result<f64, TubeError> {
    let k = tube.period();
    let cfg = TraceConfig::new(TraceLimits::events(k * periods), 0.0);
    let (t, w) = trace_with(p, &tube.central_state(), &cfg)?;
    if t.terminated != Termination::Ran || w.letters.len() != k * periods {
        return Ok(f64::INFINITY);
    }
    let mut worst: f64 = 0.0;
    for m in 1..=periods {
        let e = &t.events[m * k - 1];
        worst = worst
            .max(dist(&e.point, &tube.x0))
            .max(dist(&e.dir, &tube.v));
    }
    Ok(worst)
}

/// Central periodic orbit realising `word` (one period), if any.
pub fn solve_periodic_orbit(
    p: &ConvexPolytope,
    word: &[usize],
) -> Result<Option<PeriodicTube>, TubeError> {
    solve_with(p, word, &SectionOptions::default())
}

pub fn solve_with(
    p: &ConvexPolytope,
    word: &[usize],
    opts: &SectionOptions,
) -> Result<Option<PeriodicTube>, TubeError> {
    let k = word.len();
    if k < 2 {
        return Err(TubeError::InvalidWord("period must be at least 2".into()));
    }
    if let Some(&l) = word.iter().find(|&&l| l >= p.num_facets()) {
        return Err(TubeError::InvalidWord(format!("letter {l} out of range")));
    }
    // A facet cannot be hit twice in a row.
    if (0..k).any(|i| word[i] == word[(i + 1) % k]) {
        return Ok(None);
    }
    match solve_word(p, word, false, opts) {
        Err(TubeError::SingularFixedSpace) if k % 2 == 1 => {
            let doubled: Vec<usize> = word.iter().chain(word).copied().collect();
            solve_word(p, &doubled, true, opts)
        }
        r => r,
    }
}

fn solve_word(
    p: &ConvexPolytope,
    word: &[usize],
    doubled: bool,
    opts: &SectionOptions,
) -> Result<Option<PeriodicTube>, TubeError> {
    let n = p.dim;
    let k = word.len();
    let chain = unfold(p, &SymbolWord::periodic(word.to_vec()))?;
    let r0 = chain.linear_part().clone();
    let tau = DVector::from_column_slice(chain.translation());
    let m = &r0 - DMatrix::<f64>::identity(n, n);

    let svd = m.clone().svd(true, true);
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let fixed: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] < 1e-8)
        .map(|i| vt.row(i).transpose())
        .collect();
    if fixed.is_empty() {
        return Err(TubeError::SingularFixedSpace);
    }
    let mut proj = DVector::<f64>::zeros(n);
    for f in &fixed {
        proj += f * f.dot(&tau);
    }
    let length = proj.norm();
    if length < 1e-9 * p.scale() {
        return Err(TubeError::SingularFixedSpace);
    }
    let v: Vec<f64> = (proj / length).iter().copied().collect();
    let rhs = DVector::from_column_slice(&v) * length - &tau;
    let xp = svd
        .solve(&rhs, 1e-8)
        .map_err(|_| TubeError::SingularFixedSpace)?;
    if (&m * &xp - &rhs).norm() > 1e-7 * p.scale().max(length) {
        return Ok(None);
    }
    let xp: Vec<f64> = xp.iter().copied().collect();

    let basis = complement_basis(&v);
    let bm = DMatrix::from_fn(n - 1, n, |i, j| basis[i][j]);
    let r0_perp = &bm * &r0 * bm.transpose();
    let class = classify_rotation(&r0_perp, 1e-9, opts.max_order)
        .map_err(|_| TubeError::SingularFixedSpace)?;

    let start = word[k - 1];
    let section = if n <= 3 {
        match section::compute(p, &chain, &xp, &v, &basis, &r0_perp, class.order, opts) {
            Ok(s) => Some(s),
            Err(TubeError::EmptyCrossSection) => return Ok(None),
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    // With a higher-dimensional fixed space the centre of mass of the
    // cross-section is the distinguished central orbit.
    let center = match (&section, fixed.len() > 1) {
        (Some(s), true) => s.centroid(),
        _ => vec![0.0; n - 1],
    };
    let section = section.map(|s| s.shifted(&center));
    let mut line = xp.clone();
    for (c, b) in center.iter().zip(&basis) {
        for (x, bk) in line.iter_mut().zip(b) {
            *x += c * bk;
        }
    }
    let h = &p.halfspaces[start];
    let nv = dot(&h.normal, &v);
    if nv >= -1e-12 {
        return Ok(None);
    }
    let s = (h.offset - dot(&h.normal, &line)) / nv;
    let x0: Vec<f64> = line.iter().zip(&v).map(|(a, b)| a + s * b).collect();
    if !p.contains(&x0) {
        return Ok(None);
    }

    let mut cfg = TraceConfig::new(TraceLimits::events(k), 0.0);
    cfg.track_clearance = true;
    let state = BilliardState::new(x0.clone(), v.clone(), Some(start));
    let (t, w) = match trace_with(p, &state, &cfg) {
        Ok(r) => r,
        Err(FlowError::InvalidState(_)) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let scale = p.scale().max(length);
    if t.terminated != Termination::Ran
        || w.letters != word
        || dist(&t.end.pos, &x0) > 1e-7 * scale
        || dist(&t.end.dir, &v) > 1e-7
    {
        return Ok(None);
    }

    let orientation = if r0.determinant() > 0.0 {
        Orientation::Preserving
    } else {
        Orientation::Reversing
    };
    let maximal = section.is_some();
    Ok(Some(PeriodicTube {
        word_core: word.to_vec(),
        doubled,
        start_facet: start,
        x0,
        v,
        length,
        r0: rows(&r0),
        basis,
        r0_perp: rows(&r0_perp),
        rotation_angles: class.canonical_angles,
        orientation,
        order: class.order,
        cross_section: section,
        maximal,
        clearance: t.min_clearance,
    }))
}

/// Sine of the angle between two unit directions, ignoring orientation.
pub fn direction_gap(a: &[f64], b: &[f64]) -> f64 {
    let c = dot(a, b).abs().min(1.0);
    (1.0 - c * c).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;
    use crate::linalg::dist;

    #[test]
    fn square_vertical_tube() {
        let sq = shapes::unit_box(&[1.0, 1.0]).unwrap();
        let t = solve_periodic_orbit(&sq, &[3, 2]).unwrap().unwrap();
        assert!(dist(&t.v, &[0.0, 1.0]) < 1e-12);
        assert!((t.length - 2.0).abs() < 1e-12);
        assert!((t.r0_matrix() - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(dist(&t.x0, &[0.5, 0.0]) < 1e-12);
        match t.cross_section.unwrap() {
            CrossSection::Interval { lo, hi } => assert!((hi - lo - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!((t.clearance - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fagnano_orbit() {
        let tri = shapes::equilateral_triangle(1.0);
        let t = solve_periodic_orbit(&tri, &[0, 1, 2]).unwrap().unwrap();
        assert!((t.length - 1.5).abs() < 1e-10);
        assert_eq!(t.orientation, Orientation::Reversing);
        assert_eq!(t.order, Order::Finite(2));
        assert!(!t.doubled);
        // Base point is an edge midpoint.
        let mids = [
            [0.5, 0.0],
            [0.75, 3f64.sqrt() / 4.0],
            [0.25, 3f64.sqrt() / 4.0],
        ];
        assert!(mids.iter().any(|m| dist(m, &t.x0) < 1e-10));
    }

    #[test]
    fn backtracking_word_rejected() {
        let sq = shapes::unit_box(&[1.0, 1.0]).unwrap();
        assert!(solve_periodic_orbit(&sq, &[3, 3]).unwrap().is_none());
        assert!(solve_periodic_orbit(&sq, &[9, 3]).is_err());
    }

    #[test]
    fn infeasible_word_returns_none() {
        let sq = shapes::unit_box(&[1.0, 1.0]).unwrap();
        // left, top, left: cannot be a closed orbit.
        assert!(solve_periodic_orbit(&sq, &[0, 3, 0, 3, 1])
            .map(|t| t.is_none())
            .unwrap_or(true));
    }

    #[test]
    fn tetrahedron_irrational_tube() {
        let tet = shapes::regular_tetrahedron(1.0);
        let t = solve_periodic_orbit(&tet, &[0, 1, 2, 3]).unwrap().unwrap();
        assert!(matches!(t.order, Order::InfiniteSuspected(_)));
        assert!(closure_error(&tet, &t, 10).unwrap() < 1e-8 * t.length);
        match t.cross_section.as_ref().unwrap() {
            CrossSection::Disc { hausdorff, .. } => assert!(*hausdorff < 1e-6),
            other => panic!("{other:?}"),
        }
        let r0 = t.r0_matrix();
        let rv = &r0 * DVector::from_column_slice(&t.v);
        assert!(dist(rv.as_slice(), &t.v) < 1e-12);
    }

    #[test]
    fn prism_fagnano_tube() {
        let pr = shapes::triangular_prism(1.0, 1.0);
        let t = solve_periodic_orbit(&pr, &[0, 1, 2]).unwrap().unwrap();
        assert_eq!(t.period(), 3);
        assert_eq!(t.order, Order::Finite(2));
        let s = t.cross_section.as_ref().unwrap();
        assert!(s.measure() > 0.1);
        // The vertical direction lies in the section plane.
        let vert: Vec<f64> = t.basis.iter().map(|b| b[2]).collect();
        assert!((vert.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        let r0s = s.transformed(&t.r0_perp_matrix());
        assert!(s.hausdorff(&r0s) < 1e-9);
        // Nearby offsets close after two periods, not one.
        let w: Vec<f64> = t.basis.iter().map(|_| 0.1).collect();
        let (state, _) = t.state_at(&pr, &w);
        let (tr, word) =
            trace_with(&pr, &state, &TraceConfig::new(TraceLimits::events(6), 0.0)).unwrap();
        assert_eq!(word.letters, vec![0, 1, 2, 0, 1, 2]);
        assert!(dist(&tr.events[2].point, &state.pos) > 1e-3);
        assert!(dist(&tr.events[5].point, &state.pos) < 1e-9);
    }
}
