//! Billiard flow: specular reflection, tracing with singular stopping,
//! symbol words and corridor unfoldings.
//!
//! Sign convention: facet normals point outward, so a direction about to
//! hit facet `i` has `dir . n_i > 0`; after reflection it points inward.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConvexPolytope, Halfspace};
use crate::linalg::{dist, dot, norm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("input vector is not unit length (norm {0})")]
    NonUnitInput(f64),
    #[error("no forward facet intersection from {pos:?} along {dir:?}")]
    StuckState { pos: Vec<f64>, dir: Vec<f64> },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("letter {letter} is not a facet index (polytope has {facets} facets)")]
    InvalidLetter { letter: usize, facets: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

const UNIT_TOL: f64 = 1e-8;

/// Mirror `dir` in the hyperplane with unit normal `normal`.
pub fn reflect(dir: &[f64], normal: &[f64]) -> Result<Vec<f64>, FlowError> {
    for v in [dir, normal] {
        let nv = norm(v);
        if (nv - 1.0).abs() > UNIT_TOL {
            return Err(FlowError::NonUnitInput(nv));
        }
    }
    Ok(reflect_unchecked(dir, normal))
}

#[inline]
pub(crate) fn reflect_unchecked(dir: &[f64], normal: &[f64]) -> Vec<f64> {
    let c = 2.0 * dot(dir, normal);
    dir.iter().zip(normal).map(|(d, n)| d - c * n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilliardState {
    pub pos: Vec<f64>,
    pub dir: Vec<f64>,
    pub face: Option<usize>,
}

impl BilliardState {
    pub fn new(pos: Vec<f64>, dir: Vec<f64>, face: Option<usize>) -> Self {
        Self { pos, dir, face }
    }

    pub fn validate(&self, p: &ConvexPolytope) -> Result<(), FlowError> {
        if self.pos.len() != p.dim || self.dir.len() != p.dim {
            return Err(FlowError::InvalidState("dimension mismatch".into()));
        }
        let nd = norm(&self.dir);
        if (nd - 1.0).abs() > UNIT_TOL {
            return Err(FlowError::NonUnitInput(nd));
        }
        if !p.contains(&self.pos) {
            return Err(FlowError::InvalidState("position outside the table".into()));
        }
        if let Some(f) = self.face {
            let h = p.halfspaces.get(f).ok_or(FlowError::InvalidLetter {
                letter: f,
                facets: p.num_facets(),
            })?;
            if dot(&self.dir, &h.normal) >= 0.0 {
                return Err(FlowError::InvalidState(
                    "direction not inward at face".into(),
                ));
            }
            if h.excess(&self.pos).abs() > 1e-7 * p.scale() {
                return Err(FlowError::InvalidState("position not on its face".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Ran,
    SingularHit,
    TangentHit,
    /// Segment clearance fell below the requested abort threshold.
    NearSkeleton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Cumulative arc length at the impact.
    pub arc_length: f64,
    pub point: Vec<f64>,
    pub facet: usize,
    /// Direction after reflection.
    pub dir: Vec<f64>,
    /// Sheet of the doubled table after the impact.
    pub parity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: BilliardState,
    pub events: Vec<Event>,
    pub total_length: f64,
    pub terminated: Termination,
    /// Point where a singular or tangent stop occurred.
    pub stop_point: Option<Vec<f64>>,
    /// Smallest segment distance to the skeleton (infinite if untracked).
    pub min_clearance: f64,
    /// Final state; meaningful when `terminated == Ran`.
    pub end: BilliardState,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolWord {
    pub letters: Vec<usize>,
    /// `(offset, period)` of the eventually periodic tail.
    pub periodic_core: Option<(usize, usize)>,
}

impl SymbolWord {
    pub fn new(letters: Vec<usize>) -> Self {
        let periodic_core = detect_core(&letters);
        Self {
            letters,
            periodic_core,
        }
    }

    /// A word that is by definition one period of a periodic orbit.
    pub fn periodic(letters: Vec<usize>) -> Self {
        let k = letters.len();
        Self {
            letters,
            periodic_core: Some((0, k)),
        }
    }

    pub fn core(&self) -> Option<&[usize]> {
        self.periodic_core.map(|(o, k)| &self.letters[o..o + k])
    }
}

/// Smallest period `k` such that a tail covering at least half the word and
/// two full periods repeats with period `k`. The offset is aligned so that
/// `k` divides the tail length.
pub fn detect_core(w: &[usize]) -> Option<(usize, usize)> {
    let n = w.len();
    for k in 1..=n / 2 {
        // Longest k-periodic suffix.
        let mut start = n - k;
        while start > 0 && w[start - 1] == w[start - 1 + k] {
            start -= 1;
        }
        let tail = n - start;
        if tail >= 2 * k && 2 * tail >= n {
            let offset = start + (tail % k);
            return Some((offset, k));
        }
    }
    None
}

/// Shortest word whose power is `w`.
pub fn primitive_root(w: &[usize]) -> &[usize] {
    let n = w.len();
    for k in 1..=n {
        if n.is_multiple_of(k) && (k..n).all(|i| w[i] == w[i - k]) {
            return &w[..k];
        }
    }
    w
}

/// Lexicographically least cyclic shift of `w` or of its reversal.
pub fn canonical_cyclic(w: &[usize]) -> Vec<usize> {
    let n = w.len();
    let mut best: Option<Vec<usize>> = None;
    let rev: Vec<usize> = w.iter().rev().copied().collect();
    for src in [w, rev.as_slice()] {
        for s in 0..n {
            let cand: Vec<usize> = (0..n).map(|i| src[(s + i) % n]).collect();
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        }
    }
    best.unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceLimits {
    pub max_events: usize,
    pub max_length: f64,
}

impl TraceLimits {
    pub fn events(max_events: usize) -> Self {
        Self {
            max_events,
            max_length: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceConfig {
    pub limits: TraceLimits,
    pub eps_stop: f64,
    pub tangency: f64,
    pub record_events: bool,
    pub track_clearance: bool,
    /// Stop with `NearSkeleton` once a segment comes closer than this.
    pub abort_clearance: Option<f64>,
}

impl TraceConfig {
    pub fn new(limits: TraceLimits, eps_stop: f64) -> Self {
        Self {
            limits,
            eps_stop,
            tangency: crate::tol::DEFAULT_TANGENCY_TOL,
            record_events: true,
            track_clearance: false,
            abort_clearance: None,
        }
    }
}

/// Traces a billiard orbit, stopping at limits or near the skeleton.
pub fn trace(
    p: &ConvexPolytope,
    s: &BilliardState,
    limits: TraceLimits,
    eps_stop: f64,
) -> Result<(Trajectory, SymbolWord), FlowError> {
    trace_with(p, s, &TraceConfig::new(limits, eps_stop))
}

pub fn trace_with(
    p: &ConvexPolytope,
    s: &BilliardState,
    cfg: &TraceConfig,
) -> Result<(Trajectory, SymbolWord), FlowError> {
    s.validate(p)?;
    let scale = p.scale();
    let tie_tol = p.tol * scale * 100.0;
    let singular_r = cfg.eps_stop.max(tie_tol);
    let track = cfg.track_clearance || cfg.abort_clearance.is_some();

    let mut pos = s.pos.clone();
    let mut dir = s.dir.clone();
    let mut face = s.face;
    let mut events = Vec::new();
    let mut letters = Vec::new();
    let mut total = 0.0;
    let mut parity = false;
    let mut min_clearance = f64::INFINITY;
    let mut terminated = Termination::Ran;
    let mut stop_point = None;

    while letters.len() < cfg.limits.max_events && total < cfg.limits.max_length {
        let (mut best, mut best_t, mut second_t) = (usize::MAX, f64::INFINITY, f64::INFINITY);
        for (i, h) in p.halfspaces.iter().enumerate() {
            if Some(i) == face {
                continue;
            }
            let c = dot(&dir, &h.normal);
            if c <= 0.0 {
                continue;
            }
            let t = (h.offset - dot(&h.normal, &pos)) / c;
            let t = t.max(0.0);
            if t < best_t {
                second_t = best_t;
                best_t = t;
                best = i;
            } else if t < second_t {
                second_t = t;
            }
        }
        if best == usize::MAX {
            return Err(FlowError::StuckState { pos, dir });
        }
        let h: &Halfspace = &p.halfspaces[best];
        let mut hit: Vec<f64> = pos.iter().zip(&dir).map(|(x, d)| x + best_t * d).collect();
        // Remove drift off the facet plane.
        let e = h.excess(&hit);
        hit.iter_mut().zip(&h.normal).for_each(|(x, n)| *x -= e * n);

        if track {
            let c = p.segment_skeleton_distance(&pos, &hit);
            min_clearance = min_clearance.min(c);
            if let Some(a) = cfg.abort_clearance {
                if c < a {
                    terminated = Termination::NearSkeleton;
                    total += best_t;
                    stop_point = Some(hit.clone());
                    pos = hit;
                    break;
                }
            }
        }
        total += best_t;
        if second_t - best_t <= tie_tol || p.skeleton_distance_unchecked(&hit) < singular_r {
            terminated = Termination::SingularHit;
            stop_point = Some(hit.clone());
            pos = hit;
            break;
        }
        if dot(&dir, &h.normal) < cfg.tangency {
            terminated = Termination::TangentHit;
            stop_point = Some(hit.clone());
            pos = hit;
            break;
        }
        let mut nd = reflect_unchecked(&dir, &h.normal);
        let nn = norm(&nd);
        nd.iter_mut().for_each(|v| *v /= nn);
        parity = !parity;
        letters.push(best);
        if cfg.record_events {
            events.push(Event {
                arc_length: total,
                point: hit.clone(),
                facet: best,
                dir: nd.clone(),
                parity,
            });
        }
        pos = hit;
        dir = nd;
        face = Some(best);
    }

    let traj = Trajectory {
        start: s.clone(),
        events,
        total_length: total,
        terminated,
        stop_point,
        min_clearance,
        end: BilliardState { pos, dir, face },
    };
    Ok((traj, SymbolWord::new(letters)))
}

/// Affine isometry `x -> linear * x + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub linear: DMatrix<f64>,
    pub translation: Vec<f64>,
}

impl Affine {
    pub fn identity(n: usize) -> Self {
        Self {
            linear: DMatrix::identity(n, n),
            translation: vec![0.0; n],
        }
    }

    /// Reflection in the hyperplane `normal . x = offset`.
    pub fn reflection(h: &Halfspace) -> Self {
        let n = h.normal.len();
        let linear = DMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - 2.0 * h.normal[i] * h.normal[j]
        });
        let translation = h.normal.iter().map(|v| 2.0 * h.offset * v).collect();
        Self {
            linear,
            translation,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.linear[(i, j)] * x[j]).sum::<f64>() + self.translation[i])
            .collect()
    }

    pub fn apply_linear(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.linear[(i, j)] * x[j]).sum::<f64>())
            .collect()
    }

    /// `self o other`.
    pub fn compose(&self, other: &Affine) -> Affine {
        let t = self.apply(&other.translation);
        Affine {
            linear: &self.linear * &other.linear,
            translation: t,
        }
    }

    /// Inverse of an isometry (linear part assumed orthogonal).
    pub fn inverse(&self) -> Affine {
        let lt = self.linear.transpose();
        let t: Vec<f64> = {
            let n = self.translation.len();
            (0..n)
                .map(|i| {
                    -(0..n)
                        .map(|j| lt[(i, j)] * self.translation[j])
                        .sum::<f64>()
                })
                .collect()
        };
        Affine {
            linear: lt,
            translation: t,
        }
    }

    /// Image of a half-space under the isometry.
    pub fn map_halfspace(&self, h: &Halfspace) -> Halfspace {
        let normal = self.apply_linear(&h.normal);
        let offset = h.offset + dot(&normal, &self.translation);
        Halfspace::new(normal, offset)
    }
}

/// Successive reflected copies `P^0, ..., P^m` along a word.
#[derive(Debug, Clone)]
pub struct UnfoldingChain {
    pub word: SymbolWord,
    /// Reflection through the shared facet between `P^j` and `P^{j+1}`.
    pub reflections: Vec<Affine>,
    /// `A_j` with `P^j = A_j(P)`; `placements[0]` is the identity.
    pub placements: Vec<Affine>,
    /// `A_m`, split as linear part `R0` and translation `tau`.
    pub composed: Affine,
}

impl UnfoldingChain {
    pub fn linear_part(&self) -> &DMatrix<f64> {
        &self.composed.linear
    }

    pub fn translation(&self) -> &[f64] {
        &self.composed.translation
    }

    /// Half-spaces of copy `j`.
    pub fn copy_halfspaces(&self, p: &ConvexPolytope, j: usize) -> Vec<Halfspace> {
        p.halfspaces
            .iter()
            .map(|h| self.placements[j].map_halfspace(h))
            .collect()
    }

    /// Maps a point of copy `j` back to the table.
    pub fn fold(&self, j: usize, x: &[f64]) -> Vec<f64> {
        self.placements[j].inverse().apply(x)
    }
}

pub fn unfold(p: &ConvexPolytope, word: &SymbolWord) -> Result<UnfoldingChain, FlowError> {
    if word.letters.is_empty() {
        return Err(FlowError::Precondition("empty word".into()));
    }
    let mut placements = vec![Affine::identity(p.dim)];
    let mut reflections = Vec::with_capacity(word.letters.len());
    for &l in &word.letters {
        let h = p.halfspaces.get(l).ok_or(FlowError::InvalidLetter {
            letter: l,
            facets: p.num_facets(),
        })?;
        let a = placements.last().expect("nonempty");
        let sigma = Affine::reflection(h);
        reflections.push(a.compose(&sigma).compose(&a.inverse()));
        placements.push(a.compose(&sigma));
    }
    let composed = placements.last().expect("nonempty").clone();
    Ok(UnfoldingChain {
        word: word.clone(),
        reflections,
        placements,
        composed,
    })
}

/// Evaluates the implication "equal words over `horizon` events implies
/// parallel directions". Directions count as parallel within
/// `max(tol, 2 diam / l)`, where `l` is the shorter traced length: two
/// straight segments of length `l` in one corridor of width at most the
/// diameter cannot differ in angle by more than that.
pub fn symbol_determines_direction_check(
    p: &ConvexPolytope,
    s1: &BilliardState,
    s2: &BilliardState,
    horizon: usize,
    tol: f64,
) -> Result<bool, FlowError> {
    let lim = TraceLimits::events(horizon);
    let (t1, w1) = trace(p, s1, lim, 0.0)?;
    let (t2, w2) = trace(p, s2, lim, 0.0)?;
    if t1.terminated != Termination::Ran || t2.terminated != Termination::Ran {
        return Err(FlowError::Precondition(
            "orbit stopped before the horizon".into(),
        ));
    }
    if w1.letters != w2.letters {
        return Ok(true);
    }
    let l = t1.total_length.min(t2.total_length);
    let allowed = tol.max(2.0 * p.diameter() / l);
    Ok(dist(&s1.dir, &s2.dir) <= allowed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    fn square() -> ConvexPolytope {
        shapes::unit_box(&[1.0, 1.0]).unwrap()
    }
    // Facet order of the unit box: left, right, bottom, top.
    const LEFT: usize = 0;
    const RIGHT: usize = 1;
    const BOTTOM: usize = 2;
    const TOP: usize = 3;

    #[test]
    fn reflect_examples() {
        assert_eq!(
            reflect(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]).unwrap(),
            vec![0.0, 0.0, -1.0]
        );
        let s = 0.5f64.sqrt();
        let r = reflect(&[s, 0.0, s], &[0.0, 0.0, 1.0]).unwrap();
        assert!(dist(&r, &[s, 0.0, -s]) < 1e-15);
        let th = 0.3f64;
        let r = reflect(&[th.cos(), th.sin()], &[0.0, 1.0]).unwrap();
        assert!(dist(&r, &[th.cos(), -th.sin()]) < 1e-15);
        assert!(matches!(
            reflect(&[2.0, 0.0], &[0.0, 1.0]),
            Err(FlowError::NonUnitInput(_))
        ));
    }

    #[test]
    fn vertical_bouncing() {
        let s = BilliardState::new(vec![0.5, 0.0], vec![0.0, 1.0], Some(BOTTOM));
        let (t, w) = trace(&square(), &s, TraceLimits::events(6), 0.0).unwrap();
        assert_eq!(w.letters, vec![TOP, BOTTOM, TOP, BOTTOM, TOP, BOTTOM]);
        for (i, e) in t.events.iter().enumerate() {
            assert!((e.arc_length - (i + 1) as f64).abs() < 1e-12);
        }
        assert_eq!(w.core(), Some(&[TOP, BOTTOM][..]));
    }

    #[test]
    fn aimed_at_corner() {
        let d = crate::linalg::normalized(&[0.5, 1.0]).unwrap();
        let s = BilliardState::new(vec![0.5, 0.0], d, Some(BOTTOM));
        let (t, w) = trace(&square(), &s, TraceLimits::events(10), 0.0).unwrap();
        assert_eq!(t.terminated, Termination::SingularHit);
        assert!(w.letters.is_empty());
        assert!(dist(t.stop_point.as_ref().unwrap(), &[1.0, 1.0]) < 1e-12);
    }

    #[test]
    fn diagonal_family() {
        let d = crate::linalg::normalized(&[1.0, 1.0]).unwrap();
        let s = BilliardState::new(vec![0.25, 0.0], d, Some(BOTTOM));
        let (t, w) = trace(&square(), &s, TraceLimits::events(12), 0.0).unwrap();
        let pts = [[1.0, 0.75], [0.75, 1.0], [0.0, 0.25], [0.25, 0.0]];
        for (e, q) in t.events.iter().zip(pts) {
            assert!(dist(&e.point, &q) < 1e-12);
        }
        assert_eq!(&w.letters[..4], &[RIGHT, TOP, LEFT, BOTTOM]);
        let (o, k) = w.periodic_core.unwrap();
        assert_eq!(k, 4);
        assert_eq!(&w.letters[o..o + 4], &[RIGHT, TOP, LEFT, BOTTOM]);
    }

    #[test]
    fn unfold_parallel_walls() {
        let w = SymbolWord::periodic(vec![TOP, BOTTOM]);
        let c = unfold(&square(), &w).unwrap();
        assert!((c.linear_part() - DMatrix::identity(2, 2)).amax() < 1e-15);
        assert!(dist(c.translation(), &[0.0, 2.0]) < 1e-15);
        let cube = shapes::unit_box(&[1.0, 1.0, 1.0]).unwrap();
        let c = unfold(&cube, &SymbolWord::periodic(vec![5, 4])).unwrap();
        assert!((c.linear_part() - DMatrix::identity(3, 3)).amax() < 1e-15);
        assert!(dist(c.translation(), &[0.0, 0.0, 2.0]) < 1e-15);
    }

    #[test]
    fn unfold_adjacent_walls_is_rotation() {
        let c = unfold(&square(), &SymbolWord::periodic(vec![RIGHT, TOP])).unwrap();
        let r = c.linear_part();
        assert!((r.transpose() * r - DMatrix::identity(2, 2)).amax() < 1e-15);
        assert!((r.determinant() - 1.0).abs() < 1e-15);
        // Two perpendicular mirrors compose to a half turn.
        assert!((r + DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn unfolded_ray_folds_back_onto_orbit() {
        let p = shapes::regular_tetrahedron(1.0);
        let d = crate::linalg::normalized(&[0.31, 0.47, 0.83]).unwrap();
        let s = BilliardState::new(p.vertex_centroid(), d, None);
        let (t, w) = trace(&p, &s, TraceLimits::events(40), 0.0).unwrap();
        let c = unfold(&p, &w).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let arc = t.total_length * i as f64 / 1000.0;
            let straight: Vec<f64> = s.pos.iter().zip(&s.dir).map(|(x, v)| x + arc * v).collect();
            let j = t.events.iter().take_while(|e| e.arc_length <= arc).count();
            let folded = c.fold(j, &straight);
            let (base, dir, a0) = if j == 0 {
                (&s.pos, &s.dir, 0.0)
            } else {
                let e = &t.events[j - 1];
                (&e.point, &e.dir, e.arc_length)
            };
            let truth: Vec<f64> = base
                .iter()
                .zip(dir)
                .map(|(x, v)| x + (arc - a0) * v)
                .collect();
            worst = worst.max(dist(&folded, &truth));
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn word_utilities() {
        assert_eq!(primitive_root(&[1, 2, 1, 2]), &[1, 2]);
        assert_eq!(canonical_cyclic(&[3, 1, 2]), vec![1, 2, 3]);
        assert_eq!(canonical_cyclic(&[2, 1, 3]), vec![1, 2, 3]);
        assert_eq!(detect_core(&[5, 1, 2, 1, 2, 1]), Some((2, 2)));
        assert_eq!(detect_core(&[1, 2, 3]), None);
    }

    #[test]
    fn parallel_sheet_examples() {
        let sq = square();
        let a = BilliardState::new(vec![0.3, 0.0], vec![0.0, 1.0], Some(BOTTOM));
        let b = BilliardState::new(vec![0.6, 0.0], vec![0.0, 1.0], Some(BOTTOM));
        assert!(symbol_determines_direction_check(&sq, &a, &b, 50, 1e-12).unwrap());
        let d = crate::linalg::normalized(&[0.2718, 1.0]).unwrap();
        let c = BilliardState::new(vec![0.3, 0.0], d, Some(BOTTOM));
        assert!(symbol_determines_direction_check(&sq, &a, &c, 50, 1e-12).unwrap());
    }
}
