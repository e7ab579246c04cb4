//! Singular points on the tube boundary and the recurrence checks built
//! on them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::planar;
use super::{solve_periodic_orbit, CrossSection, PeriodicTube, TubeError};
use crate::flow::{reflect_unchecked, trace_with, unfold, Affine, BilliardState, SymbolWord};
use crate::flow::{Termination, TraceConfig, TraceLimits};
use crate::geometry::ConvexPolytope;
use crate::linalg::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryHit {
    /// Cross-section coordinates of the singular point.
    pub point: Vec<f64>,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTrace {
    pub height: f64,
    /// Sorted by height.
    pub hits: Vec<BoundaryHit>,
    /// Largest distance from a boundary point to the nearest hit.
    pub gap: f64,
    /// `(height, gap)` after each hit that lowered the gap.
    pub gap_profile: Vec<(f64, f64)>,
    #[serde(skip)]
    samples: Vec<Vec<f64>>,
}

fn d(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl BoundaryTrace {
    /// First height at which the hits seen so far are `eps`-dense on the
    /// boundary.
    pub fn density_height(&self, eps: f64) -> Option<f64> {
        self.gap_profile
            .iter()
            .find(|(_, g)| *g < eps)
            .map(|(h, _)| *h)
    }

    /// End height of the shortest window starting at `hits[start]` whose
    /// hits are `eps`-dense.
    fn window_end(&self, start: usize, eps: f64) -> Option<f64> {
        let mut best = vec![f64::INFINITY; self.samples.len()];
        let mut uncovered = self.samples.len();
        for h in &self.hits[start..] {
            for (b, s) in best.iter_mut().zip(&self.samples) {
                let dist = d(s, &h.point);
                if *b >= eps && dist < eps {
                    uncovered -= 1;
                }
                *b = b.min(dist);
            }
            if uncovered == 0 {
                return Some(h.height);
            }
        }
        None
    }

    /// Smallest `l` such that every height window of length `l` starting
    /// within the first period contains an `eps`-dense set of hits.
    pub fn recurrence_height(&self, eps: f64, period_length: f64) -> Option<f64> {
        let mut starts: Vec<usize> = Vec::new();
        for (i, h) in self.hits.iter().enumerate() {
            if i == 0 || h.height > self.hits[i - 1].height + 1e-9 {
                starts.push(i);
            }
        }
        let mut worst: f64 = 0.0;
        for (k, &i) in starts.iter().enumerate() {
            let prev = if k == 0 {
                0.0
            } else {
                self.hits[starts[k - 1]].height
            };
            if prev >= period_length {
                break;
            }
            let end = self.window_end(i, eps)?;
            worst = worst.max(end - prev);
        }
        if starts.is_empty() {
            return None;
        }
        Some(worst)
    }
}

fn section_center(s: &CrossSection) -> Vec<f64> {
    s.centroid()
}

fn boundary_distance(s: &CrossSection, w: &[f64]) -> f64 {
    match s {
        CrossSection::Polygon { vertices } => {
            let k = vertices.len();
            (0..k)
                .map(|i| planar::point_segment([w[0], w[1]], vertices[i], vertices[(i + 1) % k]))
                .fold(f64::INFINITY, f64::min)
        }
        _ => s.depth(w).abs(),
    }
}

/// Singular points of the unfolded copies lying on the tube boundary up to
/// `height`, in cross-section coordinates.
pub fn boundary_singular_trace(
    p: &ConvexPolytope,
    tube: &PeriodicTube,
    height: f64,
) -> Result<BoundaryTrace, TubeError> {
    let section = tube
        .cross_section
        .as_ref()
        .ok_or(TubeError::UnsupportedDimension(p.dim))?;
    let chain = unfold(p, &SymbolWord::periodic(tube.word_core.clone()))?;
    let k = tube.period();
    let scale = p.scale();
    let tol = match section {
        CrossSection::Disc { hausdorff, .. } => (1e-7 * scale).max(4.0 * hausdorff),
        _ => 1e-7 * scale,
    };
    let nudge = 1e-6 * scale;
    let center = section_center(section);
    let samples = match section {
        CrossSection::Interval { .. } => section.boundary_samples(2),
        _ => section.boundary_samples(720),
    };
    let res = match section {
        CrossSection::Interval { .. } => f64::INFINITY,
        _ => samples
            .windows(2)
            .map(|w| d(&w[0], &w[1]))
            .fold(0.0, f64::max)
            .max(1e-9),
    };

    let coords = |y: &[f64]| tube.coordinates(y);
    let periods = (height / tube.length).ceil() as usize + 1;
    let mut hits: Vec<BoundaryHit> = Vec::new();
    let mut power = Affine::identity(p.dim);
    for _m in 0..periods {
        for j in 0..k {
            let place = power.compose(&chain.placements[j]);
            let hs: Vec<_> = p
                .halfspaces
                .iter()
                .map(|h| place.map_halfspace(h))
                .collect();
            for face in p.skeleton_points() {
                let pts: Vec<Vec<f64>> = face.iter().map(|x| place.apply(x)).collect();
                for y in candidate_points(&pts, section, &coords, res) {
                    let (w, t) = coords(&y);
                    if t < -1e-9 || t > height + 1e-9 || boundary_distance(section, &w) > tol {
                        continue;
                    }
                    let dir: Vec<f64> = center.iter().zip(&w).map(|(c, x)| c - x).collect();
                    let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                    let w_in: Vec<f64> = w
                        .iter()
                        .zip(&dir)
                        .map(|(x, e)| x + nudge * e / len)
                        .collect();
                    let mut y_in = tube.offset_point(&w_in);
                    y_in.iter_mut().zip(&tube.v).for_each(|(a, b)| *a += t * b);
                    if hs.iter().all(|h| h.excess(&y_in) <= 1e-9 * scale) {
                        hits.push(BoundaryHit {
                            point: w,
                            height: t,
                        });
                    }
                }
            }
        }
        power = power.compose(&chain.composed);
    }
    // Shared corners of adjacent copies are found more than once.
    let key = |h: &BoundaryHit| -> Vec<i64> {
        std::iter::once(h.height)
            .chain(h.point.iter().copied())
            .map(|x| (x * 1e8).round() as i64)
            .collect()
    };
    let mut unique: BTreeMap<Vec<i64>, BoundaryHit> = BTreeMap::new();
    for h in hits {
        unique.entry(key(&h)).or_insert(h);
    }
    let mut hits: Vec<BoundaryHit> = unique.into_values().collect();
    hits.sort_by(|a, b| a.height.total_cmp(&b.height));

    let mut best = vec![f64::INFINITY; samples.len()];
    let mut gap_profile = Vec::new();
    let mut gap = f64::INFINITY;
    for h in &hits {
        for (b, s) in best.iter_mut().zip(&samples) {
            *b = b.min(d(s, &h.point));
        }
        let g = best.iter().copied().fold(0.0, f64::max);
        if g < gap {
            gap = g;
            gap_profile.push((h.height, g));
        }
    }
    Ok(BoundaryTrace {
        height,
        hits,
        gap,
        gap_profile,
        samples,
    })
}

/// Points of a mapped skeleton face that may project onto the boundary:
/// the face itself when it is a vertex, otherwise a subdivision of the edge
/// plus its points closest to each boundary piece.
#[allow(clippy::type_complexity)]
fn candidate_points(
    pts: &[Vec<f64>],
    section: &CrossSection,
    coords: &dyn Fn(&[f64]) -> (Vec<f64>, f64),
    res: f64,
) -> Vec<Vec<f64>> {
    if pts.len() == 1 {
        return pts.to_vec();
    }
    let (a, b) = (&pts[0], &pts[1]);
    let lerp = |s: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect() };
    let (wa, _) = coords(a);
    let (wb, _) = coords(b);
    let (pa, pb) = ([wa[0], wa[1]], [wb[0], wb[1]]);
    let mut out = vec![a.clone(), b.clone()];
    let proj_len = planar::norm2(planar::sub2(pb, pa));
    let m = ((proj_len / res).ceil() as usize).min(4096);
    for i in 1..m {
        out.push(lerp(i as f64 / m as f64));
    }
    match section {
        CrossSection::Polygon { vertices } => {
            let q = vertices.len();
            for i in 0..q {
                let (_, s) = planar::segment_closest(pa, pb, vertices[i], vertices[(i + 1) % q]);
                out.push(lerp(s));
            }
        }
        CrossSection::Disc { center, .. } => {
            let ab = planar::sub2(pb, pa);
            let l2 = ab[0] * ab[0] + ab[1] * ab[1];
            if l2 > 0.0 {
                let c = planar::sub2(*center, pa);
                out.push(lerp(((c[0] * ab[0] + c[1] * ab[1]) / l2).clamp(0.0, 1.0)));
            }
        }
        CrossSection::Interval { .. } => {}
    }
    out
}

/// Piece of an orbit inside the tube, with the heights of its ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub ta: f64,
    pub tb: f64,
}

/// Folded orbit of the tube line with offset `w`, restricted to heights in
/// `[t_lo, t_hi]`.
pub fn tube_orbit_segments(
    p: &ConvexPolytope,
    tube: &PeriodicTube,
    w: &[f64],
    t_lo: f64,
    t_hi: f64,
) -> Result<Vec<OrbitSegment>, TubeError> {
    let (state, s) = tube.state_at(p, w);
    let normal = &p.halfspaces[tube.start_facet].normal;
    let back: Vec<f64> = reflect_unchecked(&tube.v.iter().map(|x| -x).collect::<Vec<_>>(), normal);
    let mut out = Vec::new();
    for (dir, sign, reach) in [(state.dir.clone(), 1.0, t_hi - s), (back, -1.0, s - t_lo)] {
        if reach <= 0.0 {
            continue;
        }
        let start = BilliardState::new(state.pos.clone(), dir, Some(tube.start_facet));
        let cfg = TraceConfig::new(
            TraceLimits {
                max_events: 10_000_000,
                max_length: reach + 1e-12,
            },
            0.0,
        );
        let (traj, _) = trace_with(p, &start, &cfg)?;
        let mut prev = (state.pos.clone(), 0.0);
        let mut pieces: Vec<(Vec<f64>, f64)> = traj
            .events
            .iter()
            .map(|e| (e.point.clone(), e.arc_length))
            .collect();
        if traj.terminated != Termination::Ran {
            if let Some(sp) = &traj.stop_point {
                pieces.push((sp.clone(), traj.total_length));
            }
        }
        for (pt, arc) in pieces {
            let (h0, h1) = (s + sign * prev.1, s + sign * arc);
            if let Some(seg) = clip_segment(&prev.0, &pt, h0, h1, t_lo, t_hi) {
                out.push(seg);
            }
            prev = (pt, arc);
        }
    }
    Ok(out)
}

fn clip_segment(a: &[f64], b: &[f64], ha: f64, hb: f64, lo: f64, hi: f64) -> Option<OrbitSegment> {
    let (hmin, hmax) = (ha.min(hb), ha.max(hb));
    if hmax < lo || hmin > hi || (hb - ha).abs() < 1e-300 {
        return None;
    }
    let at = |h: f64| -> Vec<f64> {
        let s = ((h - ha) / (hb - ha)).clamp(0.0, 1.0);
        a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
    };
    let (c0, c1) = (ha.clamp(lo, hi), hb.clamp(lo, hi));
    Some(OrbitSegment {
        a: at(c0),
        b: at(c1),
        ta: c0,
        tb: c1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P2Sample {
    pub w: Vec<f64>,
    pub z0: f64,
    /// Smallest skeleton distance over the height window.
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P2Report {
    pub eps: f64,
    pub delta: f64,
    pub eta: f64,
    pub l: Option<f64>,
    pub samples: usize,
    /// The annulus of sample offsets was empty.
    pub vacuous: bool,
    pub violations: Vec<P2Sample>,
    pub passed: bool,
}

/// Largest depth over a grid, used to decide whether the annulus is empty.
fn max_depth(s: &CrossSection) -> f64 {
    match s {
        CrossSection::Interval { lo, hi } => 0.5 * (hi - lo),
        CrossSection::Disc { radius, .. } => *radius,
        CrossSection::Polygon { .. } => {
            let (lo, hi) = s.bounding_box();
            let g = 200;
            let mut best = s.depth(&s.centroid());
            for i in 0..=g {
                for j in 0..=g {
                    let w = [
                        lo[0] + (hi[0] - lo[0]) * i as f64 / g as f64,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / g as f64,
                    ];
                    best = best.max(s.depth(&w));
                }
            }
            best
        }
    }
}

/// Checks that every orbit of the tube starting at depth between
/// `eps/2 - eta` and `eps/2 + eta` passes, within height `l`, a point whose
/// `delta`-ball lies in the `eps`-neighbourhood of the skeleton.
pub fn check_p2prime(
    p: &ConvexPolytope,
    tube: &PeriodicTube,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<P2Report, TubeError> {
    let section = tube
        .cross_section
        .as_ref()
        .ok_or(TubeError::UnsupportedDimension(p.dim))?;
    let eta = eps / 6.0;
    let delta = eps / 6.0;
    let (d_lo, d_hi) = (eps / 2.0 - eta, eps / 2.0 + eta);
    let mut report = P2Report {
        eps,
        delta,
        eta,
        l: None,
        samples: 0,
        vacuous: false,
        violations: Vec::new(),
        passed: false,
    };
    if max_depth(section) < d_lo {
        report.vacuous = true;
        report.passed = true;
        return Ok(report);
    }
    let periods = match tube.order.finite() {
        Some(q) => q + 2,
        None => 200,
    };
    let trace = boundary_singular_trace(p, tube, periods as f64 * tube.length)?;
    let Some(l) = trace.recurrence_height(eps / 6.0, tube.length) else {
        return Ok(report);
    };
    report.l = Some(l);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = section.bounding_box();
    let mut attempts = 0usize;
    while report.samples < samples && attempts < samples * 10_000 {
        attempts += 1;
        let w: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| rng.random_range(*a..=*b))
            .collect();
        let depth = section.depth(&w);
        if depth < d_lo || depth > d_hi {
            continue;
        }
        let z0 = rng.random_range(0.0..tube.length);
        let segs = tube_orbit_segments(p, tube, &w, z0 - l, z0 + l)?;
        let clearance = segs
            .iter()
            .map(|s| p.segment_skeleton_distance(&s.a, &s.b))
            .fold(f64::INFINITY, f64::min);
        if clearance >= eps - delta {
            report.violations.push(P2Sample { w, z0, clearance });
        }
        report.samples += 1;
    }
    if report.samples == 0 {
        report.vacuous = true;
    }
    report.passed = report.violations.is_empty();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub c: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    pub pairs: usize,
}

/// Empirical constants of `c d(y1, y2) <= d(f^m y1, f^m y2) <= C d(y1, y2)`
/// for the return map of the tube of `word`, over `1 <= m <= m_max`.
pub fn return_map_lipschitz(
    p: &ConvexPolytope,
    word: &[usize],
    sample_pairs: usize,
    m_max: usize,
    seed: u64,
) -> Result<LipschitzReport, TubeError> {
    let tube = solve_periodic_orbit(p, word)?.ok_or(TubeError::EmptyCrossSection)?;
    let section = tube
        .cross_section
        .as_ref()
        .ok_or(TubeError::UnsupportedDimension(p.dim))?;
    let margin = 0.05 * max_depth(section);
    let (lo, hi) = section.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| loop {
        let w: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| rng.random_range(*a..=*b))
            .collect();
        if section.depth(&w) > margin {
            return w;
        }
    };
    let k = tube.period();
    let image = |w: &[f64], m: usize| -> Result<Vec<f64>, TubeError> {
        let (state, _) = tube.state_at(p, w);
        let (t, _) = trace_with(
            p,
            &state,
            &TraceConfig::new(TraceLimits::events(m * k), 0.0),
        )?;
        let rel: Vec<f64> = t.end.pos.iter().zip(&tube.x0).map(|(a, b)| a - b).collect();
        Ok(tube.basis.iter().map(|b| dot(b, &rel)).collect())
    };
    let (mut c, mut big_c) = (f64::INFINITY, 0.0f64);
    let mut pairs = 0;
    for _ in 0..sample_pairs {
        let w1 = draw(&mut rng);
        let w2 = draw(&mut rng);
        let d0 = d(&w1, &w2);
        if d0 < 1e-9 {
            continue;
        }
        for m in 1..=m_max {
            let r = d(&image(&w1, m)?, &image(&w2, m)?) / d0;
            c = c.min(r);
            big_c = big_c.max(r);
        }
        pairs += 1;
    }
    Ok(LipschitzReport { c, big_c, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    const BOTTOM: usize = 2;
    const TOP: usize = 3;

    fn square() -> ConvexPolytope {
        shapes::unit_box(&[1.0, 1.0]).unwrap()
    }

    #[test]
    fn vertical_tube_corners() {
        let sq = square();
        let tube = solve_periodic_orbit(&sq, &[TOP, BOTTOM]).unwrap().unwrap();
        let bt = boundary_singular_trace(&sq, &tube, 10.0).unwrap();
        // Two corners at every integer height 0..=10.
        assert_eq!(bt.hits.len(), 22);
        for h in &bt.hits {
            assert!((h.point[0].abs() - 0.5).abs() < 1e-12);
            assert!((h.height - h.height.round()).abs() < 1e-12);
        }
        assert_eq!(bt.gap, 0.0);
        assert_eq!(bt.recurrence_height(0.05, tube.length), Some(1.0));
    }

    #[test]
    fn p2prime_vertical_tube() {
        let sq = square();
        let tube = solve_periodic_orbit(&sq, &[TOP, BOTTOM]).unwrap().unwrap();
        let r = check_p2prime(&sq, &tube, 0.3, 200, 1).unwrap();
        assert!(r.passed && !r.vacuous);
        assert!(r.l.unwrap() <= 2.0);
        let r = check_p2prime(&sq, &tube, 2.0, 10, 1).unwrap();
        assert!(r.vacuous && r.passed);
    }

    #[test]
    fn isometric_return_map() {
        let r = return_map_lipschitz(&square(), &[TOP, BOTTOM], 20, 3, 5).unwrap();
        assert!((r.c - 1.0).abs() < 1e-12 && (r.big_c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orbit_segments_cover_window() {
        let sq = square();
        let tube = solve_periodic_orbit(&sq, &[TOP, BOTTOM]).unwrap().unwrap();
        let segs = tube_orbit_segments(&sq, &tube, &[0.2], -1.5, 2.5).unwrap();
        let total: f64 = segs.iter().map(|s| (s.tb - s.ta).abs()).sum();
        assert!((total - 4.0).abs() < 1e-9);
        for s in &segs {
            assert!((s.a[0] - 0.7).abs() < 1e-12);
        }
    }
}
