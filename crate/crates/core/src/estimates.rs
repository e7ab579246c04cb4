//! Quantitative checks on tube atlases: the intersection angle bound, the
//! phase-space volume of a tube neighbourhood and the weighted tube count.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ConvexPolytope;
use crate::linalg::{dot, segment_segment_distance, sub};
use crate::quadrature::Composite;
use crate::rotations::{orbit_density_n, OrbitSampling, RotationError};
use crate::tubes::{
    direction_gap, enumerate_candidates, enumerate_tubes_with, exhaustive_feasible,
    tube_orbit_segments, CrossSection, EnumerationMethod, EnumerationOptions, OrbitSegment,
    PeriodicTube, SearchBounds, TubeAtlas, TubeError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("no intersecting parallel representatives within the tube radii")]
    NoIntersectionFound,
    #[error("tubes are parallel")]
    Parallel,
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Tube(#[from] TubeError),
}

/// How the recurrence factor `N` of a tube is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorContext {
    /// The reflection group of the table is finite.
    pub rational: bool,
    pub sampling: OrbitSampling,
}

impl FactorContext {
    pub fn new(rational: bool) -> Self {
        Self {
            rational,
            sampling: OrbitSampling::default(),
        }
    }
}

/// Largest distance from the central orbit to the cross-section boundary.
pub fn section_radius(s: &CrossSection) -> f64 {
    match s {
        CrossSection::Interval { lo, hi } => lo.abs().max(hi.abs()),
        CrossSection::Polygon { vertices } => vertices
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max),
        CrossSection::Disc { center, radius, .. } => center[0].hypot(center[1]) + radius,
    }
}

/// Recurrence factor of a tube at scale `eps / 5`: `1` in the plane, the
/// rotation order on a rational table, `N(R, eps/5, r)` otherwise.
pub fn recurrence_factor(
    tube: &PeriodicTube,
    eps: f64,
    ctx: &FactorContext,
) -> Result<usize, EstimateError> {
    if tube.dim() == 2 {
        return Ok(1);
    }
    if ctx.rational {
        if let Some(o) = tube.order.finite() {
            return Ok(o);
        }
    }
    let radius = tube.cross_section.as_ref().map_or(0.0, section_radius);
    Ok(orbit_density_n(&tube.r0_perp_matrix(), eps / 5.0, radius, &ctx.sampling)?.n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleCheck {
    pub words: (Vec<usize>, Vec<usize>),
    /// Smallest intersection angle found, in `(0, pi/2]`.
    pub alpha: f64,
    pub sin_alpha: f64,
    pub bound: f64,
    pub factors: (usize, usize),
    /// Distance between the central segments realising `alpha`.
    pub separation: f64,
    pub pass: bool,
}

fn central_segments(p: &ConvexPolytope, t: &PeriodicTube) -> Result<Vec<OrbitSegment>, TubeError> {
    let zero = vec![0.0; t.dim() - 1];
    tube_orbit_segments(p, t, &zero, 0.0, t.length)
}

fn seg_dir(s: &OrbitSegment) -> Vec<f64> {
    let d = sub(&s.b, &s.a);
    let l = dot(&d, &d).sqrt();
    d.iter().map(|x| x / l).collect()
}

/// Intersection-angle bound for two tubes whose central orbits clear the
/// skeleton by `eps`. Parallel representatives within `eps / 10` of each
/// central orbit meet iff two central segments come within `eps / 5`.
pub fn angle_check(
    p: &ConvexPolytope,
    t1: &PeriodicTube,
    t2: &PeriodicTube,
    eps: f64,
    ctx: &FactorContext,
) -> Result<AngleCheck, EstimateError> {
    let s1 = central_segments(p, t1)?;
    let s2 = central_segments(p, t2)?;
    let reach = eps / 5.0 + 1e-12;
    let mut worst: Option<(f64, f64)> = None;
    let mut any_nonparallel = false;
    for a in &s1 {
        let da = seg_dir(a);
        for b in &s2 {
            let sin = direction_gap(&da, &seg_dir(b));
            if sin < 1e-9 {
                continue;
            }
            any_nonparallel = true;
            let sep = segment_segment_distance(&a.a, &a.b, &b.a, &b.b);
            if sep <= reach && worst.is_none_or(|(w, _)| sin < w) {
                worst = Some((sin, sep));
            }
        }
    }
    let (sin_alpha, separation) = match worst {
        Some(w) => w,
        None if !any_nonparallel => return Err(EstimateError::Parallel),
        None => return Err(EstimateError::NoIntersectionFound),
    };
    let n1 = recurrence_factor(t1, eps, ctx)?;
    let n2 = recurrence_factor(t2, eps, ctx)?;
    let bound = (0.8 * eps) / (n1 as f64 * t1.length).min(n2 as f64 * t2.length);
    Ok(AngleCheck {
        words: (t1.word_core.clone(), t2.word_core.clone()),
        alpha: sin_alpha.asin(),
        sin_alpha,
        bound,
        factors: (n1, n2),
        separation,
        pass: sin_alpha >= bound - 1e-9,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtlasAngleReport {
    pub checks: Vec<AngleCheck>,
    pub no_intersection: usize,
    pub violations: usize,
}

/// Angle checks over all pairs of an atlas.
pub fn atlas_angle_checks(
    p: &ConvexPolytope,
    atlas: &TubeAtlas,
    ctx: &FactorContext,
) -> Result<AtlasAngleReport, EstimateError> {
    let mut r = AtlasAngleReport::default();
    for (i, a) in atlas.tubes.iter().enumerate() {
        for b in &atlas.tubes[i + 1..] {
            match angle_check(p, a, b, atlas.eps, ctx) {
                Ok(c) => {
                    if !c.pass {
                        r.violations += 1;
                    }
                    r.checks.push(c);
                }
                Err(EstimateError::NoIntersectionFound | EstimateError::Parallel) => {
                    r.no_intersection += 1
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseVolume {
    /// Half-angle of the direction cap, `(4 eps / 5) / (2 N L)`.
    pub cap_angle: f64,
    pub volume: f64,
    /// `pi^2 eps^4 / (2500 N^2 L)`, from `sin t >= t / 2`; three dimensions
    /// only.
    pub lower_bound: Option<f64>,
}

fn unit_ball_volume(k: usize) -> f64 {
    let k = k as f64;
    PI.powf(k / 2.0) / gamma_half_int(k / 2.0 + 1.0)
}

/// `Gamma(x)` for `x` a positive multiple of one half.
fn gamma_half_int(x: f64) -> f64 {
    let mut g = if (x - x.floor()).abs() < 1e-12 {
        1.0
    } else {
        PI.sqrt()
    };
    let mut y = if (x - x.floor()).abs() < 1e-12 {
        1.0
    } else {
        0.5
    };
    while y < x - 1e-12 {
        g *= y;
        y += 1.0;
    }
    g
}

/// Volume of the set of unit tangent vectors based within `eps / 10` of
/// the central orbit and pointing within the cap angle of its direction.
pub fn phase_volume(dim: usize, length: f64, n_factor: usize, eps: f64) -> PhaseVolume {
    let theta = (0.8 * eps) / (2.0 * n_factor as f64 * length);
    let ball = unit_ball_volume(dim - 1) * (eps / 10.0).powi(dim as i32 - 1);
    let sphere = 2.0 * PI.powf((dim - 1) as f64 / 2.0) / gamma_half_int((dim - 1) as f64 / 2.0);
    let cap = if dim == 3 {
        2.0 * PI * (1.0 - theta.cos())
    } else if dim == 2 {
        2.0 * theta
    } else {
        sphere * Composite::new(16, 4).integrate(0.0, theta, |t| t.sin().powi(dim as i32 - 2))
    };
    let lower_bound = (dim == 3)
        .then(|| PI * PI * eps.powi(4) / (2500.0 * (n_factor * n_factor) as f64 * length));
    PhaseVolume {
        cap_angle: theta,
        volume: length * ball * cap,
        lower_bound,
    }
}

/// Tangent vectors of one tube's phase set.
pub struct PhaseSet {
    segments: Vec<(OrbitSegment, Vec<f64>)>,
    radius: f64,
    cap_angle: f64,
}

impl PhaseSet {
    pub fn new(
        p: &ConvexPolytope,
        tube: &PeriodicTube,
        n_factor: usize,
        eps: f64,
    ) -> Result<Self, TubeError> {
        let segments = central_segments(p, tube)?
            .into_iter()
            .map(|s| {
                let d = seg_dir(&s);
                (s, d)
            })
            .collect();
        Ok(Self {
            segments,
            radius: eps / 10.0,
            cap_angle: phase_volume(tube.dim(), tube.length, n_factor, eps).cap_angle,
        })
    }

    pub fn contains(&self, x: &[f64], theta: &[f64]) -> bool {
        self.segments.iter().any(|(s, d)| {
            crate::linalg::point_segment_distance(x, &s.a, &s.b) < self.radius
                && dot(theta, d).clamp(-1.0, 1.0).acos() < self.cap_angle
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumCheck {
    pub eps: f64,
    /// Number of tubes, `M(eps)`.
    pub m: usize,
    /// `1 / (N^(n-1) L^(n-2))` per tube.
    pub terms: Vec<f64>,
    pub lhs: f64,
    /// `vol(P) / eps^(2n-2)`.
    pub rhs_scale: f64,
    pub ratio: f64,
    pub complete: bool,
}

/// Weighted tube counts along a grid of `eps` with fixed search bounds.
pub fn sum_check(
    p: &ConvexPolytope,
    eps_grid: &[f64],
    bounds: SearchBounds,
    opts: &EnumerationOptions,
    ctx: &FactorContext,
) -> Result<Vec<SumCheck>, EstimateError> {
    let n = p.dim as i32;
    let vol = p.volume();
    let candidates = exhaustive_feasible(p, bounds, opts)
        .then(|| enumerate_candidates(p, bounds, &opts.section));
    let mut out = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let atlas = match &candidates {
            Some(c) => {
                TubeAtlas::from_candidates(c, eps, bounds, true, EnumerationMethod::ExhaustiveWords)
            }
            None => enumerate_tubes_with(p, eps, bounds, opts),
        };
        let mut terms = Vec::with_capacity(atlas.count());
        for t in &atlas.tubes {
            let nf = recurrence_factor(t, eps, ctx)? as f64;
            terms.push(1.0 / (nf.powi(n - 1) * t.length.powi(n - 2)));
        }
        let lhs: f64 = terms.iter().sum();
        let rhs_scale = vol / eps.powi(2 * n - 2);
        out.push(SumCheck {
            eps,
            m: atlas.count(),
            terms,
            lhs,
            rhs_scale,
            ratio: lhs / rhs_scale,
            complete: atlas.complete_within_bounds,
        });
    }
    Ok(out)
}

/// `eps, M, lhs, rhs_scale, ratio, complete` rows.
pub fn sum_check_csv(rows: &[SumCheck]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["eps", "M", "lhs", "rhs_scale", "ratio", "complete"])?;
    for r in rows {
        w.write_record([
            r.eps.to_string(),
            r.m.to_string(),
            r.lhs.to_string(),
            r.rhs_scale.to_string(),
            r.ratio.to_string(),
            r.complete.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;
    use crate::tubes::solve_periodic_orbit;

    const LEFT: usize = 0;
    const RIGHT: usize = 1;
    const BOTTOM: usize = 2;
    const TOP: usize = 3;

    #[test]
    fn square_vertical_vs_diagonal() {
        let sq = shapes::unit_box(&[1.0, 1.0]).unwrap();
        let v = solve_periodic_orbit(&sq, &[TOP, BOTTOM]).unwrap().unwrap();
        let d = solve_periodic_orbit(&sq, &[BOTTOM, RIGHT, TOP, LEFT])
            .unwrap()
            .unwrap();
        let c = angle_check(&sq, &v, &d, 0.1, &FactorContext::new(true)).unwrap();
        assert!((c.alpha - PI / 4.0).abs() < 1e-9);
        assert!((c.bound - 0.04).abs() < 1e-12);
        assert!(c.pass);
        let h = solve_periodic_orbit(&sq, &[RIGHT, LEFT]).unwrap().unwrap();
        let c = angle_check(&sq, &v, &h, 0.1, &FactorContext::new(true)).unwrap();
        assert!((c.sin_alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cap_volume_closed_form() {
        let v = phase_volume(3, 2.0, 1, 0.1);
        let theta: f64 = 0.08 / 4.0;
        let want = 2.0 * PI * 0.01 * 0.01 * 2.0 * PI * (1.0 - theta.cos());
        assert!((v.volume - want).abs() < 1e-18);
        assert!(v.lower_bound.unwrap() <= v.volume);
        // Quadratic cap scaling.
        let w = phase_volume(3, 2.0, 2, 0.1);
        assert!((w.volume / v.volume - 0.25).abs() < 1e-3);
        // The generic cap integral agrees with the closed form.
        let ball = PI * 0.01 * 0.01;
        let generic = 2.0 * ball * 2.0 * PI * Composite::new(16, 4).integrate(0.0, theta, f64::sin);
        assert!((generic - v.volume).abs() < 1e-15);
    }

    #[test]
    fn empty_sum_for_huge_eps() {
        let sq = shapes::unit_box(&[1.0, 1.0]).unwrap();
        let b = SearchBounds {
            max_word_period: 4,
            max_length: 5.0,
        };
        let r = sum_check(
            &sq,
            &[0.6],
            b,
            &EnumerationOptions::default(),
            &FactorContext::new(true),
        )
        .unwrap();
        assert_eq!(r[0].m, 0);
        assert_eq!(r[0].lhs, 0.0);
        assert!(sum_check_csv(&r).unwrap().starts_with("eps,M,lhs"));
    }
}
