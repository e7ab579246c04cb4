use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_with, PeriodicTube, SectionOptions};
use crate::flow::{
    canonical_cyclic, primitive_root, trace_with, BilliardState, TraceConfig, TraceLimits,
};
use crate::geometry::ConvexPolytope;
use crate::linalg::{complement_basis, dist, dot};
use crate::tubes::planar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub max_word_period: usize,
    pub max_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationOptions {
    /// Largest estimated number of cyclic words solved exhaustively.
    pub exhaustive_budget: usize,
    /// Cap on sampled traces before the grid is coarsened.
    pub max_traces: usize,
    pub force_sampling: bool,
    pub section: SectionOptions,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            exhaustive_budget: 50_000,
            max_traces: 20_000_000,
            force_sampling: false,
            section: SectionOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnumerationMethod {
    ExhaustiveWords,
    CertifiedSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeAtlas {
    pub eps: f64,
    pub tubes: Vec<PeriodicTube>,
    pub search_bounds: SearchBounds,
    pub complete_within_bounds: bool,
    pub method: EnumerationMethod,
}

impl TubeAtlas {
    /// Number of tubes, `M(eps)`.
    pub fn count(&self) -> usize {
        self.tubes.len()
    }

    /// Restricts a candidate list to tubes admissible at `eps`.
    pub fn from_candidates(
        candidates: &[PeriodicTube],
        eps: f64,
        bounds: SearchBounds,
        complete: bool,
        method: EnumerationMethod,
    ) -> Self {
        let mut by_word: BTreeMap<Vec<usize>, PeriodicTube> = BTreeMap::new();
        for t in candidates {
            if keep(t, eps, &bounds) {
                by_word
                    .entry(canonical_cyclic(&t.word_core))
                    .or_insert_with(|| t.clone());
            }
        }
        let mut tubes: Vec<PeriodicTube> = by_word.into_values().collect();
        tubes.sort_by(|a, b| {
            a.length
                .total_cmp(&b.length)
                .then_with(|| canonical_cyclic(&a.word_core).cmp(&canonical_cyclic(&b.word_core)))
        });
        Self {
            eps,
            tubes,
            search_bounds: bounds,
            complete_within_bounds: complete,
            method,
        }
    }
}

fn keep(t: &PeriodicTube, eps: f64, b: &SearchBounds) -> bool {
    t.clearance >= eps - 1e-9 && t.period() <= b.max_word_period && t.length <= b.max_length + 1e-9
}

pub fn enumerate_tubes(p: &ConvexPolytope, eps: f64, bounds: SearchBounds) -> TubeAtlas {
    enumerate_tubes_with(p, eps, bounds, &EnumerationOptions::default())
}

/// Estimated number of canonical cyclic words up to the period bound.
fn word_estimate(facets: usize, max_period: usize) -> f64 {
    let f = facets as f64;
    (2..=max_period)
        .map(|k| f * (f - 1.0).powi(k as i32 - 1) / k as f64)
        .sum()
}

pub fn enumerate_tubes_with(
    p: &ConvexPolytope,
    eps: f64,
    bounds: SearchBounds,
    opts: &EnumerationOptions,
) -> TubeAtlas {
    if exhaustive_feasible(p, bounds, opts) {
        let cands = enumerate_candidates(p, bounds, &opts.section);
        return TubeAtlas::from_candidates(
            &cands,
            eps,
            bounds,
            true,
            EnumerationMethod::ExhaustiveWords,
        );
    }
    let (words, complete) = sampled_words(p, eps, bounds, opts);
    let tubes = solve_all(p, words, &opts.section);
    TubeAtlas::from_candidates(
        &tubes,
        eps,
        bounds,
        complete,
        EnumerationMethod::CertifiedSampling,
    )
}

/// Whether the word budget allows solving every word within `bounds`.
pub fn exhaustive_feasible(
    p: &ConvexPolytope,
    bounds: SearchBounds,
    opts: &EnumerationOptions,
) -> bool {
    !opts.force_sampling
        && word_estimate(p.num_facets(), bounds.max_word_period) <= opts.exhaustive_budget as f64
}

/// Every solvable primitive cyclic word up to the period bound, solved.
pub fn enumerate_candidates(
    p: &ConvexPolytope,
    bounds: SearchBounds,
    section: &SectionOptions,
) -> Vec<PeriodicTube> {
    let f = p.num_facets();
    let mut words = Vec::new();
    let mut cur = Vec::new();
    for first in 0..f {
        cur.clear();
        cur.push(first);
        extend(&mut cur, first, f, bounds.max_word_period, &mut words);
    }
    solve_all(p, words, section)
}

/// Depth-first generation of words whose first letter is their minimum,
/// keeping the canonical primitive representatives.
fn extend(cur: &mut Vec<usize>, first: usize, f: usize, max: usize, out: &mut Vec<Vec<usize>>) {
    let k = cur.len();
    if k >= 2
        && cur[k - 1] != cur[0]
        && primitive_root(cur).len() == k
        && canonical_cyclic(cur) == *cur
    {
        out.push(cur.clone());
    }
    if k == max {
        return;
    }
    for l in first..f {
        if l != cur[k - 1] {
            cur.push(l);
            extend(cur, first, f, max, out);
            cur.pop();
        }
    }
}

fn solve_all(
    p: &ConvexPolytope,
    words: Vec<Vec<usize>>,
    section: &SectionOptions,
) -> Vec<PeriodicTube> {
    let mut tubes: Vec<PeriodicTube> = words
        .into_par_iter()
        .filter_map(|w| solve_with(p, &w, section).ok().flatten())
        .collect();
    tubes.sort_by_cached_key(|t| canonical_cyclic(&t.word_core));
    tubes
}

/// Start points on a facet with spacing `h`, away from the skeleton.
fn facet_points(p: &ConvexPolytope, facet: usize, h: f64, margin: f64) -> Vec<Vec<f64>> {
    let verts: Vec<&Vec<f64>> = p.facets[facet]
        .vertices
        .iter()
        .map(|&i| &p.vertices[i])
        .collect();
    let mut out: Vec<Vec<f64>> = Vec::new();
    match p.dim {
        2 => {
            let (a, b) = (verts[0], verts[1]);
            let m = (dist(a, b) / h).ceil().max(1.0) as usize;
            for i in 0..m {
                let t = (i as f64 + 0.5) / m as f64;
                out.push(a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect());
            }
        }
        _ => {
            let normal = &p.halfspaces[facet].normal;
            let basis = complement_basis(normal);
            let origin = verts[0].clone();
            let to2 = |y: &[f64]| -> planar::P2 {
                let d: Vec<f64> = y.iter().zip(&origin).map(|(a, b)| a - b).collect();
                [dot(&basis[0], &d), dot(&basis[1], &d)]
            };
            let poly = planar::convex_hull(&verts.iter().map(|v| to2(v)).collect::<Vec<_>>());
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for q in &poly {
                for k in 0..2 {
                    lo[k] = lo[k].min(q[k]);
                    hi[k] = hi[k].max(q[k]);
                }
            }
            let nx = ((hi[0] - lo[0]) / h).ceil().max(1.0) as usize;
            let ny = ((hi[1] - lo[1]) / h).ceil().max(1.0) as usize;
            for i in 0..nx {
                for j in 0..ny {
                    let q = [
                        lo[0] + (i as f64 + 0.5) * (hi[0] - lo[0]) / nx as f64,
                        lo[1] + (j as f64 + 0.5) * (hi[1] - lo[1]) / ny as f64,
                    ];
                    if planar::depth(&poly, q) > 0.0 {
                        out.push(
                            (0..p.dim)
                                .map(|c| origin[c] + q[0] * basis[0][c] + q[1] * basis[1][c])
                                .collect(),
                        );
                    }
                }
            }
        }
    }
    out.retain(|x| p.skeleton_distance_unchecked(x) >= margin);
    out
}

/// Inward unit directions at a facet with angular spacing at most `delta`.
fn inward_directions(p: &ConvexPolytope, facet: usize, delta: f64) -> Vec<Vec<f64>> {
    let normal = &p.halfspaces[facet].normal;
    let inward: Vec<f64> = normal.iter().map(|x| -x).collect();
    let basis = complement_basis(normal);
    let mut out = Vec::new();
    match p.dim {
        2 => {
            let m = (std::f64::consts::PI / delta).ceil() as usize;
            for i in 0..m {
                let th = (i as f64 + 0.5) * std::f64::consts::PI / m as f64;
                out.push(
                    (0..2)
                        .map(|c| th.cos() * basis[0][c] + th.sin() * inward[c])
                        .collect(),
                );
            }
        }
        _ => {
            let rings = (std::f64::consts::FRAC_PI_2 / delta).ceil() as usize;
            for j in 0..rings {
                let phi = (j as f64 + 0.5) * std::f64::consts::FRAC_PI_2 / rings as f64;
                let m = ((std::f64::consts::TAU * phi.sin()) / delta)
                    .ceil()
                    .max(1.0) as usize;
                for i in 0..m {
                    let az = (i as f64 + 0.5) * std::f64::consts::TAU / m as f64;
                    out.push(
                        (0..3)
                            .map(|c| {
                                phi.cos() * inward[c]
                                    + phi.sin() * (az.cos() * basis[0][c] + az.sin() * basis[1][c])
                            })
                            .collect(),
                    );
                }
            }
        }
    }
    out
}

/// Candidate words from a start grid fine enough that every tube whose
/// central orbit clears the skeleton by `eps` has a sample staying within
/// `eps / 2` of that orbit for one full period: the start offset is at most
/// `eps / 4` and the angular error times the length bound at most `eps / 4`.
fn sampled_words(
    p: &ConvexPolytope,
    eps: f64,
    bounds: SearchBounds,
    opts: &EnumerationOptions,
) -> (Vec<Vec<usize>>, bool) {
    let n = p.dim as f64;
    let horizon = bounds.max_length * 1.05 + 1e-9;
    // Nearest grid point and nearest direction lie within half a diagonal
    // of a cell.
    let h = eps / (2.0 * (n - 1.0).sqrt());
    let mut delta = eps / (2.0 * (n - 1.0).sqrt() * horizon);
    let mut complete = true;

    let points: Vec<(usize, Vec<f64>)> = (0..p.num_facets())
        .flat_map(|f| {
            facet_points(p, f, h, eps / 2.0)
                .into_iter()
                .map(move |x| (f, x))
        })
        .collect();
    let dirs_per = |d: f64| -> f64 {
        if p.dim == 2 {
            std::f64::consts::PI / d
        } else {
            std::f64::consts::TAU / (d * d)
        }
    };
    while points.len() as f64 * dirs_per(delta) > opts.max_traces as f64 {
        delta *= 1.25;
        complete = false;
    }
    let dirs: Vec<Vec<Vec<f64>>> = (0..p.num_facets())
        .map(|f| inward_directions(p, f, delta))
        .collect();

    let mut cfg = TraceConfig::new(
        TraceLimits {
            max_events: bounds.max_word_period.max(2) * 4,
            max_length: horizon,
        },
        0.0,
    );
    cfg.abort_clearance = Some(eps / 2.0);
    let return_tol = eps / horizon;

    let found: HashSet<Vec<usize>> = points
        .par_iter()
        .flat_map_iter(|(f, x)| dirs[*f].iter().map(move |d| (*f, x, d)))
        .fold(HashSet::new, |mut acc, (f, x, d)| {
            let s = BilliardState::new(x.clone(), d.clone(), Some(f));
            if let Ok((t, w)) = trace_with(p, &s, &cfg) {
                for (j, e) in t.events.iter().enumerate() {
                    if e.facet == f && dist(&e.dir, d) <= return_tol {
                        let core = primitive_root(&w.letters[..=j]);
                        if core.len() >= 2 && core.len() <= bounds.max_word_period {
                            acc.insert(canonical_cyclic(core));
                        }
                    }
                }
            }
            acc
        })
        .reduce(HashSet::new, |mut a, b| {
            a.extend(b);
            a
        });
    let mut words: Vec<Vec<usize>> = found.into_iter().collect();
    words.sort();
    (words, complete)
}
