//! Orthogonal maps: canonical angles, finite order detection, the orbit
//! density count `N(R, eps, r)` and admissibility sets `S(phi, eps)`.
//!
//! An orthogonal map is conjugate to a direct sum of plane rotations and
//! `+-1` entries. An orbit in the ball of radius `r` is determined by the
//! radius it carries in each invariant block, and because the distance
//! between `R^k x` and `R^l x` only depends on `k - l`, every orbit of a
//! given radius profile is a translate of every other on its torus.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("matrix is not orthogonal (deviation {0})")]
    NotOrthogonal(f64),
    #[error("density not reached within {cap} iterates; N >= {lower_bound}")]
    SamplingBudgetExceeded { cap: usize, lower_bound: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Order {
    Finite(usize),
    InfiniteSuspected(usize),
}

impl Order {
    pub fn finite(&self) -> Option<usize> {
        match self {
            Order::Finite(o) => Some(*o),
            Order::InfiniteSuspected(_) => None,
        }
    }
}

/// One invariant block of the canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Block {
    /// Rotation by `angle` in the plane spanned by two canonical columns.
    Plane { angle: f64, cols: (usize, usize) },
    /// Eigenvalue `+1` or `-1` on one canonical column.
    Line { sign: i8, col: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationClass {
    pub matrix: Vec<Vec<f64>>,
    /// Angles in `(0, pi)` of the plane blocks.
    pub canonical_angles: Vec<f64>,
    pub fixed_signs: Vec<i8>,
    pub order: Order,
    pub blocks: Vec<Block>,
    /// Orthogonal `Q` with `Q^T R Q` block diagonal (row-major).
    pub canonical_basis: Vec<Vec<f64>>,
}

impl RotationClass {
    pub fn det_sign(&self) -> i8 {
        self.fixed_signs.iter().product()
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn orthogonality_defect(r: &DMatrix<f64>) -> f64 {
    let n = r.nrows();
    (r.transpose() * r - DMatrix::identity(n, n)).amax()
}

/// Least `o <= max_order` with `R^o = I` within `tol`.
pub fn matrix_order(r: &DMatrix<f64>, tol: f64, max_order: usize) -> Order {
    let n = r.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut p = r.clone();
    for o in 1..=max_order {
        if (&p - &id).amax() <= tol {
            return Order::Finite(o);
        }
        p = r * p;
    }
    Order::InfiniteSuspected(max_order)
}

/// Canonical form through the real Schur decomposition, which is block
/// diagonal for normal matrices.
pub fn classify_rotation(
    r: &DMatrix<f64>,
    tol: f64,
    max_order: usize,
) -> Result<RotationClass, RotationError> {
    if r.nrows() != r.ncols() || r.nrows() == 0 {
        return Err(RotationError::InvalidArgument(
            "matrix must be square".into(),
        ));
    }
    let defect = orthogonality_defect(r);
    if defect > tol.max(1e-9) * 10.0 {
        return Err(RotationError::NotOrthogonal(defect));
    }
    let n = r.nrows();
    let (q, t) = nalgebra::Schur::new(r.clone()).unpack();
    let mut blocks = Vec::new();
    let mut angles = Vec::new();
    let mut signs = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > 1e-12 {
            let c = 0.5 * (t[(i, i)] + t[(i + 1, i + 1)]);
            let s = 0.5 * (t[(i + 1, i)] - t[(i, i + 1)]);
            let mut angle = s.atan2(c);
            let mut cols = (i, i + 1);
            if angle < 0.0 {
                angle = -angle;
                cols = (i + 1, i);
            }
            blocks.push(Block::Plane { angle, cols });
            angles.push(angle);
            signs.push(1);
            i += 2;
        } else {
            let sign = if t[(i, i)] >= 0.0 { 1 } else { -1 };
            blocks.push(Block::Line { sign, col: i });
            signs.push(sign);
            i += 1;
        }
    }
    // Plane blocks contribute `+1` to the determinant sign list; only the
    // real eigenvalues are reported as fixed signs.
    let fixed_signs: Vec<i8> = blocks
        .iter()
        .filter_map(|b| match b {
            Block::Line { sign, .. } => Some(*sign),
            _ => None,
        })
        .collect();
    Ok(RotationClass {
        matrix: to_rows(r),
        canonical_angles: angles,
        fixed_signs,
        order: matrix_order(r, tol.max(1e-12), max_order),
        blocks,
        canonical_basis: to_rows(&q),
    })
}

/// 2D rotation matrix.
pub fn rotation2(angle: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSampling {
    /// Radius profiles tried per orbit type (the balanced profile included).
    pub seeds_per_type: usize,
    /// Iteration cap for the density search.
    pub max_iter: usize,
    /// Initial number of reference points approximating an infinite closure.
    pub reference_points: usize,
    pub seed: u64,
    /// Tolerance for order detection.
    pub tol: f64,
    pub max_order: usize,
}

impl Default for OrbitSampling {
    fn default() -> Self {
        Self {
            seeds_per_type: 16,
            max_iter: 1_000_000,
            reference_points: 4096,
            seed: 7,
            tol: 1e-9,
            max_order: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitDensityResult {
    #[serde(rename = "N")]
    pub n: usize,
    pub eps: f64,
    pub r: f64,
    pub worst_orbit_seed: Vec<f64>,
    /// Covering radius after `N - 1` and after `N` iterates.
    pub certificate: (f64, f64),
}

/// A moving block with the radius an orbit carries in it.
#[derive(Debug, Clone, Copy)]
enum Part {
    Plane { angle: f64, rho: f64 },
    Flip { rho: f64 },
}

/// Euclidean distance between `R^a x` and `R^b x` for `d = a - b`.
fn orbit_distance(parts: &[Part], d: i64) -> f64 {
    let mut s = 0.0;
    for p in parts {
        match *p {
            Part::Plane { angle, rho } => {
                let h = 2.0 * rho * (0.5 * d as f64 * angle).sin();
                s += h * h;
            }
            Part::Flip { rho } => {
                if d.rem_euclid(2) == 1 {
                    s += 4.0 * rho * rho;
                }
            }
        }
    }
    s.sqrt()
}

/// Smallest `k >= 1` returning every part to its start, if `<= max_order`.
fn parts_order(parts: &[Part], tol: f64, max_order: usize) -> Option<usize> {
    (1..=max_order).find(|&k| {
        parts.iter().all(|p| match *p {
            Part::Plane { angle, .. } => {
                let x = (k as f64 * angle / TAU).fract();
                x.min(1.0 - x) * TAU <= tol * 10.0
            }
            Part::Flip { .. } => k % 2 == 0,
        })
    })
}

/// Covering radius of `{x, ..., R^{m-1} x}` in the closure, for each `m`,
/// stopping at the first `m` where it drops below `eps`.
fn density_count(
    parts: &[Part],
    eps: f64,
    sampling: &OrbitSampling,
) -> Result<(usize, f64, f64), RotationError> {
    if let Some(o) = parts_order(parts, sampling.tol, sampling.max_order) {
        return incremental_cover(parts, eps, o, o);
    }
    if let [Part::Plane { angle, rho }] = parts {
        return circle_cover(*angle, *rho, eps, sampling.max_iter);
    }
    let mut refs = sampling.reference_points.max(64);
    loop {
        let cap = refs.min(sampling.max_iter);
        match incremental_cover(parts, eps, refs, cap) {
            Ok((n, before, after)) if n * 8 <= refs => return Ok((n, before, after)),
            Ok(_) | Err(_) if refs < sampling.max_iter => refs *= 4,
            Ok((n, ..)) => {
                return Err(RotationError::SamplingBudgetExceeded {
                    cap: sampling.max_iter,
                    lower_bound: n,
                })
            }
            Err(e) => return Err(e),
        }
    }
}

/// Reference points are the first `refs` iterates; exact when `refs` is the order.
fn incremental_cover(
    parts: &[Part],
    eps: f64,
    refs: usize,
    cap: usize,
) -> Result<(usize, f64, f64), RotationError> {
    let table: Vec<f64> = (0..refs as i64).map(|d| orbit_distance(parts, d)).collect();
    let dist = |d: i64| -> f64 {
        let a = d.unsigned_abs() as usize;
        if a < refs {
            table[a]
        } else {
            orbit_distance(parts, d)
        }
    };
    let mut dmin = vec![f64::INFINITY; refs];
    let mut prev = f64::INFINITY;
    for m in 1..=cap {
        let i = (m - 1) as i64;
        let mut cov: f64 = 0.0;
        for (j, dj) in dmin.iter_mut().enumerate() {
            let d = dist(j as i64 - i);
            if d < *dj {
                *dj = d;
            }
            cov = cov.max(*dj);
        }
        if cov < eps {
            return Ok((m, prev, cov));
        }
        prev = cov;
    }
    Err(RotationError::SamplingBudgetExceeded {
        cap,
        lower_bound: cap + 1,
    })
}

/// Exact covering radius on a circle through the largest angular gap.
fn circle_cover(
    angle: f64,
    rho: f64,
    eps: f64,
    cap: usize,
) -> Result<(usize, f64, f64), RotationError> {
    let mut pts: BTreeSet<u64> = BTreeSet::new();
    let mut gaps: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut gap_of = std::collections::HashMap::new();
    let cover = |g: f64| 2.0 * rho * (g / 4.0).sin();
    // Angles are stored as fractions of a turn in fixed point.
    const SCALE: f64 = (1u64 << 52) as f64;
    let turn = angle / TAU;
    let mut prev = f64::INFINITY;
    for m in 1..=cap {
        let x = ((m - 1) as f64 * turn).rem_euclid(1.0);
        let key = ((x * SCALE) as u64).min((1u64 << 52) - 1);
        if pts.is_empty() {
            pts.insert(key);
            let full = 1u64 << 52;
            gaps.insert((full, key));
            gap_of.insert(key, full);
        } else if pts.insert(key) {
            let full = 1u64 << 52;
            let pred = pts
                .range(..key)
                .next_back()
                .copied()
                .unwrap_or_else(|| *pts.iter().next_back().unwrap());
            let succ = pts
                .range(key + 1..)
                .next()
                .copied()
                .unwrap_or_else(|| *pts.iter().next().unwrap());
            let old = gap_of[&pred];
            gaps.remove(&(old, pred));
            let g1 = (key + full - pred) % full;
            let g2 = (succ + full - key) % full;
            gaps.insert((g1, pred));
            gap_of.insert(pred, g1);
            gaps.insert((g2, key));
            gap_of.insert(key, g2);
        }
        let g = gaps.iter().next_back().unwrap().0 as f64 / SCALE * TAU;
        let cov = cover(g);
        if cov < eps {
            return Ok((m, prev, cov));
        }
        prev = cov;
    }
    Err(RotationError::SamplingBudgetExceeded {
        cap,
        lower_bound: cap + 1,
    })
}

fn moving_parts(class: &RotationClass) -> Vec<Part> {
    class
        .blocks
        .iter()
        .filter_map(|b| match *b {
            Block::Plane { angle, .. } => Some(Part::Plane { angle, rho: 0.0 }),
            Block::Line { sign: -1, .. } => Some(Part::Flip { rho: 0.0 }),
            _ => None,
        })
        .collect()
}

fn with_radii(parts: &[Part], rho: &[f64]) -> Vec<Part> {
    parts
        .iter()
        .zip(rho)
        .filter(|(_, &r)| r > 0.0)
        .map(|(p, &r)| match *p {
            Part::Plane { angle, .. } => Part::Plane { angle, rho: r },
            Part::Flip { .. } => Part::Flip { rho: r },
        })
        .collect()
}

/// `N(R, eps, r)`: the maximum over orbit types of the least number of
/// iterates that is `eps`-dense in the orbit closure.
pub fn orbit_density_n(
    r: &DMatrix<f64>,
    eps: f64,
    radius: f64,
    sampling: &OrbitSampling,
) -> Result<OrbitDensityResult, RotationError> {
    if !(eps > 0.0) || !(radius >= 0.0) {
        return Err(RotationError::InvalidArgument(
            "need eps > 0 and r >= 0".into(),
        ));
    }
    let n = r.nrows();
    if radius == 0.0 {
        return Ok(OrbitDensityResult {
            n: 1,
            eps,
            r: radius,
            worst_orbit_seed: vec![0.0; n],
            certificate: (0.0, 0.0),
        });
    }
    let class = classify_rotation(r, sampling.tol, sampling.max_order)?;
    let parts = moving_parts(&class);
    let movers: Vec<&Block> = class
        .blocks
        .iter()
        .filter(|b| !matches!(b, Block::Line { sign: 1, .. }))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut best = OrbitDensityResult {
        n: 1,
        eps,
        r: radius,
        worst_orbit_seed: vec![0.0; n],
        certificate: (0.0, 0.0),
    };
    let k = parts.len();
    for mask in 1u32..(1u32 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        for s in 0..sampling.seeds_per_type.max(1) {
            let mut w = vec![0.0; k];
            if s == 0 {
                for &i in &support {
                    w[i] = 1.0;
                }
            } else {
                for &i in &support {
                    w[i] = rng.random_range(0.05..1.0);
                }
            }
            let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rho: Vec<f64> = w.iter().map(|x| radius * x / nw).collect();
            let (count, before, after) = density_count(&with_radii(&parts, &rho), eps, sampling)?;
            if count > best.n {
                best.n = count;
                best.certificate = (before, after);
                best.worst_orbit_seed = seed_point(&class, &movers, &rho, n);
            }
        }
    }
    Ok(best)
}

fn seed_point(class: &RotationClass, movers: &[&Block], rho: &[f64], n: usize) -> Vec<f64> {
    let mut canon = vec![0.0; n];
    for (b, &r) in movers.iter().zip(rho) {
        match **b {
            Block::Plane { cols, .. } => canon[cols.0] = r,
            Block::Line { col, .. } => canon[col] = r,
        }
    }
    let q = &class.canonical_basis;
    (0..n)
        .map(|i| (0..n).map(|j| q[i][j] * canon[j]).sum())
        .collect()
}

/// Isometries whose powers are compared with the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Isometry {
    Orthogonal { matrix: Vec<Vec<f64>> },
    TorusTranslation { shift: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub indices: Vec<i64>,
    /// Largest difference of consecutive hits; `None` with fewer than two hits.
    pub max_gap: Option<i64>,
}

/// Exact `sup_{|x| <= 1} |phi^k x - x|` for orthogonal maps (the operator
/// norm of `R^k - I`) and the translation length on the flat torus.
pub struct PowerDistance {
    angles: Vec<f64>,
    has_flip: bool,
    shift: Option<Vec<f64>>,
}

impl PowerDistance {
    pub fn new(phi: &Isometry) -> Result<Self, RotationError> {
        match phi {
            Isometry::Orthogonal { matrix } => {
                let n = matrix.len();
                let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                let c = classify_rotation(&m, 1e-9, 1)?;
                Ok(Self {
                    angles: c.canonical_angles,
                    has_flip: c.fixed_signs.contains(&-1),
                    shift: None,
                })
            }
            Isometry::TorusTranslation { shift } => Ok(Self {
                angles: vec![],
                has_flip: false,
                shift: Some(shift.clone()),
            }),
        }
    }

    pub fn at(&self, k: i64) -> f64 {
        if let Some(shift) = &self.shift {
            return shift
                .iter()
                .map(|s| {
                    let x = (k as f64 * s).rem_euclid(1.0);
                    let c = if x > 0.5 { x - 1.0 } else { x };
                    c * c
                })
                .sum::<f64>()
                .sqrt();
        }
        let mut d: f64 = if self.has_flip && k.rem_euclid(2) == 1 {
            2.0
        } else {
            0.0
        };
        for a in &self.angles {
            d = d.max(2.0 * (0.5 * k as f64 * a).sin().abs());
        }
        d
    }
}

pub fn admissibility_set(
    phi: &Isometry,
    eps: f64,
    k_range: (i64, i64),
) -> Result<AdmissibilityReport, RotationError> {
    let pd = PowerDistance::new(phi)?;
    let indices: Vec<i64> = (k_range.0..=k_range.1)
        .filter(|&k| pd.at(k) < eps)
        .collect();
    let max_gap = indices.windows(2).map(|w| w[1] - w[0]).max();
    Ok(AdmissibilityReport { indices, max_gap })
}

/// `sup` of `|R^k x - x|` over a Fibonacci-type point set on the unit
/// sphere; a sampled stand-in for the operator norm.
pub fn pointset_distance_to_identity(r: &DMatrix<f64>, k: u64, points: usize) -> f64 {
    let n = r.nrows();
    let rk = crate::linalg::mat_pow(r, k) - DMatrix::identity(n, n);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut best: f64 = 0.0;
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    for i in 0..points {
        let x: Vec<f64> = if n == 2 {
            let t = TAU * (i as f64 * golden).fract();
            vec![t.cos(), t.sin()]
        } else if n == 3 {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / points as f64;
            let t = TAU * (i as f64 * golden).fract();
            let s = (1.0 - z * z).sqrt();
            vec![s * t.cos(), s * t.sin(), z]
        } else {
            let v: Vec<f64> = (0..n)
                .map(|_| rng.sample(rand_distr::StandardNormal))
                .collect();
            let nv = crate::linalg::norm(&v);
            v.iter().map(|c| c / nv).collect()
        };
        let y = crate::linalg::mat_vec(&rk, &x);
        best = best.max(crate::linalg::norm(&y));
    }
    best
}

/// Haar-distributed orthogonal matrix from the QR factorisation of a
/// Gaussian matrix with the sign convention `diag(R) > 0`.
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

pub fn golden_angle() -> f64 {
    PI * (5f64.sqrt() - 1.0)
}
