//! Verifiers with explicit eigendata: Dirichlet modes of boxes, the
//! equatorial hemisphere modes, mapping-torus spectra over intervals and
//! discs, and discrete observability constants on interval and rectangle
//! grids.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::Composite;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("quadrature did not settle within {panels} panels")]
    QuadratureBudget { panels: usize },
    #[error("unsupported cross-section: {0}")]
    UnsupportedCrossSection(String),
    #[error("singular grid: {0}")]
    SingularGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

// ---------------------------------------------------------------- boxes

/// Dirichlet eigenmode `prod sqrt(2/a_j) sin(m_j pi x_j / a_j)` of the box
/// `prod [0, a_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxMode {
    pub dims: Vec<f64>,
    pub indices: Vec<u32>,
    pub eigenvalue: f64,
}

impl BoxMode {
    pub fn new(dims: &[f64], indices: &[u32]) -> Result<Self, SpectralError> {
        if dims.len() < 2 || dims.len() != indices.len() {
            return Err(SpectralError::InvalidArgument(
                "need matching dims and indices, n >= 2".into(),
            ));
        }
        if dims.iter().any(|a| !(*a > 0.0)) || indices.contains(&0) {
            return Err(SpectralError::InvalidArgument(
                "side lengths and indices must be positive".into(),
            ));
        }
        let eigenvalue = dims
            .iter()
            .zip(indices)
            .map(|(a, m)| (*m as f64 * PI / a).powi(2))
            .sum();
        Ok(Self {
            dims: dims.to_vec(),
            indices: indices.to_vec(),
            eigenvalue,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.dims
            .iter()
            .zip(&self.indices)
            .zip(x)
            .map(|((a, m), xi)| (2.0 / a).sqrt() * (*m as f64 * PI * xi / a).sin())
            .product()
    }

    /// Squared L2 norm by a tensor Gauss rule; one up to rounding.
    pub fn norm_sq(&self) -> f64 {
        self.dims
            .iter()
            .zip(&self.indices)
            .map(|(a, m)| {
                let rule = Composite::new(12, 2 * *m as usize + 2);
                rule.integrate(0.0, *a, |x| {
                    (2.0 / a) * (*m as f64 * PI * x / a).sin().powi(2)
                })
            })
            .product()
    }

    /// Density of `|u|^2` in the distance `d` to the nearer wall of axis
    /// `j`, folded over both walls.
    fn g(&self, j: usize, d: f64) -> f64 {
        let a = self.dims[j];
        2.0 * (2.0 / a) * (self.indices[j] as f64 * PI * d / a).sin().powi(2)
    }

    /// Mass of `|u|^2` on the slab where the wall distance of axis `j` is
    /// below `r`.
    fn big_g(&self, j: usize, r: f64) -> f64 {
        let a = self.dims[j];
        let r = r.clamp(0.0, a / 2.0);
        let k = self.indices[j] as f64 * PI / a;
        ((2.0 / a) * (r - (2.0 * k * r).sin() / (2.0 * k))).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxMass {
    /// Gauss-Legendre value conditioned on the nearest wall pair.
    pub mass: f64,
    /// Midpoint Riemann value conditioned on the last axis.
    pub riemann: f64,
}

fn check_box_eps(mode: &BoxMode, eps: f64) -> Result<(), SpectralError> {
    let inradius = mode.dims.iter().fold(f64::INFINITY, |m, a| m.min(a / 2.0));
    if !(eps > 0.0 && eps < inradius) {
        return Err(SpectralError::InvalidArgument(format!(
            "eps must lie in (0, {inradius})"
        )));
    }
    Ok(())
}

// The neighbourhood of the codimension-two skeleton is where the two
// smallest wall distances satisfy d1^2 + d2^2 < eps^2. Conditioning on the
// axis with the smallest distance leaves a one-dimensional integral.
fn mass_gauss_panels(mode: &BoxMode, eps: f64, rule: &Composite) -> f64 {
    let n = mode.dims.len();
    let top = eps / 2f64.sqrt();
    (0..n)
        .map(|i| {
            rule.integrate(0.0, top, |t| {
                let r = (eps * eps - t * t).sqrt();
                let (mut p_t, mut p_r) = (1.0, 1.0);
                for k in (0..n).filter(|&k| k != i) {
                    p_t *= 1.0 - mode.big_g(k, t);
                    p_r *= 1.0 - mode.big_g(k, r);
                }
                mode.g(i, t) * (p_t - p_r)
            })
        })
        .sum()
}

/// Mass of `|u|^2` in the `eps`-neighbourhood of the codimension-two
/// skeleton, by adaptive composite Gauss-Legendre.
pub fn box_mode_mass_gauss(dims: &[f64], indices: &[u32], eps: f64) -> Result<f64, SpectralError> {
    let mode = BoxMode::new(dims, indices)?;
    check_box_eps(&mode, eps)?;
    let mmax = *mode.indices.iter().max().expect("nonempty") as usize;
    let mut panels = 4 * (mmax + 2);
    let mut prev = mass_gauss_panels(&mode, eps, &Composite::new(10, panels));
    while panels <= 1 << 16 {
        panels *= 2;
        let next = mass_gauss_panels(&mode, eps, &Composite::new(10, panels));
        if (next - prev).abs() <= 1e-13 + 1e-11 * next.abs() {
            return Ok(next);
        }
        prev = next;
    }
    Err(SpectralError::QuadratureBudget { panels })
}

/// The same mass by a midpoint Riemann sum over all axes but the last,
/// whose contribution is integrated exactly. Supports `n <= 3`.
pub fn box_mode_mass_riemann(
    dims: &[f64],
    indices: &[u32],
    eps: f64,
    resolution: usize,
) -> Result<f64, SpectralError> {
    let mode = BoxMode::new(dims, indices)?;
    check_box_eps(&mode, eps)?;
    let n = mode.dims.len();
    if n > 3 {
        return Err(SpectralError::InvalidArgument(
            "Riemann cross-check supports n <= 3".into(),
        ));
    }
    let res = resolution.max(1);
    let last = n - 1;
    let weight = |s1: f64, s2: f64| -> f64 {
        if s1 * s1 + s2 * s2 < eps * eps {
            1.0
        } else if s1 < eps {
            mode.big_g(last, (eps * eps - s1 * s1).sqrt())
        } else {
            0.0
        }
    };
    let h0 = mode.dims[0] / 2.0 / res as f64;
    let total = if n == 2 {
        (0..res)
            .into_par_iter()
            .map(|i| {
                let d = (i as f64 + 0.5) * h0;
                mode.g(0, d) * weight(d, f64::INFINITY) * h0
            })
            .sum()
    } else {
        let h1 = mode.dims[1] / 2.0 / res as f64;
        (0..res)
            .into_par_iter()
            .map(|i| {
                let d0 = (i as f64 + 0.5) * h0;
                let g0 = mode.g(0, d0);
                let mut row = 0.0;
                for j in 0..res {
                    let d1 = (j as f64 + 0.5) * h1;
                    let (s1, s2) = if d0 < d1 { (d0, d1) } else { (d1, d0) };
                    row += mode.g(1, d1) * weight(s1, s2);
                }
                g0 * row * h0 * h1
            })
            .sum()
    };
    Ok(total)
}

/// Both quadratures; the Riemann sum uses a resolution fine enough for a
/// 1e-4 cross-check.
pub fn box_mode_mass(dims: &[f64], indices: &[u32], eps: f64) -> Result<BoxMass, SpectralError> {
    let mass = box_mode_mass_gauss(dims, indices, eps)?;
    let res = if dims.len() == 2 { 200_000 } else { 2_000 };
    let riemann = if dims.len() <= 3 {
        box_mode_mass_riemann(dims, indices, eps, res)?
    } else {
        f64::NAN
    };
    Ok(BoxMass { mass, riemann })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassInfimum {
    pub min: f64,
    pub argmin: Vec<u32>,
    pub modes: usize,
    /// Riemann value at the minimizing mode.
    pub riemann_at_argmin: f64,
}

/// Minimum of the skeleton mass over every index tuple with entries at
/// most `index_bound`.
pub fn box_mass_infimum(
    dims: &[f64],
    index_bound: u32,
    eps: f64,
) -> Result<MassInfimum, SpectralError> {
    if index_bound == 0 {
        return Err(SpectralError::InvalidArgument(
            "index bound must be at least 1".into(),
        ));
    }
    let n = dims.len();
    let count = (index_bound as usize).pow(n as u32);
    let tuple = |mut c: usize| -> Vec<u32> {
        (0..n)
            .map(|_| {
                let m = (c % index_bound as usize) as u32 + 1;
                c /= index_bound as usize;
                m
            })
            .collect()
    };
    let results: Vec<(f64, usize)> = (0..count)
        .into_par_iter()
        .map(|c| box_mode_mass_gauss(dims, &tuple(c), eps).map(|m| (m, c)))
        .collect::<Result<_, _>>()?;
    let (min, c) = results
        .into_iter()
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
    let argmin = tuple(c);
    let riemann_at_argmin = box_mode_mass(dims, &argmin, eps)?.riemann;
    Ok(MassInfimum {
        min,
        argmin,
        modes: count,
        riemann_at_argmin,
    })
}

// ----------------------------------------------------------- hemisphere

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HemisphereMass {
    pub l: u32,
    pub delta: f64,
    /// `c_l`, the constant giving unit norm on the upper hemisphere.
    pub c_l: f64,
    pub band_mass: f64,
    /// `c_l / l^{3/4}`.
    pub normalization_ratio: f64,
}

/// Mode `c_l e^{i(l-1)phi} sin^{l-1}(theta) cos(theta)` on the upper unit
/// hemisphere and its mass in the band `|theta - pi/2| < delta`.
pub fn hemisphere_mode_mass(l: u32, delta: f64) -> Result<HemisphereMass, SpectralError> {
    if l < 2 || !(delta > 0.0 && delta < FRAC_PI_2) {
        return Err(SpectralError::InvalidArgument(
            "need l >= 2 and 0 < delta < pi/2".into(),
        ));
    }
    let p = 2 * l as i32 - 1;
    let density = |th: f64| th.sin().powi(p) * th.cos().powi(2);
    let rule = Composite::new(20, 64);
    let total = rule.integrate(0.0, FRAC_PI_2, density);
    let band = rule.integrate(FRAC_PI_2 - delta, FRAC_PI_2, density);
    let c_l = 1.0 / (TAU * total).sqrt();
    Ok(HemisphereMass {
        l,
        delta,
        c_l,
        band_mass: band / total,
        normalization_ratio: c_l / (l as f64).powf(0.75),
    })
}

// ---------------------------------------------------------- torus spectra

/// Bessel function of the first kind for integer order, from the
/// periodic integral representation by the trapezoid rule.
pub fn bessel_j(m: i32, x: f64) -> f64 {
    let n = (2.0 * (x.abs() + m.unsigned_abs() as f64) + 64.0) as usize;
    let h = TAU / n as f64;
    let s: f64 = (0..n)
        .map(|i| {
            let t = -PI + i as f64 * h;
            (m as f64 * t - x * t.sin()).cos()
        })
        .sum();
    s / n as f64
}

/// Positive zeros of `J_m` not exceeding `limit`, by bracketing and
/// bisection.
pub fn bessel_zeros(m: u32, limit: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let step = 0.25;
    let mut a = if m == 0 { 0.0 } else { m as f64 };
    let mut fa = bessel_j(m as i32, a);
    while a <= limit {
        let b = a + step;
        let fb = bessel_j(m as i32, b);
        if fa == 0.0 && a > 0.0 {
            out.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if hi - lo <= 1e-15 * mid {
                    break;
                }
                let fm = bessel_j(m as i32, mid);
                if fm * flo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            let z = 0.5 * (lo + hi);
            if z <= limit {
                out.push(z);
            }
        }
        a = b;
        fa = fb;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TorusSection {
    /// `[0, length]` with Dirichlet ends, glued by the identity or the flip.
    Interval { length: f64, flip: bool },
    /// Disc of the given radius, glued by a rotation.
    Disc { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusEigen {
    /// Angular order for the disc, sine index for the interval.
    pub m: i32,
    /// Radial index (one for the interval).
    pub j: u32,
    pub k: i64,
    pub mu: f64,
    pub nu: f64,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingTorusSpectrum {
    pub cross_section: TorusSection,
    pub alpha: f64,
    pub length: f64,
    pub eigendata: Vec<TorusEigen>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisCheck {
    pub pairs: usize,
    pub max_orthogonality_defect: f64,
    pub max_norm_defect: f64,
}

/// Lowest `count` eigenvalues `mu + (nu + 2 k pi / L)^2` of the mapping
/// torus of the cross-section under the gluing map.
pub fn mapping_torus_spectrum(
    cross_section: TorusSection,
    alpha: f64,
    length: f64,
    count: usize,
) -> Result<MappingTorusSpectrum, SpectralError> {
    if !(length > 0.0) {
        return Err(SpectralError::InvalidArgument(
            "length must be positive".into(),
        ));
    }
    let freq = TAU / length;
    match cross_section {
        TorusSection::Interval { length: a, .. } if !(a > 0.0) => {
            return Err(SpectralError::UnsupportedCrossSection(
                "interval length must be positive".into(),
            ))
        }
        TorusSection::Interval { .. } if alpha != 0.0 => {
            return Err(SpectralError::UnsupportedCrossSection(
                "an interval is glued by the identity or the flip, not a rotation".into(),
            ))
        }
        TorusSection::Disc { radius } if !(radius > 0.0) => {
            return Err(SpectralError::UnsupportedCrossSection(
                "disc radius must be positive".into(),
            ))
        }
        _ => {}
    }
    let mut lambda = 16.0f64;
    loop {
        // Cross-section modes with mu <= lambda as (m, j, mu, nu).
        let mut cross: Vec<(i32, u32, f64, f64)> = Vec::new();
        match cross_section {
            TorusSection::Interval { length: a, flip } => {
                let mut m = 1;
                while (m as f64 * PI / a).powi(2) <= lambda {
                    let phase = if flip && m % 2 == 0 { PI } else { 0.0 };
                    cross.push((m, 1, (m as f64 * PI / a).powi(2), phase / length));
                    m += 1;
                }
            }
            TorusSection::Disc { radius } => {
                let zmax = lambda.sqrt() * radius;
                let mut m = 0u32;
                while (m as f64) < zmax {
                    let zeros = bessel_zeros(m, zmax);
                    if zeros.is_empty() {
                        break;
                    }
                    for (ji, z) in zeros.iter().enumerate() {
                        let mu = (z / radius).powi(2);
                        for sm in if m == 0 {
                            vec![0i32]
                        } else {
                            vec![m as i32, -(m as i32)]
                        } {
                            let nu = (sm as f64 * alpha).rem_euclid(TAU) / length;
                            cross.push((sm, ji as u32 + 1, mu, nu));
                        }
                    }
                    m += 1;
                }
            }
        }
        let mut data = Vec::new();
        for &(m, j, mu, nu) in &cross {
            let room = (lambda - mu).max(0.0).sqrt();
            let k_lo = ((-room - nu) / freq).ceil() as i64;
            let k_hi = ((room - nu) / freq).floor() as i64;
            for k in k_lo..=k_hi {
                let w = nu + k as f64 * freq;
                data.push(TorusEigen {
                    m,
                    j,
                    k,
                    mu,
                    nu,
                    eigenvalue: mu + w * w,
                });
            }
        }
        if data.len() >= count {
            data.sort_by(|a, b| {
                a.eigenvalue
                    .total_cmp(&b.eigenvalue)
                    .then(a.m.cmp(&b.m))
                    .then(a.j.cmp(&b.j))
                    .then(a.k.cmp(&b.k))
            });
            data.truncate(count);
            return Ok(MappingTorusSpectrum {
                cross_section,
                alpha,
                length,
                eigendata: data,
            });
        }
        lambda *= 2.0;
    }
}

impl MappingTorusSpectrum {
    /// Longitudinal frequencies `(nu + 2 k pi / L)^2` of the listed modes.
    pub fn longitudinal_frequencies(&self) -> Vec<f64> {
        self.eigendata
            .iter()
            .map(|e| (e.nu + TAU * e.k as f64 / self.length).powi(2))
            .collect()
    }

    /// Inner product of two listed eigenfunctions over `M x [0, L]` by
    /// quadrature.
    pub fn inner_product(&self, a: usize, b: usize) -> Complex64 {
        let (ea, eb) = (&self.eigendata[a], &self.eigendata[b]);
        let wa = ea.nu + TAU * ea.k as f64 / self.length;
        let wb = eb.nu + TAU * eb.k as f64 / self.length;
        let t_panels = 4 + ((wa - wb).abs() * self.length / TAU) as usize;
        let t_rule = Composite::new(16, t_panels);
        let along: Complex64 = t_rule
            .nodes(0.0, self.length)
            .into_iter()
            .map(|(t, w)| Complex64::from_polar(w, (wa - wb) * t))
            .sum();
        let across = match self.cross_section {
            TorusSection::Interval { length: a_len, .. } => {
                let rule = Composite::new(16, 4 + (ea.m.max(eb.m)) as usize);
                let f = |m: i32, x: f64| (2.0 / a_len).sqrt() * (m as f64 * PI * x / a_len).sin();
                Complex64::new(rule.integrate(0.0, a_len, |x| f(ea.m, x) * f(eb.m, x)), 0.0)
            }
            TorusSection::Disc { radius } => {
                let za = bessel_zeros(
                    ea.m.unsigned_abs(),
                    f64::INFINITY.min(radius * ea.mu.sqrt() + 1.0),
                );
                let zb = bessel_zeros(
                    eb.m.unsigned_abs(),
                    f64::INFINITY.min(radius * eb.mu.sqrt() + 1.0),
                );
                let (za, zb) = (za[ea.j as usize - 1], zb[eb.j as usize - 1]);
                let na = 1.0 / (PI.sqrt() * radius * bessel_j(ea.m.abs() + 1, za).abs());
                let nb = 1.0 / (PI.sqrt() * radius * bessel_j(eb.m.abs() + 1, zb).abs());
                let rule = Composite::new(16, 8 + (za.max(zb) / 2.0) as usize);
                let radial = rule.integrate(0.0, radius, |r| {
                    na * bessel_j(ea.m, za * r / radius) * nb * bessel_j(eb.m, zb * r / radius) * r
                });
                let nth = 64 + 4 * (ea.m.unsigned_abs() + eb.m.unsigned_abs()) as usize;
                let h = TAU / nth as f64;
                let angular: Complex64 = (0..nth)
                    .map(|i| Complex64::from_polar(h, (ea.m - eb.m) as f64 * i as f64 * h))
                    .sum();
                angular * radial
            }
        };
        across * along
    }

    /// Orthogonality on `pairs` random distinct pairs and `||e||^2 = L` on
    /// their members.
    pub fn verify_basis(&self, pairs: usize, seed: u64) -> BasisCheck {
        let n = self.eigendata.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut orth: f64 = 0.0;
        let mut normd: f64 = 0.0;
        if n < 2 {
            return BasisCheck {
                pairs: 0,
                max_orthogonality_defect: 0.0,
                max_norm_defect: 0.0,
            };
        }
        for _ in 0..pairs {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            orth = orth.max(self.inner_product(a, b).norm());
            for i in [a, b] {
                normd = normd.max((self.inner_product(i, i) - self.length).norm());
            }
        }
        BasisCheck {
            pairs,
            max_orthogonality_defect: orth,
            max_norm_defect: normd,
        }
    }
}

// -------------------------------------------------------- observability

/// Interior nodes of a uniform grid with Dirichlet boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    Interval {
        nodes: usize,
        length: f64,
    },
    Rectangle {
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
    },
}

impl Grid {
    pub fn node_count(&self) -> usize {
        match *self {
            Grid::Interval { nodes, .. } => nodes,
            Grid::Rectangle { nx, ny, .. } => nx * ny,
        }
    }

    /// Coordinates of node `i`; rectangle nodes run along x first.
    pub fn coords(&self, i: usize) -> Vec<f64> {
        match *self {
            Grid::Interval { nodes, length } => vec![(i + 1) as f64 * length / (nodes + 1) as f64],
            Grid::Rectangle { nx, ny, lx, ly } => vec![
                (i % nx + 1) as f64 * lx / (nx + 1) as f64,
                (i / nx + 1) as f64 * ly / (ny + 1) as f64,
            ],
        }
    }

    /// Nodes within `fraction` of each side length from the boundary.
    pub fn boundary_layer(&self, fraction: f64) -> Vec<bool> {
        let sides: Vec<f64> = match *self {
            Grid::Interval { length, .. } => vec![length],
            Grid::Rectangle { lx, ly, .. } => vec![lx, ly],
        };
        (0..self.node_count())
            .map(|i| {
                self.coords(i)
                    .iter()
                    .zip(&sides)
                    .any(|(x, l)| *x < fraction * l || *x > (1.0 - fraction) * l)
            })
            .collect()
    }

    /// Closed-form eigenvalues of the discrete Dirichlet Laplacian.
    pub fn laplacian_eigenvalues(&self) -> Vec<f64> {
        let axis = |n: usize, l: f64| -> Vec<f64> {
            let h = l / (n + 1) as f64;
            (1..=n)
                .map(|k| 4.0 / (h * h) * (k as f64 * PI * h / (2.0 * l)).sin().powi(2))
                .collect()
        };
        match *self {
            Grid::Interval { nodes, length } => axis(nodes, length),
            Grid::Rectangle { nx, ny, lx, ly } => {
                let (ex, ey) = (axis(nx, lx), axis(ny, ly));
                ex.iter()
                    .flat_map(|a| ey.iter().map(move |b| a + b))
                    .collect()
            }
        }
    }

    /// Dense discrete Laplacian, for small grids.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut a = DMatrix::zeros(n, n);
        match *self {
            Grid::Interval { nodes, length } => {
                let c = ((nodes + 1) as f64 / length).powi(2);
                for i in 0..nodes {
                    a[(i, i)] = 2.0 * c;
                    if i + 1 < nodes {
                        a[(i, i + 1)] = -c;
                        a[(i + 1, i)] = -c;
                    }
                }
            }
            Grid::Rectangle { nx, ny, lx, ly } => {
                let cx = ((nx + 1) as f64 / lx).powi(2);
                let cy = ((ny + 1) as f64 / ly).powi(2);
                for j in 0..ny {
                    for i in 0..nx {
                        let p = j * nx + i;
                        a[(p, p)] = 2.0 * cx + 2.0 * cy;
                        if i + 1 < nx {
                            a[(p, p + 1)] = -cx;
                            a[(p + 1, p)] = -cx;
                        }
                        if j + 1 < ny {
                            a[(p, p + nx)] = -cy;
                            a[(p + nx, p)] = -cy;
                        }
                    }
                }
            }
        }
        a
    }
}

fn neg_2x2(s: &Matrix2<f64>) -> usize {
    let det = s.determinant();
    if det < 0.0 {
        1
    } else if s[(0, 0)] + s[(1, 1)] < 0.0 {
        2
    } else {
        0
    }
}

// Number of eigenvalues of M_s = (A - s) A^{-1} (A - s) + P below mu. The
// block matrix [[-A, A - s], [A - s, P - mu]] has exactly N + that many
// negative eigenvalues; its inertia follows from a block LDL^T sweep over
// the grid lines.
fn count_below(grid: &Grid, omega: &[bool], s: f64, mu: f64) -> usize {
    let n = grid.node_count();
    let neg = match *grid {
        Grid::Interval { nodes, length } => {
            let c = ((nodes + 1) as f64 / length).powi(2);
            let e = Matrix2::new(c, -c, -c, 0.0);
            let mut neg = 0;
            let mut prev: Option<Matrix2<f64>> = None;
            for &obs in omega.iter().take(nodes) {
                let p = if obs { 1.0 } else { 0.0 };
                let mut d = Matrix2::new(-2.0 * c, 2.0 * c - s, 2.0 * c - s, p - mu);
                if let Some(sp) = prev {
                    let inv = sp.try_inverse().unwrap_or_else(|| {
                        let mut q = sp;
                        q[(1, 1)] -= 1e-300_f64.max(1e-14 * sp.abs().max());
                        q.try_inverse().expect("perturbed pivot is invertible")
                    });
                    d -= e.transpose() * inv * e;
                }
                neg += neg_2x2(&d);
                prev = Some(d);
            }
            neg
        }
        Grid::Rectangle { nx, ny, lx, ly } => {
            let cx = ((nx + 1) as f64 / lx).powi(2);
            let cy = ((ny + 1) as f64 / ly).powi(2);
            let b = 2 * nx;
            let mut e = DMatrix::zeros(b, b);
            for i in 0..nx {
                e[(i, i)] = cy;
                e[(i, nx + i)] = -cy;
                e[(nx + i, i)] = -cy;
            }
            let mut neg = 0;
            let mut prev: Option<DMatrix<f64>> = None;
            for j in 0..ny {
                let mut d = DMatrix::zeros(b, b);
                for i in 0..nx {
                    let diag = 2.0 * cx + 2.0 * cy;
                    d[(i, i)] = -diag;
                    d[(i, nx + i)] = diag - s;
                    d[(nx + i, i)] = diag - s;
                    d[(nx + i, nx + i)] = if omega[j * nx + i] { 1.0 } else { 0.0 } - mu;
                    if i + 1 < nx {
                        d[(i, i + 1)] = cx;
                        d[(i + 1, i)] = cx;
                        d[(i, nx + i + 1)] = -cx;
                        d[(nx + i + 1, i)] = -cx;
                        d[(i + 1, nx + i)] = -cx;
                        d[(nx + i, i + 1)] = -cx;
                    }
                }
                if let Some(sp) = prev.take() {
                    let inv = sp.clone().try_inverse().unwrap_or_else(|| {
                        let mut q = sp.clone();
                        let bump = 1e-14 * sp.amax();
                        for k in 0..b {
                            q[(k, k)] -= bump;
                        }
                        q.try_inverse().expect("perturbed block is invertible")
                    });
                    d -= e.transpose() * inv * &e;
                    d = (&d + d.transpose()) * 0.5;
                }
                neg += d
                    .symmetric_eigenvalues()
                    .iter()
                    .filter(|v| **v < 0.0)
                    .count();
                prev = Some(d);
            }
            neg
        }
    };
    neg.saturating_sub(n)
}

/// `C(s) = lambda_min(Q_s)^{-1/2}` for
/// `Q_s(v) = |A^{-1/2}(A - s)v|^2 + |v on omega|^2`.
pub fn observability_constant(grid: &Grid, omega: &[bool], s: f64) -> Result<f64, SpectralError> {
    let n = grid.node_count();
    if n == 0 {
        return Err(SpectralError::SingularGrid(
            "grid has no interior nodes".into(),
        ));
    }
    if omega.len() != n {
        return Err(SpectralError::SingularGrid(format!(
            "mask has {} entries for {n} nodes",
            omega.len()
        )));
    }
    if !s.is_finite() {
        return Err(SpectralError::InvalidArgument("s must be finite".into()));
    }
    // Each eigenvector of A gives Q <= (lambda - s)^2 / lambda + 1.
    let mut hi = grid
        .laplacian_eigenvalues()
        .into_iter()
        .map(|l| (l - s).powi(2) / l + 1.0)
        .fold(f64::INFINITY, f64::min);
    while count_below(grid, omega, s, hi) == 0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    if count_below(grid, omega, s, lo) > 0 {
        return Err(SpectralError::SingularGrid(
            "quadratic form is not positive".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-13 * hi {
            break;
        }
        if count_below(grid, omega, s, mid) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lmin = 0.5 * (lo + hi);
    if !(lmin > 0.0) {
        return Err(SpectralError::SingularGrid(
            "quadratic form is degenerate".into(),
        ));
    }
    Ok(lmin.powf(-0.5))
}

/// Bound for negative shifts: `|A^{-1/2}(A - s)v| >= 2 sqrt(|s|) |v|`.
pub fn negative_shift_bound(s: f64) -> f64 {
    assert!(s < 0.0, "defined for negative shifts");
    0.5 / (-s).sqrt()
}

/// `count` shifts from `lo` to `hi`, geometrically spaced in `s - lo + 1`.
pub fn shifted_log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo; count];
    }
    let span = hi - lo + 1.0;
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo - 1.0 + span.powf(i as f64 / (count - 1) as f64)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityProbe {
    pub domain: Grid,
    pub omega: Vec<usize>,
    pub s_values: Vec<f64>,
    pub constants: Vec<f64>,
    pub sup_constant: f64,
}

pub fn observability_sweep(
    grid: &Grid,
    omega: &[bool],
    s_values: &[f64],
) -> Result<ObservabilityProbe, SpectralError> {
    let constants: Vec<f64> = s_values
        .par_iter()
        .map(|&s| observability_constant(grid, omega, s))
        .collect::<Result<_, _>>()?;
    Ok(ObservabilityProbe {
        domain: *grid,
        omega: omega
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| i)
            .collect(),
        s_values: s_values.to_vec(),
        sup_constant: constants.iter().copied().fold(0.0, f64::max),
        constants,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductObservability {
    pub constant: f64,
    pub worst_mode: usize,
    pub per_mode: Vec<f64>,
}

/// Fourier reduction over the cross modes: the largest constant among the
/// shifted problems `s - lambda_k`.
pub fn product_observability(
    grid: &Grid,
    omega: &[bool],
    cross_modes: &[f64],
    s: f64,
) -> Result<ProductObservability, SpectralError> {
    if cross_modes.is_empty() {
        return Err(SpectralError::InvalidArgument("no cross modes".into()));
    }
    let per_mode: Vec<f64> = cross_modes
        .par_iter()
        .map(|&l| observability_constant(grid, omega, s - l))
        .collect::<Result<_, _>>()?;
    let (worst_mode, constant) = per_mode
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    Ok(ProductObservability {
        constant,
        worst_mode,
        per_mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_normalized() {
        let m = BoxMode::new(&[1.0, 2.0, 0.5], &[3, 1, 4]).unwrap();
        assert!((m.norm_sq() - 1.0).abs() < 1e-12);
        assert!((m.eigenvalue - (9.0 * PI * PI + PI * PI / 4.0 + 64.0 * PI * PI)).abs() < 1e-9);
    }

    #[test]
    fn square_corner_mass_polar_oracle() {
        // Four quarter discs; polar coordinates about one corner.
        let eps = 0.5;
        let rule = Composite::new(20, 16);
        let quarter = rule.integrate(0.0, eps, |r| {
            rule.integrate(0.0, FRAC_PI_2, |th| {
                let (x, y) = (r * th.cos(), r * th.sin());
                (2.0 / PI).powi(2) * x.sin().powi(2) * y.sin().powi(2) * r
            })
        });
        let m = box_mode_mass(&[PI, PI], &[1, 1], eps).unwrap();
        assert!(
            (m.mass - 4.0 * quarter).abs() < 1e-12,
            "{} {}",
            m.mass,
            4.0 * quarter
        );
        assert!((m.mass - m.riemann).abs() < 1e-4);
    }

    #[test]
    fn cube_mass_two_resolutions() {
        let g = box_mode_mass_gauss(&[PI; 3], &[1, 1, 1], 0.5).unwrap();
        let r1 = box_mode_mass_riemann(&[PI; 3], &[1, 1, 1], 0.5, 400).unwrap();
        let r2 = box_mode_mass_riemann(&[PI; 3], &[1, 1, 1], 0.5, 800).unwrap();
        assert!(g > 0.0);
        assert!((r2 - g).abs() <= (r1 - g).abs() + 1e-9 && (r2 - g).abs() < 1e-4);
    }

    #[test]
    fn diagonal_modes_equidistribute() {
        let eps = 0.5;
        let limit = eps * eps / PI;
        let errs: Vec<f64> = [10, 20, 40]
            .iter()
            .map(|&m| (box_mode_mass_gauss(&[PI, PI], &[m, m], eps).unwrap() - limit).abs())
            .collect();
        // The oscillatory corrections decay without a sign; every value sits
        // within two percent of the equidistributed limit.
        assert!(errs.iter().all(|e| *e < 0.02 * limit), "{errs:?}");
    }

    #[test]
    fn infimum_singleton_and_exhaustion() {
        let one = box_mass_infimum(&[PI, PI], 1, 0.5).unwrap();
        assert_eq!(one.argmin, vec![1, 1]);
        assert_eq!(
            one.min,
            box_mode_mass_gauss(&[PI, PI], &[1, 1], 0.5).unwrap()
        );
        // Near the inradius the corner discs cover pi/4 of the square; the
        // lowest mode keeps its peak outside them.
        let big = box_mass_infimum(&[1.0, 1.0], 3, 0.4999).unwrap();
        assert_eq!(big.argmin, vec![1, 1]);
        assert!(big.min > 0.4 && big.min < PI / 4.0);
    }

    #[test]
    fn hemisphere_band() {
        let whole = hemisphere_mode_mass(2, FRAC_PI_2 - 1e-6).unwrap();
        assert!((whole.band_mass - 1.0).abs() < 1e-9);
        let b: Vec<f64> = [10, 20, 50, 100]
            .iter()
            .map(|&l| hemisphere_mode_mass(l, 0.2).unwrap().band_mass)
            .collect();
        assert!(b.windows(2).all(|w| w[1] >= w[0]));
        let c2 = hemisphere_mode_mass(2, 0.3).unwrap().c_l;
        assert!((c2 - (15.0 / (4.0 * PI)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bessel_zero_values() {
        let z = bessel_zeros(0, 10.0);
        assert!((z[0] - 2.404_825_557_695_773).abs() < 1e-12);
        assert!((z[1] - 5.520_078_110_286_311).abs() < 1e-12);
        let z1 = bessel_zeros(1, 5.0);
        assert!((z1[0] - 3.831_705_970_207_512).abs() < 1e-12);
        assert!((bessel_j(2, 1.0) - 0.114_903_484_931_900_5).abs() < 1e-15);
    }

    #[test]
    fn interval_torus_is_product() {
        let s = mapping_torus_spectrum(
            TorusSection::Interval {
                length: PI,
                flip: false,
            },
            0.0,
            1.0,
            60,
        )
        .unwrap();
        let mut oracle: Vec<f64> = (1..40)
            .flat_map(|m| (-10i64..=10).map(move |k| (m * m) as f64 + (TAU * k as f64).powi(2)))
            .collect();
        oracle.sort_by(f64::total_cmp);
        for (e, o) in s.eigendata.iter().zip(&oracle) {
            assert!((e.eigenvalue - o).abs() < 1e-9);
        }
        let c = s.verify_basis(10, 1);
        assert!(c.max_orthogonality_defect < 1e-9 && c.max_norm_defect < 1e-9);
    }

    #[test]
    fn flip_shifts_even_modes() {
        let s = mapping_torus_spectrum(
            TorusSection::Interval {
                length: PI,
                flip: true,
            },
            0.0,
            1.0,
            5,
        )
        .unwrap();
        assert!((s.eigendata[0].eigenvalue - 1.0).abs() < 1e-12);
        assert!(s
            .eigendata
            .iter()
            .any(|e| (e.eigenvalue - (4.0 + PI * PI)).abs() < 1e-9));
        assert!(mapping_torus_spectrum(
            TorusSection::Interval {
                length: 1.0,
                flip: false
            },
            0.3,
            1.0,
            5
        )
        .is_err());
    }

    #[test]
    fn golden_disc_basis() {
        let golden = PI * (3.0 - 5f64.sqrt());
        let s =
            mapping_torus_spectrum(TorusSection::Disc { radius: 1.0 }, golden, 1.0, 40).unwrap();
        let c = s.verify_basis(20, 7);
        assert!(
            c.max_orthogonality_defect < 1e-6 && c.max_norm_defect < 1e-6,
            "{c:?}"
        );
    }

    fn dense_constant(grid: &Grid, omega: &[bool], s: f64) -> f64 {
        let a = grid.laplacian();
        let n = a.nrows();
        let eig = a.clone().symmetric_eigen();
        let inv_sqrt = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(-0.5)))
            * eig.eigenvectors.transpose();
        let b = &inv_sqrt * (a - DMatrix::identity(n, n) * s);
        let mut q = b.transpose() * b;
        for i in 0..n {
            if omega[i] {
                q[(i, i)] += 1.0;
            }
        }
        q.symmetric_eigenvalues().min().powf(-0.5)
    }

    #[test]
    fn sturm_count_matches_dense_interval() {
        let g = Grid::Interval {
            nodes: 40,
            length: 1.0,
        };
        let om = g.boundary_layer(0.1);
        for s in [-3.0, 0.0, PI * PI, 50.0, 400.0, 2000.0] {
            let c = observability_constant(&g, &om, s).unwrap();
            let d = dense_constant(&g, &om, s);
            assert!((c - d).abs() < 1e-8 * d, "s={s} {c} {d}");
        }
    }

    #[test]
    fn sturm_count_matches_dense_rectangle() {
        let g = Grid::Rectangle {
            nx: 7,
            ny: 6,
            lx: 1.0,
            ly: 1.3,
        };
        let om = g.boundary_layer(0.2);
        for s in [-1.0, 20.0, 90.0] {
            let c = observability_constant(&g, &om, s).unwrap();
            let d = dense_constant(&g, &om, s);
            assert!((c - d).abs() < 1e-8 * d, "s={s} {c} {d}");
        }
    }

    #[test]
    fn negative_shifts_bounded() {
        let g = Grid::Interval {
            nodes: 500,
            length: 1.0,
        };
        let om = g.boundary_layer(0.1);
        for s in [-1.0, -4.0, -100.0] {
            let c = observability_constant(&g, &om, s).unwrap();
            assert!(c <= negative_shift_bound(s).min(1.0) + 1e-9);
        }
        let p = product_observability(&g, &om, &[0.0], 7.5).unwrap();
        assert_eq!(
            p.constant.to_bits(),
            observability_constant(&g, &om, 7.5).unwrap().to_bits()
        );
    }
}
