//! Almost periodic signals: epsilon-almost periods, Bohr mean coefficients
//! and the Parseval identity, all on truncated windows.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ConvexPolytope;
use crate::tubes::{tube_orbit_segments, OrbitSegment, PeriodicTube, TubeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApError {
    #[error("Bohr means do not settle: successive differences {differences:?}")]
    NonConvergent { differences: Vec<f64> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Tube(#[from] TubeError),
}

/// One exponential `coeff e^{i freq t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub freq: f64,
    pub coeff: Vec<Complex64>,
}

type Eval = Arc<dyn Fn(f64) -> Vec<Complex64> + Send + Sync>;

/// A vector-valued function of time with its numerical window.
#[derive(Clone)]
pub struct APSignal {
    eval: Eval,
    pub dim: usize,
    pub known_spectrum: Option<Vec<Term>>,
    pub sample_step: f64,
    pub window: (f64, f64),
}

impl std::fmt::Debug for APSignal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("APSignal")
            .field("dim", &self.dim)
            .field("known_spectrum", &self.known_spectrum)
            .field("sample_step", &self.sample_step)
            .field("window", &self.window)
            .finish()
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn diff_norm(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

impl APSignal {
    pub fn from_fn(
        dim: usize,
        f: impl Fn(f64) -> Vec<Complex64> + Send + Sync + 'static,
        sample_step: f64,
        window: (f64, f64),
    ) -> Self {
        Self {
            eval: Arc::new(f),
            dim,
            known_spectrum: None,
            sample_step,
            window,
        }
    }

    /// Scalar real signal.
    pub fn real(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sample_step: f64,
        window: (f64, f64),
    ) -> Self {
        Self::from_fn(
            1,
            move |t| vec![Complex64::new(f(t), 0.0)],
            sample_step,
            window,
        )
    }

    /// Finite exponential sum; the step resolves the fastest term a hundred
    /// times per period.
    pub fn trig_polynomial(terms: Vec<Term>, window: (f64, f64)) -> Self {
        let dim = terms.first().map_or(1, |t| t.coeff.len());
        let fmax = terms.iter().map(|t| t.freq.abs()).fold(0.0, f64::max);
        let step = if fmax > 0.0 { 1e-2 * TAU / fmax } else { 1e-2 };
        let spectrum = terms.clone();
        let mut s = Self::from_fn(
            dim,
            move |t| {
                let mut v = vec![Complex64::new(0.0, 0.0); dim];
                for term in &terms {
                    let e = Complex64::from_polar(1.0, term.freq * t);
                    for (vk, ck) in v.iter_mut().zip(&term.coeff) {
                        *vk += ck * e;
                    }
                }
                v
            },
            step,
            window,
        );
        s.known_spectrum = Some(spectrum);
        s
    }

    pub fn eval(&self, t: f64) -> Vec<Complex64> {
        (self.eval)(t)
    }

    /// Samples at `t0 + i h`.
    pub fn samples(&self, t0: f64, h: f64, count: usize) -> Vec<Vec<Complex64>> {
        (0..count)
            .into_par_iter()
            .map(|i| self.eval(t0 + i as f64 * h))
            .collect()
    }

    /// Largest jump between neighbouring samples of the window; a discrete
    /// modulus of continuity.
    pub fn max_step_jump(&self) -> f64 {
        let n = ((self.window.1 - self.window.0) / self.sample_step).ceil() as usize + 1;
        let s = self.samples(self.window.0, self.sample_step, n);
        s.windows(2)
            .map(|w| diff_norm(&w[0], &w[1]))
            .fold(0.0, f64::max)
    }

    /// Largest deviation of the known exponential sum from the signal on
    /// the sample grid.
    pub fn spectrum_defect(&self) -> Option<f64> {
        let terms = self.known_spectrum.as_ref()?;
        let n = ((self.window.1 - self.window.0) / self.sample_step).ceil() as usize + 1;
        let worst = (0..n)
            .into_par_iter()
            .map(|i| {
                let t = self.window.0 + i as f64 * self.sample_step;
                let mut v = vec![Complex64::new(0.0, 0.0); self.dim];
                for term in terms {
                    let e = Complex64::from_polar(1.0, term.freq * t);
                    for (vk, ck) in v.iter_mut().zip(&term.coeff) {
                        *vk += ck * e;
                    }
                }
                diff_norm(&v, &self.eval(t))
            })
            .reduce(|| 0.0, f64::max);
        Some(worst)
    }

    fn with_window(&self, window: (f64, f64)) -> Self {
        let mut s = self.clone();
        s.window = window;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostPeriod {
    pub tau: f64,
    /// Sup of `|f(t + tau) - f(t)|` over the window grid.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostPeriodReport {
    pub eps: f64,
    pub periods: Vec<AlmostPeriod>,
    /// Largest gap between consecutive almost periods (infinite with fewer
    /// than two).
    pub inclusion_length: f64,
    /// The same quantity on a window of twice the length.
    pub inclusion_length_doubled_window: f64,
}

fn deviation_at(f: &APSignal, tau: f64, base: &[Vec<Complex64>]) -> f64 {
    let (w0, h) = (f.window.0, f.sample_step);
    base.iter()
        .enumerate()
        .map(|(i, v)| diff_norm(&f.eval(w0 + i as f64 * h + tau), v))
        .fold(0.0, f64::max)
}

fn scan(f: &APSignal, eps: f64, tau_range: (f64, f64)) -> Vec<AlmostPeriod> {
    let h = f.sample_step;
    let nw = ((f.window.1 - f.window.0) / h).ceil() as usize + 1;
    let k0 = (tau_range.0 / h).floor() as i64;
    let k1 = (tau_range.1 / h).ceil() as i64;
    let shift0 = k0.min(0);
    let total = nw as i64 + k1 - shift0;
    let s = f.samples(f.window.0 + shift0 as f64 * h, h, total.max(0) as usize);
    let base = &s[(-shift0) as usize..(-shift0) as usize + nw];
    // Grid deviation for every grid shift.
    let dev: Vec<f64> = (k0..=k1)
        .into_par_iter()
        .map(|k| {
            let off = (k - shift0) as usize;
            (0..nw)
                .map(|i| diff_norm(&s[off + i], &base[i]))
                .fold(0.0, f64::max)
        })
        .collect();
    // Local minima are refined off the grid.
    let lip = f.max_step_jump() / h;
    let cands: Vec<usize> = (0..dev.len())
        .filter(|&i| {
            let l = if i == 0 { f64::INFINITY } else { dev[i - 1] };
            let r = dev.get(i + 1).copied().unwrap_or(f64::INFINITY);
            dev[i] <= l && dev[i] <= r && dev[i] <= eps + lip * h
        })
        .collect();
    let base_vec: Vec<Vec<Complex64>> = base.to_vec();
    let mut out: Vec<AlmostPeriod> = cands
        .into_par_iter()
        .filter_map(|i| {
            let center = (k0 + i as i64) as f64 * h;
            let (mut a, mut b) = ((center - h).max(tau_range.0), (center + h).min(tau_range.1));
            let g = (5f64.sqrt() - 1.0) / 2.0;
            let mut x1 = b - g * (b - a);
            let mut x2 = a + g * (b - a);
            let mut f1 = deviation_at(f, x1, &base_vec);
            let mut f2 = deviation_at(f, x2, &base_vec);
            for _ in 0..40 {
                if f1 < f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - g * (b - a);
                    f1 = deviation_at(f, x1, &base_vec);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + g * (b - a);
                    f2 = deviation_at(f, x2, &base_vec);
                }
            }
            let (tau, d) = [(center, dev[i]), (x1, f1), (x2, f2)].into_iter().fold(
                (center, f64::INFINITY),
                |acc, x| if x.1 < acc.1 { x } else { acc },
            );
            (d <= eps).then_some(AlmostPeriod { tau, deviation: d })
        })
        .collect();
    out.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    out.dedup_by(|a, b| (a.tau - b.tau).abs() < h);
    out
}

fn inclusion(periods: &[AlmostPeriod]) -> f64 {
    if periods.len() < 2 {
        return f64::INFINITY;
    }
    periods
        .windows(2)
        .map(|w| w[1].tau - w[0].tau)
        .fold(0.0, f64::max)
}

/// `eps`-almost periods in `tau_range`, with the sup over the signal window.
pub fn almost_periods(
    f: &APSignal,
    eps: f64,
    tau_range: (f64, f64),
) -> Result<AlmostPeriodReport, ApError> {
    if !(eps > 0.0) || !(tau_range.1 > tau_range.0) || !(f.sample_step > 0.0) {
        return Err(ApError::InvalidArgument(
            "need eps > 0, a nonempty range and a positive step".into(),
        ));
    }
    let periods = scan(f, eps, tau_range);
    let w = f.window.1 - f.window.0;
    let doubled = scan(&f.with_window((f.window.0, f.window.1 + w)), eps, tau_range);
    Ok(AlmostPeriodReport {
        eps,
        inclusion_length: inclusion(&periods),
        inclusion_length_doubled_window: inclusion(&doubled),
        periods,
    })
}

/// Trapezoid mean of `g` over `[-t, t]` with step at most `h`.
fn mean_over(
    f: &APSignal,
    t: f64,
    g: impl Fn(f64, Vec<Complex64>) -> Vec<Complex64> + Sync,
) -> Vec<Complex64> {
    let n = ((2.0 * t) / f.sample_step).ceil().max(1.0) as usize;
    let h = 2.0 * t / n as f64;
    let dim = f.dim;
    let zero = || vec![Complex64::new(0.0, 0.0); dim];
    let sum = (0..=n)
        .into_par_iter()
        .map(|i| {
            let s = -t + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            g(s, f.eval(s))
                .into_iter()
                .map(|z| z * w)
                .collect::<Vec<_>>()
        })
        .reduce(zero, |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    sum.into_iter().map(|z| z * h / (2.0 * t)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BohrEstimate {
    pub lambda: f64,
    /// `(T, estimate)` per truncation.
    pub estimates: Vec<(f64, Vec<Complex64>)>,
    /// Norms of successive differences.
    pub differences: Vec<f64>,
    pub value: Vec<Complex64>,
}

/// `a(lambda) = lim (1/2T) int_{-T}^{T} f(t) e^{-i lambda t} dt` at each
/// truncation in `t_list`.
pub fn bohr_coefficient(
    f: &APSignal,
    lambda: f64,
    t_list: &[f64],
) -> Result<BohrEstimate, ApError> {
    if t_list.is_empty() || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ApError::InvalidArgument(
            "T list must be increasing and nonempty".into(),
        ));
    }
    let estimates: Vec<(f64, Vec<Complex64>)> = t_list
        .iter()
        .map(|&t| {
            let e = mean_over(f, t, |s, v| {
                let ph = Complex64::from_polar(1.0, -lambda * s);
                v.into_iter().map(|z| z * ph).collect()
            });
            (t, e)
        })
        .collect();
    let differences: Vec<f64> = estimates
        .windows(2)
        .map(|w| diff_norm(&w[0].1, &w[1].1))
        .collect();
    if differences.len() >= 2 && differences[differences.len() - 1] > differences[0] {
        return Err(ApError::NonConvergent { differences });
    }
    let value = estimates.last().expect("nonempty").1.clone();
    Ok(BohrEstimate {
        lambda,
        estimates,
        differences,
        value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParsevalReport {
    pub mean_square: f64,
    pub coeff_sum: f64,
    /// `mean_square - coeff_sum`: the mass outside the given spectrum.
    pub defect: f64,
}

/// Compares the mean of `|f|^2` with the Bohr coefficient mass on
/// `spectrum`, both over `[-t, t]`.
pub fn parseval_check(f: &APSignal, spectrum: &[f64], t: f64) -> Result<ParsevalReport, ApError> {
    if !(t > 0.0) {
        return Err(ApError::InvalidArgument("T must be positive".into()));
    }
    let ms = mean_over(f, t, |_, v| vec![Complex64::new(norm(&v).powi(2), 0.0)])[0].re;
    let mut coeff_sum = 0.0;
    for &lambda in spectrum {
        let a = bohr_coefficient(f, lambda, &[t])?.value;
        coeff_sum += norm(&a).powi(2);
    }
    Ok(ParsevalReport {
        mean_square: ms,
        coeff_sum,
        defect: ms - coeff_sum,
    })
}

/// `t -> (g(F(w_j, t)))_j / sqrt(m)` over the offsets `w_j`, so that the
/// vector norm is a root mean square over the grid. Valid for `t` in
/// `span`; the orbit pieces are precomputed there.
pub fn tube_pullback_signal(
    p: &ConvexPolytope,
    tube: &PeriodicTube,
    g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    offsets: &[Vec<f64>],
    span: (f64, f64),
    sample_step: f64,
) -> Result<APSignal, ApError> {
    let mut orbits: Vec<Vec<OrbitSegment>> = Vec::with_capacity(offsets.len());
    for w in offsets {
        let mut segs = tube_orbit_segments(p, tube, w, span.0, span.1)?;
        for s in &mut segs {
            if s.ta > s.tb {
                std::mem::swap(&mut s.a, &mut s.b);
                std::mem::swap(&mut s.ta, &mut s.tb);
            }
        }
        segs.sort_by(|a, b| a.ta.total_cmp(&b.ta));
        orbits.push(segs);
    }
    let scale = 1.0 / (offsets.len().max(1) as f64).sqrt();
    let dim = offsets.len();
    let f = move |t: f64| -> Vec<Complex64> {
        orbits
            .iter()
            .map(|segs| {
                let i = segs
                    .partition_point(|s| s.tb < t)
                    .min(segs.len().saturating_sub(1));
                let s = &segs[i];
                let u = if s.tb > s.ta {
                    ((t - s.ta) / (s.tb - s.ta)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let x: Vec<f64> = s.a.iter().zip(&s.b).map(|(a, b)| a + u * (b - a)).collect();
                Complex64::new(scale * g(&x), 0.0)
            })
            .collect()
    };
    Ok(APSignal::from_fn(dim, f, sample_step, span))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_tone(window: (f64, f64)) -> APSignal {
        let h = Complex64::new(0.0, -0.5);
        let r2 = 2f64.sqrt();
        APSignal::trig_polynomial(
            vec![
                Term {
                    freq: 1.0,
                    coeff: vec![h],
                },
                Term {
                    freq: -1.0,
                    coeff: vec![-h],
                },
                Term {
                    freq: r2,
                    coeff: vec![h],
                },
                Term {
                    freq: -r2,
                    coeff: vec![-h],
                },
            ],
            window,
        )
    }

    #[test]
    fn sine_periods() {
        let f = APSignal::real(f64::sin, 0.05, (0.0, 20.0));
        let r = almost_periods(&f, 0.01, (0.0, 30.0)).unwrap();
        for p in &r.periods {
            let k = (p.tau / TAU).round();
            assert!((p.tau - k * TAU).abs() < 0.01, "{p:?}");
        }
        assert_eq!(r.periods.len(), 5);
        assert!((r.inclusion_length - TAU).abs() < 0.02);
    }

    #[test]
    fn drift_has_no_periods() {
        let f = APSignal::real(|t| t, 0.05, (0.0, 20.0));
        let r = almost_periods(&f, 0.01, (0.0, 30.0)).unwrap();
        assert!(r.periods.iter().all(|p| p.tau < 0.011));
        assert!(r.inclusion_length.is_infinite());
    }

    #[test]
    fn two_tone_signal() {
        let f = two_tone((0.0, 50.0));
        assert!(f.spectrum_defect().unwrap() < 1e-12);
        let v = f.eval(0.7)[0];
        assert!((v.re - (0.7f64.sin() + (2f64.sqrt() * 0.7).sin())).abs() < 1e-12);
        let a = bohr_coefficient(&f, 1.0, &[100.0, 1000.0, 10000.0]).unwrap();
        assert!((a.value[0] - Complex64::new(0.0, -0.5)).norm() < 1e-3);
        let r = parseval_check(&f, &[1.0, -1.0], 1e4).unwrap();
        assert!((r.defect - 0.5).abs() < 1e-2);
    }

    #[test]
    fn single_exponential_parseval() {
        let f = APSignal::trig_polynomial(
            vec![Term {
                freq: 1.0,
                coeff: vec![Complex64::new(1.0, 0.0)],
            }],
            (0.0, 10.0),
        );
        let r = parseval_check(&f, &[1.0], 1e3).unwrap();
        assert!(r.defect.abs() < 1e-3 && (r.mean_square - 1.0).abs() < 1e-9);
        let b = bohr_coefficient(&f, 3.0, &[10.0, 100.0, 1000.0]).unwrap();
        assert!(b.value[0].norm() < 1e-3);
    }
}
