//! Composite Gauss-Legendre rules on intervals and boxes.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Gauss-Legendre rule of a fixed order repeated on equal panels.
#[derive(Debug, Clone)]
pub struct Composite {
    rule: GaussLegendre,
    panels: usize,
}

impl Composite {
    pub fn new(order: usize, panels: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).expect("nonzero");
        Self {
            rule: GaussLegendre::new(order),
            panels: panels.max(1),
        }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = (b - a) / self.panels as f64;
        (0..self.panels)
            .map(|i| {
                let lo = a + i as f64 * h;
                self.rule.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }

    /// Nodes and weights on `[a, b]`.
    pub fn nodes(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let h = (b - a) / self.panels as f64;
        let mut out = Vec::with_capacity(self.panels * self.rule.as_node_weight_pairs().len());
        for i in 0..self.panels {
            let lo = a + i as f64 * h;
            for &(x, w) in self.rule.as_node_weight_pairs() {
                out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
            }
        }
        out
    }
}

/// Tensor-product integral over the box `prod [lo_k, hi_k]`.
pub fn integrate_box(
    rule: &Composite,
    lo: &[f64],
    hi: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let axes: Vec<Vec<(f64, f64)>> = lo.iter().zip(hi).map(|(a, b)| rule.nodes(*a, *b)).collect();
    let n = axes.len();
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut total = 0.0;
    if axes.iter().any(|a| a.is_empty()) {
        return 0.0;
    }
    loop {
        let mut w = 1.0;
        for k in 0..n {
            let (xk, wk) = axes[k][idx[k]];
            x[k] = xk;
            w *= wk;
        }
        total += w * f(&x);
        let mut k = 0;
        loop {
            if k == n {
                return total;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness_and_oscillation() {
        let r = Composite::new(4, 1);
        assert!((r.integrate(0.0, 2.0, |x| x.powi(7)) - 32.0).abs() < 1e-12);
        let r = Composite::new(8, 64);
        let v = r.integrate(0.0, std::f64::consts::PI, |x| (40.0 * x).sin().powi(2));
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn box_volume_moment() {
        let r = Composite::new(3, 2);
        let v = integrate_box(&r, &[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0], |x| {
            x[0] * x[1] * x[2]
        });
        assert!((v - 0.5 * 2.0 * 4.5).abs() < 1e-12);
    }
}
