use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ConvexPolytope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rationality {
    Rational { order: usize },
    IrrationalSuspected { bound: usize },
}

impl Rationality {
    pub fn order(&self) -> Option<usize> {
        match self {
            Self::Rational { order } => Some(*order),
            Self::IrrationalSuspected { .. } => None,
        }
    }
}

/// Linear reflection group of a polytope, closed by breadth-first search.
#[derive(Debug, Clone)]
pub struct ReflectionGroup {
    pub generators: Vec<DMatrix<f64>>,
    pub elements: Vec<DMatrix<f64>>,
    pub closed: bool,
    tol: f64,
    weights: Vec<f64>,
    index: BTreeMap<Key, Vec<usize>>,
}

/// Total-order wrapper so a scalar hash can live in a `BTreeMap`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

pub fn reflection_matrix(normal: &[f64]) -> DMatrix<f64> {
    let n = normal.len();
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - 2.0 * normal[i] * normal[j]
    })
}

impl ReflectionGroup {
    pub fn new(generators: Vec<DMatrix<f64>>, tol: f64) -> Self {
        let n = generators.first().map(|g| g.nrows()).unwrap_or(0);
        // Elements are bucketed by a random linear functional; equal matrices
        // land within a small window of each other.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let weights = (0..n * n).map(|_| rng.random_range(0.5..1.5)).collect();
        Self {
            generators,
            elements: Vec::new(),
            closed: false,
            tol,
            weights,
            index: BTreeMap::new(),
        }
    }

    fn hash(&self, m: &DMatrix<f64>) -> f64 {
        m.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    fn window(&self) -> f64 {
        self.tol * self.weights.len() as f64 * 2.0
    }

    /// Index of an element equal to `m` within tolerance.
    pub fn find(&self, m: &DMatrix<f64>) -> Option<usize> {
        let h = self.hash(m);
        let w = self.window();
        for (_, ids) in self.index.range(Key(h - w)..=Key(h + w)) {
            for &i in ids {
                if (&self.elements[i] - m).amax() <= self.tol {
                    return Some(i);
                }
            }
        }
        None
    }

    fn insert(&mut self, m: DMatrix<f64>) -> usize {
        let h = self.hash(&m);
        let i = self.elements.len();
        self.elements.push(m);
        self.index.entry(Key(h)).or_default().push(i);
        i
    }

    /// Closes under left multiplication by generators, stopping past `max_group`.
    pub fn close(&mut self, max_group: usize) {
        let n = self.generators.first().map(|g| g.nrows()).unwrap_or(0);
        let mut queue = VecDeque::new();
        queue.push_back(self.insert(DMatrix::identity(n, n)));
        while let Some(i) = queue.pop_front() {
            for g in 0..self.generators.len() {
                let m = &self.generators[g] * &self.elements[i];
                if self.find(&m).is_none() {
                    if self.elements.len() >= max_group {
                        self.closed = false;
                        return;
                    }
                    queue.push_back(self.insert(m));
                }
            }
        }
        self.closed = true;
    }
}

/// Decides whether the group generated by the facet reflections is finite,
/// exploring at most `max_group` elements.
pub fn classify_rationality(p: &ConvexPolytope, max_group: usize) -> Rationality {
    let gens = p
        .halfspaces
        .iter()
        .map(|h| reflection_matrix(&h.normal))
        .collect();
    let tol = (p.tol * 1e3).max(1e-8);
    let mut g = ReflectionGroup::new(gens, tol);
    g.close(max_group.max(1));
    if g.closed {
        Rationality::Rational {
            order: g.elements.len(),
        }
    } else {
        Rationality::IrrationalSuspected { bound: max_group }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn cube_and_square_orders() {
        let cube = shapes::unit_box(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            classify_rationality(&cube, 10_000),
            Rationality::Rational { order: 8 }
        );
        let sq = shapes::unit_box(&[1.0, 1.0]).unwrap();
        assert_eq!(
            classify_rationality(&sq, 10_000),
            Rationality::Rational { order: 4 }
        );
    }

    #[test]
    fn equilateral_triangle_is_dihedral_of_order_six() {
        let t = shapes::equilateral_triangle(1.0);
        assert_eq!(
            classify_rationality(&t, 10_000),
            Rationality::Rational { order: 6 }
        );
    }

    #[test]
    fn irrational_triangle() {
        let t = shapes::triangle_with_angle((1.0f64 / 3.0).acos()).unwrap();
        assert_eq!(
            classify_rationality(&t, 10_000),
            Rationality::IrrationalSuspected { bound: 10_000 }
        );
    }

    #[test]
    fn random_products_stay_in_group() {
        let cube = shapes::unit_box(&[1.0, 2.0, 3.0]).unwrap();
        let gens: Vec<_> = cube
            .halfspaces
            .iter()
            .map(|h| reflection_matrix(&h.normal))
            .collect();
        let mut g = ReflectionGroup::new(gens.clone(), 1e-8);
        g.close(100);
        let o = g.elements.len();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let mut m = DMatrix::identity(3, 3);
            for _ in 0..o {
                m = &gens[rng.random_range(0..gens.len())] * m;
            }
            assert!(g.find(&m).is_some());
        }
    }
}
