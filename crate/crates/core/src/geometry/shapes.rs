//! Constructors for the standard tables used in examples and tests.

use super::{ConvexPolytope, GeometryError, Halfspace};
use crate::linalg::normalized;
use crate::tol::Tolerance;

/// Half-spaces of the box `[0, a_1] x ... x [0, a_n]`, ordered as
/// `-e_1, +e_1, -e_2, +e_2, ...`.
pub fn box_halfspaces(dims: &[f64]) -> Vec<Halfspace> {
    let n = dims.len();
    let mut hs = Vec::with_capacity(2 * n);
    for (k, &a) in dims.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[k] = -1.0;
        hs.push(Halfspace::new(e.clone(), 0.0));
        e[k] = 1.0;
        hs.push(Halfspace::new(e, a));
    }
    hs
}

pub fn unit_box(dims: &[f64]) -> Result<ConvexPolytope, GeometryError> {
    let name = if dims.len() == 2 { "box2" } else { "box" };
    ConvexPolytope::from_halfspaces(name, box_halfspaces(dims), &Tolerance::default())
}

/// Convex polygon from counter-clockwise vertices.
pub fn polygon(vertices: &[[f64; 2]]) -> Result<ConvexPolytope, GeometryError> {
    let k = vertices.len();
    let mut hs = Vec::with_capacity(k);
    for i in 0..k {
        let a = vertices[i];
        let b = vertices[(i + 1) % k];
        let n = normalized(&[b[1] - a[1], a[0] - b[0]]).ok_or(GeometryError::DegeneratePolytope)?;
        let d = n[0] * a[0] + n[1] * a[1];
        hs.push(Halfspace::new(n, d));
    }
    ConvexPolytope::from_halfspaces("polygon", hs, &Tolerance::default())
}

pub fn equilateral_triangle(side: f64) -> ConvexPolytope {
    let h = side * 3f64.sqrt() / 2.0;
    polygon(&[[0.0, 0.0], [side, 0.0], [side / 2.0, h]]).expect("valid triangle")
}

/// Triangle with unit base and angles `angle` and `pi/4` at the base.
pub fn triangle_with_angle(angle: f64) -> Result<ConvexPolytope, GeometryError> {
    let b = std::f64::consts::FRAC_PI_4;
    // Apex from the law of sines.
    let c = std::f64::consts::PI - angle - b;
    let side = b.sin() / c.sin();
    polygon(&[
        [0.0, 0.0],
        [1.0, 0.0],
        [side * angle.cos(), side * angle.sin()],
    ])
}

/// Regular tetrahedron with the given edge length, centred at the origin.
pub fn regular_tetrahedron(edge: f64) -> ConvexPolytope {
    let s = edge / (2.0 * 2f64.sqrt());
    let verts = [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    let hs = verts
        .iter()
        .map(|v| {
            let n: Vec<f64> = v.iter().map(|c| -c / 3f64.sqrt()).collect();
            Halfspace::new(n, s / 3f64.sqrt())
        })
        .collect();
    ConvexPolytope::from_halfspaces("tetrahedron", hs, &Tolerance::default())
        .expect("valid tetrahedron")
}

/// Right prism over an equilateral triangle of side `side`, height `height`.
/// The three lateral facets come first, then bottom and top.
pub fn triangular_prism(side: f64, height: f64) -> ConvexPolytope {
    let tri = equilateral_triangle(side);
    let mut hs: Vec<Halfspace> = tri
        .halfspaces
        .iter()
        .map(|h| Halfspace::new(vec![h.normal[0], h.normal[1], 0.0], h.offset))
        .collect();
    hs.push(Halfspace::new(vec![0.0, 0.0, -1.0], 0.0));
    hs.push(Halfspace::new(vec![0.0, 0.0, 1.0], height));
    ConvexPolytope::from_halfspaces("prism", hs, &Tolerance::default()).expect("valid prism")
}
