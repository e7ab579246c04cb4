//! Polytope files and the CSV/JSON artifacts written by the scenario
//! runner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::Trajectory;
use crate::geometry::{ConvexPolytope, GeometryError, Halfspace};
use crate::tol::Tolerance;
use crate::tubes::TubeAtlas;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One half-space as written in a file; the normal need not be unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceFile {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// On-disk polytope: `{name, dim, halfspaces: [{normal, offset}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeFile {
    #[serde(default)]
    pub name: String,
    pub dim: usize,
    pub halfspaces: Vec<HalfspaceFile>,
}

impl PolytopeFile {
    pub fn from_polytope(p: &ConvexPolytope) -> Self {
        Self {
            name: p.name.clone(),
            dim: p.dim,
            halfspaces: p
                .halfspaces
                .iter()
                .map(|h| HalfspaceFile {
                    normal: h.normal.clone(),
                    offset: h.offset,
                })
                .collect(),
        }
    }

    /// Normalizes every row and builds the polytope.
    pub fn build(&self, tol: &Tolerance) -> Result<ConvexPolytope, IoError> {
        if self.dim < 2 {
            return Err(GeometryError::DimensionTooSmall(self.dim).into());
        }
        let mut hs = Vec::with_capacity(self.halfspaces.len());
        for h in &self.halfspaces {
            if h.normal.len() != self.dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: self.dim,
                    found: h.normal.len(),
                }
                .into());
            }
            if !h.offset.is_finite() || h.normal.iter().any(|x| !x.is_finite()) {
                return Err(GeometryError::NonFinite.into());
            }
            let n = h.normal.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n > 0.0) || !n.is_finite() {
                return Err(IoError::Parse("half-space with zero normal".into()));
            }
            hs.push(Halfspace::new(
                h.normal.iter().map(|x| x / n).collect(),
                h.offset / n,
            ));
        }
        Ok(ConvexPolytope::from_halfspaces(self.name.clone(), hs, tol)?)
    }
}

/// Parses a polytope file without building the polytope.
pub fn parse_polytope_file(text: &str) -> Result<PolytopeFile, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Parse(e.to_string()))
}

pub fn parse_polytope(text: &str, tol: &Tolerance) -> Result<ConvexPolytope, IoError> {
    parse_polytope_file(text)?.build(tol)
}

pub fn polytope_to_json(p: &ConvexPolytope) -> String {
    serde_json::to_string_pretty(&PolytopeFile::from_polytope(p)).expect("plain data serializes")
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, IoError> {
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes rows of numbers under a header.
pub fn table_csv<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.as_ref())?;
    }
    finish(w)
}

/// `event, x0..x{n-1}, facet, length` per impact.
pub fn trajectory_csv(t: &Trajectory) -> Result<String, IoError> {
    let n = t.start.pos.len();
    let mut header: Vec<String> = vec!["event".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend(["facet".to_string(), "length".to_string()]);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for (i, e) in t.events.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(e.point.iter().map(|x| x.to_string()));
        row.extend([e.facet.to_string(), e.arc_length.to_string()]);
        w.write_record(&row)?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TubeRecord<'a> {
    word: &'a [usize],
    x0: &'a [f64],
    v: &'a [f64],
    #[serde(rename = "L")]
    length: f64,
    rotation_angles: &'a [f64],
    cross_section: &'a Option<crate::tubes::CrossSection>,
    maximal: bool,
}

/// JSON list of tubes `{word, x0, v, L, rotation_angles, cross_section,
/// maximal}`.
pub fn atlas_json(a: &TubeAtlas) -> String {
    let recs: Vec<TubeRecord> = a
        .tubes
        .iter()
        .map(|t| TubeRecord {
            word: &t.word_core,
            x0: &t.x0,
            v: &t.v,
            length: t.length,
            rotation_angles: &t.rotation_angles,
            cross_section: &t.cross_section,
            maximal: t.maximal,
        })
        .collect();
    serde_json::to_string_pretty(&recs).expect("plain data serializes")
}

/// `eps, M, length` with one row per tube (a single row with an empty
/// length for an empty atlas).
pub fn atlas_summary_csv(atlases: &[TubeAtlas]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["eps", "M", "length"])?;
    for a in atlases {
        if a.tubes.is_empty() {
            w.write_record([a.eps.to_string(), "0".into(), String::new()])?;
        }
        for t in &a.tubes {
            w.write_record([
                a.eps.to_string(),
                a.count().to_string(),
                t.length.to_string(),
            ])?;
        }
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = r#"{"name": "sq", "dim": 2, "halfspaces": [
        {"normal": [-2, 0], "offset": 0}, {"normal": [3, 0], "offset": 3},
        {"normal": [0, -1], "offset": 0}, {"normal": [0, 0.5], "offset": 0.5}]}"#;

    #[test]
    fn normalizes_rows() {
        let p = parse_polytope(SQUARE, &Tolerance::default()).unwrap();
        assert_eq!(p.vertices.len(), 4);
        assert!((p.volume() - 1.0).abs() < 1e-12);
        let again = parse_polytope(&polytope_to_json(&p), &Tolerance::default()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            parse_polytope(
                r#"{"dim": 2, "halfspaces": [], "extra": 1}"#,
                &Tolerance::default()
            ),
            Err(IoError::Parse(_))
        ));
        assert!(parse_polytope(
            r#"{"dim": 2, "halfspaces": [{"normal": [0, 0], "offset": 1}]}"#,
            &Tolerance::default()
        )
        .is_err());
        assert!(matches!(
            parse_polytope(
                r#"{"dim": 2, "halfspaces": [{"normal": [1], "offset": 1}]}"#,
                &Tolerance::default()
            ),
            Err(IoError::Geometry(GeometryError::DimensionMismatch { .. }))
        ));
        assert!(parse_polytope(
            r#"{"dim": 2, "halfspaces": [{"normal": [1, 0], "offset": 1}, {"normal": [-1, 0], "offset": 1}]}"#,
            &Tolerance::default()
        )
        .is_err());
    }
}
