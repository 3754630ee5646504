use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RleMask;

/// Closed polygon with vertices in continuous pixel coordinates `(x, y)`.
/// Pixel `(row, col)` covers `[col, col + 1) x [row, row + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Self {
        Polygon { vertices }
    }

    /// Parses a flat `[x1, y1, x2, y2, ...]` coordinate list.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if !coords.len().is_multiple_of(2) {
            return Err(Error::InvalidPolygon("odd number of coordinates".into()));
        }
        Ok(Polygon {
            vertices: coords.chunks_exact(2).map(|c| (c[0], c[1])).collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|&(x, y)| [x, y]).collect()
    }

    fn validate(&self, height: u32, width: u32) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "{} vertices, at least 3 required",
                self.vertices.len()
            )));
        }
        for &(x, y) in &self.vertices {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::InvalidPolygon("non-finite vertex".into()));
            }
            if x < 0.0 || y < 0.0 || x > width as f64 || y > height as f64 {
                return Err(Error::InvalidPolygon(format!(
                    "vertex ({x}, {y}) outside {width}x{height} frame"
                )));
            }
        }
        Ok(())
    }

    /// Sorted x positions where the horizontal line `y` crosses an edge.
    /// An edge counts when exactly one endpoint lies strictly above `y`.
    fn crossings(&self, y: f64, out: &mut Vec<f64>) {
        out.clear();
        let n = self.vertices.len();
        for i in 0..n {
            let (xi, yi) = self.vertices[i];
            let (xj, yj) = self.vertices[(i + 1) % n];
            if (yi > y) != (yj > y) {
                out.push(xi + (y - yi) * (xj - xi) / (yj - yi));
            }
        }
        out.sort_by(f64::total_cmp);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolygonSet {
    pub polygons: Vec<Polygon>,
}

impl PolygonSet {
    pub fn new(polygons: Vec<Polygon>) -> Self {
        PolygonSet { polygons }
    }
}

/// Sets every pixel whose center lies inside any polygon (even-odd rule per
/// polygon, union across polygons).
pub fn rasterize_polygons(polys: &PolygonSet, height: u32, width: u32) -> Result<RleMask> {
    if height == 0 || width == 0 {
        return Err(Error::EmptyGrid);
    }
    for p in &polys.polygons {
        p.validate(height, width)?;
    }
    let w = width as u64;
    let mut spans: Vec<(u64, u64)> = Vec::new();
    let mut row_spans: Vec<(u64, u64)> = Vec::new();
    let mut xs = Vec::new();
    for row in 0..height {
        let yc = row as f64 + 0.5;
        row_spans.clear();
        for p in &polys.polygons {
            p.crossings(yc, &mut xs);
            // A center px is inside iff an odd number of crossings lie
            // strictly right of it, i.e. xs[2k] <= px < xs[2k + 1].
            for pair in xs.chunks_exact(2) {
                let lo = (pair[0] - 0.5).ceil().max(0.0) as u64;
                let hi = ((pair[1] - 0.5).ceil().max(0.0) as u64).min(w);
                if hi > lo {
                    row_spans.push((lo, hi));
                }
            }
        }
        row_spans.sort_unstable();
        let base = row as u64 * w;
        let mut merged: Option<(u64, u64)> = None;
        for &(lo, hi) in &row_spans {
            match merged {
                Some((s, e)) if lo <= e => merged = Some((s, e.max(hi))),
                Some(m) => {
                    spans.push((base + m.0, base + m.1));
                    merged = Some((lo, hi));
                }
                None => merged = Some((lo, hi)),
            }
        }
        if let Some((s, e)) = merged {
            spans.push((base + s, base + e));
        }
    }
    Ok(RleMask::from_spans(height, width, &spans))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, side: f64) -> Polygon {
        Polygon::new(vec![
            (x0, y0),
            (x0 + side, y0),
            (x0 + side, y0 + side),
            (x0, y0 + side),
        ])
    }

    #[test]
    fn three_by_three_block() {
        let set = PolygonSet::new(vec![square(1.0, 1.0, 3.0)]);
        let m = rasterize_polygons(&set, 5, 5).unwrap();
        assert_eq!(m.area(), 9);
        assert_eq!(m.bbox().unwrap().to_array(), [1, 1, 3, 3]);
    }

    #[test]
    fn disjoint_union_adds_up() {
        let a = PolygonSet::new(vec![square(0.0, 0.0, 2.0)]);
        let b = PolygonSet::new(vec![square(4.0, 3.0, 3.0)]);
        let both = PolygonSet::new(vec![square(0.0, 0.0, 2.0), square(4.0, 3.0, 3.0)]);
        let area = |s: &PolygonSet| rasterize_polygons(s, 8, 8).unwrap().area();
        assert_eq!(area(&both), area(&a) + area(&b));
    }

    #[test]
    fn collinear_polygon_is_empty() {
        let set = PolygonSet::new(vec![Polygon::new(vec![(0.0, 0.0), (2.0, 2.0), (4.0, 4.0)])]);
        assert!(rasterize_polygons(&set, 5, 5).unwrap().is_empty());
    }

    #[test]
    fn too_few_vertices() {
        let set = PolygonSet::new(vec![Polygon::new(vec![(0.0, 0.0), (2.0, 2.0)])]);
        assert!(matches!(
            rasterize_polygons(&set, 5, 5),
            Err(Error::InvalidPolygon(_))
        ));
    }

    #[test]
    fn vertex_outside_frame() {
        let set = PolygonSet::new(vec![square(3.0, 3.0, 3.0)]);
        assert!(rasterize_polygons(&set, 5, 5).is_err());
    }

    #[test]
    fn overlapping_polygons_union() {
        let set = PolygonSet::new(vec![square(0.0, 0.0, 3.0), square(1.0, 1.0, 3.0)]);
        // 9 + 9 - 4 shared pixels
        assert_eq!(rasterize_polygons(&set, 5, 5).unwrap().area(), 14);
    }

    #[test]
    fn flat_round_trip() {
        let p = Polygon::from_flat(&[1.0, 2.0, 3.0, 4.0, 5.0, 0.0]).unwrap();
        assert_eq!(p.vertices, vec![(1.0, 2.0), (3.0, 4.0), (5.0, 0.0)]);
        assert_eq!(p.to_flat(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 0.0]);
        assert!(Polygon::from_flat(&[1.0, 2.0, 3.0]).is_err());
    }
}
