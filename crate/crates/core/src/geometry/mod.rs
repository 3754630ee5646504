//! Mask and box geometry: RLE masks, polygon rasterization, bounding boxes
//! and extreme-point (NEWS) keypoints.

mod polygon;
mod rle;

pub use polygon::{rasterize_polygons, Polygon, PolygonSet};
pub use rle::{extract_news, mask_bbox, mask_iou, rle_decode, rle_encode, Bitmap, RleMask};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pixel position as `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub row: u32,
    pub col: u32,
}

impl Pixel {
    pub const fn new(row: u32, col: u32) -> Self {
        Pixel { row, col }
    }
}

/// Axis-aligned box in inclusive pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self> {
        if x_min > x_max || y_min > y_max {
            return Err(Error::InvalidBox(format!(
                "({x_min}, {y_min}, {x_max}, {y_max}) has inverted extents"
            )));
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> u64 {
        (self.x_max - self.x_min) as u64 + 1
    }

    pub fn height(&self) -> u64 {
        (self.y_max - self.y_min) as u64 + 1
    }

    pub fn area(&self) -> u64 {
        self.width() * self.height()
    }

    pub fn fits_in(&self, height: u32, width: u32) -> bool {
        self.x_max < width && self.y_max < height
    }

    pub fn contains(&self, p: Pixel) -> bool {
        (self.x_min..=self.x_max).contains(&p.col) && (self.y_min..=self.y_max).contains(&p.row)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let x0 = self.x_min.max(other.x_min);
        let y0 = self.y_min.max(other.y_min);
        let x1 = self.x_max.min(other.x_max);
        let y1 = self.y_max.min(other.y_max);
        if x0 > x1 || y0 > y1 {
            return 0;
        }
        (x1 - x0 + 1) as u64 * (y1 - y0 + 1) as u64
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0 {
            return 0.0;
        }
        inter as f64 / (self.area() + other.area() - inter) as f64
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

pub fn bbox_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

/// North/east/west/south extreme pixels of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NewsKeypoints {
    pub north: Pixel,
    pub east: Pixel,
    pub west: Pixel,
    pub south: Pixel,
}

impl NewsKeypoints {
    /// Box spanned by the four keypoints.
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x_min: self.west.col,
            y_min: self.north.row,
            x_max: self.east.col,
            y_max: self.south.row,
        }
    }

    pub fn points(&self) -> [Pixel; 4] {
        [self.north, self.east, self.west, self.south]
    }

    pub fn validate(&self, height: u32, width: u32) -> Result<()> {
        if self
            .points()
            .iter()
            .any(|p| p.row >= height || p.col >= width)
        {
            return Err(Error::InvalidArgument("keypoint outside frame".into()));
        }
        if self.north.row > self.south.row || self.west.col > self.east.col {
            return Err(Error::InvalidArgument("keypoints are not extremal".into()));
        }
        let b = self.bbox();
        if self.points().iter().any(|&p| !b.contains(p)) {
            return Err(Error::InvalidArgument(
                "keypoint outside the box the others span".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn box_iou_examples() {
        assert_eq!(bbox_iou(&b(2, 3, 11, 12), &b(2, 3, 11, 12)), 1.0);
        assert_eq!(bbox_iou(&b(0, 0, 4, 4), &b(5, 0, 9, 4)), 0.0);
        // 10x10 boxes, 5 columns apart: 50 / (100 + 100 - 50)
        assert_eq!(bbox_iou(&b(0, 0, 9, 9), &b(5, 0, 14, 9)), 1.0 / 3.0);
    }

    #[test]
    fn inverted_box_rejected() {
        assert!(BoundingBox::new(3, 0, 2, 0).is_err());
        assert!(BoundingBox::new(0, 3, 0, 2).is_err());
    }

    #[test]
    fn inclusive_area() {
        assert_eq!(b(4, 3, 4, 3).area(), 1);
        assert_eq!(b(0, 0, 6, 4).area(), 35);
    }
}
