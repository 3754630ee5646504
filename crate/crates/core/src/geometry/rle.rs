//! Run-length encoded binary masks.
//!
//! Runs are stored in row-major scan order and alternate between background
//! and foreground, starting with background. The first run may therefore be
//! zero-length; every other run is at least one pixel long.

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, NewsKeypoints, Pixel};

/// Dense row-major boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    height: u32,
    width: u32,
    data: Vec<bool>,
}

impl Bitmap {
    pub fn new(height: u32, width: u32) -> Self {
        Bitmap {
            height,
            width,
            data: vec![false; height as usize * width as usize],
        }
    }

    pub fn from_vec(height: u32, width: u32, data: Vec<bool>) -> Result<Self> {
        if data.len() != height as usize * width as usize {
            return Err(Error::InvalidArgument(format!(
                "bitmap of {height}x{width} needs {} cells, got {}",
                height as usize * width as usize,
                data.len()
            )));
        }
        Ok(Bitmap {
            height,
            width,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.len()) as u32;
        if rows.iter().any(|r| r.len() as u32 != width) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Ok(Bitmap {
            height,
            width,
            data: rows.concat(),
        })
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        self.data[row as usize * self.width as usize + col as usize] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }
}

/// Run-length encoded binary mask on a `height x width` frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RleMask {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

impl RleMask {
    /// Builds a mask from raw run lengths, checking the canonical-form invariants.
    pub fn from_counts(height: u32, width: u32, counts: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid);
        }
        if counts.is_empty() {
            return Err(Error::InvalidRle("no runs".into()));
        }
        if let Some(pos) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(Error::InvalidRle(format!(
                "run {} has zero length",
                pos + 1
            )));
        }
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let expected = height as u64 * width as u64;
        if total != expected {
            return Err(Error::InvalidRle(format!(
                "runs sum to {total}, frame has {expected} pixels"
            )));
        }
        Ok(RleMask {
            height,
            width,
            counts,
        })
    }

    /// The mask with no pixel set.
    pub fn empty(height: u32, width: u32) -> Result<Self> {
        RleMask::from_counts(height, width, vec![height * width])
    }

    pub fn encode(bitmap: &Bitmap) -> Result<Self> {
        RleMask::from_scan(bitmap.height, bitmap.width, bitmap.data.iter().copied())
    }

    /// Encodes pixels given in row-major order.
    pub fn from_scan(
        height: u32,
        width: u32,
        pixels: impl IntoIterator<Item = bool>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid);
        }
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        let mut seen = 0u64;
        for px in pixels {
            if px != current {
                counts.push(run);
                run = 0;
                current = px;
            }
            run += 1;
            seen += 1;
        }
        counts.push(run);
        if seen != height as u64 * width as u64 {
            return Err(Error::InvalidArgument(format!(
                "expected {} pixels, got {seen}",
                height as u64 * width as u64
            )));
        }
        Ok(RleMask {
            height,
            width,
            counts,
        })
    }

    /// Builds a mask from sorted, non-overlapping `[start, end)` foreground spans
    /// in row-major pixel indices.
    pub(crate) fn from_spans(height: u32, width: u32, spans: &[(u64, u64)]) -> Self {
        let mut counts = Vec::with_capacity(spans.len() * 2 + 1);
        let mut cursor = 0u64;
        for &(s, e) in spans.iter().filter(|(s, e)| e > s) {
            if s == cursor && !counts.is_empty() {
                // Adjacent span: extend the previous foreground run.
                let last = counts.len() - 1;
                counts[last] += (e - s) as u32;
            } else {
                counts.push((s - cursor) as u32);
                counts.push((e - s) as u32);
            }
            cursor = e;
        }
        let total = height as u64 * width as u64;
        if counts.is_empty() {
            counts.push(total as u32);
        } else if cursor < total {
            counts.push((total - cursor) as u32);
        }
        RleMask {
            height,
            width,
            counts,
        }
    }

    pub fn decode(&self) -> Bitmap {
        let mut data = Vec::with_capacity(self.height as usize * self.width as usize);
        let mut value = false;
        for &c in &self.counts {
            data.extend(std::iter::repeat_n(value, c as usize));
            value = !value;
        }
        Bitmap {
            height: self.height,
            width: self.width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| c as u64)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.len() < 2
    }

    /// Foreground spans as `[start, end)` row-major pixel indices.
    pub fn spans(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(k, &c)| {
            let start = pos;
            pos += c as u64;
            (k % 2 == 1).then_some((start, pos))
        })
    }

    /// Foreground spans split at row boundaries: `(row, first col, last col)` inclusive.
    pub fn row_segments(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        let w = self.width as u64;
        self.spans().flat_map(move |(s, e)| {
            let first_row = s / w;
            let last_row = (e - 1) / w;
            (first_row..=last_row).map(move |r| {
                let c0 = if r == first_row { s % w } else { 0 };
                let c1 = if r == last_row { (e - 1) % w } else { w - 1 };
                (r as u32, c0 as u32, c1 as u32)
            })
        })
    }

    pub fn contains(&self, row: u32, col: u32) -> bool {
        let idx = row as u64 * self.width as u64 + col as u64;
        self.spans().any(|(s, e)| s <= idx && idx < e)
    }

    fn check_dims(&self, other: &RleMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    /// Number of pixels set in both masks.
    pub fn intersection_area(&self, other: &RleMask) -> Result<u64> {
        self.check_dims(other)?;
        let a: Vec<_> = self.spans().collect();
        let b: Vec<_> = other.spans().collect();
        let (mut i, mut j) = (0, 0);
        let mut total = 0u64;
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if hi > lo {
                total += hi - lo;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(total)
    }

    pub fn iou(&self, other: &RleMask) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return Ok(1.0);
        }
        Ok(inter as f64 / union as f64)
    }

    /// Pixels set in `self` but not in `other`.
    pub fn difference(&self, other: &RleMask) -> Result<RleMask> {
        self.check_dims(other)?;
        let b: Vec<_> = other.spans().collect();
        let mut out = Vec::new();
        let mut j = 0;
        for (s, e) in self.spans() {
            let mut cursor = s;
            while j < b.len() && b[j].1 <= cursor {
                j += 1;
            }
            let mut k = j;
            while k < b.len() && b[k].0 < e {
                if b[k].0 > cursor {
                    out.push((cursor, b[k].0));
                }
                cursor = cursor.max(b[k].1);
                k += 1;
            }
            if cursor < e {
                out.push((cursor, e));
            }
        }
        Ok(RleMask::from_spans(self.height, self.width, &out))
    }

    /// Tightest inclusive box around the set pixels.
    pub fn bbox(&self) -> Result<BoundingBox> {
        let mut segs = self.row_segments();
        let (r0, c0, c1) = segs.next().ok_or(Error::EmptyMask)?;
        let (mut y_min, mut y_max, mut x_min, mut x_max) = (r0, r0, c0, c1);
        for (r, c0, c1) in segs {
            y_min = y_min.min(r);
            y_max = y_max.max(r);
            x_min = x_min.min(c0);
            x_max = x_max.max(c1);
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Extreme pixels of the mask. Ties on the extremal row (column) go to
    /// the smallest column (row).
    pub fn news(&self) -> Result<NewsKeypoints> {
        let mut segs = self.row_segments();
        let (r, c0, c1) = segs.next().ok_or(Error::EmptyMask)?;
        let north = Pixel::new(r, c0);
        let mut south = north;
        let mut west = north;
        let mut east = Pixel::new(r, c1);
        for (r, c0, c1) in segs {
            // Segments arrive in scan order, so the first segment on a new
            // maximal row carries that row's smallest column.
            if r > south.row {
                south = Pixel::new(r, c0);
            }
            if c0 < west.col {
                west = Pixel::new(r, c0);
            }
            if c1 > east.col {
                east = Pixel::new(r, c1);
            }
        }
        Ok(NewsKeypoints {
            north,
            east,
            west,
            south,
        })
    }
}

pub fn rle_encode(bitmap: &Bitmap) -> Result<RleMask> {
    RleMask::encode(bitmap)
}

pub fn rle_decode(mask: &RleMask) -> Bitmap {
    mask.decode()
}

/// Intersection over union of two masks; two empty masks agree perfectly.
pub fn mask_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    a.iou(b)
}

pub fn mask_bbox(mask: &RleMask) -> Result<BoundingBox> {
    mask.bbox()
}

pub fn extract_news(mask: &RleMask) -> Result<NewsKeypoints> {
    mask.news()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&str]) -> Bitmap {
        let rows: Vec<Vec<bool>> = rows
            .iter()
            .map(|r| r.chars().map(|c| c == '#').collect())
            .collect();
        Bitmap::from_rows(&rows).unwrap()
    }

    #[test]
    fn encode_examples() {
        assert_eq!(rle_encode(&grid(&["..", ".."])).unwrap().counts(), &[4]);
        assert_eq!(rle_encode(&grid(&["##", "##"])).unwrap().counts(), &[0, 4]);
        assert_eq!(rle_encode(&grid(&[".##."])).unwrap().counts(), &[1, 2, 1]);
    }

    #[test]
    fn encode_rejects_empty_grid() {
        assert!(matches!(
            rle_encode(&Bitmap::new(0, 3)),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn from_counts_validates() {
        assert!(RleMask::from_counts(2, 2, vec![1, 2]).is_err());
        assert!(RleMask::from_counts(2, 2, vec![1, 0, 3]).is_err());
        assert!(RleMask::from_counts(2, 2, vec![0, 1, 3]).is_ok());
    }

    #[test]
    fn iou_examples() {
        let a = RleMask::from_counts(1, 4, vec![1, 2, 1]).unwrap();
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        let b = RleMask::from_counts(1, 4, vec![0, 1, 2, 1]).unwrap();
        assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);

        // two 10x10 squares on a 10x15 frame, overlapping in a 10x5 strip
        let mut ga = Bitmap::new(10, 15);
        let mut gb = Bitmap::new(10, 15);
        for r in 0..10 {
            for c in 0..10 {
                ga.set(r, c, true);
                gb.set(r, c + 5, true);
            }
        }
        let iou = mask_iou(&rle_encode(&ga).unwrap(), &rle_encode(&gb).unwrap()).unwrap();
        assert_eq!(iou, 50.0 / 150.0);
    }

    #[test]
    fn iou_of_empty_masks() {
        let e = RleMask::empty(3, 3).unwrap();
        let one = RleMask::from_counts(3, 3, vec![4, 1, 4]).unwrap();
        assert_eq!(mask_iou(&e, &e).unwrap(), 1.0);
        assert_eq!(mask_iou(&e, &one).unwrap(), 0.0);
    }

    #[test]
    fn iou_dimension_mismatch() {
        let a = RleMask::empty(3, 3).unwrap();
        let b = RleMask::empty(3, 4).unwrap();
        assert!(matches!(mask_iou(&a, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn bbox_examples() {
        let mut g = Bitmap::new(6, 8);
        g.set(3, 4, true);
        let b = mask_bbox(&rle_encode(&g).unwrap()).unwrap();
        assert_eq!(b, BoundingBox::new(4, 3, 4, 3).unwrap());

        let full = RleMask::from_counts(5, 7, vec![0, 35]).unwrap();
        assert_eq!(
            mask_bbox(&full).unwrap(),
            BoundingBox::new(0, 0, 6, 4).unwrap()
        );

        let l_shape = grid(&[
            "........", "..#.....", "..#.....", "..#.....", "..#####.", "........",
        ]);
        let b = mask_bbox(&rle_encode(&l_shape).unwrap()).unwrap();
        assert_eq!(b, BoundingBox::new(2, 1, 6, 4).unwrap());

        assert!(matches!(
            mask_bbox(&RleMask::empty(2, 2).unwrap()),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn bbox_of_span_wrapping_rows() {
        // one run from (0,3) through (2,1) on a 4-wide frame
        let m = RleMask::from_counts(3, 4, vec![3, 7, 2]).unwrap();
        assert_eq!(m.bbox().unwrap(), BoundingBox::new(0, 0, 3, 2).unwrap());
    }

    #[test]
    fn news_examples() {
        let mut g = Bitmap::new(5, 5);
        g.set(2, 3, true);
        let n = extract_news(&rle_encode(&g).unwrap()).unwrap();
        let p = Pixel::new(2, 3);
        assert_eq!((n.north, n.east, n.west, n.south), (p, p, p, p));

        let sq = grid(&[".....", ".###.", ".###.", ".###.", "....."]);
        let n = extract_news(&rle_encode(&sq).unwrap()).unwrap();
        assert_eq!(n.north, Pixel::new(1, 1));
        assert_eq!(n.south, Pixel::new(3, 1));
        assert_eq!(n.west, Pixel::new(1, 1));
        assert_eq!(n.east, Pixel::new(1, 3));
    }

    #[test]
    fn news_tie_breaks_on_irregular_shape() {
        let g = grid(&[
            "...#..#.", //
            "..####..", ".#...###", "....##..",
        ]);
        let n = rle_encode(&g).unwrap().news().unwrap();
        assert_eq!(n.north, Pixel::new(0, 3));
        assert_eq!(n.south, Pixel::new(3, 4));
        assert_eq!(n.west, Pixel::new(2, 1));
        assert_eq!(n.east, Pixel::new(2, 7));
    }

    #[test]
    fn difference_removes_overlap() {
        let a = rle_encode(&grid(&["####", "####"])).unwrap();
        let b = rle_encode(&grid(&[".##.", "#..#"])).unwrap();
        let d = a.difference(&b).unwrap();
        assert_eq!(d.decode(), grid(&["#..#", ".##."]));
    }

    #[test]
    fn from_spans_merges_adjacent() {
        let m = RleMask::from_spans(1, 6, &[(1, 2), (2, 4)]);
        assert_eq!(m.counts(), &[1, 3, 2]);
        let m = RleMask::from_spans(1, 6, &[]);
        assert_eq!(m.counts(), &[6]);
        let m = RleMask::from_spans(1, 6, &[(0, 6)]);
        assert_eq!(m.counts(), &[0, 6]);
    }
}
