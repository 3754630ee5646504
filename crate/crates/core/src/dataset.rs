//! In-memory dataset and its JSON schema.
//!
//! ```json
//! {"frames": [{"id": 0, "height": 4, "width": 6, "instances": [{
//!     "id": 0,
//!     "gt": {"polygons": [[1, 1, 4, 1, 4, 3, 1, 3]]},
//!     "approx": {"rle": {"size": [4, 6], "counts": [7, 3, 3, 3, 8]}},
//!     "predicted": [],
//!     "bbox": [1, 1, 3, 2],
//!     "news": {"north": [1, 1], "east": [1, 3], "west": [1, 1], "south": [2, 1]}
//! }]}]}
//! ```
//!
//! Masks are either RLE (`size` is `[height, width]`, counts start with a
//! background run) or flat polygon vertex lists that get rasterized on load.
//! `approx`, `predicted`, `bbox` and `news` are optional; missing boxes and
//! keypoints are derived from the ground-truth mask.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    rasterize_polygons, BoundingBox, NewsKeypoints, Pixel, Polygon, PolygonSet, RleMask,
};

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub id: u64,
    pub gt: RleMask,
    /// Mask derived automatically from the extreme points.
    pub approx: Option<RleMask>,
    /// Masks a preliminary model predicted on this instance's frame.
    pub predicted: Option<Vec<RleMask>>,
    pub bbox: BoundingBox,
    pub news: NewsKeypoints,
}

impl InstanceRecord {
    /// Record with box and keypoints derived from a non-empty ground-truth mask.
    pub fn from_gt(id: u64, gt: RleMask) -> Result<Self> {
        let news = gt.news()?;
        Ok(InstanceRecord {
            id,
            bbox: news.bbox(),
            news,
            gt,
            approx: None,
            predicted: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: u64,
    pub height: u32,
    pub width: u32,
    pub instances: Vec<InstanceRecord>,
}

impl Frame {
    /// All masks predicted on this frame, or `None` when the frame carries no
    /// prediction field at all.
    pub fn predicted_masks(&self) -> Option<Vec<&RleMask>> {
        if self.instances.iter().all(|i| i.predicted.is_none()) {
            return None;
        }
        Some(
            self.instances
                .iter()
                .filter_map(|i| i.predicted.as_ref())
                .flatten()
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub frames: Vec<Frame>,
}

impl Dataset {
    pub fn instance_count(&self) -> usize {
        self.frames.iter().map(|f| f.instances.len()).sum()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let wire: WireDataset =
            serde_path_to_error::deserialize(&mut de).map_err(|e| schema_error(text, e))?;
        de.end()?;
        wire.into_dataset()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&WireDataset::from_dataset(self)).expect("dataset serializes")
    }

    /// Checks the invariants a hand-built dataset must satisfy.
    pub fn validate(&self) -> Result<()> {
        let mut frame_ids = HashSet::new();
        for f in &self.frames {
            let loc = format!("frame {}", f.id);
            if !frame_ids.insert(f.id) {
                return Err(Error::validation(loc, "id", "duplicate frame id"));
            }
            if f.height == 0 || f.width == 0 {
                return Err(Error::validation(
                    loc,
                    "height/width",
                    "frame must be non-empty",
                ));
            }
            let dims = (f.height, f.width);
            let mut ids = HashSet::new();
            for inst in &f.instances {
                let loc = format!("frame {} instance {}", f.id, inst.id);
                if !ids.insert(inst.id) {
                    return Err(Error::validation(loc, "id", "duplicate instance id"));
                }
                let masks = std::iter::once(("gt", &inst.gt))
                    .chain(inst.approx.iter().map(|m| ("approx", m)))
                    .chain(inst.predicted.iter().flatten().map(|m| ("predicted", m)));
                for (field, m) in masks {
                    if m.dims() != dims {
                        return Err(Error::validation(
                            &loc,
                            field,
                            format!(
                                "mask size {:?} differs from frame size {:?}",
                                m.dims(),
                                dims
                            ),
                        ));
                    }
                }
                if inst.gt.is_empty() {
                    return Err(Error::validation(&loc, "gt", "empty ground-truth mask"));
                }
                if !inst.bbox.fits_in(f.height, f.width)
                    || inst.bbox.x_min > inst.bbox.x_max
                    || inst.bbox.y_min > inst.bbox.y_max
                {
                    return Err(Error::validation(
                        &loc,
                        "bbox",
                        "box invalid or outside frame",
                    ));
                }
                inst.news
                    .validate(f.height, f.width)
                    .map_err(|e| Error::validation(&loc, "news", e.to_string()))?;
                if inst.news.bbox() != inst.bbox {
                    return Err(Error::validation(
                        &loc,
                        "bbox",
                        "differs from the box spanned by news",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Turns a structural JSON error into one naming the frame and instance
/// (by id where the document has one) and the offending field path.
fn schema_error(text: &str, err: serde_path_to_error::Error<serde_json::Error>) -> Error {
    use serde_path_to_error::Segment;
    if err.inner().is_syntax() || err.inner().is_eof() {
        return err.into_inner().into();
    }
    let doc: serde_json::Value = serde_json::from_str(text).unwrap_or_default();
    let id_of = |v: Option<&serde_json::Value>, idx: usize| {
        v.and_then(|v| v.get("id"))
            .and_then(|id| id.as_u64())
            .map_or(format!("#{idx}"), |id| id.to_string())
    };
    let mut location = String::from("dataset");
    let mut field = Vec::new();
    let mut node = Some(&doc);
    let mut segments = err.path().iter().peekable();
    while let Some(seg) = segments.next() {
        match (seg, segments.peek()) {
            (Segment::Map { key }, Some(Segment::Seq { index }))
                if field.is_empty() && (key == "frames" || key == "instances") =>
            {
                node = node.and_then(|n| n.get(key)).and_then(|n| n.get(*index));
                let kind = if key == "frames" { "frame" } else { "instance" };
                let id = id_of(node, *index);
                location = if kind == "frame" {
                    format!("frame {id}")
                } else {
                    format!("{location} instance {id}")
                };
                segments.next();
            }
            (Segment::Map { key }, _) => field.push(key.clone()),
            (Segment::Seq { index }, _) => field.push(index.to_string()),
            _ => {}
        }
    }
    let field = if field.is_empty() {
        "-".to_string()
    } else {
        field.join(".")
    };
    Error::validation(location, field, err.into_inner().to_string())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDataset {
    frames: Vec<WireFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFrame {
    id: u64,
    height: u32,
    width: u32,
    instances: Vec<WireInstance>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireInstance {
    id: u64,
    gt: WireMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    approx: Option<WireMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predicted: Option<Vec<WireMask>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[u32; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    news: Option<WireNews>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
enum WireMask {
    #[serde(rename = "rle")]
    Rle(WireRle),
    #[serde(rename = "polygons")]
    Polygons(Vec<Vec<f64>>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRle {
    size: [u32; 2],
    counts: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireNews {
    north: [u32; 2],
    east: [u32; 2],
    west: [u32; 2],
    south: [u32; 2],
}

impl WireMask {
    fn from_mask(m: &RleMask) -> Self {
        WireMask::Rle(WireRle {
            size: [m.height(), m.width()],
            counts: m.counts().to_vec(),
        })
    }

    fn into_mask(self, height: u32, width: u32, loc: &str, field: &str) -> Result<RleMask> {
        let invalid = |reason: String| Error::validation(loc, field, reason);
        match self {
            WireMask::Rle(r) => {
                if r.size != [height, width] {
                    return Err(invalid(format!(
                        "size {:?} differs from frame size [{height}, {width}]",
                        r.size
                    )));
                }
                RleMask::from_counts(height, width, r.counts).map_err(|e| invalid(e.to_string()))
            }
            WireMask::Polygons(polys) => {
                let polys = polys
                    .iter()
                    .map(|p| Polygon::from_flat(p))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| invalid(e.to_string()))?;
                rasterize_polygons(&PolygonSet::new(polys), height, width)
                    .map_err(|e| invalid(e.to_string()))
            }
        }
    }
}

fn pixel(p: [u32; 2]) -> Pixel {
    Pixel::new(p[0], p[1])
}

impl WireDataset {
    fn into_dataset(self) -> Result<Dataset> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for wf in self.frames {
            let (h, w) = (wf.height, wf.width);
            if h == 0 || w == 0 {
                return Err(Error::validation(
                    format!("frame {}", wf.id),
                    "height/width",
                    "frame must be non-empty",
                ));
            }
            let mut instances = Vec::with_capacity(wf.instances.len());
            for wi in wf.instances {
                let loc = format!("frame {} instance {}", wf.id, wi.id);
                let gt = wi.gt.into_mask(h, w, &loc, "gt")?;
                if gt.is_empty() {
                    return Err(Error::validation(&loc, "gt", "empty ground-truth mask"));
                }
                let approx = wi
                    .approx
                    .map(|m| m.into_mask(h, w, &loc, "approx"))
                    .transpose()?;
                let predicted = wi
                    .predicted
                    .map(|ms| {
                        ms.into_iter()
                            .map(|m| m.into_mask(h, w, &loc, "predicted"))
                            .collect::<Result<Vec<_>>>()
                    })
                    .transpose()?;
                let news = match wi.news {
                    Some(n) => NewsKeypoints {
                        north: pixel(n.north),
                        east: pixel(n.east),
                        west: pixel(n.west),
                        south: pixel(n.south),
                    },
                    None => gt.news()?,
                };
                let bbox = match wi.bbox {
                    Some([x0, y0, x1, y1]) => BoundingBox::new(x0, y0, x1, y1)
                        .map_err(|e| Error::validation(&loc, "bbox", e.to_string()))?,
                    None => gt.bbox()?,
                };
                instances.push(InstanceRecord {
                    id: wi.id,
                    gt,
                    approx,
                    predicted,
                    bbox,
                    news,
                });
            }
            frames.push(Frame {
                id: wf.id,
                height: h,
                width: w,
                instances,
            });
        }
        let d = Dataset { frames };
        d.validate()?;
        Ok(d)
    }

    fn from_dataset(d: &Dataset) -> Self {
        WireDataset {
            frames: d
                .frames
                .iter()
                .map(|f| WireFrame {
                    id: f.id,
                    height: f.height,
                    width: f.width,
                    instances: f
                        .instances
                        .iter()
                        .map(|i| WireInstance {
                            id: i.id,
                            gt: WireMask::from_mask(&i.gt),
                            approx: i.approx.as_ref().map(WireMask::from_mask),
                            predicted: i
                                .predicted
                                .as_ref()
                                .map(|ms| ms.iter().map(WireMask::from_mask).collect()),
                            bbox: Some(i.bbox.to_array()),
                            news: Some(WireNews {
                                north: [i.news.north.row, i.news.north.col],
                                east: [i.news.east.row, i.news.east.col],
                                west: [i.news.west.row, i.news.west.col],
                                south: [i.news.south.row, i.news.south.col],
                            }),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}
