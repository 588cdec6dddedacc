//! Sliding-window instancing of recorded segments.

use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

use super::registry::Registry;

/// One recorded take: `frames` is `[T_seg, total_width]` in registry order.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub id: String,
    pub label: usize,
    pub fps: f64,
    pub frames: Tensor,
}

impl Segment {
    pub fn new(
        id: impl Into<String>,
        label: usize,
        fps: f64,
        frames: Tensor,
        registry: &Registry,
    ) -> Result<Self> {
        let id = id.into();
        if !(fps > 0.0) {
            return Err(Error::Windowing(format!(
                "segment {id}: fps must be positive"
            )));
        }
        let (_, width) = frames.require_matrix("segment")?;
        if width != registry.total_width() {
            return Err(Error::WidthMismatch {
                segment: id,
                expected: registry.total_width(),
                found: width,
            });
        }
        Ok(Segment {
            id,
            label,
            fps,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A fixed-length, frame-aligned view into a segment.
#[derive(Clone, Debug)]
pub struct Window {
    segment: Arc<Segment>,
    start: usize,
    len: usize,
}

impl Window {
    pub fn new(segment: Arc<Segment>, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > segment.len() {
            return Err(Error::Windowing(format!(
                "window {start}+{len} exceeds segment {} of {} frames",
                segment.id,
                segment.len()
            )));
        }
        Ok(Window {
            segment,
            start,
            len,
        })
    }

    /// The whole segment as a single window.
    pub fn whole(segment: Arc<Segment>) -> Self {
        let len = segment.len();
        Window {
            segment,
            start: 0,
            len,
        }
    }

    pub fn segment_id(&self) -> &str {
        &self.segment.id
    }

    pub fn segment(&self) -> &Arc<Segment> {
        &self.segment
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn frames(&self) -> usize {
        self.len
    }

    pub fn label(&self) -> usize {
        self.segment.label
    }

    /// Copy of this window holding only the components of `to`, found by name in `from`.
    pub fn project(&self, from: &Registry, to: &Registry) -> Result<Window> {
        if from == to {
            return Ok(self.clone());
        }
        let mut sources = Vec::with_capacity(to.len());
        for spec in to.components() {
            let index = from.position(&spec.name).ok_or_else(|| {
                Error::Registry(format!(
                    "component {} ({:?}) is not in the data",
                    spec.name, spec.modality
                ))
            })?;
            let found = from.components()[index].width;
            if found != spec.width {
                return Err(Error::Registry(format!(
                    "component {} has width {found} in the data, {} expected",
                    spec.name, spec.width
                )));
            }
            sources.push((from.offset(index), spec.width));
        }
        let mut data = Vec::with_capacity(self.len * to.total_width());
        for t in self.start..self.start + self.len {
            let row = self.segment.frames.row_slice(t);
            for &(offset, width) in &sources {
                data.extend_from_slice(&row[offset..offset + width]);
            }
        }
        let frames = Tensor::new(vec![self.len, to.total_width()], data)?;
        let segment = Segment::new(
            self.segment.id.clone(),
            self.segment.label,
            self.segment.fps,
            frames,
            to,
        )?;
        Ok(Window::whole(Arc::new(segment)))
    }

    /// `[T, width]` block of component `index`.
    pub fn block(&self, registry: &Registry, index: usize) -> Tensor {
        let offset = registry.offset(index);
        let width = registry.components()[index].width;
        self.columns(offset, width)
    }

    /// `[T, width]` copy of columns `offset..offset + width`.
    pub fn columns(&self, offset: usize, width: usize) -> Tensor {
        let mut data = Vec::with_capacity(self.len * width);
        for t in self.start..self.start + self.len {
            data.extend_from_slice(&self.segment.frames.row_slice(t)[offset..offset + width]);
        }
        Tensor::new(vec![self.len, width], data).expect("window block is non-empty")
    }

    pub fn blocks(&self, registry: &Registry) -> Vec<Tensor> {
        (0..registry.len())
            .map(|c| self.block(registry, c))
            .collect()
    }
}

/// Window length and overlap; stride is derived.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub seconds: f64,
    pub overlap: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            seconds: 3.0,
            overlap: 0.8,
        }
    }
}

impl WindowSpec {
    /// Frames per window; `fps · seconds` must be integral.
    pub fn length(&self, fps: f64) -> Result<usize> {
        let exact = fps * self.seconds;
        let rounded = exact.round();
        if !(exact > 0.0) || (exact - rounded).abs() > 1e-9 * exact.max(1.0) {
            return Err(Error::Windowing(format!(
                "{fps} fps × {} s = {exact} frames is not a positive integer",
                self.seconds
            )));
        }
        Ok(rounded as usize)
    }

    /// `round(W · (1 − overlap))`, ties to even.
    pub fn stride(&self, fps: f64) -> Result<usize> {
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Windowing(format!(
                "overlap {} outside [0, 1)",
                self.overlap
            )));
        }
        let w = self.length(fps)?;
        let stride = (w as f64 * (1.0 - self.overlap)).round_ties_even() as usize;
        if stride == 0 {
            return Err(Error::Windowing(format!(
                "overlap {} leaves a zero stride for {w}-frame windows",
                self.overlap
            )));
        }
        Ok(stride)
    }
}

/// `floor((T − W) / stride) + 1` for `T ≥ W`, else 0.
pub fn window_count(total: usize, length: usize, stride: usize) -> usize {
    if total < length {
        0
    } else {
        (total - length) / stride + 1
    }
}

pub fn window_starts(total: usize, length: usize, stride: usize) -> Vec<usize> {
    (0..window_count(total, length, stride))
        .map(|i| i * stride)
        .collect()
}

/// Cut a segment into overlapping windows; trailing partial windows are dropped
/// and under-length segments yield nothing.
pub fn slide_windows(segment: &Arc<Segment>, spec: &WindowSpec) -> Result<Vec<Window>> {
    let length = spec.length(segment.fps)?;
    let stride = spec.stride(segment.fps)?;
    if segment.len() < length {
        warn!(
            "segment {} has {} frames, shorter than one {length}-frame window; skipped",
            segment.id,
            segment.len()
        );
        return Ok(Vec::new());
    }
    Ok(window_starts(segment.len(), length, stride)
        .into_iter()
        .map(|start| Window {
            segment: Arc::clone(segment),
            start,
            len: length,
        })
        .collect())
}

/// Window every segment, preserving segment order.
pub fn window_all(segments: &[Arc<Segment>], spec: &WindowSpec) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for s in segments {
        out.extend(slide_windows(s, spec)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::registry::{ComponentSpec, Modality};

    fn segment(frames: usize) -> Arc<Segment> {
        let registry = Registry::new(vec![ComponentSpec::new("a", 2, Modality::Other)]).unwrap();
        let data = (0..frames * 2).map(|v| v as f64).collect();
        let frames = Tensor::new(vec![frames, 2], data).unwrap();
        Arc::new(Segment::new("s", 1, 50.0, frames, &registry).unwrap())
    }

    #[test]
    fn default_stride_is_thirty() {
        let spec = WindowSpec::default();
        assert_eq!(spec.length(50.0).unwrap(), 150);
        assert_eq!(spec.stride(50.0).unwrap(), 30);
    }

    #[test]
    fn counts() {
        let spec = WindowSpec::default();
        assert_eq!(slide_windows(&segment(150), &spec).unwrap().len(), 1);
        assert_eq!(slide_windows(&segment(515), &spec).unwrap().len(), 13);
        assert_eq!(slide_windows(&segment(149), &spec).unwrap().len(), 0);
    }

    #[test]
    fn starts_and_blocks() {
        let spec = WindowSpec::default();
        let windows = slide_windows(&segment(215), &spec).unwrap();
        let starts: Vec<_> = windows.iter().map(Window::start).collect();
        assert_eq!(starts, vec![0, 30, 60]);
        let registry = Registry::new(vec![ComponentSpec::new("a", 2, Modality::Other)]).unwrap();
        let block = windows[1].block(&registry, 0);
        assert_eq!(block.shape(), &[150, 2]);
        assert_eq!(block.get(0, 0), 60.0);
        assert_eq!(windows[1].label(), 1);
    }

    #[test]
    fn non_integral_length_is_rejected() {
        let spec = WindowSpec {
            seconds: 3.01,
            overlap: 0.8,
        };
        assert!(spec.length(50.0).is_err());
        assert!(slide_windows(&segment(400), &spec).is_err());
        let bad_overlap = WindowSpec {
            seconds: 3.0,
            overlap: 1.0,
        };
        assert!(bad_overlap.stride(50.0).is_err());
    }

    #[test]
    fn stride_ties_round_to_even() {
        // 5 frames × 0.5 = 2.5 → 2
        let spec = WindowSpec {
            seconds: 0.1,
            overlap: 0.5,
        };
        assert_eq!(spec.stride(50.0).unwrap(), 2);
    }

    #[test]
    fn projection_selects_and_reorders_by_name() {
        let from = Registry::new(vec![
            ComponentSpec::new("a", 1, Modality::Other),
            ComponentSpec::new("b", 2, Modality::Imu),
        ])
        .unwrap();
        let frames =
            Tensor::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]).unwrap();
        let seg = Arc::new(Segment::new("s", 0, 50.0, frames, &from).unwrap());
        let window = Window::new(seg, 1, 2).unwrap();
        let to = Registry::new(vec![
            ComponentSpec::new("b", 2, Modality::Imu),
            ComponentSpec::new("a", 1, Modality::Other),
        ])
        .unwrap();
        let p = window.project(&from, &to).unwrap();
        assert_eq!(p.segment().frames.data(), &[5.0, 6.0, 4.0, 8.0, 9.0, 7.0]);
        assert_eq!((p.segment_id(), p.label(), p.frames()), ("s", 0, 2));

        let missing = Registry::new(vec![ComponentSpec::new("c", 1, Modality::Joints)]).unwrap();
        let err = window.project(&from, &missing).unwrap_err().to_string();
        assert!(err.contains('c') && err.contains("Joints"), "{err}");
    }
}
