//! Pose keypoint scaling and mid-shoulder synthesis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

use super::graph::BODY_VERTICES;
use super::registry::{Modality, Registry};
use super::windows::Segment;

/// Number of pose keypoints delivered per frame.
pub const KEYPOINTS: usize = 13;
/// Channels per keypoint: x, y, visibility.
pub const KEYPOINT_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeypointNorm {
    /// x and y mapped into [0, 1] by the segment-wide bounding box of all keypoints.
    #[default]
    FrameBbox,
    /// x and y standardized by the segment-wide mean and deviation over all keypoints.
    SegmentZscore,
}

/// Scale the x/y channels of a `[T, 13, 3]` block and prepend the synthesized
/// mid-shoulder vertex, giving `[T, 14, 3]`. Visibility is left untouched.
pub fn normalize_keypoints(block: &Tensor, mode: KeypointNorm, segment: &str) -> Result<Tensor> {
    if block.shape().len() != 3 || block.shape()[1..] != [KEYPOINTS, KEYPOINT_CHANNELS] {
        return Err(Error::shape(
            "normalize_keypoints",
            block.shape(),
            &[KEYPOINTS, KEYPOINT_CHANNELS],
        ));
    }
    let frames = block.shape()[0];
    let mut scaled = block.data().to_vec();
    scale_xy(&mut scaled, KEYPOINTS * KEYPOINT_CHANNELS, 0, mode, segment)?;
    let mut out = Vec::with_capacity(frames * BODY_VERTICES * KEYPOINT_CHANNELS);
    for frame in scaled.chunks_exact(KEYPOINTS * KEYPOINT_CHANNELS) {
        push_with_mid_shoulder(frame, &mut out);
    }
    Tensor::new(vec![frames, BODY_VERTICES, KEYPOINT_CHANNELS], out)
}

/// Append vertex 0 (midpoint of left and right shoulder, all three channels)
/// followed by the 13 keypoints of `frame`.
pub fn push_with_mid_shoulder(frame: &[f64], out: &mut Vec<f64>) {
    debug_assert_eq!(frame.len(), KEYPOINTS * KEYPOINT_CHANNELS);
    // left/right shoulder are keypoints 2 and 3, stored at positions 1 and 2
    let left = &frame[KEYPOINT_CHANNELS..2 * KEYPOINT_CHANNELS];
    let right = &frame[2 * KEYPOINT_CHANNELS..3 * KEYPOINT_CHANNELS];
    out.extend(left.iter().zip(right).map(|(l, r)| 0.5 * (l + r)));
    out.extend_from_slice(frame);
}

/// Copy of `segment` with its joint x/y columns rescaled.
///
/// The registry's joint components must be exactly the 13 keypoints.
pub fn normalize_segment_joints(
    segment: &Segment,
    registry: &Registry,
    mode: KeypointNorm,
) -> Result<Segment> {
    let joints = registry.indices_of(Modality::Joints);
    if joints.is_empty() {
        return Ok(segment.clone());
    }
    let contiguous = joints.windows(2).all(|w| w[1] == w[0] + 1);
    if !contiguous
        || joints
            .iter()
            .any(|&j| registry.components()[j].width != KEYPOINT_CHANNELS)
    {
        return Err(Error::Registry(
            "joint components must be contiguous (x, y, visibility) triplets".into(),
        ));
    }
    let offset = registry.offset(joints[0]);
    let row = registry.total_width();
    let mut frames = segment.frames.clone();
    scale_xy_strided(
        frames.data_mut(),
        row,
        offset,
        joints.len(),
        mode,
        &segment.id,
    )?;
    Ok(Segment {
        frames,
        ..segment.clone()
    })
}

fn scale_xy(
    data: &mut [f64],
    row: usize,
    offset: usize,
    mode: KeypointNorm,
    segment: &str,
) -> Result<()> {
    scale_xy_strided(data, row, offset, KEYPOINTS, mode, segment)
}

fn scale_xy_strided(
    data: &mut [f64],
    row: usize,
    offset: usize,
    joints: usize,
    mode: KeypointNorm,
    segment: &str,
) -> Result<()> {
    let frames = data.len() / row;
    let positions = |axis: usize| {
        (0..frames).flat_map(move |t| {
            (0..joints).map(move |j| t * row + offset + j * KEYPOINT_CHANNELS + axis)
        })
    };
    for axis in 0..2 {
        let (shift, scale) = match mode {
            KeypointNorm::FrameBbox => {
                let (lo, hi) = positions(axis)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                        (lo.min(data[i]), hi.max(data[i]))
                    });
                (lo, hi - lo)
            }
            KeypointNorm::SegmentZscore => {
                let n = positions(axis).count() as f64;
                let mean = positions(axis).map(|i| data[i]).sum::<f64>() / n;
                let var = positions(axis)
                    .map(|i| (data[i] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                (mean, var.sqrt())
            }
        };
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::DegenerateBbox {
                segment: segment.to_string(),
            });
        }
        for i in positions(axis).collect::<Vec<_>>() {
            data[i] = (data[i] - shift) / scale;
        }
    }
    Ok(())
}
