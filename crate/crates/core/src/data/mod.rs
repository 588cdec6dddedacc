//! Component registry, segments, windowing, body graph and datasets.

mod dataset;
mod graph;
mod keypoints;
mod registry;
mod synthetic;
mod windows;

pub use dataset::{
    load_dataset, read_segment_csv, split_by_segment, write_dataset, write_segment_csv, Dataset,
    Manifest, SegmentEntry, MANIFEST_VERSION,
};
pub use graph::{build_normalized_adjacency, BodyGraph, BODY_EDGES, BODY_VERTICES};
pub use keypoints::{
    normalize_keypoints, normalize_segment_joints, push_with_mid_shoulder, KeypointNorm, KEYPOINTS,
    KEYPOINT_CHANNELS,
};
pub use registry::{
    imu_components, joint_components, ComponentSpec, Modality, Registry, IMU_NAMES, JOINT_NAMES,
    MFCC_NAME, MFCC_WIDTH,
};
pub use synthetic::{synthesize, SyntheticSpec, DEFAULT_CLASSES};
pub use windows::{
    slide_windows, window_all, window_count, window_starts, Segment, Window, WindowSpec,
};
