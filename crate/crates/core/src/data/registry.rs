use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Joints,
    Imu,
    AudioFeatures,
    Other,
}

/// One frame-aligned input stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    pub width: usize,
    pub modality: Modality,
}

impl ComponentSpec {
    pub fn new(name: impl Into<String>, width: usize, modality: Modality) -> Self {
        ComponentSpec {
            name: name.into(),
            width,
            modality,
        }
    }
}

/// Keypoints 1..=13 of the body graph, in graph order.
pub const JOINT_NAMES: [&str; 13] = [
    "nose",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub const IMU_NAMES: [&str; 6] = [
    "left_accelerometer",
    "right_accelerometer",
    "left_gyroscope",
    "right_gyroscope",
    "left_magnetometer",
    "right_magnetometer",
];

pub const MFCC_NAME: &str = "mfcc";
pub const MFCC_WIDTH: usize = 13;

/// Ordered component list; row layout of every segment follows this order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ComponentSpec>", into = "Vec<ComponentSpec>")]
pub struct Registry {
    components: Vec<ComponentSpec>,
    offsets: Vec<usize>,
}

impl Registry {
    pub fn new(components: Vec<ComponentSpec>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(components.len());
        let mut offset = 0;
        for (i, c) in components.iter().enumerate() {
            if c.width == 0 {
                return Err(Error::Registry(format!(
                    "component {} has zero width",
                    c.name
                )));
            }
            if c.name.is_empty() || c.name.contains([',', '"', '\n', '\r']) {
                return Err(Error::Registry(format!(
                    "invalid component name {:?}",
                    c.name
                )));
            }
            if components[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Registry(format!(
                    "duplicate component name {}",
                    c.name
                )));
            }
            offsets.push(offset);
            offset += c.width;
        }
        Ok(Registry {
            components,
            offsets,
        })
    }

    /// 13 joints (x, y, visibility), 6 IMU triplets and one 13-wide MFCC vector.
    pub fn default_full() -> Self {
        let mut components = joint_components();
        components.extend(imu_components());
        components.push(ComponentSpec::new(
            MFCC_NAME,
            MFCC_WIDTH,
            Modality::AudioFeatures,
        ));
        Registry::new(components).expect("static registry is valid")
    }

    pub fn components(&self) -> &[ComponentSpec] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.components.iter().map(|c| c.name.clone()).collect()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.width).collect()
    }

    pub fn total_width(&self) -> usize {
        self.components.iter().map(|c| c.width).sum()
    }

    /// First column of component `index` within a segment row.
    pub fn offset(&self, index: usize) -> usize {
        self.offsets[index]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    pub fn indices_of(&self, modality: Modality) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.components[i].modality == modality)
            .collect()
    }

    /// Column headers: `name.channel` for every channel, in row order.
    pub fn column_names(&self) -> Vec<String> {
        self.components
            .iter()
            .flat_map(|c| (0..c.width).map(move |i| format!("{}.{i}", c.name)))
            .collect()
    }

    /// Keep only the listed components, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Registry> {
        let picked = names
            .iter()
            .map(|n| {
                self.position(n)
                    .map(|i| self.components[i].clone())
                    .ok_or_else(|| Error::Registry(format!("unknown component {n}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Registry::new(picked)
    }
}

impl TryFrom<Vec<ComponentSpec>> for Registry {
    type Error = Error;

    fn try_from(components: Vec<ComponentSpec>) -> Result<Self> {
        Registry::new(components)
    }
}

impl From<Registry> for Vec<ComponentSpec> {
    fn from(r: Registry) -> Self {
        r.components
    }
}

pub fn joint_components() -> Vec<ComponentSpec> {
    JOINT_NAMES
        .iter()
        .map(|n| ComponentSpec::new(*n, 3, Modality::Joints))
        .collect()
}

pub fn imu_components() -> Vec<ComponentSpec> {
    IMU_NAMES
        .iter()
        .map(|n| ComponentSpec::new(*n, 3, Modality::Imu))
        .collect()
}
