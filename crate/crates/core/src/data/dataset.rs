//! Manifest and per-segment CSV files on disk.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

use super::registry::{ComponentSpec, Registry};
use super::windows::Segment;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    /// Path relative to the manifest's directory.
    pub file: String,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub fps: f64,
    pub classes: Vec<String>,
    pub components: Vec<ComponentSpec>,
    pub segments: Vec<SegmentEntry>,
}

impl Manifest {
    pub fn registry(&self) -> Result<Registry> {
        Registry::new(self.components.clone())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        if manifest.classes.len() < 2 {
            return Err(Error::Manifest("at least two classes are required".into()));
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Everything loaded from a manifest: registry, class names and validated segments.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub registry: Registry,
    pub classes: Vec<String>,
    pub fps: f64,
    pub segments: Vec<Segment>,
}

fn segment_id(file: &str) -> String {
    Path::new(file)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file.to_string())
}

/// Load and validate every segment listed in the manifest, sorted by segment id.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::read(manifest_path)?;
    let registry = manifest.registry()?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut segments = Vec::with_capacity(manifest.segments.len());
    for entry in &manifest.segments {
        let id = segment_id(&entry.file);
        if entry.label >= manifest.classes.len() {
            return Err(Error::UnknownLabel {
                segment: id,
                label: entry.label,
                classes: manifest.classes.len(),
            });
        }
        let path = root.join(&entry.file);
        if !path.is_file() {
            return Err(Error::MissingFile { segment: id, path });
        }
        let frames = read_segment_csv(&path, &registry, &id)?;
        segments.push(Segment::new(
            id,
            entry.label,
            manifest.fps,
            frames,
            &registry,
        )?);
    }
    segments.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Dataset {
        registry,
        classes: manifest.classes,
        fps: manifest.fps,
        segments,
    })
}

/// Parse a segment CSV into `[frames, total_width]`.
pub fn read_segment_csv(path: &Path, registry: &Registry, id: &str) -> Result<Tensor> {
    let width = registry.total_width();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header_len = reader.headers()?.len();
    if header_len != width {
        return Err(Error::WidthMismatch {
            segment: id.to_string(),
            expected: width,
            found: header_len,
        });
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        if record.len() != width {
            return Err(Error::WidthMismatch {
                segment: id.to_string(),
                expected: width,
                found: record.len(),
            });
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| Error::SegmentFormat {
                path: path.to_path_buf(),
                reason: format!("row {}: {field:?} is not a number", rows + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::SegmentFormat {
                    path: path.to_path_buf(),
                    reason: format!("row {}: non-finite value", rows + 1),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::SegmentFormat {
            path: path.to_path_buf(),
            reason: "no frames".into(),
        });
    }
    Tensor::new(vec![rows, width], data)
}

/// Header of channel names, then one row per frame in shortest round-trip decimal.
pub fn write_segment_csv(path: &Path, registry: &Registry, frames: &Tensor) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    writer.write_record(registry.column_names())?;
    for r in 0..frames.rows() {
        writer.write_record(frames.row_slice(r).iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Write a manifest plus one CSV per segment into `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(dataset.segments.len());
    for seg in &dataset.segments {
        let file = format!("{}.csv", seg.id);
        write_segment_csv(&dir.join(&file), &dataset.registry, &seg.frames)?;
        entries.push(SegmentEntry {
            file,
            label: seg.label,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        fps: dataset.fps,
        classes: dataset.classes.clone(),
        components: dataset.registry.components().to_vec(),
        segments: entries,
    };
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

/// Seeded split of whole segments into `(train, test)`.
///
/// The test side gets `round(n · test_fraction)` segments, at least one and
/// at most `n − 1`; both sides keep the input order.
pub fn split_by_segment<T: Clone>(
    segments: &[T],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::SplitFraction(test_fraction));
    }
    let n = segments.len();
    if n < 2 {
        return Err(Error::TooFewSegments(n));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n - n_test), Vec::with_capacity(n_test));
    for (seg, test_side) in segments.iter().zip(is_test) {
        if test_side {
            test.push(seg.clone());
        } else {
            train.push(seg.clone());
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::registry::Modality;

    #[test]
    fn split_152_segments_into_130_and_22() {
        let ids: Vec<usize> = (0..152).collect();
        let (train, test) = split_by_segment(&ids, 22.0 / 152.0, 7).unwrap();
        assert_eq!((train.len(), test.len()), (130, 22));
        let again = split_by_segment(&ids, 22.0 / 152.0, 7).unwrap();
        assert_eq!(again, (train.clone(), test.clone()));
        let mut all: Vec<_> = train.into_iter().chain(test).collect();
        all.sort();
        assert_eq!(all, ids);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_by_segment(&[1], 0.5, 0),
            Err(Error::TooFewSegments(1))
        ));
        assert!(matches!(
            split_by_segment(&[1, 2], 0.0, 0),
            Err(Error::SplitFraction(_))
        ));
        assert!(matches!(
            split_by_segment(&[1, 2], 1.0, 0),
            Err(Error::SplitFraction(_))
        ));
    }

    fn tiny_registry() -> Registry {
        Registry::new(vec![
            ComponentSpec::new("a", 2, Modality::Imu),
            ComponentSpec::new("b", 1, Modality::Other),
        ])
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let registry = tiny_registry();
        let frames = Tensor::from_rows(&[[0.1, 1.0 / 3.0, -2.5e-7], [1e10, -0.0, 42.0]]).unwrap();
        let path = dir.path().join("s.csv");
        write_segment_csv(&path, &registry, &frames).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("a.0,a.1,b.0\n"));
        assert!(!text.contains('\r'));
        let back = read_segment_csv(&path, &registry, "s").unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn empty_manifest_is_an_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            fps: 50.0,
            classes: vec!["lightness".into(), "fragility".into()],
            components: tiny_registry().components().to_vec(),
            segments: vec![],
        };
        let path = dir.path().join("manifest.json");
        manifest.write(&path).unwrap();
        let ds = load_dataset(&path).unwrap();
        assert!(ds.segments.is_empty());
        assert_eq!(ds.registry.total_width(), 3);
    }

    #[test]
    fn load_reports_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let registry = tiny_registry();
        let frames = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        let narrow = Registry::new(vec![ComponentSpec::new("a", 2, Modality::Imu)]).unwrap();
        write_segment_csv(&dir.path().join("narrow.csv"), &narrow, &frames).unwrap();
        let good = Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        write_segment_csv(&dir.path().join("good.csv"), &registry, &good).unwrap();

        let load_with = |file: &str, label: usize| {
            let manifest = Manifest {
                version: MANIFEST_VERSION,
                fps: 50.0,
                classes: vec!["x".into(), "y".into()],
                components: registry.components().to_vec(),
                segments: vec![SegmentEntry {
                    file: file.into(),
                    label,
                }],
            };
            let path = dir.path().join("manifest.json");
            manifest.write(&path).unwrap();
            load_dataset(&path)
        };
        assert!(matches!(
            load_with("narrow.csv", 0),
            Err(Error::WidthMismatch {
                expected: 3,
                found: 2,
                ..
            })
        ));
        assert!(matches!(
            load_with("good.csv", 2),
            Err(Error::UnknownLabel { .. })
        ));
        assert!(matches!(
            load_with("absent.csv", 0),
            Err(Error::MissingFile { .. })
        ));
        let ds = load_with("good.csv", 1).unwrap();
        assert_eq!(ds.segments[0].id, "good");
        assert_eq!(ds.segments[0].label, 1);
    }

    #[test]
    fn row_width_69_against_registry_70() {
        let dir = tempfile::tempdir().unwrap();
        let full = Registry::default_full();
        let mut comps = full.components().to_vec();
        comps.last_mut().unwrap().width = 12;
        let short = Registry::new(comps).unwrap();
        let path = dir.path().join("s.csv");
        write_segment_csv(&path, &short, &Tensor::zeros(&[2, 69])).unwrap();
        assert!(matches!(
            read_segment_csv(&path, &full, "s"),
            Err(Error::WidthMismatch {
                expected: 70,
                found: 69,
                ..
            })
        ));
    }
}
