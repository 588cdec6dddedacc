//! Captured attention scores and their CSV and PPM heat-map exports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::Tensor;

/// Temporal scores (`[T, C]`, one column per component) and the component
/// map `B` (`[K, C]`) from one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub components: Vec<String>,
    pub temporal: Tensor,
    pub component: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    Csv,
    Ppm,
}

impl AttentionRecord {
    /// Largest deviation from 1 over temporal column sums.
    pub fn temporal_sum_error(&self) -> f64 {
        let (t, c) = (self.temporal.rows(), self.temporal.cols());
        (0..c)
            .map(|j| ((0..t).map(|i| self.temporal.get(i, j)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation from 1 over component-map row sums.
    pub fn component_sum_error(&self) -> f64 {
        (0..self.component.rows())
            .map(|i| (self.component.row_slice(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn temporal_csv(&self) -> String {
        matrix_csv("frame", &self.components, &self.temporal)
    }

    pub fn component_csv(&self) -> String {
        matrix_csv("unit", &self.components, &self.component)
    }

    /// Write `{stem}_temporal.{ext}` and `{stem}_component.{ext}` into `dir`.
    pub fn export(&self, dir: &Path, stem: &str, format: ExportFormat) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(2);
        for (kind, matrix) in [("temporal", &self.temporal), ("component", &self.component)] {
            let path = match format {
                ExportFormat::Csv => {
                    let path = dir.join(format!("{stem}_{kind}.csv"));
                    let text = if kind == "temporal" {
                        self.temporal_csv()
                    } else {
                        self.component_csv()
                    };
                    fs::write(&path, text)?;
                    path
                }
                ExportFormat::Ppm => {
                    let path = dir.join(format!("{stem}_{kind}.ppm"));
                    fs::write(&path, heat_map_ppm(matrix))?;
                    path
                }
            };
            written.push(path);
        }
        Ok(written)
    }
}

fn matrix_csv(index_name: &str, names: &[String], m: &Tensor) -> String {
    let mut out = String::new();
    out.push_str(index_name);
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for r in 0..m.rows() {
        write!(out, "{r}").unwrap();
        for v in m.row_slice(r) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Binary (`P6`) grey-level image, one pixel per cell, width = columns.
/// The largest cell maps to 255.
pub fn heat_map_ppm(m: &Tensor) -> Vec<u8> {
    let (h, w) = (m.rows(), m.cols());
    let max = m.data().iter().cloned().fold(0.0, f64::max);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for &v in m.data() {
        let grey = if max > 0.0 {
            (v.max(0.0) / max * 255.0).round() as u8
        } else {
            0
        };
        out.extend([grey; 3]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform() -> AttentionRecord {
        AttentionRecord {
            components: vec!["a".into(), "b".into()],
            temporal: Tensor::filled(&[2, 2], 0.5),
            component: Tensor::filled(&[3, 2], 0.5),
        }
    }

    #[test]
    fn csv_layout() {
        let rec = uniform();
        let csv = rec.temporal_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines, ["frame,a,b", "0,0.5,0.5", "1,0.5,0.5"]);
        assert!(lines.iter().all(|l| l.split(',').count() == 3));
        assert_eq!(rec.component_csv().lines().count(), 4);
        assert_eq!(rec.temporal_sum_error(), 0.0);
        assert_eq!(rec.component_sum_error(), 0.0);
    }

    #[test]
    fn ppm_dimensions_and_scaling() {
        let m = Tensor::from_rows(&[[0.25, 0.75], [0.5, 0.5], [0.0, 0.0]]).unwrap();
        let bytes = heat_map_ppm(&m);
        let header = b"P6\n2 3\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(
            &bytes[header.len()..],
            &[85, 85, 85, 255, 255, 255, 170, 170, 170, 170, 170, 170, 0, 0, 0, 0, 0, 0]
        );
    }

    #[test]
    fn export_writes_both_maps() {
        let dir = tempfile::tempdir().unwrap();
        let files = uniform()
            .export(dir.path(), "w0", ExportFormat::Ppm)
            .unwrap();
        assert_eq!(files.len(), 2);
        assert!(files[0].ends_with("w0_temporal.ppm"));
        let component = fs::read(&files[1]).unwrap();
        assert!(component.starts_with(b"P6\n2 3\n255\n"));
    }
}
