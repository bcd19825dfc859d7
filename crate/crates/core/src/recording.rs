//! Multichannel recordings and their on-disk format.
//!
//! A recording is stored as a pair of files sharing a stem: `<stem>.csv` holds
//! one comma-separated row of samples per channel (no header) and
//! `<stem>.json` holds the channel labels and sampling rate.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard 19-electrode 10-20 montage, in storage order.
pub const MONTAGE_1020: [&str; 19] = [
    "FP1", "FP2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2", "F7", "F8", "T3", "T4", "T5",
    "T6", "Fz", "Cz", "Pz",
];

/// Labels for a `c`-channel recording: the 10-20 montage when `c == 19`,
/// otherwise `E1..Ec`.
pub fn default_labels(c: usize) -> Vec<String> {
    if c == MONTAGE_1020.len() {
        MONTAGE_1020.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=c).map(|i| format!("E{i}")).collect()
    }
}

/// A channels x samples matrix of microvolt values.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub labels: Vec<String>,
    pub fs_hz: f64,
    pub data: Array2<f64>,
}

impl Recording {
    pub fn new(labels: Vec<String>, fs_hz: f64, data: Array2<f64>) -> Result<Self> {
        let rec = Recording {
            labels,
            fs_hz,
            data,
        };
        rec.validate()?;
        Ok(rec)
    }

    /// Same labels and sampling rate as `self`, new samples.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        Recording::new(self.labels.clone(), self.fs_hz, data)
    }

    pub fn validate(&self) -> Result<()> {
        let (c, n) = self.data.dim();
        if c == 0 {
            return Err(Error::InvalidRecording("recording has no channels".into()));
        }
        if self.labels.len() != c {
            return Err(Error::InvalidRecording(format!(
                "{} labels for {c} channels",
                self.labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &self.labels {
            if label.is_empty() {
                return Err(Error::InvalidRecording("empty channel label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidRecording(format!(
                    "duplicate channel label {label:?}"
                )));
            }
        }
        if !(self.fs_hz > 0.0) || !self.fs_hz.is_finite() {
            return Err(Error::InvalidSamplingRate(self.fs_hz));
        }
        if n < 2 {
            return Err(Error::InvalidRecording(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        if let Some(((channel, sample), _)) =
            self.data.indexed_iter().find(|(_, v)| !v.is_finite())
        {
            return Err(Error::NonFinite { channel, sample });
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.fs_hz
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    labels: Vec<String>,
    fs_hz: f64,
}

/// Resolves the `(csv, json)` pair for a path given either as a bare stem or
/// with a `.csv`/`.json` extension.
pub fn pair_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with_suffix = |suffix: &str| {
        let mut s: OsString = stem.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    (with_suffix(".csv"), with_suffix(".json"))
}

pub fn load_recording(path: impl AsRef<Path>) -> Result<Recording> {
    let (csv_path, json_path) = pair_paths(path.as_ref());
    for p in [&csv_path, &json_path] {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }

    let sidecar_text = fs::read_to_string(&json_path).map_err(|source| Error::Io {
        path: json_path.clone(),
        source,
    })?;
    let sidecar: Sidecar = serde_json::from_str(&sidecar_text).map_err(|e| Error::Sidecar {
        path: json_path.clone(),
        message: e.to_string(),
    })?;
    if !(sidecar.fs_hz > 0.0) || !sidecar.fs_hz.is_finite() {
        return Err(Error::InvalidSamplingRate(sidecar.fs_hz));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(&csv_path)
        .map_err(|e| Error::Io {
            path: csv_path.clone(),
            source: std::io::Error::other(e),
        })?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (channel, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Io {
            path: csv_path.clone(),
            source: std::io::Error::other(e),
        })?;
        if let Some(first) = rows.first() {
            if record.len() != first.len() {
                return Err(Error::RaggedRow {
                    row: channel + 1,
                    expected: first.len(),
                    found: record.len(),
                });
            }
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(sample, field)| {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    channel,
                    sample,
                    value: field.to_string(),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite { channel, sample })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }

    if rows.len() != sidecar.labels.len() {
        return Err(Error::Sidecar {
            path: json_path,
            message: format!(
                "{} labels but {} data rows",
                sidecar.labels.len(),
                rows.len()
            ),
        });
    }
    let n = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let data = Array2::from_shape_vec((sidecar.labels.len(), n), flat)
        .map_err(|e| Error::InvalidRecording(e.to_string()))?;
    Recording::new(sidecar.labels, sidecar.fs_hz, data)
}

/// Writes `<stem>.csv` and `<stem>.json`. Samples use the shortest decimal
/// form that parses back to the same `f64`, so a load reproduces them exactly.
pub fn save_recording(rec: &Recording, path: impl AsRef<Path>) -> Result<()> {
    rec.validate()?;
    let (csv_path, json_path) = pair_paths(path.as_ref());

    let mut body = String::with_capacity(rec.data.len() * 12);
    for row in rec.data.rows() {
        let mut first = true;
        for v in row {
            if !first {
                body.push(',');
            }
            first = false;
            body.push_str(&format!("{v}"));
        }
        body.push('\n');
    }
    write_file(&csv_path, body.as_bytes())?;

    let sidecar = Sidecar {
        labels: rec.labels.clone(),
        fs_hz: rec.fs_hz,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    write_file(&json_path, json.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)
}

/// Splits a recording into `n_segments` consecutive windows of
/// `segment_len` samples each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentPlan {
    pub n_segments: usize,
    pub segment_len: usize,
}

impl SegmentPlan {
    pub fn new(n_segments: usize, segment_len: usize) -> Self {
        SegmentPlan {
            n_segments,
            segment_len,
        }
    }

    /// The plan that uses as much of `rec` as possible with `k` segments.
    pub fn even(rec: &Recording, k: usize) -> Self {
        SegmentPlan::new(k, rec.n_samples().checked_div(k).unwrap_or(0))
    }

    pub fn validate_for(&self, rec: &Recording) -> Result<()> {
        let (c, n) = rec.data.dim();
        if self.n_segments == 0 {
            return Err(Error::InfeasiblePlan("zero segments".into()));
        }
        if self.segment_len < 2 * c {
            return Err(Error::InfeasiblePlan(format!(
                "segment length {} is below 2x channel count {c}",
                self.segment_len
            )));
        }
        if self.n_segments * self.segment_len > n {
            return Err(Error::InfeasiblePlan(format!(
                "{} segments of {} samples exceed {n} samples",
                self.n_segments, self.segment_len
            )));
        }
        Ok(())
    }

    pub fn covered(&self) -> usize {
        self.n_segments * self.segment_len
    }
}

pub fn segment(rec: &Recording, plan: SegmentPlan) -> Result<Vec<Recording>> {
    plan.validate_for(rec)?;
    (0..plan.n_segments)
        .map(|k| {
            let start = k * plan.segment_len;
            rec.with_data(
                rec.data
                    .slice(s![.., start..start + plan.segment_len])
                    .to_owned(),
            )
        })
        .collect()
}

/// Concatenates recordings along time. All inputs must share labels and rate.
pub fn concatenate(parts: &[Recording]) -> Result<Recording> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
    if parts
        .iter()
        .any(|p| p.labels != first.labels || p.fs_hz != first.fs_hz)
    {
        return Err(Error::ShapeMismatch(
            "segments disagree on labels or sampling rate".into(),
        ));
    }
    let views: Vec<_> = parts.iter().map(|p| p.data.view()).collect();
    let data = ndarray::concatenate(Axis(1), &views)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    first.with_data(data)
}

/// Removes each channel's mean.
pub fn center(rec: &Recording) -> Recording {
    let mut out = rec.clone();
    for mut row in out.data.rows_mut() {
        let mean = row.sum() / row.len() as f64;
        row.mapv_inplace(|v| v - mean);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rec(data: Array2<f64>) -> Recording {
        let c = data.nrows();
        Recording::new(default_labels(c), 250.0, data).unwrap()
    }

    #[test]
    fn rejects_invalid_recordings() {
        let ok = array![[1.0, 2.0]];
        assert!(Recording::new(vec!["a".into(), "b".into()], 1.0, ok.clone()).is_err());
        assert!(Recording::new(vec!["".into()], 1.0, ok.clone()).is_err());
        assert!(matches!(
            Recording::new(vec!["a".into()], 0.0, ok.clone()),
            Err(Error::InvalidSamplingRate(_))
        ));
        assert!(Recording::new(vec!["a".into()], 1.0, array![[1.0]]).is_err());
        assert!(matches!(
            Recording::new(vec!["a".into()], 1.0, array![[1.0, f64::NAN]]),
            Err(Error::NonFinite {
                channel: 0,
                sample: 1
            })
        ));
        assert!(Recording::new(
            vec!["a".into(), "a".into()],
            1.0,
            array![[1.0, 2.0], [3.0, 4.0]]
        )
        .is_err());
    }

    #[test]
    fn segment_tiles_prefix() {
        let data = Array2::from_shape_fn((2, 1000), |(c, t)| (c * 1000 + t) as f64);
        let r = rec(data.clone());
        let segs = segment(&r, SegmentPlan::new(4, 250)).unwrap();
        assert_eq!(segs.len(), 4);
        let joined = concatenate(&segs).unwrap();
        assert_eq!(joined.data, data);
        assert_eq!(segs[3].data[[1, 249]], 1999.0);
    }

    #[test]
    fn segment_drops_remainder() {
        let r = rec(Array2::from_shape_fn((2, 1001), |(_, t)| t as f64));
        let segs = segment(&r, SegmentPlan::new(4, 250)).unwrap();
        assert_eq!(segs.len(), 4);
        assert_eq!(segs[3].data[[0, 249]], 999.0);
    }

    #[test]
    fn segment_infeasible_plan() {
        let r = rec(Array2::zeros((2, 1000)));
        let err = segment(&r, SegmentPlan::new(5, 250)).unwrap_err();
        assert!(err.to_string().contains("infeasible plan"));
        assert!(segment(&r, SegmentPlan::new(1, 3)).is_err());
    }

    #[test]
    fn center_cases() {
        let r = rec(array![[1.0, 2.0, 3.0], [5.0, 5.0, 5.0], [-1.0, 0.0, 1.0]]);
        let c = center(&r);
        assert_eq!(c.data, array![[-1.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 1.0]]);
        let cc = center(&c);
        for (a, b) in c.data.iter().zip(cc.data.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn pair_paths_accepts_stem_or_extension() {
        let (c, j) = pair_paths(Path::new("out/d1_clean"));
        assert_eq!(c, PathBuf::from("out/d1_clean.csv"));
        assert_eq!(j, PathBuf::from("out/d1_clean.json"));
        let (c, _) = pair_paths(Path::new("x.v2.json"));
        assert_eq!(c, PathBuf::from("x.v2.csv"));
    }
}
