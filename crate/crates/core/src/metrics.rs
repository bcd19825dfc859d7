//! Reconstruction error against ground truth and the multi-method comparison
//! table.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::bss::Method;
use crate::error::{Error, Result};
use crate::pipeline::{remove_artifacts, truncate, PipelineConfig};
use crate::recording::Recording;
use crate::semisim::GroundTruth;

/// Environment variable holding the worker count for [`compare_methods`].
pub const THREADS_ENV: &str = "IVACLEAN_THREADS";

fn check_shapes(clean: &Recording, rec: &Recording) -> Result<()> {
    if clean.data.dim() != rec.data.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            clean.data.dim(),
            rec.data.dim()
        )));
    }
    Ok(())
}

/// Root mean square of `clean - rec` over all entries.
pub fn rmse(clean: &Recording, rec: &Recording) -> Result<f64> {
    check_shapes(clean, rec)?;
    let sum: f64 = clean
        .data
        .iter()
        .zip(rec.data.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / clean.data.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Snr {
    Db(f64),
    /// The reconstruction matches exactly; the ratio is unbounded.
    Perfect,
}

impl Snr {
    pub fn db(self) -> f64 {
        match self {
            Snr::Db(v) => v,
            Snr::Perfect => f64::INFINITY,
        }
    }
}

/// `10 log10(sum clean^2 / sum (clean - rec)^2)`.
pub fn snr_db(clean: &Recording, rec: &Recording) -> Result<Snr> {
    check_shapes(clean, rec)?;
    let signal: f64 = clean.data.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::InvalidArgument("SNR undefined for an all-zero clean signal".into()));
    }
    let noise: f64 = clean
        .data
        .iter()
        .zip(rec.data.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if noise == 0.0 {
        return Ok(Snr::Perfect);
    }
    Ok(Snr::Db(10.0 * (signal / noise).log10()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RowStatus {
    Ok,
    Perfect,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    /// 1-based position in the batch.
    pub dataset_id: usize,
    pub method: Method,
    pub rmse: f64,
    /// Infinite for a perfect row, NaN for a failed one.
    pub snr_db: f64,
    pub status: RowStatus,
}

impl EvalRow {
    /// Scores `output` against `clean`, comparing only the samples `output`
    /// covers.
    pub fn score(dataset_id: usize, method: Method, clean: &Recording, output: &Recording) -> Result<Self> {
        let clean = truncate(clean, output.n_samples())?;
        let rmse = rmse(&clean, output)?;
        let snr = snr_db(&clean, output)?;
        Ok(EvalRow {
            dataset_id,
            method,
            rmse,
            snr_db: snr.db(),
            status: match snr {
                Snr::Perfect => RowStatus::Perfect,
                Snr::Db(_) => RowStatus::Ok,
            },
        })
    }

    fn failed(dataset_id: usize, method: Method, err: &Error) -> Self {
        EvalRow {
            dataset_id,
            method,
            rmse: f64::NAN,
            snr_db: f64::NAN,
            status: RowStatus::Failed(err.to_string()),
        }
    }
}

fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Runs the pipeline for every (dataset, method) cell and scores it against
/// the ground-truth clean EEG. A failing cell becomes a failed row.
pub fn compare_methods(batch: &[GroundTruth], methods: &[Method], cfg: &PipelineConfig) -> Result<Vec<EvalRow>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to compare".into()));
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let cells: Vec<(usize, Method)> = (0..batch.len())
        .flat_map(|d| methods.iter().map(move |&m| (d, m)))
        .collect();
    let eval = |&(d, m): &(usize, Method)| {
        let id = d + 1;
        let cell_cfg = cfg.clone().with_method(m);
        remove_artifacts(&batch[d].contaminated, &cell_cfg)
            .and_then(|(out, _)| EvalRow::score(id, m, &batch[d].clean, &out))
            .unwrap_or_else(|e| EvalRow::failed(id, m, &e))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut rows: Vec<EvalRow> = pool.install(|| cells.par_iter().map(eval).collect());
    rows.sort_by_key(|r| (r.dataset_id, r.method));
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::InvalidArgument(format!(
                "unknown table format {other:?} (expected csv or markdown)"
            ))),
        }
    }
}

fn cells(row: &EvalRow) -> [String; 4] {
    let (rmse, snr) = match &row.status {
        RowStatus::Failed(_) => ("failed".to_string(), "failed".to_string()),
        RowStatus::Perfect => (format!("{:.4}", row.rmse), "perfect".to_string()),
        RowStatus::Ok => (format!("{:.4}", row.rmse), format!("{:.4}", row.snr_db)),
    };
    [row.dataset_id.to_string(), row.method.to_string(), rmse, snr]
}

pub fn render_table(rows: &[EvalRow], format: TableFormat) -> String {
    let header = ["dataset", "method", "rmse", "snr_db"];
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for row in rows {
                out.push_str(&cells(row).join(","));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            out.push_str("|---:|:---|---:|---:|\n");
            for row in rows {
                let _ = writeln!(out, "| {} |", cells(row).join(" | "));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bss::testutil::{gaussian_sources, rec};
    use crate::semisim::{gen_dataset_batch, SimConfig};
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        let a = rec(array![[0.0, 0.0]]);
        let b = rec(array![[3.0, 4.0]]);
        assert!((rmse(&a, &b).unwrap() - 3.53553).abs() < 1e-5);
        assert_eq!(rmse(&b, &b).unwrap(), 0.0);
        assert!(rmse(&a, &rec(array![[1.0, 2.0, 3.0]])).is_err());
    }

    #[test]
    fn snr_examples() {
        let clean = rec(gaussian_sources(2, 1000, 1));
        let zero = clean.with_data(clean.data.mapv(|_| 0.0)).unwrap();
        assert!(snr_db(&clean, &zero).unwrap().db().abs() < 1e-12);
        let doubled = clean.with_data(&clean.data * 2.0).unwrap();
        assert!(snr_db(&clean, &doubled).unwrap().db().abs() < 1e-12);
        assert_eq!(snr_db(&clean, &clean).unwrap(), Snr::Perfect);
        assert!(snr_db(&zero, &clean).is_err());

        // unit RMS signal, residual RMS 0.1
        let unit = rec(array![[1.0, -1.0, 1.0, -1.0]]);
        let off = rec(array![[1.1, -1.1, 1.1, -1.1]]);
        assert!((snr_db(&unit, &off).unwrap().db() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn snr_falls_with_noise() {
        let clean = rec(gaussian_sources(3, 2000, 2));
        let noise = gaussian_sources(3, 2000, 3);
        let mut last = f64::INFINITY;
        for level in [0.01, 0.1, 0.5, 1.0, 2.0, 10.0] {
            let noisy = clean.with_data(&clean.data + &(&noise * level)).unwrap();
            let snr = snr_db(&clean, &noisy).unwrap().db();
            assert!(snr < last);
            last = snr;
        }
    }

    #[test]
    fn csv_formatting() {
        let row = EvalRow { dataset_id: 1, method: Method::Iva, rmse: 0.3249, snr_db: 1.0, status: RowStatus::Ok };
        let text = render_table(std::slice::from_ref(&row), TableFormat::Csv);
        assert_eq!(text, "dataset,method,rmse,snr_db\n1,iva,0.3249,1.0000\n");
        let md = render_table(&[row.clone(), row], TableFormat::Markdown);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("snr_db"));
    }

    #[test]
    fn failed_and_perfect_rows_render() {
        let rows = [
            EvalRow { dataset_id: 2, method: Method::Cca, rmse: 0.0, snr_db: f64::INFINITY, status: RowStatus::Perfect },
            EvalRow::failed(3, Method::Sobi, &Error::Singular),
        ];
        let text = render_table(&rows, TableFormat::Csv);
        assert!(text.contains("2,cca,0.0000,perfect\n"));
        assert!(text.contains("3,sobi,failed,failed\n"));
    }

    #[test]
    fn single_cell_matches_direct_call() {
        let cfg = SimConfig { n_channels: 6, duration_s: 6.0, ..SimConfig::default() };
        let batch = gen_dataset_batch(1, 1, &cfg).unwrap();
        let pcfg = PipelineConfig::default().with_method(Method::Ica);
        let rows = compare_methods(&batch, &[Method::Ica], &pcfg).unwrap();
        assert_eq!(rows.len(), 1);
        let (out, _) = remove_artifacts(&batch[0].contaminated, &pcfg).unwrap();
        let direct = EvalRow::score(1, Method::Ica, &batch[0].clean, &out).unwrap();
        assert_eq!(rows[0], direct);
    }

    #[test]
    fn rows_sorted_and_failures_contained() {
        let cfg = SimConfig { n_channels: 6, duration_s: 6.0, ..SimConfig::default() };
        let batch = gen_dataset_batch(1, 2, &cfg).unwrap();
        let pcfg = PipelineConfig { iva_segments: 200, ..PipelineConfig::default() };
        let rows = compare_methods(&batch, &[Method::Iva, Method::Cca], &pcfg).unwrap();
        let keys: Vec<(usize, &str)> = rows.iter().map(|r| (r.dataset_id, r.method.tag())).collect();
        assert_eq!(keys, vec![(1, "cca"), (1, "iva"), (2, "cca"), (2, "iva")]);
        assert!(matches!(rows[1].status, RowStatus::Failed(_)));
        assert_eq!(rows[0].status, RowStatus::Ok);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rmse_is_a_metric(seed in 0u64..100_000, s in -5.0f64..5.0) {
            let a = rec(gaussian_sources(2, 50, seed));
            let b = rec(gaussian_sources(2, 50, seed + 1));
            let c = rec(gaussian_sources(2, 50, seed + 2));
            let ab = rmse(&a, &b).unwrap();
            prop_assert!((ab - rmse(&b, &a).unwrap()).abs() <= 1e-12);
            prop_assert!(ab <= rmse(&a, &c).unwrap() + rmse(&c, &b).unwrap() + 1e-9);
            prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
            let sa = a.with_data(&a.data * s).unwrap();
            let sb = b.with_data(&b.data * s).unwrap();
            prop_assert!((rmse(&sa, &sb).unwrap() - s.abs() * ab).abs() <= 1e-9 * ab.max(1.0));
        }
    }
}
