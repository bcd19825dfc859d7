use ivaclean_core::bss::{cca_bss, extract_sources, fastica, iva, sobi, FastIcaConfig, IvaConfig, SobiConfig};
use ivaclean_core::linalg::frobenius;
use ivaclean_core::metrics::rmse;
use ivaclean_core::pipeline::{centered_energy, remove_artifacts, remove_with_rejection, truncate};
use ivaclean_core::recording::segment;
use ivaclean_core::semisim::{gen_clean_eeg, gen_ground_truth};
use ivaclean_core::{Method, PipelineConfig, SegmentPlan, SimConfig};

fn sim(seed: u64) -> SimConfig {
    SimConfig { seed, ..SimConfig::default() }
}

#[test]
fn every_method_round_trips_whitened_data() {
    let gt = gen_ground_truth(&sim(11)).unwrap();
    let rec = &gt.contaminated;
    let segs = segment(rec, SegmentPlan::even(rec, 4)).unwrap();
    let models = [
        (sobi(rec, &SobiConfig::default()).unwrap(), vec![rec.clone()]),
        (fastica(rec, &FastIcaConfig::default()).unwrap(), vec![rec.clone()]),
        (cca_bss(rec).unwrap(), vec![rec.clone()]),
        (iva(&segs, &IvaConfig::default()).unwrap(), segs.clone()),
    ];
    for (model, data) in &models {
        let set = extract_sources(model, data).unwrap();
        for (k, part) in data.iter().enumerate() {
            let z = model.whiten[k].transform(part.data.view());
            let back = set.mixing[k].dot(&set.sources[k]);
            let err = frobenius(&(&back - &z)) / frobenius(&z);
            assert!(err <= 1e-6, "{:?} data set {k}: {err}", model.method);
            let eye = model.per_dataset_w[k].dot(&model.per_dataset_a[k]);
            assert!(frobenius(&(eye - ndarray::Array2::<f64>::eye(19))) <= 1e-8);
        }
    }
}

#[test]
fn pipeline_is_deterministic() {
    let gt = gen_ground_truth(&sim(12)).unwrap();
    for method in Method::ALL {
        let cfg = PipelineConfig::default().with_method(method);
        let (a, ra) = remove_artifacts(&gt.contaminated, &cfg).unwrap();
        let (b, rb) = remove_artifacts(&gt.contaminated, &cfg).unwrap();
        assert_eq!(a, b, "{method}");
        assert_eq!(ra.rejected, rb.rejected);
        assert_eq!(ra.diagnostics, rb.diagnostics);
    }
}

#[test]
fn larger_rejection_sets_never_add_energy() {
    let gt = gen_ground_truth(&sim(13)).unwrap();
    for method in Method::ALL {
        let cfg = PipelineConfig::default().with_method(method);
        let k = if method == Method::Iva { cfg.iva_segments } else { 1 };
        let mut last = f64::INFINITY;
        for size in 0..=6 {
            let set: Vec<usize> = (19 - size..19).collect();
            let (out, _) = remove_with_rejection(&gt.contaminated, &cfg, vec![set; k]).unwrap();
            let energy = centered_energy(&out);
            assert!(energy <= last * (1.0 + 1e-9), "{method}: {size} sources gave {energy} > {last}");
            last = energy;
        }
    }
}

#[test]
fn clean_input_is_barely_touched() {
    let clean = gen_clean_eeg(&sim(14)).unwrap();
    let clean_rms = (clean.data.iter().map(|v| v * v).sum::<f64>() / clean.data.len() as f64).sqrt();
    for method in Method::ALL {
        let (out, report) = remove_artifacts(&clean, &PipelineConfig::default().with_method(method)).unwrap();
        assert!(report.rejected.iter().all(|r| r.is_empty()), "{method}: {:?}", report.rejected);
        let truth = truncate(&clean, out.n_samples()).unwrap();
        let err = rmse(&truth, &out).unwrap();
        assert!(err <= 0.15 * clean_rms, "{method}: {err}");
    }
}

#[test]
fn iva_removal_beats_contaminated_input() {
    let gt = gen_ground_truth(&sim(4)).unwrap();
    let (out, report) = remove_artifacts(&gt.contaminated, &PipelineConfig::default()).unwrap();
    assert!(report.rejected.windows(2).all(|w| w[0] == w[1]));
    let truth = truncate(&gt.clean, out.n_samples()).unwrap();
    let before = truncate(&gt.contaminated, out.n_samples()).unwrap();
    assert!(rmse(&truth, &out).unwrap() < rmse(&truth, &before).unwrap());
}

#[test]
fn runs_at_500_hz() {
    let gt = gen_ground_truth(&SimConfig { fs_hz: 500.0, seed: 15, ..SimConfig::default() }).unwrap();
    for method in Method::ALL {
        let (out, report) = remove_artifacts(&gt.contaminated, &PipelineConfig::default().with_method(method)).unwrap();
        assert!(out.data.iter().all(|v| v.is_finite()));
        assert!(report.rejected[0].len() <= 9);
    }
}

#[test]
fn stage_timings_cover_the_run() {
    let gt = gen_ground_truth(&sim(16)).unwrap();
    let (_, report) = remove_artifacts(&gt.contaminated, &PipelineConfig::default()).unwrap();
    let stages: f64 = report.timings_ms.iter().map(|t| t.ms).sum();
    assert!((report.total_ms - stages).abs() <= 0.1 * report.total_ms, "{stages} vs {}", report.total_ms);
}
