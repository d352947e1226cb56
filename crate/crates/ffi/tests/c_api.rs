use std::ffi::{CStr, CString};
use std::ptr;

use dsvb::cells::CellType;
use dsvb::checkpoint::{Checkpoint, CheckpointMeta};
use dsvb::data::NormalizationStats;
use dsvb::vrnn::{VrnnArch, VrnnModel};
use dsvb_ffi::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn last_error() -> String {
    let p = dsvb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn synth(samples: usize) -> *mut DsvbDataset {
    let mut ds = ptr::null_mut();
    let st = unsafe { dsvb_synth_generate(DsvbContactMode::Tip, DsvbActuation::Oscillatory, 3, samples, &mut ds) };
    assert_eq!(st, DsvbStatus::Ok);
    ds
}

#[test]
fn synth_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("d.csv").to_str().unwrap()).unwrap();
    let ds = synth(50);
    unsafe {
        assert_eq!(dsvb_dataset_rows(ds), 50);
        assert_eq!(dsvb_dataset_n_y(ds), 2);
        assert_eq!(dsvb_dataset_n_x(ds), 22);
        assert_eq!(dsvb_dataset_write_csv(ds, path.as_ptr()), DsvbStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(dsvb_dataset_load_csv(path.as_ptr(), &mut back), DsvbStatus::Ok);
        let mut a = vec![0.0; 100];
        let mut b = vec![0.0; 100];
        assert_eq!(dsvb_dataset_measurements(ds, a.as_mut_ptr(), a.len()), DsvbStatus::Ok);
        assert_eq!(dsvb_dataset_measurements(back, b.as_mut_ptr(), b.len()), DsvbStatus::Ok);
        assert_eq!(a, b);
        let mut small = vec![0.0; 10];
        assert_eq!(dsvb_dataset_states(ds, small.as_mut_ptr(), small.len()), DsvbStatus::BufferTooSmall);
        dsvb_dataset_free(ds);
        dsvb_dataset_free(back);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        assert_eq!(dsvb_model_load(ptr::null(), ptr::null_mut()), DsvbStatus::NullPointer);
        let missing = CString::new("/nonexistent/ck.bin").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(dsvb_model_load(missing.as_ptr(), &mut m), DsvbStatus::Io);
        assert!(m.is_null());
        assert!(last_error().contains("No such file"));
        let mut ds = ptr::null_mut();
        let st = dsvb_synth_generate(DsvbContactMode::Surface, DsvbActuation::Random, 0, 0, &mut ds);
        assert_ne!(st, DsvbStatus::Ok);
        dsvb_model_free(ptr::null_mut());
        dsvb_dataset_free(ptr::null_mut());
    }
}

#[test]
fn kld_helper() {
    let (one, zero, unit) = ([1.0], [0.0], [1.0]);
    let mut out = f64::NAN;
    let st = unsafe { dsvb_gaussian_kld(one.as_ptr(), unit.as_ptr(), zero.as_ptr(), unit.as_ptr(), 1, &mut out) };
    assert_eq!(st, DsvbStatus::Ok);
    assert!((out - 0.5).abs() < 1e-12);
    let neg = [-1.0];
    let st = unsafe { dsvb_gaussian_kld(one.as_ptr(), neg.as_ptr(), zero.as_ptr(), unit.as_ptr(), 1, &mut out) };
    assert_eq!(st, DsvbStatus::Numerical);
}

#[test]
fn inference_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let ck_path = dir.path().join("ck.bin");
    let ds = synth(80);
    let (n_y, n_x, rows) = unsafe { (dsvb_dataset_n_y(ds), dsvb_dataset_n_x(ds), dsvb_dataset_rows(ds)) };
    let mut meas = vec![0.0; rows * n_y];
    let mut states = vec![0.0; rows * n_x];
    unsafe {
        dsvb_dataset_measurements(ds, meas.as_mut_ptr(), meas.len());
        dsvb_dataset_states(ds, states.as_mut_ptr(), states.len());
        dsvb_dataset_free(ds);
    }
    let lib_ds = dsvb::data::SequenceDataset::new(
        (0..rows).map(|i| i as f64 * 0.1).collect(),
        dsvb::diffcore::Tensor::matrix(rows, n_y, meas.clone()).unwrap(),
        Some(dsvb::diffcore::Tensor::matrix(rows, n_x, states).unwrap()),
        dsvb::data::Domain::Source,
        10.0,
    )
    .unwrap();
    let stats = NormalizationStats::fit(&lib_ds).unwrap();
    let model = VrnnModel::new(VrnnArch::tiny(n_y, n_x, CellType::Gru, 8), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let ck = Checkpoint::from_vrnn(&model, None, Some(stats.clone()), CheckpointMeta::default());
    ck.save(&ck_path).unwrap();

    let (want_mean, want_std) = model
        .estimate(&stats.normalize_measurements(&lib_ds.measurements).unwrap(), 40)
        .unwrap();
    let want_mean = stats.denormalize_states(&want_mean).unwrap();
    let want_std = stats.denormalize_state_std(&want_std).unwrap();

    let path = CString::new(ck_path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(dsvb_model_load(path.as_ptr(), &mut m), DsvbStatus::Ok);
        assert_eq!(dsvb_model_n_y(m), n_y);
        assert_eq!(dsvb_model_n_x(m), n_x);
        assert!(dsvb_model_has_std(m));
        let mut mean = vec![0.0; rows * n_x];
        let mut std = vec![0.0; rows * n_x];
        let st = dsvb_model_infer(
            m,
            meas.as_ptr(),
            rows,
            n_y,
            40,
            mean.as_mut_ptr(),
            mean.len(),
            std.as_mut_ptr(),
            std.len(),
        );
        assert_eq!(st, DsvbStatus::Ok);
        assert_eq!(mean, want_mean.data());
        assert_eq!(std, want_std.data());
        let st = dsvb_model_infer(m, meas.as_ptr(), rows, n_y + 1, 40, mean.as_mut_ptr(), mean.len(), ptr::null_mut(), 0);
        assert_eq!(st, DsvbStatus::InvalidArgument);
        dsvb_model_free(m);
    }
}

#[test]
fn header_declares_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dsvb.h")).unwrap();
    for name in [
        "dsvb_model_load",
        "dsvb_model_infer",
        "dsvb_model_free",
        "dsvb_synth_generate",
        "dsvb_dataset_free",
        "dsvb_gaussian_kld",
        "dsvb_last_error_message",
        "DSVB_STATUS_OK",
        "typedef struct DsvbModel DsvbModel",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    let v = unsafe { CStr::from_ptr(dsvb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
