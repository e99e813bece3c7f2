use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mmea_ffi::*;

fn last_error() -> String {
    let p = mmea_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn cpath(p: &Path) -> CString {
    cstr(p.to_str().unwrap())
}

#[test]
fn sinkhorn_matches_core() {
    let data = [0.3, -1.0, 2.0, 0.5, 0.5, 0.1];
    let mut out = [0.0; 6];
    let st = unsafe { mmea_sinkhorn(data.as_ptr(), 2, 3, 5, out.as_mut_ptr()) };
    assert_eq!(st, MmeaStatus::Ok);
    let x = mmea::DenseMatrix::from_vec(2, 3, data.to_vec()).unwrap();
    let want = mmea::fusion::sinkhorn(&x, 5).unwrap();
    assert_eq!(&out[..], want.as_slice());
}

#[test]
fn sinkhorn_in_place_and_errors() {
    let mut buf = [1.0, 2.0, 3.0, 4.0];
    let st = unsafe { mmea_sinkhorn(buf.as_ptr(), 2, 2, 1, buf.as_mut_ptr()) };
    assert_eq!(st, MmeaStatus::Ok);
    for j in 0..2 {
        assert!((buf[j] + buf[2 + j] - 1.0).abs() < 1e-12);
    }

    let st = unsafe { mmea_sinkhorn(ptr::null(), 2, 2, 1, buf.as_mut_ptr()) };
    assert_eq!(st, MmeaStatus::NullPointer);
    assert!(last_error().contains("data"));

    let bad = [f64::NAN, 0.0];
    let st = unsafe { mmea_sinkhorn(bad.as_ptr(), 1, 2, 1, buf.as_mut_ptr()) };
    assert_eq!(st, MmeaStatus::NonFinite);

    let st = unsafe { mmea_sinkhorn(buf.as_ptr(), 2, 2, 0, buf.as_mut_ptr()) };
    assert_eq!(st, MmeaStatus::Config);
}

#[test]
fn evaluate_hand_case() {
    let scores = [0.9, 0.1, 0.0, 0.5, 0.4, 0.1, 0.2, 0.7, 0.3];
    let src = [0usize, 1, 2];
    let tgt = [0usize, 2, 2];
    let cutoffs = [1usize, 3];
    let mut hits = [0.0; 2];
    let (mut mrr, mut mr) = (0.0, 0.0);
    let st = unsafe {
        mmea_evaluate(
            scores.as_ptr(),
            3,
            3,
            src.as_ptr(),
            tgt.as_ptr(),
            3,
            cutoffs.as_ptr(),
            hits.as_mut_ptr(),
            2,
            &mut mrr,
            &mut mr,
        )
    };
    assert_eq!(st, MmeaStatus::Ok);
    assert!((hits[0] - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(hits[1], 1.0);
    assert!((mrr - 11.0 / 18.0).abs() < 1e-15);
    assert_eq!(mr, 2.0);

    let st = unsafe {
        mmea_evaluate(
            scores.as_ptr(),
            3,
            3,
            src.as_ptr(),
            tgt.as_ptr(),
            0,
            cutoffs.as_ptr(),
            hits.as_mut_ptr(),
            2,
            &mut mrr,
            &mut mr,
        )
    };
    assert_eq!(st, MmeaStatus::InvalidArgument);
}

#[test]
fn config_setters() {
    let cfg = mmea_config_new();
    unsafe {
        assert_eq!(mmea_config_set_int(cfg, cstr("hops").as_ptr(), 3), MmeaStatus::Ok);
        assert_eq!(mmea_config_set_flag(cfg, cstr("prescale").as_ptr(), false), MmeaStatus::Ok);
        assert_eq!(mmea_config_set_modalities(cfg, cstr("rel,time").as_ptr()), MmeaStatus::Ok);
        assert_eq!(
            mmea_config_set_modalities(cfg, cstr("rel,sound").as_ptr()),
            MmeaStatus::Config
        );
        assert!(last_error().contains("sound"));
        assert_eq!(
            mmea_config_set_int(cfg, cstr("nope").as_ptr(), 1),
            MmeaStatus::InvalidArgument
        );
        assert_eq!(mmea_config_set_flag(ptr::null_mut(), cstr("cosine").as_ptr(), true), MmeaStatus::NullPointer);
        mmea_config_free(cfg);
        mmea_config_free(ptr::null_mut());
    }
}

#[test]
fn load_missing_dir_reports_io() {
    let cfg = mmea_config_new();
    let mut ds = ptr::null_mut();
    let st = unsafe { mmea_dataset_load(cstr("/nonexistent/mmea").as_ptr(), cfg, &mut ds) };
    assert_eq!(st, MmeaStatus::Io);
    assert!(ds.is_null());
    assert!(last_error().contains("/nonexistent/mmea"));
    unsafe { mmea_config_free(cfg) };
}

#[test]
fn align_through_handles_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let d = cpath(dir.path());
    unsafe {
        assert_eq!(mmea_synth_generate(d.as_ptr(), 80, 0.05, 0.1, 0.3, 11), MmeaStatus::Ok);
        let cfg = mmea_config_new();
        assert_eq!(mmea_config_set_int(cfg, cstr("embed_dim").as_ptr(), 32), MmeaStatus::Ok);
        let mut ds = ptr::null_mut();
        assert_eq!(mmea_dataset_load(d.as_ptr(), cfg, &mut ds), MmeaStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(mmea_align(ds, cfg, false, &mut run), MmeaStatus::Ok);

        let (mut rows, mut cols) = (0, 0);
        assert_eq!(mmea_run_shape(run, &mut rows, &mut cols), MmeaStatus::Ok);
        assert_eq!((rows, cols), (80, 80));
        let mut scores = vec![0.0; rows * cols];
        assert_eq!(mmea_run_scores(run, scores.as_mut_ptr(), scores.len()), MmeaStatus::Ok);
        assert_eq!(mmea_run_scores(run, scores.as_mut_ptr(), 3), MmeaStatus::InvalidArgument);

        let mut config = mmea::PipelineConfig::default();
        config.embed_dim = 32;
        let dataset = mmea::kgio::load_dataset(dir.path(), &config).unwrap();
        let want = mmea::pipeline::run(&dataset, &config, &Default::default(), &mut mmea::diag::NullSink).unwrap();
        assert_eq!(scores, want.fused.as_slice());

        let mut n = 0;
        assert_eq!(mmea_run_prediction_count(run, &mut n), MmeaStatus::Ok);
        assert_eq!(n, want.predictions.len());
        for (i, p) in want.predictions.iter().enumerate() {
            let (mut s, mut t, mut sc) = (0, 0, 0.0);
            assert_eq!(mmea_run_prediction(run, i, &mut s, &mut t, &mut sc), MmeaStatus::Ok);
            assert_eq!((s, t, Some(sc)), (p.src, p.tgt, p.score));
        }
        let (mut s, mut t, mut sc) = (0, 0, 0.0);
        assert_eq!(mmea_run_prediction(run, n, &mut s, &mut t, &mut sc), MmeaStatus::InvalidArgument);

        let report = want.report.unwrap();
        let cutoffs = [1usize, 10];
        let mut hits = [0.0; 2];
        let (mut mrr, mut mr) = (0.0, 0.0);
        assert_eq!(
            mmea_run_metrics(run, cutoffs.as_ptr(), hits.as_mut_ptr(), 2, &mut mrr, &mut mr),
            MmeaStatus::Ok
        );
        assert_eq!(hits, [report.hits_at(1).unwrap(), report.hits_at(10).unwrap()]);
        assert_eq!((mrr, mr), (report.mrr, report.mr));
        let missing = [7usize];
        assert_eq!(
            mmea_run_metrics(run, missing.as_ptr(), hits.as_mut_ptr(), 1, &mut mrr, &mut mr),
            MmeaStatus::Unavailable
        );

        let mut json = ptr::null_mut();
        assert_eq!(mmea_run_metrics_json(run, &mut json), MmeaStatus::Ok);
        assert_eq!(CStr::from_ptr(json).to_str().unwrap(), report.to_json());
        mmea_string_free(json);

        mmea_run_free(run);
        mmea_dataset_free(ds);
        mmea_config_free(cfg);
    }
}

fn staticlib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    [profile_dir.join("libmmea_ffi.a"), profile_dir.join("deps/libmmea_ffi.a")]
        .into_iter()
        .find(|p| p.exists())
}

#[test]
fn c_header_compiles_and_links() {
    let Some(lib) = staticlib() else {
        panic!("libmmea_ffi.a not found next to the test binary");
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/smoke.c");
    let work = tempfile::tempdir().unwrap();
    let bin = work.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("run C compiler");
    assert!(status.success(), "C smoke test failed to build");

    let data = work.path().join("data");
    let out = Command::new(&bin).arg(&data).output().unwrap();
    assert!(
        out.status.success(),
        "smoke binary failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("{\"hits\":"));
}
