//! C ABI over the alignment engine.
//!
//! Objects cross the boundary as opaque handles created by `*_new` / `*_load`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`MmeaStatus`]; on failure the message is available from
//! [`mmea_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mmea::diag::NullSink;
use mmea::kgio::{self, AlignmentSet, Dataset};
use mmea::pipeline::{self, AlignmentRun, RunOptions};
use mmea::synth::{self, SynthSpec};
use mmea::{evalrank, fusion, DenseMatrix, Error, ModalityKind, PipelineConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmeaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Format = 5,
    Dimension = 6,
    NonFinite = 7,
    Unavailable = 8,
    Config = 9,
    Internal = 10,
    Panic = 11,
}

/// Pipeline configuration handle.
pub struct MmeaConfig {
    inner: PipelineConfig,
}

/// Loaded knowledge-graph pair with its feature tables.
pub struct MmeaDataset {
    inner: Dataset,
}

/// Result of one alignment run.
pub struct MmeaRun {
    inner: AlignmentRun,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MmeaStatus {
    match err {
        Error::Io { .. } | Error::MissingFile(_) => MmeaStatus::Io,
        Error::Parse { .. } => MmeaStatus::Parse,
        Error::Format { .. } => MmeaStatus::Format,
        Error::Dimension(_) => MmeaStatus::Dimension,
        Error::NonFinite(_) => MmeaStatus::NonFinite,
        Error::Unavailable(_) => MmeaStatus::Unavailable,
        Error::Config(_) => MmeaStatus::Config,
        Error::Invalid(_) => MmeaStatus::InvalidArgument,
        Error::Internal(_) => MmeaStatus::Internal,
    }
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, records any error message and converts the outcome to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MmeaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmeaStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            MmeaStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            MmeaStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            MmeaStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn matrix_len(rows: usize, cols: usize) -> Result<usize, Failure> {
    rows.checked_mul(cols)
        .ok_or_else(|| Failure::Arg(format!("{rows}x{cols} overflows")))
}

/// Message of the last failed call on this thread, or null if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mmea_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from a function of this library that returns an owned string,
/// and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmea_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// New configuration with default values.
#[no_mangle]
pub extern "C" fn mmea_config_new() -> *mut MmeaConfig {
    Box::into_raw(Box::new(MmeaConfig {
        inner: PipelineConfig::default(),
    }))
}

/// # Safety
/// `cfg` must be null or a handle from [`mmea_config_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmea_config_free(cfg: *mut MmeaConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets an integer option: `sinkhorn_k`, `refine_rounds`, `hops`,
/// `max_images`, `embed_dim` or `global_seed`.
///
/// # Safety
/// `cfg` must be a live config handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mmea_config_set_int(cfg: *mut MmeaConfig, key: *const c_char, value: u64) -> MmeaStatus {
    guard(|| {
        let c = &mut deref_mut(cfg, "cfg")?.inner;
        let key = c_str(key, "key")?;
        let as_usize = || usize::try_from(value).map_err(|_| Failure::Arg(format!("{key} out of range")));
        match key {
            "sinkhorn_k" => c.sinkhorn_k = as_usize()?,
            "refine_rounds" => c.refine_rounds = as_usize()?,
            "hops" => c.hops = as_usize()?,
            "max_images" => c.max_images = as_usize()?,
            "embed_dim" => c.embed_dim = as_usize()?,
            "global_seed" => c.global_seed = value,
            _ => return Err(Failure::Arg(format!("unknown integer option {key:?}"))),
        }
        Ok(())
    })
}

/// Sets a boolean option: `prescale`, `cosine`, `accept_pseudo` or `holdout_test`.
///
/// # Safety
/// `cfg` must be a live config handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mmea_config_set_flag(cfg: *mut MmeaConfig, key: *const c_char, value: bool) -> MmeaStatus {
    guard(|| {
        let c = &mut deref_mut(cfg, "cfg")?.inner;
        match c_str(key, "key")? {
            "prescale" => c.prescale = value,
            "cosine" => c.cosine = value,
            "accept_pseudo" => c.accept_pseudo = value,
            "holdout_test" => c.holdout_test = value,
            other => return Err(Failure::Arg(format!("unknown flag {other:?}"))),
        }
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn mmea_config_set_epsilon(cfg: *mut MmeaConfig, epsilon: f64) -> MmeaStatus {
    guard(|| {
        deref_mut(cfg, "cfg")?.inner.epsilon_v = epsilon;
        Ok(())
    })
}

/// Replaces the enabled modalities with a comma list such as `rel,vis,attr,time`.
///
/// # Safety
/// `cfg` must be a live config handle and `list` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mmea_config_set_modalities(cfg: *mut MmeaConfig, list: *const c_char) -> MmeaStatus {
    guard(|| {
        let c = deref_mut(cfg, "cfg")?;
        c.inner.modalities = ModalityKind::parse_list(c_str(list, "list")?)?;
        Ok(())
    })
}

/// Loads a dataset directory. On success `*out` receives a new handle.
///
/// # Safety
/// `dir` must be a NUL-terminated path, `cfg` a live config handle and `out`
/// a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmea_dataset_load(
    dir: *const c_char,
    cfg: *const MmeaConfig,
    out: *mut *mut MmeaDataset,
) -> MmeaStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let dir = PathBuf::from(c_str(dir, "dir")?);
        let cfg = &deref(cfg, "cfg")?.inner;
        let inner = kgio::load_dataset(&dir, cfg)?;
        *out = Box::into_raw(Box::new(MmeaDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from [`mmea_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmea_dataset_free(ds: *mut MmeaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Entity counts of the source and target graphs.
///
/// # Safety
/// `ds` must be a live dataset handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmea_dataset_entities(
    ds: *const MmeaDataset,
    n_source: *mut usize,
    n_target: *mut usize,
) -> MmeaStatus {
    guard(|| {
        let pair = &deref(ds, "ds")?.inner.pair;
        *deref_mut(n_source, "n_source")? = pair.source.n_entities;
        *deref_mut(n_target, "n_target")? = pair.target.n_entities;
        Ok(())
    })
}

/// Runs the full alignment pipeline. Evaluation against the dataset's test
/// seeds is included when they exist.
///
/// # Safety
/// `ds` and `cfg` must be live handles and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmea_align(
    ds: *const MmeaDataset,
    cfg: *const MmeaConfig,
    unsupervised: bool,
    out: *mut *mut MmeaRun,
) -> MmeaStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let ds = &deref(ds, "ds")?.inner;
        let cfg = &deref(cfg, "cfg")?.inner;
        let options = RunOptions {
            unsupervised,
            ..RunOptions::default()
        };
        let inner = pipeline::run(ds, cfg, &options, &mut NullSink)?;
        *out = Box::into_raw(Box::new(MmeaRun { inner }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from [`mmea_align`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmea_run_free(run: *mut MmeaRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Shape of the fused score matrix.
///
/// # Safety
/// `run` must be a live run handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmea_run_shape(run: *const MmeaRun, rows: *mut usize, cols: *mut usize) -> MmeaStatus {
    guard(|| {
        let m = &deref(run, "run")?.inner.fused;
        *deref_mut(rows, "rows")? = m.rows();
        *deref_mut(cols, "cols")? = m.cols();
        Ok(())
    })
}

/// Copies the fused score matrix, row-major, into `buf` of `len` doubles.
/// `len` must equal rows × cols.
///
/// # Safety
/// `run` must be a live run handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mmea_run_scores(run: *const MmeaRun, buf: *mut f64, len: usize) -> MmeaStatus {
    guard(|| {
        let m = &deref(run, "run")?.inner.fused;
        if len != m.rows() * m.cols() {
            return Err(Failure::Arg(format!(
                "buffer holds {len} values, matrix has {}",
                m.rows() * m.cols()
            )));
        }
        slice_mut(buf, len, "buf")?.copy_from_slice(m.as_slice());
        Ok(())
    })
}

/// Number of predicted pairs.
///
/// # Safety
/// `run` must be a live run handle and `n` writable.
#[no_mangle]
pub unsafe extern "C" fn mmea_run_prediction_count(run: *const MmeaRun, n: *mut usize) -> MmeaStatus {
    guard(|| {
        *deref_mut(n, "n")? = deref(run, "run")?.inner.predictions.len();
        Ok(())
    })
}

/// Predicted pair `index`, ordered by source entity.
///
/// # Safety
/// `run` must be a live run handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmea_run_prediction(
    run: *const MmeaRun,
    index: usize,
    src: *mut usize,
    tgt: *mut usize,
    score: *mut f64,
) -> MmeaStatus {
    guard(|| {
        let preds = &deref(run, "run")?.inner.predictions;
        let p = preds
            .pairs()
            .get(index)
            .ok_or_else(|| Failure::Arg(format!("prediction {index} out of range ({})", preds.len())))?;
        *deref_mut(src, "src")? = p.src;
        *deref_mut(tgt, "tgt")? = p.tgt;
        *deref_mut(score, "score")? = p.score.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Metrics of the run. Fails with `Unavailable` when the dataset had no test seeds.
///
/// `hits_n` / `hits` hold `n_hits` cutoffs and receive the matching Hits@N;
/// a cutoff not computed by the run yields `Unavailable`.
///
/// # Safety
/// `run` must be a live run handle; arrays must hold `n_hits` elements; the
/// scalar out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmea_run_metrics(
    run: *const MmeaRun,
    hits_n: *const usize,
    hits: *mut f64,
    n_hits: usize,
    mrr: *mut f64,
    mr: *mut f64,
) -> MmeaStatus {
    guard(|| {
        let run = &deref(run, "run")?.inner;
        let report = run
            .report
            .as_ref()
            .ok_or_else(|| Error::Unavailable("run has no test seeds to evaluate".into()))?;
        let ns = slice(hits_n, n_hits, "hits_n")?;
        let out = slice_mut(hits, n_hits, "hits")?;
        for (o, &n) in out.iter_mut().zip(ns) {
            *o = report
                .hits_at(n)
                .ok_or_else(|| Error::Unavailable(format!("Hits@{n} was not computed")))?;
        }
        *deref_mut(mrr, "mrr")? = report.mrr;
        *deref_mut(mr, "mr")? = report.mr;
        Ok(())
    })
}

/// Metrics as a JSON string owned by the caller (free with [`mmea_string_free`]).
///
/// # Safety
/// `run` must be a live run handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mmea_run_metrics_json(run: *const MmeaRun, out: *mut *mut c_char) -> MmeaStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let report = deref(run, "run")?
            .inner
            .report
            .as_ref()
            .ok_or_else(|| Error::Unavailable("run has no test seeds to evaluate".into()))?;
        *out = CString::new(report.to_json())
            .map_err(|e| Error::Internal(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Sinkhorn rescaling of a row-major `rows × cols` matrix into `out`.
///
/// # Safety
/// `data` and `out` must each be valid for `rows * cols` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn mmea_sinkhorn(
    data: *const f64,
    rows: usize,
    cols: usize,
    k: usize,
    out: *mut f64,
) -> MmeaStatus {
    guard(|| {
        let len = matrix_len(rows, cols)?;
        let x = DenseMatrix::from_vec(rows, cols, slice(data, len, "data")?.to_vec())?;
        let s = fusion::sinkhorn(&x, k)?;
        slice_mut(out, len, "out")?.copy_from_slice(s.as_slice());
        Ok(())
    })
}

/// Hits@N, MRR and MR of a row-major score matrix against `n_gold` gold pairs.
///
/// # Safety
/// `scores` must hold `rows * cols` doubles, `gold_src` / `gold_tgt` hold
/// `n_gold` indices, `hits_n` / `hits` hold `n_hits` elements, and the scalar
/// out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmea_evaluate(
    scores: *const f64,
    rows: usize,
    cols: usize,
    gold_src: *const usize,
    gold_tgt: *const usize,
    n_gold: usize,
    hits_n: *const usize,
    hits: *mut f64,
    n_hits: usize,
    mrr: *mut f64,
    mr: *mut f64,
) -> MmeaStatus {
    guard(|| {
        let len = matrix_len(rows, cols)?;
        let m = DenseMatrix::from_vec(rows, cols, slice(scores, len, "scores")?.to_vec())?;
        let src = slice(gold_src, n_gold, "gold_src")?;
        let tgt = slice(gold_tgt, n_gold, "gold_tgt")?;
        let gold = AlignmentSet::from_pairs(src.iter().copied().zip(tgt.iter().copied()));
        let ns = slice(hits_n, n_hits, "hits_n")?;
        if ns.contains(&0) {
            return Err(Failure::Arg("Hits@N cutoffs must be at least 1".into()));
        }
        let report = evalrank::evaluate(&m, &gold, ns)?;
        let out = slice_mut(hits, n_hits, "hits")?;
        for (o, &n) in out.iter_mut().zip(ns) {
            *o = report.hits_at(n).expect("cutoff was evaluated");
        }
        *deref_mut(mrr, "mrr")? = report.mrr;
        *deref_mut(mr, "mr")? = report.mr;
        Ok(())
    })
}

/// Writes a synthetic dataset pair into `dir` using default generator
/// settings apart from the given ones.
///
/// # Safety
/// `dir` must be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn mmea_synth_generate(
    dir: *const c_char,
    n_entities: usize,
    perturbation: f64,
    feat_noise_sigma: f64,
    seed_ratio: f64,
    seed: u64,
) -> MmeaStatus {
    guard(|| {
        let dir = PathBuf::from(c_str(dir, "dir")?);
        let spec = SynthSpec {
            n_entities,
            perturbation,
            feat_noise_sigma,
            seed_ratio,
            global_seed: seed,
            ..SynthSpec::default()
        };
        synth::generate(&spec, &dir)?;
        Ok(())
    })
}
