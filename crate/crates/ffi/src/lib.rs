//! C ABI over the mapstory pipeline.
//!
//! Handles are opaque. Every call returns a [`MapstoryStatus`]; on failure
//! the message is kept per thread and read with
//! [`mapstory_last_error_message`]. Strings handed out by this library are
//! NUL-terminated UTF-8 and must be released with [`mapstory_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mapstory::pipeline::{PipelineError, PredictResponse};
use mapstory::story::compose_prompt;
use mapstory::taxonomy::{parse_aspects, Aspect, CaptionCategory, VocabularySet};
use mapstory::{Pipeline, ServiceConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapstoryStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidImage = 4,
    InvalidAspects = 5,
    UnknownCategory = 6,
    Inference = 7,
    Panic = 8,
}

/// Loaded keyword classifiers, decision tree and story settings.
pub struct MapstoryPipeline {
    inner: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MapstoryStatus, String);

impl Failure {
    fn new(status: MapstoryStatus, message: impl ToString) -> Self {
        Failure(status, message.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::UnknownCategory(_) => MapstoryStatus::UnknownCategory,
            PipelineError::Config(_)
            | PipelineError::Taxonomy(_)
            | PipelineError::MissingVocabulary(_)
            | PipelineError::CheckpointMismatch { .. }
            | PipelineError::Encoder(_)
            | PipelineError::TextGen(_) => MapstoryStatus::Config,
            PipelineError::Tree(_) | PipelineError::Classify(_) => MapstoryStatus::Inference,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `body`, records any failure or panic, and maps it to a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> MapstoryStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            MapstoryStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MapstoryStatus::Panic
        }
    }
}

unsafe fn c_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::new(
            MapstoryStatus::NullArgument,
            format!("{what} is NULL"),
        ));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::new(MapstoryStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn bytes<'a>(ptr: *const u8, len: usize, what: &str) -> Result<&'a [u8], Failure> {
    if ptr.is_null() {
        return Err(Failure::new(
            MapstoryStatus::NullArgument,
            format!("{what} is NULL"),
        ));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn pipeline<'a>(handle: *const MapstoryPipeline) -> Result<&'a Pipeline, Failure> {
    handle
        .as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| Failure::new(MapstoryStatus::NullArgument, "pipeline handle is NULL"))
}

unsafe fn write_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    let c = CString::new(value).map_err(|e| Failure::new(MapstoryStatus::Inference, e))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::new(
            MapstoryStatus::NullArgument,
            "output pointer is NULL",
        ))
    } else {
        Ok(())
    }
}

fn aspects_or_all(list: Option<&str>) -> Result<Vec<Aspect>, Failure> {
    let aspects = match list {
        None => Aspect::ALL.to_vec(),
        Some(l) => parse_aspects(l).map_err(|e| Failure::new(MapstoryStatus::InvalidAspects, e))?,
    };
    if aspects.is_empty() {
        return Err(Failure::new(
            MapstoryStatus::InvalidAspects,
            "select at least one aspect",
        ));
    }
    Ok(aspects)
}

fn open_with(
    out: *mut *mut MapstoryPipeline,
    build: impl FnOnce() -> Result<Pipeline, Failure>,
) -> MapstoryStatus {
    guard(|| {
        check_out(out)?;
        let inner = build()?;
        unsafe { *out = Box::into_raw(Box::new(MapstoryPipeline { inner })) };
        Ok(())
    })
}

/// Opens a pipeline from a service config file (TOML).
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mapstory_pipeline_open(
    config_path: *const c_char,
    out: *mut *mut MapstoryPipeline,
) -> MapstoryStatus {
    open_with(out, || {
        let path = c_str(config_path, "config_path")?;
        Ok(ServiceConfig::load(Path::new(path))?.build_pipeline()?)
    })
}

/// Opens a pipeline with deterministic mock classifiers over the
/// vocabularies in `vocab_path` and the built-in tree.
///
/// # Safety
/// `vocab_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mapstory_pipeline_open_mock(
    vocab_path: *const c_char,
    out: *mut *mut MapstoryPipeline,
) -> MapstoryStatus {
    open_with(out, || {
        let path = c_str(vocab_path, "vocab_path")?;
        let vocabs = VocabularySet::load(Path::new(path))
            .map_err(|e| Failure::new(MapstoryStatus::Config, e))?;
        Ok(Pipeline::mock(vocabs)?)
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `handle` must come from an open call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mapstory_pipeline_free(handle: *mut MapstoryPipeline) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Story for an encoded image (PNG or JPEG). `aspects` is a comma list
/// such as "where,what"; NULL selects all four. Writes the JSON response
/// body to `out_json`.
///
/// # Safety
/// `image` must point to `image_len` readable bytes; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mapstory_story(
    handle: *const MapstoryPipeline,
    image: *const u8,
    image_len: usize,
    aspects: *const c_char,
    out_json: *mut *mut c_char,
) -> MapstoryStatus {
    guard(|| {
        check_out(out_json)?;
        let pipeline = pipeline(handle)?;
        let list = if aspects.is_null() {
            None
        } else {
            Some(c_str(aspects, "aspects")?)
        };
        let aspects = aspects_or_all(list)?;
        let img = mapstory::ingest::decode_image(bytes(image, image_len, "image")?)
            .map_err(|e| Failure::new(MapstoryStatus::InvalidImage, e))?;
        let response = pipeline.story(&img, &aspects)?;
        write_string(
            out_json,
            serde_json::to_string(&response).expect("response serializes"),
        )
    })
}

/// Single-category prediction; writes `{"label", "scores"}` JSON.
///
/// # Safety
/// As for [`mapstory_story`]; `category` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mapstory_predict(
    handle: *const MapstoryPipeline,
    category: *const c_char,
    image: *const u8,
    image_len: usize,
    out_json: *mut *mut c_char,
) -> MapstoryStatus {
    guard(|| {
        check_out(out_json)?;
        let pipeline = pipeline(handle)?;
        let category: CaptionCategory = c_str(category, "category")?
            .parse()
            .map_err(|e| Failure::new(MapstoryStatus::UnknownCategory, e))?;
        let img = mapstory::ingest::decode_image(bytes(image, image_len, "image")?)
            .map_err(|e| Failure::new(MapstoryStatus::InvalidImage, e))?;
        let prediction = pipeline.predict(category, &img)?;
        write_string(
            out_json,
            serde_json::to_string(&PredictResponse::from(prediction)).expect("response serializes"),
        )
    })
}

/// The story prompt for `keyword_count` keywords and an aspect list
/// (NULL selects all four).
///
/// # Safety
/// `keywords` must point to `keyword_count` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mapstory_compose_prompt(
    keywords: *const *const c_char,
    keyword_count: usize,
    aspects: *const c_char,
    out_prompt: *mut *mut c_char,
) -> MapstoryStatus {
    guard(|| {
        check_out(out_prompt)?;
        if keywords.is_null() && keyword_count > 0 {
            return Err(Failure::new(
                MapstoryStatus::NullArgument,
                "keywords is NULL",
            ));
        }
        let words = (0..keyword_count)
            .map(|i| c_str(*keywords.add(i), "keyword").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let list = if aspects.is_null() {
            None
        } else {
            Some(c_str(aspects, "aspects")?)
        };
        let aspects = aspects_or_all(list)?;
        let prompt = compose_prompt(&words, &aspects)
            .map_err(|e| Failure::new(MapstoryStatus::InvalidAspects, e))?;
        write_string(out_prompt, prompt)
    })
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mapstory_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or NULL after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mapstory_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn mapstory_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version string"),
        };
    VERSION.as_ptr()
}
