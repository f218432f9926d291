//! C interface to kgrank.
//!
//! Every function returns a [`KgStatus`]; on failure the message is available
//! from [`kgrank_last_error`] on the same thread. Handles are opaque and must
//! be released with their matching `*_free` function. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kgrank::corpus::{Corpus, Query};
use kgrank::index::{build_index, InvertedIndex};
use kgrank::kg::{
    extract_subgraph, load_kg, EntityLinker, KnowledgeGraph, MentionSource, QuerySubgraph, DEFAULT_MAX_NODES,
};
use kgrank::model::RankerModel;
use kgrank::pipeline::seeds;
use kgrank::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or out-of-range argument.
    InvalidArgument = 1,
    /// Missing or malformed input file.
    Input = 2,
    /// Internal invariant violation.
    Internal = 3,
    /// A Rust panic was caught.
    Panic = 4,
}

/// BM25 index handle.
pub struct KgIndex {
    inner: InvertedIndex,
}

/// Ranked `(doc id, score)` list.
pub struct KgHits {
    ids: Vec<CString>,
    scores: Vec<f64>,
}

/// Trained ranker, optionally with a knowledge graph for entity linking.
pub struct KgRanker {
    model: RankerModel,
    kg: Option<KnowledgeGraph>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(KgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = if e.exit_code() == 2 {
            KgStatus::Input
        } else {
            KgStatus::Internal
        };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(KgStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            KgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            KgStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not valid UTF-8")))
}

unsafe fn path(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    text(p, what).map(PathBuf::from)
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next kgrank call on the same thread.
#[no_mangle]
pub extern "C" fn kgrank_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn kgrank_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build an index from a JSONL corpus file.
///
/// # Safety
/// `corpus_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgrank_index_build(corpus_path: *const c_char, out: *mut *mut KgIndex) -> KgStatus {
    guard(|| {
        let corpus = Corpus::load(&path(corpus_path, "corpus_path")?)?;
        let inner = build_index(corpus.docs()).map_err(Error::from)?;
        put(out, Box::into_raw(Box::new(KgIndex { inner })), "out")
    })
}

/// # Safety
/// `index_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgrank_index_load(index_path: *const c_char, out: *mut *mut KgIndex) -> KgStatus {
    guard(|| {
        let inner = InvertedIndex::load(&path(index_path, "index_path")?)?;
        put(out, Box::into_raw(Box::new(KgIndex { inner })), "out")
    })
}

/// # Safety
/// `index` must come from this library; `index_path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn kgrank_index_save(index: *const KgIndex, index_path: *const c_char) -> KgStatus {
    guard(|| {
        let index = handle(index, "index")?;
        index.inner.save(&path(index_path, "index_path")?)?;
        Ok(())
    })
}

/// # Safety
/// `index` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgrank_index_num_docs(index: *const KgIndex, out: *mut usize) -> KgStatus {
    guard(|| {
        let n = handle(index, "index")?.inner.num_docs();
        put(out, n, "out")
    })
}

/// BM25 top-`k` for a free-text query. `k` must be positive.
///
/// # Safety
/// `index` must come from this library; `query` must be NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgrank_index_search(
    index: *const KgIndex,
    query: *const c_char,
    k: usize,
    out: *mut *mut KgHits,
) -> KgStatus {
    guard(|| {
        let index = handle(index, "index")?;
        let q = Query::new("q", text(query, "query")?);
        if k == 0 {
            return Err(invalid("k must be positive"));
        }
        let hits = index.inner.retrieve_topk(&q, k);
        let (ids, scores): (Vec<_>, Vec<_>) = hits
            .into_iter()
            .map(|(d, s)| (CString::new(d).unwrap_or_default(), s))
            .unzip();
        put(out, Box::into_raw(Box::new(KgHits { ids, scores })), "out")
    })
}

/// # Safety
/// `index` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn kgrank_index_free(index: *mut KgIndex) {
    if !index.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(index))));
    }
}

/// Number of hits; 0 for null.
///
/// # Safety
/// `hits` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn kgrank_hits_len(hits: *const KgHits) -> usize {
    hits.as_ref().map_or(0, |h| h.ids.len())
}

/// Document id at `i`; the pointer lives as long as `hits`. Null when out of range.
///
/// # Safety
/// `hits` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn kgrank_hits_doc_id(hits: *const KgHits, i: usize) -> *const c_char {
    hits.as_ref()
        .and_then(|h| h.ids.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// # Safety
/// `hits` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgrank_hits_score(hits: *const KgHits, i: usize, out: *mut f64) -> KgStatus {
    guard(|| {
        let hits = handle(hits, "hits")?;
        let s = *hits.scores.get(i).ok_or_else(|| invalid("hit index out of range"))?;
        put(out, s, "out")
    })
}

/// # Safety
/// `hits` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn kgrank_hits_free(hits: *mut KgHits) {
    if !hits.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(hits))));
    }
}

/// Load a ranker checkpoint. `kg_path` and `lexicon_path` may be null; without a
/// graph every pair is scored with an empty subgraph.
///
/// # Safety
/// Non-null strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgrank_ranker_load(
    checkpoint_path: *const c_char,
    kg_path: *const c_char,
    lexicon_path: *const c_char,
    out: *mut *mut KgRanker,
) -> KgStatus {
    guard(|| {
        let model = RankerModel::load(&path(checkpoint_path, "checkpoint_path")?)?;
        let kg = if kg_path.is_null() {
            None
        } else {
            let lex = if lexicon_path.is_null() {
                None
            } else {
                Some(path(lexicon_path, "lexicon_path")?)
            };
            Some(load_kg(&path(kg_path, "kg_path")?, lex.as_deref())?)
        };
        put(out, Box::into_raw(Box::new(KgRanker { model, kg })), "out")
    })
}

/// Relevance score (true minus false logit) of one query/document pair.
///
/// # Safety
/// `ranker` must come from this library; strings must be NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgrank_ranker_score(
    ranker: *const KgRanker,
    query: *const c_char,
    document: *const c_char,
    out: *mut f64,
) -> KgStatus {
    guard(|| {
        let r = handle(ranker, "ranker")?;
        let q = text(query, "query")?;
        let d = text(document, "document")?;
        let sg = match &r.kg {
            Some(kg) if !r.model.config().text_only => {
                let linker = EntityLinker::new(kg);
                let qs = seeds(&linker, q, MentionSource::Query);
                let ds = seeds(&linker, d, MentionSource::Document);
                extract_subgraph(kg, &qs, &ds, DEFAULT_MAX_NODES).map_err(Error::from)?
            }
            _ => QuerySubgraph::empty(),
        };
        let input = r.model.prepare(q, d, &sg).map_err(Error::from)?;
        let trace = r.model.score(&input).map_err(Error::from)?;
        put(out, trace.logit_diff, "out")
    })
}

/// # Safety
/// `ranker` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn kgrank_ranker_free(ranker: *mut KgRanker) {
    if !ranker.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(ranker))));
    }
}

/// Run the built-in self-checks. `passed` and `total` may be null.
/// Returns `Internal` when any check fails.
///
/// # Safety
/// Non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgrank_selftest(passed: *mut usize, total: *mut usize) -> KgStatus {
    guard(|| {
        let checks = kgrank::selftest::run_selftest();
        let ok = checks.iter().filter(|c| c.passed).count();
        if !passed.is_null() {
            passed.write(ok);
        }
        if !total.is_null() {
            total.write(checks.len());
        }
        match checks.iter().find(|c| !c.passed) {
            Some(c) => Err(Fail(KgStatus::Internal, format!("{}: {}", c.name, c.detail))),
            None => Ok(()),
        }
    })
}
