use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use kgrank_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn cpath(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = kgrank_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn corpus(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("corpus.jsonl");
    std::fs::write(
        &p,
        concat!(
            "{\"id\":\"d1\",\"text\":\"bone marrow transplant outcomes\"}\n",
            "{\"id\":\"d2\",\"text\":\"marrow cells\"}\n",
            "{\"id\":\"d3\",\"text\":\"unrelated words here\"}\n",
        ),
    )
    .unwrap();
    p
}

#[test]
fn index_build_search_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = cpath(&corpus(dir.path()));
    unsafe {
        let mut idx = ptr::null_mut();
        assert_eq!(kgrank_index_build(corpus.as_ptr(), &mut idx), KgStatus::Ok);
        let mut n = 0;
        assert_eq!(kgrank_index_num_docs(idx, &mut n), KgStatus::Ok);
        assert_eq!(n, 3);

        let mut hits = ptr::null_mut();
        assert_eq!(
            kgrank_index_search(idx, c("marrow").as_ptr(), 10, &mut hits),
            KgStatus::Ok
        );
        assert_eq!(kgrank_hits_len(hits), 2);
        let first = CStr::from_ptr(kgrank_hits_doc_id(hits, 0)).to_str().unwrap();
        // the shorter document wins on length normalisation
        assert_eq!(first, "d2");
        let (mut s0, mut s1) = (0.0, 0.0);
        assert_eq!(kgrank_hits_score(hits, 0, &mut s0), KgStatus::Ok);
        assert_eq!(kgrank_hits_score(hits, 1, &mut s1), KgStatus::Ok);
        assert!(s0 > s1 && s1 > 0.0);
        assert!(kgrank_hits_doc_id(hits, 2).is_null());
        assert_eq!(kgrank_hits_score(hits, 2, &mut s0), KgStatus::InvalidArgument);

        let saved = cpath(&dir.path().join("index.json"));
        assert_eq!(kgrank_index_save(idx, saved.as_ptr()), KgStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(kgrank_index_load(saved.as_ptr(), &mut again), KgStatus::Ok);
        let mut hits2 = ptr::null_mut();
        assert_eq!(
            kgrank_index_search(again, c("marrow").as_ptr(), 10, &mut hits2),
            KgStatus::Ok
        );
        assert_eq!(kgrank_hits_len(hits2), 2);
        let mut t0 = 0.0;
        kgrank_hits_score(hits2, 0, &mut t0);
        assert_eq!(t0.to_bits(), s0.to_bits());

        kgrank_hits_free(hits);
        kgrank_hits_free(hits2);
        kgrank_index_free(idx);
        kgrank_index_free(again);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut idx = ptr::null_mut();
        assert_eq!(kgrank_index_build(ptr::null(), &mut idx), KgStatus::InvalidArgument);
        assert!(last_error().contains("corpus_path"));
        assert!(idx.is_null());

        let missing = c("/nonexistent/corpus.jsonl");
        assert_eq!(kgrank_index_build(missing.as_ptr(), &mut idx), KgStatus::Input);
        assert!(last_error().contains("nonexistent"));

        let mut n = 0;
        assert_eq!(kgrank_index_num_docs(ptr::null(), &mut n), KgStatus::InvalidArgument);

        let bad_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(
            kgrank_index_build(bad_utf8.as_ptr().cast(), &mut idx),
            KgStatus::InvalidArgument
        );
        assert!(last_error().contains("UTF-8"));

        // success clears the previous message
        let v = CStr::from_ptr(kgrank_version()).to_str().unwrap();
        assert!(!v.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let corpus = cpath(&corpus(dir.path()));
        assert_eq!(kgrank_index_build(corpus.as_ptr(), &mut idx), KgStatus::Ok);
        assert!(kgrank_last_error().is_null());
        let mut hits = ptr::null_mut();
        assert_eq!(
            kgrank_index_search(idx, c("x").as_ptr(), 0, &mut hits),
            KgStatus::InvalidArgument
        );
        kgrank_index_free(idx);

        // frees accept null
        kgrank_index_free(ptr::null_mut());
        kgrank_hits_free(ptr::null_mut());
        kgrank_ranker_free(ptr::null_mut());
        assert_eq!(kgrank_hits_len(ptr::null()), 0);
    }
}

#[test]
fn errors_are_thread_local() {
    unsafe {
        let mut idx = ptr::null_mut();
        assert_eq!(kgrank_index_build(ptr::null(), &mut idx), KgStatus::InvalidArgument);
    }
    let other = std::thread::spawn(|| kgrank_last_error().is_null()).join().unwrap();
    assert!(other);
    assert!(!kgrank_last_error().is_null());
}

#[test]
fn ranker_scores_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = kgrank::selftest::tiny_instance(kgrank::selftest::tiny_config(), 3).unwrap();
    let ckpt = dir.path().join("model.json");
    model.save(&ckpt).unwrap();
    let kg = dir.path().join("kg.tsv");
    std::fs::write(&kg, "e1\tr0\te2\n").unwrap();

    let expect = {
        let input = model
            .prepare("alpha beta", "gamma delta", &kgrank::kg::QuerySubgraph::empty())
            .unwrap();
        model.score(&input).unwrap().logit_diff
    };
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(
            kgrank_ranker_load(cpath(&ckpt).as_ptr(), ptr::null(), ptr::null(), &mut r),
            KgStatus::Ok
        );
        let mut s = 0.0;
        assert_eq!(
            kgrank_ranker_score(r, c("alpha beta").as_ptr(), c("gamma delta").as_ptr(), &mut s),
            KgStatus::Ok
        );
        assert_eq!(s.to_bits(), expect.to_bits());
        kgrank_ranker_free(r);

        // with a graph whose entities are absent from the texts, the subgraph is empty too
        let mut r = ptr::null_mut();
        assert_eq!(
            kgrank_ranker_load(cpath(&ckpt).as_ptr(), cpath(&kg).as_ptr(), ptr::null(), &mut r),
            KgStatus::Ok
        );
        let mut s2 = 0.0;
        assert_eq!(
            kgrank_ranker_score(r, c("alpha beta").as_ptr(), c("gamma delta").as_ptr(), &mut s2),
            KgStatus::Ok
        );
        assert_eq!(s2.to_bits(), expect.to_bits());
        assert_eq!(
            kgrank_ranker_score(r, ptr::null(), c("x").as_ptr(), &mut s2),
            KgStatus::InvalidArgument
        );
        kgrank_ranker_free(r);

        let junk = dir.path().join("junk.json");
        std::fs::write(&junk, "{}").unwrap();
        let mut r = ptr::null_mut();
        let st = kgrank_ranker_load(cpath(&junk).as_ptr(), ptr::null(), ptr::null(), &mut r);
        assert_ne!(st, KgStatus::Ok);
        assert!(r.is_null());
    }
}

#[test]
fn selftest_passes_through_the_c_interface() {
    let (mut passed, mut total) = (0, 0);
    assert_eq!(unsafe { kgrank_selftest(&mut passed, &mut total) }, KgStatus::Ok);
    assert!(total > 0);
    assert_eq!(passed, total);
}

#[test]
fn header_declares_every_entry_point_and_compiles() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/kgrank.h");
    let header = std::fs::read_to_string(&header_path).unwrap();
    for f in [
        "kgrank_last_error",
        "kgrank_version",
        "kgrank_index_build",
        "kgrank_index_load",
        "kgrank_index_save",
        "kgrank_index_num_docs",
        "kgrank_index_search",
        "kgrank_index_free",
        "kgrank_hits_len",
        "kgrank_hits_doc_id",
        "kgrank_hits_score",
        "kgrank_hits_free",
        "kgrank_ranker_load",
        "kgrank_ranker_score",
        "kgrank_ranker_free",
        "kgrank_selftest",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct KgIndex KgIndex;"));
    // a C compiler is optional in the build environment
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(&header_path)
        .status()
    else {
        return;
    };
    assert!(status.success(), "header does not compile as C99");
}
