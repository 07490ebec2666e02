use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use hsim_core::corpus::{Corpus, CorpusConfig, TopicTree};
use hsim_core::simcore::rank_leaves_hsim;
use hsim_core::snapshot::{Snapshot, TrainMethod};
use hsim_core::synth::{generate, tree_spec, SynthConfig};
use hsim_core::train::{train, TrainConfig};
use hsim_ffi::*;

fn fixture(dir: &Path) -> (PathBuf, Snapshot, Corpus) {
    let c = SynthConfig {
        docs_per_leaf: 6,
        ..SynthConfig::default()
    };
    let corpus = Corpus::build(
        &generate(&c),
        TopicTree::from_spec(&tree_spec(&c)).unwrap(),
        CorpusConfig::default(),
    )
    .unwrap();
    let snap = train(&corpus, &[], &TrainConfig::new(TrainMethod::Untrained, 3)).unwrap();
    let path = dir.join("m.snapshot");
    snap.save(&path).unwrap();
    (path, snap, corpus)
}

fn load(path: &Path) -> *mut HsimModel {
    let p = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { hsim_model_load(p.as_ptr(), &mut m) },
        HsimStatus::Ok
    );
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let mut buf = [0 as c_char; 512];
    let n = unsafe { hsim_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_str()
        .unwrap()
        .to_owned()
}

#[test]
fn ranking_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, snap, corpus) = fixture(dir.path());
    let m = load(&path);
    let mut k = 0usize;
    let mut h = 0usize;
    unsafe {
        assert_eq!(hsim_model_leaf_count(m, &mut k), HsimStatus::Ok);
        assert_eq!(hsim_model_height(m, &mut h), HsimStatus::Ok);
    }
    assert_eq!((k, h), (16, 3));

    for d in corpus.docs.iter().take(20) {
        let want = rank_leaves_hsim(&d.counts, &snap.model);
        let mut order = vec![0usize; k];
        let mut scores = vec![0.0f64; k];
        let text = CString::new(d.text.as_str()).unwrap();
        let s =
            unsafe { hsim_rank_text(m, text.as_ptr(), order.as_mut_ptr(), scores.as_mut_ptr(), k) };
        assert_eq!(s, HsimStatus::Ok);
        assert_eq!(order, want.order);
        assert_eq!(scores, want.scores);

        let (idx, val): (Vec<u32>, Vec<f64>) = d.counts.iter().map(|(i, v)| (i as u32, v)).unzip();
        let mut order2 = vec![0usize; k];
        let s = unsafe {
            hsim_rank_counts(
                m,
                idx.as_ptr(),
                val.as_ptr(),
                idx.len(),
                order2.as_mut_ptr(),
                ptr::null_mut(),
                k,
            )
        };
        assert_eq!(s, HsimStatus::Ok);
        assert_eq!(order2, want.order);
    }
    unsafe { hsim_model_free(m) };
}

#[test]
fn leaf_paths_and_small_buffers() {
    let dir = tempfile::tempdir().unwrap();
    let (path, snap, _) = fixture(dir.path());
    let m = load(&path);
    let want = snap.model.tree.leaf_path(5);
    let mut needed = 0usize;
    let mut tiny = [0 as c_char; 4];
    let s = unsafe { hsim_model_leaf_path(m, 5, tiny.as_mut_ptr(), tiny.len(), &mut needed) };
    assert_eq!(s, HsimStatus::BufferTooSmall);
    assert_eq!(needed, want.len() + 1);
    let mut buf = vec![0 as c_char; needed];
    let s = unsafe { hsim_model_leaf_path(m, 5, buf.as_mut_ptr(), buf.len(), ptr::null_mut()) };
    assert_eq!(s, HsimStatus::Ok);
    assert_eq!(
        unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(),
        want
    );
    let s = unsafe { hsim_model_leaf_path(m, 16, buf.as_mut_ptr(), buf.len(), ptr::null_mut()) };
    assert_eq!(s, HsimStatus::OutOfRange);
    assert!(last_error().contains("out of range"));
    unsafe { hsim_model_free(m) };
}

#[test]
fn error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _, _) = fixture(dir.path());
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(
            hsim_model_load(ptr::null(), &mut m),
            HsimStatus::NullPointer
        );
        let missing = CString::new(dir.path().join("none").to_str().unwrap()).unwrap();
        assert_eq!(hsim_model_load(missing.as_ptr(), &mut m), HsimStatus::Io);
        assert!(m.is_null());
        let garbage = dir.path().join("bad.snapshot");
        std::fs::write(&garbage, "{\"format\": \"other\"}").unwrap();
        let g = CString::new(garbage.to_str().unwrap()).unwrap();
        assert_eq!(hsim_model_load(g.as_ptr(), &mut m), HsimStatus::Format);
        let bad_utf8 = [0xffu8 as c_char, 0];
        assert_eq!(
            hsim_model_load(bad_utf8.as_ptr(), &mut m),
            HsimStatus::InvalidUtf8
        );
        assert_eq!(
            hsim_model_leaf_count(ptr::null(), &mut 0),
            HsimStatus::NullPointer
        );
    }

    let m = load(&path);
    let mut order = vec![0usize; 16];
    unsafe {
        let empty = CString::new("?? !!").unwrap();
        let s = hsim_rank_text(m, empty.as_ptr(), order.as_mut_ptr(), ptr::null_mut(), 16);
        assert_eq!(s, HsimStatus::EmptyDocument);
        assert_eq!(order, (0..16).collect::<Vec<_>>());
        let s = hsim_rank_text(m, empty.as_ptr(), order.as_mut_ptr(), ptr::null_mut(), 3);
        assert_eq!(s, HsimStatus::InvalidArgument);
        let (i, v) = ([1_000_000u32], [1.0]);
        let s = hsim_rank_counts(
            m,
            i.as_ptr(),
            v.as_ptr(),
            1,
            order.as_mut_ptr(),
            ptr::null_mut(),
            16,
        );
        assert_eq!(s, HsimStatus::OutOfRange);
        let (i, v) = ([0u32], [f64::NAN]);
        let s = hsim_rank_counts(
            m,
            i.as_ptr(),
            v.as_ptr(),
            1,
            order.as_mut_ptr(),
            ptr::null_mut(),
            16,
        );
        assert_eq!(s, HsimStatus::InvalidArgument);
        hsim_model_free(m);
        hsim_model_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(hsim_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_interface() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hsim.h"))
            .unwrap();
    for name in [
        "hsim_model_load",
        "hsim_model_free",
        "hsim_model_leaf_count",
        "hsim_model_height",
        "hsim_model_leaf_path",
        "hsim_rank_text",
        "hsim_rank_counts",
        "hsim_last_error",
        "hsim_version",
        "HSIM_STATUS_BUFFER_TOO_SMALL",
        "typedef struct HsimModel HsimModel;",
    ] {
        assert!(header.contains(name), "{name} missing from the header");
    }
}

/// Compiles the C smoke program against the header and the static library
/// and checks its output against the library's own ranking.
#[test]
fn c_program_links_and_ranks() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_owned();
    let lib = profile_dir.join("libhsim_ffi.a");
    assert!(
        lib.exists(),
        "static library not built at {}",
        lib.display()
    );

    let dir = tempfile::tempdir().unwrap();
    let (path, snap, corpus) = fixture(dir.path());
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-o")
        .arg(&exe)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl"])
        .output()
        .expect("a C compiler named cc");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let doc = &corpus.docs[3];
    let run = Command::new(&exe)
        .arg(&path)
        .arg(&doc.text)
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let want = rank_leaves_hsim(&doc.counts, &snap.model);
    let lines: Vec<String> = String::from_utf8(run.stdout)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    assert_eq!(lines.len(), want.len());
    for (line, (&k, &s)) in lines.iter().zip(want.order.iter().zip(&want.scores)) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[0].parse::<usize>().unwrap(), k);
        assert_eq!(cols[1].parse::<f64>().unwrap(), s);
        assert_eq!(cols[2], snap.model.tree.leaf_path(k));
    }
}
