use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use lpcond_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        lpcond_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn model(json: &str) -> *mut LpcondModel {
    let c = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { lpcond_model_from_json(c.as_ptr(), &mut out) },
        LpcondStatus::Ok
    );
    assert!(!out.is_null());
    out
}

#[test]
fn worked_example_displacement() {
    let seq = [6usize, 9, 1, 9, 9, 6, 2, 5];
    let mut total = 0u64;
    let st = unsafe { lpcond_total_displacement(10, seq.as_ptr(), seq.len(), &mut total) };
    assert_eq!(st, LpcondStatus::Ok);
    assert_eq!(total, 6);
}

#[test]
fn exact_conditional_matches_enumeration() {
    let m = model(r#"{"kind":"hashing","params":{"n":4},"m":6}"#);
    let mut n_summands = 0u64;
    let mut target = 0i64;
    unsafe {
        assert_eq!(
            lpcond_model_condition(m, &mut n_summands, &mut target),
            LpcondStatus::Ok
        );
        assert_eq!((n_summands, target), (2, 6));

        let mut law = ptr::null_mut();
        let mut p = 0.0;
        assert_eq!(
            lpcond_exact_conditional(m, &mut law, &mut p),
            LpcondStatus::Ok
        );
        assert!(p > 0.0 && p < 1.0);
        let mut direct = ptr::null_mut();
        assert_eq!(
            lpcond_exact_displacement(6, 4, &mut direct),
            LpcondStatus::Ok
        );

        assert_eq!(lpcond_pmf_len(law), lpcond_pmf_len(direct));
        let mut total = 0.0;
        for i in 0..lpcond_pmf_len(direct) {
            let (mut v, mut q) = (0i64, 0.0);
            assert_eq!(lpcond_pmf_atom(direct, i, &mut v, &mut q), LpcondStatus::Ok);
            assert!((lpcond_pmf_prob(law, v) - q).abs() < 1e-12);
            total += q;
        }
        assert!((total - 1.0).abs() < 1e-12);
        assert!((lpcond_pmf_mean(law) - lpcond_pmf_mean(direct)).abs() < 1e-12);
        assert!(lpcond_pmf_variance(law) > 0.0);

        let (mut v, mut q) = (0i64, 0.0);
        assert_eq!(
            lpcond_pmf_atom(law, 10_000, &mut v, &mut q),
            LpcondStatus::OutOfRange
        );
        assert!(last_error().contains("out of range"));

        lpcond_pmf_free(law);
        lpcond_pmf_free(direct);
        lpcond_model_free(m);
    }
}

#[test]
fn sampling_is_seeded() {
    let m = model(r#"{"kind":"occupancy","params":{"lambda":1.0},"N":20,"m":20}"#);
    let draw = |seed| {
        let mut values = vec![0i64; 500];
        let (mut written, mut attempts) = (0usize, 0u64);
        let st = unsafe {
            lpcond_sample_conditional(
                m,
                seed,
                values.len(),
                0,
                values.as_mut_ptr(),
                &mut written,
                &mut attempts,
            )
        };
        assert_eq!(st, LpcondStatus::Ok);
        assert_eq!(written, 500);
        assert!(attempts >= 500);
        values
    };
    let a = draw(3);
    assert_eq!(a, draw(3));
    assert!(a.iter().all(|&v| (0..=20).contains(&v)));
    let mut p = 0.0;
    let mut ratio = 0.0;
    assert_eq!(
        unsafe { lpcond_local_limit(m, &mut p, &mut ratio) },
        LpcondStatus::Ok
    );
    assert!((ratio - 1.0).abs() < 0.05);
    unsafe { lpcond_model_free(m) };
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut out = ptr::null_mut();
        let bad = CString::new(r#"{"kind":"hashing"}"#).unwrap();
        assert_eq!(
            lpcond_model_from_json(bad.as_ptr(), &mut out),
            LpcondStatus::InvalidInput
        );
        assert!(out.is_null());
        assert!(last_error().contains("needs"));

        assert_eq!(
            lpcond_model_from_json(ptr::null(), &mut out),
            LpcondStatus::NullPointer
        );
        let mut total = 0u64;
        let full = [1usize, 1, 1];
        assert_eq!(
            lpcond_total_displacement(2, full.as_ptr(), 3, &mut total),
            LpcondStatus::Capacity
        );

        let mut law = ptr::null_mut();
        assert_eq!(
            lpcond_exact_displacement(3, 5, &mut law),
            LpcondStatus::Capacity
        );
        assert!(law.is_null());

        let mut tiny = [0 as c_char; 4];
        let full_len = lpcond_last_error_message(tiny.as_mut_ptr(), tiny.len());
        assert!(full_len > 3);
        assert_eq!(CStr::from_ptr(tiny.as_ptr()).to_bytes().len(), 3);

        let seq = [1usize];
        assert_eq!(
            lpcond_total_displacement(2, seq.as_ptr(), 1, &mut total),
            LpcondStatus::Ok
        );
        assert_eq!(lpcond_last_error_message(ptr::null_mut(), 0), 0);

        lpcond_model_free(ptr::null_mut());
        lpcond_pmf_free(ptr::null_mut());
        lpcond_string_free(ptr::null_mut());
        assert_eq!(lpcond_pmf_len(ptr::null()), 0);
        assert!(lpcond_pmf_mean(ptr::null()).is_nan());
    }
}

#[test]
fn run_returns_cli_output() {
    let args: Vec<CString> = ["lpcond", "enumerate", "--m", "5", "--n", "3"]
        .iter()
        .map(|s| CString::new(*s).unwrap())
        .collect();
    let ptrs: Vec<*const c_char> = args.iter().map(|s| s.as_ptr()).collect();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(
            lpcond_run(ptrs.len(), ptrs.as_ptr(), &mut out),
            LpcondStatus::Ok
        );
        let text = CStr::from_ptr(out).to_str().unwrap().to_string();
        lpcond_string_free(out);
        assert_eq!(
            text.into_bytes(),
            lpcond::cli::run_to_bytes(["lpcond", "enumerate", "--m", "5", "--n", "3"]).unwrap()
        );

        let bad: Vec<CString> = ["lpcond", "enumerate", "--m", "2", "--n", "5"]
            .iter()
            .map(|s| CString::new(*s).unwrap())
            .collect();
        let ptrs: Vec<*const c_char> = bad.iter().map(|s| s.as_ptr()).collect();
        assert_ne!(
            lpcond_run(ptrs.len(), ptrs.as_ptr(), &mut out),
            LpcondStatus::Ok
        );
        assert!(out.is_null());
    }
    let v = unsafe { CStr::from_ptr(lpcond_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include").join("lpcond.h");
    assert!(header.exists());
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "lpcond_model_from_json",
        "lpcond_pmf_free",
        "lpcond_run",
        "LPCOND_STATUS_OK",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }

    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join("liblpcond_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!(
            "skipping C link check: no C compiler or static library at {}",
            lib.display()
        );
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "lpcond.h"
int main(void) {
    size_t seq[] = {6, 9, 1, 9, 9, 6, 2, 5};
    uint64_t total = 0;
    if (lpcond_total_displacement(10, seq, 8, &total) != LPCOND_STATUS_OK) return 1;
    LpcondModel *m = NULL;
    if (lpcond_model_from_json("{\"kind\":\"hashing\",\"params\":{\"n\":4},\"m\":6}", &m) != LPCOND_STATUS_OK) return 2;
    LpcondPmf *law = NULL;
    double p = 0.0;
    if (lpcond_exact_conditional(m, &law, &p) != LPCOND_STATUS_OK) return 3;
    printf("%llu %zu %.6f\n", (unsigned long long)total, lpcond_pmf_len(law), lpcond_pmf_mean(law));
    lpcond_pmf_free(law);
    lpcond_model_free(m);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success());
    let line = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields[0], "6");
    std::fs::remove_dir_all(&dir).ok();
}

fn tempfile_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join(format!("ffi-smoke-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
