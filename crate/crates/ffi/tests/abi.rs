use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use stepselect_ffi::*;

fn last_error() -> String {
    let p = ss_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn steps(sel: *const ss_selection) -> Vec<usize> {
    unsafe { std::slice::from_raw_parts(ss_selection_steps(sel), ss_selection_len(sel)).to_vec() }
}

#[test]
fn synthesize_select_and_free() {
    let family = CString::new("burst").unwrap();
    let bursts = [20usize];
    let mut ds = ptr::null_mut();
    let status = unsafe {
        ss_dataset_synthesize(family.as_ptr(), 40, 16, 16, 7, bursts.as_ptr(), 1, &mut ds)
    };
    assert_eq!(status, ss_status::SS_OK);
    unsafe {
        assert_eq!(
            (
                ss_dataset_len(ds),
                ss_dataset_width(ds),
                ss_dataset_height(ds)
            ),
            (40, 16, 16)
        );
    }

    let pinned = [7usize];
    let mut params = ss_select_params_default(0, 39, 5, 1.0, 0.0);
    params.pinned = pinned.as_ptr();
    params.pinned_len = 1;
    let mut sel = ptr::null_mut();
    assert_eq!(
        unsafe { ss_select(ds, &params, &mut sel) },
        ss_status::SS_OK
    );
    let s = steps(sel);
    assert_eq!(s.len(), 5);
    assert_eq!((s[0], s[4]), (0, 39));
    assert!(s.contains(&7));
    assert!(unsafe { ss_selection_total_cost(sel) }.is_finite());
    unsafe {
        ss_selection_free(sel);
        ss_dataset_free(ds);
    }
}

#[test]
fn constraint_errors_carry_a_message() {
    let mut ds = ptr::null_mut();
    let family = CString::new("ramp").unwrap();
    assert_eq!(
        unsafe { ss_dataset_synthesize(family.as_ptr(), 10, 4, 4, 0, ptr::null(), 0, &mut ds) },
        ss_status::SS_OK
    );
    let params = ss_select_params_default(0, 9, 3, 0.6, 0.5);
    let mut sel = ptr::null_mut();
    assert_eq!(
        unsafe { ss_select(ds, &params, &mut sel) },
        ss_status::SS_ERR_CONSTRAINT
    );
    assert!(sel.is_null());
    assert!(last_error().contains("alpha + beta"));
    unsafe { ss_dataset_free(ds) };
}

#[test]
fn null_and_bad_arguments() {
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { ss_dataset_open(ptr::null(), &mut ds) },
        ss_status::SS_ERR_NULL_POINTER
    );
    let missing = CString::new("/definitely/not/here").unwrap();
    assert_eq!(
        unsafe { ss_dataset_open(missing.as_ptr(), &mut ds) },
        ss_status::SS_ERR_NOT_FOUND
    );
    let bad = CString::new("spiral").unwrap();
    assert_eq!(
        unsafe { ss_dataset_synthesize(bad.as_ptr(), 4, 2, 2, 0, ptr::null(), 0, &mut ds) },
        ss_status::SS_ERR_FORMAT
    );
    let params = ss_select_params_default(0, 3, 2, 1.0, 0.0);
    let mut sel = ptr::null_mut();
    assert_eq!(
        unsafe { ss_select(ptr::null(), &params, &mut sel) },
        ss_status::SS_ERR_NULL_POINTER
    );
    unsafe {
        assert_eq!(ss_dataset_len(ptr::null()), 0);
        assert!(ss_selection_steps(ptr::null()).is_null());
        ss_dataset_free(ptr::null_mut());
        ss_selection_free(ptr::null_mut());
    }
}

#[test]
fn dataset_from_values_round_trip() {
    let id = CString::new("raw").unwrap();
    let values: Vec<f64> = (0..3 * 4).map(f64::from).collect();
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { ss_dataset_from_values(id.as_ptr(), 2, 2, 3, values.as_ptr(), &mut ds) },
        ss_status::SS_OK
    );
    assert_eq!(unsafe { ss_dataset_len(ds) }, 3);
    unsafe { ss_dataset_free(ds) };
}

#[test]
fn select_with_costs_matches_pure_distance() {
    let (n, k) = (21usize, 5usize);
    let costs: Vec<f64> = (0..n * n)
        .map(|c| ss_distance_cost(c / n, c % n, n, k, 1.0, 1.0))
        .collect();
    let mut sel = ptr::null_mut();
    let status = unsafe {
        ss_select_with_costs(
            n,
            k,
            costs.as_ptr(),
            ptr::null(),
            0,
            ptr::null(),
            0,
            &mut sel,
        )
    };
    assert_eq!(status, ss_status::SS_OK);
    assert_eq!(steps(sel), vec![0, 5, 10, 15, 20]);
    unsafe { ss_selection_free(sel) };

    let excluded = [5usize];
    let status = unsafe {
        ss_select_with_costs(
            n,
            k,
            costs.as_ptr(),
            ptr::null(),
            0,
            excluded.as_ptr(),
            1,
            &mut sel,
        )
    };
    assert_eq!(status, ss_status::SS_OK);
    assert!(!steps(sel).contains(&5));
    unsafe { ss_selection_free(sel) };
}

#[test]
fn formula_helpers() {
    assert!((ss_structural_cost(0.5) - 0.5).abs() < 1e-12);
    assert!((ss_statistical_cost(0.0, 1.0) - 0.238405844044).abs() < 1e-9);
    assert_eq!(ss_statistical_cost(f64::NAN, 0.3), 1.0);
    assert!((ss_distance_cost(0, 10, 100, 10, 0.3, 1.0) - 0.771521753213).abs() < 1e-9);
    let v = unsafe { CStr::from_ptr(ss_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("stepselect.h")
}

#[test]
fn header_declares_the_abi() {
    let text = std::fs::read_to_string(header()).expect("generated header");
    for needle in [
        "typedef struct ss_dataset ss_dataset;",
        "typedef struct ss_selection ss_selection;",
        "SS_ERR_CONSTRAINT = 6",
        "ss_status ss_dataset_open(const char *path, ss_dataset **out);",
        "ss_status ss_select(const ss_dataset *dataset, const ss_select_params *params, ss_selection **out);",
        "const char *ss_last_error_message(void);",
        "double ss_distance_cost(",
    ] {
        assert!(text.contains(needle), "header lacks `{needle}`");
    }
}

/// Compiles and runs a C program against the header and static library.
#[test]
fn c_program_links_against_static_library() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| {
        Command::new(c)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
    }) else {
        eprintln!("no C compiler available; skipping");
        return;
    };
    // target/<profile>/deps/<test binary> → target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libstepselect_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "stepselect.h"
int main(void) {
    ss_dataset *ds = NULL;
    size_t bursts[] = {20};
    if (ss_dataset_synthesize("burst", 40, 16, 16, 7, bursts, 1, &ds) != SS_OK) return 10;
    ss_select_params p = ss_select_params_default(0, 39, 4, 1.0, 0.0);
    ss_selection *sel = NULL;
    if (ss_select(ds, &p, &sel) != SS_OK) return 11;
    const size_t *s = ss_selection_steps(sel);
    for (size_t i = 0; i < ss_selection_len(sel); i++) printf("%zu ", s[i]);
    printf("\n");
    ss_selection_free(sel);
    sel = NULL;
    p.beta = 0.5;
    if (ss_select(ds, &p, &sel) != SS_ERR_CONSTRAINT) return 12;
    printf("%s\n", ss_last_error_message());
    ss_selection_free(sel);
    ss_dataset_free(ds);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let out = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "compile failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let stdout = String::from_utf8(run.stdout).unwrap();
    let first: Vec<usize> = stdout
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first.len(), 4);
    assert_eq!((first[0], first[3]), (0, 39));
    assert!(stdout.contains("alpha + beta"));
}
