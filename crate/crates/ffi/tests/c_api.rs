use std::ffi::{CStr, CString};
use std::ptr;

use coralsim_ffi::*;

const CONFIG: &str = "[grid]\ncells = [8, 6]\n[model]\nalpha = 1.0\n[time]\nt_end = 0.1\ndt = 0.01\n\
                      [diagnostics]\nevery = 2\n[initial]\nvortex = 0.5\n\
                      [initial.n]\nmean = 2.0\nmodes = [{ amplitude = 0.5, k = [1, 1, 0] }]\n\
                      [initial.c]\nmean = 1.5\n";

fn last_error() -> String {
    unsafe { CStr::from_ptr(coral_last_error()) }.to_string_lossy().into_owned()
}

fn new_sim(text: &str) -> (CoralStatus, *mut CoralSim) {
    let cfg = CString::new(text).unwrap();
    let mut sim = ptr::null_mut();
    let st = unsafe { coral_sim_new(cfg.as_ptr(), &mut sim) };
    (st, sim)
}

#[test]
fn run_and_inspect() {
    let (st, sim) = new_sim(CONFIG);
    assert_eq!(st, CoralStatus::Ok, "{}", last_error());
    unsafe {
        let mut dims = [0usize; 3];
        assert_eq!(coral_sim_dims(sim, dims.as_mut_ptr()), CoralStatus::Ok);
        assert_eq!(dims, [8, 6, 1]);

        let mut stop = CoralStop::MaxSteps;
        assert_eq!(coral_sim_run(sim, &mut stop), CoralStatus::Ok, "{}", last_error());
        assert_eq!(stop, CoralStop::EndTime);
        let (mut t, mut step) = (0.0, 0u64);
        assert_eq!(coral_sim_time(sim, &mut t, &mut step), CoralStatus::Ok);
        assert!((t - 0.1).abs() < 1e-12);
        assert_eq!(step, 10);

        let mut count = 0;
        assert_eq!(coral_sim_record_count(sim, &mut count), CoralStatus::Ok);
        assert_eq!(count, 6);
        let mut rec = [0.0; CORAL_RECORD_LEN];
        assert_eq!(coral_sim_record(sim, count - 1, rec.as_mut_ptr()), CoralStatus::Ok);
        assert_eq!(rec[1], 10.0);
        assert_eq!(coral_sim_record(sim, count, rec.as_mut_ptr()), CoralStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));
        let mut now = [0.0; CORAL_RECORD_LEN];
        assert_eq!(coral_sim_current_record(sim, now.as_mut_ptr()), CoralStatus::Ok);
        // residual columns describe the step that produced a record, so only
        // the state columns are comparable
        for (k, (a, b)) in now.iter().zip(&rec).enumerate() {
            if !(23..=24).contains(&k) {
                assert_eq!(a, b, "column {k}");
            }
        }

        let name = CStr::from_ptr(coral_record_column(3)).to_str().unwrap();
        assert_eq!(name, "mass_n");
        assert!(coral_record_column(CORAL_RECORD_LEN).is_null());

        let mut failed = usize::MAX;
        assert_eq!(coral_sim_verdict(sim, &mut failed), CoralStatus::Ok, "{}", last_error());
        assert_eq!(failed, 0);

        let mut len = 0;
        assert_eq!(coral_sim_field_len(sim, CoralField::VelocityX, &mut len), CoralStatus::Ok);
        assert_eq!(len, 9 * 6 * 1);
        let mut small = vec![0.0; len - 1];
        assert_eq!(
            coral_sim_copy_field(sim, CoralField::VelocityX, small.as_mut_ptr(), small.len()),
            CoralStatus::BufferTooSmall
        );
        let mut n = vec![0.0; 48];
        assert_eq!(coral_sim_copy_field(sim, CoralField::N, n.as_mut_ptr(), n.len()), CoralStatus::Ok);
        assert!(n.iter().all(|v| *v > 0.0));
        coral_sim_free(sim);
    }
}

#[test]
fn snapshot_resume_matches_continuous_run() {
    let dir = tempfile::tempdir().unwrap();
    let snap = CString::new(dir.path().join("s.bin").to_str().unwrap()).unwrap();
    let (_, a) = new_sim(CONFIG);
    let (_, b) = new_sim(CONFIG);
    unsafe {
        assert_eq!(coral_sim_step(a, 4), CoralStatus::Ok);
        assert_eq!(coral_sim_write_snapshot(a, snap.as_ptr()), CoralStatus::Ok);
        let cfg = CString::new(CONFIG).unwrap();
        let mut c = ptr::null_mut();
        assert_eq!(coral_sim_from_snapshot(cfg.as_ptr(), snap.as_ptr(), &mut c), CoralStatus::Ok, "{}", last_error());
        for sim in [a, b, c] {
            assert_eq!(coral_sim_step(sim, 100), CoralStatus::Ok);
        }
        let field = |sim| {
            let mut v = vec![0.0; 48];
            assert_eq!(coral_sim_copy_field(sim, CoralField::C, v.as_mut_ptr(), v.len()), CoralStatus::Ok);
            v.iter().map(|x: &f64| x.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(field(a), field(b));
        assert_eq!(field(a), field(c));
        for sim in [a, b, c] {
            coral_sim_free(sim);
        }
    }
}

#[test]
fn errors_are_reported() {
    let (st, sim) = new_sim("[grid]\ncells = [4, 4]\n[model]\nalpha = -1.0\n[time]\nt_end = 1.0\n");
    assert_eq!(st, CoralStatus::Config);
    assert!(sim.is_null());
    assert!(last_error().contains("α"), "{}", last_error());

    let (st, _) = new_sim("[grid]\ncells = [4, 4]\n");
    assert_eq!(st, CoralStatus::Config);
    assert!(last_error().contains("model"), "{}", last_error());

    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(coral_sim_new(ptr::null(), &mut out), CoralStatus::NullPointer);
        assert_eq!(coral_sim_step(ptr::null_mut(), 1), CoralStatus::NullPointer);
        coral_sim_free(ptr::null_mut());
        let missing = CString::new("/nonexistent/snap.bin").unwrap();
        let cfg = CString::new(CONFIG).unwrap();
        assert_eq!(coral_sim_from_snapshot(cfg.as_ptr(), missing.as_ptr(), &mut out), CoralStatus::Io);
    }
}

#[test]
fn oracle_through_the_abi() {
    let (mut n, mut m, mut c) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(coral_oracle(2.0, 1.0, 0.0, 0.0, &mut n, &mut m, &mut c), CoralStatus::Ok);
        assert_eq!((n, m, c), (2.0, 1.0, 0.0));
        assert_eq!(coral_oracle(2.0, 1.0, 0.0, 1.0, &mut n, &mut m, &mut c), CoralStatus::Ok);
        assert!((n - m - 1.0).abs() < 1e-15);
        assert_eq!(coral_oracle(-1.0, 1.0, 0.0, 1.0, &mut n, &mut m, &mut c), CoralStatus::InvalidParameter);
        assert_eq!(coral_oracle(2.0, 1.0, 0.0, 1.0, ptr::null_mut(), &mut m, &mut c), CoralStatus::NullPointer);
    }
    let version = unsafe { CStr::from_ptr(coral_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

/// Compiles and runs a small C program against the generated header and the
/// static library.
#[test]
fn c_program_links_against_header() {
    let header_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = lib_dir.join("libcoralsim_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "coralsim.h"
int main(void) {
    double n, m, c;
    if (coral_oracle(2.0, 1.0, 0.0, 0.0, &n, &m, &c) != CORAL_STATUS_OK) return 1;
    CoralSim *sim = NULL;
    const char *cfg = "[grid]\ncells = [4, 4]\n[model]\nalpha = 1.0\n[time]\nt_end = 0.05\ndt = 0.01\n";
    if (coral_sim_new(cfg, &sim) != CORAL_STATUS_OK) { fprintf(stderr, "%s\n", coral_last_error()); return 2; }
    if (coral_sim_run(sim, NULL) != CORAL_STATUS_OK) return 3;
    double rec[CORAL_RECORD_LEN];
    if (coral_sim_current_record(sim, rec) != CORAL_STATUS_OK) return 4;
    coral_sim_free(sim);
    if (coral_sim_new("not toml", &sim) != CORAL_STATUS_CONFIG) return 5;
    printf("%g %g %g %g\n", n, m, c, rec[1]);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let cc = std::process::Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .expect("a C compiler is required for this test");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "2 1 0 5");
}
