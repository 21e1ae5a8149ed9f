use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use nslb_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(nslb_last_error()) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/configs")
}

#[test]
fn snapshots_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..2 * 64).map(|i| (i as f64).sin() * 1e3).collect();
    let mut snap = ptr::null_mut();
    let status = unsafe { nslb_snapshot_new(2, 8, 2, 0.25, values.as_ptr(), values.len(), &mut snap) };
    assert_eq!(status, NslbStatus::Ok, "{}", last_error());

    let path = cstr(dir.path().join("s.nslb").to_str().unwrap());
    assert_eq!(unsafe { nslb_snapshot_write(snap, path.as_ptr()) }, NslbStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { nslb_snapshot_read(path.as_ptr(), &mut back) }, NslbStatus::Ok);

    let mut info = NslbSnapshotInfo::default();
    assert_eq!(unsafe { nslb_snapshot_info(back, &mut info) }, NslbStatus::Ok);
    assert_eq!((info.dim, info.n, info.components, info.points), (2, 8, 2, 64));
    assert_eq!(info.time, 0.25);
    let mut buf = vec![0.0; 64];
    for c in 0..2 {
        assert_eq!(unsafe { nslb_snapshot_component(back, c, buf.as_mut_ptr(), buf.len()) }, NslbStatus::Ok);
        for (a, b) in buf.iter().zip(&values[c * 64..(c + 1) * 64]) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
    assert_eq!(
        unsafe { nslb_snapshot_component(back, 2, buf.as_mut_ptr(), buf.len()) },
        NslbStatus::InvalidArgument
    );
    assert!(last_error().contains("component 2"));
    unsafe {
        nslb_snapshot_free(snap);
        nslb_snapshot_free(back);
    }
}

#[test]
fn invalid_inputs_map_to_status_codes() {
    let mut snap = ptr::null_mut();
    assert_eq!(unsafe { nslb_snapshot_taylor_green(2, 7, 1.0, &mut snap) }, NslbStatus::InvalidArgument);
    assert!(snap.is_null());
    assert!(last_error().contains("even"));
    assert_eq!(unsafe { nslb_snapshot_taylor_green(2, 8, 1.0, ptr::null_mut()) }, NslbStatus::NullPointer);

    let missing = cstr("/nonexistent/dir/x.nslb");
    assert_eq!(unsafe { nslb_snapshot_read(missing.as_ptr(), &mut snap) }, NslbStatus::Io);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.nslb");
    std::fs::write(&bad, b"NOPE0000").unwrap();
    let bad = cstr(bad.to_str().unwrap());
    assert_eq!(unsafe { nslb_snapshot_read(bad.as_ptr(), &mut snap) }, NslbStatus::Format);

    let mut cfg = ptr::null_mut();
    let text = cstr("[physics]\ndt = 1e-3\nt_end = 1.0\n");
    assert_eq!(unsafe { nslb_config_parse(text.as_ptr(), ptr::null(), &mut cfg) }, NslbStatus::Config);
    assert!(last_error().contains("nu"));
    assert!(cfg.is_null());
}

#[test]
fn taylor_green_decays_at_the_exact_rate() {
    let (nu, t_end) = (0.1, 0.1);
    let mut v0 = ptr::null_mut();
    let mut v1 = ptr::null_mut();
    unsafe {
        assert_eq!(nslb_snapshot_taylor_green(2, 16, 1.0, &mut v0), NslbStatus::Ok);
        assert_eq!(nslb_simulate(v0, nu, 1e-3, t_end, &mut v1), NslbStatus::Ok, "{}", last_error());
    }
    let norm = |s: *const NslbSnapshot| {
        let mut buf = vec![0.0; 256];
        (0..2)
            .map(|c| {
                unsafe { nslb_snapshot_component(s, c, buf.as_mut_ptr(), buf.len()) };
                buf.iter().map(|x| x * x).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    };
    let ratio = norm(v1) / norm(v0);
    let exact = (-8.0 * std::f64::consts::PI.powi(2) * nu * t_end).exp();
    assert!((ratio / exact - 1.0).abs() < 1e-8, "{ratio} vs {exact}");
    let mut info = NslbSnapshotInfo::default();
    unsafe { nslb_snapshot_info(v1, &mut info) };
    assert!((info.time - t_end).abs() < 1e-12);
    unsafe {
        nslb_snapshot_free(v0);
        nslb_snapshot_free(v1);
    }
}

#[test]
fn experiments_run_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(configs().join("rescale_audit.toml").to_str().unwrap());
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { nslb_config_load(path.as_ptr(), &mut cfg) }, NslbStatus::Ok, "{}", last_error());

    let run = |name: &str| {
        let out = cstr(dir.path().join(name).to_str().unwrap());
        let mut report = ptr::null_mut();
        let status = unsafe {
            nslb_run_experiment(cfg, NslbExperiment::RescaleAudit, out.as_ptr(), true, 9, &mut report)
        };
        assert_eq!(status, NslbStatus::Ok, "{}", last_error());
        report
    };
    let (a, b) = (run("a"), run("b"));
    let json = |r| {
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { nslb_report_json(r, &mut s) }, NslbStatus::Ok);
        let owned = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
        unsafe { nslb_string_free(s) };
        owned
    };
    assert_eq!(json(a), json(b));
    assert!(json(a).contains("\"seed\": 9") || json(a).contains("\"seed\":9"));

    let mut passed = false;
    let mut count = 0usize;
    unsafe {
        assert_eq!(nslb_report_passed(a, &mut passed), NslbStatus::Ok);
        assert_eq!(nslb_report_check_count(a, &mut count), NslbStatus::Ok);
    }
    assert!(passed && count > 0);
    let mut name = ptr::null_mut();
    let mut ok = false;
    unsafe {
        assert_eq!(nslb_report_check(a, 0, &mut name, ptr::null_mut(), ptr::null_mut(), &mut ok), NslbStatus::Ok);
        assert!(!CStr::from_ptr(name).to_bytes().is_empty() && ok);
        nslb_string_free(name);
        assert_eq!(
            nslb_report_check(a, count, &mut name, ptr::null_mut(), ptr::null_mut(), &mut ok),
            NslbStatus::InvalidArgument
        );
    }

    let out = cstr(dir.path().join("c").to_str().unwrap());
    let mut report = ptr::null_mut();
    let status =
        unsafe { nslb_run_experiment(cfg, NslbExperiment::Simulate, out.as_ptr(), false, 0, &mut report) };
    assert_eq!(status, NslbStatus::Config);
    assert!(report.is_null());
    unsafe {
        nslb_report_free(a);
        nslb_report_free(b);
        nslb_config_free(cfg);
    }
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(crate_dir.join("include/nslb.h")).unwrap();
    let source = std::fs::read_to_string(crate_dir.join("src/lib.rs")).unwrap();
    for line in source.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = rest.split('(').next().unwrap();
            assert!(header.contains(&format!("{name}(")), "{name} missing from header");
        }
    }

    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let main = dir.path().join("main.c");
    std::fs::write(
        &main,
        "#include \"nslb.h\"\nint main(void) { NslbSnapshotInfo info; (void)info; \
         return nslb_version() == 0 ? 1 : (int)NSLB_STATUS_OK; }\n",
    )
    .unwrap();
    let status = Command::new(cc)
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&main)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
