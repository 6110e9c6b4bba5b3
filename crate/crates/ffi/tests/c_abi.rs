use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use hgdagger::ensemble::{init_ensemble, TrainConfig};
use hgdagger_ffi::*;

fn checkpoint(dir: &tempfile::TempDir) -> CString {
    let path = dir.path().join("novice.ckpt");
    init_ensemble(&TrainConfig::default()).unwrap().save(&path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn session_round_trip_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = checkpoint(&dir);
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(hg_scenario_generate(4, 300.0, &mut scenario), HgStatus::Ok);
        let mut n = 0;
        assert_eq!(hg_scenario_obstacle_count(scenario, &mut n), HgStatus::Ok);
        assert!(n > 0);

        let mut ensemble = ptr::null_mut();
        assert_eq!(hg_ensemble_load(path.as_ptr(), &mut ensemble), HgStatus::Ok);
        let obs = [-1.5, 0.0, 5.0, 1.5, 1.5, 60.0, 60.0];
        let (mut action, mut doubt) = ([0.0; 2], -1.0);
        assert_eq!(hg_ensemble_predict(ensemble, obs.as_ptr(), action.as_mut_ptr(), &mut doubt), HgStatus::Ok);
        assert!(doubt >= 0.0);

        let id = CString::new("c1").unwrap();
        let mut session = ptr::null_mut();
        assert_eq!(hg_session_start(id.as_ptr(), scenario, ensemble, 10.0, f64::NAN, &mut session), HgStatus::Ok);
        let mut applied = HgApplied::Ignored;
        assert_eq!(
            hg_session_event(session, HgEventKind::TakeControl, false, 0.0, 0.0, &mut applied),
            HgStatus::Ok
        );
        assert_eq!(applied, HgApplied::Takeover);
        hg_session_event(session, HgEventKind::SteerInput, true, 0.1, 0.05, &mut applied);
        assert_eq!(applied, HgApplied::Changed);
        let mut state = HgEgoState::default();
        let mut phase = HgPhase::Idle;
        for _ in 0..5 {
            assert_eq!(hg_session_tick(session, &mut state, ptr::null_mut(), &mut phase), HgStatus::Ok);
        }
        assert_eq!(phase, HgPhase::ExpertDriving);
        assert!(state.x > 0.0);
        let (mut labels, mut interventions) = (0, 0);
        hg_session_counts(session, &mut labels, &mut interventions);
        assert_eq!((labels, interventions), (5, 1));

        let mut need = 0;
        assert_eq!(
            hg_session_snapshot_json(session, ptr::null_mut(), 0, &mut need),
            HgStatus::BufferTooSmall
        );
        let mut buf = vec![0 as std::ffi::c_char; need];
        assert_eq!(hg_session_snapshot_json(session, buf.as_mut_ptr(), need, &mut need), HgStatus::Ok);
        let json = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        assert!(json.contains("\"schema_version\":1") && json.contains("\"type\":\"snapshot\""));

        hg_session_free(session);
        hg_ensemble_free(ensemble);
        hg_scenario_free(scenario);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(hg_scenario_generate(1, 1.0, &mut scenario), HgStatus::InvalidArgument);
        assert!(scenario.is_null());
        let msg = CStr::from_ptr(hg_last_error()).to_str().unwrap();
        assert!(msg.contains("road_length"), "{msg}");

        let missing = CString::new("/nonexistent/x.ckpt").unwrap();
        let mut ensemble = ptr::null_mut();
        assert_eq!(hg_ensemble_load(missing.as_ptr(), &mut ensemble), HgStatus::Io);
        assert_eq!(hg_scenario_obstacle_count(ptr::null(), ptr::null_mut()), HgStatus::NullPointer);

        let p = [1.0, 0.0];
        let q = [0.5, 0.5];
        let mut d = 0.0;
        assert_eq!(hg_bhattacharyya(p.as_ptr(), q.as_ptr(), 2, &mut d), HgStatus::Ok);
        assert!((d - 0.34657).abs() < 1e-4);
        let neg = [-1.0, 2.0];
        assert_eq!(hg_bhattacharyya(neg.as_ptr(), q.as_ptr(), 2, &mut d), HgStatus::InvalidArgument);
        hg_scenario_free(ptr::null_mut());
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "hgdagger.h"

int main(void) {
    HgScenario *sc = NULL;
    if (hg_scenario_generate(7, 300.0, &sc) != HG_STATUS_OK) return 1;
    double p[2] = {1.0, 0.0}, q[2] = {0.5, 0.5}, d = 0.0;
    if (hg_bhattacharyya(p, q, 2, &d) != HG_STATUS_OK) return 2;
    if (fabs(d - 0.34657) > 1e-4) return 3;
    if (hg_scenario_generate(7, -1.0, &sc) != HG_STATUS_INVALID_ARGUMENT) return 4;
    if (hg_last_error() == NULL) return 5;
    hg_scenario_free(sc);
    printf("ok %s\n", hg_version());
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libhgdagger_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
