use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use dream_core::block::{dream_forward, Arch, DreamParams};
use dream_core::eval::{compute_eer, cosine, roc_from_scores};
use dream_core::io::save_checkpoint;
use dream_core::pose::{project_model, yaw_coefficient, CameraIntrinsics, FaceModel3D, GateMode, HeadPose};
use dream_core::Embedding;
use dream_ffi::*;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn last_error() -> Option<String> {
    let p = dream_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn sample_params(dim: usize) -> DreamParams {
    DreamParams::init(Arch::TwoFc, dim, 4, &mut ChaCha8Rng::seed_from_u64(8))
}

fn checkpoint(dir: &Path, p: &DreamParams) -> CString {
    let path = dir.join("block.ckpt");
    save_checkpoint(&path, p).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn load(path: &CString) -> *mut DreamBlock {
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { dream_block_load(path.as_ptr(), &mut b) }, DreamStatus::Ok);
    b
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(dream_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn block_apply_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let p = sample_params(5);
    let b = load(&checkpoint(dir.path(), &p));
    assert_eq!(unsafe { dream_block_dim(b) }, 5);
    let x = vec![0.3, -0.1, 0.5, 0.2, -0.7];
    for (code, mode) in [
        (DREAM_GATE_NONLINEAR, GateMode::Nonlinear),
        (DREAM_GATE_LINEAR, GateMode::Linear),
        (DREAM_GATE_CLOSED, GateMode::Closed),
    ] {
        let want = dream_forward(&p, &Embedding::new(x.clone()), yaw_coefficient(0.9, mode)).unwrap();
        let mut got = vec![0.0; 5];
        let st = unsafe { dream_block_apply(b, code, x.as_ptr(), 5, 0.9, got.as_mut_ptr()) };
        assert_eq!(st, DreamStatus::Ok);
        assert_eq!(got, want.values);
        assert!(last_error().is_none());
    }
    // in place
    let mut inplace = x.clone();
    let st = unsafe { dream_block_apply(b, DREAM_GATE_CLOSED, inplace.as_ptr(), 5, 0.0, inplace.as_mut_ptr()) };
    assert_eq!(st, DreamStatus::Ok);
    assert_eq!(inplace, dream_forward(&p, &Embedding::new(x), 1.0).unwrap().values);
    unsafe { dream_block_free(b) };
}

#[test]
fn batch_matches_rows_and_is_all_or_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let p = sample_params(3);
    let b = load(&checkpoint(dir.path(), &p));
    let xs = [0.1, 0.2, 0.3, -1.0, 0.5, 0.25];
    let yaws = [0.2, -1.3];
    let mut out = [0.0; 6];
    let st = unsafe { dream_block_apply_batch(b, DREAM_GATE_NONLINEAR, xs.as_ptr(), 2, 3, yaws.as_ptr(), out.as_mut_ptr()) };
    assert_eq!(st, DreamStatus::Ok);
    for i in 0..2 {
        let c = yaw_coefficient(yaws[i], GateMode::Nonlinear);
        let want = dream_forward(&p, &Embedding::new(xs[i * 3..i * 3 + 3].to_vec()), c).unwrap();
        assert_eq!(&out[i * 3..i * 3 + 3], &want.values[..]);
    }
    let bad_yaws = [0.2, f64::NAN];
    let mut untouched = [7.0; 6];
    let st = unsafe {
        dream_block_apply_batch(b, DREAM_GATE_NONLINEAR, xs.as_ptr(), 2, 3, bad_yaws.as_ptr(), untouched.as_mut_ptr())
    };
    assert_eq!(st, DreamStatus::InvalidArgument);
    assert_eq!(untouched, [7.0; 6]);
    assert!(last_error().unwrap().contains("row 1"));
    unsafe { dream_block_free(b) };
}

#[test]
fn error_statuses() {
    let mut out = 0.0;
    assert_eq!(unsafe { dream_yaw_coefficient(0.1, 9, &mut out) }, DreamStatus::InvalidArgument);
    assert!(last_error().unwrap().contains("gate"));
    assert_eq!(unsafe { dream_yaw_coefficient(0.1, 0, ptr::null_mut()) }, DreamStatus::NullPointer);

    let mut b = ptr::null_mut();
    let missing = CString::new("/nonexistent/block.ckpt").unwrap();
    assert_eq!(unsafe { dream_block_load(missing.as_ptr(), &mut b) }, DreamStatus::Io);
    assert!(b.is_null());
    assert!(last_error().unwrap().contains("/nonexistent/block.ckpt"));

    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage");
    std::fs::write(&garbage, b"DRMPxxxx").unwrap();
    let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dream_block_load(garbage.as_ptr(), &mut b) }, DreamStatus::Format);
    assert_eq!(unsafe { dream_block_load(ptr::null(), &mut b) }, DreamStatus::NullPointer);

    let blk = load(&checkpoint(dir.path(), &sample_params(3)));
    let x = [1.0, 2.0];
    let mut y = [0.0; 2];
    let st = unsafe { dream_block_apply(blk, 0, x.as_ptr(), 2, 0.5, y.as_mut_ptr()) };
    assert_eq!(st, DreamStatus::InvalidArgument);
    assert!(last_error().unwrap().contains("dimension"));
    unsafe {
        dream_block_free(blk);
        dream_block_free(ptr::null_mut());
        assert_eq!(dream_block_dim(ptr::null()), 0);
    }
}

#[test]
fn pose_through_handle() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dream_face_model_builtin(&mut m) }, DreamStatus::Ok);
    let cam = CameraIntrinsics::for_image(640.0, 480.0).unwrap();
    let truth = HeadPose::new(0.6, -0.1, 0.05, Vector3::new(15.0, -10.0, 950.0));
    let pts = project_model(&FaceModel3D::builtin(), &truth, &cam);
    let xy: Vec<f64> = pts.iter().flat_map(|p| [p.x, p.y]).collect();
    let mut pose = DreamPose::default();
    let st = unsafe { dream_estimate_pose(m, xy.as_ptr(), ptr::null(), 640.0, 480.0, &mut pose) };
    assert_eq!(st, DreamStatus::Ok, "{:?}", last_error());
    assert!((pose.yaw - 0.6).abs() < 1e-6);
    assert!((pose.tz - 950.0).abs() < 1e-3);
    assert!(pose.rmse_px < 1e-6);

    let mut vis = [0u8; DREAM_NUM_LANDMARKS];
    vis[..5].fill(1);
    let st = unsafe { dream_estimate_pose(m, xy.as_ptr(), vis.as_ptr(), 640.0, 480.0, &mut pose) };
    assert_eq!(st, DreamStatus::InvalidArgument);
    assert!(last_error().unwrap().contains("visible"));
    unsafe { dream_face_model_free(m) };
}

#[test]
fn face_model_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.csv");
    dream_core::io::write_file(&path, |w| dream_core::io::write_face_model(w, &FaceModel3D::builtin())).unwrap();
    let path = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dream_face_model_load(path.as_ptr(), &mut m) }, DreamStatus::Ok);
    assert!(!m.is_null());
    unsafe { dream_face_model_free(m) };
}

#[test]
fn metrics_match_core() {
    let a = [1.0, 2.0, -0.5];
    let b = [0.5, -1.0, 2.0];
    let mut c = 0.0;
    assert_eq!(unsafe { dream_cosine(a.as_ptr(), b.as_ptr(), 3, &mut c) }, DreamStatus::Ok);
    assert_eq!(c, cosine(&a, &b).unwrap());
    let zero = [0.0; 3];
    assert_eq!(unsafe { dream_cosine(a.as_ptr(), zero.as_ptr(), 3, &mut c) }, DreamStatus::InvalidArgument);

    let scores = [0.9, 0.4, 0.6, 0.2, 0.5];
    let labels = [1u8, 1, 0, 0, 1];
    let mut eer = 0.0;
    assert_eq!(unsafe { dream_eer(scores.as_ptr(), labels.as_ptr(), 5, &mut eer) }, DreamStatus::Ok);
    let scored: Vec<(f64, bool)> = scores.iter().zip(labels).map(|(s, l)| (*s, l == 1)).collect();
    assert_eq!(eer, compute_eer(&roc_from_scores(&scored).unwrap()));
    let one_class = [1u8; 5];
    assert_eq!(unsafe { dream_eer(scores.as_ptr(), one_class.as_ptr(), 5, &mut eer) }, DreamStatus::InvalidArgument);
}

#[test]
fn errors_are_thread_local() {
    let mut out = 0.0;
    assert_eq!(unsafe { dream_yaw_coefficient(0.0, 42, &mut out) }, DreamStatus::InvalidArgument);
    std::thread::spawn(|| assert!(last_error().is_none())).join().unwrap();
    assert!(last_error().is_some());
}

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test-binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_lists_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dream.h")).unwrap();
    for f in [
        "dream_version",
        "dream_last_error",
        "dream_block_load",
        "dream_block_free",
        "dream_block_dim",
        "dream_block_apply",
        "dream_block_apply_batch",
        "dream_yaw_coefficient",
        "dream_face_model_builtin",
        "dream_face_model_load",
        "dream_face_model_free",
        "dream_estimate_pose",
        "dream_cosine",
        "dream_eer",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct DreamBlock DreamBlock;"));
    assert!(header.contains("#define DREAM_NUM_LANDMARKS 21"));
}

#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let lib = target_dir().join("libdream_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-D_DEFAULT_SOURCE"])
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());

    let p = sample_params(3);
    let ckpt = checkpoint(dir.path(), &p);
    let run = Command::new(&exe).arg(ckpt.to_str().unwrap()).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let got: Vec<f64> = String::from_utf8(run.stdout)
        .unwrap()
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    let want = dream_forward(&p, &Embedding::new(vec![0.1, -0.2, 0.3]), 1.0).unwrap();
    assert_eq!(got, want.values);
}
