use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use dumbbell_ffi::*;

#[test]
fn solve_through_handles() {
    let mut mesh = ptr::null_mut();
    unsafe {
        assert_eq!(db_mesh_box(3, 6, &mut mesh), DbStatus::Ok);
        let mut sol = ptr::null_mut();
        assert_eq!(db_solve_plane(mesh, 0.5, 1.0 / 6.0, 0.01, 3, 1e-9, &mut sol), DbStatus::Ok);
        assert_eq!(db_solution_num_modes(sol), 3);
        let (mut l0, mut l1) = (f64::NAN, f64::NAN);
        assert_eq!(db_solution_eigenvalue(sol, 0, &mut l0), DbStatus::Ok);
        assert_eq!(db_solution_eigenvalue(sol, 1, &mut l1), DbStatus::Ok);
        assert!(l0.abs() < 1e-9 && l1 > 0.0);
        let mut v = vec![0.0; db_mesh_num_vertices(mesh)];
        assert_eq!(db_solution_eigenvector(sol, 1, v.as_mut_ptr(), v.len()), DbStatus::Ok);
        assert!(v.iter().any(|&x| x > 0.0) && v.iter().any(|&x| x < 0.0));
        assert_eq!(db_solution_eigenvector(sol, 1, v.as_mut_ptr(), v.len() - 1), DbStatus::OutOfRange);
        assert_eq!(db_solution_eigenvalue(sol, 7, &mut l1), DbStatus::OutOfRange);
        assert!(db_solution_kappa(sol) > 1.0);
        db_solution_free(sol);
        db_mesh_free(mesh);
    }
}

#[test]
fn collar_covering_a_side_is_not_separating() {
    let mut mesh = ptr::null_mut();
    unsafe {
        db_mesh_box(3, 4, &mut mesh);
        let mut sol = ptr::null_mut();
        assert_eq!(db_solve_plane(mesh, 0.25, 0.25, 0.01, 3, 1e-9, &mut sol), DbStatus::NotSeparating);
        assert!(sol.is_null());
        db_mesh_free(mesh);
    }
}

#[test]
fn missing_mesh_file_is_an_io_error() {
    let path = CString::new("/nonexistent/dir/x.mesh").unwrap();
    let mut mesh = ptr::null_mut();
    assert_eq!(unsafe { db_mesh_load(path.as_ptr(), &mut mesh) }, DbStatus::Io);
    assert_eq!(unsafe { db_mesh_num_cells(mesh) }, 0);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(db_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn run_scenario_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gap.conf");
    std::fs::write(&cfg, "scenario = gap\nn = 6\neta = 0.1666666666666667\nepsilon = 0.01\n").unwrap();
    let c = CString::new(cfg.to_str().unwrap()).unwrap();
    let o = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut passed = -1;
    assert_eq!(unsafe { db_run_scenario(c.as_ptr(), o.as_ptr(), &mut passed) }, DbStatus::Ok);
    assert!(passed == 0 || passed == 1);
    assert!(dir.path().join("gap.json").exists());
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; header check skipped");
        return;
    };
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dumbbell.h");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ DbMesh *m = 0; return db_mesh_box(2, 2, &m) == DB_STATUS_OK ? 0 : 1; }}\n",
            header.display()
        ),
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-c"])
        .arg(&src)
        .arg("-o")
        .arg(dir.path().join("probe.o"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
