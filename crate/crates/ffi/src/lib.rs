//! C ABI over the dumbbell library.
//!
//! Meshes and eigen solutions are opaque heap handles released with their
//! `*_free` functions. Every fallible call returns a [`DbStatus`]; the message
//! of the most recent failure on the calling thread is available through
//! [`db_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dumbbell::assembly::assemble;
use dumbbell::eigen::{normalize_and_sign, solve_smallest, SolverOptions};
use dumbbell::experiments::{run_and_write, ScenarioConfig};
use dumbbell::mesh::{build_box_grid, load_mesh, Mesh};
use dumbbell::metric::{build_conformal_field, kappa, CollarGeometry, Profile, Sigma};
use dumbbell::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidMesh = 3,
    NotSeparating = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Opaque mesh handle.
pub struct DbMesh {
    mesh: Mesh,
}

/// Opaque eigen solution: eigenvalues and vertex-indexed eigenvectors,
/// index 0 being the constant mode.
pub struct DbSolution {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    kappa: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DbStatus {
    match e {
        Error::InvalidArgument(_) | Error::Parse { .. } | Error::Unsupported(_) | Error::NotGridAligned { .. } => {
            DbStatus::InvalidArgument
        }
        Error::InvalidMesh(_) | Error::DegenerateCell(_) => DbStatus::InvalidMesh,
        Error::NotSeparating(_) => DbStatus::NotSeparating,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::MissingTable(_) => DbStatus::Io,
        Error::Stage { source, .. } => status_of(source),
        _ => DbStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (DbStatus, String)>) -> DbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside the library".into());
            DbStatus::Panic
        }
    }
}

fn lib(e: Error) -> (DbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DbStatus, String) {
    (DbStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (DbStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (DbStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn db_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated, always
/// NUL-terminated) and returns the full message length, or 0 if none.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn db_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Unit box `[0,1]^d` with `n` cells per axis.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn db_mesh_box(d: usize, n: usize, out: *mut *mut DbMesh) -> DbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mesh = build_box_grid(d, n, None).map_err(lib)?;
        *out = Box::into_raw(Box::new(DbMesh { mesh }));
        Ok(())
    })
}

/// Loads an ASCII mesh file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn db_mesh_load(path: *const c_char, out: *mut *mut DbMesh) -> DbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mesh = load_mesh(path_arg(path, "path")?).map_err(lib)?;
        *out = Box::into_raw(Box::new(DbMesh { mesh }));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from a `db_mesh_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn db_mesh_free(mesh: *mut DbMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// # Safety
/// `mesh` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn db_mesh_num_vertices(mesh: *const DbMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.num_vertices())
}

/// # Safety
/// `mesh` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn db_mesh_num_cells(mesh: *const DbMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.num_cells())
}

/// Volume-preserving outer constant for the step profile.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn db_kappa(epsilon: f64, vol_collar: f64, vol_complement: f64, d: usize, out: *mut f64) -> DbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = kappa(epsilon, vol_collar, vol_complement, d).map_err(lib)?;
        Ok(())
    })
}

/// Lowest `modes` eigenpairs (constant mode included) of the step dumbbell
/// metric with hypersurface `{x1 = offset}` and collar half-width `eta`.
///
/// # Safety
/// `mesh` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn db_solve_plane(
    mesh: *const DbMesh,
    offset: f64,
    eta: f64,
    epsilon: f64,
    modes: usize,
    tol: f64,
    out: *mut *mut DbSolution,
) -> DbStatus {
    guard(|| {
        let mesh = &mesh.as_ref().ok_or_else(|| null("mesh"))?.mesh;
        if out.is_null() {
            return Err(null("out"));
        }
        let geom = CollarGeometry::from_sigma(mesh, &Sigma::Plane { offset }, eta).map_err(lib)?;
        let field = build_conformal_field(&geom, epsilon, Profile::Step).map_err(lib)?;
        let pair = assemble(mesh, &field).map_err(lib)?;
        let raw = solve_smallest(&pair, &SolverOptions::new(modes, tol)).map_err(lib)?;
        let eig = normalize_and_sign(&raw, &pair, &geom).map_err(lib)?;
        let eigenvectors = eig
            .eigenvectors
            .iter()
            .map(|v| pair.to_vertex_field(v, mesh.num_vertices()))
            .collect();
        *out = Box::into_raw(Box::new(DbSolution {
            eigenvalues: eig.eigenvalues,
            eigenvectors,
            kappa: field.kappa,
        }));
        Ok(())
    })
}

/// # Safety
/// `sol` must come from `db_solve_plane` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn db_solution_free(sol: *mut DbSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// # Safety
/// `sol` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn db_solution_num_modes(sol: *const DbSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.eigenvalues.len())
}

/// # Safety
/// `sol` must be a live handle or null (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn db_solution_kappa(sol: *const DbSolution) -> f64 {
    sol.as_ref().map_or(f64::NAN, |s| s.kappa)
}

/// # Safety
/// `sol` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn db_solution_eigenvalue(sol: *const DbSolution, k: usize, out: *mut f64) -> DbStatus {
    guard(|| {
        let s = sol.as_ref().ok_or_else(|| null("sol"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = *s
            .eigenvalues
            .get(k)
            .ok_or_else(|| (DbStatus::OutOfRange, format!("mode {k} of {}", s.eigenvalues.len())))?;
        Ok(())
    })
}

/// Copies eigenvector `k` into `buf`, which must hold exactly one value per
/// mesh vertex.
///
/// # Safety
/// `sol` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn db_solution_eigenvector(sol: *const DbSolution, k: usize, buf: *mut f64, len: usize) -> DbStatus {
    guard(|| {
        let s = sol.as_ref().ok_or_else(|| null("sol"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = s
            .eigenvectors
            .get(k)
            .ok_or_else(|| (DbStatus::OutOfRange, format!("mode {k} of {}", s.eigenvectors.len())))?;
        if v.len() != len {
            return Err((DbStatus::OutOfRange, format!("buffer holds {len} values, need {}", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, len);
        Ok(())
    })
}

/// Runs the scenario in `config_path`, writes its report into `out_dir` and
/// stores 1 in `passed` iff every verdict passed.
///
/// # Safety
/// Both paths must be NUL-terminated strings and `passed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn db_run_scenario(config_path: *const c_char, out_dir: *const c_char, passed: *mut i32) -> DbStatus {
    guard(|| {
        if passed.is_null() {
            return Err(null("passed"));
        }
        let cfg = ScenarioConfig::load(path_arg(config_path, "config_path")?).map_err(lib)?;
        let (report, _) = run_and_write(&cfg, &path_arg(out_dir, "out_dir")?).map_err(lib)?;
        *passed = report.passed() as i32;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        let n = unsafe { db_last_error(buf.as_mut_ptr(), buf.len()) };
        assert!(n > 0);
        unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn box_mesh_handle() {
        let mut m = ptr::null_mut();
        assert_eq!(unsafe { db_mesh_box(2, 3, &mut m) }, DbStatus::Ok);
        assert_eq!(unsafe { db_mesh_num_vertices(m) }, 16);
        assert_eq!(unsafe { db_mesh_num_cells(m) }, 18);
        unsafe { db_mesh_free(m) };
    }

    #[test]
    fn errors_are_reported() {
        let mut m = ptr::null_mut();
        assert_eq!(unsafe { db_mesh_box(5, 3, &mut m) }, DbStatus::InvalidArgument);
        assert!(m.is_null());
        assert!(last_error().contains("dimension"));
        assert_eq!(unsafe { db_mesh_box(3, 3, ptr::null_mut()) }, DbStatus::NullPointer);
        let mut k = 0.0;
        assert_eq!(unsafe { db_kappa(0.0, 0.2, 0.8, 3, &mut k) }, DbStatus::InvalidArgument);
    }

    #[test]
    fn truncated_error_message_is_terminated() {
        let mut m = ptr::null_mut();
        unsafe { db_mesh_box(9, 3, &mut m) };
        let mut buf = [1 as c_char; 4];
        let n = unsafe { db_last_error(buf.as_mut_ptr(), buf.len()) };
        assert!(n > 3);
        assert_eq!(buf[3], 0);
    }
}
