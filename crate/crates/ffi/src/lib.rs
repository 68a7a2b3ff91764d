//! C ABI for the LLG simulator: opaque handles, status codes, and a
//! thread-local last-error message. Every entry point catches panics so
//! unwinding never crosses the language boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use llg_core::contributions::{
    AppliedField, ContributionSet, PiStrategy, UniaxialAnisotropy, ZhangLi,
};
use llg_core::demag::StrayFieldSolver;
use llg_core::diagnostics::average_magnetization;
use llg_core::fem::{FemSpace, NodalVectorField};
use llg_core::integrator::{IntegratorConfig, Stepper};
use llg_core::linsolve::SolverConfig;
use llg_core::mesh::TetMesh;
use llg_core::Error;

use llg_core::nalgebra::Vector3;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlgStatus {
    Ok = 0,
    InvalidArgument = 1,
    NumericalError = 2,
    IoError = 3,
    Panic = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> LlgStatus {
    match err {
        Error::InvalidInput(_) | Error::Config(_) | Error::Parse { .. } | Error::Mesh(_) => {
            LlgStatus::InvalidArgument
        }
        Error::Io(_) => LlgStatus::IoError,
        _ => LlgStatus::NumericalError,
    }
}

fn fail(err: &Error) -> LlgStatus {
    set_error(err.to_string());
    status_of(err)
}

fn invalid(msg: &str) -> LlgStatus {
    set_error(msg);
    LlgStatus::InvalidArgument
}

fn guarded(f: impl FnOnce() -> LlgStatus) -> LlgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in llg library".into());
            set_error(msg);
            LlgStatus::Panic
        }
    }
}

/// Copy the message of the most recent error on this thread into `buf`
/// (NUL terminated, truncated to `len`). Returns the full message length
/// in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes, or be null (then only
/// the required length is returned).
#[no_mangle]
pub unsafe extern "C" fn llg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

// -------------------------------------------------------------------------
// meshes
// -------------------------------------------------------------------------

/// Opaque tetrahedral mesh handle.
pub struct LlgMesh {
    mesh: Arc<TetMesh>,
}

/// Build a structured box mesh of `nx * ny * nz` cells, six tetrahedra per
/// cell.
///
/// # Safety
/// `lo` and `hi` must point to three readable doubles; `out` must be a
/// valid location for a pointer.
#[no_mangle]
pub unsafe extern "C" fn llg_mesh_box(
    nx: usize,
    ny: usize,
    nz: usize,
    lo: *const f64,
    hi: *const f64,
    out: *mut *mut LlgMesh,
) -> LlgStatus {
    guarded(|| {
        if lo.is_null() || hi.is_null() || out.is_null() {
            return invalid("llg_mesh_box: null pointer argument");
        }
        let lo = Vector3::new(*lo, *lo.add(1), *lo.add(2));
        let hi = Vector3::new(*hi, *hi.add(1), *hi.add(2));
        match llg_core::mesh::build_box_mesh(nx, ny, nz, lo, hi) {
            Ok(mesh) => {
                *out = Box::into_raw(Box::new(LlgMesh {
                    mesh: Arc::new(mesh),
                }));
                LlgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Load a mesh from the plain-text `tetmesh v1` format.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` a valid location.
#[no_mangle]
pub unsafe extern "C" fn llg_mesh_load(path: *const c_char, out: *mut *mut LlgMesh) -> LlgStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return invalid("llg_mesh_load: null pointer argument");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(_) => return invalid("llg_mesh_load: path is not valid UTF-8"),
        };
        match llg_core::mesh::load_mesh(path) {
            Ok(mesh) => {
                *out = Box::into_raw(Box::new(LlgMesh {
                    mesh: Arc::new(mesh),
                }));
                LlgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Save a mesh in the plain-text `tetmesh v1` format.
///
/// # Safety
/// `mesh` must be a live handle, `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn llg_mesh_save(mesh: *const LlgMesh, path: *const c_char) -> LlgStatus {
    guarded(|| {
        if mesh.is_null() || path.is_null() {
            return invalid("llg_mesh_save: null pointer argument");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(_) => return invalid("llg_mesh_save: path is not valid UTF-8"),
        };
        match llg_core::mesh::save_mesh(&(*mesh).mesh, path) {
            Ok(()) => LlgStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `mesh` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn llg_mesh_vertex_count(mesh: *const LlgMesh) -> usize {
    if mesh.is_null() {
        return 0;
    }
    (*mesh).mesh.vertex_count()
}

/// # Safety
/// `mesh` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn llg_mesh_tet_count(mesh: *const LlgMesh) -> usize {
    if mesh.is_null() {
        return 0;
    }
    (*mesh).mesh.tet_count()
}

/// # Safety
/// `mesh` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn llg_mesh_boundary_face_count(mesh: *const LlgMesh) -> usize {
    if mesh.is_null() {
        return 0;
    }
    (*mesh).mesh.boundary_faces().len()
}

/// Release a mesh handle. Passing null is a no-op.
///
/// # Safety
/// `mesh` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn llg_mesh_free(mesh: *mut LlgMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

// -------------------------------------------------------------------------
// simulations
// -------------------------------------------------------------------------

/// Field-term extrapolation strategy.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlgStrategy {
    Midpoint = 0,
    AdamsBashforth = 1,
    ExplicitEuler = 2,
}

/// Simulation parameters; booleans are 0/1 flags.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LlgSimParams {
    /// Time-step size (nondimensional), positive.
    pub k: f64,
    /// Gilbert damping, positive.
    pub alpha: f64,
    /// Exchange constant, positive.
    pub c_ex: f64,
    /// Fixed-point stopping tolerance, positive.
    pub epsilon: f64,
    pub strategy: LlgStrategy,
    /// 0 selects the default budget.
    pub max_sweeps: usize,
    /// Enable the FEM-BEM stray field.
    pub enable_stray: i32,
    /// Boundary quadrature points per panel: 1, 3 or 7.
    pub quad_points: usize,
    /// Relative tolerance of the inner conjugate-gradient solves.
    pub cg_rel_tol: f64,
    pub enable_anisotropy: i32,
    /// Easy axis, unit length.
    pub aniso_axis: [f64; 3],
    pub enable_zhang_li: i32,
    /// Spin velocity (nondimensional).
    pub zl_velocity: [f64; 3],
    /// Ratio of nonadiabaticity, positive.
    pub zl_xi: f64,
    /// Constant applied field.
    pub applied_field: [f64; 3],
}

/// Per-step report mirrored to C.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LlgStepReport {
    /// Time after the step.
    pub t: f64,
    pub sweeps: usize,
    /// Final field residual of the fixed-point iteration.
    pub residual: f64,
    pub stray_solves: usize,
    pub energy: f64,
    pub energy_residual: f64,
    /// Largest nodal norm deviation from the initial state.
    pub norm_dev_max: f64,
    pub avg_m: [f64; 3],
}

/// Opaque simulation handle: mesh, assembled operators and time-stepping
/// state.
pub struct LlgSim {
    space: Arc<FemSpace>,
    stepper: Stepper,
}

fn build_set(space: &Arc<FemSpace>, params: &LlgSimParams) -> Result<ContributionSet, Error> {
    let cg = SolverConfig {
        rel_tol: params.cg_rel_tol,
        ..Default::default()
    };
    Ok(ContributionSet {
        stray: if params.enable_stray != 0 {
            Some(StrayFieldSolver::new(space.clone(), params.quad_points, cg)?)
        } else {
            None
        },
        anisotropy: if params.enable_anisotropy != 0 {
            Some(UniaxialAnisotropy {
                axis: Vector3::from_column_slice(&params.aniso_axis),
            })
        } else {
            None
        },
        zhang_li: if params.enable_zhang_li != 0 {
            Some(ZhangLi {
                v: Vector3::from_column_slice(&params.zl_velocity),
                xi: params.zl_xi,
            })
        } else {
            None
        },
        applied: AppliedField::Constant(Vector3::from_column_slice(&params.applied_field)),
    })
}

/// Create a simulation on a mesh from an initial magnetization given as
/// `3 * vertex_count` doubles (x, y, z per node).
///
/// # Safety
/// `mesh` must be a live handle, `params` readable, `m0` must point to
/// `3 * llg_mesh_vertex_count(mesh)` doubles, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn llg_sim_new(
    mesh: *const LlgMesh,
    params: *const LlgSimParams,
    m0: *const f64,
    out: *mut *mut LlgSim,
) -> LlgStatus {
    guarded(|| {
        if mesh.is_null() || params.is_null() || m0.is_null() || out.is_null() {
            return invalid("llg_sim_new: null pointer argument");
        }
        let params = &*params;
        let space = Arc::new(FemSpace::new((*mesh).mesh.clone()));
        let n = space.node_count();
        let values: Vec<Vector3<f64>> = (0..n)
            .map(|i| Vector3::new(*m0.add(3 * i), *m0.add(3 * i + 1), *m0.add(3 * i + 2)))
            .collect();
        let m0 = NodalVectorField::from_values(values);

        let set = match build_set(&space, params) {
            Ok(s) => s,
            Err(e) => return fail(&e),
        };
        // t_final only bounds the step count during validation; the C API
        // steps explicitly.
        let mut cfg = IntegratorConfig::new(params.k, params.k);
        cfg.alpha = params.alpha;
        cfg.c_ex = params.c_ex;
        cfg.epsilon = params.epsilon;
        cfg.max_sweeps = if params.max_sweeps == 0 {
            500
        } else {
            params.max_sweeps
        };
        cfg.strategy = match params.strategy {
            LlgStrategy::Midpoint => PiStrategy::Midpoint,
            LlgStrategy::AdamsBashforth => PiStrategy::AdamsBashforth,
            LlgStrategy::ExplicitEuler => PiStrategy::ExplicitEuler,
        };
        match Stepper::new(space.clone(), &set, cfg, m0) {
            Ok(stepper) => {
                *out = Box::into_raw(Box::new(LlgSim { space, stepper }));
                LlgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Advance one time step; fills `report` when non-null.
///
/// # Safety
/// `sim` must be a live handle; `report` null or writable.
#[no_mangle]
pub unsafe extern "C" fn llg_sim_step(sim: *mut LlgSim, report: *mut LlgStepReport) -> LlgStatus {
    llg_sim_run(sim, 1, report)
}

/// Advance `steps` time steps; fills `report` with the last step when
/// non-null.
///
/// # Safety
/// `sim` must be a live handle; `report` null or writable.
#[no_mangle]
pub unsafe extern "C" fn llg_sim_run(
    sim: *mut LlgSim,
    steps: usize,
    report: *mut LlgStepReport,
) -> LlgStatus {
    guarded(|| {
        if sim.is_null() {
            return invalid("llg_sim_run: null simulation handle");
        }
        let sim = &mut *sim;
        for _ in 0..steps {
            match sim.stepper.step() {
                Ok(r) => {
                    if !report.is_null() {
                        *report = LlgStepReport {
                            t: r.t,
                            sweeps: r.sweeps,
                            residual: r.residual,
                            stray_solves: r.stray_solves,
                            energy: r.energy.total(),
                            energy_residual: r.energy_residual,
                            norm_dev_max: r.norm_dev_max,
                            avg_m: [r.avg_m.x, r.avg_m.y, r.avg_m.z],
                        };
                    }
                }
                Err(e) => return fail(&e),
            }
        }
        LlgStatus::Ok
    })
}

/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn llg_sim_node_count(sim: *const LlgSim) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).space.node_count()
}

/// Copy the current magnetization into `3 * node_count` doubles.
///
/// # Safety
/// `sim` must be a live handle and `out` must point to
/// `3 * llg_sim_node_count(sim)` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn llg_sim_magnetization(sim: *const LlgSim, out: *mut f64) -> LlgStatus {
    guarded(|| {
        if sim.is_null() || out.is_null() {
            return invalid("llg_sim_magnetization: null pointer argument");
        }
        let m = (*sim).stepper.m_curr();
        for (i, v) in m.values().iter().enumerate() {
            *out.add(3 * i) = v.x;
            *out.add(3 * i + 1) = v.y;
            *out.add(3 * i + 2) = v.z;
        }
        LlgStatus::Ok
    })
}

/// Volume-weighted mean magnetization.
///
/// # Safety
/// `sim` must be a live handle, `out` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn llg_sim_average_magnetization(
    sim: *const LlgSim,
    out: *mut f64,
) -> LlgStatus {
    guarded(|| {
        if sim.is_null() || out.is_null() {
            return invalid("llg_sim_average_magnetization: null pointer argument");
        }
        let sim = &*sim;
        let avg = average_magnetization(sim.stepper.m_curr(), &sim.space.weights);
        *out = avg.x;
        *out.add(1) = avg.y;
        *out.add(2) = avg.z;
        LlgStatus::Ok
    })
}

/// Write the current state as a legacy ASCII VTK unstructured grid.
///
/// # Safety
/// `sim` must be a live handle, `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn llg_sim_write_vtk(sim: *const LlgSim, path: *const c_char) -> LlgStatus {
    guarded(|| {
        if sim.is_null() || path.is_null() {
            return invalid("llg_sim_write_vtk: null pointer argument");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(_) => return invalid("llg_sim_write_vtk: path is not valid UTF-8"),
        };
        let sim = &*sim;
        match llg_core::io::write_vtk(
            path,
            &sim.space.mesh,
            sim.stepper.m_curr(),
            "magnetization",
        ) {
            Ok(()) => LlgStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Release a simulation handle. Passing null is a no-op.
///
/// # Safety
/// `sim` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn llg_sim_free(sim: *mut LlgSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn default_params() -> LlgSimParams {
        LlgSimParams {
            k: 1e-3,
            alpha: 1.0,
            c_ex: 1.0,
            epsilon: 1e-10,
            strategy: LlgStrategy::AdamsBashforth,
            max_sweeps: 200,
            enable_stray: 0,
            quad_points: 7,
            cg_rel_tol: 1e-10,
            enable_anisotropy: 0,
            aniso_axis: [0.0, 0.0, 1.0],
            enable_zhang_li: 0,
            zl_velocity: [0.0; 3],
            zl_xi: 0.05,
            applied_field: [-2.0, -0.5, 0.0],
        }
    }

    unsafe fn make_box(n: usize) -> *mut LlgMesh {
        let lo = [0.0f64; 3];
        let hi = [1.0f64; 3];
        let mut mesh: *mut LlgMesh = std::ptr::null_mut();
        let status = llg_mesh_box(n, n, n, lo.as_ptr(), hi.as_ptr(), &mut mesh);
        assert_eq!(status, LlgStatus::Ok);
        mesh
    }

    #[test]
    fn mesh_lifecycle_and_counts() {
        unsafe {
            let mesh = make_box(2);
            assert_eq!(llg_mesh_vertex_count(mesh), 27);
            assert_eq!(llg_mesh_tet_count(mesh), 48);
            assert_eq!(llg_mesh_boundary_face_count(mesh), 48);
            llg_mesh_free(mesh);
        }
    }

    #[test]
    fn invalid_mesh_reports_message() {
        unsafe {
            let lo = [1.0f64, 0.0, 0.0];
            let hi = [0.0f64, 1.0, 1.0];
            let mut mesh: *mut LlgMesh = std::ptr::null_mut();
            let status = llg_mesh_box(1, 1, 1, lo.as_ptr(), hi.as_ptr(), &mut mesh);
            assert_eq!(status, LlgStatus::InvalidArgument);
            let mut buf = [0 as c_char; 256];
            let len = llg_last_error_message(buf.as_mut_ptr(), buf.len());
            assert!(len > 0);
            let msg = CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned();
            assert!(msg.contains("lo < hi"), "{msg}");
        }
    }

    #[test]
    fn simulation_round_trip() {
        unsafe {
            let mesh = make_box(2);
            let n = llg_mesh_vertex_count(mesh);
            let mut m0 = vec![0.0f64; 3 * n];
            for i in 0..n {
                m0[3 * i] = 1.0;
            }
            let params = default_params();
            let mut sim: *mut LlgSim = std::ptr::null_mut();
            let status = llg_sim_new(mesh, &params, m0.as_ptr(), &mut sim);
            assert_eq!(status, LlgStatus::Ok);
            assert_eq!(llg_sim_node_count(sim), n);

            let mut report = LlgStepReport::default();
            let status = llg_sim_run(sim, 10, &mut report);
            assert_eq!(status, LlgStatus::Ok);
            assert!((report.t - 0.01).abs() < 1e-12);
            assert!(report.sweeps >= 1);
            assert!(report.norm_dev_max <= 1e-12);
            assert!(report.avg_m[0] < 1.0);

            let mut m = vec![0.0f64; 3 * n];
            assert_eq!(llg_sim_magnetization(sim, m.as_mut_ptr()), LlgStatus::Ok);
            let norm0 = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
            assert!((norm0 - 1.0).abs() < 1e-10);

            let mut avg = [0.0f64; 3];
            assert_eq!(
                llg_sim_average_magnetization(sim, avg.as_mut_ptr()),
                LlgStatus::Ok
            );
            assert_eq!(avg, report.avg_m);

            llg_sim_free(sim);
            llg_mesh_free(mesh);
        }
    }

    #[test]
    fn bad_parameters_rejected() {
        unsafe {
            let mesh = make_box(1);
            let n = llg_mesh_vertex_count(mesh);
            let m0 = vec![1.0f64; 3 * n];
            let mut params = default_params();
            params.k = -1.0;
            let mut sim: *mut LlgSim = std::ptr::null_mut();
            let status = llg_sim_new(mesh, &params, m0.as_ptr(), &mut sim);
            assert_eq!(status, LlgStatus::InvalidArgument);
            assert!(sim.is_null());

            let mut params = default_params();
            params.enable_anisotropy = 1;
            params.aniso_axis = [1.0, 1.0, 0.0];
            let status = llg_sim_new(mesh, &params, m0.as_ptr(), &mut sim);
            assert_eq!(status, LlgStatus::InvalidArgument);
            llg_mesh_free(mesh);
        }
    }

    #[test]
    fn mesh_save_load_via_ffi() {
        unsafe {
            let dir = std::env::temp_dir().join("llg_ffi_mesh_test");
            std::fs::create_dir_all(&dir).unwrap();
            let path = dir.join("cube.tetmesh");
            let cpath = CString::new(path.to_str().unwrap()).unwrap();

            let mesh = make_box(1);
            assert_eq!(llg_mesh_save(mesh, cpath.as_ptr()), LlgStatus::Ok);
            let mut loaded: *mut LlgMesh = std::ptr::null_mut();
            assert_eq!(llg_mesh_load(cpath.as_ptr(), &mut loaded), LlgStatus::Ok);
            assert_eq!(llg_mesh_vertex_count(loaded), 8);
            assert_eq!(llg_mesh_tet_count(loaded), 6);
            llg_mesh_free(loaded);
            llg_mesh_free(mesh);

            let missing = CString::new("/nonexistent/mesh.tetmesh").unwrap();
            let mut out: *mut LlgMesh = std::ptr::null_mut();
            assert_eq!(
                llg_mesh_load(missing.as_ptr(), &mut out),
                LlgStatus::IoError
            );
        }
    }
}
