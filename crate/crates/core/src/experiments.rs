//! Experiment drivers behind the `llg` command line: the damped-switching
//! cube benchmark, the time-step convergence study, the current-driven
//! vortex standard problem, and a free-form config-driven run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;

use crate::config::{ConfigMap, ResolvedConfig};
use crate::contributions::{AppliedField, ContributionSet, PiStrategy, UniaxialAnisotropy, ZhangLi};
use crate::demag::StrayFieldSolver;
use crate::diagnostics::{average_magnetization, fit_order, reference_error};
use crate::error::{Error, Result};
use crate::fem::{interpolate_nodal, FemSpace, NodalVectorField};
use crate::integrator::{integrate, FirstStep, IntegratorConfig, Stepper, Trajectory};
use crate::io;
use crate::linsolve::SolverConfig;
use crate::mesh::build_box_mesh;

/// Averaged magnetization over time: `(t_ns, <m>)` rows.
pub type AverageSeries = Vec<(f64, Vector3<f64>)>;

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn build_space(
    nx: usize,
    ny: usize,
    nz: usize,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
) -> Result<Arc<FemSpace>> {
    Ok(Arc::new(FemSpace::new(Arc::new(build_box_mesh(
        nx, ny, nz, lo, hi,
    )?))))
}

fn parse_first_step(s: &str) -> Result<FirstStep> {
    match s {
        "as-printed" => Ok(FirstStep::AsPrinted),
        "mp" => Ok(FirstStep::Midpoint),
        other => Err(Error::config(format!(
            "unknown first_step `{other}` (expected as-printed or mp)"
        ))),
    }
}

/// Snapshot states of a trajectory as numbered VTK files.
fn write_snapshots(dir: &Path, prefix: &str, traj: &Trajectory, space: &FemSpace) -> Result<()> {
    for (idx, (t, state)) in traj.times.iter().zip(&traj.states).enumerate() {
        let path = dir.join(format!("{prefix}_{idx:04}.vtk"));
        io::write_vtk(&path, &space.mesh, state, &format!("magnetization at t = {t}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cube benchmark
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CubeParams {
    /// Accepted for interface stability; the computation is single-threaded.
    pub threads: Option<usize>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub k: f64,
    pub t_final: f64,
    pub alpha: f64,
    pub c_ex: f64,
    pub epsilon: f64,
    pub strategy: PiStrategy,
    pub first_step: FirstStep,
    pub max_sweeps: usize,
    pub stray: bool,
    pub quad_points: usize,
    pub cg_rel_tol: f64,
    pub f: Vector3<f64>,
    pub m0: Vector3<f64>,
    pub snapshot_dt: f64,
}

impl CubeParams {
    pub fn from_config(cfg: &ConfigMap) -> Result<Self> {
        let p = CubeParams {
            threads: cfg.get_usize("threads")?,
            nx: cfg.get_usize("nx")?.unwrap_or(8),
            ny: cfg.get_usize("ny")?.unwrap_or(8),
            nz: cfg.get_usize("nz")?.unwrap_or(8),
            k: cfg.get_f64("k")?.unwrap_or(8e-4),
            t_final: cfg.get_f64("t_final")?.unwrap_or(5.0),
            alpha: cfg.get_f64("alpha")?.unwrap_or(1.0),
            c_ex: cfg.get_f64("c_ex")?.unwrap_or(1.0),
            epsilon: cfg.get_f64("epsilon")?.unwrap_or(1e-10),
            strategy: PiStrategy::parse(cfg.get_str("strategy").unwrap_or("mp"))?,
            first_step: parse_first_step(cfg.get_str("first_step").unwrap_or("as-printed"))?,
            max_sweeps: cfg.get_usize("max_sweeps")?.unwrap_or(500),
            stray: cfg.get_bool("stray")?.unwrap_or(true),
            quad_points: cfg.get_usize("quad_points")?.unwrap_or(7),
            cg_rel_tol: cfg.get_f64("cg_rel_tol")?.unwrap_or(1e-10),
            f: cfg.get_vec3("f")?.unwrap_or(Vector3::new(-2.0, -0.5, 0.0)),
            m0: cfg.get_vec3("m0")?.unwrap_or(Vector3::new(1.0, 0.0, 0.0)),
            snapshot_dt: cfg.get_f64("snapshot_dt")?.unwrap_or(1.0),
        };
        Ok(p)
    }

    fn resolved(&self) -> ResolvedConfig {
        let mut r = ResolvedConfig::default();
        r.push("experiment", "cube");
        if let Some(t) = self.threads {
            r.push("threads", t);
        }
        r.push("nx", self.nx);
        r.push("ny", self.ny);
        r.push("nz", self.nz);
        r.push("k", self.k);
        r.push("t_final", self.t_final);
        r.push("alpha", self.alpha);
        r.push("c_ex", self.c_ex);
        r.push("epsilon", self.epsilon);
        r.push("strategy", self.strategy);
        r.push(
            "first_step",
            match self.first_step {
                FirstStep::AsPrinted => "as-printed",
                FirstStep::Midpoint => "mp",
            },
        );
        r.push("max_sweeps", self.max_sweeps);
        r.push("stray", self.stray);
        r.push("quad_points", self.quad_points);
        r.push("cg_rel_tol", self.cg_rel_tol);
        r.push_vec3("f", self.f);
        r.push_vec3("m0", self.m0);
        r.push("snapshot_dt", self.snapshot_dt);
        r
    }
}

#[derive(Debug)]
pub struct CubeOutput {
    pub trajectory: Trajectory,
    pub mean_sweeps: f64,
    pub mean_wtime: f64,
    pub mean_wtime_stray: f64,
    pub mean_stray_solves: f64,
    pub summary: String,
}

pub fn run_cube(params: &CubeParams, out_dir: &Path) -> Result<CubeOutput> {
    ensure_dir(out_dir)?;
    let space = build_space(
        params.nx,
        params.ny,
        params.nz,
        Vector3::zeros(),
        Vector3::new(1.0, 1.0, 1.0),
    )?;
    let cg = SolverConfig {
        rel_tol: params.cg_rel_tol,
        ..Default::default()
    };
    let set = ContributionSet {
        stray: if params.stray {
            Some(StrayFieldSolver::new(space.clone(), params.quad_points, cg)?)
        } else {
            None
        },
        applied: AppliedField::Constant(params.f),
        ..Default::default()
    };

    let mut cfg = IntegratorConfig::new(params.k, params.t_final);
    cfg.alpha = params.alpha;
    cfg.c_ex = params.c_ex;
    cfg.epsilon = params.epsilon;
    cfg.strategy = params.strategy;
    cfg.first_step = params.first_step;
    cfg.max_sweeps = params.max_sweeps;
    let stride = (params.snapshot_dt / params.k).round();
    if stride < 1.0 || (params.snapshot_dt / params.k - stride).abs() > 1e-8 * stride {
        return Err(Error::config(
            "snapshot_dt must be an integer multiple of k",
        ));
    }
    cfg.store_every = stride as usize;

    let m0 = NodalVectorField::constant(space.node_count(), params.m0);
    let trajectory = integrate(&space, &set, cfg, m0)?;

    io::write_diagnostics_csv(out_dir.join("diagnostics.csv"), &trajectory.records)?;
    write_snapshots(out_dir, "snapshot", &trajectory, &space)?;
    params.resolved().write(out_dir)?;

    let n = trajectory.records.len() as f64;
    let mean_sweeps = trajectory.mean_sweeps();
    let mean_wtime = trajectory.mean_wtime();
    let mean_wtime_stray =
        trajectory.records.iter().map(|r| r.wtime_stray).sum::<f64>() / n;
    let mean_stray_solves =
        trajectory.records.iter().map(|r| r.stray_solves as f64).sum::<f64>() / n;
    let last = trajectory.records.last().expect("at least one step");
    let summary = format!(
        "cube: {} steps, strategy {}, k = {}\n\
         mean sweeps/step:        {mean_sweeps:.2}\n\
         mean wall time/step:     {mean_wtime:.6} s\n\
         mean stray time/step:    {mean_wtime_stray:.6} s\n\
         mean stray solves/step:  {mean_stray_solves:.2}\n\
         max nodal norm drift:    {:.3e}\n\
         final energy:            {}\n\
         final <m>:               {} {} {}",
        trajectory.records.len(),
        params.strategy,
        params.k,
        trajectory.max_norm_deviation(),
        last.energy.total(),
        last.avg_m.x,
        last.avg_m.y,
        last.avg_m.z,
    );
    std::fs::write(out_dir.join("summary.txt"), format!("{summary}\n"))?;

    Ok(CubeOutput {
        trajectory,
        mean_sweeps,
        mean_wtime,
        mean_wtime_stray,
        mean_stray_solves,
        summary,
    })
}

// ---------------------------------------------------------------------------
// convergence study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ConvergenceParams {
    pub threads: Option<usize>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub t_final: f64,
    pub k_list: Vec<f64>,
    pub k_ref: f64,
    pub strategies: Vec<PiStrategy>,
    pub alpha: f64,
    pub c_ex: f64,
    pub epsilon: f64,
    pub stray: bool,
    pub quad_points: usize,
    pub cg_rel_tol: f64,
    pub f: Vector3<f64>,
    pub m0: Vector3<f64>,
}

impl ConvergenceParams {
    pub fn from_config(cfg: &ConfigMap) -> Result<Self> {
        let strategies = match cfg.get_str("strategies") {
            None => vec![
                PiStrategy::Midpoint,
                PiStrategy::AdamsBashforth,
                PiStrategy::ExplicitEuler,
            ],
            Some(list) => list
                .split(',')
                .map(|s| PiStrategy::parse(s.trim()))
                .collect::<Result<_>>()?,
        };
        Ok(ConvergenceParams {
            threads: cfg.get_usize("threads")?,
            nx: cfg.get_usize("nx")?.unwrap_or(4),
            ny: cfg.get_usize("ny")?.unwrap_or(4),
            nz: cfg.get_usize("nz")?.unwrap_or(4),
            t_final: cfg.get_f64("t_final")?.unwrap_or(0.5),
            k_list: cfg
                .get_f64_list("k_list")?
                .unwrap_or_else(|| vec![16e-4, 8e-4, 4e-4]),
            k_ref: cfg.get_f64("k_ref")?.unwrap_or(1e-4),
            strategies,
            alpha: cfg.get_f64("alpha")?.unwrap_or(1.0),
            c_ex: cfg.get_f64("c_ex")?.unwrap_or(1.0),
            epsilon: cfg.get_f64("epsilon")?.unwrap_or(1e-10),
            stray: cfg.get_bool("stray")?.unwrap_or(true),
            quad_points: cfg.get_usize("quad_points")?.unwrap_or(7),
            cg_rel_tol: cfg.get_f64("cg_rel_tol")?.unwrap_or(1e-10),
            f: cfg.get_vec3("f")?.unwrap_or(Vector3::new(-2.0, -0.5, 0.0)),
            m0: cfg.get_vec3("m0")?.unwrap_or(Vector3::new(1.0, 0.0, 0.0)),
        })
    }

    /// The output grid spacing is the coarsest step size; every run must
    /// land on it exactly.
    fn validate(&self) -> Result<f64> {
        if self.k_list.is_empty() {
            return Err(Error::config("k_list must not be empty"));
        }
        let k_coarse = self.k_list.iter().cloned().fold(0.0, f64::max);
        for &k in self.k_list.iter().chain(std::iter::once(&self.k_ref)) {
            if k <= 0.0 || !k.is_finite() {
                return Err(Error::config("step sizes must be positive"));
            }
            if k > self.k_ref {
                let ratio = k / self.k_ref;
                if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                    return Err(Error::config(format!(
                        "k = {k} is not an integer multiple of k_ref = {}",
                        self.k_ref
                    )));
                }
            }
            let ratio = k_coarse / k;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                return Err(Error::config(format!(
                    "k = {k} does not divide the coarsest step {k_coarse}"
                )));
            }
        }
        for &k in &self.k_list {
            if k <= self.k_ref {
                return Err(Error::config(format!(
                    "k = {k} must be strictly coarser than k_ref = {}",
                    self.k_ref
                )));
            }
        }
        Ok(k_coarse)
    }

    fn resolved(&self) -> ResolvedConfig {
        let mut r = ResolvedConfig::default();
        r.push("experiment", "convergence");
        if let Some(t) = self.threads {
            r.push("threads", t);
        }
        r.push("nx", self.nx);
        r.push("ny", self.ny);
        r.push("nz", self.nz);
        r.push("t_final", self.t_final);
        r.push(
            "k_list",
            self.k_list
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        r.push("k_ref", self.k_ref);
        r.push(
            "strategies",
            self.strategies
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        r.push("alpha", self.alpha);
        r.push("c_ex", self.c_ex);
        r.push("epsilon", self.epsilon);
        r.push("stray", self.stray);
        r.push("quad_points", self.quad_points);
        r.push("cg_rel_tol", self.cg_rel_tol);
        r.push_vec3("f", self.f);
        r.push_vec3("m0", self.m0);
        r
    }
}

#[derive(Debug)]
pub struct StrategyErrors {
    pub strategy: PiStrategy,
    pub samples: Vec<(f64, f64)>,
    pub order: f64,
}

#[derive(Debug)]
pub struct ConvergenceOutput {
    pub per_strategy: Vec<StrategyErrors>,
    pub summary: String,
}

pub fn run_convergence(params: &ConvergenceParams, out_dir: &Path) -> Result<ConvergenceOutput> {
    ensure_dir(out_dir)?;
    let k_coarse = params.validate()?;
    // all runs stop at the largest multiple of the coarsest step inside the
    // requested horizon, so every run lands on the shared output grid with
    // an integer number of steps
    let t_eff = (params.t_final / k_coarse + 1e-9).floor() * k_coarse;
    if t_eff <= 0.0 {
        return Err(Error::config(format!(
            "final time {} is shorter than the coarsest step {k_coarse}",
            params.t_final
        )));
    }
    let space = build_space(
        params.nx,
        params.ny,
        params.nz,
        Vector3::zeros(),
        Vector3::new(1.0, 1.0, 1.0),
    )?;
    let cg = SolverConfig {
        rel_tol: params.cg_rel_tol,
        ..Default::default()
    };
    let set = ContributionSet {
        stray: if params.stray {
            Some(StrayFieldSolver::new(space.clone(), params.quad_points, cg)?)
        } else {
            None
        },
        applied: AppliedField::Constant(params.f),
        ..Default::default()
    };
    let m0 = NodalVectorField::constant(space.node_count(), params.m0);

    let run = |strategy: PiStrategy, k: f64| -> Result<Trajectory> {
        let mut cfg = IntegratorConfig::new(k, t_eff);
        cfg.alpha = params.alpha;
        cfg.c_ex = params.c_ex;
        cfg.epsilon = params.epsilon;
        cfg.strategy = strategy;
        cfg.store_every = (k_coarse / k).round() as usize;
        integrate(&space, &set, cfg, m0.clone())
    };

    let mut per_strategy = Vec::new();
    let mut summary = String::from("convergence orders (reference error slope in k):\n");
    for &strategy in &params.strategies {
        let reference = run(strategy, params.k_ref)?;
        let mut samples = Vec::new();
        for &k in &params.k_list {
            let traj = run(strategy, k)?;
            let err = reference_error(&space, &reference.states, &traj.states);
            samples.push((k, err));
        }
        let order = fit_order(&samples)?;
        io::write_convergence_csv(
            out_dir.join(format!("convergence_{strategy}.csv")),
            &samples,
        )?;
        summary.push_str(&format!("  {strategy}: order {order:.3} from {samples:?}\n"));
        per_strategy.push(StrategyErrors {
            strategy,
            samples,
            order,
        });
    }
    let mut resolved = params.resolved();
    resolved.push("t_effective", t_eff);
    resolved.write(out_dir)?;
    std::fs::write(out_dir.join("summary.txt"), &summary)?;
    Ok(ConvergenceOutput {
        per_strategy,
        summary,
    })
}

// ---------------------------------------------------------------------------
// standard problem: current-driven vortex
// ---------------------------------------------------------------------------

pub const GYROMAGNETIC_RATIO: f64 = 2.21e5;
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Mumag5Params {
    pub threads: Option<usize>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Exchange stiffness (J/m).
    pub a_exchange: f64,
    /// Saturation magnetization (A/m).
    pub m_s: f64,
    pub alpha: f64,
    /// Spin velocity in m/s (applied from stage two on).
    pub v_tilde: Vector3<f64>,
    pub xi: f64,
    /// Length scale of the nondimensionalization (m).
    pub length_scale: f64,
    /// Stage-two step size in ps.
    pub k_ps: f64,
    /// Stage-two duration in ns.
    pub t_ns: f64,
    pub epsilon: f64,
    pub strategy: PiStrategy,
    pub relax_alpha: f64,
    pub relax_k: f64,
    pub relax_max_ns: f64,
    /// Stationarity threshold: largest nodal |dm/dt| at which the
    /// relaxation stops.
    pub relax_tol: f64,
    pub relax_epsilon: f64,
    pub quad_points: usize,
    pub cg_rel_tol: f64,
    /// Downsampling stride for the averages CSV.
    pub csv_every: usize,
}

impl Mumag5Params {
    pub fn from_config(cfg: &ConfigMap) -> Result<Self> {
        Ok(Mumag5Params {
            threads: cfg.get_usize("threads")?,
            nx: cfg.get_usize("nx")?.unwrap_or(16),
            ny: cfg.get_usize("ny")?.unwrap_or(16),
            nz: cfg.get_usize("nz")?.unwrap_or(2),
            a_exchange: cfg.get_f64("a_exchange")?.unwrap_or(1.3e-11),
            m_s: cfg.get_f64("m_s")?.unwrap_or(8.0e5),
            alpha: cfg.get_f64("alpha")?.unwrap_or(0.1),
            v_tilde: cfg
                .get_vec3("v_tilde")?
                .unwrap_or(Vector3::new(-72.17, 0.0, 0.0)),
            xi: cfg.get_f64("xi")?.unwrap_or(0.05),
            length_scale: cfg.get_f64("length_scale")?.unwrap_or(1e-9),
            k_ps: cfg.get_f64("k_ps")?.unwrap_or(0.1),
            t_ns: cfg.get_f64("t_ns")?.unwrap_or(8.0),
            epsilon: cfg.get_f64("epsilon")?.unwrap_or(5e-5),
            strategy: PiStrategy::parse(cfg.get_str("strategy").unwrap_or("ab"))?,
            relax_alpha: cfg.get_f64("relax_alpha")?.unwrap_or(1.0),
            relax_k: cfg.get_f64("relax_k")?.unwrap_or(0.1),
            relax_max_ns: cfg.get_f64("relax_max_ns")?.unwrap_or(20.0),
            relax_tol: cfg.get_f64("relax_tol")?.unwrap_or(1e-5),
            relax_epsilon: cfg.get_f64("relax_epsilon")?.unwrap_or(5e-5),
            quad_points: cfg.get_usize("quad_points")?.unwrap_or(7),
            cg_rel_tol: cfg.get_f64("cg_rel_tol")?.unwrap_or(1e-8),
            csv_every: cfg.get_usize("csv_every")?.unwrap_or(1),
        })
    }

    /// Nondimensional exchange constant 2A / (mu0 Ms^2 L^2).
    pub fn c_ex(&self) -> f64 {
        2.0 * self.a_exchange / (MU0 * self.m_s * self.m_s * self.length_scale.powi(2))
    }

    /// Nondimensional spin velocity -v_tilde / (gamma0 Ms L).
    pub fn v_nondim(&self) -> Vector3<f64> {
        -self.v_tilde / (GYROMAGNETIC_RATIO * self.m_s * self.length_scale)
    }

    /// Nondimensional time per nanosecond (t' = gamma0 Ms t).
    pub fn ns_unit(&self) -> f64 {
        GYROMAGNETIC_RATIO * self.m_s * 1e-9
    }

    pub fn stage2_k(&self) -> f64 {
        self.k_ps * 1e-12 * GYROMAGNETIC_RATIO * self.m_s
    }

    /// Film of 100 x 100 x 10 in units of the length scale, centered at the
    /// origin.
    pub fn space(&self) -> Result<Arc<FemSpace>> {
        build_space(
            self.nx,
            self.ny,
            self.nz,
            Vector3::new(-50.0, -50.0, -5.0),
            Vector3::new(50.0, 50.0, 5.0),
        )
    }

    pub fn vortex_initial(&self, space: &FemSpace) -> NodalVectorField {
        interpolate_nodal(&space.mesh, |p| {
            Vector3::new(-p.y, p.x, 10.0) / (p.x * p.x + p.y * p.y + 100.0).sqrt()
        })
        .expect("vortex profile is finite")
    }

    pub fn contribution_set(
        &self,
        space: &Arc<FemSpace>,
        v: Option<Vector3<f64>>,
    ) -> Result<ContributionSet> {
        let cg = SolverConfig {
            rel_tol: self.cg_rel_tol,
            ..Default::default()
        };
        Ok(ContributionSet {
            stray: Some(StrayFieldSolver::new(space.clone(), self.quad_points, cg)?),
            zhang_li: v.map(|v| ZhangLi { v, xi: self.xi }),
            ..Default::default()
        })
    }

    fn resolved(&self) -> ResolvedConfig {
        let mut r = ResolvedConfig::default();
        r.push("experiment", "mumag5");
        if let Some(t) = self.threads {
            r.push("threads", t);
        }
        r.push("nx", self.nx);
        r.push("ny", self.ny);
        r.push("nz", self.nz);
        r.push("a_exchange", self.a_exchange);
        r.push("m_s", self.m_s);
        r.push("alpha", self.alpha);
        r.push_vec3("v_tilde", self.v_tilde);
        r.push("xi", self.xi);
        r.push("length_scale", self.length_scale);
        r.push("k_ps", self.k_ps);
        r.push("t_ns", self.t_ns);
        r.push("epsilon", self.epsilon);
        r.push("strategy", self.strategy);
        r.push("relax_alpha", self.relax_alpha);
        r.push("relax_k", self.relax_k);
        r.push("relax_max_ns", self.relax_max_ns);
        r.push("relax_tol", self.relax_tol);
        r.push("relax_epsilon", self.relax_epsilon);
        r.push("quad_points", self.quad_points);
        r.push("cg_rel_tol", self.cg_rel_tol);
        r.push("csv_every", self.csv_every);
        r.push("c_ex_nondim", self.c_ex());
        r.push_vec3("v_nondim", self.v_nondim());
        r.push("k_nondim", self.stage2_k());
        r
    }
}

/// Damped relaxation toward the vortex equilibrium with zero spin velocity.
/// Stops once the largest nodal velocity drops below `relax_tol` (or the
/// time budget runs out, which is reported as an error).
pub fn mumag5_relax(
    params: &Mumag5Params,
    space: &Arc<FemSpace>,
    set: &ContributionSet,
    m0: NodalVectorField,
) -> Result<(NodalVectorField, AverageSeries)> {
    let ns = params.ns_unit();
    let t_max = params.relax_max_ns * ns;
    let max_steps = (t_max / params.relax_k).ceil().max(1.0) as usize;
    let mut cfg = IntegratorConfig::new(params.relax_k, max_steps as f64 * params.relax_k);
    cfg.alpha = params.relax_alpha;
    cfg.c_ex = params.c_ex();
    cfg.epsilon = params.relax_epsilon;
    cfg.strategy = params.strategy;

    let mut stepper = Stepper::new(space.clone(), set, cfg, m0)?;
    let mut rows = vec![(
        0.0,
        average_magnetization(stepper.m_curr(), &space.weights),
    )];
    let mut last_vmax = f64::INFINITY;
    for _ in 0..max_steps {
        let before = stepper.m_curr().clone();
        let record = stepper.step()?;
        rows.push((record.t / ns, record.avg_m));
        let mut vmax = 0.0f64;
        for i in 0..before.len() {
            vmax = vmax.max((stepper.m_curr()[i] - before[i]).norm() / params.relax_k);
        }
        last_vmax = vmax;
        if vmax <= params.relax_tol {
            return Ok((stepper.m_curr().clone(), rows));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_steps,
        residual: last_vmax,
        history: vec![],
    })
}

/// Stage-two dynamics from a relaxed state, with the spin velocity applied
/// (or held at zero to verify that the relaxed state is an equilibrium).
pub fn mumag5_drive(
    params: &Mumag5Params,
    space: &Arc<FemSpace>,
    m_start: NodalVectorField,
    with_current: bool,
    t_ns: f64,
) -> Result<(Trajectory, AverageSeries)> {
    let ns = params.ns_unit();
    let k = params.stage2_k();
    let steps = (t_ns * ns / k).round();
    let t_final = steps * k;
    let mut cfg = IntegratorConfig::new(k, t_final);
    cfg.alpha = params.alpha;
    cfg.c_ex = params.c_ex();
    cfg.epsilon = params.epsilon;
    cfg.strategy = params.strategy;
    cfg.store_every = steps as usize;

    let set = params.contribution_set(
        space,
        if with_current {
            Some(params.v_nondim())
        } else {
            None
        },
    )?;
    let traj = integrate(space, &set, cfg, m_start)?;
    let mut rows = Vec::with_capacity(traj.records.len() / params.csv_every + 1);
    for r in traj
        .records
        .iter()
        .step_by(params.csv_every.max(1))
    {
        rows.push((r.t / ns, r.avg_m));
    }
    Ok((traj, rows))
}

#[derive(Debug)]
pub struct Mumag5Output {
    pub relaxed_avg: Vector3<f64>,
    pub final_avg: Vector3<f64>,
    pub stage2_rows: AverageSeries,
    pub summary: String,
}

pub fn run_mumag5(params: &Mumag5Params, out_dir: &Path) -> Result<Mumag5Output> {
    ensure_dir(out_dir)?;
    let space = params.space()?;
    let relax_set = params.contribution_set(&space, None)?;
    let m0 = params.vortex_initial(&space);

    let (m_relaxed, stage1_rows) = mumag5_relax(params, &space, &relax_set, m0)?;
    io::write_averages_csv(out_dir.join("stage1_averages.csv"), &stage1_rows)?;
    io::write_vtk(
        out_dir.join("vortex_relaxed.vtk"),
        &space.mesh,
        &m_relaxed,
        "relaxed vortex state",
    )?;

    let (traj, stage2_rows) = mumag5_drive(params, &space, m_relaxed.clone(), true, params.t_ns)?;
    io::write_averages_csv(out_dir.join("stage2_averages.csv"), &stage2_rows)?;
    io::write_vtk(
        out_dir.join("vortex_final.vtk"),
        &space.mesh,
        traj.final_state(),
        "vortex state after current drive",
    )?;
    params.resolved().write(out_dir)?;

    let relaxed_avg = average_magnetization(&m_relaxed, &space.weights);
    let final_avg = traj.records.last().expect("steps executed").avg_m;
    let summary = format!(
        "mumag5: relaxed <m> = ({:.4}, {:.4}, {:.4}); after {} ns of current drive <m> = ({:.4}, {:.4}, {:.4}); mean sweeps {:.2}",
        relaxed_avg.x,
        relaxed_avg.y,
        relaxed_avg.z,
        params.t_ns,
        final_avg.x,
        final_avg.y,
        final_avg.z,
        traj.mean_sweeps(),
    );
    std::fs::write(out_dir.join("summary.txt"), format!("{summary}\n"))?;

    Ok(Mumag5Output {
        relaxed_avg,
        final_avg,
        stage2_rows,
        summary,
    })
}

// ---------------------------------------------------------------------------
// free-form run
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct CustomOutput {
    pub trajectory: Trajectory,
    pub summary: String,
}

pub fn run_custom(cfg: &ConfigMap, out_dir: &Path) -> Result<CustomOutput> {
    ensure_dir(out_dir)?;
    let nx = cfg.get_usize("nx")?.unwrap_or(4);
    let ny = cfg.get_usize("ny")?.unwrap_or(4);
    let nz = cfg.get_usize("nz")?.unwrap_or(4);
    let lo = cfg.get_vec3("lo")?.unwrap_or(Vector3::zeros());
    let hi = cfg.get_vec3("hi")?.unwrap_or(Vector3::new(1.0, 1.0, 1.0));
    let space = match cfg.get_str("mesh_file") {
        Some(path) => Arc::new(FemSpace::new(Arc::new(crate::mesh::load_mesh(path)?))),
        None => build_space(nx, ny, nz, lo, hi)?,
    };

    let k = cfg.get_f64("k")?.unwrap_or(1e-3);
    let t_final = cfg.get_f64("t_final")?.unwrap_or(0.1);
    let mut icfg = IntegratorConfig::new(k, t_final);
    icfg.alpha = cfg.get_f64("alpha")?.unwrap_or(1.0);
    icfg.c_ex = cfg.get_f64("c_ex")?.unwrap_or(1.0);
    icfg.epsilon = cfg.get_f64("epsilon")?.unwrap_or(1e-10);
    icfg.strategy = PiStrategy::parse(cfg.get_str("strategy").unwrap_or("mp"))?;
    icfg.first_step = parse_first_step(cfg.get_str("first_step").unwrap_or("as-printed"))?;
    icfg.max_sweeps = cfg.get_usize("max_sweeps")?.unwrap_or(500);
    let steps = icfg.step_count()?;
    icfg.store_every = cfg.get_usize("store_every")?.unwrap_or(steps);

    let cg = SolverConfig {
        rel_tol: cfg.get_f64("cg_rel_tol")?.unwrap_or(1e-10),
        ..Default::default()
    };
    let quad = cfg.get_usize("quad_points")?.unwrap_or(7);
    let set = ContributionSet {
        stray: if cfg.get_bool("stray")?.unwrap_or(false) {
            Some(StrayFieldSolver::new(space.clone(), quad, cg)?)
        } else {
            None
        },
        anisotropy: cfg
            .get_vec3("aniso_axis")?
            .map(|axis| UniaxialAnisotropy { axis }),
        zhang_li: match cfg.get_vec3("zl_v")? {
            Some(v) => Some(ZhangLi {
                v,
                xi: cfg.get_f64("zl_xi")?.unwrap_or(0.05),
            }),
            None => None,
        },
        applied: match cfg.get_vec3("f")? {
            Some(f) => AppliedField::Constant(f),
            None => AppliedField::Zero,
        },
    };

    let m0 = match cfg.get_str("m0_kind").unwrap_or("constant") {
        "constant" => NodalVectorField::constant(
            space.node_count(),
            cfg.get_vec3("m0")?.unwrap_or(Vector3::new(1.0, 0.0, 0.0)),
        ),
        "vortex" => interpolate_nodal(&space.mesh, |p| {
            Vector3::new(-p.y, p.x, 10.0) / (p.x * p.x + p.y * p.y + 100.0).sqrt()
        })?,
        other => {
            return Err(Error::config(format!(
                "unknown m0_kind `{other}` (expected constant or vortex)"
            )))
        }
    };

    let trajectory = integrate(&space, &set, icfg, m0)?;
    io::write_diagnostics_csv(out_dir.join("diagnostics.csv"), &trajectory.records)?;
    io::write_vtk(
        out_dir.join("final.vtk"),
        &space.mesh,
        trajectory.final_state(),
        "final state",
    )?;

    let mut r = ResolvedConfig::default();
    r.push("experiment", "custom");
    for key in cfg.keys() {
        r.push(key, cfg.get_str(key).unwrap_or(""));
    }
    r.push("resolved_k", k);
    r.push("resolved_t_final", t_final);
    r.push("resolved_steps", steps);
    r.write(out_dir)?;

    let last = trajectory.records.last().expect("steps executed");
    let summary = format!(
        "custom: {} steps, final energy {}, final <m> = ({}, {}, {})",
        trajectory.records.len(),
        last.energy.total(),
        last.avg_m.x,
        last.avg_m.y,
        last.avg_m.z
    );
    std::fs::write(out_dir.join("summary.txt"), format!("{summary}\n"))?;
    Ok(CustomOutput {
        trajectory,
        summary,
    })
}

/// Output directory default per experiment.
pub fn default_out_dir(experiment: &str) -> PathBuf {
    PathBuf::from(format!("out_{experiment}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn physical_scaling_constants() {
        let cfg = ConfigMap::default();
        let p = Mumag5Params::from_config(&cfg).unwrap();
        assert!((p.c_ex() - 32.33).abs() < 0.02, "c_ex {}", p.c_ex());
        let v = p.v_nondim();
        assert!((v.x - 0.4082).abs() < 5e-4, "v {}", v.x);
        assert_eq!(v.y, 0.0);
        // one nanosecond in nondimensional time
        assert!((p.ns_unit() - 176.8).abs() < 0.1);
        // the printed 0.005 ps step of the fine-scale setup
        let fine = Mumag5Params {
            k_ps: 0.005,
            ..p
        };
        assert!((fine.stage2_k() - 8.84e-4).abs() < 1e-6);
    }

    #[test]
    fn convergence_validation_rejects_non_nested_steps() {
        let mut cfg = ConfigMap::default();
        cfg.set("k_list", "3e-4,8e-4");
        cfg.set("k_ref", "1e-4");
        let p = ConvergenceParams::from_config(&cfg).unwrap();
        assert!(p.validate().is_err());

        let mut cfg = ConfigMap::default();
        cfg.set("k_list", "16e-4,8e-4,4e-4");
        cfg.set("k_ref", "1e-4");
        let p = ConvergenceParams::from_config(&cfg).unwrap();
        assert!(p.validate().is_ok());

        // k in the list must stay coarser than the reference
        let mut cfg = ConfigMap::default();
        cfg.set("k_list", "1e-4");
        cfg.set("k_ref", "1e-4");
        let p = ConvergenceParams::from_config(&cfg).unwrap();
        assert!(p.validate().is_err());
    }

    #[test]
    fn cube_defaults_match_benchmark() {
        let cfg = ConfigMap::default();
        let p = CubeParams::from_config(&cfg).unwrap();
        assert_eq!((p.nx, p.ny, p.nz), (8, 8, 8));
        assert_eq!(p.k, 8e-4);
        assert_eq!(p.t_final, 5.0);
        assert_eq!(p.f, Vector3::new(-2.0, -0.5, 0.0));
        assert_eq!(p.m0, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(p.epsilon, 1e-10);
        let r = p.resolved();
        assert_eq!(r.get("strategy"), Some("mp"));
        assert_eq!(r.get("alpha"), Some("1"));
    }
}
