//! The implicit-explicit midpoint integrator with its inexact fixed-point
//! solver.
//!
//! Each time step solves the midpoint system by repeated sweeps: a
//! linearized solve against the frozen effective field followed by a field
//! update, until the field residual in the lumped norm drops below the
//! stopping tolerance. Because the lumped product is diagonal in the nodal
//! basis, the linearized system decouples into independent 3x3 problems
//! with a closed-form solution, which preserves the nodal magnetization
//! norms exactly.
//!
//! The damping cross term of the sweep carries the coefficient `2 alpha/k`:
//! substituting the midpoint average `eta = (m_next + m_curr)/2` and the
//! difference quotient `d_t m = 2 (eta - m_curr)/k` into the scheme turns
//! `alpha <m_mid x d_t m, phi>` into `(2 alpha/k) <eta x m_curr, phi>`
//! after the `eta x eta` term drops out.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::Vector3;

use crate::contributions::{
    eval_pi_with_stray, pi_h, sample_applied_field, ContributionSet, PiEval, PiStrategy,
};
use crate::diagnostics::{
    average_magnetization, energy, energy_identity_parts, EnergyBreakdown,
};
use crate::error::{Error, Result};
use crate::fem::{
    discrete_laplacian, norm_h, project_ph_nodal, FemSpace, NodalVectorField,
};
use crate::linsolve::solve_node_cross;

/// Treatment of the very first time step: either exactly as the input line
/// of the stepping algorithm prescribes (the two-step extrapolation
/// degenerates gracefully because `m_prev = m0`), or with one midpoint
/// step before switching to the configured strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FirstStep {
    #[default]
    AsPrinted,
    Midpoint,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    /// Time-step size (nondimensional).
    pub k: f64,
    /// Final time; `t_final / k` must round to an integer step count.
    pub t_final: f64,
    /// Gilbert damping, positive.
    pub alpha: f64,
    /// Exchange constant, positive.
    pub c_ex: f64,
    /// Stopping tolerance of the fixed-point iteration.
    pub epsilon: f64,
    pub strategy: PiStrategy,
    pub max_sweeps: usize,
    pub first_step: FirstStep,
    /// Keep every n-th state in the trajectory (the final state is always
    /// kept; the step count must be divisible by this stride).
    pub store_every: usize,
}

impl IntegratorConfig {
    pub fn new(k: f64, t_final: f64) -> Self {
        IntegratorConfig {
            k,
            t_final,
            alpha: 1.0,
            c_ex: 1.0,
            epsilon: 1e-10,
            strategy: PiStrategy::Midpoint,
            max_sweeps: 500,
            first_step: FirstStep::AsPrinted,
            store_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k", self.k),
            ("t_final", self.t_final),
            ("alpha", self.alpha),
            ("c_ex", self.c_ex),
            ("epsilon", self.epsilon),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_sweeps < 1 || self.store_every < 1 {
            return Err(Error::invalid("max_sweeps and store_every must be at least 1"));
        }
        self.step_count()?;
        Ok(())
    }

    pub fn step_count(&self) -> Result<usize> {
        let ratio = self.t_final / self.k;
        let m = ratio.round();
        if m < 1.0 || (ratio - m).abs() > 1e-8 * m.max(1.0) {
            return Err(Error::invalid(format!(
                "t_final/k = {ratio} does not round to an integer step count"
            )));
        }
        Ok(m as usize)
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// 1-based index of the completed step.
    pub step: usize,
    /// Time after the step.
    pub t: f64,
    pub energy: EnergyBreakdown,
    pub energy_residual: f64,
    /// Dissipation term of the energy identity, `alpha |d_t m|_h^2`.
    pub dissipation: f64,
    /// Power term of the energy identity, the lumped pairing of `d_t m`
    /// with the projected lower-order plus applied fields.
    pub pi_power: f64,
    /// Largest deviation of a nodal norm from its initial value.
    pub norm_dev_max: f64,
    pub avg_m: Vector3<f64>,
    /// Fixed-point sweeps performed.
    pub sweeps: usize,
    /// Final field residual in the lumped norm.
    pub residual: f64,
    /// Stray-field solves performed during this step.
    pub stray_solves: usize,
    pub wtime_total: f64,
    pub wtime_stray: f64,
    pub wtime_field: f64,
    pub wtime_nodal: f64,
}

/// Reconstruction of the discrete trajectory in continuous time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reconstruction {
    /// Piecewise constant from the left endpoint.
    Left,
    /// Piecewise constant from the right endpoint.
    Right,
    /// Midpoint average of the bracketing states.
    Mean,
    /// One interval behind the left endpoint.
    Lagged,
    /// Piecewise linear interpolant.
    Linear,
}

/// Time-indexed magnetization states plus the full diagnostics series.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub k: f64,
    pub store_every: usize,
    /// Stored output times, uniformly spaced by `k * store_every`.
    pub times: Vec<f64>,
    pub states: Vec<NodalVectorField>,
    pub records: Vec<StepRecord>,
    /// Nodal norms of the initial state.
    pub initial_norms: Vec<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &NodalVectorField {
        self.states.last().expect("trajectory stores at least the initial state")
    }

    pub fn mean_sweeps(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.sweeps as f64).sum::<f64>() / self.records.len() as f64
    }

    pub fn mean_wtime(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.wtime_total).sum::<f64>() / self.records.len() as f64
    }

    pub fn max_norm_deviation(&self) -> f64 {
        self.records.iter().map(|r| r.norm_dev_max).fold(0.0, f64::max)
    }

    /// Evaluate one of the postprocessed reconstructions at time `t` within
    /// `[t_i, t_{i+1})` on the stored grid.
    pub fn reconstruct(&self, kind: Reconstruction, t: f64) -> Result<NodalVectorField> {
        let dt = self.k * self.store_every as f64;
        let t_end = (self.states.len() - 1) as f64 * dt;
        if !(0.0..t_end).contains(&t) {
            return Err(Error::invalid(format!(
                "reconstruction time {t} outside [0, {t_end})"
            )));
        }
        let i = (t / dt).floor() as usize;
        let i = i.min(self.states.len() - 2);
        match kind {
            Reconstruction::Left => Ok(self.states[i].clone()),
            Reconstruction::Right => Ok(self.states[i + 1].clone()),
            Reconstruction::Mean => Ok(self.states[i].add(&self.states[i + 1]).scale(0.5)),
            Reconstruction::Lagged => {
                if i == 0 {
                    return Err(Error::invalid(
                        "lagged reconstruction needs t at least one interval in",
                    ));
                }
                Ok(self.states[i - 1].clone())
            }
            Reconstruction::Linear => {
                let s = (t - i as f64 * dt) / dt;
                Ok(self.states[i].scale(1.0 - s).axpy(s, &self.states[i + 1]))
            }
        }
    }
}

/// The effective field `c_ex Lap_h(m_mid) + pi_term + P_h(f_half)` where
/// `pi_term` is already projected and `f_half` is a nodal sample.
pub fn effective_field(
    space: &FemSpace,
    c_ex: f64,
    m_mid: &NodalVectorField,
    pi_term: &NodalVectorField,
    f_half: &NodalVectorField,
) -> NodalVectorField {
    let f_term = project_ph_nodal(&space.mass, &space.weights, f_half);
    field_from_parts(space, c_ex, m_mid, pi_term, &f_term)
}

fn field_from_parts(
    space: &FemSpace,
    c_ex: f64,
    m_mid: &NodalVectorField,
    pi_term: &NodalVectorField,
    f_term: &NodalVectorField,
) -> NodalVectorField {
    discrete_laplacian(&space.stiffness, &space.weights, m_mid)
        .scale(c_ex)
        .add(pi_term)
        .add(f_term)
}

/// Driver state for the time loop: the two most recent states, the seeded
/// effective field and the cached lower-order evaluations at those states.
pub struct Stepper {
    space: Arc<FemSpace>,
    set: ContributionSet,
    cfg: IntegratorConfig,
    step_index: usize,
    m_prev: NodalVectorField,
    m_curr: NodalVectorField,
    h_curr: NodalVectorField,
    pi_prev: PiEval,
    pi_curr: PiEval,
    initial_norms: Vec<f64>,
}

impl Stepper {
    /// Initialize from the initial state: `m_prev := m0` and the field seed
    /// assembled from the lower-order evaluation at `m0` and the applied
    /// field sampled at `k/2`.
    pub fn new(
        space: Arc<FemSpace>,
        set: &ContributionSet,
        cfg: IntegratorConfig,
        m0: NodalVectorField,
    ) -> Result<Self> {
        cfg.validate()?;
        set.validate()?;
        if m0.len() != space.node_count() {
            return Err(Error::invalid("initial state does not match the mesh"));
        }
        if !m0.all_finite() {
            return Err(Error::invalid("initial state contains non-finite values"));
        }
        let zero_nodes = m0.values().iter().filter(|v| v.norm() == 0.0).count();
        if zero_nodes > 0 {
            log::warn!(
                "{zero_nodes} node(s) have zero initial magnetization; they will never move"
            );
        }

        let initial_norms: Vec<f64> = m0.values().iter().map(|v| v.norm()).collect();
        let pi0 = pi_h(set, &space, &m0)?;
        let f_half = sample_applied_field(set, &space, 0.0, cfg.k)?;
        let f_term = project_ph_nodal(&space.mass, &space.weights, &f_half);
        let h0 = field_from_parts(&space, cfg.c_ex, &m0, &pi0.projected, &f_term);

        Ok(Stepper {
            space,
            set: set.clone(),
            cfg,
            step_index: 0,
            m_prev: m0.clone(),
            m_curr: m0,
            h_curr: h0,
            pi_prev: pi0.clone(),
            pi_curr: pi0,
            initial_norms,
        })
    }

    /// Resume from an explicit state pair and seeded field; the cached
    /// lower-order evaluations are recomputed.
    pub fn with_state(
        space: Arc<FemSpace>,
        set: &ContributionSet,
        cfg: IntegratorConfig,
        m_prev: NodalVectorField,
        m_curr: NodalVectorField,
        h_curr: NodalVectorField,
    ) -> Result<Self> {
        cfg.validate()?;
        set.validate()?;
        let initial_norms: Vec<f64> = m_curr.values().iter().map(|v| v.norm()).collect();
        let pi_prev = pi_h(set, &space, &m_prev)?;
        let pi_curr = pi_h(set, &space, &m_curr)?;
        Ok(Stepper {
            space,
            set: set.clone(),
            cfg,
            step_index: 0,
            m_prev,
            m_curr,
            h_curr,
            pi_prev,
            pi_curr,
            initial_norms,
        })
    }

    pub fn m_curr(&self) -> &NodalVectorField {
        &self.m_curr
    }

    pub fn h_curr(&self) -> &NodalVectorField {
        &self.h_curr
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    fn strategy_for_step(&self, i: usize) -> PiStrategy {
        if i == 0 && self.cfg.first_step == FirstStep::Midpoint {
            PiStrategy::Midpoint
        } else {
            self.cfg.strategy
        }
    }

    /// Advance one time step. On success the internal state has rotated and
    /// the record describes the completed step.
    pub fn step(&mut self) -> Result<StepRecord> {
        let t_total = Instant::now();
        let cfg = &self.cfg;
        let space = &self.space;
        let set = &self.set;
        let i = self.step_index;
        let t_i = i as f64 * cfg.k;
        let strategy = self.strategy_for_step(i);

        let mut wtime_stray = 0.0f64;
        let mut wtime_field = 0.0f64;
        let mut wtime_nodal = 0.0f64;
        let mut stray_solves = 0usize;

        let f_half = sample_applied_field(set, space, t_i, cfg.k)?;
        let f_term = project_ph_nodal(&space.mass, &space.weights, &f_half);

        // the extrapolated lower-order field is fixed per step except under
        // the midpoint rule
        let pi_fixed: Option<NodalVectorField> = match strategy {
            PiStrategy::AdamsBashforth => {
                Some(self.pi_curr.projected.scale(1.5).axpy(-0.5, &self.pi_prev.projected))
            }
            PiStrategy::ExplicitEuler => Some(self.pi_curr.projected.clone()),
            PiStrategy::Midpoint => None,
        };

        let n = space.node_count();
        let two_over_k = 2.0 / cfg.k;
        let damp = 2.0 * cfg.alpha / cfg.k;

        let mut h_old = self.h_curr.clone();
        let mut eta = NodalVectorField::zeros(n);
        let mut pi_eta_final: Option<PiEval> = None;
        let mut sweeps = 0usize;
        let mut residual;
        let mut trace = Vec::new();

        loop {
            if sweeps >= cfg.max_sweeps {
                return Err(Error::Step {
                    step: i,
                    source: Box::new(Error::MaxSweepsExceeded {
                        step: i,
                        max_sweeps: cfg.max_sweeps,
                        residual: *trace.last().unwrap_or(&f64::INFINITY),
                        trace,
                    }),
                });
            }

            let t_nodal = Instant::now();
            for l in 0..n {
                let a = h_old[l] + damp * self.m_curr[l];
                let b = two_over_k * self.m_curr[l];
                eta[l] = solve_node_cross(two_over_k, a, b);
            }
            wtime_nodal += t_nodal.elapsed().as_secs_f64();

            let pi_proj = match strategy {
                PiStrategy::Midpoint => {
                    let stray_elem = match &set.stray {
                        Some(solver) => {
                            let t_stray = Instant::now();
                            let field = solver.stray_field(&eta).map_err(|e| Error::Step {
                                step: i,
                                source: Box::new(e),
                            })?;
                            wtime_stray += t_stray.elapsed().as_secs_f64();
                            stray_solves += 1;
                            Some(field)
                        }
                        None => None,
                    };
                    let t_field = Instant::now();
                    let pe = eval_pi_with_stray(set, space, &eta, stray_elem);
                    wtime_field += t_field.elapsed().as_secs_f64();
                    pi_eta_final = Some(pe);
                    &pi_eta_final.as_ref().unwrap().projected
                }
                _ => pi_fixed.as_ref().unwrap(),
            };

            let t_field = Instant::now();
            let h_new = field_from_parts(space, cfg.c_ex, &eta, pi_proj, &f_term);
            residual = norm_h(&h_new.sub(&h_old), &space.weights);
            wtime_field += t_field.elapsed().as_secs_f64();

            sweeps += 1;
            trace.push(residual);
            h_old = h_new;
            if residual <= cfg.epsilon {
                break;
            }
        }

        let m_next = eta.scale(2.0).axpy(-1.0, &self.m_curr);

        // the lower-order field the completed step actually used
        let pi_used = match strategy {
            PiStrategy::Midpoint => pi_eta_final
                .as_ref()
                .expect("midpoint sweep evaluated pi")
                .projected
                .clone(),
            _ => pi_fixed.expect("fixed pi for explicit strategies"),
        };

        // seed field for the next step; the stray part of pi(m_next) under
        // the midpoint rule follows from linearity of the stray operator:
        // stray(2 eta - m_curr) = 2 stray(eta) - stray(m_curr).
        let stray_next = match &set.stray {
            Some(solver) => match strategy {
                PiStrategy::Midpoint => {
                    let eta_stray = pi_eta_final
                        .as_ref()
                        .and_then(|p| p.stray_elem.as_ref())
                        .expect("midpoint sweep solved the stray field");
                    let curr_stray = self
                        .pi_curr
                        .stray_elem
                        .as_ref()
                        .expect("stray cache present");
                    Some(eta_stray.scale(2.0).axpy(-1.0, curr_stray))
                }
                _ => {
                    let t_stray = Instant::now();
                    let field = solver.stray_field(&m_next).map_err(|e| Error::Step {
                        step: i,
                        source: Box::new(e),
                    })?;
                    wtime_stray += t_stray.elapsed().as_secs_f64();
                    stray_solves += 1;
                    Some(field)
                }
            },
            None => None,
        };

        let t_field = Instant::now();
        let pi_next = eval_pi_with_stray(set, space, &m_next, stray_next);
        let pi_iv = match cfg.strategy {
            PiStrategy::AdamsBashforth => {
                pi_next.projected.scale(1.5).axpy(-0.5, &self.pi_curr.projected)
            }
            _ => pi_next.projected.clone(),
        };
        let h_next = field_from_parts(space, cfg.c_ex, &m_next, &pi_iv, &f_term);
        wtime_field += t_field.elapsed().as_secs_f64();

        // diagnostics
        let t_next = (i + 1) as f64 * cfg.k;
        let f_now = sample_applied_field(set, space, t_next, 0.0)?;
        let energy = energy(
            space,
            set,
            cfg.c_ex,
            &m_next,
            &f_now,
            pi_next.stray_elem.as_ref(),
        )?;
        let (rate, dissipation, pi_power) = energy_identity_parts(
            space,
            cfg.c_ex,
            cfg.alpha,
            cfg.k,
            &self.m_curr,
            &m_next,
            &pi_used,
            &f_term,
        );
        let energy_residual = rate + dissipation - pi_power;
        let mut norm_dev_max = 0.0f64;
        for (v, &n0) in m_next.values().iter().zip(&self.initial_norms) {
            norm_dev_max = norm_dev_max.max((v.norm() - n0).abs());
        }
        let avg_m = average_magnetization(&m_next, &space.weights);

        // rotate
        self.m_prev = std::mem::replace(&mut self.m_curr, m_next);
        self.h_curr = h_next;
        self.pi_prev = std::mem::replace(&mut self.pi_curr, pi_next);
        self.step_index += 1;

        Ok(StepRecord {
            step: self.step_index,
            t: t_next,
            energy,
            energy_residual,
            dissipation,
            pi_power,
            norm_dev_max,
            avg_m,
            sweeps,
            residual: *trace.last().unwrap(),
            stray_solves,
            wtime_total: t_total.elapsed().as_secs_f64(),
            wtime_stray,
            wtime_field,
            wtime_nodal,
        })
    }
}

/// One fixed-point time step from explicit state, returning the advanced
/// state, the reseeded field and the step report. The cached lower-order
/// evaluations are rebuilt from scratch; inside a full run prefer
/// [`integrate`], which reuses them across steps.
pub fn fixed_point_step(
    space: &Arc<FemSpace>,
    set: &ContributionSet,
    cfg: IntegratorConfig,
    m_prev: NodalVectorField,
    m_curr: NodalVectorField,
    h_curr: NodalVectorField,
) -> Result<(NodalVectorField, NodalVectorField, StepRecord)> {
    let mut stepper = Stepper::with_state(space.clone(), set, cfg, m_prev, m_curr, h_curr)?;
    let record = stepper.step()?;
    Ok((stepper.m_curr.clone(), stepper.h_curr.clone(), record))
}

/// Run the full time loop from `m0`.
pub fn integrate(
    space: &Arc<FemSpace>,
    set: &ContributionSet,
    cfg: IntegratorConfig,
    m0: NodalVectorField,
) -> Result<Trajectory> {
    let steps = cfg.step_count()?;
    if steps % cfg.store_every != 0 {
        return Err(Error::invalid(format!(
            "store_every = {} must divide the step count {steps}",
            cfg.store_every
        )));
    }
    let mut stepper = Stepper::new(space.clone(), set, cfg, m0)?;
    let initial_norms = stepper.initial_norms.clone();
    let mut times = vec![0.0];
    let mut states = vec![stepper.m_curr.clone()];
    let mut records = Vec::with_capacity(steps);
    for i in 0..steps {
        let record = stepper.step()?;
        if (i + 1) % cfg.store_every == 0 {
            times.push(record.t);
            states.push(stepper.m_curr.clone());
        }
        records.push(record);
    }
    Ok(Trajectory {
        k: cfg.k,
        store_every: cfg.store_every,
        times,
        states,
        records,
        initial_norms,
    })
}
