//! Energies, invariant monitors, averaged observables and convergence-order
//! estimation.

use nalgebra::Vector3;

use crate::contributions::ContributionSet;
use crate::demag::energy_product_with_field;
use crate::error::{Error, Result};
use crate::fem::{
    grad_norm_sq, inner_h, norm_h, norm_l2, ElementVectorField, FemSpace, LumpedWeights,
    NodalVectorField,
};

/// Per-step diagnostics of a run, in step order.
pub type DiagnosticsSeries = Vec<crate::integrator::StepRecord>;

/// Named parts of the bulk energy. The parts sum to the total exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyBreakdown {
    pub exchange: f64,
    pub zeeman: f64,
    /// Energy of the linear self-adjoint lower-order contributions
    /// (stray field and anisotropy); the spin-torque term carries no energy.
    pub pi: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.exchange + self.zeeman + self.pi
    }
}

/// Bulk energy
///   E = c_ex/2 |grad m|^2 - 1/2 <pi_lin(m), m> - <f, m>
/// with exact P1 quadrature in every term. `stray_elem` may supply a
/// precomputed elementwise stray field for this `m`; otherwise the solver
/// in `set` is invoked.
pub fn energy(
    space: &FemSpace,
    set: &ContributionSet,
    c_ex: f64,
    m: &NodalVectorField,
    f_now: &NodalVectorField,
    stray_elem: Option<&ElementVectorField>,
) -> Result<EnergyBreakdown> {
    let exchange = 0.5 * c_ex * grad_norm_sq(&space.stiffness, m);

    let zeeman = -crate::fem::inner_l2(&space.mass, f_now, m);

    let mut pi = 0.0;
    if set.is_linear_self_adjoint() {
        if let Some(solver) = &set.stray {
            let owned;
            let field = match stray_elem {
                Some(f) => f,
                None => {
                    owned = solver.stray_field(m)?;
                    &owned
                }
            };
            pi -= 0.5 * energy_product_with_field(&space.mesh, field, m);
        }
        if let Some(a) = &set.anisotropy {
            // -1/2 Int (a.m)^2 with the scalar consistent mass
            let s: Vec<f64> = m.values().iter().map(|v| a.axis.dot(v)).collect();
            let mut ms = vec![0.0; s.len()];
            space.mass.matvec(&s, &mut ms);
            let quad: f64 = s.iter().zip(&ms).map(|(x, y)| x * y).sum();
            pi -= 0.5 * quad;
        }
    }

    Ok(EnergyBreakdown {
        exchange,
        zeeman,
        pi,
    })
}

/// Residual of the per-step discrete energy identity
///   c_ex/2 d_t |grad m|^2 + alpha |d_t m|_h^2 = <d_t m, Pi + f>.
/// `pi_used` and `f_term` are the projected nodal fields that entered the
/// effective field of the step, so the lumped pairing on the right equals
/// the exact L2 pairing with the underlying contributions.
#[allow(clippy::too_many_arguments)]
pub fn energy_identity_residual(
    space: &FemSpace,
    c_ex: f64,
    alpha: f64,
    k: f64,
    m_prev: &NodalVectorField,
    m_next: &NodalVectorField,
    pi_used: &NodalVectorField,
    f_term: &NodalVectorField,
) -> f64 {
    let (rate, dissipation, power) =
        energy_identity_parts(space, c_ex, alpha, k, m_prev, m_next, pi_used, f_term);
    rate + dissipation - power
}

/// The three terms of the identity: exchange-energy rate
/// `c_ex/2 d_t |grad m|^2`, dissipation `alpha |d_t m|_h^2`, and the power
/// of the lower-order and applied fields.
#[allow(clippy::too_many_arguments)]
pub fn energy_identity_parts(
    space: &FemSpace,
    c_ex: f64,
    alpha: f64,
    k: f64,
    m_prev: &NodalVectorField,
    m_next: &NodalVectorField,
    pi_used: &NodalVectorField,
    f_term: &NodalVectorField,
) -> (f64, f64, f64) {
    let dt_m = m_next.sub(m_prev).scale(1.0 / k);
    let grad_rate =
        (grad_norm_sq(&space.stiffness, m_next) - grad_norm_sq(&space.stiffness, m_prev)) / k;
    let dissipation = alpha * norm_h(&dt_m, &space.weights).powi(2);
    let power = inner_h(&dt_m, &pi_used.add(f_term), &space.weights);
    (0.5 * c_ex * grad_rate, dissipation, power)
}

/// Weighted mean magnetization, sum of beta_l m(z_l) over the volume.
pub fn average_magnetization(m: &NodalVectorField, w: &LumpedWeights) -> Vector3<f64> {
    let mut acc = Vector3::zeros();
    for i in 0..m.len() {
        acc += w[i] * m[i];
    }
    acc / w.domain_volume()
}

/// Largest L2 distance between two state sequences sampled on a shared
/// output grid.
pub fn reference_error(
    space: &FemSpace,
    reference: &[NodalVectorField],
    states: &[NodalVectorField],
) -> f64 {
    assert_eq!(reference.len(), states.len(), "output grids must match");
    let mut err: f64 = 0.0;
    for (r, s) in reference.iter().zip(states) {
        err = err.max(norm_l2(&space.mass, &r.sub(s)));
    }
    err
}

/// Least-squares slope of log(error) against log(k).
pub fn fit_order(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::invalid("order fit needs at least two (k, error) samples"));
    }
    if samples.iter().any(|&(k, e)| k <= 0.0 || e <= 0.0 || !k.is_finite() || !e.is_finite()) {
        return Err(Error::invalid("order fit needs positive step sizes and errors"));
    }
    let n = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(k, e) in samples {
        let x = k.ln();
        let y = e.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::invalid("order fit is degenerate (identical step sizes)"));
    }
    Ok((n * sxy - sx * sy) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contributions::{AppliedField, UniaxialAnisotropy};
    use crate::demag::StrayFieldSolver;
    use crate::fem::interpolate_nodal;
    use crate::linsolve::SolverConfig;
    use crate::mesh::build_box_mesh;
    use std::sync::Arc;

    fn cube_space(n: usize) -> Arc<FemSpace> {
        let mesh = Arc::new(
            build_box_mesh(n, n, n, Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0)).unwrap(),
        );
        Arc::new(FemSpace::new(mesh))
    }

    #[test]
    fn energy_of_constant_state_without_contributions() {
        let space = cube_space(2);
        let set = ContributionSet::default();
        let m = NodalVectorField::constant(space.node_count(), Vector3::new(1.0, 0.0, 0.0));
        let f = NodalVectorField::zeros(space.node_count());
        let e = energy(&space, &set, 7.5, &m, &f, None).unwrap();
        assert!(e.total().abs() < 1e-14);
    }

    #[test]
    fn energy_anisotropy_aligned_state() {
        let space = cube_space(2);
        let set = ContributionSet {
            anisotropy: Some(UniaxialAnisotropy {
                axis: Vector3::new(1.0, 0.0, 0.0),
            }),
            ..Default::default()
        };
        let m = NodalVectorField::constant(space.node_count(), Vector3::new(1.0, 0.0, 0.0));
        let f = NodalVectorField::zeros(space.node_count());
        let e = energy(&space, &set, 1.0, &m, &f, None).unwrap();
        assert!((e.total() - (-0.5)).abs() < 1e-12);
        assert!((e.pi - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn energy_cube_benchmark_state() {
        // constant m = e_x, f = (-2, -1/2, 0), stray on the unit cube:
        // Zeeman 2 exactly, stray about +1/6, exchange 0.
        let space = cube_space(4);
        let solver = StrayFieldSolver::new(
            space.clone(),
            7,
            SolverConfig {
                rel_tol: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        let set = ContributionSet {
            stray: Some(solver),
            applied: AppliedField::Constant(Vector3::new(-2.0, -0.5, 0.0)),
            ..Default::default()
        };
        let m = NodalVectorField::constant(space.node_count(), Vector3::new(1.0, 0.0, 0.0));
        let f = NodalVectorField::constant(space.node_count(), Vector3::new(-2.0, -0.5, 0.0));
        let e = energy(&space, &set, 1.0, &m, &f, None).unwrap();
        assert!((e.zeeman - 2.0).abs() < 1e-12);
        assert!(e.exchange.abs() < 1e-12);
        assert!((e.pi - 1.0 / 6.0).abs() < 0.05 / 6.0);
        assert!((e.total() - (2.0 + 1.0 / 6.0)).abs() <= 0.05 * (2.0 + 1.0 / 6.0));
    }

    #[test]
    fn energy_parts_sum_to_total() {
        let space = cube_space(2);
        let set = ContributionSet {
            anisotropy: Some(UniaxialAnisotropy {
                axis: Vector3::new(0.0, 0.0, 1.0),
            }),
            ..Default::default()
        };
        let m = interpolate_nodal(&space.mesh, |p| {
            Vector3::new(p.x, (p.y * 2.0).sin(), 1.0 - p.z)
        })
        .unwrap();
        let f = interpolate_nodal(&space.mesh, |p| Vector3::new(0.1, -p.x, 0.0)).unwrap();
        let e = energy(&space, &set, 2.0, &m, &f, None).unwrap();
        assert_eq!(e.total(), e.exchange + e.zeeman + e.pi);
        assert!(e.exchange > 0.0);
    }

    #[test]
    fn stationary_step_has_zero_identity_residual() {
        let space = cube_space(2);
        let m = interpolate_nodal(&space.mesh, |p| Vector3::new(p.x, p.y, 1.0)).unwrap();
        let pi = NodalVectorField::constant(space.node_count(), Vector3::new(0.3, 0.0, 0.0));
        let f = NodalVectorField::constant(space.node_count(), Vector3::new(0.0, 0.1, 0.0));
        let r = energy_identity_residual(&space, 1.0, 0.5, 1e-3, &m, &m, &pi, &f);
        assert!(r.abs() < 1e-14);
    }

    #[test]
    fn average_magnetization_cases() {
        let space = cube_space(2);
        let c = Vector3::new(0.1, -0.4, 0.9);
        let m = NodalVectorField::constant(space.node_count(), c);
        let avg = average_magnetization(&m, &space.weights);
        assert!((avg - c).norm() < 1e-14);

        // odd field integrates to zero by symmetry of the weights
        let m = interpolate_nodal(&space.mesh, |p| {
            Vector3::new(if p.x < 0.5 { 1.0 } else if p.x > 0.5 { -1.0 } else { 0.0 }, 0.0, 0.0)
        })
        .unwrap();
        let avg = average_magnetization(&m, &space.weights);
        assert!(avg.norm() < 1e-14);

        // vortex initial state: core points up
        let m = interpolate_nodal(&space.mesh, |p| {
            let q = Vector3::new(p.x - 0.5, p.y - 0.5, p.z);
            Vector3::new(-q.y, q.x, 1.0) / (q.x * q.x + q.y * q.y + 1.0).sqrt()
        })
        .unwrap();
        let avg = average_magnetization(&m, &space.weights);
        assert!(avg.z > 0.0);
    }

    #[test]
    fn reference_error_and_fit_order() {
        let space = cube_space(1);
        let a = NodalVectorField::constant(space.node_count(), Vector3::new(1.0, 0.0, 0.0));
        let single = std::slice::from_ref(&a);
        assert_eq!(reference_error(&space, single, single), 0.0);

        let quad: Vec<(f64, f64)> = [1e-3, 2e-3, 4e-3, 8e-3]
            .iter()
            .map(|&k| (k, 3.7 * k * k))
            .collect();
        assert!((fit_order(&quad).unwrap() - 2.0).abs() < 1e-10);
        let lin: Vec<(f64, f64)> = [1e-3, 2e-3, 4e-3].iter().map(|&k| (k, 0.2 * k)).collect();
        assert!((fit_order(&lin).unwrap() - 1.0).abs() < 1e-10);

        assert!(fit_order(&[(1e-3, 1.0)]).is_err());
        assert!(fit_order(&[(1e-3, 0.0), (2e-3, 1.0)]).is_err());
    }
}
