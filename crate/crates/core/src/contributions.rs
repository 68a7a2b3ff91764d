//! Lower-order effective-field contributions (stray field, uniaxial
//! anisotropy, spin-transfer torque, applied field) and the three
//! extrapolation strategies that combine them across time levels.

use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;

use crate::demag::StrayFieldSolver;
use crate::error::{Error, Result};
use crate::fem::{
    directional_derivative, element_average, interpolate_nodal, project_ph_element,
    project_ph_nodal, ElementVectorField, FemSpace, NodalVectorField,
};

/// How the lower-order field enters the per-step nonlinear system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiStrategy {
    /// Evaluate at the midpoint iterate; recomputed in every sweep.
    Midpoint,
    /// Two-step extrapolation 3/2 pi(m_curr) - 1/2 pi(m_prev); fixed per step.
    AdamsBashforth,
    /// pi(m_curr); fixed per step, first-order accurate.
    ExplicitEuler,
}

impl PiStrategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mp" => Ok(PiStrategy::Midpoint),
            "ab" => Ok(PiStrategy::AdamsBashforth),
            "ee" => Ok(PiStrategy::ExplicitEuler),
            other => Err(Error::config(format!(
                "unknown strategy `{other}` (expected mp, ab or ee)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PiStrategy::Midpoint => "mp",
            PiStrategy::AdamsBashforth => "ab",
            PiStrategy::ExplicitEuler => "ee",
        }
    }
}

impl fmt::Display for PiStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UniaxialAnisotropy {
    /// Easy axis, unit length.
    pub axis: Vector3<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ZhangLi {
    /// Spin velocity (nondimensional).
    pub v: Vector3<f64>,
    /// Ratio of nonadiabaticity, positive.
    pub xi: f64,
}

/// Applied external field as a function of time and position.
#[derive(Clone, Default)]
pub enum AppliedField {
    #[default]
    Zero,
    Constant(Vector3<f64>),
    #[allow(clippy::type_complexity)]
    Function(Arc<dyn Fn(f64, Vector3<f64>) -> Vector3<f64> + Send + Sync>),
}

impl fmt::Debug for AppliedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppliedField::Zero => write!(f, "Zero"),
            AppliedField::Constant(v) => write!(f, "Constant({v:?})"),
            AppliedField::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// The enabled lower-order contributions plus the applied field.
#[derive(Debug, Clone, Default)]
pub struct ContributionSet {
    pub stray: Option<StrayFieldSolver>,
    pub anisotropy: Option<UniaxialAnisotropy>,
    pub zhang_li: Option<ZhangLi>,
    pub applied: AppliedField,
}

impl ContributionSet {
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = &self.anisotropy {
            if (a.axis.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "anisotropy axis must be unit length, |a| = {}",
                    a.axis.norm()
                )));
            }
        }
        if let Some(zl) = &self.zhang_li {
            if zl.xi <= 0.0 || !zl.xi.is_finite() {
                return Err(Error::invalid("Zhang-Li xi must be positive"));
            }
        }
        Ok(())
    }

    pub fn has_stray(&self) -> bool {
        self.stray.is_some()
    }

    /// Whether every enabled contribution is linear and self-adjoint; this
    /// gates the energy computation (the spin-torque term carries no energy).
    pub fn is_linear_self_adjoint(&self) -> bool {
        self.zhang_li.is_none()
    }

    pub fn has_lower_order(&self) -> bool {
        self.stray.is_some() || self.anisotropy.is_some() || self.zhang_li.is_some()
    }

    /// Nodal anisotropy field (a.m)a, exact in the P1 space.
    pub fn anisotropy_nodal(&self, m: &NodalVectorField) -> Option<NodalVectorField> {
        self.anisotropy.as_ref().map(|a| {
            NodalVectorField::from_values(
                m.values().iter().map(|mv| a.axis.dot(mv) * a.axis).collect(),
            )
        })
    }

    /// Elementwise Zhang-Li torque, using the element average of m against
    /// the constant directional derivative.
    pub fn zhang_li_element(
        &self,
        space: &FemSpace,
        m: &NodalVectorField,
    ) -> Option<ElementVectorField> {
        self.zhang_li.as_ref().map(|zl| {
            let dir = ElementVectorField::constant(space.mesh.tet_count(), zl.v);
            let deriv = directional_derivative(space, m, &dir);
            let m_avg = element_average(&space.mesh, m);
            let values = (0..deriv.len())
                .map(|e| m_avg[e].cross(&deriv[e]) + zl.xi * deriv[e])
                .collect();
            ElementVectorField::from_values(values)
        })
    }
}

/// One evaluated lower-order field: the projected nodal representation that
/// enters the effective field, plus the raw elementwise stray field kept
/// for the energy pairing.
#[derive(Debug, Clone)]
pub struct PiEval {
    pub projected: NodalVectorField,
    pub stray_elem: Option<ElementVectorField>,
}

impl PiEval {
    pub fn zero(n: usize) -> Self {
        PiEval {
            projected: NodalVectorField::zeros(n),
            stray_elem: None,
        }
    }
}

/// Assemble the projection of all enabled contributions with the stray
/// field supplied by the caller (or absent). Anisotropy is evaluated
/// nodally and projected through the consistent mass; elementwise parts use
/// the closed-form hat integrals.
pub fn eval_pi_with_stray(
    set: &ContributionSet,
    space: &FemSpace,
    m: &NodalVectorField,
    stray_elem: Option<ElementVectorField>,
) -> PiEval {
    let n = space.node_count();
    let mut elem_sum: Option<ElementVectorField> = stray_elem.clone();
    if let Some(zl) = set.zhang_li_element(space, m) {
        elem_sum = Some(match elem_sum {
            Some(s) => s.axpy(1.0, &zl),
            None => zl,
        });
    }
    let mut projected = match &elem_sum {
        Some(g) => project_ph_element(&space.mesh, &space.weights, g),
        None => NodalVectorField::zeros(n),
    };
    if let Some(aniso) = set.anisotropy_nodal(m) {
        projected = projected.add(&project_ph_nodal(&space.mass, &space.weights, &aniso));
    }
    PiEval {
        projected,
        stray_elem,
    }
}

/// Evaluate the full lower-order field at one magnetization state,
/// including the stray-field solve when enabled.
pub fn pi_h(set: &ContributionSet, space: &FemSpace, m: &NodalVectorField) -> Result<PiEval> {
    let stray_elem = match &set.stray {
        Some(solver) => Some(solver.stray_field(m)?),
        None => None,
    };
    Ok(eval_pi_with_stray(set, space, m, stray_elem))
}

/// The extrapolation operator over three time levels. For Adams-Bashforth
/// and explicit Euler the result does not depend on `m_next`, which is what
/// makes per-step caching of the expensive contributions possible.
pub fn combine_pi(
    strategy: PiStrategy,
    set: &ContributionSet,
    space: &FemSpace,
    m_next: &NodalVectorField,
    m_curr: &NodalVectorField,
    m_prev: &NodalVectorField,
) -> Result<NodalVectorField> {
    match strategy {
        PiStrategy::Midpoint => {
            let mid = m_next.add(m_curr).scale(0.5);
            Ok(pi_h(set, space, &mid)?.projected)
        }
        PiStrategy::AdamsBashforth => {
            let curr = pi_h(set, space, m_curr)?.projected;
            let prev = pi_h(set, space, m_prev)?.projected;
            Ok(curr.scale(1.5).axpy(-0.5, &prev))
        }
        PiStrategy::ExplicitEuler => Ok(pi_h(set, space, m_curr)?.projected),
    }
}

/// Nodal sample of the applied field at the half step t_i + k/2.
pub fn sample_applied_field(
    set: &ContributionSet,
    space: &FemSpace,
    t_i: f64,
    k: f64,
) -> Result<NodalVectorField> {
    let t = t_i + 0.5 * k;
    match &set.applied {
        AppliedField::Zero => Ok(NodalVectorField::zeros(space.node_count())),
        AppliedField::Constant(c) => Ok(NodalVectorField::constant(space.node_count(), *c)),
        AppliedField::Function(f) => interpolate_nodal(&space.mesh, |p| f(t, p)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::inner_h;
    use crate::linsolve::SolverConfig;
    use crate::mesh::build_box_mesh;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn cube_space(n: usize) -> Arc<FemSpace> {
        let mesh = Arc::new(
            build_box_mesh(n, n, n, Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0)).unwrap(),
        );
        Arc::new(FemSpace::new(mesh))
    }

    fn aniso_set(axis: Vector3<f64>) -> ContributionSet {
        ContributionSet {
            anisotropy: Some(UniaxialAnisotropy { axis }),
            ..Default::default()
        }
    }

    #[test]
    fn anisotropy_of_constant_state() {
        let space = cube_space(2);
        let set = aniso_set(Vector3::new(1.0, 0.0, 0.0));
        set.validate().unwrap();
        let m = NodalVectorField::constant(space.node_count(), Vector3::new(0.5, 0.5, 0.0));
        let pi = pi_h(&set, &space, &m).unwrap();
        for v in pi.projected.values() {
            assert!((v - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn zhang_li_of_constant_state_vanishes() {
        let space = cube_space(2);
        let set = ContributionSet {
            zhang_li: Some(ZhangLi {
                v: Vector3::new(1.0, 2.0, -0.5),
                xi: 0.05,
            }),
            ..Default::default()
        };
        let m = NodalVectorField::constant(space.node_count(), Vector3::new(0.0, 1.0, 0.0));
        let pi = pi_h(&set, &space, &m).unwrap();
        for v in pi.projected.values() {
            assert!(v.norm() < 1e-14);
        }
    }

    #[test]
    fn zhang_li_cross_part_orthogonal_to_element_average() {
        let space = cube_space(2);
        let zl = ZhangLi {
            v: Vector3::new(0.7, -0.2, 0.4),
            xi: 0.05,
        };
        let set = ContributionSet {
            zhang_li: Some(zl),
            ..Default::default()
        };
        let mut rng = StdRng::seed_from_u64(8);
        let m = NodalVectorField::from_values(
            (0..space.node_count())
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect(),
        );
        let torque = set.zhang_li_element(&space, &m).unwrap();
        let dir = ElementVectorField::constant(space.mesh.tet_count(), zl.v);
        let deriv = directional_derivative(&space, &m, &dir);
        let avg = element_average(&space.mesh, &m);
        for e in 0..torque.len() {
            let cross_part = torque[e] - zl.xi * deriv[e];
            assert!(cross_part.dot(&avg[e]).abs() < 1e-12);
        }
    }

    #[test]
    fn stray_contribution_average_matches_demag_factor() {
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
            ..Default::default()
        };
        let m = NodalVectorField::constant(space.node_count(), Vector3::new(1.0, 0.0, 0.0));
        let pi = pi_h(&set, &space, &m).unwrap();
        // beta-weighted average of the projected field equals the volume
        // average of the elementwise field
        let mut avg = Vector3::zeros();
        for (i, v) in pi.projected.values().iter().enumerate() {
            avg += space.weights[i] * v;
        }
        let expect = Vector3::new(-1.0 / 3.0, 0.0, 0.0);
        assert!((avg - expect).norm() < 0.05 / 3.0, "avg {avg:?}");
    }

    #[test]
    fn adams_bashforth_weights() {
        let space = cube_space(1);
        let set = aniso_set(Vector3::new(1.0, 0.0, 0.0));
        let n = space.node_count();
        let m_next = NodalVectorField::constant(n, Vector3::new(0.0, 0.0, 1.0));
        let m_curr = NodalVectorField::constant(n, Vector3::new(1.0, 0.0, 0.0));
        let m_prev = NodalVectorField::constant(n, Vector3::new(0.0, 1.0, 0.0));
        let out = combine_pi(
            PiStrategy::AdamsBashforth,
            &set,
            &space,
            &m_next,
            &m_curr,
            &m_prev,
        )
        .unwrap();
        for v in out.values() {
            assert!((v - Vector3::new(1.5, 0.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn explicit_euler_ignores_next_and_prev() {
        let space = cube_space(1);
        let set = aniso_set(Vector3::new(0.0, 1.0, 0.0));
        let n = space.node_count();
        let m_curr = NodalVectorField::constant(n, Vector3::new(0.3, 0.7, 0.1));
        let a = combine_pi(
            PiStrategy::ExplicitEuler,
            &set,
            &space,
            &NodalVectorField::constant(n, Vector3::new(9.0, 9.0, 9.0)),
            &m_curr,
            &NodalVectorField::constant(n, Vector3::new(-3.0, 0.0, 0.0)),
        )
        .unwrap();
        let b = combine_pi(
            PiStrategy::ExplicitEuler,
            &set,
            &space,
            &NodalVectorField::zeros(n),
            &m_curr,
            &NodalVectorField::zeros(n),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn midpoint_of_equal_states_is_plain_evaluation() {
        let space = cube_space(2);
        let set = aniso_set(Vector3::new(0.0, 0.0, 1.0));
        let mut rng = StdRng::seed_from_u64(3);
        let m = NodalVectorField::from_values(
            (0..space.node_count())
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect(),
        );
        let combined = combine_pi(PiStrategy::Midpoint, &set, &space, &m, &m, &m).unwrap();
        let plain = pi_h(&set, &space, &m).unwrap().projected;
        for i in 0..combined.len() {
            assert!((combined[i] - plain[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn anisotropy_self_adjoint_in_lumped_product() {
        let space = cube_space(2);
        let set = aniso_set(Vector3::new(0.6, 0.8, 0.0));
        let mut rng = StdRng::seed_from_u64(12);
        let rand_field = |rng: &mut StdRng| {
            NodalVectorField::from_values(
                (0..space.node_count())
                    .map(|_| {
                        Vector3::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        )
                    })
                    .collect(),
            )
        };
        let u = rand_field(&mut rng);
        let v = rand_field(&mut rng);
        let pu = set.anisotropy_nodal(&u).unwrap();
        let pv = set.anisotropy_nodal(&v).unwrap();
        let a = inner_h(&pu, &v, &space.weights);
        let b = inner_h(&u, &pv, &space.weights);
        assert!((a - b).abs() < 1e-13 * (1.0 + a.abs()));
    }

    #[test]
    fn applied_field_sampling() {
        let space = cube_space(1);
        let c = Vector3::new(-2.0, -0.5, 0.0);
        let set = ContributionSet {
            applied: AppliedField::Constant(c),
            ..Default::default()
        };
        let f = sample_applied_field(&set, &space, 0.0, 0.1).unwrap();
        assert!(f.values().iter().all(|v| (v - c).norm() == 0.0));

        // linear ramp sampled at the midpoint: t_i = 0, k = 2 gives f(1) = c
        let ramp = ContributionSet {
            applied: AppliedField::Function(Arc::new(move |t, _| t * c)),
            ..Default::default()
        };
        let f = sample_applied_field(&ramp, &space, 0.0, 2.0).unwrap();
        assert!(f.values().iter().all(|v| (v - c).norm() < 1e-15));

        let zero = ContributionSet::default();
        let f = sample_applied_field(&zero, &space, 1.0, 0.5).unwrap();
        assert!(f.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let bad_axis = aniso_set(Vector3::new(1.0, 1.0, 0.0));
        assert!(bad_axis.validate().is_err());
        let bad_xi = ContributionSet {
            zhang_li: Some(ZhangLi {
                v: Vector3::zeros(),
                xi: 0.0,
            }),
            ..Default::default()
        };
        assert!(bad_xi.validate().is_err());
    }
}
