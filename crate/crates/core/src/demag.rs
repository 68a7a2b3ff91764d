//! Stray field via the hybrid FEM-BEM splitting: an interior Neumann
//! problem, a double-layer boundary operator producing Dirichlet data, and
//! a harmonic extension. The output is the piecewise-constant field
//! `-grad(u1 + u2)` on the mesh elements.

use std::sync::{Arc, Mutex};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fem::{
    element_average, ElementVectorField, FemSpace, NodalVectorField, SparseOperator,
};
use crate::linsolve::{cg_solve_warm, cg_zero_mean_warm, dirichlet_solve_warm, SolverConfig};
use crate::mesh::{extract_boundary, SurfaceMesh};

/// Quadrature rules on the reference triangle (barycentric coordinates and
/// weights summing to one).
fn triangle_rule(points: usize) -> Result<&'static [([f64; 3], f64)]> {
    const P1: [([f64; 3], f64); 1] = [([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)];
    const P3: [([f64; 3], f64); 3] = [
        ([0.5, 0.5, 0.0], 1.0 / 3.0),
        ([0.0, 0.5, 0.5], 1.0 / 3.0),
        ([0.5, 0.0, 0.5], 1.0 / 3.0),
    ];
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const W1: f64 = 0.132_394_152_788_506;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W2: f64 = 0.125_939_180_544_827;
    const P7: [([f64; 3], f64); 7] = [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ];
    match points {
        1 => Ok(&P1),
        3 => Ok(&P3),
        7 => Ok(&P7),
        other => Err(Error::invalid(format!(
            "unsupported triangle quadrature with {other} points (use 1, 3 or 7)"
        ))),
    }
}

/// Integrate the double-layer kernel times the three vertex hat functions
/// of a flat panel, collocated at `x`:
///
///   I_j = 1/(4 pi) * Int_T ((x - y) . n) / |x - y|^3 * lambda_j(y) dS(y).
///
/// A panel whose plane contains `x` contributes exactly zero because the
/// kernel numerator vanishes identically; near-singular panels are handled
/// by recursive subdivision at the edge midpoints.
pub fn double_layer_panel_integral(
    x: Vector3<f64>,
    tri: [Vector3<f64>; 3],
    quad_points: usize,
    max_depth: usize,
) -> Result<[f64; 3]> {
    let rule = triangle_rule(quad_points)?;
    let cross = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
    let doubled_area = cross.norm();
    if doubled_area == 0.0 {
        return Err(Error::mesh("degenerate boundary panel"));
    }
    let normal = cross / doubled_area;
    let diam = (tri[0] - tri[1])
        .norm()
        .max((tri[1] - tri[2]).norm())
        .max((tri[2] - tri[0]).norm());
    if (x - tri[0]).dot(&normal).abs() <= 1e-13 * diam.max(1.0) {
        return Ok([0.0; 3]);
    }

    let mut out = [0.0; 3];
    // each sub-triangle carries the parent hat values at its corners
    let lam = [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
    ];
    integrate_recursive(x, tri, lam, normal, rule, max_depth, &mut out);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn integrate_recursive(
    x: Vector3<f64>,
    tri: [Vector3<f64>; 3],
    lam: [Vector3<f64>; 3],
    normal: Vector3<f64>,
    rule: &[([f64; 3], f64)],
    depth_left: usize,
    out: &mut [f64; 3],
) {
    let diam = (tri[0] - tri[1])
        .norm()
        .max((tri[1] - tri[2]).norm())
        .max((tri[2] - tri[0]).norm());
    let centroid = (tri[0] + tri[1] + tri[2]) / 3.0;
    let dist = (x - tri[0])
        .norm()
        .min((x - tri[1]).norm())
        .min((x - tri[2]).norm())
        .min((x - centroid).norm());

    if depth_left > 0 && dist < 2.0 * diam {
        let m01 = (tri[0] + tri[1]) / 2.0;
        let m12 = (tri[1] + tri[2]) / 2.0;
        let m20 = (tri[2] + tri[0]) / 2.0;
        let l01 = (lam[0] + lam[1]) / 2.0;
        let l12 = (lam[1] + lam[2]) / 2.0;
        let l20 = (lam[2] + lam[0]) / 2.0;
        let children = [
            ([tri[0], m01, m20], [lam[0], l01, l20]),
            ([m01, tri[1], m12], [l01, lam[1], l12]),
            ([m20, m12, tri[2]], [l20, l12, lam[2]]),
            ([m01, m12, m20], [l01, l12, l20]),
        ];
        for (ct, cl) in children {
            integrate_recursive(x, ct, cl, normal, rule, depth_left - 1, out);
        }
        return;
    }

    let area = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm() / 2.0;
    for &(bary, w) in rule {
        let y = bary[0] * tri[0] + bary[1] * tri[1] + bary[2] * tri[2];
        let l = bary[0] * lam[0] + bary[1] * lam[1] + bary[2] * lam[2];
        let d = x - y;
        let r = d.norm();
        let kernel = d.dot(&normal) / (4.0 * std::f64::consts::PI * r * r * r);
        let s = w * area * kernel;
        out[0] += s * l.x;
        out[1] += s * l.y;
        out[2] += s * l.z;
    }
}

/// Dense Galerkin matrix of the double-layer operator on the boundary:
/// entry (l, l') is the surface integral of the hat function of node l
/// times the potential of the hat density of node l'. Because the outer
/// quadrature points lie strictly inside flat panels, the smooth-point
/// jump factor 1/2 applies at every evaluation point; no corner
/// corrections enter anywhere.
#[derive(Debug, Clone)]
pub struct DoubleLayerMatrix {
    n: usize,
    /// row-major
    data: Vec<f64>,
    pub quad_points: usize,
}

impl DoubleLayerMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    /// Matrix-vector product with a nodal boundary density.
    pub fn apply(&self, density: &[f64]) -> Vec<f64> {
        assert_eq!(density.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            let mut acc = 0.0;
            for (a, d) in row.iter().zip(density) {
                acc += a * d;
            }
            *o = acc;
        }
        out
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        self.data[row * self.n..(row + 1) * self.n].iter().sum()
    }
}

/// Assemble the double-layer matrix over a closed oriented surface: for
/// every outer quadrature point y of every test panel, the potentials of
/// all hat densities are evaluated at y (collocation in the panel
/// interior) and scattered against the test hat values at y.
pub fn assemble_double_layer(
    mesh_vertices: &[Vector3<f64>],
    surface: &SurfaceMesh,
    quad_points: usize,
) -> Result<DoubleLayerMatrix> {
    let rule = triangle_rule(quad_points)?;
    let n = surface.node_count();
    let mut data = vec![0.0; n * n];
    const MAX_DEPTH: usize = 7;
    for (t_out, tri_out) in surface.triangles.iter().enumerate() {
        let vo = [
            mesh_vertices[tri_out[0]],
            mesh_vertices[tri_out[1]],
            mesh_vertices[tri_out[2]],
        ];
        let rows: Vec<usize> = tri_out
            .iter()
            .map(|&g| surface.local_index(g).expect("panel vertex on boundary"))
            .collect();
        let area_out = surface.areas[t_out];
        for &(bary, w) in rule {
            let y = bary[0] * vo[0] + bary[1] * vo[1] + bary[2] * vo[2];
            let wq = w * area_out;
            for tri_in in &surface.triangles {
                let vi = [
                    mesh_vertices[tri_in[0]],
                    mesh_vertices[tri_in[1]],
                    mesh_vertices[tri_in[2]],
                ];
                let vals = double_layer_panel_integral(y, vi, quad_points, MAX_DEPTH)?;
                if vals == [0.0; 3] {
                    continue;
                }
                for (j, &g) in tri_in.iter().enumerate() {
                    let col = surface.local_index(g).expect("panel vertex on boundary");
                    for a in 0..3 {
                        data[rows[a] * n + col] += wq * bary[a] * vals[j];
                    }
                }
            }
        }
    }
    Ok(DoubleLayerMatrix {
        n,
        data,
        quad_points,
    })
}

/// Consistent P1 mass matrix of the boundary triangulation, in
/// boundary-local indices.
pub fn assemble_boundary_mass(surface: &SurfaceMesh) -> SparseOperator {
    let mut triplets = Vec::with_capacity(surface.triangles.len() * 9);
    for (tri, &area) in surface.triangles.iter().zip(&surface.areas) {
        let local: Vec<usize> = tri
            .iter()
            .map(|&g| surface.local_index(g).expect("boundary node"))
            .collect();
        for a in 0..3 {
            for b in 0..3 {
                let w = if a == b { area / 6.0 } else { area / 12.0 };
                triplets.push((local[a], local[b], w));
            }
        }
    }
    SparseOperator::from_triplets(surface.node_count(), triplets, true)
}

/// Previous solution vectors, reused to seed the iterative solvers: during
/// time stepping consecutive magnetization states barely differ, so the
/// seeded solves converge in a fraction of the cold iterations.
#[derive(Debug, Default, Clone)]
struct StrayWorkspace {
    u1: Vec<f64>,
    g: Vec<f64>,
    u2: Vec<f64>,
}

/// Everything needed to evaluate the stray field repeatedly on one mesh.
/// The cached operators are immutable; the warm-start workspace behind a
/// mutex only seeds solver iterations and never changes results beyond the
/// solver tolerance.
#[derive(Debug)]
pub struct StrayFieldSolver {
    space: Arc<FemSpace>,
    surface: SurfaceMesh,
    dlp: DoubleLayerMatrix,
    boundary_mass: SparseOperator,
    pub cg: SolverConfig,
    workspace: Mutex<StrayWorkspace>,
}

impl Clone for StrayFieldSolver {
    fn clone(&self) -> Self {
        StrayFieldSolver {
            space: self.space.clone(),
            surface: self.surface.clone(),
            dlp: self.dlp.clone(),
            boundary_mass: self.boundary_mass.clone(),
            cg: self.cg,
            workspace: Mutex::new(self.workspace.lock().expect("workspace lock").clone()),
        }
    }
}

impl StrayFieldSolver {
    pub fn new(space: Arc<FemSpace>, quad_points: usize, cg: SolverConfig) -> Result<Self> {
        let surface = extract_boundary(&space.mesh)?;
        let dlp = assemble_double_layer(space.mesh.vertices(), &surface, quad_points)?;
        let boundary_mass = assemble_boundary_mass(&surface);
        Ok(StrayFieldSolver {
            space,
            surface,
            dlp,
            boundary_mass,
            cg,
            workspace: Mutex::new(StrayWorkspace::default()),
        })
    }

    pub fn space(&self) -> &Arc<FemSpace> {
        &self.space
    }

    pub fn surface(&self) -> &SurfaceMesh {
        &self.surface
    }

    pub fn double_layer(&self) -> &DoubleLayerMatrix {
        &self.dlp
    }

    /// Evaluate the stray field of a magnetization state:
    /// (i) zero-mean Neumann solve for u1,
    /// (ii) boundary datum g = L2(boundary) projection of (K - 1/2) u1,
    /// (iii) harmonic extension u2 with trace g,
    /// (iv) return -grad u1 - grad u2 per element.
    pub fn stray_field(&self, m: &NodalVectorField) -> Result<ElementVectorField> {
        let space = &self.space;
        let mesh = &space.mesh;
        assert_eq!(m.len(), mesh.vertex_count());
        let mut ws = self.workspace.lock().expect("workspace lock");

        // (i) <grad u1, grad v> = <m, grad v>
        let mut b = vec![0.0; mesh.vertex_count()];
        let m_avg = element_average(mesh, m);
        for (e, t) in mesh.tets().iter().enumerate() {
            let vol = mesh.element_volumes()[e];
            let g = &space.element_grads()[e];
            for a in 0..4 {
                b[t[a]] += vol * m_avg[e].dot(&g[a]);
            }
        }
        let u1 = cg_zero_mean_warm(
            &space.stiffness,
            &b,
            &space.weights,
            &self.cg,
            Some(ws.u1.as_slice()).filter(|w| w.len() == b.len()),
        )?;

        // (ii) L2(boundary) projection of (K - 1/2) applied to the trace of
        // u1: the double-layer matrix already carries the test integrals, so
        // the projection solves the boundary mass system.
        let trace: Vec<f64> = self.surface.nodes.iter().map(|&g| u1[g]).collect();
        let ku = self.dlp.apply(&trace);
        let mut mu = vec![0.0; self.surface.node_count()];
        self.boundary_mass.matvec(&trace, &mut mu);
        let rhs: Vec<f64> = ku.iter().zip(&mu).map(|(k, m)| k - 0.5 * m).collect();
        let g = cg_solve_warm(
            &self.boundary_mass,
            &rhs,
            &self.cg,
            Some(ws.g.as_slice()).filter(|w| w.len() == rhs.len()),
        )?;

        // (iii) harmonic extension
        let bc: Vec<(usize, f64)> = self
            .surface
            .nodes
            .iter()
            .zip(&g)
            .map(|(&node, &val)| (node, val))
            .collect();
        let u2 = dirichlet_solve_warm(
            &space.stiffness,
            &bc,
            &self.cg,
            Some(ws.u2.as_slice()).filter(|w| w.len() == u1.len()),
        )?;

        // (iv) elementwise -grad(u1 + u2)
        let mut out = Vec::with_capacity(mesh.tet_count());
        for (e, t) in mesh.tets().iter().enumerate() {
            let g = &space.element_grads()[e];
            let mut grad = Vector3::zeros();
            for a in 0..4 {
                grad += (u1[t[a]] + u2[t[a]]) * g[a];
            }
            out.push(-grad);
        }
        ws.u1 = u1;
        ws.g = g;
        ws.u2 = u2;
        Ok(ElementVectorField::from_values(out))
    }

    /// The L2 pairing of the stray field with the magnetization,
    /// `Int (-grad u) . m`. The magnetostatic self-energy is nonnegative,
    /// so the pairing is nonpositive up to solver tolerance.
    pub fn energy_product(&self, m: &NodalVectorField) -> Result<f64> {
        let field = self.stray_field(m)?;
        let product = energy_product_with_field(&self.space.mesh, &field, m);
        debug_assert!(
            product <= 1e-8 * (1.0 + crate::fem::inner_h(m, m, &self.space.weights)),
            "positive stray energy pairing {product}"
        );
        Ok(product)
    }
}

/// `Int field . m` for a piecewise-constant field and P1 magnetization;
/// exact since the element average of m integrates P1 data exactly.
pub fn energy_product_with_field(
    mesh: &crate::mesh::TetMesh,
    field: &ElementVectorField,
    m: &NodalVectorField,
) -> f64 {
    let m_avg = element_average(mesh, m);
    let mut acc = 0.0;
    for e in 0..mesh.tet_count() {
        acc += mesh.element_volumes()[e] * field[e].dot(&m_avg[e]);
    }
    acc
}
