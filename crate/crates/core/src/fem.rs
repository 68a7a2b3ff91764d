//! Lowest-order finite element machinery on tetrahedral meshes: lumped and
//! consistent L2 products, stiffness assembly, the discrete Laplacian, the
//! nodal projection and piecewise-constant gradient operators.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::TetMesh;

/// One 3-vector per mesh node (an element of the vector-valued P1 space).
#[derive(Debug, Clone, PartialEq)]
pub struct NodalVectorField {
    values: Vec<Vector3<f64>>,
}

impl NodalVectorField {
    pub fn zeros(n: usize) -> Self {
        NodalVectorField {
            values: vec![Vector3::zeros(); n],
        }
    }

    pub fn constant(n: usize, v: Vector3<f64>) -> Self {
        NodalVectorField {
            values: vec![v; n],
        }
    }

    pub fn from_values(values: Vec<Vector3<f64>>) -> Self {
        NodalVectorField { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Vector3<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// self + a * other
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        NodalVectorField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(u, v)| u + a * v)
                .collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        NodalVectorField {
            values: self.values.iter().map(|u| a * u).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }
}

impl std::ops::Index<usize> for NodalVectorField {
    type Output = Vector3<f64>;
    fn index(&self, i: usize) -> &Vector3<f64> {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for NodalVectorField {
    fn index_mut(&mut self, i: usize) -> &mut Vector3<f64> {
        &mut self.values[i]
    }
}

/// One 3-vector per element (piecewise-constant data such as gradients or
/// the stray field).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementVectorField {
    values: Vec<Vector3<f64>>,
}

impl ElementVectorField {
    pub fn zeros(n: usize) -> Self {
        ElementVectorField {
            values: vec![Vector3::zeros(); n],
        }
    }

    pub fn constant(n: usize, v: Vector3<f64>) -> Self {
        ElementVectorField {
            values: vec![v; n],
        }
    }

    pub fn from_values(values: Vec<Vector3<f64>>) -> Self {
        ElementVectorField { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Vector3<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.values
    }

    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        ElementVectorField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(u, v)| u + a * v)
                .collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        ElementVectorField {
            values: self.values.iter().map(|u| a * u).collect(),
        }
    }
}

impl std::ops::Index<usize> for ElementVectorField {
    type Output = Vector3<f64>;
    fn index(&self, i: usize) -> &Vector3<f64> {
        &self.values[i]
    }
}

/// Diagonal weights of the mass-lumped L2 product: beta_l is the integral
/// of the hat function of node l.
#[derive(Debug, Clone)]
pub struct LumpedWeights {
    beta: Vec<f64>,
}

impl LumpedWeights {
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn domain_volume(&self) -> f64 {
        self.beta.iter().sum()
    }
}

impl std::ops::Index<usize> for LumpedWeights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.beta[i]
    }
}

/// Compressed sparse row matrix over mesh nodes.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>, symmetric: bool) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut counts = vec![0usize; n];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        let mut prev = None;
        for (r, c, v) in triplets {
            if prev == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                counts[r] += 1;
                prev = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        SparseOperator {
            n,
            row_ptr,
            col_idx,
            vals,
            symmetric,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// y = A x for scalar nodal data.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// A x applied componentwise to a vector-valued nodal field.
    pub fn apply_field(&self, x: &NodalVectorField) -> NodalVectorField {
        assert_eq!(x.len(), self.n);
        let mut out = NodalVectorField::zeros(self.n);
        for i in 0..self.n {
            let mut acc = Vector3::zeros();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            out[i] = acc;
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.vals[k];
                }
            }
        }
        d
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.vals[k]))
    }
}

/// Gradients of the four barycentric hat functions on one tetrahedron,
/// constant per element.
pub fn hat_gradients(p: &[Vector3<f64>; 4]) -> [Vector3<f64>; 4] {
    let m = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let inv = m.try_inverse().expect("non-degenerate tetrahedron");
    // rows of inv are the gradients of the barycentric coordinates 1..3
    let g1 = Vector3::new(inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]);
    let g2 = Vector3::new(inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]);
    let g3 = Vector3::new(inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]);
    [-(g1 + g2 + g3), g1, g2, g3]
}

/// Mesh plus the assembled operators every solver component needs. Built
/// once, immutable afterwards.
#[derive(Debug, Clone)]
pub struct FemSpace {
    pub mesh: Arc<TetMesh>,
    pub weights: LumpedWeights,
    pub stiffness: SparseOperator,
    pub mass: SparseOperator,
    /// Hat-function gradients per element, cached for fast elementwise loops.
    element_grads: Vec<[Vector3<f64>; 4]>,
}

impl FemSpace {
    pub fn new(mesh: Arc<TetMesh>) -> Self {
        let weights = assemble_lumped_weights(&mesh);
        let element_grads: Vec<[Vector3<f64>; 4]> = (0..mesh.tet_count())
            .map(|e| hat_gradients(&mesh.tet_vertices(e)))
            .collect();
        let stiffness = assemble_stiffness_cached(&mesh, &element_grads);
        let mass = assemble_consistent_mass(&mesh);
        FemSpace {
            mesh,
            weights,
            stiffness,
            mass,
            element_grads,
        }
    }

    pub fn node_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    pub fn element_grads(&self) -> &[[Vector3<f64>; 4]] {
        &self.element_grads
    }
}

/// beta_l = sum over incident elements of |K|/4.
pub fn assemble_lumped_weights(mesh: &TetMesh) -> LumpedWeights {
    let mut beta = vec![0.0; mesh.vertex_count()];
    for (t, &vol) in mesh.tets().iter().zip(mesh.element_volumes()) {
        for &v in t {
            beta[v] += vol / 4.0;
        }
    }
    LumpedWeights { beta }
}

/// Mass-lumped product of two nodal fields.
pub fn inner_h(u: &NodalVectorField, v: &NodalVectorField, w: &LumpedWeights) -> f64 {
    assert_eq!(u.len(), v.len());
    assert_eq!(u.len(), w.len());
    let mut acc = 0.0;
    for i in 0..u.len() {
        acc += w[i] * u[i].dot(&v[i]);
    }
    acc
}

pub fn norm_h(u: &NodalVectorField, w: &LumpedWeights) -> f64 {
    inner_h(u, u, w).sqrt()
}

/// Consistent (exact) L2 product of two nodal fields.
pub fn inner_l2(mass: &SparseOperator, u: &NodalVectorField, v: &NodalVectorField) -> f64 {
    let mv = mass.apply_field(v);
    let mut acc = 0.0;
    for i in 0..u.len() {
        acc += u[i].dot(&mv[i]);
    }
    acc
}

pub fn norm_l2(mass: &SparseOperator, u: &NodalVectorField) -> f64 {
    inner_l2(mass, u, u).sqrt()
}

fn assemble_stiffness_cached(mesh: &TetMesh, grads: &[[Vector3<f64>; 4]]) -> SparseOperator {
    let mut triplets = Vec::with_capacity(mesh.tet_count() * 16);
    for (e, t) in mesh.tets().iter().enumerate() {
        let vol = mesh.element_volumes()[e];
        let g = &grads[e];
        for a in 0..4 {
            for b in 0..4 {
                triplets.push((t[a], t[b], vol * g[a].dot(&g[b])));
            }
        }
    }
    SparseOperator::from_triplets(mesh.vertex_count(), triplets, true)
}

/// Stiffness matrix of the scalar P1 space: entries are the L2 products of
/// hat-function gradients. Row sums vanish (constants lie in the kernel).
pub fn assemble_stiffness(mesh: &TetMesh) -> SparseOperator {
    let grads: Vec<[Vector3<f64>; 4]> = (0..mesh.tet_count())
        .map(|e| hat_gradients(&mesh.tet_vertices(e)))
        .collect();
    assemble_stiffness_cached(mesh, &grads)
}

/// Consistent mass matrix of the scalar P1 space (exact for P1 x P1
/// integrands): element contribution |K|/20 * (1 + delta_ab).
pub fn assemble_consistent_mass(mesh: &TetMesh) -> SparseOperator {
    let mut triplets = Vec::with_capacity(mesh.tet_count() * 16);
    for (e, t) in mesh.tets().iter().enumerate() {
        let vol = mesh.element_volumes()[e];
        for a in 0..4 {
            for b in 0..4 {
                let w = if a == b { vol / 10.0 } else { vol / 20.0 };
                triplets.push((t[a], t[b], w));
            }
        }
    }
    SparseOperator::from_triplets(mesh.vertex_count(), triplets, true)
}

/// Discrete Laplacian: componentwise (Lap v)_l = -(K v)_l / beta_l, so that
/// the lumped product of (Lap v) with any test field equals minus the
/// gradient product.
pub fn discrete_laplacian(
    stiffness: &SparseOperator,
    w: &LumpedWeights,
    v: &NodalVectorField,
) -> NodalVectorField {
    let mut out = stiffness.apply_field(v);
    for i in 0..out.len() {
        out[i] = -out[i] / w[i];
    }
    out
}

/// Nodal projection of a nodal source: beta_l (P f)(z_l) = (M f)_l with the
/// consistent mass on the right-hand side.
pub fn project_ph_nodal(
    mass: &SparseOperator,
    w: &LumpedWeights,
    f: &NodalVectorField,
) -> NodalVectorField {
    let mut out = mass.apply_field(f);
    for i in 0..out.len() {
        out[i] /= w[i];
    }
    out
}

/// Nodal projection of element-constant data: the hat-function integral over
/// one element is |K|/4, so (P g)(z_l) = sum over incident K of g_K |K|/4,
/// divided by beta_l.
pub fn project_ph_element(
    mesh: &TetMesh,
    w: &LumpedWeights,
    g: &ElementVectorField,
) -> NodalVectorField {
    assert_eq!(g.len(), mesh.tet_count());
    let mut out = NodalVectorField::zeros(mesh.vertex_count());
    for (e, t) in mesh.tets().iter().enumerate() {
        let contrib = g[e] * (mesh.element_volumes()[e] / 4.0);
        for &v in t {
            out[v] += contrib;
        }
    }
    for i in 0..out.len() {
        out[i] /= w[i];
    }
    out
}

/// Nodal interpolation of a coordinate function.
pub fn interpolate_nodal(
    mesh: &TetMesh,
    f: impl Fn(Vector3<f64>) -> Vector3<f64>,
) -> Result<NodalVectorField> {
    let mut values = Vec::with_capacity(mesh.vertex_count());
    for (i, &p) in mesh.vertices().iter().enumerate() {
        let v = f(p);
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid(format!(
                "interpolated value at node {i} ({p:?}) is not finite"
            )));
        }
        values.push(v);
    }
    Ok(NodalVectorField::from_values(values))
}

/// Exact per-element gradient tensors of the P1 interpolant. Entry (j,k) of
/// the tensor is the derivative of component j along coordinate k.
pub fn element_gradient(space: &FemSpace, v: &NodalVectorField) -> Vec<Matrix3<f64>> {
    let mesh = &space.mesh;
    let mut out = Vec::with_capacity(mesh.tet_count());
    for (e, t) in mesh.tets().iter().enumerate() {
        let g = &space.element_grads()[e];
        let mut grad = Matrix3::zeros();
        for a in 0..4 {
            // v_a outer-product grad_a
            grad += v[t[a]] * g[a].transpose();
        }
        out.push(grad);
    }
    out
}

/// Directional derivative (dir . grad) v, one constant 3-vector per element.
pub fn directional_derivative(
    space: &FemSpace,
    v: &NodalVectorField,
    dir: &ElementVectorField,
) -> ElementVectorField {
    let mesh = &space.mesh;
    assert_eq!(dir.len(), mesh.tet_count());
    let mut out = Vec::with_capacity(mesh.tet_count());
    for (e, t) in mesh.tets().iter().enumerate() {
        let g = &space.element_grads()[e];
        let mut val = Vector3::zeros();
        for a in 0..4 {
            val += v[t[a]] * g[a].dot(&dir[e]);
        }
        out.push(val);
    }
    ElementVectorField::from_values(out)
}

/// Element averages of a nodal field (the mean of the four vertex values).
pub fn element_average(mesh: &TetMesh, v: &NodalVectorField) -> ElementVectorField {
    let mut out = Vec::with_capacity(mesh.tet_count());
    for t in mesh.tets() {
        out.push((v[t[0]] + v[t[1]] + v[t[2]] + v[t[3]]) / 4.0);
    }
    ElementVectorField::from_values(out)
}

/// Squared L2 norm of the gradient of a nodal field via the stiffness form.
pub fn grad_norm_sq(stiffness: &SparseOperator, v: &NodalVectorField) -> f64 {
    let kv = stiffness.apply_field(v);
    let mut acc = 0.0;
    for i in 0..v.len() {
        acc += v[i].dot(&kv[i]);
    }
    acc.max(0.0)
}
