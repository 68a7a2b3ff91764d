//! Tetrahedral meshes: structured box generation, boundary extraction,
//! quality metrics and plain-text I/O.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Conforming tetrahedral partition of a domain with an oriented boundary.
///
/// Invariants established at construction:
/// - every tetrahedron has strictly positive volume under its stored
///   vertex order,
/// - shared faces match exactly between neighbouring elements,
/// - each boundary face belongs to exactly one tetrahedron and is stored
///   with outward orientation.
#[derive(Debug, Clone)]
pub struct TetMesh {
    vertices: Vec<Vector3<f64>>,
    tets: Vec<[usize; 4]>,
    boundary_faces: Vec<[usize; 3]>,
    element_volumes: Vec<f64>,
}

/// Boundary surface of a [`TetMesh`]: oriented triangles plus the mapping
/// between global vertex ids and contiguous boundary-local ids.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    /// Triangles in global vertex ids, ordered so that the right-hand rule
    /// normal points out of the volume.
    pub triangles: Vec<[usize; 3]>,
    /// Outward unit normal per triangle.
    pub normals: Vec<Vector3<f64>>,
    /// Area per triangle.
    pub areas: Vec<f64>,
    /// Global vertex ids of boundary nodes, sorted ascending; index in this
    /// vector is the boundary-local id.
    pub nodes: Vec<usize>,
    /// Inverse of `nodes`: `local_of[global] = Some(local)` for boundary nodes.
    local_of: Vec<Option<usize>>,
}

impl SurfaceMesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.local_of.get(global).copied().flatten()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }
}

/// Quality metrics of a mesh: global mesh size and shape-regularity ratio.
#[derive(Debug, Clone, Copy)]
pub struct MeshQuality {
    /// Largest element diameter.
    pub h: f64,
    /// max over elements of diam(K) / |K|^(1/3).
    pub ratio: f64,
}

fn signed_volume(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>, d: &Vector3<f64>) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

/// The four faces of a tet, each listed with the local index of the
/// opposite vertex.
const TET_FACES: [([usize; 3], usize); 4] = [
    ([1, 2, 3], 0),
    ([0, 3, 2], 1),
    ([0, 1, 3], 2),
    ([0, 2, 1], 3),
];

fn sorted3(f: [usize; 3]) -> [usize; 3] {
    let mut s = f;
    s.sort_unstable();
    s
}

impl TetMesh {
    /// Build a mesh from raw vertices and connectivity. Fixes element
    /// orientation where needed, checks conformity and extracts the
    /// boundary with outward orientation.
    pub fn new(vertices: Vec<Vector3<f64>>, tets: Vec<[usize; 4]>) -> Result<Self> {
        Self::assemble(vertices, tets, None)
    }

    fn assemble(
        vertices: Vec<Vector3<f64>>,
        mut tets: Vec<[usize; 4]>,
        boundary: Option<Vec<[usize; 3]>>,
    ) -> Result<Self> {
        if vertices.is_empty() || tets.is_empty() {
            return Err(Error::mesh("mesh must contain vertices and tetrahedra"));
        }
        for v in &vertices {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::mesh("non-finite vertex coordinate"));
            }
        }
        let n = vertices.len();
        let mut element_volumes = Vec::with_capacity(tets.len());
        for (e, t) in tets.iter_mut().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::mesh(format!("tet {e} references vertex out of range")));
            }
            let mut vol = signed_volume(
                &vertices[t[0]],
                &vertices[t[1]],
                &vertices[t[2]],
                &vertices[t[3]],
            );
            if vol < 0.0 {
                t.swap(2, 3);
                vol = -vol;
            }
            if vol <= 0.0 {
                return Err(Error::mesh(format!("tet {e} is degenerate (volume {vol:.3e})")));
            }
            element_volumes.push(vol);
        }

        // Conformity: every face is shared by at most two elements.
        let mut face_count: HashMap<[usize; 3], u32> = HashMap::new();
        for t in &tets {
            for (f, _) in TET_FACES {
                let key = sorted3([t[f[0]], t[f[1]], t[f[2]]]);
                *face_count.entry(key).or_insert(0) += 1;
            }
        }
        if let Some((face, c)) = face_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::mesh(format!(
                "non-manifold mesh: face {face:?} shared by {c} elements"
            )));
        }

        let mut mesh = TetMesh {
            vertices,
            tets,
            boundary_faces: Vec::new(),
            element_volumes,
        };
        mesh.boundary_faces = match boundary {
            Some(faces) => {
                mesh.check_boundary(&faces, &face_count)?;
                faces
            }
            None => mesh.compute_boundary(&face_count),
        };
        Ok(mesh)
    }

    /// Walk all element faces and keep the ones that occur exactly once,
    /// ordered so the normal points away from the owning element.
    fn compute_boundary(&self, face_count: &HashMap<[usize; 3], u32>) -> Vec<[usize; 3]> {
        let mut faces = Vec::new();
        for t in &self.tets {
            for (f, opp) in TET_FACES {
                let tri = [t[f[0]], t[f[1]], t[f[2]]];
                if face_count[&sorted3(tri)] == 1 {
                    faces.push(self.orient_outward(tri, t[opp]));
                }
            }
        }
        faces
    }

    fn orient_outward(&self, tri: [usize; 3], opposite: usize) -> [usize; 3] {
        let [a, b, c] = tri;
        let fa = &self.vertices[a];
        let normal = (self.vertices[b] - fa).cross(&(self.vertices[c] - fa));
        let face_centroid = (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0;
        let inward = self.vertices[opposite] - face_centroid;
        if normal.dot(&inward) > 0.0 {
            [a, c, b]
        } else {
            [a, b, c]
        }
    }

    fn check_boundary(
        &self,
        faces: &[[usize; 3]],
        face_count: &HashMap<[usize; 3], u32>,
    ) -> Result<()> {
        let n = self.vertices.len();
        for f in faces {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::mesh("boundary face references vertex out of range"));
            }
            match face_count.get(&sorted3(*f)) {
                Some(1) => {}
                Some(_) => {
                    return Err(Error::mesh(format!("face {f:?} listed as boundary is interior")))
                }
                None => {
                    return Err(Error::mesh(format!(
                        "boundary face {f:?} does not belong to any element"
                    )))
                }
            }
            // Orientation must agree with the geometric outward normal.
            let owner = self
                .tets
                .iter()
                .find(|t| {
                    let key = sorted3(*f);
                    TET_FACES
                        .iter()
                        .any(|(lf, _)| sorted3([t[lf[0]], t[lf[1]], t[lf[2]]]) == key)
                })
                .expect("face owner exists");
            let opp = owner
                .iter()
                .copied()
                .find(|v| !f.contains(v))
                .expect("opposite vertex");
            if self.orient_outward(*f, opp) != *f {
                return Err(Error::mesh(format!("boundary face {f:?} is not oriented outward")));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn boundary_faces(&self) -> &[[usize; 3]] {
        &self.boundary_faces
    }

    pub fn element_volumes(&self) -> &[f64] {
        &self.element_volumes
    }

    pub fn total_volume(&self) -> f64 {
        self.element_volumes.iter().sum()
    }

    pub fn tet_vertices(&self, e: usize) -> [Vector3<f64>; 4] {
        let t = self.tets[e];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
            self.vertices[t[3]],
        ]
    }
}

/// Structured box mesh: `nx*ny*nz` hexahedral cells, each split into six
/// tetrahedra sharing the cell diagonal (Kuhn split). The split is
/// translation invariant, so the global mesh is conforming without any
/// cell-parity bookkeeping.
pub fn build_box_mesh(
    nx: usize,
    ny: usize,
    nz: usize,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
) -> Result<TetMesh> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::invalid("cell counts must be at least 1"));
    }
    if !(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z) {
        return Err(Error::invalid(format!(
            "box bounds must satisfy lo < hi componentwise, got lo={lo:?} hi={hi:?}"
        )));
    }

    let idx = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Vector3::new(
                    lo.x + (hi.x - lo.x) * i as f64 / nx as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / ny as f64,
                    lo.z + (hi.z - lo.z) * k as f64 / nz as f64,
                ));
            }
        }
    }

    // Each tet follows an axis path from the cell origin to the far corner;
    // the six axis orderings tile the cell.
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(nx * ny * nz * 6);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in PERMS {
                    let mut corner = [0usize; 3];
                    let mut path = [[0usize; 3]; 4];
                    for (step, &axis) in perm.iter().enumerate() {
                        corner[axis] = 1;
                        path[step + 1] = corner;
                    }
                    let t: Vec<usize> = path
                        .iter()
                        .map(|d| idx(i + d[0], j + d[1], k + d[2]))
                        .collect();
                    tets.push([t[0], t[1], t[2], t[3]]);
                }
            }
        }
    }

    TetMesh::new(vertices, tets)
}

/// Extract the oriented boundary surface together with the boundary-node
/// index map.
pub fn extract_boundary(mesh: &TetMesh) -> Result<SurfaceMesh> {
    let mut triangles = Vec::with_capacity(mesh.boundary_faces().len());
    let mut normals = Vec::with_capacity(mesh.boundary_faces().len());
    let mut areas = Vec::with_capacity(mesh.boundary_faces().len());
    let mut on_boundary = vec![false; mesh.vertex_count()];
    for &tri in mesh.boundary_faces() {
        let [a, b, c] = tri;
        let cross = (mesh.vertices[b] - mesh.vertices[a]).cross(&(mesh.vertices[c] - mesh.vertices[a]));
        let doubled = cross.norm();
        if doubled <= 0.0 {
            return Err(Error::mesh(format!("degenerate boundary triangle {tri:?}")));
        }
        triangles.push(tri);
        normals.push(cross / doubled);
        areas.push(doubled / 2.0);
        for v in tri {
            on_boundary[v] = true;
        }
    }

    let nodes: Vec<usize> = (0..mesh.vertex_count()).filter(|&v| on_boundary[v]).collect();
    let mut local_of = vec![None; mesh.vertex_count()];
    for (local, &global) in nodes.iter().enumerate() {
        local_of[global] = Some(local);
    }

    Ok(SurfaceMesh {
        triangles,
        normals,
        areas,
        nodes,
        local_of,
    })
}

/// Mesh size and shape-regularity ratio.
pub fn mesh_quality(mesh: &TetMesh) -> MeshQuality {
    let mut h: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for (e, t) in mesh.tets().iter().enumerate() {
        let mut diam: f64 = 0.0;
        for a in 0..4 {
            for b in (a + 1)..4 {
                diam = diam.max((mesh.vertices[t[a]] - mesh.vertices[t[b]]).norm());
            }
        }
        h = h.max(diam);
        ratio = ratio.max(diam / mesh.element_volumes[e].cbrt());
    }
    MeshQuality { h, ratio }
}

/// Serialize to the plain-text `tetmesh v1` format.
pub fn save_mesh(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn mesh_to_string(mesh: &TetMesh) -> String {
    let mut out = String::new();
    out.push_str("tetmesh v1\n");
    let _ = writeln!(out, "vertices {}", mesh.vertex_count());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    let _ = writeln!(out, "tets {}", mesh.tet_count());
    for t in mesh.tets() {
        let _ = writeln!(out, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(out, "boundary {}", mesh.boundary_faces().len());
    for f in mesh.boundary_faces() {
        let _ = writeln!(out, "{} {} {}", f[0], f[1], f[2]);
    }
    out
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TetMesh> {
    let text = std::fs::read_to_string(path)?;
    mesh_from_str(&text)
}

struct Tokens<'a> {
    lines: Vec<(usize, std::str::SplitWhitespace<'a>)>,
    cursor: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                let content = l.split('#').next().unwrap_or("");
                (i + 1, content.split_whitespace())
            })
            .collect();
        Tokens {
            lines,
            cursor: 0,
            last_line: 1,
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        while self.cursor < self.lines.len() {
            let (line, iter) = &mut self.lines[self.cursor];
            if let Some(tok) = iter.next() {
                self.last_line = *line;
                return Some((*line, tok));
            }
            self.cursor += 1;
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next().ok_or_else(|| Error::Parse {
            line: self.last_line,
            message: format!("unexpected end of file, expected {what}"),
        })
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let (line, tok) = self.expect(what)?;
        tok.parse().map_err(|_| Error::Parse {
            line,
            message: format!("expected {what}, found `{tok}`"),
        })
    }
}

pub fn mesh_from_str(text: &str) -> Result<TetMesh> {
    let mut tok = Tokens::new(text);
    let (line, magic) = tok.expect("header `tetmesh`")?;
    let (_, version) = tok.expect("format version")?;
    if magic != "tetmesh" || version != "v1" {
        return Err(Error::Parse {
            line,
            message: format!("expected header `tetmesh v1`, found `{magic} {version}`"),
        });
    }

    let (line, kw) = tok.expect("section `vertices`")?;
    if kw != "vertices" {
        return Err(Error::Parse {
            line,
            message: format!("expected section `vertices`, found `{kw}`"),
        });
    }
    let n: usize = tok.parse("vertex count")?;
    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = tok.parse("vertex coordinate")?;
        let y: f64 = tok.parse("vertex coordinate")?;
        let z: f64 = tok.parse("vertex coordinate")?;
        vertices.push(Vector3::new(x, y, z));
    }

    let (line, kw) = tok.expect("section `tets`")?;
    if kw != "tets" {
        return Err(Error::Parse {
            line,
            message: format!("expected section `tets`, found `{kw}`"),
        });
    }
    let m: usize = tok.parse("tet count")?;
    let mut tets = Vec::with_capacity(m);
    for _ in 0..m {
        let mut t = [0usize; 4];
        for v in &mut t {
            *v = tok.parse("vertex index")?;
        }
        tets.push(t);
    }

    let boundary = match tok.next() {
        Some((line, kw)) => {
            if kw != "boundary" {
                return Err(Error::Parse {
                    line,
                    message: format!("expected section `boundary` or end of file, found `{kw}`"),
                });
            }
            let f: usize = tok.parse("boundary face count")?;
            let mut faces = Vec::with_capacity(f);
            for _ in 0..f {
                let mut tri = [0usize; 3];
                for v in &mut tri {
                    *v = tok.parse("vertex index")?;
                }
                faces.push(tri);
            }
            Some(faces)
        }
        None => None,
    };

    TetMesh::assemble(vertices, tets, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube(n: usize) -> TetMesh {
        build_box_mesh(n, n, n, Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn single_cell_counts_and_volume() {
        let mesh = unit_cube(1);
        assert_eq!(mesh.vertex_count(), 8);
        assert_eq!(mesh.tet_count(), 6);
        assert!((mesh.total_volume() - 1.0).abs() < 1e-12);
        assert_eq!(mesh.boundary_faces().len(), 12);
    }

    #[test]
    fn benchmark_mesh_counts() {
        let mesh = unit_cube(8);
        assert_eq!(mesh.tet_count(), 3072);
        assert_eq!(mesh.vertex_count(), 729);
        let surf = extract_boundary(&mesh).unwrap();
        assert_eq!(surf.triangles.len(), 768);
        assert!((mesh.total_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_bounds_rejected() {
        let r = build_box_mesh(1, 1, 1, Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 1.0));
        assert!(r.is_err());
        assert!(build_box_mesh(0, 1, 1, Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn all_volumes_positive_and_additive() {
        let mesh = build_box_mesh(3, 2, 4, Vector3::new(-1.0, 0.0, 2.0), Vector3::new(2.0, 0.5, 3.0))
            .unwrap();
        assert!(mesh.element_volumes().iter().all(|&v| v > 0.0));
        let vol: f64 = mesh.total_volume();
        assert!((vol - 3.0 * 0.5 * 1.0).abs() < 1e-12 * 1.5);
    }

    #[test]
    fn conformity_faces_match() {
        // Any face shared by two tets must appear with the identical vertex
        // set in both; TetMesh::assemble checks counts, so re-derive here.
        let mesh = unit_cube(2);
        let mut count: HashMap<[usize; 3], u32> = HashMap::new();
        for t in mesh.tets() {
            for (f, _) in TET_FACES {
                *count.entry(sorted3([t[f[0]], t[f[1]], t[f[2]]])).or_insert(0) += 1;
            }
        }
        let boundary = mesh.boundary_faces().len() as u32;
        let singles: u32 = count.values().filter(|&&c| c == 1).count() as u32;
        assert_eq!(singles, boundary);
        assert!(count.values().all(|&c| c <= 2));
    }

    #[test]
    fn boundary_area_and_closure() {
        let mesh = unit_cube(1);
        let surf = extract_boundary(&mesh).unwrap();
        assert!((surf.total_area() - 6.0).abs() < 1e-12);
        // Closed surface: oriented areas sum to zero.
        let mut sum = Vector3::zeros();
        for (n, a) in surf.normals.iter().zip(&surf.areas) {
            sum += n * *a;
        }
        assert!(sum.norm() <= 1e-12 * surf.total_area());

        let mesh = build_box_mesh(3, 4, 5, Vector3::new(-0.3, 0.1, 0.0), Vector3::new(1.0, 2.0, 0.7))
            .unwrap();
        let surf = extract_boundary(&mesh).unwrap();
        let mut sum = Vector3::zeros();
        for (n, a) in surf.normals.iter().zip(&surf.areas) {
            sum += n * *a;
        }
        assert!(sum.norm() <= 1e-12 * surf.total_area());
    }

    #[test]
    fn normals_point_outward() {
        let mesh = unit_cube(2);
        let surf = extract_boundary(&mesh).unwrap();
        let center = Vector3::new(0.5, 0.5, 0.5);
        for (tri, n) in surf.triangles.iter().zip(&surf.normals) {
            let c = (mesh.vertices()[tri[0]] + mesh.vertices()[tri[1]] + mesh.vertices()[tri[2]]) / 3.0;
            assert!(n.dot(&(c - center)) > 0.0);
        }
    }

    #[test]
    fn boundary_node_map_is_bijective() {
        let mesh = unit_cube(3);
        let surf = extract_boundary(&mesh).unwrap();
        // 4^3 - 2^3 interior
        assert_eq!(surf.node_count(), 64 - 8);
        for (local, &global) in surf.nodes.iter().enumerate() {
            assert_eq!(surf.local_index(global), Some(local));
        }
        let interior = (0..mesh.vertex_count()).filter(|&v| surf.local_index(v).is_none()).count();
        assert_eq!(interior, 8);
    }

    #[test]
    fn non_manifold_connectivity_rejected() {
        // three tets sharing one face
        let vertices = vec![
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::new(1.0, 1.0, 1.0),
        ];
        let err = TetMesh::new(vertices, vec![[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]])
            .unwrap_err();
        assert!(err.to_string().contains("non-manifold"), "{err}");
    }

    #[test]
    fn misoriented_boundary_file_rejected() {
        let mesh = unit_cube(1);
        let mut text = format!("tetmesh v1\nvertices {}\n", mesh.vertex_count());
        for v in mesh.vertices() {
            text.push_str(&format!("{} {} {}\n", v.x, v.y, v.z));
        }
        text.push_str(&format!("tets {}\n", mesh.tet_count()));
        for t in mesh.tets() {
            text.push_str(&format!("{} {} {} {}\n", t[0], t[1], t[2], t[3]));
        }
        // flip the orientation of the first boundary face
        let mut faces = mesh.boundary_faces().to_vec();
        faces[0].swap(1, 2);
        text.push_str(&format!("boundary {}\n", faces.len()));
        for f in &faces {
            text.push_str(&format!("{} {} {}\n", f[0], f[1], f[2]));
        }
        let err = mesh_from_str(&text).unwrap_err();
        assert!(err.to_string().contains("oriented"), "{err}");
    }

    #[test]
    fn quality_reference_tet() {
        let vertices = vec![
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let mesh = TetMesh::new(vertices, vec![[0, 1, 2, 3]]).unwrap();
        let q = mesh_quality(&mesh);
        assert!((q.h - 2f64.sqrt()).abs() < 1e-15);
        assert!((mesh.total_volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn quality_kuhn_split() {
        let q8 = mesh_quality(&unit_cube(8));
        assert!((q8.h - 3f64.sqrt() / 8.0).abs() < 1e-12);
        // Ratio is similarity invariant: identical across refinement levels.
        let q2 = mesh_quality(&unit_cube(2));
        let q4 = mesh_quality(&unit_cube(4));
        assert!((q2.ratio - q4.ratio).abs() < 1e-10);
        assert!((q2.ratio - q8.ratio).abs() < 1e-10);
        assert!(q8.ratio >= 6f64.cbrt());
    }

    #[test]
    fn save_load_round_trip() {
        let mesh = unit_cube(2);
        let text = mesh_to_string(&mesh);
        let loaded = mesh_from_str(&text).unwrap();
        assert_eq!(mesh_to_string(&loaded), text);
        assert_eq!(loaded.vertex_count(), mesh.vertex_count());
        assert_eq!(loaded.tets(), mesh.tets());
        assert_eq!(loaded.boundary_faces(), mesh.boundary_faces());
    }

    #[test]
    fn load_without_boundary_regenerates() {
        let mesh = unit_cube(1);
        let mut text = String::from("tetmesh v1\n");
        text.push_str(&format!("vertices {}\n", mesh.vertex_count()));
        for v in mesh.vertices() {
            text.push_str(&format!("{} {} {}\n", v.x, v.y, v.z));
        }
        text.push_str(&format!("tets {}\n", mesh.tet_count()));
        for t in mesh.tets() {
            text.push_str(&format!("{} {} {} {}\n", t[0], t[1], t[2], t[3]));
        }
        let loaded = mesh_from_str(&text).unwrap();
        assert_eq!(loaded.boundary_faces().len(), 12);
        assert_eq!(loaded.vertex_count(), 8);
    }

    #[test]
    fn truncated_file_names_missing_section() {
        let err = mesh_from_str("tetmesh v1\nvertices 2\n0 0 0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("vertex coordinate"), "{msg}");

        let err = mesh_from_str("tetmesh v1\n").unwrap_err();
        assert!(err.to_string().contains("vertices"), "{err}");
    }

    #[test]
    fn parse_error_carries_line_number() {
        let err = mesh_from_str("tetmesh v1\nvertices 1\n0 0 zzz\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# comment\ntetmesh v1\n\nvertices 4 # four of them\n0 0 0\n1 0 0\n0 1 0\n0 0 1\ntets 1\n0 1 2 3\n";
        let mesh = mesh_from_str(text).unwrap();
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.boundary_faces().len(), 4);
    }
}
