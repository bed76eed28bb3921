//! Closed oriented triangle surfaces: validation, adjacency and OBJ I/O.
//!
//! A [`TriangleSurface`] is an indexed face set with cached adjacency. The
//! connectivity lives in a shared [`Topology`] so that flows which only move
//! vertices can produce new surfaces without rebuilding it.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::Vector3;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Faces with area below this fraction of the mean face area are rejected.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-12;

/// Edges shorter than this fraction of the mean edge length are rejected.
pub const DEGENERATE_EDGE_RATIO: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} references vertex {index} (only {count} vertices)")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {0} repeats a vertex")]
    RepeatedIndex(usize),
    #[error("open boundary: edge ({0}, {1}) belongs to a single face")]
    OpenBoundary(usize, usize),
    #[error("non-manifold edge ({0}, {1}) shared by {2} faces")]
    NonManifoldEdge(usize, usize, usize),
    #[error("non-manifold vertex {0}: incident faces do not form a single fan")]
    NonManifoldVertex(usize),
    #[error("inconsistent orientation across edge ({0}, {1})")]
    InconsistentOrientation(usize, usize),
    #[error("vertex {0} is not referenced by any face")]
    UnreferencedVertex(usize),
    #[error("vertices {0} and {1} coincide")]
    DuplicateVertex(usize, usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("edge ({0}, {1}) is degenerate")]
    DegenerateEdge(usize, usize),
    #[error("field has {got} entries, surface has {expected} vertices")]
    FieldLength { expected: usize, got: usize },
    #[error("field entry {0} is not finite")]
    FieldNonFinite(usize),
}

/// Per-vertex quantity sampled on a surface.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexField<T> {
    values: Vec<T>,
}

pub type ScalarField = VertexField<f64>;
pub type VectorField = VertexField<Vec3>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    Vector,
}

pub trait FieldValue: Copy {
    const KIND: FieldKind;
    fn is_finite_value(&self) -> bool;
}

impl FieldValue for f64 {
    const KIND: FieldKind = FieldKind::Scalar;
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl FieldValue for Vec3 {
    const KIND: FieldKind = FieldKind::Vector;
    fn is_finite_value(&self) -> bool {
        self.iter().all(|c| c.is_finite())
    }
}

impl<T: FieldValue> VertexField<T> {
    /// Wraps `values` after checking length against the surface and finiteness.
    pub fn new(surface: &TriangleSurface, values: Vec<T>) -> Result<Self, MeshError> {
        if values.len() != surface.vertex_count() {
            return Err(MeshError::FieldLength {
                expected: surface.vertex_count(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite_value()) {
            return Err(MeshError::FieldNonFinite(i));
        }
        Ok(Self { values })
    }

    /// Wraps values without surface checks. Used by operators whose output
    /// length is correct by construction.
    pub(crate) fn from_vec(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn from_fn(surface: &TriangleSurface, f: impl FnMut(usize) -> T) -> Self {
        Self {
            values: (0..surface.vertex_count()).map(f).collect(),
        }
    }

    pub fn kind(&self) -> FieldKind {
        T::KIND
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<U: FieldValue>(&self, f: impl Fn(T) -> U) -> VertexField<U> {
        VertexField {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl ScalarField {
    pub fn constant(surface: &TriangleSurface, value: f64) -> Self {
        Self::from_fn(surface, |_| value)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl<T> std::ops::Index<usize> for VertexField<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

/// Immutable connectivity of a closed oriented triangle mesh.
#[derive(Debug, Clone)]
pub struct Topology {
    vertex_count: usize,
    faces: Vec<[usize; 3]>,
    /// Undirected edges `(a, b)` with `a < b`.
    edges: Vec<[usize; 2]>,
    /// The two faces adjacent to each edge, in the same order as `edges`.
    edge_faces: Vec<[usize; 2]>,
    vf_offsets: Vec<usize>,
    vf_faces: Vec<usize>,
    ring_offsets: Vec<usize>,
    ring: Vec<usize>,
    component_of_face: Vec<usize>,
    component_count: usize,
}

impl Topology {
    /// Validates combinatorics: closedness, manifoldness and orientation.
    pub fn build(vertex_count: usize, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= vertex_count {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index: v,
                        count: vertex_count,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::RepeatedIndex(fi));
            }
        }

        // Undirected edge -> incident (face, forward?) list.
        let mut incidence: HashMap<(usize, usize), Vec<(usize, bool)>> =
            HashMap::with_capacity(faces.len() * 3 / 2);
        for (fi, f) in faces.iter().enumerate() {
            for c in 0..3 {
                let (a, b) = (f[c], f[(c + 1) % 3]);
                let key = (a.min(b), a.max(b));
                incidence.entry(key).or_default().push((fi, a < b));
            }
        }
        let mut keyed: Vec<_> = incidence.into_iter().collect();
        keyed.sort_unstable_by_key(|(k, _)| *k);

        let mut edges = Vec::with_capacity(keyed.len());
        let mut edge_faces = Vec::with_capacity(keyed.len());
        for ((a, b), inc) in keyed {
            match inc.len() {
                1 => return Err(MeshError::OpenBoundary(a, b)),
                2 => {
                    if inc[0].1 == inc[1].1 {
                        return Err(MeshError::InconsistentOrientation(a, b));
                    }
                    edges.push([a, b]);
                    edge_faces.push([inc[0].0, inc[1].0]);
                }
                n => return Err(MeshError::NonManifoldEdge(a, b, n)),
            }
        }

        let mut vf_counts = vec![0usize; vertex_count + 1];
        for f in &faces {
            for &v in f {
                vf_counts[v + 1] += 1;
            }
        }
        if let Some(v) = (0..vertex_count).find(|&v| vf_counts[v + 1] == 0) {
            return Err(MeshError::UnreferencedVertex(v));
        }
        let mut vf_offsets = vf_counts;
        for i in 0..vertex_count {
            vf_offsets[i + 1] += vf_offsets[i];
        }
        let mut cursor = vf_offsets.clone();
        let mut vf_faces = vec![0usize; vf_offsets[vertex_count]];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vf_faces[cursor[v]] = fi;
                cursor[v] += 1;
            }
        }

        // One-ring in cyclic (counter-clockwise) order; also detects bowties.
        let mut ring_offsets = Vec::with_capacity(vertex_count + 1);
        let mut ring = Vec::with_capacity(vf_faces.len());
        ring_offsets.push(0);
        let mut next: HashMap<usize, usize> = HashMap::new();
        for v in 0..vertex_count {
            next.clear();
            for &fi in &vf_faces[vf_offsets[v]..vf_offsets[v + 1]] {
                let f = faces[fi];
                let c = f.iter().position(|&x| x == v).unwrap();
                next.insert(f[(c + 1) % 3], f[(c + 2) % 3]);
            }
            let degree = vf_offsets[v + 1] - vf_offsets[v];
            let start = *next.keys().min().unwrap();
            if next.len() != degree {
                return Err(MeshError::NonManifoldVertex(v));
            }
            let mut cur = start;
            for step in 0..degree {
                if step > 0 && cur == start {
                    // Closed a fan before visiting every incident face.
                    return Err(MeshError::NonManifoldVertex(v));
                }
                ring.push(cur);
                cur = match next.get(&cur) {
                    Some(&n) => n,
                    None => return Err(MeshError::NonManifoldVertex(v)),
                };
            }
            if cur != start {
                return Err(MeshError::NonManifoldVertex(v));
            }
            ring_offsets.push(ring.len());
        }

        // Connected components over faces (union-find via edges).
        let mut parent: Vec<usize> = (0..faces.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for ef in &edge_faces {
            let (ra, rb) = (find(&mut parent, ef[0]), find(&mut parent, ef[1]));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut label = HashMap::new();
        let mut component_of_face = Vec::with_capacity(faces.len());
        for fi in 0..faces.len() {
            let r = find(&mut parent, fi);
            let n = label.len();
            component_of_face.push(*label.entry(r).or_insert(n));
        }
        let component_count = label.len();

        Ok(Self {
            vertex_count,
            faces,
            edges,
            edge_faces,
            vf_offsets,
            vf_faces,
            ring_offsets,
            ring,
            component_of_face,
            component_count,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_faces(&self) -> &[[usize; 2]] {
        &self.edge_faces
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vf_faces[self.vf_offsets[v]..self.vf_offsets[v + 1]]
    }

    /// Neighbours of `v` in cyclic order around the outward normal.
    pub fn one_ring(&self, v: usize) -> &[usize] {
        &self.ring[self.ring_offsets[v]..self.ring_offsets[v + 1]]
    }

    pub fn valence(&self, v: usize) -> usize {
        self.ring_offsets[v + 1] - self.ring_offsets[v]
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    pub fn component_of_face(&self, f: usize) -> usize {
        self.component_of_face[f]
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }
}

/// Closed oriented triangle mesh with validated geometry.
#[derive(Debug, Clone)]
pub struct TriangleSurface {
    positions: Vec<Vec3>,
    topology: Arc<Topology>,
}

impl TriangleSurface {
    /// Builds and validates a surface. The orientation is kept as given; see
    /// [`TriangleSurface::oriented_outward`] for repair.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let topology = Arc::new(Topology::build(positions.len(), faces)?);
        let s = Self {
            positions,
            topology,
        };
        s.validate_geometry()?;
        s.check_duplicates()?;
        Ok(s)
    }

    /// Same connectivity, new positions. Geometry is validated, combinatorics
    /// are reused.
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<Self, MeshError> {
        assert_eq!(positions.len(), self.positions.len());
        let s = Self {
            positions,
            topology: Arc::clone(&self.topology),
        };
        s.validate_geometry()?;
        Ok(s)
    }

    #[cfg(test)]
    pub(crate) fn with_positions_unchecked(&self, positions: Vec<Vec3>) -> Self {
        Self {
            positions,
            topology: Arc::clone(&self.topology),
        }
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn position(&self, v: usize) -> Vec3 {
        self.positions[v]
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        self.topology.faces()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn shares_topology(&self, other: &TriangleSurface) -> bool {
        Arc::ptr_eq(&self.topology, &other.topology)
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.topology.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.topology.edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.topology.euler_characteristic()
    }

    /// Genus of a connected surface, `None` for disconnected ones.
    pub fn genus(&self) -> Option<i64> {
        (self.topology.component_count == 1).then(|| (2 - self.euler_characteristic()) / 2)
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.topology.faces[f];
        let (p, q, r) = (self.positions[a], self.positions[b], self.positions[c]);
        0.5 * (q - p).cross(&(r - p)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.face_count()).map(|f| self.face_area(f)).sum()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.topology.edges[e];
        (self.positions[a] - self.positions[b]).norm()
    }

    pub fn mean_edge_length(&self) -> f64 {
        (0..self.edge_count()).map(|e| self.edge_length(e)).sum::<f64>() / self.edge_count() as f64
    }

    /// Shortest edge; errors when it falls below the degeneracy tolerance.
    pub fn min_edge_length(&self) -> Result<f64, MeshError> {
        let mean = self.mean_edge_length();
        let (e, len) = (0..self.edge_count())
            .map(|e| (e, self.edge_length(e)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("closed meshes have edges");
        if !(len > DEGENERATE_EDGE_RATIO * mean) {
            let [a, b] = self.topology.edges[e];
            return Err(MeshError::DegenerateEdge(a, b));
        }
        Ok(len)
    }

    pub fn centroid(&self) -> Vec3 {
        self.positions.iter().sum::<Vec3>() / self.vertex_count() as f64
    }

    /// Reverses the orientation of every face.
    pub fn flipped(&self) -> Self {
        let faces = self.faces().iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self::new(self.positions.clone(), faces).expect("flipping preserves validity")
    }

    /// Flips each connected component whose enclosed signed volume is
    /// negative so that face normals point outward.
    pub fn oriented_outward(self) -> Self {
        let topo = &self.topology;
        let mut vol = vec![0.0; topo.component_count];
        for (fi, &[a, b, c]) in topo.faces.iter().enumerate() {
            let (p, q, r) = (self.positions[a], self.positions[b], self.positions[c]);
            vol[topo.component_of_face[fi]] += p.dot(&q.cross(&r));
        }
        if vol.iter().all(|&v| v >= 0.0) {
            return self;
        }
        let faces = topo
            .faces
            .iter()
            .enumerate()
            .map(|(fi, &[a, b, c])| {
                if vol[topo.component_of_face[fi]] < 0.0 {
                    [a, c, b]
                } else {
                    [a, b, c]
                }
            })
            .collect();
        Self::new(self.positions, faces).expect("component flips preserve validity")
    }

    /// Splits every face 4-to-1 at edge midpoints (no projection).
    pub fn subdivided(&self) -> Self {
        let (positions, faces) = midpoint_subdivision(&self.positions, self.faces());
        Self::new(positions, faces).expect("midpoint subdivision preserves validity")
    }

    /// Applies `x -> scale * rotation * x + translation` to every vertex.
    pub fn transformed(&self, rotation: &nalgebra::Matrix3<f64>, scale: f64, translation: Vec3) -> Self {
        let positions = self
            .positions
            .iter()
            .map(|p| scale * (rotation * p) + translation)
            .collect();
        self.with_positions(positions).expect("similarity keeps validity")
    }

    /// Disjoint union; indices of `other` are shifted.
    pub fn disjoint_union(&self, other: &TriangleSurface) -> Result<Self, MeshError> {
        let n = self.vertex_count();
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let mut faces = self.faces().to_vec();
        faces.extend(other.faces().iter().map(|&[a, b, c]| [a + n, b + n, c + n]));
        Self::new(positions, faces)
    }

    fn validate_geometry(&self) -> Result<(), MeshError> {
        if let Some(i) = self
            .positions
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(MeshError::NonFinite(i));
        }
        let areas: Vec<f64> = (0..self.face_count()).map(|f| self.face_area(f)).collect();
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        for (face, &area) in areas.iter().enumerate() {
            if !(area > DEGENERATE_AREA_RATIO * mean) {
                return Err(MeshError::DegenerateFace { face, area });
            }
        }
        Ok(())
    }

    fn check_duplicates(&self) -> Result<(), MeshError> {
        let scale = self
            .positions
            .iter()
            .fold(0.0f64, |m, p| m.max(p.amax()))
            .max(f64::MIN_POSITIVE);
        let tol = 1e-12 * scale;
        let mut order: Vec<usize> = (0..self.vertex_count()).collect();
        order.sort_unstable_by(|&a, &b| self.positions[a].x.total_cmp(&self.positions[b].x));
        for (k, &i) in order.iter().enumerate() {
            for &j in &order[k + 1..] {
                if self.positions[j].x - self.positions[i].x > tol {
                    break;
                }
                if (self.positions[j] - self.positions[i]).amax() <= tol {
                    return Err(MeshError::DuplicateVertex(i.min(j), i.max(j)));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn midpoint_subdivision(
    positions: &[Vec3],
    faces: &[[usize; 3]],
) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut positions = positions.to_vec();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3 / 2);
    let mut mid = |a: usize, b: usize, positions: &mut Vec<Vec3>| -> usize {
        *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
            positions.push(0.5 * (positions[a] + positions[b]));
            positions.len() - 1
        })
    };
    let mut out = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = mid(a, b, &mut positions);
        let bc = mid(b, c, &mut positions);
        let ca = mid(c, a, &mut positions);
        out.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
    }
    (positions, out)
}

/// Regular icosahedron with the given circumradius, outward oriented.
pub fn icosahedron(radius: f64) -> TriangleSurface {
    let (positions, faces) = icosahedron_data(radius);
    TriangleSurface::new(positions, faces).expect("icosahedron is valid")
}

pub(crate) fn icosahedron_data(radius: f64) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let positions = raw
        .iter()
        .map(|p| Vec3::new(p[0], p[1], p[2]).normalize() * radius)
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (positions, faces)
}

/// Parses the `v x y z` / `f i j k` subset of Wavefront OBJ and returns a
/// validated, outward-oriented surface.
pub fn load_surface(text: &str) -> Result<TriangleSurface, MeshError> {
    let (positions, faces) = parse_obj(text)?;
    Ok(TriangleSurface::new(positions, faces)?.oriented_outward())
}

pub fn parse_obj(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>), MeshError> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut it = content.split_whitespace();
        let tag = it.next().unwrap();
        let err = |msg: String| MeshError::Parse { line, msg };
        match tag {
            "v" => {
                let coords: Vec<f64> = it
                    .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_, _>>()?;
                // A fourth (w) component is tolerated and ignored.
                if coords.len() != 3 && coords.len() != 4 {
                    return Err(err(format!("vertex needs 3 coordinates, got {}", coords.len())));
                }
                positions.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let idx: Vec<usize> = it
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        match head.parse::<i64>() {
                            Ok(i) if i >= 1 => Ok(i as usize - 1),
                            Ok(i) => Err(err(format!("unsupported face index {i}"))),
                            Err(e) => Err(err(format!("bad face index {t:?}: {e}"))),
                        }
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(err(format!("only triangles are supported, got {} indices", idx.len())));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            "vn" | "vt" | "o" | "g" | "s" | "usemtl" | "mtllib" => {}
            other => return Err(err(format!("unsupported record {other:?}"))),
        }
    }
    Ok((positions, faces))
}

/// Writes the same OBJ subset that [`load_surface`] reads. Coordinates use
/// shortest round-trip formatting so reloading reproduces them exactly.
pub fn write_obj(surface: &TriangleSurface) -> String {
    let mut out = String::with_capacity(surface.vertex_count() * 48 + surface.face_count() * 24);
    for p in surface.positions() {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for &[a, b, c] in surface.faces() {
        let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn icosahedron_counts_and_euler() {
        let s = icosahedron(1.0);
        assert_eq!(s.vertex_count(), 12);
        assert_eq!(s.face_count(), 20);
        assert_eq!(s.edge_count(), 30);
        assert_eq!(s.euler_characteristic(), 2);
        assert_eq!(s.genus(), Some(0));
    }

    #[test]
    fn icosahedron_edge_length_closed_form() {
        let s = icosahedron(1.0);
        let expected = 4.0 / (10.0 + 2.0 * 5f64.sqrt()).sqrt();
        assert!((s.min_edge_length().unwrap() - expected).abs() < 1e-12);
        assert!((expected - 1.0515).abs() < 1e-4);
        for e in 0..s.edge_count() {
            assert!((s.edge_length(e) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn directed_edges_appear_once() {
        let s = icosahedron(1.0).subdivided();
        let mut seen = HashSet::new();
        for &[a, b, c] in s.faces() {
            for (x, y) in [(a, b), (b, c), (c, a)] {
                assert!(seen.insert((x, y)));
            }
        }
        for &(x, y) in &seen {
            assert!(seen.contains(&(y, x)));
        }
    }

    #[test]
    fn removing_a_face_opens_boundary() {
        let s = icosahedron(1.0);
        let mut faces = s.faces().to_vec();
        faces.pop();
        let obj_text = {
            let mut t = String::new();
            for p in s.positions() {
                t += &format!("v {} {} {}\n", p.x, p.y, p.z);
            }
            for f in &faces {
                t += &format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1);
            }
            t
        };
        let err = load_surface(&obj_text).unwrap_err();
        assert!(matches!(err, MeshError::OpenBoundary(..)), "{err}");
        assert!(err.to_string().contains("open boundary"));
    }

    #[test]
    fn inconsistent_orientation_rejected() {
        let s = icosahedron(1.0);
        let mut faces = s.faces().to_vec();
        let [a, b, c] = faces[3];
        faces[3] = [a, c, b];
        let err = TriangleSurface::new(s.positions().to_vec(), faces).unwrap_err();
        assert!(matches!(err, MeshError::InconsistentOrientation(..)));
    }

    #[test]
    fn inward_mesh_is_flipped_on_load() {
        let s = icosahedron(1.0).flipped();
        let loaded = load_surface(&write_obj(&s)).unwrap();
        let f = loaded.faces()[0];
        let (p, q, r) = (loaded.position(f[0]), loaded.position(f[1]), loaded.position(f[2]));
        assert!((q - p).cross(&(r - p)).dot(&(p + q + r)) > 0.0);
    }

    #[test]
    fn non_manifold_edge_rejected() {
        // Three triangles fanned around one edge.
        let positions = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let faces = vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]];
        let err = TriangleSurface::new(positions, faces).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge(0, 1, 3)));
    }

    #[test]
    fn bowtie_vertex_rejected() {
        // Two tetrahedra sharing a single vertex.
        let tet = |o: Vec3| vec![o, o + Vec3::x(), o + Vec3::y(), o + Vec3::z()];
        let mut positions = tet(Vec3::zeros());
        positions.extend(tet(Vec3::zeros()).into_iter().skip(1).map(|p| -p));
        let faces = vec![
            [0, 2, 1],
            [0, 1, 3],
            [0, 3, 2],
            [1, 2, 3],
            [0, 4, 5],
            [0, 6, 4],
            [0, 5, 6],
            [4, 6, 5],
        ];
        let err = TriangleSurface::new(positions, faces).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldVertex(0)), "{err}");
    }

    #[test]
    fn collapsed_geometry_rejected() {
        let s = icosahedron(1.0);
        let mut p = s.positions().to_vec();
        let [a, b, _] = s.faces()[0];
        p[b] = p[a] + Vec3::new(1e-14, 0.0, 0.0);
        let err = s.with_positions(p).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateFace { .. }));
    }

    #[test]
    fn collapsed_edge_rejected_by_min_edge() {
        let s = icosahedron(1.0);
        let mut p = s.positions().to_vec();
        let [a, b, _] = s.faces()[0];
        p[b] = p[a] + (p[b] - p[a]) * 1e-11;
        let s2 = s.with_positions_unchecked(p);
        assert!(matches!(s2.min_edge_length(), Err(MeshError::DegenerateEdge(..))));
    }

    #[test]
    fn duplicate_vertices_rejected() {
        let s = icosahedron(1.0);
        let err = s.disjoint_union(&s).unwrap_err();
        assert!(matches!(err, MeshError::DuplicateVertex(i, j) if j == i + 12), "{err}");
    }

    #[test]
    fn disjoint_union_euler() {
        let a = icosahedron(1.0);
        let b = a.transformed(&nalgebra::Matrix3::identity(), 1.0, Vec3::new(5.0, 0.0, 0.0));
        let u = a.disjoint_union(&b).unwrap();
        assert_eq!(u.euler_characteristic(), 4);
        assert_eq!(u.topology().component_count(), 2);
        assert_eq!(u.genus(), None);
    }

    #[test]
    fn subdivision_preserves_euler() {
        let mut s = icosahedron(1.0);
        for _ in 0..3 {
            let t = s.subdivided();
            assert_eq!(t.euler_characteristic(), s.euler_characteristic());
            assert_eq!(t.face_count(), 4 * s.face_count());
            s = t;
        }
    }

    #[test]
    fn one_ring_is_cyclic() {
        let s = icosahedron(1.0).subdivided();
        for v in 0..s.vertex_count() {
            let ring = s.topology().one_ring(v);
            assert_eq!(ring.len(), s.topology().vertex_faces(v).len());
            let n = s.position(v);
            // Consecutive neighbours wind counter-clockwise around the outward normal.
            for k in 0..ring.len() {
                let a = s.position(ring[k]) - n;
                let b = s.position(ring[(k + 1) % ring.len()]) - n;
                assert!(a.cross(&b).dot(&n) > 0.0);
            }
        }
    }

    #[test]
    fn obj_parse_errors() {
        assert!(matches!(parse_obj("v 1 2\n"), Err(MeshError::Parse { line: 1, .. })));
        assert!(matches!(parse_obj("v 0 0 0\nf 1 2 3 4\n"), Err(MeshError::Parse { line: 2, .. })));
        assert!(matches!(parse_obj("f 0 1 2\n"), Err(MeshError::Parse { .. })));
        assert!(matches!(parse_obj("l 1 2\n"), Err(MeshError::Parse { .. })));
        let (p, f) = parse_obj("# comment\nv 0 0 0 # trailing\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn field_validation() {
        let s = icosahedron(1.0);
        assert!(ScalarField::new(&s, vec![0.0; 11]).is_err());
        let mut v = vec![0.0; 12];
        v[4] = f64::NAN;
        assert_eq!(ScalarField::new(&s, v), Err(MeshError::FieldNonFinite(4)));
        let f = VectorField::new(&s, vec![Vec3::zeros(); 12]).unwrap();
        assert_eq!(f.kind(), FieldKind::Vector);
    }
}
