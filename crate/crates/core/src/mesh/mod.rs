//! Interval partitions and triangulations with face connectivity.
//!
//! Periodic boundaries are stored as ordinary interior faces whose two cells
//! sit on opposite sides of the domain; vertices identified across a periodic
//! boundary share a vertex class, which is what viscosity smoothing uses.

mod io;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use io::{load_mesh, parse_mesh, write_mesh};

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("invalid mesh parameters: {0}")]
    InvalidInput(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cell {cell}: repeated vertex index")]
    DuplicateVertex { cell: usize },
    #[error("cell {cell}: non-positive measure (inverted or degenerate)")]
    Inverted { cell: usize },
    #[error("cell {cell}: vertex index {vertex} out of range")]
    VertexOutOfRange { cell: usize, vertex: usize },
    #[error("face {0:?} shared by more than two cells")]
    NonManifold(Vec<usize>),
    #[error("boundary entry {0:?} is not a boundary face")]
    DanglingFace(Vec<usize>),
    #[error("periodic group {group}: {msg}")]
    Periodic { group: u32, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Boundary condition tag attached to a boundary face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
    Periodic(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    /// Interior face joining cells across a periodic boundary.
    Periodic,
    Dirichlet,
    Neumann,
    /// Boundary face without a tag; assembly refuses these.
    Untagged,
}

impl FaceKind {
    pub fn is_boundary(self) -> bool {
        matches!(self, Self::Dirichlet | Self::Neumann | Self::Untagged)
    }
}

#[derive(Debug, Clone)]
pub struct Face {
    pub minus: usize,
    pub plus: Option<usize>,
    pub local_minus: usize,
    pub local_plus: usize,
    /// Unit normal pointing out of `minus`.
    pub normal: [f64; 2],
    pub measure: f64,
    /// Length scale used by the interior penalty.
    pub penalty_length: f64,
    pub kind: FaceKind,
    /// Quadrature points on the plus side run in reverse order.
    pub reversed: bool,
    /// Vertices of the face as seen from the minus cell.
    pub vertices: [usize; 2],
}

/// Affine map data of a cell.
#[derive(Debug, Clone, Copy)]
pub struct CellGeom {
    /// Jacobian determinant of the reference-to-physical map.
    pub det: f64,
    /// `inv[d][a]` = d(reference coordinate a)/d(physical coordinate d).
    pub inv: [[f64; 2]; 2],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Vertex indices per cell; intervals use the first two slots.
    pub cells: Vec<[usize; 3]>,
    pub faces: Vec<Face>,
    pub cell_faces: Vec<[usize; 3]>,
    pub cell_measure: Vec<f64>,
    pub cell_h: Vec<f64>,
    pub geom: Vec<CellGeom>,
    pub h: f64,
    pub vertex_class: Vec<usize>,
    /// Cells adjacent to each vertex class.
    pub class_cells: Vec<Vec<usize>>,
    pub bbox: [[f64; 2]; 2],
    tags: HashMap<Vec<usize>, BoundaryTag>,
    locator: Locator,
}

#[derive(Debug, Clone, Default)]
struct Locator {
    n: usize,
    buckets: Vec<Vec<usize>>,
}

fn key(vs: &[usize]) -> Vec<usize> {
    let mut k = vs.to_vec();
    k.sort_unstable();
    k
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl Mesh {
    /// Face indices of cell `c` in local face order.
    pub fn faces_of(&self, c: usize) -> &[usize] {
        &self.cell_faces[c][..self.dim + 1]
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Number of vertices of each cell.
    pub fn verts_per_cell(&self) -> usize {
        self.dim + 1
    }

    pub fn cell_vertices(&self, c: usize) -> &[usize] {
        &self.cells[c][..self.dim + 1]
    }

    pub fn is_periodic(&self) -> bool {
        self.faces.iter().any(|f| f.kind == FaceKind::Periodic)
    }

    pub fn boundary_tags(&self) -> impl Iterator<Item = (&Vec<usize>, &BoundaryTag)> {
        self.tags.iter()
    }

    pub fn domain_measure(&self) -> f64 {
        self.cell_measure.iter().sum()
    }

    pub fn centroid(&self, c: usize) -> [f64; 2] {
        let vs = self.cell_vertices(c);
        let n = vs.len() as f64;
        let mut p = [0.0; 2];
        for &v in vs {
            p[0] += self.vertices[v][0] / n;
            p[1] += self.vertices[v][1] / n;
        }
        p
    }

    /// Physical location of reference point `r` in cell `c`.
    pub fn map_point(&self, c: usize, r: [f64; 2]) -> [f64; 2] {
        let v = self.cell_vertices(c);
        let x0 = self.vertices[v[0]];
        let x1 = self.vertices[v[1]];
        if self.dim == 1 {
            return [x0[0] + 0.5 * (1.0 + r[0]) * (x1[0] - x0[0]), 0.0];
        }
        let x2 = self.vertices[v[2]];
        let (a, b) = (0.5 * (1.0 + r[0]), 0.5 * (1.0 + r[1]));
        [
            x0[0] + a * (x1[0] - x0[0]) + b * (x2[0] - x0[0]),
            x0[1] + a * (x1[1] - x0[1]) + b * (x2[1] - x0[1]),
        ]
    }

    /// Reference coordinates of physical point `p` with respect to cell `c`.
    pub fn inverse_map(&self, c: usize, p: [f64; 2]) -> [f64; 2] {
        let x0 = self.vertices[self.cells[c][0]];
        let g = &self.geom[c];
        let d = [p[0] - x0[0], p[1] - x0[1]];
        if self.dim == 1 {
            return [-1.0 + g.inv[0][0] * d[0], 0.0];
        }
        [
            -1.0 + g.inv[0][0] * d[0] + g.inv[1][0] * d[1],
            -1.0 + g.inv[0][1] * d[0] + g.inv[1][1] * d[1],
        ]
    }

    /// Smallest barycentric coordinate of reference point `r`; negative outside.
    fn inside_margin(&self, r: [f64; 2]) -> f64 {
        if self.dim == 1 {
            (1.0 + r[0]).min(1.0 - r[0])
        } else {
            (1.0 + r[0]).min(1.0 + r[1]).min(-(r[0] + r[1]))
        }
    }

    /// Cell containing `p` and the reference coordinates of `p` in it.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 2])> {
        let b = self.bucket_of(p)?;
        let mut best: Option<(usize, [f64; 2], f64)> = None;
        for &c in &self.locator.buckets[b] {
            let r = self.inverse_map(c, p);
            let m = self.inside_margin(r);
            if best.map_or(true, |(_, _, bm)| m > bm) {
                best = Some((c, r, m));
            }
        }
        best.filter(|b| b.2 > -1e-9).map(|(c, r, _)| (c, r))
    }

    fn bucket_of(&self, p: [f64; 2]) -> Option<usize> {
        let n = self.locator.n;
        let [lo, hi] = self.bbox;
        let idx = |d: usize| {
            let w = (hi[d] - lo[d]).max(f64::MIN_POSITIVE);
            let t = (p[d] - lo[d]) / w;
            if !(-1e-9..=1.0 + 1e-9).contains(&t) {
                return None;
            }
            Some(((t * n as f64) as usize).min(n - 1))
        };
        let i = idx(0)?;
        let j = if self.dim == 1 { 0 } else { idx(1)? };
        Some(j * n + i)
    }

    fn build_locator(&mut self) {
        let n = if self.dim == 1 {
            self.n_cells().max(1)
        } else {
            ((self.n_cells() as f64).sqrt().ceil() as usize).max(1)
        };
        let rows = if self.dim == 1 { 1 } else { n };
        let mut buckets = vec![Vec::new(); n * rows];
        let [lo, hi] = self.bbox;
        let to_idx = |x: f64, d: usize| {
            let w = (hi[d] - lo[d]).max(f64::MIN_POSITIVE);
            (((x - lo[d]) / w * n as f64).floor().max(0.0) as usize).min(n - 1)
        };
        for c in 0..self.n_cells() {
            let vs = self.cell_vertices(c);
            let (mut a, mut b) = ([f64::MAX; 2], [f64::MIN; 2]);
            for &v in vs {
                for d in 0..2 {
                    a[d] = a[d].min(self.vertices[v][d]);
                    b[d] = b[d].max(self.vertices[v][d]);
                }
            }
            let (i0, i1) = (to_idx(a[0] - 1e-12, 0), to_idx(b[0] + 1e-12, 0));
            let (j0, j1) = if self.dim == 1 {
                (0, 0)
            } else {
                (to_idx(a[1] - 1e-12, 1), to_idx(b[1] + 1e-12, 1))
            };
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * n + i].push(c);
                }
            }
        }
        self.locator = Locator { n, buckets };
    }

    /// Assemble connectivity from raw vertices, cells and boundary tags.
    pub fn from_parts(
        dim: usize,
        vertices: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        tags: HashMap<Vec<usize>, BoundaryTag>,
    ) -> Result<Self, MeshError> {
        if dim != 1 && dim != 2 {
            return Err(MeshError::InvalidInput(format!("dimension {dim}")));
        }
        let nv = dim + 1;
        let mut geom = Vec::with_capacity(cells.len());
        let mut cell_measure = Vec::with_capacity(cells.len());
        let mut cell_h = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let vs = &cell[..nv];
            for &v in vs {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange { cell: c, vertex: v });
                }
            }
            if key(vs).windows(2).any(|w| w[0] == w[1]) {
                return Err(MeshError::DuplicateVertex { cell: c });
            }
            let (x0, x1) = (vertices[vs[0]], vertices[vs[1]]);
            if dim == 1 {
                let len = x1[0] - x0[0];
                if len <= 0.0 {
                    return Err(MeshError::Inverted { cell: c });
                }
                geom.push(CellGeom {
                    det: len / 2.0,
                    inv: [[2.0 / len, 0.0], [0.0, 0.0]],
                });
                cell_measure.push(len);
                cell_h.push(len);
            } else {
                let x2 = vertices[vs[2]];
                let (xr, yr) = (0.5 * (x1[0] - x0[0]), 0.5 * (x1[1] - x0[1]));
                let (xs, ys) = (0.5 * (x2[0] - x0[0]), 0.5 * (x2[1] - x0[1]));
                let det = xr * ys - xs * yr;
                if det <= 0.0 {
                    return Err(MeshError::Inverted { cell: c });
                }
                geom.push(CellGeom {
                    det,
                    inv: [[ys / det, -yr / det], [-xs / det, xr / det]],
                });
                cell_measure.push(2.0 * det);
                cell_h.push(dist(x0, x1).max(dist(x1, x2)).max(dist(x2, x0)));
            }
        }

        // Collect cell faces keyed by sorted vertex list.
        let nf_per = if dim == 1 { 2 } else { 3 };
        let mut by_key: HashMap<Vec<usize>, Vec<(usize, usize)>> = HashMap::new();
        let mut order: Vec<Vec<usize>> = Vec::new();
        for (c, cell) in cells.iter().enumerate() {
            for e in 0..nf_per {
                let k = key(&local_face(dim, cell, e));
                let entry = by_key.entry(k.clone()).or_default();
                if entry.is_empty() {
                    order.push(k);
                }
                entry.push((c, e));
                if entry.len() > 2 {
                    return Err(MeshError::NonManifold(local_face(dim, cell, e)));
                }
            }
        }
        for k in tags.keys() {
            match by_key.get(k) {
                Some(v) if v.len() == 1 => {}
                _ => return Err(MeshError::DanglingFace(k.clone())),
            }
        }

        let mut mesh = Mesh {
            dim,
            vertices,
            cells,
            faces: Vec::new(),
            cell_faces: Vec::new(),
            cell_measure,
            cell_h,
            geom,
            h: 0.0,
            vertex_class: Vec::new(),
            class_cells: Vec::new(),
            bbox: [[0.0; 2]; 2],
            tags: tags.clone(),
            locator: Locator::default(),
        };
        mesh.h = mesh.cell_h.iter().cloned().fold(0.0, f64::max);
        let mut lo = [f64::MAX; 2];
        let mut hi = [f64::MIN; 2];
        for v in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        mesh.bbox = [lo, hi];

        let mut uf = UnionFind((0..mesh.vertices.len()).collect());
        let mut periodic_groups: HashMap<u32, Vec<(usize, usize)>> = HashMap::new();
        let mut faces = Vec::new();
        for k in &order {
            let sides = &by_key[k];
            let (c, e) = sides[0];
            if sides.len() == 2 {
                let (cp, ep) = sides[1];
                faces.push(mesh.make_face(c, e, Some((cp, ep)), FaceKind::Interior));
                continue;
            }
            match tags.get(k) {
                Some(BoundaryTag::Periodic(g)) => periodic_groups.entry(*g).or_default().push((c, e)),
                Some(BoundaryTag::Dirichlet) => faces.push(mesh.make_face(c, e, None, FaceKind::Dirichlet)),
                Some(BoundaryTag::Neumann) => faces.push(mesh.make_face(c, e, None, FaceKind::Neumann)),
                None => faces.push(mesh.make_face(c, e, None, FaceKind::Untagged)),
            }
        }

        let mut groups: Vec<_> = periodic_groups.into_iter().collect();
        groups.sort_by_key(|g| g.0);
        for (g, members) in groups {
            for (a, b) in mesh.pair_periodic(g, &members)? {
                let (fa, fb) = (local_face(dim, &mesh.cells[a.0], a.1), local_face(dim, &mesh.cells[b.0], b.1));
                let face = mesh.make_face(a.0, a.1, Some(b), FaceKind::Periodic);
                // identify vertices whose translated positions match
                if dim == 2 {
                    let off = translation(&mesh.vertices, &fa, &fb);
                    for &va in &fa {
                        for &vb in &fb {
                            if dist(add(mesh.vertices[va], off), mesh.vertices[vb]) < 1e-9 * (1.0 + mesh.h) {
                                uf.union(va, vb);
                            }
                        }
                    }
                } else {
                    uf.union(fa[0], fb[0]);
                }
                faces.push(face);
            }
        }
        if dim == 1 {
            faces.sort_by(|a, b| {
                let xa = mesh.vertices[a.vertices[0]][0];
                let xb = mesh.vertices[b.vertices[0]][0];
                xa.total_cmp(&xb)
            });
        }

        let mut cell_faces = vec![[usize::MAX; 3]; mesh.cells.len()];
        for (i, f) in faces.iter().enumerate() {
            cell_faces[f.minus][f.local_minus] = i;
            if let Some(p) = f.plus {
                cell_faces[p][f.local_plus] = i;
            }
        }
        mesh.faces = faces;
        mesh.cell_faces = cell_faces;

        // Penalty length: 1D uses the mean adjacent cell size.
        if dim == 1 {
            for f in &mut mesh.faces {
                f.penalty_length = match f.plus {
                    Some(p) => 0.5 * (mesh.cell_h[f.minus] + mesh.cell_h[p]),
                    None => mesh.cell_h[f.minus],
                };
            }
        }

        let mut class_of = vec![usize::MAX; mesh.vertices.len()];
        let mut n_classes = 0;
        for v in 0..mesh.vertices.len() {
            let r = uf.find(v);
            if class_of[r] == usize::MAX {
                class_of[r] = n_classes;
                n_classes += 1;
            }
            class_of[v] = class_of[r];
        }
        mesh.vertex_class = class_of;
        let mut class_cells = vec![Vec::new(); n_classes];
        for c in 0..mesh.cells.len() {
            for &v in mesh.cell_vertices(c) {
                let cl = mesh.vertex_class[v];
                if !class_cells[cl].contains(&c) {
                    class_cells[cl].push(c);
                }
            }
        }
        mesh.class_cells = class_cells;
        mesh.build_locator();
        Ok(mesh)
    }

    fn make_face(&self, c: usize, e: usize, plus: Option<(usize, usize)>, kind: FaceKind) -> Face {
        let fv = local_face(self.dim, &self.cells[c], e);
        let (normal, measure, vertices) = if self.dim == 1 {
            let n = if e == 0 { -1.0 } else { 1.0 };
            ([n, 0.0], 1.0, [fv[0], fv[0]])
        } else {
            let (a, b) = (self.vertices[fv[0]], self.vertices[fv[1]]);
            let l = dist(a, b);
            ([(b[1] - a[1]) / l, -(b[0] - a[0]) / l], l, [fv[0], fv[1]])
        };
        let (p, lp, reversed) = match plus {
            None => (None, 0, false),
            Some((cp, ep)) => {
                let reversed = if self.dim == 2 {
                    let pv = local_face(self.dim, &self.cells[cp], ep);
                    // plus edge runs b -> a (possibly translated) when reversed
                    let off = translation(&self.vertices, &fv, &pv);
                    dist(add(self.vertices[fv[1]], off), self.vertices[pv[0]]) < 1e-9 * (1.0 + self.h)
                } else {
                    false
                };
                (Some(cp), ep, reversed)
            }
        };
        Face {
            minus: c,
            plus: p,
            local_minus: e,
            local_plus: lp,
            normal,
            measure,
            penalty_length: measure,
            kind,
            reversed,
            vertices,
        }
    }

    /// Pair the faces of a periodic group by a common translation.
    fn pair_periodic(
        &self,
        group: u32,
        members: &[(usize, usize)],
    ) -> Result<Vec<((usize, usize), (usize, usize))>, MeshError> {
        let err = |msg: &str| MeshError::Periodic {
            group,
            msg: msg.to_string(),
        };
        if members.len() % 2 != 0 || members.is_empty() {
            return Err(err("odd number of faces"));
        }
        let mid = |&(c, e): &(usize, usize)| {
            let fv = local_face(self.dim, &self.cells[c], e);
            let n = fv.len() as f64;
            let mut p = [0.0; 2];
            for v in fv {
                p[0] += self.vertices[v][0] / n;
                p[1] += self.vertices[v][1] / n;
            }
            p
        };
        let normal = |m: &(usize, usize)| self.make_face(m.0, m.1, None, FaceKind::Untagged).normal;
        let mids: Vec<[f64; 2]> = members.iter().map(mid).collect();
        let tol = 1e-9 * (1.0 + self.h);
        for j in 1..members.len() {
            let off = sub(mids[j], mids[0]);
            let n0 = normal(&members[0]);
            // the translation must carry a face across the domain, not along the boundary
            if (off[0] * n0[0] + off[1] * n0[1]).abs() < tol {
                continue;
            }
            let mut partner = vec![usize::MAX; members.len()];
            let mut ok = true;
            for i in 0..members.len() {
                if partner[i] != usize::MAX {
                    continue;
                }
                let target = add(mids[i], off);
                let found = (0..members.len()).find(|&q| q != i && partner[q] == usize::MAX && dist(mids[q], target) < tol);
                match found {
                    Some(q) => {
                        partner[i] = q;
                        partner[q] = i;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let mut pairs = Vec::new();
            for i in 0..members.len() {
                let q = partner[i];
                if i < q {
                    // minus side: outward normal along the translation
                    let n = normal(&members[i]);
                    let (a, b) = if n[0] * off[0] + n[1] * off[1] > 0.0 {
                        (members[i], members[q])
                    } else {
                        (members[q], members[i])
                    };
                    pairs.push((a, b));
                }
            }
            pairs.sort();
            return Ok(pairs);
        }
        Err(err("faces cannot be paired by a single translation"))
    }

    /// Replace the tag of every non-periodic boundary face by `f(midpoint, normal)`.
    pub fn retag(self, f: impl Fn([f64; 2], [f64; 2]) -> BoundaryTag) -> Result<Self, MeshError> {
        let mut tags = self.tags.clone();
        for face in self.faces.iter().filter(|f| f.kind.is_boundary()) {
            let fv = local_face(self.dim, &self.cells[face.minus], face.local_minus);
            let m = self.face_midpoint(face);
            tags.insert(key(&fv), f(m, face.normal));
        }
        Mesh::from_parts(self.dim, self.vertices, self.cells, tags)
    }

    pub fn face_midpoint(&self, f: &Face) -> [f64; 2] {
        let a = self.vertices[f.vertices[0]];
        let b = self.vertices[f.vertices[1]];
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Uniform refinement: intervals are bisected, triangles split into four.
    pub fn refine(&self) -> Result<Self, MeshError> {
        let mut vertices = self.vertices.clone();
        let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| {
            let k = (a.min(b), a.max(b));
            *mids.entry(k).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                vertices.len() - 1
            })
        };
        let mut cells = Vec::new();
        for c in &self.cells {
            if self.dim == 1 {
                let m = midpoint(c[0], c[1], &mut vertices);
                cells.push([c[0], m, 0]);
                cells.push([m, c[1], 0]);
            } else {
                let m01 = midpoint(c[0], c[1], &mut vertices);
                let m12 = midpoint(c[1], c[2], &mut vertices);
                let m20 = midpoint(c[2], c[0], &mut vertices);
                cells.push([c[0], m01, m20]);
                cells.push([m01, c[1], m12]);
                cells.push([m20, m12, c[2]]);
                cells.push([m01, m12, m20]);
            }
        }
        let mut tags = HashMap::new();
        for (k, t) in &self.tags {
            if self.dim == 1 {
                tags.insert(k.clone(), *t);
            } else {
                let m = midpoint(k[0], k[1], &mut vertices);
                tags.insert(key(&[k[0], m]), *t);
                tags.insert(key(&[m, k[1]]), *t);
            }
        }
        if self.dim == 1 {
            // keep interval cells sorted left to right
            cells.sort_by(|a, b| vertices[a[0]][0].total_cmp(&vertices[b[0]][0]));
        }
        Mesh::from_parts(self.dim, vertices, cells, tags)
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

/// Translation taking the midpoint of face `a` to the midpoint of face `b`.
fn translation(vertices: &[[f64; 2]], a: &[usize], b: &[usize]) -> [f64; 2] {
    let m = |f: &[usize]| {
        let n = f.len() as f64;
        f.iter().fold([0.0; 2], |acc, &v| [acc[0] + vertices[v][0] / n, acc[1] + vertices[v][1] / n])
    };
    sub(m(b), m(a))
}

/// Vertices of local face `e`: interval faces are its end points, triangle
/// edge `e` runs from vertex `e` to vertex `e + 1`.
pub fn local_face(dim: usize, cell: &[usize; 3], e: usize) -> Vec<usize> {
    if dim == 1 {
        vec![cell[e]]
    } else {
        vec![cell[e], cell[(e + 1) % 3]]
    }
}

/// Uniform partition of `[a, b]` into `n` cells.
///
/// Non-periodic ends are tagged Dirichlet; use [`Mesh::retag`] to change that.
pub fn build_uniform_1d(a: f64, b: f64, n: usize, periodic: bool) -> Result<Mesh, MeshError> {
    if n < 2 {
        return Err(MeshError::InvalidInput(format!("need at least 2 cells, got {n}")));
    }
    if !(b - a).is_finite() || b - a <= 0.0 {
        return Err(MeshError::InvalidInput(format!("empty interval ({a}, {b})")));
    }
    let h = (b - a) / n as f64;
    let vertices = (0..=n)
        .map(|i| [if i == n { b } else { a + i as f64 * h }, 0.0])
        .collect();
    let cells = (0..n).map(|i| [i, i + 1, 0]).collect();
    let tag = if periodic {
        BoundaryTag::Periodic(0)
    } else {
        BoundaryTag::Dirichlet
    };
    let tags = HashMap::from([(vec![0], tag), (vec![n], tag)]);
    Mesh::from_parts(1, vertices, cells, tags)
}

/// Structured triangulation of a rectangle; each sub-rectangle is split along
/// its bottom-left to top-right diagonal.
pub fn build_structured_tri_2d(
    lo: [f64; 2],
    hi: [f64; 2],
    nx: usize,
    ny: usize,
    periodic: bool,
) -> Result<Mesh, MeshError> {
    if nx < 2 || ny < 2 {
        return Err(MeshError::InvalidInput(format!("need nx, ny >= 2, got {nx} x {ny}")));
    }
    if !(hi[0] - lo[0] > 0.0 && hi[1] - lo[1] > 0.0) {
        return Err(MeshError::InvalidInput("degenerate rectangle".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { hi[0] } else { lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64 };
            let y = if j == ny { hi[1] } else { lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64 };
            vertices.push([x, y]);
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }
    let (tx, ty) = if periodic {
        (BoundaryTag::Periodic(0), BoundaryTag::Periodic(1))
    } else {
        (BoundaryTag::Dirichlet, BoundaryTag::Dirichlet)
    };
    let mut tags = HashMap::new();
    for j in 0..ny {
        tags.insert(key(&[id(0, j), id(0, j + 1)]), tx);
        tags.insert(key(&[id(nx, j), id(nx, j + 1)]), tx);
    }
    for i in 0..nx {
        tags.insert(key(&[id(i, 0), id(i + 1, 0)]), ty);
        tags.insert(key(&[id(i, ny), id(i + 1, ny)]), ty);
    }
    Mesh::from_parts(2, vertices, cells, tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn check_invariants(m: &Mesh) {
        for f in &m.faces {
            let n = f.normal;
            assert_relative_eq!((n[0] * n[0] + n[1] * n[1]).sqrt(), 1.0, epsilon = 1e-12);
            assert!(f.measure > 0.0 && f.penalty_length > 0.0);
            match f.plus {
                Some(p) => {
                    assert_ne!(p, f.minus);
                    assert!(!f.kind.is_boundary());
                    assert_eq!(m.cell_faces[p][f.local_plus], m.cell_faces[f.minus][f.local_minus]);
                }
                None => assert!(f.kind.is_boundary()),
            }
        }
        for c in 0..m.n_cells() {
            assert!(m.cell_measure[c] > 0.0);
            for e in 0..m.dim + 1 {
                assert_ne!(m.cell_faces[c][e], usize::MAX);
            }
        }
    }

    #[test]
    fn uniform_periodic() {
        let m = build_uniform_1d(0.0, 1.0, 10, true).unwrap();
        assert_eq!(m.n_cells(), 10);
        assert_eq!(m.faces.len(), 10);
        assert_relative_eq!(m.h, 0.1, epsilon = 1e-15);
        assert!(m.faces.iter().all(|f| f.plus.is_some()));
        let wrap = m.faces.iter().find(|f| f.kind == FaceKind::Periodic).unwrap();
        assert_eq!((wrap.minus, wrap.plus), (9, Some(0)));
        assert_eq!(wrap.normal, [1.0, 0.0]);
        check_invariants(&m);
        // vertex 0 and vertex 10 share a class touching cells 0 and 9
        assert_eq!(m.vertex_class[0], m.vertex_class[10]);
        assert_eq!(m.class_cells[m.vertex_class[0]].len(), 2);
    }

    #[test]
    fn uniform_bounded() {
        let m = build_uniform_1d(0.0, 1.0, 60, false).unwrap();
        assert_eq!(m.faces.len(), 61);
        assert_eq!(m.faces.iter().filter(|f| f.kind.is_boundary()).count(), 2);
        assert_eq!(m.faces[0].normal, [-1.0, 0.0]);
        assert_eq!(m.faces[60].normal, [1.0, 0.0]);
        check_invariants(&m);
        let m = build_uniform_1d(-5.0, 5.0, 1500, false).unwrap();
        assert_relative_eq!(m.h, 1.0 / 150.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_rejects() {
        assert!(build_uniform_1d(0.0, 1.0, 1, false).is_err());
        assert!(build_uniform_1d(1.0, 1.0, 4, false).is_err());
        assert!(build_structured_tri_2d([0.0, 0.0], [1.0, 0.0], 4, 4, false).is_err());
    }

    #[test]
    fn structured_counts() {
        let m = build_structured_tri_2d([0.0, 0.0], [1.0, 1.0], 60, 60, true).unwrap();
        assert_eq!(m.n_cells(), 7200);
        let m = build_structured_tri_2d([-1.5, -1.5], [1.5, 1.5], 15, 15, true).unwrap();
        assert_eq!(m.n_cells(), 450);
        check_invariants(&m);
        assert!(m.faces.iter().all(|f| f.plus.is_some()));
    }

    #[test]
    fn structured_small_orientation() {
        let m = build_structured_tri_2d([0.0, 0.0], [1.0, 1.0], 2, 2, false).unwrap();
        assert_eq!(m.n_cells(), 8);
        check_invariants(&m);
        for f in m.faces.iter().filter(|f| f.plus.is_some()) {
            // n+ = -n-: the plus cell sees the edge reversed
            assert!(f.reversed);
            let cp = f.plus.unwrap();
            let pv = local_face(2, &m.cells[cp], f.local_plus);
            let (a, b) = (m.vertices[pv[0]], m.vertices[pv[1]]);
            let l = dist(a, b);
            let np = [(b[1] - a[1]) / l, -(b[0] - a[0]) / l];
            assert_relative_eq!(np[0], -f.normal[0], epsilon = 1e-14);
            assert_relative_eq!(np[1], -f.normal[1], epsilon = 1e-14);
        }
        let (lo, hi) = m.cell_h.iter().fold((f64::MAX, 0.0f64), |(a, b), &h| (a.min(h), b.max(h)));
        assert_relative_eq!(lo, hi, max_relative = 1e-12);
    }

    #[test]
    fn periodic_structured_identifies_corners() {
        let m = build_structured_tri_2d([0.0, 0.0], [2.0, 2.0], 4, 4, true).unwrap();
        // all four corners are one vertex class
        let corners = [0, 4, 20, 24];
        let c0 = m.vertex_class[corners[0]];
        assert!(corners.iter().all(|&v| m.vertex_class[v] == c0));
        assert_eq!(m.class_cells.len(), 16);
        for f in m.faces.iter().filter(|f| f.kind == FaceKind::Periodic) {
            assert!(f.reversed);
        }
    }

    #[test]
    fn locate_points() {
        let m = build_structured_tri_2d([0.0, 0.0], [1.0, 1.0], 5, 5, false).unwrap();
        for p in [[0.13, 0.71], [0.999, 0.001], [0.5, 0.5]] {
            let (c, r) = m.locate(p).unwrap();
            let q = m.map_point(c, r);
            assert_relative_eq!(q[0], p[0], epsilon = 1e-12);
            assert_relative_eq!(q[1], p[1], epsilon = 1e-12);
        }
        assert!(m.locate([1.5, 0.5]).is_none());
        let m = build_uniform_1d(0.0, 1.0, 7, true).unwrap();
        let (c, _) = m.locate([0.5, 0.0]).unwrap();
        assert_eq!(c, 3);
    }

    #[test]
    fn refinement() {
        let m = build_structured_tri_2d([0.0, 0.0], [1.0, 1.0], 3, 3, true).unwrap();
        let r = m.refine().unwrap().refine().unwrap();
        assert_eq!(r.n_cells(), 4 * 4 * m.n_cells());
        assert_relative_eq!(r.h, m.h / 4.0, max_relative = 1e-12);
        assert!(r.is_periodic());
        check_invariants(&r);
        let m = build_uniform_1d(0.0, 1.0, 4, false).unwrap();
        let r = m.refine().unwrap();
        assert_eq!(r.n_cells(), 8);
        assert_eq!(r.faces.iter().filter(|f| f.kind == FaceKind::Dirichlet).count(), 2);
        assert!((1..8).all(|c| r.vertices[r.cells[c][0]][0] > r.vertices[r.cells[c - 1][0]][0]));
    }

    proptest! {
        #[test]
        fn measures_sum_to_domain(nx in 2usize..12, ny in 2usize..12, w in 0.5f64..3.0, per in any::<bool>()) {
            let m = build_structured_tri_2d([-1.0, 0.0], [-1.0 + w, 2.0], nx, ny, per).unwrap();
            prop_assert!((m.domain_measure() - 2.0 * w).abs() <= 1e-12 * 2.0 * w);
            // adjacency symmetry
            for f in &m.faces {
                if let Some(p) = f.plus {
                    prop_assert!(m.cell_faces[p].contains(&m.cell_faces[f.minus][f.local_minus]));
                }
            }
        }

        #[test]
        fn interval_measures(n in 2usize..200, a in -3.0f64..3.0, len in 0.1f64..10.0) {
            let m = build_uniform_1d(a, a + len, n, false).unwrap();
            prop_assert!((m.domain_measure() - len).abs() <= 1e-12 * len);
        }
    }
}
