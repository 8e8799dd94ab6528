//! Nodal reference elements: interval and triangle.
//!
//! Nodes are Legendre–Gauss–Lobatto points on `[-1, 1]` and warp-and-blend
//! points on the triangle `(-1,-1), (1,-1), (-1,1)`. Every matrix the assembly
//! needs (mass, differentiation, quadrature interpolation, traces) is
//! precomputed here once per degree.

pub mod jacobi;

use nalgebra::DMatrix;

use jacobi::{gauss_legendre, grad_jacobi_p, jacobi_gl, jacobi_gq, jacobi_p};

pub const MAX_DEGREE: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BasisError {
    #[error("polynomial degree {0} not supported (expected 1..={MAX_DEGREE})")]
    UnsupportedDegree(usize),
    #[error("dimension {0} not supported")]
    UnsupportedDimension(usize),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = m[(i, j)];
            }
        }
        out
    }

    fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Reference element with nodal basis of degree `k`.
#[derive(Debug, Clone)]
pub struct RefElement {
    pub dim: usize,
    pub k: usize,
    pub np: usize,
    pub nodes: Vec<[f64; 2]>,
    vinv: DMatrix<f64>,
    pub mass: Mat,
    pub mass_inv: Mat,
    /// Nodal differentiation matrices, one per reference direction.
    pub diff: Vec<Mat>,
    pub quad_pts: Vec<[f64; 2]>,
    pub quad_w: Vec<f64>,
    /// Nodal values to quadrature-point values (`nq x np`).
    pub quad_interp: Mat,
    /// Reference derivatives at quadrature points (`nq x np` per direction).
    pub quad_diff: Vec<Mat>,
    /// Vertex barycentric weights at quadrature points.
    pub quad_bary: Vec<[f64; 3]>,
    pub n_faces: usize,
    pub face_w: Vec<f64>,
    pub face_interp: Vec<Mat>,
    pub face_diff: Vec<Vec<Mat>>,
    pub face_bary: Vec<Vec<[f64; 3]>>,
    /// Indices of the nodes lying on each face.
    pub face_nodes: Vec<Vec<usize>>,
}

/// Reference vertices of the triangle.
pub const TRI_VERTS: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];

fn rs_to_ab(r: f64, s: f64) -> (f64, f64) {
    let a = if (s - 1.0).abs() > 1e-14 {
        2.0 * (1.0 + r) / (1.0 - s) - 1.0
    } else {
        -1.0
    };
    (a, s)
}

fn tri_modes(k: usize) -> Vec<(usize, usize)> {
    let mut m = Vec::new();
    for i in 0..=k {
        for j in 0..=k - i {
            m.push((i, j));
        }
    }
    m
}

fn simplex_p(a: f64, b: f64, i: usize, j: usize) -> f64 {
    let h1 = jacobi_p(a, 0.0, 0.0, i);
    let h2 = jacobi_p(b, 2.0 * i as f64 + 1.0, 0.0, j);
    std::f64::consts::SQRT_2 * h1 * h2 * (1.0 - b).powi(i as i32)
}

fn grad_simplex_p(a: f64, b: f64, id: usize, jd: usize) -> (f64, f64) {
    let fa = jacobi_p(a, 0.0, 0.0, id);
    let dfa = grad_jacobi_p(a, 0.0, 0.0, id);
    let gb = jacobi_p(b, 2.0 * id as f64 + 1.0, 0.0, jd);
    let dgb = grad_jacobi_p(b, 2.0 * id as f64 + 1.0, 0.0, jd);
    let half = 0.5 * (1.0 - b);
    let mut dr = dfa * gb;
    let mut ds = dfa * gb * 0.5 * (1.0 + a);
    if id > 0 {
        let f = half.powi(id as i32 - 1);
        dr *= f;
        ds *= f;
    }
    let mut tmp = dgb * half.powi(id as i32);
    if id > 0 {
        tmp -= 0.5 * id as f64 * gb * half.powi(id as i32 - 1);
    }
    ds += fa * tmp;
    let scale = 2f64.powf(id as f64 + 0.5);
    (dr * scale, ds * scale)
}

fn warp_factor(k: usize, rout: f64) -> f64 {
    let lgl = jacobi_gl(0.0, 0.0, k);
    let req: Vec<f64> = (0..=k).map(|i| -1.0 + 2.0 * i as f64 / k as f64).collect();
    // Lagrange interpolant through equispaced points of (lgl - req), evaluated at rout
    let mut warp = 0.0;
    for i in 0..=k {
        let mut l = 1.0;
        for j in 0..=k {
            if j != i {
                l *= (rout - req[j]) / (req[i] - req[j]);
            }
        }
        warp += l * (lgl[i] - req[i]);
    }
    if rout.abs() < 1.0 - 1e-10 {
        warp / (1.0 - rout * rout)
    } else {
        0.0
    }
}

const ALPHA_OPT: [f64; 15] = [
    0.0, 0.0, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999, 1.2832, 1.3648, 1.4773, 1.4959, 1.5743,
    1.5770, 1.6223, 1.6258,
];

/// Warp-and-blend nodes on the reference triangle.
pub fn tri_nodes(k: usize) -> Vec<[f64; 2]> {
    let alpha = if k < 15 { ALPHA_OPT[k] } else { 5.0 / 3.0 };
    let s3 = 3f64.sqrt();
    let mut out = Vec::new();
    for n in 0..=k {
        for m in 0..=k - n {
            let l1 = n as f64 / k as f64;
            let l3 = m as f64 / k as f64;
            let l2 = 1.0 - l1 - l3;
            let mut x = -l2 + l3;
            let mut y = (-l2 - l3 + 2.0 * l1) / s3;
            let b1 = 4.0 * l2 * l3;
            let b2 = 4.0 * l1 * l3;
            let b3 = 4.0 * l1 * l2;
            let w1 = b1 * warp_factor(k, l3 - l2) * (1.0 + (alpha * l1).powi(2));
            let w2 = b2 * warp_factor(k, l1 - l3) * (1.0 + (alpha * l2).powi(2));
            let w3 = b3 * warp_factor(k, l2 - l1) * (1.0 + (alpha * l3).powi(2));
            let (c2, s2) = ((2.0 * std::f64::consts::PI / 3.0).cos(), (2.0 * std::f64::consts::PI / 3.0).sin());
            let (c4, s4) = ((4.0 * std::f64::consts::PI / 3.0).cos(), (4.0 * std::f64::consts::PI / 3.0).sin());
            x += w1 + c2 * w2 + c4 * w3;
            y += s2 * w2 + s4 * w3;
            // equilateral (x, y) to reference (r, s)
            let m1 = (s3 * y + 1.0) / 3.0;
            let m2 = (-3.0 * x - s3 * y + 2.0) / 6.0;
            let m3 = (3.0 * x - s3 * y + 2.0) / 6.0;
            out.push([-m2 + m3 - m1, -m2 - m3 + m1]);
        }
    }
    out
}

/// Conical-product rule on the reference triangle with `n` points per direction
/// (exact to degree `2n - 1`).
pub fn tri_quadrature(n: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    let (xa, wa) = gauss_legendre(n);
    let (xb, wb) = jacobi_gq(1.0, 0.0, n - 1);
    let mut pts = Vec::with_capacity(n * n);
    let mut w = Vec::with_capacity(n * n);
    for (b, wbv) in xb.iter().zip(&wb) {
        for (a, wav) in xa.iter().zip(&wa) {
            pts.push([0.5 * (1.0 + a) * (1.0 - b) - 1.0, *b]);
            w.push(0.5 * wav * wbv);
        }
    }
    (pts, w)
}

impl RefElement {
    pub fn new(dim: usize, k: usize) -> Result<Self, BasisError> {
        if !(1..=MAX_DEGREE).contains(&k) {
            return Err(BasisError::UnsupportedDegree(k));
        }
        match dim {
            1 => Ok(Self::line(k)),
            2 => Ok(Self::triangle(k)),
            d => Err(BasisError::UnsupportedDimension(d)),
        }
    }

    /// Orthonormal modal basis values at `p`.
    fn modes(&self, p: [f64; 2]) -> Vec<f64> {
        match self.dim {
            1 => (0..self.np).map(|j| jacobi_p(p[0], 0.0, 0.0, j)).collect(),
            _ => {
                let (a, b) = rs_to_ab(p[0], p[1]);
                tri_modes(self.k)
                    .into_iter()
                    .map(|(i, j)| simplex_p(a, b, i, j))
                    .collect()
            }
        }
    }

    fn grad_modes(&self, p: [f64; 2]) -> Vec<Vec<f64>> {
        match self.dim {
            1 => vec![(0..self.np).map(|j| grad_jacobi_p(p[0], 0.0, 0.0, j)).collect()],
            _ => {
                let (a, b) = rs_to_ab(p[0], p[1]);
                let (dr, ds): (Vec<f64>, Vec<f64>) = tri_modes(self.k)
                    .into_iter()
                    .map(|(i, j)| grad_simplex_p(a, b, i, j))
                    .unzip();
                vec![dr, ds]
            }
        }
    }

    fn to_nodal(&self, modal: &[f64]) -> Vec<f64> {
        (0..self.np)
            .map(|j| (0..self.np).map(|m| modal[m] * self.vinv[(m, j)]).sum())
            .collect()
    }

    /// Lagrange basis values `phi_j(p)` for all nodes `j`.
    pub fn interp_row(&self, p: [f64; 2]) -> Vec<f64> {
        self.to_nodal(&self.modes(p))
    }

    /// Reference gradients of all Lagrange basis functions at `p`.
    pub fn grad_rows(&self, p: [f64; 2]) -> Vec<Vec<f64>> {
        self.grad_modes(p).iter().map(|g| self.to_nodal(g)).collect()
    }

    fn line(k: usize) -> Self {
        let r = jacobi_gl(0.0, 0.0, k);
        let nodes: Vec<[f64; 2]> = r.iter().map(|&x| [x, 0.0]).collect();
        let (qx, qw) = gauss_legendre(k + 2);
        let quad_pts = qx.iter().map(|&x| [x, 0.0]).collect();
        let bary = |x: f64| [0.5 * (1.0 - x), 0.5 * (1.0 + x), 0.0];
        let quad_bary = qx.iter().map(|&x| bary(x)).collect();
        let face_pts = vec![vec![[-1.0, 0.0]], vec![[1.0, 0.0]]];
        let face_bary = vec![vec![bary(-1.0)], vec![bary(1.0)]];
        let face_nodes = vec![vec![0], vec![k]];
        Self::assemble(1, k, nodes, quad_pts, qw, quad_bary, face_pts, vec![1.0], face_bary, face_nodes)
    }

    fn triangle(k: usize) -> Self {
        let nodes = tri_nodes(k);
        let (quad_pts, quad_w) = tri_quadrature(k + 2);
        let bary = |p: [f64; 2]| [-(p[0] + p[1]) / 2.0, (1.0 + p[0]) / 2.0, (1.0 + p[1]) / 2.0];
        let quad_bary = quad_pts.iter().map(|&p| bary(p)).collect();
        let (ft, fw) = gauss_legendre(k + 2);
        let mut face_pts = Vec::new();
        let mut face_bary = Vec::new();
        let mut face_nodes = Vec::new();
        for e in 0..3 {
            let (a, b) = (TRI_VERTS[e], TRI_VERTS[(e + 1) % 3]);
            let pts: Vec<[f64; 2]> = ft
                .iter()
                .map(|&t| {
                    let (wa, wb) = (0.5 * (1.0 - t), 0.5 * (1.0 + t));
                    [wa * a[0] + wb * b[0], wa * a[1] + wb * b[1]]
                })
                .collect();
            face_bary.push(pts.iter().map(|&p| bary(p)).collect());
            face_pts.push(pts);
            let opp = (e + 2) % 3;
            face_nodes.push(
                (0..nodes.len())
                    .filter(|&i| bary(nodes[i])[opp].abs() < 1e-10)
                    .collect(),
            );
        }
        Self::assemble(2, k, nodes, quad_pts, quad_w, quad_bary, face_pts, fw, face_bary, face_nodes)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        dim: usize,
        k: usize,
        nodes: Vec<[f64; 2]>,
        quad_pts: Vec<[f64; 2]>,
        quad_w: Vec<f64>,
        quad_bary: Vec<[f64; 3]>,
        face_pts: Vec<Vec<[f64; 2]>>,
        face_w: Vec<f64>,
        face_bary: Vec<Vec<[f64; 3]>>,
        face_nodes: Vec<Vec<usize>>,
    ) -> Self {
        let np = nodes.len();
        let mut el = Self {
            dim,
            k,
            np,
            nodes: nodes.clone(),
            vinv: DMatrix::identity(np, np),
            mass: Mat::zeros(np, np),
            mass_inv: Mat::zeros(np, np),
            diff: Vec::new(),
            quad_pts: quad_pts.clone(),
            quad_w,
            quad_interp: Mat::zeros(0, 0),
            quad_diff: Vec::new(),
            quad_bary,
            n_faces: face_pts.len(),
            face_w,
            face_interp: Vec::new(),
            face_diff: Vec::new(),
            face_bary,
            face_nodes,
        };
        let mut v = DMatrix::zeros(np, np);
        for (i, &p) in nodes.iter().enumerate() {
            for (j, m) in el.modes(p).into_iter().enumerate() {
                v[(i, j)] = m;
            }
        }
        el.vinv = v.clone().try_inverse().expect("Vandermonde matrix is invertible");
        let mass_inv = &v * v.transpose();
        el.mass_inv = Mat::from_dmatrix(&mass_inv);
        el.mass = Mat::from_dmatrix(&mass_inv.try_inverse().expect("mass matrix is invertible"));

        let nodal_grads: Vec<Vec<Vec<f64>>> = nodes.iter().map(|&p| el.grad_rows(p)).collect();
        el.diff = (0..dim)
            .map(|d| Mat::from_rows(nodal_grads.iter().map(|g| g[d].clone()).collect()))
            .collect();

        el.quad_interp = Mat::from_rows(quad_pts.iter().map(|&p| el.interp_row(p)).collect());
        let qg: Vec<Vec<Vec<f64>>> = quad_pts.iter().map(|&p| el.grad_rows(p)).collect();
        el.quad_diff = (0..dim)
            .map(|d| Mat::from_rows(qg.iter().map(|g| g[d].clone()).collect()))
            .collect();

        for pts in &face_pts {
            el.face_interp
                .push(Mat::from_rows(pts.iter().map(|&p| el.interp_row(p)).collect()));
            let g: Vec<Vec<Vec<f64>>> = pts.iter().map(|&p| el.grad_rows(p)).collect();
            el.face_diff.push(
                (0..dim)
                    .map(|d| Mat::from_rows(g.iter().map(|gq| gq[d].clone()).collect()))
                    .collect(),
            );
        }
        el
    }

    pub fn nq(&self) -> usize {
        self.quad_w.len()
    }

    pub fn nqf(&self) -> usize {
        self.face_w.len()
    }

    /// Reference measure (2 for the interval and the triangle).
    pub fn ref_measure(&self) -> f64 {
        2.0
    }
}
