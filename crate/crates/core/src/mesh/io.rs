use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{key, BoundaryTag, Mesh, MeshError};

/// Read a mesh in the text format accepted by [`parse_mesh`].
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_mesh(&text)
}

/// Parse the mesh text format.
///
/// ```text
/// dim n_vertices n_cells
/// <one vertex per line: dim coordinates>
/// <one cell per line: dim+1 zero-based vertex indices>
/// boundary                      (optional)
/// <face vertex indices> dirichlet|neumann|periodic:<group>
/// ```
///
/// Blank lines and `#` comments are ignored.
pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let perr = |line: usize, msg: String| MeshError::Parse { line, msg };
    let (ln, header) = lines.next().ok_or_else(|| perr(0, "empty file".into()))?;
    let h: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(ln, format!("bad header token '{t}'"))))
        .collect::<Result<_, _>>()?;
    if h.len() != 3 {
        return Err(perr(ln, "header must be 'dim n_vertices n_cells'".into()));
    }
    let (dim, nv, nc) = (h[0], h[1], h[2]);
    if dim != 1 && dim != 2 {
        return Err(perr(ln, format!("unsupported dimension {dim}")));
    }

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of file in vertices".into()))?;
        let xs: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(ln, format!("bad coordinate '{t}'"))))
            .collect::<Result<_, _>>()?;
        if xs.len() != dim {
            return Err(perr(ln, format!("expected {dim} coordinates, got {}", xs.len())));
        }
        vertices.push([xs[0], if dim == 2 { xs[1] } else { 0.0 }]);
    }

    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of file in cells".into()))?;
        let vs = parse_indices(l, ln)?;
        if vs.len() != dim + 1 {
            return Err(perr(ln, format!("expected {} vertex indices, got {}", dim + 1, vs.len())));
        }
        cells.push([vs[0], vs[1], if dim == 2 { vs[2] } else { 0 }]);
    }

    let mut tags = HashMap::new();
    if let Some((ln, l)) = lines.next() {
        if l != "boundary" {
            return Err(perr(ln, format!("expected 'boundary', got '{l}'")));
        }
        for (ln, l) in lines {
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != dim + 1 {
                return Err(perr(ln, format!("expected {dim} indices and a tag")));
            }
            let vs = parse_indices(&toks[..dim].join(" "), ln)?;
            let tag = match toks[dim] {
                "dirichlet" => BoundaryTag::Dirichlet,
                "neumann" => BoundaryTag::Neumann,
                t => match t.strip_prefix("periodic:") {
                    Some(g) => BoundaryTag::Periodic(
                        g.parse().map_err(|_| perr(ln, format!("bad periodic group '{g}'")))?,
                    ),
                    None => return Err(perr(ln, format!("unknown tag '{t}'"))),
                },
            };
            tags.insert(key(&vs), tag);
        }
    }
    Mesh::from_parts(dim, vertices, cells, tags)
}

fn parse_indices(l: &str, ln: usize) -> Result<Vec<usize>, MeshError> {
    l.split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| MeshError::Parse {
                line: ln,
                msg: format!("bad index '{t}'"),
            })
        })
        .collect()
}

/// Serialize a mesh in the format read by [`parse_mesh`].
pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {} {}", mesh.dim, mesh.n_vertices(), mesh.n_cells());
    for v in &mesh.vertices {
        if mesh.dim == 1 {
            let _ = writeln!(s, "{:e}", v[0]);
        } else {
            let _ = writeln!(s, "{:e} {:e}", v[0], v[1]);
        }
    }
    for c in 0..mesh.n_cells() {
        let vs: Vec<String> = mesh.cell_vertices(c).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", vs.join(" "));
    }
    let mut tags: Vec<_> = mesh.boundary_tags().collect();
    tags.sort();
    if !tags.is_empty() {
        let _ = writeln!(s, "boundary");
        for (k, t) in tags {
            let vs: Vec<String> = k.iter().map(|v| v.to_string()).collect();
            let tag = match t {
                BoundaryTag::Dirichlet => "dirichlet".to_string(),
                BoundaryTag::Neumann => "neumann".to_string(),
                BoundaryTag::Periodic(g) => format!("periodic:{g}"),
            };
            let _ = writeln!(s, "{} {}", vs.join(" "), tag);
        }
    }
    s
}
