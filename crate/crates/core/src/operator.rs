//! Conductances, vertex measures, graph energy and the discrete Laplacians
//! built from them.
//!
//! Interior edges carry conductance 1 and boundary edges `c0·4^n`; interior
//! vertices carry mass `9^-n` and boundary vertices `4^-n`. The Laplacian is
//! `(Lu)(p) = (2/m(p)) Σ_q c(p,q)(u(p) − u(q))`, stored as a symmetric
//! stiffness matrix `S` and a diagonal mass so that `L = M⁻¹S`.
//!
//! Inverse masses are stored as the exact integers `9^n` and `4^n`; the masses
//! themselves are the correctly rounded reciprocals (exact for `4^-n`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_mesh, EdgeKind, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    /// Every vertex of the mesh.
    Full,
    /// Interior vertices only: boundary rows and columns deleted.
    Dirichlet,
    /// Boundary vertices and boundary edges only.
    Boundary,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::Full => "full",
            OperatorKind::Dirichlet => "dirichlet",
            OperatorKind::Boundary => "boundary",
        })
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(OperatorKind::Full),
            "dirichlet" => Ok(OperatorKind::Dirichlet),
            "boundary" => Ok(OperatorKind::Boundary),
            other => Err(Error::Argument(format!("unknown operator kind `{other}`"))),
        }
    }
}

/// Compressed sparse row matrix with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= dim || *c >= dim) {
            return Err(Error::IndexOutOfRange {
                index: r.max(c),
                len: dim,
            });
        }
        triplets.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            dim,
            row_ptr,
            cols,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzero entries `(col, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok((0..self.dim).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect())
    }

    /// All stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Stiffness matrix, mass and vertex set of one of the three operators.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorBundle {
    pub kind: OperatorKind,
    pub level: u32,
    pub c0: f64,
    stiffness: CsrMatrix,
    inv_mass: Vec<f64>,
    mass: Vec<f64>,
    vertex_map: Vec<usize>,
}

impl OperatorBundle {
    pub fn dim(&self) -> usize {
        self.stiffness.dim()
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `1/m(p)`, exact integers.
    pub fn inv_mass(&self) -> &[f64] {
        &self.inv_mass
    }

    /// Mesh vertex index of each operator row.
    pub fn vertex_map(&self) -> &[usize] {
        &self.vertex_map
    }

    /// Entry `L_ij = S_ij / m_i`.
    pub fn laplacian_entry(&self, i: usize, j: usize) -> f64 {
        self.inv_mass[i] * self.stiffness.get(i, j)
    }

    /// `⟨u, v⟩_m = Σ m(p) u(p) v(p)`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), u.len())?;
        check_dim(self.dim(), v.len())?;
        Ok(self.mass.iter().zip(u).zip(v).map(|((m, a), b)| m * a * b).sum())
    }
}

fn boundary_weight(level: u32, c0: f64) -> f64 {
    c0 * 4f64.powi(level as i32)
}

fn check_vertex(mesh: &Mesh, v: usize) -> Result<()> {
    if v < mesh.num_vertices() {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange {
            index: v,
            len: mesh.num_vertices(),
        })
    }
}

fn check_c0(c0: f64) -> Result<()> {
    if c0.is_finite() && c0 > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("boundary coupling c0 must be positive, got {c0}")))
    }
}

/// `c_n(p, q)`: 1 on interior edges, `c0·4^n` on boundary edges, 0 otherwise.
pub fn conductance(mesh: &Mesh, p: usize, q: usize, c0: f64) -> Result<f64> {
    check_vertex(mesh, p)?;
    check_vertex(mesh, q)?;
    Ok(match mesh.edge_kind(p, q) {
        Some(EdgeKind::Interior) => 1.0,
        Some(EdgeKind::Boundary) => boundary_weight(mesh.level(), c0),
        None => 0.0,
    })
}

/// `m_n(p)`: `9^-n` at interior vertices, `4^-n` at boundary vertices.
pub fn measure(mesh: &Mesh, p: usize) -> Result<f64> {
    check_vertex(mesh, p)?;
    Ok(1.0 / inverse_measure(mesh, p))
}

fn inverse_measure(mesh: &Mesh, p: usize) -> f64 {
    let base: f64 = if mesh.is_boundary(p) { 4.0 } else { 9.0 };
    base.powi(mesh.level() as i32)
}

/// Assembles the stiffness matrix and mass for `kind`.
pub fn assemble(mesh: &Mesh, kind: OperatorKind, c0: f64) -> Result<OperatorBundle> {
    check_c0(c0)?;
    let nv = mesh.num_vertices();
    let vertex_map: Vec<usize> = match kind {
        OperatorKind::Full => (0..nv).collect(),
        OperatorKind::Dirichlet => mesh.interior_vertices(),
        OperatorKind::Boundary => mesh.boundary_vertices().to_vec(),
    };
    let mut local = vec![usize::MAX; nv];
    for (i, &v) in vertex_map.iter().enumerate() {
        local[v] = i;
    }

    let wb = boundary_weight(mesh.level(), c0);
    let mut triplets = Vec::with_capacity(7 * vertex_map.len());
    for e in mesh.edges() {
        if kind == OperatorKind::Boundary && !e.is_boundary() {
            continue;
        }
        let c = if e.is_boundary() { wb } else { 1.0 };
        let (p, q) = (local[e.lo], local[e.hi]);
        // Deleted rows and columns still leave their coupling on the diagonal.
        if p != usize::MAX {
            triplets.push((p, p, 2.0 * c));
        }
        if q != usize::MAX {
            triplets.push((q, q, 2.0 * c));
        }
        if p != usize::MAX && q != usize::MAX {
            triplets.push((p, q, -2.0 * c));
            triplets.push((q, p, -2.0 * c));
        }
    }
    let stiffness = CsrMatrix::from_triplets(vertex_map.len(), triplets)?;
    let inv_mass: Vec<f64> = vertex_map.iter().map(|&v| inverse_measure(mesh, v)).collect();
    let mass = inv_mass.iter().map(|w| 1.0 / w).collect();

    Ok(OperatorBundle {
        kind,
        level: mesh.level(),
        c0,
        stiffness,
        inv_mass,
        mass,
        vertex_map,
    })
}

/// `L u = M⁻¹ S u`.
pub fn apply(op: &OperatorBundle, u: &[f64]) -> Result<Vec<f64>> {
    let mut out = op.stiffness.mul_vec(u)?;
    for (o, w) in out.iter_mut().zip(&op.inv_mass) {
        *o *= w;
    }
    Ok(out)
}

/// Sums of squared differences over interior and over boundary edges,
/// without conductance weights.
pub(crate) fn squared_differences(mesh: &Mesh, u: &[f64]) -> Result<(f64, f64)> {
    check_dim(mesh.num_vertices(), u.len())?;
    let mut interior = 0.0;
    let mut boundary = 0.0;
    for e in mesh.edges() {
        let d = u[e.lo] - u[e.hi];
        if e.is_boundary() {
            boundary += d * d;
        } else {
            interior += d * d;
        }
    }
    Ok((interior, boundary))
}

/// Graph energy `E_n(u) = Σ c_n(p,q)(u(p) − u(q))²` over unordered adjacent
/// pairs, so that `⟨Lu, u⟩_m = 2 E_n(u)`.
pub fn energy(mesh: &Mesh, u: &[f64], c0: f64) -> Result<f64> {
    check_c0(c0)?;
    let (interior, boundary) = squared_differences(mesh, u)?;
    Ok(interior + boundary_weight(mesh.level(), c0) * boundary)
}

/// Energy of a function sampled on `Γ_n`, split by edge class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergySample {
    pub level: u32,
    pub interior: f64,
    /// Already weighted by `c0·4^n`.
    pub boundary: f64,
}

impl EnergySample {
    pub fn total(&self) -> f64 {
        self.interior + self.boundary
    }
}

/// `E_n(f|Γ_n)` for `n = 0..=n_max`, with `f` evaluated at the Cartesian
/// vertex positions (unit level-0 side).
pub fn energy_sequence<F>(f: F, n_max: u32, c0: f64) -> Result<Vec<EnergySample>>
where
    F: Fn(f64, f64) -> f64,
{
    check_c0(c0)?;
    (0..=n_max)
        .map(|n| {
            let mesh = build_mesh(n)?;
            let u = (0..mesh.num_vertices())
                .map(|v| mesh.cartesian(v).map(|(x, y)| f(x, y)))
                .collect::<Result<Vec<_>>>()?;
            let (interior, boundary) = squared_differences(&mesh, &u)?;
            Ok(EnergySample {
                level: n,
                interior,
                boundary: boundary_weight(n, c0) * boundary,
            })
        })
        .collect()
}
