//! Discretely harmonic extension of boundary data, the interior/boundary
//! energy split, and the hop-distance decay profile.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Mesh;
use crate::operator::{assemble, check_dim, conductance, squared_differences, OperatorKind};

/// Highest level solved by sparse Cholesky; above it the interior system is
/// solved by preconditioned conjugate gradients.
pub const DIRECT_MAX_LEVEL: u32 = 4;

/// Values on the boundary vertices, in the order of
/// [`Mesh::boundary_vertices`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryData {
    level: u32,
    values: Vec<f64>,
}

impl BoundaryData {
    pub fn new(level: u32, values: Vec<f64>) -> Result<Self> {
        let expected = 3usize
            .checked_mul(1usize.checked_shl(2 * level).unwrap_or(usize::MAX))
            .ok_or_else(|| Error::Argument(format!("level {level} too large")))?;
        check_dim(expected, values.len())?;
        Ok(Self { level, values })
    }

    /// Samples `f` at the boundary vertices of `mesh`.
    pub fn from_fn(mesh: &Mesh, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let values = mesh
            .boundary_vertices()
            .iter()
            .map(|&v| mesh.cartesian(v).map(|(x, y)| f(x, y)))
            .collect::<Result<_>>()?;
        Self::new(mesh.level(), values)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

enum InteriorSolver {
    Direct(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Iterative { diagonal: Vec<f64> },
}

/// Harmonic extension for one mesh and coupling, with the interior
/// factorization computed once and shared by every solve.
pub struct HarmonicExtender<'m> {
    mesh: &'m Mesh,
    c0: f64,
    /// Interior vertices in ascending order; row `r` of the interior block.
    interior: Vec<usize>,
    /// Mesh vertex → interior row, or `None` on the boundary.
    row_of: Vec<Option<usize>>,
    /// Position of each boundary vertex in the boundary cycle.
    boundary_pos: Vec<Option<usize>>,
    block: crate::operator::CsrMatrix,
    solver: InteriorSolver,
}

impl<'m> HarmonicExtender<'m> {
    pub fn new(mesh: &'m Mesh, c0: f64) -> Result<Self> {
        let op = assemble(mesh, OperatorKind::Dirichlet, c0)?;
        let interior = op.vertex_map().to_vec();
        let mut row_of = vec![None; mesh.num_vertices()];
        for (r, &v) in interior.iter().enumerate() {
            row_of[v] = Some(r);
        }
        let mut boundary_pos = vec![None; mesh.num_vertices()];
        for (k, &v) in mesh.boundary_vertices().iter().enumerate() {
            boundary_pos[v] = Some(k);
        }
        let block = op.stiffness().clone();
        let solver = if mesh.level() <= DIRECT_MAX_LEVEL {
            let triplets: Vec<_> = block
                .triplets()
                .filter(|&(i, j, _)| i >= j)
                .map(|(i, j, v)| Triplet::new(i, j, v))
                .collect();
            let n = block.dim();
            let matrix = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
                .map_err(|e| Error::Numerical(format!("interior block: {e:?}")))?;
            let llt = matrix
                .sp_cholesky(Side::Lower)
                .map_err(|e| Error::Numerical(format!("interior block is not positive definite: {e:?}")))?;
            InteriorSolver::Direct(llt)
        } else {
            InteriorSolver::Iterative {
                diagonal: block.diagonal(),
            }
        };
        Ok(Self {
            mesh,
            c0,
            interior,
            row_of,
            boundary_pos,
            block,
            solver,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    /// Returns `u` on all vertices with `u = f` on the boundary and
    /// `(Lu)(p) = 0` at every interior vertex.
    pub fn extend(&self, f: &BoundaryData) -> Result<Vec<f64>> {
        if f.level() != self.mesh.level() {
            return Err(Error::Argument(format!(
                "boundary data level {} does not match mesh level {}",
                f.level(),
                self.mesh.level()
            )));
        }
        check_dim(self.mesh.boundary_vertices().len(), f.len())?;

        // Interior rows: S_II u_I = −S_IB f, with S_pq = −2c off the diagonal.
        let mut rhs = vec![0.0; self.interior.len()];
        for (r, &p) in self.interior.iter().enumerate() {
            for q in self.mesh.neighbors(p)? {
                if let Some(k) = self.boundary_pos[q] {
                    rhs[r] += 2.0 * conductance(self.mesh, p, q, self.c0)? * f.values()[k];
                }
            }
        }
        let solution = match &self.solver {
            InteriorSolver::Direct(llt) => {
                let mut x = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
                llt.solve_in_place(&mut x);
                (0..rhs.len()).map(|i| x[(i, 0)]).collect()
            }
            InteriorSolver::Iterative { diagonal } => conjugate_gradient(&self.block, diagonal, &rhs)?,
        };

        let mut u = vec![0.0; self.mesh.num_vertices()];
        for (k, &v) in self.mesh.boundary_vertices().iter().enumerate() {
            u[v] = f.values()[k];
        }
        for (v, r) in self.row_of.iter().enumerate() {
            if let Some(r) = *r {
                u[v] = solution[r];
            }
        }
        Ok(u)
    }
}

fn conjugate_gradient(a: &crate::operator::CsrMatrix, diagonal: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diagonal).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let limit = 10 * n.max(100);
    for _ in 0..limit {
        let ap = a.mul_vec(&p)?;
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= 1e-13 * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diagonal[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: limit,
        worst_residual: dot(&r, &r).sqrt() / b_norm,
        residuals: Vec::new(),
    })
}

/// One-shot harmonic extension; use [`HarmonicExtender`] for repeated solves.
pub fn harmonic_extend(mesh: &Mesh, f: &BoundaryData, c0: f64) -> Result<Vec<f64>> {
    HarmonicExtender::new(mesh, c0)?.extend(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergySplit {
    /// `Σ_interior edges (Δu)²`
    pub interior: f64,
    /// `c0·4^n·Σ_boundary edges (Δu)²`
    pub boundary: f64,
}

impl EnergySplit {
    pub fn total(&self) -> f64 {
        self.interior + self.boundary
    }
}

pub fn energy_split(mesh: &Mesh, u: &[f64], c0: f64) -> Result<EnergySplit> {
    let (interior, boundary) = squared_differences(mesh, u)?;
    Ok(EnergySplit {
        interior,
        boundary: c0 * 4f64.powi(mesh.level() as i32) * boundary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayShell {
    /// Hop distance to the nearest boundary vertex.
    pub distance: usize,
    pub sup: f64,
    pub vertices: usize,
}

/// `sup |u|` over interior vertices grouped by hop distance `d ≥ 1` to the
/// boundary.
pub fn decay_profile(mesh: &Mesh, u: &[f64]) -> Result<Vec<DecayShell>> {
    check_dim(mesh.num_vertices(), u.len())?;
    let distance = mesh.boundary_distance();
    let depth = distance.iter().copied().max().unwrap_or(0);
    let mut shells: Vec<DecayShell> = (1..=depth)
        .map(|d| DecayShell {
            distance: d,
            sup: 0.0,
            vertices: 0,
        })
        .collect();
    for (&d, &x) in distance.iter().zip(u) {
        if d >= 1 {
            let shell = &mut shells[d - 1];
            shell.sup = shell.sup.max(x.abs());
            shell.vertices += 1;
        }
    }
    Ok(shells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_mesh;
    use crate::operator::{apply, assemble, energy};

    #[test]
    fn constants_extend_to_constants() {
        let mesh = build_mesh(2).unwrap();
        let f = BoundaryData::new(2, vec![3.5; 48]).unwrap();
        let u = harmonic_extend(&mesh, &f, 1.0).unwrap();
        assert!(u.iter().all(|&x| (x - 3.5).abs() < 1e-12));
    }

    #[test]
    fn linear_data_extends_exactly() {
        let mesh = build_mesh(3).unwrap();
        let f = BoundaryData::from_fn(&mesh, |x, _| x).unwrap();
        let u = harmonic_extend(&mesh, &f, 1.0).unwrap();
        for v in 0..mesh.num_vertices() {
            let (x, _) = mesh.cartesian(v).unwrap();
            assert!((u[v] - x).abs() < 1e-12, "vertex {v}: {} vs {x}", u[v]);
        }
    }

    #[test]
    fn extension_is_harmonic_inside() {
        let mesh = build_mesh(2).unwrap();
        let values = (0..48).map(|k| ((k * 7) % 5) as f64 - 2.0).collect();
        let u = harmonic_extend(&mesh, &BoundaryData::new(2, values).unwrap(), 2.0).unwrap();
        let lu = apply(&assemble(&mesh, OperatorKind::Full, 2.0).unwrap(), &u).unwrap();
        for v in mesh.interior_vertices() {
            assert!(lu[v].abs() < 1e-8, "Lu = {} at {v}", lu[v]);
        }
    }

    #[test]
    fn iterative_path_agrees_with_direct() {
        let mesh = build_mesh(3).unwrap();
        let values: Vec<f64> = (0..192).map(|k| (k as f64 * 0.37).sin()).collect();
        let f = BoundaryData::new(3, values).unwrap();
        let direct = harmonic_extend(&mesh, &f, 1.0).unwrap();
        let ext = HarmonicExtender::new(&mesh, 1.0).unwrap();
        let mut rhs = vec![0.0; ext.interior.len()];
        for (r, slot) in rhs.iter_mut().enumerate() {
            *slot = ext.block.row(r).map(|(c, v)| v * direct[ext.interior[c]]).sum::<f64>();
        }
        let x = conjugate_gradient(&ext.block, &ext.block.diagonal(), &rhs).unwrap();
        for (r, &p) in ext.interior.iter().enumerate() {
            assert!((x[r] - direct[p]).abs() < 1e-10);
        }
    }

    #[test]
    fn wrong_length_or_level_is_rejected() {
        assert!(BoundaryData::new(1, vec![0.0; 11]).is_err());
        let mesh = build_mesh(1).unwrap();
        let f = BoundaryData::new(2, vec![0.0; 48]).unwrap();
        assert!(harmonic_extend(&mesh, &f, 1.0).is_err());
    }

    #[test]
    fn energy_split_examples() {
        let mesh = build_mesh(2).unwrap();
        let split = energy_split(&mesh, &vec![1.0; mesh.num_vertices()], 1.0).unwrap();
        assert_eq!((split.interior, split.boundary), (0.0, 0.0));

        let mut u = vec![0.0; mesh.num_vertices()];
        u[mesh.interior_vertices()[3]] = 1.0;
        let split = energy_split(&mesh, &u, 1.0).unwrap();
        assert_eq!(split.boundary, 0.0);
        assert_eq!(split.interior, 6.0);

        let u: Vec<f64> = (0..mesh.num_vertices()).map(|v| (v as f64).sqrt()).collect();
        let split = energy_split(&mesh, &u, 1.7).unwrap();
        let e = energy(&mesh, &u, 1.7).unwrap();
        assert!((split.total() - e).abs() <= 1e-12 * e);
        assert!(energy_split(&mesh, &u[1..], 1.0).is_err());
    }

    #[test]
    fn decay_of_constant_is_flat() {
        let mesh = build_mesh(3).unwrap();
        let profile = decay_profile(&mesh, &vec![1.0; mesh.num_vertices()]).unwrap();
        assert!(!profile.is_empty());
        assert!(profile.iter().all(|s| s.sup == 1.0 && s.vertices > 0));
        assert_eq!(profile[0].distance, 1);
    }
}
