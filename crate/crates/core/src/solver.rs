//! Generalized symmetric eigenproblem `S φ = λ M φ`.
//!
//! The diagonal mass is folded into a symmetric matrix
//! `D = M^-1/2 S M^-1/2` with the same spectrum as `L = M⁻¹S`. Eigenvectors of
//! `D` are mapped back by `φ = M^-1/2 y`, which makes them orthonormal in the
//! `m`-weighted inner product.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{check_dim, CsrMatrix, OperatorBundle, OperatorKind};

/// Largest operator the dense path accepts by default (level 4 has 5557 vertices).
pub const DEFAULT_DENSE_MAX_DIM: usize = 6000;

/// Identifier of the normalization stored in eigenvector sidecars.
pub const NORMALIZATION: &str = "m-orthonormal";
/// Identifier of the sign rule stored in eigenvector sidecars.
pub const SIGN_RULE: &str = "max-abs-positive-lowest-index";

/// Entries within this distance of the largest magnitude tie for the sign rule.
const SIGN_TIE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Smallest,
    Largest,
}

impl fmt::Display for Which {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Which::Smallest => "smallest",
            Which::Largest => "largest",
        })
    }
}

impl FromStr for Which {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smallest" => Ok(Which::Smallest),
            "largest" => Ok(Which::Largest),
            other => Err(Error::Argument(format!("unknown eigenvalue window `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Dense,
    Iterative,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::Dense => "dense",
            SolveMethod::Iterative => "iterative",
        })
    }
}

impl FromStr for SolveMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(SolveMethod::Dense),
            "iterative" => Ok(SolveMethod::Iterative),
            other => Err(Error::Argument(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub dense_max_dim: usize,
    /// Pairs must satisfy `‖Sφ − λMφ‖∞ ≤ residual_tol · max(1, λ)`.
    pub residual_tol: f64,
    /// Ritz pairs are accepted once their estimated residual in `D` drops
    /// below `lanczos_tol · max(1, |θ|)`.
    pub lanczos_tol: f64,
    /// Cap on Lanczos steps per run; `None` means the operator dimension.
    pub max_iterations: Option<usize>,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dense_max_dim: DEFAULT_DENSE_MAX_DIM,
            residual_tol: 1e-8,
            lanczos_tol: 1e-10,
            max_iterations: None,
            seed: 0x5eed,
        }
    }
}

/// Ordered eigenpairs of one operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub kind: OperatorKind,
    pub level: u32,
    pub c0: f64,
    pub method: SolveMethod,
    dim: usize,
    eigenvalues: Vec<f64>,
    /// Column-major, `dim` entries per eigenvector.
    eigenvectors: Vec<f64>,
    residuals: Vec<f64>,
    mass: Vec<f64>,
    vertex_map: Vec<usize>,
}

impl Spectrum {
    /// Spectrum from precomputed pairs. Eigenvectors are normalized and
    /// sign-fixed, pairs are sorted ascending, and residuals are left at zero.
    pub fn from_pairs(
        kind: OperatorKind,
        level: u32,
        mass: Vec<f64>,
        vertex_map: Vec<usize>,
        mut pairs: Vec<(f64, Vec<f64>)>,
    ) -> Result<Self> {
        let dim = mass.len();
        check_dim(dim, vertex_map.len())?;
        for (_, v) in &pairs {
            check_dim(dim, v.len())?;
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut eigenvalues = Vec::with_capacity(pairs.len());
        let mut eigenvectors = Vec::with_capacity(pairs.len() * dim);
        for (lambda, mut v) in pairs {
            normalize_m(&mut v, &mass);
            fix_sign(&mut v);
            eigenvalues.push(lambda);
            eigenvectors.extend(v);
        }
        Ok(Self {
            kind,
            level,
            c0: 1.0,
            method: SolveMethod::Dense,
            dim,
            residuals: vec![0.0; eigenvalues.len()],
            eigenvalues,
            eigenvectors,
            mass,
            vertex_map,
        })
    }

    /// Dimension of the operator (length of each eigenvector).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored eigenpairs.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, i: usize) -> &[f64] {
        &self.eigenvectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn eigenvectors(&self) -> impl Iterator<Item = &[f64]> {
        self.eigenvectors.chunks_exact(self.dim.max(1)).take(self.len())
    }

    /// All eigenvectors back to back, `dim` entries each.
    pub fn eigenvectors_flat(&self) -> &[f64] {
        &self.eigenvectors
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn vertex_map(&self) -> &[usize] {
        &self.vertex_map
    }

    /// Sub-spectrum with the given (0-based) pair indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Spectrum> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.len(),
            });
        }
        let mut out = Self {
            eigenvalues: Vec::with_capacity(indices.len()),
            eigenvectors: Vec::with_capacity(indices.len() * self.dim),
            residuals: Vec::with_capacity(indices.len()),
            ..self.clone_metadata()
        };
        for &i in indices {
            out.eigenvalues.push(self.eigenvalues[i]);
            out.eigenvectors.extend_from_slice(self.eigenvector(i));
            out.residuals.push(self.residuals[i]);
        }
        Ok(out)
    }

    fn clone_metadata(&self) -> Self {
        Self {
            kind: self.kind,
            level: self.level,
            c0: self.c0,
            method: self.method,
            dim: self.dim,
            eigenvalues: Vec::new(),
            eigenvectors: Vec::new(),
            residuals: Vec::new(),
            mass: self.mass.clone(),
            vertex_map: self.vertex_map.clone(),
        }
    }

    /// Replaces eigenvector `i`. Intended for diagnostics and tests that need
    /// deliberately corrupted input.
    pub fn set_eigenvector(&mut self, i: usize, v: &[f64]) -> Result<()> {
        check_dim(self.dim, v.len())?;
        self.eigenvectors[i * self.dim..(i + 1) * self.dim].copy_from_slice(v);
        Ok(())
    }

    /// `max |⟨φ_i, φ_j⟩_m − δ_ij|` over all stored pairs.
    pub fn orthonormality_error(&self) -> f64 {
        let k = self.len();
        let weighted = Mat::<f64>::from_fn(self.dim, k, |r, c| self.eigenvector(c)[r] * self.mass[r].sqrt());
        let gram = weighted.transpose() * &weighted;
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }
}

fn normalize_m(v: &mut [f64], mass: &[f64]) {
    let norm = v.iter().zip(mass).map(|(x, m)| m * x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Makes the entry of largest magnitude positive, breaking ties toward the
/// lowest index.
pub fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if let Some(&pivot) = v.iter().find(|x| x.abs() >= max - SIGN_TIE) {
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `D = M^-1/2 S M^-1/2`. With integer inverse masses the scale factors
/// `sqrt(w_i w_j)` are exact whenever `w_i w_j` is a perfect square.
pub fn symmetrize(op: &OperatorBundle) -> CsrMatrix {
    let w = op.inv_mass();
    let triplets = op
        .stiffness()
        .triplets()
        .map(|(i, j, v)| (i, j, v * (w[i] * w[j]).sqrt()))
        .collect();
    CsrMatrix::from_triplets(op.dim(), triplets).expect("indices come from a valid matrix")
}

/// Full spectrum by dense symmetric eigendecomposition.
pub fn eig_full(op: &OperatorBundle) -> Result<Spectrum> {
    eig_full_with(op, &SolverOptions::default())
}

pub fn eig_full_with(op: &OperatorBundle, opts: &SolverOptions) -> Result<Spectrum> {
    let n = op.dim();
    if n > opts.dense_max_dim {
        return Err(Error::Resource {
            what: "dense eigensolve dimension (use eig_partial)",
            requested: n,
            limit: opts.dense_max_dim,
        });
    }
    let d = symmetrize(op);
    let mut dense = Mat::<f64>::zeros(n, n);
    for (i, j, v) in d.triplets() {
        dense[(i, j)] = v;
    }
    let evd = dense
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("dense eigensolver failed: {e:?}")))?;
    drop(dense);

    let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let mut flat = Vec::with_capacity(n * n);
    for c in 0..n {
        flat.extend(u.col(c).iter().copied());
    }
    drop(evd);
    finish(op, SolveMethod::Dense, values, flat, opts)
}

/// Back-transforms unit eigenvectors of `D`, fixes signs and records residuals.
fn finish(op: &OperatorBundle, method: SolveMethod, values: Vec<f64>, mut vectors: Vec<f64>, opts: &SolverOptions) -> Result<Spectrum> {
    let n = op.dim();
    let scale: Vec<f64> = op.inv_mass().iter().map(|w| w.sqrt()).collect();
    let mut residuals = Vec::with_capacity(values.len());
    for (k, &lambda) in values.iter().enumerate() {
        let phi = &mut vectors[k * n..(k + 1) * n];
        for (x, s) in phi.iter_mut().zip(&scale) {
            *x *= s;
        }
        normalize_m(phi, op.mass());
        fix_sign(phi);
        let s_phi = op.stiffness().mul_vec(phi)?;
        let r = s_phi
            .iter()
            .zip(phi.iter())
            .zip(op.mass())
            .map(|((sp, p), m)| (sp - lambda * m * p).abs())
            .fold(0.0, f64::max);
        residuals.push(r);
        if r > opts.residual_tol * lambda.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "eigenpair {} (lambda = {lambda}) has residual {r:e} above tolerance",
                k + 1
            )));
        }
    }
    Ok(Spectrum {
        kind: op.kind,
        level: op.level,
        c0: op.c0,
        method,
        dim: n,
        eigenvalues: values,
        eigenvectors: vectors,
        residuals,
        mass: op.mass().to_vec(),
        vertex_map: op.vertex_map().to_vec(),
    })
}

/// `k` extremal eigenpairs by Lanczos with full reorthogonalization.
///
/// A single Krylov sequence sees one direction per eigenspace, so converged
/// pairs are locked and the iteration is restarted in their orthogonal
/// complement until a restart fails to produce anything more extreme than the
/// current `k`-th pair. This recovers repeated eigenvalues.
pub fn eig_partial(op: &OperatorBundle, k: usize, which: Which) -> Result<Spectrum> {
    eig_partial_with(op, k, which, &SolverOptions::default())
}

pub fn eig_partial_with(op: &OperatorBundle, k: usize, which: Which, opts: &SolverOptions) -> Result<Spectrum> {
    let n = op.dim();
    if k > n {
        return Err(Error::Argument(format!("requested {k} eigenpairs of a {n}-dimensional operator")));
    }
    let d = symmetrize(op);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let more_extreme = |a: f64, b: f64| match which {
        Which::Smallest => a < b,
        Which::Largest => a > b,
    };

    let mut locked: Vec<(f64, Vec<f64>)> = Vec::new();
    while k > 0 && locked.len() < n {
        let want = k.min(n - locked.len());
        let found = lanczos_run(&d, &locked, want, which, opts, &mut rng)?;
        let kth = (locked.len() >= k).then(|| locked[k - 1].0);
        let improves = match (kth, found.first()) {
            (Some(t), Some(&(theta, _))) => more_extreme(theta, t),
            (None, Some(_)) => true,
            (_, None) => false,
        };
        locked.extend(found);
        locked.sort_by(|a, b| match which {
            Which::Smallest => a.0.total_cmp(&b.0),
            Which::Largest => b.0.total_cmp(&a.0),
        });
        if !improves {
            break;
        }
    }
    locked.truncate(k);
    locked.sort_by(|a, b| a.0.total_cmp(&b.0));

    let values = locked.iter().map(|p| p.0).collect();
    let vectors = locked.into_iter().flat_map(|p| p.1).collect();
    finish(op, SolveMethod::Iterative, values, vectors, opts)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Two passes of classical Gram-Schmidt against the locked vectors and the
/// current basis.
fn orthogonalize(w: &mut [f64], locked: &[(f64, Vec<f64>)], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in locked.iter().map(|p| &p.1).chain(basis) {
            let c = dot(w, q);
            axpy(-c, q, w);
        }
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, locked: &[(f64, Vec<f64>)], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(&mut v, locked, basis);
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            return Some(v);
        }
    }
    None
}

/// One Lanczos sequence in the complement of `locked`. Returns the `want`
/// most extreme Ritz pairs, most extreme first, once all have converged.
fn lanczos_run(
    d: &CsrMatrix,
    locked: &[(f64, Vec<f64>)],
    want: usize,
    which: Which,
    opts: &SolverOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = d.dim();
    let room = n - locked.len();
    let cap = opts.max_iterations.unwrap_or(n).min(room).max(want);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut v = random_unit(n, rng, locked, &[])
        .ok_or_else(|| Error::Numerical("could not draw a Lanczos start vector".into()))?;
    let mut last_check = 0;
    let mut worst = f64::INFINITY;
    loop {
        let mut w = d.mul_vec(&v)?;
        let alpha = dot(&w, &v);
        axpy(-alpha, &v, &mut w);
        if let (Some(prev), Some(&beta)) = (basis.last(), betas.last()) {
            axpy(-beta, prev, &mut w);
        }
        basis.push(v);
        alphas.push(alpha);
        orthogonalize(&mut w, locked, &basis);
        let beta = dot(&w, &w).sqrt();
        let m = basis.len();

        let scale = alphas.iter().map(|a| a.abs()).fold(beta, f64::max);
        let breakdown = beta <= 1e-12 * scale.max(1.0);
        let exhausted = m >= room;
        let due = m >= want && m - last_check >= (m / 10).max(5);
        if due || breakdown || exhausted || m >= cap {
            last_check = m;
            let (theta, s) = tridiagonal_eigen(&alphas, &betas);
            let order: Vec<usize> = match which {
                Which::Smallest => (0..m).collect(),
                Which::Largest => (0..m).rev().collect(),
            };
            let picked = &order[..want.min(m)];
            let floor = 64.0 * f64::EPSILON * theta.iter().fold(0.0f64, |a, t| a.max(t.abs()));
            let estimates: Vec<f64> = picked.iter().map(|&i| (beta * s[(m - 1, i)]).abs()).collect();
            worst = estimates.iter().copied().fold(0.0, f64::max);
            let converged = picked.len() == want
                && picked
                    .iter()
                    .zip(&estimates)
                    .all(|(&i, &r)| r <= (opts.lanczos_tol * theta[i].abs().max(1.0)).max(floor));
            if converged || exhausted {
                return Ok(picked
                    .iter()
                    .map(|&i| {
                        let mut y = vec![0.0; n];
                        for (j, q) in basis.iter().enumerate() {
                            axpy(s[(j, i)], q, &mut y);
                        }
                        let norm = dot(&y, &y).sqrt();
                        y.iter_mut().for_each(|x| *x /= norm);
                        (theta[i], y)
                    })
                    .collect());
            }
            if m >= cap {
                return Err(Error::NoConvergence {
                    iterations: m,
                    worst_residual: worst,
                    residuals: estimates,
                });
            }
        }

        if breakdown {
            // Invariant subspace found: continue in a fresh direction.
            betas.push(0.0);
            v = random_unit(n, rng, locked, &basis).ok_or(
                Error::NoConvergence {
                    iterations: m,
                    worst_residual: worst,
                    residuals: Vec::new(),
                },
            )?;
        } else {
            betas.push(beta);
            w.iter_mut().for_each(|x| *x /= beta);
            v = w;
        }
    }
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal
/// `alphas` and off-diagonal `betas` (extra trailing betas are ignored).
fn tridiagonal_eigen(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, Mat<f64>) {
    let m = alphas.len();
    let t = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i == j + 1 {
            betas[j]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    });
    let evd = t
        .self_adjoint_eigen(Side::Lower)
        .expect("symmetric tridiagonal eigensolve");
    let theta = evd.S().column_vector().iter().copied().collect();
    (theta, evd.U().to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_mesh;
    use crate::operator::assemble;

    #[test]
    fn level_zero_has_simple_zero() {
        let op = assemble(&build_mesh(0).unwrap(), OperatorKind::Full, 1.0).unwrap();
        let spec = eig_full(&op).unwrap();
        assert_eq!(spec.len(), 3);
        assert!(spec.eigenvalues()[0].abs() < 1e-12);
        assert!(spec.eigenvalues()[1] > 1.0);
        // The constant vector, m-normalized: Σ m = 3 at level 0.
        for &x in spec.eigenvector(0) {
            assert!((x - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetrized_matrix_is_symmetric() {
        let op = assemble(&build_mesh(2).unwrap(), OperatorKind::Full, 1.0).unwrap();
        let d = symmetrize(&op);
        for (i, j, v) in d.triplets() {
            assert!((d.get(j, i) - v).abs() <= 1e-15 * v.abs());
        }
        // M^{1/2}·1 is in the kernel.
        let root_m: Vec<f64> = op.mass().iter().map(|m| m.sqrt()).collect();
        let image = d.mul_vec(&root_m).unwrap();
        assert!(image.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn dense_guard() {
        let op = assemble(&build_mesh(2).unwrap(), OperatorKind::Full, 1.0).unwrap();
        let opts = SolverOptions {
            dense_max_dim: 10,
            ..Default::default()
        };
        assert!(matches!(eig_full_with(&op, &opts), Err(Error::Resource { .. })));
    }

    #[test]
    fn spectrum_invariants_level_two() {
        let mesh = build_mesh(2).unwrap();
        for kind in [OperatorKind::Full, OperatorKind::Dirichlet, OperatorKind::Boundary] {
            let op = assemble(&mesh, kind, 1.0).unwrap();
            let spec = eig_full(&op).unwrap();
            assert_eq!(spec.len(), op.dim());
            assert!(spec.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
            assert!(spec.orthonormality_error() < 1e-8);
            for (v, lambda) in spec.eigenvectors().zip(spec.eigenvalues()) {
                let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                let pivot = v.iter().find(|x| x.abs() >= max - 1e-12).unwrap();
                assert!(*pivot > 0.0, "sign rule, lambda = {lambda}");
            }
            match kind {
                OperatorKind::Dirichlet => assert!(spec.eigenvalues()[0] > 0.0),
                _ => assert!(spec.eigenvalues()[0].abs() < 1e-9),
            }
        }
    }

    #[test]
    fn partial_rejects_oversized_request() {
        let op = assemble(&build_mesh(1).unwrap(), OperatorKind::Full, 1.0).unwrap();
        assert!(matches!(eig_partial(&op, 14, Which::Smallest), Err(Error::Argument(_))));
    }

    #[test]
    fn partial_full_window_matches_dense() {
        let op = assemble(&build_mesh(1).unwrap(), OperatorKind::Full, 1.0).unwrap();
        let dense = eig_full(&op).unwrap();
        let lanczos = eig_partial(&op, op.dim(), Which::Smallest).unwrap();
        for (a, b) in dense.eigenvalues().iter().zip(lanczos.eigenvalues()) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn sign_rule_prefers_lowest_index_on_ties() {
        let mut v = vec![-1.0, 0.5, 1.0];
        fix_sign(&mut v);
        assert_eq!(v, vec![1.0, -0.5, -1.0]);
    }
}
