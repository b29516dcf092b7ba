use std::collections::HashMap;

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Mesh;
use crate::solver::Spectrum;

/// Default threshold for the zero contour class.
pub const DEFAULT_CONTOUR_EPS: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourClass {
    /// `|φ| ≤ ε`
    Zero,
    /// `φ > ε`
    Positive,
    /// `φ < −ε`
    Negative,
}

impl ContourClass {
    pub fn of(value: f64, eps: f64) -> Self {
        if value > eps {
            ContourClass::Positive
        } else if value < -eps {
            ContourClass::Negative
        } else {
            ContourClass::Zero
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContourClass::Zero => "zero",
            ContourClass::Positive => "positive",
            ContourClass::Negative => "negative",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ContourCounts {
    pub zero: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationEntry {
    /// 1-based eigenpair index.
    pub index: usize,
    pub eigenvalue: f64,
    /// `Σ_boundary m φ² / Σ m φ²`.
    pub boundary_mass_fraction: f64,
    /// Share of `Σ m φ²` at each hop distance from the boundary; entry `d`
    /// covers vertices at distance `d`.
    pub distance_profile: Vec<f64>,
    pub contour: ContourCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationReport {
    pub eps: f64,
    pub entries: Vec<LocalizationEntry>,
}

impl LocalizationReport {
    /// Mean boundary mass fraction over the entries selected by `indices`
    /// (positions in `entries`).
    pub fn mean_bmf(&self, indices: impl IntoIterator<Item = usize>) -> f64 {
        let (sum, count) = indices
            .into_iter()
            .fold((0.0, 0usize), |(s, c), i| (s + self.entries[i].boundary_mass_fraction, c + 1));
        sum / count as f64
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("contour threshold must be positive, got {eps}")))
    }
}

/// Boundary mass fraction, hop-distance mass profile and contour class counts
/// of every eigenpair in `spec`.
pub fn localization_report(spec: &Spectrum, mesh: &Mesh, eps: f64) -> Result<LocalizationReport> {
    check_eps(eps)?;
    if spec.vertex_map().iter().any(|&v| v >= mesh.num_vertices()) {
        return Err(Error::Argument("spectrum does not belong to this mesh".into()));
    }
    let distance = mesh.boundary_distance();
    let rows: Vec<(bool, usize)> = spec
        .vertex_map()
        .iter()
        .map(|&v| (mesh.is_boundary(v), distance[v]))
        .collect();
    let depth = rows.iter().map(|r| r.1).max().unwrap_or(0);

    let entries = spec
        .eigenvectors()
        .zip(spec.eigenvalues())
        .enumerate()
        .map(|(k, (phi, &lambda))| {
            let mut profile = vec![0.0; depth + 1];
            let mut total = 0.0;
            let mut boundary = 0.0;
            for ((&x, &m), &(on_boundary, d)) in phi.iter().zip(spec.mass()).zip(&rows) {
                let w = m * x * x;
                total += w;
                profile[d] += w;
                if on_boundary {
                    boundary += w;
                }
            }
            profile.iter_mut().for_each(|p| *p /= total);

            let max = phi.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let mut contour = ContourCounts::default();
            for &x in phi {
                match ContourClass::of(x / max, eps) {
                    ContourClass::Zero => contour.zero += 1,
                    ContourClass::Positive => contour.positive += 1,
                    ContourClass::Negative => contour.negative += 1,
                }
            }
            LocalizationEntry {
                index: k + 1,
                eigenvalue: lambda,
                boundary_mass_fraction: boundary / total,
                distance_profile: profile,
                contour,
            }
        })
        .collect();
    Ok(LocalizationReport { eps, entries })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContourPoint {
    pub vertex: usize,
    pub x: f64,
    pub y: f64,
    /// Max-normalized eigenvector value.
    pub value: f64,
    pub class: ContourClass,
}

/// Plot data for eigenpair `index` (0-based): max-normalized values with
/// their contour classes at every operator vertex.
pub fn contour_points(spec: &Spectrum, mesh: &Mesh, index: usize, eps: f64) -> Result<Vec<ContourPoint>> {
    check_eps(eps)?;
    if index >= spec.len() {
        return Err(Error::IndexOutOfRange {
            index,
            len: spec.len(),
        });
    }
    let phi = spec.eigenvector(index);
    let max = phi.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    spec.vertex_map()
        .iter()
        .zip(phi)
        .map(|(&v, &x)| {
            let (px, py) = mesh.cartesian(v)?;
            let value = x / max;
            Ok(ContourPoint {
                vertex: v,
                x: px,
                y: py,
                value,
                class: ContourClass::of(value, eps),
            })
        })
        .collect()
}

/// Best full-operator match for one Dirichlet eigenvector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EigenvectorPair {
    /// 1-based position in the full spectrum.
    pub full_index: usize,
    /// 1-based position in the Dirichlet spectrum.
    pub dirichlet_index: usize,
    pub similarity: f64,
    /// `|λ_j − λ̃_j̃|`
    pub eigenvalue_gap: f64,
}

/// Matches Dirichlet eigenvectors with full-operator eigenvectors restricted
/// to the interior.
///
/// Similarity is `|⟨φ_j|_I, φ̃_j̃⟩|` in the interior `m`-inner product with
/// both factors normalized there. Each Dirichlet vector keeps its best match;
/// the `top_k` most similar pairs are returned, most similar first.
pub fn pair_eigenvectors(
    spec_full: &Spectrum,
    spec_dirichlet: &Spectrum,
    mesh: &Mesh,
    top_k: usize,
) -> Result<Vec<EigenvectorPair>> {
    let position: HashMap<usize, usize> = spec_full
        .vertex_map()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let rows: Vec<usize> = spec_dirichlet
        .vertex_map()
        .iter()
        .map(|v| {
            position
                .get(v)
                .copied()
                .ok_or_else(|| Error::Argument(format!("vertex {v} missing from the full spectrum")))
        })
        .collect::<Result<_>>()?;
    if rows.iter().any(|&r| r >= mesh.num_vertices()) {
        return Err(Error::Argument("spectra do not belong to this mesh".into()));
    }
    let weight: Vec<f64> = spec_dirichlet.mass().iter().map(|m| m.sqrt()).collect();
    let ni = rows.len();

    let normalized = |count: usize, value: &dyn Fn(usize, usize) -> f64| -> Mat<f64> {
        let mut a = Mat::<f64>::from_fn(ni, count, |r, c| weight[r] * value(r, c));
        for c in 0..count {
            let norm = a.col(c).norm_l2();
            if norm > 0.0 {
                for r in 0..ni {
                    a[(r, c)] /= norm;
                }
            }
        }
        a
    };
    let a = normalized(spec_full.len(), &|r, c| spec_full.eigenvector(c)[rows[r]]);
    let b = normalized(spec_dirichlet.len(), &|r, c| spec_dirichlet.eigenvector(c)[r]);
    let gram = a.transpose() * &b;

    let mut pairs: Vec<EigenvectorPair> = (0..spec_dirichlet.len())
        .filter_map(|jd| {
            (0..spec_full.len())
                .map(|j| (j, gram[(j, jd)].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(j, similarity)| EigenvectorPair {
                    full_index: j + 1,
                    dirichlet_index: jd + 1,
                    similarity,
                    eigenvalue_gap: (spec_full.eigenvalues()[j] - spec_dirichlet.eigenvalues()[jd]).abs(),
                })
        })
        .collect();
    pairs.sort_by(|x, y| y.similarity.total_cmp(&x.similarity).then(x.dirichlet_index.cmp(&y.dirichlet_index)));
    pairs.truncate(top_k);
    Ok(pairs)
}
