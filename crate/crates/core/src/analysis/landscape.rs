//! High-frequency landscape `u = |L|·1` and the pointwise bound it gives on
//! max-normalized eigenvectors: `φ_i ≤ u_i / λ` whenever `L φ = λ φ`, `λ > 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Mesh;
use crate::operator::{check_dim, OperatorBundle, OperatorKind};
use crate::solver::Spectrum;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LandscapeVector {
    pub kind: OperatorKind,
    pub level: u32,
    pub c0: f64,
    pub values: Vec<f64>,
    pub vertex_map: Vec<usize>,
}

/// Absolute row sums of `L = M⁻¹S`. With integer inverse masses and unit
/// coupling every entry is an integer, so the sums are exact.
pub fn landscape(op: &OperatorBundle) -> LandscapeVector {
    let s = op.stiffness();
    let values = (0..op.dim())
        .map(|i| op.inv_mass()[i] * s.row(i).map(|(_, v)| v.abs()).sum::<f64>())
        .collect();
    LandscapeVector {
        kind: op.kind,
        level: op.level,
        c0: op.c0,
        values,
        vertex_map: op.vertex_map().to_vec(),
    }
}

/// Closed-form landscape of the full operator at unit coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LandscapeClosedForm {
    /// `8·3^(2n+1)` at interior vertices.
    pub interior: u64,
    /// `2^(4n+3)` at boundary vertices with two neighbors.
    pub boundary_tip: u64,
    /// `2^(4n+3) + 3·2^(2n+2)` at the remaining boundary vertices.
    pub boundary_base: u64,
}

impl LandscapeClosedForm {
    pub fn at_level(n: u32) -> Self {
        Self {
            interior: 8 * 3u64.pow(2 * n + 1),
            boundary_tip: 1u64 << (4 * n + 3),
            boundary_base: (1u64 << (4 * n + 3)) + 3 * (1u64 << (2 * n + 2)),
        }
    }
}

/// Comparison of a computed landscape with [`LandscapeClosedForm`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedFormComparison {
    pub expected: LandscapeClosedForm,
    /// Mesh vertices whose value differs from the closed form for their class.
    pub mismatches: Vec<usize>,
    /// Distinct values seen on interior and on boundary vertices, ascending.
    pub interior_values: Vec<f64>,
    pub boundary_values: Vec<f64>,
}

impl ClosedFormComparison {
    pub fn exact(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Exact (zero-tolerance) comparison of a full, unit-coupling landscape with
/// the closed form. Tip vertices are identified by mesh degree 2.
pub fn compare_closed_form(u: &LandscapeVector, mesh: &Mesh) -> Result<ClosedFormComparison> {
    if u.kind != OperatorKind::Full || u.c0 != 1.0 {
        return Err(Error::Argument("closed form applies to the full operator with c0 = 1".into()));
    }
    check_dim(mesh.num_vertices(), u.values.len())?;
    let expected = LandscapeClosedForm::at_level(mesh.level());
    let degrees = mesh.degrees();
    let mut mismatches = Vec::new();
    let mut interior_values = Vec::new();
    let mut boundary_values = Vec::new();
    for (&v, &value) in u.vertex_map.iter().zip(&u.values) {
        let target = if !mesh.is_boundary(v) {
            interior_values.push(value);
            expected.interior
        } else {
            boundary_values.push(value);
            if degrees[v] == 2 {
                expected.boundary_tip
            } else {
                expected.boundary_base
            }
        };
        // Both sides are integers below 2^53, so the conversion is exact.
        if value != target as f64 {
            mismatches.push(v);
        }
    }
    let distinct = |mut xs: Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    };
    Ok(ClosedFormComparison {
        expected,
        mismatches,
        interior_values: distinct(interior_values),
        boundary_values: distinct(boundary_values),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundViolation {
    /// 1-based eigenpair index.
    pub pair: usize,
    /// Row of the operator (not the mesh vertex).
    pub row: usize,
    pub phi: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub checked: usize,
    /// 1-based indices of pairs with `λ` numerically zero, where the bound
    /// does not apply.
    pub not_applicable: Vec<usize>,
    pub violations: Vec<BoundViolation>,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Absolute slack allowed on `φ_i ≤ u_i/λ` after max-normalization.
pub const BOUND_TOLERANCE: f64 = 1e-10;

/// Checks `φ_i ≤ u_i / λ` for every pair with `λ > 0`, with `φ` scaled so
/// that `max |φ_i| = 1`.
pub fn landscape_bound_check(spec: &Spectrum, u: &LandscapeVector) -> Result<BoundCheck> {
    check_dim(spec.dim(), u.values.len())?;
    if spec.vertex_map() != u.vertex_map.as_slice() {
        return Err(Error::Argument("spectrum and landscape come from different operators".into()));
    }
    let top = spec.eigenvalues().iter().fold(1.0f64, |a, l| a.max(l.abs()));
    let zero = 1e-9 * top;
    let mut out = BoundCheck {
        checked: 0,
        not_applicable: Vec::new(),
        violations: Vec::new(),
    };
    for (k, (phi, &lambda)) in spec.eigenvectors().zip(spec.eigenvalues()).enumerate() {
        if lambda <= zero {
            out.not_applicable.push(k + 1);
            continue;
        }
        out.checked += 1;
        let max = phi.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for (row, (&p, &ui)) in phi.iter().zip(&u.values).enumerate() {
            let (p, bound) = (p / max, ui / lambda);
            if p > bound + BOUND_TOLERANCE {
                out.violations.push(BoundViolation {
                    pair: k + 1,
                    row,
                    phi: p,
                    bound,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_mesh;
    use crate::operator::assemble;
    use crate::solver::eig_full;

    #[test]
    fn closed_form_values() {
        let c = LandscapeClosedForm::at_level(4);
        assert_eq!(c.interior, 157464);
        assert_eq!(c.boundary_tip, 524288);
        assert_eq!(c.boundary_base, 527360);
    }

    #[test]
    fn level_four_landscape_is_exact() {
        let mesh = build_mesh(4).unwrap();
        let u = landscape(&assemble(&mesh, OperatorKind::Full, 1.0).unwrap());
        assert!(u.values.iter().all(|&x| x > 0.0));
        let cmp = compare_closed_form(&u, &mesh).unwrap();
        assert!(cmp.exact(), "{:?}", &cmp.mismatches[..cmp.mismatches.len().min(5)]);
        assert_eq!(cmp.interior_values, vec![157464.0]);
        assert_eq!(cmp.boundary_values, vec![524288.0, 527360.0]);
    }

    #[test]
    fn closed_form_needs_unit_coupling() {
        let mesh = build_mesh(1).unwrap();
        let u = landscape(&assemble(&mesh, OperatorKind::Full, 2.0).unwrap());
        assert!(compare_closed_form(&u, &mesh).is_err());
    }

    #[test]
    fn bound_holds_and_detects_corruption() {
        let mesh = build_mesh(2).unwrap();
        let op = assemble(&mesh, OperatorKind::Full, 1.0).unwrap();
        let mut spec = eig_full(&op).unwrap();
        let u = landscape(&op);
        let check = landscape_bound_check(&spec, &u).unwrap();
        assert!(check.holds());
        assert_eq!(check.not_applicable, vec![1]);
        assert_eq!(check.checked, spec.len() - 1);

        // Inflate an interior entry of the top mode to the maximum; the bound
        // there is u/λ < 1 because λ exceeds the interior landscape value.
        let target = spec.len() - 1;
        let lambda = spec.eigenvalues()[target];
        let row = mesh.interior_vertices()[0];
        assert!(u.values[row] < lambda);
        let mut v = spec.eigenvector(target).to_vec();
        let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        v[row] = 10.0 * max;
        spec.set_eigenvector(target, &v).unwrap();
        let check = landscape_bound_check(&spec, &u).unwrap();
        assert_eq!(check.violations.len(), 1);
        assert!(check.violations.iter().any(|b| b.pair == target + 1 && b.row == row));
    }
}
