//! Shared fixtures for the criterion benchmarks.

use snowlab_core::{assemble, build_mesh, Mesh, OperatorBundle, OperatorKind};

/// Mesh and full operator at `level`, with the default boundary coupling.
pub fn fixture(level: u32) -> (Mesh, OperatorBundle) {
    let mesh = build_mesh(level).expect("level within guard");
    let op = assemble(&mesh, OperatorKind::Full, 1.0).expect("valid coupling");
    (mesh, op)
}
