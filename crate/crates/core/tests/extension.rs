use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowlab_core::{
    assemble, build_mesh, decay_profile, eig_full, energy_split, BoundaryData, HarmonicExtender, OperatorKind,
};

#[test]
fn high_frequency_boundary_data_is_damped() {
    let mesh = build_mesh(3).unwrap();
    let ext = HarmonicExtender::new(&mesh, 1.0).unwrap();
    let spec = eig_full(&assemble(&mesh, OperatorKind::Boundary, 1.0).unwrap()).unwrap();
    let ratio = |k: usize| {
        let f = BoundaryData::new(3, spec.eigenvector(k).to_vec()).unwrap();
        let u = ext.extend(&f).unwrap();
        let e = energy_split(&mesh, &u, 1.0).unwrap();
        e.interior / e.boundary
    };
    let low = ratio(1);
    let high = ratio(spec.len() - 1);
    assert!(high < low, "high {high} vs low {low}");
}

#[test]
fn single_vertex_data_decays_inward() {
    let mesh = build_mesh(3).unwrap();
    let ext = HarmonicExtender::new(&mesh, 1.0).unwrap();
    let nb = mesh.boundary_vertices().len();
    for k in [0, 5, nb / 2] {
        let mut values = vec![0.0; nb];
        values[k] = 1.0;
        let u = ext.extend(&BoundaryData::new(3, values).unwrap()).unwrap();
        assert!(u.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let profile = decay_profile(&mesh, &u).unwrap();
        assert!(profile[0].sup < 1.0);
        assert!(profile.windows(2).all(|w| w[1].sup <= w[0].sup), "vertex {k}: {profile:?}");
    }
}

#[test]
fn extension_does_not_depend_on_solver_reuse() {
    let mesh = build_mesh(2).unwrap();
    let ext = HarmonicExtender::new(&mesh, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let f = BoundaryData::new(2, (0..48).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let a = ext.extend(&f).unwrap();
    let b = snowlab_core::harmonic_extend(&mesh, &f, 2.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn energy_minimality_against_perturbations() {
    let mesh = build_mesh(2).unwrap();
    let ext = HarmonicExtender::new(&mesh, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = BoundaryData::new(2, (0..48).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let u = ext.extend(&f).unwrap();
    let base = energy_split(&mesh, &u, 1.0).unwrap();
    for _ in 0..100 {
        let mut p = u.clone();
        for v in mesh.interior_vertices() {
            p[v] += 1e-3 * rng.random_range(-1.0..1.0);
        }
        let e = energy_split(&mesh, &p, 1.0).unwrap();
        assert!(e.interior >= base.interior);
        assert_eq!(e.boundary, base.boundary, "perturbations leave boundary edges alone");
    }
}
