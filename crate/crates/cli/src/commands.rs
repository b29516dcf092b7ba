use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use snowlab_core::analysis::{
    compare_closed_form, contour_points, counting_function, landscape as landscape_vector, landscape_bound_check,
    localization_report, loglog_slopes, multiplicity_groups, pair_eigenvectors, regime_threshold,
};
use snowlab_core::io::{self, fmt_f64, VectorSidecar};
use snowlab_core::solver::{NORMALIZATION, SIGN_RULE};
use snowlab_core::{
    assemble as assemble_operator, build_mesh_with_guard, decay_profile, eig_full_with, eig_partial_with,
    energy_sequence, energy_split, validate, BoundaryData, Error, HarmonicExtender, Mesh, OperatorBundle,
    OperatorKind, Result, RunConfig, SolveMethod, SolverOptions, Spectrum, Which,
};

use crate::{Pattern, TestFunction};

const MULTIPLICITY_TOL: f64 = 1e-6;
const DEFAULT_PAIRS: usize = 20;

/// Files written by one subcommand, recorded in its manifest.
struct Run<'a> {
    config: &'a RunConfig,
    subcommand: &'static str,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    fn start(config: &'a RunConfig, guard: u32, subcommand: &'static str) -> Result<Self> {
        config.validate(guard)?;
        fs::create_dir_all(&config.out).map_err(|e| Error::Io {
            path: config.out.clone(),
            source: e,
        })?;
        Ok(Self {
            config,
            subcommand,
            outputs: Vec::new(),
        })
    }

    fn mesh(&self, guard: u32) -> Result<Mesh> {
        build_mesh_with_guard(self.config.level, guard)
    }

    fn write(&mut self, name: &str, emit: impl FnOnce(&mut dyn std::io::Write) -> Result<()>) -> Result<()> {
        let path = self.config.out.join(name);
        let mut file = io::create(&path)?;
        emit(&mut file)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w).map_err(|e| Error::Io {
                path: name.into(),
                source: e,
            })
        })
    }

    fn write_csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
        self.write(name, |w| io::write_csv(w, header, rows))
    }

    /// Writes `manifest.json` with the tool version, config and config hash.
    fn finish(mut self) -> Result<()> {
        let manifest = json!({
            "tool": "snowlab",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.subcommand,
            "config": self.config,
            "config_hash": self.config.hash()?,
            "outputs": std::mem::take(&mut self.outputs),
        });
        self.write_json("manifest.json", &manifest)
    }
}

fn solver_options(config: &RunConfig) -> SolverOptions {
    SolverOptions {
        seed: config.seed,
        ..SolverOptions::default()
    }
}

/// Spectrum requested by `--solver`, `--k` and `--which`.
fn solve(config: &RunConfig, op: &OperatorBundle) -> Result<Spectrum> {
    let opts = solver_options(config);
    match config.solver {
        SolveMethod::Dense => {
            let spec = eig_full_with(op, &opts)?;
            let Some(k) = config.k else {
                return Ok(spec);
            };
            if k > spec.len() {
                return Err(Error::Argument(format!("k = {k} exceeds the dimension {}", spec.len())));
            }
            let window: Vec<usize> = match config.which {
                Which::Smallest => (0..k).collect(),
                Which::Largest => (spec.len() - k..spec.len()).collect(),
            };
            spec.select(&window)
        }
        SolveMethod::Iterative => {
            let k = config
                .k
                .ok_or_else(|| Error::Argument("the iterative solver needs --k".into()))?;
            eig_partial_with(op, k, config.which, &opts)
        }
    }
}

fn complete_spectrum(config: &RunConfig, op: &OperatorBundle, what: &str) -> Result<Spectrum> {
    if config.solver != SolveMethod::Dense || config.k.is_some() {
        return Err(Error::Argument(format!("{what} needs the complete spectrum: use the dense solver without --k")));
    }
    eig_full_with(op, &solver_options(config))
}

fn sidecar(spec: &Spectrum) -> VectorSidecar {
    VectorSidecar {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        kind: spec.kind.to_string(),
        level: spec.level,
        c0: spec.c0,
        dimension: spec.dim(),
        count: spec.len(),
        normalization: NORMALIZATION.into(),
        sign_rule: SIGN_RULE.into(),
        vertex_map: spec.vertex_map().to_vec(),
    }
}

pub fn mesh(config: &RunConfig, guard: u32) -> Result<()> {
    let mut run = Run::start(config, guard, "mesh")?;
    let mesh = run.mesh(guard)?;
    let report = validate(&mesh);
    run.write("mesh.json", |w| io::write_mesh_json(w, &mesh))?;
    run.write_json("validation.json", &report)?;
    println!(
        "level {}: {} vertices ({} boundary, {} interior), {} triangles, invariants {}",
        mesh.level(),
        mesh.num_vertices(),
        mesh.boundary_vertices().len(),
        mesh.num_vertices() - mesh.boundary_vertices().len(),
        mesh.triangles().len(),
        if report.all_passed() { "ok" } else { "FAILED" }
    );
    if let Some(bad) = report.failures().next() {
        return Err(Error::InvalidMesh(format!("invariant {} fails", bad.name)));
    }
    run.finish()
}

pub fn assemble(config: &RunConfig, guard: u32) -> Result<()> {
    let mut run = Run::start(config, guard, "assemble")?;
    let mesh = run.mesh(guard)?;
    let op = assemble_operator(&mesh, config.kind, config.c0)?;
    run.write("stiffness.mtx", |w| io::write_matrix_market(w, op.stiffness()))?;
    run.write("mass.csv", |w| io::write_mass_csv(w, op.mass()))?;
    run.write_json(
        "operator.json",
        &json!({
            "kind": op.kind,
            "level": op.level,
            "c0": op.c0,
            "dimension": op.dim(),
            "nonzeros": op.stiffness().nnz(),
            "vertex_map": op.vertex_map(),
        }),
    )?;
    println!("{} operator at level {}: dimension {}, {} nonzeros", op.kind, op.level, op.dim(), op.stiffness().nnz());
    run.finish()
}

pub fn eig(config: &RunConfig, guard: u32) -> Result<()> {
    let mut run = Run::start(config, guard, "eig")?;
    let mesh = run.mesh(guard)?;
    let op = assemble_operator(&mesh, config.kind, config.c0)?;
    let spec = solve(config, &op)?;
    run.write("eigenvalues.csv", |w| io::write_eigenvalues_csv(w, spec.eigenvalues(), spec.residuals()))?;
    run.write("eigenvectors.snwv", |w| io::write_snwv(w, spec.dim(), spec.eigenvectors_flat()))?;
    run.write_json("eigenvectors.json", &sidecar(&spec))?;
    let worst = spec.residuals().iter().copied().fold(0.0, f64::max);
    match (spec.eigenvalues().first(), spec.eigenvalues().last()) {
        (Some(lo), Some(hi)) => println!(
            "{} eigenpairs of the {} operator (dimension {}), eigenvalues {} .. {}, worst residual {:e}",
            spec.len(),
            spec.kind,
            spec.dim(),
            fmt_f64(*lo),
            fmt_f64(*hi),
            worst
        ),
        _ => println!("the {} operator has dimension 0", spec.kind),
    }
    run.finish()
}

pub fn count(config: &RunConfig, guard: u32) -> Result<()> {
    let mut run = Run::start(config, guard, "count")?;
    let mesh = run.mesh(guard)?;
    let op = assemble_operator(&mesh, config.kind, config.c0)?;
    let spec = complete_spectrum(config, &op, "count")?;
    run.write_csv(
        "counting.csv",
        "index,eigenvalue,count",
        spec.eigenvalues()
            .iter()
            .enumerate()
            .map(|(j, &l)| format!("{},{},{}", j + 1, fmt_f64(l), counting_function(&spec, l))),
    )?;
    let groups = multiplicity_groups(&spec, MULTIPLICITY_TOL)?;
    run.write_csv(
        "multiplicities.csv",
        "first,size,eigenvalue",
        groups
            .iter()
            .map(|g| format!("{},{},{}", g.first, g.size, fmt_f64(g.eigenvalue))),
    )?;
    let largest = groups.iter().map(|g| g.size).max().unwrap_or(0);
    println!("{} eigenvalues in {} groups, largest multiplicity {largest}", spec.len(), groups.len());

    // The regime report compares the full and Dirichlet spectra.
    let full_op;
    let full = if config.kind == OperatorKind::Full {
        &spec
    } else {
        full_op = complete_spectrum(config, &assemble_operator(&mesh, OperatorKind::Full, config.c0)?, "count")?;
        &full_op
    };
    let dirichlet_op = assemble_operator(&mesh, OperatorKind::Dirichlet, config.c0)?;
    let (regime, slopes, pairing) = if dirichlet_op.dim() == 0 {
        (None, None, Vec::new())
    } else {
        let dirichlet = complete_spectrum(config, &dirichlet_op, "count")?;
        let regime = regime_threshold(full, &dirichlet)?;
        let slopes = loglog_slopes(full, regime.lambda_star).ok();
        let pairing = pair_eigenvectors(full, &dirichlet, &mesh, config.k.unwrap_or(DEFAULT_PAIRS))?;
        println!(
            "max Dirichlet eigenvalue {} (index {}), nearest full eigenvalue {} (index {})",
            fmt_f64(regime.lambda_star),
            regime.dirichlet_index,
            fmt_f64(regime.nearest_eigenvalue),
            regime.index_star
        );
        if let Some(s) = &slopes {
            println!("log-log slopes: {:.4} below, {:.4} above", s.low.slope, s.high.slope);
        }
        (Some(regime), slopes, pairing)
    };
    run.write_json(
        "regime.json",
        &json!({ "regime": regime, "slopes": slopes, "multiplicity_tolerance": MULTIPLICITY_TOL }),
    )?;
    run.write_json("pairing.json", &pairing)?;
    run.finish()
}

pub fn landscape(config: &RunConfig, guard: u32) -> Result<()> {
    let mut run = Run::start(config, guard, "landscape")?;
    let mesh = run.mesh(guard)?;
    let op = assemble_operator(&mesh, config.kind, config.c0)?;
    let u = landscape_vector(&op);
    run.write_csv(
        "landscape.csv",
        "vertex,value",
        u.vertex_map
            .iter()
            .zip(&u.values)
            .map(|(v, x)| format!("{v},{}", fmt_f64(*x))),
    )?;
    let closed_form = if config.kind == OperatorKind::Full && config.c0 == 1.0 {
        Some(compare_closed_form(&u, &mesh)?)
    } else {
        None
    };
    let spec = solve(config, &op)?;
    let bound = landscape_bound_check(&spec, &u)?;
    run.write_json(
        "landscape.json",
        &json!({ "kind": u.kind, "level": u.level, "c0": u.c0, "closed_form": closed_form, "bound_check": bound }),
    )?;
    if let Some(c) = &closed_form {
        println!(
            "interior values {:?}, boundary values {:?}, closed form {}",
            c.interior_values,
            c.boundary_values,
            if c.exact() { "exact" } else { "MISMATCH" }
        );
    }
    println!(
        "bound check: {} pairs checked, {} violations",
        bound.checked,
        bound.violations.len()
    );
    run.finish()
}

pub fn localize(config: &RunConfig, guard: u32, mode: Option<usize>) -> Result<()> {
    let mut run = Run::start(config, guard, "localize")?;
    let mesh = run.mesh(guard)?;
    let op = assemble_operator(&mesh, config.kind, config.c0)?;
    let spec = solve(config, &op)?;
    let report = localization_report(&spec, &mesh, config.eps)?;
    run.write_csv(
        "localization.csv",
        "index,eigenvalue,bmf",
        report.entries.iter().map(|e| {
            format!("{},{},{}", e.index, fmt_f64(e.eigenvalue), fmt_f64(e.boundary_mass_fraction))
        }),
    )?;
    run.write_json("localization.json", &report)?;

    let mode = mode.unwrap_or(spec.len());
    if mode == 0 || mode > spec.len() {
        return Err(Error::Argument(format!("--mode must lie in 1..={}", spec.len())));
    }
    let points = contour_points(&spec, &mesh, mode - 1, config.eps)?;
    run.write_csv(
        &format!("contour_{mode}.csv"),
        "vertex,x,y,value,class",
        points.iter().map(|p| {
            format!("{},{},{},{},{}", p.vertex, fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.value), p.class.as_str())
        }),
    )?;
    let entry = &report.entries[mode - 1];
    println!(
        "{} modes; mode {mode}: eigenvalue {}, boundary mass fraction {:.6}",
        report.entries.len(),
        fmt_f64(entry.eigenvalue),
        entry.boundary_mass_fraction
    );
    run.finish()
}

fn pattern_data(mesh: &Mesh, pattern: Pattern, seed: u64) -> Result<BoundaryData> {
    let nb = mesh.boundary_vertices().len();
    match pattern {
        Pattern::Alternating => BoundaryData::new(
            mesh.level(),
            (0..nb).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        ),
        Pattern::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            BoundaryData::new(mesh.level(), (0..nb).map(|_| rng.random_range(-1.0..1.0)).collect())
        }
        Pattern::Linear => BoundaryData::from_fn(mesh, |x, _| x),
        Pattern::Constant => BoundaryData::new(mesh.level(), vec![1.0; nb]),
    }
}

pub fn extend(config: &RunConfig, guard: u32, boundary: Option<&Path>, pattern: Pattern) -> Result<()> {
    let mut run = Run::start(config, guard, "extend")?;
    let mesh = run.mesh(guard)?;
    let data = match boundary {
        Some(path) => io::read_boundary_csv(io::open(path)?, mesh.level())?,
        None => pattern_data(&mesh, pattern, config.seed)?,
    };
    let u = HarmonicExtender::new(&mesh, config.c0)?.extend(&data)?;
    let split = energy_split(&mesh, &u, config.c0)?;
    let profile = decay_profile(&mesh, &u)?;
    run.write("boundary.csv", |w| io::write_boundary_csv(w, &data))?;
    run.write("extension.snwv", |w| io::write_snwv(w, u.len(), &u))?;
    run.write_json(
        "extension.json",
        &VectorSidecar {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            kind: "harmonic-extension".into(),
            level: mesh.level(),
            c0: config.c0,
            dimension: u.len(),
            count: 1,
            normalization: "none".into(),
            sign_rule: "none".into(),
            vertex_map: (0..u.len()).collect(),
        },
    )?;
    run.write_csv(
        "decay.csv",
        "distance,sup,vertices",
        profile
            .iter()
            .map(|s| format!("{},{},{}", s.distance, fmt_f64(s.sup), s.vertices)),
    )?;
    run.write_json(
        "energy.json",
        &json!({ "interior": split.interior, "boundary": split.boundary, "total": split.total() }),
    )?;
    println!(
        "interior energy {}, boundary energy {}, {} shells",
        fmt_f64(split.interior),
        fmt_f64(split.boundary),
        profile.len()
    );
    run.finish()
}

pub fn energy_seq(config: &RunConfig, guard: u32, function: TestFunction) -> Result<()> {
    let mut run = Run::start(config, guard, "energy-seq")?;
    let samples = match function {
        TestFunction::Linear => energy_sequence(|x, _| x, config.level, config.c0)?,
        TestFunction::Bump => {
            let (cx, cy) = (0.5, 3f64.sqrt() / 6.0);
            energy_sequence(
                move |x, y| (1.0 - (x - cx).hypot(y - cy) / 0.25).max(0.0),
                config.level,
                config.c0,
            )?
        }
    };
    run.write_csv(
        "energy_seq.csv",
        "level,interior,boundary,total",
        samples.iter().map(|s| {
            format!("{},{},{},{}", s.level, fmt_f64(s.interior), fmt_f64(s.boundary), fmt_f64(s.total()))
        }),
    )?;
    for s in &samples {
        println!("level {}: interior {:.6}, boundary {:.6}", s.level, s.interior, s.boundary);
    }
    run.finish()
}
