use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use nalgebra::DVector;
use qnpd::config::{Experiment, ProblemConfig};
use qnpd::problems::{build_deblur_problem, Image};
use qnpd::solver::{SaddleProblem, Solver};
use sha2::{Digest, Sha256};

use crate::manifest::{Manifest, ManifestError};

/// Reference solution and its objective value.
pub struct Reference {
    pub x: DVector<f64>,
    pub primal: f64,
    pub key: String,
    pub cached: bool,
}

pub fn load_experiment(manifest: &Manifest) -> Result<ProblemConfig> {
    let text = fs::read_to_string(&manifest.problem)
        .with_context(|| format!("reading problem config {}", manifest.problem.display()))?;
    let base = manifest.problem.parent().unwrap_or(Path::new("."));
    let mut cfg = ProblemConfig::from_text(&text, Some(base))
        .map_err(|e| ManifestError(format!("{}: {e}", manifest.problem.display())))?;
    if let Some(seed) = manifest.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Hash of everything the reference solution depends on.
pub fn reference_key(cfg: &ProblemConfig, exp: &Experiment, manifest: &Manifest) -> String {
    let mut h = Sha256::new();
    h.update(cfg.to_text().as_bytes());
    for p in exp.spec.b.pixels() {
        h.update(p.to_le_bytes());
    }
    h.update(exp.spec.tv_weight.to_le_bytes());
    let r = &manifest.reference;
    h.update(format!("reference {} {}\n", r.solver, r.iters).as_bytes());
    for e in &r.overrides {
        h.update(format!("{} = {}\n", e.key, e.value).as_bytes());
    }
    h.finalize().iter().take(16).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn compute_reference(
    problem: &SaddleProblem,
    manifest: &Manifest,
    x1: &DVector<f64>,
    y0: &DVector<f64>,
) -> Result<DVector<f64>> {
    let cfg = manifest.reference_config()?;
    let out = manifest
        .reference
        .solver
        .run(problem, &cfg, x1, y0, None)
        .context("reference run failed")?;
    Ok(out.x)
}

pub fn reference(
    problem: &SaddleProblem,
    exp: &Experiment,
    cfg: &ProblemConfig,
    manifest: &Manifest,
    x1: &DVector<f64>,
    y0: &DVector<f64>,
) -> Result<Reference> {
    let key = reference_key(cfg, exp, manifest);
    let path = manifest.reference.cache_dir.join(format!("reference_{key}.txt"));
    let (w, h) = (exp.spec.b.width(), exp.spec.b.height());
    if path.exists() {
        match File::open(&path).map_err(anyhow::Error::from).and_then(|f| Ok(Image::read_text(BufReader::new(f))?)) {
            Ok(img) if img.width() == w && img.height() == h => {
                let x = img.to_vector();
                let primal = problem.primal_value(&x);
                return Ok(Reference { x, primal, key, cached: true });
            }
            _ => warn!("ignoring unreadable reference cache {}", path.display()),
        }
    }
    info!(
        "computing reference: {} for {} iterations",
        manifest.reference.solver, manifest.reference.iters
    );
    let x = compute_reference(problem, manifest, x1, y0)?;
    fs::create_dir_all(&manifest.reference.cache_dir)?;
    let mut out = BufWriter::new(File::create(&path)?);
    Image::from_vector(w, h, &x)?.write_text(&mut out)?;
    out.flush()?;
    let primal = problem.primal_value(&x);
    Ok(Reference { x, primal, key, cached: false })
}

fn write_pgm(path: &Path, w: usize, h: usize, v: &DVector<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    Image::from_vector_clamped(w, h, v)?.write_pgm(&mut out)?;
    out.flush()?;
    Ok(())
}

pub struct SolverSummary {
    pub solver: Solver,
    pub primal: f64,
    pub gap: f64,
    pub trials: usize,
    pub wall_s: f64,
}

/// Runs every selected solver. Returns the number of failed solvers.
pub fn cmd_run(manifest_path: &Path) -> Result<usize> {
    let manifest = Manifest::load(manifest_path)?;
    let dir = &manifest.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let probe = dir.join(".write_test");
    File::create(&probe).with_context(|| format!("output directory {} is not writable", dir.display()))?;
    fs::remove_file(&probe)?;

    let pcfg = load_experiment(&manifest)?;
    let exp = pcfg.build().context("building the observation")?;
    let problem = build_deblur_problem(&exp.spec)?;
    let (w, h) = (exp.spec.b.width(), exp.spec.b.height());
    let x1 = exp.spec.initial_point();
    let y0 = DVector::zeros(problem.dim_y());
    write_pgm(&dir.join("truth.pgm"), w, h, &exp.truth.to_vector())?;
    write_pgm(&dir.join("observation.pgm"), w, h, &exp.spec.b.to_vector())?;

    let reference = reference(&problem, &exp, &pcfg, &manifest, &x1, &y0)?;
    write_pgm(&dir.join("reference.pgm"), w, h, &reference.x)?;
    info!(
        "reference primal {} ({})",
        reference.primal,
        if reference.cached { "cached" } else { "computed" }
    );

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &s in &manifest.solvers {
        let cfg = manifest.solver_config(s)?;
        info!("running {s} for {} iterations", cfg.max_iters);
        match s.run(&problem, &cfg, &x1, &y0, None) {
            Ok(mut out) => {
                out.trace.set_reference(reference.primal);
                let mut csv = BufWriter::new(File::create(dir.join(format!("{s}.csv")))?);
                out.trace.write_csv(&mut csv)?;
                csv.flush()?;
                write_pgm(&dir.join(format!("{s}.pgm")), w, h, &out.x)?;
                let last = out.trace.last();
                rows.push(SolverSummary {
                    solver: s,
                    primal: last.map_or(f64::NAN, |r| r.primal),
                    gap: last.map_or(f64::NAN, |r| r.gap),
                    trials: out.trace.total_trials(),
                    wall_s: out.stats.wall_s,
                });
            }
            Err(e) => {
                eprintln!("error: solver {s} failed: {e}");
                failures.push((s, e.to_string()));
            }
        }
    }

    let summary = render_summary(&manifest, &reference, &rows, &failures);
    fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(failures.len())
}

pub fn render_summary(
    manifest: &Manifest,
    reference: &Reference,
    rows: &[SolverSummary],
    failures: &[(Solver, String)],
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# reference: {} run for {} iterations, primal {}, key {}",
        manifest.reference.solver, manifest.reference.iters, reference.primal, reference.key
    );
    let _ = writeln!(s, "{:<10} {:>22} {:>14} {:>10} {:>10}", "solver", "primal", "gap", "ls_trials", "wall_s");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>22.12e} {:>14.6e} {:>10} {:>10.3}",
            r.solver.name(),
            r.primal,
            r.gap,
            r.trials,
            r.wall_s
        );
    }
    for (solver, msg) in failures {
        let _ = writeln!(s, "{:<10} FAILED: {msg}", solver.name());
    }
    s
}

/// Writes `<stem>.iter_gap.txt` and `<stem>.time_gap.txt` next to `out_dir`.
pub fn cmd_plotdata(trace: &Path, out_dir: Option<&Path>) -> Result<(PathBuf, PathBuf)> {
    let file = File::open(trace).with_context(|| format!("opening {}", trace.display()))?;
    let record = qnpd::solver::ConvergenceRecord::read_csv(BufReader::new(file))?;
    if record.is_empty() {
        bail!("{} has no rows", trace.display());
    }
    let stem = trace
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| trace.parent().unwrap_or(Path::new(".")).to_path_buf());
    fs::create_dir_all(&dir)?;
    let iter_path = dir.join(format!("{stem}.iter_gap.txt"));
    let time_path = dir.join(format!("{stem}.time_gap.txt"));
    let mut by_iter = String::from("# iter gap\n");
    let mut by_time = String::from("# time gap\n");
    for r in record.rows() {
        let _ = writeln!(by_iter, "{} {}", r.iter, r.gap);
        let _ = writeln!(by_time, "{} {}", r.wall_s, r.gap);
    }
    fs::write(&iter_path, by_iter)?;
    fs::write(&time_path, by_time)?;
    Ok((iter_path, time_path))
}
