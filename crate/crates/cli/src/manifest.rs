use std::path::{Path, PathBuf};

use qnpd::config::{parse_entries, solver_config, Entry};
use qnpd::solver::{Solver, SolverConfig};

/// A malformed manifest; reported with exit status 2.
#[derive(Debug)]
pub struct ManifestError(pub String);

impl std::fmt::Display for ManifestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ManifestError {}

#[derive(Debug, Clone)]
pub struct ReferenceSpec {
    pub solver: Solver,
    pub iters: usize,
    /// Solver keys applied on top of the defaults for the reference run.
    pub overrides: Vec<Entry>,
    pub cache_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub problem: PathBuf,
    pub solvers: Vec<Solver>,
    /// Solver keys given without a `solver.<name>.` prefix apply to every solver.
    pub shared: Vec<Entry>,
    pub overrides: Vec<(Solver, Vec<Entry>)>,
    pub output_dir: PathBuf,
    pub reference: ReferenceSpec,
    /// Overrides the noise seed of the problem configuration.
    pub seed: Option<u64>,
}

fn err(msg: String) -> ManifestError {
    ManifestError(msg)
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ManifestError> {
        let entries = parse_entries(text).map_err(|e| err(e.to_string()))?;
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        let mut problem = None;
        let mut solvers = Vec::new();
        let mut shared = Vec::new();
        let mut overrides: Vec<(Solver, Vec<Entry>)> = Vec::new();
        let mut output_dir = None;
        let mut seed = None;
        let mut ref_solver = Solver::Pdal;
        let mut ref_iters = 20_000;
        let mut ref_overrides = Vec::new();
        let mut cache_dir = None;

        for e in entries {
            let key = e.key.as_str();
            let at = |msg: String| err(format!("line {}: {key}: {msg}", e.line));
            match key {
                "problem" => problem = Some(resolve(&e.value)),
                "solvers" => {
                    for name in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        let s: Solver = name.parse().map_err(|_| at(format!("unknown solver {name:?}")))?;
                        if solvers.contains(&s) {
                            return Err(at(format!("solver {name:?} listed twice")));
                        }
                        solvers.push(s);
                    }
                }
                "output_dir" => output_dir = Some(resolve(&e.value)),
                "seed" => seed = Some(e.value.parse().map_err(|_| at(format!("expected an integer, got {:?}", e.value)))?),
                "reference.solver" => {
                    ref_solver = e.value.parse().map_err(|_| at(format!("unknown solver {:?}", e.value)))?
                }
                "reference.iters" => {
                    ref_iters = e.value.parse().map_err(|_| at(format!("expected an integer, got {:?}", e.value)))?
                }
                "reference.cache" => cache_dir = Some(resolve(&e.value)),
                _ => {
                    if let Some(rest) = key.strip_prefix("reference.") {
                        check_solver_key(rest).map_err(at)?;
                        ref_overrides.push(Entry { key: rest.to_string(), ..e.clone() });
                    } else if let Some(rest) = key.strip_prefix("solver.") {
                        let (name, field) = rest
                            .split_once('.')
                            .ok_or_else(|| at("expected solver.<name>.<key>".to_string()))?;
                        let s: Solver = name.parse().map_err(|_| at(format!("unknown solver {name:?}")))?;
                        check_solver_key(field).map_err(at)?;
                        let entry = Entry { key: field.to_string(), ..e.clone() };
                        match overrides.iter_mut().find(|(t, _)| *t == s) {
                            Some((_, list)) => list.push(entry),
                            None => overrides.push((s, vec![entry])),
                        }
                    } else if SolverConfig::KEYS.contains(&key) {
                        shared.push(e.clone());
                    } else {
                        return Err(err(format!("line {}: unknown manifest key {key:?}", e.line)));
                    }
                }
            }
        }

        let problem = problem.ok_or_else(|| err("missing key \"problem\"".into()))?;
        let output_dir = output_dir.ok_or_else(|| err("missing key \"output_dir\"".into()))?;
        if solvers.is_empty() {
            return Err(err("\"solvers\" must name at least one solver".into()));
        }
        if ref_iters == 0 {
            return Err(err("reference.iters must be positive".into()));
        }
        let cache_dir = cache_dir.unwrap_or_else(|| output_dir.join("cache"));
        let manifest = Manifest {
            problem,
            solvers,
            shared,
            overrides,
            output_dir,
            reference: ReferenceSpec {
                solver: ref_solver,
                iters: ref_iters,
                overrides: ref_overrides,
                cache_dir,
            },
            seed,
        };
        for &s in &manifest.solvers {
            manifest.solver_config(s)?;
        }
        manifest.reference_config()?;
        Ok(manifest)
    }

    pub fn solver_config(&self, s: Solver) -> Result<SolverConfig, ManifestError> {
        let mut entries = self.shared.clone();
        if let Some((_, list)) = self.overrides.iter().find(|(t, _)| *t == s) {
            entries.extend(list.iter().cloned());
        }
        apply(&entries).map_err(|e| err(format!("solver {s}: {e}")))
    }

    pub fn reference_config(&self) -> Result<SolverConfig, ManifestError> {
        let mut cfg = apply(&self.reference.overrides).map_err(|e| err(format!("reference: {e}")))?;
        cfg.max_iters = self.reference.iters;
        cfg.wall_clock = false;
        Ok(cfg)
    }
}

fn check_solver_key(key: &str) -> Result<(), String> {
    if SolverConfig::KEYS.contains(&key) {
        Ok(())
    } else {
        Err(format!("unknown solver key {key:?}"))
    }
}

/// Later entries win, so per-solver keys override shared ones.
fn apply(entries: &[Entry]) -> qnpd::Result<SolverConfig> {
    let mut cfg = SolverConfig::default();
    for e in entries {
        cfg.set(&e.key, &e.value)
            .map_err(|err| qnpd::Error::InvalidConfig(format!("line {}: {err}", e.line)))?;
    }
    solver_config(cfg, &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "problem = p.conf\nsolvers = pdal, var_pdal\noutput_dir = out\n";

    #[test]
    fn parses_overrides_and_defaults() {
        let text = format!("{BASE}max_iters = 300\nsolver.var_pdal.memory = 9\nreference.iters = 50\n");
        let m = Manifest::parse(&text, Path::new("/base")).unwrap();
        assert_eq!(m.problem, PathBuf::from("/base/p.conf"));
        assert_eq!(m.solvers, vec![Solver::Pdal, Solver::VarPdal]);
        assert_eq!(m.reference.cache_dir, PathBuf::from("/base/out/cache"));
        let c = m.solver_config(Solver::VarPdal).unwrap();
        assert_eq!((c.max_iters, c.memory), (300, 9));
        let c = m.solver_config(Solver::Pdal).unwrap();
        assert_eq!((c.max_iters, c.memory), (300, SolverConfig::default().memory));
        assert_eq!(m.reference_config().unwrap().max_iters, 50);
    }

    #[test]
    fn errors_name_the_offending_key() {
        let e = Manifest::parse("problem = p\noutput_dir = o\nsolvers = pdal, fista\n", Path::new(".")).unwrap_err();
        assert!(e.0.contains("solvers") && e.0.contains("fista"), "{e}");
        let e = Manifest::parse(&format!("{BASE}solver.fista.beta = 1\n"), Path::new(".")).unwrap_err();
        assert!(e.0.contains("solver.fista.beta"), "{e}");
        let e = Manifest::parse(&format!("{BASE}colour = red\n"), Path::new(".")).unwrap_err();
        assert!(e.0.contains("colour"), "{e}");
        let e = Manifest::parse(&format!("{BASE}solver.pdal.mu = 3\n"), Path::new(".")).unwrap_err();
        assert!(e.0.contains("mu"), "{e}");
        assert!(Manifest::parse("problem = p\noutput_dir = o\nsolvers = \n", Path::new(".")).is_err());
    }
}
