//! Flat `key = value` text configuration.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored and every
//! key may appear at most once. The same format describes solver settings
//! ([`solver_config`]) and deblurring problems ([`ProblemConfig`]).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::problems::{synthesize_observation, BlurOperator, DeblurSpec, DeblurVariant, Image};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {line}: expected `key = value`")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Parse(format!("line {line}: invalid key {key:?}")));
        }
        if value.is_empty() {
            return Err(Error::Parse(format!("line {line}: empty value for {key:?}")));
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::Parse(format!("line {line}: duplicate key {key:?}")));
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(out)
}

/// Applies `entries` on top of `base` and validates the result.
pub fn solver_config(base: SolverConfig, entries: &[Entry]) -> Result<SolverConfig> {
    let mut cfg = base;
    for e in entries {
        cfg.set(&e.key, &e.value)
            .map_err(|err| Error::InvalidConfig(format!("line {}: {err}", e.line)))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TruthSource {
    /// [`Image::phantom`] of the configured size.
    Phantom,
    Pgm(PathBuf),
    Text(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariantKind {
    TvDeblur,
    StronglyConvexBox,
}

/// Synthetic deblurring experiment: ground truth, blur, noise and model weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub width: usize,
    pub height: usize,
    pub truth: TruthSource,
    /// `(radius, sigma)` of a Gaussian kernel, or no blur.
    pub blur: Option<(usize, f64)>,
    pub photons: f64,
    pub seed: u64,
    /// `None` selects [`DeblurSpec::default_tv_weight`].
    pub tv_weight: Option<f64>,
    pub variant: VariantKind,
    pub box_lo: f64,
    pub box_hi: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            width: 64,
            height: 64,
            truth: TruthSource::Phantom,
            blur: Some((2, 1.5)),
            photons: 1.0,
            seed: 0,
            tv_weight: None,
            variant: VariantKind::TvDeblur,
            box_lo: 0.1,
            box_hi: 255.0,
        }
    }
}

/// The observation and the model built from a [`ProblemConfig`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub truth: Image,
    pub spec: DeblurSpec,
}

impl ProblemConfig {
    pub const KEYS: &'static [&'static str] = &[
        "width",
        "height",
        "truth",
        "blur",
        "blur_radius",
        "blur_sigma",
        "photons",
        "seed",
        "tv_weight",
        "variant",
        "box_lo",
        "box_hi",
    ];

    /// Relative truth paths are resolved against `base_dir`.
    pub fn from_entries(entries: &[Entry], base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg = ProblemConfig::default();
        let mut radius = 2;
        let mut sigma = 1.5;
        let mut blurred = true;
        for e in entries {
            let v = e.value.as_str();
            let bad = |what: &str| Error::InvalidConfig(format!("line {}: {}: {what}, got {v:?}", e.line, e.key));
            match e.key.as_str() {
                "width" => cfg.width = v.parse().map_err(|_| bad("expected a positive integer"))?,
                "height" => cfg.height = v.parse().map_err(|_| bad("expected a positive integer"))?,
                "truth" => {
                    let resolve = |p: &str| match base_dir {
                        Some(dir) if Path::new(p).is_relative() => dir.join(p),
                        _ => PathBuf::from(p),
                    };
                    cfg.truth = if v == "phantom" {
                        TruthSource::Phantom
                    } else if let Some(p) = v.strip_prefix("pgm:") {
                        TruthSource::Pgm(resolve(p.trim()))
                    } else if let Some(p) = v.strip_prefix("text:") {
                        TruthSource::Text(resolve(p.trim()))
                    } else {
                        return Err(bad("expected phantom, pgm:<path> or text:<path>"));
                    }
                }
                "blur" => {
                    blurred = match v {
                        "gaussian" => true,
                        "none" => false,
                        _ => return Err(bad("expected gaussian or none")),
                    }
                }
                "blur_radius" => radius = v.parse().map_err(|_| bad("expected an integer"))?,
                "blur_sigma" => sigma = v.parse().map_err(|_| bad("expected a real"))?,
                "photons" => cfg.photons = v.parse().map_err(|_| bad("expected a real"))?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad("expected an integer"))?,
                "tv_weight" => {
                    cfg.tv_weight = if v == "auto" {
                        None
                    } else {
                        Some(v.parse().map_err(|_| bad("expected a real or auto"))?)
                    }
                }
                "variant" => {
                    cfg.variant = match v {
                        "tv_deblur" => VariantKind::TvDeblur,
                        "strongly_convex_box" => VariantKind::StronglyConvexBox,
                        _ => return Err(bad("expected tv_deblur or strongly_convex_box")),
                    }
                }
                "box_lo" => cfg.box_lo = v.parse().map_err(|_| bad("expected a real"))?,
                "box_hi" => cfg.box_hi = v.parse().map_err(|_| bad("expected a real"))?,
                other => {
                    return Err(Error::InvalidConfig(format!("line {}: unknown problem key {other:?}", e.line)))
                }
            }
        }
        cfg.blur = blurred.then_some((radius, sigma));
        Ok(cfg)
    }

    pub fn from_text(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        Self::from_entries(&parse_entries(text)?, base_dir)
    }

    /// Canonical rendering; equal configurations render identically.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let truth = match &self.truth {
            TruthSource::Phantom => "phantom".to_string(),
            TruthSource::Pgm(p) => format!("pgm:{}", p.display()),
            TruthSource::Text(p) => format!("text:{}", p.display()),
        };
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "truth = {truth}");
        match self.blur {
            Some((r, sg)) => {
                let _ = writeln!(s, "blur = gaussian\nblur_radius = {r}\nblur_sigma = {sg}");
            }
            None => {
                let _ = writeln!(s, "blur = none");
            }
        }
        let _ = writeln!(s, "photons = {}", self.photons);
        let _ = writeln!(s, "seed = {}", self.seed);
        match self.tv_weight {
            Some(w) => {
                let _ = writeln!(s, "tv_weight = {w}");
            }
            None => {
                let _ = writeln!(s, "tv_weight = auto");
            }
        }
        let variant = match self.variant {
            VariantKind::TvDeblur => "tv_deblur",
            VariantKind::StronglyConvexBox => "strongly_convex_box",
        };
        let _ = writeln!(s, "variant = {variant}");
        let _ = writeln!(s, "box_lo = {}", self.box_lo);
        let _ = writeln!(s, "box_hi = {}", self.box_hi);
        s
    }

    pub fn load_truth(&self) -> Result<Image> {
        match &self.truth {
            TruthSource::Phantom => Image::phantom(self.width, self.height),
            TruthSource::Pgm(p) => Image::read_pgm(&mut std::io::BufReader::new(std::fs::File::open(p)?)),
            TruthSource::Text(p) => Image::read_text(std::io::BufReader::new(std::fs::File::open(p)?)),
        }
    }

    /// Loads the truth, draws the noisy observation and assembles the model.
    pub fn build(&self) -> Result<Experiment> {
        if !(self.photons > 0.0) {
            return Err(Error::InvalidConfig("photons must be positive".into()));
        }
        let truth = self.load_truth()?;
        let (variant, blur) = match self.variant {
            VariantKind::TvDeblur => {
                let blur = match self.blur {
                    Some((r, sg)) => Some(BlurOperator::gaussian(truth.width(), truth.height(), r, sg)?),
                    None => None,
                };
                (DeblurVariant::TvDeblur, blur)
            }
            VariantKind::StronglyConvexBox => (
                DeblurVariant::StronglyConvexBox {
                    lo: self.box_lo,
                    hi: self.box_hi,
                },
                None,
            ),
        };
        let b = synthesize_observation(&truth, blur.as_ref(), self.photons, self.seed)?;
        let tv_weight = self.tv_weight.unwrap_or_else(|| DeblurSpec::default_tv_weight(&b));
        let spec = DeblurSpec {
            b,
            blur,
            tv_weight,
            variant,
        };
        spec.validate()?;
        Ok(Experiment { truth, spec })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let text = "# header\n\nmu = 0.5  # trailing\n beta=2\n";
        let entries = parse_entries(text).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].key, "mu");
        assert_eq!(entries[0].value, "0.5");
        assert_eq!(entries[1].line, 4);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_entries("mu 0.5").is_err());
        assert!(parse_entries("mu =").is_err());
        assert!(parse_entries("a b = 1").is_err());
        assert!(parse_entries("mu = 1\nmu = 2").is_err());
    }

    #[test]
    fn solver_overrides_apply_and_validate() {
        let e = parse_entries("beta = 0.1\nmemory = 9").unwrap();
        let cfg = solver_config(SolverConfig::default(), &e).unwrap();
        assert_eq!(cfg.beta, 0.1);
        assert_eq!(cfg.memory, 9);
        let e = parse_entries("bogus = 1").unwrap();
        let err = solver_config(SolverConfig::default(), &e).unwrap_err().to_string();
        assert!(err.contains("bogus"));
        let e = parse_entries("mu = 2").unwrap();
        assert!(solver_config(SolverConfig::default(), &e).is_err());
    }

    #[test]
    fn problem_config_round_trips() {
        let cfg = ProblemConfig::from_text("width = 8\nheight = 6\nblur_sigma = 0.8\ntv_weight = 0.3\n", None).unwrap();
        assert_eq!(cfg.blur, Some((2, 0.8)));
        let again = ProblemConfig::from_text(&cfg.to_text(), None).unwrap();
        assert_eq!(cfg, again);
        assert!(ProblemConfig::from_text("colour = red", None).is_err());
    }

    #[test]
    fn builds_both_variants() {
        let cfg = ProblemConfig::from_text("width = 8\nheight = 8\nseed = 3", None).unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.spec.b.len(), 64);
        assert!(exp.spec.blur.is_some());
        let cfg = ProblemConfig::from_text("width = 8\nheight = 8\nvariant = strongly_convex_box", None).unwrap();
        let exp = cfg.build().unwrap();
        assert!(exp.spec.blur.is_none());
        assert!(exp.spec.strong_convexity() > 0.0);
    }

    #[test]
    fn relative_truth_paths_resolve_against_base() {
        let cfg = ProblemConfig::from_text("truth = pgm:img.pgm", Some(Path::new("/data"))).unwrap();
        assert_eq!(cfg.truth, TruthSource::Pgm(PathBuf::from("/data/img.pgm")));
    }
}
