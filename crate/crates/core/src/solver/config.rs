use crate::error::{Error, Result};
use crate::metric::{BaseScaling, EtaSchedule, MetricParams, DEFAULT_EPS_CURV};
use crate::prox::NewtonConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarSigmaRule {
    /// Lower end of the admissible interval.
    Conservative,
    /// Upper end of the admissible interval.
    Aggressive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelConfig {
    pub c_theta: f64,
    /// Replaces the problem's strong convexity modulus when set.
    pub gamma_strong: Option<f64>,
}

impl Default for AccelConfig {
    fn default() -> Self {
        AccelConfig {
            c_theta: 10.0,
            gamma_strong: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub mu: f64,
    pub delta: f64,
    pub beta: f64,
    pub sigma0: f64,
    pub theta0: f64,
    pub max_iters: usize,
    pub bar_sigma_rule: BarSigmaRule,
    pub metric_every: usize,
    pub memory: usize,
    pub alpha: f64,
    pub c_m: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub base_scaling: BaseScaling,
    pub eps_curv: f64,
    pub safeguard: Option<EtaSchedule>,
    pub accel: Option<AccelConfig>,
    pub ls_max_trials: usize,
    /// Residual stopping tolerance; `0` runs all `max_iters` iterations.
    pub tol: f64,
    pub newton: NewtonConfig,
    /// Overrides the problem's Lipschitz constant of `grad h`.
    pub lipschitz_h: Option<f64>,
    /// Overrides the step of the fixed-step methods.
    pub sigma_fixed: Option<f64>,
    pub record_metrics: bool,
    /// Write measured wall time to traces (otherwise zeros, for byte-stable output).
    pub wall_clock: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu: 0.7,
            delta: 0.99,
            beta: 1.0,
            sigma0: 1.0,
            theta0: 1.0,
            max_iters: 1000,
            bar_sigma_rule: BarSigmaRule::Aggressive,
            metric_every: 1,
            memory: 5,
            alpha: 0.01,
            c_m: 50.0,
            gamma1: 1.0,
            gamma2: 1.0,
            base_scaling: BaseScaling::StepOverGradient,
            eps_curv: DEFAULT_EPS_CURV,
            safeguard: None,
            accel: None,
            ls_max_trials: 60,
            tol: 0.0,
            newton: NewtonConfig::default(),
            lipschitz_h: None,
            sigma_fixed: None,
            record_metrics: false,
            wall_clock: true,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::InvalidConfig(format!("{key}: expected a number, got {value:?}")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::InvalidConfig(format!("{key}: expected a nonnegative integer, got {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_opt_f64(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "none" {
        Ok(None)
    } else {
        parse_f64(key, value).map(Some)
    }
}

impl SolverConfig {
    pub const KEYS: &'static [&'static str] = &[
        "mu",
        "delta",
        "beta",
        "sigma0",
        "theta0",
        "max_iters",
        "bar_sigma_rule",
        "metric_every",
        "memory",
        "alpha",
        "c_m",
        "gamma1",
        "gamma2",
        "base_scaling",
        "eps_curv",
        "safeguard",
        "eta0",
        "eta_power",
        "accel",
        "c_theta",
        "gamma_strong",
        "ls_max_trials",
        "tol",
        "newton_max_iters",
        "newton_tol",
        "newton_rho",
        "newton_armijo_shrink",
        "lipschitz_h",
        "sigma_fixed",
        "record_metrics",
        "wall_clock",
    ];

    pub fn metric_params(&self) -> MetricParams {
        MetricParams {
            alpha: self.alpha,
            c_m: self.c_m,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
        }
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "mu" => self.mu = parse_f64(key, value)?,
            "delta" => self.delta = parse_f64(key, value)?,
            "beta" => self.beta = parse_f64(key, value)?,
            "sigma0" => self.sigma0 = parse_f64(key, value)?,
            "theta0" => self.theta0 = parse_f64(key, value)?,
            "max_iters" => self.max_iters = parse_usize(key, value)?,
            "bar_sigma_rule" => {
                self.bar_sigma_rule = match value {
                    "aggressive" => BarSigmaRule::Aggressive,
                    "conservative" => BarSigmaRule::Conservative,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "bar_sigma_rule: expected aggressive or conservative, got {value:?}"
                        )))
                    }
                }
            }
            "metric_every" => self.metric_every = parse_usize(key, value)?,
            "memory" => self.memory = parse_usize(key, value)?,
            "alpha" => self.alpha = parse_f64(key, value)?,
            "c_m" => self.c_m = parse_f64(key, value)?,
            "gamma1" => self.gamma1 = parse_f64(key, value)?,
            "gamma2" => self.gamma2 = parse_f64(key, value)?,
            "base_scaling" => {
                self.base_scaling = BaseScaling::parse(value)
                    .ok_or_else(|| Error::InvalidConfig(format!("base_scaling: unknown value {value:?}")))?
            }
            "eps_curv" => self.eps_curv = parse_f64(key, value)?,
            "safeguard" => {
                self.safeguard = if parse_bool(key, value)? {
                    Some(self.safeguard.unwrap_or_default())
                } else {
                    None
                }
            }
            "eta0" => self.safeguard.get_or_insert_with(EtaSchedule::default).eta0 = parse_f64(key, value)?,
            "eta_power" => {
                self.safeguard.get_or_insert_with(EtaSchedule::default).power = parse_f64(key, value)?
            }
            "accel" => {
                self.accel = if parse_bool(key, value)? {
                    Some(self.accel.unwrap_or_default())
                } else {
                    None
                }
            }
            "c_theta" => self.accel.get_or_insert_with(AccelConfig::default).c_theta = parse_f64(key, value)?,
            "gamma_strong" => {
                self.accel.get_or_insert_with(AccelConfig::default).gamma_strong = parse_opt_f64(key, value)?
            }
            "ls_max_trials" => self.ls_max_trials = parse_usize(key, value)?,
            "tol" => self.tol = parse_f64(key, value)?,
            "newton_max_iters" => self.newton.max_iters = parse_usize(key, value)?,
            "newton_tol" => self.newton.tol = parse_f64(key, value)?,
            "newton_rho" => self.newton.rho = parse_f64(key, value)?,
            "newton_armijo_shrink" => self.newton.armijo_shrink = parse_f64(key, value)?,
            "lipschitz_h" => self.lipschitz_h = parse_opt_f64(key, value)?,
            "sigma_fixed" => self.sigma_fixed = parse_opt_f64(key, value)?,
            "record_metrics" => self.record_metrics = parse_bool(key, value)?,
            "wall_clock" => self.wall_clock = parse_bool(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown solver key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad("mu must lie in (0, 1)");
        }
        let accelerated = self.accel.is_some();
        if !(self.delta > 0.0 && (self.delta < 1.0 || (accelerated && self.delta == 1.0))) {
            return bad("delta must lie in (0, 1), or (0, 1] in accelerated mode");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.sigma0 > 0.0) || !(self.theta0 > 0.0) {
            return bad("sigma0 and theta0 must be positive");
        }
        if self.metric_every == 0 {
            return bad("metric_every must be positive");
        }
        if self.ls_max_trials == 0 {
            return bad("ls_max_trials must be positive");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be nonnegative");
        }
        if !(self.eps_curv > 0.0) {
            return bad("eps_curv must be positive");
        }
        if let Some(s) = self.safeguard {
            if !(s.eta0 > 0.0 && s.power > 1.0) {
                return bad("safeguard needs eta0 > 0 and eta_power > 1");
            }
        }
        if let Some(a) = self.accel {
            if !(a.c_theta > 1.0) {
                return bad("c_theta must exceed 1");
            }
            if let Some(g) = a.gamma_strong {
                if !(g > 0.0) {
                    return bad("gamma_strong override must be positive");
                }
            }
        }
        if let Some(s) = self.sigma_fixed {
            if !(s > 0.0) {
                return bad("sigma_fixed must be positive");
            }
        }
        self.metric_params().validate()?;
        self.newton.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_key_is_settable() {
        let samples = [
            ("bar_sigma_rule", "conservative"),
            ("base_scaling", "yy_sy"),
            ("safeguard", "true"),
            ("accel", "true"),
            ("record_metrics", "false"),
            ("wall_clock", "true"),
            ("lipschitz_h", "none"),
            ("sigma_fixed", "0.5"),
            ("gamma_strong", "0.5"),
        ];
        for key in SolverConfig::KEYS {
            let mut cfg = SolverConfig::default();
            let value = samples.iter().find(|(k, _)| k == key).map(|(_, v)| *v).unwrap_or("3");
            cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.set("sigma", "1").is_err());
        assert!(cfg.set("mu", "abc").is_err());
        cfg.set("mu", "1.5").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn delta_one_only_in_accelerated_mode() {
        let mut cfg = SolverConfig {
            delta: 1.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.accel = Some(AccelConfig::default());
        assert!(cfg.validate().is_ok());
    }
}
