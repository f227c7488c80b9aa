//! Run configuration: defaults, flat key=value config files, and flag
//! overrides, resolved in that order (flags win).

use std::fmt::Write as _;
use std::path::Path;

use npgroup::{Rule, SelectConfig, TestConfig};
use npgroup::smoothing::KernelSpec;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    Epanechnikov,
    Gaussian,
}

/// Optional overrides from one source (config file or flags).
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub theta: Option<f64>,
    pub rule: Option<Rule>,
    pub kernel: Option<KernelChoice>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub n_slices: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
}

/// Fully resolved configuration, echoed verbatim into every report.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub p: usize,
    pub q: usize,
    pub theta: f64,
    pub rule: Rule,
    pub kernel: KernelChoice,
    pub alpha: f64,
    pub k: usize,
    pub n_slices: usize,
    pub seed: u64,
    pub seed_from_entropy: bool,
    pub n: Option<usize>,
    pub reps: Option<usize>,
}

pub fn parse_rule(s: &str) -> Result<Rule, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "rule1" | "1" => Ok(Rule::Rule1),
        "rule2" | "2" => Ok(Rule::Rule2),
        other => Err(CliError::Usage(format!("unknown rule `{other}` (rule1|rule2)"))),
    }
}

pub fn parse_kernel(s: &str) -> Result<KernelChoice, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "epanechnikov" | "epan" => Ok(KernelChoice::Epanechnikov),
        "gaussian" | "gauss" => Ok(KernelChoice::Gaussian),
        other => Err(CliError::Usage(format!(
            "unknown kernel `{other}` (epanechnikov|gaussian)"
        ))),
    }
}

/// Parse a flat `key = value` config file (# comments, blank lines allowed).
pub fn read_config_file(path: &Path) -> Result<Overrides, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut ov = Overrides::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or_else(|| CliError::Parse {
            line,
            reason: format!("expected `key = value`, got `{raw}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| CliError::Parse {
            line,
            reason: format!("invalid {what} value `{value}`"),
        };
        match key {
            "p" => ov.p = Some(value.parse().map_err(|_| bad("p"))?),
            "q" => ov.q = Some(value.parse().map_err(|_| bad("q"))?),
            "theta" => ov.theta = Some(value.parse().map_err(|_| bad("theta"))?),
            "rule" => ov.rule = Some(parse_rule(value)?),
            "kernel" => ov.kernel = Some(parse_kernel(value)?),
            "alpha" => ov.alpha = Some(value.parse().map_err(|_| bad("alpha"))?),
            "k" => ov.k = Some(value.parse().map_err(|_| bad("k"))?),
            "n_slices" => ov.n_slices = Some(value.parse().map_err(|_| bad("n_slices"))?),
            "seed" => ov.seed = Some(value.parse().map_err(|_| bad("seed"))?),
            "n" => ov.n = Some(value.parse().map_err(|_| bad("n"))?),
            "reps" => ov.reps = Some(value.parse().map_err(|_| bad("reps"))?),
            other => {
                return Err(CliError::Parse {
                    line,
                    reason: format!("unknown config key `{other}`"),
                })
            }
        }
    }
    Ok(ov)
}

impl Overrides {
    /// Layer `self` on top of `base` (entries in `self` win).
    pub fn over(self, base: Overrides) -> Overrides {
        Overrides {
            p: self.p.or(base.p),
            q: self.q.or(base.q),
            theta: self.theta.or(base.theta),
            rule: self.rule.or(base.rule),
            kernel: self.kernel.or(base.kernel),
            alpha: self.alpha.or(base.alpha),
            k: self.k.or(base.k),
            n_slices: self.n_slices.or(base.n_slices),
            seed: self.seed.or(base.seed),
            n: self.n.or(base.n),
            reps: self.reps.or(base.reps),
        }
    }

    /// Apply defaults, drawing an entropy seed when none was given.
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let defaults: TestConfig<f64> = TestConfig::default();
        let sel: SelectConfig<f64> = SelectConfig::default();
        let seed_from_entropy = self.seed.is_none();
        let cfg = RunConfig {
            p: self.p.unwrap_or(defaults.p),
            q: self.q.unwrap_or(defaults.q),
            theta: self.theta.unwrap_or(defaults.theta),
            rule: self.rule.unwrap_or(defaults.rule),
            kernel: self.kernel.unwrap_or(KernelChoice::Epanechnikov),
            alpha: self.alpha.unwrap_or(0.05),
            k: self.k.unwrap_or(sel.k),
            n_slices: self.n_slices.unwrap_or(sel.n_slices),
            seed: self.seed.unwrap_or_else(rand::random::<u64>),
            seed_from_entropy,
            n: self.n,
            reps: self.reps,
        };
        if !(cfg.theta > 0.0 && cfg.theta < 1.0) {
            return Err(CliError::Usage("theta must lie in (0, 1)".into()));
        }
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            return Err(CliError::Usage("alpha must lie in (0, 1)".into()));
        }
        if cfg.p < 3 || cfg.p % 2 == 0 {
            return Err(CliError::Usage("p must be an odd integer >= 3".into()));
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn kernel_spec(&self) -> KernelSpec<f64> {
        match self.kernel {
            KernelChoice::Epanechnikov => KernelSpec::epanechnikov(),
            KernelChoice::Gaussian => KernelSpec::gaussian_truncated(),
        }
    }

    pub fn test_config(&self) -> TestConfig<f64> {
        TestConfig {
            p: self.p,
            q: self.q,
            theta: self.theta,
            rule: self.rule,
            kernel: self.kernel_spec(),
            ..TestConfig::default()
        }
    }

    pub fn select_config(&self) -> SelectConfig<f64> {
        SelectConfig {
            test: self.test_config(),
            k: self.k,
            n_slices: self.n_slices,
            ..SelectConfig::default()
        }
    }

    /// The `# npgroup-config:` footer payload: every resolved knob, so a
    /// run is replayable from its own report.
    pub fn echo(&self, extra: &str) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "p={} q={} theta={} rule={:?} kernel={:?} alpha={} k={} n_slices={} seed={}",
            self.p, self.q, self.theta, self.rule, self.kernel, self.alpha, self.k,
            self.n_slices, self.seed
        );
        if let Some(n) = self.n {
            let _ = write!(s, " n={n}");
        }
        if let Some(reps) = self.reps {
            let _ = write!(s, " reps={reps}");
        }
        if !extra.is_empty() {
            let _ = write!(s, " {extra}");
        }
        s
    }
}
