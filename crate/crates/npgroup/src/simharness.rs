//! Seeded data generators for the six simulation designs and a replication
//! engine producing rejection-rate and selection tables.
//!
//! Reproducibility contract: every replication draws from a ChaCha8 stream
//! derived from `(seed, replication index)` via `set_stream`, so parallel
//! and serial runs produce identical reports.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;

use crate::anovatest::{group_test, TestConfig};
use crate::error::Result;
use crate::num::{fl, Float};
use crate::selection::{backward_select, GroupMap, SelectConfig};

/// RNG stream for one replication of a seeded study.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// The three model-checking designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckDesign {
    /// `Y = X1 + theta (Z1 + Z2 + Z3) + eps`, `eps ~ N(0, 1)`.
    Additive,
    /// `Y = X1^X2 (1 + theta (Z1 + Z2)) + X2^{theta (Z1 + Z2)} + eps`,
    /// `eps ~ N(0, 0.1^2)`, real powers taken sign-safely.
    NonAdditive,
    /// `Y = X1 + theta sin(Z1 Z2) + Z1 Z2 eps`, `eps ~ N(0, 0.5^2)`.
    Hetero,
}

/// One generated model-checking dataset, already split into the null
/// covariates and the tested group.
#[derive(Debug, Clone)]
pub struct CheckData<T> {
    pub y: DVector<T>,
    pub x_keep: DMatrix<T>,
    pub z: DMatrix<T>,
}

/// Sign-safe real power: `sign(a) |a|^b`, keeping the response real for
/// negative bases.
fn signed_pow<T: Float>(a: T, b: T) -> T {
    if a == T::zero() {
        return T::zero();
    }
    a.signum() * a.abs().powf(b)
}

fn randn<T: Float>(rng: &mut ChaCha8Rng) -> T {
    fl(StandardNormal.sample(rng))
}

/// Generate one dataset from a model-checking design. All covariates are
/// independent standard normal.
pub fn gen_model_check<T: Float>(
    design: CheckDesign,
    theta: T,
    n: usize,
    seed: u64,
) -> CheckData<T> {
    let mut rng = replication_rng(seed, 0);
    gen_model_check_with(design, theta, n, &mut rng)
}

pub(crate) fn gen_model_check_with<T: Float>(
    design: CheckDesign,
    theta: T,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> CheckData<T> {
    match design {
        CheckDesign::Additive => {
            let x = DMatrix::from_fn(n, 1, |_, _| randn::<T>(rng));
            let z = DMatrix::from_fn(n, 3, |_, _| randn::<T>(rng));
            let y = DVector::from_fn(n, |i, _| {
                x[(i, 0)] + theta * (z[(i, 0)] + z[(i, 1)] + z[(i, 2)]) + randn::<T>(rng)
            });
            CheckData { y, x_keep: x, z }
        }
        CheckDesign::NonAdditive => {
            let x = DMatrix::from_fn(n, 2, |_, _| randn::<T>(rng));
            let z = DMatrix::from_fn(n, 2, |_, _| randn::<T>(rng));
            let y = DVector::from_fn(n, |i, _| {
                let zsum = z[(i, 0)] + z[(i, 1)];
                signed_pow(x[(i, 0)], x[(i, 1)]) * (T::one() + theta * zsum)
                    + signed_pow(x[(i, 1)], theta * zsum)
                    + fl::<T>(0.1) * randn::<T>(rng)
            });
            CheckData { y, x_keep: x, z }
        }
        CheckDesign::Hetero => {
            let x = DMatrix::from_fn(n, 1, |_, _| randn::<T>(rng));
            let z = DMatrix::from_fn(n, 2, |_, _| randn::<T>(rng));
            let y = DVector::from_fn(n, |i, _| {
                let zz = z[(i, 0)] * z[(i, 1)];
                x[(i, 0)] + theta * zz.sin() + zz * (fl::<T>(0.5) * randn::<T>(rng))
            });
            CheckData { y, x_keep: x, z }
        }
    }
}

/// Continuous group-selection designs: 16 equicorrelated latent variables,
/// 48 polynomial design columns in 16 groups of 3, true groups 3 and 6
/// (zero-based 2 and 5).
pub fn gen_group_continuous<T: Float>(
    model: u8,
    n: usize,
    seed: u64,
) -> (DVector<T>, DMatrix<T>, GroupMap) {
    let mut rng = replication_rng(seed, 0);
    gen_group_continuous_with(model, n, &mut rng)
}

pub(crate) fn gen_group_continuous_with<T: Float>(
    model: u8,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> (DVector<T>, DMatrix<T>, GroupMap) {
    assert!((1..=3).contains(&model), "continuous model must be 1..=3");
    let root_half = fl::<T>(1.0 / 2f64.sqrt());
    let mut latent = DMatrix::<T>::zeros(n, 16);
    for i in 0..n {
        let w = randn::<T>(rng);
        for v in 0..16 {
            latent[(i, v)] = (randn::<T>(rng) + w) * root_half;
        }
    }
    // group v columns: X_v^3, X_v^2, X_v
    let mut x = DMatrix::<T>::zeros(n, 48);
    for i in 0..n {
        for v in 0..16 {
            let u = latent[(i, v)];
            x[(i, 3 * v)] = u.powi(3);
            x[(i, 3 * v + 1)] = u * u;
            x[(i, 3 * v + 2)] = u;
        }
    }
    let g3 = |u: T| u.powi(3) + u * u + u;
    let g6 = |u: T| u.powi(3) / fl::<T>(3.0) - u * u + fl::<T>(2.0 / 3.0) * u;
    let y = DVector::from_fn(n, |i, _| {
        let a = latent[(i, 2)];
        let b = latent[(i, 5)];
        let noise = fl::<T>(2.0) * randn::<T>(rng);
        match model {
            1 => g3(a) + g6(b) + noise,
            2 => g3(a).sin() + g6(b) + noise,
            _ => fl::<T>(10.0) * g3(a).sin() + fl::<T>(5.0) * g6(b).sin() + noise,
        }
    });
    (y, x, GroupMap::sequential(48, 3))
}

/// True active groups (zero-based) of the continuous designs.
pub const CONTINUOUS_TRUE_GROUPS: [usize; 2] = [2, 5];

/// Logistic group-selection designs.
///
/// Models 1-2: 15 iid U(0,1) covariates in 5 sequential groups of 3, with a
/// linear logit (leading coefficient is the intercept). Model 3: 11 iid
/// U(0,3) covariates plus one N(-3,1), in 4 sequential groups of 3, with
/// logit `18 sin(pi X2) + 18 sin(pi X8)`.
pub fn gen_group_logistic<T: Float>(
    model: u8,
    n: usize,
    seed: u64,
) -> (DVector<T>, DMatrix<T>, GroupMap) {
    let mut rng = replication_rng(seed, 0);
    gen_group_logistic_with(model, n, &mut rng)
}

const LOGISTIC_BETA_1: [f64; 16] = [
    1.0, -2.2, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0,
];
const LOGISTIC_BETA_2: [f64; 16] = [
    1.0, -2.2, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.0,
];

/// Logit of the logistic designs at a covariate row, exposed for moment
/// checks.
pub fn logistic_logit<T: Float>(model: u8, row: &[T]) -> T {
    match model {
        1 | 2 => {
            let beta = if model == 1 { &LOGISTIC_BETA_1 } else { &LOGISTIC_BETA_2 };
            let mut eta = fl::<T>(beta[0]);
            for (j, v) in row.iter().enumerate() {
                eta += fl::<T>(beta[j + 1]) * *v;
            }
            eta
        }
        _ => {
            let pi = T::pi();
            fl::<T>(18.0) * (pi * row[1]).sin() + fl::<T>(18.0) * (pi * row[7]).sin()
        }
    }
}

pub(crate) fn gen_group_logistic_with<T: Float>(
    model: u8,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> (DVector<T>, DMatrix<T>, GroupMap) {
    assert!((1..=3).contains(&model), "logistic model must be 1..=3");
    let (d, gm) = match model {
        1 | 2 => (15, GroupMap::sequential(15, 3)),
        _ => (12, GroupMap::sequential(12, 3)),
    };
    let mut x = DMatrix::<T>::zeros(n, d);
    for i in 0..n {
        for c in 0..d {
            let v = match model {
                1 | 2 => fl::<T>(rng.random::<f64>()),
                _ => {
                    if c < 11 {
                        fl::<T>(Uniform::new(0.0, 3.0).unwrap().sample(rng))
                    } else {
                        fl::<T>(-3.0) + randn::<T>(rng)
                    }
                }
            };
            x[(i, c)] = v;
        }
    }
    let y = DVector::from_fn(n, |i, _| {
        let row: Vec<T> = x.row(i).iter().copied().collect();
        let eta = logistic_logit(model, &row);
        let p = T::one() / (T::one() + (-eta).exp());
        if fl::<T>(rng.random::<f64>()) < p {
            T::one()
        } else {
            T::zero()
        }
    });
    (y, x, gm)
}

/// True active groups (zero-based) of a logistic design.
pub fn logistic_true_groups(model: u8) -> Vec<usize> {
    match model {
        1 | 2 => vec![0, 3],
        _ => vec![0, 2],
    }
}

/// Which study a [`SimConfig`] runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// Rejection-rate sweep for a model-checking design over a theta grid.
    Rejection { design: CheckDesign, thetas: Vec<f64> },
    /// Group-selection study for a continuous design (model 1..=3).
    SelectionContinuous { model: u8 },
    /// Group-selection study for a logistic design (model 1..=3).
    SelectionLogistic { model: u8 },
}

/// Complete, reproducible description of one simulation study.
#[derive(Debug, Clone)]
pub struct SimConfig<T> {
    pub design: Design,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub alpha: T,
    pub select: SelectConfig<T>,
}

impl<T: Float> SimConfig<T> {
    pub fn new(design: Design, n: usize, replications: usize, seed: u64) -> Self {
        SimConfig {
            design,
            n,
            replications,
            seed,
            alpha: fl(0.05),
            select: SelectConfig::default(),
        }
    }

    fn test(&self) -> &TestConfig<T> {
        &self.select.test
    }

    /// Flat key-value echo embedded in every report.
    pub fn echo(&self) -> String {
        let t = self.test();
        format!(
            "design={:?} n={} reps={} seed={} alpha={} p={} q={} theta={} rule={:?} k={} n_slices={}",
            self.design,
            self.n,
            self.replications,
            self.seed,
            self.alpha.to_f64().unwrap_or(f64::NAN),
            t.p,
            t.q,
            t.theta.to_f64().unwrap_or(f64::NAN),
            t.rule,
            self.select.k,
            self.select.n_slices,
        )
    }
}

/// One row of a study report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    /// Rejection rate, or mean correct groups for selection studies.
    pub value: f64,
    pub se: f64,
    /// Mean incorrect groups (selection studies only).
    pub value2: Option<f64>,
    pub se2: Option<f64>,
}

/// Study output: rows plus the configuration echo. Serialization excludes
/// wall-clock time so identical configurations yield identical bytes.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub rows: Vec<ReportRow>,
    pub config_echo: String,
    pub footnotes: Vec<String>,
    pub wall_secs: f64,
}

impl SimReport {
    /// CSV serialization (RFC 4180, header included, config echo as a
    /// trailing comment line).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let selection = self.rows.iter().any(|r| r.value2.is_some());
        if selection {
            out.push_str("label,correct_mean,correct_se,incorrect_mean,incorrect_se\n");
            for r in &self.rows {
                let _ = writeln!(
                    out,
                    "{},{:.6},{:.6},{:.6},{:.6}",
                    r.label,
                    r.value,
                    r.se,
                    r.value2.unwrap_or(f64::NAN),
                    r.se2.unwrap_or(f64::NAN)
                );
            }
        } else {
            out.push_str("label,rejection_rate,mc_se\n");
            for r in &self.rows {
                let _ = writeln!(out, "{},{:.6},{:.6}", r.label, r.value, r.se);
            }
        }
        for f in &self.footnotes {
            let _ = writeln!(out, "# {f}");
        }
        let _ = writeln!(out, "# npgroup-config: {}", self.config_echo);
        out
    }

    /// Aligned-text table mirroring the published table layout.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let selection = self.rows.iter().any(|r| r.value2.is_some());
        if selection {
            let _ = writeln!(out, "{:<12} {:>14} {:>14}", "model", "corr.selected", "incorr.selected");
            for r in &self.rows {
                let _ = writeln!(
                    out,
                    "{:<12} {:>8.3} ({:.3}) {:>8.3} ({:.3})",
                    r.label,
                    r.value,
                    r.se,
                    r.value2.unwrap_or(f64::NAN),
                    r.se2.unwrap_or(f64::NAN)
                );
            }
        } else {
            let _ = writeln!(out, "{:<10} {:>10} {:>10}", "theta", "rej.rate", "mc.se");
            for r in &self.rows {
                let _ = writeln!(out, "{:<10} {:>10.3} {:>10.4}", r.label, r.value, r.se);
            }
        }
        for f in &self.footnotes {
            let _ = writeln!(out, "# {f}");
        }
        let _ = writeln!(out, "# npgroup-config: {}", self.config_echo);
        out
    }
}

/// Rejection-rate study over the configured theta grid.
pub fn run_rejection_study<T: Float>(cfg: &SimConfig<T>) -> Result<SimReport> {
    let start = std::time::Instant::now();
    let (design, thetas) = match &cfg.design {
        Design::Rejection { design, thetas } => (*design, thetas.clone()),
        _ => {
            return Err(crate::error::Error::InvalidConfig {
                reason: "run_rejection_study requires a rejection design".into(),
            })
        }
    };
    let mut rows = Vec::with_capacity(thetas.len());
    for &theta in thetas.iter() {
        let rejections: usize = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| -> Result<usize> {
                // common random numbers across the theta grid: power
                // comparisons along the grid are paired
                let mut rng = replication_rng(cfg.seed, rep as u64);
                let data = gen_model_check_with(design, fl::<T>(theta), cfg.n, &mut rng);
                let res = group_test(&data.y, &data.x_keep, &data.z, cfg.test())?;
                Ok(usize::from(res.p_value < cfg.alpha))
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let rate = rejections as f64 / cfg.replications as f64;
        let se = (rate * (1.0 - rate) / cfg.replications as f64).sqrt();
        rows.push(ReportRow {
            label: format!("{theta}"),
            value: rate,
            se,
            value2: None,
            se2: None,
        });
    }
    Ok(SimReport {
        rows,
        config_echo: cfg.echo(),
        footnotes: Vec::new(),
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Score a retained set against the truth: `(correct, incorrect)` counts.
pub fn score_selection(retained: &[usize], truth: &[usize]) -> (usize, usize) {
    let correct = retained.iter().filter(|g| truth.contains(g)).count();
    (correct, retained.len() - correct)
}

/// Group-selection study: mean correct / incorrect groups retained.
pub fn run_selection_study<T: Float>(cfg: &SimConfig<T>) -> Result<SimReport> {
    let start = std::time::Instant::now();
    let (label, truth): (String, Vec<usize>) = match &cfg.design {
        Design::SelectionContinuous { model } => {
            (format!("cont-model{model}"), CONTINUOUS_TRUE_GROUPS.to_vec())
        }
        Design::SelectionLogistic { model } => {
            (format!("logit-model{model}"), logistic_true_groups(*model))
        }
        Design::Rejection { .. } => {
            return Err(crate::error::Error::InvalidConfig {
                reason: "run_selection_study requires a selection design".into(),
            })
        }
    };

    let scores: Vec<(usize, usize)> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| -> Result<(usize, usize)> {
            let mut rng = replication_rng(cfg.seed, rep as u64);
            let (y, x, gm) = match &cfg.design {
                Design::SelectionContinuous { model } => {
                    gen_group_continuous_with::<T>(*model, cfg.n, &mut rng)
                }
                Design::SelectionLogistic { model } => {
                    gen_group_logistic_with::<T>(*model, cfg.n, &mut rng)
                }
                Design::Rejection { .. } => unreachable!(),
            };
            let trace = backward_select(&y, &x, &gm, cfg.alpha, &cfg.select)?;
            Ok(score_selection(&trace.retained, &truth))
        })
        .collect::<Result<Vec<_>>>()?;

    let reps = cfg.replications as f64;
    let mean = |vals: &[f64]| vals.iter().sum::<f64>() / reps;
    let sem = |vals: &[f64], m: f64| {
        if cfg.replications < 2 {
            0.0
        } else {
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1.0)).sqrt() / reps.sqrt()
        }
    };
    let correct: Vec<f64> = scores.iter().map(|s| s.0 as f64).collect();
    let incorrect: Vec<f64> = scores.iter().map(|s| s.1 as f64).collect();
    let (mc, mi) = (mean(&correct), mean(&incorrect));

    let mut footnotes = Vec::new();
    if matches!(cfg.design, Design::SelectionLogistic { model: 1 | 2 }) {
        footnotes.push(
            "correct/incorrect counts are per group; published counts for these designs may be per covariate"
                .to_string(),
        );
    }

    Ok(SimReport {
        rows: vec![ReportRow {
            label,
            value: mc,
            se: sem(&correct, mc),
            value2: Some(mi),
            se2: Some(sem(&incorrect, mi)),
        }],
        config_echo: cfg.echo(),
        footnotes,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}
