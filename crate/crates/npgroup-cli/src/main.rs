//! `npgroup`: significance tests for covariate groups, backward group
//! selection, and seeded simulation studies, from CSV input.

mod config;
mod ingest;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{parse_kernel, parse_rule, read_config_file, Overrides, RunConfig};
use ingest::{load_dataset, parse_groups};
use npgroup::smoothing::Bandwidth;
use npgroup::{
    backward_select, group_test, CheckDesign, Design, SimConfig, SimReport,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("column `{name}` not found")]
    MissingColumn { name: String },
    #[error("column `{col}` is assigned to more than one group")]
    OverlappingGroups { col: String },
    #[error("column `{col}` is not assigned to any group")]
    UnassignedColumn { col: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numeric(#[from] npgroup::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "npgroup", version, about = "Nonparametric group significance testing and selection")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Flat key=value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master RNG seed. Omitted: an entropy seed is drawn and reported.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap. Results are independent of this value.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also write the report as CSV to this path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    p: Option<usize>,
    #[arg(long, global = true)]
    q: Option<usize>,
    /// Screening threshold for the supervised principal component.
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// Covariate screening rule: rule1 | rule2.
    #[arg(long, global = true)]
    rule: Option<String>,
    /// Smoothing kernel: epanechnikov | gaussian.
    #[arg(long, global = true)]
    kernel: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Test one covariate group for significance given a null set.
    Test {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        response: String,
        /// Comma-separated columns of the null model (may be empty).
        #[arg(long, default_value = "")]
        null_cols: String,
        /// Comma-separated columns of the tested group.
        #[arg(long)]
        test_cols: String,
        /// Per-coordinate bandwidths, comma-separated (default: rate-feasible).
        #[arg(long)]
        bandwidth: Option<String>,
    },
    /// Backward group elimination with an FDR-adjusted stopping rule.
    Select {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        response: String,
        /// Inline `name:col1,col2;...` or a `column,group` mapping file.
        #[arg(long)]
        groups: String,
        /// Projection directions kept from the dimension-reduction step.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n_slices: Option<usize>,
    },
    /// Run a seeded simulation study.
    Simulate {
        /// table1 | table2 | table3 | table4-m1..m3 | table5-m1..m3
        #[arg(long)]
        design: String,
        /// Theta grid for the rejection designs, comma-separated.
        #[arg(long)]
        thetas: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
    },
}

fn overrides_from_flags(cli: &Cli) -> Result<Overrides, CliError> {
    let mut ov = Overrides {
        p: cli.p,
        q: cli.q,
        theta: cli.theta,
        alpha: cli.alpha,
        seed: cli.seed,
        ..Overrides::default()
    };
    if let Some(r) = &cli.rule {
        ov.rule = Some(parse_rule(r)?);
    }
    if let Some(k) = &cli.kernel {
        ov.kernel = Some(parse_kernel(k)?);
    }
    if let Cmd::Select { k, n_slices, .. } = &cli.cmd {
        ov.k = *k;
        ov.n_slices = *n_slices;
    }
    if let Cmd::Simulate { n, reps, .. } = &cli.cmd {
        ov.n = *n;
        ov.reps = *reps;
    }
    Ok(ov)
}

fn emit(report_text: &str, csv_text: &str, out: &Option<PathBuf>) -> Result<(), CliError> {
    print!("{report_text}");
    if let Some(path) = out {
        std::fs::write(path, csv_text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn footer(cfg: &RunConfig, extra: &str) -> String {
    let mut f = format!("# npgroup-config: {}", cfg.echo(extra));
    if cfg.seed_from_entropy {
        f.push_str(" (seed drawn from entropy)");
    }
    f.push('\n');
    f
}

fn cmd_test(
    cfg: &RunConfig,
    data: &PathBuf,
    response: &str,
    null_cols: &str,
    test_cols: &str,
    bandwidth: &Option<String>,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let ds = load_dataset(data, response)?;
    let keep_idx = ds.columns(null_cols)?;
    let test_idx = ds.columns(test_cols)?;
    if test_idx.is_empty() {
        return Err(CliError::Usage("--test-cols must name at least one column".into()));
    }
    if let Some(shared) = test_idx.iter().find(|i| keep_idx.contains(i)) {
        return Err(CliError::OverlappingGroups { col: ds.names[*shared].clone() });
    }
    let mut tc = cfg.test_config();
    if let Some(bw) = bandwidth {
        let lambdas: Vec<f64> = bw
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("bad --bandwidth list `{bw}`")))?;
        tc.bandwidth = Some(Bandwidth::new(lambdas)?);
    }
    let x_keep = ds.submatrix(&keep_idx);
    let z = ds.submatrix(&test_idx);
    let res = group_test(&ds.y, &x_keep, &z, &tc)?;

    let name_list = |idxs: &[usize]| -> String {
        idxs.iter().map(|&i| ds.names[i].clone()).collect::<Vec<_>>().join(",")
    };
    let selected = res
        .diagnostics
        .selected
        .as_ref()
        .map(|s| name_list(&s.iter().map(|&j| test_idx[j]).collect::<Vec<_>>()))
        .unwrap_or_default();
    let mut text = String::new();
    let _ = writeln!(text, "n = {}", res.n);
    let _ = writeln!(text, "tested group = {}", name_list(&test_idx));
    let _ = writeln!(text, "null columns = {}", name_list(&keep_idx));
    let _ = writeln!(text, "z = {:.6}", res.z);
    let _ = writeln!(text, "p_value = {:.6}", res.p_value);
    let _ = writeln!(text, "mst = {:.6}", res.mst);
    let _ = writeln!(text, "mse = {:.6}", res.mse);
    let _ = writeln!(text, "tau2_hat = {:.6}", res.tau2_hat);
    if !selected.is_empty() {
        let _ = writeln!(text, "pc_selected = {selected}");
    }
    if !res.diagnostics.dropped_columns.is_empty() {
        let _ = writeln!(
            text,
            "dropped_constant_columns = {}",
            name_list(
                &res.diagnostics.dropped_columns.iter().map(|&j| test_idx[j]).collect::<Vec<_>>()
            )
        );
    }
    let _ = writeln!(
        text,
        "bandwidth = {}",
        res.diagnostics
            .bandwidth
            .iter()
            .map(|l| format!("{l:.6}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    let foot = footer(cfg, "");
    text.push_str(&foot);

    let mut csv_text = String::from("statistic,value\n");
    for (k, v) in [
        ("z", res.z),
        ("p_value", res.p_value),
        ("mst", res.mst),
        ("mse", res.mse),
        ("tau2_hat", res.tau2_hat),
    ] {
        let _ = writeln!(csv_text, "{k},{v:.12}");
    }
    csv_text.push_str(&foot);
    emit(&text, &csv_text, out)
}

fn cmd_select(
    cfg: &RunConfig,
    data: &PathBuf,
    response: &str,
    groups: &str,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let ds = load_dataset(data, response)?;
    let gm = parse_groups(&ds, groups)?;
    let trace = backward_select(&ds.y, &ds.x, &gm, cfg.alpha, &cfg.select_config())?;

    let mut text = String::new();
    let _ = writeln!(text, "{:<6} {:<28} {:>8} {}", "iter", "active", "cutoff", "eliminated");
    for (i, it) in trace.iterations.iter().enumerate() {
        let active: Vec<String> = it.active_groups.iter().map(|&g| gm.label(g)).collect();
        let elim = it
            .eliminated_group
            .map(|g| gm.label(g))
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            text,
            "{:<6} {:<28} {:>8} {}",
            i + 1,
            active.join(","),
            it.cutoff_k,
            elim
        );
        let pv: Vec<String> = it
            .active_groups
            .iter()
            .zip(&it.pvalues)
            .map(|(&g, p)| format!("{}={:.4}", gm.label(g), p))
            .collect();
        let _ = writeln!(text, "       p-values: {}", pv.join(" "));
        if let Some(kc) = it.k_capped {
            let _ = writeln!(text, "       note: projection rank capped at {kc}");
        }
    }
    let retained: Vec<String> = trace.retained.iter().map(|&g| gm.label(g)).collect();
    let _ = writeln!(text, "retained: {}", if retained.is_empty() { "(none)".to_string() } else { retained.join(",") });
    let foot = footer(cfg, "");
    text.push_str(&foot);

    let mut csv_text = String::from("iteration,active_groups,cutoff_k,eliminated,pvalues\n");
    for (i, it) in trace.iterations.iter().enumerate() {
        let active: Vec<String> = it.active_groups.iter().map(|&g| gm.label(g)).collect();
        let pv: Vec<String> = it.pvalues.iter().map(|p| format!("{p:.6}")).collect();
        let _ = writeln!(
            csv_text,
            "{},\"{}\",{},{},\"{}\"",
            i + 1,
            active.join(","),
            it.cutoff_k,
            it.eliminated_group.map(|g| gm.label(g)).unwrap_or_default(),
            pv.join(",")
        );
    }
    let _ = writeln!(csv_text, "# retained: {}", retained.join(","));
    csv_text.push_str(&foot);
    emit(&text, &csv_text, out)
}

fn parse_thetas(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad --thetas list `{s}`")))
}

fn cmd_simulate(
    cfg: &mut RunConfig,
    design: &str,
    thetas: &Option<String>,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let theta_grid = match thetas {
        Some(s) => Some(parse_thetas(s)?),
        None => None,
    };
    let (sim_design, default_n, default_reps) = match design {
        "table1" => (
            Design::Rejection {
                design: CheckDesign::Additive,
                thetas: theta_grid.clone().unwrap_or_else(|| vec![0.0, 0.2, 0.4, 0.6, 0.8]),
            },
            200,
            500,
        ),
        "table2" => (
            Design::Rejection {
                design: CheckDesign::NonAdditive,
                thetas: theta_grid.clone().unwrap_or_else(|| vec![0.0, 0.2, 0.4, 0.6, 0.8]),
            },
            200,
            500,
        ),
        "table3" => (
            Design::Rejection {
                design: CheckDesign::Hetero,
                thetas: theta_grid.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0, 1.5, 2.0]),
            },
            200,
            500,
        ),
        "table4-m1" | "table4-m2" | "table4-m3" => {
            let model = design.as_bytes()[8] - b'0';
            (Design::SelectionContinuous { model }, 100, 200)
        }
        "table5-m1" | "table5-m2" | "table5-m3" => {
            let model = design.as_bytes()[8] - b'0';
            (Design::SelectionLogistic { model }, 200, 200)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown design `{other}` (table1|table2|table3|table4-m1..m3|table5-m1..m3)"
            )))
        }
    };
    let n = cfg.n.unwrap_or(default_n);
    let reps = cfg.reps.unwrap_or(default_reps);
    cfg.n = Some(n);
    cfg.reps = Some(reps);

    let mut sim = SimConfig::new(sim_design.clone(), n, reps, cfg.seed);
    sim.alpha = cfg.alpha;
    sim.select = cfg.select_config();

    let mut report: SimReport = match sim_design {
        Design::Rejection { .. } => npgroup::run_rejection_study(&sim)?,
        _ => npgroup::run_selection_study(&sim)?,
    };
    // replace the library echo with the fully resolved CLI configuration
    report.config_echo = cfg.echo(&format!("design={design}"));
    let mut text = report.to_table();
    if cfg.seed_from_entropy {
        let _ = writeln!(text, "# seed drawn from entropy: {}", cfg.seed);
    }
    let mut csv_text = report.to_csv();
    if cfg.seed_from_entropy {
        let _ = writeln!(csv_text, "# seed drawn from entropy: {}", cfg.seed);
    }
    emit(&text, &csv_text, out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        // results are independent of pool size by construction
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size worker pool: {e}")))?;
    }
    let file_ov = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => Overrides::default(),
    };
    let mut cfg = overrides_from_flags(&cli)?.over(file_ov).resolve()?;
    match &cli.cmd {
        Cmd::Test { data, response, null_cols, test_cols, bandwidth } => {
            cmd_test(&cfg, data, response, null_cols, test_cols, bandwidth, &cli.out)
        }
        Cmd::Select { data, response, groups, .. } => {
            cmd_select(&cfg, data, response, groups, &cli.out)
        }
        Cmd::Simulate { design, thetas, .. } => {
            cmd_simulate(&mut cfg, design, thetas, &cli.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("npgroup: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
