use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use riskdiv_core::models::{BuildOptions, DEFAULT_MAX_SUPPORT};
use riskdiv_core::monte_carlo::DEFAULT_BLOCK_SIZE;
use riskdiv_core::reference::{compare_with_reference, CellStatus, DiscrepancyReport};
use riskdiv_core::tables::{
    generate_table, Overrides, SweepSpec, Table, TableId, TableRequest, CONVERGENCE_POLICIES,
    DEFAULT_SEED, SIMS_GRID,
};
use riskdiv_core::{
    loss_count_distribution_with, risk_loading_per_policy, simulate, LossSource, ModelSpec,
    PortfolioParams, RiskError, RiskMeasureSpec, SimulationConfig, TvarConvention,
};

const MAX_SUPPORT_ENV: &str = "RISKDIV_MAX_SUPPORT";

#[derive(Parser, Debug)]
#[command(
    name = "riskdiv",
    version,
    about = "Risk loadings for portfolios with systemic risk"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Risk-measure confidence level
    #[arg(long, global = true, default_value_t = 0.99)]
    alpha: f64,
    /// Cost-of-capital rate
    #[arg(long, global = true, default_value_t = 0.15)]
    eta: f64,
    /// Loss per claim
    #[arg(long, global = true, default_value_t = 10.0)]
    severity: f64,
    /// Expense ratio
    #[arg(long, global = true, default_value_t = 0.0)]
    expense: f64,
    /// Exposures per policy
    #[arg(long, global = true, default_value_t = 6)]
    exposures: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    Iid,
    #[value(alias = "common-shock", alias = "mixture")]
    Shock,
    #[value(alias = "per-exposure", alias = "vector")]
    Crisis,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Measure {
    Var,
    Tvar,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Convention {
    Conditional,
    Quantile,
}

impl From<Convention> for TvarConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Conditional => TvarConvention::ConditionalTail,
            Convention::Quantile => TvarConvention::QuantileAverage,
        }
    }
}

/// Accepts decimals and fractions such as `1/6`.
fn probability(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{s}: {e}"))?,
    };
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{s} is not a probability"))
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Iid)]
    model: ModelKind,
    /// Normal-state loss probability per exposure
    #[arg(long, value_parser = probability, default_value = "1/6")]
    p: f64,
    /// Crisis-state loss probability per exposure
    #[arg(long, value_parser = probability, default_value = "0.5")]
    q: f64,
}

impl ModelArgs {
    fn spec(&self, p_tilde: f64) -> Result<ModelSpec, RiskError> {
        match self.model {
            ModelKind::Iid => ModelSpec::iid(self.p),
            ModelKind::Shock => ModelSpec::common_shock(self.p, self.q, p_tilde),
            ModelKind::Crisis => ModelSpec::per_exposure_shock(self.p, self.q, p_tilde),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for simulation (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long = "block-size", default_value_t = DEFAULT_BLOCK_SIZE)]
    block_size: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Loss-count pmf and cdf for one portfolio
    Dist {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "N", default_value_t = 1)]
        policies: u64,
        #[arg(long, value_parser = probability, default_value = "0")]
        ptilde: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// A single risk loading per policy
    Loading {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "N", default_value_t = 1)]
        policies: u64,
        #[arg(long, value_parser = probability, default_value = "0")]
        ptilde: f64,
        #[arg(long, value_enum, default_value_t = Measure::Var)]
        measure: Measure,
        #[arg(long, value_enum, default_value_t = Convention::Conditional)]
        convention: Convention,
        /// Estimate by simulation instead of the exact distribution
        #[arg(long)]
        mc: bool,
        #[arg(long, default_value_t = 1_000_000)]
        sims: u64,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Loadings over a grid of N and crisis probabilities
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(
            long = "N",
            value_delimiter = ',',
            default_value = "1,5,10,50,100,1000,10000"
        )]
        policies: Vec<u64>,
        #[arg(long, value_delimiter = ',', value_parser = probability, default_value = "0,0.001,0.01,0.05,0.1")]
        ptilde: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Convention::Conditional)]
        convention: Convention,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// One of the reference tables T1 to T5
    Table {
        #[arg(long)]
        id: TableId,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulated loss-count histogram
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "N", default_value_t = 1)]
        policies: u64,
        #[arg(long, value_parser = probability, default_value = "0")]
        ptilde: f64,
        #[arg(long, default_value_t = 1_000_000)]
        sims: u64,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Regenerate tables and compare them with the shipped reference values
    Verify {
        /// Tables to check (default: all)
        #[arg(long, value_delimiter = ',')]
        id: Vec<TableId>,
        #[command(flatten)]
        grid: GridArgs,
        /// Write the full discrepancy report here
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Loadings at a fixed N for increasing simulation budgets
    Converge {
        #[arg(long = "N", default_value_t = CONVERGENCE_POLICIES)]
        policies: u64,
        #[arg(long, value_delimiter = ',')]
        sims: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',', value_parser = probability)]
        ptilde: Option<Vec<f64>>,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    #[arg(long = "N", value_delimiter = ',')]
    policies: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',', value_parser = probability)]
    ptilde: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sims: Option<Vec<u64>>,
    /// Regenerate T4 by simulation
    #[arg(long)]
    mc: bool,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Debug)]
enum CliError {
    Model(RiskError),
    Usage(String),
    Io(io::Error),
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        CliError::Model(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn params(g: &GlobalArgs, policies: u64) -> Result<PortfolioParams, CliError> {
    let p = PortfolioParams {
        policies,
        exposures: g.exposures,
        severity: g.severity,
        cost_of_capital: g.eta,
        expense_ratio: g.expense,
        alpha: g.alpha,
    };
    p.validate()?;
    Ok(p)
}

fn build_options() -> Result<BuildOptions, CliError> {
    let max_support = match std::env::var(MAX_SUPPORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("{MAX_SUPPORT_ENV}={v}: {e}")))?,
        Err(_) => DEFAULT_MAX_SUPPORT,
    };
    Ok(BuildOptions {
        max_support,
        ..BuildOptions::default()
    })
}

/// Sizes the global pool once; later calls are no-ops.
fn set_workers(workers: Option<usize>) -> Result<(), CliError> {
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cell_value(text: &str) -> Value {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => {
            serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
        }
        _ => Value::String(text.to_string()),
    }
}

fn render(table: &Table, format: Format) -> String {
    match format {
        Format::Csv => table.to_csv(),
        Format::Json => {
            let rows: Vec<Value> = table
                .records()
                .map(|rec| {
                    let obj: Map<String, Value> = rec
                        .into_iter()
                        .map(|(k, v)| (k.to_string(), cell_value(v)))
                        .collect();
                    Value::Object(obj)
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&rows).expect("json values");
            s.push('\n');
            s
        }
    }
}

fn table_request(id: TableId, g: &GlobalArgs, grid: &GridArgs) -> Result<TableRequest, CliError> {
    let mut req = TableRequest::reference(id);
    req.params = params(g, 1)?;
    req.overrides = Overrides {
        policies: grid.policies.clone(),
        p_tildes: grid.ptilde.clone(),
        sims: grid.sims.clone(),
        seed: grid.sim.seed,
        block_size: Some(grid.sim.block_size),
        monte_carlo: grid.mc,
        build: Some(build_options()?),
    };
    Ok(req)
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Dist {
            model,
            policies,
            ptilde,
            output,
        } => {
            let spec = model.spec(*ptilde)?;
            warn(&spec);
            let d = loss_count_distribution_with(&spec, *policies, g.exposures, &build_options()?)?;
            let mut cdf = 0.0;
            let rows = d
                .iter()
                .map(|(k, m)| {
                    cdf += m;
                    vec![
                        k.to_string(),
                        format!("{}", g.severity * k as f64),
                        format!("{m:e}"),
                        format!("{cdf:.15}"),
                    ]
                })
                .collect();
            let table = Table {
                header: ["k", "loss", "pmf", "cdf"].map(String::from).to_vec(),
                rows,
            };
            emit(&render(&table, g.format), output.as_ref())?;
        }
        Command::Loading {
            model,
            policies,
            ptilde,
            measure,
            convention,
            mc,
            sims,
            sim,
        } => {
            let spec = model.spec(*ptilde)?;
            warn(&spec);
            let p = params(g, *policies)?;
            let m = match measure {
                Measure::Var => RiskMeasureSpec::var(g.alpha)?,
                Measure::Tvar => RiskMeasureSpec::tvar(g.alpha)?,
            }
            .with_convention((*convention).into());
            let source = if *mc {
                set_workers(sim.workers)?;
                let cfg = SimulationConfig::new(*sims, sim.seed.unwrap_or(DEFAULT_SEED))
                    .with_block_size(sim.block_size);
                LossSource::monte_carlo(cfg)
            } else {
                LossSource::Exact(build_options()?)
            };
            let est = risk_loading_per_policy(&spec, &p, &m, &source)?;
            let text = match g.format {
                Format::Csv => match est.standard_error {
                    Some(se) => format!("{:.3},{:.3}\n", est.loading, se),
                    None => format!("{:.3}\n", est.loading),
                },
                Format::Json => format!("{}\n", serde_json::to_string(&est).expect("json values")),
            };
            emit(&text, None)?;
        }
        Command::Sweep {
            model,
            policies,
            ptilde,
            convention,
            output,
        } => {
            let spec = model.spec(0.0)?;
            let mut req = TableRequest::custom(
                SweepSpec {
                    model: spec,
                    policies: policies.clone(),
                    p_tildes: ptilde.clone(),
                    convention: (*convention).into(),
                },
                params(g, 1)?,
            );
            req.overrides.build = Some(build_options()?);
            let table = generate_table(&req)?;
            emit(&render(&table, g.format), output.as_ref())?;
        }
        Command::Table { id, grid, output } => {
            set_workers(grid.sim.workers)?;
            let table = generate_table(&table_request(*id, g, grid)?)?;
            emit(&render(&table, g.format), output.as_ref())?;
        }
        Command::Simulate {
            model,
            policies,
            ptilde,
            sims,
            sim,
            output,
        } => {
            let spec = model.spec(*ptilde)?;
            warn(&spec);
            set_workers(sim.workers)?;
            let cfg = SimulationConfig::new(*sims, sim.seed.unwrap_or(DEFAULT_SEED))
                .with_block_size(sim.block_size);
            let h = simulate(&spec, *policies, g.exposures, &cfg)?;
            let text = match g.format {
                Format::Csv => h.to_csv(),
                Format::Json => {
                    let rows: Vec<Value> = h
                        .counts
                        .iter()
                        .map(|(k, c)| serde_json::json!({ "count": k, "tally": c }))
                        .collect();
                    format!(
                        "{}\n",
                        serde_json::to_string_pretty(&rows).expect("json values")
                    )
                }
            };
            emit(&text, output.as_ref())?;
        }
        Command::Verify { id, grid, output } => {
            set_workers(grid.sim.workers)?;
            let ids = if id.is_empty() {
                TableId::ALL.to_vec()
            } else {
                id.clone()
            };
            let mut report = DiscrepancyReport::default();
            for &t in &ids {
                let table = generate_table(&table_request(t, g, grid)?)?;
                report.extend(compare_with_reference(&table.to_csv(), t)?);
            }
            if let Some(path) = output {
                fs::write(path, report.to_csv())?;
            }
            print_summary(&ids, &report);
            if !report.is_clean() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Converge {
            policies,
            sims,
            ptilde,
            sim,
            output,
        } => {
            set_workers(sim.workers)?;
            let grid = GridArgs {
                policies: Some(vec![*policies]),
                ptilde: ptilde.clone(),
                sims: Some(sims.clone().unwrap_or_else(|| SIMS_GRID.to_vec())),
                mc: true,
                sim: sim.clone(),
            };
            let table = generate_table(&table_request(TableId::T5, g, &grid)?)?;
            emit(&render(&table, g.format), output.as_ref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn warn(spec: &ModelSpec) {
    for w in spec.warnings() {
        eprintln!("warning: {w}");
    }
}

fn print_summary(ids: &[TableId], report: &DiscrepancyReport) {
    let mut out = io::stdout().lock();
    for &id in ids {
        let cells: Vec<_> = report.cells.iter().filter(|c| c.table == id).collect();
        let flagged = cells
            .iter()
            .filter(|c| c.status == CellStatus::Flagged)
            .count();
        let unexpected = cells.iter().filter(|c| c.is_unexpected()).count();
        let _ = writeln!(
            out,
            "{id}: {} cells, {flagged} flagged, {unexpected} unexpected",
            cells.len()
        );
    }
    for c in report.flagged() {
        let generated = c
            .generated
            .map_or("missing".to_string(), |v| format!("{v}"));
        let note = match &c.erratum {
            Some(reason) => format!("erratum: {reason}"),
            None => "UNEXPECTED".to_string(),
        };
        let _ = writeln!(
            out,
            "  {} {} {}: generated {generated}, reference {}, tolerance {} ({note})",
            c.table, c.row, c.column, c.reference, c.tolerance
        );
    }
}
