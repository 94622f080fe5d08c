//! Risk-loading tables for the reference parameter set and custom sweeps.
//!
//! Every table is a header plus rows of preformatted cells, so the CSV and
//! JSON renderings carry exactly the printed precision.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::distribution::DiscreteLossDistribution;
use crate::error::{Result, RiskError};
use crate::models::{
    closed_form_mean_per_policy, loss_count_distribution_with, BuildOptions, ModelSpec,
    PortfolioParams,
};
use crate::monte_carlo::{empirical_distribution, simulate, SimulationConfig, DEFAULT_BLOCK_SIZE};
use crate::pricing::loading_from_distribution;
use crate::risk_measures::{MeasureKind, RiskMeasureSpec, TvarConvention};

pub const POLICY_GRID: [u64; 7] = [1, 5, 10, 50, 100, 1_000, 10_000];
pub const SIMULATED_POLICY_GRID: [u64; 8] = [1, 5, 10, 50, 100, 1_000, 10_000, 100_000];
pub const P_TILDE_GRID: [f64; 5] = [0.0, 0.001, 0.01, 0.05, 0.1];
pub const SIMS_GRID: [u64; 3] = [1_000_000, 10_000_000, 20_000_000];
/// Loss probability per exposure in the normal state.
pub const NORMAL_P: f64 = 1.0 / 6.0;
/// Loss probability per exposure in a crisis.
pub const CRISIS_Q: f64 = 0.5;
pub const CONVERGENCE_POLICIES: u64 = 100;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TABLE_SIMS: u64 = 10_000_000;

pub const FOOTER_LABEL: &str = "E[L]/N";

const IID_COLUMNS: [(&str, f64); 3] = [("p=1/6", 1.0 / 6.0), ("p=1/4", 0.25), ("p=1/2", 0.5)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TableId {
    T1,
    T2,
    T3,
    T4,
    T5,
}

impl TableId {
    pub const ALL: [TableId; 5] = [
        TableId::T1,
        TableId::T2,
        TableId::T3,
        TableId::T4,
        TableId::T5,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TableId::T1 => "T1",
            TableId::T2 => "T2",
            TableId::T3 => "T3",
            TableId::T4 => "T4",
            TableId::T5 => "T5",
        }
    }

    /// Columns that identify a row.
    pub fn key_columns(self) -> usize {
        match self {
            TableId::T1 => 1,
            _ => 2,
        }
    }

    /// Comparison tolerance against the reference fixture.
    pub fn tolerance(self) -> f64 {
        match self {
            TableId::T1 => 0.0005,
            TableId::T2 | TableId::T3 => 0.005,
            TableId::T4 | TableId::T5 => 0.02,
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TableId {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T1" | "1" => Ok(TableId::T1),
            "T2" | "2" => Ok(TableId::T2),
            "T3" | "3" => Ok(TableId::T3),
            "T4" | "4" => Ok(TableId::T4),
            "T5" | "5" => Ok(TableId::T5),
            other => Err(RiskError::InvalidParameter(format!(
                "unknown table id {other:?}"
            ))),
        }
    }
}

/// A T3-shaped grid for an arbitrary model: one row per (measure, N), one
/// column per crisis probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub model: ModelSpec,
    pub policies: Vec<u64>,
    pub p_tildes: Vec<f64>,
    pub convention: TvarConvention,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableKind {
    Reference(TableId),
    Custom(SweepSpec),
}

/// Optional changes to a reference table's grids and simulation settings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Overrides {
    pub policies: Option<Vec<u64>>,
    pub p_tildes: Option<Vec<f64>>,
    /// Simulation budgets: the T5 rows, or the single T4 budget in
    /// simulation mode (first entry).
    pub sims: Option<Vec<u64>>,
    pub seed: Option<u64>,
    pub block_size: Option<u64>,
    /// Regenerate T4 by simulation instead of exact convolution.
    pub monte_carlo: bool,
    pub build: Option<BuildOptions>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRequest {
    pub kind: TableKind,
    pub params: PortfolioParams,
    pub overrides: Overrides,
}

impl TableRequest {
    pub fn reference(id: TableId) -> Self {
        Self {
            kind: TableKind::Reference(id),
            params: PortfolioParams::default(),
            overrides: Overrides::default(),
        }
    }

    pub fn custom(sweep: SweepSpec, params: PortfolioParams) -> Self {
        Self {
            kind: TableKind::Custom(sweep),
            params,
            overrides: Overrides::default(),
        }
    }

    fn build(&self) -> BuildOptions {
        self.overrides.build.unwrap_or_default()
    }

    fn seed(&self) -> u64 {
        self.overrides.seed.unwrap_or(DEFAULT_SEED)
    }

    fn block_size(&self) -> u64 {
        self.overrides.block_size.unwrap_or(DEFAULT_BLOCK_SIZE)
    }

    fn policies_or(&self, default: &[u64]) -> Vec<u64> {
        self.overrides
            .policies
            .clone()
            .unwrap_or_else(|| default.to_vec())
    }

    fn p_tildes(&self) -> Vec<f64> {
        self.overrides
            .p_tildes
            .clone()
            .unwrap_or_else(|| P_TILDE_GRID.to_vec())
    }
}

/// A generated table of formatted cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    /// Rows as `(header, cell)` pairs.
    pub fn records(&self) -> impl Iterator<Item = Vec<(&str, &str)>> + '_ {
        self.rows.iter().map(move |row| {
            self.header
                .iter()
                .map(String::as_str)
                .zip(row.iter().map(String::as_str))
                .collect()
        })
    }
}

/// Fixed-point rendering with `decimals` places, ties away from zero.
///
/// The value is first snapped to a millionth of the last printed unit so
/// that binary noise around exact ties (e.g. `0.0325`) does not decide the
/// rounding direction.
pub fn fixed(x: f64, decimals: usize) -> String {
    let scale = 10f64.powi(decimals as i32);
    let snapped = (x * scale * 1e6).round() / 1e6;
    let rounded = snapped.round() / scale;
    // avoid "-0.000"
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded:.decimals$}")
}

/// Label of a crisis-probability column.
pub fn p_tilde_label(p_tilde: f64) -> String {
    format!("ptilde={p_tilde}")
}

pub fn generate_table(req: &TableRequest) -> Result<Table> {
    req.params.validate()?;
    match &req.kind {
        TableKind::Reference(TableId::T1) => single_policy_table(&req.params, NORMAL_P),
        TableKind::Reference(TableId::T2) => iid_table(req),
        TableKind::Reference(TableId::T3) => sweep_table(
            req,
            &SweepSpec {
                model: ModelSpec::CommonShock {
                    p: NORMAL_P,
                    q: CRISIS_Q,
                    p_tilde: 0.0,
                },
                policies: req.policies_or(&POLICY_GRID),
                p_tildes: req.p_tildes(),
                convention: TvarConvention::ConditionalTail,
            },
        ),
        TableKind::Reference(TableId::T4) => per_exposure_table(req),
        TableKind::Reference(TableId::T5) => convergence_table(req),
        TableKind::Custom(sweep) => sweep_table(req, sweep),
    }
}

/// Loss distribution of one policy: `k, policy_loss, pmf, cdf`.
pub fn single_policy_table(params: &PortfolioParams, p: f64) -> Result<Table> {
    let d = DiscreteLossDistribution::binomial(params.exposures, p)?;
    let mut cdf = 0.0;
    let rows = (0..=params.exposures)
        .map(|k| {
            let pmf = d.pmf_at(k);
            cdf += pmf;
            vec![
                k.to_string(),
                format!("{}", params.severity * k as f64),
                fixed(pmf, 5),
                fixed(cdf, 5),
            ]
        })
        .collect();
    Ok(Table {
        header: ["k", "policy_loss", "pmf", "cdf"]
            .map(String::from)
            .to_vec(),
        rows,
    })
}

fn measures(alpha: f64, convention: TvarConvention) -> Result<[RiskMeasureSpec; 2]> {
    Ok([
        RiskMeasureSpec::var(alpha)?,
        RiskMeasureSpec::tvar(alpha)?.with_convention(convention),
    ])
}

/// Loadings for every (policies, column) cell; `cells[i][j]` holds the VaR
/// and TVaR loading for `policies[i]` and column `j`.
fn loading_cells(
    policies: &[u64],
    columns: &[ModelSpec],
    params: &PortfolioParams,
    measures: &[RiskMeasureSpec; 2],
    distribution: impl Fn(&ModelSpec, u64) -> Result<DiscreteLossDistribution>,
) -> Result<Vec<Vec<[f64; 2]>>> {
    policies
        .iter()
        .map(|&n| {
            let p = params.with_policies(n);
            columns
                .iter()
                .map(|model| {
                    let d = distribution(model, n)?;
                    Ok([
                        loading_from_distribution(&d, model, &p, &measures[0])?,
                        loading_from_distribution(&d, model, &p, &measures[1])?,
                    ])
                })
                .collect()
        })
        .collect()
}

/// Lays out VaR rows then TVaR rows, followed by the expected-loss footer.
fn grid_table(
    key_header: &str,
    row_keys: &[u64],
    column_labels: Vec<String>,
    cells: &[Vec<[f64; 2]>],
    footer: Vec<f64>,
) -> Table {
    let mut header = vec!["measure".to_string(), key_header.to_string()];
    header.extend(column_labels);
    let mut rows = Vec::new();
    for (m, kind) in [MeasureKind::Var, MeasureKind::Tvar]
        .into_iter()
        .enumerate()
    {
        for (key, line) in row_keys.iter().zip(cells) {
            let mut row = vec![kind.label().to_string(), key.to_string()];
            row.extend(line.iter().map(|c| fixed(c[m], 3)));
            rows.push(row);
        }
    }
    let mut last = vec![FOOTER_LABEL.to_string(), String::new()];
    last.extend(footer.into_iter().map(|e| fixed(e, 2)));
    rows.push(last);
    Table { header, rows }
}

fn iid_table(req: &TableRequest) -> Result<Table> {
    let policies = req.policies_or(&POLICY_GRID);
    let columns: Vec<ModelSpec> = IID_COLUMNS
        .iter()
        .map(|&(_, p)| ModelSpec::iid(p))
        .collect::<Result<_>>()?;
    let build = req.build();
    let cells = loading_cells(
        &policies,
        &columns,
        &req.params,
        &measures(req.params.alpha, TvarConvention::ConditionalTail)?,
        |m, n| loss_count_distribution_with(m, n, req.params.exposures, &build),
    )?;
    let footer = columns
        .iter()
        .map(|m| closed_form_mean_per_policy(m, &req.params))
        .collect();
    let labels = IID_COLUMNS.iter().map(|(l, _)| l.to_string()).collect();
    Ok(grid_table("N", &policies, labels, &cells, footer))
}

fn sweep_columns(sweep: &SweepSpec) -> Result<Vec<ModelSpec>> {
    sweep
        .p_tildes
        .iter()
        .map(|&t| {
            let m = sweep.model.with_p_tilde(t);
            m.validate()?;
            Ok(m)
        })
        .collect()
}

fn sweep_table(req: &TableRequest, sweep: &SweepSpec) -> Result<Table> {
    if sweep.policies.is_empty() || sweep.p_tildes.is_empty() {
        return Err(RiskError::InvalidParameter("empty sweep grid".into()));
    }
    let columns = sweep_columns(sweep)?;
    let build = req.build();
    let cells = loading_cells(
        &sweep.policies,
        &columns,
        &req.params,
        &measures(req.params.alpha, sweep.convention)?,
        |m, n| loss_count_distribution_with(m, n, req.params.exposures, &build),
    )?;
    let footer = columns
        .iter()
        .map(|m| closed_form_mean_per_policy(m, &req.params))
        .collect();
    let labels = sweep.p_tildes.iter().map(|&t| p_tilde_label(t)).collect();
    Ok(grid_table("N", &sweep.policies, labels, &cells, footer))
}

fn per_exposure_sweep(req: &TableRequest) -> SweepSpec {
    SweepSpec {
        model: ModelSpec::PerExposureShock {
            p: NORMAL_P,
            q: CRISIS_Q,
            p_tilde: 0.0,
        },
        policies: req.policies_or(&SIMULATED_POLICY_GRID),
        p_tildes: req.p_tildes(),
        convention: TvarConvention::QuantileAverage,
    }
}

fn per_exposure_table(req: &TableRequest) -> Result<Table> {
    let sweep = per_exposure_sweep(req);
    if !req.overrides.monte_carlo {
        return sweep_table(req, &sweep);
    }
    let columns = sweep_columns(&sweep)?;
    let sims = req
        .overrides
        .sims
        .as_ref()
        .and_then(|s| s.first().copied())
        .unwrap_or(DEFAULT_TABLE_SIMS);
    let config = SimulationConfig::new(sims, req.seed()).with_block_size(req.block_size());
    let cells = loading_cells(
        &sweep.policies,
        &columns,
        &req.params,
        &measures(req.params.alpha, sweep.convention)?,
        |m, n| empirical_distribution(&simulate(m, n, req.params.exposures, &config)?),
    )?;
    let footer = columns
        .iter()
        .map(|m| closed_form_mean_per_policy(m, &req.params))
        .collect();
    let labels = sweep.p_tildes.iter().map(|&t| p_tilde_label(t)).collect();
    Ok(grid_table("N", &sweep.policies, labels, &cells, footer))
}

/// Simulated loadings at a fixed portfolio size, one row per budget.
fn convergence_table(req: &TableRequest) -> Result<Table> {
    let sweep = per_exposure_sweep(req);
    let columns = sweep_columns(&sweep)?;
    let n = req
        .overrides
        .policies
        .as_ref()
        .and_then(|p| p.first().copied())
        .unwrap_or(CONVERGENCE_POLICIES);
    let params = req.params.with_policies(n);
    let sims = req
        .overrides
        .sims
        .clone()
        .unwrap_or_else(|| SIMS_GRID.to_vec());
    if sims.is_empty() {
        return Err(RiskError::InvalidParameter(
            "empty simulation budget list".into(),
        ));
    }
    let ms = measures(params.alpha, sweep.convention)?;
    // cells[i][j]: budget i, column j
    let mut cells = vec![Vec::with_capacity(columns.len()); sims.len()];
    for model in &columns {
        let study = crate::monte_carlo::convergence_study(
            model,
            &params,
            &sims,
            &ms,
            req.seed(),
            req.block_size(),
        )?;
        for (row, line) in study.into_iter().zip(cells.iter_mut()) {
            line.push([row.loadings[0], row.loadings[1]]);
        }
    }
    let footer = columns
        .iter()
        .map(|m| closed_form_mean_per_policy(m, &params))
        .collect();
    let labels = sweep.p_tildes.iter().map(|&t| p_tilde_label(t)).collect();
    Ok(grid_table("sims", &sims, labels, &cells, footer))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_rounding() {
        assert_eq!(fixed(0.0325, 3), "0.033");
        assert_eq!(fixed(0.03249999, 3), "0.032");
        assert_eq!(fixed(-0.0001, 3), "0.000");
        assert_eq!(fixed(2.9999999999, 3), "3.000");
        assert_eq!(fixed(12.047, 2), "12.05");
    }

    #[test]
    fn table_ids_parse() {
        assert_eq!("t3".parse::<TableId>().unwrap(), TableId::T3);
        assert_eq!("5".parse::<TableId>().unwrap(), TableId::T5);
        assert!("T6".parse::<TableId>().is_err());
    }

    #[test]
    fn single_policy_rows() {
        let t = generate_table(&TableRequest::reference(TableId::T1)).unwrap();
        assert_eq!(t.header, ["k", "policy_loss", "pmf", "cdf"]);
        assert_eq!(t.rows[1], ["1", "10", "0.40188", "0.73678"]);
        assert_eq!(t.rows[6][3], "1.00000");
    }

    #[test]
    fn iid_last_var_row() {
        let t = generate_table(&TableRequest::reference(TableId::T2)).unwrap();
        let row = t
            .rows
            .iter()
            .find(|r| r[0] == "VaR" && r[1] == "10000")
            .unwrap();
        assert_eq!(row[2..], ["0.032", "0.037", "0.043"]);
        assert_eq!(
            t.rows.last().unwrap(),
            &["E[L]/N", "", "10.00", "15.00", "30.00"]
        );
    }

    #[test]
    fn zero_crisis_sweep_reduces_to_iid() {
        let params = PortfolioParams::default();
        let sweep = SweepSpec {
            model: ModelSpec::CommonShock {
                p: NORMAL_P,
                q: CRISIS_Q,
                p_tilde: 0.0,
            },
            policies: POLICY_GRID.to_vec(),
            p_tildes: vec![0.0],
            convention: TvarConvention::ConditionalTail,
        };
        let custom = generate_table(&TableRequest::custom(sweep, params)).unwrap();
        let iid = generate_table(&TableRequest::reference(TableId::T2)).unwrap();
        for (a, b) in custom.rows.iter().zip(&iid.rows) {
            assert_eq!(a[..3], b[..3]);
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = generate_table(&TableRequest::reference(TableId::T2)).unwrap();
        let csv = t.to_csv();
        let mut r = csv::Reader::from_reader(csv.as_bytes());
        let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, t.header);
        let rows: Vec<Vec<String>> = r
            .records()
            .map(|rec| rec.unwrap().iter().map(String::from).collect())
            .collect();
        assert_eq!(rows, t.rows);
    }
}
