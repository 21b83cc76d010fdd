//! Experiment driver: resolution ladders, L1 errors and observed orders
//! against the closed forms, IMEX vs explicit timing, Greeks extraction and
//! CSV/JSON reports.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{project_initial, Grid, State};
use crate::models::{
    black_scholes_barrier_model, xva_model_with, FarField, MarketData, PricingModel,
};
use crate::timestepping::{select_dt, FvSystem, Scheme, StabilityEstimate, StepPlan};

/// The two pricing problems the driver knows how to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    BarrierCall,
    XvaCall,
}

impl ModelId {
    pub fn default_market(self) -> MarketData<f64> {
        match self {
            ModelId::BarrierCall => MarketData::barrier_defaults(),
            ModelId::XvaCall => MarketData::xva_defaults(),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelId::BarrierCall => "barrier_call",
            ModelId::XvaCall => "xva_call",
        })
    }
}

/// Builds the pricing problem for `id`.
pub fn build_model(
    id: ModelId,
    market: MarketData<f64>,
    far_field: FarField,
) -> Result<Box<dyn PricingModel<f64>>> {
    Ok(match id {
        ModelId::BarrierCall => Box::new(black_scholes_barrier_model(market)?),
        ModelId::XvaCall => Box::new(xva_model_with(market, far_field)?),
    })
}

/// Driver knobs shared by the ladder runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub cfl: f64,
    /// Explicit runs above this many cells are recorded as skipped.
    pub explicit_ceiling: usize,
    /// Run the rows of a ladder on the rayon pool. Wall times then include
    /// contention, so timing comparisons should keep this off.
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            explicit_ceiling: 3200,
            parallel: false,
        }
    }
}

/// A numerical solution at maturity.
#[derive(Debug, Clone)]
pub struct Solution {
    pub grid: Grid<f64>,
    pub state: State<f64>,
    pub plan: StepPlan<f64>,
    pub wall_time_s: f64,
}

/// Solves `model` up to its maturity on `n_cells` cells.
pub fn solve(
    model: &dyn PricingModel<f64>,
    n_cells: usize,
    scheme: Scheme,
    cfl: f64,
) -> Result<Solution> {
    let (lo, hi) = model.domain();
    let grid = Grid::new(lo, hi, n_cells)?;
    let state0 = project_initial(&grid, model.payoff());
    let est = StabilityEstimate::from_model(model, &grid, &state0)?;
    let plan = select_dt(&est, &grid, model.maturity(), cfl, scheme)?;
    let system = FvSystem::new(model, &grid)?;
    let (state, wall) = system.integrate(&state0, &plan)?;
    Ok(Solution {
        grid,
        state,
        plan,
        wall_time_s: wall.as_secs_f64(),
    })
}

/// Exact price sampled at the cell centers, at maturity.
pub fn exact_prices(model: &dyn PricingModel<f64>, grid: &Grid<f64>) -> Result<Vec<f64>> {
    let t = model.maturity();
    grid.centers()
        .iter()
        .map(|&s| model.exact(s, t).map(|g| g.price))
        .collect()
}

/// L1 error of `solution` against the model's closed form at maturity.
pub fn solution_error(model: &dyn PricingModel<f64>, solution: &Solution) -> Result<f64> {
    let exact = exact_prices(model, &solution.grid)?;
    let values = solution.state.values();
    let sum: f64 = values.iter().zip(&exact).map(|(u, e)| (u - e).abs()).sum();
    Ok(sum * solution.grid.ds())
}

/// Outcome of one ladder row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Skipped,
    Failed,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowStatus::Ok => "ok",
            RowStatus::Skipped => "skipped",
            RowStatus::Failed => "failed",
        })
    }
}

impl FromStr for RowStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RowStatus::Ok),
            "skipped" => Ok(RowStatus::Skipped),
            "failed" => Ok(RowStatus::Failed),
            other => Err(Error::Report(format!("unknown status '{other}'"))),
        }
    }
}

/// One line of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub scheme: Scheme,
    pub n_cells: usize,
    pub l1_error: Option<f64>,
    pub observed_order: Option<f64>,
    pub dt: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub status: RowStatus,
    /// Failure diagnostic; not part of the CSV.
    #[serde(skip)]
    pub message: Option<String>,
}

impl ConvergenceRow {
    fn skipped(scheme: Scheme, n_cells: usize) -> Self {
        Self {
            scheme,
            n_cells,
            l1_error: None,
            observed_order: None,
            dt: None,
            wall_time_s: None,
            status: RowStatus::Skipped,
            message: None,
        }
    }
}

/// Rows of one or more ladders for a single model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn for_scheme(&self, scheme: Scheme) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }

    pub fn row(&self, scheme: Scheme, n_cells: usize) -> Option<&ConvergenceRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.n_cells == n_cells)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(|r| r.status == RowStatus::Failed)
    }

    pub fn has_failures(&self) -> bool {
        self.failures().next().is_some()
    }

    /// `wall_explicit / wall_imex` for every resolution where both ran.
    pub fn speedups(&self) -> Vec<(usize, f64)> {
        self.for_scheme(Scheme::Imex)
            .filter_map(|imex| {
                let ex = self.row(Scheme::Explicit, imex.n_cells)?;
                match (ex.wall_time_s, imex.wall_time_s) {
                    (Some(e), Some(i)) if i > 0.0 => Some((imex.n_cells, e / i)),
                    _ => None,
                }
            })
            .collect()
    }
}

/// `log(e_prev/e) / log(n/n_prev)`; `log2(e_prev/e)` when `n` doubles.
pub fn observed_order(prev: (usize, f64), this: (usize, f64)) -> Option<f64> {
    let (n0, e0) = prev;
    let (n1, e1) = this;
    if n1 <= n0 || !(e0 > 0.0 && e1 > 0.0) {
        return None;
    }
    let ratio = n1 as f64 / n0 as f64;
    if ratio == 2.0 {
        Some((e0 / e1).log2())
    } else {
        Some((e0 / e1).ln() / ratio.ln())
    }
}

/// Fills `observed_order` on consecutive successful rows of each scheme.
pub fn fill_orders(rows: &mut [ConvergenceRow]) {
    for scheme in [Scheme::Imex, Scheme::Explicit] {
        let mut prev: Option<(usize, f64)> = None;
        for row in rows.iter_mut().filter(|r| r.scheme == scheme) {
            row.observed_order = None;
            match (row.status, row.l1_error) {
                (RowStatus::Ok, Some(e)) => {
                    row.observed_order = prev.and_then(|p| observed_order(p, (row.n_cells, e)));
                    prev = Some((row.n_cells, e));
                }
                _ => prev = None,
            }
        }
    }
}

fn run_row(
    model: &dyn PricingModel<f64>,
    scheme: Scheme,
    n_cells: usize,
    opts: &RunOptions,
) -> ConvergenceRow {
    if scheme == Scheme::Explicit && n_cells > opts.explicit_ceiling {
        return ConvergenceRow::skipped(scheme, n_cells);
    }
    let outcome = solve(model, n_cells, scheme, opts.cfl)
        .and_then(|sol| solution_error(model, &sol).map(|e| (sol, e)));
    match outcome {
        Ok((sol, err)) => ConvergenceRow {
            scheme,
            n_cells,
            l1_error: Some(err),
            observed_order: None,
            dt: Some(sol.plan.dt),
            wall_time_s: Some(sol.wall_time_s.max(f64::MIN_POSITIVE)),
            status: RowStatus::Ok,
            message: None,
        },
        Err(e) => ConvergenceRow {
            message: Some(e.to_string()),
            status: RowStatus::Failed,
            ..ConvergenceRow::skipped(scheme, n_cells)
        },
    }
}

fn check_ladder(resolutions: &[usize]) -> Result<()> {
    if resolutions.is_empty() {
        return Err(Error::Config("resolutions must not be empty".into()));
    }
    if resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("resolutions must be strictly increasing".into()));
    }
    Ok(())
}

/// Runs one scheme over a ladder of resolutions. Failed rows are recorded,
/// not propagated; check [`ConvergenceReport::has_failures`].
pub fn run_convergence(
    model: &dyn PricingModel<f64>,
    scheme: Scheme,
    resolutions: &[usize],
    opts: &RunOptions,
) -> Result<ConvergenceReport> {
    check_ladder(resolutions)?;
    let mut rows: Vec<ConvergenceRow> = if opts.parallel {
        resolutions
            .par_iter()
            .map(|&n| run_row(model, scheme, n, opts))
            .collect()
    } else {
        resolutions
            .iter()
            .map(|&n| run_row(model, scheme, n, opts))
            .collect()
    };
    fill_orders(&mut rows);
    Ok(ConvergenceReport { rows })
}

/// Both schemes on identical grids: IMEX rows first, then explicit rows.
pub fn compare_schemes(
    model: &dyn PricingModel<f64>,
    resolutions: &[usize],
    opts: &RunOptions,
) -> Result<ConvergenceReport> {
    let mut imex = run_convergence(model, Scheme::Imex, resolutions, opts)?;
    let explicit = run_convergence(model, Scheme::Explicit, resolutions, opts)?;
    imex.rows.extend(explicit.rows);
    Ok(imex)
}

/// Finite-difference Delta and Gamma of cell averages.
#[derive(Debug, Clone, PartialEq)]
pub struct GreeksCurve {
    pub s: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Central differences in the interior, one-sided second-order stencils at
/// the two end cells.
pub fn extract_greeks(grid: &Grid<f64>, state: &State<f64>) -> GreeksCurve {
    let u = state.values();
    let n = u.len();
    let ds = grid.ds();
    let ds2 = ds * ds;
    let mut delta = vec![0.0; n];
    let mut gamma = vec![0.0; n];
    for i in 1..n - 1 {
        delta[i] = (u[i + 1] - u[i - 1]) / (2.0 * ds);
        gamma[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / ds2;
    }
    delta[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * ds);
    delta[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * ds);
    if n >= 4 {
        gamma[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / ds2;
        gamma[n - 1] = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / ds2;
    } else {
        gamma[0] = gamma[1];
        gamma[n - 1] = gamma[1];
    }
    GreeksCurve {
        s: grid.centers().to_vec(),
        delta,
        gamma,
    }
}

/// Number of strict sign changes, ignoring entries with `|x| <= floor`.
pub fn sign_changes(values: &[f64], floor: f64) -> usize {
    let mut last: Option<bool> = None;
    let mut changes = 0;
    for &v in values {
        if v.abs() <= floor {
            continue;
        }
        let pos = v > 0.0;
        if let Some(prev) = last {
            if prev != pos {
                changes += 1;
            }
        }
        last = Some(pos);
    }
    changes
}

/// CSV header of convergence reports.
pub const REPORT_HEADER: [&str; 7] = [
    "scheme",
    "n_cells",
    "l1_error",
    "observed_order",
    "dt",
    "wall_time_s",
    "status",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Report(e.to_string())
}

/// Writes the report as CSV (LF line endings, shortest round-trip floats).
pub fn write_report_csv<W: Write>(report: &ConvergenceReport, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(REPORT_HEADER).map_err(csv_error)?;
    for r in &report.rows {
        w.write_record([
            r.scheme.to_string(),
            r.n_cells.to_string(),
            fmt_opt(r.l1_error),
            fmt_opt(r.observed_order),
            fmt_opt(r.dt),
            fmt_opt(r.wall_time_s),
            r.status.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Report(e.to_string()))
}

/// Parses a CSV written by [`write_report_csv`].
pub fn read_report_csv<R: Read>(input: R) -> Result<ConvergenceReport> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().ne(REPORT_HEADER.iter().copied()) {
        return Err(Error::Report(format!("unexpected header {header:?}")));
    }
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::Report(format!("bad number '{s}': {e}")))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        rows.push(ConvergenceRow {
            scheme: field(0).parse()?,
            n_cells: field(1)
                .parse()
                .map_err(|e| Error::Report(format!("bad n_cells: {e}")))?,
            l1_error: opt(field(2))?,
            observed_order: opt(field(3))?,
            dt: opt(field(4))?,
            wall_time_s: opt(field(5))?,
            status: field(6).parse()?,
            message: None,
        });
    }
    Ok(ConvergenceReport { rows })
}

/// Run description stored next to a CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model: ModelId,
    pub market: MarketData<f64>,
    pub domain: (f64, f64),
    pub far_field: Option<FarField>,
    pub cfl: f64,
    pub explicit_ceiling: usize,
    pub dt_rule: String,
    pub error_norm: String,
    pub speedups: Vec<(usize, f64)>,
    pub failures: Vec<(Scheme, usize, String)>,
    pub version: String,
}

impl ReportMetadata {
    pub fn new(
        model: ModelId,
        market: MarketData<f64>,
        domain: (f64, f64),
        far_field: Option<FarField>,
        opts: &RunOptions,
        report: &ConvergenceReport,
    ) -> Self {
        Self {
            model,
            market,
            domain,
            far_field,
            cfl: opts.cfl,
            explicit_ceiling: opts.explicit_ceiling,
            dt_rule: "imex: cfl*ds/alpha_max; explicit: cfl*min(ds/alpha_max, ds^2/(2*eta_max)); \
                      then dt = T/ceil(T/raw)"
                .into(),
            error_norm: "sum_i |u_i - u_exact(s_i)| * ds at t = T, cell centers".into(),
            speedups: report.speedups(),
            failures: report
                .failures()
                .map(|r| (r.scheme, r.n_cells, r.message.clone().unwrap_or_default()))
                .collect(),
            version: version_string(),
        }
    }
}

/// Crate version plus the source revision when it was provided at build time.
pub fn version_string() -> String {
    format!(
        "fvimex {} ({})",
        env!("CARGO_PKG_VERSION"),
        option_env!("FVIMEX_GIT_REV").unwrap_or("rev unknown")
    )
}

/// Path of the JSON sidecar written next to `csv_path`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the CSV to `path` and the metadata to [`sidecar_path`].
pub fn emit_report(report: &ConvergenceReport, meta: &ReportMetadata, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_report_csv(report, std::io::BufWriter::new(file))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Report(e.to_string()))?;
    std::fs::write(&side, json + "\n").map_err(|source| Error::Io { path: side, source })
}
