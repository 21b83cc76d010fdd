//! Command-line front end: run-configuration parsing and the `price`,
//! `converge` and `greeks` commands.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{
    build_model, compare_schemes, emit_report, exact_prices, extract_greeks, run_convergence,
    solve, write_report_csv, ConvergenceReport, ModelId, ReportMetadata, RunOptions,
};
use crate::models::{FarField, MarketData};
use crate::timestepping::Scheme;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Resolutions used when a config gives none.
pub const DEFAULT_RESOLUTIONS: [usize; 6] = [50, 100, 200, 400, 800, 1600];
/// Ladder of the `--full-table` converge run.
pub const FULL_TABLE_RESOLUTIONS: [usize; 8] = [50, 100, 200, 400, 800, 1600, 3200, 6400];
pub const DEFAULT_CFL: f64 = 0.5;
pub const DEFAULT_N_CELLS: usize = 800;
pub const DEFAULT_EXPLICIT_CEILING: usize = 3200;

/// Which integrators a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    Imex,
    Explicit,
    #[default]
    Both,
}

impl SchemeChoice {
    /// The integrator of single-solution commands; `both` means IMEX there.
    pub fn primary(self) -> Scheme {
        match self {
            SchemeChoice::Explicit => Scheme::Explicit,
            _ => Scheme::Imex,
        }
    }
}

impl fmt::Display for SchemeChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeChoice::Imex => "imex",
            SchemeChoice::Explicit => "explicit",
            SchemeChoice::Both => "both",
        })
    }
}

/// On-disk JSON schema. Every key is optional except `model`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<ModelId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scheme: Option<SchemeChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resolutions: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cfl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explicit_ceiling: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    far_field: Option<FarField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    maturity: Option<f64>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    strike: Option<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    barrier: Option<f64>,
    #[serde(rename = "R_B", default, skip_serializing_if = "Option::is_none")]
    recovery_b: Option<f64>,
    #[serde(rename = "R_C", default, skip_serializing_if = "Option::is_none")]
    recovery_c: Option<f64>,
    #[serde(rename = "lambda_B", default, skip_serializing_if = "Option::is_none")]
    lambda_b: Option<f64>,
    #[serde(rename = "lambda_C", default, skip_serializing_if = "Option::is_none")]
    lambda_c: Option<f64>,
    #[serde(rename = "s_F", default, skip_serializing_if = "Option::is_none")]
    funding_spread: Option<f64>,
}

/// Validated run configuration with all defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelId,
    pub market: MarketData<f64>,
    pub scheme: SchemeChoice,
    pub resolutions: Vec<usize>,
    /// Resolution of `price` and `greeks`.
    pub n_cells: usize,
    pub cfl: f64,
    pub output: Option<PathBuf>,
    pub explicit_ceiling: usize,
    pub far_field: FarField,
}

impl RunConfig {
    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            cfl: self.cfl,
            explicit_ceiling: self.explicit_ceiling,
            parallel: false,
        }
    }

    /// Serializes to the config schema with every key explicit.
    pub fn to_json(&self) -> String {
        let m = &self.market;
        let raw = RawConfig {
            model: Some(self.model),
            scheme: Some(self.scheme),
            resolutions: Some(self.resolutions.clone()),
            n_cells: Some(self.n_cells),
            cfl: Some(self.cfl),
            output: self.output.clone(),
            explicit_ceiling: Some(self.explicit_ceiling),
            far_field: (self.model == ModelId::XvaCall).then_some(self.far_field),
            sigma: Some(m.sigma),
            r: Some(m.r),
            q: Some(m.q),
            maturity: Some(m.maturity),
            strike: Some(m.strike),
            barrier: m.barrier,
            recovery_b: Some(m.recovery_b),
            recovery_c: Some(m.recovery_c),
            lambda_b: Some(m.lambda_b),
            lambda_c: Some(m.lambda_c),
            funding_spread: Some(m.funding_spread),
        };
        serde_json::to_string_pretty(&raw).expect("config serializes")
    }
}

fn invalid(field: &str, why: &str) -> Error {
    Error::Config(format!("{field}: {why}"))
}

/// Parses and validates a JSON run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            Error::Config(inner.to_string())
        } else {
            Error::Config(format!("{path}: {inner}"))
        }
    })?;

    let cfl = raw.cfl.unwrap_or(DEFAULT_CFL);
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(invalid("cfl", "must lie in (0, 1]"));
    }
    let resolutions = raw
        .resolutions
        .unwrap_or_else(|| DEFAULT_RESOLUTIONS.to_vec());
    if resolutions.is_empty() {
        return Err(invalid("resolutions", "must not be empty"));
    }
    if resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("resolutions", "must be strictly increasing"));
    }
    if resolutions[0] < crate::mesh::MIN_CELLS {
        return Err(invalid("resolutions", "every entry needs at least 3 cells"));
    }
    let n_cells = raw.n_cells.unwrap_or(DEFAULT_N_CELLS);
    if n_cells < crate::mesh::MIN_CELLS {
        return Err(invalid("n_cells", "needs at least 3 cells"));
    }
    let model = raw.model.ok_or_else(|| invalid("model", "missing field"))?;

    let mut market = model.default_market();
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut market.sigma, raw.sigma);
    set(&mut market.r, raw.r);
    set(&mut market.q, raw.q);
    set(&mut market.maturity, raw.maturity);
    set(&mut market.strike, raw.strike);
    set(&mut market.recovery_b, raw.recovery_b);
    set(&mut market.recovery_c, raw.recovery_c);
    set(&mut market.lambda_b, raw.lambda_b);
    set(&mut market.lambda_c, raw.lambda_c);
    market.funding_spread = raw
        .funding_spread
        .unwrap_or_else(|| market.own_default_spread());
    match (model, raw.barrier) {
        (ModelId::BarrierCall, Some(b)) => market.barrier = Some(b),
        (ModelId::XvaCall, Some(_)) => return Err(invalid("B", "only valid for barrier_call")),
        _ => {}
    }
    if model == ModelId::BarrierCall && raw.far_field.is_some() {
        return Err(invalid("far_field", "only valid for xva_call"));
    }
    market.validate()?;
    if let Some(b) = market.barrier {
        if b <= 0.0 {
            return Err(invalid("B", "must be positive"));
        }
    }

    Ok(RunConfig {
        model,
        market,
        scheme: raw.scheme.unwrap_or_default(),
        resolutions,
        n_cells,
        cfl,
        output: raw.output,
        explicit_ceiling: raw.explicit_ceiling.unwrap_or(DEFAULT_EXPLICIT_CEILING),
        far_field: raw.far_field.unwrap_or_default(),
    })
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[derive(Debug, Parser)]
#[command(name = "fvimex", version, about = "Finite-volume IMEX option-pricing solver")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output file; overrides `output` in the config. Defaults to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve at `n_cells` and print s, numeric, exact, abs_error.
    Price(Common),
    /// Run the convergence ladder and print the report CSV.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Use N = 50..6400 and lift the explicit ceiling (explicit rows take minutes).
        #[arg(long)]
        full_table: bool,
    },
    /// Solve at `n_cells` and print finite-difference Greeks next to the analytic ones.
    Greeks(Common),
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Blowup { .. } | Error::SingularSystem(_) => EXIT_BLOWUP,
        Error::Io { .. } | Error::Report(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// Runs the command line `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Price(c) => {
            let cfg = load_config(&c.config)?;
            let out = c.out.or_else(|| cfg.output.clone());
            with_output(out.as_deref(), stdout, |w| price(&cfg, w))?;
            Ok(EXIT_OK)
        }
        Command::Greeks(c) => {
            let cfg = load_config(&c.config)?;
            let out = c.out.or_else(|| cfg.output.clone());
            with_output(out.as_deref(), stdout, |w| greeks(&cfg, w))?;
            Ok(EXIT_OK)
        }
        Command::Converge { common, full_table } => {
            let mut cfg = load_config(&common.config)?;
            if full_table {
                cfg.resolutions = FULL_TABLE_RESOLUTIONS.to_vec();
                cfg.explicit_ceiling = cfg.explicit_ceiling.max(6400);
            }
            let out = common.out.or_else(|| cfg.output.clone());
            let report = converge(&cfg)?;
            match out {
                Some(path) => {
                    let model = build_model(cfg.model, cfg.market, cfg.far_field)?;
                    let far = (cfg.model == ModelId::XvaCall).then_some(cfg.far_field);
                    let meta = ReportMetadata::new(
                        cfg.model,
                        cfg.market,
                        model.domain(),
                        far,
                        &cfg.run_options(),
                        &report,
                    );
                    emit_report(&report, &meta, &path)?;
                }
                None => write_report_csv(&report, &mut *stdout)?,
            }
            let mut code = EXIT_OK;
            for row in report.failures() {
                let msg = row.message.as_deref().unwrap_or("failed");
                let _ = writeln!(stderr, "error: {} run at N={}: {msg}", row.scheme, row.n_cells);
                code = EXIT_BLOWUP;
            }
            Ok(code)
        }
    }
}

fn with_output(
    path: Option<&Path>,
    stdout: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match path {
        None => body(stdout),
        Some(p) => {
            let io = |source| Error::Io {
                path: p.to_path_buf(),
                source,
            };
            let mut file = std::io::BufWriter::new(std::fs::File::create(p).map_err(io)?);
            body(&mut file)?;
            file.flush().map_err(io)
        }
    }
}

fn stdout_error(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

/// Runs the ladder selected by `cfg.scheme`.
pub fn converge(cfg: &RunConfig) -> Result<ConvergenceReport> {
    let model = build_model(cfg.model, cfg.market, cfg.far_field)?;
    let opts = cfg.run_options();
    match cfg.scheme {
        SchemeChoice::Both => compare_schemes(model.as_ref(), &cfg.resolutions, &opts),
        single => run_convergence(model.as_ref(), single.primary(), &cfg.resolutions, &opts),
    }
}

/// Writes `s,numeric,exact,abs_error` for the solution at maturity.
pub fn price(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = build_model(cfg.model, cfg.market, cfg.far_field)?;
    let sol = solve(model.as_ref(), cfg.n_cells, cfg.scheme.primary(), cfg.cfl)?;
    let exact = exact_prices(model.as_ref(), &sol.grid)?;
    writeln!(out, "s,numeric,exact,abs_error").map_err(stdout_error)?;
    for ((s, u), e) in sol.grid.centers().iter().zip(sol.state.values()).zip(&exact) {
        writeln!(out, "{s:e},{u:e},{e:e},{:e}", (u - e).abs()).map_err(stdout_error)?;
    }
    Ok(())
}

/// Writes `s,delta,gamma,delta_exact,gamma_exact` for the solution at maturity.
pub fn greeks(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = build_model(cfg.model, cfg.market, cfg.far_field)?;
    let sol = solve(model.as_ref(), cfg.n_cells, cfg.scheme.primary(), cfg.cfl)?;
    let curve = extract_greeks(&sol.grid, &sol.state);
    let t = model.maturity();
    writeln!(out, "s,delta,gamma,delta_exact,gamma_exact").map_err(stdout_error)?;
    for i in 0..curve.s.len() {
        let s = curve.s[i];
        let g = model.exact(s, t)?;
        writeln!(
            out,
            "{s:e},{:e},{:e},{:e},{:e}",
            curve.delta[i], curve.gamma[i], g.delta, g.gamma
        )
        .map_err(stdout_error)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barrier_defaults() {
        let c = parse_config(r#"{"model":"barrier_call"}"#).unwrap();
        assert_eq!(c.market, MarketData::barrier_defaults());
        assert_eq!(c.cfl, 0.5);
        assert_eq!(c.scheme, SchemeChoice::Both);
        assert_eq!(c.resolutions, DEFAULT_RESOLUTIONS.to_vec());
        assert_eq!(c.explicit_ceiling, 3200);
    }

    #[test]
    fn xva_defaults_and_zero_own_default() {
        let c = parse_config(r#"{"model":"xva_call"}"#).unwrap();
        assert_eq!(c.market, MarketData::xva_defaults());
        assert!((c.market.positive_exposure_rate() - 0.054).abs() < 1e-15);
        let c = parse_config(r#"{"model":"xva_call","lambda_B":0.0}"#).unwrap();
        assert_eq!(c.market.funding_spread, 0.0);
        assert!((c.market.positive_exposure_rate() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn cfl_bound_is_checked() {
        let e = parse_config(r#"{"cfl":1.5}"#).unwrap_err();
        assert!(e.to_string().contains("cfl"), "{e}");
        assert!(parse_config(r#"{"model":"barrier_call","cfl":0.0}"#).is_err());
        assert!(parse_config(r#"{"model":"barrier_call","cfl":1.0}"#).is_ok());
    }

    #[test]
    fn errors_name_the_field() {
        let e = parse_config(r#"{"model":"barrier_call","sigma":"x"}"#).unwrap_err();
        assert!(e.to_string().contains("sigma"), "{e}");
        let e = parse_config(r#"{"model":"barrier_call","sigmaa":0.2}"#).unwrap_err();
        assert!(e.to_string().contains("sigmaa"), "{e}");
        let e = parse_config(r#"{"model":"barrier_call","resolutions":[100,50]}"#).unwrap_err();
        assert!(e.to_string().contains("resolutions"), "{e}");
        let e = parse_config(r#"{"model":"barrier_call","resolutions":[]}"#).unwrap_err();
        assert!(e.to_string().contains("resolutions"), "{e}");
        let e = parse_config(r#"{"scheme":"both"}"#).unwrap_err();
        assert!(e.to_string().contains("model"), "{e}");
        let e = parse_config(r#"{"model":"xva_call","B":10}"#).unwrap_err();
        assert!(e.to_string().contains('B'), "{e}");
    }

    #[test]
    fn round_trip() {
        for text in [
            r#"{"model":"barrier_call","scheme":"imex","resolutions":[50,100],"output":"t1.csv"}"#,
            r#"{"model":"xva_call","lambda_B":0.08,"far_field":"intrinsic","cfl":0.25}"#,
        ] {
            let c = parse_config(text).unwrap();
            assert_eq!(parse_config(&c.to_json()).unwrap(), c);
        }
    }
}
