use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Toy,
    Full,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Toy => "toy",
            Model::Full => "full",
        }
    }
}

/// Flags shared by every subcommand. Anything left unset falls back to the
/// config file, then to the built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Key-value config file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// toy | full
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Chain length, or a comma-separated list of lengths.
    #[arg(long = "L", global = true)]
    pub len: Option<String>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of realizations per length.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Comma-separated values of u = X L, ascending.
    #[arg(long = "u-grid", global = true)]
    pub u_grid: Option<String>,
    /// Comma-separated values of s for the tabulated size densities.
    #[arg(long = "s-grid", global = true)]
    pub s_grid: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Threshold engine name (defaults to the model name).
    #[arg(long, global = true)]
    pub engine: Option<String>,
    /// Threshold-to-threshold engine name.
    #[arg(long = "t2t-engine", global = true)]
    pub t2t_engine: Option<String>,
    #[arg(long = "oracle-check", global = true)]
    pub oracle_check: bool,
    #[arg(long = "correspondence-check", global = true)]
    pub correspondence_check: bool,
    #[arg(long = "truncated-kernel", global = true)]
    pub truncated_kernel: bool,
    /// Replace the toy update by a corrupted one (self-test of `test`).
    #[arg(long, global = true, hide = true)]
    pub mutant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Model,
    pub lens: Vec<usize>,
    pub lambda: f64,
    pub seed: u64,
    pub n: usize,
    pub u_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub out: PathBuf,
    pub workers: usize,
    pub engine: String,
    pub t2t_engine: String,
    pub oracle_check: bool,
    pub correspondence_check: bool,
    pub truncated_kernel: bool,
    pub mutant: bool,
}

const KEYS: [&str; 14] = [
    "model",
    "L",
    "lambda",
    "seed",
    "n",
    "u-grid",
    "s-grid",
    "out",
    "workers",
    "engine",
    "t2t-engine",
    "oracle-check",
    "correspondence-check",
    "truncated-kernel",
];

pub const DEFAULT_U_GRID: &str = "0,0.5,1,2,5,10,30,100";
pub const DEFAULT_S_GRID: &str = "0.005,0.01,0.02,0.04,0.06,0.08,0.1,0.12,0.14,0.16,0.18,0.2,0.22,0.24";

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; unknown keys are rejected.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| config_err(format!("line {}: expected key = value", no + 1)))?;
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(config_err(format!("line {}: unknown key '{key}'", no + 1)));
        }
        if map.insert(key.to_string(), v.trim().to_string()).is_some() {
            return Err(config_err(format!("line {}: duplicate key '{key}'", no + 1)));
        }
    }
    Ok(map)
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| config_err(format!("{key}: cannot parse '{}'", p.trim()))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, s: &str) -> Result<T, CliError> {
    s.trim().parse::<T>().map_err(|_| config_err(format!("{key}: cannot parse '{s}'")))
}

fn parse_bool(key: &str, s: &str) -> Result<bool, CliError> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(config_err(format!("{key}: expected true or false, got '{other}'"))),
    }
}

fn ascending_nonnegative(key: &str, grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(config_err(format!("{key} is empty")));
    }
    if grid.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
        return Err(config_err(format!("{key} must be finite and nonnegative")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_err(format!("{key} must be strictly ascending")));
    }
    Ok(())
}

impl RunConfig {
    pub fn resolve(args: &RunArgs, default_n: usize, default_len: usize) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        let pick = |flag: Option<String>, key: &str| flag.or_else(|| file.get(key).cloned());
        let flag_or_file = |flag: bool, key: &str| -> Result<bool, CliError> {
            if flag {
                return Ok(true);
            }
            file.get(key).map_or(Ok(false), |v| parse_bool(key, v))
        };

        let model = match pick(args.model.clone(), "model").as_deref().unwrap_or("toy") {
            "toy" => Model::Toy,
            "full" => Model::Full,
            other => return Err(config_err(format!("model must be toy or full, got '{other}'"))),
        };
        let lens: Vec<usize> = parse_list("L", &pick(args.len.clone(), "L").unwrap_or_else(|| default_len.to_string()))?;
        if let Some(bad) = lens.iter().find(|&&l| l < 3) {
            return Err(config_err(format!("L must be at least 3, got {bad}")));
        }
        let lambda = match args.lambda {
            Some(v) => v,
            None => file.get("lambda").map_or(Ok(10.0), |v| parse_one("lambda", v))?,
        };
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(config_err(format!("lambda must be positive, got {lambda}")));
        }
        let seed = match args.seed {
            Some(v) => v,
            None => file.get("seed").map_or(Ok(1), |v| parse_one("seed", v))?,
        };
        let n = match args.n {
            Some(v) => v,
            None => file.get("n").map_or(Ok(default_n), |v| parse_one("n", v))?,
        };
        if n == 0 {
            return Err(config_err("n must be positive"));
        }
        let u_grid: Vec<f64> =
            parse_list("u-grid", &pick(args.u_grid.clone(), "u-grid").unwrap_or_else(|| DEFAULT_U_GRID.into()))?;
        ascending_nonnegative("u-grid", &u_grid)?;
        let s_grid: Vec<f64> =
            parse_list("s-grid", &pick(args.s_grid.clone(), "s-grid").unwrap_or_else(|| DEFAULT_S_GRID.into()))?;
        ascending_nonnegative("s-grid", &s_grid)?;
        let out = args.out.clone().or_else(|| file.get("out").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
        let workers = match args.workers {
            Some(v) => v,
            None => file.get("workers").map_or(Ok(0), |v| parse_one("workers", v))?,
        };
        let engine = pick(args.engine.clone(), "engine").unwrap_or_else(|| model.name().to_string());
        let t2t_engine = pick(args.t2t_engine.clone(), "t2t-engine").unwrap_or_else(|| "records".into());

        Ok(Self {
            model,
            lens,
            lambda,
            seed,
            n,
            u_grid,
            s_grid,
            out,
            workers,
            engine,
            t2t_engine,
            oracle_check: flag_or_file(args.oracle_check, "oracle-check")?,
            correspondence_check: flag_or_file(args.correspondence_check, "correspondence-check")?,
            truncated_kernel: flag_or_file(args.truncated_kernel, "truncated-kernel")?,
            mutant: args.mutant,
        })
    }

    /// Every setting that can change the results, in a fixed order. The
    /// worker count and output path are left out so that outputs do not
    /// depend on them.
    pub fn provenance(&self, command: &str) -> Vec<(String, String)> {
        let join_f = |g: &[f64]| g.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(",");
        let mut v = vec![
            ("program".to_string(), format!("depin {}", env!("CARGO_PKG_VERSION"))),
            ("command".to_string(), command.to_string()),
            ("model".to_string(), self.model.name().to_string()),
            ("L".to_string(), self.lens.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")),
            ("lambda".to_string(), self.lambda.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("n".to_string(), self.n.to_string()),
            ("u-grid".to_string(), join_f(&self.u_grid)),
            ("s-grid".to_string(), join_f(&self.s_grid)),
            ("engine".to_string(), self.engine.clone()),
            ("t2t-engine".to_string(), self.t2t_engine.clone()),
            ("oracle-check".to_string(), self.oracle_check.to_string()),
            ("correspondence-check".to_string(), self.correspondence_check.to_string()),
            ("truncated-kernel".to_string(), self.truncated_kernel.to_string()),
            ("rng".to_string(), "chacha8 seeded by seed, stream = realization index".to_string()),
        ];
        if self.mutant {
            v.push(("mutant".to_string(), "true".to_string()));
        }
        v
    }
}
