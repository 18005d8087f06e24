//! Run configuration: a flat `key = value` file merged under command-line
//! flags, then resolved against per-command defaults.

use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use crate::ansatz::TRAINING_GRID_POINTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Harmonic,
    Anharmonic,
    Spectrum,
    Oracle,
    ReproduceTables,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Harmonic => "harmonic",
            Command::Anharmonic => "anharmonic",
            Command::Spectrum => "spectrum",
            Command::Oracle => "oracle",
            Command::ReproduceTables => "reproduce-tables",
        }
    }

    fn default_levels(self) -> usize {
        match self {
            Command::Spectrum => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("expected `csv` or `json`, got `{s}`")),
        }
    }
}

/// A configuration problem, always attributed to one field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, field: &str, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn field(field: &str, message: impl Into<String>) -> Self {
        Self {
            line: None,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: `{}`: {}", self.field, self.message),
            None => write!(f, "invalid `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Optional settings from one source (a config file or the command line).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub lambda: Option<Vec<f64>>,
    pub levels: Option<usize>,
    pub seed: Option<u64>,
    pub grid_n: Option<usize>,
    pub grid_l: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub accept_tol: Option<f64>,
    pub learning_rate: Option<f64>,
    pub norm_weight: Option<f64>,
    pub ortho_weight: Option<f64>,
    pub pretrain_energy: Option<f64>,
    pub format: Option<OutputFormat>,
    pub output: Option<PathBuf>,
    pub table: Option<u8>,
    pub dump_dir: Option<PathBuf>,
    pub no_timestamp: Option<bool>,
}

/// Keys accepted in config files, with the type each expects.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("lambda", "comma-separated list of numbers"),
    ("levels", "positive integer"),
    ("seed", "non-negative integer"),
    ("grid_n", "integer"),
    ("grid_l", "number"),
    ("hidden", "comma-separated list of positive integers"),
    ("max_iters", "positive integer"),
    ("tol", "number"),
    ("accept_tol", "number"),
    ("learning_rate", "number"),
    ("norm_weight", "number"),
    ("ortho_weight", "number"),
    ("pretrain_energy", "number"),
    ("format", "`csv` or `json`"),
    ("output", "path"),
    ("table", "1, 2 or 3"),
    ("dump_dir", "path"),
    ("no_timestamp", "`true` or `false`"),
];

impl Settings {
    /// `self` wins wherever both are set.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            lambda: self.lambda.or(base.lambda),
            levels: self.levels.or(base.levels),
            seed: self.seed.or(base.seed),
            grid_n: self.grid_n.or(base.grid_n),
            grid_l: self.grid_l.or(base.grid_l),
            hidden: self.hidden.or(base.hidden),
            max_iters: self.max_iters.or(base.max_iters),
            tol: self.tol.or(base.tol),
            accept_tol: self.accept_tol.or(base.accept_tol),
            learning_rate: self.learning_rate.or(base.learning_rate),
            norm_weight: self.norm_weight.or(base.norm_weight),
            ortho_weight: self.ortho_weight.or(base.ortho_weight),
            pretrain_energy: self.pretrain_energy.or(base.pretrain_energy),
            format: self.format.or(base.format),
            output: self.output.or(base.output),
            table: self.table.or(base.table),
            dump_dir: self.dump_dir.or(base.dump_dir),
            no_timestamp: self.no_timestamp.or(base.no_timestamp),
        }
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let expected = CONFIG_KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, t)| *t)
            .ok_or_else(|| ConfigError::at(line, key, "unknown key"))?;
        let mismatch = || ConfigError::at(line, key, format!("expected {expected}, got `{value}`"));
        let num = || value.parse::<f64>().map_err(|_| mismatch());
        let int = || value.parse::<usize>().map_err(|_| mismatch());
        let list = || -> Result<Vec<&str>, ConfigError> {
            let items: Vec<&str> = value.split(',').map(str::trim).collect();
            if items.iter().any(|s| s.is_empty()) {
                return Err(mismatch());
            }
            Ok(items)
        };
        match key {
            "lambda" => {
                let xs = list()?
                    .into_iter()
                    .map(|s| s.parse::<f64>().map_err(|_| mismatch()))
                    .collect::<Result<_, _>>()?;
                self.lambda = Some(xs);
            }
            "hidden" => {
                let xs = list()?
                    .into_iter()
                    .map(|s| s.parse::<usize>().map_err(|_| mismatch()))
                    .collect::<Result<_, _>>()?;
                self.hidden = Some(xs);
            }
            "levels" => self.levels = Some(int()?),
            "seed" => self.seed = Some(value.parse().map_err(|_| mismatch())?),
            "grid_n" => self.grid_n = Some(int()?),
            "grid_l" => self.grid_l = Some(num()?),
            "max_iters" => self.max_iters = Some(int()?),
            "tol" => self.tol = Some(num()?),
            "accept_tol" => self.accept_tol = Some(num()?),
            "learning_rate" => self.learning_rate = Some(num()?),
            "norm_weight" => self.norm_weight = Some(num()?),
            "ortho_weight" => self.ortho_weight = Some(num()?),
            "pretrain_energy" => self.pretrain_energy = Some(num()?),
            "format" => self.format = Some(value.parse().map_err(|_| mismatch())?),
            "output" => self.output = Some(PathBuf::from(value)),
            "table" => self.table = Some(value.parse().map_err(|_| mismatch())?),
            "dump_dir" => self.dump_dir = Some(PathBuf::from(value)),
            "no_timestamp" => self.no_timestamp = Some(value.parse().map_err(|_| mismatch())?),
            _ => unreachable!("key list and match arms agree"),
        }
        Ok(())
    }
}

/// Parses `key = value` lines. `#` starts a comment; values may be wrapped
/// in double quotes.
pub fn parse_config(text: &str) -> Result<Settings, ConfigError> {
    let mut settings = Settings::default();
    let mut seen: Vec<(String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::at(line, content, "expected `key = value`"));
        };
        let key = key.trim();
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if let Some((_, first)) = seen.iter().find(|(k, _)| k == key) {
            return Err(ConfigError::at(line, key, format!("duplicate key (first set on line {first})")));
        }
        settings.set(key, value, line)?;
        seen.push((key.to_string(), line));
    }
    Ok(settings)
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub lambda_values: Vec<f64>,
    pub n_levels: usize,
    pub seed: u64,
    /// Grid overrides; `None` keeps the per-potential defaults.
    pub grid_n: Option<usize>,
    pub grid_l: Option<f64>,
    pub hidden_sizes: Vec<usize>,
    pub max_iters: usize,
    pub tol: f64,
    pub accept_tol: f64,
    pub learning_rate: f64,
    pub norm_weight: f64,
    pub ortho_weight: f64,
    pub pretrain_energy: Option<f64>,
    pub table: Option<u8>,
    pub output_format: OutputFormat,
    // Paths are left out of the echo so that runs writing to different
    // files still produce identical output.
    #[serde(skip)]
    pub output_path: Option<PathBuf>,
    #[serde(skip)]
    pub dump_dir: Option<PathBuf>,
    #[serde(skip)]
    pub no_timestamp: bool,
}

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_HIDDEN: usize = 10;
pub const DEFAULT_MAX_ITERS: usize = 20_000;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_ACCEPT_TOL: f64 = 2e-2;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-2;
pub const DEFAULT_NORM_WEIGHT: f64 = 10.0;
pub const DEFAULT_ORTHO_WEIGHT: f64 = 10.0;

impl RunConfig {
    pub fn resolve(command: Command, s: Settings) -> Result<Self, ConfigError> {
        let cfg = RunConfig {
            command,
            lambda_values: match command {
                Command::Harmonic | Command::ReproduceTables => Vec::new(),
                _ => s.lambda.unwrap_or_else(|| vec![DEFAULT_LAMBDA]),
            },
            n_levels: s.levels.unwrap_or(command.default_levels()),
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            grid_n: s.grid_n,
            grid_l: s.grid_l,
            hidden_sizes: s.hidden.unwrap_or_else(|| vec![DEFAULT_HIDDEN]),
            max_iters: s.max_iters.unwrap_or(DEFAULT_MAX_ITERS),
            tol: s.tol.unwrap_or(DEFAULT_TOL),
            accept_tol: s.accept_tol.unwrap_or(DEFAULT_ACCEPT_TOL),
            learning_rate: s.learning_rate.unwrap_or(DEFAULT_LEARNING_RATE),
            norm_weight: s.norm_weight.unwrap_or(DEFAULT_NORM_WEIGHT),
            ortho_weight: s.ortho_weight.unwrap_or(DEFAULT_ORTHO_WEIGHT),
            pretrain_energy: s.pretrain_energy,
            table: s.table,
            output_format: s.format.unwrap_or(OutputFormat::Csv),
            output_path: s.output,
            dump_dir: s.dump_dir,
            no_timestamp: s.no_timestamp.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.lambda_values.is_empty() && !matches!(self.command, Command::Harmonic | Command::ReproduceTables) {
            return Err(ConfigError::field("lambda", "need at least one value"));
        }
        if let Some(l) = self.lambda_values.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(ConfigError::field("lambda", format!("must be finite and >= 0, got {l}")));
        }
        if self.n_levels == 0 {
            return Err(ConfigError::field("levels", "must be >= 1"));
        }
        if self.command == Command::Anharmonic && self.n_levels != 1 {
            return Err(ConfigError::field("levels", "anharmonic solves the ground state only; use `spectrum` for more levels"));
        }
        if let Some(n) = self.grid_n {
            let min = match self.command {
                Command::Oracle => 10 * self.n_levels,
                _ => 3,
            };
            if n < min {
                return Err(ConfigError::field("grid_n", format!("must be >= {min}, got {n}")));
            }
        }
        if let Some(l) = self.grid_l {
            if !(l.is_finite() && l > 0.0) {
                return Err(ConfigError::field("grid_l", format!("must be finite and > 0, got {l}")));
            }
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(ConfigError::field("hidden", format!("layer widths must be positive, got {:?}", self.hidden_sizes)));
        }
        if self.max_iters == 0 {
            return Err(ConfigError::field("max_iters", "must be >= 1"));
        }
        let positive = [
            ("tol", self.tol),
            ("accept_tol", self.accept_tol),
            ("learning_rate", self.learning_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::field(name, format!("must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("norm_weight", self.norm_weight), ("ortho_weight", self.ortho_weight)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::field(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if let Some(e) = self.pretrain_energy {
            if !e.is_finite() {
                return Err(ConfigError::field("pretrain_energy", format!("must be finite, got {e}")));
            }
        }
        match (self.command, self.table) {
            (Command::ReproduceTables, None) => return Err(ConfigError::field("table", "required (1, 2 or 3)")),
            (Command::ReproduceTables, Some(t)) if !(1..=3).contains(&t) => {
                return Err(ConfigError::field("table", format!("must be 1, 2 or 3, got {t}")));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn training_grid_points(&self) -> usize {
        self.grid_n.unwrap_or(TRAINING_GRID_POINTS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let s = parse_config("").unwrap();
        assert_eq!(s, Settings::default());
        let cfg = RunConfig::resolve(Command::Anharmonic, s).unwrap();
        assert_eq!(cfg.lambda_values, vec![DEFAULT_LAMBDA]);
        assert_eq!(cfg.n_levels, 1);
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.output_format, OutputFormat::Csv);
    }

    #[test]
    fn flags_override_file() {
        let file = parse_config("lambda = 0.1\nseed = 3\n").unwrap();
        let flags = Settings {
            lambda: Some(vec![1.0]),
            ..Settings::default()
        };
        let cfg = RunConfig::resolve(Command::Anharmonic, flags.over(file)).unwrap();
        assert_eq!(cfg.lambda_values, vec![1.0]);
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn type_mismatch_names_line_and_key() {
        let e = parse_config("lambda = banana").unwrap_err();
        assert_eq!(e.line, Some(1));
        assert_eq!(e.field, "lambda");
        let msg = e.to_string();
        assert!(msg.contains("line 1") && msg.contains("lambda"), "{msg}");
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let e = parse_config("# header\n\nlambda = 1\nlamda = 2\n").unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(4), "lamda"));
        let e = parse_config("seed = 1\nseed = 2").unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(2), "seed"));
        assert!(e.message.contains("line 1"));
        let e = parse_config("levels").unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn lists_comments_and_quotes() {
        let s = parse_config("lambda = 0.1, 1, 2e6  # sweep\nhidden=8,8\noutput = \"out dir/r.csv\"\nformat = json\n").unwrap();
        assert_eq!(s.lambda, Some(vec![0.1, 1.0, 2e6]));
        assert_eq!(s.hidden, Some(vec![8, 8]));
        assert_eq!(s.output, Some(PathBuf::from("out dir/r.csv")));
        assert_eq!(s.format, Some(OutputFormat::Json));
        assert!(parse_config("lambda = 0.1,,2").is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let bad = |s: &str, cmd| RunConfig::resolve(cmd, parse_config(s).unwrap()).unwrap_err().field;
        assert_eq!(bad("lambda = -1", Command::Anharmonic), "lambda");
        assert_eq!(bad("levels = 0", Command::Spectrum), "levels");
        assert_eq!(bad("levels = 3", Command::Anharmonic), "levels");
        assert_eq!(bad("tol = 0", Command::Harmonic), "tol");
        assert_eq!(bad("", Command::ReproduceTables), "table");
        assert_eq!(bad("table = 4", Command::ReproduceTables), "table");
        assert_eq!(bad("grid_n = 20\nlevels = 3", Command::Oracle), "grid_n");
        assert_eq!(bad("hidden = 0", Command::Harmonic), "hidden");
    }
}
