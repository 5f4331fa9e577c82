//! Pipeline configuration: one TOML file, validated as a whole at load time.
//!
//! ```toml
//! [language]
//! extensions = ["java"]
//! exclude_dirs = ["test"]
//!
//! [[logging_apis]]
//! pattern = "*.Logger.info"
//! level = "INFO"
//!
//! [pipeline]
//! source_root = "src"
//! seed = 42
//! mock = true
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use crate::error::{Error, Result};
use crate::frontend::Level;
use num_rational::Ratio;
use regex::Regex;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub language: LanguageConfig,
    #[serde(default)]
    pub logging_apis: Vec<LogApiPattern>,
    #[serde(default)]
    pub labels: LabelsConfig,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub bounds: AssemblyBounds,
    #[serde(default)]
    pub reasoner: ReasonerConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub coverage: CoverageConfig,

    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// sha256 of the config file bytes.
    #[serde(skip)]
    pub hash: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LanguageConfig {
    pub extensions: Vec<String>,
    pub exclude_dirs: Vec<String>,
}

impl Default for LanguageConfig {
    fn default() -> Self {
        LanguageConfig { extensions: vec!["java".into()], exclude_dirs: vec![] }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct LogApiPattern {
    /// Glob over the dotted call target; `*` spans any characters.
    pub pattern: String,
    pub level: Level,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelsConfig {
    pub severity_triggers: Vec<Level>,
    pub exception_names: Vec<String>,
    pub keywords: Vec<String>,
    pub status_patterns: Vec<String>,
    /// Sessions listed in the review bundle.
    pub review_sample: usize,
}

impl Default for LabelsConfig {
    fn default() -> Self {
        LabelsConfig {
            severity_triggers: vec![Level::Error, Level::Fatal],
            exception_names: [
                "IOError",
                "NullPointerException",
                "IOException",
                "TimeoutException",
                "SocketTimeoutException",
                "IllegalStateException",
                "IllegalArgumentException",
                "InterruptedException",
                "OutOfMemoryError",
                "StackOverflowError",
                "FileNotFoundException",
                "ConnectException",
                "EOFException",
            ]
            .map(String::from)
            .to_vec(),
            keywords: ["timeout", "refused", "invalid state"].map(String::from).to_vec(),
            status_patterns: vec![r"(?i)\b(?:status|code|http)\b[^0-9A-Za-z]{0,3}[45]\d\d\b".into()],
            review_sample: 5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub source_root: PathBuf,
    pub out: PathBuf,
    pub t_entry: usize,
    pub t_depth: usize,
    pub seed: Option<u64>,
    pub mock: bool,
    /// Worker threads; 0 means one per core.
    pub threads: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            source_root: PathBuf::from("src"),
            out: PathBuf::from("out"),
            t_entry: 16,
            t_depth: 3,
            seed: Some(42),
            mock: true,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssemblyBounds {
    pub max_local_paths_per_method: usize,
    pub max_sequences_per_entry: usize,
    pub max_recursion_depth: usize,
    pub loop_unroll: BTreeSet<u8>,
}

impl Default for AssemblyBounds {
    fn default() -> Self {
        AssemblyBounds {
            max_local_paths_per_method: 64,
            max_sequences_per_entry: 256,
            max_recursion_depth: 1,
            loop_unroll: BTreeSet::from([0, 1]),
        }
    }
}

impl AssemblyBounds {
    pub fn validate(&self) -> Result<()> {
        if self.max_local_paths_per_method == 0 {
            return Err(Error::Config("bounds.max_local_paths_per_method must be positive".into()));
        }
        if self.max_sequences_per_entry == 0 {
            return Err(Error::Config("bounds.max_sequences_per_entry must be positive".into()));
        }
        if self.max_recursion_depth == 0 {
            return Err(Error::Config("bounds.max_recursion_depth must be positive".into()));
        }
        if self.loop_unroll.is_empty() || self.loop_unroll.iter().any(|&k| k > 2) {
            return Err(Error::Config("bounds.loop_unroll must be a nonempty subset of {0, 1, 2}".into()));
        }
        Ok(())
    }

    pub fn max_unroll(&self) -> u8 {
        self.loop_unroll.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReasonerConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub request_timeout_secs: u64,
    pub max_inflight: usize,
    /// Base delay of the exponential backoff.
    pub backoff_ms: u64,
    /// Live exchanges are appended here; replay mode reads it back.
    pub transcript: Option<PathBuf>,
    pub replay: bool,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            endpoint_url: String::new(),
            model_name: String::new(),
            api_key_env: "LOGSYNTH_API_KEY".into(),
            max_retries: 2,
            request_timeout_secs: 120,
            max_inflight: 4,
            backoff_ms: 500,
            transcript: None,
            replay: false,
        }
    }
}

impl ReasonerConfig {
    /// Sampling temperature sent with every request. Not configurable.
    pub const TEMPERATURE: u32 = 0;
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Synthetic-to-real ratio, as a decimal (`0.01`) or fraction (`1/100`).
    pub ratio: RatioValue,
    pub real_train: Option<PathBuf>,
    pub real_test: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { ratio: RatioValue(Ratio::from_integer(0)), real_train: None, real_test: None }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageConfig {
    /// Observed templates, one pattern per line.
    pub observed: Option<PathBuf>,
    pub system_name: Option<String>,
}

/// Exact nonnegative rational read from a TOML string, integer or float.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatioValue(pub Ratio<u64>);

impl<'de> Deserialize<'de> for RatioValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Float(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(n) => return Ok(RatioValue(Ratio::from_integer(n))),
            // Display prints the shortest decimal that round-trips.
            Raw::Float(f) => f.to_string(),
            Raw::Text(s) => s,
        };
        parse_ratio(&text).map(RatioValue).map_err(serde::de::Error::custom)
    }
}

/// Parses `0.01`, `1/100`, `3`, or `1e-3` into an exact ratio.
pub fn parse_ratio(s: &str) -> std::result::Result<Ratio<u64>, String> {
    let s = s.trim();
    let bad = || format!("invalid ratio `{s}`");
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: u64 = digits.trim_start_matches('0').parse().or_else(|_| {
        if digits.chars().all(|c| c == '0') { Ok(0) } else { Err(bad()) }
    })?;
    let scale = exp - frac_part.len() as i32;
    let pow = |k: i32| 10u64.checked_pow(k.unsigned_abs()).ok_or_else(bad);
    let r = if scale >= 0 {
        Ratio::from_integer(numer.checked_mul(pow(scale)?).ok_or_else(bad)?)
    } else {
        Ratio::new(numer, pow(-scale)?)
    };
    Ok(r)
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let cfg = Config::load_unvalidated(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without the whole-config checks, so that command-line
    /// overrides can be applied before `validate`.
    pub fn load_unvalidated(path: &Path) -> Result<Config> {
        let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Config(format!("{}: not valid UTF-8", path.display())))?;
        let mut cfg = Config::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Config> {
        let cfg = Config::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Config { hash: hex::encode(Sha256::digest(text.as_bytes())), ..cfg })
    }

    pub fn validate(&self) -> Result<()> {
        for (i, api) in self.logging_apis.iter().enumerate() {
            compile_glob(&api.pattern)
                .map_err(|e| Error::Config(format!("logging_apis[{i}].pattern: {e}")))?;
        }
        let l = &self.labels;
        if l.severity_triggers.is_empty() {
            return Err(Error::Config("labels.severity_triggers must not be empty".into()));
        }
        if l.exception_names.is_empty() || l.exception_names.iter().any(|n| n.trim().is_empty()) {
            return Err(Error::Config("labels.exception_names must be nonempty names".into()));
        }
        if l.keywords.is_empty() {
            return Err(Error::Config("labels.keywords must not be empty".into()));
        }
        if let Some(k) = l.keywords.iter().find(|k| k.is_empty() || **k != k.to_lowercase()) {
            return Err(Error::Config(format!("labels.keywords: `{k}` must be nonempty lowercase")));
        }
        if l.status_patterns.is_empty() {
            return Err(Error::Config("labels.status_patterns must not be empty".into()));
        }
        for (i, p) in l.status_patterns.iter().enumerate() {
            Regex::new(p).map_err(|e| Error::Config(format!("labels.status_patterns[{i}]: {e}")))?;
        }
        if self.pipeline.t_entry == 0 {
            return Err(Error::Config("pipeline.t_entry must be at least 1".into()));
        }
        self.bounds.validate()?;
        self.validate_mode()
    }

    /// Mode checks that command-line overrides can change.
    pub fn validate_mode(&self) -> Result<()> {
        if self.pipeline.mock {
            if self.pipeline.seed.is_none() {
                return Err(Error::Config("pipeline.seed is required in mock mode".into()));
            }
        } else if self.reasoner.replay {
            if self.reasoner.transcript.is_none() {
                return Err(Error::Config("reasoner.transcript is required in replay mode".into()));
            }
        } else {
            if self.reasoner.endpoint_url.is_empty() {
                return Err(Error::Config("reasoner.endpoint_url is required in live mode".into()));
            }
            if self.reasoner.api_key_env.is_empty() {
                return Err(Error::Config("reasoner.api_key_env is required in live mode".into()));
            }
            if self.reasoner.model_name.is_empty() {
                return Err(Error::Config("reasoner.model_name is required in live mode".into()));
            }
        }
        if self.reasoner.max_inflight == 0 {
            return Err(Error::Config("reasoner.max_inflight must be positive".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn seed(&self) -> u64 {
        self.pipeline.seed.unwrap_or(0)
    }

    pub fn mode(&self) -> &'static str {
        match (self.pipeline.mock, self.reasoner.replay) {
            (true, _) => "mock",
            (false, true) => "replay",
            (false, false) => "live",
        }
    }
}

/// Compiles a logging-API glob into an anchored regex. `*` matches any run of
/// characters, `?` one character, `[...]` a character class.
pub fn compile_glob(pattern: &str) -> std::result::Result<Regex, String> {
    if pattern.trim().is_empty() {
        return Err("empty pattern".into());
    }
    if pattern.chars().any(char::is_whitespace) {
        return Err(format!("`{pattern}` contains whitespace"));
    }
    let mut re = String::from("^");
    let mut chars = pattern.chars();
    while let Some(c) = chars.next() {
        match c {
            '*' => re.push_str(".*"),
            '?' => re.push('.'),
            '[' => {
                let mut class = String::new();
                loop {
                    match chars.next() {
                        Some(']') => break,
                        Some(c) => class.push(c),
                        None => return Err(format!("unclosed `[` in `{pattern}`")),
                    }
                }
                if class.is_empty() {
                    return Err(format!("empty character class in `{pattern}`"));
                }
                let class = class.strip_prefix('!').map_or(class.clone(), |c| format!("^{c}"));
                re.push('[');
                re.push_str(&class.replace('\\', "\\\\").replace('[', "\\["));
                re.push(']');
            }
            ']' => return Err(format!("unmatched `]` in `{pattern}`")),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    Regex::new(&re).map_err(|e| e.to_string())
}
