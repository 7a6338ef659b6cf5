//! Experiment config files.
//!
//! A config is a flat TOML document of dotted keys:
//!
//! ```toml
//! model.mu = [1.0, 0.0]      # or model.dim = 2 for mu = e1
//! model.sigma = 0.5
//! loss.rule = "conj"
//! loss.family = "exp"
//! run.mode = "stochastic"    # or "population"
//! run.stream = "gaussian"    # optional; "alternating" feeds +mu, -mu, ...
//! run.eta = 0.5
//! run.batch = 32             # optional
//! run.horizon = 100
//! run.seed = 7               # optional
//! init.w = [1.0, 0.0]        # optional, defaults to e1
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::dynamics::{ExperimentConfig, Mode, SampleStream};
use crate::losses::{make_loss, LabelRule, LossFamily};
use crate::model::GaussianModel;
use crate::{Error, Result};

pub const DEFAULT_BATCH: usize = 32;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: ModelSection,
    loss: LossSection,
    run: RunSection,
    #[serde(default)]
    init: InitSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    mu: Option<Vec<f64>>,
    sigma: f64,
    dim: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossSection {
    rule: String,
    family: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    mode: String,
    stream: Option<String>,
    eta: f64,
    batch: Option<usize>,
    horizon: usize,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitSection {
    w: Option<Vec<f64>>,
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "stochastic" => Ok(Mode::Stochastic),
        "population" => Ok(Mode::Population),
        other => Err(Error::invalid(
            "run.mode",
            format!("unknown mode `{other}` (stochastic|population)"),
        )),
    }
}

fn parse_stream(s: &str) -> Result<SampleStream> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gaussian" => Ok(SampleStream::Gaussian),
        "alternating" => Ok(SampleStream::Alternating),
        other => Err(Error::invalid(
            "run.stream",
            format!("unknown stream `{other}` (gaussian|alternating)"),
        )),
    }
}

fn basis(dim: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[0] = 1.0;
    e
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;

    let mu = match (file.model.mu, file.model.dim) {
        (Some(mu), Some(dim)) if mu.len() != dim => {
            return Err(Error::invalid(
                "model.dim",
                format!("model.dim = {dim} but model.mu has {} entries", mu.len()),
            ))
        }
        (Some(mu), _) => mu,
        (None, Some(dim)) if dim >= 1 => basis(dim),
        (None, Some(_)) => return Err(Error::invalid("model.dim", "dimension must be at least 1")),
        (None, None) => return Err(Error::invalid("model.mu", "one of model.mu or model.dim is required")),
    };
    let dim = mu.len();
    let model = GaussianModel::new(mu, file.model.sigma).map_err(|e| match e {
        Error::InvalidParameter { name, reason } => Error::invalid(format!("model.{name}"), reason),
        Error::ZeroVector => Error::invalid("model.mu", "mean vector must be non-zero"),
        other => other,
    })?;

    let rule: LabelRule = file.loss.rule.parse()?;
    let family: LossFamily = file.loss.family.parse()?;
    let mode = parse_mode(&file.run.mode)?;
    let stream = file
        .run
        .stream
        .as_deref()
        .map(parse_stream)
        .transpose()?
        .unwrap_or_default();

    let config = ExperimentConfig {
        model,
        loss: make_loss(rule, family),
        eta: file.run.eta,
        mode,
        stream,
        batch_size: file.run.batch.unwrap_or(DEFAULT_BATCH),
        horizon: file.run.horizon,
        seed: file.run.seed.unwrap_or(0),
        w_init: file.init.w.unwrap_or_else(|| basis(dim)),
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// `{:?}` keeps a decimal point or exponent, so the value reads back as a
/// TOML float.
fn toml_float(v: f64) -> String {
    format!("{v:?}")
}

fn toml_array(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| toml_float(*x)).collect();
    format!("[{}]", items.join(", "))
}

/// Renders a config in the same flat form [`parse_config`] reads.
pub fn config_to_toml(config: &ExperimentConfig) -> String {
    let mode = match config.mode {
        Mode::Stochastic => "stochastic",
        Mode::Population => "population",
    };
    let stream = match config.stream {
        SampleStream::Gaussian => "gaussian",
        SampleStream::Alternating => "alternating",
    };
    let lines = [
        format!("model.mu = {}", toml_array(config.model.mu())),
        format!("model.sigma = {}", toml_float(config.model.sigma())),
        format!("model.dim = {}", config.model.dim()),
        format!("loss.rule = \"{}\"", config.loss.rule.as_str()),
        format!("loss.family = \"{}\"", config.loss.family.as_str()),
        format!("run.mode = \"{mode}\""),
        format!("run.stream = \"{stream}\""),
        format!("run.eta = {}", toml_float(config.eta)),
        format!("run.batch = {}", config.batch_size),
        format!("run.horizon = {}", config.horizon),
        format!("run.seed = {}", config.seed),
        format!("init.w = {}", toml_array(&config.w_init)),
    ];
    let mut out = lines.join("\n");
    out.push('\n');
    out
}
