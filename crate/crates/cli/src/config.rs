//! JSON run configuration. Parameter blocks are parsed from the raw text of
//! the `params` member so errors keep their line numbers in the config file.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::value::RawValue;
use specdisc::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Float,
    Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Rearrange,
    Extremal,
    Choquet,
    Kernels,
    Partitions,
    Criteria,
    Example63,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Rearrange => "rearrange",
            Subcommand::Extremal => "extremal",
            Subcommand::Choquet => "choquet",
            Subcommand::Kernels => "kernels",
            Subcommand::Partitions => "partitions",
            Subcommand::Criteria => "criteria",
            Subcommand::Example63 => "example63",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig<'a> {
    subcommand: Subcommand,
    #[serde(borrow)]
    params: Option<&'a RawValue>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    mode: Option<Mode>,
    threads: Option<usize>,
}

/// A parsed configuration; `params` stays raw until the subcommand reads it.
#[derive(Debug)]
pub struct RunConfig<'a> {
    pub text: &'a str,
    pub subcommand: Subcommand,
    params: Option<&'a RawValue>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub enum ConfigError {
    /// Nothing to run: the caller prints usage.
    Empty,
    Invalid(String),
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl<'a> RunConfig<'a> {
    pub fn parse(text: &'a str) -> Result<Self, ConfigError> {
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed == "{}" {
            return Err(ConfigError::Empty);
        }
        let raw: RawConfig<'a> = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            ConfigError::Invalid(format!("config line {}: {msg}", e.line()))
        })?;
        Ok(RunConfig {
            text,
            subcommand: raw.subcommand,
            params: raw.params,
            seed: raw.seed,
            out: raw.out,
            mode: raw.mode,
            threads: raw.threads,
        })
    }

    /// Parses the parameter block, defaults when absent.
    pub fn params<P: DeserializeOwned + Default>(&self) -> Result<P, ConfigError> {
        let Some(raw) = self.params else {
            return Ok(P::default());
        };
        let src = raw.get();
        let offset = src.as_ptr() as usize - self.text.as_ptr() as usize;
        serde_json::from_str(src).map_err(|e| {
            let line = line_of(self.text, offset) + e.line() - 1;
            // serde's own position is relative to the params block
            let msg = e.to_string();
            let msg = msg.split(" at line ").next().unwrap_or(&msg);
            ConfigError::Invalid(format!("config line {line}: params: {msg}"))
        })
    }
}

/// A numeric literal given as a JSON number or a string such as `"2/3"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Lit {
    Text(String),
    Number(serde_json::Number),
}

impl Lit {
    pub fn text(&self) -> String {
        match self {
            Lit::Text(s) => s.clone(),
            Lit::Number(n) => n.to_string(),
        }
    }

    pub fn scalar<T: Scalar>(&self) -> specdisc::Result<T> {
        T::parse_scalar(self.text().trim())
    }
}

impl From<&str> for Lit {
    fn from(s: &str) -> Self {
        Lit::Text(s.to_string())
    }
}

pub fn scalars<T: Scalar>(lits: &[Lit]) -> specdisc::Result<Vec<T>> {
    lits.iter().map(Lit::scalar).collect()
}
