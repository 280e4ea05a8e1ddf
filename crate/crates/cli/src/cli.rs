//! Argument parsing and the single-line error contract.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;

use crate::config::{parse_config, Command};
use crate::run::{run, Artifacts};

fn command_name(s: &str) -> Result<Command, String> {
    Command::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
        format!("unknown command `{s}` (expected one of {})", names.join(", "))
    })
}

#[derive(Debug, Clone, Parser)]
#[command(name = "micromorph", version, about = "Relaxed micromorphic finite-element runs")]
pub struct Cli {
    /// mesh, solve-static, solve-dynamic, verify-extension, korn or convergence
    #[arg(value_parser = command_name)]
    pub command: Command,
    /// INI-style run configuration
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for random ensembles; overrides `seed`
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Cli {
    pub fn execute(&self) -> Result<Artifacts> {
        let path = &self.config;
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config = parse_config(&text).with_context(|| format!("config {}", path.display()))?;
        match config.command {
            Some(c) if c != self.command => {
                bail!("config {} is for `{c}` but `{}` was requested", path.display(), self.command)
            }
            _ => config.command = Some(self.command),
        }
        if let Some(out) = &self.out {
            config.output.dir = out.clone();
        }
        if self.seed.is_some() {
            config.seed = self.seed;
        }
        run(&config)
    }
}

/// `error: ` followed by the whole context chain on one line.
pub fn error_line(err: &anyhow::Error) -> String {
    let chain = format!("{err:#}");
    format!("error: {}", chain.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// What the process should print and return.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Done(Vec<PathBuf>),
    /// Help or version text for stdout.
    Info(String),
    Failed(String),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Done(_) | Outcome::Info(_) => 0,
            Outcome::Failed(_) => 1,
        }
    }
}

pub fn main_with<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return Outcome::Info(e.to_string());
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            return Outcome::Failed(format!("error: {}", first.trim_start_matches("error:").trim()));
        }
    };
    match cli.execute() {
        Ok(a) => Outcome::Done(a.files),
        Err(e) => Outcome::Failed(error_line(&e)),
    }
}
