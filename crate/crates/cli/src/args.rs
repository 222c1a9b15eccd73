use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};

#[derive(Debug, Parser)]
#[command(name = "hardsphere", version, about = "Percolating hard-sphere constructions and their numeric checks")]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, env = "HARDSPHERE_SEED", default_value_t = 1)]
    pub seed: u64,

    /// Output directory. Results and manifest.json are written there instead of stdout/stderr.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the volume constants and the optimal bound per dimension.
    BoundsScan(ScanArgs),
    /// Run the layered exploration and write manifest, sphere dump and step log.
    Simulate(SimArgs),
    /// Estimate the crossing probability of planar site percolation.
    Perc2d(PercArgs),
    /// Run a Monte Carlo verification suite.
    Verify(VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::BoundsScan(_) => "bounds-scan",
            Command::Simulate(_) => "simulate",
            Command::Perc2d(_) => "perc2d",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ScanArgs {
    #[arg(long, default_value_t = 11)]
    pub d_min: usize,
    #[arg(long, default_value_t = 60)]
    pub d_max: usize,
    #[arg(long, default_value_t = hardsphere::bounds::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

/// A number, or `auto` to let the program choose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Auto {
    Auto,
    Value(f64),
}

impl FromStr for Auto {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Auto::Auto);
        }
        s.parse::<f64>().map(Auto::Value).map_err(|_| format!("expected a number or `auto`, got `{s}`"))
    }
}

impl fmt::Display for Auto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Auto::Auto => f.write_str("auto"),
            Auto::Value(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Auto {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Auto::Auto => s.serialize_str("auto"),
            Auto::Value(v) => s.serialize_f64(*v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionArg {
    Lazy,
    Materialize,
}

#[derive(Debug, Args, Serialize)]
pub struct SimArgs {
    #[arg(long)]
    pub dim: usize,
    /// Poisson intensity; `auto` is the optimal value for the dimension.
    #[arg(long, default_value = "auto")]
    pub lambda: Auto,
    /// Transverse half-width of the cells; `auto` runs the two-ball search.
    #[arg(long = "cells-C", default_value = "auto")]
    pub cells_c: Auto,
    #[arg(long, default_value_t = 12.0)]
    pub lattice_radius: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eta: f64,
    /// Number of layers, placed along the first transverse axis.
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 100_000)]
    pub max_steps: usize,
    /// Maximum number of stored Poisson points per layer.
    #[arg(long, default_value_t = hardsphere::sampler::DEFAULT_POINT_BUDGET)]
    pub budget: u64,
    #[arg(long, value_enum, default_value_t = SelectionArg::Lazy)]
    pub selection: SelectionArg,
    /// Monte Carlo samples per candidate in the `auto` half-width search.
    #[arg(long, default_value_t = 1_000_000)]
    pub search_samples: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct PercArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 100.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Geometry,
    Isolation,
    Sampler,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Samples (geometry), trials (isolation) or seeds (sampler); defaults per suite.
    #[arg(long)]
    pub budget: Option<u64>,
}
