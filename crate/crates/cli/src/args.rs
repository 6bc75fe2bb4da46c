//! Command-line surface. Flags mirror the library's experiment inputs;
//! estimator defaults mirror `EstimatorConfig::default()`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rangecap::experiments::{EstimatorConfig, EstimatorMethod};

#[derive(Debug, Parser)]
#[command(
    name = "rangecap",
    version,
    about = "Random walks on finitely generated groups and the capacity of their ranges"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Group spec: path to a JSON file, or inline JSON starting with '{'
    #[arg(long, value_name = "FILE|JSON")]
    pub group: String,

    /// Directory receiving report.json / report.csv / manifest.json
    #[arg(long, default_value = ".")]
    pub out: PathBuf,

    /// Which report files to write (the manifest is always written)
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,

    /// Worker pool size; payloads are byte-identical for any value
    #[arg(long)]
    pub threads: Option<usize>,

    /// Exit with code 4 when the report misses its thresholds
    #[arg(long)]
    pub assert: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn wants_json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn wants_csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Both => "both",
        }
    }
}

/// Capacity estimator flags for the range experiments.
#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// Capacity estimator applied to sampled ranges
    #[arg(long, value_enum, default_value_t = MethodArg::EscapeMc)]
    pub method: MethodArg,

    /// Escape trials per range point
    #[arg(long, default_value_t = 64)]
    pub trials: u32,

    /// Escape horizon (or variational Green horizon) as a multiple of n
    #[arg(long, default_value_t = 16)]
    pub horizon_factor: usize,

    /// Iteration cap of the conditional-gradient energy minimizer
    #[arg(long, default_value_t = 2000)]
    pub fw_iters: usize,

    /// Mass tolerance of truncated Green caches
    #[arg(long, default_value_t = 1e-6)]
    pub green_eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    EscapeMc,
    Variational,
}

impl EstimatorArgs {
    pub fn to_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            method: match self.method {
                MethodArg::EscapeMc => EstimatorMethod::EscapeMc,
                MethodArg::Variational => EstimatorMethod::Variational,
            },
            horizon_factor: self.horizon_factor,
            trials: self.trials,
            fw_iterations: self.fw_iters,
            green_eps: self.green_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CapacityMethodArg {
    EscapeMc,
    JainOrey,
    Variational,
    Bracket,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one walk and record how its range grows
    Walk {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of steps
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// RNG stream id of the path
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },

    /// Ball sizes and the fitted polynomial growth index
    Growth {
        #[command(flatten)]
        common: CommonArgs,
        /// Largest radius to enumerate
        #[arg(long)]
        rmax: u32,
    },

    /// Exact return-probability series p_k(e) up to a horizon
    Kernel {
        #[command(flatten)]
        common: CommonArgs,
        /// Horizon: the series covers k = 0..=n
        #[arg(long)]
        n: usize,
    },

    /// Truncated Green value at one element
    Green {
        #[command(flatten)]
        common: CommonArgs,
        /// Summation horizon
        #[arg(long)]
        horizon: usize,
        /// Element text such as "1;0;-2"; defaults to the identity
        #[arg(long)]
        element: Option<String>,
        /// Kernel pruning tolerance
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
    },

    /// Capacity of a simulated range or an explicit finite set
    Capacity {
        #[command(flatten)]
        common: CommonArgs,
        /// Path length; the target set is the range R_n
        #[arg(long, conflicts_with = "element")]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// RNG stream id of the path
        #[arg(long, default_value_t = 0)]
        stream: u64,
        /// Escape horizon in steps (default 16n for path ranges)
        #[arg(long)]
        horizon: Option<usize>,
        /// Escape trials per set point
        #[arg(long, default_value_t = 64)]
        trials: u32,
        #[arg(long, value_enum, default_value_t = CapacityMethodArg::EscapeMc)]
        method: CapacityMethodArg,
        /// Explicit set member such as "1;0;0"; repeatable
        #[arg(long)]
        element: Vec<String>,
        /// Ball radius for the bracket method
        #[arg(long)]
        radius: Option<u32>,
        /// Green cache horizon for the variational method
        #[arg(long)]
        green_horizon: Option<usize>,
        #[arg(long, default_value_t = 2000)]
        fw_iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        green_eps: f64,
    },

    /// C_n/n trend across an n-grid (law-of-large-numbers probe)
    Slln {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated increasing n values
        #[arg(long, default_value = "256,512,1024,2048")]
        grid: String,
        /// Seed set: COUNT, a..b, or s1,s2,...
        #[arg(long, default_value = "20")]
        seeds: String,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },

    /// Replicated C_n samples with normality diagnostics
    Clt {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        n: usize,
        /// Independent replications (at least 200)
        #[arg(long, default_value_t = 300)]
        reps: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },

    /// Growth exponent of mean C_n over the top half of an n-grid
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated increasing n values (at least three)
        #[arg(long, default_value = "256,512,1024,2048")]
        grid: String,
        /// Seed set: COUNT, a..b, or s1,s2,...
        #[arg(long, default_value = "20")]
        seeds: String,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },

    /// Dyadic capacity sandwich with cross-Green error terms
    Sandwich {
        #[command(flatten)]
        common: CommonArgs,
        /// Path length
        #[arg(long)]
        n: usize,
        /// Comma-separated increasing refinement levels
        #[arg(long, default_value = "1,2,3")]
        levels: String,
        /// Seed set: COUNT, a..b, or s1,s2,...
        #[arg(long, default_value = "20")]
        seeds: String,
        /// Green cache horizon for the error terms (default n)
        #[arg(long)]
        green_horizon: Option<usize>,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },

    /// Return-probability decay slope against the growth index
    Decay {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated increasing n values
        #[arg(long, default_value = "4,8,16,32,64")]
        grid: String,
    },

    /// Exit-time tail frequencies P(tau_r < n) against r^2/n
    ExitTail {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated increasing radii
        #[arg(long, default_value = "20,30,40,50")]
        rgrid: String,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 10000)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Walk { common, .. }
            | Command::Growth { common, .. }
            | Command::Kernel { common, .. }
            | Command::Green { common, .. }
            | Command::Capacity { common, .. }
            | Command::Slln { common, .. }
            | Command::Clt { common, .. }
            | Command::Fit { common, .. }
            | Command::Sandwich { common, .. }
            | Command::Decay { common, .. }
            | Command::ExitTail { common, .. } => common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Walk { .. } => "walk",
            Command::Growth { .. } => "growth",
            Command::Kernel { .. } => "kernel",
            Command::Green { .. } => "green",
            Command::Capacity { .. } => "capacity",
            Command::Slln { .. } => "slln",
            Command::Clt { .. } => "clt",
            Command::Fit { .. } => "fit",
            Command::Sandwich { .. } => "sandwich",
            Command::Decay { .. } => "decay",
            Command::ExitTail { .. } => "exit-tail",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_defaults_match_the_library() {
        let cli = Cli::parse_from(["rangecap", "slln", "--group", "{}"]);
        let Command::Slln { estimator, .. } = cli.command else {
            panic!("parsed wrong variant")
        };
        assert_eq!(estimator.to_config(), EstimatorConfig::default());
    }

    #[test]
    fn subcommand_names_round_trip() {
        for name in [
            "walk", "growth", "kernel", "green", "capacity", "slln", "clt", "fit", "sandwich",
            "decay", "exit-tail",
        ] {
            let mut argv = vec!["rangecap", name, "--group", "{}"];
            match name {
                "walk" | "kernel" | "clt" | "sandwich" => argv.extend(["--n", "8"]),
                "growth" => argv.extend(["--rmax", "4"]),
                "green" => argv.extend(["--horizon", "8"]),
                _ => {}
            }
            let cli = Cli::parse_from(argv);
            assert_eq!(cli.command.name(), name);
        }
    }
}
