use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "warpreg",
    version,
    about = "Curve registration with monotone warps estimated from log-derivative matching"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic Gaussian-mixture dataset with known warps.
    Simulate(SimulateArgs),
    /// Register every curve in a file against a reference curve.
    Register(RegisterArgs),
    /// Choose a reference curve without registering the set.
    SelectRef(SelectRefArgs),
    /// Summarize a registration run, optionally against true warps.
    Evaluate(EvaluateArgs),
    /// Re-run the job recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Dataset configuration (JSON); defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Registration settings shared by `register` and `select-ref`.
#[derive(Debug, Args)]
pub struct RegistrationArgs {
    /// Registration configuration (JSON); flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of basis functions for the curve expansions.
    #[arg(long)]
    pub basis_order: Option<usize>,
    /// Weight of the roughness penalty on the warp derivative.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of coefficients of the warp's log-rate expansion.
    #[arg(long)]
    pub warp_coeffs: Option<usize>,
    /// Seed for solver multistart (used when multistart is configured).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Long-format CSV with columns curve_id, t, value.
    pub curves: PathBuf,
    /// Reference: a 0-based position in the file, `auto-j` or `auto-power`.
    #[arg(long = "ref", default_value = "auto-power")]
    pub reference: RefSpec,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub registration: RegistrationArgs,
}

#[derive(Debug, Args)]
pub struct SelectRefArgs {
    pub curves: PathBuf,
    /// Selection method: `auto-j` or `auto-power`.
    #[arg(long = "ref", default_value = "auto-j")]
    pub reference: RefSpec,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub registration: RegistrationArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Output directory of a `register` run.
    pub run: PathBuf,
    /// Output directory of the `simulate` run that produced the curves.
    pub truth: Option<PathBuf>,
    /// Where to write the summary; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also re-register with every basis order in the sweep set.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Output directory; defaults to the one recorded in the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How the reference curve is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RefSpec {
    Index(usize),
    AutoJ,
    AutoPower,
}

impl FromStr for RefSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto-j" => Ok(RefSpec::AutoJ),
            "auto-power" => Ok(RefSpec::AutoPower),
            _ => s.parse().map(RefSpec::Index).map_err(|_| {
                format!("invalid reference `{s}`: expected an index, `auto-j` or `auto-power`")
            }),
        }
    }
}

impl fmt::Display for RefSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefSpec::Index(i) => write!(f, "{i}"),
            RefSpec::AutoJ => f.write_str("auto-j"),
            RefSpec::AutoPower => f.write_str("auto-power"),
        }
    }
}

impl TryFrom<String> for RefSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RefSpec> for String {
    fn from(r: RefSpec) -> String {
        r.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn ref_spec_round_trip() {
        for s in ["auto-j", "auto-power", "0", "17"] {
            assert_eq!(s.parse::<RefSpec>().unwrap().to_string(), s);
        }
        assert!("auto".parse::<RefSpec>().is_err());
        assert!("-1".parse::<RefSpec>().is_err());
        let json = serde_json::to_string(&RefSpec::Index(4)).unwrap();
        assert_eq!(json, "\"4\"");
        assert_eq!(serde_json::from_str::<RefSpec>(&json).unwrap(), RefSpec::Index(4));
    }

    #[test]
    fn parses_register_flags() {
        let cli = Cli::try_parse_from([
            "warpreg", "register", "c.csv", "--out", "o", "--ref", "3", "--basis-order", "20",
            "--lambda", "0.5", "--warp-coeffs", "8", "--seed", "7",
        ])
        .unwrap();
        let Command::Register(a) = cli.command else { panic!("wrong verb") };
        assert_eq!(a.reference, RefSpec::Index(3));
        assert_eq!(a.registration.basis_order, Some(20));
        assert_eq!(a.registration.lambda, Some(0.5));
        assert_eq!(a.registration.warp_coeffs, Some(8));
        assert_eq!(a.registration.seed, Some(7));
    }
}
