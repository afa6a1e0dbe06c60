use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod state;

/// Exit codes. `2` doubles as clap's own usage-error code; 10–15 mirror the
/// delivery rejection stages one-to-one.
pub mod exit_code {
    /// Failed verification or failed scenario expectation.
    pub const FAILED: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const DUPLICATE: u8 = 3;
    pub const PASSWORD: u8 = 4;
    pub const WEAK_PARAMS: u8 = 5;
    pub const UNKNOWN_IDENTITY: u8 = 6;
    pub const STAGE_OCSP: u8 = 10;
    pub const STAGE_DV_SIGNATURE: u8 = 11;
    pub const STAGE_DIGEST_MISMATCH: u8 = 12;
    pub const STAGE_ENVELOPE_INVALID: u8 = 13;
    pub const STAGE_SIGNATURE_INVALID: u8 = 14;
    pub const STAGE_REPLAY: u8 = 15;
    /// The delegated validation server refused the submission.
    pub const DV_REJECTED: u8 = 16;
    /// The directory returned a key that fails validation.
    pub const BAD_DIRECTORY_KEY: u8 = 17;
    pub const INTERNAL: u8 = 70;
}

/// An error that already knows its exit code.
#[derive(Debug)]
pub struct Fail {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Fail {}

pub fn fail(code: u8, message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Fail { code, message: message.into() })
}

#[derive(Parser)]
#[command(
    name = "smemail",
    version,
    about = "Signcrypted mail for small screens: key ceremonies, sending, \
             receiving, public verification, and scenario runs",
    after_help = "Passwords come from the SMEMAIL_PASSWORD environment \
                  variable or an interactive prompt, never from arguments."
)]
struct Cli {
    /// Path to a key=value config file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Curve: a name (t17, p256) or a path to a parameter file
    #[arg(long, global = true, value_name = "NAME|PATH")]
    curve: Option<String>,

    /// Deployment topology: basic, delegated-fig4 (fig4), delegated-fig5 (fig5)
    #[arg(long, global = true, value_name = "NAME")]
    topology: Option<String>,

    /// Seed all randomness for a reproducible run (default: OS entropy)
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Machine-readable JSON on stdout
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a keypair, enroll it with the local CA, register it
    Keygen {
        /// Address to enroll, e.g. alice@example.org
        identity: String,
    },
    /// Signcrypt a message and submit it for delivery
    Send {
        from: String,
        to: String,
        /// File holding the message octets; `-` reads stdin
        message_file: PathBuf,
    },
    /// Fetch queued mail, validate, and open it
    Recv {
        identity: String,
        /// Also write per-message disclosure bundles into this directory,
        /// enabling third-party `verify` without any private key
        #[arg(long, value_name = "DIR")]
        disclose: Option<PathBuf>,
    },
    /// Check a disclosed envelope against the sender's public key only
    Verify {
        envelope_file: PathBuf,
        disclosed_file: PathBuf,
    },
    /// Mark an identity revoked in the directory
    Revoke { identity: String },
    /// Run a scenario script and report per-step verdicts
    Simulate {
        script: PathBuf,
        /// Where to write the run transcript (default: <name>.transcript)
        #[arg(long, value_name = "PATH")]
        transcript_out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = config::load(cli.config.as_deref(), cli.curve, cli.topology)?;
    match cli.command {
        Command::Keygen { identity } => commands::keygen(cfg, cli.seed, &identity, cli.json),
        Command::Send { from, to, message_file } => {
            commands::send(cfg, cli.seed, &from, &to, &message_file, cli.json)
        }
        Command::Recv { identity, disclose } => {
            commands::recv(cfg, cli.seed, &identity, disclose.as_deref(), cli.json)
        }
        Command::Verify { envelope_file, disclosed_file } => {
            commands::verify(cfg, &envelope_file, &disclosed_file, cli.json)
        }
        Command::Revoke { identity } => commands::revoke(cfg, cli.seed, &identity, cli.json),
        Command::Simulate { script, transcript_out } => {
            commands::simulate(&script, cli.seed, transcript_out.as_deref(), cli.json)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<Fail>() {
            Some(f) => {
                eprintln!("error: {}", f.message);
                ExitCode::from(f.code)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(exit_code::INTERNAL)
            }
        },
    }
}
