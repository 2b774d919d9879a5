//! Command-line front end: one subcommand per pipeline.
//!
//! Each run reads an optional JSON config, writes its outputs and a
//! `resolved_config.json` into `--out-dir`, and exits 0. Failures print one
//! JSON object on stderr and exit 2 (configuration), 3 (numerical) or 4 (I/O).
//! Outputs depend only on the config and `--seed`, never on `--threads`.

mod commands;
pub mod config;
mod selftest;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Error;

pub use selftest::{run_checks, Check};

#[derive(Debug, Parser)]
#[command(name = "risley", version, about = "Risley-prism lidar simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time-stamped beam directions.
    Pattern(Common),
    /// Radial point density against the analytic profile.
    Density(Common),
    /// Coverage of the angular grid over time.
    Coverage(Common),
    /// Time to coverage over a grid of rotor speeds.
    Sweep(Common),
    /// Point cloud of a scene from a fixed pose.
    Scan(Common),
    /// Lidar-IMU extrinsic calibration experiment.
    Calibrate(Common),
    /// Closed-loop gimbal tracking of a moving target.
    Track(Common),
    /// Quick invariant checks across the library.
    Selftest(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Pattern(c)
            | Command::Density(c)
            | Command::Coverage(c)
            | Command::Sweep(c)
            | Command::Scan(c)
            | Command::Calibrate(c)
            | Command::Track(c)
            | Command::Selftest(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Pattern(_) => "pattern",
            Command::Density(_) => "density",
            Command::Coverage(_) => "coverage",
            Command::Sweep(_) => "sweep",
            Command::Scan(_) => "scan",
            Command::Calibrate(_) => "calibrate",
            Command::Track(_) => "track",
            Command::Selftest(_) => "selftest",
        }
    }
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            kind: "config",
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            kind: "numerical",
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError {
            code: 4,
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }

    /// The single-line JSON printed on stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind, "code": self.code, "message": self.message } }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Config(_) | Error::Json(_) => CliError::config(message),
            Error::Io(_) => CliError {
                code: 4,
                kind: "io",
                message,
            },
            _ => CliError::numerical(message),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", CliError::config(e.to_string().trim_end()).to_json());
            return 2;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}

/// Runs one subcommand inside a pool of the requested size.
pub fn run(command: &Command) -> CliResult<()> {
    let common = command.common();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let out = Output::create(&common.out_dir)?;
        let ctx = Context {
            seed: common.seed,
            base: common
                .config
                .as_deref()
                .and_then(Path::parent)
                .map(Path::to_path_buf)
                .unwrap_or_default(),
            out,
        };
        let name = command.name();
        match command {
            Command::Pattern(c) => commands::pattern(&ctx, &load(c, name, &ctx)?),
            Command::Density(c) => commands::density(&ctx, &load(c, name, &ctx)?),
            Command::Coverage(c) => commands::coverage(&ctx, &load(c, name, &ctx)?),
            Command::Sweep(c) => commands::sweep(&ctx, &load(c, name, &ctx)?),
            Command::Scan(c) => commands::scan(&ctx, &load(c, name, &ctx)?),
            Command::Calibrate(c) => commands::calibrate(&ctx, &load(c, name, &ctx)?),
            Command::Track(c) => commands::track(&ctx, &load(c, name, &ctx)?),
            Command::Selftest(c) => selftest::selftest(&ctx, &load(c, name, &ctx)?),
        }
    })
}

/// Reads the config (or its defaults) and echoes it, fully resolved.
fn load<T: DeserializeOwned + Serialize + Default>(common: &Common, command: &str, ctx: &Context) -> CliResult<T> {
    let config: T = match &common.config {
        None => T::default(),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
    };
    ctx.out.json(
        "resolved_config.json",
        &serde_json::json!({ "command": command, "seed": ctx.seed, "config": &config }),
    )?;
    Ok(config)
}

pub(crate) struct Context {
    pub seed: u64,
    /// Directory relative scene paths resolve against.
    pub base: PathBuf,
    pub out: Output,
}

pub(crate) struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    /// Writes `name` through a buffered writer.
    pub fn write(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::numerical(e.to_string()))?;
        self.write(name, |w| writeln!(w, "{text}"))
    }
}
