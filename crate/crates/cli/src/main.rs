mod cli;
mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use cli::{Cli, Format};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(bernet::Error),
}

impl From<bernet::Error> for CliError {
    fn from(e: bernet::Error) -> Self {
        CliError::Run(e)
    }
}

const DEFAULT_SEED: u64 = 1;

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("BERNET_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map(Some).map_err(|_| CliError::Usage(format!("BERNET_THREADS=`{v}` is not a count")))
        }
        _ => Ok(None),
    }
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn execute() -> Result<(), CliError> {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Err(CliError::Usage(String::new())) } else { Ok(()) };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let name = cli.command.name();
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let file = match &cli.global.config {
        Some(path) => config::load(path, name)?,
        None => config::ConfigFile::default(),
    };
    let seed = cli.global.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let format = cli.global.format.or(file.format).unwrap_or(Format::Csv);
    let threads = threads(cli.global.threads)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;

    let started = chrono::Utc::now();
    let out = pool.install(|| commands::run(&cli.command, sub, &file, seed))?;
    let manifest = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "format": format,
        "config": out.config,
    });
    let data = match format {
        Format::Csv => out.csv,
        Format::Json => {
            let mut obj = Map::new();
            obj.insert("manifest".into(), manifest.clone());
            obj.extend(out.json);
            serde_json::to_string_pretty(&Value::Object(obj)).expect("serializable") + "\n"
        }
    };
    match &cli.global.out {
        None => print!("{data}"),
        Some(path) => {
            let io = |e: std::io::Error| CliError::Run(bernet::Error::Io(e));
            std::fs::write(path, &data).map_err(io)?;
            let mut full = manifest;
            full["threads"] = json!(threads.unwrap_or_else(rayon::current_num_threads));
            full["started"] = json!(started.to_rfc3339());
            full["finished"] = json!(chrono::Utc::now().to_rfc3339());
            full["outputs"] = json!([{
                "path": path.display().to_string(),
                "sha256": format!("{:x}", Sha256::digest(data.as_bytes())),
            }]);
            std::fs::write(sidecar(path), serde_json::to_string_pretty(&full).expect("serializable") + "\n").map_err(io)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(1)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
