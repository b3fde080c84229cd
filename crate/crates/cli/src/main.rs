mod cli;
mod commands;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use cli::Cli;
use commands::CliError;

const VERBS: [&str; 6] = ["fit", "select", "simulate", "study", "evaluate", "paths"];

/// Value of `--config` on the raw command line, if any.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Inserts the config file's flags right after the verb so that the same
/// flags given later on the command line override them.
fn merge_config(mut args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let pairs = hetvar::io::parse_config(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    let Some(verb) = args.iter().position(|a| VERBS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let extra: Vec<OsString> = pairs
        .into_iter()
        .filter(|(k, _)| k != "config")
        .map(|(k, v)| format!("--{k}={v}").into())
        .collect();
    args.splice(verb + 1..verb + 1, extra);
    Ok(args)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("HETVAR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("HETVAR_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))
}

fn real_main() -> Result<(), CliError> {
    configure_threads()?;
    let args = merge_config(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    commands::run(cli.command)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            if msg.starts_with("error:") {
                eprintln!("{msg}");
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
