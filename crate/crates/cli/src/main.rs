mod args;
mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{CliError, CliResult};
use manifest::RunManifest;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 2 on usage errors and 0 for --help / --version
        Err(e) => e.exit(),
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    dispatch(cli, argv)
}

fn dispatch(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    match &cli.command {
        Command::Walks(a) => commands::walks(a, &argv),
        Command::Train(a) => commands::train(a, &argv),
        Command::Infer(a) => commands::infer(a, &argv),
        Command::Splits(a) => commands::splits(a, &argv),
        Command::Eval(a) => commands::eval(a, &argv),
        Command::Replay(a) => replay(&a.manifest, a.out.as_deref()),
        Command::Import(a) => commands::import(a, &argv),
    }
}

/// The flag naming the output location of each command.
fn output_flag(command: &str) -> Option<&'static str> {
    match command {
        "train" | "import" => Some("--out-dir"),
        "walks" | "infer" | "splits" | "eval" => Some("--out"),
        _ => None,
    }
}

fn replace_flag(argv: &mut Vec<String>, flag: &str, value: &Path) {
    let value = value.to_string_lossy().into_owned();
    let prefixed = format!("{flag}=");
    if let Some(i) = argv.iter().position(|a| a == flag) {
        if i + 1 < argv.len() {
            argv[i + 1] = value;
            return;
        }
    }
    if let Some(i) = argv.iter().position(|a| a.starts_with(&prefixed)) {
        argv[i] = format!("{prefixed}{value}");
        return;
    }
    argv.extend([flag.to_string(), value]);
}

fn replay(manifest_path: &Path, out: Option<&Path>) -> CliResult<()> {
    let m = RunManifest::read(manifest_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", manifest_path.display())))?;
    let out: Option<PathBuf> =
        out.map(|p| std::path::absolute(p).map_err(|e| CliError::Runtime(e.to_string()))).transpose()?;
    std::env::set_current_dir(&m.cwd).map_err(|e| CliError::Runtime(format!("{}: {e}", m.cwd.display())))?;
    let changed = m.changed_inputs();
    if !changed.is_empty() {
        let list: Vec<String> = changed.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::Runtime(format!(
            "inputs changed since the run was recorded: {}",
            list.join(", ")
        )));
    }
    let mut argv = m.argv.clone();
    if let (Some(out), Some(flag)) = (out, output_flag(&m.command)) {
        replace_flag(&mut argv, flag, &out);
    }
    let cli = Cli::try_parse_from(std::iter::once("c2ne".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::Usage(format!("recorded command no longer parses: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a manifest cannot record a replay".into()));
    }
    log::info!("replaying `{}`", argv.join(" "));
    dispatch(cli, argv)
}
