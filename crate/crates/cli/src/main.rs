//! `apot` command-line front end.

mod args;
mod commands;
mod output;

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use apot::Error;
use clap::Parser;
use serde_json::json;

use args::{Cli, Command};
use commands::Failure;

fn fail(cli: Option<&Cli>, f: &Failure) -> ExitCode {
    let code = f.exit_code();
    let err = json!({
        "error": {
            "kind": f.kind(),
            "message": f.message(),
            "exit_code": code,
            "command": cli.map(output::command_name),
        }
    });
    let _ = writeln!(std::io::stderr(), "{err}");
    ExitCode::from(code as u8)
}

fn resolve(cli: Cli) -> Result<Cli, Failure> {
    let Command::Rerun(r) = &cli.command else {
        return Ok(cli);
    };
    let text = fs::read_to_string(&r.manifest).map_err(Error::Io)?;
    let manifest: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("manifest: {e}")))?;
    let config = manifest
        .get("config")
        .cloned()
        .ok_or_else(|| Error::Input("manifest has no config".into()))?;
    Ok(serde_json::from_value(config).map_err(|e| Error::Input(format!("manifest config: {e}")))?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let cli = match resolve(cli) {
        Ok(c) => c,
        Err(f) => return fail(None, &f),
    };
    let result = commands::run(&cli).and_then(|emit| {
        output::check_no_clobber(&emit)?;
        output::commit(&cli, &emit)?;
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(Some(&cli), &f),
    }
}
