use std::io::{IsTerminal, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::args::Format;
use crate::error::CliError;

/// Version of the JSON envelope written by every command.
pub const SCHEMA_VERSION: u32 = 1;

/// A finished command, renderable in any output format.
pub struct Report {
    pub command: String,
    pub config: Value,
    pub result: Value,
    pub human: String,
    pub csv: Option<String>,
}

impl Report {
    pub fn new(command: impl Into<String>, config: impl Serialize, result: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            command: command.into(),
            config: to_value(config)?,
            result: to_value(result)?,
            human: String::new(),
            csv: None,
        })
    }

    pub fn human(mut self, text: String) -> Self {
        self.human = text;
        self
    }

    pub fn csv(mut self, text: String) -> Self {
        self.csv = Some(text);
        self
    }

    pub fn envelope(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "result": self.result,
        })
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.envelope()).map_err(|e| CliError::Io(e.to_string()))?;
                s.push('\n');
                Ok(s)
            }
            Format::Human => Ok(self.human.clone()),
            Format::Csv => self
                .csv
                .clone()
                .ok_or_else(|| CliError::Usage(format!("{} has no CSV output", self.command))),
        }
    }
}

pub fn to_value(v: impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

/// Human when stdout is a terminal and nothing is redirected to a file.
pub fn default_format(out: Option<&Path>) -> Format {
    if out.is_none() && std::io::stdout().is_terminal() {
        Format::Human
    } else {
        Format::Json
    }
}

pub fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

/// Fixed-width rendering of a list of numbers.
pub fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn join_f(xs: &[f64], prec: usize) -> String {
    xs.iter().map(|x| format!("{x:.prec$}")).collect::<Vec<_>>().join(", ")
}
