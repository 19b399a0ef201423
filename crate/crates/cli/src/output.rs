use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use finsler_core::ToleranceProfile;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, CliResult};

/// Every JSON report: inputs that determine the result, then the result.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub command: &'a str,
    pub metric: Option<&'a str>,
    pub seed: u64,
    pub profile: &'a ToleranceProfile,
    pub result: T,
}

/// Run facts that vary between identical runs, written beside the report.
#[derive(Debug, Serialize)]
struct Metadata {
    unix_time: u64,
    version: &'static str,
    threads: usize,
}

/// What a command produced.
pub struct Emitted {
    pub json: serde_json::Value,
    pub csv: Option<String>,
}

pub fn report_json<T: Serialize>(cfg: &RunConfig, command: &str, metric: Option<&str>, result: T) -> CliResult<serde_json::Value> {
    Ok(serde_json::to_value(Envelope {
        command,
        metric,
        seed: cfg.seed,
        profile: &cfg.profile,
        result,
    })?)
}

/// Writes `<command>.json`, `<command>.csv` and `<command>.meta.json` under
/// `--out`, or prints to stdout without it.
pub fn emit(cfg: &RunConfig, command: &str, out: &Emitted) -> CliResult<()> {
    if cfg.format.csv() && !cfg.format.json() && out.csv.is_none() {
        return Err(CliError::Input(format!("`{command}` has no CSV output")));
    }
    let json = serde_json::to_string_pretty(&out.json)? + "\n";
    match &cfg.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            if cfg.format.json() {
                std::fs::write(dir.join(format!("{command}.json")), &json)?;
            }
            if cfg.format.csv() {
                if let Some(csv) = &out.csv {
                    std::fs::write(dir.join(format!("{command}.csv")), csv)?;
                }
            }
            let meta = Metadata {
                unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                version: env!("CARGO_PKG_VERSION"),
                threads: rayon::current_num_threads(),
            };
            std::fs::write(
                dir.join(format!("{command}.meta.json")),
                serde_json::to_string_pretty(&meta)? + "\n",
            )?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            if cfg.format.json() {
                stdout.write_all(json.as_bytes())?;
            }
            if cfg.format.csv() {
                if let Some(csv) = &out.csv {
                    stdout.write_all(csv.as_bytes())?;
                }
            }
        }
    }
    Ok(())
}
