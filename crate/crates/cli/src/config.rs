use std::path::PathBuf;

use finsler_core::ToleranceProfile;
use serde::Serialize;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

/// Everything a run depends on.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub metric: Option<String>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub profile: ToleranceProfile,
}

/// Reads a profile file; missing keys keep their defaults, unknown keys
/// are rejected.
pub fn load_profile(path: Option<&PathBuf>) -> CliResult<ToleranceProfile> {
    let profile = match path {
        Some(p) => serde_json::from_str::<ToleranceProfile>(&std::fs::read_to_string(p)?)?,
        None => ToleranceProfile::default(),
    };
    profile.validate()?;
    Ok(profile)
}

/// Comma-separated numbers.
pub fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect()
}

/// Semicolon-separated points.
pub fn parse_points(s: &str) -> CliResult<Vec<Vec<f64>>> {
    s.split(';').map(|p| parse_vector(p).map_err(CliError::Input)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_and_points() {
        assert_eq!(parse_vector("1, -2.5,3e-1").unwrap(), vec![1.0, -2.5, 0.3]);
        assert!(parse_vector("1,,2").is_err());
        assert_eq!(parse_points("0,0;1,2").unwrap().len(), 2);
    }
}
