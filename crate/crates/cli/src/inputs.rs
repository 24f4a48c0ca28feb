//! Config files, datasets and the θ sidecar.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use d2v_core::dataset::{load_csv, DomainDataset};
use d2v_core::model::Method;
use d2v_core::trainer::ExperimentConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const CONFIG_SCHEMA_VERSION: u64 = 1;
pub const DATA_FILE: &str = "data.csv";
pub const THETAS_FILE: &str = "thetas.csv";

/// Resolved training settings as written to `config.json` and manifests.
/// The same layout is accepted by `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub schema_version: u64,
    pub method: Method,
    #[serde(flatten)]
    pub config: ExperimentConfig,
}

impl TrainSettings {
    pub fn new(method: Method, config: ExperimentConfig) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            method,
            config,
        }
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Deserializes with the failing field path in the message.
pub fn from_value<T: DeserializeOwned>(path: &Path, v: Value) -> CliResult<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let field = e.path().to_string();
        CliError::Usage(format!("{}: {field}: {}", path.display(), e.into_inner()))
    })
}

/// Reads a JSON object, checks and strips its `schema_version`.
pub fn read_versioned(path: &Path, required: bool) -> CliResult<Value> {
    let mut v = read_json(path)?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| CliError::Usage(format!("{}: expected a JSON object", path.display())))?;
    match obj.remove("schema_version") {
        Some(n) if n.as_u64() == Some(CONFIG_SCHEMA_VERSION) => {}
        Some(n) => {
            return Err(CliError::Usage(format!(
                "{}: schema_version: unsupported value {n}, expected {CONFIG_SCHEMA_VERSION}",
                path.display()
            )))
        }
        None if required => {
            return Err(CliError::Usage(format!(
                "{}: schema_version: missing",
                path.display()
            )))
        }
        None => {}
    }
    Ok(v)
}

/// Training config file: `schema_version`, an optional `method`, and any
/// subset of the experiment fields (the rest take their defaults).
pub fn load_config(path: &Path) -> CliResult<(Option<Method>, ExperimentConfig)> {
    let mut v = read_versioned(path, true)?;
    let method = match v.as_object_mut().and_then(|o| o.remove("method")) {
        Some(m) => Some(
            serde_json::from_value::<Method>(m)
                .map_err(|e| CliError::Usage(format!("{}: method: {e}", path.display())))?,
        ),
        None => None,
    };
    Ok((method, from_value(path, v)?))
}

pub fn load_optional_config(path: Option<&Path>) -> CliResult<(Option<Method>, ExperimentConfig)> {
    match path {
        Some(p) => load_config(p),
        None => Ok((None, ExperimentConfig::default())),
    }
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub csv: PathBuf,
    pub domains: Vec<DomainDataset>,
    /// Path of the θ sidecar if one was found and applied.
    pub thetas: Option<PathBuf>,
}

/// `path` is either a CSV file or a directory containing `data.csv` and
/// optionally `thetas.csv`.
pub fn load_data(path: &Path) -> CliResult<LoadedData> {
    let (csv, sidecar) = if path.is_dir() {
        let side = path.join(THETAS_FILE);
        (path.join(DATA_FILE), side.exists().then_some(side))
    } else {
        (path.to_path_buf(), None)
    };
    if !csv.exists() {
        return Err(CliError::Usage(format!(
            "data file {} does not exist",
            csv.display()
        )));
    }
    let table = load_csv(&csv).map_err(|e| CliError::Usage(format!("{}: {e}", csv.display())))?;
    let mut domains = table.domains();
    if let Some(side) = &sidecar {
        attach_thetas(&mut domains, &read_thetas(side)?, side)?;
    }
    Ok(LoadedData {
        csv,
        domains,
        thetas: sidecar,
    })
}

pub fn read_thetas(path: &Path) -> CliResult<HashMap<String, f64>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().collect::<Vec<_>>() != ["domain", "theta"] {
        return Err(CliError::Usage(format!(
            "{}: header must be `domain,theta`",
            path.display()
        )));
    }
    let mut out = HashMap::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let theta: f64 = rec[1].trim().parse().map_err(|_| {
            CliError::Usage(format!(
                "{}: line {line}: bad theta `{}`",
                path.display(),
                &rec[1]
            ))
        })?;
        if out.insert(rec[0].to_string(), theta).is_some() {
            return Err(CliError::Usage(format!(
                "{}: line {line}: duplicate domain {}",
                path.display(),
                &rec[0]
            )));
        }
    }
    Ok(out)
}

pub fn attach_thetas(
    domains: &mut [DomainDataset],
    thetas: &HashMap<String, f64>,
    path: &Path,
) -> CliResult<()> {
    for d in domains {
        let t = thetas.get(&d.domain_id).ok_or_else(|| {
            CliError::Usage(format!(
                "{}: no theta for domain {}",
                path.display(),
                d.domain_id
            ))
        })?;
        d.theta = Some(*t);
    }
    Ok(())
}

pub fn thetas_csv(domains: &[DomainDataset]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "theta"])?;
    for d in domains {
        let t = d.theta.map(|t| t.to_string()).unwrap_or_default();
        w.write_record([d.domain_id.as_str(), t.as_str()])?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}
