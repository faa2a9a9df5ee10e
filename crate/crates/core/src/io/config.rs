//! Pipeline and sweep configuration files. `.toml` files are read as TOML,
//! everything else as JSON. Keys mirror the struct field names; an optional
//! top-level `schema_version` must be 1.

use std::path::Path;

use serde::de::DeserializeOwned;

use super::schema::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::heuristics::PipelineConfig;
use crate::sweep::SweepGrid;

fn is_toml(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn check_version(version: Option<i64>, path: &Path) -> Result<()> {
    match version {
        None => Ok(()),
        Some(v) if v == SCHEMA_VERSION as i64 => Ok(()),
        Some(v) => Err(format_err(path, format!("unsupported schema_version {v}"))),
    }
}

fn parse_doc<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    if is_toml(path) {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| format_err(path, e.to_string()))?;
        let version = match table.remove("schema_version") {
            None => None,
            Some(toml::Value::Integer(v)) => Some(v),
            Some(other) => return Err(format_err(path, format!("schema_version must be an integer, got {other}"))),
        };
        check_version(version, path)?;
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| format_err(path, e.to_string()))
    } else {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| format_err(path, e.to_string()))?;
        let version = match value.as_object_mut().and_then(|o| o.remove("schema_version")) {
            None => None,
            Some(v) => Some(
                v.as_i64()
                    .ok_or_else(|| format_err(path, format!("schema_version must be an integer, got {v}")))?,
            ),
        };
        check_version(version, path)?;
        serde_json::from_value(value).map_err(|e| format_err(path, e.to_string()))
    }
}

/// Parses a pipeline configuration; the format follows `path`'s extension.
pub fn parse_config(text: &str, path: &Path) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = parse_doc(text, path)?;
    cfg.validate().map_err(|e| e.in_file(path))?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

pub fn parse_grid(text: &str, path: &Path) -> Result<SweepGrid> {
    let grid: SweepGrid = parse_doc(text, path)?;
    grid.validate().map_err(|e| e.in_file(path))?;
    Ok(grid)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<SweepGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::MergeStrategy;

    const TOML_CFG: &str = r#"
schema_version = 1
confidence_threshold = 0.5
box_reduction_ratio = 0.1
covariance_scale = 0.2
final_nms_iou = 0.3
label_smoothing = true

[merge]
lambda_iou = 0.4
strategy = "average"
"#;

    #[test]
    fn toml_and_json_agree() {
        let a = parse_config(TOML_CFG, Path::new("c.toml")).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = parse_config(&json, Path::new("c.json")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.merge.strategy, MergeStrategy::Average);
        assert_eq!(a.num_classes, 30);
    }

    #[test]
    fn default_config_round_trips() {
        let cfg = PipelineConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(parse_config(&text, Path::new("c.toml")).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_config() {
        let p = Path::new("c.toml");
        assert!(parse_config(&TOML_CFG.replace("schema_version = 1", "schema_version = 3"), p).is_err());
        assert!(parse_config(&TOML_CFG.replace("0.5", "1.5"), p).is_err());
        assert!(parse_config(&format!("{TOML_CFG}\nextra = 1"), p).is_err());
        let err = parse_config(&TOML_CFG.replace("\"average\"", "\"median\""), p).unwrap_err();
        assert_eq!(err.kind(), "format");
    }
}
