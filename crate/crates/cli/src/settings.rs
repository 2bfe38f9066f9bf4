use std::path::Path;

use lesionloc::manifest::{CaseManifest, Settings};

use crate::error::CliError;
use crate::SettingsArgs;

/// Applies `--config` and flag overrides on top of `base`.
pub fn resolve(base: Settings, args: &SettingsArgs) -> Result<Settings, CliError> {
    let mut settings = match &args.config {
        None => base,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let overlay: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::data("config", format!("{}: {e}", path.display())))?;
            if !overlay.is_object() {
                return Err(CliError::data("config", format!("{}: expected a JSON object", path.display())));
            }
            let mut merged = serde_json::to_value(&base).expect("settings serialize");
            for (k, v) in overlay.as_object().unwrap() {
                merged[k] = v.clone();
            }
            serde_json::from_value(merged).map_err(|e| CliError::data("config", format!("{}: {e}", path.display())))?
        }
    };
    if let Some(t) = args.threshold {
        settings.threshold = t;
    }
    if let Some(c) = args.connectivity {
        settings.connectivity = c.into();
    }
    if let Some(m) = args.match_predicate {
        settings.match_predicate = m.into();
    }
    if let Some(b) = args.base_at {
        settings.base_at = b;
    }
    settings.validate().map_err(|e| CliError::data("settings", e.to_string()))?;
    Ok(settings)
}

pub fn load_manifest(path: &Path, args: &SettingsArgs) -> Result<(CaseManifest, Settings), CliError> {
    let manifest = CaseManifest::load(path).map_err(|e| CliError::data("manifest", format!("{}: {e}", path.display())))?;
    if manifest.cases.is_empty() {
        return Err(CliError::data("manifest", format!("{}: no cases listed", path.display())));
    }
    let settings = resolve(manifest.settings.clone(), args)?;
    Ok((manifest, settings))
}
