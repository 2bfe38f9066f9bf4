use std::path::Path;

use lesionloc::manifest::{CaseManifest, Settings};
use lesionloc::synthgen::{gen_case, SynthParams};
use rayon::prelude::*;

use crate::error::CliError;
use crate::io::{print_json, write_json};
use crate::RunArgs;

pub fn run(params_path: Option<&Path>, n: usize, out: &Path, seed: Option<u64>, run: RunArgs) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("-n must be at least 1".into()));
    }
    let mut params = match params_path {
        None => SynthParams::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::data("params", format!("{}: {e}", path.display())))?
        }
    };
    if let Some(s) = seed {
        params.seed = s;
    }
    params.validate().map_err(|e| CliError::data("params", e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let pool = run.pool()?;
    let entries = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| gen_case(&params, i).and_then(|case| case.write_to(out)))
            .collect::<Result<Vec<_>, _>>()
    });
    let entries = entries.map_err(|e| CliError::data("simulate", e.to_string()))?;
    let manifest = CaseManifest {
        cases: entries,
        settings: Settings {
            base_at: if params.sectors.base_at_pos_z { Default::default() } else { lesionloc::manifest::BaseAt::NegZ },
            midline_fraction: params.sectors.midline_fraction,
            ..Settings::default()
        },
    };
    let io_err = |e: anyhow::Error| CliError::data("io", format!("{e:#}"));
    write_json(&out.join("manifest.json"), &manifest).map_err(io_err)?;
    write_json(&out.join("params.json"), &params).map_err(io_err)?;
    print_json(&serde_json::json!({ "cases": n, "manifest": out.join("manifest.json") }));
    eprintln!("wrote {n} cases to {}", out.display());
    Ok(())
}
