use std::path::Path;

use anyhow::Context;
use lesionloc::label_correction::{CorrectionMethod, CorrectionRecord, PseudoLabel};
use lesionloc::manifest::{CaseEntry, Settings};
use lesionloc::nifti::{save_volume_as, NiftiDatatype};
use lesionloc::pipeline::correct_case;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::io::{load_mask, load_probability, write_json};
use crate::settings::load_manifest;
use crate::{RunArgs, SettingsArgs};

pub const PSEUDO_LABEL: &str = "pseudo_label.nii.gz";
pub const CORRECTION: &str = "correction.json";

#[derive(Serialize)]
struct CaseFile<'a> {
    id: &'a str,
    negative: bool,
    significant_lesions: Vec<u32>,
    n_components: usize,
    #[serde(flatten)]
    record: CorrectionRecord,
}

#[derive(Serialize, Default)]
struct CaseLine {
    id: String,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    excluded: bool,
    negative: bool,
    kept: usize,
    removed: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    method: CorrectionMethod,
    settings: &'a Settings,
    n_cases: usize,
    n_succeeded: usize,
    n_failed: usize,
    n_excluded: usize,
    n_negative: usize,
    kept: usize,
    removed: usize,
    cases: Vec<CaseLine>,
}

fn process(entry: &CaseEntry, method: CorrectionMethod, settings: &Settings, out: &Path) -> anyhow::Result<CaseLine> {
    let prostate = load_mask(&entry.prostate)?;
    let maps = entry
        .probability_maps
        .iter()
        .map(|p| load_probability(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = std::fs::read_to_string(&entry.report).with_context(|| format!("reading {}", entry.report.display()))?;
    let outcome = correct_case(&prostate, &maps, &report, method, settings)?;

    let dir = out.join("cases").join(&entry.id);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mask_path = dir.join(PSEUDO_LABEL);
    match &outcome.pseudo_label {
        PseudoLabel::Mask(mask) => save_volume_as(mask, &mask_path, NiftiDatatype::U8)?,
        PseudoLabel::Excluded => {
            if mask_path.exists() {
                std::fs::remove_file(&mask_path)?;
            }
        }
    }
    write_json(
        &dir.join(CORRECTION),
        &CaseFile {
            id: &entry.id,
            negative: outcome.is_negative(),
            significant_lesions: outcome.significant.iter().map(|l| l.index).collect(),
            n_components: outcome.components.len(),
            record: outcome.result.record(),
        },
    )?;
    Ok(CaseLine {
        id: entry.id.clone(),
        ok: true,
        error: None,
        excluded: outcome.result.excluded,
        negative: outcome.is_negative(),
        kept: outcome.result.kept.len(),
        removed: outcome.result.removed.len(),
    })
}

pub fn run(manifest_path: &Path, method: CorrectionMethod, out: &Path, args: &SettingsArgs, run: RunArgs) -> Result<(), CliError> {
    let pool = run.pool()?;
    let (manifest, settings) = load_manifest(manifest_path, args)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let lines: Vec<CaseLine> = pool.install(|| {
        manifest
            .cases
            .par_iter()
            .map(|entry| {
                process(entry, method, &settings, out).unwrap_or_else(|e| CaseLine {
                    id: entry.id.clone(),
                    error: Some(format!("{e:#}")),
                    ..Default::default()
                })
            })
            .collect()
    });

    let ok: Vec<&CaseLine> = lines.iter().filter(|l| l.ok).collect();
    let summary = Summary {
        method,
        settings: &settings,
        n_cases: lines.len(),
        n_succeeded: ok.len(),
        n_failed: lines.len() - ok.len(),
        n_excluded: ok.iter().filter(|l| l.excluded).count(),
        n_negative: ok.iter().filter(|l| l.negative).count(),
        kept: ok.iter().map(|l| l.kept).sum(),
        removed: ok.iter().map(|l| l.removed).sum(),
        cases: Vec::new(),
    };
    let (n_ok, n_failed) = (summary.n_succeeded, summary.n_failed);
    eprintln!(
        "corrected {n_ok}/{} cases ({n_failed} failed, {} excluded); kept {} components, removed {}",
        summary.n_cases, summary.n_excluded, summary.kept, summary.removed
    );
    for l in lines.iter().filter(|l| !l.ok) {
        eprintln!("  {}: {}", l.id, l.error.as_deref().unwrap_or_default());
    }
    let summary = Summary { cases: lines, ..summary };
    write_json(&out.join("summary.json"), &summary).map_err(|e| CliError::data("io", format!("{e:#}")))?;
    if n_ok == 0 {
        return Err(CliError::AllFailed { failed: n_failed });
    }
    crate::io::print_json(&summary);
    Ok(())
}
