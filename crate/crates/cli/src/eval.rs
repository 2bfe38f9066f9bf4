use std::path::{Path, PathBuf};

use anyhow::Context;
use lesionloc::label_correction::no_correction;
use lesionloc::lesion_ops::{ensemble_mean, mask_components, threshold_components_with, LesionComponent};
use lesionloc::manifest::{CaseEntry, Settings};
use lesionloc::metrics::{
    dsc, froc_points, froc_svg, operating_point, points_to_csv, pseudo_label_quality, thresholds_for, DetectionCriterion,
    EvalCase, FrocCurve, FrocPoint, MetricsError, QualitySummary,
};
use lesionloc::volume::Volume3D;
use rayon::prelude::*;
use serde::Serialize;

use crate::correct::{CORRECTION, PSEUDO_LABEL};
use crate::error::CliError;
use crate::io::{load_mask, load_probability, print_json, write_json, write_text};
use crate::settings::load_manifest;
use crate::{RunArgs, SettingsArgs};

/// Distinct prediction values up to which every value becomes a threshold.
const MAX_DISTINCT_THRESHOLDS: usize = 32;

struct Loaded {
    id: String,
    gt: Volume3D,
    gt_components: Vec<LesionComponent>,
    /// `None` when the case was excluded by correction.
    prediction: Option<Volume3D>,
}

fn find_prediction(dir: &Path, id: &str) -> Option<PathBuf> {
    [
        dir.join(format!("{id}.nii.gz")),
        dir.join(format!("{id}.nii")),
        dir.join("cases").join(id).join(PSEUDO_LABEL),
    ]
    .into_iter()
    .find(|p| p.is_file())
}

fn excluded_by_correction(dir: &Path, id: &str) -> anyhow::Result<bool> {
    let path = dir.join("cases").join(id).join(CORRECTION);
    if !path.is_file() {
        return Ok(false);
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(v.get("excluded").and_then(|e| e.as_bool()).unwrap_or(false))
}

fn load_case(entry: &CaseEntry, predictions: Option<&Path>, settings: &Settings) -> anyhow::Result<Loaded> {
    let gt_path = entry.gt.as_ref().expect("checked before loading");
    let gt = load_mask(gt_path)?;
    let prediction = match predictions {
        Some(dir) => {
            if excluded_by_correction(dir, &entry.id)? {
                None
            } else {
                let path = find_prediction(dir, &entry.id)
                    .with_context(|| format!("no prediction for case {:?} in {}", entry.id, dir.display()))?;
                Some(load_probability(&path)?)
            }
        }
        None => {
            let maps = entry
                .probability_maps
                .iter()
                .map(|p| load_probability(p))
                .collect::<anyhow::Result<Vec<_>>>()?;
            Some(if maps.len() == 1 { maps.into_iter().next().unwrap() } else { ensemble_mean(&maps)? })
        }
    };
    if let Some(p) = &prediction {
        anyhow::ensure!(p.dims() == gt.dims(), "prediction dims {:?} differ from ground truth {:?}", p.dims(), gt.dims());
    }
    let gt_components = mask_components(&gt, &settings.component_options())?;
    Ok(Loaded {
        id: entry.id.clone(),
        gt,
        gt_components,
        prediction,
    })
}

#[derive(Serialize)]
struct CurveJson {
    criterion: DetectionCriterion,
    monotone: bool,
    points: Vec<FrocPoint>,
}

/// Threshold chosen on the strict curve; FP/case read off the overlap curve.
#[derive(Serialize, Clone)]
struct OperatingPointJson {
    target_sensitivity: f64,
    criterion: DetectionCriterion,
    point: Option<FrocPoint>,
    /// FP/case of the any-overlap curve at the same threshold.
    fp_per_case_any_overlap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct FrocJson {
    n_cases: usize,
    thresholds: Vec<f64>,
    strict: CurveJson,
    any_overlap: CurveJson,
    operating_point: OperatingPointJson,
}

#[derive(Serialize)]
struct Failure {
    id: String,
    error: String,
}

#[derive(Serialize)]
struct EvalSummary {
    n_cases: usize,
    n_evaluated: usize,
    n_excluded: usize,
    n_failed: usize,
    mean_dsc: Option<f64>,
    operating_point: OperatingPointJson,
    quality: Option<QualitySummary>,
    failures: Vec<Failure>,
}

fn curve_json(points: Vec<FrocPoint>, criterion: DetectionCriterion) -> CurveJson {
    CurveJson {
        criterion,
        monotone: FrocCurve::new(points.clone()).is_ok(),
        points,
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::data("io", e.to_string())
}

pub fn run(
    manifest_path: &Path,
    predictions: Option<&Path>,
    out: &Path,
    target: f64,
    args: &SettingsArgs,
    run: RunArgs,
) -> Result<(), CliError> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(CliError::Usage("--target-sensitivity must lie in (0, 1]".into()));
    }
    let pool = run.pool()?;
    let (manifest, settings) = load_manifest(manifest_path, args)?;
    if let Some(c) = manifest.cases.iter().find(|c| c.gt.is_none()) {
        return Err(CliError::data("missing_gt", format!("case {:?} has no ground-truth mask", c.id)));
    }
    if let Some(dir) = predictions {
        if !dir.is_dir() {
            return Err(CliError::data("io", format!("{}: not a directory", dir.display())));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let loaded: Vec<Result<Loaded, Failure>> = pool.install(|| {
        manifest
            .cases
            .par_iter()
            .map(|entry| {
                load_case(entry, predictions, &settings).map_err(|e| Failure {
                    id: entry.id.clone(),
                    error: format!("{e:#}"),
                })
            })
            .collect()
    });
    let mut cases = Vec::new();
    let mut failures = Vec::new();
    for r in loaded {
        match r {
            Ok(c) => cases.push(c),
            Err(f) => failures.push(f),
        }
    }
    for f in &failures {
        eprintln!("  {}: {}", f.id, f.error);
    }
    if cases.is_empty() {
        return Err(CliError::AllFailed { failed: failures.len() });
    }

    let opts = settings.component_options();
    let evaluated: Vec<&Loaded> = cases.iter().filter(|c| c.prediction.is_some()).collect();
    let eval_cases: Vec<EvalCase> = evaluated
        .iter()
        .map(|c| EvalCase {
            gt: &c.gt,
            prediction: c.prediction.as_ref().unwrap(),
        })
        .collect();
    let thresholds = settings.thresholds.clone().unwrap_or_else(|| {
        let maps: Vec<&Volume3D> = eval_cases.iter().map(|c| c.prediction).collect();
        thresholds_for(&maps, MAX_DISTINCT_THRESHOLDS)
    });
    let metric_err = |e: MetricsError| CliError::data("metrics", e.to_string());
    let (strict, any) = pool.install(|| {
        rayon::join(
            || froc_points(&eval_cases, &thresholds, DetectionCriterion::STRICT, &opts),
            || froc_points(&eval_cases, &thresholds, DetectionCriterion::AnyOverlap, &opts),
        )
    });
    let (strict, any) = (strict.map_err(metric_err)?, any.map_err(metric_err)?);

    let op = operating_point(&strict, target);
    let operating = OperatingPointJson {
        target_sensitivity: target,
        criterion: DetectionCriterion::STRICT,
        point: op.as_ref().ok().copied(),
        fp_per_case_any_overlap: op
            .as_ref()
            .ok()
            .and_then(|p| any.iter().find(|q| q.threshold == p.threshold))
            .map(|q| q.fp_per_case),
        error: op.as_ref().err().map(ToString::to_string),
    };

    let mut dsc_csv = String::from("id,dsc\n");
    let mut dscs = Vec::new();
    let mut quality_input = Vec::new();
    for c in &cases {
        let kept = match &c.prediction {
            Some(p) => {
                let binary = Volume3D::from_mask(p.dims(), p.spacing(), &p.data().iter().map(|&v| v >= settings.threshold).collect::<Vec<_>>())
                    .map_err(data)?;
                let d = dsc(&c.gt, &binary).map_err(metric_err)?;
                dsc_csv.push_str(&format!("{},{}\n", c.id, d));
                dscs.push(d);
                threshold_components_with(p, settings.threshold, &opts).map_err(data)?
            }
            None => Vec::new(),
        };
        let mut result = no_correction(&kept);
        result.excluded = c.prediction.is_none();
        quality_input.push((c.gt_components.clone(), result));
    }
    let quality = pseudo_label_quality(&quality_input).ok();

    let froc_json = FrocJson {
        n_cases: eval_cases.len(),
        thresholds: thresholds.clone(),
        strict: curve_json(strict.clone(), DetectionCriterion::STRICT),
        any_overlap: curve_json(any.clone(), DetectionCriterion::AnyOverlap),
        operating_point: operating.clone(),
    };
    let write = |name: &str, text: &str| write_text(&out.join(name), text).map_err(|e| data(format!("{e:#}")));
    write("froc.csv", &points_to_csv(&any))?;
    write("froc_strict.csv", &points_to_csv(&strict))?;
    write("froc.svg", &froc_svg(&[("any overlap", &any), ("IoU > 0.1", &strict)]))?;
    write("dsc.csv", &dsc_csv)?;
    write_json(&out.join("froc.json"), &froc_json).map_err(|e| data(format!("{e:#}")))?;
    if let Some(q) = &quality {
        write_json(&out.join("quality.json"), q).map_err(|e| data(format!("{e:#}")))?;
    }
    let summary = EvalSummary {
        n_cases: manifest.cases.len(),
        n_evaluated: evaluated.len(),
        n_excluded: cases.len() - evaluated.len(),
        n_failed: failures.len(),
        mean_dsc: (!dscs.is_empty()).then(|| dscs.iter().sum::<f64>() / dscs.len() as f64),
        operating_point: operating,
        quality,
        failures,
    };
    write_json(&out.join("summary.json"), &summary).map_err(|e| data(format!("{e:#}")))?;
    match &summary.operating_point.point {
        Some(p) => {
            print_json(&summary);
            eprintln!(
                "evaluated {} cases; strict sensitivity >= {target} at threshold {}; FP/case {:.3}",
                summary.n_evaluated,
                p.threshold,
                summary.operating_point.fp_per_case_any_overlap.unwrap_or(p.fp_per_case)
            );
            Ok(())
        }
        None => Err(CliError::data(
            "target_unreachable",
            summary.operating_point.error.clone().unwrap_or_default(),
        )),
    }
}
