//! Segmentation and lesion-detection metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label_correction::CorrectionResult;
use crate::lesion_ops::{mask_components, threshold_components_with, ComponentOptions, LesionComponent, LesionError};
use crate::volume::Volume3D;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask dims differ: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("no cases to evaluate")]
    NoCases,
    #[error("threshold list is empty")]
    NoThresholds,
    #[error("thresholds must be strictly increasing within (0, 1]")]
    BadThresholds,
    #[error("fROC curve violates monotonicity at threshold {threshold}")]
    NonMonotoneCurve { threshold: f64 },
    #[error("fROC point out of range at threshold {threshold}")]
    PointOutOfRange { threshold: f64 },
    #[error("sensitivity {target} is not reached at any threshold")]
    TargetUnreachable { target: f64 },
    #[error("every case is excluded")]
    AllExcluded,
    #[error(transparent)]
    Lesion(#[from] LesionError),
}

/// Dice similarity of the nonzero voxels of two masks. Two empty masks score 1.
pub fn dsc(a: &Volume3D, b: &Volume3D) -> Result<f64, MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimsMismatch(a.dims(), b.dims()));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0.0, y != 0.0);
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DetectionCriterion {
    /// Any shared voxel.
    AnyOverlap,
    /// IoU strictly greater than the given value.
    IoUAbove(f64),
}

impl DetectionCriterion {
    /// The strict criterion used for operating-point selection and
    /// pseudo-label quality.
    pub const STRICT: DetectionCriterion = DetectionCriterion::IoUAbove(0.1);

    pub fn hit(&self, gt: &LesionComponent, pred: &LesionComponent) -> bool {
        match *self {
            DetectionCriterion::AnyOverlap => gt.intersection_len(pred) > 0,
            DetectionCriterion::IoUAbove(t) => gt.iou(pred) > t,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionTally {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub per_case_fp: Vec<usize>,
}

impl DetectionTally {
    pub fn gt_total(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn cases(&self) -> usize {
        self.per_case_fp.len()
    }

    /// Associative combination of tallies from disjoint case sets.
    pub fn merge(mut self, other: DetectionTally) -> DetectionTally {
        self.tp += other.tp;
        self.fn_ += other.fn_;
        self.fp += other.fp;
        self.per_case_fp.extend(other.per_case_fp);
        self
    }

    pub fn sensitivity(&self) -> Option<f64> {
        let total = self.gt_total();
        (total > 0).then(|| self.tp as f64 / total as f64)
    }

    pub fn fp_per_case(&self) -> Option<f64> {
        let n = self.cases();
        (n > 0).then(|| self.fp as f64 / n as f64)
    }
}

/// Lesion-level tally for one case. A GT lesion is a TP when any prediction
/// meets the criterion against it; a prediction is a FP when it meets the
/// criterion against no GT lesion. One prediction may confirm several GT
/// lesions.
pub fn match_detections(gt: &[LesionComponent], pred: &[LesionComponent], criterion: DetectionCriterion) -> DetectionTally {
    let tp = gt.iter().filter(|g| pred.iter().any(|p| criterion.hit(g, p))).count();
    let fp = pred.iter().filter(|p| !gt.iter().any(|g| criterion.hit(g, p))).count();
    DetectionTally {
        tp,
        fn_: gt.len() - tp,
        fp,
        per_case_fp: vec![fp],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub fp_per_case: f64,
}

/// Validated fROC curve: thresholds strictly increasing, sensitivity and FP
/// rate both non-increasing along the curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrocCurve {
    points: Vec<FrocPoint>,
}

impl FrocCurve {
    pub fn new(points: Vec<FrocPoint>) -> Result<Self, MetricsError> {
        check_points(&points)?;
        for w in points.windows(2) {
            if w[1].sensitivity > w[0].sensitivity || w[1].fp_per_case > w[0].fp_per_case {
                return Err(MetricsError::NonMonotoneCurve {
                    threshold: w[1].threshold,
                });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[FrocPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<FrocPoint> {
        self.points
    }

    /// CSV with header `threshold,sensitivity,fp_per_case`.
    pub fn to_csv(&self) -> String {
        points_to_csv(&self.points)
    }
}

pub fn points_to_csv(points: &[FrocPoint]) -> String {
    let mut out = String::from("threshold,sensitivity,fp_per_case\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.sensitivity, p.fp_per_case));
    }
    out
}

fn check_points(points: &[FrocPoint]) -> Result<(), MetricsError> {
    if points.is_empty() {
        return Err(MetricsError::NoThresholds);
    }
    for p in points {
        if !(p.threshold > 0.0 && p.threshold <= 1.0)
            || !(0.0..=1.0).contains(&p.sensitivity)
            || !(p.fp_per_case >= 0.0 && p.fp_per_case.is_finite())
        {
            return Err(MetricsError::PointOutOfRange { threshold: p.threshold });
        }
    }
    if points.windows(2).any(|w| w[1].threshold <= w[0].threshold) {
        return Err(MetricsError::BadThresholds);
    }
    Ok(())
}

/// One evaluation case: ground-truth mask and predicted probability map.
#[derive(Debug, Clone, Copy)]
pub struct EvalCase<'a> {
    pub gt: &'a Volume3D,
    pub prediction: &'a Volume3D,
}

/// Default threshold ladder 0.05, 0.10, ..., 0.95.
pub fn default_thresholds() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

/// The default ladder plus every distinct nonzero value present in the maps
/// when there are at most `max_distinct` of them.
pub fn thresholds_for(maps: &[&Volume3D], max_distinct: usize) -> Vec<f64> {
    let mut values: Vec<f64> = Vec::new();
    let mut too_many = false;
    'outer: for m in maps {
        for &v in m.data() {
            if v > 0.0 && v <= 1.0 && !values.contains(&v) {
                values.push(v);
                if values.len() > max_distinct {
                    too_many = true;
                    break 'outer;
                }
            }
        }
    }
    let mut out = default_thresholds();
    if !too_many {
        out.extend(values);
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Raw per-threshold recount; no monotonicity check.
pub fn froc_points(
    cases: &[EvalCase<'_>],
    thresholds: &[f64],
    criterion: DetectionCriterion,
    opts: &ComponentOptions,
) -> Result<Vec<FrocPoint>, MetricsError> {
    if cases.is_empty() {
        return Err(MetricsError::NoCases);
    }
    if thresholds.is_empty() {
        return Err(MetricsError::NoThresholds);
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) || thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(MetricsError::BadThresholds);
    }
    let gt_components: Vec<Vec<LesionComponent>> = cases
        .iter()
        .map(|c| mask_components(c.gt, opts))
        .collect::<Result<_, _>>()?;
    let mut points = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut tally = DetectionTally::default();
        for (case, gt) in cases.iter().zip(&gt_components) {
            if case.gt.dims() != case.prediction.dims() {
                return Err(MetricsError::DimsMismatch(case.gt.dims(), case.prediction.dims()));
            }
            let pred = threshold_components_with(case.prediction, t, opts)?;
            tally = tally.merge(match_detections(gt, &pred, criterion));
        }
        points.push(FrocPoint {
            threshold: t,
            sensitivity: tally.sensitivity().unwrap_or(0.0),
            fp_per_case: tally.fp_per_case().unwrap_or(0.0),
        });
    }
    Ok(points)
}

/// fROC curve over the given thresholds. Fails with
/// [`MetricsError::NonMonotoneCurve`] when the recount is not monotone.
pub fn froc(
    cases: &[EvalCase<'_>],
    thresholds: &[f64],
    criterion: DetectionCriterion,
    opts: &ComponentOptions,
) -> Result<FrocCurve, MetricsError> {
    FrocCurve::new(froc_points(cases, thresholds, criterion, opts)?)
}

/// Largest threshold whose sensitivity reaches `target`.
pub fn threshold_at_sensitivity(curve: &FrocCurve, target: f64) -> Result<FrocPoint, MetricsError> {
    operating_point(curve.points(), target)
}

/// Same rule as [`threshold_at_sensitivity`] applied to unvalidated points.
pub fn operating_point(points: &[FrocPoint], target: f64) -> Result<FrocPoint, MetricsError> {
    if points.is_empty() {
        return Err(MetricsError::NoThresholds);
    }
    points
        .iter()
        .filter(|p| p.sensitivity >= target)
        .max_by(|a, b| a.threshold.total_cmp(&b.threshold))
        .copied()
        .ok_or(MetricsError::TargetUnreachable { target })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub n_cases: usize,
    pub n_retained: usize,
    pub excluded_fraction: f64,
    /// Over retained cases; `None` when they hold no GT lesions.
    pub sensitivity: Option<f64>,
    pub fp_per_case: f64,
    /// Same metrics ignoring exclusion (every case's kept components count).
    pub sensitivity_all_cases: Option<f64>,
    pub fp_per_case_all_cases: f64,
    pub retained: DetectionTally,
}

/// Pseudo-label quality under the strict IoU > 0.1 criterion.
pub fn pseudo_label_quality(cases: &[(Vec<LesionComponent>, CorrectionResult)]) -> Result<QualitySummary, MetricsError> {
    if cases.is_empty() {
        return Err(MetricsError::NoCases);
    }
    let mut retained = DetectionTally::default();
    let mut all = DetectionTally::default();
    for (gt, result) in cases {
        let t = match_detections(gt, &result.kept, DetectionCriterion::STRICT);
        if !result.excluded {
            retained = retained.clone().merge(t.clone());
        }
        all = all.merge(t);
    }
    let n_retained = retained.cases();
    if n_retained == 0 {
        return Err(MetricsError::AllExcluded);
    }
    Ok(QualitySummary {
        n_cases: cases.len(),
        n_retained,
        excluded_fraction: (cases.len() - n_retained) as f64 / cases.len() as f64,
        sensitivity: retained.sensitivity(),
        fp_per_case: retained.fp_per_case().unwrap_or(0.0),
        sensitivity_all_cases: all.sensitivity(),
        fp_per_case_all_cases: all.fp_per_case().unwrap_or(0.0),
        retained,
    })
}

/// Minimal SVG scatter of one or more fROC curves (FP/case on x,
/// sensitivity on y).
pub fn froc_svg(curves: &[(&str, &[FrocPoint])]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 48.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let max_fp = curves
        .iter()
        .flat_map(|(_, ps)| ps.iter().map(|p| p.fp_per_case))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let sx = |fp: f64| M + fp / max_fp * (W - 2.0 * M);
    let sy = |s: f64| H - M - s * (H - 2.0 * M);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{M}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{ty}\" text-anchor=\"middle\" font-size=\"12\">false positives per case (max {max_fp:.2})</text>\n\
         <text x=\"14\" y=\"{cy}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 {cy})\">sensitivity</text>\n",
        y0 = H - M,
        x1 = W - M,
        cx = W / 2.0,
        ty = H - 12.0,
        cy = H / 2.0,
    );
    for (k, (name, points)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        for p in points.iter() {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"><title>t={} s={:.3} fp={:.3}</title></circle>\n",
                sx(p.fp_per_case),
                sy(p.sensitivity),
                p.threshold,
                p.sensitivity,
                p.fp_per_case
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            W - M - 100.0,
            M + 16.0 * k as f64,
            xml_escape(name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
