//! Detection quality evaluation: greedy IoU matching, average precision,
//! mAP50 / mAP50-95 and per-category report rows.
//!
//! Detections are ranked by descending confidence; ties are broken by image
//! id and then by input order so that results are deterministic. AP uses
//! all-point interpolation unless [`Interpolation::Coco101`] is selected.
//! Categories with no ground truth are reported with zero metrics and left
//! out of the "All" averages.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detection::{BBox, Category, Detection};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub image_id: u64,
    pub bbox: BBox,
    pub category: Category,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    AllPoint,
    Coco101,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "allpoint" => Ok(Interpolation::AllPoint),
            "101pt" => Ok(Interpolation::Coco101),
            other => Err(Error::Config(format!("unknown interpolation `{other}`"))),
        }
    }
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn default_iou_grid() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

/// Matches one image's detections of one category against its ground truth.
///
/// Detections are visited by descending confidence (input order on ties) and
/// each takes the unmatched box with the highest IoU at or above
/// `iou_thresh`; equal IoUs go to the earlier box. Returns a TP flag per
/// detection, in input order.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruthBox], iou_thresh: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    let mut taken = vec![false; gts.len()];
    let mut flags = vec![false; dets.len()];
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (j, gt) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let o = dets[i].bbox.iou(&gt.bbox);
            if o >= iou_thresh && best.is_none_or(|(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            flags[i] = true;
        }
    }
    flags
}

/// Area under the interpolated precision-recall curve of a ranked TP/FP list.
pub fn average_precision(flags: &[bool], n_gt: usize, interp: Interpolation) -> f64 {
    if n_gt == 0 || flags.is_empty() {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(flags.len());
    let mut recall = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (i, &hit) in flags.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    // precision envelope: best precision at this recall or beyond
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    match interp {
        Interpolation::AllPoint => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (r, p) in recall.iter().zip(&precision) {
                if *r > prev_recall {
                    ap += (r - prev_recall) * p;
                    prev_recall = *r;
                }
            }
            ap
        }
        Interpolation::Coco101 => {
            let mut sum = 0.0;
            let mut k = 0;
            for step in 0..=100 {
                let level = f64::from(step) / 100.0;
                while k < recall.len() && recall[k] < level {
                    k += 1;
                }
                if k < recall.len() {
                    sum += precision[k];
                }
            }
            sum / 101.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub iou_grid: Vec<f64>,
    pub interpolation: Interpolation,
    /// Test-image count for the Images column. Defaults to the number of
    /// distinct image ids seen in detections and ground truth.
    pub num_images: Option<usize>,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            iou_grid: default_iou_grid(),
            interpolation: Interpolation::AllPoint,
            num_images: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub class: String,
    pub images: usize,
    pub instances: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap50: f64,
    pub ap50_95: f64,
    /// False for categories without ground truth (excluded from "All").
    pub evaluated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub all: EvalRow,
    /// One row per category in id order.
    pub categories: Vec<EvalRow>,
    pub iou_grid: Vec<f64>,
    pub interpolation: Interpolation,
}

impl EvalReport {
    pub fn map50(&self) -> f64 {
        self.all.ap50
    }

    pub fn map50_95(&self) -> f64 {
        self.all.ap50_95
    }

    pub fn row(&self, category: Category) -> &EvalRow {
        &self.categories[category.index()]
    }

    /// Plain-text table in the shape `Class Images Instances P R mAP50 mAP50-95`,
    /// "All" first and then every category in id order.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<22} {:>7} {:>9} {:>6} {:>6} {:>6} {:>8}",
            "Class", "Images", "Instances", "P", "R", "mAP50", "mAP50-95"
        );
        for row in std::iter::once(&self.all).chain(&self.categories) {
            let _ = writeln!(
                out,
                "{:<22} {:>7} {:>9} {:>6.3} {:>6.3} {:>6.3} {:>8.3}",
                row.class, row.images, row.instances, row.precision, row.recall, row.ap50, row.ap50_95
            );
        }
        out
    }
}

struct Ranked {
    confidence: f64,
    image_id: u64,
    index: usize,
    tp: bool,
}

fn rank(entries: &mut [Ranked]) {
    entries.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.image_id.cmp(&b.image_id))
            .then(a.index.cmp(&b.index))
    });
}

/// Precision and recall at the confidence cutoff with the best F1. Equal
/// confidences form a single cutoff; F1 ties keep the higher cutoff.
fn max_f1_point(ranked: &[Ranked], n_gt: usize) -> (f64, f64) {
    let mut best = (0.0, 0.0, -1.0);
    let mut tp = 0usize;
    for (i, e) in ranked.iter().enumerate() {
        tp += usize::from(e.tp);
        let boundary = ranked
            .get(i + 1)
            .is_none_or(|next| next.confidence.total_cmp(&e.confidence) != Ordering::Equal);
        if !boundary {
            continue;
        }
        let p = tp as f64 / (i + 1) as f64;
        let r = tp as f64 / n_gt as f64;
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        if f1 > best.2 {
            best = (p, r, f1);
        }
    }
    (best.0, best.1)
}

/// Ranked TP/FP flags for one category at one IoU threshold across images.
fn category_flags(
    dets: &[(usize, &Detection)],
    gts: &[&GroundTruthBox],
    image_ids: &[u64],
    iou_thresh: f64,
) -> Vec<Ranked> {
    let mut ranked = Vec::with_capacity(dets.len());
    for &image in image_ids {
        let (idx, image_dets): (Vec<usize>, Vec<Detection>) = dets
            .iter()
            .filter(|(_, d)| d.frame_id == image)
            .map(|(i, d)| (*i, (*d).clone()))
            .unzip();
        if image_dets.is_empty() {
            continue;
        }
        let image_gts: Vec<GroundTruthBox> = gts.iter().filter(|g| g.image_id == image).map(|g| (*g).clone()).collect();
        let flags = match_detections(&image_dets, &image_gts, iou_thresh);
        ranked.extend(idx.into_iter().zip(image_dets).zip(flags).map(|((index, d), tp)| Ranked {
            confidence: d.confidence,
            image_id: image,
            index,
            tp,
        }));
    }
    rank(&mut ranked);
    ranked
}

/// Full evaluation. Detections identify their image through `frame_id`.
pub fn evaluate(dets: &[Detection], gts: &[GroundTruthBox], params: &EvalParams) -> Result<EvalReport> {
    if params.iou_grid.is_empty() || params.iou_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config("IoU grid must be non-empty with thresholds in [0, 1]".into()));
    }
    if let Some(bad) = dets.iter().find(|d| !(0.0..=1.0).contains(&d.confidence)) {
        return Err(Error::Config(format!("confidence {} outside [0, 1]", bad.confidence)));
    }

    let mut image_ids: Vec<u64> = dets
        .iter()
        .map(|d| d.frame_id)
        .chain(gts.iter().map(|g| g.image_id))
        .collect();
    image_ids.sort_unstable();
    image_ids.dedup();
    let images = params.num_images.unwrap_or(image_ids.len());

    let mut categories = Vec::with_capacity(Category::COUNT);
    for category in Category::ALL {
        let cat_dets: Vec<(usize, &Detection)> =
            dets.iter().enumerate().filter(|(_, d)| d.category == category).collect();
        let cat_gts: Vec<&GroundTruthBox> = gts.iter().filter(|g| g.category == category).collect();
        let n_gt = cat_gts.len();
        let mut row = EvalRow {
            class: category.name().to_string(),
            images,
            instances: n_gt,
            precision: 0.0,
            recall: 0.0,
            ap50: 0.0,
            ap50_95: 0.0,
            evaluated: n_gt > 0,
        };
        if n_gt > 0 {
            let ap_at = |thresh: f64| -> (f64, Vec<Ranked>) {
                let ranked = category_flags(&cat_dets, &cat_gts, &image_ids, thresh);
                let flags: Vec<bool> = ranked.iter().map(|r| r.tp).collect();
                (average_precision(&flags, n_gt, params.interpolation), ranked)
            };
            let (ap50, ranked50) = ap_at(0.5);
            let (p, r) = max_f1_point(&ranked50, n_gt);
            let ap_sum: f64 = params.iou_grid.iter().map(|&t| ap_at(t).0).sum();
            row.ap50 = ap50;
            row.ap50_95 = ap_sum / params.iou_grid.len() as f64;
            row.precision = p;
            row.recall = r;
        }
        categories.push(row);
    }

    let evaluated: Vec<&EvalRow> = categories.iter().filter(|r| r.evaluated).collect();
    let mean = |f: fn(&EvalRow) -> f64| -> f64 {
        if evaluated.is_empty() {
            0.0
        } else {
            evaluated.iter().map(|r| f(r)).sum::<f64>() / evaluated.len() as f64
        }
    };
    let all = EvalRow {
        class: "All".to_string(),
        images,
        instances: categories.iter().map(|r| r.instances).sum(),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        ap50: mean(|r| r.ap50),
        ap50_95: mean(|r| r.ap50_95),
        evaluated: !evaluated.is_empty(),
    };

    Ok(EvalReport {
        all,
        categories,
        iou_grid: params.iou_grid.clone(),
        interpolation: params.interpolation,
    })
}
