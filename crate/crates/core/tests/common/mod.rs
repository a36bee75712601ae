#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use groundsense::{BBox, Category, Detection, GroundTruthBox};
use rand::Rng;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/clip")
}

/// Copies the fixture clip so a test can break it without touching the
/// checked-in files.
pub fn copy_fixture(dest: &Path) -> PathBuf {
    let src = fixture_dir();
    for sub in ["", "color", "depth"] {
        fs::create_dir_all(dest.join(sub)).unwrap();
        for entry in fs::read_dir(src.join(sub)).unwrap() {
            let entry = entry.unwrap();
            if entry.file_type().unwrap().is_file() {
                fs::copy(entry.path(), dest.join(sub).join(entry.file_name())).unwrap();
            }
        }
    }
    dest.join("manifest.toml")
}

// ---------------------------------------------------------------- eval oracle
//
// Written without the library's ranking or matching helpers: detections are
// globally ranked once, matched against per-image pools in that order, and
// every quantity is recomputed straight from its definition.

pub const ORACLE_GRID: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub p: f64,
    pub r: f64,
    pub ap50: f64,
    pub ap50_95: f64,
}

fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    if inter == 0.0 { 0.0 } else { inter / union }
}

/// Indices of the category's detections, best first: confidence, then image
/// id, then input position.
fn oracle_rank(dets: &[Detection], category: Category) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].category == category).collect();
    // insertion sort keeps this independent of the library's sort calls
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (&dets[idx[j - 1]], &dets[idx[j]]);
            let b_first = b.confidence > a.confidence
                || (b.confidence == a.confidence && b.frame_id < a.frame_id);
            if !b_first {
                break;
            }
            idx.swap(j - 1, j);
            j -= 1;
        }
    }
    idx
}

fn oracle_flags(dets: &[Detection], gts: &[GroundTruthBox], ranked: &[usize], category: Category, thr: f64) -> Vec<bool> {
    let pool: Vec<usize> = (0..gts.len()).filter(|&j| gts[j].category == category).collect();
    let mut used = vec![false; gts.len()];
    ranked
        .iter()
        .map(|&i| {
            let d = &dets[i];
            let mut best: Option<usize> = None;
            let mut best_iou = -1.0;
            for &j in &pool {
                if used[j] || gts[j].image_id != d.frame_id {
                    continue;
                }
                let o = oracle_iou(&d.bbox, &gts[j].bbox);
                if o >= thr && o > best_iou {
                    best = Some(j);
                    best_iou = o;
                }
            }
            if let Some(j) = best {
                used[j] = true;
            }
            best.is_some()
        })
        .collect()
}

/// Precision/recall at every cut of the ranked list.
fn pr_points(flags: &[bool], n_gt: usize) -> Vec<(f64, f64)> {
    (1..=flags.len())
        .map(|n| {
            let tp = flags[..n].iter().filter(|&&f| f).count();
            (tp as f64 / n as f64, tp as f64 / n_gt as f64)
        })
        .collect()
}

/// All-point AP: each true positive adds 1/n_gt of recall, credited with the
/// best precision reachable at that recall or later.
pub fn oracle_ap_all_point(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let pts = pr_points(flags, n_gt);
    let mut ap = 0.0;
    for k in 0..flags.len() {
        if flags[k] {
            let best = pts[k..].iter().map(|p| p.0).fold(0.0, f64::max);
            ap += best / n_gt as f64;
        }
    }
    ap
}

pub fn oracle_ap_101(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let pts = pr_points(flags, n_gt);
    let mut sum = 0.0;
    for step in 0..=100 {
        let level = step as f64 / 100.0;
        sum += pts.iter().filter(|p| p.1 >= level).map(|p| p.0).fold(0.0, f64::max);
    }
    sum / 101.0
}

/// P and R at the confidence cutoff with the largest F1, scanning cutoffs
/// from high to low and keeping the first maximum.
fn oracle_max_f1(dets: &[Detection], ranked: &[usize], flags: &[bool], n_gt: usize) -> (f64, f64) {
    let mut cutoffs: Vec<f64> = ranked.iter().map(|&i| dets[i].confidence).collect();
    cutoffs.dedup();
    let mut best = (0.0, 0.0);
    let mut best_f1 = -1.0;
    for c in cutoffs {
        let kept: Vec<bool> = ranked
            .iter()
            .zip(flags)
            .filter(|(i, _)| dets[**i].confidence >= c)
            .map(|(_, f)| *f)
            .collect();
        let tp = kept.iter().filter(|&&f| f).count() as f64;
        let p = tp / kept.len() as f64;
        let r = tp / n_gt as f64;
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        if f1 > best_f1 {
            best_f1 = f1;
            best = (p, r);
        }
    }
    best
}

/// Per-category rows (None for categories without ground truth) and the
/// mean over evaluated categories.
pub fn oracle_evaluate(dets: &[Detection], gts: &[GroundTruthBox], all_point: bool) -> (Vec<Option<OracleRow>>, OracleRow) {
    let ap = if all_point { oracle_ap_all_point } else { oracle_ap_101 };
    let mut rows = Vec::new();
    for category in Category::ALL {
        let n_gt = gts.iter().filter(|g| g.category == category).count();
        if n_gt == 0 {
            rows.push(None);
            continue;
        }
        let ranked = oracle_rank(dets, category);
        let flags50 = oracle_flags(dets, gts, &ranked, category, 0.5);
        let (p, r) = oracle_max_f1(dets, &ranked, &flags50, n_gt);
        let ap50 = ap(&flags50, n_gt);
        let ap50_95 = ORACLE_GRID
            .iter()
            .map(|&t| ap(&oracle_flags(dets, gts, &ranked, category, t), n_gt))
            .sum::<f64>()
            / ORACLE_GRID.len() as f64;
        rows.push(Some(OracleRow { p, r, ap50, ap50_95 }));
    }
    let present: Vec<OracleRow> = rows.iter().flatten().copied().collect();
    let n = present.len().max(1) as f64;
    let mean = OracleRow {
        p: present.iter().map(|r| r.p).sum::<f64>() / n,
        r: present.iter().map(|r| r.r).sum::<f64>() / n,
        ap50: present.iter().map(|r| r.ap50).sum::<f64>() / n,
        ap50_95: present.iter().map(|r| r.ap50_95).sum::<f64>() / n,
    };
    (rows, mean)
}

fn random_box(rng: &mut impl Rng) -> BBox {
    let x1 = f64::from(rng.random_range(0..30u32));
    let y1 = f64::from(rng.random_range(0..30u32));
    let w = f64::from(rng.random_range(2..12u32));
    let h = f64::from(rng.random_range(2..12u32));
    BBox::new(x1, y1, x1 + w, y1 + h)
}

/// Small random evaluation instance: up to 3 images and 3 categories, at
/// most 8 detections and 5 ground-truth boxes. Integer coordinates keep every
/// IoU exactly representable in the same way for library and oracle.
/// Detections are mostly jittered copies of ground truth so matches happen
/// at a spread of IoUs; confidences come from a coarse grid so ties occur.
pub fn random_instance(rng: &mut impl Rng) -> (Vec<Detection>, Vec<GroundTruthBox>) {
    let n_images = rng.random_range(1..=3u64);
    let n_cats = rng.random_range(1..=3usize);
    let cats: Vec<Category> = (0..n_cats).map(|_| Category::ALL[rng.random_range(0..Category::COUNT)]).collect();
    let gts: Vec<GroundTruthBox> = (0..rng.random_range(0..=5))
        .map(|_| GroundTruthBox {
            image_id: rng.random_range(0..n_images),
            bbox: random_box(rng),
            category: cats[rng.random_range(0..n_cats)],
        })
        .collect();
    let dets: Vec<Detection> = (0..rng.random_range(0..=8))
        .map(|_| {
            let confidence = f64::from(rng.random_range(1..=10u32)) / 10.0;
            if !gts.is_empty() && rng.random_bool(0.7) {
                let g = &gts[rng.random_range(0..gts.len())];
                let mut j = || f64::from(rng.random_range(-2..=2i32));
                let (x1, y1) = (g.bbox.x1 + j(), g.bbox.y1 + j());
                let (x2, y2) = ((g.bbox.x2 + j()).max(x1 + 1.0), (g.bbox.y2 + j()).max(y1 + 1.0));
                let category = if rng.random_bool(0.85) { g.category } else { cats[rng.random_range(0..n_cats)] };
                Detection {
                    frame_id: g.image_id,
                    category,
                    confidence,
                    bbox: BBox::new(x1, y1, x2, y2),
                }
            } else {
                Detection {
                    frame_id: rng.random_range(0..n_images),
                    category: cats[rng.random_range(0..n_cats)],
                    confidence,
                    bbox: random_box(rng),
                }
            }
        })
        .collect();
    (dets, gts)
}

// ---------------------------------------------------------------- trimmed mean oracle

/// Sort-and-trim reference over raw samples; 0 means no return.
pub fn oracle_trimmed_mean(raw: &[u16], trim_keep: f64, scale: f64) -> Option<f64> {
    let mut v: Vec<u16> = raw.iter().copied().filter(|&r| r != 0).collect();
    if v.is_empty() {
        return None;
    }
    v.sort();
    let k = v.len();
    let drop = ((k as f64) * (1.0 - trim_keep) / 2.0).floor() as usize;
    let mid = &v[drop..k - drop];
    Some(mid.iter().map(|&x| f64::from(x)).sum::<f64>() / mid.len() as f64 * scale)
}
