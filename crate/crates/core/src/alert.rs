//! Proximity warnings from fused detections.
//!
//! A category warns once one of its detections is at or inside
//! `threshold_m` for `min_consecutive` frames in a row. It stays in the
//! warning state until every distance of that category exceeds
//! `threshold_m + clear_margin_m`, or the category disappears from the frame.

use serde::{Deserialize, Serialize};

use crate::detection::Category;
use crate::error::{Error, Result};
use crate::fusion::FusedDetection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertConfig {
    pub threshold_m: f64,
    pub clear_margin_m: f64,
    pub min_consecutive: u32,
}

impl Default for AlertConfig {
    fn default() -> Self {
        AlertConfig {
            threshold_m: 4.0,
            clear_margin_m: 0.5,
            min_consecutive: 1,
        }
    }
}

impl AlertConfig {
    /// Plain `distance <= threshold` rule without hysteresis or debounce.
    pub fn stateless(threshold_m: f64) -> Self {
        AlertConfig {
            threshold_m,
            clear_margin_m: 0.0,
            min_consecutive: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_m > 0.0 && self.threshold_m.is_finite()) {
            return Err(Error::Config(format!("threshold {} must be positive", self.threshold_m)));
        }
        if !(self.clear_margin_m >= 0.0 && self.clear_margin_m.is_finite()) {
            return Err(Error::Config(format!("clear margin {} must be >= 0", self.clear_margin_m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningEvent {
    pub frame_id: u64,
    pub category: Category,
    pub distance_m: f64,
    pub message: String,
}

impl WarningEvent {
    pub fn new(frame_id: u64, category: Category, distance_m: f64) -> Self {
        WarningEvent {
            frame_id,
            category,
            distance_m,
            message: warning_message(category, distance_m),
        }
    }

    /// `frame_id category_id distance_m`
    pub fn to_record(&self) -> String {
        format!("{} {} {}", self.frame_id, self.category.id(), self.distance_m)
    }
}

pub fn warning_message(category: Category, distance_m: f64) -> String {
    format!("WARNING: {} {:.1} m ahead", category.name(), distance_m)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryAlert {
    pub active: bool,
    /// Consecutive frames with a distance at or under the threshold.
    pub streak: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertState {
    pub categories: [CategoryAlert; Category::COUNT],
}

impl AlertState {
    pub fn is_active(&self, category: Category) -> bool {
        self.categories[category.index()].active
    }
}

/// Applies the warning rule to one frame. Returns at most one event per
/// category, ordered by category id, and the next state.
pub fn assess(
    frame_id: u64,
    fused: &[FusedDetection],
    cfg: &AlertConfig,
    state: &AlertState,
) -> (Vec<WarningEvent>, AlertState) {
    let mut nearest: [Option<f64>; Category::COUNT] = [None; Category::COUNT];
    for f in fused {
        if let Some(d) = f.distance_m {
            let slot = &mut nearest[f.detection.category.index()];
            *slot = Some(slot.map_or(d, |s: f64| s.min(d)));
        }
    }

    let mut next = *state;
    let mut events = Vec::new();
    for category in Category::ALL {
        let alert = &mut next.categories[category.index()];
        let Some(d) = nearest[category.index()] else {
            *alert = CategoryAlert::default();
            continue;
        };
        if d <= cfg.threshold_m {
            alert.streak = alert.streak.saturating_add(1);
            if alert.streak >= cfg.min_consecutive {
                alert.active = true;
            }
        } else {
            alert.streak = 0;
            if d > cfg.threshold_m + cfg.clear_margin_m {
                alert.active = false;
            }
        }
        if alert.active {
            events.push(WarningEvent::new(frame_id, category, d));
        }
    }
    (events, next)
}

/// Single-stream wrapper that owns the alert state.
#[derive(Debug, Clone, Default)]
pub struct AlertTracker {
    cfg: AlertConfig,
    state: AlertState,
}

impl AlertTracker {
    pub fn new(cfg: AlertConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AlertTracker {
            cfg,
            state: AlertState::default(),
        })
    }

    pub fn config(&self) -> &AlertConfig {
        &self.cfg
    }

    pub fn state(&self) -> &AlertState {
        &self.state
    }

    pub fn assess(&mut self, frame_id: u64, fused: &[FusedDetection]) -> Vec<WarningEvent> {
        let (events, next) = assess(frame_id, fused, &self.cfg, &self.state);
        self.state = next;
        events
    }
}
