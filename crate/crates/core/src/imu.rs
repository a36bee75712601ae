//! Accelerometer processing: gravity tracking, linear vertical acceleration
//! and scalar Kalman smoothing, plus window-level vibration summaries.
//!
//! Gravity is tracked on the Y and Z axes with an exponential low-pass
//! filter and subtracted from each measurement. The Y-Z norm of what remains
//! is the vertical vibration signal, which a random-walk Kalman filter then
//! smooths. The X axis is parsed but does not enter the metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl AccelSample {
    pub fn new(t: f64, ax: f64, ay: f64, az: f64) -> Self {
        AccelSample { t, ax, ay, az }
    }

    fn check_finite(&self) -> Result<()> {
        if [self.t, self.ax, self.ay, self.az].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidSample(format!("non-finite sample {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GravityEstimate {
    pub gy: f64,
    pub gz: f64,
    pub initialized: bool,
}

/// One low-pass step. The first sample seeds the estimate directly.
pub fn lowpass_update(state: GravityEstimate, sample: &AccelSample, alpha: f64) -> Result<GravityEstimate> {
    sample.check_finite()?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("low-pass alpha {alpha} outside [0, 1]")));
    }
    if !state.initialized {
        return Ok(GravityEstimate {
            gy: sample.ay,
            gz: sample.az,
            initialized: true,
        });
    }
    Ok(GravityEstimate {
        gy: alpha * state.gy + (1.0 - alpha) * sample.ay,
        gz: alpha * state.gz + (1.0 - alpha) * sample.az,
        initialized: true,
    })
}

/// Norm of the gravity-compensated acceleration in the Y-Z plane.
pub fn linear_vertical_accel(sample: &AccelSample, gravity: &GravityEstimate) -> Result<f64> {
    if !gravity.initialized {
        return Err(Error::GravityNotReady);
    }
    let ly = sample.ay - gravity.gy;
    let lz = sample.az - gravity.gz;
    Ok(ly.hypot(lz))
}

/// Scalar random-walk Kalman filter state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    pub x: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl KalmanState {
    pub fn new(x: f64, p: f64, q: f64, r: f64) -> Result<Self> {
        let state = KalmanState { x, p, q, r };
        state.validate()?;
        Ok(state)
    }

    fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.p > 0.0 && self.q >= 0.0 && self.r > 0.0)
            || !(self.p.is_finite() && self.q.is_finite() && self.r.is_finite())
        {
            return Err(Error::Config(format!(
                "Kalman state requires finite x, P > 0, q >= 0, r > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    /// Kalman gain the next update would use.
    pub fn next_gain(&self) -> f64 {
        let p = self.p + self.q;
        p / (p + self.r)
    }
}

/// Predict then update; returns the new state and its estimate.
pub fn kalman_step(state: KalmanState, z: f64) -> Result<(KalmanState, f64)> {
    if !z.is_finite() {
        return Err(Error::InvalidSample(format!("non-finite measurement {z}")));
    }
    state.validate()?;
    let p = state.p + state.q;
    let k = p / (p + state.r);
    let x = state.x + k * (z - state.x);
    let next = KalmanState {
        x,
        p: (1.0 - k) * p,
        ..state
    };
    Ok((next, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationPoint {
    pub t: f64,
    pub raw: f64,
    pub smoothed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuParams {
    /// Low-pass coefficient for the gravity estimate.
    pub alpha: f64,
    pub process_noise: f64,
    pub measurement_noise: f64,
    pub initial_variance: f64,
}

impl Default for ImuParams {
    fn default() -> Self {
        ImuParams {
            alpha: 0.98,
            process_noise: 0.05,
            measurement_noise: 1.0,
            initial_variance: 1.0,
        }
    }
}

/// Stateful single-stream processor. Samples must arrive in timestamp order.
#[derive(Debug, Clone)]
pub struct ImuProcessor {
    params: ImuParams,
    gravity: GravityEstimate,
    kalman: Option<KalmanState>,
    last_t: Option<f64>,
}

impl ImuProcessor {
    pub fn new(params: ImuParams) -> Result<Self> {
        if !(0.0..=1.0).contains(&params.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", params.alpha)));
        }
        // same checks as a live filter state
        KalmanState::new(0.0, params.initial_variance, params.process_noise, params.measurement_noise)?;
        Ok(ImuProcessor {
            params,
            gravity: GravityEstimate::default(),
            kalman: None,
            last_t: None,
        })
    }

    pub fn params(&self) -> &ImuParams {
        &self.params
    }

    pub fn gravity(&self) -> GravityEstimate {
        self.gravity
    }

    pub fn push(&mut self, sample: &AccelSample) -> Result<VibrationPoint> {
        sample.check_finite()?;
        if let Some(prev) = self.last_t {
            if sample.t <= prev {
                return Err(Error::InvalidSample(format!(
                    "timestamp {} does not follow {prev}",
                    sample.t
                )));
            }
        }
        let gravity = lowpass_update(self.gravity, sample, self.params.alpha)?;
        let raw = linear_vertical_accel(sample, &gravity)?;
        let kalman = match self.kalman {
            Some(k) => k,
            None => KalmanState::new(
                raw,
                self.params.initial_variance,
                self.params.process_noise,
                self.params.measurement_noise,
            )?,
        };
        let (kalman, smoothed) = kalman_step(kalman, raw)?;
        self.gravity = gravity;
        self.kalman = Some(kalman);
        self.last_t = Some(sample.t);
        Ok(VibrationPoint {
            t: sample.t,
            raw,
            smoothed,
        })
    }
}

/// Runs a whole stream through a fresh processor.
pub fn process_stream(samples: &[AccelSample], params: ImuParams) -> Result<Vec<VibrationPoint>> {
    let mut proc = ImuProcessor::new(params)?;
    samples.iter().map(|s| proc.push(s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationMetrics {
    pub peak: f64,
    pub rms: f64,
}

/// Peak and RMS of the smoothed signal over a window.
pub fn vibration_metrics(window: &[VibrationPoint]) -> Result<VibrationMetrics> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let peak = window.iter().map(|p| p.smoothed).fold(f64::NEG_INFINITY, f64::max);
    let mean_sq = window.iter().map(|p| p.smoothed * p.smoothed).sum::<f64>() / window.len() as f64;
    Ok(VibrationMetrics {
        peak,
        rms: mean_sq.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub start: f64,
    pub end: f64,
    pub samples: usize,
    pub peak: f64,
    pub rms: f64,
}

/// Splits the series into consecutive windows of `window_s` seconds, aligned
/// to the first timestamp, and summarizes each non-empty one.
pub fn windowed_metrics(points: &[VibrationPoint], window_s: f64) -> Result<Vec<WindowMetrics>> {
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(Error::Config(format!("window length {window_s} must be positive")));
    }
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    let t0 = first.t;
    let mut out = Vec::new();
    let mut begin = 0;
    while begin < points.len() {
        let k = ((points[begin].t - t0) / window_s).floor();
        let end_t = t0 + (k + 1.0) * window_s;
        let len = points[begin..].iter().take_while(|p| p.t < end_t).count().max(1);
        let slice = &points[begin..begin + len];
        let m = vibration_metrics(slice)?;
        out.push(WindowMetrics {
            start: t0 + k * window_s,
            end: end_t,
            samples: len,
            peak: m.peak,
            rms: m.rms,
        });
        begin += len;
    }
    Ok(out)
}
