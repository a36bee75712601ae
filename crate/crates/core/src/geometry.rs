//! Pinhole camera math and depth-to-color alignment.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0
            && self.height > 0
            && self.fx > 0.0
            && self.fy > 0.0
            && self.fx.is_finite()
            && self.fy.is_finite()
            && (0.0..f64::from(self.width)).contains(&self.cx)
            && (0.0..f64::from(self.height)).contains(&self.cy);
        if ok {
            Ok(())
        } else {
            Err(Error::Calibration(format!("invalid intrinsics {self:?}")))
        }
    }
}

/// Rigid transform taking points from the depth camera into the color camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn identity() -> Self {
        Extrinsics {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(tx: f64, ty: f64, tz: f64) -> Self {
        Extrinsics {
            rotation: Matrix3::identity(),
            translation: Vector3::new(tx, ty, tz),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 || !self.translation.iter().all(|t| t.is_finite()) {
            return Err(Error::Calibration(format!(
                "extrinsic rotation is not a proper rotation (|RᵀR - I| = {ortho:e}, det = {det})"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Row-major 16-bit depth raster. Raw 0 means no depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub values: Vec<u16>,
    /// Meters per raw unit, bit pattern of an f64 so frames stay `Eq`.
    depth_scale_bits: u64,
    pub frame_id: u64,
}

impl DepthFrame {
    pub fn new(width: u32, height: u32, values: Vec<u16>, depth_scale: f64, frame_id: u64) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::Config(format!(
                "depth raster has {} values, expected {width}x{height}",
                values.len()
            )));
        }
        if !(depth_scale > 0.0 && depth_scale.is_finite()) {
            return Err(Error::Config(format!("depth scale {depth_scale} must be positive")));
        }
        Ok(DepthFrame {
            width,
            height,
            values,
            depth_scale_bits: depth_scale.to_bits(),
            frame_id,
        })
    }

    pub fn filled(width: u32, height: u32, raw: u16, depth_scale: f64, frame_id: u64) -> Self {
        Self::new(width, height, vec![raw; width as usize * height as usize], depth_scale, frame_id)
            .expect("sizes agree by construction")
    }

    pub fn depth_scale(&self) -> f64 {
        f64::from_bits(self.depth_scale_bits)
    }

    pub fn raw(&self, u: u32, v: u32) -> u16 {
        self.values[v as usize * self.width as usize + u as usize]
    }

    pub fn set_raw(&mut self, u: u32, v: u32, raw: u16) {
        let w = self.width as usize;
        self.values[v as usize * w + u as usize] = raw;
    }

    /// Depth in meters, `None` for missing returns.
    pub fn meters(&self, u: u32, v: u32) -> Option<f64> {
        match self.raw(u, v) {
            0 => None,
            raw => Some(f64::from(raw) * self.depth_scale()),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }
}

/// Back-projects a pixel at metric depth into camera coordinates.
pub fn deproject(pixel: (f64, f64), depth: f64, intr: &Intrinsics) -> Result<Vector3<f64>> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::InvalidDepth(depth));
    }
    let (u, v) = pixel;
    if !((0.0..f64::from(intr.width)).contains(&u) && (0.0..f64::from(intr.height)).contains(&v)) {
        return Err(Error::OutOfBounds {
            u,
            v,
            width: intr.width,
            height: intr.height,
        });
    }
    Ok(Vector3::new(
        (u - intr.cx) * depth / intr.fx,
        (v - intr.cy) * depth / intr.fy,
        depth,
    ))
}

/// Projects a camera-space point to continuous pixel coordinates.
pub fn project(point: &Vector3<f64>, intr: &Intrinsics) -> Result<(f64, f64)> {
    if point.z <= 0.0 || point.z.is_nan() {
        return Err(Error::BehindCamera(point.z));
    }
    Ok((
        intr.fx * point.x / point.z + intr.cx,
        intr.fy * point.y / point.z + intr.cy,
    ))
}

/// Reprojects a depth frame into the color camera's pixel grid.
///
/// Every valid depth pixel is deprojected, moved by `depth_to_color` and
/// projected into the color image; the transformed depth is written at the
/// rounded target pixel. When several pixels land on one target the nearer
/// surface wins. Targets nothing maps to stay 0.
pub fn align_depth_to_color(
    depth: &DepthFrame,
    depth_intr: &Intrinsics,
    color_intr: &Intrinsics,
    depth_to_color: &Extrinsics,
) -> Result<DepthFrame> {
    depth_intr.validate()?;
    color_intr.validate()?;
    depth_to_color.validate()?;
    if depth.width != depth_intr.width || depth.height != depth_intr.height {
        return Err(Error::Calibration(format!(
            "depth frame is {}x{} but depth intrinsics describe {}x{}",
            depth.width, depth.height, depth_intr.width, depth_intr.height
        )));
    }

    let scale = depth.depth_scale();
    let (cw, ch) = (color_intr.width as usize, color_intr.height as usize);
    // one spare slot at the end absorbs writes from pixels that map nowhere
    let discard = cw * ch;
    let mut out = vec![0u16; cw * ch + 1];

    let dw = depth.width as usize;
    let xs: Vec<f64> = (0..depth.width)
        .map(|u| (f64::from(u) - depth_intr.cx) / depth_intr.fx)
        .collect();
    let [[r00, r10, r20], [r01, r11, r21], [r02, r12, r22]] = depth_to_color.rotation.data.0;
    let t = &depth_to_color.translation;
    let (tx, ty, tz) = (t.x, t.y, t.z);
    let (fx, fy, ccx, ccy) = (color_intr.fx, color_intr.fy, color_intr.cx, color_intr.cy);
    let inv_scale = 1.0 / scale;
    let (umax, vmax) = (cw as f64, ch as f64);

    // Per row: a straight-line pass computing rounded-up target coordinates
    // (shifted by +0.5 so truncation rounds), then a branch-free scatter.
    let (mut us, mut vs, mut zs) = (vec![0.0; dw], vec![0.0; dw], vec![0.0; dw]);
    for (v, row) in depth.values.chunks_exact(dw).enumerate() {
        let yn = (v as f64 - depth_intr.cy) / depth_intr.fy;
        let (ax, ay, az) = (r01 * yn + r02, r11 * yn + r12, r21 * yn + r22);
        let targets = us.iter_mut().zip(vs.iter_mut()).zip(zs.iter_mut());
        for (((uo, vo), zo), (&raw, &xn)) in targets.zip(row.iter().zip(&xs)) {
            let d = f64::from(raw) * scale;
            let pz = (az + r20 * xn) * d + tz;
            let px = (ax + r00 * xn) * d + tx;
            let py = (ay + r10 * xn) * d + ty;
            let iz = 1.0 / pz;
            *uo = fx * px * iz + ccx + 0.5;
            *vo = fy * py * iz + ccy + 0.5;
            *zo = pz * inv_scale + 0.5;
        }
        for (((&u, &vv), &z), &raw) in us.iter().zip(&vs).zip(&zs).zip(row) {
            // `&` rather than `&&` so the mask compiles without branches
            #[allow(clippy::manual_range_contains)]
            let ok = (raw != 0)
                & (u > 0.0)
                & (u < umax)
                & (vv > 0.0)
                & (vv < vmax)
                & (z >= 1.0)
                & (z < 65536.0);
            let target = if ok { vv as i32 as usize * cw + u as i32 as usize } else { discard };
            // 0 means empty: shifting by one makes it the largest value, so
            // min keeps the nearer surface
            let slot = &mut out[target];
            *slot = slot.wrapping_sub(1).min((z as i32 as u16).wrapping_sub(1)).wrapping_add(1);
        }
    }
    out.truncate(cw * ch);

    DepthFrame::new(color_intr.width, color_intr.height, out, scale, depth.frame_id)
}
