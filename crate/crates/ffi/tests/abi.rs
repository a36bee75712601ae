use std::ffi::{CStr, CString};
use std::ptr;

use groundsense::geometry::align_depth_to_color;
use groundsense::{fusion, AccelSample, BBox, DepthFrame, Detection, Extrinsics, FusionConfig, ImuParams, ImuProcessor, Intrinsics};
use groundsense_ffi::*;

fn last_error() -> String {
    let p = gs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn depth_handle(frame: &DepthFrame) -> *mut GsDepth {
    let mut h = ptr::null_mut();
    let st = unsafe {
        gs_depth_new(frame.width, frame.height, frame.values.as_ptr(), frame.depth_scale(), frame.frame_id, &mut h)
    };
    assert_eq!(st, GsStatus::Ok);
    h
}

fn depth_values(h: *const GsDepth) -> (u32, u32, Vec<u16>) {
    let (mut w, mut hgt) = (0, 0);
    assert_eq!(unsafe { gs_depth_size(h, &mut w, &mut hgt) }, GsStatus::Ok);
    let mut buf = vec![0u16; (w * hgt) as usize];
    assert_eq!(unsafe { gs_depth_copy(h, buf.as_mut_ptr(), buf.len()) }, GsStatus::Ok);
    (w, hgt, buf)
}

fn gs_det(frame_id: u64, category: u8, b: (f64, f64, f64, f64)) -> GsDetection {
    GsDetection {
        frame_id,
        category,
        confidence: 0.9,
        bbox: GsBox {
            x1: b.0,
            y1: b.1,
            x2: b.2,
            y2: b.3,
        },
    }
}

fn fused_at(category: u8, distance_m: f64) -> GsFused {
    GsFused {
        detection: gs_det(1, category, (10.0, 10.0, 50.0, 50.0)),
        distance_m,
        valid_samples: 24,
    }
}

#[test]
fn metadata() {
    let v = unsafe { CStr::from_ptr(gs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let names: Vec<&str> = (0..6)
        .map(|i| unsafe { CStr::from_ptr(gs_category_name(i)) }.to_str().unwrap())
        .collect();
    assert_eq!(
        names,
        ["manhole_cover", "non_directional_crack", "pine_cone", "pothole", "tree_branch", "truncated_dome"]
    );
    assert!(gs_category_name(6).is_null());
    let f = gs_fusion_config_default();
    assert_eq!((f.n_samples, f.radius_frac, f.trim_keep), (24, 0.15, 0.5));
    assert_eq!(gs_alert_config_default().threshold_m, 4.0);
    assert_eq!(gs_imu_params_default().alpha, 0.98);
}

#[test]
fn iou_by_hand() {
    let a = GsBox { x1: 0.0, y1: 0.0, x2: 2.0, y2: 2.0 };
    let b = GsBox { x1: 1.0, y1: 1.0, x2: 3.0, y2: 3.0 };
    // overlap 1, union 4 + 4 - 1
    assert_eq!(gs_iou(a, b), 1.0 / 7.0);
    assert_eq!(gs_iou(a, a), 1.0);
    let far = GsBox { x1: 5.0, y1: 5.0, x2: 6.0, y2: 6.0 };
    assert_eq!(gs_iou(a, far), 0.0);
}

#[test]
fn imu_matches_library_processor() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { gs_imu_new(ptr::null(), &mut h) }, GsStatus::Ok);
    let mut reference = ImuProcessor::new(ImuParams::default()).unwrap();
    for n in 0..400 {
        let t = f64::from(n) / 100.0;
        let s = AccelSample::new(t, 0.1, 4.9 + (t * 7.0).sin(), 8.49 + (t * 3.0).cos());
        let mut p = GsVibrationPoint { t: 0.0, raw: 0.0, smoothed: 0.0 };
        assert_eq!(unsafe { gs_imu_push(h, s.t, s.ax, s.ay, s.az, &mut p) }, GsStatus::Ok);
        let r = reference.push(&s).unwrap();
        assert_eq!((p.t, p.raw, p.smoothed), (r.t, r.raw, r.smoothed));
    }
    let mut p = GsVibrationPoint { t: 0.0, raw: 0.0, smoothed: 0.0 };
    assert_eq!(unsafe { gs_imu_push(h, 1.0, 0.0, 0.0, 9.8, &mut p) }, GsStatus::InvalidArgument);
    assert!(last_error().contains("does not follow"), "{}", last_error());
    assert_eq!(unsafe { gs_imu_push(h, 9.0, f64::NAN, 0.0, 9.8, &mut p) }, GsStatus::InvalidArgument);
    unsafe { gs_imu_free(h) };

    let bad = GsImuParams { alpha: 1.5, ..gs_imu_params_default() };
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { gs_imu_new(&bad, &mut h) }, GsStatus::InvalidArgument);
    assert!(h.is_null());
}

#[test]
fn robust_depth_hand_trace() {
    // samples 998, 1000, 1002, 1004, 4000 mm and one missing return
    let frame = DepthFrame::new(6, 1, vec![998, 1000, 1002, 1004, 4000, 0], 0.001, 0).unwrap();
    let h = depth_handle(&frame);
    let points: Vec<u32> = (0..6).flat_map(|u| [u, 0]).collect();
    let (mut m, mut valid) = (0.0, 0);
    assert_eq!(unsafe { gs_robust_depth(h, points.as_ptr(), 6, 0.5, &mut m, &mut valid) }, GsStatus::Ok);
    // five valid, one dropped from each end: (1000 + 1002 + 1004) / 3 mm
    assert!((m - 1.002).abs() < 1e-12, "{m}");
    assert_eq!(valid, 5);

    let hole = [5u32, 0];
    assert_eq!(unsafe { gs_robust_depth(h, hole.as_ptr(), 1, 0.5, &mut m, ptr::null_mut()) }, GsStatus::Ok);
    assert!(m.is_nan());

    let outside = [6u32, 0];
    assert_eq!(unsafe { gs_robust_depth(h, outside.as_ptr(), 1, 0.5, &mut m, ptr::null_mut()) }, GsStatus::InvalidArgument);
    assert_eq!(unsafe { gs_robust_depth(h, points.as_ptr(), 6, 0.0, &mut m, ptr::null_mut()) }, GsStatus::InvalidArgument);
    assert_eq!(unsafe { gs_robust_depth(h, ptr::null(), 6, 0.5, &mut m, ptr::null_mut()) }, GsStatus::NullPointer);
    unsafe { gs_depth_free(h) };
}

#[test]
fn depth_frame_round_trip_and_size_checks() {
    let frame = DepthFrame::new(4, 3, (0..12).collect(), 0.001, 7).unwrap();
    let h = depth_handle(&frame);
    assert_eq!(depth_values(h), (4, 3, frame.values.clone()));
    let mut small = [0u16; 11];
    assert_eq!(unsafe { gs_depth_copy(h, small.as_mut_ptr(), small.len()) }, GsStatus::BufferTooSmall);
    assert!(last_error().contains("12"));
    unsafe { gs_depth_free(h) };

    let mut out = ptr::null_mut();
    let vals = [1u16; 4];
    assert_eq!(unsafe { gs_depth_new(2, 2, vals.as_ptr(), -1.0, 0, &mut out) }, GsStatus::InvalidArgument);
    assert_eq!(unsafe { gs_depth_new(2, 2, ptr::null(), 0.001, 0, &mut out) }, GsStatus::NullPointer);
    unsafe { gs_depth_free(ptr::null_mut()) };
}

#[test]
fn load_png_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut out = ptr::null_mut();
    let missing = CString::new(dir.path().join("none.png").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gs_depth_load_png(missing.as_ptr(), 0.001, 0, &mut out) }, GsStatus::Io);
    let junk_path = dir.path().join("junk.png");
    std::fs::write(&junk_path, b"junk").unwrap();
    let junk = CString::new(junk_path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gs_depth_load_png(junk.as_ptr(), 0.001, 0, &mut out) }, GsStatus::Format);

    let frame = DepthFrame::new(3, 2, vec![0, 1, 2, 3000, 4000, 65535], 0.001, 4).unwrap();
    let good_path = dir.path().join("d.png");
    groundsense::dataset::save_depth_frame(&frame, &good_path).unwrap();
    let good = CString::new(good_path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gs_depth_load_png(good.as_ptr(), 0.001, 4, &mut out) }, GsStatus::Ok);
    assert_eq!(depth_values(out).2, frame.values);
    unsafe { gs_depth_free(out) };
}

fn intrinsics(w: u32, h: u32) -> GsIntrinsics {
    GsIntrinsics {
        width: w,
        height: h,
        fx: 300.0,
        fy: 300.0,
        cx: (f64::from(w) - 1.0) / 2.0,
        cy: (f64::from(h) - 1.0) / 2.0,
    }
}

const IDENTITY: GsExtrinsics = GsExtrinsics {
    rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    translation: [0.0; 3],
};

#[test]
fn identity_alignment_keeps_every_pixel() {
    let values: Vec<u16> = (0..64 * 48).map(|i| 500 + (i % 97) as u16 * 10).collect();
    let frame = DepthFrame::new(64, 48, values.clone(), 0.001, 1).unwrap();
    let h = depth_handle(&frame);
    let intr = intrinsics(64, 48);
    let mut aligned = ptr::null_mut();
    assert_eq!(unsafe { gs_align_depth(h, &intr, &intr, &IDENTITY, &mut aligned) }, GsStatus::Ok);
    assert_eq!(depth_values(aligned), (64, 48, values));
    unsafe {
        gs_depth_free(aligned);
        gs_depth_free(h);
    }
}

#[test]
fn alignment_matches_library_for_offset_rig() {
    // a small rotation about y plus a baseline, row-major on the C side
    let (s, c) = 0.02f64.sin_cos();
    let ex = GsExtrinsics {
        rotation: [c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c],
        translation: [0.015, -0.002, 0.001],
    };
    let values: Vec<u16> = (0..80 * 60).map(|i| if i % 13 == 0 { 0 } else { 800 + (i % 211) as u16 * 7 }).collect();
    let frame = DepthFrame::new(80, 60, values, 0.001, 2).unwrap();
    let (di, ci) = (intrinsics(80, 60), GsIntrinsics { fx: 320.0, fy: 318.0, ..intrinsics(96, 72) });

    let reference = align_depth_to_color(
        &frame,
        &Intrinsics { width: 80, height: 60, fx: 300.0, fy: 300.0, cx: 39.5, cy: 29.5 },
        &Intrinsics { width: 96, height: 72, fx: 320.0, fy: 318.0, cx: 47.5, cy: 35.5 },
        &Extrinsics {
            rotation: nalgebra::Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            translation: nalgebra::Vector3::new(0.015, -0.002, 0.001),
        },
    )
    .unwrap();

    let h = depth_handle(&frame);
    let mut aligned = ptr::null_mut();
    assert_eq!(unsafe { gs_align_depth(h, &di, &ci, &ex, &mut aligned) }, GsStatus::Ok);
    assert_eq!(depth_values(aligned), (96, 72, reference.values));

    let wrong = intrinsics(81, 60);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gs_align_depth(h, &wrong, &ci, &ex, &mut out) }, GsStatus::InvalidArgument);
    unsafe {
        gs_depth_free(aligned);
        gs_depth_free(h);
    }
}

#[test]
fn fuse_matches_library_and_reads_planes() {
    let plane = DepthFrame::filled(160, 120, 3000, 0.001, 1);
    let h = depth_handle(&plane);
    let dets = [gs_det(1, 3, (40.0, 40.0, 80.0, 70.0)), gs_det(1, 0, (100.0, 10.0, 150.0, 60.0))];
    let mut out = [fused_at(0, 0.0); 2];
    let cfg = GsFusionConfig { rng_seed: 17, ..gs_fusion_config_default() };
    assert_eq!(unsafe { gs_fuse(h, dets.as_ptr(), 2, &cfg, out.as_mut_ptr(), 2) }, GsStatus::Ok);
    for (o, d) in out.iter().zip(&dets) {
        assert_eq!(o.detection, *d);
        assert_eq!(o.distance_m, 3.0);
        assert_eq!(o.valid_samples, 24);
    }
    unsafe { gs_depth_free(h) };

    // non-uniform depth: identical to the library call with the same seed
    let values: Vec<u16> = (0..160 * 120).map(|i| if i % 7 == 0 { 0 } else { 1000 + (i * 31 % 3001) as u16 }).collect();
    let frame = DepthFrame::new(160, 120, values, 0.001, 1).unwrap();
    let h = depth_handle(&frame);
    assert_eq!(unsafe { gs_fuse(h, dets.as_ptr(), 2, &cfg, out.as_mut_ptr(), 2) }, GsStatus::Ok);
    let core_dets: Vec<Detection> = dets
        .iter()
        .map(|d| Detection {
            frame_id: d.frame_id,
            category: groundsense::Category::from_id(i64::from(d.category)).unwrap(),
            confidence: d.confidence,
            bbox: BBox::new(d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2),
        })
        .collect();
    let core_cfg = FusionConfig { rng_seed: 17, ..FusionConfig::default() };
    let reference = fusion::fuse(&core_dets, &frame, &core_cfg);
    for (o, r) in out.iter().zip(&reference) {
        assert_eq!(Some(o.distance_m), r.distance_m);
        assert_eq!(o.valid_samples as usize, r.valid_samples);
    }

    assert_eq!(unsafe { gs_fuse(h, dets.as_ptr(), 2, &cfg, out.as_mut_ptr(), 1) }, GsStatus::BufferTooSmall);
    let bad = [gs_det(1, 9, (1.0, 1.0, 5.0, 5.0))];
    assert_eq!(unsafe { gs_fuse(h, bad.as_ptr(), 1, &cfg, out.as_mut_ptr(), 2) }, GsStatus::InvalidArgument);
    assert!(last_error().contains("unknown category id 9"));
    let zero = GsFusionConfig { n_samples: 0, ..cfg };
    assert_eq!(unsafe { gs_fuse(h, dets.as_ptr(), 2, &zero, out.as_mut_ptr(), 2) }, GsStatus::InvalidArgument);
    assert_eq!(unsafe { gs_fuse(h, ptr::null(), 0, ptr::null(), ptr::null_mut(), 0) }, GsStatus::Ok);
    unsafe { gs_depth_free(h) };
}

fn assess(h: *mut GsAlert, frame: u64, fused: &[GsFused], capacity: usize) -> (GsStatus, Vec<GsWarning>) {
    let mut out = vec![GsWarning { frame_id: 0, category: 0, distance_m: 0.0 }; capacity];
    let mut n = 0;
    let st = unsafe { gs_alert_assess(h, frame, fused.as_ptr(), fused.len(), out.as_mut_ptr(), capacity, &mut n) };
    out.truncate(if st == GsStatus::Ok { n } else { 0 });
    (st, out)
}

#[test]
fn alert_boundary_is_inclusive() {
    let cfg = GsAlertConfig { threshold_m: 4.0, clear_margin_m: 0.0, min_consecutive: 1 };
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { gs_alert_new(&cfg, &mut h) }, GsStatus::Ok);
    assert!(assess(h, 1, &[fused_at(3, 4.5)], GS_MAX_WARNINGS_PER_FRAME).1.is_empty());
    let (_, w) = assess(h, 2, &[fused_at(3, 4.0)], GS_MAX_WARNINGS_PER_FRAME);
    assert_eq!(w, [GsWarning { frame_id: 2, category: 3, distance_m: 4.0 }]);
    let (_, w) = assess(h, 3, &[fused_at(3, 3.5), fused_at(3, 2.5), fused_at(0, 1.0), fused_at(4, f64::NAN)], GS_MAX_WARNINGS_PER_FRAME);
    // nearest per category, category order, missing distances never warn
    assert_eq!(
        w,
        [
            GsWarning { frame_id: 3, category: 0, distance_m: 1.0 },
            GsWarning { frame_id: 3, category: 3, distance_m: 2.5 },
        ]
    );
    unsafe { gs_alert_free(h) };
}

#[test]
fn alert_state_advances_only_on_success() {
    let cfg = GsAlertConfig { threshold_m: 4.0, clear_margin_m: 0.0, min_consecutive: 2 };
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { gs_alert_new(&cfg, &mut h) }, GsStatus::Ok);
    let near = [fused_at(3, 3.0)];
    assert!(assess(h, 1, &near, 6).1.is_empty());
    // second consecutive frame would warn, but there is no room for the event
    let mut n = 0;
    let st = unsafe { gs_alert_assess(h, 2, near.as_ptr(), 1, ptr::null_mut(), 0, &mut n) };
    assert_eq!((st, n), (GsStatus::BufferTooSmall, 1));
    // retrying the same frame with room gives the same answer
    assert_eq!(assess(h, 2, &near, 6).1.len(), 1);

    assert_eq!(unsafe { gs_alert_reset(h) }, GsStatus::Ok);
    assert!(assess(h, 3, &near, 6).1.is_empty());
    unsafe { gs_alert_free(h) };

    let bad = GsAlertConfig { threshold_m: -1.0, ..cfg };
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { gs_alert_new(&bad, &mut h) }, GsStatus::InvalidArgument);
    assert_eq!(unsafe { gs_alert_reset(ptr::null_mut()) }, GsStatus::NullPointer);
    assert!(last_error().contains("tracker"));
}

#[test]
fn errors_are_per_thread() {
    assert_eq!(unsafe { gs_alert_reset(ptr::null_mut()) }, GsStatus::NullPointer);
    let here = last_error();
    std::thread::spawn(|| assert!(gs_last_error().is_null())).join().unwrap();
    assert_eq!(last_error(), here);
}
