mod common;

use std::fs;
use std::path::Path;

use groundsense::dataset::{self, ImageSizes};
use groundsense::{Category, DepthFrame, Error};
use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

fn repo_root() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap().parent().unwrap()
}

#[test]
fn depth_png_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<u16> = (0..64 * 48).map(|i| ((i as u32).wrapping_mul(2654435761) >> 16) as u16).collect();
    let frame = DepthFrame::new(64, 48, values, 0.001, 9).unwrap();
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    dataset::save_depth_frame(&frame, &a).unwrap();
    let loaded = dataset::load_depth_frame(&a, 0.001, 9).unwrap();
    assert_eq!(loaded, frame);
    dataset::save_depth_frame(&loaded, &b).unwrap();
    assert_eq!(dataset::load_depth_frame(&b, 0.001, 9).unwrap().values, frame.values);
}

#[test]
fn raw_unit_conversion() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.png");
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(3, 1, vec![1000, 0, 65535]).unwrap();
    img.save(&path).unwrap();
    let frame = dataset::load_depth_frame(&path, 0.001, 0).unwrap();
    assert_eq!(frame.meters(0, 0), Some(1.0));
    assert_eq!(frame.meters(1, 0), None);
    assert_eq!(frame.meters(2, 0), Some(65.535));
}

#[test]
fn wrong_depth_encoding_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let gray8 = dir.path().join("g8.png");
    GrayImage::from_pixel(4, 4, Luma([7])).save(&gray8).unwrap();
    let rgb = dir.path().join("rgb.png");
    RgbImage::from_pixel(4, 4, Rgb([1, 2, 3])).save(&rgb).unwrap();
    let junk = dir.path().join("junk.png");
    fs::write(&junk, b"not an image").unwrap();
    for p in [&gray8, &rgb, &junk] {
        let err = dataset::load_depth_frame(p, 0.001, 0).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{p:?}: {err}");
        assert_eq!(err.exit_code(), 2);
    }
    let missing = dataset::load_depth_frame(&dir.path().join("none.png"), 0.001, 0).unwrap_err();
    assert!(matches!(missing, Error::Io { .. }));
}

#[test]
fn annotation_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("12.txt"), "0 0.5 0.5 0.2 0.1\n3 0.25 0.25 0.1 0.1\n").unwrap();
    fs::write(dir.path().join("13.txt"), "").unwrap();
    fs::write(dir.path().join("notes.md"), "ignored").unwrap();
    let set = dataset::load_annotations(dir.path(), &ImageSizes::Uniform(640, 480)).unwrap();
    assert_eq!(set.image_ids, vec![12, 13]);
    assert_eq!(set.boxes.len(), 2);
    let b = &set.boxes[0].bbox;
    assert_eq!((b.x1, b.y1, b.x2, b.y2), (256.0, 216.0, 384.0, 264.0));
    assert_eq!(set.boxes[0].category, Category::ManholeCover);
    assert_eq!(set.boxes[1].image_id, 12);

    fs::write(dir.path().join("14.txt"), "2 0.5 1.5 0.1 0.1\n").unwrap();
    match dataset::load_annotations(dir.path(), &ImageSizes::Uniform(640, 480)).unwrap_err() {
        Error::Range { line, .. } => assert_eq!(line, 1),
        other => panic!("unexpected {other}"),
    }
    fs::write(dir.path().join("14.txt"), "\n6 0.5 0.5 0.1 0.1\n").unwrap();
    assert!(matches!(
        dataset::load_annotations(dir.path(), &ImageSizes::Uniform(640, 480)).unwrap_err(),
        Error::Category(6)
    ));
}

#[test]
fn imu_log_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("imu.csv");
    fs::write(&path, "t,ax,ay,az\n0.005,0.01,6.93,6.95\n0.010,0.02,6.90,6.97\n").unwrap();
    let samples = dataset::load_imu_log(&path).unwrap();
    assert_eq!(samples.len(), 2);
    assert_eq!((samples[0].t, samples[0].ax, samples[0].ay, samples[0].az), (0.005, 0.01, 6.93, 6.95));
    let copy = dir.path().join("copy.csv");
    dataset::write_imu_log(&samples, &copy).unwrap();
    assert_eq!(dataset::load_imu_log(&copy).unwrap(), samples);

    fs::write(&path, "t,ax,ay,az\n1.0,0,0,9.8\n0.9,0,0,9.8\n").unwrap();
    match dataset::load_imu_log(&path).unwrap_err() {
        Error::Order { line, .. } => assert_eq!(line, 3),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn manifest_missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::copy_fixture(dir.path());
    assert_eq!(dataset::load_manifest(&manifest).unwrap().frames.len(), 3);
    fs::remove_file(dir.path().join("depth/000002.png")).unwrap();
    let err = dataset::load_manifest(&manifest).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn manifest_rejects_unordered_frames() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::copy_fixture(dir.path());
    let text = fs::read_to_string(&manifest).unwrap().replace("id = 3", "id = 2");
    fs::write(&manifest, text).unwrap();
    assert!(matches!(dataset::load_manifest(&manifest).unwrap_err(), Error::Format { .. }));
}

#[test]
fn fixture_calibration_loads() {
    let calib = dataset::load_calibration(&common::fixture_dir().join("calib.txt")).unwrap();
    assert_eq!((calib.color.width, calib.color.height), (640, 480));
    assert_eq!(calib.depth_scale, 0.001);
    assert_eq!(calib.depth_to_color.translation.x, 0.015);
}

#[test]
fn shared_category_map_matches_builtin_ids() {
    let path = repo_root().join("data/categories.txt");
    let map = dataset::load_category_map(&path).unwrap();
    assert_eq!(map, Category::ALL.to_vec());

    let dir = tempfile::tempdir().unwrap();
    let swapped = dir.path().join("swapped.txt");
    fs::write(&swapped, dataset::format_category_map().replace("3 pothole", "3 pine_cone")).unwrap();
    assert!(matches!(dataset::load_category_map(&swapped).unwrap_err(), Error::Parse { line: 4, .. }));
    let partial = dir.path().join("partial.txt");
    fs::write(&partial, "0 manhole_cover\n").unwrap();
    assert!(dataset::load_category_map(&partial).is_err());
}
