//! On-disk formats through the public API.

use autolabel::error::Error;
use autolabel::geometry::{Point3, PointCloud, Pose};
use autolabel::io::{load_cloud, load_dataset, load_masks, load_pose, save_cloud, save_masks, save_pose};
use autolabel::lift::Mask2D;
use autolabel::synth::{generate, write_scene, SceneSpec};

#[test]
fn single_record_and_empty_clouds() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.bin");
    let bytes: Vec<u8> = [1.0f32, 2.0, 3.0].iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(&one, bytes).unwrap();
    let c = load_cloud(&one).unwrap();
    assert_eq!(c.points, vec![Point3::new(1.0, 2.0, 3.0)]);

    let empty = dir.path().join("empty.bin");
    std::fs::write(&empty, []).unwrap();
    assert!(load_cloud(&empty).unwrap().is_empty());
}

#[test]
fn intensity_is_ignored_and_nan_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.xyzi");
    let recs = [[1.0f32, 2.0, 3.0, 9.0], [4.0, 5.0, 6.0, 7.0]];
    std::fs::write(
        &p,
        recs.iter().flatten().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>(),
    )
    .unwrap();
    assert_eq!(load_cloud(&p).unwrap().points[1], Point3::new(4.0, 5.0, 6.0));

    let bad = dir.path().join("nan.bin");
    let recs = [[0.0f32, 0.0, 0.0], [1.0, f32::NAN, 0.0]];
    std::fs::write(
        &bad,
        recs.iter().flatten().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>(),
    )
    .unwrap();
    assert!(matches!(load_cloud(&bad), Err(Error::NonFinitePoint { index: 1 })));
}

#[test]
fn csv_keeps_scores_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    let cloud = PointCloud::with_scores(
        vec![Point3::new(0.1, -2.5e-7, 1e6), Point3::new(3.0, 4.0, 5.0)],
        vec![0.123456789012345, 1.0],
    )
    .unwrap();
    save_cloud(&p, &cloud).unwrap();
    assert_eq!(load_cloud(&p).unwrap(), cloud);
}

#[test]
fn pose_and_masks_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pose = Pose::from_yaw(0.3, nalgebra::Vector3::new(1.5, -2.0, 0.25));
    let pp = dir.path().join("pose.json");
    save_pose(&pp, &pose).unwrap();
    assert_eq!(load_pose(&pp).unwrap(), pose);

    let masks = vec![
        Mask2D::from_rle(8, 4, &[0, 3, 10, 2])
            .unwrap()
            .with_meta(Some("car".into()), Some(0.7)),
        Mask2D::from_fn(8, 4, |u, v| u == v).unwrap(),
    ];
    let mp = dir.path().join("masks.json");
    save_masks(&mp, 8, 4, &masks).unwrap();
    assert_eq!(load_masks(&mp).unwrap(), masks);
}

#[test]
fn written_scene_loads_with_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SceneSpec {
        frames: 2,
        eval_frames: 1,
        ..SceneSpec::default()
    };
    let scene = generate(&spec).unwrap();
    let ds = load_dataset(&write_scene(&scene, dir.path()).unwrap()).unwrap();
    assert_eq!(ds.frames.len(), 2);
    for (loaded, made) in ds.frames.iter().zip(&scene.frames) {
        assert_eq!(loaded, &made.frame_data());
        assert_eq!(ds.ground_truth_of(made.id).len(), made.ground_truth().len());
    }
}

#[test]
fn manifest_with_missing_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SceneSpec {
        frames: 1,
        eval_frames: 0,
        ..SceneSpec::default()
    };
    let manifest = write_scene(&generate(&spec).unwrap(), dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("cameras/f0000.json")).unwrap();
    assert!(matches!(load_dataset(&manifest), Err(Error::Validation(_))));
}
