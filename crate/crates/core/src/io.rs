//! On-disk formats and dataset ingestion.
//!
//! | data | format |
//! |------|--------|
//! | point cloud | `.bin`: little-endian f32 `x y z` records; `.xyzi`: f32 `x y z i` (i ignored); `.csv`: header `x,y,z[,score]` |
//! | pose | JSON 4×4 row-major matrix, sensor to world |
//! | camera | JSON `{intrinsic: 3×3, extrinsic: 4×4, width, height}` |
//! | masks | JSON `{image_w, image_h, masks: [{rle, label?, confidence?}]}` |
//! | labels | JSON lines of [`LabelRecord`] |
//! | manifest | JSON [`Manifest`] |
//!
//! Every writer goes through [`write_atomic`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{Label, LabelRecord};
use crate::geometry::{CameraModel, Point3, PointCloud, Pose};
use crate::lift::Mask2D;
use crate::synth::Split;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    Xyzi,
    Csv,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => Ok(CloudFormat::Xyz),
            Some("xyzi") => Ok(CloudFormat::Xyzi),
            Some("csv") => Ok(CloudFormat::Csv),
            _ => Err(Error::Validation(format!(
                "{}: unknown cloud extension (expected .bin, .xyzi or .csv)",
                path.display()
            ))),
        }
    }

    fn record_len(self) -> usize {
        match self {
            CloudFormat::Xyz => 12,
            CloudFormat::Xyzi => 16,
            CloudFormat::Csv => 0,
        }
    }
}

/// Write `bytes` to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let format = CloudFormat::from_path(path)?;
    parse_cloud(&read_bytes(path)?, format, path)
}

/// Parse cloud bytes; `path` only labels errors.
pub fn parse_cloud(bytes: &[u8], format: CloudFormat, path: &Path) -> Result<PointCloud> {
    let cloud = match format {
        CloudFormat::Csv => parse_csv(bytes, path)?,
        _ => {
            let rec = format.record_len();
            if !bytes.len().is_multiple_of(rec) {
                return Err(Error::Parse {
                    path: path.into(),
                    offset: (bytes.len() - bytes.len() % rec) as u64,
                    message: format!(
                        "trailing partial record of {} bytes (records are {rec})",
                        bytes.len() % rec
                    ),
                });
            }
            let f = |c: &[u8]| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
            PointCloud::new(
                bytes
                    .chunks_exact(rec)
                    .map(|c| Point3::new(f(&c[0..4]), f(&c[4..8]), f(&c[8..12])))
                    .collect(),
            )
        }
    };
    cloud.validate()?;
    Ok(cloud)
}

fn parse_csv(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.into(),
        offset: e.valid_up_to() as u64,
        message: "invalid UTF-8".into(),
    })?;
    let mut offset = 0u64;
    let mut lines = text.split_inclusive('\n');
    let Some(header) = lines.next() else {
        return Ok(PointCloud::default());
    };
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let with_score = match cols.as_slice() {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "score"] => true,
        _ => {
            return Err(Error::Parse {
                path: path.into(),
                offset: 0,
                message: format!("header must be x,y,z or x,y,z,score, got {:?}", header.trim()),
            })
        }
    };
    offset += header.len() as u64;
    let mut points = Vec::new();
    let mut scores = Vec::new();
    for line in lines {
        let here = offset;
        offset += line.len() as u64;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.into(),
                offset: here,
                message: format!("bad number: {e}"),
            })?;
        if vals.len() != cols.len() {
            return Err(Error::Parse {
                path: path.into(),
                offset: here,
                message: format!("expected {} fields, got {}", cols.len(), vals.len()),
            });
        }
        points.push(Point3::new(vals[0], vals[1], vals[2]));
        if with_score {
            scores.push(vals[3]);
        }
    }
    if with_score {
        PointCloud::with_scores(points, scores)
    } else {
        Ok(PointCloud::new(points))
    }
}

/// Binary formats store f32, so coordinates are rounded; CSV is exact.
pub fn encode_cloud(cloud: &PointCloud, format: CloudFormat) -> Result<Vec<u8>> {
    cloud.validate()?;
    Ok(match format {
        CloudFormat::Csv => {
            let mut out = String::with_capacity(cloud.len() * 40);
            let scores = cloud.scores.as_deref();
            out.push_str(if scores.is_some() { "x,y,z,score\n" } else { "x,y,z\n" });
            for (i, p) in cloud.points.iter().enumerate() {
                match scores {
                    Some(s) => out.push_str(&format!("{},{},{},{}\n", p.x, p.y, p.z, s[i])),
                    None => out.push_str(&format!("{},{},{}\n", p.x, p.y, p.z)),
                }
            }
            out.into_bytes()
        }
        _ => {
            let mut out = Vec::with_capacity(cloud.len() * format.record_len());
            for p in &cloud.points {
                for v in [p.x, p.y, p.z] {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
                if format == CloudFormat::Xyzi {
                    out.extend_from_slice(&0f32.to_le_bytes());
                }
            }
            out
        }
    })
}

pub fn save_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_atomic(path, &encode_cloud(cloud, CloudFormat::from_path(path)?)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| Error::json(path, e))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::json("<memory>", e))?;
    v.push(b'\n');
    Ok(v)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_pretty(value)?)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = read_bytes(path)?;
    let mut out = Vec::new();
    let mut offset = 0usize;
    for line in bytes.split_inclusive(|&b| b == b'\n') {
        let here = offset;
        offset += line.len();
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        out.push(serde_json::from_slice(line).map_err(|e| Error::Parse {
            path: path.into(),
            offset: here as u64,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn encode_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::json("<memory>", e))?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, &encode_jsonl(items)?)
}

pub fn load_labels(path: &Path) -> Result<Vec<Label>> {
    read_jsonl::<LabelRecord>(path)?
        .into_iter()
        .map(Label::try_from)
        .collect()
}

pub fn save_labels(path: &Path, labels: &[Label]) -> Result<()> {
    let records: Vec<LabelRecord> = labels.iter().map(LabelRecord::from).collect();
    write_jsonl(path, &records)
}

/// Provenance written next to an output that cannot carry it inline.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    path.with_file_name(format!("{name}.meta.json"))
}

pub fn write_sidecar<T: Serialize>(path: &Path, meta: &T) -> Result<()> {
    write_json(&sidecar_path(path), meta)
}

pub fn load_pose(path: &Path) -> Result<Pose> {
    Pose::from_rows(&read_json::<[[f64; 4]; 4]>(path)?)
}

pub fn save_pose(path: &Path, pose: &Pose) -> Result<()> {
    write_json(path, &pose.to_rows())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFile {
    pub intrinsic: [[f64; 3]; 3],
    pub extrinsic: [[f64; 4]; 4],
    pub width: u32,
    pub height: u32,
}

impl From<&CameraModel> for CameraFile {
    fn from(c: &CameraModel) -> Self {
        let k = c.intrinsic;
        Self {
            intrinsic: std::array::from_fn(|r| std::array::from_fn(|col| k[(r, col)])),
            extrinsic: c.extrinsic.to_rows(),
            width: c.width,
            height: c.height,
        }
    }
}

impl TryFrom<CameraFile> for CameraModel {
    type Error = Error;

    fn try_from(f: CameraFile) -> Result<Self> {
        let k = Matrix3::from_fn(|r, c| f.intrinsic[r][c]);
        CameraModel::new(k, Pose::from_rows(&f.extrinsic)?, f.width, f.height)
    }
}

pub fn load_camera(path: &Path) -> Result<CameraModel> {
    read_json::<CameraFile>(path)?.try_into()
}

pub fn save_camera(path: &Path, camera: &CameraModel) -> Result<()> {
    write_json(path, &CameraFile::from(camera))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRecord {
    pub rle: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskFile {
    pub image_w: u32,
    pub image_h: u32,
    pub masks: Vec<MaskRecord>,
}

pub fn load_masks(path: &Path) -> Result<Vec<Mask2D>> {
    let f: MaskFile = read_json(path)?;
    f.masks
        .into_iter()
        .map(|m| Ok(Mask2D::from_rle(f.image_w, f.image_h, &m.rle)?.with_meta(m.label, m.confidence)))
        .collect()
}

pub fn save_masks(path: &Path, width: u32, height: u32, masks: &[Mask2D]) -> Result<()> {
    let file = MaskFile {
        image_w: width,
        image_h: height,
        masks: masks
            .iter()
            .map(|m| MaskRecord {
                rle: m.to_rle(),
                label: m.label.clone(),
                confidence: m.confidence,
            })
            .collect(),
    };
    write_json(path, &file)
}

/// One traversal of a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanEntry {
    pub cloud: PathBuf,
    pub pose: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub id: u32,
    pub split: Split,
    /// The first scan is the current traversal; the rest are references.
    pub scans: Vec<ScanEntry>,
    pub camera: PathBuf,
    pub masks: PathBuf,
}

/// Dataset index. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub frames: Vec<FrameEntry>,
    /// JSON lines of labels with `source = "truth"`, covering all frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

impl Manifest {
    pub fn validate(&self, root: &Path) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.frames {
            if !seen.insert(f.id) {
                return Err(Error::Validation(format!("manifest lists frame {} twice", f.id)));
            }
            if f.scans.len() < 2 {
                return Err(Error::Validation(format!(
                    "frame {} has {} traversals, need at least 2",
                    f.id,
                    f.scans.len()
                )));
            }
            let paths = f
                .scans
                .iter()
                .flat_map(|s| [&s.cloud, &s.pose])
                .chain([&f.camera, &f.masks]);
            for p in paths.chain(self.ground_truth.iter()) {
                let full = root.join(p);
                if !full.is_file() {
                    return Err(Error::Validation(format!(
                        "frame {}: {} does not exist",
                        f.id,
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanData {
    pub cloud: PointCloud,
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameData {
    pub id: u32,
    pub split: Split,
    pub scans: Vec<ScanData>,
    pub camera: CameraModel,
    pub masks: Vec<Mask2D>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub frames: Vec<FrameData>,
    pub ground_truth: Vec<Label>,
}

impl Dataset {
    pub fn frame_ids(&self, split: Split) -> Vec<u32> {
        self.frames.iter().filter(|f| f.split == split).map(|f| f.id).collect()
    }

    pub fn ground_truth_of(&self, frame: u32) -> Vec<Label> {
        self.ground_truth.iter().filter(|l| l.frame == frame).copied().collect()
    }
}

pub fn load_manifest(path: &Path) -> Result<(PathBuf, Manifest)> {
    let manifest: Manifest = read_json(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate(&root)?;
    Ok((root, manifest))
}

/// Load every file the manifest names. Frames come back in manifest order.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let (root, manifest) = load_manifest(manifest_path)?;
    let frames = manifest
        .frames
        .par_iter()
        .map(|f| {
            let scans = f
                .scans
                .iter()
                .map(|s| {
                    Ok(ScanData {
                        cloud: load_cloud(&root.join(&s.cloud))?,
                        pose: load_pose(&root.join(&s.pose))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameData {
                id: f.id,
                split: f.split,
                scans,
                camera: load_camera(&root.join(&f.camera))?,
                masks: load_masks(&root.join(&f.masks))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ground_truth = match &manifest.ground_truth {
        Some(p) => load_labels(&root.join(p))?,
        None => Vec::new(),
    };
    Ok(Dataset {
        root,
        frames,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> PathBuf {
        PathBuf::from(s)
    }

    #[test]
    fn single_record_and_empty() {
        let mut bytes = Vec::new();
        for v in [1.0f32, -2.5, 3.25] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let c = parse_cloud(&bytes, CloudFormat::Xyz, &p("a.bin")).unwrap();
        assert_eq!(c.points, vec![Point3::new(1.0, -2.5, 3.25)]);
        assert!(parse_cloud(&[], CloudFormat::Xyz, &p("a.bin")).unwrap().is_empty());
        assert!(parse_cloud(b"", CloudFormat::Csv, &p("a.csv")).unwrap().is_empty());
    }

    #[test]
    fn intensity_is_ignored() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 99.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let c = parse_cloud(&bytes, CloudFormat::Xyzi, &p("a.xyzi")).unwrap();
        assert_eq!(c.points, vec![Point3::new(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn malformed_length_reports_offset() {
        let bytes = vec![0u8; 12 * 3 + 5];
        match parse_cloud(&bytes, CloudFormat::Xyz, &p("a.bin")) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 36),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nan_reports_index() {
        let mut bytes = Vec::new();
        for v in [0.0f32, 0.0, 0.0, 1.0, f32::NAN, 1.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(
            parse_cloud(&bytes, CloudFormat::Xyz, &p("a.bin")),
            Err(Error::NonFinitePoint { index: 1 })
        ));
        assert!(matches!(
            parse_cloud(b"x,y,z\n1,2,3\n1,inf,3\n", CloudFormat::Csv, &p("a.csv")),
            Err(Error::NonFinitePoint { index: 1 })
        ));
    }

    #[test]
    fn csv_errors_point_at_the_line() {
        let text = b"x,y,z\n1,2,3\n1,2\n";
        match parse_cloud(text, CloudFormat::Csv, &p("a.csv")) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("{other:?}"),
        }
        assert!(parse_cloud(b"a,b,c\n", CloudFormat::Csv, &p("a.csv")).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.json");
        write_json(&path, &[1, 2, 3]).unwrap();
        let names: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![std::ffi::OsString::from("out.json")]);
        assert_eq!(read_json::<Vec<i32>>(&path).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn camera_pose_and_mask_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cam = crate::synth::CameraSpec::default().model().unwrap();
        save_camera(&dir.path().join("c.json"), &cam).unwrap();
        assert_eq!(load_camera(&dir.path().join("c.json")).unwrap(), cam);

        let pose = Pose::from_yaw(0.3, nalgebra::Vector3::new(1.0, 2.0, 3.0));
        save_pose(&dir.path().join("p.json"), &pose).unwrap();
        let back = load_pose(&dir.path().join("p.json")).unwrap();
        assert_eq!(back.to_rows(), pose.to_rows());

        let m = Mask2D::from_rle(10, 4, &[3, 4, 20, 2])
            .unwrap()
            .with_meta(Some("car".into()), Some(0.9));
        save_masks(&dir.path().join("m.json"), 10, 4, std::slice::from_ref(&m)).unwrap();
        assert_eq!(load_masks(&dir.path().join("m.json")).unwrap(), vec![m]);
    }

    #[test]
    fn manifest_rejects_single_traversal_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let entry = |n| ScanEntry {
            cloud: p(&format!("c{n}.bin")),
            pose: p(&format!("p{n}.json")),
        };
        let mut m = Manifest {
            frames: vec![FrameEntry {
                id: 0,
                split: Split::Train,
                scans: vec![entry(0)],
                camera: p("cam.json"),
                masks: p("m.json"),
            }],
            ground_truth: None,
        };
        assert!(m.validate(dir.path()).unwrap_err().to_string().contains("at least 2"));
        m.frames[0].scans.push(entry(1));
        assert!(m
            .validate(dir.path())
            .unwrap_err()
            .to_string()
            .contains("does not exist"));
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(
            pts in prop::collection::vec(prop::array::uniform3(-1e4f32..1e4f32), 0..200),
        ) {
            let cloud = PointCloud::new(pts.iter().map(|a| Point3::new(a[0] as f64, a[1] as f64, a[2] as f64)).collect());
            for (fmt, name) in [(CloudFormat::Xyz, "a.bin"), (CloudFormat::Xyzi, "a.xyzi"), (CloudFormat::Csv, "a.csv")] {
                let bytes = encode_cloud(&cloud, fmt).unwrap();
                let back = parse_cloud(&bytes, fmt, &p(name)).unwrap();
                prop_assert_eq!(&back.points, &cloud.points);
            }
        }

        #[test]
        fn csv_keeps_f64_scores(
            rows in prop::collection::vec((prop::array::uniform3(-1e6f64..1e6), 0.0f64..1.0), 1..50),
        ) {
            let cloud = PointCloud::with_scores(
                rows.iter().map(|(a, _)| Point3::new(a[0], a[1], a[2])).collect(),
                rows.iter().map(|r| r.1).collect(),
            ).unwrap();
            let back = parse_cloud(&encode_cloud(&cloud, CloudFormat::Csv).unwrap(), CloudFormat::Csv, &p("a.csv")).unwrap();
            prop_assert_eq!(back, cloud);
        }
    }
}
