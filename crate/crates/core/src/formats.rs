//! On-disk formats: `.traj` and `.obs` JSON lines, `.jsq` binary joints with
//! a JSON sidecar, scene bundles, and motion corpora. Every file carries a
//! format name and version; readers reject anything they do not know.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::depth::{CameraIntrinsics, WeakPerspectiveObservation};
use crate::geometry::{RigidTransform, Rotation3, Vec3};
use crate::joints::{CoordinateFrame, JointSequence, Pose, JOINT_NAMES, NUM_JOINTS};
use crate::shots::ShotManifest;
use crate::sim::{EhpsMode, SceneConfig, VONoiseModel};
use crate::trajectory::{ScaleStatus, Trajectory};
use crate::velocimeter::MotionCorpusEntry;

pub const FORMAT_VERSION: u32 = 1;
pub const TRAJ_FORMAT: &str = "worldtraj-traj";
pub const OBS_FORMAT: &str = "worldtraj-obs";
pub const JSQ_FORMAT: &str = "worldtraj-jsq";
pub const SCENE_FORMAT: &str = "worldtraj-scene";
pub const SHOTS_FORMAT: &str = "worldtraj-shots";
pub const CORPUS_FORMAT: &str = "worldtraj-corpus";
pub const VELOCITY_FORMAT: &str = "worldtraj-vel";
pub const JSQ_MAGIC: [u8; 4] = *b"WJSQ";
pub const JSQ_HEADER_LEN: usize = 28;

pub const SCENE_FILE: &str = "scene.json";
pub const GT_HUMAN_FILE: &str = "gt_human.traj";
pub const GT_CAMERA_FILE: &str = "gt_camera.traj";
pub const JOINTS_FILE: &str = "joints.jsq";
pub const OBSERVATIONS_FILE: &str = "observations.obs";
pub const VO_FILE: &str = "vo.traj";
pub const SHOTS_FILE: &str = "shots.json";
pub const CORPUS_FILE: &str = "corpus.json";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("{path}: expected format {expected}, found {found}")]
    WrongFormat {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{path}: unsupported {format} version {found} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { path: PathBuf, format: String, found: u32 },
    #[error("{path}: checksum mismatch")]
    ChecksumMismatch { path: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, line: usize, reason: impl ToString) -> FormatError {
    FormatError::Malformed {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: T,
}

fn check_header(path: &Path, format: &str, version: u32, expected: &'static str) -> Result<(), FormatError> {
    if format != expected {
        return Err(FormatError::WrongFormat {
            path: path.to_path_buf(),
            expected,
            found: format.to_string(),
        });
    }
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion {
            path: path.to_path_buf(),
            format: expected.to_string(),
            found: version,
        });
    }
    Ok(())
}

fn to_json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn parse_json<T: DeserializeOwned>(path: &Path, line: usize, text: &str) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|e| malformed(path, line, e))
}

/// JSON-lines reader: returns the parsed header and the remaining lines
/// with their 1-based line numbers.
fn read_jsonl<H: DeserializeOwned>(
    path: &Path,
    expected: &'static str,
) -> Result<(H, Vec<(usize, String)>), FormatError> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| malformed(path, 1, "empty file"))?;
    let probe: Header<serde_json::Value> = parse_json(path, 1, first)?;
    check_header(path, &probe.format, probe.version, expected)?;
    let header: Header<H> = parse_json(path, 1, first)?;
    Ok((header.body, lines.map(|(i, l)| (i + 1, l.to_string())).collect()))
}

fn check_count(path: &Path, declared: usize, found: usize) -> Result<(), FormatError> {
    if declared != found {
        return Err(malformed(path, 1, format!("header declares {declared} frames, found {found}")));
    }
    Ok(())
}

fn check_index(path: &Path, line: usize, expected: usize, found: usize) -> Result<(), FormatError> {
    if expected != found {
        return Err(malformed(path, line, format!("frame_index {found}, expected {expected}")));
    }
    Ok(())
}

fn finite3(path: &Path, line: usize, v: [f64; 3]) -> Result<Vec3, FormatError> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(Vec3::new(v[0], v[1], v[2]))
    } else {
        Err(malformed(path, line, "non-finite value"))
    }
}

/// Pose as translation plus axis-angle rotation (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub translation: [f64; 3],
    pub rotation: [f64; 3],
}

impl From<&RigidTransform> for PoseRecord {
    fn from(t: &RigidTransform) -> Self {
        let r = t.rotation.to_axis_angle();
        Self {
            translation: [t.translation.x, t.translation.y, t.translation.z],
            rotation: [r.x, r.y, r.z],
        }
    }
}

impl PoseRecord {
    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::new(Rotation3::from_axis_angle(&Vec3::from(self.rotation)), Vec3::from(self.translation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TrajHeader {
    scale_status: ScaleStatus,
    frame_rate: f64,
    frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TrajLine {
    frame_index: usize,
    translation: [f64; 3],
    rotation: [f64; 3],
}

pub fn trajectory_to_string(t: &Trajectory) -> String {
    let mut out = to_json_line(&Header {
        format: TRAJ_FORMAT.into(),
        version: FORMAT_VERSION,
        body: TrajHeader {
            scale_status: t.scale_status,
            frame_rate: t.frame_rate,
            frames: t.len(),
        },
    });
    out.push('\n');
    for (frame_index, p) in t.poses().iter().enumerate() {
        let r = PoseRecord::from(p);
        out.push_str(&to_json_line(&TrajLine {
            frame_index,
            translation: r.translation,
            rotation: r.rotation,
        }));
        out.push('\n');
    }
    out
}

pub fn write_trajectory(path: &Path, t: &Trajectory) -> Result<(), FormatError> {
    write_file(path, trajectory_to_string(t).as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, FormatError> {
    let (header, lines): (TrajHeader, _) = read_jsonl(path, TRAJ_FORMAT)?;
    check_count(path, header.frames, lines.len())?;
    let mut poses = Vec::with_capacity(lines.len());
    for (i, (n, l)) in lines.iter().enumerate() {
        let rec: TrajLine = parse_json(path, *n, l)?;
        check_index(path, *n, i, rec.frame_index)?;
        let t = finite3(path, *n, rec.translation)?;
        let r = finite3(path, *n, rec.rotation)?;
        poses.push(RigidTransform::new(Rotation3::from_axis_angle(&r), t));
    }
    Trajectory::new(poses, header.scale_status, header.frame_rate).map_err(|e| malformed(path, 1, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ObsHeader {
    frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ObsLine {
    frame_index: usize,
    scale: f64,
    t_x: f64,
    t_y: f64,
    global_orientation: [f64; 3],
    joints: Vec<[f64; 3]>,
}

pub fn write_observations(path: &Path, obs: &[WeakPerspectiveObservation]) -> Result<(), FormatError> {
    let mut out = to_json_line(&Header {
        format: OBS_FORMAT.into(),
        version: FORMAT_VERSION,
        body: ObsHeader { frames: obs.len() },
    });
    out.push('\n');
    for (frame_index, o) in obs.iter().enumerate() {
        let r = o.global_orientation.to_axis_angle();
        out.push_str(&to_json_line(&ObsLine {
            frame_index,
            scale: o.scale,
            t_x: o.t_x,
            t_y: o.t_y,
            global_orientation: [r.x, r.y, r.z],
            joints: crate::joints::pose_to_rows(&o.joints_camera),
        }));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn read_observations(path: &Path) -> Result<Vec<WeakPerspectiveObservation>, FormatError> {
    let (header, lines): (ObsHeader, _) = read_jsonl(path, OBS_FORMAT)?;
    check_count(path, header.frames, lines.len())?;
    lines
        .iter()
        .enumerate()
        .map(|(i, (n, l))| {
            let rec: ObsLine = parse_json(path, *n, l)?;
            check_index(path, *n, i, rec.frame_index)?;
            let joints = crate::joints::pose_from_rows(&rec.joints)
                .ok_or_else(|| malformed(path, *n, format!("expected {NUM_JOINTS} joints, got {}", rec.joints.len())))?;
            if !(rec.scale.is_finite() && rec.t_x.is_finite() && rec.t_y.is_finite())
                || joints.iter().any(|p| !p.iter().all(|c| c.is_finite()))
            {
                return Err(malformed(path, *n, "non-finite value"));
            }
            Ok(WeakPerspectiveObservation {
                scale: rec.scale,
                t_x: rec.t_x,
                t_y: rec.t_y,
                global_orientation: Rotation3::from_axis_angle(&finite3(path, *n, rec.global_orientation)?),
                joints_camera: joints,
            })
        })
        .collect()
}

fn frame_code(f: CoordinateFrame) -> u8 {
    match f {
        CoordinateFrame::Camera => 0,
        CoordinateFrame::World => 1,
        CoordinateFrame::Canonical => 2,
    }
}

fn frame_from_code(c: u8) -> Option<CoordinateFrame> {
    match c {
        0 => Some(CoordinateFrame::Camera),
        1 => Some(CoordinateFrame::World),
        2 => Some(CoordinateFrame::Canonical),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsqSidecar {
    pub format: String,
    pub version: u32,
    pub frames: usize,
    pub frame_rate: f64,
    pub coordinate_frame: CoordinateFrame,
    pub joint_names: Vec<String>,
    /// SHA-256 of the whole `.jsq` file.
    pub sha256: String,
}

pub fn jsq_to_bytes(seq: &JointSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(JSQ_HEADER_LEN + seq.len() * NUM_JOINTS * 24);
    out.extend_from_slice(&JSQ_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(NUM_JOINTS as u32).to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&seq.frame_rate().to_le_bytes());
    out.extend_from_slice(&[frame_code(seq.coordinate_frame()), 0, 0, 0]);
    for pose in seq.frames() {
        for p in pose {
            for c in p.iter() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

pub fn jsq_from_bytes(path: &Path, b: &[u8]) -> Result<JointSequence, FormatError> {
    let bad = |reason: String| malformed(path, 0, reason);
    if b.len() < JSQ_HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", b.len())));
    }
    if b[..4] != JSQ_MAGIC {
        return Err(FormatError::WrongFormat {
            path: path.to_path_buf(),
            expected: JSQ_FORMAT,
            found: String::from_utf8_lossy(&b[..4]).into_owned(),
        });
    }
    let version = u32_at(b, 4);
    check_header(path, JSQ_FORMAT, version, JSQ_FORMAT)?;
    let joints = u32_at(b, 8) as usize;
    if joints != NUM_JOINTS {
        return Err(bad(format!("{joints} joints per frame, expected {NUM_JOINTS}")));
    }
    let frames = u32_at(b, 12) as usize;
    let frame_rate = f64_at(b, 16);
    let coordinate_frame = frame_from_code(b[24]).ok_or_else(|| bad(format!("unknown coordinate frame code {}", b[24])))?;
    let expected = JSQ_HEADER_LEN + frames * NUM_JOINTS * 24;
    if b.len() != expected {
        return Err(bad(format!("{} bytes, expected {expected}", b.len())));
    }
    let mut poses = Vec::with_capacity(frames);
    let mut at = JSQ_HEADER_LEN;
    for _ in 0..frames {
        let pose: Pose = std::array::from_fn(|_| {
            let p = Vec3::new(f64_at(b, at), f64_at(b, at + 8), f64_at(b, at + 16));
            at += 24;
            p
        });
        poses.push(pose);
    }
    JointSequence::new(poses, frame_rate, coordinate_frame).map_err(|e| bad(e.to_string()))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `path` and its `path.json` sidecar.
pub fn write_joint_sequence(path: &Path, seq: &JointSequence) -> Result<(), FormatError> {
    let bytes = jsq_to_bytes(seq);
    let sidecar = JsqSidecar {
        format: JSQ_FORMAT.into(),
        version: FORMAT_VERSION,
        frames: seq.len(),
        frame_rate: seq.frame_rate(),
        coordinate_frame: seq.coordinate_frame(),
        joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        sha256: sha256_hex(&bytes),
    };
    write_file(path, &bytes)?;
    write_file(
        &sidecar_path(path),
        (serde_json::to_string_pretty(&sidecar).expect("plain data") + "\n").as_bytes(),
    )
}

pub fn read_joint_sequence(path: &Path) -> Result<JointSequence, FormatError> {
    let bytes = read_file(path)?;
    let side_path = sidecar_path(path);
    let sidecar: JsqSidecar = parse_json(&side_path, 1, &read_text(&side_path)?)?;
    check_header(&side_path, &sidecar.format, sidecar.version, JSQ_FORMAT)?;
    if sidecar.sha256 != sha256_hex(&bytes) {
        return Err(FormatError::ChecksumMismatch { path: path.to_path_buf() });
    }
    let seq = jsq_from_bytes(path, &bytes)?;
    if seq.len() != sidecar.frames || seq.coordinate_frame() != sidecar.coordinate_frame {
        return Err(malformed(&side_path, 1, "sidecar disagrees with the binary header"));
    }
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhpsSettings {
    pub joint_noise_sigma: f64,
    pub mode: EhpsMode,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoSettings {
    pub noise: VONoiseModel,
    pub seed: u64,
}

/// Contents of `scene.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub seed: u64,
    pub frames: usize,
    pub frame_rate: f64,
    pub config: SceneConfig,
    pub intrinsics: CameraIntrinsics,
    pub world_from_camera0: PoseRecord,
    pub ehps: EhpsSettings,
    pub vo: VoSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ShotsFile {
    manifest: Option<ShotManifest>,
}

/// A simulated scene with its ground truth and the inputs a pipeline sees.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub meta: SceneMeta,
    pub gt_human: Trajectory,
    pub gt_camera: Trajectory,
    /// World-frame ground-truth joints.
    pub joints: JointSequence,
    pub observations: Vec<WeakPerspectiveObservation>,
    pub vo: Trajectory,
    pub manifest: Option<ShotManifest>,
}

impl SceneBundle {
    /// Builds the scene and simulates EHPS observations and VO for it.
    pub fn simulate(config: &SceneConfig, ehps: EhpsSettings, vo: VoSettings) -> Result<Self, crate::sim::SimError> {
        let scene = crate::sim::build_scene(config)?;
        let observations = crate::sim::simulate_ehps(&scene, ehps.joint_noise_sigma, ehps.seed, ehps.mode)?;
        let vo_traj = crate::sim::simulate_vo(&scene.gt_camera, &vo.noise, vo.seed)?;
        Ok(Self {
            meta: SceneMeta {
                seed: config.seed,
                frames: scene.len(),
                frame_rate: scene.gt_camera.frame_rate,
                config: config.clone(),
                intrinsics: scene.intrinsics,
                world_from_camera0: PoseRecord::from(&scene.world_from_camera0),
                ehps,
                vo,
            },
            gt_human: scene.gt_human,
            gt_camera: scene.gt_camera,
            joints: scene.gt_joints_world,
            observations,
            vo: vo_traj,
            manifest: scene.manifest,
        })
    }

    /// Ground-truth joints in each frame's camera.
    pub fn joints_camera(&self) -> JointSequence {
        let inv: Vec<RigidTransform> = self.gt_camera.poses().iter().map(RigidTransform::inverse).collect();
        self.joints.transformed(&inv, CoordinateFrame::Camera)
    }
}

fn pretty<T: Serialize>(format: &str, body: &T) -> Vec<u8> {
    let v = Header {
        format: format.to_string(),
        version: FORMAT_VERSION,
        body,
    };
    (serde_json::to_string_pretty(&v).expect("plain data") + "\n").into_bytes()
}

fn read_pretty<T: DeserializeOwned>(path: &Path, expected: &'static str) -> Result<T, FormatError> {
    let text = read_text(path)?;
    let probe: Header<serde_json::Value> = parse_json(path, 1, &text)?;
    check_header(path, &probe.format, probe.version, expected)?;
    let h: Header<T> = parse_json(path, 1, &text)?;
    Ok(h.body)
}

/// Bundle file names with the SHA-256 of each, in a fixed order.
pub type Checksums = Vec<(String, String)>;

pub fn write_bundle(dir: &Path, b: &SceneBundle) -> Result<Checksums, FormatError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join(SCENE_FILE), &pretty(SCENE_FORMAT, &b.meta))?;
    write_trajectory(&dir.join(GT_HUMAN_FILE), &b.gt_human)?;
    write_trajectory(&dir.join(GT_CAMERA_FILE), &b.gt_camera)?;
    write_joint_sequence(&dir.join(JOINTS_FILE), &b.joints)?;
    write_observations(&dir.join(OBSERVATIONS_FILE), &b.observations)?;
    write_trajectory(&dir.join(VO_FILE), &b.vo)?;
    write_file(
        &dir.join(SHOTS_FILE),
        &pretty(SHOTS_FORMAT, &ShotsFile { manifest: b.manifest.clone() }),
    )?;
    bundle_checksums(dir)
}

pub fn bundle_checksums(dir: &Path) -> Result<Checksums, FormatError> {
    let jsq_side = format!("{JOINTS_FILE}.json");
    [SCENE_FILE, GT_HUMAN_FILE, GT_CAMERA_FILE, JOINTS_FILE, jsq_side.as_str(), OBSERVATIONS_FILE, VO_FILE, SHOTS_FILE]
        .iter()
        .map(|name| Ok((name.to_string(), sha256_hex(&read_file(&dir.join(name))?))))
        .collect()
}

pub fn read_bundle(dir: &Path) -> Result<SceneBundle, FormatError> {
    let meta: SceneMeta = read_pretty(&dir.join(SCENE_FILE), SCENE_FORMAT)?;
    let shots: ShotsFile = read_pretty(&dir.join(SHOTS_FILE), SHOTS_FORMAT)?;
    let b = SceneBundle {
        gt_human: read_trajectory(&dir.join(GT_HUMAN_FILE))?,
        gt_camera: read_trajectory(&dir.join(GT_CAMERA_FILE))?,
        joints: read_joint_sequence(&dir.join(JOINTS_FILE))?,
        observations: read_observations(&dir.join(OBSERVATIONS_FILE))?,
        vo: read_trajectory(&dir.join(VO_FILE))?,
        manifest: shots.manifest,
        meta,
    };
    let k = b.meta.frames;
    let lens = [b.gt_human.len(), b.gt_camera.len(), b.joints.len(), b.observations.len(), b.vo.len()];
    if lens.iter().any(|&n| n != k) {
        return Err(malformed(&dir.join(SCENE_FILE), 1, format!("scene declares {k} frames, files hold {lens:?}")));
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndexEntry {
    pub file: String,
    pub label: String,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub corpus_id: String,
    pub entries: Vec<CorpusIndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VelocityFile {
    velocities: Vec<[f64; 3]>,
}

/// Writes `corpus.json` plus `<file>.jsq`, its sidecar, and `<file>.vel.json`
/// per entry.
pub fn write_corpus(dir: &Path, corpus_id: &str, entries: &[MotionCorpusEntry]) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut index = CorpusIndex {
        corpus_id: corpus_id.to_string(),
        entries: Vec::with_capacity(entries.len()),
    };
    for (i, e) in entries.iter().enumerate() {
        let file = format!("entry_{i:04}");
        write_joint_sequence(&dir.join(format!("{file}.jsq")), &e.joints)?;
        let vel = VelocityFile {
            velocities: e.velocities.iter().map(|v| [v.x, v.y, v.z]).collect(),
        };
        write_file(&dir.join(format!("{file}.vel.json")), &pretty(VELOCITY_FORMAT, &vel))?;
        index.entries.push(CorpusIndexEntry {
            file,
            label: e.label.clone(),
            frames: e.joints.len(),
        });
    }
    write_file(&dir.join(CORPUS_FILE), &pretty(CORPUS_FORMAT, &index))
}

/// Reads a corpus directory. A directory without `corpus.json` yields an
/// empty corpus so the trainer can report it as such.
pub fn read_corpus(dir: &Path) -> Result<(String, Vec<MotionCorpusEntry>), FormatError> {
    let index_path = dir.join(CORPUS_FILE);
    if !index_path.exists() {
        fs::read_dir(dir).map_err(io_err(dir))?;
        return Ok((String::new(), Vec::new()));
    }
    let index: CorpusIndex = read_pretty(&index_path, CORPUS_FORMAT)?;
    let entries = index
        .entries
        .iter()
        .map(|ie| {
            let joints = read_joint_sequence(&dir.join(format!("{}.jsq", ie.file)))?;
            let vel_path = dir.join(format!("{}.vel.json", ie.file));
            let vel: VelocityFile = read_pretty(&vel_path, VELOCITY_FORMAT)?;
            let velocities = vel.velocities.into_iter().map(Vec3::from).collect();
            MotionCorpusEntry::new(joints, velocities, ie.label.clone()).map_err(|e| malformed(&vel_path, 1, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((index.corpus_id, entries))
}

const CSV_FIELDS: [&str; 7] = ["x", "y", "z", "qx", "qy", "qz", "qw"];

fn csv_fields(p: &RigidTransform) -> [f64; 7] {
    let q = p.rotation.to_quaternion();
    [p.translation.x, p.translation.y, p.translation.z, q[0], q[1], q[2], q[3]]
}

/// `frame,x,y,z,qx,qy,qz,qw` for one trajectory. With several, columns are
/// prefixed by name and rows run to the longest input, shorter inputs
/// leaving their cells empty.
pub fn trajectories_to_csv(trajectories: &[(&str, &Trajectory)]) -> String {
    let mut out = String::from("frame");
    for (name, _) in trajectories {
        for f in CSV_FIELDS {
            out.push(',');
            if trajectories.len() == 1 {
                out.push_str(f);
            } else {
                out.push_str(&format!("{name}_{f}"));
            }
        }
    }
    out.push('\n');
    let rows = trajectories.iter().map(|(_, t)| t.len()).max().unwrap_or(0);
    for i in 0..rows {
        out.push_str(&i.to_string());
        for (_, t) in trajectories {
            match t.poses().get(i) {
                Some(p) => {
                    for v in csv_fields(p) {
                        out.push_str(&format!(",{v}"));
                    }
                }
                None => out.push_str(&",".repeat(CSV_FIELDS.len())),
            }
        }
        out.push('\n');
    }
    out
}

/// Parses single-trajectory CSV as written by [`trajectories_to_csv`].
pub fn trajectory_from_csv(
    path: &Path,
    text: &str,
    scale_status: ScaleStatus,
    frame_rate: f64,
) -> Result<Trajectory, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() != 8 || cols[0] != "frame" || cols[1..] != CSV_FIELDS {
        return Err(malformed(path, 1, format!("expected header frame,{}", CSV_FIELDS.join(","))));
    }
    let mut poses = Vec::new();
    for (i, l) in lines {
        let n = i + 1;
        let cells: Vec<&str> = l.split(',').map(str::trim).collect();
        if cells.len() != 8 {
            return Err(malformed(path, n, format!("{} cells, expected 8", cells.len())));
        }
        let frame: usize = cells[0].parse().map_err(|e| malformed(path, n, e))?;
        check_index(path, n, poses.len(), frame)?;
        let mut v = [0.0f64; 7];
        for (slot, c) in v.iter_mut().zip(&cells[1..]) {
            *slot = c.parse().map_err(|e| malformed(path, n, format!("{c:?}: {e}")))?;
        }
        if !v.iter().all(|c| c.is_finite()) {
            return Err(malformed(path, n, "non-finite value"));
        }
        let qn = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]).sqrt();
        if (qn - 1.0).abs() > 1e-6 {
            return Err(malformed(path, n, format!("quaternion norm {qn}")));
        }
        poses.push(RigidTransform::new(
            Rotation3::from_quaternion([v[3], v[4], v[5], v[6]]),
            Vec3::new(v[0], v[1], v[2]),
        ));
    }
    Trajectory::new(poses, scale_status, frame_rate).map_err(|e| malformed(path, 1, e))
}

/// Appends a line to a text file, creating it when missing.
pub fn append_line(path: &Path, line: &str) -> Result<(), FormatError> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))
}
