//! World-grounded and camera-frame evaluation metrics.
//!
//! Joint errors are reported in millimeters, acceleration error in m/s².
//! Every alignment is a similarity (rotation, translation, uniform scale).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{umeyama_align, GeometryError, SimilarityTransform, Vec3};
use crate::joints::{JointSequence, Pose, PELVIS};
use crate::trajectory::Trajectory;

pub const DEFAULT_SEGMENT_LENGTH: usize = 100;
pub const REPORT_VERSION: u32 = 1;

/// How the first-two-frames world alignment is solved; stored in reports.
pub const W_ALIGNMENT: &str = "similarity over all joints of the first two frames of each segment";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("sequence of {0} frames is too short")]
    TooShort(usize),
    #[error("shape mismatch: estimate has {est} frames, ground truth {gt}")]
    ShapeMismatch { est: usize, gt: usize },
    #[error("estimate is in the {est:?} frame but ground truth is in the {gt:?} frame")]
    FrameMismatch {
        est: crate::joints::CoordinateFrame,
        gt: crate::joints::CoordinateFrame,
    },
    #[error("segment length must be at least 2, got {0}")]
    BadSegmentLength(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    /// Shorter than the requested segment length.
    pub partial: bool,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Consecutive non-overlapping segments. A trailing partial segment is kept
/// when it has at least 2 frames; a single leftover frame is dropped.
pub fn segment_sequence(len: usize, segment_length: usize) -> Result<Vec<Segment>, MetricsError> {
    if segment_length < 2 {
        return Err(MetricsError::BadSegmentLength(segment_length));
    }
    if len < 2 {
        return Err(MetricsError::TooShort(len));
    }
    let mut out = Vec::with_capacity(len.div_ceil(segment_length));
    let mut start = 0;
    while len - start >= 2 {
        let end = (start + segment_length).min(len);
        out.push(Segment {
            start,
            end,
            partial: end - start < segment_length,
        });
        start = end;
    }
    Ok(out)
}

fn check_shapes(est: &JointSequence, gt: &JointSequence) -> Result<(), MetricsError> {
    if est.len() != gt.len() {
        return Err(MetricsError::ShapeMismatch {
            est: est.len(),
            gt: gt.len(),
        });
    }
    if est.coordinate_frame() != gt.coordinate_frame() {
        return Err(MetricsError::FrameMismatch {
            est: est.coordinate_frame(),
            gt: gt.coordinate_frame(),
        });
    }
    Ok(())
}

fn points(frames: &[Pose]) -> Vec<Vec3> {
    frames.iter().flat_map(|p| p.iter().copied()).collect()
}

fn mean_joint_error_mm(est: &[Pose], gt: &[Pose], tf: &SimilarityTransform) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (e, g) in est.iter().zip(gt) {
        for (p, q) in e.iter().zip(g) {
            sum += (tf.apply(p) - q).norm();
            n += 1;
        }
    }
    1000.0 * sum / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fit {
    FirstTwoFrames,
    WholeSegment,
}

fn segment_errors(
    est: &JointSequence,
    gt: &JointSequence,
    segment_length: usize,
    fit: Fit,
) -> Result<Vec<f64>, MetricsError> {
    check_shapes(est, gt)?;
    segment_sequence(est.len(), segment_length)?
        .iter()
        .map(|s| {
            let e = &est.frames()[s.start..s.end];
            let g = &gt.frames()[s.start..s.end];
            let n = match fit {
                Fit::FirstTwoFrames => 2,
                Fit::WholeSegment => s.len(),
            };
            let tf = umeyama_align(&points(&e[..n]), &points(&g[..n]), true)?;
            Ok(mean_joint_error_mm(e, g, &tf))
        })
        .collect()
}

/// Per-segment W-MPJPE, mm.
pub fn w_mpjpe_segments(
    est: &JointSequence,
    gt: &JointSequence,
    segment_length: usize,
) -> Result<Vec<f64>, MetricsError> {
    segment_errors(est, gt, segment_length, Fit::FirstTwoFrames)
}

/// Per-segment WA-MPJPE, mm.
pub fn wa_mpjpe_segments(
    est: &JointSequence,
    gt: &JointSequence,
    segment_length: usize,
) -> Result<Vec<f64>, MetricsError> {
    segment_errors(est, gt, segment_length, Fit::WholeSegment)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// W-MPJPE₁₀₀: each 100-frame segment aligned on its first two frames.
pub fn w_mpjpe_100(est: &JointSequence, gt: &JointSequence) -> Result<f64, MetricsError> {
    Ok(mean(&w_mpjpe_segments(est, gt, DEFAULT_SEGMENT_LENGTH)?))
}

/// WA-MPJPE₁₀₀: each 100-frame segment aligned as a whole.
pub fn wa_mpjpe_100(est: &JointSequence, gt: &JointSequence) -> Result<f64, MetricsError> {
    Ok(mean(&wa_mpjpe_segments(est, gt, DEFAULT_SEGMENT_LENGTH)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    /// Mean position error after alignment, mm.
    pub ate_mm: f64,
    /// Scale the alignment applied to the estimate.
    pub alignment_scale: f64,
}

pub fn ate_positions(est: &[Vec3], gt: &[Vec3]) -> Result<AteResult, MetricsError> {
    if est.len() != gt.len() {
        return Err(MetricsError::ShapeMismatch {
            est: est.len(),
            gt: gt.len(),
        });
    }
    if est.len() < 3 {
        return Err(MetricsError::TooShort(est.len()));
    }
    let tf = umeyama_align(est, gt, true)?;
    let err = est.iter().zip(gt).map(|(p, q)| (tf.apply(p) - q).norm()).sum::<f64>() / est.len() as f64;
    Ok(AteResult {
        ate_mm: 1000.0 * err,
        alignment_scale: tf.scale,
    })
}

/// Similarity-aligned trajectory error and the scale that alignment needed.
pub fn ate(est: &Trajectory, gt: &Trajectory) -> Result<AteResult, MetricsError> {
    ate_positions(&est.positions(), &gt.positions())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraFrameMetrics {
    pub mpjpe_mm: f64,
    pub pa_mpjpe_mm: f64,
    pub t_mpjpe_mm: f64,
    pub accel_m_s2: f64,
}

/// Mean ‖Δ²est − Δ²gt‖·fps² over interior frames and all joints.
pub fn acceleration_error(est: &[Pose], gt: &[Pose], frame_rate: f64) -> f64 {
    if est.len() < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 1..est.len() - 1 {
        for j in 0..est[i].len() {
            let ae = est[i + 1][j] - 2.0 * est[i][j] + est[i - 1][j];
            let ag = gt[i + 1][j] - 2.0 * gt[i][j] + gt[i - 1][j];
            sum += (ae - ag).norm();
            n += 1;
        }
    }
    sum / n as f64 * frame_rate * frame_rate
}

/// MPJPE after pelvis alignment, PA-MPJPE after per-frame similarity
/// Procrustes, T-MPJPE with no alignment, and acceleration error.
pub fn camera_frame_metrics(est: &JointSequence, gt: &JointSequence) -> Result<CameraFrameMetrics, MetricsError> {
    check_shapes(est, gt)?;
    let (mut mpjpe, mut pa, mut t) = (0.0, 0.0, 0.0);
    for (e, g) in est.frames().iter().zip(gt.frames()) {
        let offset = g[PELVIS] - e[PELVIS];
        let root_aligned = SimilarityTransform {
            translation: offset,
            ..SimilarityTransform::identity()
        };
        let m = mean_joint_error_mm(std::slice::from_ref(e), std::slice::from_ref(g), &root_aligned);
        mpjpe += m;
        t += mean_joint_error_mm(std::slice::from_ref(e), std::slice::from_ref(g), &SimilarityTransform::identity());
        // A collapsed estimate has no Procrustes solution; its root-aligned
        // error stands in.
        pa += match umeyama_align(e, g, true) {
            Ok(tf) => mean_joint_error_mm(std::slice::from_ref(e), std::slice::from_ref(g), &tf),
            Err(_) => m,
        };
    }
    let k = est.len().max(1) as f64;
    Ok(CameraFrameMetrics {
        mpjpe_mm: mpjpe / k,
        pa_mpjpe_mm: pa / k,
        t_mpjpe_mm: t / k,
        accel_m_s2: acceleration_error(est.frames(), gt.frames(), gt.frame_rate()),
    })
}

/// Whatever estimates and ground truth are available for one sequence.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvaluationInput<'a> {
    pub est_human: Option<&'a Trajectory>,
    pub gt_human: Option<&'a Trajectory>,
    pub est_camera: Option<&'a Trajectory>,
    pub gt_camera: Option<&'a Trajectory>,
    pub est_joints_world: Option<&'a JointSequence>,
    pub gt_joints_world: Option<&'a JointSequence>,
    pub est_joints_camera: Option<&'a JointSequence>,
    pub gt_joints_camera: Option<&'a JointSequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub version: u32,
    pub segment_length: usize,
    pub w_alignment: String,
    pub ate_definition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    pub partial: bool,
    pub w_mpjpe_mm: f64,
    pub wa_mpjpe_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub w_mpjpe_100_mm: Option<f64>,
    pub wa_mpjpe_100_mm: Option<f64>,
    pub h_ate_mm: Option<f64>,
    pub h_as: Option<f64>,
    pub c_ate_mm: Option<f64>,
    pub c_as: Option<f64>,
    pub t_mpjpe_mm: Option<f64>,
    pub mpjpe_mm: Option<f64>,
    pub pa_mpjpe_mm: Option<f64>,
    pub accel_m_s2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub metadata: ReportMetadata,
    pub sequence_name: String,
    pub sequence: SequenceMetrics,
    pub segments: Vec<SegmentMetrics>,
}

/// Fixed CSV header; sequence rows leave segment columns empty and segment
/// rows leave sequence columns empty.
pub const CSV_COLUMNS: [&str; 16] = [
    "row_type",
    "sequence",
    "segment",
    "start_frame",
    "end_frame",
    "partial",
    "w_mpjpe_mm",
    "wa_mpjpe_mm",
    "h_ate_mm",
    "h_as",
    "c_ate_mm",
    "c_as",
    "t_mpjpe_mm",
    "mpjpe_mm",
    "pa_mpjpe_mm",
    "accel_m_s2",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn csv_name(name: &str) -> String {
    if name.contains([',', '"', '\n']) {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_string()
    }
}

impl SegmentReport {
    pub fn csv_rows(&self) -> Vec<String> {
        let s = &self.sequence;
        let name = csv_name(&self.sequence_name);
        let mut rows = vec![format!(
            "sequence,{name},,,,,{},{},{},{},{},{},{},{},{},{}",
            cell(s.w_mpjpe_100_mm),
            cell(s.wa_mpjpe_100_mm),
            cell(s.h_ate_mm),
            cell(s.h_as),
            cell(s.c_ate_mm),
            cell(s.c_as),
            cell(s.t_mpjpe_mm),
            cell(s.mpjpe_mm),
            cell(s.pa_mpjpe_mm),
            cell(s.accel_m_s2),
        )];
        rows.extend(self.segments.iter().map(|g| {
            format!(
                "segment,{name},{},{},{},{},{},{},,,,,,,,",
                g.index, g.start_frame, g.end_frame, g.partial, g.w_mpjpe_mm, g.wa_mpjpe_mm
            )
        }));
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        for row in self.csv_rows() {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

/// Computes every metric whose inputs are present.
pub fn evaluate(
    name: &str,
    input: &EvaluationInput,
    segment_length: usize,
) -> Result<SegmentReport, MetricsError> {
    let mut sequence = SequenceMetrics::default();
    let mut segments = Vec::new();
    if let (Some(e), Some(g)) = (input.est_human, input.gt_human) {
        let r = ate(e, g)?;
        sequence.h_ate_mm = Some(r.ate_mm);
        sequence.h_as = Some(r.alignment_scale);
    }
    if let (Some(e), Some(g)) = (input.est_camera, input.gt_camera) {
        let r = ate(e, g)?;
        sequence.c_ate_mm = Some(r.ate_mm);
        sequence.c_as = Some(r.alignment_scale);
    }
    if let (Some(e), Some(g)) = (input.est_joints_world, input.gt_joints_world) {
        let spans = segment_sequence(e.len(), segment_length)?;
        let w = w_mpjpe_segments(e, g, segment_length)?;
        let wa = wa_mpjpe_segments(e, g, segment_length)?;
        sequence.w_mpjpe_100_mm = Some(mean(&w));
        sequence.wa_mpjpe_100_mm = Some(mean(&wa));
        segments = spans
            .iter()
            .zip(w.iter().zip(&wa))
            .enumerate()
            .map(|(index, (s, (w, wa)))| SegmentMetrics {
                index,
                start_frame: s.start,
                end_frame: s.end,
                partial: s.partial,
                w_mpjpe_mm: *w,
                wa_mpjpe_mm: *wa,
            })
            .collect();
    }
    if let (Some(e), Some(g)) = (input.est_joints_camera, input.gt_joints_camera) {
        let m = camera_frame_metrics(e, g)?;
        sequence.mpjpe_mm = Some(m.mpjpe_mm);
        sequence.pa_mpjpe_mm = Some(m.pa_mpjpe_mm);
        sequence.t_mpjpe_mm = Some(m.t_mpjpe_mm);
        sequence.accel_m_s2 = Some(m.accel_m_s2);
    }
    Ok(SegmentReport {
        metadata: ReportMetadata {
            version: REPORT_VERSION,
            segment_length,
            w_alignment: W_ALIGNMENT.to_string(),
            ate_definition: "mean position error after similarity alignment".to_string(),
        },
        sequence_name: name.to_string(),
        sequence,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{RigidTransform, Rotation3};
    use crate::joints::{CoordinateFrame, NUM_JOINTS};
    use crate::trajectory::ScaleStatus;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn walker(k: usize, frame: CoordinateFrame) -> JointSequence {
        let frames = (0..k)
            .map(|i| {
                let t = i as f64 / 30.0;
                std::array::from_fn(|j| {
                    let a = j as f64;
                    Vec3::new(1.2 * t + 0.1 * (a * 0.7).sin(), 0.15 * (a * 1.3).cos() + 0.02 * (5.0 * t + a).sin(), 0.07 * a)
                })
            })
            .collect();
        JointSequence::new(frames, 30.0, frame).unwrap()
    }

    fn map(seq: &JointSequence, f: impl Fn(usize, usize, &Vec3) -> Vec3) -> JointSequence {
        let frames = seq
            .frames()
            .iter()
            .enumerate()
            .map(|(i, pose)| std::array::from_fn(|j| f(i, j, &pose[j])))
            .collect();
        JointSequence::new(frames, seq.frame_rate(), seq.coordinate_frame()).unwrap()
    }

    fn traj(points: &[Vec3]) -> Trajectory {
        Trajectory::new(
            points.iter().map(|p| RigidTransform::from_translation(*p)).collect(),
            ScaleStatus::Metric,
            30.0,
        )
        .unwrap()
    }

    #[test]
    fn segmentation() {
        let lens = |n| segment_sequence(n, 100).unwrap().iter().map(Segment::len).collect::<Vec<_>>();
        assert_eq!(lens(250), vec![100, 100, 50]);
        assert_eq!(lens(100), vec![100]);
        assert_eq!(lens(201), vec![100, 100]);
        assert!(segment_sequence(250, 100).unwrap()[2].partial);
        assert_eq!(segment_sequence(1, 100), Err(MetricsError::TooShort(1)));
    }

    #[test]
    fn world_metrics_are_zero_on_identity() {
        let gt = walker(250, CoordinateFrame::World);
        assert_abs_diff_eq!(w_mpjpe_100(&gt, &gt).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(wa_mpjpe_100(&gt, &gt).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn w_mpjpe_absorbs_global_rotation() {
        let gt = walker(100, CoordinateFrame::World);
        let r = Rotation3::about_z(30f64.to_radians());
        let est = map(&gt, |_, _, p| r * *p);
        assert_abs_diff_eq!(w_mpjpe_100(&est, &gt).unwrap(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn w_mpjpe_sees_late_offset() {
        let gt = walker(100, CoordinateFrame::World);
        let est = map(&gt, |i, _, p| if i >= 50 { p + Vec3::new(0.1, 0.0, 0.0) } else { *p });
        assert_abs_diff_eq!(w_mpjpe_100(&est, &gt).unwrap(), 50.0, epsilon = 1e-8);
    }

    #[test]
    fn wa_mpjpe_absorbs_scale() {
        let gt = walker(100, CoordinateFrame::World);
        let est = map(&gt, |_, _, p| 2.0 * p);
        assert_abs_diff_eq!(wa_mpjpe_100(&est, &gt).unwrap(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn wa_below_w_under_jitter() {
        let gt = walker(100, CoordinateFrame::World);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let jitter: Vec<Vec3> = (0..100 * NUM_JOINTS)
            .map(|_| Vec3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01)))
            .collect();
        let est = map(&gt, |i, j, p| p + jitter[i * NUM_JOINTS + j]);
        let wa = wa_mpjpe_100(&est, &gt).unwrap();
        assert!(wa > 0.0 && wa <= w_mpjpe_100(&est, &gt).unwrap());
    }

    #[test]
    fn ate_examples() {
        let gt: Vec<Vec3> = (0..50).map(|i| Vec3::new(0.1 * i as f64, (0.2 * i as f64).sin(), 0.0)).collect();
        let r = ate(&traj(&gt), &traj(&gt)).unwrap();
        assert_abs_diff_eq!(r.ate_mm, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.alignment_scale, 1.0, epsilon = 1e-12);
        let small: Vec<Vec3> = gt.iter().map(|p| 0.2 * p).collect();
        let r = ate(&traj(&small), &traj(&gt)).unwrap();
        assert_abs_diff_eq!(r.ate_mm, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.alignment_scale, 5.0, epsilon = 1e-9);
        let line: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(ate_positions(&line, &line), Err(MetricsError::Geometry(_))));
    }

    #[test]
    fn camera_metrics_split_root_translation() {
        let gt = walker(30, CoordinateFrame::Camera);
        let est = map(&gt, |_, _, p| p + Vec3::new(0.0, 0.0, 1.0));
        let m = camera_frame_metrics(&est, &gt).unwrap();
        assert_abs_diff_eq!(m.mpjpe_mm, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.pa_mpjpe_mm, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m.t_mpjpe_mm, 1000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.accel_m_s2, 0.0, epsilon = 1e-9);
        let z = camera_frame_metrics(&gt, &gt).unwrap();
        assert_eq!((z.mpjpe_mm, z.t_mpjpe_mm, z.accel_m_s2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn acceleration_spike_stencil() {
        let k = 20;
        let gt: Vec<Pose> = (0..k).map(|i| [Vec3::new(0.05 * i as f64, 0.0, 0.0); NUM_JOINTS]).collect();
        let mut est = gt.clone();
        for p in est[10].iter_mut() {
            *p += Vec3::new(0.0, 0.01, 0.0);
        }
        // Weights 1, −2, 1 over three interior frames.
        let expected = (0.01 + 0.02 + 0.01) * 900.0 / (k - 2) as f64;
        assert_abs_diff_eq!(acceleration_error(&est, &gt, 30.0), expected, epsilon = 1e-12);
    }

    #[test]
    fn report_csv_has_fixed_columns() {
        let gt = walker(150, CoordinateFrame::World);
        let input = EvaluationInput {
            est_joints_world: Some(&gt),
            gt_joints_world: Some(&gt),
            ..Default::default()
        };
        let report = evaluate("walk", &input, 100).unwrap();
        let csv = report.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        for l in &lines {
            assert_eq!(l.split(',').count(), CSV_COLUMNS.len(), "{l}");
        }
        assert!(report.segments[1].partial);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("first two frames"));
    }

    proptest! {
        #[test]
        fn ate_scale_composes(k in 0.1f64..10.0, angle in -3.0f64..3.0) {
            let gt: Vec<Vec3> = (0..40).map(|i| Vec3::new(0.1 * i as f64, (0.3 * i as f64).sin(), 0.05 * (i as f64).cos())).collect();
            let r = Rotation3::about_z(angle);
            let est: Vec<Vec3> = gt.iter().map(|p| k * (r * *p) + Vec3::new(1.0, -2.0, 0.5)).collect();
            let out = ate_positions(&est, &gt).unwrap();
            prop_assert!((out.alignment_scale * k - 1.0).abs() < 1e-9);
            prop_assert!(out.ate_mm < 1e-6);
        }
    }
}
