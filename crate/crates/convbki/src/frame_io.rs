//! Reading and writing point-cloud frames and pose files.
//!
//! Two frame encodings are supported, chosen by file extension:
//!
//! * `.csv` — one point per line. Hard labels: `x,y,z,class`. Soft labels:
//!   `x,y,z,p0,...,p{C-1}`. Blank lines and lines starting with `#` are
//!   skipped. Coordinates and probabilities are f32 payloads.
//! * `.bin` — packed little-endian binary: magic `CBKIFRM1`, `u32` point
//!   count, `u32` label width (0 for hard labels, C for soft), then per
//!   point `x y z` plus either one f32 holding the integral class id or C
//!   f32 probabilities.
//!
//! Pose files are plain text: one pose per line as 12 whitespace-separated
//! floats, the row-major 3×4 matrix `[R | t]`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::grid::{FrameRecord, SemanticPoint};

const FRAME_MAGIC: &[u8; 8] = b"CBKIFRM1";

/// How point labels are encoded on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// One integer class id per point.
    Hard,
    /// A full probability vector per point.
    Soft,
}

impl LabelMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelMode::Hard => "hard",
            LabelMode::Soft => "soft",
        }
    }
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(LabelMode::Hard),
            "soft" => Ok(LabelMode::Soft),
            other => Err(Error::config(format!(
                "unknown label mode {other:?} (expected \"hard\" or \"soft\")"
            ))),
        }
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Converts a hard class id stored as f32 back to an index.
fn class_from_f32(value: f32, num_classes: usize) -> std::result::Result<usize, String> {
    if !value.is_finite() || value < 0.0 || value.fract() != 0.0 {
        return Err(format!("class id {value} is not a non-negative integer"));
    }
    let class = value as usize;
    if class >= num_classes {
        return Err(format!(
            "class id {class} out of range (num_classes {num_classes})"
        ));
    }
    Ok(class)
}

fn parse_csv_line(
    path: &Path,
    line_no: usize,
    line: &str,
    num_classes: usize,
) -> Result<SemanticPoint> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let mut values = Vec::with_capacity(fields.len());
    for field in &fields {
        let v: f32 = field
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("invalid number {field:?}")))?;
        values.push(v);
    }
    let position = if values.len() >= 3 {
        Vector3::new(values[0] as f64, values[1] as f64, values[2] as f64)
    } else {
        return Err(parse_error(
            path,
            line_no,
            format!("expected at least 4 fields, got {}", values.len()),
        ));
    };
    match values.len() - 3 {
        1 => {
            let class = class_from_f32(values[3], num_classes)
                .map_err(|m| parse_error(path, line_no, m))?;
            SemanticPoint::one_hot(position, class, num_classes)
        }
        n if n == num_classes => {
            let label = values[3..].iter().map(|&p| p as f64).collect();
            SemanticPoint::new(position, label)
        }
        n => Err(parse_error(
            path,
            line_no,
            format!(
                "expected 4 or {} fields for {} classes, got {}",
                3 + num_classes,
                num_classes,
                3 + n
            ),
        )),
    }
    .map_err(|e| match e {
        e @ Error::Parse { .. } => e,
        other => parse_error(path, line_no, other.to_string()),
    })
}

fn read_frame_csv(path: &Path, num_classes: usize) -> Result<Vec<SemanticPoint>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut points = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        points.push(parse_csv_line(path, idx + 1, trimmed, num_classes)?);
    }
    Ok(points)
}

fn write_frame_csv(path: &Path, points: &[SemanticPoint], mode: LabelMode) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    for point in points {
        write!(
            w,
            "{},{},{}",
            point.position.x as f32, point.position.y as f32, point.position.z as f32
        )
        .map_err(io_err)?;
        match mode {
            LabelMode::Hard => write!(w, ",{}", point.hard_class()).map_err(io_err)?,
            LabelMode::Soft => {
                for &p in &point.label {
                    write!(w, ",{}", p as f32).map_err(io_err)?;
                }
            }
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn read_frame_bin(path: &Path, num_classes: usize) -> Result<Vec<SemanticPoint>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| format_error(path, "file too short for header"))?;
    if &magic != FRAME_MAGIC {
        return Err(format_error(path, "bad magic (not a frame file)"));
    }
    let mut u32_buf = [0u8; 4];
    r.read_exact(&mut u32_buf)
        .map_err(|_| format_error(path, "file too short for header"))?;
    let count = u32::from_le_bytes(u32_buf) as usize;
    r.read_exact(&mut u32_buf)
        .map_err(|_| format_error(path, "file too short for header"))?;
    let label_width = u32::from_le_bytes(u32_buf) as usize;
    if label_width != 0 && label_width != num_classes {
        return Err(format_error(
            path,
            format!("label width {label_width} does not match {num_classes} classes"),
        ));
    }

    let floats_per_record = 3 + if label_width == 0 { 1 } else { label_width };
    let mut buf = vec![0u8; floats_per_record * 4];
    let mut points = Vec::with_capacity(count);
    for record in 0..count {
        r.read_exact(&mut buf).map_err(|_| Error::Truncated {
            path: path.to_path_buf(),
            record: record as u64,
        })?;
        let f = |i: usize| f32::from_le_bytes(buf[i * 4..i * 4 + 4].try_into().unwrap());
        let position = Vector3::new(f(0) as f64, f(1) as f64, f(2) as f64);
        let point = if label_width == 0 {
            let class = class_from_f32(f(3), num_classes)
                .map_err(|m| format_error(path, format!("record {record}: {m}")))?;
            SemanticPoint::one_hot(position, class, num_classes)
        } else {
            let label = (0..label_width).map(|i| f(3 + i) as f64).collect();
            SemanticPoint::new(position, label)
        }
        .map_err(|e| format_error(path, format!("record {record}: {e}")))?;
        points.push(point);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(format_error(path, "trailing bytes after last record"));
    }
    Ok(points)
}

fn write_frame_bin(path: &Path, points: &[SemanticPoint], mode: LabelMode) -> Result<()> {
    let num_classes = points.first().map_or(0, |p| p.label.len());
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(FRAME_MAGIC).map_err(io_err)?;
    w.write_all(&(points.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    let label_width = match mode {
        LabelMode::Hard => 0usize,
        LabelMode::Soft => num_classes,
    };
    w.write_all(&(label_width as u32).to_le_bytes())
        .map_err(io_err)?;
    for point in points {
        for v in [point.position.x, point.position.y, point.position.z] {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
        }
        match mode {
            LabelMode::Hard => w
                .write_all(&(point.hard_class() as f32).to_le_bytes())
                .map_err(io_err)?,
            LabelMode::Soft => {
                for &p in &point.label {
                    w.write_all(&(p as f32).to_le_bytes()).map_err(io_err)?;
                }
            }
        }
    }
    w.flush().map_err(io_err)
}

fn extension_of(path: &Path) -> Result<&str> {
    path.extension()
        .and_then(|e| e.to_str())
        .ok_or_else(|| Error::config(format!("{}: missing file extension", path.display())))
}

/// Reads one frame's points; the encoding is chosen by extension
/// (`.csv` or `.bin`).
pub fn read_frame(path: impl AsRef<Path>, num_classes: usize) -> Result<Vec<SemanticPoint>> {
    let path = path.as_ref();
    match extension_of(path)? {
        "csv" => read_frame_csv(path, num_classes),
        "bin" => read_frame_bin(path, num_classes),
        other => Err(Error::config(format!(
            "{}: unsupported frame extension {other:?} (expected csv or bin)",
            path.display()
        ))),
    }
}

/// Writes one frame's points; the encoding is chosen by extension.
///
/// `LabelMode::Hard` stores each point's argmax class; `Soft` stores the
/// full probability vector. Coordinates and probabilities are written at
/// f32 precision either way.
pub fn write_frame(
    path: impl AsRef<Path>,
    points: &[SemanticPoint],
    mode: LabelMode,
) -> Result<()> {
    let path = path.as_ref();
    match extension_of(path)? {
        "csv" => write_frame_csv(path, points, mode),
        "bin" => write_frame_bin(path, points, mode),
        other => Err(Error::config(format!(
            "{}: unsupported frame extension {other:?} (expected csv or bin)",
            path.display()
        ))),
    }
}

/// Peeks at a frame file and reports how its labels are encoded, without
/// reading the points. Returns `None` for a CSV with no data lines, whose
/// mode is undeterminable.
pub fn frame_label_mode(path: impl AsRef<Path>, num_classes: usize) -> Result<Option<LabelMode>> {
    let path = path.as_ref();
    match extension_of(path)? {
        "csv" => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let reader = BufReader::new(file);
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                return match trimmed.split(',').count() {
                    4 => Ok(Some(LabelMode::Hard)),
                    n if n == 3 + num_classes => Ok(Some(LabelMode::Soft)),
                    n => Err(parse_error(
                        path,
                        idx + 1,
                        format!(
                            "expected 4 or {} fields for {} classes, got {n}",
                            3 + num_classes,
                            num_classes
                        ),
                    )),
                };
            }
            Ok(None)
        }
        "bin" => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let mut r = BufReader::new(file);
            let mut header = [0u8; 16];
            r.read_exact(&mut header)
                .map_err(|_| format_error(path, "file too short for header"))?;
            if &header[..8] != FRAME_MAGIC {
                return Err(format_error(path, "bad magic (not a frame file)"));
            }
            let label_width = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
            match label_width {
                0 => Ok(Some(LabelMode::Hard)),
                w if w == num_classes => Ok(Some(LabelMode::Soft)),
                w => Err(format_error(
                    path,
                    format!("label width {w} does not match {num_classes} classes"),
                )),
            }
        }
        other => Err(Error::config(format!(
            "{}: unsupported frame extension {other:?} (expected csv or bin)",
            path.display()
        ))),
    }
}

/// Reads a pose file: one row-major 3×4 `[R | t]` per line.
pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut poses = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = trimmed
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| parse_error(path, idx + 1, format!("invalid number {t:?}")))
            })
            .collect::<Result<_>>()?;
        let rows: [f64; 12] = values.as_slice().try_into().map_err(|_| {
            parse_error(
                path,
                idx + 1,
                format!("expected 12 values per pose, got {}", values.len()),
            )
        })?;
        poses.push(Pose::from_rows(&rows).map_err(|e| parse_error(path, idx + 1, e.to_string()))?);
    }
    Ok(poses)
}

/// Writes poses as row-major 3×4 matrices, one per line.
pub fn write_poses(path: impl AsRef<Path>, poses: &[Pose]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for pose in poses {
        let rows = pose.to_rows();
        let line: Vec<String> = rows.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a frame directory plus its pose file into time-ordered records.
///
/// Frame files are ordered by file name, so zero-padded numeric names
/// (`000000.bin`, `000001.bin`, ...) preserve sequence order. The pose
/// file must contain exactly one pose per frame file.
pub fn load_sequence(
    frames_dir: impl AsRef<Path>,
    poses_path: impl AsRef<Path>,
    num_classes: usize,
) -> Result<Vec<FrameRecord>> {
    let frames_dir = frames_dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(frames_dir)
        .map_err(|e| Error::io(frames_dir, e))?
        .map(|entry| {
            entry
                .map(|e| e.path())
                .map_err(|e| Error::io(frames_dir, e))
        })
        .collect::<Result<_>>()?;
    paths.retain(|p| {
        matches!(
            p.extension().and_then(|e| e.to_str()),
            Some("csv") | Some("bin")
        )
    });
    paths.sort();
    if paths.is_empty() {
        return Err(Error::config(format!(
            "{}: no .csv or .bin frame files found",
            frames_dir.display()
        )));
    }

    let poses = read_poses(poses_path.as_ref())?;
    if poses.len() != paths.len() {
        return Err(Error::shape(format!(
            "{} poses for {} frame files",
            poses.len(),
            paths.len()
        )));
    }

    let mut frames = Vec::with_capacity(paths.len());
    for (index, (path, pose)) in paths.iter().zip(poses).enumerate() {
        frames.push(FrameRecord {
            index,
            points: read_frame(path, num_classes)?,
            pose,
        });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    // Every coordinate and probability here is exactly representable as
    // f32, so writing at payload precision must round-trip bitwise.
    fn sample_points() -> Vec<SemanticPoint> {
        vec![
            SemanticPoint::one_hot(Vector3::new(0.125, -2.5, 0.75), 2, 4).unwrap(),
            SemanticPoint::one_hot(Vector3::new(-3.25, 4.5, 1.0), 0, 4).unwrap(),
            SemanticPoint::new(
                Vector3::new(5.0, 0.5, -0.125),
                vec![0.5, 0.25, 0.125, 0.125],
            )
            .unwrap(),
        ]
    }

    #[test]
    fn csv_round_trip_preserves_soft_labels_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.csv");
        let points = sample_points();
        write_frame(&path, &points, LabelMode::Soft).unwrap();
        let back = read_frame(&path, 4).unwrap();
        assert_eq!(back.len(), points.len());
        for (a, b) in points.iter().zip(&back) {
            assert_eq!(a.position, b.position, "f32-exact coordinates survive");
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn binary_round_trip_preserves_soft_labels_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.bin");
        let points = sample_points();
        write_frame(&path, &points, LabelMode::Soft).unwrap();
        let back = read_frame(&path, 4).unwrap();
        for (a, b) in points.iter().zip(&back) {
            assert_eq!(a.position, b.position);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn hard_mode_stores_the_argmax_class() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["frame.csv", "frame.bin"] {
            let path = dir.path().join(name);
            let points = sample_points();
            write_frame(&path, &points, LabelMode::Hard).unwrap();
            let back = read_frame(&path, 4).unwrap();
            for (a, b) in points.iter().zip(&back) {
                assert_eq!(a.position, b.position);
                assert_eq!(b.hard_class(), a.hard_class());
                assert_eq!(b.label[a.hard_class()], 1.0, "labels come back one-hot");
            }
        }
    }

    #[test]
    fn csv_skips_comments_and_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.csv");
        fs::write(&path, "# header\n\n1.0,2.0,3.0,1\n1.0,2.0,oops,0\n").unwrap();
        let err = read_frame(&path, 4).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_class_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("frame.csv");
        fs::write(&csv, "1.0,2.0,3.0,4\n").unwrap();
        assert!(read_frame(&csv, 4).is_err());

        let bin = dir.path().join("frame.bin");
        let points = vec![SemanticPoint::one_hot(Vector3::zeros(), 3, 4).unwrap()];
        write_frame(&bin, &points, LabelMode::Hard).unwrap();
        assert!(
            read_frame(&bin, 3).is_err(),
            "class 3 invalid for 3 classes"
        );
    }

    #[test]
    fn wrong_field_count_is_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.csv");
        fs::write(&path, "1.0,2.0,3.0,0.5,0.5\n").unwrap();
        let err = read_frame(&path, 4).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn truncated_binary_reports_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.bin");
        let points = sample_points();
        write_frame(&path, &points, LabelMode::Soft).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        let err = read_frame(&path, 4).unwrap_err();
        match err {
            Error::Truncated { record, .. } => assert_eq!(record, 2),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn label_mode_peek_matches_what_was_written() {
        let dir = tempfile::tempdir().unwrap();
        let points = sample_points();
        for (name, mode) in [
            ("hard.csv", LabelMode::Hard),
            ("hard.bin", LabelMode::Hard),
            ("soft.csv", LabelMode::Soft),
            ("soft.bin", LabelMode::Soft),
        ] {
            let path = dir.path().join(name);
            write_frame(&path, &points, mode).unwrap();
            assert_eq!(frame_label_mode(&path, 4).unwrap(), Some(mode), "{name}");
        }
        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "# only a comment\n").unwrap();
        assert_eq!(frame_label_mode(&empty, 4).unwrap(), None);
    }

    #[test]
    fn pose_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.txt");
        let angle = 0.3f64;
        let rotation = Matrix3::new(
            angle.cos(),
            -angle.sin(),
            0.0,
            angle.sin(),
            angle.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        let poses = vec![
            Pose::identity(),
            Pose::from_rows(&[
                rotation.m11,
                rotation.m12,
                rotation.m13,
                1.5,
                rotation.m21,
                rotation.m22,
                rotation.m23,
                -2.0,
                rotation.m31,
                rotation.m32,
                rotation.m33,
                0.25,
            ])
            .unwrap(),
        ];
        write_poses(&path, &poses).unwrap();
        let back = read_poses(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in poses.iter().zip(&back) {
            assert_eq!(a.to_rows(), b.to_rows());
        }
    }

    #[test]
    fn malformed_pose_lines_carry_their_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.txt");
        fs::write(&path, "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0\n").unwrap();
        let err = read_poses(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn load_sequence_orders_by_file_name_and_checks_counts() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("frames");
        fs::create_dir(&frames).unwrap();
        // Written out of order on purpose; names decide the sequence.
        fs::write(frames.join("000001.csv"), "1.0,0.0,0.0,1\n").unwrap();
        fs::write(frames.join("000000.csv"), "0.0,0.0,0.0,0\n").unwrap();
        let poses = dir.path().join("poses.txt");
        write_poses(&poses, &[Pose::identity(), Pose::identity()]).unwrap();

        let records = load_sequence(&frames, &poses, 4).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].index, 0);
        assert_eq!(records[0].points[0].hard_class(), 0);
        assert_eq!(records[1].points[0].hard_class(), 1);

        write_poses(&poses, &[Pose::identity()]).unwrap();
        assert!(matches!(
            load_sequence(&frames, &poses, 4),
            Err(Error::Shape(_))
        ));
    }
}
