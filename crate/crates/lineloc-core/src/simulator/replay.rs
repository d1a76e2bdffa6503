//! Detection replay files: JSON Lines, one frame per line, carrying the
//! odometry delta, optional ground truth, and per-camera vehicle-frame
//! polylines in meters.
//!
//! ```json
//! {"t": 0.1, "odom": [0.3, 0.0, 0.01], "truth": [1.0, 2.0, 0.1],
//!  "cameras": [{"id": 0, "lines": [[[1.0, 0.2], [1.5, 0.2]]]}]}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ReplayFrame, SimError};
use crate::filter::OdomDelta;
use crate::geometry::{CameraDetections, Frame, Measurement, Point2, Polyline, Pose};

#[derive(Serialize, Deserialize)]
struct FrameJson {
    t: f64,
    odom: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<[f64; 3]>,
    cameras: Vec<CameraJson>,
}

#[derive(Serialize, Deserialize)]
struct CameraJson {
    id: u32,
    lines: Vec<Vec<Point2>>,
}

pub fn write_frames<W: Write>(frames: &[ReplayFrame], w: &mut W) -> Result<(), SimError> {
    for frame in frames {
        let json = FrameJson {
            t: frame.t,
            odom: [frame.odom.dx, frame.odom.dy, frame.odom.dtheta],
            truth: frame.truth.map(|p| [p.x, p.y, p.theta]),
            cameras: frame
                .z
                .cameras
                .iter()
                .map(|c| CameraJson {
                    id: c.camera_id,
                    lines: c.lines.iter().map(|l| l.points.clone()).collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut *w, &json).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_frames_file(frames: &[ReplayFrame], path: &Path) -> Result<(), SimError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_frames(frames, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn read_frames<R: BufRead>(reader: R) -> Result<Vec<ReplayFrame>, SimError> {
    let mut frames = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let json: FrameJson = serde_json::from_str(&line)
            .map_err(|source| SimError::ReplayParse { line: lineno, source })?;
        let cameras = json
            .cameras
            .into_iter()
            .map(|c| {
                let lines = c
                    .lines
                    .into_iter()
                    .map(|pts| {
                        Polyline::new(pts, Frame::Vehicle).map_err(|e| SimError::ReplayInvalid {
                            line: lineno,
                            reason: format!("camera {}: {e}", c.id),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(CameraDetections { camera_id: c.id, lines })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let z = Measurement::new(cameras).map_err(|e| SimError::ReplayInvalid {
            line: lineno,
            reason: e.to_string(),
        })?;
        frames.push(ReplayFrame {
            t: json.t,
            odom: OdomDelta { dx: json.odom[0], dy: json.odom[1], dtheta: json.odom[2] },
            truth: json.truth.map(|[x, y, theta]| Pose::new(x, y, theta)),
            z,
        });
    }
    Ok(frames)
}

pub fn read_frames_file(path: &Path) -> Result<Vec<ReplayFrame>, SimError> {
    read_frames(BufReader::new(std::fs::File::open(path)?))
}
