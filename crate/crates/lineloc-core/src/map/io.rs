//! Map persistence: the little-endian "LFM1" binary raster format and the
//! vector map JSON schema.
//!
//! Layout of an LFM1 file:
//!
//! ```text
//! magic "LFM1" | u16 version | u32 width | u32 height
//! f64 resolution | f64 origin_x | f64 origin_y | f64 sigma_shift | f64 alpha
//! u8 channel_count | per channel: u8 id + width*height f32, row-major
//! ```
//!
//! Channel ids: 1 = line raster, 2 = shift, 3 = dist, 4 = occupancy.
//! Row 0 lies at the origin and +row = +y. Save/load round-trips are
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{Bounds, Channel, MapError, MapMeta, ProbMap, Raster, VectorMap};
use crate::geometry::{Frame, Point2, Polyline};

const MAGIC: [u8; 4] = *b"LFM1";
const FORMAT_VERSION: u16 = 1;

impl ProbMap {
    pub fn save(&self, path: &Path) -> Result<(), MapError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), MapError> {
        w.write_all(&MAGIC)?;
        w.write_u16::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(self.meta.width)?;
        w.write_u32::<LittleEndian>(self.meta.height)?;
        w.write_f64::<LittleEndian>(self.meta.resolution)?;
        w.write_f64::<LittleEndian>(self.meta.origin.x)?;
        w.write_f64::<LittleEndian>(self.meta.origin.y)?;
        w.write_f64::<LittleEndian>(self.sigma_shift)?;
        w.write_f64::<LittleEndian>(self.alpha)?;
        w.write_u8(Channel::ALL.len() as u8)?;
        let mut buf = Vec::with_capacity(64 * 1024);
        for channel in Channel::ALL {
            w.write_u8(channel.id())?;
            for chunk in self.channel(channel).values().chunks(16 * 1024) {
                buf.clear();
                for v in chunk {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ProbMap, MapError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<ProbMap, MapError> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if magic != MAGIC {
            return Err(MapError::BadMagic(magic));
        }
        let version = read_u16(r)?;
        if version != FORMAT_VERSION {
            return Err(MapError::VersionMismatch(version));
        }
        let width = read_u32(r)?;
        let height = read_u32(r)?;
        let resolution = read_f64(r)?;
        let origin_x = read_f64(r)?;
        let origin_y = read_f64(r)?;
        let sigma_shift = read_f64(r)?;
        let alpha = read_f64(r)?;
        let meta = MapMeta::new(width, height, resolution, Point2::new(origin_x, origin_y))?;
        if !(sigma_shift > 0.0) || !sigma_shift.is_finite() {
            return Err(MapError::BadHeader("sigma_shift"));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(MapError::BadHeader("alpha"));
        }

        let channel_count = read_u8(r)?;
        let mut channels: [Option<Raster>; 4] = [None, None, None, None];
        for _ in 0..channel_count {
            let id = read_u8(r)?;
            Channel::from_id(id).ok_or(MapError::UnknownChannel(id))?;
            let slot = &mut channels[(id - 1) as usize];
            if slot.is_some() {
                return Err(MapError::DuplicateChannel(id));
            }
            let len = meta.pixel_count();
            let mut bytes = vec![0u8; len * 4];
            read_exact(r, &mut bytes)?;
            let data: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            *slot = Some(Raster::from_data(width, height, data));
        }
        let [line_raster, shift, dist, occupancy] = channels;
        Ok(ProbMap::from_parts(
            meta,
            line_raster.ok_or(MapError::MissingChannel(Channel::LineRaster))?,
            shift.ok_or(MapError::MissingChannel(Channel::Shift))?,
            dist.ok_or(MapError::MissingChannel(Channel::Dist))?,
            occupancy.ok_or(MapError::MissingChannel(Channel::Occupancy))?,
            sigma_shift,
            alpha,
        ))
    }

    /// Serialized bytes of the map, handy for byte-identity checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write cannot fail");
        buf
    }
}

fn truncated(e: std::io::Error) -> MapError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        MapError::Truncated
    } else {
        MapError::Io(e)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), MapError> {
    r.read_exact(buf).map_err(truncated)
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8, MapError> {
    r.read_u8().map_err(truncated)
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, MapError> {
    r.read_u16::<LittleEndian>().map_err(truncated)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, MapError> {
    r.read_u32::<LittleEndian>().map_err(truncated)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, MapError> {
    r.read_f64::<LittleEndian>().map_err(truncated)
}

/// JSON schema of a vector map: `lines` as point arrays, `drivable` as
/// polygon rings, optional `[xmin, ymin, xmax, ymax]` bounds.
#[derive(Debug, Serialize, Deserialize)]
pub struct VectorMapJson {
    pub lines: Vec<JsonLine>,
    #[serde(default)]
    pub drivable: Vec<JsonRing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 4]>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JsonLine {
    pub points: Vec<Point2>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JsonRing {
    pub ring: Vec<Point2>,
}

impl VectorMap {
    pub fn from_json_str(s: &str) -> Result<Self, MapError> {
        let raw: VectorMapJson = serde_json::from_str(s)?;
        let lines = raw
            .lines
            .into_iter()
            .map(|l| Polyline::new(l.points, Frame::Map))
            .collect::<Result<Vec<_>, _>>()?;
        let drivable = raw.drivable.into_iter().map(|r| r.ring).collect();
        let bounds = match raw.bounds {
            Some([xmin, ymin, xmax, ymax]) => Some(Bounds::new(
                Point2::new(xmin, ymin),
                Point2::new(xmax, ymax),
            )?),
            None => None,
        };
        VectorMap::new(lines, drivable, bounds)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, MapError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let raw = VectorMapJson {
            lines: self
                .lines
                .iter()
                .map(|l| JsonLine { points: l.points.clone() })
                .collect(),
            drivable: self
                .drivable
                .iter()
                .map(|r| JsonRing { ring: r.clone() })
                .collect(),
            bounds: Some([
                self.bounds.min.x,
                self.bounds.min.y,
                self.bounds.max.x,
                self.bounds.max.y,
            ]),
        };
        serde_json::to_string_pretty(&raw).expect("vector map serialization cannot fail")
    }
}
