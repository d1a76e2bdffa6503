//! Probability-raster maps compiled from vector line maps.
//!
//! A [`VectorMap`] (reference polylines plus drivable-area polygons) is
//! compiled into a [`ProbMap`]: a multichannel raster holding the line
//! raster, a shift-likelihood channel, an exact Euclidean distance
//! transform, and a binary occupancy channel. The shift channel stores the
//! full false-positive-aware density, so scoring a detection point costs a
//! single lookup.

mod edt;
mod io;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Frame, GeometryError, Point2, Polyline};

pub use io::VectorMapJson;

#[derive(Debug, Error)]
pub enum MapError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid vector map: {0}")]
    InvalidVectorMap(String),
    #[error("bad magic {0:?}, expected \"LFM1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported map format version {0}")]
    VersionMismatch(u16),
    #[error("map file truncated")]
    Truncated,
    #[error("unknown channel id {0}")]
    UnknownChannel(u8),
    #[error("channel id {0} appears twice")]
    DuplicateChannel(u8),
    #[error("channel {0:?} missing from map file")]
    MissingChannel(Channel),
    #[error("invalid map header field: {0}")]
    BadHeader(&'static str),
    #[error("malformed vector map JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("map metadata invalid: {0}")]
    BadMeta(&'static str),
    #[error("{0} must be positive")]
    NonPositiveParam(&'static str),
    #[error("line point ({x}, {y}) falls outside the raster extent")]
    LineOutOfBounds { x: f64, y: f64 },
    #[error("distance transform needs at least one line pixel")]
    EmptyLineRaster,
    #[error("raster does not cover the vector map bounds")]
    MetaTooSmall,
}

/// Axis-aligned rectangle in map-frame meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point2,
    pub max: Point2,
}

impl Bounds {
    pub fn new(min: Point2, max: Point2) -> Result<Self, MapError> {
        if !(min.is_finite() && max.is_finite()) || min.x > max.x || min.y > max.y {
            return Err(MapError::InvalidVectorMap(format!(
                "degenerate bounds [{:?}, {:?}]",
                min, max
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    fn expand(&mut self, p: &Point2) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }
}

/// Vector source map: reference linear features plus drivable-area
/// polygons, all in map-frame meters.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorMap {
    pub lines: Vec<Polyline>,
    pub drivable: Vec<Vec<Point2>>,
    pub bounds: Bounds,
}

impl VectorMap {
    pub fn new(
        lines: Vec<Polyline>,
        drivable: Vec<Vec<Point2>>,
        bounds: Option<Bounds>,
    ) -> Result<Self, MapError> {
        for line in &lines {
            if line.frame != Frame::Map {
                return Err(MapError::InvalidVectorMap(
                    "reference lines must be in the map frame".into(),
                ));
            }
        }
        for ring in &drivable {
            if ring.len() < 3 {
                return Err(MapError::InvalidVectorMap(
                    "drivable polygon needs at least 3 vertices".into(),
                ));
            }
            if ring.iter().any(|p| !p.is_finite()) {
                return Err(MapError::InvalidVectorMap(
                    "drivable polygon has non-finite vertices".into(),
                ));
            }
            if !ring_is_simple(ring) {
                return Err(MapError::InvalidVectorMap(
                    "drivable polygon is self-intersecting".into(),
                ));
            }
        }

        let points = || {
            lines
                .iter()
                .flat_map(|l| l.points.iter())
                .chain(drivable.iter().flatten())
        };
        let bounds = match bounds {
            Some(b) => {
                if let Some(p) = points().find(|p| !b.contains(p)) {
                    return Err(MapError::InvalidVectorMap(format!(
                        "point ({}, {}) lies outside the declared bounds",
                        p.x, p.y
                    )));
                }
                b
            }
            None => {
                let mut iter = points();
                let first = iter.next().ok_or_else(|| {
                    MapError::InvalidVectorMap("map has no lines and no drivable area".into())
                })?;
                let mut b = Bounds { min: *first, max: *first };
                for p in iter {
                    b.expand(p);
                }
                b
            }
        };
        Ok(Self { lines, drivable, bounds })
    }
}

/// Proper-intersection check between non-adjacent edges; shared vertices of
/// neighbouring edges are allowed.
pub(crate) fn ring_is_simple(ring: &[Point2]) -> bool {
    let n = ring.len();
    let edge = |i: usize| (ring[i], ring[(i + 1) % n]);
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (a, b) = edge(i);
            let (c, d) = edge(j);
            if segments_properly_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn segments_properly_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let cross = |o: Point2, p: Point2, q: Point2| (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
    let d1 = cross(a, b, c);
    let d2 = cross(a, b, d);
    let d3 = cross(c, d, a);
    let d4 = cross(c, d, b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Raster geometry: pixel grid size, scale, and the map-frame position of
/// pixel (0, 0)'s center. World coordinates relate to pixel indices by
/// `world = origin + (col, row) * resolution` with nearest-pixel rounding
/// on the way in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub width: u32,
    pub height: u32,
    pub resolution: f64,
    pub origin: Point2,
}

impl MapMeta {
    pub fn new(width: u32, height: u32, resolution: f64, origin: Point2) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::BadMeta("width and height must be at least 1"));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(MapError::BadMeta("resolution must be positive and finite"));
        }
        if !origin.is_finite() {
            return Err(MapError::BadMeta("origin must be finite"));
        }
        Ok(Self { width, height, resolution, origin })
    }

    /// Smallest raster at `resolution` whose pixel centers cover `bounds`
    /// extended by `margin` meters on every side.
    pub fn covering(bounds: &Bounds, resolution: f64, margin: f64) -> Result<Self, MapError> {
        if !(margin >= 0.0) {
            return Err(MapError::BadMeta("margin must be non-negative"));
        }
        let origin = Point2::new(bounds.min.x - margin, bounds.min.y - margin);
        let span_x = bounds.max.x + margin - origin.x;
        let span_y = bounds.max.y + margin - origin.y;
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(MapError::BadMeta("resolution must be positive and finite"));
        }
        let width = (span_x / resolution).ceil() as u32 + 1;
        let height = (span_y / resolution).ceil() as u32 + 1;
        Self::new(width, height, resolution, origin)
    }

    /// Nearest pixel for a world point, or `None` when the point falls
    /// outside the raster.
    #[inline]
    pub fn world_to_pixel(&self, p: Point2) -> Option<(u32, u32)> {
        let col = ((p.x - self.origin.x) / self.resolution).round();
        let row = ((p.y - self.origin.y) / self.resolution).round();
        if col >= 0.0 && row >= 0.0 && col < self.width as f64 && row < self.height as f64 {
            Some((col as u32, row as u32))
        } else {
            None
        }
    }

    #[inline]
    pub fn pixel_center(&self, col: u32, row: u32) -> Point2 {
        Point2::new(
            self.origin.x + col as f64 * self.resolution,
            self.origin.y + row as f64 * self.resolution,
        )
    }

    pub fn covers(&self, bounds: &Bounds) -> bool {
        self.world_to_pixel(bounds.min).is_some() && self.world_to_pixel(bounds.max).is_some()
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// One raster channel, row-major with row 0 at the origin and +row = +y.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl Raster {
    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    /// Builds a channel from row-major values; `data.len()` must equal
    /// `width * height`.
    pub fn from_values(width: u32, height: u32, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize);
        Self { width, height, data }
    }

    pub(crate) fn from_data(width: u32, height: u32, data: Vec<f32>) -> Self {
        Self::from_values(width, height, data)
    }

    #[inline]
    fn index(&self, col: u32, row: u32) -> usize {
        debug_assert!(col < self.width && row < self.height);
        row as usize * self.width as usize + col as usize
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> f32 {
        self.data[self.index(col, row)]
    }

    #[inline]
    pub(crate) fn set(&mut self, col: u32, row: u32, value: f32) {
        let i = self.index(col, row);
        self.data[i] = value;
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }
}

/// Channel identifiers, matching the ids in the map file format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    LineRaster,
    Shift,
    Dist,
    Occupancy,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::LineRaster,
        Channel::Shift,
        Channel::Dist,
        Channel::Occupancy,
    ];

    pub fn id(self) -> u8 {
        match self {
            Channel::LineRaster => 1,
            Channel::Shift => 2,
            Channel::Dist => 3,
            Channel::Occupancy => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Channel> {
        match id {
            1 => Some(Channel::LineRaster),
            2 => Some(Channel::Shift),
            3 => Some(Channel::Dist),
            4 => Some(Channel::Occupancy),
            _ => None,
        }
    }
}

/// Compiled multichannel probability map. Immutable after compilation or
/// load; safe to share read-only across any number of scoring workers.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    meta: MapMeta,
    line_raster: Raster,
    shift: Raster,
    dist: Raster,
    occupancy: Raster,
    sigma_shift: f64,
    alpha: f64,
}

impl ProbMap {
    pub fn meta(&self) -> &MapMeta {
        &self.meta
    }

    pub fn sigma_shift(&self) -> f64 {
        self.sigma_shift
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The false-positive floor `1/alpha` added to every shift-channel
    /// pixel and returned for out-of-map shift lookups.
    pub fn uniform_floor(&self) -> f64 {
        1.0 / self.alpha
    }

    /// Peak shift density: Gaussian peak at zero distance plus the floor.
    pub fn shift_peak(&self) -> f64 {
        gaussian_2d_peak(self.sigma_shift) + self.uniform_floor()
    }

    pub fn channel(&self, channel: Channel) -> &Raster {
        match channel {
            Channel::LineRaster => &self.line_raster,
            Channel::Shift => &self.shift,
            Channel::Dist => &self.dist,
            Channel::Occupancy => &self.occupancy,
        }
    }

    /// Nearest-pixel O(1) lookup. Out-of-bounds points return the channel's
    /// neutral value: the shift floor `1/alpha`, an infinite distance, and
    /// zero for occupancy and the line raster, so a detection projected
    /// outside the mapped area behaves like a false positive.
    #[inline]
    pub fn lookup(&self, channel: Channel, p: Point2) -> f64 {
        match self.meta.world_to_pixel(p) {
            Some((col, row)) => self.channel(channel).get(col, row) as f64,
            None => match channel {
                Channel::Shift => self.uniform_floor(),
                Channel::Dist => f64::INFINITY,
                Channel::LineRaster | Channel::Occupancy => 0.0,
            },
        }
    }

    pub(crate) fn from_parts(
        meta: MapMeta,
        line_raster: Raster,
        shift: Raster,
        dist: Raster,
        occupancy: Raster,
        sigma_shift: f64,
        alpha: f64,
    ) -> Self {
        Self { meta, line_raster, shift, dist, occupancy, sigma_shift, alpha }
    }
}

/// Peak of the 2-D isotropic Gaussian used by the shift model.
pub fn gaussian_2d_peak(sigma: f64) -> f64 {
    1.0 / (TAU * sigma * sigma)
}

/// Rasterizes reference polylines into a binary channel. Every pixel whose
/// square (center within res/2 Chebyshev of the line) is traversed by a
/// segment is set; exact corner crossings step diagonally, so a perfect
/// diagonal yields the 8-connected staircase. Any point on a reference
/// line therefore lands in a set pixel, which keeps nearest-pixel distance
/// lookups at line points within the rasterization bound.
pub fn rasterize_lines(vmap: &VectorMap, meta: &MapMeta) -> Result<Raster, MapError> {
    let mut raster = Raster::filled(meta.width, meta.height, 0.0);
    for line in &vmap.lines {
        for p in &line.points {
            if meta.world_to_pixel(*p).is_none() {
                return Err(MapError::LineOutOfBounds { x: p.x, y: p.y });
            }
        }
        for seg in line.points.windows(2) {
            traverse_cells(seg[0], seg[1], meta, |c, r| raster.set(c, r, 1.0));
        }
    }
    Ok(raster)
}

/// Grid traversal between two in-bounds points: visits every cell the
/// segment passes through, stepping both axes at exact corner crossings.
fn traverse_cells(from: Point2, to: Point2, meta: &MapMeta, mut plot: impl FnMut(u32, u32)) {
    let (c0, r0) = meta.world_to_pixel(from).expect("endpoint validated");
    let (c1, r1) = meta.world_to_pixel(to).expect("endpoint validated");
    let (mut cx, mut cy) = (c0 as i64, r0 as i64);
    let (ex, ey) = (c1 as i64, r1 as i64);
    let res = meta.resolution;
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    let sx: i64 = if dx >= 0.0 { 1 } else { -1 };
    let sy: i64 = if dy >= 0.0 { 1 } else { -1 };
    // Parameter along the segment of the next cell-boundary crossing.
    let mut t_max_x = if dx == 0.0 {
        f64::INFINITY
    } else {
        let boundary = meta.origin.x + (cx as f64 + 0.5 * sx as f64) * res;
        (boundary - from.x) / dx
    };
    let mut t_max_y = if dy == 0.0 {
        f64::INFINITY
    } else {
        let boundary = meta.origin.y + (cy as f64 + 0.5 * sy as f64) * res;
        (boundary - from.y) / dy
    };
    let t_delta_x = if dx == 0.0 { f64::INFINITY } else { (res / dx).abs() };
    let t_delta_y = if dy == 0.0 { f64::INFINITY } else { (res / dy).abs() };

    let in_bounds = |x: i64, y: i64| {
        x >= 0 && y >= 0 && x < meta.width as i64 && y < meta.height as i64
    };
    let cap = 2 * ((ex - cx).abs() + (ey - cy).abs()) + 4;
    let mut steps = 0;
    loop {
        if in_bounds(cx, cy) {
            plot(cx as u32, cy as u32);
        }
        if (cx == ex && cy == ey) || steps > cap {
            break;
        }
        steps += 1;
        if t_max_x.is_finite() && (t_max_x - t_max_y).abs() <= 1e-12 {
            cx += sx;
            cy += sy;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        } else if t_max_x < t_max_y {
            cx += sx;
            t_max_x += t_delta_x;
        } else {
            cy += sy;
            t_max_y += t_delta_y;
        }
    }
    if steps > cap {
        plot(ex as u32, ey as u32);
    }
}

/// Exact Euclidean distance (meters) from every pixel center to the
/// nearest set pixel center of the line raster.
pub fn build_distance_channel(line_raster: &Raster, meta: &MapMeta) -> Result<Raster, MapError> {
    let set: Vec<bool> = line_raster.values().iter().map(|&v| v > 0.5).collect();
    if !set.iter().any(|&s| s) {
        return Err(MapError::EmptyLineRaster);
    }
    let d2 = edt::squared_edt(&set, meta.width as usize, meta.height as usize);
    let data = d2
        .iter()
        .map(|&d2| (meta.resolution * (d2 as f64).sqrt()) as f32)
        .collect();
    Ok(Raster::from_data(meta.width, meta.height, data))
}

/// Shift-likelihood channel: the zero-mean Gaussian of the nearest-line
/// distance plus the uniform false-positive floor `1/alpha`, evaluated per
/// pixel from the stored distance channel.
pub fn build_shift_channel(dist: &Raster, sigma_shift: f64, alpha: f64) -> Result<Raster, MapError> {
    if !(sigma_shift > 0.0) || !sigma_shift.is_finite() {
        return Err(MapError::NonPositiveParam("sigma_shift"));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(MapError::NonPositiveParam("alpha"));
    }
    let peak = gaussian_2d_peak(sigma_shift);
    let floor = 1.0 / alpha;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma_shift * sigma_shift);
    let data = dist
        .values()
        .iter()
        .map(|&d| {
            let d = d as f64;
            (peak * (-d * d * inv_two_sigma_sq).exp() + floor) as f32
        })
        .collect();
    Ok(Raster::from_data(dist.width(), dist.height(), data))
}

/// Binary drivable-area channel: a pixel is 1 iff its center lies inside
/// any drivable polygon under the even-odd rule.
pub fn build_occupancy_channel(vmap: &VectorMap, meta: &MapMeta) -> Raster {
    let mut raster = Raster::filled(meta.width, meta.height, 0.0);
    if vmap.drivable.is_empty() {
        log::warn!("vector map has no drivable polygons; occupancy channel is all zero");
        return raster;
    }
    let mut crossings: Vec<f64> = Vec::new();
    for ring in &vmap.drivable {
        let n = ring.len();
        for row in 0..meta.height {
            let y = meta.origin.y + row as f64 * meta.resolution;
            crossings.clear();
            for i in 0..n {
                let a = ring[i];
                let b = ring[(i + 1) % n];
                if (a.y <= y) != (b.y <= y) {
                    crossings.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
            crossings.sort_by(|p, q| p.partial_cmp(q).unwrap());
            for pair in crossings.chunks_exact(2) {
                let (x0, x1) = (pair[0], pair[1]);
                // Columns whose centers satisfy x0 <= center < x1, resolved
                // by direct comparison so boundary pixels agree with a
                // per-pixel even-odd test.
                let mut lo = ((x0 - meta.origin.x) / meta.resolution).ceil() as i64;
                while (lo as f64) * meta.resolution + meta.origin.x < x0 {
                    lo += 1;
                }
                while ((lo - 1) as f64) * meta.resolution + meta.origin.x >= x0 {
                    lo -= 1;
                }
                let mut hi = ((x1 - meta.origin.x) / meta.resolution).floor() as i64;
                while (hi as f64) * meta.resolution + meta.origin.x >= x1 {
                    hi -= 1;
                }
                while ((hi + 1) as f64) * meta.resolution + meta.origin.x < x1 {
                    hi += 1;
                }
                let lo = lo.max(0);
                let hi = hi.min(meta.width as i64 - 1);
                for col in lo..=hi {
                    raster.set(col as u32, row, 1.0);
                }
            }
        }
    }
    raster
}

/// Runs the four channel builders and assembles the probability map.
pub fn compile(
    vmap: &VectorMap,
    meta: &MapMeta,
    sigma_shift: f64,
    alpha: f64,
) -> Result<ProbMap, MapError> {
    if !meta.covers(&vmap.bounds) {
        return Err(MapError::MetaTooSmall);
    }
    let line_raster = rasterize_lines(vmap, meta)?;
    let dist = build_distance_channel(&line_raster, meta)?;
    let shift = build_shift_channel(&dist, sigma_shift, alpha)?;
    let occupancy = build_occupancy_channel(vmap, meta);
    Ok(ProbMap::from_parts(
        *meta,
        line_raster,
        shift,
        dist,
        occupancy,
        sigma_shift,
        alpha,
    ))
}
