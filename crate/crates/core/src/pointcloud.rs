//! Point cloud ingestion: KITTI-style binary dumps, CSV, and a seeded
//! synthetic ring-scan generator.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub reflectance: f32,
    /// Seconds relative to the key frame; zero for a single sweep.
    pub timestamp: f32,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, reflectance: f32) -> Self {
        Point { x, y, z, reflectance, timestamp: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.z.is_finite()
            && self.reflectance.is_finite()
            && self.timestamp.is_finite()
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> f32 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// Binary layout of a point file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinLayout {
    /// x, y, z, reflectance.
    Xyzr,
    /// x, y, z, reflectance, timestamp.
    Xyzrt,
}

impl BinLayout {
    pub fn stride(self) -> usize {
        match self {
            BinLayout::Xyzr => 16,
            BinLayout::Xyzrt => 20,
        }
    }
}

/// An ordered point sequence. Order matters: partition caps are applied in
/// arrival order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub source: String,
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite values.
    pub fn new(points: Vec<Point>, source: impl Into<String>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Malformed(format!("point {i} has a non-finite value")));
        }
        Ok(PointCloud { points, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Appends `copies - 1` translated replicas along x. Used to grow a scene
    /// at constant density.
    pub fn tiled_x(&self, copies: usize, offset: f32) -> PointCloud {
        let mut points = Vec::with_capacity(self.points.len() * copies);
        for c in 0..copies {
            let dx = offset * c as f32;
            points.extend(self.points.iter().map(|p| Point { x: p.x + dx, ..*p }));
        }
        PointCloud { points, source: format!("{}x{copies}", self.source) }
    }
}

pub fn decode_bin(bytes: &[u8], layout: BinLayout) -> Result<Vec<Point>> {
    let stride = layout.stride();
    if !bytes.len().is_multiple_of(stride) {
        return Err(Error::Malformed(format!("byte length {} is not a multiple of {stride}", bytes.len())));
    }
    let f = |rec: &[u8], k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
    Ok(bytes
        .chunks_exact(stride)
        .map(|rec| Point {
            x: f(rec, 0),
            y: f(rec, 1),
            z: f(rec, 2),
            reflectance: f(rec, 3),
            timestamp: if layout == BinLayout::Xyzrt { f(rec, 4) } else { 0.0 },
        })
        .collect())
}

pub fn encode_bin(points: &[Point], layout: BinLayout) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * layout.stride());
    for p in points {
        for v in [p.x, p.y, p.z, p.reflectance] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if layout == BinLayout::Xyzrt {
            out.extend_from_slice(&p.timestamp.to_le_bytes());
        }
    }
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads a KITTI velodyne `.bin` file (four little-endian f32 per point).
pub fn load_kitti_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    load_bin(path, BinLayout::Xyzr)
}

pub fn load_bin(path: impl AsRef<Path>, layout: BinLayout) -> Result<PointCloud> {
    let path = path.as_ref();
    let points = decode_bin(&read_file(path)?, layout)?;
    PointCloud::new(points, path.display().to_string())
}

pub const CSV_HEADER: &str = "x,y,z,r,t";

pub fn parse_csv(text: &str) -> Result<Vec<Point>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Malformed(format!("expected csv header `{CSV_HEADER}`, found `{}`", h.trim())))
        }
        None => return Ok(Vec::new()),
    }
    let mut points = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|s| s.trim().parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Malformed(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != 5 {
            return Err(Error::Malformed(format!(
                "line {}: expected 5 fields, found {}",
                lineno + 1,
                vals.len()
            )));
        }
        points.push(Point { x: vals[0], y: vals[1], z: vals[2], reflectance: vals[3], timestamp: vals[4] });
    }
    Ok(points)
}

pub fn format_csv(points: &[Point]) -> String {
    let mut out = String::with_capacity(points.len() * 40 + 10);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in points {
        // `{}` on f32 prints the shortest representation that round-trips.
        out.push_str(&format!("{},{},{},{},{}\n", p.x, p.y, p.z, p.reflectance, p.timestamp));
    }
    out
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = String::from_utf8(read_file(path)?)
        .map_err(|_| Error::Malformed(format!("{} is not utf-8", path.display())))?;
    PointCloud::new(parse_csv(&text)?, path.display().to_string())
}

pub fn write_points(mut w: impl Write, points: &[Point], layout: BinLayout) -> Result<()> {
    w.write_all(&encode_bin(points, layout))?;
    Ok(())
}

/// A box of uniformly scattered points standing in for an object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f32; 3],
    pub extent: [f32; 3],
    /// Points per cubic meter.
    pub density: f32,
}

impl Blob {
    pub fn point_count(&self) -> usize {
        let vol = self.extent[0] * self.extent[1] * self.extent[2];
        (self.density * vol).round().max(0.0) as usize
    }
}

/// Parameters of the synthetic ring scanner.
///
/// Rings are the ground traces of beams with evenly spaced elevation angles
/// from a sensor `sensor_height` above the ground: ring `k` of `R` lies at
/// `sensor_height / tan(theta_k)`, with `theta` running from the angle that
/// hits the ground at `min_range` to the one that hits it at `max_range`.
/// Rings bunch up near the sensor and spread out with range while each ring
/// carries the same number of points, so points per unit area decay with
/// range, as in a real spinning LiDAR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub ring_count: u32,
    pub points_per_ring: u32,
    pub min_range: f32,
    pub max_range: f32,
    pub sensor_height: f32,
    /// Half-width of the uniform radial jitter (range noise plus ground
    /// roughness), in meters.
    pub range_noise: f32,
    pub height_band: (f32, f32),
    pub dropout: f64,
    pub object_blobs: Vec<Blob>,
}

impl SynthSpec {
    /// The reference sparse scene: roughly 100k points within a 48 m radius.
    pub fn standard_sparse() -> Self {
        let blob =
            |x: f32, y: f32, density: f32| Blob { center: [x, y, -0.9], extent: [4.0, 1.8, 1.5], density };
        SynthSpec {
            ring_count: 32,
            points_per_ring: 3000,
            min_range: 3.5,
            max_range: 48.0,
            sensor_height: 1.73,
            range_noise: 0.1,
            height_band: (-1.8, -1.5),
            dropout: 0.05,
            object_blobs: vec![
                blob(6.0, 2.5, 120.0),
                blob(-8.0, -3.0, 110.0),
                blob(12.0, -6.0, 90.0),
                blob(-15.0, 9.0, 70.0),
                blob(20.0, 14.0, 55.0),
                blob(-24.0, -18.0, 45.0),
                blob(30.0, -4.0, 35.0),
                blob(-33.0, 20.0, 30.0),
                blob(38.0, 25.0, 22.0),
                blob(-41.0, -6.0, 18.0),
                blob(3.0, 35.0, 28.0),
                blob(-5.0, -40.0, 18.0),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ring_count == 0 || self.points_per_ring == 0 {
            return Err(Error::Config("ring_count and points_per_ring must be positive".into()));
        }
        if !(self.min_range > 0.0 && self.max_range.is_finite() && self.min_range <= self.max_range) {
            return Err(Error::Config("ranges must satisfy 0 < min_range <= max_range".into()));
        }
        if !(self.sensor_height.is_finite() && self.sensor_height > 0.0) {
            return Err(Error::Config("sensor_height must be positive".into()));
        }
        if !(self.range_noise.is_finite() && self.range_noise >= 0.0) {
            return Err(Error::Config("range_noise must be non-negative".into()));
        }
        let (lo, hi) = self.height_band;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config("height_band must be finite with lo <= hi".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        for (i, b) in self.object_blobs.iter().enumerate() {
            let ok = b.center.iter().all(|c| c.is_finite())
                && b.extent.iter().all(|e| e.is_finite() && *e > 0.0)
                && b.density.is_finite()
                && b.density >= 0.0;
            if !ok {
                return Err(Error::Config(format!("blob {i} is invalid")));
            }
        }
        Ok(())
    }

    pub fn ring_radius(&self, ring: u32) -> f32 {
        if self.ring_count == 1 {
            return self.max_range;
        }
        let h = self.sensor_height as f64;
        let near = (h / self.min_range as f64).atan();
        let far = (h / self.max_range as f64).atan();
        let t = ring as f64 / (self.ring_count - 1) as f64;
        (h / (near + (far - near) * t).tan()) as f32
    }
}

/// Generates a cloud as a pure function of `(spec, seed)`.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<PointCloud> {
    spec.validate()?;
    let (zlo, zhi) = spec.height_band;
    let per_ring = spec.points_per_ring as usize;
    let mut points = Vec::with_capacity(spec.ring_count as usize * per_ring);
    for ring in 0..spec.ring_count {
        let radius = spec.ring_radius(ring);
        for i in 0..per_ring {
            let mut rng = CounterRng::new(seed, &[0, ring as u64, i as u64]);
            let drop = rng.next_f64();
            let jitter = rng.next_f64();
            let h = rng.next_f64();
            let refl = rng.next_f64();
            let dr = rng.next_f64();
            if drop < spec.dropout {
                continue;
            }
            let theta = std::f64::consts::TAU * (i as f64 + jitter - 0.5) / per_ring as f64;
            let r = radius as f64 + spec.range_noise as f64 * (2.0 * dr - 1.0);
            points.push(Point {
                x: (r * theta.cos()) as f32,
                y: (r * theta.sin()) as f32,
                z: zlo + (zhi - zlo) * h as f32,
                reflectance: refl as f32,
                timestamp: 0.0,
            });
        }
    }
    for (b, blob) in spec.object_blobs.iter().enumerate() {
        for i in 0..blob.point_count() {
            let mut rng = CounterRng::new(seed, &[1, b as u64, i as u64]);
            let mut c = [0f32; 3];
            for (axis, v) in c.iter_mut().enumerate() {
                let u = rng.next_f64() as f32 - 0.5;
                *v = blob.center[axis] + u * blob.extent[axis];
            }
            points.push(Point {
                x: c[0],
                y: c[1],
                z: c[2],
                reflectance: rng.next_f64() as f32,
                timestamp: 0.0,
            });
        }
    }
    PointCloud::new(points, format!("synthetic(seed={seed})"))
}
