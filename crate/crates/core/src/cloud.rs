//! Point-cloud serialization and voxel downsampling.

use std::collections::HashMap;
use std::io::{self, Write};

use nalgebra::Vector3;

use crate::scene::Point;

/// Writes `t,x,y,z,reflectivity,channel` with a header row.
pub fn write_csv<'a, W: Write + ?Sized>(out: &mut W, points: impl IntoIterator<Item = &'a Point>) -> io::Result<()> {
    writeln!(out, "t,x,y,z,reflectivity,channel")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.t, p.position.x, p.position.y, p.position.z, p.reflectivity, p.channel
        )?;
    }
    Ok(())
}

/// Writes a binary little-endian PLY with double `t x y z reflectivity` and
/// uint `channel` vertex properties.
pub fn write_ply<W: Write + ?Sized>(out: &mut W, points: &[Point]) -> io::Result<()> {
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double t\nproperty double x\nproperty double y\nproperty double z\n\
         property double reflectivity\nproperty uint channel\nend_header\n",
        points.len()
    )?;
    let mut buf = Vec::with_capacity(points.len() * 44);
    for p in points {
        for v in [p.t, p.position.x, p.position.y, p.position.z, p.reflectivity] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&p.channel.to_le_bytes());
    }
    out.write_all(&buf)
}

/// Reads back a file written by [`write_ply`].
pub fn read_ply(bytes: &[u8]) -> io::Result<Vec<Point>> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing end_header"))?
        + marker.len();
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8"))?;
    if !header.contains("format binary_little_endian 1.0") {
        return Err(bad("not a binary little-endian PLY"));
    }
    let count: usize = header
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| bad("missing vertex count"))?;
    let body = &bytes[end..];
    const STRIDE: usize = 44;
    if body.len() != count * STRIDE {
        return Err(bad("vertex data length does not match the header"));
    }
    Ok(body
        .chunks_exact(STRIDE)
        .map(|c| {
            let f = |i: usize| f64::from_le_bytes(c[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
            Point {
                t: f(0),
                position: Vector3::new(f(1), f(2), f(3)),
                reflectivity: f(4),
                channel: u32::from_le_bytes(c[40..44].try_into().expect("4 bytes")),
            }
        })
        .collect())
}

/// Streaming voxel grid that keeps the centroid of the points in each cell.
#[derive(Clone, Debug)]
pub struct VoxelAccumulator {
    size: f64,
    cells: HashMap<[i64; 3], (Vector3<f64>, u32)>,
}

impl VoxelAccumulator {
    pub fn new(size: f64) -> Self {
        assert!(size > 0.0, "voxel size must be positive");
        VoxelAccumulator {
            size,
            cells: HashMap::new(),
        }
    }

    pub fn insert(&mut self, p: &Vector3<f64>) {
        let key = [0, 1, 2].map(|i| (p[i] / self.size).floor() as i64);
        let e = self.cells.entry(key).or_insert((Vector3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Centroids ordered by voxel key, independent of insertion order.
    pub fn centroids(&self) -> Vec<Vector3<f64>> {
        let mut v: Vec<_> = self.cells.iter().collect();
        v.sort_unstable_by_key(|(k, _)| **k);
        v.into_iter().map(|(_, (s, n))| s / *n as f64).collect()
    }
}

/// Voxel-downsampled copy of `points`.
pub fn voxel_downsample(points: &[Vector3<f64>], size: f64) -> Vec<Vector3<f64>> {
    let mut acc = VoxelAccumulator::new(size);
    for p in points {
        acc.insert(p);
    }
    acc.centroids()
}

/// Accumulates returns of a static sensor per beam-direction cell and keeps
/// each cell's centroid.
///
/// Binning on direction rather than position keeps range noise from deciding
/// which cell a return lands in, so the centroid of a planar patch stays on
/// the plane. Spatial voxels cut a noisy surface into offset sheets whose
/// truncated means are biased.
#[derive(Clone, Debug)]
pub struct BeamAccumulator {
    cell: f64,
    cells: HashMap<[i64; 2], (Vector3<f64>, u32)>,
}

impl BeamAccumulator {
    /// `cell` is the angular cell size in radians over
    /// `(atan2(x, z), atan2(y, z))` of the sensor-frame point.
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        BeamAccumulator {
            cell,
            cells: HashMap::new(),
        }
    }

    /// Points must lie in front of the sensor (`z > 0`); others are ignored.
    pub fn insert(&mut self, p: &Vector3<f64>) {
        if !(p.z > 0.0) {
            return;
        }
        let key = [p.x.atan2(p.z), p.y.atan2(p.z)].map(|a| (a / self.cell).floor() as i64);
        let e = self.cells.entry(key).or_insert((Vector3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Centroids ordered by cell key, independent of insertion order.
    pub fn centroids(&self) -> Vec<Vector3<f64>> {
        let mut v: Vec<_> = self.cells.iter().collect();
        v.sort_unstable_by_key(|(k, _)| **k);
        v.into_iter().map(|(_, (s, n))| s / *n as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_points() -> Vec<Point> {
        (0..5)
            .map(|i| Point {
                t: i as f64 * 1e-5,
                position: Vector3::new(1.0 + i as f64, -0.25, 1.0 / 3.0),
                reflectivity: 0.5,
                channel: i,
            })
            .collect()
    }

    #[test]
    fn csv_has_header_and_round_trip_values() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &sample_points()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,y,z,reflectivity,channel"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row, vec![0.0, 1.0, -0.25, 1.0 / 3.0, 0.5, 0.0]);
    }

    #[test]
    fn ply_round_trip() {
        let pts = sample_points();
        let mut buf = Vec::new();
        write_ply(&mut buf, &pts).unwrap();
        assert_eq!(read_ply(&buf).unwrap(), pts);
        assert!(read_ply(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn voxel_centroids_are_order_independent() {
        let pts: Vec<Vector3<f64>> = (0..1000)
            .map(|i| {
                let f = i as f64;
                Vector3::new((f * 0.37).sin(), (f * 0.11).cos(), f * 1e-3)
            })
            .collect();
        let a = voxel_downsample(&pts, 0.1);
        let mut rev = pts.clone();
        rev.reverse();
        let b = voxel_downsample(&rev, 0.1);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!(a.len() < pts.len());
    }
}
