//! Byte layouts for sensor frames. All multi-byte values are little-endian.

use std::fmt::Write as _;
use std::io::{self, Write};

use super::{BaroSample, DepthImage, GnssSample, ImuSample, LabelImage, MagSample, PointCloud};

/// Size of one encoded point: five `f32` plus one `u8`.
pub const POINT_RECORD_SIZE: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum SensorKind {
    Imu = 1,
    Gnss = 2,
    Baro = 3,
    Mag = 4,
    Lidar = 5,
    Depth = 6,
    Label = 7,
}

impl SensorKind {
    pub const ALL: [SensorKind; 7] = [
        Self::Imu,
        Self::Gnss,
        Self::Baro,
        Self::Mag,
        Self::Lidar,
        Self::Depth,
        Self::Label,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Imu => "imu",
            Self::Gnss => "gnss",
            Self::Baro => "baro",
            Self::Mag => "mag",
            Self::Lidar => "lidar",
            Self::Depth => "depth",
            Self::Label => "label",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorFrame {
    Imu { timestamp: f64, sample: ImuSample },
    Gnss { timestamp: f64, sample: GnssSample },
    Baro { timestamp: f64, sample: BaroSample },
    Mag { timestamp: f64, sample: MagSample },
    PointCloud(PointCloud),
    Depth(DepthImage),
    Label(LabelImage),
}

impl SensorFrame {
    pub fn kind(&self) -> SensorKind {
        match self {
            Self::Imu { .. } => SensorKind::Imu,
            Self::Gnss { .. } => SensorKind::Gnss,
            Self::Baro { .. } => SensorKind::Baro,
            Self::Mag { .. } => SensorKind::Mag,
            Self::PointCloud(_) => SensorKind::Lidar,
            Self::Depth(_) => SensorKind::Depth,
            Self::Label(_) => SensorKind::Label,
        }
    }

    pub fn timestamp(&self) -> f64 {
        match self {
            Self::Imu { timestamp, .. }
            | Self::Gnss { timestamp, .. }
            | Self::Baro { timestamp, .. }
            | Self::Mag { timestamp, .. } => *timestamp,
            Self::PointCloud(c) => c.timestamp,
            Self::Depth(d) => d.timestamp,
            Self::Label(l) => l.timestamp,
        }
    }

    /// Kind-specific payload:
    ///
    /// - imu: accel xyz, gyro xyz as `f64`
    /// - gnss: local xyz, latitude°, longitude°, altitude as `f64`
    /// - baro: altitude as `f64`
    /// - mag: field xyz as `f64`
    /// - lidar: [`encode_point_cloud`]
    /// - depth: PFM image
    /// - label: binary PGM image
    pub fn payload(&self) -> Vec<u8> {
        let f64s = |vals: &[f64]| {
            vals.iter()
                .flat_map(|v| v.to_le_bytes())
                .collect::<Vec<u8>>()
        };
        match self {
            Self::Imu { sample, .. } => f64s(&[
                sample.accel.x,
                sample.accel.y,
                sample.accel.z,
                sample.gyro.x,
                sample.gyro.y,
                sample.gyro.z,
            ]),
            Self::Gnss { sample, .. } => f64s(&[
                sample.position.x,
                sample.position.y,
                sample.position.z,
                sample.latitude_deg,
                sample.longitude_deg,
                sample.altitude,
            ]),
            Self::Baro { sample, .. } => f64s(&[sample.altitude]),
            Self::Mag { sample, .. } => f64s(&[sample.field.x, sample.field.y, sample.field.z]),
            Self::PointCloud(c) => encode_point_cloud(c),
            Self::Depth(d) => {
                let mut out = Vec::new();
                write_pfm(&mut out, d).expect("write to Vec");
                out
            }
            Self::Label(l) => {
                let mut out = Vec::new();
                write_pgm(&mut out, l).expect("write to Vec");
                out
            }
        }
    }
}

/// `u32` point count, then per point `x, y, z, range, intensity` as `f32`
/// followed by a `u8` label. Disabled channels are written as zero.
pub fn encode_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + cloud.points.len() * POINT_RECORD_SIZE);
    out.extend((cloud.points.len() as u32).to_le_bytes());
    for p in &cloud.points {
        for v in [
            p.position.x,
            p.position.y,
            p.position.z,
            p.range,
            p.intensity.unwrap_or(0.0),
        ] {
            out.extend((v as f32).to_le_bytes());
        }
        out.push(p.label.unwrap_or(0));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedPoint {
    pub xyz: [f32; 3],
    pub range: f32,
    pub intensity: f32,
    pub label: u8,
}

pub fn decode_point_cloud(bytes: &[u8]) -> Result<Vec<DecodedPoint>, String> {
    let count = bytes
        .get(..4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
        .ok_or("truncated point count")?;
    let body = &bytes[4..];
    if body.len() != count * POINT_RECORD_SIZE {
        return Err(format!(
            "expected {} bytes of points, found {}",
            count * POINT_RECORD_SIZE,
            body.len()
        ));
    }
    Ok(body
        .chunks_exact(POINT_RECORD_SIZE)
        .map(|rec| {
            let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
            DecodedPoint {
                xyz: [f(0), f(1), f(2)],
                range: f(3),
                intensity: f(4),
                label: rec[20],
            }
        })
        .collect())
}

/// One line per point: `ray x y z range intensity label`.
pub fn point_cloud_ascii(cloud: &PointCloud) -> String {
    let mut s = format!(
        "# timestamp {}\n# ray x y z range intensity label\n",
        cloud.timestamp
    );
    for p in &cloud.points {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {}",
            p.ray_index,
            p.position.x,
            p.position.y,
            p.position.z,
            p.range,
            p.intensity.map_or("-".to_string(), |v| v.to_string()),
            p.label.map_or("-".to_string(), |v| v.to_string()),
        );
    }
    s
}

/// Portable float map, little-endian, bottom row first.
pub fn write_pfm(mut w: impl Write, img: &DepthImage) -> io::Result<()> {
    write!(w, "Pf\n{} {}\n-1.0\n", img.width, img.height)?;
    for row in img.data.chunks_exact(img.width as usize).rev() {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Binary 8-bit graymap, top row first.
pub fn write_pgm(mut w: impl Write, img: &LabelImage) -> io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.data)
}
