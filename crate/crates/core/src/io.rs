//! File formats: PLY point sets, JSON point fixtures and row-major binary
//! assignment matrices.
//!
//! Binary payloads are always little-endian.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk encoding of a PLY point set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Writes a point set as a PLY vertex list with double-precision x/y/z.
pub fn write_ply(points: &[Vector3<f64>], format: PlyFormat) -> Vec<u8> {
    let mut out = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        out,
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    )
    .expect("write to Vec cannot fail");
    match format {
        PlyFormat::Ascii => {
            for p in points {
                // `{}` prints the shortest representation that parses back to
                // the same f64, so ascii output stays lossless.
                writeln!(out, "{} {} {}", p.x, p.y, p.z).expect("write to Vec cannot fail");
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for p in points {
                for c in [p.x, p.y, p.z] {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
    }
    out
}

/// Writes a PLY file to disk.
pub fn save_ply(path: &Path, points: &[Vector3<f64>], format: PlyFormat) -> Result<()> {
    std::fs::write(path, write_ply(points, format))?;
    Ok(())
}

/// Reads a PLY vertex list (ascii or binary little-endian, float or double
/// x/y/z properties).
pub fn read_ply(bytes: &[u8]) -> Result<Vec<Vector3<f64>>> {
    let header_end = find_header_end(bytes)?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::Parse("ply header is not utf-8".into()))?;

    let mut format = None;
    let mut count = None;
    let mut props: Vec<(String, bool)> = Vec::new(); // (name, is_double)
    let mut in_vertex = false;
    for line in header.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("ply") | Some("comment") | Some("end_header") | None => {}
            Some("format") => {
                format = match it.next() {
                    Some("ascii") => Some(PlyFormat::Ascii),
                    Some("binary_little_endian") => Some(PlyFormat::BinaryLittleEndian),
                    other => {
                        return Err(Error::Parse(format!("unsupported ply format {other:?}")));
                    }
                };
            }
            Some("element") => {
                let name = it.next().unwrap_or("");
                if name == "vertex" {
                    in_vertex = true;
                    count = it.next().and_then(|s| s.parse::<usize>().ok());
                    if count.is_none() {
                        return Err(Error::Parse("bad vertex count in ply header".into()));
                    }
                } else {
                    in_vertex = false;
                }
            }
            Some("property") => {
                if in_vertex {
                    let ty = it.next().unwrap_or("");
                    let name = it.next().unwrap_or("");
                    let is_double = match ty {
                        "double" | "float64" => true,
                        "float" | "float32" => false,
                        other => {
                            return Err(Error::Parse(format!(
                                "unsupported vertex property type `{other}`"
                            )));
                        }
                    };
                    props.push((name.to_string(), is_double));
                }
            }
            Some(other) => {
                return Err(Error::Parse(format!("unexpected ply header line `{other}`")));
            }
        }
    }
    let format = format.ok_or_else(|| Error::Parse("ply header missing format".into()))?;
    let count = count.ok_or_else(|| Error::Parse("ply header missing vertex element".into()))?;
    let names: Vec<&str> = props.iter().map(|(n, _)| n.as_str()).collect();
    if names != ["x", "y", "z"] {
        return Err(Error::Parse(format!(
            "expected vertex properties x y z, got {names:?}"
        )));
    }

    let body = &bytes[header_end..];
    match format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|_| Error::Parse("ply ascii body is not utf-8".into()))?;
            let mut points = Vec::with_capacity(count);
            for line in text.lines().take(count) {
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|e| Error::Parse(format!("bad float `{s}`: {e}")))
                    })
                    .collect::<Result<_>>()?;
                if vals.len() != 3 {
                    return Err(Error::Parse(format!("vertex line has {} values", vals.len())));
                }
                points.push(Vector3::new(vals[0], vals[1], vals[2]));
            }
            if points.len() != count {
                return Err(Error::Parse(format!(
                    "expected {count} vertices, found {}",
                    points.len()
                )));
            }
            Ok(points)
        }
        PlyFormat::BinaryLittleEndian => {
            let width: usize = props.iter().map(|(_, d)| if *d { 8 } else { 4 }).sum();
            if body.len() < count * width {
                return Err(Error::Parse(format!(
                    "ply body too short: {} bytes for {count} vertices",
                    body.len()
                )));
            }
            let mut points = Vec::with_capacity(count);
            let mut off = 0;
            for _ in 0..count {
                let mut v = [0.0; 3];
                for (slot, (_, is_double)) in v.iter_mut().zip(&props) {
                    if *is_double {
                        *slot = f64::from_le_bytes(body[off..off + 8].try_into().unwrap());
                        off += 8;
                    } else {
                        *slot = f32::from_le_bytes(body[off..off + 4].try_into().unwrap()) as f64;
                        off += 4;
                    }
                }
                points.push(Vector3::new(v[0], v[1], v[2]));
            }
            Ok(points)
        }
    }
}

/// Loads a PLY file from disk.
pub fn load_ply(path: &Path) -> Result<Vec<Vector3<f64>>> {
    read_ply(&std::fs::read(path)?)
}

fn find_header_end(bytes: &[u8]) -> Result<usize> {
    const MARKER: &[u8] = b"end_header\n";
    bytes
        .windows(MARKER.len())
        .position(|w| w == MARKER)
        .map(|p| p + MARKER.len())
        .ok_or_else(|| Error::Parse("ply header has no end_header".into()))
}

/// JSON fixture format for point sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointSetFile {
    pub schema_version: u32,
    pub points: Vec<[f64; 3]>,
}

impl PointSetFile {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        Self {
            schema_version: 1,
            points: points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }

    pub fn to_points(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect()
    }
}

/// Reads a point set from a JSON fixture.
pub fn read_points_json(bytes: &[u8]) -> Result<Vec<Vector3<f64>>> {
    let file: PointSetFile =
        serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("point json: {e}")))?;
    Ok(file.to_points())
}

/// Reads a point set, dispatching on the file extension (`.ply` or `.json`).
pub fn load_points(path: &Path) -> Result<Vec<Vector3<f64>>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => load_ply(path),
        Some("json") => read_points_json(&std::fs::read(path)?),
        other => Err(Error::Parse(format!("unsupported point file extension {other:?}"))),
    }
}

const ASSIGNMENT_MAGIC: &[u8; 4] = b"ASGN";
const DTYPE_F64: u32 = 0;

/// Serializes an assignment matrix: magic `ASGN`, version u32, rows u64,
/// cols u64, dtype u32 (0 = f64) and the row-major little-endian payload.
pub fn write_assignment(matrix: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + matrix.len() * 8);
    out.extend_from_slice(ASSIGNMENT_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(matrix.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.ncols() as u64).to_le_bytes());
    out.extend_from_slice(&DTYPE_F64.to_le_bytes());
    for r in 0..matrix.nrows() {
        for c in 0..matrix.ncols() {
            out.extend_from_slice(&matrix[(r, c)].to_le_bytes());
        }
    }
    out
}

/// Parses the assignment-matrix binary format.
pub fn read_assignment(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < 28 {
        return Err(Error::Parse("assignment file shorter than header".into()));
    }
    if &bytes[0..4] != ASSIGNMENT_MAGIC {
        return Err(Error::Parse("assignment file has wrong magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != 1 {
        return Err(Error::Parse(format!("unsupported assignment version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let dtype = u32::from_le_bytes(bytes[24..28].try_into().unwrap());
    if dtype != DTYPE_F64 {
        return Err(Error::Parse(format!("unsupported assignment dtype {dtype}")));
    }
    let expected = 28 + rows * cols * 8;
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "assignment payload is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut matrix = DMatrix::zeros(rows, cols);
    let mut off = 28;
    for r in 0..rows {
        for c in 0..cols {
            matrix[(r, c)] = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
        }
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_points(n: usize) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn ply_ascii_roundtrip_is_lossless() {
        let points = sample_points(64);
        let bytes = write_ply(&points, PlyFormat::Ascii);
        assert_eq!(read_ply(&bytes).unwrap(), points);
    }

    #[test]
    fn ply_binary_roundtrip_is_lossless() {
        let points = sample_points(64);
        let bytes = write_ply(&points, PlyFormat::BinaryLittleEndian);
        assert_eq!(read_ply(&bytes).unwrap(), points);
    }

    #[test]
    fn ply_reads_float32_properties() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        );
        for c in [1.5f32, -2.0, 0.25] {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        let pts = read_ply(&bytes).unwrap();
        assert_eq!(pts, vec![Vector3::new(1.5, -2.0, 0.25)]);
    }

    #[test]
    fn ply_rejects_garbage() {
        assert!(read_ply(b"not a ply file").is_err());
        assert!(read_ply(b"ply\nformat big_endian 1.0\nend_header\n").is_err());
    }

    #[test]
    fn json_fixture_roundtrip() {
        let points = sample_points(16);
        let json = serde_json::to_vec(&PointSetFile::new(&points)).unwrap();
        assert_eq!(read_points_json(&json).unwrap(), points);
    }

    #[test]
    fn assignment_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = DMatrix::from_fn(5, 9, |_, _| rng.gen_range(0.0..1.0));
        let bytes = write_assignment(&m);
        assert_eq!(read_assignment(&bytes).unwrap(), m);
    }

    #[test]
    fn assignment_rejects_truncation() {
        let m = DMatrix::from_element(3, 3, 1.0 / 3.0);
        let mut bytes = write_assignment(&m);
        bytes.truncate(bytes.len() - 1);
        assert!(read_assignment(&bytes).is_err());
        bytes[0] = b'X';
        assert!(read_assignment(&bytes).is_err());
    }
}
