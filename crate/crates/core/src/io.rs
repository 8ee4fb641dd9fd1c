//! Binary file formats.
//!
//! Feature clouds (`.fcld`), little-endian:
//!
//! | field     | type          |
//! |-----------|---------------|
//! | magic     | `b"FCLD"`     |
//! | version   | u32 = 1       |
//! | N         | u64           |
//! | D         | u32           |
//! | positions | N × 3 × f32   |
//! | features  | N × D × f32   |
//!
//! Embedding vectors: a u32 dimension followed by that many f32 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::geometry::{FeatureCloud, Vec3};

pub const FCLD_MAGIC: &[u8; 4] = b"FCLD";
pub const FCLD_VERSION: u32 = 1;

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_cloud<W: Write>(cloud: &FeatureCloud, mut w: W) -> std::io::Result<()> {
    w.write_all(FCLD_MAGIC)?;
    w.write_u32::<LittleEndian>(FCLD_VERSION)?;
    w.write_u64::<LittleEndian>(cloud.len() as u64)?;
    w.write_u32::<LittleEndian>(cloud.feature_dim() as u32)?;
    for p in cloud.points() {
        for c in p.iter() {
            w.write_f32::<LittleEndian>(*c as f32)?;
        }
    }
    for f in cloud.features() {
        w.write_f32::<LittleEndian>(*f as f32)?;
    }
    w.flush()
}

/// Parses an FCLD stream. `path` is only used in error messages.
pub fn read_cloud<R: Read>(mut r: R, path: &Path) -> Result<FeatureCloud> {
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != FCLD_MAGIC {
        return Err(format_err(path, "bad magic, expected FCLD"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != FCLD_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let n = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let dim = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    if n == 0 {
        return Err(format_err(path, "cloud has zero points"));
    }
    let mut buf = vec![0f32; n.checked_mul(3).ok_or_else(|| format_err(path, "size overflow"))?];
    r.read_f32_into::<LittleEndian>(&mut buf).map_err(io)?;
    let points = buf
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    let mut feats = vec![0f32; n.checked_mul(dim).ok_or_else(|| format_err(path, "size overflow"))?];
    r.read_f32_into::<LittleEndian>(&mut feats).map_err(io)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io)? != 0 {
        return Err(format_err(path, "trailing bytes after feature block"));
    }
    FeatureCloud::new(points, feats.into_iter().map(f64::from).collect(), dim)
        .map_err(|e| format_err(path, e.to_string()))
}

pub fn save_cloud(cloud: &FeatureCloud, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_cloud(cloud, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_cloud(path: &Path) -> Result<FeatureCloud> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cloud(BufReader::new(file), path)
}

pub fn save_embedding(v: &[f64], path: &Path) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_u32::<LittleEndian>(v.len() as u32)?;
        for x in v {
            w.write_f32::<LittleEndian>(*x as f32)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_embedding(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = bytes.as_slice();
    let dim = r
        .read_u32::<LittleEndian>()
        .map_err(|_| format_err(path, "missing dimension header"))? as usize;
    if r.len() != dim * 4 {
        return Err(format_err(
            path,
            format!("header says {dim} values, payload has {} bytes", r.len()),
        ));
    }
    let mut out = vec![0f32; dim];
    r.read_f32_into::<LittleEndian>(&mut out)
        .map_err(|e| Error::io(path, e))?;
    if !out.iter().all(|v| v.is_finite()) {
        return Err(format_err(path, "non-finite embedding value"));
    }
    Ok(out.into_iter().map(f64::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FeatureCloud {
        FeatureCloud::new(
            vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-0.5, 0.25, 8.0)],
            vec![0.1, 0.2, 0.3, 0.4],
            2,
        )
        .unwrap()
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let mut bytes = Vec::new();
        write_cloud(&sample(), &mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"FCLD");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &1.0f32.to_le_bytes());
        // positions block: 2 * 3 * 4 bytes, then features
        assert_eq!(&bytes[44..48], &0.1f32.to_le_bytes());
        assert_eq!(bytes.len(), 20 + 24 + 16);
    }

    #[test]
    fn rejects_malformed_streams() {
        let p = Path::new("mem");
        let mut bytes = Vec::new();
        write_cloud(&sample(), &mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_cloud(bad.as_slice(), p), Err(Error::Format { .. })));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(read_cloud(bad.as_slice(), p), Err(Error::Format { .. })));

        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(read_cloud(truncated, p), Err(Error::Io { .. })));

        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(read_cloud(extra.as_slice(), p), Err(Error::Format { .. })));

        let mut nan = bytes;
        nan[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_cloud(nan.as_slice(), p), Err(Error::Format { .. })));
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        save_embedding(&[0.6, 0.8], &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], &2u32.to_le_bytes());
        let v = load_embedding(&path).unwrap();
        assert_eq!(v, vec![0.6f32 as f64, 0.8f32 as f64]);

        std::fs::write(&path, [3, 0, 0, 0, 0, 0]).unwrap();
        assert!(load_embedding(&path).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_at_f32_precision(
            rows in prop::collection::vec(
                ((-1e3f32..1e3, -1e3f32..1e3, -1e3f32..1e3), prop::collection::vec(-10f32..10.0, 3)),
                1..50,
            )
        ) {
            let points: Vec<Vec3> = rows.iter().map(|((x, y, z), _)| Vec3::new(*x as f64, *y as f64, *z as f64)).collect();
            let feats: Vec<f64> = rows.iter().flat_map(|(_, f)| f.iter().map(|v| *v as f64)).collect();
            let cloud = FeatureCloud::new(points, feats, 3).unwrap();
            let mut bytes = Vec::new();
            write_cloud(&cloud, &mut bytes).unwrap();
            let back = read_cloud(bytes.as_slice(), Path::new("mem")).unwrap();
            prop_assert_eq!(back, cloud);
        }
    }
}
