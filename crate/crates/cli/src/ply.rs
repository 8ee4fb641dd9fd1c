//! ASCII PLY output of coloured point clouds.

use std::io::Write;

use tog_core::Vec3;

/// Maps a channel in `[0, 1]` to `0..=255`.
pub fn to_byte(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Positions are written as `f32`, in their shortest round-tripping form.
pub fn write_ply<W: Write>(mut w: W, points: &[Vec3], colors: &[[f64; 3]]) -> std::io::Result<()> {
    assert_eq!(points.len(), colors.len());
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", points.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property float {axis}")?;
    }
    for channel in ["red", "green", "blue"] {
        writeln!(w, "property uchar {channel}")?;
    }
    writeln!(w, "end_header")?;
    for (p, c) in points.iter().zip(colors) {
        writeln!(
            w,
            "{} {} {} {} {} {}",
            p.x as f32,
            p.y as f32,
            p.z as f32,
            to_byte(c[0]),
            to_byte(c[1]),
            to_byte(c[2])
        )?;
    }
    w.flush()
}
