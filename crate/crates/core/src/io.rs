//! Netpbm (PGM/PPM), PFM and ASCII PLY readers and writers.
//!
//! Intensities are stored as `[0, 1]` reals in memory and quantized to 8 bits
//! only at file boundaries. PFM rows are stored bottom-to-top, as the format
//! prescribes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{DepthMap, GrayImage, RgbImage};

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_pgm<W: Write>(mut w: W, img: &GrayImage) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.width(), img.height())?;
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_ppm<W: Write>(mut w: W, img: &RgbImage) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", img.width(), img.height())?;
    let bytes: Vec<u8> = img.pixels().iter().flatten().map(|&v| quantize(v)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads whitespace-separated header tokens, skipping `#` comments.
fn header_tokens<R: BufRead>(r: &mut R, count: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::with_capacity(count);
    let mut current = String::new();
    let mut byte = [0u8; 1];
    while tokens.len() < count {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Format("truncated header".into()));
        }
        let c = byte[0] as char;
        if c == '#' && current.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
        } else if c.is_ascii_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else {
            current.push(c);
        }
    }
    Ok(tokens)
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Format(format!("bad {what}: {s:?}")))
}

pub fn read_pgm<R: Read>(r: R) -> Result<GrayImage> {
    let mut r = BufReader::new(r);
    let t = header_tokens(&mut r, 4)?;
    if t[0] != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found {:?}", t[0])));
    }
    let (w, h) = (parse_usize(&t[1], "width")?, parse_usize(&t[2], "height")?);
    let maxval = parse_usize(&t[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    let mut bytes = vec![0u8; w * h];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("truncated PGM pixel data".into()))?;
    let data = bytes.iter().map(|&b| b as f64 / maxval as f64).collect();
    GrayImage::new(w, h, data)
}

/// Writes a single-channel little-endian PFM (`Pf`, scale `-1.0`).
pub fn write_pfm<W: Write>(mut w: W, width: usize, height: usize, data: &[f64]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::Dimension("PFM data length".into()));
    }
    write!(w, "Pf\n{width} {height}\n-1.0\n")?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for row in (0..height).rev() {
        for &v in &data[row * width..(row + 1) * width] {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a single-channel PFM of either endianness. Returns `(width, height,
/// row-major data top-to-bottom)`.
pub fn read_pfm<R: Read>(r: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = BufReader::new(r);
    let t = header_tokens(&mut r, 4)?;
    if t[0] != "Pf" {
        return Err(Error::Format(format!("expected Pf magic, found {:?}", t[0])));
    }
    let (w, h) = (parse_usize(&t[1], "width")?, parse_usize(&t[2], "height")?);
    let scale: f64 = t[3]
        .parse()
        .map_err(|_| Error::Format(format!("bad PFM scale {:?}", t[3])))?;
    let little = scale < 0.0;
    let mut bytes = vec![0u8; w * h * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("truncated PFM data".into()))?;
    let mut data = vec![0.0; w * h];
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row_from_bottom, col) = (i / w, i % w);
        data[(h - 1 - row_from_bottom) * w + col] = v as f64;
    }
    Ok((w, h, data))
}

pub fn write_depth_pfm<W: Write>(w: W, depth: &DepthMap) -> Result<()> {
    write_pfm(w, depth.width(), depth.height(), depth.data())
}

pub fn read_depth_pfm<R: Read>(r: R) -> Result<DepthMap> {
    let (w, h, data) = read_pfm(r)?;
    DepthMap::new(w, h, data)
}

/// ASCII PLY with float32 `x y z` vertices in millimeters.
pub fn write_ply<W: Write>(mut w: W, points: &[[f64; 3]]) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", points.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "end_header")?;
    for p in points {
        writeln!(w, "{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32)?;
    }
    Ok(())
}

/// Vertex count declared in a PLY header.
pub fn ply_vertex_count<R: Read>(r: R) -> Result<usize> {
    for line in BufReader::new(r).lines() {
        let line = line?;
        if let Some(n) = line.strip_prefix("element vertex ") {
            return parse_usize(n.trim(), "vertex count");
        }
        if line == "end_header" {
            break;
        }
    }
    Err(Error::Format("PLY header has no vertex element".into()))
}

pub fn save_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm(&mut w, img)?;
    w.flush()?;
    Ok(())
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    read_pgm(File::open(path)?)
}

pub fn save_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ppm(&mut w, img)?;
    w.flush()?;
    Ok(())
}

pub fn save_pfm(path: impl AsRef<Path>, width: usize, height: usize, data: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pfm(&mut w, width, height, data)?;
    w.flush()?;
    Ok(())
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    read_pfm(File::open(path)?)
}

pub fn save_ply(path: impl AsRef<Path>, points: &[[f64; 3]]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply(&mut w, points)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = read_pgm(&bytes[..]).unwrap();
        assert_eq!(img.dims(), (2, 1));
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_rejects_wrong_magic_and_truncation() {
        assert!(read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_pgm(&b"P5\n4 4\n255\n\x00"[..]).is_err());
    }

    #[test]
    fn pfm_is_bottom_to_top_little_endian() {
        let mut buf = Vec::new();
        write_pfm(&mut buf, 2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&buf[..header.len()], header);
        let first = f32::from_le_bytes(buf[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 3.0);
    }

    #[test]
    fn ply_header_counts_vertices() {
        let mut buf = Vec::new();
        write_ply(&mut buf, &[[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]).unwrap();
        assert_eq!(ply_vertex_count(&buf[..]).unwrap(), 2);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with("3 4 5\n"));
    }

    proptest! {
        #[test]
        fn pgm_round_trip_is_exact_on_8bit_levels(
            (w, h, bytes) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), prop::collection::vec(any::<u8>(), w * h))
            })
        ) {
            let levels = bytes.iter().map(|&b| b as f64 / 255.0).collect();
            let img = GrayImage::new(w, h, levels).unwrap();
            let mut buf = Vec::new();
            write_pgm(&mut buf, &img).unwrap();
            prop_assert_eq!(read_pgm(&buf[..]).unwrap(), img);
        }

        #[test]
        fn pfm_round_trip_matches_f32(data in prop::collection::vec(0.0f64..10.0, 12)) {
            let mut buf = Vec::new();
            write_pfm(&mut buf, 4, 3, &data).unwrap();
            let (w, h, back) = read_pfm(&buf[..]).unwrap();
            prop_assert_eq!((w, h), (4, 3));
            for (a, b) in data.iter().zip(&back) {
                prop_assert_eq!(*a as f32 as f64, *b);
            }
        }
    }
}
