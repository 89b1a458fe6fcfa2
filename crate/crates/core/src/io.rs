//! Image files: PFM for signed float data, binary PGM for non-negative
//! integer data such as label maps.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;

/// Encodes a single-channel PFM: little-endian `f32`, scale `-1.0`, rows
/// stored bottom to top.
pub fn encode_pfm(img: &Image) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(img.get(x, y) as f32).to_le_bytes());
        }
    }
    out
}

/// Splits `count` whitespace-separated header tokens off the front of
/// `data`, skipping `#` comments. Returns the tokens and the offset just
/// past the single whitespace byte that ends the header.
fn header_tokens(data: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < data.len() && data[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < data.len() && data[i] == b'#' {
            while i < data.len() && data[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < data.len() && !data[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::format("truncated image header"));
        }
        tokens.push(String::from_utf8_lossy(&data[start..i]).into_owned());
    }
    if i >= data.len() {
        return Err(Error::format("image header has no data section"));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::format(format!("bad image dimension '{tok}'"))),
    }
}

pub fn decode_pfm(data: &[u8]) -> Result<Image> {
    let (tok, off) = header_tokens(data, 4)?;
    match tok[0].as_str() {
        "Pf" => {}
        "PF" => return Err(Error::format("colour PFM is not supported; expected 'Pf'")),
        other => return Err(Error::format(format!("not a PFM file (magic '{other}')"))),
    }
    let (w, h) = (parse_dim(&tok[1])?, parse_dim(&tok[2])?);
    let scale: f64 = tok[3]
        .parse()
        .map_err(|_| Error::format(format!("bad PFM scale '{}'", tok[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format("PFM scale must be non-zero"));
    }
    let body = &data[off..];
    if body.len() != 4 * w * h {
        return Err(Error::format(format!(
            "PFM body has {} bytes, expected {}",
            body.len(),
            4 * w * h
        )));
    }
    let little = scale < 0.0;
    let mut px = vec![0.0; w * h];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (x, row) = (k % w, k / w);
        px[(h - 1 - row) * w + x] = v as f64;
    }
    Image::new(w, h, px)
}

/// Binary 16-bit PGM. Values are rounded and must lie in `0..=65535`.
pub fn encode_pgm16(img: &Image) -> Result<Vec<u8>> {
    let (w, h) = img.dims();
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &v in img.as_slice() {
        let r = v.round();
        if !(0.0..=65535.0).contains(&r) {
            return Err(Error::domain(format!("value {v} does not fit a 16-bit PGM")));
        }
        out.extend_from_slice(&(r as u16).to_be_bytes());
    }
    Ok(out)
}

/// Binary PGM with 8- or 16-bit samples.
pub fn decode_pgm(data: &[u8]) -> Result<Image> {
    let (tok, off) = header_tokens(data, 4)?;
    if tok[0] != "P5" {
        return Err(Error::format(format!("not a binary PGM file (magic '{}')", tok[0])));
    }
    let (w, h) = (parse_dim(&tok[1])?, parse_dim(&tok[2])?);
    let maxval: u32 = tok[3]
        .parse()
        .ok()
        .filter(|m| (1..=65535).contains(m))
        .ok_or_else(|| Error::format(format!("bad PGM maxval '{}'", tok[3])))?;
    let body = &data[off..];
    let bytes = if maxval > 255 { 2 } else { 1 };
    if body.len() != bytes * w * h {
        return Err(Error::format(format!(
            "PGM body has {} bytes, expected {}",
            body.len(),
            bytes * w * h
        )));
    }
    let px = if bytes == 2 {
        body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
    } else {
        body.iter().map(|&b| b as f64).collect()
    };
    Image::new(w, h, px)
}

/// Reads a PFM or PGM file, chosen by its magic bytes.
pub fn read_image(path: &Path) -> Result<Image> {
    let data = fs::read(path)?;
    match data.get(..2) {
        Some(b"Pf") | Some(b"PF") => decode_pfm(&data),
        Some(b"P5") => decode_pgm(&data),
        _ => Err(Error::format(format!("{}: unrecognized image format", path.display()))),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    write_bytes(path, &encode_pfm(img))
}

pub fn write_pgm16(path: &Path, img: &Image) -> Result<()> {
    write_bytes(path, &encode_pgm16(img)?)
}

/// Lower-case hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pfm_layout_is_bottom_up_little_endian() {
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, -4.5]).unwrap();
        let bytes = encode_pfm(&img);
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let body = &bytes[header.len()..];
        // first stored row is the bottom image row
        assert_eq!(&body[0..4], &3.0f32.to_le_bytes());
        assert_eq!(&body[4..8], &(-4.5f32).to_le_bytes());
        assert_eq!(&body[8..12], &1.0f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn big_endian_pfm_and_comments() {
        let mut bytes = b"Pf\n# note\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&7.0f32.to_be_bytes());
        bytes.extend_from_slice(&8.0f32.to_be_bytes());
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!(img.as_slice(), &[8.0, 7.0]);
    }

    #[test]
    fn malformed_files_are_format_errors() {
        assert!(matches!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0"), Err(Error::Format(_))));
        assert!(matches!(decode_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0"), Err(Error::Format(_))));
        assert!(matches!(decode_pfm(b"P6\n1 1\n-1.0\n"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n1 1\n0\n\0"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n1 1"), Err(Error::Format(_))));
    }

    #[test]
    fn pgm_round_trip_and_8_bit() {
        let img = Image::new(3, 1, vec![0.0, 300.0, 65535.0]).unwrap();
        assert_eq!(decode_pgm(&encode_pgm16(&img).unwrap()).unwrap(), img);
        assert!(encode_pgm16(&Image::filled(1, 1, -1.0)).is_err());
        let eight = decode_pgm(b"P5\n2 1\n255\n\x05\xff").unwrap();
        assert_eq!(eight.as_slice(), &[5.0, 255.0]);
    }

    #[test]
    fn files_dispatch_on_magic() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(2, 1, vec![1.5, -2.0]).unwrap();
        let p = dir.path().join("a.pfm");
        write_pfm(&p, &img).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
        let q = dir.path().join("b.pgm");
        write_pgm16(&q, &Image::new(2, 1, vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(read_image(&q).unwrap().as_slice(), &[1.0, 2.0]);
        assert!(matches!(read_image(&dir.path().join("missing")), Err(Error::Io(_))));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    proptest! {
        #[test]
        fn pfm_round_trips_f32_values(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
            let img = Image::from_fn(w, h, |x, y| {
                let r = crate::rng::mix64(seed ^ (y * 8 + x) as u64);
                (r as i64 as f64 / 1e15) as f32 as f64
            });
            prop_assert_eq!(decode_pfm(&encode_pfm(&img)).unwrap(), img);
        }
    }
}
