use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::render::Mask;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn encode_error(path: &Path, e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other),
    }
}

/// 8-bit PNG; with `channels == 3` the gray plane is replicated as RGB.
pub fn write_png(path: &Path, width: usize, height: usize, gray: &[u8], channels: u8) -> Result<()> {
    let mut enc = png::Encoder::new(create(path)?, width as u32, height as u32);
    enc.set_depth(png::BitDepth::Eight);
    let rgb;
    let data = if channels == 3 {
        enc.set_color(png::ColorType::Rgb);
        rgb = gray.iter().flat_map(|&g| [g, g, g]).collect::<Vec<u8>>();
        &rgb[..]
    } else {
        enc.set_color(png::ColorType::Grayscale);
        gray
    };
    let mut writer = enc.write_header().map_err(|e| encode_error(path, e))?;
    writer.write_image_data(data).map_err(|e| encode_error(path, e))?;
    writer.finish().map_err(|e| encode_error(path, e))
}

/// 1-bit grayscale PNG, set pixels white.
pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let (w, h) = (mask.width(), mask.height());
    let stride = w.div_ceil(8);
    let mut packed = vec![0u8; stride * h];
    for (x, y) in mask.pixels() {
        packed[y * stride + x / 8] |= 0x80 >> (x % 8);
    }
    let mut enc = png::Encoder::new(create(path)?, w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::One);
    let mut writer = enc.write_header().map_err(|e| encode_error(path, e))?;
    writer.write_image_data(&packed).map_err(|e| encode_error(path, e))?;
    writer.finish().map_err(|e| encode_error(path, e))
}

/// Binary (P5) PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    let mut f = create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")
        .and_then(|_| f.write_all(gray))
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a PNG as a row-major grid of values in [0, 1]. Colour images are
/// reduced to their first channel; alpha is dropped.
pub fn read_png_gray(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(|e| Error::format(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let samples = info.color_type.samples();
    let bytes = match info.bit_depth {
        png::BitDepth::Sixteen => 2,
        _ => 1,
    };
    let step = samples * bytes;
    let values = buf[..info.buffer_size()]
        .chunks_exact(step)
        .map(|px| {
            if bytes == 2 {
                u16::from_be_bytes([px[0], px[1]]) as f64 / 65535.0
            } else {
                px[0] as f64 / 255.0
            }
        })
        .collect::<Vec<f64>>();
    if values.len() != w * h {
        return Err(Error::format(path, "unexpected PNG layout"));
    }
    Ok((w, h, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Mask::new(13, 5);
        m.set(0, 0, true);
        m.set(12, 4, true);
        m.set(7, 2, true);
        let p = dir.path().join("m.png");
        write_mask_png(&p, &m).unwrap();
        let (w, h, v) = read_png_gray(&p).unwrap();
        assert_eq!((w, h), (13, 5));
        let back: Vec<bool> = v.iter().map(|&x| x > 0.5).collect();
        assert_eq!(back, m.bits());
    }

    #[test]
    fn gray_and_rgb_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let px: Vec<u8> = (0..40).map(|k| (k * 6) as u8).collect();
        for ch in [1, 3] {
            let p = dir.path().join(format!("g{ch}.png"));
            write_png(&p, 8, 5, &px, ch).unwrap();
            let (_, _, v) = read_png_gray(&p).unwrap();
            let back: Vec<u8> = v.iter().map(|x| (x * 255.0).round() as u8).collect();
            assert_eq!(back, px);
        }
    }

    #[test]
    fn pgm_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_pgm(&p, 2, 1, &[1, 2]).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"P5\n2 1\n255\n\x01\x02");
    }
}
