//! Buffer dumps: descriptor and depth images as PFM, instance ids as 16-bit PNG.
//!
//! A `D`-channel descriptor image is written as a grayscale PFM (`Pf`) of
//! height `D * H`, channel planes stacked top to bottom. PFM rows run bottom
//! to top and samples are little-endian `f32`.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::image::DescriptorImage;
use crate::raster::FrameBuffers;

pub fn write_pfm<W: Write>(img: &DescriptorImage, mut out: W) -> Result<()> {
    let (w, h, d) = (img.width(), img.height(), img.dim());
    let rows = d * h;
    write!(out, "Pf\n{w} {rows}\n-1.0\n")?;
    let mut buf = Vec::with_capacity(w * rows * 4);
    let data = img.data();
    // Row r of the stacked image (from the top) is channel r / h, row r % h.
    for r in (0..rows).rev() {
        let start = r * w;
        for v in &data[start..start + w] {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a stacked PFM back into a `dim`-channel image.
pub fn read_pfm<R: Read>(input: R, dim: usize) -> Result<DescriptorImage> {
    let ctx = "pfm";
    let mut r = BufReader::new(input);
    let mut header = Vec::new();
    while header.len() < 3 {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::parse(ctx, "truncated header"));
        }
        let t = line.trim();
        if !t.is_empty() {
            header.push(t.to_string());
        }
    }
    if header[0] != "Pf" {
        return Err(Error::parse(ctx, "only grayscale 'Pf' files are supported"));
    }
    let dims: Vec<usize> = header[1]
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::parse(ctx, "bad size line")))
        .collect::<Result<_>>()?;
    let [w, rows] = dims[..] else {
        return Err(Error::parse(ctx, "bad size line"));
    };
    let scale: f64 = header[2].parse().map_err(|_| Error::parse(ctx, "bad scale"))?;
    if scale == 0.0 {
        return Err(Error::parse(ctx, "scale must be nonzero"));
    }
    if dim == 0 || rows % dim != 0 {
        return Err(Error::parse(ctx, format!("height {rows} is not a multiple of {dim} channels")));
    }
    let mut raw = vec![0u8; w * rows * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::parse(ctx, "truncated pixel data"))?;
    let mut data = vec![0.0; w * rows];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let file_row = i / w;
        let row = rows - 1 - file_row;
        data[row * w + i % w] = v as f64;
    }
    DescriptorImage::from_data(dim, w, rows / dim, data)
}

/// Instance ids as 16-bit grayscale with background 0 and instance `i` as `i + 1`.
pub fn write_instance_png<W: Write>(buffers: &FrameBuffers, out: W) -> Result<()> {
    let (w, h) = (buffers.width(), buffers.height());
    let mut enc = png::Encoder::new(out, w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(png_err)?;
    let mut bytes = Vec::with_capacity(w * h * 2);
    for &id in buffers.instance_ids() {
        let v = u16::try_from(id + 1).map_err(|_| Error::invalid("instance id does not fit in 16 bits"))?;
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    writer.write_image_data(&bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}

/// Inverse of [`write_instance_png`]: returns width, height and ids (background -1).
pub fn read_instance_png<R: Read>(mut input: R) -> Result<(usize, usize, Vec<i32>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(png_err)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::parse("png", "expected 16-bit grayscale"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(w * h * 2)];
    reader.next_frame(&mut buf).map_err(png_err)?;
    let ids = buf[..w * h * 2]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as i32 - 1)
        .collect();
    Ok((w, h, ids))
}

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::parse("png", e.to_string())
}

/// Depth as a single-plane PFM; background pixels keep their infinite depth.
pub fn depth_image(buffers: &FrameBuffers) -> DescriptorImage {
    DescriptorImage::from_data(1, buffers.width(), buffers.height(), buffers.depth().to_vec())
        .expect("buffer sizes are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_stacks_channels() {
        let mut img = DescriptorImage::zeros(2, 3, 2);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.5 - 1.0;
        }
        let mut buf = Vec::new();
        write_pfm(&img, &mut buf).unwrap();
        assert!(buf.starts_with(b"Pf\n3 4\n-1.0\n"));
        let back = read_pfm(buf.as_slice(), 2).unwrap();
        assert_eq!(back, img);
        assert!(read_pfm(buf.as_slice(), 3).is_err());
        // The first samples in the file belong to the bottom row of the last channel.
        let first = f32::from_le_bytes([buf[12], buf[13], buf[14], buf[15]]);
        assert_eq!(first as f64, img.get(1, 0, 1));
    }

    #[test]
    fn instance_png_round_trip() {
        let ids = [-1, 0, 1, 2, -1, 7];
        let fb = crate::raster::test_support::with_buffers(
            FrameBuffers::empty(1, 3, 2),
            &ids,
            &[1.0; 6],
            &[0.0; 6],
        );
        let mut buf = Vec::new();
        write_instance_png(&fb, &mut buf).unwrap();
        let (w, h, back) = read_instance_png(buf.as_slice()).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back, ids);
    }
}
