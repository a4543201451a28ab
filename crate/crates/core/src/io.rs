//! 8-bit PNG conversion to and from [`ImageTensor`].

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::imageops::ImageTensor;

/// Decodes a PNG into a 3- or 4-channel tensor with values divided by 255.
/// Grayscale inputs are expanded to RGB.
pub fn read_png(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(from_dynamic(&img))
}

/// Decodes a PNG and flattens any alpha channel over white, giving RGB.
pub fn read_png_rgb(path: impl AsRef<Path>) -> Result<ImageTensor> {
    Ok(read_png(path)?.composite_over_white())
}

fn from_dynamic(img: &DynamicImage) -> ImageTensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = if img.color().has_alpha() {
        (4, img.to_rgba8().into_raw())
    } else {
        (3, img.to_rgb8().into_raw())
    };
    let mut out = ImageTensor::zeros(channels, h, w);
    for c in 0..channels {
        let plane = out.plane_mut(c);
        for (i, v) in plane.iter_mut().enumerate() {
            *v = raw[i * channels + c] as f32 / 255.0;
        }
    }
    out
}

/// Quantizes one value to 8 bits: clamp to [0,1], scale by 255, round half
/// to even.
#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

/// Interleaved 8-bit RGB bytes of a 3-channel image (RGBA is flattened
/// over white first; single-channel images are replicated).
pub fn to_rgb8(img: &ImageTensor) -> Result<Vec<u8>> {
    let img = match img.channels() {
        1 => ImageTensor::from_vec(
            3,
            img.height(),
            img.width(),
            img.data().repeat(3),
        )?,
        3 => img.clone(),
        4 => img.composite_over_white(),
        c => {
            return Err(Error::Shape(format!(
                "cannot encode a {c}-channel image as RGB"
            )))
        }
    };
    let n = img.height() * img.width();
    let mut bytes = vec![0u8; 3 * n];
    for c in 0..3 {
        for (i, &v) in img.plane(c).iter().enumerate() {
            bytes[i * 3 + c] = quantize(v);
        }
    }
    Ok(bytes)
}

/// Writes an 8-bit RGB PNG (no alpha).
pub fn write_png(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_rgb8(img)?;
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, bytes)
            .ok_or_else(|| Error::Shape("image buffer size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rounds_half_to_even() {
        assert_eq!(quantize(0.5), 128); // 127.5 -> 128
        assert_eq!(quantize(0.5 / 255.0), 0);
        assert_eq!(quantize(1.5 / 255.0), 2);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
    }

    #[test]
    fn png_round_trip_is_exact_on_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let data = (0..3 * 5 * 7).map(|i| ((i * 37) % 256) as f32 / 255.0).collect();
        let img = ImageTensor::from_vec(3, 5, 7, data).unwrap();
        write_png(&img, &path).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn undecodable_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(read_png(&path), Err(Error::Image { .. })));
    }
}
