use crate::error::{Error, Result};
use crate::imageops::{crop, pad_to_multiple, resize, resize_to, ImageTensor};
use crate::unet::{ModelState, Real, Tensor};

/// Runs the network on an image of any size: reflect-pads to a multiple of
/// the model's size granularity, runs inference and crops back.
pub fn infer_padded<T: Real>(model: &ModelState<T>, img: &ImageTensor) -> Result<ImageTensor> {
    let (padded, orig) = pad_to_multiple(img, model.config().size_multiple())?;
    let y = model.forward(&Tensor::from_image(&padded))?.to_image();
    crop(&y, orig)
}

/// Shrinks `img` by `scale`, stylizes it and enlarges the result back to
/// the exact input size. Smaller scales give coarser strokes. `scale == 1`
/// runs plain padded inference.
pub fn stylize<T: Real>(model: &ModelState<T>, img: &ImageTensor, scale: f64) -> Result<ImageTensor> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidArgument(format!("scale must lie in (0, 1], got {scale}")));
    }
    if scale == 1.0 {
        return infer_padded(model, img);
    }
    let m = model.config().size_multiple();
    let reduced = resize(img, scale).map_err(|_| too_small(img, scale, m))?;
    if reduced.height() < m || reduced.width() < m {
        return Err(too_small(img, scale, m));
    }
    let y = infer_padded(model, &reduced)?;
    resize_to(&y, img.dims())
}

fn too_small(img: &ImageTensor, scale: f64, m: usize) -> Error {
    Error::InvalidArgument(format!(
        "scaling {}x{} by {scale} leaves less than {m} pixels per side; use a larger scale",
        img.width(),
        img.height()
    ))
}
