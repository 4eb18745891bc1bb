//! Slice-wise prediction, volume scoring and overlays.

use std::path::Path;

use image::{Rgb, RgbImage};
use scribble_core::masks::ClassMap;
use scribble_core::metrics::{ClassVolume, MetricsReport};
use scribble_core::params::ParamSet;

use crate::augment::{resize_bilinear, resize_nearest};
use crate::error::{HarnessError, Result};
use crate::synth::Dataset;
use crate::train::Model;

/// Argmax segmentation of one `(H, W)` slice. With `resize`, the network sees
/// an `n × n` copy and the labels are mapped back to `(H, W)`.
pub fn predict_slice(
    model: &Model,
    params: &ParamSet,
    image: &[f64],
    h: usize,
    w: usize,
    resize: Option<usize>,
) -> Result<ClassMap> {
    match resize {
        Some(n) if (n, n) != (h, w) => {
            let small = resize_bilinear(image, h, w, n, n);
            let out = model.forward(&small, n, n, params)?;
            let labels = ClassMap::from_vec(n, n, out.prediction.argmax())?;
            Ok(resize_nearest(&labels, h, w)?)
        }
        _ => {
            let out = model.forward(image, h, w, params)?;
            Ok(ClassMap::from_vec(h, w, out.prediction.argmax())?)
        }
    }
}

/// Predictions for every slice of every case, in dataset order.
pub fn predict_dataset(model: &Model, params: &ParamSet, ds: &Dataset, resize: Option<usize>) -> Result<Vec<Vec<ClassMap>>> {
    ds.cases
        .iter()
        .map(|case| {
            case.slices
                .iter()
                .map(|s| predict_slice(model, params, &s.image, ds.height, ds.width, resize))
                .collect()
        })
        .collect()
}

/// Stacks per-slice labels into volumes and scores every case.
pub fn score(ds: &Dataset, predictions: &[Vec<ClassMap>]) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    for (case, pred) in ds.cases.iter().zip(predictions) {
        let gt: Vec<ClassMap> = case.slices.iter().map(|s| s.mask.clone()).collect();
        let pv = ClassVolume::from_slices(pred)?;
        let gv = ClassVolume::from_slices(&gt)?;
        report.add_case(&case.id, &pv, &gv, ds.num_classes, &case.meta)?;
    }
    Ok(report)
}

pub fn evaluate(model: &Model, params: &ParamSet, ds: &Dataset, resize: Option<usize>) -> Result<MetricsReport> {
    score(ds, &predict_dataset(model, params, ds, resize)?)
}

const PALETTE: [[u8; 3]; 6] = [[255, 64, 64], [64, 220, 64], [64, 128, 255], [255, 210, 0], [220, 0, 220], [0, 220, 220]];

/// Grayscale image with the boundary of every predicted foreground region
/// drawn in a per-class colour.
pub fn overlay(image: &[f64], pred: &ClassMap) -> RgbImage {
    let (h, w) = (pred.height(), pred.width());
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let c = pred.get(y, x);
        let edge = c != 0
            && [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)].iter().any(|&(dy, dx)| {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize || pred.get(ny as usize, nx as usize) != c
            });
        if edge {
            Rgb(PALETTE[(c as usize - 1) % PALETTE.len()])
        } else {
            let g = (image[y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8;
            Rgb([g, g, g])
        }
    })
}

pub fn write_overlay(path: &Path, image: &[f64], pred: &ClassMap) -> Result<()> {
    overlay(image, pred)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| HarnessError::Image {
            path: path.display().to_string(),
            source,
        })
}
