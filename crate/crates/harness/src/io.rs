//! On-disk dataset layout.
//!
//! ```text
//! <dir>/dataset.txt                  height, width, num_classes
//! <dir>/<case>/meta.txt              spacing_x, spacing_y, thickness_z, slices
//! <dir>/<case>/sliceNN_image.pgm     16-bit, intensity · 65535
//! <dir>/<case>/sliceNN_mask.pgm      8-bit class index
//! <dir>/<case>/sliceNN_scribble.pgm  8-bit class index, 255 = unlabeled
//! ```

use std::fs;
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};
use scribble_core::masks::{ClassMap, ScribbleMask};
use scribble_core::metrics::VolumeMeta;

use crate::config::KeyValues;
use crate::error::{format_err, io_err, HarnessError, Result};
use crate::synth::{Case, Dataset, Slice};

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> HarnessError + '_ {
    move |source| HarnessError::Image {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes `[0, 1]` intensities as a 16-bit PGM.
pub fn write_intensity(path: &Path, h: usize, w: usize, data: &[f64]) -> Result<()> {
    let px: Vec<u16> = data.iter().map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, px).ok_or_else(|| format_err("intensity buffer size"))?;
    img.save_with_format(path, image::ImageFormat::Pnm).map_err(image_err(path))
}

pub fn read_intensity(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::open(path).map_err(image_err(path))?.into_luma16();
    let (w, h) = img.dimensions();
    Ok((h as usize, w as usize, img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()))
}

pub fn write_labels(path: &Path, map: &ClassMap) -> Result<()> {
    let img = GrayImage::from_raw(map.width() as u32, map.height() as u32, map.labels().to_vec())
        .ok_or_else(|| format_err("label buffer size"))?;
    img.save_with_format(path, image::ImageFormat::Pnm).map_err(image_err(path))
}

pub fn read_labels(path: &Path) -> Result<ClassMap> {
    let img = image::open(path).map_err(image_err(path))?;
    if img.color() != image::ColorType::L8 {
        return Err(format_err(format!("{} is not an 8-bit graymap", path.display())));
    }
    let img = img.into_luma8();
    let (w, h) = img.dimensions();
    Ok(ClassMap::from_vec(h as usize, w as usize, img.into_raw())?)
}

fn slice_path(dir: &Path, z: usize, kind: &str) -> std::path::PathBuf {
    dir.join(format!("slice{z:02}_{kind}.pgm"))
}

pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut kv = KeyValues::default();
    kv.set("height", ds.height);
    kv.set("width", ds.width);
    kv.set("num_classes", ds.num_classes);
    write_text(&dir.join("dataset.txt"), &kv.to_text())?;
    for case in &ds.cases {
        let cdir = dir.join(&case.id);
        fs::create_dir_all(&cdir).map_err(io_err(&cdir))?;
        let mut kv = KeyValues::default();
        kv.set("spacing_x", case.meta.spacing_x);
        kv.set("spacing_y", case.meta.spacing_y);
        kv.set("thickness_z", case.meta.thickness_z);
        kv.set("slices", case.slices.len());
        write_text(&cdir.join("meta.txt"), &kv.to_text())?;
        for (z, s) in case.slices.iter().enumerate() {
            write_intensity(&slice_path(&cdir, z, "image"), ds.height, ds.width, &s.image)?;
            write_labels(&slice_path(&cdir, z, "mask"), &s.mask)?;
            write_labels(&slice_path(&cdir, z, "scribble"), s.scribbles.map())?;
        }
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mut kv = KeyValues::parse(&read_text(&dir.join("dataset.txt"))?)?;
    let height: usize = kv.take("height", 0)?;
    let width: usize = kv.take("width", 0)?;
    let num_classes: usize = kv.take("num_classes", 0)?;
    kv.finish()?;
    let mut ids: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("meta.txt").is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    let mut cases = Vec::with_capacity(ids.len());
    for id in ids {
        let cdir = dir.join(&id);
        let mut kv = KeyValues::parse(&read_text(&cdir.join("meta.txt"))?)?;
        let meta = VolumeMeta::new(kv.take("spacing_x", 1.0)?, kv.take("spacing_y", 1.0)?, kv.take("thickness_z", 1.0)?)?;
        let n: usize = kv.take("slices", 0)?;
        kv.finish()?;
        let mut slices = Vec::with_capacity(n);
        for z in 0..n {
            let (h, w, image) = read_intensity(&slice_path(&cdir, z, "image"))?;
            let mask = read_labels(&slice_path(&cdir, z, "mask"))?;
            let scr = read_labels(&slice_path(&cdir, z, "scribble"))?;
            if (h, w) != (height, width) || (mask.height(), mask.width()) != (h, w) {
                return Err(format_err(format!("{id} slice {z}: size differs from {height}x{width}")));
            }
            slices.push(Slice {
                image,
                mask,
                scribbles: ScribbleMask::new(scr, num_classes)?,
            });
        }
        cases.push(Case { id, meta, slices });
    }
    if cases.is_empty() {
        return Err(format_err(format!("no cases under {}", dir.display())));
    }
    Ok(Dataset {
        height,
        width,
        num_classes,
        cases,
    })
}
