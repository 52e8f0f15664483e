use std::fs;
use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType};

use super::{BinaryMask, Image, ProbabilityMap, RasterError, SegmentationMap};

const PROB_SCALE: f64 = 65535.0;

struct Decoded {
    width: u32,
    height: u32,
    color: ColorType,
    depth: BitDepth,
    data: Vec<u8>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, RasterError> {
    fs::read(path).map_err(|source| RasterError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), RasterError> {
    fs::write(path, bytes).map_err(|source| RasterError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn decode(bytes: &[u8], label: &str) -> Result<Decoded, RasterError> {
    let decode_err = |e: png::DecodingError| RasterError::Decode {
        path: label.to_string(),
        message: e.to_string(),
    };
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| RasterError::Decode {
        path: label.to_string(),
        message: "image too large".into(),
    })?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(decode_err)?;
    data.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width,
        height: info.height,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

fn encode(width: u32, height: u32, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<Vec<u8>, RasterError> {
    let enc_err = |e: png::EncodingError| RasterError::Encode(e.to_string());
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(color);
        encoder.set_depth(depth);
        let mut writer = encoder.write_header().map_err(enc_err)?;
        writer.write_image_data(data).map_err(enc_err)?;
        writer.finish().map_err(enc_err)?;
    }
    Ok(out)
}

fn depth_bits(depth: BitDepth) -> u8 {
    match depth {
        BitDepth::One => 1,
        BitDepth::Two => 2,
        BitDepth::Four => 4,
        BitDepth::Eight => 8,
        BitDepth::Sixteen => 16,
    }
}

fn require_gray(d: &Decoded, label: &str, depth: BitDepth) -> Result<(), RasterError> {
    if d.color != ColorType::Grayscale {
        return Err(RasterError::Format {
            path: label.to_string(),
            property: format!("color type {:?}, expected single-channel grayscale", d.color),
        });
    }
    if d.depth != depth {
        return Err(RasterError::Format {
            path: label.to_string(),
            property: format!(
                "bit depth {}, expected {}",
                depth_bits(d.depth),
                depth_bits(depth)
            ),
        });
    }
    Ok(())
}

/// Loads an 8-bit grayscale or RGB PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, RasterError> {
    let path = path.as_ref();
    decode_image_png(&read_bytes(path)?, &path.display().to_string())
}

/// Decodes an 8-bit grayscale or RGB PNG; `label` names the source in errors.
pub fn decode_image_png(bytes: &[u8], label: &str) -> Result<Image, RasterError> {
    let label = label.to_string();
    let d = decode(bytes, &label)?;
    let channels = match d.color {
        ColorType::Grayscale => 1,
        ColorType::Rgb => 3,
        other => {
            return Err(RasterError::Format {
                path: label,
                property: format!("color type {other:?}, expected grayscale or RGB"),
            })
        }
    };
    if d.depth != BitDepth::Eight {
        return Err(RasterError::Format {
            path: label,
            property: format!("bit depth {}, expected 8", depth_bits(d.depth)),
        });
    }
    Image::new(d.width, d.height, channels, d.data)
}

pub fn encode_image_png(image: &Image) -> Result<Vec<u8>, RasterError> {
    let color = if image.channels() == 1 {
        ColorType::Grayscale
    } else {
        ColorType::Rgb
    };
    encode(image.width(), image.height(), color, BitDepth::Eight, image.pixels())
}

pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<(), RasterError> {
    write_bytes(path.as_ref(), &encode_image_png(image)?)
}

/// Decodes a single-channel 8-bit 0/255 PNG; `label` names the source in errors.
pub fn decode_mask_png(bytes: &[u8], label: &str) -> Result<BinaryMask, RasterError> {
    let d = decode(bytes, label)?;
    require_gray(&d, label, BitDepth::Eight)?;
    let mut bits = Vec::with_capacity(d.data.len());
    for (i, &v) in d.data.iter().enumerate() {
        match v {
            0 => bits.push(false),
            255 => bits.push(true),
            _ => {
                return Err(RasterError::InvalidPixel {
                    path: label.to_string(),
                    x: (i % d.width as usize) as u32,
                    y: (i / d.width as usize) as u32,
                    value: u32::from(v),
                    reason: "mask pixels must be 0 or 255".into(),
                })
            }
        }
    }
    BinaryMask::from_bits(d.width, d.height, bits)
}

pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>, RasterError> {
    let data: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode(mask.width(), mask.height(), ColorType::Grayscale, BitDepth::Eight, &data)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask, RasterError> {
    let path = path.as_ref();
    decode_mask_png(&read_bytes(path)?, &path.display().to_string())
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), RasterError> {
    write_bytes(path.as_ref(), &encode_mask_png(mask)?)
}

/// Loads one binary PNG per class, in class order.
pub fn load_segmentation<P: AsRef<Path>>(paths: &[P]) -> Result<SegmentationMap, RasterError> {
    if paths.is_empty() {
        return Err(RasterError::Invalid("no class channels given".into()));
    }
    let mut channels = Vec::with_capacity(paths.len());
    for path in paths {
        let path = path.as_ref();
        let mask = load_mask(path)?;
        if let Some(first) = channels.first() {
            let first: &BinaryMask = first;
            if first.dims() != mask.dims() {
                return Err(RasterError::DimensionMismatch {
                    context: path.display().to_string(),
                    expected_w: first.width(),
                    expected_h: first.height(),
                    got_w: mask.width(),
                    got_h: mask.height(),
                });
            }
        }
        channels.push(mask);
    }
    SegmentationMap::new(channels)
}

pub fn save_segmentation<P: AsRef<Path>>(map: &SegmentationMap, paths: &[P]) -> Result<(), RasterError> {
    if paths.len() != map.num_classes() {
        return Err(RasterError::Invalid(format!(
            "{} paths for {} classes",
            paths.len(),
            map.num_classes()
        )));
    }
    for (ch, path) in map.channels().iter().zip(paths) {
        save_mask(ch, path)?;
    }
    Ok(())
}

/// Loads one 16-bit PNG per class; probability = value / 65535.
pub fn load_probability<P: AsRef<Path>>(paths: &[P]) -> Result<ProbabilityMap, RasterError> {
    if paths.is_empty() {
        return Err(RasterError::Invalid("no probability channels given".into()));
    }
    let num_classes = paths.len();
    let mut dims: Option<(u32, u32)> = None;
    let mut values = Vec::new();
    for (c, path) in paths.iter().enumerate() {
        let path = path.as_ref();
        let label = path.display().to_string();
        let d = decode(&read_bytes(path)?, &label)?;
        require_gray(&d, &label, BitDepth::Sixteen)?;
        match dims {
            None => {
                dims = Some((d.width, d.height));
                values = vec![0.0; d.width as usize * d.height as usize * num_classes];
            }
            Some((w, h)) if (w, h) != (d.width, d.height) => {
                return Err(RasterError::DimensionMismatch {
                    context: label,
                    expected_w: w,
                    expected_h: h,
                    got_w: d.width,
                    got_h: d.height,
                })
            }
            Some(_) => {}
        }
        for (p, pair) in d.data.chunks_exact(2).enumerate() {
            let v = u16::from_be_bytes([pair[0], pair[1]]);
            values[p * num_classes + c] = f64::from(v) / PROB_SCALE;
        }
    }
    let (w, h) = dims.expect("at least one channel");
    ProbabilityMap::new(w, h, num_classes, values)
}

/// Quantizes each class to 16 bits and writes one PNG per class.
pub fn save_probability<P: AsRef<Path>>(map: &ProbabilityMap, paths: &[P]) -> Result<(), RasterError> {
    if paths.len() != map.num_classes() {
        return Err(RasterError::Invalid(format!(
            "{} paths for {} probability classes",
            paths.len(),
            map.num_classes()
        )));
    }
    for (c, path) in paths.iter().enumerate() {
        let data: Vec<u8> = map
            .pixel_iter()
            .flat_map(|px| {
                let q = (px[c] * PROB_SCALE).round().clamp(0.0, PROB_SCALE) as u16;
                q.to_be_bytes()
            })
            .collect();
        let bytes = encode(map.width(), map.height(), ColorType::Grayscale, BitDepth::Sixteen, &data)?;
        write_bytes(path.as_ref(), &bytes)?;
    }
    Ok(())
}

/// Splits a label-indexed PNG (0 = background, `i` = class `i`) into per-class channels.
pub fn import_labelmap(path: impl AsRef<Path>, num_classes: usize) -> Result<SegmentationMap, RasterError> {
    let path = path.as_ref();
    let label = path.display().to_string();
    if num_classes == 0 {
        return Err(RasterError::Invalid("num_classes must be at least 1".into()));
    }
    let d = decode(&read_bytes(path)?, &label)?;
    require_gray(&d, &label, BitDepth::Eight)?;
    let mut channels = vec![BinaryMask::empty(d.width, d.height); num_classes];
    for (i, &v) in d.data.iter().enumerate() {
        let x = (i % d.width as usize) as u32;
        let y = (i / d.width as usize) as u32;
        match usize::from(v) {
            0 => {}
            c if c <= num_classes => channels[c - 1].set(x, y, true),
            _ => {
                return Err(RasterError::InvalidPixel {
                    path: label,
                    x,
                    y,
                    value: u32::from(v),
                    reason: format!("label exceeds num_classes = {num_classes}"),
                })
            }
        }
    }
    SegmentationMap::new(channels)
}
