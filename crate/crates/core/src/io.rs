//! File formats: 8-bit PNG images and masks, `.pmf` probability maps, `.rgs`
//! run-length region sets and `.vsm` pathway models.
//!
//! * `.pmf`: `b"PMF1"`, `u32` H, `u32` W, then H*W little-endian `f32`,
//!   row-major.
//! * `.rgs`: text. Header line `RGS1 H W K`, then K lines of comma-separated
//!   `start:len` runs over row-major pixel indices.
//! * `.vsm`: `b"VSM1"`, kind byte (0 visual, 1 spatial), `u32` d_in, `u32`
//!   hidden, then every parameter as little-endian `f64` in declaration order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ImageTensor, ProbMap};
use crate::pathways::{PathwayKind, PathwayModel};
use crate::regions::RegionSet;

const PMF_MAGIC: &[u8; 4] = b"PMF1";
const VSM_MAGIC: &[u8; 4] = b"VSM1";

pub fn read_image_png(path: &Path) -> Result<ImageTensor> {
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    ImageTensor::from_rgb_fn(h, w, |y, x| {
        let px = rgb.get_pixel(x as u32, y as u32).0;
        [px[0] as f64 / 255.0, px[1] as f64 / 255.0, px[2] as f64 / 255.0]
    })
}

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Grayscale images are written with the single channel repeated.
pub fn write_image_png(path: &Path, img: &ImageTensor) -> Result<()> {
    let (h, w) = img.dims();
    let c = img.channels();
    let out = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let ch = |k: usize| to_u8(img.get(k.min(c - 1), y, x));
        image::Rgb([ch(0), ch(1), ch(2)])
    });
    out.save(path)?;
    Ok(())
}

/// Any nonzero pixel is foreground.
pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    let g = image::open(path)?.to_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    BinaryMask::new(h, w, g.into_raw().into_iter().map(|v| (v > 0) as u8).collect())
}

pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    let (h, w) = mask.dims();
    let raw = mask.data().iter().map(|v| v * 255).collect();
    let img = GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer size matches");
    img.save(path)?;
    Ok(())
}

/// Reads a PNG as a probability map (luma / 255).
pub fn read_map_png(path: &Path) -> Result<ProbMap> {
    let g = image::open(path)?.to_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    ProbMap::new(h, w, g.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
}

pub fn write_map_png(path: &Path, map: &ProbMap) -> Result<()> {
    let (h, w) = map.dims();
    let raw = map.data().iter().map(|v| to_u8(*v)).collect();
    let img = GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer size matches");
    img.save(path)?;
    Ok(())
}

pub fn encode_pmf(map: &ProbMap) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 4 * map.len());
    buf.extend_from_slice(PMF_MAGIC);
    buf.extend_from_slice(&(map.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(map.width() as u32).to_le_bytes());
    for v in map.data() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    buf
}

pub fn decode_pmf(bytes: &[u8]) -> Result<ProbMap> {
    if bytes.len() < 12 || &bytes[..4] != PMF_MAGIC {
        return Err(Error::format("pmf", "missing PMF1 header"));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != 4 * h * w {
        return Err(Error::format(
            "pmf",
            format!("{} payload bytes for a {h}x{w} map", body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ProbMap::new(h, w, data)
}

pub fn write_pmf(path: &Path, map: &ProbMap) -> Result<()> {
    fs::write(path, encode_pmf(map))?;
    Ok(())
}

pub fn read_pmf(path: &Path) -> Result<ProbMap> {
    decode_pmf(&fs::read(path)?)
}

/// Reads a `.pmf`, or any image format as luma / 255.
pub fn read_map(path: &Path) -> Result<ProbMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pmf") => read_pmf(path),
        _ => read_map_png(path),
    }
}

fn runs(pixels: &[u32]) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for &p in pixels {
        match out.last_mut() {
            Some((start, len)) if *start + *len == p => *len += 1,
            _ => out.push((p, 1)),
        }
    }
    out
}

pub fn encode_rgs(rs: &RegionSet) -> String {
    let mut s = format!("RGS1 {} {} {}\n", rs.height(), rs.width(), rs.len());
    for region in rs.regions() {
        let line: Vec<String> = runs(region)
            .into_iter()
            .map(|(start, len)| format!("{start}:{len}"))
            .collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn decode_rgs<R: Read>(reader: R) -> Result<RegionSet> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().ok_or_else(|| Error::format("rgs", "empty file"))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "RGS1" {
        return Err(Error::format("rgs", format!("bad header {header:?}")));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format("rgs", format!("bad number {s:?}")))
    };
    let (h, w, k) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    let mut regions = Vec::with_capacity(k);
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut region = Vec::new();
        for run in line.split(',') {
            let (start, len) = run
                .split_once(':')
                .ok_or_else(|| Error::format("rgs", format!("bad run {run:?}")))?;
            let (start, len) = (parse(start)?, parse(len)?);
            region.extend((start..start + len).map(|p| p as u32));
        }
        regions.push(region);
    }
    if regions.len() != k {
        return Err(Error::format(
            "rgs",
            format!("header declares {k} regions, found {}", regions.len()),
        ));
    }
    RegionSet::new(h, w, regions)
}

pub fn write_rgs(path: &Path, rs: &RegionSet) -> Result<()> {
    fs::write(path, encode_rgs(rs))?;
    Ok(())
}

pub fn read_rgs(path: &Path) -> Result<RegionSet> {
    decode_rgs(fs::File::open(path)?)
}

pub fn encode_vsm(model: &PathwayModel) -> Vec<u8> {
    let mut buf = Vec::with_capacity(13 + 8 * model.params().len());
    buf.extend_from_slice(VSM_MAGIC);
    buf.push(match model.kind() {
        PathwayKind::Visual => 0,
        PathwayKind::Spatial => 1,
    });
    buf.extend_from_slice(&(model.d_in() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.hidden() as u32).to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    buf
}

pub fn decode_vsm(bytes: &[u8]) -> Result<PathwayModel> {
    if bytes.len() < 13 || &bytes[..4] != VSM_MAGIC {
        return Err(Error::format("vsm", "missing VSM1 header"));
    }
    let kind = match bytes[4] {
        0 => PathwayKind::Visual,
        1 => PathwayKind::Spatial,
        b => return Err(Error::format("vsm", format!("unknown kind byte {b}"))),
    };
    let d_in = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let hidden = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let body = &bytes[13..];
    if !body.len().is_multiple_of(8) {
        return Err(Error::format("vsm", "truncated parameter block"));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PathwayModel::from_params(kind, d_in, hidden, params)
}

pub fn write_vsm(path: &Path, model: &PathwayModel) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_vsm(model))?;
    Ok(())
}

pub fn read_vsm(path: &Path) -> Result<PathwayModel> {
    decode_vsm(&fs::read(path)?)
}
