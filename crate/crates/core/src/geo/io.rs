//! File formats at the edge of the pipeline.
//!
//! * Rasters: band-sequential little-endian binary, plus a JSON sidecar
//!   with the same stem (`scene.bin` next to `scene.json`).
//! * Masks: 8-bit binary PGM (`P5`) with the same sidecar.
//! * Label vectors: JSON `{"crs": ..., "features": [{"class": c, "wkt": ...}]}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_wkt, GeoRaster, GeoTransform, WktGeometry};
use crate::checkpoint::write_atomic;
use crate::dtype::DType;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterSidecar {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub dtype: DType,
    pub geotransform: [f64; 6],
    pub crs: String,
    pub nodata: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn read_file(path: &Path, what: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::data(format!("missing {what} {}", path.display())),
        _ => Error::Io(e),
    })
}

pub fn read_sidecar(path: &Path) -> Result<RasterSidecar> {
    let side = sidecar_path(path);
    let text = read_file(&side, "sidecar")?;
    serde_json::from_slice(&text).map_err(|e| Error::data(format!("{}: {e}", side.display())))
}

fn write_sidecar(path: &Path, raster: &GeoRaster, dtype: DType) -> Result<()> {
    if !raster.nodata.is_finite() {
        return Err(Error::data("sidecar nodata must be finite"));
    }
    let meta = RasterSidecar {
        width: raster.width(),
        height: raster.height(),
        channels: raster.channels(),
        dtype,
        geotransform: raster.geotransform.0,
        crs: raster.crs.clone(),
        nodata: raster.nodata,
    };
    let mut text = serde_json::to_vec_pretty(&meta)?;
    text.push(b'\n');
    write_atomic(&sidecar_path(path), &text)
}

pub fn write_raster(path: impl AsRef<Path>, raster: &GeoRaster, dtype: DType) -> Result<()> {
    let path = path.as_ref();
    let bytes = dtype.encode(raster.data())?;
    write_atomic(path, &bytes)?;
    write_sidecar(path, raster, dtype)
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<GeoRaster> {
    let path = path.as_ref();
    let meta = read_sidecar(path)?;
    let bytes = read_file(path, "raster")?;
    let expected = meta.width * meta.height * meta.channels * meta.dtype.size();
    if bytes.len() != expected {
        return Err(Error::data(format!(
            "{} holds {} bytes, sidecar implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    GeoRaster::new(
        meta.width,
        meta.height,
        meta.channels,
        meta.dtype.decode(&bytes)?,
        GeoTransform(meta.geotransform),
        meta.crs,
        meta.nodata,
    )
}

/// Single-band raster with values in `0..=255` as PGM plus sidecar.
pub fn write_pgm(path: impl AsRef<Path>, raster: &GeoRaster) -> Result<()> {
    let path = path.as_ref();
    if raster.channels() != 1 {
        return Err(Error::shape(format!("PGM needs one band, got {}", raster.channels())));
    }
    let mut bytes = format!("P5\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
    bytes.extend(DType::U8.encode(raster.data())?);
    write_atomic(path, &bytes)?;
    write_sidecar(path, raster, DType::U8)
}

fn pgm_header(bytes: &[u8]) -> Result<(usize, usize, usize)> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format {
                offset: pos as u64,
                message: "truncated PGM header".into(),
            });
        }
        fields.push((start, std::str::from_utf8(&bytes[start..pos]).unwrap_or("")));
    }
    if fields[0].1 != "P5" {
        return Err(Error::Format {
            offset: 0,
            message: "not a binary PGM (P5)".into(),
        });
    }
    let num = |(at, s): (usize, &str)| {
        s.parse::<usize>().map_err(|_| Error::Format {
            offset: at as u64,
            message: format!("bad PGM header field `{s}`"),
        })
    };
    let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max != 255 {
        return Err(Error::Format {
            offset: fields[3].0 as u64,
            message: format!("only maxval 255 is supported, got {max}"),
        });
    }
    // exactly one whitespace byte separates the header from the pixels
    Ok((w, h, pos + 1))
}

/// Reads a mask written by [`write_pgm`]; the sidecar supplies the
/// georeference and must agree with the PGM extent.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GeoRaster> {
    let path = path.as_ref();
    let bytes = read_file(path, "mask")?;
    let (w, h, start) = pgm_header(&bytes)?;
    let meta = read_sidecar(path)?;
    if (meta.width, meta.height, meta.channels) != (w, h, 1) {
        return Err(Error::data(format!("{} disagrees with its sidecar", path.display())));
    }
    let pixels = bytes.get(start..).unwrap_or(&[]);
    if pixels.len() != w * h {
        return Err(Error::Format {
            offset: start as u64,
            message: format!("expected {} pixel bytes, found {}", w * h, pixels.len()),
        });
    }
    GeoRaster::new(
        w,
        h,
        1,
        DType::U8.decode(pixels)?,
        GeoTransform(meta.geotransform),
        meta.crs,
        meta.nodata,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFeature {
    /// Source label code; remapped to a class index at ingest.
    pub class: u16,
    pub wkt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSet {
    pub crs: String,
    #[serde(default)]
    pub features: Vec<LabelFeature>,
}

impl LabelSet {
    /// Parsed polygons with their class codes, tagged with the set's CRS
    /// unless the WKT carried its own.
    pub fn geometries(&self) -> Result<Vec<(WktGeometry, f64)>> {
        self.features
            .iter()
            .map(|f| {
                let mut g = parse_wkt(&f.wkt)?;
                if g.crs.is_none() {
                    g.crs = Some(self.crs.clone());
                }
                Ok((g, f64::from(f.class)))
            })
            .collect()
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    let path = path.as_ref();
    let text = read_file(path, "label file")?;
    serde_json::from_slice(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelSet) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(labels)?;
    text.push(b'\n');
    write_atomic(path.as_ref(), &text)
}
