//! PLSR1 binary container and PGM label rasters.
//!
//! PLSR1 layout: ASCII magic `PLSR1\n`, one UTF-8 JSON header line terminated
//! by `\n`, then a little-endian payload. Scattering images use
//! `{"width","height","bands","dtype":"f32"}` and six f32 values per pixel
//! (Re/Im of hh, hv, vv), ordered band-major then row-major. Feature cubes
//! reuse the envelope with `"kind":"features","dims":N`; segment rasters use
//! `"kind":"segments","dtype":"u32"`.
//!
//! Label maps are binary PGM (P5, maxval = class count) with a JSON sidecar
//! at `<path>.json` holding the class-name list.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{LabelMap, MultiBandImage, ScatteringMatrix};

const MAGIC: &[u8] = b"PLSR1\n";
const MAX_FILE_BANDS: usize = 3;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    width: usize,
    height: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    bands: Option<Vec<String>>,
    dtype: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dims: Option<usize>,
}

fn read_magic_and_header(reader: &mut impl Read) -> Result<Header> {
    let mut magic = [0u8; 6];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::MalformedHeader("file shorter than magic".into()))?;
    if magic != MAGIC {
        return Err(Error::MalformedHeader("bad magic, expected PLSR1".into()));
    }
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        reader
            .read_exact(&mut byte)
            .map_err(|_| Error::MalformedHeader("unterminated header line".into()))?;
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 1 << 20 {
            return Err(Error::MalformedHeader("header line exceeds 1 MiB".into()));
        }
    }
    serde_json::from_slice(&line)
        .map_err(|e| Error::MalformedHeader(format!("header is not valid JSON: {e}")))
}

fn write_magic_and_header(writer: &mut impl Write, header: &Header) -> Result<()> {
    writer.write_all(MAGIC)?;
    let line = serde_json::to_string(header)
        .map_err(|e| Error::MalformedHeader(format!("header serialization failed: {e}")))?;
    writer.write_all(line.as_bytes())?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Reads the payload expecting exactly `count` little-endian f32 values;
/// anything shorter or longer is a [`Error::DimensionMismatch`].
fn read_f32_payload(reader: &mut impl Read, count: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| Error::DimensionMismatch("payload shorter than header demands".into()))?;
    let mut extra = [0u8; 1];
    if reader.read(&mut extra)? != 0 {
        return Err(Error::DimensionMismatch("payload longer than header demands".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Loads a scattering image from a PLSR1 file.
pub fn load_image(path: &Path) -> Result<MultiBandImage> {
    let mut reader = BufReader::new(File::open(path)?);
    let header = read_magic_and_header(&mut reader)?;
    if let Some(kind) = &header.kind {
        if kind != "image" {
            return Err(Error::MalformedHeader(format!("not a scattering image: kind={kind}")));
        }
    }
    if header.dtype != "f32" {
        return Err(Error::MalformedHeader(format!("unsupported dtype {}", header.dtype)));
    }
    let bands = header
        .bands
        .ok_or_else(|| Error::MalformedHeader("missing bands".into()))?;
    if bands.is_empty() || bands.len() > MAX_FILE_BANDS {
        return Err(Error::MalformedHeader(format!(
            "band count {} outside 1..={MAX_FILE_BANDS}",
            bands.len()
        )));
    }
    if header.width == 0 || header.height == 0 {
        return Err(Error::MalformedHeader("zero image dimension".into()));
    }
    let pixels = header.width * header.height;
    let values = read_f32_payload(&mut reader, pixels * bands.len() * 6)?;
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(format!("payload value #{bad}")));
    }

    let mut image = MultiBandImage::new(header.width, header.height, bands)?;
    for b in 0..image.bands().len() {
        let base = b * pixels * 6;
        let dst = image.band_data_mut(b);
        for (i, px) in dst.iter_mut().enumerate() {
            let v = &values[base + i * 6..base + i * 6 + 6];
            *px = ScatteringMatrix::new(
                Complex32::new(v[0], v[1]),
                Complex32::new(v[2], v[3]),
                Complex32::new(v[4], v[5]),
            );
        }
    }
    Ok(image)
}

/// Writes a scattering image as PLSR1. Round-trips bit-exactly.
pub fn save_image(image: &MultiBandImage, path: &Path) -> Result<()> {
    if image.bands().len() > MAX_FILE_BANDS {
        return Err(Error::InvalidParameter(format!(
            "format v1 stores at most {MAX_FILE_BANDS} bands, image has {}",
            image.bands().len()
        )));
    }
    let mut writer = BufWriter::new(File::create(path)?);
    write_magic_and_header(
        &mut writer,
        &Header {
            width: image.width(),
            height: image.height(),
            bands: Some(image.bands().to_vec()),
            dtype: "f32".into(),
            kind: None,
            dims: None,
        },
    )?;
    let mut buf = Vec::with_capacity(image.pixels() * 24);
    for b in 0..image.bands().len() {
        buf.clear();
        for s in image.band_data(b) {
            for v in [s.s_hh.re, s.s_hh.im, s.s_hv.re, s.s_hv.im, s.s_vv.re, s.s_vv.im] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        writer.write_all(&buf)?;
    }
    writer.flush()?;
    Ok(())
}

/// Real-valued per-pixel vectors in the PLSR1 envelope (`kind:"features"`).
/// Values are stored as f32.
pub fn save_feature_raster(
    width: usize,
    height: usize,
    dims: usize,
    data: &[f64],
    path: &Path,
) -> Result<()> {
    if data.len() != width * height * dims {
        return Err(Error::DimensionMismatch(format!(
            "feature raster has {} values for {}x{}x{}",
            data.len(),
            width,
            height,
            dims
        )));
    }
    let mut writer = BufWriter::new(File::create(path)?);
    write_magic_and_header(
        &mut writer,
        &Header {
            width,
            height,
            bands: None,
            dtype: "f32".into(),
            kind: Some("features".into()),
            dims: Some(dims),
        },
    )?;
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    writer.write_all(&buf)?;
    writer.flush()?;
    Ok(())
}

/// Loads a `kind:"features"` raster; returns (width, height, dims, values).
pub fn load_feature_raster(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let header = read_magic_and_header(&mut reader)?;
    if header.kind.as_deref() != Some("features") {
        return Err(Error::MalformedHeader("not a feature raster".into()));
    }
    let dims = header.dims.ok_or_else(|| Error::MalformedHeader("missing dims".into()))?;
    let values = read_f32_payload(&mut reader, header.width * header.height * dims)?;
    Ok((
        header.width,
        header.height,
        dims,
        values.into_iter().map(|v| v as f64).collect(),
    ))
}

/// Segment-id raster (`kind:"segments"`, u32 little-endian payload).
pub fn save_segment_raster(width: usize, height: usize, labels: &[u32], path: &Path) -> Result<()> {
    if labels.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "segment raster has {} ids for {}x{}",
            labels.len(),
            width,
            height
        )));
    }
    let mut writer = BufWriter::new(File::create(path)?);
    write_magic_and_header(
        &mut writer,
        &Header {
            width,
            height,
            bands: None,
            dtype: "u32".into(),
            kind: Some("segments".into()),
            dims: None,
        },
    )?;
    let mut buf = Vec::with_capacity(labels.len() * 4);
    for v in labels {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&buf)?;
    writer.flush()?;
    Ok(())
}

pub fn load_segment_raster(path: &Path) -> Result<(usize, usize, Vec<u32>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let header = read_magic_and_header(&mut reader)?;
    if header.kind.as_deref() != Some("segments") || header.dtype != "u32" {
        return Err(Error::MalformedHeader("not a segment raster".into()));
    }
    let count = header.width * header.height;
    let mut bytes = vec![0u8; count * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| Error::DimensionMismatch("payload shorter than header demands".into()))?;
    let labels = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header.width, header.height, labels))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    os.into()
}

/// Writes a label map as binary PGM plus the class-name sidecar.
pub fn save_labels(labels: &LabelMap, path: &Path) -> Result<()> {
    let maxval = labels.n_classes().max(1);
    if maxval > 255 {
        return Err(Error::InvalidParameter(format!("{maxval} classes exceed PGM maxval 255")));
    }
    let mut writer = BufWriter::new(File::create(path)?);
    write!(writer, "P5\n{} {}\n{}\n", labels.width(), labels.height(), maxval)?;
    writer.write_all(labels.ids())?;
    writer.flush()?;

    let names = serde_json::to_string(labels.class_names())
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    std::fs::write(sidecar_path(path), names)?;
    Ok(())
}

/// Loads a PGM label map and its class-name sidecar.
pub fn load_labels(path: &Path) -> Result<LabelMap> {
    let bytes = std::fs::read(path)?;
    let (width, height, maxval, ids) = parse_pgm(&bytes)?;
    let names: Vec<String> = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)
        .map_err(|e| Error::MalformedHeader(format!("class-name sidecar: {e}")))?;
    if names.len() != maxval {
        return Err(Error::MalformedHeader(format!(
            "sidecar lists {} classes but PGM maxval is {maxval}",
            names.len()
        )));
    }
    LabelMap::new(width, height, ids, names)
}

fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and '#' comment lines
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedHeader("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(bytes)? != "P5" {
        return Err(Error::MalformedHeader("not a binary PGM (P5)".into()));
    }
    let width: usize = token(bytes)?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad PGM width".into()))?;
    let height: usize = token(bytes)?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad PGM height".into()))?;
    let maxval: usize = token(bytes)?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad PGM maxval".into()))?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::MalformedHeader(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates header from raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::DimensionMismatch("PGM raster shorter than header demands".into()));
    }
    Ok((width, height, maxval, bytes[pos..pos + need].to_vec()))
}
