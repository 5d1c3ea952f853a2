//! MRC2014 stack I/O (mode 2 only) with a JSON-lines metadata sidecar.
//!
//! Layout written: a 1024-byte header (`nx, ny, nz, mode` as little-endian
//! int32 in words 1–4, `"MAP "` at byte 208, machine stamp `44 44 00 00` at
//! byte 212) followed by float32 data, x fastest, one section per image.
//! The sidecar `<stem>.meta.jsonl` holds one record per image with keys
//! `group`, and optionally `quat` and `defocus_um`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::image::{GroundTruth, Image, ImageStack, Quaternion};
use crate::{Error, Result};

const HEADER_LEN: usize = 1024;
const MAP_OFFSET: usize = 208;
const STAMP_OFFSET: usize = 212;

/// Parsed subset of the MRC header.
#[derive(Debug, Clone, PartialEq)]
pub struct MrcHeader {
    pub nx: i32,
    pub ny: i32,
    pub nz: i32,
    pub mode: i32,
    pub cell: [f32; 3],
    pub ext_header_len: i32,
}

/// Path of the metadata sidecar for a stack file: `stack.mrcs` -> `stack.meta.jsonl`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.jsonl")
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarRecord {
    group: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quat: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    defocus_um: Option<f64>,
}

fn read_i32(buf: &[u8], word: usize) -> i32 {
    let o = word * 4;
    i32::from_le_bytes([buf[o], buf[o + 1], buf[o + 2], buf[o + 3]])
}

fn read_f32(buf: &[u8], word: usize) -> f32 {
    let o = word * 4;
    f32::from_le_bytes([buf[o], buf[o + 1], buf[o + 2], buf[o + 3]])
}

fn put_i32(buf: &mut [u8], word: usize, v: i32) {
    buf[word * 4..word * 4 + 4].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(buf: &mut [u8], word: usize, v: f32) {
    buf[word * 4..word * 4 + 4].copy_from_slice(&v.to_le_bytes());
}

fn format_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn parse_header(path: &Path, buf: &[u8]) -> Result<MrcHeader> {
    if buf.len() < HEADER_LEN {
        return Err(format_err(
            path,
            buf.len(),
            format!("file shorter than the {HEADER_LEN}-byte header"),
        ));
    }
    let header = MrcHeader {
        nx: read_i32(buf, 0),
        ny: read_i32(buf, 1),
        nz: read_i32(buf, 2),
        mode: read_i32(buf, 3),
        cell: [read_f32(buf, 10), read_f32(buf, 11), read_f32(buf, 12)],
        ext_header_len: read_i32(buf, 23),
    };
    for (word, v) in [header.nx, header.ny, header.nz].iter().enumerate() {
        if *v <= 0 {
            return Err(format_err(path, word * 4, format!("dimension {v} is not positive")));
        }
    }
    if &buf[MAP_OFFSET..MAP_OFFSET + 4] != b"MAP " {
        return Err(format_err(path, MAP_OFFSET, "missing \"MAP \" identifier"));
    }
    if buf[STAMP_OFFSET] != 0x44 && buf[STAMP_OFFSET] != 0x41 {
        return Err(format_err(
            path,
            STAMP_OFFSET,
            format!(
                "machine stamp {:02x} {:02x} is not little-endian",
                buf[STAMP_OFFSET],
                buf[STAMP_OFFSET + 1]
            ),
        ));
    }
    if header.ext_header_len < 0 {
        return Err(format_err(path, 92, "negative extended header length"));
    }
    if header.mode != 2 {
        return Err(Error::UnsupportedMode { mode: header.mode });
    }
    Ok(header)
}

fn build_header(nx: usize, ny: usize, nz: usize, cell: [f32; 3], data: &[f32]) -> Vec<u8> {
    let mut h = vec![0u8; HEADER_LEN];
    put_i32(&mut h, 0, nx as i32);
    put_i32(&mut h, 1, ny as i32);
    put_i32(&mut h, 2, nz as i32);
    put_i32(&mut h, 3, 2);
    put_i32(&mut h, 7, nx as i32);
    put_i32(&mut h, 8, ny as i32);
    put_i32(&mut h, 9, nz as i32);
    put_f32(&mut h, 10, cell[0]);
    put_f32(&mut h, 11, cell[1]);
    put_f32(&mut h, 12, cell[2]);
    for w in 13..16 {
        put_f32(&mut h, w, 90.0);
    }
    put_i32(&mut h, 16, 1);
    put_i32(&mut h, 17, 2);
    put_i32(&mut h, 18, 3);
    let (mut lo, mut hi, mut sum) = (f32::INFINITY, f32::NEG_INFINITY, 0.0f64);
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v as f64;
    }
    let mean = sum / data.len().max(1) as f64;
    let rms = (data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>()
        / data.len().max(1) as f64)
        .sqrt();
    put_f32(&mut h, 19, lo);
    put_f32(&mut h, 20, hi);
    put_f32(&mut h, 21, mean as f32);
    // ispg 0: image stack
    put_i32(&mut h, 22, 0);
    put_i32(&mut h, 27, 20140);
    h[MAP_OFFSET..MAP_OFFSET + 4].copy_from_slice(b"MAP ");
    h[STAMP_OFFSET..STAMP_OFFSET + 4].copy_from_slice(&[0x44, 0x44, 0x00, 0x00]);
    put_f32(&mut h, 54, rms as f32);
    h
}

/// Raw float32 sections of an MRC file plus its header.
pub fn read_mrc_raw(path: &Path) -> Result<(MrcHeader, Vec<f32>)> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &buf)?;
    let start = HEADER_LEN + header.ext_header_len as usize;
    let count = header.nx as usize * header.ny as usize * header.nz as usize;
    let end = start + 4 * count;
    if buf.len() < end {
        return Err(format_err(
            path,
            buf.len(),
            format!("data truncated: expected {end} bytes"),
        ));
    }
    let data = buf[start..end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((header, data))
}

fn write_mrc_raw(path: &Path, nx: usize, ny: usize, nz: usize, cell: [f32; 3], data: &[f32]) -> Result<()> {
    let header = build_header(nx, ny, nz, cell, data);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = Vec::with_capacity(data.len() * 4);
    for v in data {
        body.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&header)
        .and_then(|_| w.write_all(&body))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads the images of an MRC stack without any sidecar.
pub fn read_mrc_images(path: &Path) -> Result<Vec<Image>> {
    let (h, data) = read_mrc_raw(path)?;
    if h.nx != h.ny {
        return Err(Error::NonSquare { nx: h.nx, ny: h.ny });
    }
    let side = h.nx as usize;
    let pixel_size = if h.cell[0] > 0.0 {
        h.cell[0] as f64 / side as f64
    } else {
        1.0
    };
    data.chunks_exact(side * side)
        .map(|chunk| Image::new(side, pixel_size, chunk.iter().map(|&v| v as f64).collect()))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::Precondition(m) => format_err(path, 0, m),
            other => other,
        })
}

/// Writes images as an MRC mode-2 stack (no sidecar).
pub fn write_mrc_images(images: &[Image], path: &Path) -> Result<()> {
    let first = images
        .first()
        .ok_or_else(|| Error::Precondition("cannot write an empty stack".into()))?;
    let side = first.side();
    let mut data = Vec::with_capacity(images.len() * side * side);
    for img in images {
        first.check_same_shape(img)?;
        data.extend(img.pixels().iter().map(|&v| v as f32));
    }
    let len = (first.pixel_size() * side as f64) as f32;
    write_mrc_raw(path, side, side, images.len(), [len, len, images.len() as f32], &data)
}

/// Reads an MRC stack and its sidecar (if present) into an [`ImageStack`].
///
/// Without a sidecar every image is placed in group 0. Orientations become
/// ground truth only when every record carries a quaternion; clean images are
/// attached separately with [`ImageStack::attach_clean`].
pub fn read_mrc_stack(path: &Path) -> Result<ImageStack> {
    let images = read_mrc_images(path)?;
    let n = images.len();
    let side_path = sidecar_path(path);
    if !side_path.exists() {
        return ImageStack::new(images, vec![0; n]);
    }
    let records = read_sidecar(&side_path)?;
    if records.len() != n {
        return Err(Error::Metadata {
            path: side_path,
            line: records.len(),
            message: format!("{} records for {n} images", records.len()),
        });
    }
    let groups = records.iter().map(|r| r.group).collect();
    let mut stack = ImageStack::new(images, groups)?;
    if records.iter().all(|r| r.quat.is_some()) {
        let truth = records
            .iter()
            .map(|r| GroundTruth {
                rotation: Quaternion(r.quat.unwrap()),
                clean: None,
            })
            .collect();
        stack = stack.with_truth(truth)?;
    }
    if records.iter().all(|r| r.defocus_um.is_some()) {
        stack = stack.with_defocus(records.iter().map(|r| r.defocus_um.unwrap()).collect())?;
    }
    Ok(stack)
}

fn read_sidecar(path: &Path) -> Result<Vec<SidecarRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SidecarRecord = serde_json::from_str(&line).map_err(|e| Error::Metadata {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes the stack as MRC plus the `<stem>.meta.jsonl` sidecar.
pub fn write_mrc_stack(stack: &ImageStack, path: &Path) -> Result<()> {
    write_mrc_images(stack.images(), path)?;
    let side_path = sidecar_path(path);
    let file = File::create(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let mut w = BufWriter::new(file);
    for i in 0..stack.len() {
        let rec = SidecarRecord {
            group: stack.group_of()[i],
            quat: stack.truth().map(|t| t[i].rotation.0),
            defocus_um: stack.defocus_um().map(|d| d[i]),
        };
        let line = serde_json::to_string(&rec).expect("sidecar record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(&side_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&side_path, e))
}

/// Cubic density map read from an MRC file; voxel `(z, y, x)` at `data[(z*n + y)*n + x]`.
#[derive(Debug, Clone)]
pub struct Volume {
    pub side: usize,
    pub data: Vec<f64>,
}

pub fn read_mrc_volume(path: &Path) -> Result<Volume> {
    let (h, data) = read_mrc_raw(path)?;
    if h.nx != h.ny || h.ny != h.nz {
        return Err(format_err(
            path,
            0,
            format!("volume must be cubic, got {}x{}x{}", h.nx, h.ny, h.nz),
        ));
    }
    Ok(Volume {
        side: h.nx as usize,
        data: data.into_iter().map(|v| v as f64).collect(),
    })
}

pub fn write_mrc_volume(vol: &Volume, path: &Path) -> Result<()> {
    let data: Vec<f32> = vol.data.iter().map(|&v| v as f32).collect();
    let n = vol.side;
    write_mrc_raw(path, n, n, n, [n as f32; 3], &data)
}
