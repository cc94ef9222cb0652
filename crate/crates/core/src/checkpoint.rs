//! Checkpoint file format.
//!
//! A checkpoint is a text header of `key=value` lines — format version,
//! architecture fields, then one manifest line per tensor carrying
//! name/shape/dtype/byte-offset — terminated by a blank line and followed by
//! the raw little-endian parameter arrays in manifest order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Architecture, ModelParams};
use crate::nn::dense::DenseParams;
use crate::nn::ParamTensors;
use crate::tensor::Scalar;

pub const FORMAT_VERSION: u32 = 1;

/// Serialize parameters. `extra` lines (for example a config hash) are
/// emitted into the header after the format version.
pub fn save<F: Scalar>(params: &ModelParams<F>, path: impl AsRef<Path>, extra: &[(String, String)]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    write_to(params, &mut w, extra).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn write_to<F: Scalar>(
    params: &ModelParams<F>,
    w: &mut impl Write,
    extra: &[(String, String)],
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Checkpoint(e.to_string());
    writeln!(w, "format_version={FORMAT_VERSION}").map_err(io_err)?;
    for (k, v) in extra {
        writeln!(w, "{k}={v}").map_err(io_err)?;
    }
    for line in params.arch.to_header_lines() {
        writeln!(w, "{line}").map_err(io_err)?;
    }
    let shapes = params.tensor_shapes();
    let tensors = params.tensors();
    let mut offset = 0usize;
    for ((name, shape), (tname, data)) in shapes.iter().zip(&tensors) {
        debug_assert_eq!(name, tname);
        let shape_str = shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
        writeln!(w, "tensor={name};shape={shape_str};dtype={};offset={offset}", F::DTYPE).map_err(io_err)?;
        offset += data.len() * F::BYTES;
    }
    writeln!(w).map_err(io_err)?;
    let mut payload = Vec::with_capacity(offset);
    for (_, data) in &tensors {
        for &v in data.iter() {
            v.write_le(&mut payload);
        }
    }
    w.write_all(&payload).map_err(io_err)?;
    Ok(())
}

/// Inspect the element type stored in a checkpoint without loading it.
pub fn peek_dtype(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let (header, _) = split_header(&bytes)?;
    for line in header.lines() {
        if let Some(rest) = line.strip_prefix("tensor=") {
            for field in rest.split(';') {
                if let Some(d) = field.strip_prefix("dtype=") {
                    return Ok(d.to_string());
                }
            }
        }
    }
    Err(Error::Checkpoint("no tensor manifest entries found".into()))
}

pub fn load<F: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<F>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut bytes = Vec::new();
    std::io::BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    read_from(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let sep = b"\n\n";
    let pos = bytes
        .windows(2)
        .position(|w| w == sep)
        .ok_or_else(|| Error::Checkpoint("missing blank line after header".into()))?;
    let header = std::str::from_utf8(&bytes[..pos]).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    Ok((header, &bytes[pos + 2..]))
}

struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
}

pub fn read_from<F: Scalar>(bytes: &[u8]) -> Result<ModelParams<F>> {
    let (header, payload) = split_header(bytes)?;
    let mut keys: Vec<(String, String)> = Vec::new();
    let mut manifest: Vec<ManifestEntry> = Vec::new();
    for line in header.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("malformed header line {line:?}")))?;
        if k == "tensor" {
            manifest.push(parse_manifest_line(v, line)?);
        } else {
            keys.push((k.to_string(), v.to_string()));
        }
    }

    let get = |key: &str| -> Result<&str> {
        keys.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing header key {key}")))
    };
    let version: u32 = get("format_version")?
        .parse()
        .map_err(|_| Error::Checkpoint("unparseable format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }

    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?.parse().map_err(|_| Error::Checkpoint(format!("unparseable {key}")))
    };
    let parse_list = |key: &str| -> Result<Vec<usize>> {
        get(key)?
            .split(',')
            .map(|s| s.parse().map_err(|_| Error::Checkpoint(format!("unparseable {key}"))))
            .collect()
    };
    let arch = Architecture {
        n_mels: parse_usize("n_mels")?,
        shared_channels: parse_list("shared_channels")?,
        shared_pool_freq: parse_list("shared_pool_freq")?,
        shared_filter_time: parse_usize("shared_filter_time")?,
        shared_filter_freq: parse_usize("shared_filter_freq")?,
        gru_hidden: parse_usize("gru_hidden")?,
        event_hidden: parse_usize("event_hidden")?,
        n_events: parse_usize("n_events")?,
        scene_channels: parse_list("scene_channels")?,
        scene_filter: parse_usize("scene_filter")?,
        scene_pool_time: parse_list("scene_pool_time")?,
        n_scenes: parse_usize("n_scenes")?,
    };

    let mut params = ModelParams::<F>::zeros(&arch)?;
    // The scene output width is data-dependent; take it from the manifest.
    let scene_w = manifest
        .iter()
        .find(|e| e.name == "scene_out.w")
        .ok_or_else(|| Error::Checkpoint("manifest lacks scene_out.w".into()))?;
    if scene_w.shape.len() != 2 || scene_w.shape[0] != arch.n_scenes {
        return Err(Error::Checkpoint(format!("scene_out.w has unexpected shape {:?}", scene_w.shape)));
    }
    params.scene_out = DenseParams::zeros(scene_w.shape[0], scene_w.shape[1]);

    let expected = params.tensor_shapes();
    if expected.len() != manifest.len() {
        return Err(Error::Checkpoint(format!(
            "manifest has {} tensors, architecture implies {}",
            manifest.len(),
            expected.len()
        )));
    }
    let mut tensors = params.tensors_mut();
    for (i, entry) in manifest.iter().enumerate() {
        let (ref exp_name, ref exp_shape) = expected[i];
        if &entry.name != exp_name || &entry.shape != exp_shape {
            return Err(Error::Checkpoint(format!(
                "tensor {} ({:?}) does not match expected {} ({:?})",
                entry.name, entry.shape, exp_name, exp_shape
            )));
        }
        if entry.dtype != F::DTYPE {
            return Err(Error::Checkpoint(format!(
                "tensor {} has dtype {} but {} was requested",
                entry.name,
                entry.dtype,
                F::DTYPE
            )));
        }
        let data = &mut tensors[i].1;
        let n_bytes = data.len() * F::BYTES;
        let end = entry.offset + n_bytes;
        if end > payload.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {} payload [{}..{end}) exceeds file size {}",
                entry.name,
                entry.offset,
                payload.len()
            )));
        }
        for (j, v) in data.iter_mut().enumerate() {
            let at = entry.offset + j * F::BYTES;
            *v = F::read_le(&payload[at..at + F::BYTES]);
        }
    }
    Ok(params)
}

fn parse_manifest_line(value: &str, full_line: &str) -> Result<ManifestEntry> {
    let mut shape = None;
    let mut dtype = None;
    let mut offset = None;

    let fields: Vec<&str> = value.split(';').collect();
    let name = Some(fields[0].to_string());
    for field in &fields[1..] {
        if let Some(s) = field.strip_prefix("shape=") {
            shape = Some(
                s.split(',')
                    .map(|d| d.parse::<usize>().map_err(|_| Error::Checkpoint(format!("bad shape in {full_line:?}"))))
                    .collect::<Result<Vec<_>>>()?,
            );
        } else if let Some(d) = field.strip_prefix("dtype=") {
            dtype = Some(d.to_string());
        } else if let Some(o) = field.strip_prefix("offset=") {
            offset =
                Some(o.parse::<usize>().map_err(|_| Error::Checkpoint(format!("bad offset in {full_line:?}")))?);
        }
    }
    match (name, shape, dtype, offset) {
        (Some(name), Some(shape), Some(dtype), Some(offset)) => Ok(ManifestEntry { name, shape, dtype, offset }),
        _ => Err(Error::Checkpoint(format!("incomplete manifest line {full_line:?}"))),
    }
}
