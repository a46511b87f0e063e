use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use cgraar::container::{read_container, Role};
use cgraar::datagen::import_raw;
use cgraar::{ComplexField, IntensityData, Shape, SupportMask};
use serde::Serialize;

use crate::error::CliError;

/// Counts from the container's intensity array. Pixels of an optional mask
/// array (in the same container, or in `mask` via the raw import path) that
/// are false are blocked.
pub fn load_intensity(path: &Path, mask: Option<&Path>) -> Result<IntensityData, CliError> {
    let container = read_container(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let counts = container.by_role(Role::Intensity)?;
    if let Some(mask) = mask {
        return Ok(import_raw(path, mask, counts.shape)?);
    }
    let data = IntensityData::new(counts.shape, counts.as_real()?.to_vec())?;
    match container.arrays.iter().find(|a| a.role == Role::Mask) {
        Some(m) => {
            counts.shape.ensure_eq(m.shape)?;
            let blocked: Vec<bool> = m.as_bool()?.iter().map(|&ok| !ok).collect();
            Ok(data.with_blocked(&blocked)?)
        }
        None => Ok(data),
    }
}

pub fn load_support(path: &Path) -> Result<SupportMask, CliError> {
    let container = read_container(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let support = container.by_role(Role::Support)?;
    Ok(SupportMask::new(support.shape, support.as_bool()?.to_vec())?)
}

pub fn load_field(path: &Path) -> Result<ComplexField, CliError> {
    let container = read_container(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(container.by_role(Role::Field)?.to_field()?)
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))
}

pub(crate) fn write_with(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let wrap = CliError::io(format!("writing {}", path.display()));
    let file = match fs::File::create(path) {
        Ok(file) => file,
        Err(e) => return Err(wrap(e)),
    };
    let mut out = BufWriter::new(file);
    match f(&mut out).and_then(|_| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) => Err(wrap(e)),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_with(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value).map_err(std::io::Error::other)?;
        writeln!(out)
    })
}

/// 16-bit binary PGM of `values` clamped to [0, 1].
pub fn write_pgm(path: &Path, shape: Shape, values: &[f64]) -> Result<(), CliError> {
    assert_eq!(values.len(), shape.len());
    write_with(path, |out| {
        write!(out, "P5\n{} {}\n65535\n", shape.width, shape.height)?;
        for &v in values {
            let level = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
            out.write_all(&level.to_be_bytes())?;
        }
        Ok(())
    })
}

/// Inverse of [`write_pgm`], returning the shape and levels scaled to [0, 1].
pub fn read_pgm(path: &Path) -> Result<(Shape, Vec<f64>), CliError> {
    let bytes = fs::read(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    let bad = || CliError::Data(format!("{}: not a 16-bit PGM", path.display()));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_owned());
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    if fields[0] != "P5" || num(&fields[3])? != 65535 {
        return Err(bad());
    }
    let shape = Shape::new(num(&fields[1])?, num(&fields[2])?).map_err(|_| bad())?;
    let pixels = &bytes[pos + 1..];
    if pixels.len() != 2 * shape.len() {
        return Err(bad());
    }
    Ok((shape, pixels.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0).collect()))
}

/// Moves the zero frequency from the corner to the centre for display.
pub(crate) fn centred(shape: Shape, values: &[f64]) -> Vec<f64> {
    let (w, h) = (shape.width, shape.height);
    let mut out = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            out[((y + h / 2) % h) * w + (x + w / 2) % w] = values[y * w + x];
        }
    }
    out
}
