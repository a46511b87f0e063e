//! The `.cgr` raster container.
//!
//! Layout:
//!
//! ```text
//! magic        8 bytes   "CGRAAR\0\x01"
//! header_len   u64 LE
//! header       UTF-8 text, one `key=value` per line
//! payload      arrays back to back, in header order
//! ```
//!
//! Header keys: `endian=LE`, `arrays=<n>`, `meta.<key>=<value>` for free-form
//! metadata, and per array `array.<i>.{name,role,dtype,shape,dx,dy}` with
//! `shape` written as `<width>x<height>`. Payload encodings: `f64` is one
//! little-endian 8-byte float per pixel, `c128` is interleaved `(re, im)`
//! pairs, `bool8` is one byte (0 or 1) per pixel. All rasters are row-major.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::field::{ComplexField, Shape};

pub const MAGIC: &[u8; 8] = b"CGRAAR\0\x01";
pub const EXTENSION: &str = "cgr";

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("not a .cgr container (magic bytes {found:?})")]
    BadMagic { found: Vec<u8> },

    #[error("truncated container: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("container has {extra} unexpected trailing bytes")]
    TrailingBytes { extra: u64 },

    #[error("array `{name}`: shape {shape} does not match {len} elements")]
    ShapeMismatch { name: String, shape: String, len: usize },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("duplicate array name `{0}`")]
    DuplicateName(String),

    #[error("no array {0}")]
    Missing(String),

    #[error("array `{name}` has dtype {found}, expected {expected}")]
    WrongDtype { name: String, expected: Dtype, found: Dtype },
}

type Result<T> = std::result::Result<T, ContainerError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F64,
    C128,
    Bool8,
}

impl Dtype {
    fn bytes_per_pixel(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::C128 => 16,
            Dtype::Bool8 => 1,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::F64 => "f64",
            Dtype::C128 => "c128",
            Dtype::Bool8 => "bool8",
        })
    }
}

impl FromStr for Dtype {
    type Err = ContainerError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Dtype::F64),
            "c128" => Ok(Dtype::C128),
            "bool8" => Ok(Dtype::Bool8),
            other => Err(ContainerError::Header(format!("unknown dtype `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Field,
    Intensity,
    Mask,
    Support,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Field => "field",
            Role::Intensity => "intensity",
            Role::Mask => "mask",
            Role::Support => "support",
        })
    }
}

impl FromStr for Role {
    type Err = ContainerError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "field" => Ok(Role::Field),
            "intensity" => Ok(Role::Intensity),
            "mask" => Ok(Role::Mask),
            "support" => Ok(Role::Support),
            other => Err(ContainerError::Header(format!("unknown role `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
    Bool(Vec<bool>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::Real(_) => Dtype::F64,
            ArrayData::Complex(_) => Dtype::C128,
            ArrayData::Bool(_) => Dtype::Bool8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::Real(v) => v.len(),
            ArrayData::Complex(v) => v.len(),
            ArrayData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub role: Role,
    pub shape: Shape,
    pub dx: f64,
    pub dy: f64,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn to_field(&self) -> crate::Result<ComplexField> {
        match &self.data {
            ArrayData::Complex(v) => ComplexField::from_values(self.shape, v.clone())?.with_spacing(self.dx, self.dy),
            other => Err(self.wrong(Dtype::C128, other.dtype()).into()),
        }
    }

    pub fn as_real(&self) -> Result<&[f64]> {
        match &self.data {
            ArrayData::Real(v) => Ok(v),
            other => Err(self.wrong(Dtype::F64, other.dtype())),
        }
    }

    pub fn as_bool(&self) -> Result<&[bool]> {
        match &self.data {
            ArrayData::Bool(v) => Ok(v),
            other => Err(self.wrong(Dtype::Bool8, other.dtype())),
        }
    }

    fn wrong(&self, expected: Dtype, found: Dtype) -> ContainerError {
        ContainerError::WrongDtype { name: self.name.clone(), expected, found }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub arrays: Vec<NamedArray>,
    pub metadata: BTreeMap<String, String>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }

    pub fn push(&mut self, array: NamedArray) -> Result<()> {
        if array.data.len() != array.shape.len() {
            return Err(ContainerError::ShapeMismatch {
                name: array.name,
                shape: array.shape.to_string(),
                len: array.data.len(),
            });
        }
        if self.arrays.iter().any(|a| a.name == array.name) {
            return Err(ContainerError::DuplicateName(array.name));
        }
        self.arrays.push(array);
        Ok(())
    }

    pub fn push_field(&mut self, name: &str, field: &ComplexField) -> Result<()> {
        self.push(NamedArray {
            name: name.to_owned(),
            role: Role::Field,
            shape: field.shape(),
            dx: field.dx(),
            dy: field.dy(),
            data: ArrayData::Complex(field.values().to_vec()),
        })
    }

    pub fn push_real(&mut self, name: &str, role: Role, shape: Shape, values: Vec<f64>) -> Result<()> {
        self.push(NamedArray { name: name.to_owned(), role, shape, dx: 1.0, dy: 1.0, data: ArrayData::Real(values) })
    }

    pub fn push_mask(&mut self, name: &str, role: Role, shape: Shape, values: Vec<bool>) -> Result<()> {
        self.push(NamedArray { name: name.to_owned(), role, shape, dx: 1.0, dy: 1.0, data: ArrayData::Bool(values) })
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| ContainerError::Missing(format!("named `{name}`")))
    }

    /// First array carrying `role`.
    pub fn by_role(&self, role: Role) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.role == role)
            .ok_or_else(|| ContainerError::Missing(format!("with role `{role}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = String::new();
        header.push_str("endian=LE\n");
        header.push_str(&format!("arrays={}\n", self.arrays.len()));
        for (key, value) in &self.metadata {
            check_token(key, "metadata key")?;
            if value.contains('\n') {
                return Err(ContainerError::Header(format!("metadata value for `{key}` contains a newline")));
            }
            header.push_str(&format!("meta.{key}={value}\n"));
        }
        let mut names = BTreeSet::new();
        for (i, a) in self.arrays.iter().enumerate() {
            check_token(&a.name, "array name")?;
            if !names.insert(a.name.as_str()) {
                return Err(ContainerError::DuplicateName(a.name.clone()));
            }
            if a.data.len() != a.shape.len() {
                return Err(ContainerError::ShapeMismatch {
                    name: a.name.clone(),
                    shape: a.shape.to_string(),
                    len: a.data.len(),
                });
            }
            header.push_str(&format!("array.{i}.name={}\n", a.name));
            header.push_str(&format!("array.{i}.role={}\n", a.role));
            header.push_str(&format!("array.{i}.dtype={}\n", a.data.dtype()));
            header.push_str(&format!("array.{i}.shape={}x{}\n", a.shape.width, a.shape.height));
            header.push_str(&format!("array.{i}.dx={:?}\n", a.dx));
            header.push_str(&format!("array.{i}.dy={:?}\n", a.dy));
        }

        let payload: usize = self.arrays.iter().map(|a| a.shape.len() * a.data.dtype().bytes_per_pixel()).sum();
        let mut out = Vec::with_capacity(16 + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for a in &self.arrays {
            match &a.data {
                ArrayData::Real(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::Complex(v) => v.iter().for_each(|z| {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }),
                ArrayData::Bool(v) => out.extend(v.iter().map(|&b| b as u8)),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(ContainerError::BadMagic { found: bytes[..bytes.len().min(MAGIC.len())].to_vec() });
        }
        if bytes.len() < 16 {
            return Err(ContainerError::Truncated { expected: 16, actual: bytes.len() as u64 });
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8-byte slice"));
        let header_end = 16u64.saturating_add(header_len);
        if (bytes.len() as u64) < header_end {
            return Err(ContainerError::Truncated { expected: header_end, actual: bytes.len() as u64 });
        }
        let header = std::str::from_utf8(&bytes[16..header_end as usize])
            .map_err(|e| ContainerError::Header(format!("header is not UTF-8: {e}")))?;

        let mut kv = BTreeMap::new();
        for line in header.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ContainerError::Header(format!("line without `=`: {line:?}")))?;
            kv.insert(k.to_owned(), v.to_owned());
        }
        match kv.get("endian").map(String::as_str) {
            Some("LE") => {}
            other => return Err(ContainerError::Header(format!("unsupported endianness marker {other:?}"))),
        }
        let count: usize = parse_key(&kv, "arrays")?;

        let mut specs = Vec::with_capacity(count);
        let mut payload_len = 0u64;
        for i in 0..count {
            let name = get_key(&kv, &format!("array.{i}.name"))?.to_owned();
            let role: Role = get_key(&kv, &format!("array.{i}.role"))?.parse()?;
            let dtype: Dtype = get_key(&kv, &format!("array.{i}.dtype"))?.parse()?;
            let shape_str = get_key(&kv, &format!("array.{i}.shape"))?;
            let shape = parse_shape(shape_str)?;
            let dx: f64 = parse_key(&kv, &format!("array.{i}.dx"))?;
            let dy: f64 = parse_key(&kv, &format!("array.{i}.dy"))?;
            payload_len += (shape.len() * dtype.bytes_per_pixel()) as u64;
            specs.push((name, role, dtype, shape, dx, dy));
        }

        let expected = header_end + payload_len;
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(ContainerError::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(ContainerError::TrailingBytes { extra: actual - expected });
        }

        let mut container = Container::new();
        for (k, v) in &kv {
            if let Some(key) = k.strip_prefix("meta.") {
                container.metadata.insert(key.to_owned(), v.clone());
            }
        }
        let mut cursor = header_end as usize;
        for (name, role, dtype, shape, dx, dy) in specs {
            let n = shape.len();
            let data = match dtype {
                Dtype::F64 => ArrayData::Real(
                    bytes[cursor..cursor + 8 * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
                Dtype::C128 => ArrayData::Complex(
                    bytes[cursor..cursor + 16 * n]
                        .chunks_exact(16)
                        .map(|c| {
                            Complex64::new(
                                f64::from_le_bytes(c[..8].try_into().unwrap()),
                                f64::from_le_bytes(c[8..].try_into().unwrap()),
                            )
                        })
                        .collect(),
                ),
                Dtype::Bool8 => ArrayData::Bool(bytes[cursor..cursor + n].iter().map(|&b| b != 0).collect()),
            };
            cursor += n * dtype.bytes_per_pixel();
            container.push(NamedArray { name, role, shape, dx, dy, data })?;
        }
        Ok(container)
    }
}

fn check_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\n', '\r', '=']) {
        return Err(ContainerError::Header(format!("invalid {what} {s:?}")));
    }
    Ok(())
}

fn get_key<'a>(kv: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    kv.get(key).map(String::as_str).ok_or_else(|| ContainerError::Header(format!("missing key `{key}`")))
}

fn parse_key<T: FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = get_key(kv, key)?;
    raw.parse().map_err(|_| ContainerError::Header(format!("cannot parse `{key}={raw}`")))
}

fn parse_shape(s: &str) -> Result<Shape> {
    let bad = || ContainerError::Header(format!("bad shape `{s}`"));
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    let (w, h) = (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?);
    Shape::new(w, h).map_err(|_| bad())
}

pub fn write_container(path: impl AsRef<Path>, container: &Container) -> Result<()> {
    fs::write(path, container.to_bytes()?)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Container> {
    Container::from_bytes(&fs::read(path)?)
}
