//! Per-tensor files and the lazily loaded stores built on them.
//!
//! File layout: magic `DTNS1`, one tag byte (0 real, 1 complex), `u32` rank,
//! `u64` dims, then the elements little-endian in leftmost-fastest order
//! (complex values as re, im pairs). Files carry the `.dmrjulia` extension so
//! a stray run directory is easy to clean up.

use std::borrow::Cow;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{Complex64, DenseTensor, Storage};

pub const MAGIC: &[u8; 5] = b"DTNS1";
pub const EXTENSION: &str = "dmrjulia";
pub const MANIFEST: &str = "manifest.dmrjulia";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarType {
    Real,
    Complex,
}

impl ScalarType {
    pub fn of(t: &DenseTensor) -> Self {
        if t.is_complex() {
            ScalarType::Complex
        } else {
            ScalarType::Real
        }
    }

    fn tag(self) -> u8 {
        match self {
            ScalarType::Real => 0,
            ScalarType::Complex => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ScalarType::Real => "real64",
            ScalarType::Complex => "complex64",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "real64" => Some(ScalarType::Real),
            "complex64" => Some(ScalarType::Complex),
            _ => None,
        }
    }
}

fn storage_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Storage { path: path.to_path_buf(), source }
}

pub fn write_tensor(path: &Path, t: &DenseTensor) -> Result<()> {
    let file = fs::File::create(path).map_err(storage_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(10 + 8 * t.rank());
    header.extend_from_slice(MAGIC);
    header.push(ScalarType::of(t).tag());
    header.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.dims() {
        header.extend_from_slice(&(d as u64).to_le_bytes());
    }
    w.write_all(&header).map_err(storage_err(path))?;
    match t.storage() {
        Storage::Real(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes()).map_err(storage_err(path))?;
            }
        }
        Storage::Complex(v) => {
            for z in v {
                w.write_all(&z.re.to_le_bytes()).map_err(storage_err(path))?;
                w.write_all(&z.im.to_le_bytes()).map_err(storage_err(path))?;
            }
        }
    }
    w.flush().map_err(storage_err(path))
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    read_tensor_checked(path, None)
}

/// Reads a tensor file, failing with a format error when its scalar tag
/// differs from `expected`.
pub fn read_tensor_checked(path: &Path, expected: Option<ScalarType>) -> Result<DenseTensor> {
    let file = fs::File::open(path).map_err(storage_err(path))?;
    let mut r = BufReader::new(file);
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));

    let mut head = [0u8; 10];
    r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if &head[..5] != MAGIC {
        return Err(bad("bad magic"));
    }
    let ty = match head[5] {
        0 => ScalarType::Real,
        1 => ScalarType::Complex,
        t => return Err(bad(&format!("unknown scalar tag {t}"))),
    };
    if let Some(e) = expected {
        if e != ty {
            return Err(bad(&format!("stored as {} but expected {}", ty.name(), e.name())));
        }
    }
    let rank = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut buf8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut buf8).map_err(|_| bad("truncated dims"))?;
        dims.push(u64::from_le_bytes(buf8) as usize);
    }
    let n: usize = dims.iter().product();
    let width = if ty == ScalarType::Complex { 16 } else { 8 };
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(storage_err(path))?;
    if payload.len() != n * width {
        return Err(bad(&format!("payload has {} bytes, expected {}", payload.len(), n * width)));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().unwrap());
    let data = match ty {
        ScalarType::Real => Storage::Real(payload.chunks_exact(8).map(f).collect()),
        ScalarType::Complex => Storage::Complex(
            payload.chunks_exact(16).map(|c| Complex64::new(f(&c[..8]), f(&c[8..]))).collect(),
        ),
    };
    DenseTensor::new(dims, data)
}

/// Tensors kept on disk, one file per slot, read only on demand.
#[derive(Clone, Debug)]
pub struct DiskStore {
    dir: PathBuf,
    prefix: String,
    slots: Vec<Option<(Vec<usize>, ScalarType)>>,
}

impl DiskStore {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, i: usize) -> PathBuf {
        self.dir.join(format!("{}_{i}.{EXTENSION}", self.prefix))
    }

    pub fn scalar_type(&self, i: usize) -> Option<ScalarType> {
        self.slots.get(i).and_then(|s| s.as_ref()).map(|s| s.1)
    }
}

/// Slot storage shared by MPS, MPO and environment containers.
#[derive(Clone, Debug)]
pub enum TensorStore {
    Memory(Vec<Option<DenseTensor>>),
    Disk(DiskStore),
}

impl TensorStore {
    pub fn memory(tensors: Vec<DenseTensor>) -> Self {
        TensorStore::Memory(tensors.into_iter().map(Some).collect())
    }

    pub fn empty(n: usize) -> Self {
        TensorStore::Memory(vec![None; n])
    }

    /// Empty on-disk store; files are named `<prefix>_<i>.dmrjulia` in `dir`.
    pub fn empty_disk(dir: &Path, prefix: &str, n: usize) -> Result<Self> {
        fs::create_dir_all(dir).map_err(storage_err(dir))?;
        Ok(TensorStore::Disk(DiskStore { dir: dir.to_path_buf(), prefix: prefix.to_string(), slots: vec![None; n] }))
    }

    pub fn len(&self) -> usize {
        match self {
            TensorStore::Memory(v) => v.len(),
            TensorStore::Disk(d) => d.slots.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_disk(&self) -> bool {
        matches!(self, TensorStore::Disk(_))
    }

    pub fn contains(&self, i: usize) -> bool {
        match self {
            TensorStore::Memory(v) => v.get(i).is_some_and(Option::is_some),
            TensorStore::Disk(d) => d.slots.get(i).is_some_and(Option::is_some),
        }
    }

    fn missing(&self, i: usize) -> Error {
        if i >= self.len() {
            Error::OutOfRange { index: i, len: self.len() }
        } else {
            Error::InternalState(format!("slot {i} has not been populated"))
        }
    }

    pub fn get(&self, i: usize) -> Result<Cow<'_, DenseTensor>> {
        match self {
            TensorStore::Memory(v) => v.get(i).and_then(Option::as_ref).map(Cow::Borrowed).ok_or_else(|| self.missing(i)),
            TensorStore::Disk(d) => {
                let (_, ty) = d.slots.get(i).and_then(|s| s.as_ref()).ok_or_else(|| self.missing(i))?;
                Ok(Cow::Owned(read_tensor_checked(&d.path(i), Some(*ty))?))
            }
        }
    }

    /// Dims of a populated slot without touching the disk.
    pub fn dims(&self, i: usize) -> Result<Vec<usize>> {
        match self {
            TensorStore::Memory(v) => {
                v.get(i).and_then(Option::as_ref).map(|t| t.dims().to_vec()).ok_or_else(|| self.missing(i))
            }
            TensorStore::Disk(d) => {
                d.slots.get(i).and_then(|s| s.as_ref()).map(|s| s.0.clone()).ok_or_else(|| self.missing(i))
            }
        }
    }

    pub fn is_complex(&self, i: usize) -> bool {
        match self {
            TensorStore::Memory(v) => v.get(i).and_then(Option::as_ref).is_some_and(DenseTensor::is_complex),
            TensorStore::Disk(d) => d.scalar_type(i) == Some(ScalarType::Complex),
        }
    }

    pub fn set(&mut self, i: usize, t: DenseTensor) -> Result<()> {
        let len = self.len();
        if i >= len {
            return Err(Error::OutOfRange { index: i, len });
        }
        match self {
            TensorStore::Memory(v) => v[i] = Some(t),
            TensorStore::Disk(d) => {
                write_tensor(&d.path(i), &t)?;
                d.slots[i] = Some((t.dims().to_vec(), ScalarType::of(&t)));
            }
        }
        Ok(())
    }

    pub fn clear(&mut self, i: usize) {
        match self {
            TensorStore::Memory(v) => {
                if let Some(s) = v.get_mut(i) {
                    *s = None;
                }
            }
            TensorStore::Disk(d) => {
                if let Some(s) = d.slots.get_mut(i) {
                    if s.take().is_some() {
                        let _ = fs::remove_file(d.path(i));
                    }
                }
            }
        }
    }

    /// Copies every populated slot into a fresh store of the requested kind.
    pub fn copy_to(&self, target: &mut TensorStore) -> Result<()> {
        for i in 0..self.len() {
            if self.contains(i) {
                target.set(i, self.get(i)?.into_owned())?;
            }
        }
        Ok(())
    }

    pub fn to_memory(&self) -> Result<TensorStore> {
        let mut out = TensorStore::empty(self.len());
        self.copy_to(&mut out)?;
        Ok(out)
    }

    /// Writes a manifest describing this (disk) store plus extra `key value` lines.
    pub(crate) fn write_manifest(&self, kind: &str, extra: &[(&str, String)]) -> Result<()> {
        let TensorStore::Disk(d) = self else {
            return Err(Error::InternalState("manifest requested for an in-memory store".into()));
        };
        let mut text = format!("# densetn store\nkind {kind}\nprefix {}\nsites {}\n", d.prefix, d.slots.len());
        for (k, v) in extra {
            text.push_str(&format!("{k} {v}\n"));
        }
        for (i, slot) in d.slots.iter().enumerate() {
            if let Some((_, ty)) = slot {
                text.push_str(&format!(
                    "site {i} {} {}\n",
                    ty.name(),
                    d.path(i).file_name().unwrap().to_string_lossy()
                ));
            }
        }
        let path = d.dir.join(MANIFEST);
        fs::write(&path, text).map_err(storage_err(&path))
    }

    /// Opens a store from its manifest, reading only the tensor headers.
    pub(crate) fn open(dir: &Path, kind: &str) -> Result<(TensorStore, Vec<(String, String)>)> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(storage_err(&path))?;
        let bad = |what: String| Error::Format(format!("{}: {what}", path.display()));
        let mut prefix = None;
        let mut n = None;
        let mut extra = Vec::new();
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["kind", k] if *k == kind => {}
                ["kind", k] => return Err(bad(format!("store holds a {k}, not a {kind}"))),
                ["prefix", p] => prefix = Some(p.to_string()),
                ["sites", s] => n = Some(s.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                ["site", i, ty, _file] => {
                    let i: usize = i.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
                    let ty = ScalarType::parse(ty).ok_or_else(|| bad(format!("unknown type {ty}")))?;
                    entries.push((i, ty));
                }
                [k, v] => extra.push((k.to_string(), v.to_string())),
                _ => return Err(bad(format!("unreadable line `{line}`"))),
            }
        }
        let prefix = prefix.ok_or_else(|| bad("missing prefix".into()))?;
        let n = n.ok_or_else(|| bad("missing site count".into()))?;
        let mut store = DiskStore { dir: dir.to_path_buf(), prefix, slots: vec![None; n] };
        for (i, ty) in entries {
            if i >= n {
                return Err(bad(format!("site {i} beyond count {n}")));
            }
            let dims = read_header_dims(&store.path(i))?;
            store.slots[i] = Some((dims, ty));
        }
        Ok((TensorStore::Disk(store), extra))
    }
}

fn read_header_dims(path: &Path) -> Result<Vec<usize>> {
    let file = fs::File::open(path).map_err(storage_err(path))?;
    let mut r = BufReader::new(file);
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));
    let mut head = [0u8; 10];
    r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if &head[..5] != MAGIC {
        return Err(bad("bad magic"));
    }
    let rank = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut buf8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut buf8).map_err(|_| bad("truncated dims"))?;
        dims.push(u64::from_le_bytes(buf8) as usize);
    }
    Ok(dims)
}
