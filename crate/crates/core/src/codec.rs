//! Little-endian binary helpers shared by the dataset, graph and checkpoint
//! file formats, plus atomic file replacement.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub(crate) fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    let len = u16::try_from(bytes.len())
        .map_err(|_| Error::Invalid(format!("string too long to encode: {} bytes", bytes.len())))?;
    w.write_u16::<LittleEndian>(len)?;
    w.write_all(bytes)?;
    Ok(())
}

pub(crate) fn read_str(r: &mut impl Read, what: &str) -> Result<String> {
    let len = r.read_u16::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::format(what, "string is not valid UTF-8"))
}

pub(crate) fn write_f64s(w: &mut impl Write, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

pub(crate) fn write_f32s(w: &mut impl Write, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

pub(crate) fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0f32; n];
    r.read_f32_into::<LittleEndian>(&mut out)?;
    Ok(out.into_iter().map(f64::from).collect())
}

pub(crate) fn expect_magic(r: &mut impl Read, magic: &[u8; 4], what: &str) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format(what, "file too short for header"))?;
    if &buf != magic {
        return Err(Error::format(
            what,
            format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&buf), String::from_utf8_lossy(magic)),
        ));
    }
    Ok(())
}

pub(crate) fn expect_version(r: &mut impl Read, supported: u16, what: &str) -> Result<()> {
    let version = r.read_u16::<LittleEndian>()?;
    let _reserved = r.read_u16::<LittleEndian>()?;
    if version != supported {
        return Err(Error::format(
            what,
            format!("unsupported version {version}, this build reads version {supported}"),
        ));
    }
    Ok(())
}

/// Reject trailing garbage after a fully decoded payload.
pub(crate) fn expect_eof(r: &mut impl Read, what: &str) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::format(what, "trailing bytes after payload")),
    }
}

/// Write `bytes` to `path` through a sibling temp file and a rename, so
/// readers never observe a partially written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
