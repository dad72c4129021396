//! Model checkpoint files.
//!
//! Version 1 layout, little-endian:
//!
//! ```text
//! magic          4 bytes  "FGCK"
//! version        u16      1
//! reserved       u16      0
//! kind           u8       0 = gcn_lstm, 1 = gcn, 2 = lstm
//! stacked        u8       0 or 1
//! reserved       u16      0
//! in_channels    u32
//! hidden         u32
//! cheb_k         u32
//! steps          u32
//! head_hidden    u32
//! outputs        u32
//! dropout        f64
//! tensor_count   u32
//! tensor_count x tensor:
//!   name_len     u16, then UTF-8 name
//!   ndim         u8
//!   dims         ndim x u32
//!   data         prod(dims) x f64, row-major
//! ```
//!
//! Tensors appear in [`ModelParams::named_tensors`] order and are matched by
//! name and shape on load.

use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::codec;
use crate::error::{Error, Result};

use super::params::{Architecture, ModelKind, ModelParams};

const MAGIC: &[u8; 4] = b"FGCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn to_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    let a = &params.arch;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u16::<LittleEndian>(CHECKPOINT_VERSION)?;
    buf.write_u16::<LittleEndian>(0)?;
    buf.write_u8(a.kind.code())?;
    buf.write_u8(u8::from(a.stacked))?;
    buf.write_u16::<LittleEndian>(0)?;
    for v in [a.in_channels, a.hidden, a.cheb_k, a.steps, a.head_hidden, a.outputs] {
        buf.write_u32::<LittleEndian>(v as u32)?;
    }
    buf.write_f64::<LittleEndian>(a.dropout)?;
    let tensors = params.named_tensors();
    buf.write_u32::<LittleEndian>(tensors.len() as u32)?;
    for (name, shape, data) in tensors {
        codec::write_str(&mut buf, &name)?;
        buf.write_u8(shape.len() as u8)?;
        for d in shape {
            buf.write_u32::<LittleEndian>(d as u32)?;
        }
        codec::write_f64s(&mut buf, data.iter().copied())?;
    }
    Ok(buf)
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    const WHAT: &str = "checkpoint";
    let mut r = Cursor::new(bytes);
    codec::expect_magic(&mut r, MAGIC, WHAT)?;
    codec::expect_version(&mut r, CHECKPOINT_VERSION, WHAT)?;
    let kind_code = r.read_u8()?;
    let kind = ModelKind::from_code(kind_code)
        .ok_or_else(|| Error::format(WHAT, format!("unknown model kind code {kind_code}")))?;
    let stacked = r.read_u8()? != 0;
    let _reserved = r.read_u16::<LittleEndian>()?;
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = r.read_u32::<LittleEndian>()? as usize;
    }
    let [in_channels, hidden, cheb_k, steps, head_hidden, outputs] = dims;
    let dropout = r.read_f64::<LittleEndian>()?;
    let arch = Architecture {
        kind,
        in_channels,
        hidden,
        cheb_k,
        steps,
        stacked,
        head_hidden,
        outputs,
        dropout,
    };
    let mut params = ModelParams::zeros(arch)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    let count = r.read_u32::<LittleEndian>()? as usize;
    if count != expected.len() {
        return Err(Error::format(WHAT, format!("expected {} tensors, found {count}", expected.len())));
    }
    let mut slots = params.tensors_mut();
    for ((exp_name, exp_shape), slot) in expected.iter().zip(slots.iter_mut()) {
        let name = codec::read_str(&mut r, WHAT)?;
        let ndim = r.read_u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u32::<LittleEndian>()? as usize);
        }
        if &name != exp_name || &shape != exp_shape {
            return Err(Error::format(
                WHAT,
                format!("tensor {name} {shape:?} does not match expected {exp_name} {exp_shape:?}"),
            ));
        }
        r.read_f64_into::<LittleEndian>(slot)
            .map_err(|_| Error::format(WHAT, format!("tensor {name} is truncated")))?;
    }
    drop(slots);
    codec::expect_eof(&mut r, WHAT)?;
    Ok(params)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    codec::write_atomic(path, &to_bytes(params)?)
}

pub fn load(path: &Path) -> Result<ModelParams> {
    from_bytes(&codec::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for kind in ModelKind::ALL {
            let arch = Architecture::standard(kind, 2, 4, kind == ModelKind::GcnLstm, 0.2);
            let params = ModelParams::init(arch, &mut rng).unwrap();
            let back = from_bytes(&to_bytes(&params).unwrap()).unwrap();
            assert_eq!(back.fingerprint(), params.fingerprint());
            assert_eq!(back, params);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let params = ModelParams::init(Architecture::standard(ModelKind::Gcn, 2, 4, false, 0.2), &mut rng).unwrap();
        let bytes = to_bytes(&params).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
