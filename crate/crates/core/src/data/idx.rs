//! The IDX binary tensor format: two zero bytes, a type byte, a rank byte,
//! `rank` big-endian u32 dimensions, then the big-endian payload.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    U8(Vec<u8>),
    I8(Vec<i8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl IdxData {
    pub fn type_code(&self) -> u8 {
        match self {
            IdxData::U8(_) => 0x08,
            IdxData::I8(_) => 0x09,
            IdxData::I16(_) => 0x0B,
            IdxData::I32(_) => 0x0C,
            IdxData::F32(_) => 0x0D,
            IdxData::F64(_) => 0x0E,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IdxData::U8(v) => v.len(),
            IdxData::I8(v) => v.len(),
            IdxData::I16(v) => v.len(),
            IdxData::I32(v) => v.len(),
            IdxData::F32(v) => v.len(),
            IdxData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            IdxData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            IdxData::I8(v) => v.iter().map(|&x| x as f64).collect(),
            IdxData::I16(v) => v.iter().map(|&x| x as f64).collect(),
            IdxData::I32(v) => v.iter().map(|&x| x as f64).collect(),
            IdxData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            IdxData::F64(v) => v.clone(),
        }
    }
}

fn element_size(code: u8) -> Option<usize> {
    match code {
        0x08 | 0x09 => Some(1),
        0x0B => Some(2),
        0x0C | 0x0D => Some(4),
        0x0E => Some(8),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: IdxData,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: IdxData) -> Result<Self> {
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if dims.is_empty() || dims.len() > 255 || count != Some(data.len()) {
            return Err(Error::Data(format!(
                "dims {dims:?} do not match {} elements",
                data.len()
            )));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Data("IDX dimensions must fit in u32".into()));
        }
        Ok(IdxTensor { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0, 0, self.data.type_code(), self.dims.len() as u8];
        for &d in &self.dims {
            out.extend((d as u32).to_be_bytes());
        }
        match &self.data {
            IdxData::U8(v) => out.extend(v),
            IdxData::I8(v) => out.extend(v.iter().map(|&x| x as u8)),
            IdxData::I16(v) => v.iter().for_each(|x| out.extend(x.to_be_bytes())),
            IdxData::I32(v) => v.iter().for_each(|x| out.extend(x.to_be_bytes())),
            IdxData::F32(v) => v.iter().for_each(|x| out.extend(x.to_be_bytes())),
            IdxData::F64(v) => v.iter().for_each(|x| out.extend(x.to_be_bytes())),
        }
        out
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        let at = if bytes[0] != 0 { 0 } else { 1 };
        return Err(format_err(
            at,
            format!("bad magic {:02x} {:02x}", bytes[0], bytes[1]),
        ));
    }
    let code = bytes[2];
    let size = element_size(code)
        .ok_or_else(|| format_err(2, format!("unsupported data type 0x{code:02x}")))?;
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(format_err(3, "rank 0"));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(format_err(
            bytes.len(),
            format!("truncated header: rank {rank}"),
        ));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|c| c.checked_mul(size))
        .ok_or_else(|| format_err(4, "declared size overflows"))?;
    let payload = &bytes[header..];
    if payload.len() < count {
        return Err(format_err(
            bytes.len(),
            format!(
                "truncated payload: expected {count} bytes, found {}",
                payload.len()
            ),
        ));
    }
    if payload.len() > count {
        return Err(format_err(
            header + count,
            format!("{} trailing bytes", payload.len() - count),
        ));
    }
    let data = match code {
        0x08 => IdxData::U8(payload.to_vec()),
        0x09 => IdxData::I8(payload.iter().map(|&b| b as i8).collect()),
        0x0B => IdxData::I16(
            payload
                .chunks_exact(2)
                .map(|c| i16::from_be_bytes([c[0], c[1]]))
                .collect(),
        ),
        0x0C => IdxData::I32(
            payload
                .chunks_exact(4)
                .map(|c| i32::from_be_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        0x0D => IdxData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_be_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        _ => IdxData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(IdxTensor { dims, data })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes)
}

pub fn write_idx(path: impl AsRef<Path>, tensor: &IdxTensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_built_images() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        bytes.extend(0u8..8);
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.dims, vec![2, 2, 2]);
        assert_eq!(t.data, IdxData::U8((0..8).collect()));
    }

    #[test]
    fn truncated_payload() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 1, 2];
        match parse_idx(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_dtype() {
        assert!(matches!(
            parse_idx(&[1, 0, 8, 1]),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(
            parse_idx(&[0, 0, 7, 1]),
            Err(Error::Format { offset: 2, .. })
        ));
        assert!(matches!(
            parse_idx(&[0, 0, 8, 2, 0, 0]),
            Err(Error::Format { offset: 6, .. })
        ));
        assert!(matches!(
            parse_idx(&[0, 0, 8, 1, 0, 0, 0, 1, 5, 6]),
            Err(Error::Format { offset: 9, .. })
        ));
    }

    fn tensor_strategy() -> impl Strategy<Value = IdxTensor> {
        (prop::collection::vec(1usize..4, 1..4), 0u8..6).prop_flat_map(|(dims, kind)| {
            let n: usize = dims.iter().product();
            let data = match kind {
                0 => prop::collection::vec(any::<u8>(), n)
                    .prop_map(IdxData::U8)
                    .boxed(),
                1 => prop::collection::vec(any::<i8>(), n)
                    .prop_map(IdxData::I8)
                    .boxed(),
                2 => prop::collection::vec(any::<i16>(), n)
                    .prop_map(IdxData::I16)
                    .boxed(),
                3 => prop::collection::vec(any::<i32>(), n)
                    .prop_map(IdxData::I32)
                    .boxed(),
                4 => prop::collection::vec(-1e6f32..1e6, n)
                    .prop_map(IdxData::F32)
                    .boxed(),
                _ => prop::collection::vec(-1e12f64..1e12, n)
                    .prop_map(IdxData::F64)
                    .boxed(),
            };
            (Just(dims), data).prop_map(|(dims, data)| IdxTensor::new(dims, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_byte_exact(t in tensor_strategy()) {
            let bytes = t.to_bytes();
            let back = parse_idx(&bytes).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
