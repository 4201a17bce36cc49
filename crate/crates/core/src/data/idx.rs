//! The IDX container used by the MNIST distribution.
//!
//! Header: two zero bytes, a type code, the number of dimensions, then one
//! big-endian `u32` per dimension. Only unsigned bytes (type `0x08`) are
//! supported.

use crate::error::{Error, Result};

pub const TYPE_U8: u8 = 0x08;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub type_code: u8,
    pub dims: Vec<u32>,
    pub payload: Vec<u8>,
}

impl IdxTensor {
    pub fn magic(&self) -> u32 {
        (u32::from(self.type_code) << 8) | self.dims.len() as u32
    }

    pub fn count(&self) -> usize {
        self.dims.first().copied().unwrap_or(0) as usize
    }

    /// Bytes per leading-axis item.
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).map(|&d| d as usize).product()
    }

    pub fn item(&self, i: usize) -> &[u8] {
        let w = self.item_len();
        &self.payload[i * w..(i + 1) * w]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.payload.len());
        out.extend_from_slice(&self.magic().to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }
}

fn parse_err(offset: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        detail: detail.into(),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(parse_err(bytes.len(), "truncated magic number"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(parse_err(
            0,
            format!(
                "bad magic {:02x}{:02x}: upper bytes must be zero",
                bytes[0], bytes[1]
            ),
        ));
    }
    let type_code = bytes[2];
    if type_code != TYPE_U8 {
        return Err(parse_err(
            2,
            format!("unsupported type code 0x{type_code:02x}"),
        ));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(parse_err(3, "zero dimensions"));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(parse_err(
            bytes.len(),
            format!("truncated header: {ndims} dims need {header} bytes"),
        ));
    }
    let dims: Vec<u32> = (0..ndims)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes(bytes[o..o + 4].try_into().expect("4 bytes"))
        })
        .collect();
    let n: usize = dims.iter().map(|&d| d as usize).product();
    let available = bytes.len() - header;
    if available < n {
        return Err(parse_err(
            bytes.len(),
            format!("truncated payload: need {n} bytes, found {available}"),
        ));
    }
    if available > n {
        return Err(parse_err(
            header + n,
            format!("{} trailing bytes after payload", available - n),
        ));
    }
    Ok(IdxTensor {
        type_code,
        dims,
        payload: bytes[header..].to_vec(),
    })
}

/// Read an IDX file, transparently gunzipping `.gz` paths.
pub fn read_idx_file(path: &std::path::Path) -> Result<IdxTensor> {
    use std::io::Read;
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bytes = if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out
    } else {
        raw
    };
    parse_idx(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_label_file() {
        let t = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 2, 7, 2]).unwrap();
        assert_eq!(t.dims, vec![2]);
        assert_eq!(t.payload, vec![7, 2]);
    }

    #[test]
    fn minimal_image_file() {
        let bytes = [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0xFF];
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.dims, vec![1, 1, 1]);
        assert_eq!(t.item(0), &[255]);
        assert_eq!(t.to_bytes(), bytes);
    }

    #[test]
    fn errors_name_offsets() {
        let e = parse_idx(&[1, 0, 8, 1]).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 0, .. }));
        let e = parse_idx(&[0, 0, 0x0D, 1, 0, 0, 0, 1, 0]).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 2, .. }));
        let e = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 1]).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 9, .. }), "{e}");
    }
}
