//! Self-describing binary model file.
//!
//! Layout (all integers u32 little-endian, all floats f64 little-endian):
//!
//! ```text
//! magic "DDIA" | version | input_dim feature_dim num_classes num_domains
//! f_hidden:  count, dims...
//! global_hidden: count, dims...
//! local_hidden:  count, dims...
//! hyper: alpha beta gamma phi (f64) | batch_size | momentum eta0 (f64) | epochs
//! params: count | per param: rows cols values...
//! ```
//!
//! Parameters appear in registration order (feature net, classifier, global
//! discriminator, local heads, centers), which [`DdianModel::from_parts`]
//! expects; a round trip is bit-exact.

use std::fs;
use std::path::Path;

use ddian_core::losses::HyperParams;
use ddian_core::model::{DdianModel, ModelArch};
use ddian_core::nn::ParamBuf;

use crate::CliError;

const MAGIC: &[u8; 4] = b"DDIA";
const VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("dimension fits in u32"));
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn dims(&mut self, dims: &[usize]) {
        self.usize(dims.len());
        for &d in dims {
            self.usize(d);
        }
    }
}

pub fn encode(model: &DdianModel) -> Vec<u8> {
    let arch = model.arch();
    let hp = model.hp();
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.usize(arch.input_dim);
    w.usize(arch.feature_dim);
    w.usize(arch.num_classes);
    w.usize(arch.num_domains);
    w.dims(&arch.f_hidden);
    w.dims(&arch.global_hidden);
    w.dims(&arch.local_hidden);
    w.f64(hp.alpha);
    w.f64(hp.beta);
    w.f64(hp.gamma);
    w.f64(hp.phi);
    w.usize(hp.batch_size);
    w.f64(hp.momentum);
    w.f64(hp.eta0);
    w.usize(hp.epochs);
    w.usize(model.store().len());
    for buf in model.store().buffers() {
        w.usize(buf.rows);
        w.usize(buf.cols);
        for &v in &buf.values {
            w.f64(v);
        }
    }
    w.buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::Runtime(format!(
                "model file truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, CliError> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn dims(&mut self) -> Result<Vec<usize>, CliError> {
        let n = self.usize()?;
        if n > 64 {
            return Err(CliError::Runtime(format!(
                "implausible hidden-layer count {n} in model file"
            )));
        }
        (0..n).map(|_| self.usize()).collect()
    }
}

pub fn decode(bytes: &[u8]) -> Result<DdianModel, CliError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CliError::Runtime("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CliError::Runtime(format!(
            "unsupported model file version {version} (expected {VERSION})"
        )));
    }
    let arch = ModelArch {
        input_dim: r.usize()?,
        feature_dim: r.usize()?,
        num_classes: r.usize()?,
        num_domains: r.usize()?,
        f_hidden: r.dims()?,
        global_hidden: r.dims()?,
        local_hidden: r.dims()?,
    };
    let hp = HyperParams {
        alpha: r.f64()?,
        beta: r.f64()?,
        gamma: r.f64()?,
        phi: r.f64()?,
        batch_size: r.usize()?,
        momentum: r.f64()?,
        eta0: r.f64()?,
        epochs: r.usize()?,
    };
    let count = r.usize()?;
    let mut buffers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.usize()?;
        let cols = r.usize()?;
        if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 1 << 24 {
            return Err(CliError::Runtime(format!(
                "implausible parameter shape {rows}x{cols} in model file"
            )));
        }
        let values = (0..rows * cols)
            .map(|_| r.f64())
            .collect::<Result<Vec<_>, _>>()?;
        buffers.push(ParamBuf { rows, cols, values });
    }
    if r.pos != bytes.len() {
        return Err(CliError::Runtime(format!(
            "{} trailing bytes after model payload",
            bytes.len() - r.pos
        )));
    }
    DdianModel::from_parts(arch, hp, buffers)
        .map_err(|e| CliError::Runtime(format!("inconsistent model file: {e}")))
}

pub fn save(model: &DdianModel, path: &Path) -> Result<(), CliError> {
    fs::write(path, encode(model))
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DdianModel, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddian_core::model::ArchSpec;

    fn sample_model(seed: u64) -> DdianModel {
        let arch = ArchSpec::default().to_arch(2, 3, 3);
        DdianModel::new(arch, HyperParams::default(), seed).unwrap()
    }

    #[test]
    fn encode_decode_encode_is_byte_identical() {
        let model = sample_model(7);
        let bytes = encode(&model);
        let decoded = decode(&bytes).unwrap();
        assert_eq!(encode(&decoded), bytes);
        assert_eq!(decoded.store(), model.store());
    }

    #[test]
    fn predictions_survive_the_round_trip() {
        let model = sample_model(8);
        let decoded = decode(&encode(&model)).unwrap();
        let xs: Vec<f64> = (0..20).map(|i| (i as f64) * 0.37 - 3.0).collect();
        assert_eq!(
            decoded.predict(&xs, 10).unwrap(),
            model.predict(&xs, 10).unwrap()
        );
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = encode(&sample_model(9));
        for cut in [3, 7, 40, bytes.len() - 1] {
            let err = decode(&bytes[..cut]).unwrap_err();
            assert_eq!(err.exit_code(), 1);
        }
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let mut bytes = encode(&sample_model(10));
        bytes[0] = b'X';
        assert!(decode(&bytes).unwrap_err().to_string().contains("magic"));

        let mut bytes = encode(&sample_model(10));
        bytes[4] = 99;
        assert!(decode(&bytes).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode(&sample_model(11));
        bytes.push(0);
        assert!(decode(&bytes).unwrap_err().to_string().contains("trailing"));
    }
}
