//! Weight container: model config, target scaler and named parameter tensors.
//!
//! Layout (little-endian):
//!
//! ```text
//! "EEGW" | u16 version=1 | u8 dtype (0 = f32, 1 = f64)
//! u32 config length | config as JSON (UTF-8)
//! f64 × 4 gaze scaler (mean x, mean y, std x, std y)
//! u32 tensor count
//! per tensor: u16 name length | name | u8 rank | u32 × rank dims | elements
//! ```

use std::collections::HashSet;
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::element::Element;
use crate::error::{ContainerError, Error, Result};
use crate::model::{ModelConfig, MtlModel, TargetScaler};
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"EEGW";
pub const WEIGHTS_VERSION: u16 = 1;

/// A decoded weight container.
#[derive(Debug, Clone)]
pub struct WeightFile {
    pub config: ModelConfig,
    pub scaler: TargetScaler,
    pub tensors: Vec<(String, Tensor<f64>)>,
    pub dtype_f64: bool,
}

fn dtype_code<T: Element>() -> u8 {
    if T::NAME == "f64" {
        1
    } else {
        0
    }
}

pub fn encode<T: Element>(model: &MtlModel<T>) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(&WEIGHTS_MAGIC);
    w.u16(WEIGHTS_VERSION);
    let dtype = dtype_code::<T>();
    w.u8(dtype);
    let cfg = serde_json::to_vec(&model.config).map_err(|e| Error::Config(e.to_string()))?;
    w.u32(cfg.len() as u32);
    w.bytes(&cfg);
    let s = &model.scaler;
    for v in [s.mean[0], s.mean[1], s.std[0], s.std[1]] {
        w.f64(v);
    }
    w.u32(model.store.len() as u32);
    for (_, p) in model.store.iter() {
        w.u16(p.name.len() as u16);
        w.bytes(p.name.as_bytes());
        w.u8(p.value.rank() as u8);
        for &d in p.value.dims() {
            w.u32(d as u32);
        }
        for &v in p.value.data() {
            if dtype == 1 {
                w.f64(v.as_f64());
            } else {
                w.f32(v.as_f64() as f32);
            }
        }
    }
    Ok(w.buf)
}

pub fn decode(bytes: &[u8]) -> Result<WeightFile> {
    let mut r = Reader::new(bytes);
    r.magic(WEIGHTS_MAGIC)?;
    let version = r.u16()?;
    if version != WEIGHTS_VERSION {
        return Err(ContainerError::UnsupportedVersion(version).into());
    }
    let dtype = r.u8()?;
    if dtype > 1 {
        return Err(ContainerError::Malformed(format!("unknown dtype code {dtype}")).into());
    }
    let cfg_len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.bytes(cfg_len)?)
        .map_err(|e| ContainerError::Malformed(format!("config: {e}")))?;
    let scaler = TargetScaler {
        mean: [r.f64()?, r.f64()?],
        std: [r.f64()?, r.f64()?],
    };
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.bytes(len)?.to_vec())
            .map_err(|_| ContainerError::Malformed("tensor name is not UTF-8".into()))?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| if dtype == 1 { r.f64() } else { r.f32().map(f64::from) })
            .collect::<Result<Vec<_>, _>>()?;
        let t = Tensor::from_vec(&dims, data).map_err(|e| ContainerError::Malformed(format!("{name}: {e}")))?;
        tensors.push((name, t));
    }
    if r.remaining() != 0 {
        return Err(ContainerError::Malformed(format!("{} trailing bytes", r.remaining())).into());
    }
    Ok(WeightFile { config, scaler, tensors, dtype_f64: dtype == 1 })
}

/// Copy tensors whose names pass `filter` from `file` into `model`.
///
/// Every selected model parameter must be present with matching dims, and with
/// no filter the container must not hold extra tensors; offenders are listed
/// in the error, first offender first.
pub fn load_into<T: Element>(model: &mut MtlModel<T>, file: &WeightFile, filter: Option<&dyn Fn(&str) -> bool>) -> Result<()> {
    let selected = |name: &str| filter.is_none_or(|f| f(name));
    let mut offenders = Vec::new();
    let available: HashSet<&str> = file.tensors.iter().map(|(n, _)| n.as_str()).collect();
    for (_, p) in model.store.iter() {
        if selected(&p.name) && !available.contains(p.name.as_str()) {
            offenders.push(format!("`{}` missing from container", p.name));
        }
    }
    for (name, t) in &file.tensors {
        if !selected(name) {
            continue;
        }
        match model.store.by_name(name) {
            None => offenders.push(format!("`{name}` not in model")),
            Some(p) if p.value.dims() != t.dims() => {
                offenders.push(format!("`{name}` dims {:?} vs model {:?}", t.dims(), p.value.dims()))
            }
            Some(_) => {}
        }
    }
    if !offenders.is_empty() {
        return Err(Error::ParamMismatch(offenders.join("; ")));
    }
    for (name, t) in &file.tensors {
        if selected(name) {
            let id = model.store.id(name).expect("checked above");
            *model.store.value_mut(id) = t.cast();
        }
    }
    if filter.is_none() {
        model.scaler = file.scaler;
    }
    Ok(())
}

/// Rebuild a model from a container (full load, config taken from the file).
pub fn model_from_file<T: Element>(file: &WeightFile) -> Result<MtlModel<T>> {
    let mut model = MtlModel::new(file.config.clone(), 0)?;
    load_into(&mut model, file, None)?;
    Ok(model)
}

pub fn save<T: Element>(model: &MtlModel<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<WeightFile> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
