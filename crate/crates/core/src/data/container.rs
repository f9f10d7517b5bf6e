//! Dataset container.
//!
//! Layout (little-endian, no padding):
//!
//! ```text
//! bytes 0-3  "EEGC"
//! u16        version = 1
//! u32        sample count
//! u16        C
//! u16        T
//! u8         flags (bit 0: has pupil)
//! u64        seed
//! per sample: C·T f32 eeg (channel-major) | 2 f32 gaze | [1 f32 pupil]
//! ```

use std::io::{Read, Write};

use crate::codec::{Reader, Writer};
use crate::data::{Dataset, DatasetHeader, Sample};
use crate::error::{ContainerError, Error, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: [u8; 4] = *b"EEGC";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 2 + 2 + 1 + 8;

pub fn encode(ds: &Dataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let h = &ds.header;
    let narrow = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit the container's u16 field")))
    };
    let mut w = Writer::default();
    w.bytes(&DATASET_MAGIC);
    w.u16(DATASET_VERSION);
    w.u32(u32::try_from(ds.len()).map_err(|_| Error::InvalidArgument("too many samples".into()))?);
    w.u16(narrow(h.channels, "channel count")?);
    w.u16(narrow(h.timesteps, "timestep count")?);
    w.u8(h.has_pupil as u8);
    w.u64(h.seed);
    for s in &ds.samples {
        for &v in s.eeg.data() {
            w.f32(v);
        }
        w.f32(s.gaze[0]);
        w.f32(s.gaze[1]);
        if let Some(p) = s.pupil {
            w.f32(p);
        }
    }
    Ok(w.buf)
}

pub fn decode(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(ContainerError::UnsupportedVersion(version).into());
    }
    let declared = r.u32()? as usize;
    let channels = r.u16()? as usize;
    let timesteps = r.u16()? as usize;
    let flags = r.u8()?;
    if flags & !1 != 0 {
        return Err(ContainerError::Malformed(format!("unknown flag bits {flags:#04x}")).into());
    }
    let seed = r.u64()?;
    if channels == 0 || timesteps == 0 {
        return Err(ContainerError::Malformed(format!("C={channels}, T={timesteps} must be positive")).into());
    }
    let has_pupil = flags & 1 == 1;
    let record = 4 * (channels * timesteps + 2 + has_pupil as usize);
    let body = r.remaining();
    if body.is_multiple_of(record) && body / record != declared {
        return Err(ContainerError::CountMismatch { declared, found: body / record }.into());
    }
    if body < declared * record {
        return Err(ContainerError::Truncated {
            offset: HEADER_LEN + body,
            needed: declared * record - body,
        }
        .into());
    }
    if body > declared * record {
        return Err(ContainerError::Malformed(format!("{} trailing bytes after {declared} records", body - declared * record)).into());
    }
    let mut samples = Vec::with_capacity(declared);
    for _ in 0..declared {
        let eeg = (0..channels * timesteps).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
        let gaze = [r.f32()?, r.f32()?];
        let pupil = if has_pupil { Some(r.f32()?) } else { None };
        samples.push(Sample {
            eeg: Tensor::from_vec(&[1, channels, timesteps], eeg)?,
            gaze,
            pupil,
        });
    }
    Ok(Dataset {
        header: DatasetHeader { channels, timesteps, has_pupil, seed },
        samples,
    })
}

pub fn write_container(ds: &Dataset, mut out: impl Write) -> Result<()> {
    out.write_all(&encode(ds)?).map_err(|e| Error::io("<stream>", e))
}

pub fn read_container(mut input: impl Read) -> Result<Dataset> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf).map_err(|e| Error::io("<stream>", e))?;
    decode(&buf)
}

impl Dataset {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode(bytes)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, encode(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
