//! Binary model file format.
//!
//! Little-endian throughout. Layout:
//!
//! ```text
//! magic          4 bytes  "F3GS"
//! version        u32      currently 1
//! scheme         u8       0 = CP, 1 = VM
//! vm_mode        u8       0 = per-term product, 1 = shared-grid sum
//! reserved       u16      0
//! feature_dim    u32
//! block_count    u32
//! layer_count    u32      then per layer: in_dim u32, out_dim u32
//! mask_threshold f32
//! resolutions    u32 per block
//! blocks         per block, its factor arrays in declared order, f32 each
//! decoder        per layer, weights then biases, f32 each
//! masks          per unit, ceil(N^3 / 8) packed bytes
//! ```
//!
//! Masks are always written in frozen (packed) form; loading therefore
//! yields a model with frozen masks, which training thaws if it wants to
//! keep optimizing them. Saving is deterministic: the same model always
//! produces the same bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::decoder::{Decoder, DecoderLayer};
use crate::error::CoreError;
use crate::factor::{CpBlock, VmBlock, VmMode};
use crate::mask::{MaskSet, MaskState, PackedMask};
use crate::model::{Blocks, FactorModel, Scheme};

pub const FORMAT_MAGIC: [u8; 4] = *b"F3GS";
pub const FORMAT_VERSION: u32 = 1;

/// Serializes a model. Masks are packed to bits; everything else is
/// written verbatim.
pub fn save_model<W: Write>(model: &FactorModel, mut w: W) -> Result<(), CoreError> {
    model.validate()?;
    w.write_all(&FORMAT_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u8(model.scheme.code())?;
    w.write_u8(model.vm_mode.code())?;
    w.write_u16::<LittleEndian>(0)?;
    w.write_u32::<LittleEndian>(model.feature_dim as u32)?;
    w.write_u32::<LittleEndian>(model.blocks.len() as u32)?;
    w.write_u32::<LittleEndian>(model.decoder.layers.len() as u32)?;
    for layer in &model.decoder.layers {
        w.write_u32::<LittleEndian>(layer.in_dim as u32)?;
        w.write_u32::<LittleEndian>(layer.out_dim as u32)?;
    }
    w.write_f32::<LittleEndian>(model.masks.threshold)?;
    for n in model.blocks.resolutions() {
        w.write_u32::<LittleEndian>(n as u32)?;
    }
    match &model.blocks {
        Blocks::Cp(blocks) => {
            for block in blocks {
                for arr in block.arrays() {
                    write_f32_slice(&mut w, arr)?;
                }
            }
        }
        Blocks::Vm(blocks) => {
            for block in blocks {
                for arr in block.arrays() {
                    write_f32_slice(&mut w, arr)?;
                }
            }
        }
    }
    for arr in model.decoder.arrays() {
        write_f32_slice(&mut w, arr)?;
    }
    let packed = packed_units(&model.masks)?;
    for unit in &packed {
        w.write_all(&unit.bits)?;
    }
    Ok(())
}

/// Parses a model saved by [`save_model`]. Rejects unknown magic or
/// version, truncated data and trailing bytes.
pub fn load_model<R: Read>(mut r: R) -> Result<FactorModel, CoreError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != FORMAT_MAGIC {
        return Err(CoreError::Format(format!(
            "bad magic {magic:02x?}, expected {FORMAT_MAGIC:02x?}"
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(CoreError::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let scheme = Scheme::from_code(r.read_u8()?)?;
    let vm_mode = VmMode::from_code(r.read_u8()?)?;
    let _reserved = r.read_u16::<LittleEndian>()?;
    let feature_dim = r.read_u32::<LittleEndian>()? as usize;
    let block_count = r.read_u32::<LittleEndian>()? as usize;
    let layer_count = r.read_u32::<LittleEndian>()? as usize;
    if block_count == 0 {
        return Err(CoreError::Format("model file declares zero blocks".into()));
    }
    if layer_count == 0 || layer_count > 16 {
        return Err(CoreError::Format(format!(
            "implausible decoder layer count {layer_count}"
        )));
    }
    let mut layer_dims = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let in_dim = r.read_u32::<LittleEndian>()? as usize;
        let out_dim = r.read_u32::<LittleEndian>()? as usize;
        layer_dims.push((in_dim, out_dim));
    }
    let mask_threshold = r.read_f32::<LittleEndian>()?;
    let mut resolutions = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        let n = r.read_u32::<LittleEndian>()? as usize;
        if n == 0 {
            return Err(CoreError::Format("model file declares a zero-resolution block".into()));
        }
        resolutions.push(n);
    }
    let blocks = match scheme {
        Scheme::Cp => {
            let mut blocks = Vec::with_capacity(block_count);
            for &n in &resolutions {
                let mut block = CpBlock::new(n, feature_dim)
                    .map_err(|e| CoreError::Format(e.to_string()))?;
                for arr in block.arrays_mut() {
                    read_f32_slice(&mut r, arr)?;
                }
                blocks.push(block);
            }
            Blocks::Cp(blocks)
        }
        Scheme::Vm => {
            let mut blocks = Vec::with_capacity(block_count);
            for &n in &resolutions {
                let mut block = VmBlock::new(n, feature_dim)
                    .map_err(|e| CoreError::Format(e.to_string()))?;
                for arr in block.arrays_mut() {
                    read_f32_slice(&mut r, arr)?;
                }
                blocks.push(block);
            }
            Blocks::Vm(blocks)
        }
    };
    let mut layers = Vec::with_capacity(layer_count);
    for &(in_dim, out_dim) in &layer_dims {
        let mut weight = vec![0.0f32; in_dim * out_dim];
        read_f32_slice(&mut r, &mut weight)?;
        let mut bias = vec![0.0f32; out_dim];
        read_f32_slice(&mut r, &mut bias)?;
        layers.push(DecoderLayer {
            in_dim,
            out_dim,
            weight,
            bias,
        });
    }
    let decoder = Decoder { layers };
    let mut model = FactorModel {
        scheme,
        vm_mode,
        feature_dim,
        blocks,
        decoder,
        masks: MaskSet {
            threshold: mask_threshold,
            state: MaskState::Frozen(Vec::new()),
        },
    };
    let mut packed = Vec::new();
    for n in model.unit_resolutions() {
        let mut bits = vec![0u8; (n * n * n).div_ceil(8)];
        r.read_exact(&mut bits)?;
        packed.push(PackedMask {
            resolution: n,
            bits,
        });
    }
    model.masks.state = MaskState::Frozen(packed);
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => {}
        _ => return Err(CoreError::Format("trailing data after model".into())),
    }
    model.validate().map_err(|e| CoreError::Format(e.to_string()))?;
    Ok(model)
}

/// Byte length [`save_model`] would produce, without buffering the data.
pub fn serialized_len(model: &FactorModel) -> Result<u64, CoreError> {
    let mut counter = CountingWriter::default();
    save_model(model, &mut counter)?;
    Ok(counter.bytes)
}

pub fn model_to_bytes(model: &FactorModel) -> Result<Vec<u8>, CoreError> {
    let mut buf = Vec::new();
    save_model(model, &mut buf)?;
    Ok(buf)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<FactorModel, CoreError> {
    load_model(bytes)
}

pub fn save_model_file<P: AsRef<Path>>(model: &FactorModel, path: P) -> Result<(), CoreError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    save_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model_file<P: AsRef<Path>>(path: P) -> Result<FactorModel, CoreError> {
    let file = File::open(path)?;
    load_model(BufReader::new(file))
}

fn write_f32_slice<W: Write>(w: &mut W, values: &[f32]) -> Result<(), CoreError> {
    for &v in values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_f32_slice<R: Read>(r: &mut R, out: &mut [f32]) -> Result<(), CoreError> {
    for v in out.iter_mut() {
        *v = r.read_f32::<LittleEndian>()?;
    }
    Ok(())
}

/// Packed mask planes for serialization, regardless of training state.
fn packed_units(masks: &MaskSet) -> Result<Vec<PackedMask>, CoreError> {
    match &masks.state {
        MaskState::Frozen(packed) => Ok(packed.clone()),
        MaskState::Training(_) => {
            let mut clone = masks.clone();
            clone.freeze();
            match clone.state {
                MaskState::Frozen(packed) => Ok(packed),
                MaskState::Training(_) => unreachable!("freeze always packs"),
            }
        }
    }
}

#[derive(Default)]
struct CountingWriter {
    bytes: u64,
}

impl Write for CountingWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.bytes += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
