//! Binary checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "SAPG" version count
//! count × { name_len name(utf-8) rank dims[rank] values[f32 LE; product(dims)] }
//! ```
//!
//! Adam moments are stored next to their parameter as `<name>.adam.m` and
//! `<name>.adam.v`, the step counter as `<prefix>.adam.t`. Model
//! configurations travel as `<prefix>.config`: the JSON text, one byte per
//! value, so they round-trip exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use sapgan_core::nn::ParamSet;
use sapgan_core::paint::{PaintConfig, PaintGan, UNetGenerator};
use sapgan_core::sketch::{SketchConfig, SketchGan, SketchGenerator};
use sapgan_core::tensor::AdamState;
use sapgan_core::{Stream, Tensor};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SAPG";
pub const VERSION: u32 = 1;

/// Ordered named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    entries: BTreeMap<String, Tensor<f32>>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.entries.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let to_u32 = |n: usize| u32::try_from(n).map_err(|_| std::io::Error::other("length exceeds u32"));
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&to_u32(self.entries.len())?.to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&to_u32(name.len())?.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&to_u32(t.shape().len())?.to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&to_u32(d)?.to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> std::result::Result<Self, String> {
        let word = |r: &mut dyn Read| -> std::result::Result<u32, String> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|e| format!("truncated checkpoint: {e}"))?;
            Ok(u32::from_le_bytes(b))
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| "file too short for a checkpoint header".to_string())?;
        if &magic != MAGIC {
            return Err(format!("bad magic {magic:?}, not a checkpoint"));
        }
        let version = word(&mut r)?;
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let count = word(&mut r)?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = word(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(|e| format!("truncated entry name: {e}"))?;
            let name = String::from_utf8(name).map_err(|_| "entry name is not UTF-8".to_string())?;
            let rank = word(&mut r)? as usize;
            let shape =
                (0..rank).map(|_| word(&mut r).map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("entry size overflows")?;
            let mut bytes = vec![0u8; numel * 4];
            r.read_exact(&mut bytes).map_err(|e| format!("truncated values of {name}: {e}"))?;
            let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(&shape, data).map_err(|e| format!("entry {name}: {e}"))?;
            if entries.insert(name.clone(), t).is_some() {
                return Err(format!("duplicate entry {name}"));
            }
        }
        Ok(Checkpoint { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file)).map_err(|m| Error::format(path, m))
    }

    fn put_params(&mut self, params: &ParamSet) {
        for (name, t) in params.named() {
            self.insert(name, t.clone());
        }
    }

    fn put_adam(&mut self, prefix: &str, params: &ParamSet, opt: &AdamState) -> Result<()> {
        for ((name, m), v) in params.trainable_names().zip(&opt.m).zip(&opt.v) {
            self.insert(format!("{name}.adam.m"), m.clone());
            self.insert(format!("{name}.adam.v"), v.clone());
        }
        // u64 step counts are split across two f32 words to stay exact.
        let t = opt.t;
        self.insert(format!("{prefix}.adam.t"), Tensor::new(&[2], vec![(t >> 24) as f32, (t & 0xFF_FFFF) as f32])?);
        Ok(())
    }

    fn put_config<C: Serialize>(&mut self, prefix: &str, config: &C) -> Result<()> {
        let json = serde_json::to_vec(config).expect("config serializes");
        let n = json.len();
        self.insert(format!("{prefix}.config"), Tensor::new(&[n], json.into_iter().map(f32::from).collect())?);
        Ok(())
    }

    fn config<C: DeserializeOwned>(&self, prefix: &str) -> std::result::Result<C, String> {
        let name = format!("{prefix}.config");
        let t = self.get(&name).ok_or_else(|| format!("missing entry {name}"))?;
        let bytes: Vec<u8> = t.data().iter().map(|&v| v as u8).collect();
        serde_json::from_slice(&bytes).map_err(|e| format!("{name}: {e}"))
    }

    fn load_params(&self, params: &mut ParamSet) -> std::result::Result<(), String> {
        params.load(|name| self.get(name)).map_err(|e| e.to_string())
    }

    fn load_adam(&self, prefix: &str, params: &ParamSet, opt: &mut AdamState) -> std::result::Result<(), String> {
        for (i, name) in params.trainable_names().enumerate() {
            for (suffix, slot) in [("m", &mut opt.m[i]), ("v", &mut opt.v[i])] {
                let key = format!("{name}.adam.{suffix}");
                let t = self.get(&key).ok_or_else(|| format!("missing entry {key}"))?;
                if t.shape() != slot.shape() {
                    return Err(format!("{key}: shape {:?}, expected {:?}", t.shape(), slot.shape()));
                }
                *slot = t.clone();
            }
        }
        let key = format!("{prefix}.adam.t");
        let t = self.get(&key).ok_or_else(|| format!("missing entry {key}"))?.data();
        if t.len() != 2 {
            return Err(format!("{key}: expected 2 values, found {}", t.len()));
        }
        opt.t = ((t[0] as u64) << 24) | t[1] as u64;
        Ok(())
    }
}

const SKETCH: &str = "sketch";
const PAINT: &str = "paint";

/// Weights, optimizer state and configuration of a sketch GAN.
pub fn sketch_checkpoint(gan: &SketchGan) -> Result<Checkpoint> {
    let mut c = Checkpoint::new();
    c.put_config(SKETCH, gan.config())?;
    c.put_params(gan.gen.params());
    c.put_params(gan.disc.params());
    c.put_adam(SketchGan::GEN_PREFIX, gan.gen.params(), &gan.gen_opt)?;
    c.put_adam(SketchGan::DISC_PREFIX, gan.disc.params(), &gan.disc_opt)?;
    Ok(c)
}

pub fn paint_checkpoint(gan: &PaintGan) -> Result<Checkpoint> {
    let mut c = Checkpoint::new();
    c.put_config(PAINT, gan.config())?;
    c.put_params(gan.gen.params());
    c.put_params(gan.disc.params());
    c.put_adam(PaintGan::GEN_PREFIX, gan.gen.params(), &gan.gen_opt)?;
    c.put_adam(PaintGan::DISC_PREFIX, gan.disc.params(), &gan.disc_opt)?;
    Ok(c)
}

/// Restores a full sketch GAN for resumed training; `rng` seeds only the
/// parts a checkpoint does not carry.
pub fn restore_sketch(c: &Checkpoint, path: &Path, rng: &mut Stream) -> Result<SketchGan> {
    let mut inner = || -> std::result::Result<SketchGan, String> {
        let cfg: SketchConfig = c.config(SKETCH)?;
        let mut gan = SketchGan::new(cfg, rng).map_err(|e| e.to_string())?;
        c.load_params(gan.gen.params_mut())?;
        c.load_params(gan.disc.params_mut())?;
        c.load_adam(SketchGan::GEN_PREFIX, gan.gen.params(), &mut gan.gen_opt)?;
        c.load_adam(SketchGan::DISC_PREFIX, gan.disc.params(), &mut gan.disc_opt)?;
        Ok(gan)
    };
    inner().map_err(|m| Error::format(path, m))
}

pub fn restore_paint(c: &Checkpoint, path: &Path, rng: &mut Stream) -> Result<PaintGan> {
    let mut inner = || -> std::result::Result<PaintGan, String> {
        let cfg: PaintConfig = c.config(PAINT)?;
        let mut gan = PaintGan::new(cfg, rng).map_err(|e| e.to_string())?;
        c.load_params(gan.gen.params_mut())?;
        c.load_params(gan.disc.params_mut())?;
        c.load_adam(PaintGan::GEN_PREFIX, gan.gen.params(), &mut gan.gen_opt)?;
        c.load_adam(PaintGan::DISC_PREFIX, gan.disc.params(), &mut gan.disc_opt)?;
        Ok(gan)
    };
    inner().map_err(|m| Error::format(path, m))
}

/// The sketch generator alone, for inference.
pub fn load_sketch_generator(path: &Path) -> Result<SketchGenerator> {
    let c = Checkpoint::load(path)?;
    let inner = || -> std::result::Result<SketchGenerator, String> {
        let cfg: SketchConfig = c.config(SKETCH)?;
        let mut g = SketchGenerator::new(cfg, SketchGan::GEN_PREFIX, &mut Stream::new(0)).map_err(|e| e.to_string())?;
        c.load_params(g.params_mut())?;
        Ok(g)
    };
    inner().map_err(|m| Error::format(path, m))
}

pub fn load_paint_generator(path: &Path) -> Result<UNetGenerator> {
    let c = Checkpoint::load(path)?;
    let inner = || -> std::result::Result<UNetGenerator, String> {
        let cfg: PaintConfig = c.config(PAINT)?;
        let mut g = UNetGenerator::new(cfg, PaintGan::GEN_PREFIX, &mut Stream::new(0)).map_err(|e| e.to_string())?;
        c.load_params(g.params_mut())?;
        Ok(g)
    };
    inner().map_err(|m| Error::format(path, m))
}
