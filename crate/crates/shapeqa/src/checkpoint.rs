//! VAE checkpoints: a versioned text header holding the configuration,
//! followed by every parameter tensor in [`VaeModel::params_mut`] order.
//!
//! ```text
//! SHAPEQA-VAE-CHECKPOINT 1
//! key = value            (one line per VaeConfig field)
//! ---
//! u32 tensor count, then per tensor:
//!   u16 name length, name (UTF-8), u64 element count, f32 LE values
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use shapeqa_core::vae::{VaeConfig, VaeModel};

use crate::config::{num, parse_pairs};
use crate::{Error, Result};

const TAG: &str = "SHAPEQA-VAE-CHECKPOINT 1";
const SEPARATOR: &str = "---\n";

/// Canonical `key = value` text of a VAE configuration.
pub fn vae_config_text(c: &VaeConfig) -> String {
    let schedule = c.channel_schedule.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    format!(
        "input_cube = {}\nlatent_dim = {}\nchannel_schedule = {schedule}\nnum_classes = {}\nlambda_kl = {}\n\
         learning_rate = {}\nmomentum = {}\niterations = {}\nbatch_size = {}\nmc_samples = {}\nseed = {}\n",
        c.input_cube,
        c.latent_dim,
        c.num_classes,
        c.lambda_kl,
        c.learning_rate,
        c.momentum,
        c.iterations,
        c.batch_size,
        c.mc_samples,
        c.seed
    )
}

fn parse_vae_config(text: &str) -> Result<VaeConfig> {
    let mut c = VaeConfig::default();
    let mut seen = 0;
    for (k, v) in parse_pairs(text)? {
        match k.as_str() {
            "input_cube" => c.input_cube = num(&k, &v)?,
            "latent_dim" => c.latent_dim = num(&k, &v)?,
            "channel_schedule" => {
                c.channel_schedule = v.split(',').map(|x| num(&k, x)).collect::<Result<_>>()?;
            }
            "num_classes" => c.num_classes = num(&k, &v)?,
            "lambda_kl" => c.lambda_kl = num(&k, &v)?,
            "learning_rate" => c.learning_rate = num(&k, &v)?,
            "momentum" => c.momentum = num(&k, &v)?,
            "iterations" => c.iterations = num(&k, &v)?,
            "batch_size" => c.batch_size = num(&k, &v)?,
            "mc_samples" => c.mc_samples = num(&k, &v)?,
            "seed" => c.seed = num(&k, &v)?,
            _ => return Err(Error::Config(format!("unknown checkpoint key {k}"))),
        }
        seen += 1;
    }
    if seen != 11 {
        return Err(Error::Config("checkpoint header is missing configuration keys".into()));
    }
    Ok(c)
}

pub fn encode(model: &VaeModel<f32>) -> Vec<u8> {
    let mut out = format!("{TAG}\n{}{SEPARATOR}", vae_config_text(model.config())).into_bytes();
    let tensors = model.param_values();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, values) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a checkpoint. With `expected`, any configuration difference is a
/// [`Error::ConfigMismatch`] naming the differing keys.
pub fn decode(bytes: &[u8], origin: &Path, expected: Option<&VaeConfig>) -> Result<VaeModel<f32>> {
    let bad = |m: String| Error::format(origin, m);
    let header_end = bytes
        .windows(SEPARATOR.len() + 1)
        .position(|w| w == format!("\n{SEPARATOR}").as_bytes())
        .ok_or_else(|| bad("missing header separator".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| bad("header is not UTF-8".into()))?;
    let (tag, config_text) = header.split_once('\n').unwrap_or((header, ""));
    if tag != TAG {
        return Err(bad(format!("unsupported checkpoint tag {tag:?}")));
    }
    let config = parse_vae_config(config_text)?;
    if let Some(want) = expected {
        if want != &config {
            let ours = vae_config_text(want);
            let found = vae_config_text(&config);
            let diff: Vec<&str> = found
                .lines()
                .zip(ours.lines())
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.split(" = ").next().unwrap_or(a))
                .collect();
            return Err(Error::ConfigMismatch(diff.join(", ")));
        }
    }
    let mut model = VaeModel::<f32>::new(config)?;
    let mut r = Reader { bytes: &bytes[header_end + 1 + SEPARATOR.len()..], origin };
    let count = u32::from_le_bytes(r.take::<4>()?) as usize;
    let mut params = model.params_mut();
    if count != params.len() {
        return Err(bad(format!("checkpoint has {count} tensors, model expects {}", params.len())));
    }
    for (name, p) in params.iter_mut() {
        let len = u16::from_le_bytes(r.take::<2>()?) as usize;
        let found = r.slice(len)?;
        if found != name.as_bytes() {
            return Err(bad(format!("expected tensor {name}, found {}", String::from_utf8_lossy(found))));
        }
        let n = u64::from_le_bytes(r.take::<8>()?) as usize;
        if n != p.value.len() {
            return Err(bad(format!("tensor {name} has {n} values, expected {}", p.value.len())));
        }
        for v in p.value.iter_mut() {
            *v = f32::from_le_bytes(r.take::<4>()?);
        }
    }
    if !r.bytes.is_empty() {
        return Err(bad("trailing bytes after the last tensor".into()));
    }
    Ok(model)
}

struct Reader<'a> {
    bytes: &'a [u8],
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn slice(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::format(self.origin, "truncated checkpoint"));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.slice(N)?.try_into().expect("slice has length N"))
    }
}

pub fn save(path: &Path, model: &VaeModel<f32>) -> Result<String> {
    let bytes = encode(model);
    fs::write(path, &bytes).map_err(Error::io(path))?;
    Ok(sha256_hex(&bytes))
}

/// Loads a checkpoint and returns it with the SHA-256 of the file.
pub fn load(path: &Path, expected: Option<&VaeConfig>) -> Result<(VaeModel<f32>, String)> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    Ok((decode(&bytes, path, expected)?, sha256_hex(&bytes)))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
