//! Parameter checkpoints.
//!
//! A checkpoint is two files: a text manifest
//!
//! ```text
//! kaqa-checkpoint 1
//! config_hash <hex>
//! params <n>
//! <name> <rows> <cols>
//! ...
//! ```
//!
//! and a payload holding every parameter as little-endian `f32` values,
//! row-major, in manifest order.

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use crate::error::{Error, Result};

const MAGIC: &str = "kaqa-checkpoint 1";

pub fn save(store: &ParamStore, config_hash: &str, manifest: &Path, payload: &Path) -> Result<()> {
    let mut text = format!(
        "{MAGIC}\nconfig_hash {config_hash}\nparams {}\n",
        store.len()
    );
    let mut bytes = Vec::with_capacity(store.n_values() * 4);
    for (_, p) in store.iter() {
        text.push_str(&format!(
            "{} {} {}\n",
            p.name,
            p.value.rows(),
            p.value.cols()
        ));
        for &v in p.value.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(manifest, text).map_err(|e| Error::io(manifest, e))?;
    fs::write(payload, bytes).map_err(|e| Error::io(payload, e))?;
    Ok(())
}

/// Reads the config hash recorded in a manifest.
pub fn read_config_hash(manifest: &Path) -> Result<String> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::Format(format!(
            "{} is not a checkpoint manifest",
            manifest.display()
        )));
    }
    lines
        .next()
        .and_then(|l| l.strip_prefix("config_hash "))
        .map(str::to_string)
        .ok_or_else(|| Error::Format("manifest lacks config_hash".into()))
}

/// Loads values into `store`, whose parameter names and shapes must match
/// the manifest exactly, and whose config hash must equal `expected_hash`.
pub fn load(
    store: &mut ParamStore,
    expected_hash: &str,
    manifest: &Path,
    payload: &Path,
) -> Result<()> {
    let hash = read_config_hash(manifest)?;
    if hash != expected_hash {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint was written for config {hash}, current config is {expected_hash}"
        )));
    }
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let bytes = fs::read(payload).map_err(|e| Error::io(payload, e))?;
    let mut lines = text.lines().skip(2);
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("params "))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::Format("manifest lacks parameter count".into()))?;
    if count != store.len() {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint has {count} parameters, model has {}",
            store.len()
        )));
    }
    let mut offset = 0;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format("manifest truncated".into()))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let p = store.get(id);
        let expected = [
            p.name.as_str(),
            &p.value.rows().to_string(),
            &p.value.cols().to_string(),
        ];
        if fields != expected {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint entry `{line}` does not match parameter {} {}x{}",
                p.name,
                p.value.rows(),
                p.value.cols()
            )));
        }
        let n = p.value.len();
        let end = offset + n * 4;
        if end > bytes.len() {
            return Err(Error::Format("checkpoint payload truncated".into()));
        }
        let value = store.value_mut(id);
        for (k, chunk) in bytes[offset..end].chunks_exact(4).enumerate() {
            value.data_mut()[k] = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
        }
        offset = end;
    }
    if offset != bytes.len() {
        return Err(Error::Format(
            "checkpoint payload has trailing bytes".into(),
        ));
    }
    Ok(())
}
