//! Versioned text serialization of [`AcousticModel`].
//!
//! ```text
//! uttver-model 1
//! dim 13
//! components 4
//! inventory <hash> <phone count>
//! silence <sym | ->
//! frontend <fingerprint | ->
//! phone <sym>
//! <w> <mean_1 .. mean_D> <var_1 .. var_D>     (one line per component)
//! ...
//! anti
//! <component lines>
//! end
//! ```
//!
//! Floats are written with 17 significant digits, so a load reproduces every
//! parameter (and every score) exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{AcousticModel, Gmm};
use crate::error::{Error, Result};
use crate::lexicon::PhoneInventory;

pub const MODEL_VERSION: u32 = 1;
const MAGIC: &str = "uttver-model";

pub fn save_model(model: &AcousticModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AcousticModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AcousticModel::from_text(&text)
}

fn write_gmm(out: &mut String, gmm: &Gmm) {
    for (k, w) in gmm.weights().enumerate() {
        let _ = write!(out, "{w:.16e}");
        for v in gmm.mean(k).iter().chain(gmm.variance(k)) {
            let _ = write!(out, " {v:.16e}");
        }
        out.push('\n');
    }
}

fn or_dash(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

impl AcousticModel {
    pub fn to_text(&self) -> String {
        let inv = self.inventory();
        let k = self.anti().num_components();
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {MODEL_VERSION}");
        let _ = writeln!(out, "dim {}", self.dim());
        let _ = writeln!(out, "components {k}");
        let _ = writeln!(out, "inventory {} {}", inv.hash(), inv.len());
        let _ = writeln!(
            out,
            "silence {}",
            inv.silence().map_or("-", |s| inv.symbol(s))
        );
        let _ = writeln!(out, "frontend {}", or_dash(self.frontend()));
        for phone in inv.ids() {
            let _ = writeln!(out, "phone {}", inv.symbol(phone));
            write_gmm(&mut out, &self.gmms[phone.0]);
        }
        out.push_str("anti\n");
        write_gmm(&mut out, self.anti());
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::CorruptModel(format!("file ends before {what}")))
        };

        let magic = next("the header")?;
        let version = magic
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::CorruptModel("not an uttver model file".into()))?;
        if version != MODEL_VERSION.to_string() {
            return Err(Error::VersionMismatch {
                found: version.to_string(),
                expected: MODEL_VERSION,
            });
        }
        let dim: usize = header_value(next("dim")?, "dim")?;
        let k: usize = header_value(next("components")?, "components")?;
        let inv_line = next("inventory")?;
        let mut inv_fields = inv_line
            .strip_prefix("inventory ")
            .ok_or_else(|| {
                Error::CorruptModel(format!("expected `inventory`, found `{inv_line}`"))
            })?
            .split_whitespace();
        let (Some(hash), Some(count)) = (inv_fields.next(), inv_fields.next()) else {
            return Err(Error::CorruptModel(
                "inventory line needs hash and count".into(),
            ));
        };
        let count: usize = count
            .parse()
            .map_err(|_| Error::CorruptModel(format!("bad phone count `{count}`")))?;
        let silence: String = header_value(next("silence")?, "silence")?;
        let frontend: String = header_value(next("frontend")?, "frontend")?;
        if dim == 0 || k == 0 {
            return Err(Error::CorruptModel(
                "dim and components must be positive".into(),
            ));
        }

        let mut phones = Vec::new();
        let mut gmms = Vec::new();
        let anti = loop {
            let line = next("the anti-model")?;
            if line == "anti" {
                break read_gmm(&mut next, dim, k, "anti")?;
            }
            let sym = line
                .strip_prefix("phone ")
                .ok_or_else(|| Error::CorruptModel(format!("expected `phone`, found `{line}`")))?
                .trim();
            gmms.push(read_gmm(&mut next, dim, k, sym)?);
            phones.push(sym.to_string());
        };
        if next("`end`")? != "end" {
            return Err(Error::CorruptModel("missing `end` marker".into()));
        }

        if phones.len() != count {
            return Err(Error::InventoryMismatch(format!(
                "header declares {count} phones, file has {}",
                phones.len()
            )));
        }
        let silence = (silence != "-").then_some(silence.as_str());
        let inventory = PhoneInventory::new(phones, silence)
            .map_err(|e| Error::InventoryMismatch(e.to_string()))?;
        if inventory.len() != count || inventory.hash() != hash {
            return Err(Error::InventoryMismatch(format!(
                "phone list hashes to {}, header says {hash}",
                inventory.hash()
            )));
        }
        let frontend = if frontend == "-" {
            String::new()
        } else {
            frontend
        };
        AcousticModel::new(inventory, gmms, anti, frontend)
    }

    /// Loads a model and checks it was trained over `inventory`.
    pub fn load_for(path: impl AsRef<Path>, inventory: &PhoneInventory) -> Result<Self> {
        let model = load_model(path)?;
        if model.inventory() != inventory {
            return Err(Error::InventoryMismatch(format!(
                "model inventory {} differs from {}",
                model.inventory().hash(),
                inventory.hash()
            )));
        }
        Ok(model)
    }
}

fn header_value<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    line.strip_prefix(key)
        .filter(|rest| rest.starts_with(' '))
        .and_then(|rest| rest.trim().parse().ok())
        .ok_or_else(|| Error::CorruptModel(format!("expected `{key} <value>`, found `{line}`")))
}

fn read_gmm<'a>(
    next: &mut impl FnMut(&str) -> Result<&'a str>,
    dim: usize,
    k: usize,
    label: &str,
) -> Result<Gmm> {
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut vars = Vec::with_capacity(k);
    for _ in 0..k {
        let line = next(&format!("the components of `{label}`"))?;
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Error::CorruptModel(format!("bad number in `{label}` block")))?;
        if values.len() != 1 + 2 * dim {
            return Err(Error::CorruptModel(format!(
                "`{label}` component has {} values, expected {}",
                values.len(),
                1 + 2 * dim
            )));
        }
        weights.push(values[0]);
        means.push(values[1..=dim].to_vec());
        vars.push(values[dim + 1..].to_vec());
    }
    Gmm::new(weights, means, vars).map_err(|e| Error::CorruptModel(format!("`{label}`: {e}")))
}
