//! Named physical-parameter overrides.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub trait ParamSet {
    const ENV: &'static str;
    const NAMES: &'static [&'static str];

    fn set(&mut self, name: &str, value: f64) -> Result<()>;

    /// Overrides with a lower order are applied first.
    fn apply_order(_name: &str) -> u8 {
        0
    }

    fn unknown(name: &str) -> Error {
        Error::UnknownParam {
            env: Self::ENV,
            name: String::from(name),
        }
    }

    fn apply(&mut self, overrides: &BTreeMap<String, f64>) -> Result<()> {
        let mut items: Vec<(&String, &f64)> = overrides.iter().collect();
        items.sort_by_key(|(k, _)| Self::apply_order(k));
        for (k, &v) in items {
            self.set(k, v)?;
        }
        Ok(())
    }
}

pub(crate) fn set_positive(slot: &mut f64, name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidConfig(format!("parameter {name} must be positive, got {value}")));
    }
    *slot = value;
    Ok(())
}

pub(crate) fn set_nonnegative(slot: &mut f64, name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::InvalidConfig(format!("parameter {name} must be non-negative, got {value}")));
    }
    *slot = value;
    Ok(())
}

pub(crate) fn set_finite(slot: &mut f64, name: &str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::InvalidConfig(format!("parameter {name} must be finite, got {value}")));
    }
    *slot = value;
    Ok(())
}
