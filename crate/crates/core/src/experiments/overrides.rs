use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::error::{Error, Result};

/// `--set key=value` parameters; each key must be consumed by the experiment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl Overrides {
    pub fn new(values: BTreeMap<String, String>) -> Self {
        Overrides {
            values,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some(raw) = self.values.get(key) else {
            return Ok(None);
        };
        self.used.borrow_mut().insert(key.to_string());
        raw.parse::<T>()
            .map(Some)
            .map_err(|_| Error::config(format!("invalid value `{raw}` for `{key}`")))
    }

    pub fn apply<T: FromStr>(&self, key: &str, target: &mut T) -> Result<()> {
        if let Some(v) = self.get(key)? {
            *target = v;
        }
        Ok(())
    }

    pub fn ensure_all_used(&self, experiment: &str) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "override(s) not recognised by {experiment}: {}",
                unknown.join(", ")
            )))
        }
    }
}
