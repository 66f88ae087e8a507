//! Run configuration shared by every command, with file loading and
//! snapshotting.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::align::AlignConfig;
use crate::error::{Error, Result};
use crate::graphwsd::PprConfig;
use crate::pipelines::{LabelGenConfig, LabelPropConfig};
use crate::refine::SoftConstraintConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ppr: PprConfig,
    pub soft_constraint: SoftConstraintConfig,
    pub align: AlignConfig,
    pub label_prop: LabelPropConfig,
    pub label_gen: LabelGenConfig,
    pub seed: u64,
    /// worker threads; 0 lets the runtime decide
    pub jobs: usize,
    /// named input and output paths
    pub paths: BTreeMap<String, String>,
}

fn merge(into: &mut Value, from: Value) {
    match (into, from) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in b {
                merge(a.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Reads one JSON object per non-blank line; later lines override
    /// earlier ones key by key.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut acc = serde_json::to_value(RunConfig::default()).expect("plain data");
        for (n, line) in reader.lines().enumerate() {
            let lineno = n + 1;
            let line = line.map_err(|e| Error::malformed(lineno, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&line).map_err(|e| Error::malformed(lineno, e))?;
            if !v.is_object() {
                return Err(Error::malformed(lineno, "expected a JSON object"));
            }
            merge(&mut acc, v);
        }
        let cfg: RunConfig = serde_json::from_value(acc)
            .map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(f))
    }

    pub fn validate(&self) -> Result<()> {
        self.ppr.validate()?;
        self.soft_constraint.validate()?;
        if self.align.iterations == 0 {
            return Err(Error::InvalidConfig(
                "align.iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Everything that can influence outputs; the worker count is left out.
    pub fn snapshot(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("plain data");
        if let Value::Object(m) = &mut v {
            m.remove("jobs");
        }
        v
    }
}
