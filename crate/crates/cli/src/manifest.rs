use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub inputs: Vec<String>,
    pub output_dir: String,
    pub seed: Option<u64>,
    pub frequency_mhz: Option<f64>,
    /// Remaining options, by flag name.
    #[serde(default)]
    pub options: BTreeMap<String, serde_json::Value>,
    /// Files written by the run, in write order.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, out: &Path) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            inputs: Vec::new(),
            output_dir: out.display().to_string(),
            seed: None,
            frequency_mhz: None,
            options: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn option(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        self.options.insert(
            name.to_string(),
            serde_json::to_value(value).expect("option serialises"),
        );
        self
    }

    pub fn write(&self, out: &Path) -> anyhow::Result<()> {
        let path = out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
