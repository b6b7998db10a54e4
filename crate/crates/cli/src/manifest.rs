//! Run manifests: every subcommand that writes files drops a manifest next
//! to its outputs recording the exact configuration, seeds and format
//! versions. Re-running with the same manifest inputs reproduces all output
//! files byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    /// Flag values in stable (sorted) order.
    pub args: BTreeMap<String, String>,
    pub format_versions: BTreeMap<String, u32>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut format_versions = BTreeMap::new();
        format_versions.insert("weights".into(), corematch::model::FORMAT_VERSION);
        format_versions.insert("csv".into(), corematch::sparsity::CSV_SCHEMA_VERSION);
        format_versions.insert("manifest".into(), MANIFEST_SCHEMA_VERSION);
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            args: BTreeMap::new(),
            format_versions,
        }
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.args.insert(key.to_string(), value.to_string());
        self
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), body + "\n")
    }
}
