use std::fs;
use std::path::Path;

use anyhow::Context;

use crate::manifest::RunManifest;

pub fn create_dir(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

/// Writes a CSV file into the run directory and records it in the manifest.
pub fn write_csv(
    out: &Path,
    name: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    let path = out.join(name);
    let mut w =
        csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

pub fn write_json(
    out: &Path,
    name: &str,
    value: &impl serde::Serialize,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    let path = out.join(name);
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    manifest.outputs.push(name.to_string());
    Ok(())
}
