//! Output files: CSVs with a provenance comment line, JSON with embedded
//! fingerprint and seed.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Writes rows as CSV prefixed by `# fingerprint=.. seed=..`.
pub fn write_csv<T: Serialize>(
    path: &Path,
    fingerprint: &str,
    seed: u64,
    rows: &[T],
) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        for row in rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
    }
    let mut text = format!("# fingerprint={fingerprint} seed={seed}\n");
    text.push_str(&String::from_utf8(buf).expect("csv is utf-8"));
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`], skipping comment lines.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for row in reader.into_deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
pub struct JsonOutput<T: Serialize> {
    pub fingerprint: String,
    pub master_seed: u64,
    #[serde(flatten)]
    pub data: T,
}

pub fn write_json<T: Serialize>(
    path: &Path,
    fingerprint: &str,
    seed: u64,
    data: T,
) -> anyhow::Result<()> {
    let wrapped =
        JsonOutput { fingerprint: fingerprint.to_string(), master_seed: seed, data };
    let json = serde_json::to_string_pretty(&wrapped)?;
    fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
