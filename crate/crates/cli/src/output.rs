//! Run directory: output files, checksums and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::exit::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Collects the files of one run so the manifest can list them.
pub struct RunDir {
    root: PathBuf,
    files: Vec<(String, String)>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), sha256_hex(contents.as_bytes())));
        Ok(())
    }

    /// Writes `manifest.toml`: command, version, seed, input checksums, the
    /// checksums of every file written so far, and the resolved
    /// configuration (its `[config]` table is a valid `--config` file).
    pub fn write_manifest(&self, command: &str, cfg: &RunConfig, inputs: &[(&str, &Path)]) -> Result<(), CliError> {
        let mut run = toml::Table::new();
        run.insert("command".into(), command.into());
        run.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        run.insert("seed".into(), toml::Value::String(cfg.seed.to_string()));
        let mut input_table = toml::Table::new();
        for (label, path) in inputs {
            input_table.insert(label.to_string(), path.display().to_string().into());
            input_table.insert(format!("{label}_sha256"), sha256_file(path)?.into());
        }
        let outputs: toml::Table = self.files.iter().map(|(n, s)| (n.clone(), s.as_str().into())).collect();
        let config = toml::Value::try_from(cfg).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        let mut doc = toml::Table::new();
        doc.insert("run".into(), run.into());
        doc.insert("inputs".into(), input_table.into());
        doc.insert("outputs".into(), outputs.into());
        doc.insert("config".into(), config);
        let text = toml::to_string(&doc).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        let path = self.root.join("manifest.toml");
        fs::write(&path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        fs::write(&input, "x").unwrap();
        let mut cfg = RunConfig::default();
        cfg.m = Some(80);
        cfg.sampler.burn_in = Some(100);
        cfg.si.quantiles = Some(vec![[0.25, 2.0], [0.75, 5.0]]);
        let mut run = RunDir::create(dir.path()).unwrap();
        run.write("a.csv", "1\n").unwrap();
        run.write_manifest("fit", &cfg, &[("input", &input)]).unwrap();
        let text = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        assert!(text.contains(&sha256_hex(b"x")));
        assert_eq!(RunConfig::from_file(&dir.path().join("manifest.toml")).unwrap(), cfg);
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
