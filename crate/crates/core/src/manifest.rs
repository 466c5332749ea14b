//! Run manifests: what was run, with which configuration, on which bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path as it appeared on the command line.
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &str) -> Result<Self> {
        Ok(Self {
            path: path.to_owned(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub library_version: String,
    /// Arguments after the program name.
    pub command: Vec<String>,
    pub working_directory: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_time_seconds: f64,
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    /// Digests every listed file as it is on disk now.
    pub fn capture(
        command: Vec<String>,
        config: serde_json::Value,
        seeds: Vec<u64>,
        inputs: &[String],
        outputs: &[String],
        wall_time_seconds: f64,
    ) -> Result<Self> {
        Ok(Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            library_version: env!("CARGO_PKG_VERSION").to_owned(),
            command,
            working_directory: std::env::current_dir()?.display().to_string(),
            config,
            seeds,
            inputs: inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            wall_time_seconds,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest schema {}",
                m.schema_version
            )));
        }
        Ok(m)
    }

    /// Default location next to the first output.
    pub fn default_path(first_output: &str) -> PathBuf {
        PathBuf::from(format!("{first_output}.manifest.json"))
    }

    /// The recorded command with every output path redirected into `dir`,
    /// keeping file names. Returns the rewritten arguments and the new output
    /// paths in recorded order.
    pub fn redirected(&self, dir: &Path) -> Result<(Vec<String>, Vec<String>)> {
        let mut args = self.command.clone();
        let mut new_outputs = Vec::with_capacity(self.outputs.len());
        for o in &self.outputs {
            let name = Path::new(&o.path)
                .file_name()
                .ok_or_else(|| Error::Format(format!("output path {} has no file name", o.path)))?;
            let target = dir.join(name).display().to_string();
            for a in args.iter_mut().filter(|a| **a == o.path) {
                *a = target.clone();
            }
            new_outputs.push(target);
        }
        Ok((args, new_outputs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn redirect_rewrites_output_arguments_only() {
        let m = RunManifest {
            schema_version: 1,
            library_version: "0".into(),
            command: vec![
                "synth".into(),
                "pixel-linear".into(),
                "--out".into(),
                "runs/x.csv".into(),
            ],
            working_directory: "/".into(),
            config: serde_json::Value::Null,
            seeds: vec![1],
            inputs: vec![],
            outputs: vec![FileDigest {
                path: "runs/x.csv".into(),
                sha256: String::new(),
            }],
            wall_time_seconds: 0.0,
        };
        let (args, outs) = m.redirected(Path::new("/tmp/r")).unwrap();
        assert_eq!(args[3], "/tmp/r/x.csv");
        assert_eq!(args[1], "pixel-linear");
        assert_eq!(outs, vec!["/tmp/r/x.csv".to_string()]);
    }
}
