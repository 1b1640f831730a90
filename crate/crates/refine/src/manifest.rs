//! Run manifests written next to every artifact as `<artifact>.manifest.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::io::{file_sha256, write_json, IoError};

pub const TOOL: &str = "refine";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// What produced an artifact. Paths are recorded exactly as given on the
/// command line and no timestamps are stored, so a replay in another
/// directory yields the same bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config_sha256: String,
    pub rng_seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn digest(path: &Path) -> Result<FileDigest, IoError> {
    Ok(FileDigest { path: path.display().to_string(), sha256: file_sha256(path)? })
}

impl Manifest {
    pub fn new(command: &str, args: &[String], config_sha256: String, rng_seed: u64) -> Self {
        Manifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: args.to_vec(),
            config_sha256,
            rng_seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Record input files; directories contribute each regular file inside, sorted.
    pub fn with_inputs<P: AsRef<Path>>(mut self, paths: &[P]) -> Result<Self, IoError> {
        for p in paths {
            let p = p.as_ref();
            if p.is_dir() {
                let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                    .map_err(|source| IoError::Io { path: p.to_path_buf(), source })?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|f| f.is_file())
                    .collect();
                files.sort();
                for f in files {
                    self.inputs.push(digest(&f)?);
                }
            } else {
                self.inputs.push(digest(p)?);
            }
        }
        Ok(self)
    }

    /// Hash `outputs` and write the manifest beside the first of them.
    pub fn write_for<P: AsRef<Path>>(mut self, outputs: &[P]) -> Result<PathBuf, IoError> {
        for p in outputs {
            let p = p.as_ref();
            if p.exists() {
                self.outputs.push(digest(p)?);
            }
        }
        let primary = outputs.first().map(|p| p.as_ref().to_path_buf()).unwrap_or_else(|| PathBuf::from(TOOL));
        let path = manifest_path(&primary);
        write_json(&path, &self)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_name() {
        assert_eq!(manifest_path(Path::new("out/pool.jsonl")), PathBuf::from("out/pool.jsonl.manifest.json"));
    }

    #[test]
    fn records_inputs_and_outputs() {
        let d = tempfile::tempdir().unwrap();
        let input = d.path().join("in.txt");
        let out = d.path().join("out.txt");
        std::fs::write(&input, "abc").unwrap();
        std::fs::write(&out, "").unwrap();
        let m = Manifest::new("score", &["score".into()], "00".into(), 3).with_inputs(&[&input]).unwrap();
        let path = m.write_for(&[&out]).unwrap();
        let back: Manifest = crate::io::read_json(&path).unwrap();
        assert_eq!(back.inputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(back.outputs[0].sha256, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(back.rng_seed, 3);
    }
}
