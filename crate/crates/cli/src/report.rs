//! Report envelope and run manifest.

use std::path::{Path, PathBuf};

use gabor_fio::io::{create, write_json};
use gabor_fio::Result;
use serde::Serialize;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

pub const ARTIFACT_VERSION: &str = concat!("gabor-fio ", env!("CARGO_PKG_VERSION"));

/// Fields embedded in every JSON report.
#[derive(Serialize)]
pub struct Meta<'a> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub version: &'a str,
}

#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub meta: Meta<'a>,
    pub report: T,
}

pub fn now() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).expect("RFC 3339 formatting")
}

/// Files written by one run, with wall-clock timestamps. Kept apart from the
/// reports so that those stay identical across runs of the same config.
#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub version: &'static str,
    pub started: String,
    pub finished: String,
    pub files: Vec<PathBuf>,
    pub timings: Vec<(String, f64)>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: &str) -> Self {
        Manifest {
            command: command.into(),
            config_hash: config_hash.into(),
            version: ARTIFACT_VERSION,
            started: now(),
            finished: String::new(),
            files: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn record(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished = now();
        create(&dir.join("manifest.json"))?;
        write_json(&dir.join("manifest.json"), &self)
    }
}
