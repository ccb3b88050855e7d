//! File formats and the record of which files were read.
//!
//! Every read in this crate goes through [`open_for_read`], which appends the
//! path to a process-wide log. Tests use [`read_log`] to show that the fit
//! path never touches a simulation's truth sidecar.

pub mod config;
pub mod measurements;
pub mod report;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::Result;

static READ_LOG: Mutex<Vec<PathBuf>> = Mutex::new(Vec::new());

pub fn open_for_read(path: &Path) -> Result<File> {
    READ_LOG
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .push(path.to_path_buf());
    Ok(File::open(path)?)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    use std::io::Read;
    let mut s = String::new();
    open_for_read(path)?.read_to_string(&mut s)?;
    Ok(s)
}

/// Every path opened for reading so far in this process.
pub fn read_log() -> Vec<PathBuf> {
    READ_LOG.lock().unwrap_or_else(|e| e.into_inner()).clone()
}
