//! Multi-rate distribution-grid sensor fusion: a shared Gaussian-process
//! prior with a learned neural mean imputes asynchronous feeder
//! measurements onto a common grid, and low-rank matrix completion
//! recovers per-bus electrical states from whatever entries survived.
//!
//! The crate is organized as a pipeline:
//!
//! - [`feeder`] builds a radial feeder model, synthesizes daily load
//!   profiles and solves the linearized power flow that generates ground
//!   truth and multi-rate measurements,
//! - [`timeseries`] holds task containers, masking, and the linear
//!   interpolation baseline,
//! - [`gp`] trains the shared prior and produces posterior imputations
//!   with calibrated uncertainty,
//! - [`mc`] assembles per-snapshot state matrices and completes them by
//!   soft-thresholded SVD iteration,
//! - [`harness`] wires those pieces into reproducible experiments.
//!
//! Every stochastic step draws from a seeded [`rand_chacha::ChaCha8Rng`],
//! so identical inputs produce byte-identical outputs.

use std::path::Path;

pub mod error;
pub mod feeder;
pub mod gp;
pub mod harness;
pub mod mc;
pub mod seeding;
pub mod timeseries;

pub use error::{Error, Result};

/// Writes `bytes` to `path` via a temporary sibling file and an atomic
/// rename, so readers never observe a half-written artifact.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a writable path: {}", path.display())))?;
    let tmp = match dir {
        Some(d) => d.join(format!(".{}.tmp", file_name.to_string_lossy())),
        None => Path::new(&format!(".{}.tmp", file_name.to_string_lossy())).to_path_buf(),
    };
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_atomic_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"a,b\n1,2\n").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"a,b\n1,2\n");
        // overwrite works and leaves no temp files behind
        write_atomic(&path, b"x").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"x");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn write_atomic_rejects_pathless_target() {
        assert!(write_atomic("", b"x").is_err());
    }
}
