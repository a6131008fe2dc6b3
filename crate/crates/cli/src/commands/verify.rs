use anyhow::{Context, Result};
use benchcert_core::replay::{verify_manifest_file, FileVerification};

use crate::args::VerifyArgs;

/// Checks a manifest and its `.sha256` sibling.
pub fn run(args: &VerifyArgs) -> Result<FileVerification> {
    verify_manifest_file(&args.manifest).with_context(|| format!("cannot read {}", args.manifest.display()))
}
