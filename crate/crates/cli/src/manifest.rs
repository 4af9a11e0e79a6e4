//! `MANIFEST`: SHA-256 and relative path of every file under an output directory.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "MANIFEST";

fn collect(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else if path != root.join(MANIFEST_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Lines of `<sha256 hex>  <path>` sorted by path, `/`-separated.
pub fn manifest_text(root: &Path) -> CliResult<String> {
    let fail = |e: std::io::Error| CliError::failure(format!("manifest of {}: {e}", root.display()));
    let mut files = Vec::new();
    collect(root, root, &mut files).map_err(fail)?;
    let mut lines: Vec<(String, String)> = files
        .iter()
        .map(|path| {
            let bytes = std::fs::read(path).map_err(fail)?;
            let rel = path.strip_prefix(root).expect("collected under root");
            let name = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok((name, hex::encode(Sha256::digest(&bytes))))
        })
        .collect::<CliResult<_>>()?;
    lines.sort();
    Ok(lines.into_iter().map(|(name, hash)| format!("{hash}  {name}\n")).collect())
}

pub fn write_manifest(root: &Path) -> CliResult<()> {
    let text = manifest_text(root)?;
    let path = root.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_nested_files_sorted_and_skips_itself() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("sub").join("b.txt"), "abc").unwrap();
        std::fs::write(dir.path().join("a.txt"), "").unwrap();
        write_manifest(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(
            text,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855  a.txt\n\
             ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad  sub/b.txt\n"
        );
        write_manifest(dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap(), text);
    }
}
