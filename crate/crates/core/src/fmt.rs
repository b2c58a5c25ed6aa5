//! Lossless real-number formatting for the JSON artifacts.

use std::io::Write;
use std::path::Path;

use serde::ser::{SerializeSeq, Serializer};
use serde_json::value::RawValue;

/// 17 significant digits; enough to round-trip any finite `f64`.
pub(crate) fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// `serialize_with` helper writing a list of reals with [`real`].
pub(crate) fn reals<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(values.len()))?;
    for &v in values {
        let raw = RawValue::from_string(real(v)).map_err(serde::ser::Error::custom)?;
        seq.serialize_element(&raw)?;
    }
    seq.end()
}

/// Writes to a sibling temporary file, then renames it over `path`, so a
/// failed run never leaves a truncated artifact behind.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    let wrap = |e: std::io::Error| crate::Error::from(e).in_file(path);
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(wrap)?;
    f.write_all(bytes).map_err(wrap)?;
    f.sync_all().map_err(wrap)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(wrap)
}
