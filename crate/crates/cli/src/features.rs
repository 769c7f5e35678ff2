//! Token feature files.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic    8 × u8     "PIRTFEA1"
//! version  u32        1
//! n        u64        sample count
//! D        u32        token width
//! tps      u8         tokens per sample (1 or 2)
//! pad      3 × u8     zeros
//! labels   n × i64
//! features n·tps·D × f32   sample-major, CLS before DIST, row-major dims
//! ```
//!
//! Values are stored in single precision and widened to `f64` on load; a
//! widened value narrows back exactly, so round-trips are bit-exact.
//!
//! Files ending in `.csv` use the hand-editable fallback instead: header
//! `label,tok,f_0,...,f_{D-1}` with `tok ∈ {cls,dist}` and the rows of one
//! sample adjacent (CLS first).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use pirt_core::data::TokenFeatureSet;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"PIRTFEA1";
pub const FEATURE_VERSION: u32 = 1;

pub(crate) fn read_exact(
    r: &mut impl Read,
    buf: &mut [u8],
    context: &'static str,
) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::TruncatedFile { context })
}

pub(crate) fn read_u32(r: &mut impl Read, context: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, context)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read, context: &'static str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, context)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_i64(r: &mut impl Read, context: &'static str) -> Result<i64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, context)?;
    Ok(i64::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut impl Read, context: &'static str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, context)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn ensure_eof(r: &mut impl Read) -> Result<()> {
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.is_empty() {
        Ok(())
    } else {
        Err(Error::TrailingData {
            trailing: rest.len(),
        })
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false)
}

/// Load a feature file, choosing the binary or CSV parser by extension.
pub fn load_features(path: &Path) -> Result<TokenFeatureSet> {
    if is_csv(path) {
        load_features_csv(path)
    } else {
        load_features_binary(path)
    }
}

/// Write a feature file, choosing the format by extension.
pub fn write_features(path: &Path, features: &TokenFeatureSet) -> Result<()> {
    if is_csv(path) {
        write_features_csv(path, features)
    } else {
        write_features_binary(path, features)
    }
}

pub fn load_features_binary(path: &Path) -> Result<TokenFeatureSet> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = read_u32(&mut r, "version")?;
    if version != FEATURE_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FEATURE_VERSION,
        });
    }
    let n = read_u64(&mut r, "sample count")? as usize;
    let width = read_u32(&mut r, "token width")? as usize;
    let mut tps_pad = [0u8; 4];
    read_exact(&mut r, &mut tps_pad, "tokens per sample")?;
    let tokens_per_sample = tps_pad[0] as usize;

    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(read_i64(&mut r, "labels")?);
    }
    let count = n * tokens_per_sample * width;
    let mut features = Vec::with_capacity(count);
    let mut buf = [0u8; 4];
    for i in 0..count {
        read_exact(&mut r, &mut buf, "feature payload")?;
        let v = f32::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                row: i / (tokens_per_sample * width),
            });
        }
        features.push(v as f64);
    }
    ensure_eof(&mut r)?;
    Ok(TokenFeatureSet::new(
        width,
        tokens_per_sample,
        labels,
        features,
    )?)
}

pub fn write_features_binary(path: &Path, features: &TokenFeatureSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&(features.len() as u64).to_le_bytes())?;
    w.write_all(&(features.token_width() as u32).to_le_bytes())?;
    w.write_all(&[features.tokens_per_sample() as u8, 0, 0, 0])?;
    for &label in features.labels() {
        w.write_all(&label.to_le_bytes())?;
    }
    for &v in features.features() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_features_csv(path: &Path) -> Result<TokenFeatureSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            line: 0,
            message: e.to_string(),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::CsvParse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.len() < 3 || &headers[0] != "label" || &headers[1] != "tok" {
        return Err(Error::CsvParse {
            line: 1,
            message: "header must be label,tok,f_0,...".into(),
        });
    }
    let width = headers.len() - 2;
    for (k, name) in headers.iter().skip(2).enumerate() {
        if name != format!("f_{k}") {
            return Err(Error::CsvParse {
                line: 1,
                message: format!("column {} must be f_{k}, found {name}", k + 2),
            });
        }
    }

    // Collect raw rows first; sample grouping (cls alone, or cls followed by
    // dist) is resolved afterwards.
    struct Row {
        line: usize,
        label: i64,
        is_dist: bool,
        values: Vec<f64>,
    }
    let mut rows: Vec<Row> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| Error::CsvParse {
            line,
            message: e.to_string(),
        })?;
        let label: i64 = record[0].trim().parse().map_err(|_| Error::CsvParse {
            line,
            message: format!("bad label {:?}", &record[0]),
        })?;
        let is_dist = match record[1].trim() {
            "cls" => false,
            "dist" => true,
            other => {
                return Err(Error::CsvParse {
                    line,
                    message: format!("tok must be cls or dist, found {other:?}"),
                })
            }
        };
        let mut values = Vec::with_capacity(width);
        for field in record.iter().skip(2) {
            let v: f64 = field.trim().parse().map_err(|_| Error::CsvParse {
                line,
                message: format!("bad number {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row: line });
            }
            // The on-disk payload is single precision in both formats.
            values.push(v as f32 as f64);
        }
        rows.push(Row {
            line,
            label,
            is_dist,
            values,
        });
    }
    if rows.is_empty() {
        return Err(Error::CsvParse {
            line: 1,
            message: "no data rows".into(),
        });
    }

    let tokens_per_sample = if rows.len() > 1 && rows[1].is_dist { 2 } else { 1 };
    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let cls = &rows[i];
        if cls.is_dist {
            return Err(Error::CsvParse {
                line: cls.line,
                message: "expected a cls row".into(),
            });
        }
        labels.push(cls.label);
        features.extend_from_slice(&cls.values);
        if tokens_per_sample == 2 {
            let dist = rows.get(i + 1).ok_or(Error::CsvParse {
                line: cls.line,
                message: "missing dist row for final sample".into(),
            })?;
            if !dist.is_dist || dist.label != cls.label {
                return Err(Error::CsvParse {
                    line: dist.line,
                    message: "dist row must follow its cls row with the same label".into(),
                });
            }
            features.extend_from_slice(&dist.values);
            i += 2;
        } else {
            i += 1;
        }
    }
    Ok(TokenFeatureSet::new(
        width,
        tokens_per_sample,
        labels,
        features,
    )?)
}

pub fn write_features_csv(path: &Path, features: &TokenFeatureSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "label,tok")?;
    for k in 0..features.token_width() {
        write!(w, ",f_{k}")?;
    }
    writeln!(w)?;
    for i in 0..features.len() {
        let label = features.labels()[i];
        let tokens: &[(&str, &[f64])] = &[("cls", features.cls(i)), ("dist", features.dist(i))];
        let count = features.tokens_per_sample();
        for (name, values) in &tokens[..count] {
            write!(w, "{label},{name}")?;
            for v in *values {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> TokenFeatureSet {
        TokenFeatureSet::new(
            3,
            2,
            vec![4, 0],
            vec![
                0.5, -1.25, 3.0, 0.125, 2.5, -0.75, // sample 0 cls+dist
                1.0, 0.0625, -2.0, 0.25, 8.0, -0.5, // sample 1 cls+dist
            ],
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.bin");
        let set = sample_set();
        write_features(&path, &set).unwrap();
        let loaded = load_features(&path).unwrap();
        assert_eq!(set, loaded);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.csv");
        let set = sample_set();
        write_features(&path, &set).unwrap();
        let loaded = load_features(&path).unwrap();
        assert_eq!(set, loaded);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.bin");
        std::fs::write(&path, b"NOTMAGIC-and-some-bytes").unwrap();
        assert!(matches!(
            load_features(&path),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.bin");
        write_features(&path, &sample_set()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_features(&path),
            Err(Error::TruncatedFile { .. })
        ));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.bin");
        write_features(&path, &sample_set()).unwrap();
        let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&[0u8; 2]).unwrap();
        drop(f);
        assert!(matches!(load_features(&path), Err(Error::TrailingData { .. })));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.bin");
        write_features(&path, &sample_set()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 9; // version field
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_features(&path),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn csv_nan_reports_its_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.csv");
        std::fs::write(&path, "label,tok,f_0,f_1\n0,cls,1.0,2.0\n0,dist,NaN,2.0\n").unwrap();
        match load_features(&path) {
            Err(Error::NonFiniteValue { row }) => assert_eq!(row, 3),
            other => panic!("expected NonFiniteValue, got {other:?}"),
        }
    }

    #[test]
    fn csv_single_token_sets_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.csv");
        std::fs::write(&path, "label,tok,f_0\n3,cls,1.5\n7,cls,-2.5\n").unwrap();
        let set = load_features(&path).unwrap();
        assert_eq!(set.tokens_per_sample(), 1);
        assert_eq!(set.labels(), &[3, 7]);
        assert_eq!(set.cls(1), &[-2.5]);
    }

    #[test]
    fn csv_misplaced_dist_row_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.csv");
        std::fs::write(
            &path,
            "label,tok,f_0\n0,cls,1.0\n0,dist,1.0\n1,dist,2.0\n1,cls,2.0\n",
        )
        .unwrap();
        assert!(matches!(load_features(&path), Err(Error::CsvParse { .. })));
    }
}
