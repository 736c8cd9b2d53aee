use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::sample::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::numcore::DenseArray;

/// Clinical fields in manifest column order.
pub const CLINICAL_FIELDS: [&str; 5] = ["age", "tumor_size", "er", "pr", "her2"];

pub const MANIFEST_HEADER: [&str; 10] = [
    "sample_id",
    "label",
    "split",
    "clinical_present",
    "age",
    "tumor_size",
    "er",
    "pr",
    "her2",
    "features_path",
];

pub const MANIFEST_FILE: &str = "manifest.csv";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a patch feature file: `t d` on the first line, then `t` rows of `d` reals.
pub fn read_bag(path: &Path) -> Result<DenseArray> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| parse_err(path, 1, "empty feature file"))?;
    let dims: Vec<&str> = head.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(path, 1, format!("expected \"t d\", got {head:?}")));
    }
    let t: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(path, 1, format!("bad patch count {:?}", dims[0])))?;
    let d: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(path, 1, format!("bad feature dim {:?}", dims[1])))?;
    if t == 0 {
        return Err(Error::EmptyBag);
    }
    if d == 0 {
        return Err(parse_err(path, 1, "feature dim must be >= 1"));
    }
    let mut data = Vec::with_capacity(t * d);
    for r in 0..t {
        let line_no = r + 2;
        let line = lines
            .next()
            .ok_or_else(|| parse_err(path, line_no, format!("expected {t} patch rows, found {r}")))?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad number {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, "non-finite feature value"));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != d {
            return Err(parse_err(path, line_no, format!("row has {got} values, header says {d}")));
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(parse_err(path, t + 2, "trailing data after declared patch rows"));
    }
    DenseArray::new(t, d, data)
}

pub fn bag_to_string(bag: &DenseArray) -> String {
    let mut out = format!("{} {}\n", bag.rows(), bag.cols());
    for r in 0..bag.rows() {
        for (k, v) in bag.row(r).iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad {name} value {raw:?}")))
}

/// Loads a manifest and every feature file it references (paths relative to the manifest).
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::file(path, io),
            other => parse_err(path, 1, format!("{other:?}")),
        })?;
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != MANIFEST_HEADER {
        return Err(parse_err(
            path,
            1,
            format!("header must be {}", MANIFEST_HEADER.join(",")),
        ));
    }

    let mut samples = Vec::new();
    let mut d_w: Option<(usize, PathBuf)> = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        if rec.len() != MANIFEST_HEADER.len() {
            return Err(parse_err(path, line, format!("expected 10 columns, got {}", rec.len())));
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty sample_id"));
        }
        let label: usize = parse_field(path, line, "label", &rec[1])?;
        if label > 1 {
            return Err(parse_err(path, line, format!("label {label} is not binary")));
        }
        let split = Split::parse(rec[2].trim()).map_err(|e| parse_err(path, line, e.to_string()))?;
        let present: u8 = parse_field(path, line, "clinical_present", &rec[3])?;
        let clinical = match present {
            0 => None,
            1 => {
                let mut vals = Vec::with_capacity(5);
                for (k, name) in CLINICAL_FIELDS.iter().enumerate() {
                    let v: f64 = parse_field(path, line, name, &rec[4 + k])?;
                    if !v.is_finite() {
                        return Err(parse_err(path, line, format!("non-finite {name}")));
                    }
                    vals.push(v);
                }
                Some(vals)
            }
            other => {
                return Err(parse_err(path, line, format!("clinical_present must be 0 or 1, got {other}")))
            }
        };
        let fpath = base.join(rec[9].trim());
        let bag = read_bag(&fpath)?;
        match &d_w {
            None => d_w = Some((bag.cols(), fpath.clone())),
            Some((d, first)) if *d != bag.cols() => {
                return Err(parse_err(
                    &fpath,
                    1,
                    format!("feature dim {} differs from {} in {}", bag.cols(), d, first.display()),
                ))
            }
            _ => {}
        }
        let mut s = Sample::new(id, label, bag, clinical)?;
        s.split = split;
        samples.push(s);
    }
    let d_w = d_w.map_or(0, |(d, _)| d);
    Dataset::new(samples, d_w, CLINICAL_FIELDS.len())
}

/// Writes `manifest.csv` plus `features/<sample_id>.txt` under `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    if dataset.d_c != CLINICAL_FIELDS.len() {
        return Err(Error::Config(format!(
            "manifest format needs d_c = {}, dataset has {}",
            CLINICAL_FIELDS.len(),
            dataset.d_c
        )));
    }
    let fdir = dir.join("features");
    fs::create_dir_all(&fdir).map_err(|e| Error::file(&fdir, e))?;
    let mut manifest = MANIFEST_HEADER.join(",");
    manifest.push('\n');
    for s in &dataset.samples {
        if s.id.contains([',', '/', '\\', '"', '\n']) {
            return Err(Error::Data(format!("sample id {:?} is not file-safe", s.id)));
        }
        let rel = format!("features/{}.txt", s.id);
        let fp = dir.join(&rel);
        fs::write(&fp, bag_to_string(&s.bag)).map_err(|e| Error::file(&fp, e))?;
        let split = s.split.map_or("", Split::as_str);
        let _ = write!(manifest, "{},{},{},", s.id, s.label, split);
        match &s.clinical {
            Some(c) => {
                manifest.push('1');
                for v in c {
                    let _ = write!(manifest, ",{v}");
                }
            }
            None => manifest.push_str("0,,,,,"),
        }
        let _ = writeln!(manifest, ",{rel}");
    }
    let mp = dir.join(MANIFEST_FILE);
    fs::write(&mp, manifest).map_err(|e| Error::file(&mp, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn two_row_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        write(d, "a.txt", "2 3\n1 2 3\n4 5 6\n");
        write(d, "b.txt", "1 3\n0.5 -1 2e-3\n");
        write(
            d,
            "manifest.csv",
            "sample_id,label,split,clinical_present,age,tumor_size,er,pr,her2,features_path\n\
             a,1,train,1,50,2.5,1,0,1,a.txt\n\
             b,0,,0,,,,,,b.txt\n",
        );
        let ds = load_manifest(&d.join("manifest.csv")).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.d_w, 3);
        assert_eq!(ds.samples[0].clinical.as_deref(), Some(&[50.0, 2.5, 1.0, 0.0, 1.0][..]));
        assert_eq!(ds.samples[0].split, Some(Split::Train));
        assert!(ds.samples[1].clinical().is_none());
        assert_eq!(ds.samples[1].bag.row(0), &[0.5, -1.0, 2e-3]);
    }

    #[test]
    fn feature_dim_mismatch_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        write(d, "bad.txt", "2 3\n1 2 3\n4 5\n");
        write(
            d,
            "manifest.csv",
            "sample_id,label,split,clinical_present,age,tumor_size,er,pr,her2,features_path\n\
             a,1,,0,,,,,,bad.txt\n",
        );
        let err = load_manifest(&d.join("manifest.csv")).unwrap_err().to_string();
        assert!(err.contains("bad.txt") && err.contains(":3:"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        write(d, "a.txt", "1 1\n1\n");
        write(
            d,
            "manifest.csv",
            "sample_id,label,split,clinical_present,age,tumor_size,er,pr,her2,features_path\n\
             a,1,,0,,,,,,a.txt\n\
             b,7,,0,,,,,,a.txt\n",
        );
        let err = load_manifest(&d.join("manifest.csv")).unwrap_err().to_string();
        assert!(err.contains("manifest.csv:3"), "{err}");
    }

    #[test]
    fn missing_feature_file_and_empty_bag() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        write(
            d,
            "manifest.csv",
            "sample_id,label,split,clinical_present,age,tumor_size,er,pr,her2,features_path\n\
             a,1,,0,,,,,,nope.txt\n",
        );
        assert!(matches!(load_manifest(&d.join("manifest.csv")), Err(Error::File { .. })));
        write(d, "e.txt", "0 4\n");
        assert!(matches!(read_bag(&d.join("e.txt")), Err(Error::EmptyBag)));
    }
}
