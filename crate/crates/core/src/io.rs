//! CSV and JSON artifacts.
//!
//! Every CSV starts with `# key: value` comment lines carrying the software
//! version, the draw-order tag, the seed and the config hash, followed by a
//! header row. Readers skip comment lines but keep their key/value pairs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridSample;
use crate::oracle::ExactPmf;
use crate::stats::{ConfidenceBand, Histogram, QqPoint};
use crate::{DRAW_ORDER, VERSION};

/// Ordered `# key: value` metadata lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    /// Metadata with the version and draw-order tags already set.
    pub fn tagged() -> Self {
        let mut m = Self::default();
        m.set("generator", format!("trix-grid {VERSION}"));
        m.set("draw-order", DRAW_ORDER);
        m
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn write_to(&self, out: &mut impl Write) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(out, "# {k}: {v}")?;
        }
        Ok(())
    }
}

/// First 16 hex digits of the SHA-256 of `value`'s JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&json);
    Ok(hex::encode(&digest[..8]))
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, body)?;
    Ok(())
}

fn csv_body<F>(meta: &Metadata, header: &[&str], rows: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    meta.write_to(&mut buf)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        rows(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

/// Histogram CSV: `value,count,phat,pmin,pmax`. Values are in scaled units;
/// the resolution and `n` are written as metadata.
pub fn histogram_csv(hist: &Histogram, band: Option<&ConfidenceBand>, meta: &Metadata) -> Result<Vec<u8>> {
    let meta = meta
        .clone()
        .with("resolution", hist.resolution())
        .with("n", hist.n());
    csv_body(&meta, &["value", "count", "phat", "pmin", "pmax"], |w| {
        for (value, count) in hist.iter() {
            let phat = hist.phat(value);
            let (pmin, pmax) = match band {
                Some(b) => (b.pmin(value).to_string(), b.pmax(value).to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                value.to_string(),
                count.to_string(),
                phat.to_string(),
                pmin,
                pmax,
            ])?;
        }
        Ok(())
    })
}

pub fn write_histogram_csv(
    path: &Path,
    hist: &Histogram,
    band: Option<&ConfidenceBand>,
    meta: &Metadata,
) -> Result<()> {
    write_file(path, &histogram_csv(hist, band, meta)?)
}

/// One row of a sweep table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub axis: u32,
    pub n: u64,
    pub mean: f64,
    pub stddev: f64,
    pub stddev_lo: f64,
    pub stddev_hi: f64,
}

pub fn sweep_csv(rows: &[SweepRow], meta: &Metadata) -> Result<Vec<u8>> {
    csv_body(
        meta,
        &["axis", "n", "mean", "stddev", "stddev_lo", "stddev_hi"],
        |w| {
            for r in rows {
                w.serialize(r)?;
            }
            Ok(())
        },
    )
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow], meta: &Metadata) -> Result<()> {
    write_file(path, &sweep_csv(rows, meta)?)
}

pub fn qq_csv(points: &[QqPoint], meta: &Metadata) -> Result<Vec<u8>> {
    csv_body(meta, &["x", "quantile"], |w| {
        for p in points {
            w.write_record([p.x.to_string(), p.quantile.to_string()])?;
        }
        Ok(())
    })
}

pub fn write_qq_csv(path: &Path, points: &[QqPoint], meta: &Metadata) -> Result<()> {
    write_file(path, &qq_csv(points, meta)?)
}

/// `p` in positional notation with 15 significant digits.
pub fn fifteen_digits(p: f64) -> String {
    if p == 0.0 || !p.is_finite() {
        return format!("{p:.14}");
    }
    let magnitude = p.abs().log10().floor() as i32;
    let decimals = (14 - magnitude).max(0) as usize;
    format!("{p:.decimals$}")
}

/// Exact pmf CSV: `value,probability` with the probability as a decimal.
pub fn exact_pmf_csv(pmf: &ExactPmf, meta: &Metadata) -> Result<Vec<u8>> {
    let meta = meta
        .clone()
        .with("resolution", pmf.resolution)
        .with("denominator", pmf.denominator)
        .with("wires", pmf.wires);
    csv_body(&meta, &["value", "probability"], |w| {
        for &value in pmf.counts.keys() {
            w.write_record([value.to_string(), fifteen_digits(pmf.probability_f64(value))])?;
        }
        Ok(())
    })
}

/// Every node time of a recorded sample: `layer,x,time` in scaled units.
pub fn grid_csv(sample: &GridSample, meta: &Metadata) -> Result<Vec<u8>> {
    let layers = sample
        .layers
        .as_ref()
        .ok_or_else(|| Error::argument("grid dump needs a sample recorded with layers"))?;
    let meta = meta.clone().with("resolution", sample.resolution());
    csv_body(&meta, &["layer", "x", "time"], |w| {
        for (y, row) in layers.iter().enumerate() {
            let x0 = sample.spec.layer_start(y as u32);
            for (i, t) in row.iter().enumerate() {
                w.write_record([y.to_string(), (x0 + i as i64).to_string(), t.to_string()])?;
            }
        }
        Ok(())
    })
}

/// Every wire delay of a recorded sample: `layer,x,offset,delay`, where the
/// wire runs from `(x + offset, layer - 1)` to `(x, layer)`.
pub fn wires_csv(sample: &GridSample, meta: &Metadata) -> Result<Vec<u8>> {
    let delays = sample
        .delays
        .as_ref()
        .ok_or_else(|| Error::argument("wire dump needs a sample recorded with wire delays"))?;
    let spec = sample.spec;
    let meta = meta.clone().with("resolution", sample.resolution());
    csv_body(&meta, &["layer", "x", "offset", "delay"], |w| {
        for y in 1..=spec.height {
            let x0 = spec.layer_start(y);
            for x in x0..x0 + spec.layer_width(y) as i64 {
                for c in -1i8..=1 {
                    let i = spec.wire_index(y, x, c).expect("wire inside the cone");
                    w.write_record([y.to_string(), x.to_string(), c.to_string(), delays[i].to_string()])?;
                }
            }
        }
        Ok(())
    })
}

/// Exact pmf JSON: `{"value": [numerator, denominator], ...}`.
pub fn exact_pmf_json(pmf: &ExactPmf) -> Result<String> {
    let map: BTreeMap<String, [u64; 2]> = pmf
        .fractions()
        .into_iter()
        .map(|(v, f)| (v.to_string(), f))
        .collect();
    Ok(serde_json::to_string_pretty(&map)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    write_file(path, &body)
}

pub fn write_bytes(path: &Path, body: &[u8]) -> Result<()> {
    write_file(path, body)
}

/// A CSV file with its metadata, header and string cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub path: PathBuf,
    pub meta: Metadata,
    pub header: Vec<String>,
    /// `(file line number, cells)`.
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn parse_error(&self, row: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            row,
            message: message.into(),
        }
    }

    /// Parses column `col` of every row as `T`.
    pub fn parse_column<T: std::str::FromStr>(&self, col: usize) -> Result<Vec<T>> {
        self.rows
            .iter()
            .map(|(line, cells)| {
                let cell = cells.get(col).map(|c| c.trim()).unwrap_or("");
                cell.parse().map_err(|_| {
                    self.parse_error(*line, format!("cannot parse '{cell}' in column '{}'", self.header[col]))
                })
            })
            .collect()
    }

    /// Like [`Table::parse_column`], by column name.
    pub fn parse_named<T: std::str::FromStr>(&self, name: &str) -> Result<Vec<T>> {
        let col = self
            .column(name)
            .ok_or_else(|| self.parse_error(0, format!("missing column '{name}'")))?;
        self.parse_column(col)
    }
}

/// Reads a comment-prefixed CSV file.
pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    parse_table(path, &text)
}

pub fn parse_table(path: &Path, text: &str) -> Result<Table> {
    let parse_error = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut meta = Metadata::default();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once(':') {
                meta.set(k.trim(), v.trim());
            }
            continue;
        }
        let cells: Vec<String> = trimmed.split(',').map(|c| c.trim().to_string()).collect();
        match &header {
            None => header = Some(cells),
            Some(h) => {
                if cells.len() != h.len() {
                    return Err(parse_error(
                        line_no,
                        format!("expected {} fields, found {}", h.len(), cells.len()),
                    ));
                }
                rows.push((line_no, cells));
            }
        }
    }
    let header = header.ok_or_else(|| parse_error(0, "file has no header row".into()))?;
    if rows.is_empty() {
        return Err(parse_error(0, "file has no data rows".into()));
    }
    Ok(Table {
        path: path.to_path_buf(),
        meta,
        header,
        rows,
    })
}

/// A histogram read back from CSV together with the file's metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedHistogram {
    pub histogram: Histogram,
    pub meta: Metadata,
    /// `n` declared by the file or the caller (rate files only).
    pub declared_n: Option<u64>,
}

/// Loads a histogram from a `value,count` file or from a `value,rate` file
/// with a declared `n`.
///
/// Rates are converted by rounding `rate · n`. The rounded counts may miss
/// `n` by at most one per row; larger mismatches are rejected. `n` comes
/// from the `n` argument, else from a `# n:` metadata line.
pub fn load_histogram_csv(path: &Path, n: Option<u64>) -> Result<LoadedHistogram> {
    let table = read_table(path)?;
    load_histogram_table(&table, n)
}

pub fn load_histogram_table(table: &Table, n: Option<u64>) -> Result<LoadedHistogram> {
    let values: Vec<i64> = table.parse_named("value")?;
    let resolution = match table.meta.get("resolution") {
        Some(r) => r
            .parse::<u32>()
            .ok()
            .filter(|&r| r > 0)
            .ok_or_else(|| table.parse_error(0, format!("bad resolution '{r}'")))?,
        None => 1,
    };
    let meta_n = match table.meta.get("n") {
        Some(v) => Some(
            v.parse::<u64>()
                .map_err(|_| table.parse_error(0, format!("bad n '{v}'")))?,
        ),
        None => None,
    };

    let (counts, declared_n) = if let Some(col) = table.column("count") {
        let counts: Vec<u64> = table.parse_column(col)?;
        let total: u64 = counts.iter().sum();
        if let Some(n) = n.or(meta_n) {
            if n != total {
                return Err(table.parse_error(
                    0,
                    format!("counts sum to {total} but n is declared as {n}"),
                ));
            }
        }
        (counts, None)
    } else {
        let col = table
            .column("rate")
            .or_else(|| table.column("phat"))
            .ok_or_else(|| table.parse_error(0, "need a 'count', 'rate' or 'phat' column"))?;
        let n = n.or(meta_n).ok_or_else(|| {
            table.parse_error(0, "rate files need a sample count (# n: metadata or an explicit n)")
        })?;
        let rates: Vec<f64> = table.parse_column(col)?;
        let mut counts = Vec::with_capacity(rates.len());
        for (&rate, (line, _)) in rates.iter().zip(&table.rows) {
            if !(0.0..=1.0).contains(&rate) {
                return Err(table.parse_error(*line, format!("rate {rate} is not a probability")));
            }
            counts.push((rate * n as f64).round() as u64);
        }
        let total: u64 = counts.iter().sum();
        if total.abs_diff(n) > counts.len() as u64 {
            return Err(table.parse_error(
                0,
                format!("rounded counts sum to {total}, more than one per row away from n = {n}"),
            ));
        }
        (counts, Some(n))
    };

    let mut seen = std::collections::BTreeSet::new();
    for (&v, (line, _)) in values.iter().zip(&table.rows) {
        if !seen.insert(v) {
            return Err(table.parse_error(*line, format!("value {v} appears twice")));
        }
    }
    let histogram = Histogram::from_pairs(values.into_iter().zip(counts), resolution)?;
    if histogram.is_empty() {
        return Err(table.parse_error(0, "histogram has no observations"));
    }
    Ok(LoadedHistogram {
        histogram,
        meta: table.meta.clone(),
        declared_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_significant_digits() {
        assert_eq!(fifteen_digits(0.15625), "0.156250000000000");
        assert_eq!(fifteen_digits(0.6875), "0.687500000000000");
        assert_eq!(fifteen_digits(1.0), "1.00000000000000");
        assert_eq!(fifteen_digits(1.0 / 3.0), "0.333333333333333");
        assert_eq!(fifteen_digits(2.5e-7), "0.000000250000000000000");
    }

    #[test]
    fn metadata_round_trip() {
        let h = Histogram::from_values([3, 3, 5, -1], 2);
        let meta = Metadata::tagged().with("seed", 42);
        let body = histogram_csv(&h, None, &meta).unwrap();
        let table = parse_table(Path::new("mem.csv"), std::str::from_utf8(&body).unwrap()).unwrap();
        assert_eq!(table.meta.get("seed"), Some("42"));
        assert_eq!(table.meta.get("draw-order"), Some(DRAW_ORDER));
        let back = load_histogram_table(&table, None).unwrap();
        assert_eq!(back.histogram, h);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = "# n: 3\nvalue,count\n0,1\n1,x\n";
        let table = parse_table(Path::new("bad.csv"), text).unwrap();
        match load_histogram_table(&table, None) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 4),
            other => panic!("{other:?}"),
        }
        let ragged = "value,count\n0,1,2\n";
        assert!(matches!(
            parse_table(Path::new("r.csv"), ragged),
            Err(Error::Parse { row: 2, .. })
        ));
        assert!(parse_table(Path::new("e.csv"), "").is_err());
    }

    #[test]
    fn rate_mode_checks_the_total() {
        let ok = "value,rate\n0,0.25\n1,0.75\n";
        let t = parse_table(Path::new("a.csv"), ok).unwrap();
        let h = load_histogram_table(&t, Some(4)).unwrap().histogram;
        assert_eq!(h.counts(), &[1, 3]);
        assert!(load_histogram_table(&t, None).is_err());
        let off = "value,rate\n0,0.5\n1,0.75\n";
        let t = parse_table(Path::new("b.csv"), off).unwrap();
        assert!(load_histogram_table(&t, Some(100)).is_err());
    }

    #[test]
    fn grid_dump_lists_every_node_and_wire() {
        use crate::grid::{simulate_sample, ConeSpec, DelayModel};
        let spec = ConeSpec::new(3, 1);
        let s = simulate_sample(spec, &DelayModel::BinaryFairCoin, &mut crate::derive_stream(5, 0), true).unwrap();
        let grid = String::from_utf8(grid_csv(&s, &Metadata::tagged()).unwrap()).unwrap();
        let nodes: usize = (0..=3).map(|y| spec.layer_width(y)).sum();
        assert_eq!(grid.lines().filter(|l| !l.starts_with('#')).count(), nodes + 1);
        assert!(grid.contains(&format!("3,1,{}", s.top[1])));
        let wires = String::from_utf8(wires_csv(&s, &Metadata::tagged()).unwrap()).unwrap();
        assert_eq!(wires.lines().filter(|l| !l.starts_with('#')).count() as u64, spec.wire_count() + 1);
        let plain = simulate_sample(spec, &DelayModel::BinaryFairCoin, &mut crate::derive_stream(5, 0), false).unwrap();
        assert!(grid_csv(&plain, &Metadata::tagged()).is_err());
    }
}
