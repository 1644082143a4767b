//! Dataset CSV files and their JSON sidecars.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::equilibrium::{Format, TruncationKind};
use crate::error::DataError;
use crate::simulator::{InfoStructure, ObservedDataset, ObservedRow};

pub const CSV_HEADER: [&str; 3] = ["auction_id", "transaction_price", "n_obs"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(rename = "L")]
    pub l: u64,
    #[serde(rename = "L_invalid")]
    pub l_invalid: Option<u64>,
    pub format: Format,
    pub truncation_kind: TruncationKind,
    pub info_structure: InfoStructure,
    pub seed: Option<u64>,
}

impl DatasetMeta {
    pub fn of(ds: &ObservedDataset, seed: Option<u64>) -> Self {
        Self {
            l: ds.len() as u64,
            l_invalid: ds.l_invalid,
            format: ds.format,
            truncation_kind: ds.truncation_kind,
            info_structure: ds.info,
            seed,
        }
    }
}

/// Shortest decimal rendering with 17 significant digits, in the style of `%.17g`.
pub fn format_sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific rendering");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let fixed = format!("{:.*}", (16 - exp) as usize, x);
        trim_fraction(&fixed).to_string()
    } else {
        format!("{}e{}", trim_fraction(mantissa), exp)
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Sidecar path for a dataset CSV: `data.csv` becomes `data.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

pub fn write_csv(ds: &ObservedDataset, path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", CSV_HEADER.join(",")).map_err(io_err(path))?;
    for r in &ds.rows {
        let n = r.n_obs.map(|n| n.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", r.auction_id, format_sig17(r.price), n).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_meta(meta: &DatasetMeta, path: &Path) -> Result<(), DataError> {
    let json = serde_json::to_string_pretty(meta)?;
    std::fs::write(path, json + "\n").map_err(io_err(path))
}

/// Writes the CSV and its sidecar.
pub fn write_dataset(ds: &ObservedDataset, csv_path: &Path, seed: Option<u64>) -> Result<(), DataError> {
    write_csv(ds, csv_path)?;
    write_meta(&DatasetMeta::of(ds, seed), &meta_path(csv_path))
}

pub fn read_meta(path: &Path) -> Result<DatasetMeta, DataError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_rows(path: &Path) -> Result<Vec<ObservedRow>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(DataError::Format(format!("expected header {:?}, found {:?}", CSV_HEADER, header)));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let bad = |what: &str| DataError::Format(format!("row {}: bad {what}", line + 2));
        let auction_id = field(0).parse().map_err(|_| bad("auction_id"))?;
        let price: f64 = field(1).parse().map_err(|_| bad("transaction_price"))?;
        if !price.is_finite() {
            return Err(bad("transaction_price"));
        }
        let n_obs = match field(2) {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("n_obs"))?),
        };
        rows.push(ObservedRow { auction_id, price, n_obs });
    }
    Ok(rows)
}

/// Reads a dataset CSV together with its sidecar.
pub fn read_dataset(csv_path: &Path) -> Result<(ObservedDataset, DatasetMeta), DataError> {
    let meta = read_meta(&meta_path(csv_path))?;
    let rows = read_rows(csv_path)?;
    if rows.len() as u64 != meta.l {
        return Err(DataError::Format(format!("sidecar declares L = {} but the CSV has {} rows", meta.l, rows.len())));
    }
    if meta.info_structure.observe_nobs && rows.iter().any(|r| r.n_obs.is_none()) {
        return Err(DataError::Format("n_obs is declared observed but missing in some rows".into()));
    }
    let ds = ObservedDataset {
        rows,
        l_invalid: meta.l_invalid,
        info: meta.info_structure,
        format: meta.format,
        truncation_kind: meta.truncation_kind,
    };
    Ok((ds, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_rendering() {
        assert_eq!(format_sig17(2.5), "2.5");
        assert_eq!(format_sig17(4.0), "4");
        assert_eq!(format_sig17(0.1), "0.10000000000000001");
        assert_eq!(format_sig17(1e-7), "9.9999999999999995e-8");
        for x in [0.123_456_789_012_345_67, 1.0 / 3.0, 12345.678, 3e-9, 7e21] {
            assert_eq!(format_sig17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn round_trip() {
        let ds = ObservedDataset {
            rows: vec![
                ObservedRow { auction_id: 0, price: 1.0 / 3.0, n_obs: Some(2) },
                ObservedRow { auction_id: 2, price: 0.5, n_obs: Some(1) },
            ],
            l_invalid: Some(1),
            info: InfoStructure::PRICE_ONLY.with_nobs().with_invalid_count(),
            format: Format::SecondPrice,
            truncation_kind: TruncationKind::Reserve,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_dataset(&ds, &path, Some(7)).unwrap();
        let (back, meta) = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(meta.seed, Some(7));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("auction_id,transaction_price,n_obs\n"));
    }

    #[test]
    fn missing_nobs_written_empty() {
        let ds = ObservedDataset {
            rows: vec![ObservedRow { auction_id: 5, price: 0.75, n_obs: None }],
            l_invalid: None,
            info: InfoStructure::PRICE_ONLY,
            format: Format::FirstPrice,
            truncation_kind: TruncationKind::EntryCost,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&ds, &path, None).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "auction_id,transaction_price,n_obs\n5,0.75,\n");
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(meta_path(&path)).unwrap()).unwrap();
        assert!(meta["L_invalid"].is_null());
        assert_eq!(read_dataset(&path).unwrap().0, ds);
    }

    #[test]
    fn rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,price\n1,2\n").unwrap();
        assert!(matches!(read_rows(&path), Err(DataError::Format(_))));
    }
}
