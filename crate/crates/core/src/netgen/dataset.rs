//! Line-delimited layout dataset files.
//!
//! The first line is a header object identifying the format; every following
//! line is one layout record:
//!
//! ```text
//! {"format":"linksched-layouts","version":1}
//! {"L":2,"d_area":500.0,"d_min":2.0,"d_max":65.0,"seed":17,"shadowing_std":0.0,
//!  "tx":[[x,y],[x,y]],"rx":[[x,y],[x,y]],"label":[1,0],"oracle":{"kind":"greedy","params":{}}}
//! ```
//!
//! Coordinates are written as shortest round-trip decimals, so reading a file
//! back reproduces every coordinate bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layout::{LayoutConfig, NetworkLayout, Point};
use super::rate::ScheduleVector;
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "linksched-layouts";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
}

impl Default for DatasetHeader {
    fn default() -> Self {
        Self { format: FORMAT_NAME.to_string(), version: FORMAT_VERSION }
    }
}

/// Which oracle produced a label, and with which parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleProvenance {
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

/// On-disk form of one layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRecord {
    #[serde(rename = "L")]
    pub num_pairs: usize,
    pub d_area: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub seed: u64,
    #[serde(default)]
    pub shadowing_std: f64,
    pub tx: Vec<[f64; 2]>,
    pub rx: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleProvenance>,
}

/// In-memory dataset entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub layout: NetworkLayout,
    pub shadowing_std: f64,
    pub label: Option<ScheduleVector>,
    pub oracle: Option<OracleProvenance>,
}

impl DatasetEntry {
    pub fn unlabeled(layout: NetworkLayout, shadowing_std: f64) -> Self {
        Self { layout, shadowing_std, label: None, oracle: None }
    }

    pub fn to_record(&self) -> LayoutRecord {
        let cfg = &self.layout.config;
        LayoutRecord {
            num_pairs: cfg.num_pairs,
            d_area: cfg.area,
            d_min: cfg.d_min,
            d_max: cfg.d_max,
            seed: cfg.seed,
            shadowing_std: self.shadowing_std,
            tx: self.layout.tx.iter().map(|p| [p.x, p.y]).collect(),
            rx: self.layout.rx.iter().map(|p| [p.x, p.y]).collect(),
            label: self.label.as_ref().map(ScheduleVector::to_bits),
            oracle: self.oracle.clone(),
        }
    }

    pub fn from_record(rec: LayoutRecord) -> Result<Self> {
        let config = LayoutConfig {
            num_pairs: rec.num_pairs,
            area: rec.d_area,
            d_min: rec.d_min,
            d_max: rec.d_max,
            seed: rec.seed,
        };
        let to_points = |v: &[[f64; 2]]| v.iter().map(|p| Point::new(p[0], p[1])).collect::<Vec<_>>();
        let layout = NetworkLayout::from_positions(config, to_points(&rec.tx), to_points(&rec.rx))?;
        let label = match rec.label {
            Some(bits) => {
                if bits.len() != rec.num_pairs {
                    return Err(Error::Input(format!(
                        "label has {} entries for {} pairs",
                        bits.len(),
                        rec.num_pairs
                    )));
                }
                Some(ScheduleVector::from_bits(&bits)?)
            }
            None => None,
        };
        if !(rec.shadowing_std >= 0.0) {
            return Err(Error::Input("negative shadowing deviation".into()));
        }
        Ok(Self { layout, shadowing_std: rec.shadowing_std, label, oracle: rec.oracle })
    }
}

pub fn write_dataset<W: Write>(mut out: W, entries: &[DatasetEntry]) -> Result<()> {
    serde_json::to_writer(&mut out, &DatasetHeader::default())?;
    out.write_all(b"\n")?;
    for e in entries {
        serde_json::to_writer(&mut out, &e.to_record())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Vec<DatasetEntry>> {
    let mut lines = input.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Input("dataset is empty (missing header)".into()))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(Error::Input(format!(
            "unsupported dataset format {} v{}",
            header.format, header.version
        )));
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LayoutRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("record {}: {e}", i + 1)))?;
        entries.push(DatasetEntry::from_record(rec)?);
    }
    Ok(entries)
}

pub fn save_dataset(path: &Path, entries: &[DatasetEntry]) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), entries)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetEntry>> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::layout::generate_layouts;
    use proptest::prelude::*;

    #[test]
    fn empty_dataset_has_only_header() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(read_dataset(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn missing_header_is_rejected() {
        assert!(read_dataset(&b""[..]).is_err());
        assert!(read_dataset(&b"{\"format\":\"other\",\"version\":1}\n"[..]).is_err());
    }

    #[test]
    fn label_length_is_checked() {
        let layouts = generate_layouts(&LayoutConfig { num_pairs: 3, ..Default::default() }, 1).unwrap();
        let mut rec = DatasetEntry::unlabeled(layouts[0].clone(), 0.0).to_record();
        rec.label = Some(vec![1, 0]);
        assert!(DatasetEntry::from_record(rec).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn records_round_trip_bit_exact(seed in any::<u64>(), n in 1usize..12, labeled in any::<bool>()) {
            let cfg = LayoutConfig { num_pairs: n, seed, ..Default::default() };
            let layouts = generate_layouts(&cfg, 2).unwrap();
            let entries: Vec<_> = layouts
                .into_iter()
                .map(|l| {
                    let mut e = DatasetEntry::unlabeled(l, 3.0);
                    if labeled {
                        e.label = Some(ScheduleVector::new((0..n).map(|i| i % 2 == 0).collect()));
                    }
                    e
                })
                .collect();
            let mut buf = Vec::new();
            write_dataset(&mut buf, &entries).unwrap();
            let back = read_dataset(&buf[..]).unwrap();
            prop_assert_eq!(back, entries);
        }
    }
}
