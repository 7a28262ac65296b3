//! Raw per-replicate records and the summary recomputed from them.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::{Cell, Method};
use crate::error::Result;

/// One scored (level, replicate, method, cell) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub scenario: String,
    pub level: usize,
    /// Grid value at `level` (rate or probit slope).
    pub param: f64,
    pub replicate: usize,
    pub method: Method,
    pub cell: Cell,
    /// Empty when the cell could not be fit (for example, no complete cases).
    pub oos_rmse: Option<f64>,
    /// `oos_rmse` over the replicate's reference oosRMSE, when a reference was fit.
    pub ratio: Option<f64>,
    /// Fraction of all rows (train and test) with at least one missing entry.
    pub row_missing_fraction: f64,
}

pub fn write_raw_csv<W: Write>(records: &[RawRecord], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for r in records {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_raw_csv<R: Read>(reader: R) -> Result<Vec<RawRecord>> {
    let mut input = csv::Reader::from_reader(reader);
    let records = input.deserialize().collect::<std::result::Result<Vec<RawRecord>, _>>()?;
    Ok(records)
}

/// Mean and standard error of the mean; `se` is absent below two values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub n: usize,
    pub mean: f64,
    pub se: Option<f64>,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(Self { n, mean, se })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub level: usize,
    pub param: f64,
    pub method: Method,
    pub cell: Cell,
    /// Replicates where the cell was unavailable.
    pub unavailable: usize,
    pub oos_rmse: Option<MeanSe>,
    pub ratio: Option<MeanSe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMissingness {
    pub level: usize,
    pub param: f64,
    /// Mean over replicates of the empirical row-missingness fraction.
    pub row_missing_fraction: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub rows: Vec<SummaryRow>,
    pub levels: Vec<LevelMissingness>,
}

impl Summary {
    pub fn row(&self, level: usize, method: Method, cell: Cell) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.level == level && r.method == method && r.cell == cell)
    }

    pub fn row_missing_fraction(&self, level: usize) -> Option<f64> {
        self.levels
            .iter()
            .find(|l| l.level == level)
            .map(|l| l.row_missing_fraction.mean)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

/// Groups records by (level, method, cell); values enter each mean in record order.
pub fn aggregate(records: &[RawRecord]) -> Summary {
    let scenario = records.first().map(|r| r.scenario.clone()).unwrap_or_default();
    let mut groups: BTreeMap<(usize, Method, Cell), Vec<&RawRecord>> = BTreeMap::new();
    // One missingness value per (level, replicate), whichever record carries it first.
    let mut fractions: BTreeMap<usize, (f64, BTreeMap<usize, f64>)> = BTreeMap::new();
    for r in records {
        groups.entry((r.level, r.method, r.cell)).or_default().push(r);
        let entry = fractions.entry(r.level).or_insert_with(|| (r.param, BTreeMap::new()));
        if r.method != Method::Reference {
            entry.1.entry(r.replicate).or_insert(r.row_missing_fraction);
        }
    }
    let rows = groups
        .into_iter()
        .map(|((level, method, cell), rs)| {
            let rmse: Vec<f64> = rs.iter().filter_map(|r| r.oos_rmse).collect();
            let ratio: Vec<f64> = rs.iter().filter_map(|r| r.ratio).collect();
            SummaryRow {
                level,
                param: rs[0].param,
                method,
                cell,
                unavailable: rs.len() - rmse.len(),
                oos_rmse: MeanSe::of(&rmse),
                ratio: MeanSe::of(&ratio),
            }
        })
        .collect();
    let levels = fractions
        .into_iter()
        .filter_map(|(level, (param, per_rep))| {
            let values: Vec<f64> = per_rep.into_values().collect();
            MeanSe::of(&values).map(|row_missing_fraction| LevelMissingness {
                level,
                param,
                row_missing_fraction,
            })
        })
        .collect();
    Summary { scenario, rows, levels }
}

/// Replicate-paired comparison of two cells' raw oosRMSE at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedComparison {
    /// Replicates where both cells are available.
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Mean of `b - a`.
    pub mean_diff: f64,
    /// Standard error of the mean per-replicate difference.
    pub paired_se: f64,
    /// `sqrt(se_a^2 + se_b^2)`, ignoring the pairing.
    pub unpaired_se: f64,
}

impl PairedComparison {
    /// Whether `a` beats `b` by at least `k` paired standard errors.
    pub fn a_better_by(&self, k: f64) -> bool {
        self.mean_diff > 0.0 && self.mean_diff >= k * self.paired_se
    }
}

pub fn compare(records: &[RawRecord], level: usize, a: (Method, Cell), b: (Method, Cell)) -> Option<PairedComparison> {
    let pick = |(method, cell): (Method, Cell)| -> BTreeMap<usize, f64> {
        records
            .iter()
            .filter(|r| r.level == level && r.method == method && r.cell == cell)
            .filter_map(|r| r.oos_rmse.map(|v| (r.replicate, v)))
            .collect()
    };
    let (ma, mb) = (pick(a), pick(b));
    let pairs: Vec<(f64, f64)> = ma.iter().filter_map(|(rep, &va)| mb.get(rep).map(|&vb| (va, vb))).collect();
    if pairs.len() < 2 {
        return None;
    }
    let sa = MeanSe::of(&pairs.iter().map(|p| p.0).collect::<Vec<_>>())?;
    let sb = MeanSe::of(&pairs.iter().map(|p| p.1).collect::<Vec<_>>())?;
    let d = MeanSe::of(&pairs.iter().map(|p| p.1 - p.0).collect::<Vec<_>>())?;
    Some(PairedComparison {
        n: pairs.len(),
        mean_a: sa.mean,
        mean_b: sb.mean,
        mean_diff: d.mean,
        paired_se: d.se?,
        unpaired_se: (sa.se?.powi(2) + sb.se?.powi(2)).sqrt(),
    })
}
