//! On-disk layout of generated datasets.
//!
//! ```text
//! datasets/manifest.json
//! datasets/<split>/branch.csv      one row per sample, columns s<k>_<j>
//! datasets/<split>/targets.csv     sample,time,target,stderr
//! datasets/<split>/functions.json  the recovery function sets
//! ```

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{assemble, GeneratedData, Split};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::io::{read_json, read_table, write_json, write_table};
use crate::operator::InputEncoding;
use crate::recovery::RecoveryFunctionSet;
use crate::sos::RecoveryCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub n_samples: usize,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub encoding: InputEncoding,
    pub mc_realizations: usize,
    pub train: Option<SplitManifest>,
    pub test: Option<SplitManifest>,
}

pub fn write_split(dir: &Path, split: Split, data: &GeneratedData) -> Result<()> {
    let dir = dir.join(split.as_str());
    let enc = data.dataset.encoding();
    let header: Vec<String> = (0..enc.n_systems)
        .flat_map(|k| (0..enc.sensors.len()).map(move |j| format!("s{k}_{j}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(
        &dir.join("branch.csv"),
        &header,
        data.dataset.branch().rows().into_iter().map(|r| r.to_vec()),
    )?;
    write_table(
        &dir.join("targets.csv"),
        &["sample", "time", "target", "stderr"],
        data.curves.iter().enumerate().flat_map(|(k, c)| {
            c.grid.times().iter().enumerate().map(move |(j, &t)| {
                let se = c.stderr.as_ref().map_or(0.0, |s| s[j]);
                vec![k as f64, t, c.values[j], se]
            })
        }),
    )?;
    write_json(&dir.join("functions.json"), &data.sets)
}

/// Reads a split written by [`write_split`].
pub fn read_split(dir: &Path, split: Split, encoding: &InputEncoding) -> Result<GeneratedData> {
    let dir = dir.join(split.as_str());
    let sets: Vec<RecoveryFunctionSet> = read_json(&dir.join("functions.json"))?;
    let (_, rows) = read_table(&dir.join("branch.csv"))?;
    let width = encoding.branch_dim();
    if rows.len() != sets.len() || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Data(format!(
            "{}: branch table does not match {} samples of width {width}",
            dir.display(),
            sets.len()
        )));
    }
    let (_, target_rows) = read_table(&dir.join("targets.csv"))?;
    let mut per_sample: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = vec![Default::default(); sets.len()];
    for row in target_rows {
        let &[k, t, v, se] = row.as_slice() else {
            return Err(Error::Data(format!("{}: targets need 4 columns", dir.display())));
        };
        let k = k as usize;
        let entry = per_sample
            .get_mut(k)
            .ok_or_else(|| Error::Data(format!("target row for missing sample {k}")))?;
        entry.0.push(t);
        entry.1.push(v);
        entry.2.push(se);
    }
    let curves = per_sample
        .into_iter()
        .map(|(t, v, se)| {
            Ok(RecoveryCurve {
                grid: TimeGrid::from_times(t)?,
                values: v,
                stderr: Some(se),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = assemble(encoding.clone(), &sets, &curves)?;
    let branch = Array2::from_shape_vec((rows.len(), width), rows.concat())
        .map_err(|e| Error::Shape(e.to_string()))?;
    if branch != *dataset.branch() {
        return Err(Error::Data(format!(
            "{}: branch table disagrees with functions.json",
            dir.display()
        )));
    }
    Ok(GeneratedData {
        dataset,
        sets,
        curves,
    })
}

pub fn read_manifest(dataset_dir: &Path) -> Result<DatasetManifest> {
    read_json(&dataset_dir.join("manifest.json"))
}
