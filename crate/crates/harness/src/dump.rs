//! Images of the most and least often discarded samples of a run.

use std::fs;
use std::path::Path;

use dcg_core::filter::SampleSnapshot;
use dcg_core::{DomainId, SampleId};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::metrics::HistoryFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub id: SampleId,
    pub domain: DomainId,
    pub origin: String,
    /// `top` or `bottom`.
    pub rank: String,
    pub count: u64,
    pub file: String,
}

/// Binary PGM for one channel, PPM for three; values in `[0, 1]` map to bytes.
pub fn encode_image(s: &SampleSnapshot) -> Result<(Vec<u8>, &'static str)> {
    let (c, h, w) = (s.shape.channels, s.shape.height, s.shape.width);
    let (magic, ext) = match c {
        1 => ("P5", "pgm"),
        3 => ("P6", "ppm"),
        _ => return Err(HarnessError::Config(format!("cannot encode {c}-channel images"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    for p in 0..plane {
        for ch in 0..c {
            out.push((s.features[ch * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok((out, ext))
}

/// Writes the `n` samples with the most top-k and most bottom-k hits from
/// `run_dir/filter_history.json`, plus `index.json`.
pub fn dump_filtered(run_dir: &Path, out: &Path, n: usize) -> Result<Vec<DumpEntry>> {
    let file: HistoryFile = serde_json::from_str(&fs::read_to_string(run_dir.join("filter_history.json"))?)?;
    let counts: std::collections::HashMap<_, _> = file.counts.iter().cloned().collect();
    fs::create_dir_all(out)?;
    let mut entries = Vec::new();
    for bottom in [false, true] {
        let mut ranked: Vec<(&SampleSnapshot, u64)> = file
            .snapshots
            .iter()
            .map(|s| {
                let c = &counts[&s.id];
                (s, if bottom { c.bottom } else { c.top })
            })
            .filter(|(_, c)| *c > 0)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.id.cmp(&b.0.id)));
        let rank = if bottom { "bottom" } else { "top" };
        for (s, count) in ranked.into_iter().take(n) {
            let (bytes, ext) = encode_image(s)?;
            let name = format!("{rank}_{}.{ext}", s.id);
            fs::write(out.join(&name), bytes)?;
            entries.push(DumpEntry {
                id: s.id,
                domain: s.domain,
                origin: if s.augmented { "augmented" } else { "original" }.into(),
                rank: rank.into(),
                count,
                file: name,
            });
        }
    }
    fs::write(out.join("index.json"), serde_json::to_string_pretty(&entries)? + "\n")?;
    Ok(entries)
}
