//! Overlap between model attention maps and ground-truth ROI masks.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{read_png_gray, Manifest};
use crate::error::{Error, Result};

/// One line of the attention index: which map belongs to which sample and
/// attribute. Relative paths resolve against the index file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionEntry {
    pub id: String,
    pub attr: String,
    pub path: String,
}

/// Non-negative map on the image grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    /// `2 sum(A M) / (sum A + sum M)` with A scaled to peak 1.
    pub dice: f64,
    /// Share of attention mass inside the mask.
    pub mass_inside: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub mean_dice: f64,
    pub mean_mass_inside: f64,
    pub n: usize,
}

/// Scores one map against one mask of the same size.
pub fn overlap(attention: &AttentionMap, mask: &[bool]) -> Result<Overlap> {
    if attention.values.len() != mask.len() || attention.width * attention.height != mask.len() {
        return Err(Error::Metric(format!(
            "attention map is {}x{} ({} values) but the mask has {} pixels",
            attention.width,
            attention.height,
            attention.values.len(),
            mask.len()
        )));
    }
    if let Some(bad) = attention.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Metric(format!("attention values must be finite and non-negative, found {bad}")));
    }
    let peak = attention.values.iter().cloned().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let (mut both, mut att, mut m) = (0.0, 0.0, 0.0);
    for (&a, &inside) in attention.values.iter().zip(mask) {
        let a = a * scale;
        att += a;
        if inside {
            both += a;
            m += 1.0;
        }
    }
    let dice = if att + m > 0.0 { 2.0 * both / (att + m) } else { 1.0 };
    let mass_inside = if att > 0.0 { both / att } else { 0.0 };
    Ok(Overlap { dice, mass_inside })
}

pub fn read_attention_index(path: &Path) -> Result<Vec<AttentionEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", k + 1)))?);
    }
    Ok(out)
}

/// Loads a `.png` (scaled to [0,1]) or a 2-D `.npy` of f32/f64.
pub fn read_attention_map(path: &Path) -> Result<AttentionMap> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "png" => {
            let (width, height, values) = read_png_gray(path)?;
            Ok(AttentionMap { width, height, values })
        }
        "npy" => read_npy(path),
        _ => Err(Error::format(path, "attention maps must be .png or .npy")),
    }
}

fn read_npy(path: &Path) -> Result<AttentionMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let npy = npyz::NpyFile::new(&bytes[..]).map_err(|e| Error::format(path, e))?;
    let shape = npy.shape().to_vec();
    let [height, width] = shape[..] else {
        return Err(Error::format(path, format!("expected a 2-D array, got shape {shape:?}")));
    };
    if npy.order() != npyz::Order::C {
        return Err(Error::format(path, "Fortran-ordered arrays are not supported"));
    }
    let type_str = npy.dtype().descr();
    let values: Vec<f64> = if type_str.contains("f8") {
        npy.into_vec::<f64>().map_err(|e| Error::format(path, e))?
    } else if type_str.contains("f4") {
        npy.into_vec::<f32>()
            .map_err(|e| Error::format(path, e))?
            .into_iter()
            .map(f64::from)
            .collect()
    } else {
        return Err(Error::format(path, format!("unsupported dtype {type_str}; use float32 or float64")));
    };
    Ok(AttentionMap {
        width: width as usize,
        height: height as usize,
        values,
    })
}

/// Mean overlap per attribute for every index entry. Ground-truth masks are
/// read from the files the manifest references under `manifest_dir`.
pub fn attention_overlap(
    manifest: &Manifest,
    manifest_dir: &Path,
    entries: &[AttentionEntry],
    index_dir: &Path,
) -> Result<BTreeMap<String, AttentionSummary>> {
    let records = manifest.index();
    let mut sums: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for e in entries {
        let rec = records
            .get(e.id.as_str())
            .ok_or_else(|| Error::Metric(format!("attention entry for unknown sample {:?}", e.id)))?;
        let mask_rel = rec
            .masks
            .get(&e.attr)
            .ok_or_else(|| Error::Metric(format!("sample {:?} has no mask for attribute {:?}", e.id, e.attr)))?;
        let (mw, mh, mask) = read_png_gray(&manifest_dir.join(mask_rel))?;
        let mask: Vec<bool> = mask.iter().map(|&v| v > 0.5).collect();
        let map_path: PathBuf = index_dir.join(&e.path);
        let att = read_attention_map(&map_path)?;
        if (att.width, att.height) != (mw, mh) {
            return Err(Error::Metric(format!(
                "shape mismatch for {}/{}: attention {}x{}, mask {mw}x{mh}",
                e.id, e.attr, att.width, att.height
            )));
        }
        let o = overlap(&att, &mask)?;
        let s = sums.entry(e.attr.clone()).or_default();
        s.0 += o.dice;
        s.1 += o.mass_inside;
        s.2 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(attr, (d, m, n))| {
            (
                attr,
                AttentionSummary {
                    mean_dice: d / n as f64,
                    mean_mass_inside: m / n as f64,
                    n,
                },
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: Vec<f64>, w: usize) -> AttentionMap {
        AttentionMap { width: w, height: values.len() / w, values }
    }

    #[test]
    fn identical_attention_scores_one() {
        let mask = vec![false, true, true, false, true, false];
        let att = map(mask.iter().map(|&b| if b { 3.0 } else { 0.0 }).collect(), 3);
        let o = overlap(&att, &mask).unwrap();
        assert!((o.dice - 1.0).abs() < 1e-12);
        assert!((o.mass_inside - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_attention_mass_equals_area_fraction() {
        let mut mask = vec![false; 100];
        for m in mask.iter_mut().take(23) {
            *m = true;
        }
        let o = overlap(&map(vec![0.5; 100], 10), &mask).unwrap();
        assert!((o.mass_inside - 0.23).abs() < 1e-12);
    }

    #[test]
    fn disjoint_attention_scores_zero() {
        let mask = vec![true, true, false, false];
        let o = overlap(&map(vec![0.0, 0.0, 1.0, 1.0], 2), &mask).unwrap();
        assert_eq!(o.dice, 0.0);
        assert_eq!(o.mass_inside, 0.0);
    }

    #[test]
    fn shape_and_sign_checked() {
        assert!(overlap(&map(vec![1.0; 6], 3), &[true; 4]).is_err());
        assert!(overlap(&map(vec![-1.0, 0.0], 2), &[true, false]).is_err());
    }

    #[test]
    fn npy_f32_and_f64_load() {
        use npyz::WriterBuilder;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.npy");
        let mut buf = Vec::new();
        {
            let mut w = npyz::WriteOptions::<f32>::new()
                .default_dtype()
                .shape(&[2, 3])
                .writer(&mut buf)
                .begin_nd()
                .unwrap();
            w.extend([0.0f32, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
            w.finish().unwrap();
        }
        std::fs::write(&p, &buf).unwrap();
        let m = read_attention_map(&p).unwrap();
        assert_eq!((m.width, m.height), (3, 2));
        assert_eq!(m.values[5], 5.0);
        let mut buf = Vec::new();
        {
            let mut w = npyz::WriteOptions::<f64>::new()
                .default_dtype()
                .shape(&[1, 2])
                .writer(&mut buf)
                .begin_nd()
                .unwrap();
            w.extend([0.25f64, 0.5]).unwrap();
            w.finish().unwrap();
        }
        std::fs::write(&p, &buf).unwrap();
        assert_eq!(read_attention_map(&p).unwrap().values, vec![0.25, 0.5]);
    }
}
