//! Batch generation: random datasets, single-attribute sweeps, two-attribute
//! grids, manifests and histograms.
//!
//! Output layout under the chosen directory:
//!
//! ```text
//! images/{id}.png
//! masks/{id}_{attr}_mask.png
//! manifest.jsonl
//! config.resolved
//! stats.json
//! ```
//!
//! A `.partial` marker exists while files are being written and is removed
//! only after the manifest is complete.

mod io;
mod manifest;
mod stats;

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

pub use io::{read_png_gray, write_mask_png, write_pgm, write_png};
pub use manifest::{read_manifest, write_manifest, Manifest, SampleRecord, Split, SplitCounts, SweepInfo};
pub use stats::{histogram, Histogram};

use crate::config::{serialize_config, DatasetConfig, SamplingConfig, SplitConfig};
use crate::error::{Error, Result};
use crate::par::{try_map_indexed, Jobs};
use crate::render::{Renderer, Jitter, NoduleGeometry};
use crate::rng::{mix, sample_seed, stream, Stream};
use crate::schema::{AttributeSchema, AttributeVector, RenderRole};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CONFIG_FILE: &str = "config.resolved";
pub const STATS_FILE: &str = "stats.json";
pub const PARTIAL_MARKER: &str = ".partial";

/// Draws each attribute independently, uniformly over its scale unless
/// `sampling` assigns it categorical weights. Attributes are drawn in schema
/// order.
pub fn sample_attributes<R: Rng + ?Sized>(
    rng: &mut R,
    schema: &AttributeSchema,
    sampling: &SamplingConfig,
) -> AttributeVector {
    let mut v = AttributeVector::new();
    for def in schema.attributes() {
        let value = match sampling.weights.get(&def.id) {
            Some(w) => {
                let dist = WeightedIndex::new(w).expect("weights validated with the config");
                def.scale.min() + dist.sample(rng) as i32
            }
            None => rng.random_range(def.scale.values()),
        };
        v.set(&def.id, value);
    }
    v
}

/// Attribute vector of the `index`-th sample of a random dataset.
pub fn attributes_for(config: &DatasetConfig, seed: u64) -> AttributeVector {
    sample_attributes(&mut stream(seed, Stream::Attributes), &config.schema, &config.sampling)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerateOptions {
    pub jobs: Jobs,
    /// Also write `images/{id}.pgm`.
    pub pgm: bool,
}

/// One sample to be rendered.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSample {
    pub id: String,
    pub attributes: AttributeVector,
    pub seed: u64,
    pub split: Split,
    pub sweep: Option<SweepInfo>,
}

/// Two-attribute grid request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub attr_a: String,
    pub attr_b: String,
    /// Value of every other ordinal attribute.
    pub fixed: i32,
    /// Value of every other binary attribute.
    pub binary_fixed: i32,
}

impl GridSpec {
    pub fn new(attr_a: &str, attr_b: &str, fixed: i32) -> Self {
        Self {
            attr_a: attr_a.to_string(),
            attr_b: attr_b.to_string(),
            fixed,
            binary_fixed: 0,
        }
    }
}

/// Exact split sizes for `n` records, apportioned by largest remainder
/// (ties go to train, then val, then test).
pub fn split_counts(splits: &SplitConfig, n: usize) -> SplitCounts {
    let parts = [splits.train, splits.val, splits.test];
    let total: f64 = parts.iter().sum();
    let quotas: Vec<f64> = parts.iter().map(|p| p / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    SplitCounts {
        train: counts[0],
        val: counts[1],
        test: counts[2],
    }
}

/// Ranks ids by a seeded hash and hands out exact split counts in that order.
pub fn assign_splits(ids: &[String], master_seed: u64, splits: &SplitConfig) -> Vec<Split> {
    let counts = split_counts(splits, ids.len());
    let mut order: Vec<(u64, usize)> = ids
        .iter()
        .enumerate()
        .map(|(k, id)| (mix(master_seed ^ Stream::Split as u64, fnv1a(id.as_bytes())), k))
        .collect();
    order.sort_unstable();
    let mut out = vec![Split::Test; ids.len()];
    for (rank, &(_, k)) in order.iter().enumerate() {
        out[k] = if rank < counts.train {
            Split::Train
        } else if rank < counts.train + counts.val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn sample_id(index: usize) -> String {
    format!("{index:06}")
}

/// Plan for `n` random samples: sample `k` uses seed `mix(master, k)`.
pub fn plan_random(config: &DatasetConfig, n: usize) -> Result<Vec<PlannedSample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("count must be positive".into()));
    }
    let ids: Vec<String> = (0..n).map(sample_id).collect();
    let splits = assign_splits(&ids, config.seed, &config.splits);
    Ok(ids
        .into_iter()
        .zip(splits)
        .enumerate()
        .map(|(k, (id, split))| {
            let seed = sample_seed(config.seed, k as u64);
            PlannedSample {
                id,
                attributes: attributes_for(config, seed),
                seed,
                split,
                sweep: None,
            }
        })
        .collect())
}

/// One base vector drawn from `base_seed`, then one sample per value of
/// `attr`. Every member keeps the base seed, so pose, texture placement and
/// noise are shared.
pub fn plan_sweep(config: &DatasetConfig, base_seed: u64, base_id: &str, attr: &str) -> Result<Vec<PlannedSample>> {
    let def = config
        .schema
        .attribute(attr)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown attribute {attr:?}")))?;
    let base = attributes_for(config, base_seed);
    Ok(def
        .scale
        .values()
        .map(|value| PlannedSample {
            id: format!("{base_id}_{attr}{value}"),
            attributes: base.clone().with(attr, value),
            seed: base_seed,
            split: Split::Test,
            sweep: Some(SweepInfo {
                attr: attr.to_string(),
                base_id: base_id.to_string(),
                attr_b: None,
            }),
        })
        .collect())
}

pub fn plan_sweep_population(config: &DatasetConfig, attr: &str, per_value: usize) -> Result<Vec<PlannedSample>> {
    if per_value == 0 {
        return Err(Error::InvalidArgument("samples per value must be positive".into()));
    }
    let mut out = Vec::new();
    for j in 0..per_value {
        let base_id = format!("b{j:05}");
        out.extend(plan_sweep(config, sample_seed(config.seed, j as u64), &base_id, attr)?);
    }
    Ok(out)
}

/// One sample per `(a, b)` value pair with everything else pinned. All
/// samples share one seed.
pub fn plan_grid(config: &DatasetConfig, spec: &GridSpec) -> Result<Vec<PlannedSample>> {
    let schema = &config.schema;
    let lookup = |id: &str| {
        schema
            .attribute(id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown attribute {id:?}")))
    };
    let (da, db) = (lookup(&spec.attr_a)?, lookup(&spec.attr_b)?);
    if da.id == db.id {
        return Err(Error::InvalidArgument("grid attributes must differ".into()));
    }
    let mut base = AttributeVector::new();
    for def in schema.attributes() {
        if def.id == da.id || def.id == db.id {
            continue;
        }
        let value = if def.scale.is_binary() { spec.binary_fixed } else { spec.fixed };
        if !def.scale.contains(value) {
            return Err(Error::InvalidArgument(format!(
                "invalid fixed value {value} for attribute {} (scale {}..{})",
                def.id,
                def.scale.min(),
                def.scale.max()
            )));
        }
        base.set(&def.id, value);
    }
    let seed = sample_seed(config.seed, 0);
    let mut out = Vec::new();
    for vb in db.scale.values() {
        for va in da.scale.values() {
            out.push(PlannedSample {
                id: format!("grid_{}{va}_{}{vb}", da.id, db.id),
                attributes: base.clone().with(&da.id, va).with(&db.id, vb),
                seed,
                split: Split::Test,
                sweep: Some(SweepInfo {
                    attr: da.id.clone(),
                    base_id: "grid".into(),
                    attr_b: Some(db.id.clone()),
                }),
            });
        }
    }
    Ok(out)
}

/// Fails if the largest size and spiculation levels overflow the canvas.
pub fn check_canvas(config: &DatasetConfig) -> Result<()> {
    let mut worst = AttributeVector::new();
    for def in config.schema.attributes() {
        let value = match def.role {
            RenderRole::Size | RenderRole::Spiculation => def.scale.max(),
            _ => def.scale.min(),
        };
        worst.set(&def.id, value);
    }
    let jitter = Jitter::from_seed(0);
    let g: NoduleGeometry = Renderer::new(config).geometry(&worst, &jitter);
    let room = config.image.width.min(config.image.height) as f64 / 2.0 - 1.0;
    if g.extent() > room {
        // Same diagnostics as a real render.
        Renderer::new(config).masks_only(&worst, 0)?;
    }
    Ok(())
}

/// Renders `plan` into `out_dir` and writes the manifest, resolved config and
/// stats. Records come back in plan order regardless of `opts.jobs`.
pub fn write_dataset(
    config: &DatasetConfig,
    plan: Vec<PlannedSample>,
    out_dir: &Path,
    opts: GenerateOptions,
) -> Result<Manifest> {
    config.validate()?;
    check_canvas(config)?;
    for p in &plan {
        crate::schema::check_vector(&config.schema, &p.attributes)?;
    }

    let images = out_dir.join("images");
    let masks = out_dir.join("masks");
    for dir in [out_dir, images.as_path(), masks.as_path()] {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let marker = out_dir.join(PARTIAL_MARKER);
    std::fs::write(&marker, b"generation in progress\n").map_err(|e| Error::io(&marker, e))?;

    let renderer = Renderer::new(config);
    let channels = config.image.channels;
    let records = try_map_indexed(plan.len(), opts.jobs, |k| {
        let p = &plan[k];
        let sample = renderer.render(&p.attributes, p.seed)?;
        let (w, h) = (sample.image.width(), sample.image.height());
        let pixels = sample.image.to_u8();
        let image_rel = format!("images/{}.png", p.id);
        write_png(&out_dir.join(&image_rel), w, h, &pixels, channels)?;
        if opts.pgm {
            write_pgm(&out_dir.join(format!("images/{}.pgm", p.id)), w, h, &pixels)?;
        }
        let mut mask_paths = std::collections::BTreeMap::new();
        for (attr, mask) in &sample.masks {
            let rel = format!("masks/{}_{}_mask.png", p.id, attr);
            write_mask_png(&out_dir.join(&rel), mask)?;
            mask_paths.insert(attr.clone(), rel);
        }
        Ok::<_, Error>(SampleRecord {
            id: p.id.clone(),
            seed: p.seed,
            split: p.split,
            attrs: p.attributes.clone(),
            target: sample.annotations.target,
            image: image_rel,
            masks: mask_paths,
            sweep: p.sweep.clone(),
        })
    })?;

    let resolved = serialize_config(config);
    let manifest = Manifest {
        fingerprint: Some(config.fingerprint()),
        records,
    };
    let config_path = out_dir.join(CONFIG_FILE);
    std::fs::write(&config_path, &resolved).map_err(|e| Error::io(&config_path, e))?;
    write_manifest(&out_dir.join(MANIFEST_FILE), &manifest)?;
    let stats = histogram(&manifest, &config.schema, &config.rule);
    stats.write_json(&out_dir.join(STATS_FILE))?;
    std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(manifest)
}

/// Random dataset of `n` samples.
pub fn generate(config: &DatasetConfig, n: usize, out_dir: &Path, opts: GenerateOptions) -> Result<Manifest> {
    let plan = plan_random(config, n)?;
    write_dataset(config, plan, out_dir, opts)
}

pub fn generate_sweep(
    config: &DatasetConfig,
    base_seed: u64,
    attr: &str,
    out_dir: &Path,
    opts: GenerateOptions,
) -> Result<Manifest> {
    let plan = plan_sweep(config, base_seed, "base", attr)?;
    write_dataset(config, plan, out_dir, opts)
}

pub fn generate_sweep_population(
    config: &DatasetConfig,
    attr: &str,
    per_value: usize,
    out_dir: &Path,
    opts: GenerateOptions,
) -> Result<Manifest> {
    let plan = plan_sweep_population(config, attr, per_value)?;
    write_dataset(config, plan, out_dir, opts)
}

pub fn generate_grid(config: &DatasetConfig, spec: &GridSpec, out_dir: &Path, opts: GenerateOptions) -> Result<Manifest> {
    let plan = plan_grid(config, spec)?;
    write_dataset(config, plan, out_dir, opts)
}
