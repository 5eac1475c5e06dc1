//! Acceptance criteria 1-10, one result line each. Criterion 10 is a soft
//! timing signal and never fails the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use funnynodules::dataset::read_png_gray;
use funnynodules::eval::trust_index;
use funnynodules::par::map_indexed;
use funnynodules::rng::{sample_seed, splitmix64};
use funnynodules::{default_rule, AttributeVector, DatasetConfig, Jobs, Renderer};
use serde_json::Value;

type Check = Result<String, String>;

/// Name, whether failure gates the run, and the check itself.
type Criterion<'a> = (&'static str, bool, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cli(args: &[&str], cwd: &Path) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_funnynodules"))
        .args(args)
        .env_remove("FUNNYNODULES_JOBS")
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
    }
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

fn vector(values: [i32; 6]) -> AttributeVector {
    AttributeVector::from_pairs(["r", "sp", "es", "s", "i", "is"].into_iter().zip(values))
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn table_pairs() -> Check {
    // (r, sp, es, s, i, is) -> target, as annotated in the sample figure.
    let cases = [
        ([3, 1, 1, 1, 1, 1], 1),
        ([3, 4, 4, 3, 3, 0], 2),
        ([1, 1, 1, 5, 3, 1], 4),
        ([4, 4, 4, 4, 1, 0], 5),
        ([3, 5, 4, 5, 2, 0], 4),
        ([2, 1, 2, 4, 5, 1], 4),
    ];
    let start = Instant::now();
    let rule = default_rule();
    let mut hits = 0;
    for (v, want) in cases {
        let got = rule.evaluate(&vector(v)).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{v:?}: got {got}, want {want}"))?;
        hits += 1;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), || format!("took {t:?}"))?;
    Ok(format!("{hits}/6 pairs in {t:?}"))
}

fn sign_flip(work: &Path) -> Check {
    cli(&["grid", "--grid", "r", "is", "--fixed", "3", "-o", "grid", "--jobs", "0"], work)?;
    let csv = std::fs::read_to_string(work.join("grid/curves.csv")).map_err(|e| e.to_string())?;
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        rows.entry(f[0].to_string()).or_default().push(f[2].parse().unwrap());
    }
    let is0 = rows.get("r|is=0").cloned().unwrap_or_default();
    let is1 = rows.get("r|is=1").cloned().unwrap_or_default();
    ensure(is0 == [1.0, 1.0, 2.0, 3.0, 3.0], || format!("is=0 row {is0:?}"))?;
    ensure(is1 == [3.0, 3.0, 2.0, 1.0, 1.0], || format!("is=1 row {is1:?}"))?;
    Ok(format!("is=0 {is0:?}, is=1 {is1:?}"))
}

fn trust_arithmetic() -> Check {
    let ti = trust_index(1.0, &[0.998]).map_err(|e| e.to_string())?;
    ensure((ti - 0.002).abs() <= 1e-3, || format!("TI(1.0, 0.998) = {ti}"))?;
    let mut state = 0x5eed_u64;
    let mut unit = || {
        state = splitmix64(state);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = 0.05 + 0.95 * unit();
        let a = unit();
        let ti = trust_index(p, &[a]).map_err(|e| e.to_string())?;
        worst = worst.max(((p - ti) * p - a).abs());
    }
    ensure(worst <= 1e-12, || format!("inverse error {worst:e}"))?;
    Ok(format!("TI = {ti:.6}, max inverse error {worst:.1e} over 1000 pairs"))
}

fn determinism(work: &Path) -> Check {
    cli(&["generate", "-n", "500", "-o", "run1", "--jobs", "1"], work)?;
    cli(&["generate", "-n", "500", "-o", "run8", "--jobs", "8"], work)?;
    let a = files_under(&work.join("run1"));
    let b = files_under(&work.join("run8"));
    ensure(a == b, || "file sets differ".into())?;
    ensure(a.len() == 500 + 6 * 500 + 3, || format!("{} files", a.len()))?;
    for f in &a {
        let x = std::fs::read(work.join("run1").join(f)).unwrap();
        let y = std::fs::read(work.join("run8").join(f)).unwrap();
        ensure(x == y, || format!("{} differs", f.display()))?;
    }

    // Sample 250 rendered on its own must match the batch output.
    let config = DatasetConfig::default();
    let seed = sample_seed(config.seed, 250);
    let manifest = std::fs::read_to_string(work.join("run1/manifest.jsonl")).unwrap();
    let rec: Value = serde_json::from_str(manifest.lines().nth(250).unwrap()).unwrap();
    ensure(rec["id"] == "000250" && rec["seed"].as_u64() == Some(seed), || format!("record {rec}"))?;
    let attrs: AttributeVector = serde_json::from_value(rec["attrs"].clone()).unwrap();
    let alone = Renderer::new(&config).render(&attrs, seed).map_err(|e| e.to_string())?;
    let (_, _, pixels) = read_png_gray(&work.join("run1/images/000250.png")).map_err(|e| e.to_string())?;
    let batch: Vec<u8> = pixels.iter().map(|v| (v * 255.0).round() as u8).collect();
    ensure(alone.image.to_u8() == batch, || "sample 250 differs when rendered alone".into())?;
    Ok(format!("{} files identical across --jobs 1/8; sample 250 reproduced alone", a.len()))
}

fn mask_invariants() -> Check {
    let mut config = DatasetConfig::default();
    config.image.height = 64;
    config.image.width = 64;
    let grid: Vec<AttributeVector> = config.schema.grid().collect();
    ensure(grid.len() == 6250, || format!("grid has {} vectors", grid.len()))?;
    let seeds = [sample_seed(1, 0), sample_seed(1, 1), sample_seed(1, 2)];
    let start = Instant::now();
    let renderer = Renderer::new(&config);
    // (ring pixels, nodule pixels, violations) per (vector, seed).
    let results = map_indexed(grid.len() * seeds.len(), Jobs::ALL, |k| {
        let (v, seed) = (&grid[k / 3], seeds[k % 3]);
        let g = renderer.regions_for(v, seed).expect("grid vectors fit the canvas");
        let mut bad = Vec::new();
        if !g.internal.is_subset_of(&g.nodule) {
            bad.push("internal outside nodule");
        }
        if g.spiculation.intersects(&g.ellipse) {
            bad.push("spiculation inside ellipse");
        }
        if v.get("sp") == Some(1) && !g.spiculation.is_empty() {
            bad.push("sp=1 with spiculation pixels");
        }
        if v.get("is") == Some(0) && !g.internal.is_empty() {
            bad.push("is=0 with internal pixels");
        }
        (g.edge_ring.count(), g.nodule.count(), bad)
    });
    let mut violations = 0;
    let mut first = None;
    let key = |v: &AttributeVector, drop: &str| {
        let mut v = v.clone();
        v.remove(drop);
        v.to_string()
    };
    let mut ring: BTreeMap<(String, usize), Vec<(i32, usize)>> = BTreeMap::new();
    let mut area: BTreeMap<(String, usize), Vec<(i32, usize)>> = BTreeMap::new();
    for (k, (ring_px, nodule_px, bad)) in results.iter().enumerate() {
        let v = &grid[k / 3];
        if !bad.is_empty() {
            violations += bad.len();
            first.get_or_insert_with(|| format!("{v} seed #{}: {bad:?}", k % 3));
        }
        ring.entry((key(v, "es"), k % 3)).or_default().push((v.get("es").unwrap(), *ring_px));
        area.entry((key(v, "s"), k % 3)).or_default().push((v.get("s").unwrap(), *nodule_px));
    }
    for (name, families) in [("ring thickness vs es", &mut ring), ("nodule area vs s", &mut area)] {
        for (fam, points) in families.iter_mut() {
            points.sort();
            if !points.windows(2).all(|w| w[0].1 < w[1].1) {
                violations += 1;
                first.get_or_insert_with(|| format!("{name} not increasing for {} seed #{}: {points:?}", fam.0, fam.1));
            }
        }
    }
    let t = start.elapsed();
    ensure(violations == 0, || format!("{violations} violations, first: {}", first.unwrap_or_default()))?;
    ensure(t < Duration::from_secs(600), || format!("took {t:?}"))?;
    Ok(format!("{} renders, 0 violations in {t:.1?}", results.len()))
}

fn shading_separation() -> Check {
    let config = DatasetConfig::default();
    let renderer = Renderer::new(&config);
    let bad = map_indexed(100, Jobs::ALL, |k| {
        let seed = sample_seed(2024, k as u64);
        let base = funnynodules::dataset::attributes_for(&config, seed);
        let first = renderer.masks_only(&base.clone().with("i", 1), seed).unwrap();
        (2..=5)
            .filter(|&i| renderer.masks_only(&base.clone().with("i", i), seed).unwrap() != first)
            .count()
    })
    .into_iter()
    .sum::<usize>();
    ensure(bad == 0, || format!("{bad} intensity values changed masks"))?;
    Ok("100 bases x 5 intensities, masks identical".into())
}

fn reachability() -> Check {
    let start = Instant::now();
    let rule = default_rule();
    let reachable = rule.reachable_targets().map_err(|e| e.to_string())?;
    for class in 1..=5 {
        let w = reachable.get(&class).ok_or(format!("class {class} unreachable"))?;
        let again = rule.evaluate(w).map_err(|e| e.to_string())?;
        ensure(again == class, || format!("witness {w} evaluates to {again}, not {class}"))?;
    }
    // Independent sweep over the full grid.
    let mut seen = [false; 6];
    for v in rule.schema().grid() {
        seen[rule.evaluate(&v).unwrap() as usize] = true;
    }
    ensure(seen[1..].iter().all(|&s| s), || format!("brute force saw {seen:?}"))?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), || format!("took {t:?}"))?;
    Ok(format!("classes 1-5 reachable, witnesses verified in {t:?}"))
}

/// Smallest k with P(X <= k) >= q for X ~ Binomial(n, p).
fn binomial_quantile(n: u64, p: f64, q: f64) -> u64 {
    let mut log_pmf = n as f64 * (1.0 - p).ln();
    let mut cdf = 0.0;
    for k in 0..=n {
        if k > 0 {
            log_pmf += ((n - k + 1) as f64).ln() - (k as f64).ln() + p.ln() - (1.0 - p).ln();
        }
        cdf += log_pmf.exp();
        if cdf >= q {
            return k;
        }
    }
    n
}

fn histogram_sanity(work: &Path) -> Check {
    cli(&["stats", "-m", "run1/manifest.jsonl", "-o", "stats"], work)?;
    let stats = read_json(&work.join("stats/stats.json"))?;
    let (lo, hi) = (binomial_quantile(500, 0.2, 0.0005), binomial_quantile(500, 0.2, 0.9995));
    for (id, counts) in stats["attributes"].as_object().unwrap() {
        if id == "is" {
            continue;
        }
        for (value, c) in counts.as_object().unwrap() {
            let c = c.as_u64().unwrap();
            ensure((lo..=hi).contains(&c), || format!("{id}={value}: {c} outside [{lo},{hi}]"))?;
        }
    }
    let target: BTreeMap<String, u64> = serde_json::from_value(stats["target"].clone()).unwrap();
    ensure(target.len() == 5 && target.values().all(|&c| c > 0), || format!("targets {target:?}"))?;
    Ok(format!("ordinal counts within [{lo},{hi}], targets {:?}", target.values().collect::<Vec<_>>()))
}

fn metric_fixed_points(work: &Path) -> Check {
    cli(&["generate", "-n", "60", "-o", "oracle"], work)?;
    let dir = work.join("oracle");
    let manifest = std::fs::read_to_string(dir.join("manifest.jsonl")).unwrap();
    let mut preds = String::new();
    let mut index = String::new();
    for line in manifest.lines() {
        let r: Value = serde_json::from_str(line).unwrap();
        let p = serde_json::json!({"id": r["id"], "target_pred": r["target"], "attrs_pred": r["attrs"], "proto_attrs": r["attrs"]});
        preds.push_str(&format!("{p}\n"));
        for (attr, mask) in r["masks"].as_object().unwrap() {
            let e = serde_json::json!({"id": r["id"], "attr": attr, "path": format!("oracle/{}", mask.as_str().unwrap())});
            index.push_str(&format!("{e}\n"));
        }
    }
    std::fs::write(work.join("oracle_preds.jsonl"), preds).unwrap();
    std::fs::write(work.join("attention.jsonl"), index).unwrap();
    cli(
        &["eval", "-m", "oracle/manifest.jsonl", "-p", "oracle_preds.jsonl", "--attention-index", "attention.jsonl", "-o", "eval"],
        work,
    )?;
    let r = read_json(&work.join("eval/report.json"))?;
    ensure(r["target_within1"] == 1.0, || format!("P = {}", r["target_within1"]))?;
    for (id, s) in r["attributes"].as_object().unwrap() {
        ensure(s["accuracy"] == 1.0, || format!("A[{id}] = {}", s["accuracy"]))?;
    }
    ensure(r["trust_index"] == 0.0, || format!("TI = {}", r["trust_index"]))?;
    for (id, s) in r["attention"].as_object().ok_or("no attention block")? {
        ensure(s["mean_dice"] == 1.0, || format!("Dice[{id}] = {}", s["mean_dice"]))?;
    }
    ensure(r["prototypes"]["induced_target"] == 1.0, || "prototype target below 1".into())?;
    Ok("P = 1, all A = 1, TI = 0, Dice = 1 via generate -> eval".into())
}

fn scalability(work: &Path) -> Check {
    let start = Instant::now();
    cli(&["generate", "-n", "10000", "-o", "big", "--jobs", "0"], work)?;
    let t = start.elapsed();
    let _ = std::fs::remove_dir_all(work.join("big"));
    ensure(t < Duration::from_secs(300), || format!("10,000 samples took {t:.1?} (limit 5 min)"))?;
    Ok(format!("10,000 samples at 128x128 in {t:.1?}"))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let work = tempfile::tempdir().expect("temp dir");
    let w = work.path();
    let criteria: Vec<Criterion> = vec![
        ("1 rule reproduces annotated samples", true, Box::new(table_pairs)),
        ("2 roundness sign flips with internal structure", true, Box::new(|| sign_flip(w))),
        ("3 trust index arithmetic", true, Box::new(trust_arithmetic)),
        ("4 determinism and seed isolation", true, Box::new(|| determinism(w))),
        ("5 mask invariants over the full grid", true, Box::new(mask_invariants)),
        ("6 geometry/shading separation", true, Box::new(shading_separation)),
        ("7 reachability", true, Box::new(reachability)),
        ("8 histogram sanity", true, Box::new(|| histogram_sanity(w))),
        ("9 metric fixed points end to end", true, Box::new(|| metric_fixed_points(w))),
        ("10 scalability smoke (soft)", false, Box::new(|| scalability(w))),
    ];
    let mut failed = 0;
    for (name, hard, check) in &criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) if *hard => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
            Err(why) => println!("criterion {name}: SOFT FAIL, not gating ({why})"),
        }
    }
    println!("acceptance: {} of {} gating criteria passed", 9 - failed, 9);
    if failed > 0 {
        std::process::exit(1);
    }
}
