//! One function per subcommand. Each reads its inputs, runs the core
//! routine and writes artifacts plus `manifest.json` into the output
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use rvr_core::eval::{
    evaluate_unseen, evaluate_with_seen, k_growth_experiment, summarize_k_growth,
    write_k_growth_csv,
};
use rvr_core::model::{build_bundle, ModelBundle};
use rvr_core::objective::DomainDataset;
use rvr_core::theory::limit::{mean_gaps, write_limit_csv};
use rvr_core::theory::{
    adversary_limit_experiment, bound_rhs, worst_case_bound, BoundInputs, InvarianceInputs,
    LimitConfig, RepWorld, WorstCaseInputs,
};
use rvr_core::trainer::train;
use rvr_core::worlds::{
    build_world, colorize, draw_domains, load_mnist_idx, read_datasets_csv, sample_domain,
    sample_domains, world_to_json, write_datasets_csv, ColorSetting,
};
use rvr_core::{Error, Result, Rng};

use crate::config::{load_json, load_run_config, parse_value, Loaded, RunConfig};
use crate::output::{Manifest, OutDir};

/// Streams of the world seed used by `gen-world`.
const STREAM_DOMAIN_DRAWS: u64 = 1;
const STREAM_SEEN_SAMPLES: u64 = 2;
const STREAM_UNSEEN_SAMPLES: u64 = 3;
/// Stream of the training seed that initializes the networks.
const STREAM_INIT: u64 = 3;

pub const UNSEEN_FILE: &str = "unseen.csv";

pub fn domain_file(id: usize) -> String {
    format!("domain_{id}.csv")
}

fn out_dir(out: Option<&Path>, cfg: Option<&RunConfig>) -> Result<OutDir> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.and_then(|c| c.outputs.directory.clone()))
        .ok_or_else(|| {
            Error::Config("no output directory: pass --out or set outputs.directory".into())
        })?;
    OutDir::create(&dir)
}

fn csv_bytes(datasets: &[DomainDataset]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_datasets_csv(datasets, &mut buf)?;
    Ok(buf)
}

fn read_csv_input(manifest: &mut Manifest, role: &str, path: &Path) -> Result<Vec<DomainDataset>> {
    let bytes = manifest.read_input(role, path)?;
    read_datasets_csv(bytes.as_slice()).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Seen-domain files (`domain_<id>.csv`) of a data directory, by id.
fn domain_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name
            .strip_prefix("domain_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            found.push((id, entry.path()));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Seen datasets from a CSV file or from the `domain_*.csv` files of a
/// directory written by `gen-world`.
fn read_seen(manifest: &mut Manifest, path: &Path) -> Result<Vec<DomainDataset>> {
    if !path.is_dir() {
        return read_csv_input(manifest, "data", path);
    }
    let mut all = Vec::new();
    for file in domain_files(path)? {
        all.extend(read_csv_input(manifest, "data", &file)?);
    }
    Ok(all)
}

pub fn gen_world(config: &Path, out: Option<&Path>) -> Result<()> {
    let Loaded { value: cfg, raw } = load_run_config(config)?;
    let k = cfg.sampling.k.single()?;
    let dir = out_dir(out, Some(&cfg))?;
    let seed = cfg.world.seed;
    let world = build_world(seed, cfg.world.variant, cfg.world.n_bases)?;
    let unseen_base = world
        .unseen
        .ok_or_else(|| Error::Config("world has no held-out base domain".into()))?;

    let root = Rng::new(seed);
    let bases = draw_domains(&world, k, &mut root.stream(STREAM_DOMAIN_DRAWS));
    let seen = sample_domains(
        &world,
        &bases,
        cfg.sampling.n_per_domain,
        &root.stream(STREAM_SEEN_SAMPLES),
    )?;
    let unseen = sample_domain(
        &world,
        unseen_base,
        cfg.sampling.unseen_points,
        &mut root.stream(STREAM_UNSEEN_SAMPLES),
    )?;

    let mut manifest = Manifest::new("gen-world", raw);
    manifest.seed("world", seed);
    manifest.details = json!({
        "seen_bases": bases,
        "unseen_base": unseen_base,
        "streams": {
            "domain_draws": STREAM_DOMAIN_DRAWS,
            "seen_samples": STREAM_SEEN_SAMPLES,
            "unseen_samples": STREAM_UNSEEN_SAMPLES,
        },
    });
    dir.write(
        &mut manifest,
        "world.json",
        world_to_json(&world)?.as_bytes(),
    )?;
    for ds in &seen {
        dir.write(
            &mut manifest,
            &domain_file(ds.domain_id),
            &csv_bytes(std::slice::from_ref(ds))?,
        )?;
    }
    dir.write(&mut manifest, UNSEEN_FILE, &csv_bytes(&[unseen])?)?;
    dir.finish(manifest)?;
    Ok(())
}

pub fn train_command(config: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    let Loaded { value: cfg, raw } = load_run_config(config)?;
    let mut manifest = Manifest::new("train", raw);
    let seen = read_seen(&mut manifest, data)?;
    if seen.is_empty() {
        return Err(Error::Data(format!(
            "{}: no seen-domain data found",
            data.display()
        )));
    }
    let arch = cfg.model.architecture()?;
    if let Some(ds) = seen.iter().find(|d| d.xs.cols() != arch.input_dim) {
        return Err(Error::Data(format!(
            "{}: domain {} has {} features, model.preset {:?} expects {}",
            data.display(),
            ds.domain_id,
            ds.xs.cols(),
            cfg.model.preset,
            arch.input_dim
        )));
    }
    let train_cfg = cfg.train.to_train_config(&cfg.model.preset)?;
    let dir = out_dir(out, Some(&cfg))?;
    let bundle = build_bundle(
        &arch,
        seen.len(),
        &mut Rng::new(train_cfg.seed).stream(STREAM_INIT),
    )?;
    let (model, trace) = train(&bundle, &seen, &train_cfg)?;

    manifest.seed("train", train_cfg.seed);
    manifest.details = json!({
        "domains": seen.len(),
        "selected_epoch": trace.selected_epoch,
        "streams": {"init": STREAM_INIT},
    });
    dir.write(&mut manifest, "bundle.json", model.to_json()?.as_bytes())?;
    dir.write_with(&mut manifest, "trace.csv", |buf| trace.write_csv(buf))?;
    dir.finish(manifest)?;
    Ok(())
}

pub fn eval_command(bundle_path: &Path, data: &Path, out: &Path, seed: u64) -> Result<()> {
    let config = json!({
        "bundle": bundle_path.display().to_string(),
        "data": data.display().to_string(),
        "seed": seed,
    });
    let mut manifest = Manifest::new("eval", config.clone());
    let text = manifest.read_input("bundle", bundle_path)?;
    let text = String::from_utf8(text)
        .map_err(|_| Error::Data(format!("{}: not UTF-8", bundle_path.display())))?;
    let bundle = ModelBundle::from_json(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", bundle_path.display())))?;

    let mut report = if data.is_dir() {
        let unseen_path = data.join(UNSEEN_FILE);
        let mut unseen = read_csv_input(&mut manifest, "unseen", &unseen_path)?;
        let unseen = single_domain(&mut unseen, &unseen_path)?;
        let seen = read_seen(&mut manifest, data)?;
        if seen.is_empty() {
            evaluate_unseen(&bundle, &unseen)?
        } else {
            evaluate_with_seen(&bundle, &seen, &unseen, seed)?
        }
    } else {
        let mut unseen = read_csv_input(&mut manifest, "unseen", data)?;
        evaluate_unseen(&bundle, &single_domain(&mut unseen, data)?)?
    };
    report.seed = seed;
    report.config = config;

    let dir = OutDir::create(out)?;
    manifest.seed("tie_breaking", seed);
    dir.write_json(&mut manifest, "eval_report.json", &report)?;
    dir.finish(manifest)?;
    Ok(())
}

fn single_domain(datasets: &mut Vec<DomainDataset>, path: &Path) -> Result<DomainDataset> {
    if datasets.len() != 1 {
        return Err(Error::Data(format!(
            "{}: expected one domain, found {}",
            path.display(),
            datasets.len()
        )));
    }
    Ok(datasets.pop().expect("one element"))
}

pub fn kgrowth_command(config: &Path, out: Option<&Path>) -> Result<()> {
    let Loaded { value: cfg, raw } = load_run_config(config)?;
    let kcfg = cfg.k_growth()?;
    let dir = out_dir(out, Some(&cfg))?;
    let world = build_world(cfg.world.seed, cfg.world.variant, cfg.world.n_bases)?;
    let records = k_growth_experiment(&world, &kcfg)?;

    let mut manifest = Manifest::new("kgrowth", raw);
    manifest
        .seed("world", cfg.world.seed)
        .seed("runs", &kcfg.seeds);
    dir.write_with(&mut manifest, "kgrowth.csv", |buf| {
        write_k_growth_csv(&records, buf)
    })?;
    dir.write_json(
        &mut manifest,
        "kgrowth_summary.json",
        &summarize_k_growth(&records),
    )?;
    dir.finish(manifest)?;
    Ok(())
}

/// Input document of `theory-limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryLimitConfig {
    pub world: RepWorld,
    #[serde(default)]
    pub limit: LimitConfig,
}

pub fn theory_limit(config: &Path, out: &Path) -> Result<()> {
    let Loaded { value: cfg, raw } = load_json::<TheoryLimitConfig>(config)?;
    cfg.world.validate()?;
    let dir = OutDir::create(out)?;
    let records = adversary_limit_experiment(&cfg.world, &cfg.limit)?;

    let mut manifest = Manifest::new("theory-limit", raw);
    manifest.seed("runs", &cfg.limit.seeds);
    let gaps: Vec<Value> = mean_gaps(&records)
        .into_iter()
        .map(|(k, gap)| json!({"k": k, "mean_gap": gap}))
        .collect();
    dir.write_with(&mut manifest, "limit.csv", |buf| {
        write_limit_csv(&records, buf)
    })?;
    dir.write_json(&mut manifest, "limit_gaps.json", &gaps)?;
    dir.finish(manifest)?;
    Ok(())
}

/// Worst-case inputs are recognized by their `p_l` field; anything else is
/// read as finite-k inputs.
pub fn theory_bounds(inputs: &Path, out: &Path) -> Result<()> {
    let Loaded { value: raw, .. } = load_json::<Value>(inputs)?;
    let named = |e: Error| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", inputs.display())),
        other => other,
    };
    let is_worst_case = raw.get("p_l").is_some();
    let report = if is_worst_case {
        let w: WorstCaseInputs = parse_value(&raw).map_err(named)?;
        serde_json::to_value(worst_case_bound(&w)?)?
    } else {
        let b: BoundInputs = parse_value(&raw).map_err(named)?;
        serde_json::to_value(bound_rhs(&b)?)?
    };
    let dir = OutDir::create(out)?;
    let mut manifest = Manifest::new("theory-bounds", raw);
    manifest.details = json!({"kind": if is_worst_case { "worst_case" } else { "finite_k" }});
    dir.write_json(&mut manifest, "bounds.json", &report)?;
    dir.finish(manifest)?;
    Ok(())
}

pub fn theory_invariance(inputs: &Path, out: &Path) -> Result<()> {
    let Loaded { value: cfg, raw } = load_json::<InvarianceInputs>(inputs)?;
    let dir = OutDir::create(out)?;
    let report = cfg.run()?;
    let mut manifest = Manifest::new("theory-invariance", raw);
    manifest.seed("samples", cfg.seed);
    dir.write_json(&mut manifest, "invariance.json", &report)?;
    dir.finish(manifest)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ColorizeArgs {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub setting: String,
    pub shape_correlation: f64,
    pub color_correlation: f64,
    pub seed: u64,
    pub domain_id: usize,
    pub count: Option<usize>,
}

/// A JSON file holding a color setting, or one of the named settings:
/// `two-domain-0`, `two-domain-1`, `study-1` … `study-6`,
/// `red-green-random`, `solid-<color>`.
pub fn resolve_setting(
    manifest: Option<&mut Manifest>,
    name: &str,
    shape: f64,
    color: f64,
) -> Result<ColorSetting> {
    let path = Path::new(name);
    if path.is_file() {
        let bytes = match manifest {
            Some(m) => m.read_input("setting", path)?,
            None => std::fs::read(path).map_err(|e| Error::io(path, e))?,
        };
        return serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())));
    }
    let setting = if let Some(d) = name.strip_prefix("two-domain-") {
        match d {
            "0" => ColorSetting::two_domain(shape, color, 0),
            "1" => ColorSetting::two_domain(shape, color, 1),
            _ => {
                return Err(Error::Config(format!(
                    "--setting {name:?}: domain must be 0 or 1"
                )))
            }
        }
    } else if let Some(n) = name.strip_prefix("study-") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::Config(format!("--setting {name:?}: bad study number")))?;
        ColorSetting::six_domain_study(n)?
    } else if name == "red-green-random" {
        ColorSetting::red_green_random(shape)
    } else if let Some(c) = name.strip_prefix("solid-") {
        ColorSetting::solid(shape, c)
    } else {
        return Err(Error::Config(format!(
            "--setting {name:?} is neither a file nor a known setting"
        )));
    };
    Ok(setting)
}

pub fn mnist_colorize(args: &ColorizeArgs, out: &Path) -> Result<()> {
    let mut manifest = Manifest::new("mnist-colorize", Value::Null);
    let setting = resolve_setting(
        Some(&mut manifest),
        &args.setting,
        args.shape_correlation,
        args.color_correlation,
    )?;
    manifest.config = json!({
        "images": args.images.display().to_string(),
        "labels": args.labels.display().to_string(),
        "setting": setting,
        "seed": args.seed,
        "domain_id": args.domain_id,
        "count": args.count,
    });
    manifest.config_hash = crate::config::config_hash(&manifest.config);

    manifest.read_input("images", &args.images)?;
    manifest.read_input("labels", &args.labels)?;
    let mut data = load_mnist_idx(&args.images, &args.labels)?;
    if let Some(n) = args.count {
        if n > data.len() {
            return Err(Error::Config(format!(
                "--count {n} exceeds the {} available images",
                data.len()
            )));
        }
        data = data.subset(&(0..n).collect::<Vec<_>>());
    }
    let dir = OutDir::create(out)?;
    let mut colored = colorize(&data, &setting, &mut Rng::new(args.seed))?;
    colored.domain_id = args.domain_id;

    manifest.seed("colorize", args.seed);
    dir.write(&mut manifest, "colored.csv", &csv_bytes(&[colored])?)?;
    dir.finish(manifest)?;
    Ok(())
}
