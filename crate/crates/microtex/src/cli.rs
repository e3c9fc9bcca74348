//! Command-line definitions and the command implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use microtex_core::dataset::{generate_synthetic_textures, SyntheticSpec};
use microtex_core::featurize::{Featurizer, Source};
use microtex_core::viz::{self, RankedTexture};
use microtex_core::{Network, TapPoint};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::csvio::{self, IndexRow};
use crate::error::{CliError, Result};
use crate::imageio;
use crate::manifest::{self, Record};
use crate::pipeline::{self, Dataset, FeatureSet, ForestDump};
use crate::weights;

#[derive(Debug, Parser)]
#[command(
    name = "microtex",
    version,
    about = "Texture features, random forests and filter visualization for microstructure images"
)]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes one feature CSV per featurizer and tap.
    Featurize,
    /// Repeated stratified cross-validation of every feature set.
    Evaluate(EvaluateArgs),
    /// Renders filter textures or activation heat maps.
    Visualize(VisualizeArgs),
    /// Writes a synthetic labelled texture set and its manifest.
    Generate(GenerateArgs),
    /// Validates an MTEXW001 weight file.
    ConvertCheck(ConvertCheckArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Also train one forest per feature set on all images and save it as JSON.
    #[arg(long)]
    pub save_forests: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Textures,
    Important,
    Characteristic,
    Heatmap,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Textures => "textures",
            Mode::Important => "important",
            Mode::Characteristic => "characteristic",
            Mode::Heatmap => "heatmap",
        }
    }
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[arg(value_enum)]
    pub mode: Mode,
    /// Tap for textures and heat maps.
    #[arg(long, default_value = "C12")]
    pub tap: TapPoint,
    /// Filters as a list and/or ranges, e.g. `0-2,7`.
    #[arg(long, default_value = "0")]
    pub filters: String,
    /// Number of top features for `important`.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Forest dump for `important`; trained from the config when absent.
    #[arg(long)]
    pub forest: Option<PathBuf>,
    /// Image for `heatmap`.
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON synthetic spec; the three-class stripes/dots/checker set when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 10.0)]
    pub noise: f64,
}

#[derive(Debug, Args)]
pub struct ConvertCheckArgs {
    pub weights: PathBuf,
}

/// Runs a parsed command line, on a pool of `--jobs` threads if given.
pub fn run(cli: Cli) -> Result<()> {
    match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| dispatch(&cli))
        }
        None => dispatch(&cli),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Featurize => cmd_featurize(&load_config(cli)?).map(print_paths),
        Command::Evaluate(a) => cmd_evaluate(&load_config(cli)?, a.save_forests).map(print_paths),
        Command::Visualize(a) => cmd_visualize(&load_config(cli)?, a).map(print_paths),
        Command::Generate(a) => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
            cmd_generate(a, cli.seed.unwrap_or(0), &out).map(|p| print_paths(vec![p]))
        }
        Command::ConvertCheck(a) => {
            let n = cmd_convert_check(&a.weights)?;
            println!("{}: ok, {n} entries", a.weights.display());
            Ok(())
        }
    }
}

fn print_paths(paths: Vec<PathBuf>) {
    for p in paths {
        println!("{}", p.display());
    }
}

/// Reads `--config` and applies the `--seed` and `--out` overrides.
pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Usage("this command needs --config".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

pub fn cmd_featurize(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let net = pipeline::load_network(cfg)?;
    let data = Dataset::load(&cfg.manifest, &cfg.preprocess)?;
    let out = pipeline::ensure_dir(&cfg.output)?;
    let mut written = Vec::new();
    for set in pipeline::compute_features(&net, &data, cfg)? {
        let path = out.join(format!("features_{}_{}.csv", set.featurizer, set.tag()));
        csvio::write_features(&path, &data.manifest, &set)?;
        written.push(path);
    }
    Ok(written)
}

pub fn cmd_evaluate(cfg: &RunConfig, save_forests: bool) -> Result<Vec<PathBuf>> {
    let net = pipeline::load_network(cfg)?;
    let data = Dataset::load(&cfg.manifest, &cfg.preprocess)?;
    let out = pipeline::ensure_dir(&cfg.output)?;
    let labels = data.labels();
    let sets = pipeline::compute_features(&net, &data, cfg)?;
    let reports = pipeline::evaluate_sets(&sets, &labels, cfg)?;
    let path = out.join("eval.csv");
    csvio::write_reports(&path, &reports)?;
    let mut written = vec![path];
    if save_forests {
        let classes = data.manifest.classes();
        for set in &sets {
            let path = out.join(format!("forest_{}_{}.json", set.featurizer, set.tag()));
            ForestDump::train(set, &labels, &classes, cfg)?.save(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Parses `0-2,7` style filter lists, keeping first occurrences in order.
pub fn parse_filters(s: &str) -> Result<Vec<usize>> {
    let bad = || CliError::Usage(format!("invalid filter list {s:?}"));
    let mut out: Vec<usize> = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => {
                let v = part.parse().map_err(|_| bad())?;
                (v, v)
            }
        };
        if lo > hi {
            return Err(bad());
        }
        for f in lo..=hi {
            if !out.contains(&f) {
                out.push(f);
            }
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// One feature set over every configured source for the first configured
/// featurizer, as used by the `important` and `characteristic` modes.
fn interpretable_set(net: &Network<f32>, data: &Dataset, cfg: &RunConfig) -> Result<FeatureSet> {
    let featurizer = cfg.featurizer[0];
    if !featurizer.is_per_filter() {
        return Err(CliError::Usage(format!("{featurizer} features are not tied to single filters; use mean or max")));
    }
    if cfg.taps.contains(&Source::Raw) {
        return Err(CliError::Usage("raw pixel features have no filter texture to render".into()));
    }
    let single = RunConfig { featurizer: vec![featurizer], combine_taps: false, ..cfg.clone() };
    let sets = pipeline::compute_features(net, data, &single)?;
    FeatureSet::combine(&sets.iter().collect::<Vec<_>>())
}

/// Renders the ascent texture of each (source, filter) in parallel.
fn render_textures(
    net: &Network<f32>,
    cfg: &RunConfig,
    mode: Mode,
    items: &[(Source, usize)],
    out: &Path,
) -> Result<Vec<(PathBuf, f64)>> {
    items
        .par_iter()
        .enumerate()
        .map(|(i, &(src, filter))| {
            let tap = src.tap().ok_or_else(|| CliError::Usage("raw features have no texture".into()))?;
            let t = viz::texture_image(net, tap, filter, &cfg.ascent_config(i))?;
            let path = out.join(pipeline::output_name(mode.name(), src, filter));
            imageio::save_png(&path, &t.image)?;
            Ok((path, t.objective))
        })
        .collect()
}

fn ranked_rows(ranked: &[(String, RankedTexture)], rendered: &[(PathBuf, f64)]) -> Vec<IndexRow> {
    ranked
        .iter()
        .zip(rendered)
        .map(|((class, t), (path, _))| IndexRow {
            class: class.clone(),
            tap: t.source.to_string(),
            filter: t.filter,
            value: t.value,
            path: path.display().to_string(),
        })
        .collect()
}

pub fn cmd_visualize(cfg: &RunConfig, args: &VisualizeArgs) -> Result<Vec<PathBuf>> {
    if args.mode == Mode::Heatmap && args.image.is_none() {
        return Err(CliError::Usage("heatmap needs --image".into()));
    }
    let net = pipeline::load_network(cfg)?;
    let out = pipeline::ensure_dir(&cfg.output)?;
    let index = out.join(format!("{}_index.csv", args.mode.name()));
    let (rows, value_name) = match args.mode {
        Mode::Textures => {
            let items: Vec<(Source, usize)> =
                parse_filters(&args.filters)?.into_iter().map(|f| (Source::Tap(args.tap), f)).collect();
            let rendered = render_textures(&net, cfg, args.mode, &items, &out)?;
            let rows = items
                .iter()
                .zip(&rendered)
                .map(|(&(src, filter), (path, obj))| IndexRow {
                    class: String::new(),
                    tap: src.to_string(),
                    filter,
                    value: *obj,
                    path: path.display().to_string(),
                })
                .collect();
            (rows, "objective")
        }
        Mode::Important => {
            let dump = match &args.forest {
                Some(p) => ForestDump::load(p)?,
                None => {
                    let data = Dataset::load(&cfg.manifest, &cfg.preprocess)?;
                    let set = interpretable_set(&net, &data, cfg)?;
                    ForestDump::train(&set, &data.labels(), &data.manifest.classes(), cfg)?
                }
            };
            let top = viz::top_important_textures(&dump.forest, &dump.labels()?, args.k)?;
            let ranked: Vec<(String, RankedTexture)> = top.into_iter().map(|t| (String::new(), t)).collect();
            let items: Vec<(Source, usize)> = ranked.iter().map(|(_, t)| (t.source, t.filter)).collect();
            let rendered = render_textures(&net, cfg, args.mode, &items, &out)?;
            (ranked_rows(&ranked, &rendered), "importance")
        }
        Mode::Characteristic => {
            let data = Dataset::load(&cfg.manifest, &cfg.preprocess)?;
            let set = interpretable_set(&net, &data, cfg)?;
            let classes = data.manifest.classes();
            let chosen = viz::characteristic_textures(&set.matrix, &data.labels(), &set.labels)?;
            let ranked: Vec<(String, RankedTexture)> =
                chosen.into_iter().map(|c| (classes[c.class].clone(), c.texture)).collect();
            // Classes that share a texture share its image.
            let mut items: Vec<(Source, usize)> = Vec::new();
            for (_, t) in &ranked {
                if !items.contains(&(t.source, t.filter)) {
                    items.push((t.source, t.filter));
                }
            }
            let rendered = render_textures(&net, cfg, args.mode, &items, &out)?;
            let per_class: Vec<(PathBuf, f64)> = ranked
                .iter()
                .map(|(_, t)| rendered[items.iter().position(|&i| i == (t.source, t.filter)).unwrap()].clone())
                .collect();
            (ranked_rows(&ranked, &per_class), "score")
        }
        Mode::Heatmap => {
            let image_path = args.image.as_ref().expect("checked above");
            let img = microtex_core::dataset::apply_preprocess(&imageio::load_image(image_path)?, &cfg.preprocess)?;
            let input = microtex_core::cnn::preprocess(&img, &cfg.normalization)?.into_map();
            let filters = parse_filters(&args.filters)?;
            let rows = filters
                .par_iter()
                .map(|&filter| {
                    let h = viz::activation_heatmap(&net, &input, args.tap, filter)?;
                    let path = out.join(pipeline::output_name(args.mode.name(), Source::Tap(args.tap), filter));
                    imageio::save_png(&path, &viz::to_gray_image(&h.upsampled)?)?;
                    let peak = h.map.values().iter().fold(0.0f32, |a, &b| a.max(b)) as f64;
                    Ok(IndexRow {
                        class: String::new(),
                        tap: args.tap.to_string(),
                        filter,
                        value: peak,
                        path: path.display().to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (rows, "max_activation")
        }
    };
    csvio::write_index(&index, value_name, &rows)?;
    let mut written: Vec<PathBuf> = rows.iter().map(|r| PathBuf::from(&r.path)).collect();
    written.dedup();
    written.push(index);
    Ok(written)
}

/// Writes the images as `<label>_<nnn>.png` plus `manifest.csv`; returns the
/// manifest path.
pub fn cmd_generate(args: &GenerateArgs, seed: u64, out: &Path) -> Result<PathBuf> {
    let spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str::<SyntheticSpec>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::three_class(args.n_per_class, args.size, args.noise, seed),
    };
    let images = generate_synthetic_textures(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    pipeline::ensure_dir(out)?;
    let mut records = Vec::with_capacity(images.len());
    let mut counters = std::collections::BTreeMap::<String, usize>::new();
    for li in &images {
        let n = counters.entry(li.label.clone()).or_insert(0);
        let name = format!("{}_{:03}.png", li.label, n);
        *n += 1;
        imageio::save_png(&out.join(&name), &li.image)?;
        records.push(Record { path: PathBuf::from(name), label: li.label.clone() });
    }
    let path = out.join("manifest.csv");
    manifest::write_manifest(&path, &records)?;
    Ok(path)
}

/// Loads and validates a VGG16 weight file; returns its entry count.
pub fn cmd_convert_check(path: &Path) -> Result<usize> {
    if !path.is_file() {
        return Err(CliError::Config(format!("weights file {} does not exist", path.display())));
    }
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let entries = weights::decode_entries(&bytes)?;
    let n = entries.len();
    weights::store_from_entries(entries, &microtex_core::VggConfig::vgg16())?;
    Ok(n)
}

/// Featurizer names accepted on the command line and in configs.
pub fn featurizer_names() -> [&'static str; 4] {
    [Featurizer::Mean.name(), Featurizer::Max.name(), Featurizer::Gram.name(), Featurizer::Vlad.name()]
}
