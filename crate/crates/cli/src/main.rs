mod config;
mod data;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use vsn_core::eval::evaluate;
use vsn_core::io::{
    read_image_png, read_vsm, write_image_png, write_map_png, write_mask_png, write_pmf, write_rgs, write_vsm,
};
use vsn_core::synth::generate_scene;
use vsn_core::training::{predict_fused_image, train_with};
use vsn_core::{
    attach_regions, estimate_prior_location, gaussian_prior, propose_regions, DistractorPolicy, Network,
    PathwayModel, PriorSpec, ProbMap, ProposerParams, SceneParams, TrainOptions,
};

use config::{parse_size, usage, RunConfig, UsageError};
use data::{load_dataset, load_maps, load_masks, OutputGuard};

#[derive(Parser)]
#[command(name = "vsn", version, about = "Unsupervised important-object detection")]
struct Cli {
    /// Worker threads for data-parallel steps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with ground truth.
    Generate(GenerateArgs),
    /// Propose regions for one image.
    Regions(RegionsArgs),
    /// Write a Gaussian location prior map.
    Prior(PriorArgs),
    /// Estimate the prior location from weight maps.
    PriorEstimate(PriorEstimateArgs),
    /// Train the two pathways on a dataset directory.
    Train(TrainArgs),
    /// Predict a fused importance map with trained models.
    Infer(InferArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Train VSN, VVN and SSN on the same data and compare them.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Scene parameter file (TOML); defaults apply to missing keys.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// same-appearance-elsewhere, different-appearance-at-prior or mixed.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args)]
struct RegionsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated merge thresholds, e.g. 0.1,0.3,0.9.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long)]
    min_region_px: Option<usize>,
    #[arg(long)]
    edge_weight: Option<f64>,
}

#[derive(Args)]
struct PriorArgs {
    #[arg(long)]
    cx: Option<f64>,
    #[arg(long)]
    cy: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Map size as HxW.
    #[arg(long)]
    size: String,
    /// Output path; `.png` writes an 8-bit image, anything else a PMF file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PriorEstimateArgs {
    #[arg(long)]
    maps: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Default)]
struct TrainOverrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// vsn, vvn or ssn.
    #[arg(long)]
    network: Option<String>,
}

impl TrainOverrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.rounds {
            cfg.rounds = v;
        }
        if let Some(v) = self.iters {
            cfg.iters_per_round = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden = v;
        }
        if let Some(v) = &self.network {
            cfg.network = parse_network(v)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Dump every round's targets under `<out>/targets/`.
    #[arg(long)]
    debug_targets: bool,
    #[command(flatten)]
    opts: TrainOverrides,
}

#[derive(Args)]
struct InferArgs {
    /// Training output directory.
    #[arg(long)]
    models: PathBuf,
    /// An image, or a directory of `img_*.png` files.
    #[arg(long = "in")]
    input: PathBuf,
    /// A map file, or a directory when `--in` is a directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Average precision and recall per image instead of pooling pixels.
    #[arg(long = "macro")]
    macro_average: bool,
    #[arg(long)]
    thresholds: Option<usize>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: TrainOverrides,
}

fn parse_network(s: &str) -> Result<Network> {
    match s.to_ascii_lowercase().as_str() {
        "vsn" => Ok(Network::Vsn),
        "vvn" => Ok(Network::Vvn),
        "ssn" => Ok(Network::Ssn),
        _ => usage(format!("unknown network {s:?}; expected vsn, vvn or ssn")),
    }
}

fn parse_policy(s: &str) -> Result<DistractorPolicy> {
    match s {
        "same-appearance-elsewhere" => Ok(DistractorPolicy::SameAppearanceElsewhere),
        "different-appearance-at-prior" => Ok(DistractorPolicy::DifferentAppearanceAtPrior),
        "mixed" => Ok(DistractorPolicy::Mixed),
        _ => usage(format!("unknown distractor policy {s:?}")),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_map(path: &Path, map: &ProbMap) -> Result<()> {
    let png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if png {
        write_map_png(path, map)?;
    } else {
        write_pmf(path, map)?;
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut params = match &a.params {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<SceneParams>(&text)
                .map_err(|e| UsageError(format!("params {}: {e}", p.display())))?
        }
        None => SceneParams::default(),
    };
    if let Some(s) = a.seed {
        params.seed = s;
    }
    if let Some(p) = &a.policy {
        params.distractor_policy = parse_policy(p)?;
    }
    params.validate()?;
    if a.n == 0 {
        return usage("--n must be at least 1");
    }
    let mut guard = OutputGuard::new();
    guard.dir(&a.out)?;

    #[derive(Serialize)]
    struct Entry {
        id: String,
        image: String,
        gt: String,
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        n: usize,
        params: &'a SceneParams,
        samples: Vec<Entry>,
    }
    let mut samples = Vec::with_capacity(a.n);
    for i in 0..a.n {
        let scene = generate_scene(&params, i)?;
        let s = scene.sample;
        let image = format!("img_{}.png", s.id);
        let gt = format!("gt_{}.png", s.id);
        write_image_png(&a.out.join(&image), &s.image)?;
        write_mask_png(&a.out.join(&gt), s.gt.as_ref().expect("generator sets gt"))?;
        samples.push(Entry { id: s.id, image, gt });
    }
    let manifest = Manifest {
        n: a.n,
        params: &params,
        samples,
    };
    write_json(&a.out.join("manifest.json"), &manifest)?;
    guard.keep();
    println!("wrote {} samples to {}", a.n, a.out.display());
    Ok(())
}

fn cmd_regions(a: RegionsArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let mut params: ProposerParams = cfg.proposer();
    if let Some(s) = a.scales {
        params.scales = s;
    }
    if let Some(m) = a.min_region_px {
        params.min_region_px = m;
    }
    if let Some(e) = a.edge_weight {
        params.edge_weight = e;
    }
    let image = read_image_png(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let regions = propose_regions(&image, &params)?;
    let mut guard = OutputGuard::new();
    guard.file(&a.out)?;
    write_rgs(&a.out, &regions)?;
    guard.keep();
    println!("{} regions", regions.len());
    Ok(())
}

fn cmd_prior(a: PriorArgs) -> Result<()> {
    let (h, w) = parse_size(&a.size)?;
    let d = PriorSpec::default();
    let spec = PriorSpec {
        cx_frac: a.cx.unwrap_or(d.cx_frac),
        cy_frac: a.cy.unwrap_or(d.cy_frac),
        sigma_frac: a.sigma.unwrap_or(d.sigma_frac),
    };
    let map = gaussian_prior(&spec, h, w)?;
    let mut guard = OutputGuard::new();
    guard.file(&a.out)?;
    write_map(&a.out, &map)?;
    guard.keep();
    Ok(())
}

fn cmd_prior_estimate(a: PriorEstimateArgs) -> Result<()> {
    let maps: Vec<ProbMap> = load_maps(&a.maps)?.into_iter().map(|(_, m)| m).collect();
    let (cx, cy) = estimate_prior_location(&maps)?;
    #[derive(Serialize)]
    struct Loc {
        cx_frac: f64,
        cy_frac: f64,
    }
    let mut guard = OutputGuard::new();
    guard.file(&a.out)?;
    write_json(
        &a.out,
        &Loc {
            cx_frac: cx,
            cy_frac: cy,
        },
    )?;
    guard.keep();
    println!("cx_frac={cx:?} cy_frac={cy:?}");
    Ok(())
}

const SLOT_NAMES: [&str; 2] = ["visual", "spatial"];

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.opts.resolve()?;
    cfg.debug_targets |= a.debug_targets;
    let train_cfg = cfg.train();
    train_cfg.validate()?;
    cfg.prior().validate()?;
    let proposer = cfg.proposer();
    proposer.validate()?;

    let mut samples = load_dataset(&a.data)?;
    attach_regions(&mut samples, &proposer)?;

    let mut guard = OutputGuard::new();
    guard.dir(&a.out)?;
    fs::write(a.out.join("config.toml"), cfg.to_toml()?)?;

    let opts = TrainOptions {
        network: cfg.network,
        keep_targets: cfg.debug_targets,
    };
    let init = vsn_core::TrainState::new(cfg.network, &train_cfg);
    write_vsm(&a.out.join("init_visual.vsm"), &init.visual)?;
    write_vsm(&a.out.join("init_spatial.vsm"), &init.spatial)?;

    let state = train_with(&samples, &train_cfg, &cfg.prior(), &opts)?;

    let mut csv = String::from("round,kind,mean_loss,mf\n");
    for rec in &state.history {
        let slot = match rec.kind.student() {
            vsn_core::training::Slot::First => 0,
            vsn_core::training::Slot::Second => 1,
        };
        let model = if slot == 0 { &rec.first } else { &rec.second };
        write_vsm(
            &a.out
                .join(format!("round_{}_{}.vsm", rec.round, SLOT_NAMES[slot])),
            model,
        )?;
        let mf = rec.mf.map(|v| format!("{v:?}")).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{:?},{}\n",
            rec.round, rec.kind, rec.mean_loss, mf
        ));
        if let Some(targets) = &rec.targets {
            let dir = a.out.join("targets").join(format!("round_{}", rec.round));
            fs::create_dir_all(&dir)?;
            for (s, t) in samples.iter().zip(targets) {
                write_pmf(&dir.join(format!("{}.pmf", s.id)), t)?;
            }
        }
        println!(
            "round {} {}: mean_loss={:.4}{}",
            rec.round,
            rec.kind,
            rec.mean_loss,
            rec.mf.map(|m| format!(" mf={m:.4}")).unwrap_or_default()
        );
    }
    fs::write(a.out.join("history.csv"), csv)?;
    guard.keep();
    Ok(())
}

/// Latest model for each slot in a training directory, plus its config.
fn load_models(dir: &Path) -> Result<(PathwayModel, PathwayModel, RunConfig)> {
    let cfg_path = dir.join("config.toml");
    let cfg = if cfg_path.is_file() {
        RunConfig::load(Some(&cfg_path))?
    } else {
        RunConfig::default()
    };
    let mut models = Vec::with_capacity(2);
    for name in SLOT_NAMES {
        let mut best: Option<(usize, PathBuf)> = None;
        for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
            let path = entry?.path();
            let Some(fname) = path.file_name().and_then(|f| f.to_str()) else {
                continue;
            };
            let round = fname
                .strip_prefix("round_")
                .and_then(|r| r.strip_suffix(&format!("_{name}.vsm")))
                .and_then(|r| r.parse::<usize>().ok());
            if let Some(r) = round {
                if best.as_ref().is_none_or(|(b, _)| r > *b) {
                    best = Some((r, path));
                }
            }
        }
        let path = match best {
            Some((_, p)) => p,
            None => dir.join(format!("init_{name}.vsm")),
        };
        if !path.is_file() {
            bail!("no {name} model in {}", dir.display());
        }
        models.push(read_vsm(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    let second = models.pop().expect("two slots");
    let first = models.pop().expect("two slots");
    Ok((first, second, cfg))
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let (first, second, cfg) = load_models(&a.models)?;
    let opts = cfg.train().feature_options();
    let mut guard = OutputGuard::new();
    if a.input.is_dir() {
        let files = data::list_files(&a.input, "img_", &["png"])?;
        if files.is_empty() {
            bail!("no img_*.png files in {}", a.input.display());
        }
        guard.dir(&a.out)?;
        for path in files {
            let image = read_image_png(&path)?;
            let id = data::sample_id(&path).expect("listed files have stems");
            let pred = predict_fused_image(&first, &second, &image, opts)?;
            write_pmf(&a.out.join(format!("pred_{id}.pmf")), &pred)?;
        }
    } else {
        let image = read_image_png(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
        let pred = predict_fused_image(&first, &second, &image, opts)?;
        guard.file(&a.out)?;
        write_map(&a.out, &pred)?;
    }
    guard.keep();
    Ok(())
}

#[derive(Serialize)]
struct CurvePoint {
    t: f64,
    p: f64,
    r: f64,
}

#[derive(Serialize)]
struct MetricsJson {
    mf: f64,
    ap: f64,
    curve: Vec<CurvePoint>,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let averaging = if a.macro_average {
        vsn_core::Averaging::Macro
    } else {
        cfg.averaging()
    };
    let thresholds = a.thresholds.unwrap_or(cfg.thresholds);
    let preds = load_maps(&a.preds)?;
    let gts = load_masks(&a.gt)?;
    let mut pred_maps = Vec::with_capacity(gts.len());
    let mut gt_masks = Vec::with_capacity(gts.len());
    for (id, gt) in gts {
        let Some((_, p)) = preds.iter().find(|(pid, _)| *pid == id) else {
            bail!("no prediction for sample {id}");
        };
        pred_maps.push(p.clone());
        gt_masks.push(gt);
    }
    let m = evaluate(&pred_maps, &gt_masks, thresholds, averaging)?;
    let curve = (0..m.curve.thresholds.len())
        .map(|k| CurvePoint {
            t: m.curve.thresholds[k],
            p: m.curve.precision[k],
            r: m.curve.recall[k],
        })
        .collect();
    if let Some(out) = &a.out {
        let mut guard = OutputGuard::new();
        guard.file(out)?;
        write_json(
            out,
            &MetricsJson {
                mf: m.mf,
                ap: m.ap,
                curve,
            },
        )?;
        guard.keep();
    }
    println!("mf={:?} ap={:?}", m.mf, m.ap);
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let cfg = a.opts.resolve()?;
    let train_cfg = cfg.train();
    train_cfg.validate()?;
    let proposer = cfg.proposer();
    proposer.validate()?;
    let mut samples = load_dataset(&a.data)?;
    if samples.iter().any(|s| s.gt.is_none()) {
        bail!(
            "ablation needs gt_<id>.png for every image in {}",
            a.data.display()
        );
    }
    attach_regions(&mut samples, &proposer)?;
    let gts: Vec<_> = samples.iter().map(|s| s.gt.clone().expect("checked")).collect();
    let set = vsn_core::TrainingSet::new(&samples, train_cfg.feature_options())?;
    let mut rows = String::from("network,mf,ap,rounds\n");
    for network in [Network::Vsn, Network::Vvn, Network::Ssn] {
        let opts = TrainOptions {
            network,
            keep_targets: false,
        };
        let state = vsn_core::training::train_prepared(&set, &train_cfg, &cfg.prior(), &opts)?;
        let fused = set.predict_fused(&state)?;
        let m = evaluate(&fused, &gts, cfg.thresholds, cfg.averaging())?;
        println!("{}: mf={:.4} ap={:.4}", network.as_str(), m.mf, m.ap);
        rows.push_str(&format!(
            "{},{:?},{:?},{}\n",
            network.as_str(),
            m.mf,
            m.ap,
            state.history.len()
        ));
    }
    let mut guard = OutputGuard::new();
    guard.file(&a.out)?;
    let mut f = fs::File::create(&a.out)?;
    f.write_all(rows.as_bytes())?;
    guard.keep();
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return usage("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Regions(a) => cmd_regions(a),
        Command::Prior(a) => cmd_prior(a),
        Command::PriorEstimate(a) => cmd_prior_estimate(a),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<vsn_core::Error>() {
            return match e {
                vsn_core::Error::Divergence { .. } => 3,
                vsn_core::Error::InvalidParam(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
