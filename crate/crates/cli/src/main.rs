//! `strokepatch` command-line tool.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures.
//! Set `STROKEPATCH_THREADS` (or `--threads`) to fix the worker count.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use strokepatch::patchgen::{export_patch_set, preset, presets, PatchDir, PatchSource, StyleFile};
use strokepatch::train::{load_checkpoint, stylize, train, TrainConfig};
use strokepatch::unet::{build_unet, UNetConfig};
use strokepatch::{io, Dims};

#[derive(Parser, Debug)]
#[command(name = "strokepatch", version, about = "Stroke-patch generation, training and stylization")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "STROKEPATCH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a stroke-patch set to a directory of PNGs plus manifest.json.
    GenPatches(GenArgs),
    /// Train a U-Net on a patch directory.
    Train(TrainArgs),
    /// Stylize a PNG with a trained model.
    Style(StyleArgs),
    /// Print a checkpoint's config and training metadata.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["style", "spec"])))]
struct GenArgs {
    /// Preset name.
    #[arg(long, value_parser = preset_name)]
    style: Option<String>,
    /// Style spec JSON file.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    /// Patch size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    size: Option<Dims>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory written by gen-patches.
    patches: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss CSV (default: checkpoint path with a .csv extension).
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 5.0)]
    blur_radius: f64,
    /// Overrides the style's noise probability.
    #[arg(long)]
    noise_probability: Option<f64>,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 64)]
    base_channels: usize,
    /// Seeds initialization, shuffling and corruption.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    max_steps: Option<u64>,
}

#[derive(Args, Debug)]
struct StyleArgs {
    /// Checkpoint written by train.
    #[arg(long)]
    model: PathBuf,
    input: PathBuf,
    output: PathBuf,
    /// Working scale in (0, 1]; smaller values give coarser strokes.
    #[arg(long, default_value_t = 1.0, value_parser = parse_scale)]
    scale: f64,
}

#[derive(Args, Debug)]
struct InspectArgs {
    model: PathBuf,
}

fn preset_name(s: &str) -> Result<String, String> {
    if presets().iter().any(|p| p.name == s) {
        Ok(s.to_string())
    } else {
        let names: Vec<&str> = presets().iter().map(|p| p.name).collect();
        Err(format!("unknown preset (available: {})", names.join(", ")))
    }
}

fn parse_size(s: &str) -> Result<Dims, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err("size must be nonzero".into());
    }
    Ok(Dims::new(h, w))
}

fn parse_scale(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if r > 0.0 && r <= 1.0 {
        Ok(r)
    } else {
        Err(format!("scale must lie in (0, 1], got {r}"))
    }
}

fn gen_patches(args: GenArgs) -> Result<()> {
    let mut spec = match (&args.style, &args.spec) {
        (Some(name), _) => preset(name)?,
        (None, Some(path)) => StyleFile::load(path)?,
        (None, None) => unreachable!("clap enforces one source"),
    };
    if let Some(n) = args.count {
        spec.count = n;
    }
    if let Some(d) = args.size {
        spec.width = d.width;
        spec.height = d.height;
    }
    export_patch_set(&spec, args.seed, &args.out)
        .with_context(|| format!("writing patches to {}", args.out.display()))?;
    eprintln!(
        "wrote {} {}x{} patches of style {}",
        spec.count, spec.width, spec.height, spec.name
    );
    println!("{}", args.out.display());
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let source = PatchDir::open(&args.patches)?;
    let mut cfg = TrainConfig::for_style(source.spec());
    cfg.epochs = args.epochs;
    cfg.learning_rate = args.lr;
    cfg.batch_size = args.batch;
    cfg.blur_radius = args.blur_radius;
    cfg.seed = args.seed;
    cfg.max_steps = args.max_steps;
    if let Some(p) = args.noise_probability {
        cfg.noise_probability = p;
    }
    cfg.checkpoint_path = Some(args.out.clone());
    cfg.metrics_path = Some(args.metrics.clone().unwrap_or_else(|| args.out.with_extension("csv")));
    if let Some(parent) = cfg.metrics_path.as_deref().and_then(Path::parent) {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }

    let net = UNetConfig {
        depth: args.depth,
        base_channels: args.base_channels,
        ..UNetConfig::default()
    };
    let mut model = build_unet(net, args.seed)?;
    eprintln!(
        "training on {} patches ({}x{}), {} parameters",
        source.len(),
        source.spec().width,
        source.spec().height,
        model.parameter_count()
    );
    let report = train(&source, &mut model, &cfg)?;
    for e in &report.epochs {
        eprintln!("epoch {:>3}  loss {:.6}  {:.1}s", e.epoch, e.mean_loss, e.seconds);
    }
    match report.final_loss() {
        Some(loss) => println!("final loss {loss:.6}"),
        None => println!("final loss n/a"),
    }
    println!("{}", args.out.display());
    Ok(())
}

fn style_cmd(args: StyleArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.model)?;
    let img = io::read_png_rgb(&args.input)?;
    let out = stylize(&ckpt.model, &img, args.scale)?;
    io::write_png(&out, &args.output)?;
    println!("{}", args.output.display());
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.model)?;
    let cfg = ckpt.model.config();
    let count = ckpt.model.parameter_count();
    if count != cfg.parameter_count() {
        bail!("parameter count {count} does not match the architecture ({})", cfg.parameter_count());
    }
    let meta = &ckpt.meta;
    println!("format version   {}", ckpt.version);
    println!("in channels      {}", cfg.in_channels);
    println!("out channels     {}", cfg.out_channels);
    println!("depth            {}", cfg.depth);
    println!("base channels    {}", cfg.base_channels);
    println!("norm epsilon     {:e}", cfg.norm_epsilon);
    println!("parameters       {count}");
    println!("tensors          {}", ckpt.model.params().len());
    println!("style            {}", meta.style);
    println!("seed             {}", meta.seed);
    println!("epochs completed {}", meta.epochs_completed);
    println!("steps            {}", meta.steps);
    match meta.final_loss {
        Some(l) => println!("final loss       {l:.6}"),
        None => println!("final loss       n/a"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::GenPatches(a) => gen_patches(a),
        Command::Train(a) => train_cmd(a),
        Command::Style(a) => style_cmd(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
