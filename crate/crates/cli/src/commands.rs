use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use frqi_core::data::{self, Dataset, ResizeFilter, Split};
use frqi_core::frqi::{self, PixelImage};
use frqi_core::model::{
    Checkpoint, Model, ModelConfig, ParamVector, REFERENCE_CELLS, REFERENCE_HEAD_PARAMS, REFERENCE_PQC_PARAMS,
};
use frqi_core::train::{self, ConfusionMatrix, RunMetrics, Sample, TrainError};
use serde_json::json;

use crate::args::{CacheArgs, EncodeArgs, EvalArgs, ImageSource, MnistArgs, SampleArgs, TrainArgs};
use crate::manifest::Recorder;

fn mnist_dir(args: &MnistArgs) -> Result<&Path> {
    args.mnist_dir
        .as_deref()
        .ok_or_else(|| anyhow!("no MNIST directory: pass --mnist-dir or set MNIST_DIR"))
}

fn load_split(args: &MnistArgs, split: Split) -> Result<Dataset> {
    let dir = mnist_dir(args)?;
    Ok(data::load_mnist(dir, split)?)
}

/// Loads and shapes the input raster: resized to `2^n` when `--n` is given,
/// otherwise it must already be a power-of-two square (or `--pad` is set).
fn load_image(src: &ImageSource) -> Result<PixelImage> {
    let img = match (&src.image, src.mnist_index) {
        (Some(path), _) => PixelImage::read_pgm(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(index)) => {
            let ds = load_split(&src.mnist, src.split.into())?;
            ds.images()
                .get(index)
                .cloned()
                .ok_or_else(|| anyhow!("index {index} out of range for {} samples", ds.len()))?
        }
        (None, None) => bail!("an image path or --mnist-index is required"),
    };
    let filter = ResizeFilter::from(src.mnist.resize_filter);
    match src.n {
        Some(n) => {
            let side = 1usize << n;
            if img.width() == side && img.height() == side {
                Ok(img)
            } else {
                Ok(data::resize(&img, side, filter)?)
            }
        }
        None if img.side_exponent().is_some() => Ok(img),
        None if src.pad => Ok(img.pad_to_envelope()),
        None => Err(frqi::FrqiError::NotSquareEnvelope {
            width: img.width(),
            height: img.height(),
        })
        .context("use --n to resize or --pad to zero-pad"),
    }
}

fn pgm_bytes(img: &PixelImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    img.write_pgm_to(&mut out, false)?;
    Ok(out)
}

/// Two intensity grids side by side.
fn side_by_side(left: &PixelImage, right: &PixelImage, titles: (&str, &str)) -> String {
    let width = 4 * left.width();
    let mut s = format!("{:<width$}   {}\n", titles.0, titles.1);
    for r in 0..left.height() {
        let row = |img: &PixelImage| (0..img.width()).map(|c| format!("{:4}", img.get(r, c))).collect::<String>();
        let _ = writeln!(s, "{:<width$}   {}", row(left), row(right));
    }
    s
}

fn max_pixel_diff(a: &PixelImage, b: &PixelImage) -> u8 {
    a.pixels().iter().zip(b.pixels()).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

fn source_json(src: &ImageSource) -> serde_json::Value {
    json!({
        "image": src.image,
        "mnist_index": src.mnist_index,
        "split": src.mnist_index.map(|_| Split::from(src.split)),
        "n": src.n,
        "pad": src.pad,
        "resize_filter": ResizeFilter::from(src.mnist.resize_filter),
    })
}

pub fn encode(args: &EncodeArgs) -> Result<()> {
    let img = load_image(&args.source)?;
    let angles = frqi::scale_to_angles(&img)?;
    let state = frqi::encode_direct(&angles);
    let retrieved = frqi::retrieve_analytic(&state, angles.n())?.to_pixels();
    let diff = max_pixel_diff(&img, &retrieved);

    let mut rec = Recorder::new("encode", &args.out)?;
    let mut csv = Vec::new();
    state.write_csv(&mut csv)?;
    rec.write("amplitudes.csv", csv)?;
    rec.write("angles.csv", angles.to_csv())?;
    rec.write("original.pgm", pgm_bytes(&img)?)?;
    rec.write("retrieved.pgm", pgm_bytes(&retrieved)?)?;
    let mut report = side_by_side(&img, &retrieved, ("original", "retrieved"));
    let _ = writeln!(report, "\nqubits: {}\nmax intensity difference: {diff}", state.num_qubits());
    rec.write("report.txt", report)?;

    println!(
        "encoded {side}x{side} image on {} qubits ({} amplitudes); max intensity difference after retrieval: {diff}",
        state.num_qubits(),
        state.amplitudes().len(),
        side = angles.side(),
    );
    rec.finish(json!({ "source": source_json(&args.source) }), None)?;
    Ok(())
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    let img = load_image(&args.source)?;
    let angles = frqi::scale_to_angles(&img)?;
    let state = frqi::encode_direct(&angles);
    let qubits: Vec<usize> = (0..state.num_qubits()).collect();
    let counts = state.sample(&qubits, args.shots, args.seed)?;
    let shot = frqi::retrieve_from_shots(&counts, angles.n())?;
    let error = frqi::mean_abs_angle_error(&angles, &shot.angles);
    let reconstructed = shot.angles.to_pixels();

    let mut rec = Recorder::new("sample", &args.out)?;
    rec.write("counts.csv", counts.to_csv())?;
    rec.write("original.pgm", pgm_bytes(&img)?)?;
    rec.write("reconstructed.pgm", pgm_bytes(&reconstructed)?)?;
    rec.write("reconstructed_angles.csv", shot.angles.to_csv())?;
    let unobserved = shot.unobserved_positions();
    let mut report = side_by_side(&img, &reconstructed, ("original", "reconstructed"));
    let _ = writeln!(
        report,
        "\nshots: {}\nseed: {}\nmean absolute angle error: {error}\nunobserved positions: {}",
        args.shots,
        args.seed,
        unobserved.len()
    );
    rec.write("report.txt", report)?;

    println!(
        "{} shots, {} distinct outcomes; mean absolute angle error {error:.6} rad; {} unobserved positions",
        args.shots,
        counts.iter().count(),
        unobserved.len()
    );
    rec.finish(
        json!({ "source": source_json(&args.source), "shots": args.shots }),
        Some(args.seed),
    )?;
    Ok(())
}

fn parameter_report(model: &Model) -> String {
    let c = model.param_count();
    format!(
        "variant: {}\ncell template: {}\ncells: {}\nqubits: {} ({} memory + {} FRQI)\n\
         pqc params: {} (reference {REFERENCE_PQC_PARAMS} over {REFERENCE_CELLS} cells)\n\
         head params: {} (reference {REFERENCE_HEAD_PARAMS})\ntotal params: {} (reference {})\n",
        serde_json::to_string(&model.config().variant).unwrap_or_default(),
        model.template_name(),
        c.cells,
        model.config().total_qubits(),
        model.config().memory_qubits,
        model.config().frqi_qubits(),
        c.pqc,
        c.head,
        c.total(),
        REFERENCE_PQC_PARAMS + REFERENCE_HEAD_PARAMS,
    )
}

fn select_samples(
    mnist: &MnistArgs,
    split: Split,
    digits: &[u8],
    per_class: Option<usize>,
    data_seed: u64,
    n: u32,
) -> Result<Vec<Sample>> {
    let ds = load_split(mnist, split)?.filter_classes(digits);
    let ds = match per_class {
        Some(k) => data::subset(&ds, k, data_seed)?,
        None => ds,
    };
    Ok(data::to_samples(&ds, n, mnist.resize_filter.into(), Some(digits))?)
}

fn load_cache(path: &Path, config: &ModelConfig) -> Result<Vec<Sample>> {
    let samples = data::read_cache(path).with_context(|| format!("reading cache {}", path.display()))?;
    if let Some(s) = samples.iter().find(|s| s.angles.n() != config.n || s.label >= config.num_classes) {
        bail!(
            "cache {} holds n = {} / label {} samples; model expects n = {} with {} classes",
            path.display(),
            s.angles.n(),
            s.label,
            config.n,
            config.num_classes
        );
    }
    Ok(samples)
}

fn mean_metrics(runs: &[RunMetrics]) -> String {
    let epochs = runs.iter().map(|r| r.epochs.len()).min().unwrap_or(0);
    let mut s = String::from(RunMetrics::CSV_HEADER);
    s.push('\n');
    let k = runs.len() as f64;
    for e in 0..epochs {
        let mean = |f: fn(&train::EpochMetrics) -> f64| runs.iter().map(|r| f(&r.epochs[e])).sum::<f64>() / k;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.3}",
            e + 1,
            mean(|m| m.train_loss),
            mean(|m| m.train_accuracy),
            mean(|m| m.test_loss),
            mean(|m| m.test_accuracy),
            mean(|m| m.seconds)
        );
    }
    s
}

fn mean_confusion(matrices: &[&ConfusionMatrix]) -> String {
    let classes = matrices[0].num_classes();
    let k = matrices.len() as f64;
    let mut s = String::from("true\\pred");
    for c in 0..classes {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for t in 0..classes {
        let _ = write!(s, "{t}");
        for p in 0..classes {
            let v = matrices.iter().map(|m| m.get(t, p) as f64).sum::<f64>() / k;
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let config = args.model.config();
    let model = Model::new(config.clone())?;
    let report = parameter_report(&model);
    print!("{report}");
    let digits = args.model.digits();
    let run_config = |seed: u64| args.optim.config(seed);
    let config_json = json!({
        "model": config,
        "train": run_config(args.seed),
        "digits": digits,
        "subset_per_class": args.selection.subset_per_class,
        "test_per_class": args.selection.test_per_class,
        "data_seed": args.selection.data_seed,
        "resize_filter": ResizeFilter::from(args.mnist.resize_filter),
        "train_cache": args.train_cache,
        "test_cache": args.test_cache,
        "repeats": args.repeats,
    });

    let mut rec = Recorder::new("train", &args.out_dir)?;
    rec.write("params.txt", &report)?;
    if args.dry_run {
        let ckpt = Checkpoint::new(&model, model.init_params(args.seed));
        rec.write("checkpoint_init.json", ckpt.to_json())?;
        rec.finish(config_json, Some(args.seed))?;
        return Ok(());
    }
    run_config(args.seed).validate()?;

    let train_set = match &args.train_cache {
        Some(path) => load_cache(path, &config)?,
        None => select_samples(
            &args.mnist,
            Split::Train,
            &digits,
            args.selection.subset_per_class,
            args.selection.data_seed,
            config.n,
        )?,
    };
    let test_set = match &args.test_cache {
        Some(path) => load_cache(path, &config)?,
        None => select_samples(
            &args.mnist,
            Split::Test,
            &digits,
            args.selection.test_per_class,
            args.selection.data_seed,
            config.n,
        )?,
    };
    println!("train samples: {}, test samples: {}", train_set.len(), test_set.len());

    let mut runs = Vec::new();
    for r in 0..args.repeats {
        let seed = args.seed + r;
        let prefix = if args.repeats > 1 {
            PathBuf::from(format!("seed-{seed}"))
        } else {
            PathBuf::new()
        };
        let result = match train::fit(&model, &train_set, &test_set, &run_config(seed)) {
            Ok(result) => result,
            Err(TrainError::Divergence { epoch, batch, partial }) => {
                rec.write_timed(prefix.join("metrics.csv"), partial.to_csv())?;
                rec.write(prefix.join("report.json"), serde_json::to_string_pretty(&partial)? + "\n")?;
                rec.finish(config_json, Some(seed))?;
                return Err(TrainError::Divergence { epoch, batch, partial }.into());
            }
            Err(e) => return Err(e.into()),
        };
        let m = &result.metrics;
        rec.write_timed(prefix.join("metrics.csv"), m.to_csv())?;
        if let Some(c) = &m.confusion {
            rec.write(prefix.join("confusion.csv"), c.to_csv())?;
        }
        if let Some(c) = &m.final_confusion {
            rec.write(prefix.join("confusion_final.csv"), c.to_csv())?;
        }
        rec.write(
            prefix.join("checkpoint_best.json"),
            Checkpoint::new(&model, result.best_params.clone()).to_json(),
        )?;
        rec.write(
            prefix.join("checkpoint_final.json"),
            Checkpoint::new(&model, result.final_params.clone()).to_json(),
        )?;
        let run_report = json!({
            "config": { "model": config, "train": run_config(seed), "digits": digits },
            "seed": seed,
            "metrics": m,
        });
        rec.write_timed(prefix.join("report.json"), serde_json::to_string_pretty(&run_report)? + "\n")?;
        if let (Some(best), Some(last)) = (m.best(), m.last()) {
            println!(
                "seed {seed}: best test accuracy {:.4} (epoch {}), final test accuracy {:.4}",
                best.test_accuracy, m.best_epoch, last.test_accuracy
            );
        }
        runs.push(result.metrics);
    }
    if runs.len() > 1 {
        rec.write_timed("metrics_mean.csv", mean_metrics(&runs))?;
        let confusions: Vec<&ConfusionMatrix> = runs.iter().filter_map(|m| m.confusion.as_ref()).collect();
        rec.write("confusion_mean.csv", mean_confusion(&confusions))?;
    }
    rec.finish(config_json, Some(args.seed))?;
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let (model, params): (Model, ParamVector) = ckpt.into_model()?;
    let config = model.config().clone();
    let samples = match &args.cache {
        Some(path) => load_cache(path, &config)?,
        None => {
            let digits = args
                .digits
                .clone()
                .unwrap_or_else(|| (0..config.num_classes.min(10) as u8).collect());
            if digits.len() != config.num_classes {
                bail!("{} digits given for a {}-class model", digits.len(), config.num_classes);
            }
            select_samples(&args.mnist, args.split.into(), &digits, args.per_class, args.data_seed, config.n)?
        }
    };
    if samples.is_empty() {
        bail!("no samples to evaluate");
    }
    let eval = train::evaluate(&model, params.as_slice(), &samples)?;
    println!("samples: {}", samples.len());
    println!("loss: {}", eval.loss);
    println!("accuracy: {}", eval.accuracy);
    if let Some(parent) = args.confusion.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&args.confusion, eval.confusion.to_csv())
        .with_context(|| format!("writing {}", args.confusion.display()))?;
    Ok(())
}

pub fn dataset_cache(args: &CacheArgs) -> Result<()> {
    let digits = args.digits.clone().unwrap_or_else(|| (0..10).collect());
    let samples = select_samples(&args.mnist, args.split.into(), &digits, args.per_class, args.data_seed, args.n)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    data::write_cache(&args.out, &samples)?;
    println!("wrote {} samples ({}x{}) to {}", samples.len(), 1 << args.n, 1 << args.n, args.out.display());
    Ok(())
}
