//! Training loop, optimizer, checkpoints and inference.
//!
//! Every epoch visits the patches in a seeded random order. Each visit
//! corrupts the clean patch with fresh noise (drawn from a stream keyed by
//! epoch and patch index) followed by a Gaussian blur, and the network is
//! regressed onto the clean patch under mean squared error with Adam.

mod adam;
mod checkpoint;
mod stylize;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta, FORMAT_VERSION, MAGIC};
pub use stylize::{infer_padded, stylize};

use crate::error::{Error, Result};
use crate::imageops::{add_noise, gaussian_blur, ImageTensor, NoiseSpec};
use crate::patchgen::{PatchSource, StrokeStyleSpec};
use crate::rng::{self, Domain};
use crate::unet::{mse_loss, ModelState, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub blur_radius: f64,
    pub noise: NoiseSpec,
    pub noise_probability: f64,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<u64>,
    pub checkpoint_path: Option<PathBuf>,
    /// CSV file receiving one `epoch,mean_loss,seconds` row per epoch.
    pub metrics_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 4,
            blur_radius: 5.0,
            noise: NoiseSpec::NONE,
            noise_probability: 0.0,
            seed: 0,
            adam: AdamConfig::default(),
            max_steps: None,
            checkpoint_path: None,
            metrics_path: None,
        }
    }
}

impl TrainConfig {
    /// Defaults with the corruption noise taken from a style.
    pub fn for_style(spec: &StrokeStyleSpec) -> Self {
        TrainConfig {
            noise: spec.noise,
            noise_probability: spec.noise_probability,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        // Zero is allowed and leaves the parameters untouched.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.blur_radius >= 0.0 && self.blur_radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "blur radius must be finite and >= 0, got {}",
                self.blur_radius
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_probability) {
            return Err(Error::InvalidArgument(format!(
                "noise probability must lie in [0, 1], got {}",
                self.noise_probability
            )));
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidArgument("max steps must be >= 1".into()));
        }
        self.noise.validate()?;
        self.adam.validate()
    }
}

/// Noise (with probability `noise_probability`) followed by blur.
///
/// The coin is only flipped when the probability is strictly between 0
/// and 1, so at probability 1 the stream feeds the noise draws directly.
pub fn corrupt<R: Rng + ?Sized>(patch: &ImageTensor, cfg: &TrainConfig, rng: &mut R) -> Result<ImageTensor> {
    let p = cfg.noise_probability;
    let noisy = !cfg.noise.is_none() && (p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p));
    if noisy {
        gaussian_blur(&add_noise(patch, &cfg.noise, rng), cfg.blur_radius)
    } else {
        gaussian_blur(patch, cfg.blur_radius)
    }
}

/// Corrupts patch `index` as seen on visit `epoch`.
pub fn corrupt_visit(patch: &ImageTensor, cfg: &TrainConfig, epoch: usize, index: usize) -> Result<ImageTensor> {
    let mut rng = rng::stream(cfg.seed, Domain::Corrupt, rng::visit_index(epoch, index));
    corrupt(patch, cfg, &mut rng)
}

/// Patch visiting order for one epoch.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::stream(seed, Domain::Shuffle, epoch as u64));
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochMetrics>,
    pub steps: u64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }
}

struct MetricsLog {
    file: File,
    path: PathBuf,
}

impl MetricsLog {
    fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut log = MetricsLog {
            file,
            path: path.to_path_buf(),
        };
        let empty = log.file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
        if empty {
            log.line("epoch,mean_loss,seconds")?;
        }
        Ok(log)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.file, "{text}").map_err(|e| Error::io(&self.path, e))
    }
}

fn check_compatible<S: PatchSource + ?Sized>(source: &S, model: &ModelState) -> Result<()> {
    if source.is_empty() {
        return Err(Error::InvalidArgument("patch set is empty".into()));
    }
    let cfg = model.config();
    if cfg.in_channels != 3 || cfg.out_channels != 3 {
        return Err(Error::Shape(format!(
            "patches are RGB but the model maps {} to {} channels",
            cfg.in_channels, cfg.out_channels
        )));
    }
    let dims = source.dims();
    let m = cfg.size_multiple();
    if !dims.height.is_multiple_of(m) || !dims.width.is_multiple_of(m) {
        return Err(Error::IndivisibleDims {
            height: dims.height,
            width: dims.width,
            multiple: m,
        });
    }
    Ok(())
}

/// Trains `model` in place on `source` and returns the per-epoch metrics
/// with a checkpoint of the final parameters. The result depends only on
/// the patches, `cfg` and the initial parameters.
pub fn train<S: PatchSource + ?Sized>(source: &S, model: &mut ModelState, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_compatible(source, model)?;
    let mut metrics_log = cfg.metrics_path.as_deref().map(MetricsLog::open).transpose()?;
    let mut adam = AdamState::new(model);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut epochs_completed = 0;
    let dims = source.dims();

    'epochs: for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let order = epoch_order(source.len(), cfg.seed, epoch);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|max| adam.t >= max) {
                break;
            }
            let pairs: Vec<(ImageTensor, ImageTensor)> = batch
                .par_iter()
                .map(|&i| {
                    let clean = source.patch(i)?;
                    if clean.dims() != dims || clean.channels() != 3 {
                        return Err(Error::Shape(format!(
                            "patch {i} is {}x{}x{}, expected 3x{}x{}",
                            clean.channels(),
                            clean.height(),
                            clean.width(),
                            dims.height,
                            dims.width
                        )));
                    }
                    let input = corrupt_visit(&clean, cfg, epoch, i)?;
                    Ok((input, clean))
                })
                .collect::<Result<_>>()?;

            // Images are independent under instance norm, so the batch
            // gradient is accumulated one image at a time.
            model.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for (input, clean) in &pairs {
                let ys = model.forward_recorded(&[Tensor::from_image(input)])?;
                let loss = mse_loss(&ys, &[Tensor::from_image(clean)])?.scale(scale);
                batch_loss += loss.value();
                model.backward(&loss)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    step: adam.t as usize + 1,
                });
            }
            adam_step(model, &mut adam, cfg.learning_rate, &cfg.adam)?;
            loss_sum += batch_loss * batch.len() as f64;
            seen += batch.len();
        }
        if seen == 0 {
            break 'epochs;
        }
        let record = EpochMetrics {
            epoch: epoch + 1,
            mean_loss: loss_sum / seen as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(log) = metrics_log.as_mut() {
            log.line(&format!("{},{},{:.3}", record.epoch, record.mean_loss, record.seconds))?;
        }
        epochs.push(record);
        if seen == source.len() {
            epochs_completed += 1;
        }
    }
    model.zero_grads();

    let meta = TrainingMeta {
        style: source.spec().name.clone(),
        seed: cfg.seed,
        epochs_completed,
        steps: adam.t,
        final_loss: epochs.last().map(|e| e.mean_loss),
    };
    let checkpoint = Checkpoint::new(model.clone(), meta);
    if let Some(path) = &cfg.checkpoint_path {
        checkpoint.save(path)?;
    }
    Ok(TrainReport {
        checkpoint,
        epochs,
        steps: adam.t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::NoiseKind;
    use crate::patchgen::{generate_patch_set, preset};
    use crate::unet::{build_unet, UNetConfig};

    fn small_style() -> StrokeStyleSpec {
        StrokeStyleSpec {
            width: 16,
            height: 16,
            count: 5,
            strokes_per_patch: 4,
            stroke_length: 8.0,
            stroke_thickness: 4.0,
            ..preset("wet_brush").unwrap()
        }
    }

    fn small_model() -> ModelState {
        build_unet(
            UNetConfig {
                depth: 1,
                base_channels: 2,
                ..UNetConfig::default()
            },
            0,
        )
        .unwrap()
    }

    fn cfg(spec: &StrokeStyleSpec) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 2,
            blur_radius: 1.0,
            seed: 5,
            ..TrainConfig::for_style(spec)
        }
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.learning_rate, c.batch_size, c.blur_radius), (10, 1e-3, 4, 5.0));
        assert_eq!(c.adam, AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 });
        let wet = TrainConfig::for_style(&preset("wet_brush").unwrap());
        assert_eq!(wet.noise.kind, NoiseKind::Gaussian);
        assert_eq!(wet.noise_probability, 1.0);
    }

    #[test]
    fn identity_corruption() {
        let set = generate_patch_set(&small_style(), 1).unwrap();
        let c = TrainConfig {
            noise_probability: 0.0,
            blur_radius: 0.0,
            ..cfg(set.spec())
        };
        let p = &set.patches()[0];
        assert_eq!(&corrupt_visit(p, &c, 0, 0).unwrap(), p);
    }

    #[test]
    fn corruption_without_noise_is_blur() {
        let set = generate_patch_set(&small_style(), 1).unwrap();
        let c = TrainConfig {
            noise: NoiseSpec::NONE,
            noise_probability: 1.0,
            blur_radius: 5.0,
            ..cfg(set.spec())
        };
        let p = &set.patches()[1];
        assert_eq!(corrupt_visit(p, &c, 3, 1).unwrap(), gaussian_blur(p, 5.0).unwrap());
    }

    #[test]
    fn noise_is_fresh_per_epoch() {
        let set = generate_patch_set(&small_style(), 1).unwrap();
        let c = cfg(set.spec());
        let p = &set.patches()[0];
        assert_eq!(corrupt_visit(p, &c, 0, 0).unwrap(), corrupt_visit(p, &c, 0, 0).unwrap());
        assert_ne!(corrupt_visit(p, &c, 0, 0).unwrap(), corrupt_visit(p, &c, 1, 0).unwrap());
    }

    #[test]
    fn partial_probability_mixes_clean_and_noisy_visits() {
        let set = generate_patch_set(&small_style(), 1).unwrap();
        let c = TrainConfig {
            noise_probability: 0.5,
            blur_radius: 0.0,
            ..cfg(set.spec())
        };
        let p = &set.patches()[0];
        let clean = (0..200).filter(|&e| &corrupt_visit(p, &c, e, 0).unwrap() == p).count();
        assert!((60..140).contains(&clean), "{clean}");
    }

    #[test]
    fn order_is_a_seeded_permutation() {
        let a = epoch_order(10, 3, 0);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(10, 3, 0));
        assert_ne!(a, epoch_order(10, 3, 1));
    }

    #[test]
    fn training_is_deterministic_and_logs_metrics() {
        let set = generate_patch_set(&small_style(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let c = TrainConfig {
            metrics_path: Some(dir.path().join("m.csv")),
            checkpoint_path: Some(dir.path().join("a.spck")),
            ..cfg(set.spec())
        };
        let mut m1 = small_model();
        let r1 = train(&set, &mut m1, &c).unwrap();
        let mut m2 = small_model();
        let r2 = train(
            &set,
            &mut m2,
            &TrainConfig {
                metrics_path: None,
                checkpoint_path: Some(dir.path().join("b.spck")),
                ..c.clone()
            },
        )
        .unwrap();
        // Three batches per epoch with the last one partial.
        assert_eq!(r1.steps, 6);
        assert_eq!(r1.checkpoint.meta.epochs_completed, 2);
        let losses = |r: &TrainReport| r.epochs.iter().map(|e| e.mean_loss).collect::<Vec<_>>();
        assert_eq!(losses(&r1), losses(&r2));
        assert_eq!(
            std::fs::read(dir.path().join("a.spck")).unwrap(),
            std::fs::read(dir.path().join("b.spck")).unwrap()
        );
        let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,mean_loss,seconds");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let set = generate_patch_set(&small_style(), 2).unwrap();
        let mut model = small_model();
        let report = train(
            &set,
            &mut model,
            &TrainConfig {
                learning_rate: 0.0,
                noise_probability: 0.0,
                ..cfg(set.spec())
            },
        )
        .unwrap();
        for (a, b) in small_model().params().values().zip(model.params().values()) {
            assert_eq!(a, b);
        }
        assert_eq!(report.epochs[0].mean_loss, report.epochs[1].mean_loss);
    }

    #[test]
    fn max_steps_stops_mid_epoch() {
        let set = generate_patch_set(&small_style(), 2).unwrap();
        let mut model = small_model();
        let report = train(
            &set,
            &mut model,
            &TrainConfig {
                max_steps: Some(1),
                ..cfg(set.spec())
            },
        )
        .unwrap();
        assert_eq!(report.steps, 1);
        assert_eq!(report.epochs.len(), 1);
        assert_eq!(report.checkpoint.meta.epochs_completed, 0);
    }

    #[test]
    fn incompatible_inputs_are_rejected() {
        let spec = StrokeStyleSpec {
            width: 18,
            ..small_style()
        };
        let set = generate_patch_set(&spec, 2).unwrap();
        let mut deep = build_unet(
            UNetConfig {
                depth: 2,
                base_channels: 2,
                ..UNetConfig::default()
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            train(&set, &mut deep, &cfg(&spec)),
            Err(Error::IndivisibleDims { multiple: 4, .. })
        ));
        let bad = TrainConfig {
            batch_size: 0,
            ..cfg(&spec)
        };
        assert!(train(&set, &mut small_model(), &bad).is_err());
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut model = small_model();
        let set = generate_patch_set(&small_style(), 2).unwrap();
        model.param_mut("head.bias").unwrap().data[0] = f32::NAN;
        let err = train(&set, &mut model, &cfg(set.spec())).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, step: 1 }), "{err}");

        let mut model = small_model();
        let mut adam = AdamState::new(&model);
        let ys = model.forward_recorded(&[Tensor::zeros(3, 4, 4)]).unwrap();
        let mut loss = mse_loss(&ys, &[Tensor::zeros(3, 4, 4)]).unwrap();
        loss = loss.scale(f64::INFINITY);
        model.backward(&loss).unwrap();
        let first_bad = model
            .params()
            .keys()
            .zip(model.grads())
            .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name.clone())
            .unwrap();
        let err = adam_step(&mut model, &mut adam, 1e-3, &AdamConfig::default()).unwrap_err();
        assert!(matches!(&err, Error::NonFiniteGradient { param } if *param == first_bad), "{err}");
        assert_eq!(adam.t, 0);
    }
}
