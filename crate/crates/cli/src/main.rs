//! `eqr`: command-line front end for eqr-core.
//!
//! Exit codes: 0 on success, 1 when a check fails or an input is invalid,
//! 2 on usage errors.

use clap::{Parser, Subcommand, ValueEnum};
use eqr_core::constructive::{build_binary_network, build_restorer, BinaryDecompositionSpec};
use eqr_core::io::{load_manifest, load_pgm, prep, save_pgm};
use eqr_core::net::{codec as net_codec, max_equivariance_deviation};
use eqr_core::restore::{
    build_rotation_estimator, eval_grid, margin, restore, restore_rotation, to_polar, Estimate,
    EvalGridConfig, NearestNeighbor, PolarGridSpec, RestorationResult,
};
use eqr_core::tensor::codec::{self as tensor_codec, Dtype};
use eqr_core::tensor::{CircularTensor, MultiTensor, Shape, TranslationVector};
use eqr_core::training::{log_to_csv, train_with, TrainConfig};
use eqr_core::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "eqr",
    version,
    about = "Translation-equivariant restorers on circular tensors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Translate,
    Rotate,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifierKind {
    Nn,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network for translation equivariance on a random input.
    VerifyEquivariance {
        #[arg(long)]
        net: PathBuf,
        /// Spatial shape the network was built for, e.g. 6x6.
        #[arg(long)]
        shape: String,
        /// Check every translation instead of a random sample.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        #[arg(long, env = "EQR_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Build the constructive restorer for an aperiodic dataset.
    BuildConstructive {
        #[arg(long)]
        dataset: PathBuf,
        /// Bit count Q; defaults to the manifest's range tag.
        #[arg(long)]
        bits: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an estimator by gradient descent.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// key = value file; missing keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long, env = "EQR_SEED")]
        seed: Option<u64>,
    },
    /// Print the translation an estimator reads off an input.
    Estimate {
        #[arg(long)]
        net: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Estimate the translation or rotation of an input and undo it.
    Restore {
        #[arg(long)]
        net: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Translate)]
        mode: Mode,
        #[arg(long = "polar-spec", required_if_eq("mode", "rotate"))]
        polar_spec: Option<PathBuf>,
    },
    /// Classifier accuracy with and without the restorer per shift scope.
    Eval {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = ClassifierKind::Nn)]
        classifier: ClassifierKind,
        #[arg(long = "max-shift", default_value_t = 8)]
        max_shift: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "EQR_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Resample an image on a polar grid (radii become channels).
    Polar {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "polar-spec")]
        polar_spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a rotation estimator matched to a template image.
    BuildTemplate {
        #[arg(long)]
        template: PathBuf,
        #[arg(long = "polar-spec")]
        polar_spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the bits of a value, least significant first, as computed by
    /// the decomposition network.
    DecomposeBits {
        #[arg(long)]
        value: u64,
        #[arg(long)]
        bits: u32,
    },
    /// Resize (nearest neighbor) and pad a PGM image.
    Prep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Target size HxW.
        #[arg(long)]
        resize: Option<String>,
        #[arg(long, default_value_t = 0)]
        pad: usize,
        #[arg(long = "pad-value", default_value_t = 0.0)]
        pad_value: f64,
    },
}

/// A failed check, as opposed to an error: the output is still printed.
struct CheckFailed(String);

enum Failure {
    Error(Error),
    Check(CheckFailed),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type CmdResult = std::result::Result<String, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Check(CheckFailed(out))) => {
            print!("{out}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn read_tensor(path: &Path) -> Result<MultiTensor> {
    if is_pgm(path) {
        Ok(load_pgm(path)?.into())
    } else {
        Ok(tensor_codec::read_file(path)?.0)
    }
}

fn read_image(path: &Path) -> Result<CircularTensor> {
    let x = read_tensor(path)?;
    if x.channels() != 1 {
        return Err(Error::Shape(format!(
            "{}: expected a single-channel image",
            path.display()
        )));
    }
    Ok(x.channel_tensor(0))
}

fn write_tensor(path: &Path, x: &MultiTensor) -> Result<()> {
    if is_pgm(path) {
        if x.channels() != 1 {
            return Err(Error::Shape(
                "PGM output needs a single-channel tensor".into(),
            ));
        }
        save_pgm(&x.channel_tensor(0), path)
    } else {
        tensor_codec::write_file(path, x, Dtype::F64)
    }
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::VerifyEquivariance {
            net,
            shape,
            exhaustive,
            samples,
            tolerance,
            seed,
        } => {
            let shape = Shape::parse(&shape)?;
            let net = net_codec::read_file(&net, &shape)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..net.in_channels() * shape.len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let x = MultiTensor::new(shape.clone(), net.in_channels(), data)?;
            let mut shifts = TranslationVector::all(&shape);
            if !exhaustive {
                shifts.shuffle(&mut rng);
                shifts.truncate(samples.max(1));
            }
            let (dev, m) = max_equivariance_deviation(&net, &x, &shifts)?;
            let out = format!(
                "translations checked: {}\nmax deviation: {dev:e} at {:?}\ntolerance: {tolerance:e}\n",
                shifts.len(),
                m.offsets()
            );
            if dev <= tolerance {
                Ok(out + "equivariant\n")
            } else {
                Err(Failure::Check(CheckFailed(out + "NOT equivariant\n")))
            }
        }
        Command::BuildConstructive { dataset, bits, out } => {
            let data = load_manifest(&dataset)?;
            let q = bits.unwrap_or_else(|| data.bits());
            let est = build_restorer(&data.elements, q)?;
            est.check_bounds(data.elements.len())?;
            net_codec::write_file(&out, &est.network)?;
            let mut s = String::new();
            let _ = writeln!(
                s,
                "dataset: {} ({} elements)",
                est.certificate.dataset_id,
                data.elements.len()
            );
            let _ = writeln!(
                s,
                "certificate: {:?} over {:?}",
                est.certificate.verdict, est.certificate.scope
            );
            let _ = writeln!(s, "bits Q: {q}");
            let _ = writeln!(s, "alpha: {:e}", est.alpha());
            let _ = writeln!(s, "depth: {}", est.depth());
            let _ = writeln!(s, "width: {}", est.width());
            let _ = writeln!(s, "element\tlabel\tmargin");
            for (i, (x, label)) in data.elements.iter().zip(&data.labels).enumerate() {
                let m = margin(&est.network.forward(x)?.into_vec());
                let _ = writeln!(s, "{i}\t{label}\t{m:e}");
            }
            Ok(s)
        }
        Command::Train {
            dataset,
            config,
            out,
            log,
            seed,
        } => {
            let data = load_manifest(&dataset)?;
            let mut cfg = match config {
                Some(p) => TrainConfig::read_file(p)?,
                None => TrainConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let result = train_with(&data.elements, &cfg, |_, _| {})?;
            net_codec::write_file(&out, &result.network)?;
            if let Some(log) = log {
                std::fs::write(log, log_to_csv(&result.log))?;
            }
            let mut s = String::new();
            for w in &result.warnings {
                let _ = writeln!(s, "warning: {w}");
            }
            if let Some(last) = result.log.last() {
                let _ = writeln!(
                    s,
                    "epochs: {}\nloss: {:.6}\nargmax0 accuracy: {:.4}\nmin margin: {:.6}",
                    last.epoch, last.loss, last.accuracy, last.min_margin
                );
            }
            Ok(s)
        }
        Command::Estimate { net, input } => {
            let x = read_tensor(&input)?;
            let net = net_codec::read_file(&net, x.shape())?;
            let r = restore(&net, &x)?;
            Ok(describe(&r))
        }
        Command::Restore {
            net,
            input,
            out,
            mode,
            polar_spec,
        } => {
            let r = match mode {
                Mode::Translate => {
                    let x = read_tensor(&input)?;
                    let net = net_codec::read_file(&net, x.shape())?;
                    restore(&net, &x)?
                }
                Mode::Rotate => {
                    let spec = PolarGridSpec::read_file(polar_spec.expect("required by clap"))?;
                    let net = net_codec::read_file(&net, &spec.angular_shape())?;
                    restore_rotation(&net, &read_image(&input)?, &spec)?
                }
            };
            write_tensor(&out, &r.restored)?;
            Ok(describe(&r))
        }
        Command::Eval {
            net,
            dataset,
            classifier,
            max_shift,
            trials,
            out,
            seed,
        } => {
            let data = load_manifest(&dataset)?;
            let net = net_codec::read_file(&net, &data.manifest.shape)?;
            let nn = match classifier {
                ClassifierKind::Nn => {
                    NearestNeighbor::new(data.elements.clone(), data.labels.clone())?
                }
            };
            let config = EvalGridConfig {
                max_shift,
                trials_per_element: trials,
                seed,
            };
            let table = eval_grid(&net, &nn, &data.elements, &data.labels, &config)?;
            let csv = table.to_csv();
            if let Some(out) = out {
                std::fs::write(out, &csv)?;
            }
            Ok(csv)
        }
        Command::Polar {
            input,
            polar_spec,
            out,
        } => {
            let spec = PolarGridSpec::read_file(polar_spec)?;
            let polar = to_polar(&read_image(&input)?, &spec)?;
            tensor_codec::write_file(&out, &polar, Dtype::F64)?;
            Ok(format!(
                "polar grid: {} radii x {} angles\n",
                polar.channels(),
                polar.shape()
            ))
        }
        Command::BuildTemplate {
            template,
            polar_spec,
            out,
        } => {
            let spec = PolarGridSpec::read_file(polar_spec)?;
            let net = build_rotation_estimator(&read_image(&template)?, &spec)?;
            net_codec::write_file(&out, &net)?;
            Ok(format!(
                "rotation estimator: {} radii x {} angles, {:.4} degrees per bin\n",
                spec.radial_bins,
                spec.angular_bins,
                spec.bin_degrees()
            ))
        }
        Command::DecomposeBits { value, bits } => {
            let spec = BinaryDecompositionSpec::new(bits, 1)?;
            if value >= spec.value_bound() {
                return Err(
                    Error::Input(format!("{value} needs more than {} bits", bits + 1)).into(),
                );
            }
            let shape = Shape::new(&[1])?;
            let net = build_binary_network(spec, &shape)?;
            let out = net.forward(&MultiTensor::new(shape, 1, vec![value as f64])?)?;
            let words: Vec<String> = out.as_slice().iter().map(|b| format!("{b}")).collect();
            Ok(words.join(" ") + "\n")
        }
        Command::Prep {
            input,
            out,
            resize,
            pad,
            pad_value,
        } => {
            let mut img = load_pgm(&input)?;
            if let Some(size) = resize {
                let dims = Shape::parse(&size)?;
                let &[h, w] = dims.dims() else {
                    return Err(Error::Input(format!("--resize needs HxW, got {size}")).into());
                };
                img = prep::resize_nearest(&img, h, w)?;
            }
            if pad > 0 {
                img = prep::pad_constant(&img, pad, pad_value)?;
            }
            save_pgm(&img, &out)?;
            Ok(format!("wrote {}\n", img.shape()))
        }
    }
}

fn describe(r: &RestorationResult) -> String {
    let estimate = match &r.estimate {
        Estimate::Translation(m) => format!("translation {:?}", m.offsets()),
        Estimate::RotationBin(k) => format!("rotation bin {k}"),
    };
    format!(
        "estimate: {estimate}\nmargin: {:e}\ndegenerate: {}\n",
        r.margin, r.degenerate
    )
}
