//! capsfold: encode protein structures as voxel grids and classify them
//! with a capsule network.

mod dataset;
mod errors;
mod io;
mod plot;

use std::io::Cursor;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use capsfold_core::capsnet::{
    grid_tensor, preset, CapsNetModel, CheckpointExtras, Hyperparameters, LossKind, Mode,
    RmsPropConfig, PRESET_NAMES,
};
use capsfold_core::interpret::{channel_scores, perturb_and_compare};
use capsfold_core::pdb::{ChannelClass, StructureEdit};
use capsfold_core::train::{
    evaluate, metrics_csv, prediction_accuracy, split, train_with_progress, Evaluation,
    LabeledSample, SplitConfig, TimingMode, TrainOptions,
};
use capsfold_core::voxel::{encode, write_cvox, VoxelGrid};

use dataset::{default_jobs, load_dataset};
use errors::CliError;
use io::{atomic_write, read_model, read_sample, read_structure, SampleInput};

#[derive(Parser)]
#[command(
    name = "capsfold",
    version,
    about = "Protein structure classification with capsule networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print residue/atom counts and per-channel tallies for a PDB file
    Inspect { file: PathBuf },
    /// Encode a PDB file as a CVOX voxel grid
    Voxelize {
        input: PathBuf,
        /// Encoding: 3d (64^3 cube) or 2d (512^2 Hilbert layout)
        #[arg(long, default_value = "3d")]
        mode: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train a model on a dataset directory (<root>/<class>/*.pdb)
    Train(Box<TrainArgs>),
    /// Evaluate a model over every sample in a dataset directory
    Evaluate {
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Worker threads for voxelization (default: logical CPUs)
        #[arg(long)]
        jobs: Option<usize>,
        /// Write the JSON report here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Classify one sample (PDB text or CVOX grid)
    Predict {
        model: PathBuf,
        input: PathBuf,
        /// Must match the model's mode when given
        #[arg(long)]
        mode: Option<String>,
    },
    /// Compare activation vectors before and after a structural edit
    Perturb(PerturbArgs),
    /// Retain-one-channel scores for a structure
    ChannelScores(ChannelScoresArgs),
    /// Render a metrics CSV as accuracy/loss curves (PNG)
    Plot {
        metrics: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Named preset: 2d-kras-hras, 3d-kras-hras, 2d-psi-blast, 3d-psi-blast
    #[arg(long)]
    preset: Option<String>,
    /// JSON experiment config; command-line flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// 2d or 3d (required unless a preset or config provides it)
    #[arg(long)]
    mode: Option<String>,
    /// categorical_hinge or logcosh
    #[arg(long)]
    loss: Option<String>,
    /// Seeds weight init (seed), the split (seed) and the shuffle (seed+1)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory for metrics.csv, model.cwts, test_report.json
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for voxelization (default: logical CPUs)
    #[arg(long)]
    jobs: Option<usize>,
    /// seconds column source: wall (default) or zero (reproducible output)
    #[arg(long)]
    timing: Option<String>,
    /// Split fractions, e.g. 0.7,0.15,0.15
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    primarycap_dim: Option<usize>,
    #[arg(long)]
    voxelcap_dim: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    routing_iterations: Option<usize>,
    #[arg(long)]
    primary_maps: Option<usize>,
    /// Disable the ReLU after the first convolution
    #[arg(long)]
    no_relu: bool,
}

#[derive(Args)]
struct PerturbArgs {
    model: PathBuf,
    pdb: PathBuf,
    /// Delete residues, e.g. A:152-166
    #[arg(long, value_name = "CHAIN:START-END")]
    remove_range: Option<String>,
    /// Delete every atom with this name, e.g. CB
    #[arg(long, value_name = "NAME")]
    remove_atoms: Option<String>,
    /// Translate residues, e.g. A:152-166:1.5,0,-2
    #[arg(long, value_name = "CHAIN:START-END:DX,DY,DZ")]
    translate: Option<String>,
    /// Must match the model's mode when given
    #[arg(long)]
    mode: Option<String>,
    /// Write the JSON report here instead of stdout
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ChannelScoresArgs {
    model: PathBuf,
    pdb: PathBuf,
    /// Reference class index; defaults to the predicted class
    #[arg(long)]
    label: Option<usize>,
    /// Write the CSV here instead of stdout
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also render a bar chart PNG
    #[arg(long)]
    plot: Option<PathBuf>,
}

/// JSON experiment config (overridden by flags).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    preset: Option<String>,
    data: Option<PathBuf>,
    mode: Option<String>,
    loss: Option<String>,
    seed: Option<u64>,
    epochs: Option<usize>,
    out: Option<PathBuf>,
    split: Option<[f64; 3]>,
    jobs: Option<usize>,
    timing: Option<String>,
    hyperparameters: Option<HyperPatch>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperPatch {
    filters: Option<usize>,
    kernel_size: Option<usize>,
    primarycap_dim: Option<usize>,
    voxelcap_dim: Option<usize>,
    stride: Option<usize>,
    routing_iterations: Option<usize>,
    primary_maps: Option<usize>,
    n_classes: Option<usize>,
    relu: Option<bool>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            // clap's message already carries the `error:` prefix
            eprint!("{e}");
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Inspect { file } => cmd_inspect(&file),
        Command::Voxelize { input, mode, output } => cmd_voxelize(&input, &mode, &output),
        Command::Train(args) => cmd_train(*args),
        Command::Evaluate {
            model,
            data,
            jobs,
            output,
        } => cmd_evaluate(&model, &data, jobs, output.as_deref()),
        Command::Predict { model, input, mode } => cmd_predict(&model, &input, mode.as_deref()),
        Command::Perturb(args) => cmd_perturb(args),
        Command::ChannelScores(args) => cmd_channel_scores(args),
        Command::Plot { metrics, output } => cmd_plot(&metrics, &output),
    }
}

fn parse_mode(s: &str) -> Result<Mode, CliError> {
    Mode::parse(s).ok_or_else(|| CliError::usage(format!("invalid mode {s:?}, expected 2d or 3d")))
}

fn parse_loss(s: &str) -> Result<LossKind, CliError> {
    LossKind::parse(s).ok_or_else(|| {
        CliError::usage(format!(
            "invalid loss {s:?}, expected categorical_hinge or logcosh"
        ))
    })
}

fn cmd_inspect(file: &Path) -> Result<(), CliError> {
    let structure = read_structure(file)?;
    let (tallies, unclassified) = structure.channel_tallies();
    let ca = structure.atoms().filter(|a| a.name == "CA").count();
    let cb = structure.atoms().filter(|a| a.name == "CB").count();
    println!("source: {}", structure.source_id);
    println!("residues: {}", structure.residue_count());
    println!("atoms: {}", structure.atom_count());
    println!("channel tallies (residues for side-chain classes, atoms for CA/CB):");
    for class in ChannelClass::ALL {
        let count = match class {
            ChannelClass::AlphaCarbon => ca,
            ChannelClass::BetaCarbon => cb,
            side_chain => tallies[side_chain.index()],
        };
        println!("  {}: {}", class.name(), count);
    }
    println!("  unclassified residues: {unclassified}");
    Ok(())
}

fn cmd_voxelize(input: &Path, mode: &str, output: &Path) -> Result<(), CliError> {
    let mode = parse_mode(mode)?;
    let structure = read_structure(input)?;
    let grid = encode(&structure, mode)?;
    let mut bytes = Vec::new();
    write_cvox(&mut bytes, &grid)?;
    atomic_write(output, &bytes)?;
    let occupied: usize = grid.popcounts().iter().sum();
    println!(
        "wrote {} ({}, extent {}, {} occupied voxels)",
        output.display(),
        grid.mode().as_str(),
        grid.extent(),
        occupied
    );
    Ok(())
}

/// Fold config file, preset, and flags into the final training setup.
struct TrainPlan {
    data: PathBuf,
    mode: Mode,
    loss: LossKind,
    hp: Hyperparameters,
    seed: u64,
    epochs: usize,
    out: PathBuf,
    jobs: usize,
    timing: TimingMode,
    fractions: [f64; 3],
}

fn resolve_train_plan(args: &TrainArgs) -> Result<TrainPlan, CliError> {
    let config: ExperimentConfig = match &args.config {
        Some(path) => {
            let bytes = io::read_file(path)?;
            serde_json::from_slice(&bytes)
                .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };

    let preset_name = args.preset.clone().or(config.preset);
    let chosen = match &preset_name {
        Some(name) => Some(preset(name).ok_or_else(|| {
            CliError::usage(format!(
                "unknown preset {name:?}, expected one of {}",
                PRESET_NAMES.join(", ")
            ))
        })?),
        None => None,
    };

    // mode/loss: flag > config > preset; contradictions with a preset are errors.
    let mode_str = args.mode.clone().or(config.mode);
    let loss_str = args.loss.clone().or(config.loss);
    let (mode, loss) = match &chosen {
        Some(p) => {
            let mode = match mode_str {
                Some(s) => {
                    let m = parse_mode(&s)?;
                    if m != p.mode {
                        return Err(CliError::usage(format!(
                            "mode {} conflicts with preset {} ({})",
                            m.as_str(),
                            p.name,
                            p.mode.as_str()
                        )));
                    }
                    m
                }
                None => p.mode,
            };
            let loss = match loss_str {
                Some(s) => {
                    let l = parse_loss(&s)?;
                    if l != p.loss {
                        return Err(CliError::usage(format!(
                            "loss {} conflicts with preset {} ({})",
                            l.as_str(),
                            p.name,
                            p.loss.as_str()
                        )));
                    }
                    l
                }
                None => p.loss,
            };
            (mode, loss)
        }
        None => {
            let mode = parse_mode(&mode_str.ok_or_else(|| {
                CliError::usage("missing --mode (or use --preset / a config file)")
            })?)?;
            let loss = parse_loss(&loss_str.ok_or_else(|| {
                CliError::usage("missing --loss (or use --preset / a config file)")
            })?)?;
            (mode, loss)
        }
    };

    // Base hyperparameters: the preset's, or the mode's kras-hras values.
    let mut hp = match &chosen {
        Some(p) => p.hyperparameters.clone(),
        None => {
            let fallback = match mode {
                Mode::D2 => "2d-kras-hras",
                Mode::D3 => "3d-kras-hras",
            };
            preset(fallback).expect("built-in preset").hyperparameters
        }
    };
    if let Some(patch) = &config.hyperparameters {
        apply_patch(&mut hp, patch);
    }
    let flag_patch = HyperPatch {
        filters: args.filters,
        kernel_size: args.kernel_size,
        primarycap_dim: args.primarycap_dim,
        voxelcap_dim: args.voxelcap_dim,
        stride: args.stride,
        routing_iterations: args.routing_iterations,
        primary_maps: args.primary_maps,
        n_classes: None,
        relu: args.no_relu.then_some(false),
    };
    apply_patch(&mut hp, &flag_patch);

    let timing = match args
        .timing
        .clone()
        .or(config.timing)
        .unwrap_or_else(|| "wall".to_string())
        .as_str()
    {
        "wall" => TimingMode::Wall,
        "zero" => TimingMode::Zero,
        other => {
            return Err(CliError::usage(format!(
                "invalid timing {other:?}, expected wall or zero"
            )))
        }
    };

    let fractions = match &args.split {
        Some(s) => {
            let parts: Vec<f64> = s
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::usage(format!("invalid split {s:?}")))?;
            let arr: [f64; 3] = parts
                .try_into()
                .map_err(|_| CliError::usage("split needs exactly three fractions"))?;
            arr
        }
        None => config.split.unwrap_or([0.70, 0.15, 0.15]),
    };

    Ok(TrainPlan {
        data: args
            .data
            .clone()
            .or(config.data)
            .ok_or_else(|| CliError::usage("missing --data <dataset directory>"))?,
        mode,
        loss,
        hp,
        seed: args.seed.or(config.seed).unwrap_or(0),
        epochs: args.epochs.or(config.epochs).unwrap_or(20),
        out: args.out.clone().or(config.out).unwrap_or_else(|| PathBuf::from(".")),
        jobs: args.jobs.or(config.jobs).unwrap_or_else(default_jobs),
        timing,
        fractions,
    })
}

fn apply_patch(hp: &mut Hyperparameters, patch: &HyperPatch) {
    if let Some(v) = patch.filters {
        hp.filters = v;
    }
    if let Some(v) = patch.kernel_size {
        hp.kernel_size = v;
    }
    if let Some(v) = patch.primarycap_dim {
        hp.primarycap_dim = v;
    }
    if let Some(v) = patch.voxelcap_dim {
        hp.voxelcap_dim = v;
    }
    if let Some(v) = patch.stride {
        hp.stride = v;
    }
    if let Some(v) = patch.routing_iterations {
        hp.routing_iterations = v;
    }
    if let Some(v) = patch.primary_maps {
        hp.primary_maps = v;
    }
    if let Some(v) = patch.n_classes {
        hp.n_classes = v;
    }
    if let Some(v) = patch.relu {
        hp.relu = v;
    }
}

fn evaluation_json(eval: &Evaluation, class_names: &[String]) -> serde_json::Value {
    json!({
        "accuracy": eval.accuracy,
        "balanced_accuracy": eval.balanced_accuracy(),
        "samples": eval.correctness.len(),
        "per_class": eval
            .per_class
            .iter()
            .enumerate()
            .map(|(i, (total, correct))| {
                json!({
                    "class": class_names.get(i).cloned().unwrap_or_else(|| format!("class{i}")),
                    "total": total,
                    "correct": correct,
                })
            })
            .collect::<Vec<_>>(),
        "correctness": eval.correctness,
    })
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let plan = resolve_train_plan(&args)?;
    let loaded = load_dataset(&plan.data, plan.mode, plan.jobs)?;
    if loaded.class_names.len() != plan.hp.n_classes {
        return Err(CliError::data(format!(
            "dataset has {} classes, model expects {}",
            loaded.class_names.len(),
            plan.hp.n_classes
        )));
    }
    let extent = loaded.samples[0].grid.extent();
    println!(
        "loaded {} samples, classes {:?}, {} grids of extent {}",
        loaded.samples.len(),
        loaded.class_names,
        plan.mode.as_str(),
        extent
    );

    let splits = split(
        &loaded.samples,
        &SplitConfig {
            fractions: plan.fractions,
            seed: plan.seed,
        },
    )?;
    println!(
        "split sizes: train {}, val {}, test {}",
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    );
    let pick = |idx: &[usize]| -> Vec<&LabeledSample> {
        idx.iter().map(|&i| &loaded.samples[i]).collect()
    };
    let (train_set, val_set, test_set) = (pick(&splits.train), pick(&splits.val), pick(&splits.test));

    let mut model = CapsNetModel::new(plan.hp.clone(), plan.mode, extent, plan.seed)?;
    let shapes = model.layer_shapes();
    println!(
        "model: conv {:?} -> primary {:?} -> {} capsules of dim {} -> {} classes",
        shapes.conv_output,
        shapes.primary_output,
        shapes.primary_capsules[0],
        shapes.primary_capsules[1],
        shapes.class_capsules[0]
    );

    let mut options = TrainOptions::new(plan.loss);
    options.epochs = plan.epochs;
    options.shuffle_seed = plan.seed.wrapping_add(1);
    options.timing = plan.timing;
    let outcome = train_with_progress(&mut model, &train_set, &val_set, &options, |r| {
        println!(
            "epoch {:>3}: train acc {:.4} loss {:.6} | val acc {:.4} loss {:.6} | {:.2}s",
            r.epoch, r.train_accuracy, r.train_loss, r.val_accuracy, r.val_loss, r.seconds
        );
    })?;

    std::fs::create_dir_all(&plan.out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", plan.out.display())))?;

    atomic_write(
        &plan.out.join("metrics.csv"),
        metrics_csv(&outcome.records).as_bytes(),
    )?;

    let extras = CheckpointExtras {
        loss: plan.loss,
        optimizer: RmsPropConfig::default(),
        class_names: loaded.class_names.clone(),
    };
    let mut model_bytes = Vec::new();
    outcome.best_model.save(&mut model_bytes, &extras)?;
    atomic_write(&plan.out.join("model.cwts"), &model_bytes)?;

    let test_eval = evaluate(&outcome.best_model, &test_set, plan.loss)?;
    let mut report = evaluation_json(&test_eval, &loaded.class_names);
    report["best_epoch"] = json!(outcome.best_epoch);
    report["prediction_accuracy"] = json!(prediction_accuracy(&test_eval.correctness)?);
    let report_bytes = serde_json::to_vec_pretty(&report)?;
    atomic_write(&plan.out.join("test_report.json"), &report_bytes)?;

    println!(
        "best epoch {} | test accuracy {:.4} (balanced {:.4}) | artifacts in {}",
        outcome.best_epoch,
        test_eval.accuracy,
        test_eval.balanced_accuracy(),
        plan.out.display()
    );
    Ok(())
}

fn cmd_evaluate(
    model_path: &Path,
    data: &Path,
    jobs: Option<usize>,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let (model, extras) = read_model(model_path)?;
    let loaded = load_dataset(data, model.mode(), jobs.unwrap_or_else(default_jobs))?;
    if loaded.class_names.len() != model.hyperparameters().n_classes {
        return Err(CliError::data(format!(
            "dataset has {} classes, model expects {}",
            loaded.class_names.len(),
            model.hyperparameters().n_classes
        )));
    }
    if loaded.class_names != extras.class_names {
        eprintln!(
            "warning: dataset classes {:?} differ from checkpoint classes {:?}",
            loaded.class_names, extras.class_names
        );
    }
    let refs: Vec<&LabeledSample> = loaded.samples.iter().collect();
    let eval = evaluate(&model, &refs, extras.loss)?;
    let report = evaluation_json(&eval, &loaded.class_names);
    let pretty = serde_json::to_string_pretty(&report)?;
    match output {
        Some(path) => atomic_write(path, pretty.as_bytes())?,
        None => println!("{pretty}"),
    }
    Ok(())
}

fn cmd_predict(model_path: &Path, input: &Path, mode: Option<&str>) -> Result<(), CliError> {
    let (model, extras) = read_model(model_path)?;
    if let Some(mode) = mode {
        let mode = parse_mode(mode)?;
        if mode != model.mode() {
            return Err(CliError::usage(format!(
                "--mode {} conflicts with the model's mode {}",
                mode.as_str(),
                model.mode().as_str()
            )));
        }
    }
    let grid: VoxelGrid = match read_sample(input)? {
        SampleInput::Structure(structure) => encode(&structure, model.mode())?,
        SampleInput::Grid(grid) => grid,
    };
    let activations = model.activations(&grid_tensor(&grid))?;
    let class = activations.predicted_class();
    let name = extras
        .class_names
        .get(class)
        .cloned()
        .unwrap_or_else(|| format!("class{class}"));
    let lengths: Vec<String> = activations.lengths.iter().map(|l| l.to_string()).collect();
    println!("class={name} lengths={}", lengths.join(","));
    Ok(())
}

fn parse_chain_range(s: &str) -> Result<(char, i32, i32), CliError> {
    let err = || CliError::usage(format!("invalid range {s:?}, expected CHAIN:START-END"));
    let (chain, range) = s.split_once(':').ok_or_else(err)?;
    let mut chars = chain.chars();
    let chain_id = chars.next().ok_or_else(err)?;
    if chars.next().is_some() {
        return Err(err());
    }
    // '-' both separates and signs numbers; split on the last one.
    let sep = range.rfind('-').filter(|&i| i > 0).ok_or_else(err)?;
    let start: i32 = range[..sep].parse().map_err(|_| err())?;
    let end: i32 = range[sep + 1..].parse().map_err(|_| err())?;
    if start > end {
        return Err(CliError::usage(format!(
            "invalid range {s:?}: start {start} exceeds end {end}"
        )));
    }
    Ok((chain_id, start, end))
}

fn parse_edit(args: &PerturbArgs) -> Result<StructureEdit, CliError> {
    let given = [
        args.remove_range.is_some(),
        args.remove_atoms.is_some(),
        args.translate.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if given != 1 {
        return Err(CliError::usage(
            "specify exactly one of --remove-range, --remove-atoms, --translate",
        ));
    }
    if let Some(spec) = &args.remove_range {
        let (chain_id, seq_start, seq_end) = parse_chain_range(spec)?;
        return Ok(StructureEdit::RemoveResidueRange {
            chain_id,
            seq_start,
            seq_end,
        });
    }
    if let Some(name) = &args.remove_atoms {
        if name.trim().is_empty() {
            return Err(CliError::usage("--remove-atoms needs a non-empty name"));
        }
        return Ok(StructureEdit::RemoveAtomsByName {
            name: name.trim().to_string(),
        });
    }
    let spec = args.translate.as_ref().expect("checked above");
    let (range_part, offset_part) = spec
        .rsplit_once(':')
        .ok_or_else(|| CliError::usage(format!("invalid translate {spec:?}")))?;
    let (chain_id, seq_start, seq_end) = parse_chain_range(range_part)?;
    let parts: Vec<f64> = offset_part
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("invalid offset {offset_part:?}")))?;
    let offset: [f64; 3] = parts
        .try_into()
        .map_err(|_| CliError::usage("offset needs exactly three components"))?;
    Ok(StructureEdit::TranslateAtoms {
        chain_id,
        seq_start,
        seq_end,
        offset,
    })
}

fn cmd_perturb(args: PerturbArgs) -> Result<(), CliError> {
    let (model, extras) = read_model(&args.model)?;
    if let Some(mode) = &args.mode {
        let mode = parse_mode(mode)?;
        if mode != model.mode() {
            return Err(CliError::usage(format!(
                "--mode {} conflicts with the model's mode {}",
                mode.as_str(),
                model.mode().as_str()
            )));
        }
    }
    let edit = parse_edit(&args)?;
    let structure = read_structure(&args.pdb)?;
    let report =
        perturb_and_compare(&model, &structure, &edit, model.mode(), &extras.class_names)?;
    let pretty = serde_json::to_string_pretty(&report)?;
    match &args.output {
        Some(path) => atomic_write(path, pretty.as_bytes())?,
        None => println!("{pretty}"),
    }
    Ok(())
}

fn cmd_channel_scores(args: ChannelScoresArgs) -> Result<(), CliError> {
    let (model, extras) = read_model(&args.model)?;
    if let Some(label) = args.label {
        if label >= model.hyperparameters().n_classes {
            return Err(CliError::usage(format!(
                "label {label} out of range for {} classes",
                model.hyperparameters().n_classes
            )));
        }
    }
    let structure = read_structure(&args.pdb)?;
    let report = channel_scores(
        &model,
        &structure,
        model.mode(),
        args.label,
        &extras.class_names,
    )?;

    let mut csv = String::from("channel,score\n");
    for (name, score) in report.channels.iter().zip(&report.scores) {
        csv.push_str(&format!("{name},{score:.9}\n"));
    }
    match &args.output {
        Some(path) => atomic_write(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }

    if let Some(plot_path) = &args.plot {
        let img = plot::render_bars(
            &report.channels,
            &report.scores,
            &format!("CHANNEL SCORES ({})", report.reference_class_name),
        );
        let mut bytes = Vec::new();
        img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|e| CliError::data(format!("PNG encoding: {e}")))?;
        atomic_write(plot_path, &bytes)?;
    }
    Ok(())
}

fn cmd_plot(metrics: &Path, output: &Path) -> Result<(), CliError> {
    let text = String::from_utf8(io::read_file(metrics)?)
        .map_err(|_| CliError::data(format!("{} is not text", metrics.display())))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("epoch,train_acc,train_loss,val_acc,val_loss") {
        return Err(CliError::data(format!(
            "{} does not look like a metrics CSV (header {header:?})",
            metrics.display()
        )));
    }
    let mut rows: Vec<plot::MetricsRow> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .take(5)
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::data(format!("bad CSV row {} in {}", i + 2, metrics.display())))?;
        if fields.len() < 5 {
            return Err(CliError::data(format!(
                "bad CSV row {} in {}",
                i + 2,
                metrics.display()
            )));
        }
        rows.push((fields[0], fields[1], fields[2], fields[3], fields[4]));
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{} has no data rows", metrics.display())));
    }
    let img = plot::render_metrics(&rows);
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| CliError::data(format!("PNG encoding: {e}")))?;
    atomic_write(output, &bytes)?;
    println!("wrote {}", output.display());
    Ok(())
}
