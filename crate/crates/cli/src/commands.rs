use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gslang_core::bench::{bench_lut, LutBenchConfig};
use gslang_core::eval::{
    default_bounds, mean_weighted_iou, pseudo_label_gaussians, significant_scores, voxel_miou,
    voxelize_scene, DensityThreshold, IouReport, PseudoLabelMode, UndefinedIou, VoxelConfig,
};
use gslang_core::io;
use gslang_core::pq::{train_codebook, KMeansConfig, NormMode, PQCodebook};
use gslang_core::query::{relevancy_scores, score_scene, segment_argmax, select_threshold, QuerySpec};
use gslang_core::registration::{register, Features, RegisteredScene, RegistrationConfig};
use gslang_core::synth::{gen_scene, random_unit_vectors, render_masks, RigSpec, SceneSpec};
use gslang_core::{Label, Scene};

use crate::experiments::{run_correlation_study, CorrelationStudy};

#[derive(Debug, Parser)]
#[command(name = "gslang", version, about = "Language embeddings on 3D Gaussian scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum QueryMode {
    Cosine,
    Relevancy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LabelMode {
    Affinity,
    PaperVerbatim,
}

impl From<LabelMode> for PseudoLabelMode {
    fn from(m: LabelMode) -> Self {
        match m {
            LabelMode::Affinity => PseudoLabelMode::Affinity,
            LabelMode::PaperVerbatim => PseudoLabelMode::PaperVerbatim,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Norm {
    SubNormSum,
    Exact,
}

impl From<Norm> for NormMode {
    fn from(n: Norm) -> Self {
        match n {
            Norm::SubNormSum => NormMode::SubNormSum,
            Norm::Exact => NormMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Undefined {
    Exclude,
    Zero,
}

impl From<Undefined> for UndefinedIou {
    fn from(u: Undefined) -> Self {
        match u {
            Undefined::Exclude => UndefinedIou::Exclude,
            Undefined::Zero => UndefinedIou::Zero,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled scene, its point cloud and label embeddings.
    GenScene {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_scene: PathBuf,
        #[arg(long)]
        out_points: PathBuf,
        #[arg(long)]
        out_labels: PathBuf,
    },
    /// Render per-view label masks with noisy embeddings.
    RenderMasks {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Camera rig JSON.
        #[arg(long)]
        rig: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write random unit vectors as a training database.
    GenDb {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a product-quantization codebook.
    TrainPq {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        subvectors: usize,
        #[arg(long, default_value_t = 256)]
        centroids: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        max_iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register mask embeddings onto the scene.
    ///
    /// Writes OUT.drsg, OUT.drsf and OUT.survivors.json.
    Register {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long, default_value_t = 20)]
        topk: usize,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every splat against a query.
    Query {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, value_enum, default_value_t = QueryMode::Cosine)]
        mode: QueryMode,
        #[arg(long, value_enum, default_value_t = Norm::SubNormSum)]
        norm: Norm,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign every splat the label of highest similarity.
    Segment {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Label embedding matrix.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t = Norm::SubNormSum)]
        norm: Norm,
        #[arg(long)]
        out: PathBuf,
        /// Also write the scene with predicted labels.
        #[arg(long)]
        out_scene: Option<PathBuf>,
    },
    /// Weighted IoU of predicted splat labels against pseudo labels from a point cloud.
    EvalIou {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt_points: PathBuf,
        #[arg(long, value_enum, default_value_t = LabelMode::Affinity)]
        mode: LabelMode,
        #[arg(long, value_enum, default_value_t = Undefined::Exclude)]
        undefined: Undefined,
        #[arg(long)]
        out: PathBuf,
    },
    /// Voxelize a labeled scene; with --gt-points also report voxel IoU.
    EvalVoxel {
        #[arg(long)]
        scene: PathBuf,
        /// Defaults to the bounding-box diagonal / 128.
        #[arg(long)]
        spacing: Option<f64>,
        /// Fraction of the maximum density, or absolute with --absolute.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        #[arg(long)]
        absolute: bool,
        #[arg(long)]
        gt_points: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = LabelMode::Affinity)]
        mode: LabelMode,
        #[arg(long, value_enum, default_value_t = Undefined::Exclude)]
        undefined: Undefined,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time lookup-table scoring against full-precision cosine.
    BenchLut {
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 512)]
        d: usize,
        #[arg(long, default_value_t = 128)]
        l: usize,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlate weighted and unweighted splat mIoU with voxel mIoU over
    /// randomly corrupted synthetic scenes.
    Correlate {
        #[arg(long, default_value_t = 30)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            );
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    serde_json::from_reader(r).with_context(|| format!("parsing {}", path.display()))
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn load_registered(scene: &Path, features: &Path, codebook: Option<&Path>) -> Result<(RegisteredScene, Option<PQCodebook>)> {
    let scene = io::load_scene(scene)?;
    let cb = codebook.map(io::load_codebook).transpose()?;
    let features = io::load_features(features, cb.as_ref().map(PQCodebook::subspaces))?;
    if features.len() != scene.len() {
        bail!(
            "feature file has {} rows but the scene has {} Gaussians",
            features.len(),
            scene.len()
        );
    }
    if matches!(features, Features::Quantized { .. }) && cb.is_none() {
        bail!("PQ-coded features need --codebook");
    }
    let n = scene.len();
    Ok((
        RegisteredScene {
            scene,
            features,
            survivor_map: (0..n).map(Some).collect(),
        },
        cb,
    ))
}

#[derive(Serialize)]
struct RegisterSummary {
    input_gaussians: usize,
    kept_gaussians: usize,
    weight_entries: usize,
    bytes_per_gaussian: usize,
    quantized: bool,
}

#[derive(Serialize)]
struct SurvivorFile<'a> {
    survivor_map: &'a [Option<usize>],
}

#[derive(Serialize)]
struct QueryOutput {
    mode: &'static str,
    threshold: f64,
    scores: Vec<f32>,
    selected: Vec<usize>,
}

#[derive(Serialize)]
struct SegmentOutput {
    labels: Vec<usize>,
}

#[derive(Serialize)]
struct IouOutput {
    mode: PseudoLabelMode,
    gaussian_count: usize,
    label_count: u32,
    weighted: IouReport,
    unweighted: IouReport,
}

#[derive(Serialize)]
struct VoxelOutput {
    origin: [f64; 3],
    spacing: f64,
    dims: [usize; 3],
    label_count: usize,
    occupied: usize,
    label_voxels: Vec<usize>,
    voxel: Option<IouReport>,
}

fn label_count_of(scene: &Scene) -> usize {
    scene
        .gaussians
        .iter()
        .filter_map(|g| g.label)
        .max()
        .map_or(0, |l| l as usize + 1)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScene {
            spec,
            out_scene,
            out_points,
            out_labels,
        } => {
            let spec: SceneSpec = read_json(&spec)?;
            let s = gen_scene(&spec)?;
            io::save_scene(&out_scene, &s.scene)?;
            io::save_point_cloud(&out_points, &s.points)?;
            io::save_matrix(&out_labels, s.label_count(), s.dim, &s.label_embeddings)?;
            log::info!(
                "generated {} Gaussians, {} labels, {} points",
                s.scene.len(),
                s.label_count(),
                s.points.len()
            );
        }
        Command::RenderMasks {
            scene,
            labels,
            rig,
            sigma,
            seed,
            out,
        } => {
            let scene = io::load_scene(&scene)?;
            let (_, dim, emb) = io::load_matrix(&labels)?;
            let rig: RigSpec = read_json(&rig)?;
            let ds = render_masks(&scene, &emb, dim, &rig.cameras()?, sigma, seed)?;
            io::save_masks(&out, &ds)?;
            log::info!("{} views, {} masks", ds.views.len(), ds.mask_count());
        }
        Command::GenDb { n, d, seed, out } => {
            io::save_matrix(&out, n, d, &random_unit_vectors(n, d, seed))?;
        }
        Command::TrainPq {
            db,
            subvectors,
            centroids,
            seed,
            max_iterations,
            out,
        } => {
            let (_, dim, data) = io::load_matrix(&db)?;
            let cfg = KMeansConfig {
                max_iterations,
                ..Default::default()
            };
            let cb = train_codebook(&data, dim, subvectors, centroids, seed, &cfg)?;
            io::save_codebook(&out, &cb)?;
            log::info!("compression ratio {}", cb.compression_ratio());
        }
        Command::Register {
            scene,
            masks,
            topk,
            codebook,
            out,
        } => {
            let scene = io::load_scene(&scene)?;
            let ds = io::load_masks(&masks)?;
            let cfg = RegistrationConfig {
                top_k: topk,
                parallel: rayon::current_num_threads() > 1,
                ..Default::default()
            };
            let (mut rs, w) = register(&scene, &ds, &cfg)?;
            if let Some(cb) = codebook {
                rs = rs.quantize(&io::load_codebook(&cb)?)?;
            }
            io::save_scene(with_extension(&out, "drsg"), &rs.scene)?;
            io::save_features(with_extension(&out, "drsf"), &rs.features)?;
            write_json(
                Some(&with_extension(&out, "survivors.json")),
                &SurvivorFile {
                    survivor_map: &rs.survivor_map,
                },
            )?;
            write_json(
                None,
                &RegisterSummary {
                    input_gaussians: scene.len(),
                    kept_gaussians: rs.len(),
                    weight_entries: w.nnz(),
                    bytes_per_gaussian: rs.features.bytes_per_gaussian(),
                    quantized: matches!(rs.features, Features::Quantized { .. }),
                },
            )?;
        }
        Command::Query {
            scene,
            features,
            codebook,
            query,
            mode,
            norm,
            out,
        } => {
            let (rs, cb) = load_registered(&scene, &features, codebook.as_deref())?;
            let spec: QuerySpec = read_json(&query)?;
            let (name, scores) = match mode {
                QueryMode::Cosine => {
                    spec.validate(false)?;
                    ("cosine", score_scene(&rs, cb.as_ref(), &spec.embedding, norm.into())?)
                }
                QueryMode::Relevancy => ("relevancy", relevancy_scores(&rs, cb.as_ref(), &spec, norm.into())?),
            };
            let selected = select_threshold(&scores, spec.threshold);
            write_json(
                Some(&out),
                &QueryOutput {
                    mode: name,
                    threshold: spec.threshold,
                    scores,
                    selected,
                },
            )?;
        }
        Command::Segment {
            scene,
            features,
            codebook,
            labels,
            norm,
            out,
            out_scene,
        } => {
            let (rs, cb) = load_registered(&scene, &features, codebook.as_deref())?;
            let (l, dim, emb) = io::load_matrix(&labels)?;
            let queries: Vec<Vec<f32>> = emb.chunks_exact(dim).map(<[f32]>::to_vec).collect();
            debug_assert_eq!(queries.len(), l);
            let seg = segment_argmax(&rs, cb.as_ref(), &queries, norm.into())?;
            if let Some(path) = out_scene {
                let labels: Vec<Label> = seg.iter().map(|&s| Some(s as u32)).collect();
                io::save_scene(path, &rs.scene.with_labels(&labels)?)?;
            }
            write_json(Some(&out), &SegmentOutput { labels: seg })?;
        }
        Command::EvalIou {
            pred,
            gt_points,
            mode,
            undefined,
            out,
        } => {
            let scene = io::load_scene(&pred)?;
            let pc = io::load_point_cloud(&gt_points)?;
            let mode: PseudoLabelMode = mode.into();
            let gt: Vec<Label> = pseudo_label_gaussians(&pc, &scene, mode)?
                .into_iter()
                .map(Some)
                .collect();
            let pred = scene.labels();
            let d = significant_scores(&scene);
            let ones = vec![1.0; d.len()];
            let undefined = undefined.into();
            write_json(
                Some(&out),
                &IouOutput {
                    mode,
                    gaussian_count: scene.len(),
                    label_count: pc.label_count,
                    weighted: mean_weighted_iou(&pred, &gt, &d, pc.label_count, undefined)?,
                    unweighted: mean_weighted_iou(&pred, &gt, &ones, pc.label_count, undefined)?,
                },
            )?;
        }
        Command::EvalVoxel {
            scene,
            spacing,
            threshold,
            absolute,
            gt_points,
            mode,
            undefined,
            out,
        } => {
            let scene = io::load_scene(&scene)?;
            let pc = gt_points.map(io::load_point_cloud).transpose()?;
            let label_count = pc
                .as_ref()
                .map_or(0, |p| p.label_count as usize)
                .max(label_count_of(&scene))
                .max(1);
            let cfg = VoxelConfig {
                spacing,
                threshold: if absolute {
                    DensityThreshold::Absolute(threshold)
                } else {
                    DensityThreshold::Relative(threshold)
                },
                ..Default::default()
            };
            let bounds = default_bounds(&scene, 3.0)?;
            let grid = voxelize_scene(&scene, bounds, label_count, &cfg)?;
            let voxel = match pc {
                Some(pc) => {
                    let gt: Vec<Label> = pseudo_label_gaussians(&pc, &scene, mode.into())?
                        .into_iter()
                        .map(Some)
                        .collect();
                    let gt_grid = voxelize_scene(&scene.with_labels(&gt)?, bounds, label_count, &cfg)?;
                    Some(voxel_miou(&gt_grid, &grid, undefined.into())?)
                }
                None => None,
            };
            let mut label_voxels = vec![0usize; label_count];
            for l in grid.labels.iter().flatten() {
                label_voxels[*l as usize] += 1;
            }
            write_json(
                Some(&out),
                &VoxelOutput {
                    origin: grid.origin.into(),
                    spacing: grid.spacing,
                    dims: grid.dims,
                    label_count,
                    occupied: grid.occupied(),
                    label_voxels,
                    voxel,
                },
            )?;
        }
        Command::BenchLut {
            n,
            d,
            l,
            reps,
            seed,
            out,
        } => {
            let report = bench_lut(&LutBenchConfig {
                n,
                d,
                l,
                repetitions: reps,
                seed,
            })?;
            write_json(out.as_deref(), &report)?;
        }
        Command::Correlate { scenes, seed, out } => {
            let report = run_correlation_study(&CorrelationStudy {
                scenes,
                seed,
                ..Default::default()
            })?;
            write_json(out.as_deref(), &report)?;
        }
    }
    Ok(())
}

/// Size the global thread pool from `DRSPLAT_THREADS`, if set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DRSPLAT_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("DRSPLAT_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("DRSPLAT_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
