//! `revox` command-line pipelines.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use revox::analysis::bench;
use revox::encoder::{encode_grid, encode_grid_multires, Encoder};
use revox::format::{
    features_csv, read_rvox1, read_rwlk1, read_rwlk2, sniff, write_rfea1, write_rvox1, write_rwlk1,
    write_rwlk2, RVOX1, RWLK1, RWLK2,
};
use revox::pointcloud::write_points;
use revox::{
    coefficient_of_variation, displacement_stats, effective_counts, effective_counts_tagged,
    generate_synthetic, load_bin, load_csv, partition, partition_multires, reconfigure, reconfigure_multires,
    BinLayout, ColumnMax, CountHistogram, CountMode, FeatureMode, FeatureSpec, GridConfig, PointCloud,
    SynthSpec, UniformWeights, VoxelGrid,
};

#[derive(Parser)]
#[command(name = "revox", version, about = "Sparse voxelization with random-walk neighbor reconfiguration")]
struct Cli {
    /// Worker threads (falls back to REVOX_THREADS, then all cores).
    #[arg(long, global = true, env = "REVOX_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the standard synthetic sparse scene to a point file.
    Synth(SynthArgs),
    /// Partition a cloud and dump the voxel grid (voxels.rvox1).
    Voxelize(PipelineArgs),
    /// Single-resolution reconfiguration (voxels.rvox1, walks.rwlk1).
    Reconfigure(PipelineArgs),
    /// Two-resolution reconfiguration (voxels.rvox1, walks.rwlk2).
    Multires(PipelineArgs),
    /// Encode voxel features (features.rfea1).
    Encode(EncodeArgs),
    /// Count histograms, coefficient of variation and displacement from dumps.
    Stats(StatsArgs),
    /// Per-phase timing report.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output point file (.csv, .bin or .bin5).
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Force the 5-float binary layout regardless of extension.
    #[arg(long)]
    bin5: bool,
    /// Override the number of rings [default: 32].
    #[arg(long)]
    rings: Option<u32>,
    /// Override points per ring [default: 3000].
    #[arg(long)]
    points_per_ring: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Pillars,
    Voxels,
}

#[derive(Clone, Copy, ValueEnum)]
enum CountModeArg {
    Standard,
    Quarter,
}

#[derive(Args)]
struct GridArgs {
    /// Cell layout; --voxel-size implies voxels [default: pillars].
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Pillar x/y size in meters [default: 0.25 0.25].
    #[arg(long, num_args = 2, value_names = ["X", "Y"], conflicts_with = "voxel_size")]
    pillar_size: Option<Vec<f32>>,
    /// Voxel x/y/z size in meters [default: 0.05 0.05 0.1].
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"])]
    voxel_size: Option<Vec<f32>>,
    /// Points kept per cell [default: 25 pillars, 4 voxels].
    #[arg(long)]
    max_points: Option<u32>,
    /// Cells created before partition stops [default: 25000 pillars, 30000 voxels].
    #[arg(long)]
    max_voxels: Option<u32>,
    /// Lower range corner [default: -50 -50 -5].
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    range_min: Option<Vec<f32>>,
    /// Upper range corner [default: 50 50 3].
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    range_max: Option<Vec<f32>>,
    /// Count used for walk probability and budget [default: quarter pillars, standard voxels].
    #[arg(long, value_enum)]
    count_mode: Option<CountModeArg>,
}

impl GridArgs {
    fn config(&self) -> Result<GridConfig> {
        let mode = match (self.mode, &self.voxel_size, &self.pillar_size) {
            (Some(Mode::Pillars), Some(_), _) => bail!("--voxel-size conflicts with --mode pillars"),
            (Some(Mode::Voxels), _, Some(_)) => bail!("--pillar-size conflicts with --mode voxels"),
            (Some(m), _, _) => m,
            (None, Some(_), _) => Mode::Voxels,
            (None, None, _) => Mode::Pillars,
        };
        let mut c = match mode {
            Mode::Pillars => GridConfig::pillars(),
            Mode::Voxels => GridConfig::voxels(),
        };
        if let Some(s) = &self.pillar_size {
            c.cell_size = [s[0], s[1]];
        }
        if let Some(s) = &self.voxel_size {
            c.cell_size = [s[0], s[1]];
            c.cell_height = Some(s[2]);
        }
        if let Some(n) = self.max_points {
            c.max_points_per_voxel = n;
        }
        if let Some(n) = self.max_voxels {
            c.max_voxels = n;
        }
        if let Some(r) = &self.range_min {
            c.range_min = [r[0], r[1], r[2]];
        }
        if let Some(r) = &self.range_max {
            c.range_max = [r[0], r[1], r[2]];
        }
        if let Some(m) = self.count_mode {
            c.count_mode = match m {
                CountModeArg::Standard => CountMode::Standard,
                CountModeArg::Quarter => CountMode::QuarterAdjusted,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct InputArgs {
    /// Point file: .csv, .bin (x y z r) or .bin5 (x y z r t).
    input: PathBuf,
    /// Read .bin input as 5 floats per point.
    #[arg(long)]
    bin5: bool,
}

impl InputArgs {
    fn load(&self) -> Result<PointCloud> {
        load_points(&self.input, self.bin5)
    }
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Avg,
    Weighted,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, value_enum, default_value = "avg")]
    encoder: EncoderArg,
    /// Use two-resolution reconfiguration.
    #[arg(long)]
    multires: bool,
    /// Skip reconfiguration and encode with the initial 4-adjacency.
    #[arg(long, conflicts_with = "multires")]
    no_walk: bool,
    /// Also write features.csv.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Voxel dump (RVOX1) giving the raw counts.
    #[arg(long)]
    before: PathBuf,
    /// Reconfiguration dump (RWLK1 or RWLK2) over the same grid.
    #[arg(long)]
    after: Option<PathBuf>,
    /// Directory for histogram CSVs and stats.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Point file; the standard synthetic scene when omitted.
    input: Option<PathBuf>,
    #[arg(long)]
    bin5: bool,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// Directory for bench.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_points(path: &Path, bin5: bool) -> Result<PointCloud> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let cloud = match ext.as_str() {
        "csv" if !bin5 => load_csv(path)?,
        "bin5" => load_bin(path, BinLayout::Xyzrt)?,
        "bin" => load_bin(path, if bin5 { BinLayout::Xyzrt } else { BinLayout::Xyzr })?,
        _ if bin5 => load_bin(path, BinLayout::Xyzrt)?,
        _ => bail!("{}: unknown point format (expected .csv, .bin or .bin5)", path.display()),
    };
    Ok(cloud)
}

/// Writes via a temp file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), written: Vec::new() }
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Run metadata; contains no timings so it is byte-stable.
    fn finish(mut self, subcommand: &str, seed: u64, extra: serde_json::Value) -> Result<()> {
        let mut meta = json!({
            "subcommand": subcommand,
            "seed": seed,
        });
        if let (Some(m), serde_json::Value::Object(e)) = (meta.as_object_mut(), extra) {
            m.extend(e);
        }
        self.written.push("run.json".into());
        meta["outputs"] = json!(self.written);
        let text = serde_json::to_string_pretty(&meta)? + "\n";
        write_atomic(&self.dir.join("run.json"), text.as_bytes())
    }
}

fn spec_for(config: &GridConfig) -> FeatureSpec {
    FeatureSpec::new(if config.is_pillar() { FeatureMode::Pillars } else { FeatureMode::Second })
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::standard_sparse();
    if let Some(r) = a.rings {
        spec.ring_count = r;
    }
    if let Some(p) = a.points_per_ring {
        spec.points_per_ring = p;
    }
    let cloud = generate_synthetic(&spec, a.seed)?;
    let ext = a.output.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mut bytes = Vec::new();
    match ext.as_str() {
        "csv" if !a.bin5 => bytes.extend_from_slice(revox::pointcloud::format_csv(&cloud.points).as_bytes()),
        "bin5" => write_points(&mut bytes, &cloud.points, BinLayout::Xyzrt)?,
        _ if a.bin5 => write_points(&mut bytes, &cloud.points, BinLayout::Xyzrt)?,
        "bin" => write_points(&mut bytes, &cloud.points, BinLayout::Xyzr)?,
        _ => bail!("{}: unknown point format (expected .csv, .bin or .bin5)", a.output.display()),
    }
    write_atomic(&a.output, &bytes)?;
    println!("points {} count", cloud.len());
    Ok(())
}

fn pipeline_meta(
    a: &PipelineArgs,
    config: &GridConfig,
    cloud: &PointCloud,
    grid: &VoxelGrid,
) -> serde_json::Value {
    json!({
        "input": a.input.input.display().to_string(),
        "points": cloud.len(),
        "voxels": grid.len(),
        "config": config,
    })
}

fn run_voxelize(a: &PipelineArgs) -> Result<()> {
    let config = a.grid.config()?;
    let cloud = a.input.load()?;
    let (grid, _) = partition(&cloud, &config)?;
    let mut out = Outputs::new(&a.out);
    out.put("voxels.rvox1", &write_rvox1(grid.voxels()))?;
    out.finish("voxelize", a.seed, pipeline_meta(a, &config, &cloud, &grid))?;
    println!("voxels {} count", grid.len());
    Ok(())
}

fn run_reconfigure(a: &PipelineArgs) -> Result<()> {
    let config = a.grid.config()?;
    let cloud = a.input.load()?;
    let (grid, graph) = partition(&cloud, &config)?;
    let reconfig = reconfigure(&grid, &graph, a.seed)?;
    let mut out = Outputs::new(&a.out);
    out.put("voxels.rvox1", &write_rvox1(grid.voxels()))?;
    out.put("walks.rwlk1", &write_rwlk1(&reconfig)?)?;
    out.finish("reconfigure", a.seed, pipeline_meta(a, &config, &cloud, &grid))?;
    println!("voxels {} count", grid.len());
    Ok(())
}

fn run_multires(a: &PipelineArgs) -> Result<()> {
    let config = a.grid.config()?;
    let cloud = a.input.load()?;
    let mgrid = partition_multires(&cloud, &config, a.seed)?;
    let reconfig = reconfigure_multires(&mgrid, a.seed)?;
    let mut out = Outputs::new(&a.out);
    out.put("voxels.rvox1", &write_rvox1(mgrid.fine.voxels()))?;
    out.put("walks.rwlk2", &write_rwlk2(&reconfig, &mgrid.coarse)?)?;
    let mut meta = pipeline_meta(a, &config, &cloud, &mgrid.fine);
    meta["coarse_voxels"] = json!(mgrid.coarse.len());
    out.finish("multires", a.seed, meta)?;
    println!("voxels {} count\ncoarse_voxels {} count", mgrid.fine.len(), mgrid.coarse.len());
    Ok(())
}

fn run_encode(a: &EncodeArgs) -> Result<()> {
    let p = &a.pipeline;
    let config = p.grid.config()?;
    let cloud = p.input.load()?;
    let spec = spec_for(&config);
    let (weights, transform) = (UniformWeights, ColumnMax);
    let encoder = match a.encoder {
        EncoderArg::Avg => Encoder::Avg,
        EncoderArg::Weighted => Encoder::Weighted { weights: &weights, transform: &transform },
    };
    let (features, grid) = if a.multires {
        let mgrid = partition_multires(&cloud, &config, p.seed)?;
        let reconfig = reconfigure_multires(&mgrid, p.seed)?;
        (encode_grid_multires(&mgrid, &reconfig, &cloud, spec, &encoder)?, mgrid.fine)
    } else {
        let (grid, graph) = partition(&cloud, &config)?;
        let reconfig = if a.no_walk {
            revox::initial_adjacency(&graph, p.seed)
        } else {
            reconfigure(&grid, &graph, p.seed)?
        };
        (encode_grid(&grid, &reconfig, &cloud, spec, &encoder)?, grid)
    };
    let mut out = Outputs::new(&p.out);
    out.put("features.rfea1", &write_rfea1(&features)?)?;
    if a.csv {
        out.put("features.csv", features_csv(&features).as_bytes())?;
    }
    let mut meta = pipeline_meta(p, &config, &cloud, &grid);
    meta["encoder"] = json!(match a.encoder {
        EncoderArg::Avg => "avg",
        EncoderArg::Weighted => "weighted",
    });
    meta["multires"] = json!(a.multires);
    meta["width"] = json!(encoder.output_width(spec));
    out.finish("encode", p.seed, meta)?;
    println!("features {} count\nwidth {} count", features.len(), encoder.output_width(spec));
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn run_stats(a: &StatsArgs) -> Result<()> {
    let before = read_file(&a.before)?;
    if sniff(&before) != Some(RVOX1) {
        bail!("{}: --before must be an RVOX1 dump", a.before.display());
    }
    let records = read_rvox1(&before).with_context(|| a.before.display().to_string())?;
    let grid = VoxelGrid::from_records(GridConfig::pillars(), records)?;
    let counts = grid.counts();
    let raw: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let hist_before = CountHistogram::from_counts(&counts);
    let cov_before = coefficient_of_variation(&raw)?;

    let mut lines = format!(
        "voxels {} count\ncov_before {cov_before:.6} ratio\ncount1_before {:.6} fraction\n",
        grid.len(),
        hist_before.fraction(1)
    );
    let mut summary = json!({
        "voxels": grid.len(),
        "cov_before": cov_before,
        "count1_before": hist_before.fraction(1),
    });
    let mut hist_after = None;

    if let Some(after_path) = &a.after {
        let after = read_file(after_path)?;
        let ctx = || after_path.display().to_string();
        let effective = match sniff(&after) {
            Some(m) if m == RWLK1 => {
                let reconfig = read_rwlk1(&after).with_context(ctx)?;
                check_len(reconfig.len(), grid.len())?;
                let d = displacement_stats(&reconfig, &grid);
                lines += &format!(
                    "displacement_mean {:.6} cells\ndisplacement_p50 {:.6} cells\ndisplacement_p95 {:.6} cells\n",
                    d.mean, d.p50, d.p95
                );
                summary["displacement"] = json!(d);
                effective_counts(&reconfig, &grid)
            }
            Some(m) if m == RWLK2 => {
                let (reconfig, coarse) = read_rwlk2(&after).with_context(ctx)?;
                check_len(reconfig.slots.len(), grid.len())?;
                let coarse: Vec<u32> = coarse.iter().map(|r| r.count()).collect();
                effective_counts_tagged(&reconfig, &counts, &coarse)
            }
            _ => bail!("{}: --after must be an RWLK1 or RWLK2 dump", after_path.display()),
        };
        let cov_after = coefficient_of_variation(&effective)?;
        let h = CountHistogram::from_values(&effective);
        lines += &format!("cov_after {cov_after:.6} ratio\ncount1_after {:.6} fraction\n", h.fraction(1));
        summary["cov_after"] = json!(cov_after);
        summary["count1_after"] = json!(h.fraction(1));
        hist_after = Some(h);
    }
    print!("{lines}");

    if let Some(dir) = &a.out {
        let mut out = Outputs::new(dir);
        out.put("hist_before.csv", hist_before.to_csv().as_bytes())?;
        if let Some(h) = &hist_after {
            out.put("hist_after.csv", h.to_csv().as_bytes())?;
        }
        out.put("stats.json", (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    }
    Ok(())
}

fn check_len(walks: usize, voxels: usize) -> Result<()> {
    if walks != voxels {
        bail!("reconfiguration covers {walks} voxels but the grid has {voxels}");
    }
    Ok(())
}

fn run_bench(a: &BenchArgs) -> Result<()> {
    let config = a.grid.config()?;
    let cloud = match &a.input {
        Some(p) => load_points(p, a.bin5)?,
        None => generate_synthetic(&SynthSpec::standard_sparse(), a.seed)?,
    };
    let report = bench(&cloud, &config, a.repetitions, a.seed)?;
    print!("{}", report.to_lines());
    if let Some(dir) = &a.out {
        let mut v = serde_json::to_value(&report)?;
        v["reconfigure_overhead"] = json!(report.reconfigure_overhead());
        v["adjacency_overhead"] = json!(report.adjacency_overhead());
        write_atomic(&dir.join("bench.json"), (serde_json::to_string_pretty(&v)? + "\n").as_bytes())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("cannot start worker threads")?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Voxelize(a) => run_voxelize(a),
        Command::Reconfigure(a) => run_reconfigure(a),
        Command::Multires(a) => run_multires(a),
        Command::Encode(a) => run_encode(a),
        Command::Stats(a) => run_stats(a),
        Command::Bench(a) => run_bench(a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", first.trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
