//! Command-line front end. Stages share one working directory: each writes
//! its files to `--out`, and later stages read earlier files from `--from`
//! (default: the same `--out` directory).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fusion::{estimate_all, EstimateStatus, EstimateTable, FusionConfig, ESTIMATES_FILE};
use crate::graph::{GraphError, Sigma};
use crate::gridding::{build_grids, grid_adjacency, GridId, GridSet, GriddingError, GRIDS_FILE};
use crate::ingest::{parse_inputs, IngestConfig, IngestError, InputPaths, Windowing};
use crate::metrics::{window_report, MetricsError, Report, REPORT_FILE};
use crate::partition::{
    partition_window, read_partition_labels, write_partition_csvs, Partition, PartitionConfig, PARTITION_FILE,
    UNKNOWN_REGION,
};
use crate::scenario::{generate, read_truth_regions, ScenarioConfig, ScenarioError, TRUTH_FILE};

pub const MANIFEST_FILE: &str = "run_manifest.json";
/// Suggested pipeline settings written next to generated scenarios.
pub const SUGGESTED_CONFIG_FILE: &str = "pipeline.json";

/// Fill colors for regions, indexed by `region_id mod 12`.
pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#aec7e8",
    "#ffbb78", "#98df8a",
];
pub const UNKNOWN_FILL: &str = "#bdbdbd";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Gridding(#[from] GriddingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("ConfigError:{0}")]
    Config(String),
    #[error("IoError:{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for failures of the tool itself, 2 for bad inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_)
            | CliError::Ingest(IngestError::Io(_))
            | CliError::Scenario(ScenarioError::Ingest(IngestError::Io(_))) => 1,
            _ => 2,
        }
    }

    /// The error as one machine-parseable line.
    pub fn line(&self) -> String {
        self.to_string().replace(['\n', '\r'], " ")
    }
}

/// Every tunable of the estimate → partition pipeline, as read from one
/// JSON file. Missing keys take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub delta_t_s: f64,
    pub v_max_sanity_mps: f64,
    pub allow_length_override: bool,
    pub min_size_m2: f64,
    pub use_grid_p_for_orphans: bool,
    pub lambda: f64,
    pub sigma: Sigma,
    pub min_region_grids: usize,
    pub max_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ingest = IngestConfig::default();
        let partition = PartitionConfig::default();
        Self {
            delta_t_s: ingest.delta_t_s,
            v_max_sanity_mps: ingest.v_max_sanity_mps,
            allow_length_override: ingest.allow_length_override,
            min_size_m2: 1e6,
            use_grid_p_for_orphans: FusionConfig::default().use_grid_p_for_orphans,
            lambda: partition.lambda,
            sigma: partition.sigma,
            min_region_grids: partition.min_region_grids,
            max_iters: partition.max_iters,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| missing(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn ingest(&self) -> IngestConfig {
        IngestConfig {
            delta_t_s: self.delta_t_s,
            v_max_sanity_mps: self.v_max_sanity_mps,
            allow_length_override: self.allow_length_override,
        }
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            use_grid_p_for_orphans: self.use_grid_p_for_orphans,
        }
    }

    pub fn partition(&self) -> PartitionConfig {
        PartitionConfig {
            lambda: self.lambda,
            sigma: self.sigma,
            min_region_grids: self.min_region_grids,
            max_iters: self.max_iters,
        }
    }

    pub fn windowing(&self) -> Windowing {
        Windowing::new(self.delta_t_s)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.ingest().validate()?;
        if !(self.min_size_m2 > 0.0 && self.min_size_m2.is_finite()) {
            return Err(CliError::Config(format!("min_size_m2 must be positive, got {}", self.min_size_m2)));
        }
        if !(self.lambda >= 0.0) {
            return Err(CliError::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if let Sigma::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(GraphError::InvalidSigma(s).into());
            }
        }
        if self.max_iters == 0 {
            return Err(CliError::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

fn missing(path: &Path) -> CliError {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    IngestError::MissingFile(name).into()
}

#[derive(Debug, Parser)]
#[command(name = "mfdgrid", version, about = "Probe/loop fusion density estimation and grid network partitioning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario with ground truth.
    Generate(GenerateArgs),
    /// Tile the TAZs into grids.
    Grid(StageArgs),
    /// Fuse probes and loop counts into per-grid densities.
    Estimate(StageArgs),
    /// Partition each window's grid graph into regions.
    Partition(StageArgs),
    /// Score partitions; compares with truth labels when available.
    Evaluate(StageArgs),
    /// grid → estimate → partition → evaluate → export-map.
    Pipeline(StageArgs),
    /// Draw partitions as SVG (and optionally GeoJSON).
    ExportMap(StageArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    /// Directory holding the five input CSVs.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory with earlier stage outputs (default: --out).
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Pipeline JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference labels (default: truth.csv in --input, if present).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write GeoJSON maps.
    #[arg(long)]
    pub geojson: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub delta_t_s: Option<f64>,
    #[arg(long)]
    pub v_max_sanity_mps: Option<f64>,
    #[arg(long)]
    pub min_size_m2: Option<f64>,
    #[arg(long)]
    pub use_grid_p_for_orphans: Option<bool>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// A positive number or `auto`.
    #[arg(long)]
    pub sigma: Option<Sigma>,
    #[arg(long)]
    pub min_region_grids: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, c: &mut PipelineConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(delta_t_s, v_max_sanity_mps, min_size_m2, use_grid_p_for_orphans, lambda, sigma, min_region_grids, max_iters);
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    /// SHA-256 of every file read, keyed by file name.
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

/// Tracks files read and written by one invocation.
struct Run {
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl Run {
    fn new(out: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out)?;
        Ok(Self {
            out: out.to_path_buf(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    fn hash_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|_| missing(path))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if path.parent() == Some(self.out.as_path()) && self.outputs.contains(&name) {
            // Produced earlier in this same run.
            return Ok(());
        }
        self.inputs.insert(name, hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    fn output(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.out.join(name)
    }

    fn finish<C: Serialize>(self, command: &str, config: &C) -> Result<(), CliError> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(self.out.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

/// Parses arguments and runs; returns the process exit code. Errors are
/// printed to stderr as a single line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("UsageError:{first}");
            return 2;
        }
        Err(e) => {
            // --help / --version
            let _ = e.print();
            return 0;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => cmd_generate(a),
        Command::Grid(a) => stage(a, "grid", |ctx, run| ctx.grid(run).map(drop)),
        Command::Estimate(a) => stage(a, "estimate", |ctx, run| ctx.estimate(run).map(drop)),
        Command::Partition(a) => stage(a, "partition", |ctx, run| ctx.partition(run).map(drop)),
        Command::Evaluate(a) => stage(a, "evaluate", |ctx, run| ctx.evaluate(run).map(drop)),
        Command::ExportMap(a) => stage(a, "export-map", |ctx, run| ctx.export_map(run)),
        Command::Pipeline(a) => stage(a, "pipeline", |ctx, run| ctx.pipeline(run)),
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    if !a.config.is_file() {
        return Err(missing(&a.config));
    }
    let mut config = ScenarioConfig::from_json_file(&a.config)?;
    if let Some(seed) = a.seed {
        config.rng_seed = seed;
    }
    let mut run = Run::new(&a.out)?;
    run.hash_input(&a.config)?;
    let scenario = generate(&config)?;
    scenario.write(&a.out)?;
    for name in [
        crate::ingest::NETWORK_FILE,
        crate::ingest::TAZS_FILE,
        crate::ingest::DETECTORS_FILE,
        crate::ingest::COUNTS_FILE,
        crate::ingest::TRAJECTORIES_FILE,
        TRUTH_FILE,
    ] {
        run.output(name);
    }
    let suggested = PipelineConfig {
        delta_t_s: config.delta_t_s,
        min_size_m2: config.cell_area(),
        ..PipelineConfig::default()
    };
    let text = serde_json::to_string_pretty(&suggested).expect("config serializes") + "\n";
    std::fs::write(run.output(SUGGESTED_CONFIG_FILE), text)?;
    log::info!(
        "generated {} vehicles ({} probes), {} detectors",
        scenario.population.len(),
        scenario.dataset.trajectories.len(),
        scenario.dataset.detectors.len()
    );
    run.finish("generate", &config)
}

fn stage(
    a: &StageArgs,
    name: &str,
    body: impl FnOnce(&mut Context, &mut Run) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut config = match &a.config {
        Some(p) => PipelineConfig::from_json_file(p)?,
        None => PipelineConfig::default(),
    };
    a.overrides.apply(&mut config);
    config.validate()?;
    let mut run = Run::new(&a.out)?;
    if let Some(p) = &a.config {
        run.hash_input(p)?;
    }
    let mut ctx = Context {
        args: a,
        config,
        from: a.from.clone().unwrap_or_else(|| a.out.clone()),
        dataset: None,
        gridset: None,
        estimates: None,
        partitions: None,
    };
    body(&mut ctx, &mut run)?;
    run.finish(name, &config)
}

/// Per-invocation state; stages reuse earlier results when run in one
/// `pipeline`, and otherwise load them from files.
struct Context<'a> {
    args: &'a StageArgs,
    config: PipelineConfig,
    from: PathBuf,
    dataset: Option<crate::ingest::Dataset>,
    gridset: Option<GridSet>,
    estimates: Option<EstimateTable>,
    partitions: Option<BTreeMap<i64, BTreeMap<GridId, i64>>>,
}

impl Context<'_> {
    fn input_dir(&self) -> Result<&Path, CliError> {
        self.args
            .input
            .as_deref()
            .ok_or_else(|| CliError::Config("--input is required for this command".into()))
    }

    fn dataset(&mut self, run: &mut Run) -> Result<&crate::ingest::Dataset, CliError> {
        if self.dataset.is_none() {
            let paths = InputPaths::in_dir(self.input_dir()?);
            let dataset = parse_inputs(&paths, &self.config.ingest())?;
            for p in paths.all() {
                run.hash_input(p)?;
            }
            self.dataset = Some(dataset);
        }
        Ok(self.dataset.as_ref().expect("just loaded"))
    }

    fn grid(&mut self, run: &mut Run) -> Result<&GridSet, CliError> {
        let min_size = self.config.min_size_m2;
        let dataset = self.dataset(run)?;
        let gridset = build_grids(&dataset.tazs, &dataset.links, min_size)?;
        gridset.write_csv(&dataset.tazs, &run.output(GRIDS_FILE))?;
        log::info!("{} grids", gridset.len());
        self.gridset = Some(gridset);
        Ok(self.gridset.as_ref().expect("just built"))
    }

    /// Grids with link membership, for estimation.
    fn linked_grids(&mut self, run: &mut Run) -> Result<GridSet, CliError> {
        if let Some(g) = self.gridset.take() {
            if !g.link_grid.is_empty() {
                return Ok(g);
            }
        }
        let path = self.from.join(GRIDS_FILE);
        run.hash_input(&path)?;
        let dataset = self.dataset(run)?;
        Ok(GridSet::read_csv(&path, dataset)?)
    }

    /// Grid geometry only, for partitioning, scoring and mapping.
    fn grid_table(&mut self, run: &mut Run) -> Result<(GridSet, Vec<String>), CliError> {
        let path = self.from.join(GRIDS_FILE);
        run.hash_input(&path)?;
        Ok(GridSet::read_table(&path)?)
    }

    fn estimate(&mut self, run: &mut Run) -> Result<&EstimateTable, CliError> {
        let gridset = self.linked_grids(run)?;
        let fusion = self.config.fusion();
        let dataset = self.dataset(run)?;
        let table = estimate_all(dataset, &gridset, &fusion);
        table.write_csv(&run.output(ESTIMATES_FILE))?;
        let n = |s: EstimateStatus| table.iter().filter(|e| e.status == s).count();
        log::info!(
            "{} grid-windows: {} estimated, {} imputed, {} unknown",
            table.iter().count(),
            n(EstimateStatus::Estimated),
            n(EstimateStatus::Imputed),
            n(EstimateStatus::Unknown)
        );
        self.gridset = Some(gridset);
        self.estimates = Some(table);
        Ok(self.estimates.as_ref().expect("just estimated"))
    }

    fn load_estimates(&mut self, run: &mut Run) -> Result<EstimateTable, CliError> {
        match self.estimates.take() {
            Some(t) => Ok(t),
            None => {
                let path = self.from.join(ESTIMATES_FILE);
                run.hash_input(&path)?;
                Ok(EstimateTable::read_csv(&path, self.config.windowing())?)
            }
        }
    }

    fn partition(&mut self, run: &mut Run) -> Result<BTreeMap<i64, Partition>, CliError> {
        let (gridset, _) = self.grid_table(run)?;
        let estimates = self.load_estimates(run)?;
        let adjacency = grid_adjacency(&gridset);
        let config = self.config.partition();
        let mut out = BTreeMap::new();
        for &w in &estimates.windows {
            let p = match partition_window(&gridset, &adjacency, &estimates, w, &config) {
                Ok((_, wp)) => {
                    if !wp.integration.converged {
                        log::warn!("window {w}: integrative growing hit max_iters ({})", config.max_iters);
                    }
                    log::debug!(
                        "window {w}: {} grown, {} after integration ({} iterations), {} after smoothing ({} sweeps)",
                        wp.grown_regions,
                        wp.integration.labels.iter().max().map_or(0, |&m| m as usize),
                        wp.integration.iterations,
                        wp.partition.region_count(),
                        wp.smoothing.sweeps
                    );
                    wp.partition
                }
                Err(GraphError::NoEstimatedGrids(_)) => {
                    log::warn!("window {w}: no grid has a density; all grids left unknown");
                    Partition {
                        labels: gridset.ids().map(|g| (g, UNKNOWN_REGION)).collect(),
                        regions: Vec::new(),
                    }
                }
                Err(e) => return Err(e.into()),
            };
            out.insert(w, p);
        }
        run.output(PARTITION_FILE);
        run.output(crate::partition::REGIONS_FILE);
        write_partition_csvs(&run.out, &estimates.windowing, &out)?;
        self.partitions = Some(out.iter().map(|(&w, p)| (w, p.labels.clone())).collect());
        self.estimates = Some(estimates);
        Ok(out)
    }

    fn load_partitions(&mut self, run: &mut Run) -> Result<BTreeMap<i64, BTreeMap<GridId, i64>>, CliError> {
        match self.partitions.clone() {
            Some(p) => Ok(p),
            None => {
                let path = self.from.join(PARTITION_FILE);
                run.hash_input(&path)?;
                Ok(read_partition_labels(&path, &self.config.windowing())?)
            }
        }
    }

    fn truth_path(&self) -> Option<PathBuf> {
        match (&self.args.truth, &self.args.input) {
            (Some(t), _) => Some(t.clone()),
            (None, Some(dir)) if dir.join(TRUTH_FILE).is_file() => Some(dir.join(TRUTH_FILE)),
            _ => None,
        }
    }

    fn evaluate(&mut self, run: &mut Run) -> Result<Report, CliError> {
        let (gridset, _) = self.grid_table(run)?;
        let estimates = self.load_estimates(run)?;
        let partitions = self.load_partitions(run)?;
        let windowing = self.config.windowing();
        let truth = match self.truth_path() {
            Some(p) => {
                run.hash_input(&p)?;
                // Regime labels do not change between windows.
                let per_window = read_truth_regions(&p, &windowing)?;
                let mut merged: BTreeMap<GridId, i64> = BTreeMap::new();
                for labels in per_window.into_values() {
                    merged.extend(labels);
                }
                Some(merged)
            }
            None => None,
        };
        let length: BTreeMap<GridId, f64> = gridset.grids.iter().map(|g| (g.id, g.total_link_length)).collect();
        let mut windows = Vec::new();
        for (&w, labels) in &partitions {
            let density = estimates.densities(w);
            let n_estimated = estimates
                .in_window(w)
                .filter(|e| e.status == EstimateStatus::Estimated)
                .count();
            let truth_w = truth
                .as_ref()
                .map(|t| labels.keys().map(|g| t.get(g).map(|&l| (*g, l))).collect::<Option<BTreeMap<_, _>>>())
                .map(|t| t.ok_or_else(|| MetricsError::DomainMismatch("truth misses grids of the partition".into())))
                .transpose()?;
            windows.push(window_report(
                windowing.start(w),
                n_estimated,
                labels,
                &density,
                &length,
                truth_w.as_ref(),
            )?);
        }
        let report = Report::from_windows(windows);
        std::fs::write(run.output(REPORT_FILE), report.to_json())?;
        if let Some(ari) = report.ari {
            log::info!("mean ARI {ari:.4}, mean regions {:.2}", report.n_regions);
        }
        self.estimates = Some(estimates);
        Ok(report)
    }

    fn export_map(&mut self, run: &mut Run) -> Result<(), CliError> {
        let (gridset, taz_ids) = self.grid_table(run)?;
        let partitions = self.load_partitions(run)?;
        let windowing = self.config.windowing();
        for (&w, labels) in &partitions {
            let start = windowing.start(w);
            std::fs::write(run.output(&format!("map_{start}.svg")), render_svg(&gridset, labels, start))?;
            if self.args.geojson {
                let text = render_geojson(&gridset, &taz_ids, labels, start);
                std::fs::write(run.output(&format!("map_{start}.geojson")), text)?;
            }
        }
        Ok(())
    }

    fn pipeline(&mut self, run: &mut Run) -> Result<(), CliError> {
        self.grid(run)?;
        self.estimate(run)?;
        self.partition(run)?;
        self.evaluate(run)?;
        self.export_map(run)
    }
}

pub fn region_fill(region: i64) -> &'static str {
    if region < 0 {
        UNKNOWN_FILL
    } else {
        PALETTE[(region % 12) as usize]
    }
}

/// One rectangle per grid, filled by region. North is up.
pub fn render_svg(gridset: &GridSet, labels: &BTreeMap<GridId, i64>, window_start_s: f64) -> String {
    let (x0, y0, x1, y1) = bounds(gridset);
    let (w, h) = ((x1 - x0).max(1e-9), (y1 - y0).max(1e-9));
    let scale = 800.0 / w.max(h);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.1}" height="{:.1}" viewBox="0 0 {:.1} {:.1}">"#,
        w * scale,
        h * scale,
        w * scale,
        h * scale
    );
    let _ = writeln!(s, "<title>regions at t={window_start_s} s</title>");
    for g in &gridset.grids {
        let region = labels.get(&g.id).copied().unwrap_or(UNKNOWN_REGION);
        let r = &g.rect;
        let _ = writeln!(
            s,
            r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}" stroke="#ffffff" stroke-width="0.5"><title>grid {} region {}</title></rect>"##,
            (r.x_min - x0) * scale,
            (y1 - r.y_max) * scale,
            r.width() * scale,
            r.height() * scale,
            region_fill(region),
            g.id,
            region
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grid rectangles in planar (projected) coordinates with region properties.
pub fn render_geojson(
    gridset: &GridSet,
    taz_ids: &[String],
    labels: &BTreeMap<GridId, i64>,
    window_start_s: f64,
) -> String {
    let features: Vec<serde_json::Value> = gridset
        .grids
        .iter()
        .map(|g| {
            let r = &g.rect;
            let ring = [
                [r.x_min, r.y_min],
                [r.x_max, r.y_min],
                [r.x_max, r.y_max],
                [r.x_min, r.y_max],
                [r.x_min, r.y_min],
            ];
            let region = labels.get(&g.id).copied().unwrap_or(UNKNOWN_REGION);
            serde_json::json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring] },
                "properties": {
                    "grid_id": g.id.0,
                    "taz_id": taz_ids.get(g.taz),
                    "window_start_s": window_start_s,
                    "region_id": region,
                    "fill": region_fill(region),
                },
            })
        })
        .collect();
    let fc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_string_pretty(&fc).expect("geojson serializes") + "\n"
}

fn bounds(gridset: &GridSet) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for g in &gridset.grids {
        b.0 = b.0.min(g.rect.x_min);
        b.1 = b.1.min(g.rect.y_min);
        b.2 = b.2.max(g.rect.x_max);
        b.3 = b.3.max(g.rect.y_max);
    }
    if gridset.grids.is_empty() {
        (0.0, 0.0, 1.0, 1.0)
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_over_file_values() {
        let mut c: PipelineConfig = serde_json::from_str(r#"{"lambda": 0.3, "min_size_m2": 5.0}"#).unwrap();
        assert_eq!(c.max_iters, 20);
        let o = Overrides {
            lambda: Some(0.7),
            sigma: Some(Sigma::Fixed(0.01)),
            ..Overrides::default()
        };
        o.apply(&mut c);
        assert_eq!((c.lambda, c.min_size_m2, c.sigma), (0.7, 5.0, Sigma::Fixed(0.01)));
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"lamda": 0.3}"#).is_err());
    }

    #[test]
    fn palette_cycles_by_twelve() {
        assert_eq!(region_fill(1), region_fill(13));
        assert_ne!(region_fill(1), region_fill(2));
        assert_eq!(region_fill(-1), UNKNOWN_FILL);
    }

    #[test]
    fn error_lines_and_codes() {
        let e: CliError = IngestError::MissingFile("trajectories.csv".into()).into();
        assert_eq!(e.line(), "MissingFile:trajectories.csv");
        assert_eq!(e.exit_code(), 2);
        let io: CliError = std::io::Error::other("disk").into();
        assert_eq!(io.exit_code(), 1);
    }
}
