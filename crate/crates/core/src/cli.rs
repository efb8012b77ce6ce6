//! Command-line front end. Every command writes its outputs plus a
//! `manifest.json` (config, seed, input and output hashes) into `--out`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::design::{design_dump, Block, OrthoPolyBasis};
use crate::diagnostics::{self, AucMode, CvPlan};
use crate::eda;
use crate::error::{Error, Result};
use crate::io::{self, RunManifest, Timing};
use crate::krige::{self, PredictionGrid};
use crate::mcmc::{self, ModelSpec, PosteriorDraws, Variant};
use crate::records::{self, RecordTensor, SeriesModel, SimulatedSeriesConfig, Site};
use crate::stats::{self, Summary};

#[derive(Debug, Parser)]
#[command(name = "recbreak", version, about = "Record-breaking temperature analysis")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate i.i.d. or linear-drift daily series.
    Simulate(SimulateArgs),
    /// Extract record indicators from temperatures.
    Records(RecordsArgs),
    /// Yearly record rates, persistence log odds ratios and nested logit fits.
    Eda(EdaArgs),
    /// Dump the unscaled design matrices.
    Design(DesignArgs),
    /// Fit one of the models M0-M5 by Gibbs sampling.
    Fit(FitArgs),
    /// Posterior predictive record statistics on a grid.
    Predict(PredictArgs),
    /// Spatial cross-validation with Brier score and AUC.
    Crossval(CrossvalArgs),
    /// Convergence diagnostics for stored draws.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SimModel {
    Crm,
    Ldm,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "crm")]
    pub model: SimModel,
    /// Drift per year (LDM).
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Series length in years.
    #[arg(long = "T", default_value_t = 62)]
    pub years: usize,
    /// Number of simulated stations.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 365)]
    pub days: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Data source: temperatures or a previously exported indicator file.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Temperature CSV (`site,year,doy,tmax_c` or `site,date,tmax_c`).
    #[arg(long = "in")]
    pub temps: Option<PathBuf>,
    /// Indicator CSV written by `records`.
    #[arg(long, conflicts_with = "temps")]
    pub indicators: Option<PathBuf>,
    /// Station CSV (`site,x_km,y_km,dist_coast_km`).
    #[arg(long)]
    pub stations: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecordsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EdaArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Keep a single station of a cluster of near-duplicates.
    #[arg(long, requires = "region_sites")]
    pub dedupe_region: bool,
    /// Station ids of the cluster; the first one is kept.
    #[arg(long, value_delimiter = ',')]
    pub region_sites: Vec<String>,
    /// Skip the nested logit fits.
    #[arg(long)]
    pub no_models: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Sampler settings; flags override the config file.
#[derive(Debug, Args)]
pub struct SpecArgs {
    /// TOML file with `ModelSpec` fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SpecArgs {
    fn spec(&self, variant: Option<Variant>) -> Result<ModelSpec> {
        let mut spec: ModelSpec = match &self.config {
            Some(p) => toml::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Format {
                path: p.clone(),
                msg: e.to_string(),
            })?,
            None => ModelSpec::default(),
        };
        if let Some(v) = variant {
            spec.variant = v;
        }
        if let Some(v) = self.iterations {
            spec.iterations = v;
        }
        if let Some(v) = self.burn_in {
            spec.burn_in = v;
        }
        if let Some(v) = self.thin {
            spec.thin = v;
        }
        if let Some(v) = self.chains {
            spec.chains = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_parser = parse_variant)]
    pub model: Option<Variant>,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub draws: PathBuf,
    /// Grid CSV (`cell_id,x_km,y_km,dist_coast_km,block`); defaults to the fitted stations.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub t1: usize,
    #[arg(long)]
    pub t2: usize,
    /// First and last calendar day of the window (default: whole year).
    #[arg(long)]
    pub l1: Option<usize>,
    #[arg(long)]
    pub l2: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "nbar,ratio,ers")]
    pub stats: Vec<String>,
    /// Grid block label for the ERS series (default: all cells).
    #[arg(long)]
    pub block: Option<String>,
    /// Evenly spaced posterior draws to simulate from.
    #[arg(long, default_value_t = 200)]
    pub max_draws: usize,
    /// Observed indicators at the fitted stations, for PIT and AD checks.
    #[arg(long)]
    pub observed: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Plan CSV (`group,site`); default is a seeded random split.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub groups: usize,
    #[arg(long, value_delimiter = ',', default_value = "M0,M1", value_parser = parse_variant)]
    pub models: Vec<Variant>,
    /// Inclusive year ranges such as `2-31,32-62` (default: two halves).
    #[arg(long, value_delimiter = ',')]
    pub periods: Vec<String>,
    /// One AUC over pooled hold-outs instead of the fold average.
    #[arg(long)]
    pub pool_auc: bool,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Broad class of a failure, printed with the error.
pub fn error_category(e: &Error) -> &'static str {
    match e {
        Error::MalformedInput(_) | Error::Parse { .. } | Error::Format { .. } | Error::Csv(_) | Error::Json(_) => "input",
        Error::Io(_) => "io",
        Error::InvalidParameter(_) | Error::OutOfRange(_) => "parameter",
        Error::Factorization { .. } | Error::NoConvergence { .. } | Error::Separation { .. } | Error::Undefined(_) => {
            "numerical"
        }
        Error::Step { .. } => "sampler",
    }
}

/// Parses `argv` and runs the command. Returns the process exit code:
/// 0 on success, 2 for usage errors, 1 for runtime failures.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let name = command_name(&cli.command);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error[io] {name}: cannot start thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| run(&cli.command, threads)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}] {name}: {e}", error_category(&e));
            1
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Records(_) => "records",
        Command::Eda(_) => "eda",
        Command::Design(_) => "design",
        Command::Fit(_) => "fit",
        Command::Predict(_) => "predict",
        Command::Crossval(_) => "crossval",
        Command::Diagnose(_) => "diagnose",
    }
}

/// Runs one parsed command.
pub fn run(command: &Command, threads: usize) -> Result<()> {
    let start = Instant::now();
    let out = match command {
        Command::Simulate(a) => &a.out,
        Command::Records(a) => &a.out,
        Command::Eda(a) => &a.out,
        Command::Design(a) => &a.out,
        Command::Fit(a) => &a.out,
        Command::Predict(a) => &a.out,
        Command::Crossval(a) => &a.out,
        Command::Diagnose(a) => &a.out,
    };
    fs::create_dir_all(out)?;
    let chain_seconds = match command {
        Command::Simulate(a) => simulate(a).map(|_| Vec::new()),
        Command::Records(a) => records_cmd(a).map(|_| Vec::new()),
        Command::Eda(a) => eda_cmd(a).map(|_| Vec::new()),
        Command::Design(a) => design_cmd(a).map(|_| Vec::new()),
        Command::Fit(a) => fit_cmd(a),
        Command::Predict(a) => predict_cmd(a).map(|_| Vec::new()),
        Command::Crossval(a) => crossval_cmd(a).map(|_| Vec::new()),
        Command::Diagnose(a) => diagnose_cmd(a).map(|_| Vec::new()),
    }?;
    io::write_timing(
        out,
        &Timing {
            seconds: start.elapsed().as_secs_f64(),
            threads,
            chain_seconds,
        },
    )
}

struct Loaded {
    tensor: RecordTensor,
    sites: Vec<Site>,
    first_year: i32,
    inputs: Vec<PathBuf>,
}

fn load_input(a: &InputArgs) -> Result<Loaded> {
    match (&a.temps, &a.indicators) {
        (Some(t), None) => {
            let ing = io::ingest(t, &a.stations)?;
            if ing.dropped_feb29 > 0 {
                eprintln!("dropped {} February 29 rows", ing.dropped_feb29);
            }
            Ok(Loaded {
                tensor: records::extract_records(&ing.panel)?,
                sites: ing.panel.sites().to_vec(),
                first_year: ing.first_year,
                inputs: vec![t.clone(), a.stations.clone()],
            })
        }
        (None, Some(i)) => {
            let sites = io::read_stations(&a.stations)?;
            let (tensor, first_year) = io::read_indicators(i, &sites)?;
            Ok(Loaded {
                tensor,
                sites,
                first_year,
                inputs: vec![i.clone(), a.stations.clone()],
            })
        }
        _ => Err(Error::InvalidParameter("give exactly one of --in or --indicators".into())),
    }
}

fn manifest_with_inputs(command: &str, seed: Option<u64>, config: serde_json::Value, inputs: &[PathBuf]) -> Result<RunManifest> {
    let mut m = RunManifest::new(command, seed, config);
    for p in inputs {
        m.add_input(p)?;
    }
    Ok(m)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = match a.model {
        SimModel::Crm => SimulatedSeriesConfig::crm(a.years, a.reps, a.days, a.seed),
        SimModel::Ldm => SimulatedSeriesConfig::ldm(a.c, a.sigma, a.years, a.reps, a.days, a.seed),
    };
    let cfg = SimulatedSeriesConfig { sigma: a.sigma, ..cfg };
    let panel = records::simulate_series(&cfg)?;
    let temps = a.out.join("temps.csv");
    let stations = a.out.join("stations.csv");
    let summary = a.out.join("summary.csv");

    let mut w = csv_writer(&stations)?;
    w.write_record(["site", "x_km", "y_km", "dist_coast_km"])?;
    for s in panel.sites() {
        w.write_record([s.id.clone(), s.x_km.to_string(), s.y_km.to_string(), s.dist_coast_km.to_string()])?;
    }
    w.flush()?;
    let mut w = csv_writer(&temps)?;
    w.write_record(["site", "year", "doy", "tmax_c"])?;
    for (i, s) in panel.sites().iter().enumerate() {
        for t in 1..=panel.years() {
            for d in 1..=panel.days() {
                w.write_record([s.id.clone(), t.to_string(), d.to_string(), format!("{:?}", panel.get(i, t, d))])?;
            }
        }
    }
    w.flush()?;
    let tensor = records::extract_records(&panel)?;
    let mut w = csv_writer(&summary)?;
    w.write_record(["t", "p_hat", "crm"])?;
    for t in 2..=panel.years() {
        w.write_record([t.to_string(), eda::empirical_p_hat(&tensor, t)?.to_string(), (1.0 / t as f64).to_string()])?;
    }
    w.flush()?;
    let model = match cfg.model {
        SeriesModel::Crm => "crm",
        SeriesModel::Ldm => "ldm",
    };
    RunManifest::new("simulate", Some(a.seed), json!({ "model": model, "config": cfg })).write(&a.out, &[temps, stations, summary])?;
    Ok(())
}

fn records_cmd(a: &RecordsArgs) -> Result<()> {
    let l = load_input(&a.input)?;
    let path = a.out.join("indicators.csv");
    io::write_indicators(&path, &l.tensor, &l.sites, l.first_year)?;
    manifest_with_inputs("records", None, json!({ "ties": l.tensor.count_ties() }), &l.inputs)?.write(&a.out, &[path])?;
    Ok(())
}

fn eda_cmd(a: &EdaArgs) -> Result<()> {
    let mut l = load_input(&a.input)?;
    if a.dedupe_region {
        let idx: Vec<usize> = a
            .region_sites
            .iter()
            .map(|id| {
                l.sites
                    .iter()
                    .position(|s| &s.id == id)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown region site {id:?}")))
            })
            .collect::<Result<_>>()?;
        let (tensor, kept) = eda::dedupe_region(&l.tensor, &idx, idx[0])?;
        l.tensor = tensor;
        l.sites = kept.iter().map(|&i| l.sites[i].clone()).collect();
    }
    let yearly = a.out.join("yearly.csv");
    let mut w = csv_writer(&yearly)?;
    w.write_record(["t", "p_hat", "lor1", "lor_..1", "lor_..0"])?;
    for y in eda::yearly_summary(&l.tensor)? {
        w.write_record([y.t.to_string(), y.p_hat.to_string(), y.lor1.to_string(), y.lor_given_record.to_string(), y.lor_given_none.to_string()])?;
    }
    w.flush()?;
    let mut outputs = vec![yearly];
    if !a.no_models {
        let dists: Vec<f64> = l.sites.iter().map(|s| s.dist_coast_km).collect();
        let models = a.out.join("models.csv");
        let mut w = csv_writer(&models)?;
        w.write_record(["model", "dof", "loglik", "aic"])?;
        let data = eda::eda_data(&l.tensor, &dists)?;
        // a separated or non-converged fit is flagged as NA, the rest still run
        for model in eda::NestedModel::ALL {
            match eda::fit_nested_model(&data, model) {
                Ok(f) => w.write_record([model.name().to_string(), f.dof.to_string(), f.loglik.to_string(), f.aic.to_string()])?,
                Err(e @ (Error::Separation { .. } | Error::NoConvergence { .. })) => {
                    eprintln!("warning: {} not reported: {e}", model.name());
                    w.write_record([model.name(), &model.dof().to_string(), "NA", "NA"])?;
                }
                Err(e) => return Err(e),
            }
        }
        w.flush()?;
        outputs.push(models);
    }
    let cfg = json!({ "dedupe_region": a.dedupe_region, "region_sites": a.region_sites, "sites": l.sites.len() });
    manifest_with_inputs("eda", None, cfg, &l.inputs)?.write(&a.out, &outputs)?;
    Ok(())
}

fn design_cmd(a: &DesignArgs) -> Result<()> {
    let l = load_input(&a.input)?;
    let dists: Vec<f64> = l.sites.iter().map(|s| s.dist_coast_km).collect();
    let basis = OrthoPolyBasis::new(l.tensor.years())?;
    let rows = design_dump(&l.tensor, &dists, &basis)?;
    let mut outputs = Vec::new();
    for block in Block::ALL {
        let path = a.out.join(format!("design_{}.csv", block.label()));
        let mut w = csv_writer(&path)?;
        let mut header = vec!["site".to_string(), "t".into(), "doy".into(), "response".into()];
        header.extend(block.names().iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for r in rows.iter().filter(|r| r.block == block) {
            let mut rec = vec![l.sites[r.site].id.clone(), r.t.to_string(), r.day.to_string(), r.response.to_string()];
            rec.extend(r.row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        outputs.push(path);
    }
    manifest_with_inputs("design", None, json!({}), &l.inputs)?.write(&a.out, &outputs)?;
    Ok(())
}

fn fit_cmd(a: &FitArgs) -> Result<Vec<f64>> {
    let l = load_input(&a.input)?;
    let spec = a.spec.spec(a.model)?;
    let mut inputs = l.inputs.clone();
    inputs.extend(a.spec.config.iter().cloned());
    let data = mcmc::FitData::new(l.tensor, l.sites)?;
    let fit = mcmc::run_chains(&spec, &data, &[])?;
    let mut outputs = io::persist_draws(&fit.draws, &a.out)?;
    let dic = a.out.join("dic.json");
    fs::write(&dic, serde_json::to_string_pretty(&fit.dic)? + "\n")?;
    outputs.push(dic);
    let summary = a.out.join("summary.csv");
    write_posterior_summary(&summary, &fit.draws)?;
    outputs.push(summary);
    let mut m = manifest_with_inputs("fit", Some(spec.seed), serde_json::to_value(&spec)?, &inputs)?;
    m.chain_stats = fit.draws.meta.stats.clone();
    m.write(&a.out, &outputs)?;
    Ok(fit.seconds)
}

fn write_posterior_summary(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["param", "mean", "q05", "q95"])?;
    for name in draws.scalar_names() {
        let all: Vec<f64> = draws.scalar_series(&name).unwrap_or_default().concat();
        let s = Summary::of(&all);
        w.write_record([name, s.mean.to_string(), s.q05.to_string(), s.q95.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Keeps at most `max` draws, evenly spaced within each chain.
pub fn subsample(draws: &PosteriorDraws, max: usize) -> PosteriorDraws {
    let total = draws.total_draws();
    if total <= max || max == 0 {
        return draws.clone();
    }
    let step = total.div_ceil(max);
    PosteriorDraws {
        meta: draws.meta.clone(),
        chains: draws.chains.iter().map(|c| c.iter().step_by(step).cloned().collect()).collect(),
    }
}

fn summary_record(stat: &str, key: String, v: &[f64]) -> [String; 5] {
    let s = Summary::of(v);
    [key, stat.to_string(), s.mean.to_string(), s.q05.to_string(), s.q95.to_string()]
}

fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let all = io::load_draws(&a.draws)?;
    let draws = subsample(&all, a.max_draws);
    let meta = &draws.meta;
    let grid = match &a.grid {
        Some(p) => io::read_grid(p)?,
        None => PredictionGrid::from_sites(&meta.sites)?,
    };
    let (l1, l2) = (a.l1.unwrap_or(1), a.l2.unwrap_or(meta.days));
    let field = krige::simulate_predictive(&draws, &grid, a.t2, a.seed)?;
    let mut outputs = Vec::new();
    let wants = |s: &str| a.stats.iter().any(|x| x == s);
    for s in &a.stats {
        if !["nbar", "ratio", "ers"].contains(&s.as_str()) {
            return Err(Error::InvalidParameter(format!("unknown statistic {s:?}")));
        }
    }
    if wants("nbar") || wants("ratio") {
        let path = a.out.join("gridded.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["cell_id", "stat", "mean", "q05", "q95"])?;
        for (c, cell) in grid.cells.iter().enumerate() {
            if wants("nbar") {
                w.write_record(summary_record("nbar", cell.id.clone(), &krige::nbar(&field, a.t1, a.t2, l1, l2, c)?))?;
            }
            if wants("ratio") {
                w.write_record(summary_record("ratio", cell.id.clone(), &krige::ratio(&field, a.t1, a.t2, l1, l2, c)?))?;
            }
        }
        w.flush()?;
        outputs.push(path);
    }
    let cells: Vec<usize> = match &a.block {
        Some(b) => grid.block_cells(b),
        None => (0..grid.len()).collect(),
    };
    let days: Vec<usize> = (l1..=l2).collect();
    if wants("ers") {
        let path = a.out.join("series.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["t", "stat", "mean", "q05", "q95"])?;
        for t in a.t1..=a.t2 {
            w.write_record(summary_record("ers", t.to_string(), &krige::ers_bar(&field, t, &days, &cells)?))?;
        }
        w.flush()?;
        outputs.push(path);
    }
    let mut inputs = vec![a.draws.join("meta.json"), a.draws.join("draws.csv")];
    inputs.extend(a.grid.iter().cloned());
    if let Some(obs) = &a.observed {
        inputs.push(obs.clone());
        outputs.extend(observed_checks(a, &draws, &field, obs, l1, l2)?);
    }
    let cfg = json!({
        "t1": a.t1, "t2": a.t2, "l1": l1, "l2": l2, "stats": a.stats, "block": a.block,
        "draws_used": draws.total_draws(),
    });
    manifest_with_inputs("predict", Some(a.seed), cfg, &inputs)?.write(&a.out, &outputs)?;
    Ok(())
}

/// PIT of yearly ERS and the AD statistic against observed indicators.
fn observed_checks(
    a: &PredictArgs,
    draws: &PosteriorDraws,
    field: &krige::PredictiveField,
    obs: &Path,
    l1: usize,
    l2: usize,
) -> Result<Vec<PathBuf>> {
    let meta = &draws.meta;
    if a.grid.is_some() {
        return Err(Error::InvalidParameter("--observed needs the default grid of fitted stations".into()));
    }
    let (tensor, _) = io::read_indicators(obs, &meta.sites)?;
    let n = meta.sites.len();
    let days: Vec<usize> = (l1..=l2).collect();
    let mut steps = Vec::new();
    for t in a.t1.max(2)..=a.t2 {
        let mut k = 0usize;
        for &d in &days {
            for s in 0..n {
                k += tensor.get(s, t, d).strict() as usize;
            }
        }
        let observed = k as f64 / (n * days.len()) as f64;
        steps.push(diagnostics::pit_steps(&krige::ers_bar(field, t, &days, &(0..n).collect::<Vec<_>>())?, observed)?);
    }
    let pit_path = a.out.join("pit.csv");
    let mut w = csv_writer(&pit_path)?;
    w.write_record(["bin", "mass"])?;
    for (j, m) in diagnostics::pit_histogram(&steps)?.iter().enumerate() {
        w.write_record([(j + 1).to_string(), m.to_string()])?;
    }
    w.flush()?;

    // cumulative record counts N_t per (day, site)
    let counts = |get: &dyn Fn(usize, usize, usize) -> u8| -> Vec<Vec<f64>> {
        let mut running = vec![0.0; days.len() * n];
        let mut out = Vec::new();
        for t in 1..=a.t2 {
            for (i, &d) in days.iter().enumerate() {
                for s in 0..n {
                    running[i * n + s] += get(s, t, d) as f64;
                }
            }
            if t >= a.t1 {
                out.push(running.clone());
            }
        }
        out
    };
    let observed = counts(&|s, t, d| tensor.get(s, t, d).strict());
    let predicted: Vec<Vec<Vec<f64>>> = (0..field.draws).map(|k| counts(&|s, t, d| field.indicator(k, t, d, s))).collect();
    let ad = diagnostics::ad_metric(&observed, &predicted)?;
    let ad_path = a.out.join("ad.csv");
    let mut w = csv_writer(&ad_path)?;
    w.write_record(["t", "ad"])?;
    for (i, v) in ad.iter().enumerate() {
        w.write_record([(a.t1 + i).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(vec![pit_path, ad_path])
}

fn read_plan(path: &Path, sites: &[Site]) -> Result<CvPlan> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut groups: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    for rec in rdr.records() {
        let r = rec?;
        let line = r.position().map_or(0, |p| p.line() as usize);
        let (g, id) = (r.get(0).unwrap_or("").trim(), r.get(1).unwrap_or("").trim());
        let s = sites.iter().position(|s| s.id == id).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("unknown site {id:?}"),
        })?;
        groups.entry(g.to_string()).or_default().push(s);
    }
    Ok(CvPlan {
        groups: groups.into_values().collect(),
        seed: 0,
    })
}

fn parse_periods(specs: &[String], years: usize) -> Result<diagnostics::Periods> {
    if specs.is_empty() {
        return Ok(diagnostics::default_periods(years));
    }
    specs
        .iter()
        .map(|s| {
            let (a, b) = s
                .split_once('-')
                .ok_or_else(|| Error::InvalidParameter(format!("period {s:?} is not of the form a-b")))?;
            let bad = || Error::InvalidParameter(format!("bad period {s:?}"));
            let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a < 2 || b < a || b > years {
                return Err(Error::OutOfRange(format!("period {s} outside years 2..={years}")));
            }
            Ok((a, b))
        })
        .collect()
}

fn crossval_cmd(a: &CrossvalArgs) -> Result<()> {
    let l = load_input(&a.input)?;
    let base = a.spec.spec(None)?;
    let plan = match &a.plan {
        Some(p) => read_plan(p, &l.sites)?,
        None => CvPlan::random(l.sites.len(), a.groups, base.seed)?,
    };
    let periods = parse_periods(&a.periods, l.tensor.years())?;
    let specs: Vec<ModelSpec> = a.models.iter().map(|&v| ModelSpec { variant: v, ..base.clone() }).collect();
    let mode = if a.pool_auc { AucMode::Pooled } else { AucMode::FoldAverage };
    let table = diagnostics::run_crossval(&specs, &l.tensor, &l.sites, &plan, &periods, mode)?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    for (m, f, e) in &table.failures {
        eprintln!("warning: {m} fold {f} failed: {e}");
    }
    let rows = a.out.join("cv.csv");
    let mut w = csv_writer(&rows)?;
    w.write_record(["model", "fold", "period", "bs", "auc"])?;
    for r in &table.rows {
        w.write_record([r.model.to_string(), r.fold.to_string(), r.period.to_string(), r.bs.to_string(), r.auc.map_or(String::new(), |v| v.to_string())])?;
    }
    w.flush()?;
    let summary = a.out.join("summary.csv");
    let mut w = csv_writer(&summary)?;
    let mut header = vec!["model".to_string()];
    header.extend((1..=periods.len()).map(|k| format!("bs_p{k}")));
    header.extend((1..=periods.len()).map(|k| format!("auc_p{k}")));
    w.write_record(&header)?;
    for spec in &specs {
        let get = |k: usize| table.summary.iter().find(|s| s.model == spec.variant && s.period == k);
        let mut rec = vec![spec.variant.to_string()];
        rec.extend((1..=periods.len()).map(|k| get(k).map_or(String::new(), |s| s.bs.to_string())));
        rec.extend((1..=periods.len()).map(|k| get(k).map_or(String::new(), |s| s.auc.to_string())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let mut inputs = l.inputs.clone();
    inputs.extend(a.plan.iter().cloned());
    inputs.extend(a.spec.config.iter().cloned());
    let cfg = json!({ "spec": base, "models": specs.iter().map(|s| s.variant).collect::<Vec<_>>(), "plan": plan, "periods": periods, "pool_auc": a.pool_auc });
    manifest_with_inputs("crossval", Some(base.seed), cfg, &inputs)?.write(&a.out, &[rows, summary])?;
    Ok(())
}

fn diagnose_cmd(a: &DiagnoseArgs) -> Result<()> {
    let draws = io::load_draws(&a.draws)?;
    let path = a.out.join("psrf.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["param", "psrf"])?;
    let names = draws.scalar_names();
    let mut vectors: Vec<Vec<Vec<f64>>> = vec![Vec::new(); draws.chains.len()];
    for name in &names {
        let series = draws.scalar_series(name).unwrap_or_default();
        let v = diagnostics::psrf(&series).map_or_else(|e| format!("NA ({e})"), |v| v.to_string());
        w.write_record([name.clone(), v])?;
        for (c, s) in series.into_iter().enumerate() {
            vectors[c].push(s);
        }
    }
    if !names.is_empty() {
        // chains[c][k] = parameter vector of draw k
        let per_draw: Vec<Vec<Vec<f64>>> = vectors
            .iter()
            .map(|params| (0..params[0].len()).map(|k| params.iter().map(|p| p[k]).collect()).collect())
            .collect();
        let v = diagnostics::multivariate_psrf(&per_draw).map_or_else(|e| format!("NA ({e})"), |v| v.to_string());
        w.write_record(["multivariate".to_string(), v])?;
    }
    w.flush()?;
    let inputs = [a.draws.join("meta.json"), a.draws.join("draws.csv")];
    manifest_with_inputs("diagnose", None, json!({ "parameters": names.len() }), &inputs)?.write(&a.out, &[path])?;
    let _ = stats::mean(std::iter::empty());
    Ok(())
}
