use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::Duration;
use rayon::prelude::*;

use epifit_core::data_ingest::{parse_nyt_csv, parse_region_config, validate_ifr};
use epifit_core::delay_dist::{build_time_to_death, PoissonGammaParams};
use epifit_core::diagnostics::means_agree;
use epifit_core::plot::Chart;
use epifit_core::posterior::{
    predictive_band, summarize, synthesize_data, undercount_csv, undercount_series, Interval,
    PredictiveBand, SummaryTable, UndercountPoint,
};
use epifit_core::sampler::read_chain_csv;
use epifit_core::{
    default_init, r0, run_chain, simulate_sir, Chain, DeathModel, DeathSeries, DelayDistribution,
    Params, RegionConfig, SamplerConfig,
};

use crate::args::{
    Command, DelayArgs, FitArgs, ForecastArgs, RerunArgs, SimulateArgs, SummarizeArgs,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{
    load_manifest, ChainRecord, DelaySettings, InputFile, RunManifest, SamplerSettings,
    MANIFEST_FILE,
};
use crate::output::{derive_seed, file_tag, read_text, write_atomic};

/// Worker pool capped by `EPIFIT_THREADS` when set.
pub fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("EPIFIT_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Input(format!("EPIFIT_THREADS must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))
}

pub fn run(command: Command) -> CliResult<()> {
    let pool = thread_pool()?;
    pool.install(|| match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Rerun(a) => cmd_rerun(a),
    })
}

/// Collects written files for the manifest.
struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    fn new(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, rel: impl AsRef<Path>, contents: &str) -> CliResult<()> {
        let rel = rel.as_ref();
        write_atomic(&self.root.join(rel), contents)?;
        self.written.push(rel.display().to_string());
        Ok(())
    }

    fn finish(mut self, mut manifest: RunManifest, name: &str) -> CliResult<()> {
        self.written.sort();
        manifest.outputs = std::mem::take(&mut self.written);
        write_atomic(&self.root.join(name), &manifest.to_json())
    }
}

fn absolute(path: &Path) -> CliResult<PathBuf> {
    std::fs::canonicalize(path).map_err(|e| CliError::io(path, e))
}

/// Absolute form of a path that may not exist yet, so manifests replay from
/// any working directory.
fn absolute_out(path: &Path) -> CliResult<PathBuf> {
    std::path::absolute(path).map_err(|e| CliError::io(path, e))
}

fn build_theta(delay: &DelayArgs) -> CliResult<(DelayDistribution, DelaySettings)> {
    let inc = PoissonGammaParams::INCUBATION;
    let otd = PoissonGammaParams::ONSET_TO_DEATH;
    let theta = build_time_to_death(inc, otd, delay.delay_samples, delay.delay_seed)?;
    let settings = DelaySettings {
        incubation: [inc.alpha(), inc.beta()],
        onset_to_death: [otd.alpha(), otd.beta()],
        samples: delay.delay_samples,
        seed: delay.delay_seed,
        max_delay: theta.max_delay(),
        mean: theta.mean(),
    };
    Ok((theta, settings))
}

fn sampler_config(args: &FitArgs) -> CliResult<SamplerConfig> {
    let base = if args.heavy { 100_000 } else { 50_000 };
    let n = match args.iters {
        Some(n) if args.heavy => 2 * n,
        Some(n) => n,
        None => base,
    };
    let mut config = SamplerConfig::with_iterations(n, args.seed);
    if let Some(a) = args.adapt_start {
        config.adapt_start = a;
    }
    if let Some(b) = args.burn_in {
        config.burn_in = b;
    }
    config.keep_burn_in = args.keep_burn_in;
    config.validate()?;
    Ok(config)
}

/// A region's data, config and the file it came from.
struct RegionInput {
    config: RegionConfig,
    series: DeathSeries,
}

fn load_regions(data_text: &str, configs: &[PathBuf]) -> CliResult<Vec<RegionInput>> {
    let mut regions = Vec::new();
    for path in configs {
        let config = parse_region_config(&read_text(path)?)?;
        if regions
            .iter()
            .any(|r: &RegionInput| r.config.region_id == config.region_id)
        {
            return Err(CliError::Input(format!(
                "region `{}` configured twice",
                config.region_id
            )));
        }
        let series = parse_nyt_csv(data_text, &config.region_id)?.truncated_to(config.data_end_date)?;
        regions.push(RegionInput { config, series });
    }
    Ok(regions)
}

struct Job {
    region: usize,
    p: f64,
    chain_index: usize,
    seed: u64,
}

struct Fitted {
    chain: Chain,
    init: Params,
}

fn chain_file(region_id: &str, p: f64, seed: u64) -> PathBuf {
    PathBuf::from("chains").join(format!("chain_{}_seed{seed}.csv", file_tag(region_id, p)))
}

fn chain_seed(base: u64, region_id: &str, p: f64, k: usize) -> u64 {
    derive_seed(base, &format!("chain|{region_id}|{p}|{k}"))
}

fn predictive_seed(base: u64, region_id: &str, p: f64, label: &str) -> u64 {
    derive_seed(base, &format!("{label}|{region_id}|{p}"))
}

pub fn cmd_fit(mut args: FitArgs) -> CliResult<()> {
    for &p in &args.ifrs {
        validate_ifr(p)?;
    }
    if args.ifrs.is_empty() {
        return Err(CliError::Input("no IFR scenarios given".into()));
    }
    if args.chains == 0 {
        return Err(CliError::Input("--chains must be at least 1".into()));
    }
    args.data = absolute(&args.data)?;
    args.out = absolute_out(&args.out)?;
    args.region_configs = args
        .region_configs
        .iter()
        .map(|p| absolute(p))
        .collect::<CliResult<_>>()?;
    if let Some(t) = &args.truth {
        args.truth = Some(absolute(t)?);
    }
    let config = sampler_config(&args)?;

    let data_text = read_text(&args.data)?;
    let regions = load_regions(&data_text, &args.region_configs)?;
    let (theta, delay_settings) = build_theta(&args.delay)?;
    let truth = args.truth.as_deref().map(read_truth).transpose()?;

    let mut manifest = RunManifest::new(Command::Fit(args.clone()));
    manifest.inputs.push(InputFile::hash(&args.data)?);
    for p in &args.region_configs {
        manifest.inputs.push(InputFile::hash(p)?);
    }
    if let Some(t) = &args.truth {
        manifest.inputs.push(InputFile::hash(t)?);
    }
    manifest.delay = Some(delay_settings);
    manifest.sampler = Some(SamplerSettings {
        n_iterations: config.n_iterations,
        adapt_start: config.adapt_start,
        burn_in: config.burn_in,
        initial_step_scales: config.initial_step_scales,
        epsilon: config.epsilon,
        keep_burn_in: config.keep_burn_in,
    });
    manifest.ifr_scenarios = args.ifrs.clone();
    for r in &regions {
        if r.series.clamped_revisions > 0 {
            manifest.notes.push(format!(
                "{}: {} downward revision(s) of cumulative deaths clamped to zero daily deaths",
                r.config.region_id, r.series.clamped_revisions
            ));
        }
    }

    let jobs: Vec<Job> = regions
        .iter()
        .enumerate()
        .flat_map(|(ri, r)| {
            args.ifrs.iter().flat_map(move |&p| {
                (0..args.chains).map(move |k| Job {
                    region: ri,
                    p,
                    chain_index: k,
                    seed: chain_seed(args.seed, &r.config.region_id, p, k),
                })
            })
        })
        .collect();

    let fitted: Vec<CliResult<Fitted>> = jobs
        .par_iter()
        .map(|job| {
            let r = &regions[job.region];
            let region = r.config.with_ifr(job.p)?;
            let model = DeathModel::new(&r.series, theta.clone(), region.clone())?;
            let init = default_init(&region, &r.series);
            let chain = run_chain(
                |p| model.log_posterior(p),
                init,
                &SamplerConfig {
                    seed: job.seed,
                    ..config.clone()
                },
            )?;
            Ok(Fitted { chain, init })
        })
        .collect();
    let fitted: Vec<Fitted> = fitted.into_iter().collect::<CliResult<_>>()?;

    let mut out = OutputDir::new(&args.out)?;
    out.write("theta.csv", &theta.to_csv())?;
    for (job, f) in jobs.iter().zip(&fitted) {
        let region_id = &regions[job.region].config.region_id;
        let file = chain_file(region_id, job.p, job.seed);
        out.write(&file, &f.chain.to_csv())?;
        manifest.chains.push(ChainRecord {
            region_id: region_id.clone(),
            p: job.p,
            chain_index: job.chain_index,
            seed: job.seed,
            file,
            init: f.init.to_array(),
            acceptance_rate: f.chain.acceptance_rate,
            post_adaptation_acceptance_rate: f.chain.acceptance_rate_since(config.adapt_start),
        });
    }

    let mut table = SummaryTable::default();
    let mut recovery = String::from("region,p,quantity,truth,mean,lower,upper,covered\n");
    for (ri, r) in regions.iter().enumerate() {
        for &p in &args.ifrs {
            let chains: Vec<Chain> = jobs
                .iter()
                .zip(&fitted)
                .filter(|(j, _)| j.region == ri && j.p == p)
                .map(|(_, f)| f.chain.discard_before(config.burn_in))
                .collect();
            if let Some(note) = between_chain_note(&r.config.region_id, p, &chains) {
                manifest.notes.push(note);
            }
            let pooled = Chain::pool(&chains)?;
            let region = r.config.with_ifr(p)?;
            let pseed = predictive_seed(args.predictive_seed, &region.region_id, p, "in-sample");
            manifest
                .derived_seeds
                .push((format!("in-sample band {} p={p}", region.region_id), pseed));
            let report = report_region(&pooled, &region, &r.series, &theta, pseed, args.svg, &mut out)?;
            if let Some(t) = &truth {
                append_recovery(&mut recovery, &region, &pooled, &report.row_r0, t);
            }
            table.rows.push(report.row);
        }
    }
    out.write("summary.csv", &table.to_csv())?;
    out.write("summary.txt", &table.to_text())?;
    if truth.is_some() {
        out.write("recovery.csv", &recovery)?;
    }
    out.finish(manifest, MANIFEST_FILE)
}

fn between_chain_note(region_id: &str, p: f64, chains: &[Chain]) -> Option<String> {
    if chains.len() < 2 {
        return None;
    }
    let r0s: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| c.draws.iter().map(r0).collect())
        .collect();
    let disagree: Vec<usize> = (1..r0s.len())
        .filter(|&k| !means_agree(&r0s[0], &r0s[k]))
        .collect();
    Some(if disagree.is_empty() {
        format!("{region_id} p={p}: chain R0 means agree within 2 Monte Carlo standard errors")
    } else {
        format!(
            "{region_id} p={p}: WARNING chains {disagree:?} disagree with chain 0 on the R0 mean by more than 2 Monte Carlo standard errors"
        )
    })
}

struct RegionReport {
    row: epifit_core::posterior::SummaryRow,
    row_r0: Interval,
}

fn report_region(
    chain: &Chain,
    region: &RegionConfig,
    series: &DeathSeries,
    theta: &DelayDistribution,
    seed: u64,
    svg: bool,
    out: &mut OutputDir,
) -> CliResult<RegionReport> {
    let tag = file_tag(&region.region_id, region.ifr);
    let row = summarize(chain, region, series)?;
    let undercount = undercount_series(chain, series, region)?;
    out.write(format!("undercount_{tag}.csv"), &undercount_csv(&undercount))?;
    let band = predictive_band(chain, theta, region, series.start_date, 0, seed)?;
    out.write(format!("band_{tag}.csv"), &band.to_csv(Some(series)))?;
    if svg {
        out.write(
            format!("band_{tag}.svg"),
            &band_chart(&band, series, &format!("{} deaths, p = {}", region.region_id, region.ifr)),
        )?;
        out.write(
            format!("undercount_{tag}.svg"),
            &undercount_chart(&undercount, &format!("{} undercount, p = {}", region.region_id, region.ifr)),
        )?;
    }
    Ok(RegionReport {
        row_r0: row.r0,
        row,
    })
}

fn band_chart(band: &PredictiveBand, series: &DeathSeries, title: &str) -> String {
    let mut chart = Chart::new(title);
    chart.band = Some((
        band.lower.iter().map(|&v| v as f64).collect(),
        band.upper.iter().map(|&v| v as f64).collect(),
    ));
    chart.lines.push(("posterior mean".into(), band.mean_intensity.clone()));
    let observed: Vec<f64> = (0..band.len())
        .map(|k| {
            let i = (band.date(k) - series.start_date).num_days();
            if i >= 0 && (i as usize) < series.len() {
                series.daily_deaths[i as usize] as f64
            } else {
                f64::NAN
            }
        })
        .collect();
    chart.lines.insert(0, ("observed".into(), observed));
    chart.marker = Some((band.data_end_date - band.start_date).num_days().max(0) as usize);
    chart.to_svg()
}

fn undercount_chart(points: &[UndercountPoint], title: &str) -> String {
    let mut chart = Chart::new(title);
    chart.band = Some((
        points.iter().map(|p| p.interval.lower).collect(),
        points.iter().map(|p| p.interval.upper).collect(),
    ));
    chart
        .lines
        .push(("mean".into(), points.iter().map(|p| p.interval.mean).collect()));
    chart.to_svg()
}

/// Known generating parameters written by `simulate`.
pub fn read_truth(path: &Path) -> CliResult<Params> {
    parse_truth(&read_text(path)?)
}

pub fn parse_truth(text: &str) -> CliResult<Params> {
    let mut values = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("truth file: bad line `{line}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("truth file: bad value in `{line}`")))?;
        values.insert(k.trim().to_string(), v);
    }
    let get = |k: &str| {
        values
            .get(k)
            .copied()
            .ok_or_else(|| CliError::Input(format!("truth file: missing `{k}`")))
    };
    Ok(Params {
        beta: get("beta")?,
        gamma: get("gamma")?,
        t0: get("T0")?,
        phi: get("phi")?,
        p: get("p")?,
    })
}

fn truth_text(p: &Params) -> String {
    format!(
        "beta = {}\ngamma = {}\nT0 = {}\nphi = {}\np = {}\n",
        p.beta, p.gamma, p.t0, p.phi, p.p
    )
}

fn append_recovery(out: &mut String, region: &RegionConfig, chain: &Chain, r0_interval: &Interval, truth: &Params) {
    let phis: Vec<f64> = chain.draws.iter().map(|d| d.phi).collect();
    let phi = Interval::from_samples(&phis).expect("non-empty chain");
    for (name, truth_value, i) in [("R0", r0(truth), *r0_interval), ("phi", truth.phi, phi)] {
        let _ = writeln!(
            out,
            "{},{},{name},{truth_value},{},{},{},{}",
            region.region_id,
            region.ifr,
            i.mean,
            i.lower,
            i.upper,
            u8::from(i.contains(truth_value))
        );
    }
}

/// Loads a fit run: its manifest, the invocation and region inputs.
struct FitRun {
    manifest: RunManifest,
    args: FitArgs,
    regions: Vec<RegionInput>,
    theta: DelayDistribution,
}

fn load_fit_run(dir: &Path) -> CliResult<FitRun> {
    let manifest = load_manifest(&dir.join(MANIFEST_FILE))?;
    let Command::Fit(args) = manifest.invocation.clone() else {
        return Err(CliError::Input(format!(
            "{} does not come from `fit`",
            dir.join(MANIFEST_FILE).display()
        )));
    };
    for input in &manifest.inputs {
        input.verify()?;
    }
    let data_text = read_text(&args.data)?;
    let regions = load_regions(&data_text, &args.region_configs)?;
    let (theta, _) = build_theta(&args.delay)?;
    Ok(FitRun {
        manifest,
        args,
        regions,
        theta,
    })
}

impl FitRun {
    /// Pooled post-burn-in chain for one scenario, read from disk.
    fn pooled(&self, dir: &Path, region_id: &str, p: f64) -> CliResult<Chain> {
        let burn_in = self.manifest.sampler.as_ref().map_or(0, |s| s.burn_in);
        let chains = self
            .manifest
            .chains
            .iter()
            .filter(|c| c.region_id == region_id && c.p == p)
            .map(|c| {
                let text = read_text(&dir.join(&c.file))?;
                Ok(read_chain_csv(&text, p)?.discard_before(burn_in))
            })
            .collect::<CliResult<Vec<_>>>()?;
        if chains.is_empty() {
            return Err(CliError::Input(format!(
                "no chains recorded for {region_id} at p = {p}"
            )));
        }
        Ok(Chain::pool(&chains)?)
    }
}

pub fn cmd_forecast(mut args: ForecastArgs) -> CliResult<()> {
    if args.days > epifit_core::posterior::MAX_FORECAST_DAYS {
        return Err(epifit_core::Error::HorizonTooLong(args.days).into());
    }
    if let Some(p) = args.ifr {
        validate_ifr(p)?;
    }
    args.run = absolute(&args.run)?;
    args.out = args.out.as_deref().map(absolute_out).transpose()?;
    let run = load_fit_run(&args.run)?;
    let mut manifest = RunManifest::new(Command::Forecast(args.clone()));
    manifest.inputs = run.manifest.inputs.clone();
    for c in &run.manifest.chains {
        manifest.inputs.push(InputFile::hash(&args.run.join(&c.file))?);
    }
    manifest.delay = run.manifest.delay.clone();
    let mut out = OutputDir::new(args.out.as_deref().unwrap_or(&args.run))?;

    for r in &run.regions {
        let p = args.ifr.unwrap_or(r.config.ifr);
        if !run.args.ifrs.contains(&p) {
            return Err(CliError::Input(format!(
                "p = {p} was not fitted for {} (fitted: {:?})",
                r.config.region_id, run.args.ifrs
            )));
        }
        manifest.ifr_scenarios.push(p);
        let chain = run.pooled(&args.run, &r.config.region_id, p)?;
        let region = r.config.with_ifr(p)?;
        let seed = predictive_seed(args.seed, &region.region_id, p, "forecast");
        manifest
            .derived_seeds
            .push((format!("forecast {} p={p}", region.region_id), seed));
        let band = predictive_band(&chain, &run.theta, &region, r.series.start_date, args.days, seed)?;
        let tag = file_tag(&region.region_id, p);
        out.write(format!("forecast_{tag}.csv"), &band.to_csv(Some(&r.series)))?;
        if args.svg {
            let title = format!(
                "{} deaths with {}-day projection, p = {p}",
                region.region_id, args.days
            );
            out.write(format!("forecast_{tag}.svg"), &band_chart(&band, &r.series, &title))?;
        }
    }
    out.finish(manifest, "forecast_manifest.json")
}

pub fn cmd_summarize(mut args: SummarizeArgs) -> CliResult<()> {
    args.run = absolute(&args.run)?;
    args.out = args.out.as_deref().map(absolute_out).transpose()?;
    let run = load_fit_run(&args.run)?;
    let mut manifest = RunManifest::new(Command::Summarize(args.clone()));
    manifest.inputs = run.manifest.inputs.clone();
    for c in &run.manifest.chains {
        manifest.inputs.push(InputFile::hash(&args.run.join(&c.file))?);
    }
    manifest.ifr_scenarios = run.args.ifrs.clone();
    let mut out = OutputDir::new(args.out.as_deref().unwrap_or(&args.run))?;
    let mut table = SummaryTable::default();
    for r in &run.regions {
        for &p in &run.args.ifrs {
            let chain = run.pooled(&args.run, &r.config.region_id, p)?;
            let region = r.config.with_ifr(p)?;
            table.rows.push(summarize(&chain, &region, &r.series)?);
        }
    }
    out.write("summary.csv", &table.to_csv())?;
    out.write("summary.txt", &table.to_text())?;
    out.finish(manifest, "summarize_manifest.json")
}

pub fn cmd_simulate(mut args: SimulateArgs) -> CliResult<()> {
    args.out = absolute_out(&args.out)?;
    let params = Params {
        beta: args.beta,
        gamma: args.gamma,
        t0: args.t0,
        phi: args.phi,
        p: args.p,
    };
    if !params.in_support() {
        return Err(CliError::Input(format!(
            "parameters outside the prior support: beta={}, gamma={}, T0={}, phi={}",
            args.beta, args.gamma, args.t0, args.phi
        )));
    }
    if !(args.p >= 0.0 && args.p < 1.0) {
        return Err(CliError::Input(format!("p = {} is outside [0, 1)", args.p)));
    }
    if args.population == 0 {
        return Err(CliError::Input("population must be positive".into()));
    }
    let end = args.end_date.unwrap_or(args.t1 + Duration::days(35));
    let region = RegionConfig {
        region_id: args.region_id.clone(),
        population: args.population,
        intervention_date: args.t1,
        ifr: if args.p > 0.0 { args.p } else { epifit_core::data_ingest::DEFAULT_IFR },
        data_end_date: end,
    };
    region.validate()?;
    let (theta, delay_settings) = build_theta(&args.delay)?;
    let deaths = synthesize_data(&params, &region, &theta, args.seed)?;
    let traj = simulate_sir(
        &params,
        args.population as f64,
        region.intervention_day(),
        region.data_end_day(),
    )?;

    let mut manifest = RunManifest::new(Command::Simulate(args.clone()));
    manifest.delay = Some(delay_settings);
    manifest.ifr_scenarios = vec![args.p];
    let mut out = OutputDir::new(&args.out)?;
    out.write("deaths.csv", &deaths.to_nyt_csv())?;
    out.write("trajectory.csv", &traj.to_csv())?;
    out.write("theta.csv", &theta.to_csv())?;
    out.write("region.conf", &region.to_config_string())?;
    out.write("truth.txt", &truth_text(&params))?;
    out.finish(manifest, MANIFEST_FILE)
}

pub fn cmd_rerun(args: RerunArgs) -> CliResult<()> {
    let manifest = load_manifest(&args.manifest)?;
    for input in &manifest.inputs {
        input.verify()?;
    }
    let mut command = manifest.invocation;
    match (&mut command, args.out) {
        (Command::Rerun(_), _) => {
            return Err(CliError::Input("manifest records a rerun".into()));
        }
        (Command::Fit(a), Some(o)) => a.out = o,
        (Command::Simulate(a), Some(o)) => a.out = o,
        (Command::Forecast(a), Some(o)) => a.out = Some(o),
        (Command::Summarize(a), Some(o)) => a.out = Some(o),
        (_, None) => {}
    }
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Rerun(_) => unreachable!(),
    }
}
