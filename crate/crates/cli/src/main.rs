//! `evtpool`: fit, bootstrap and query pooled extreme-value models of swim
//! times from the command line.

mod log;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use evtpool::analytics::{self, SuitAdjust};
use evtpool::bootstrap::{self, BootstrapConfig, BootstrapEnsemble};
use evtpool::data::{self, EventDataset, Registry, SwimRecord};
use evtpool::model::{self, FitConfig, FittedModel, ModelId};
use evtpool::synth::{self, SynthSpec};
use evtpool::Error;

use log::Log;
use report::{interval, num, opt, secs, Table};

/// How a run failed, which fixes the exit code.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Version(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Input(_) => 2,
            Failure::Version(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Internal(_) => "internal",
            Failure::Input(_) => "input",
            Failure::Version(_) => "version",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Version(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Version { .. } => Failure::Version(m),
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::InsufficientData { .. }
            | Error::DegenerateCovariate(_)
            | Error::UnknownEvent(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => Failure::Input(m),
            _ => Failure::Internal(m),
        }
    }
}

type Res<T> = Result<T, Failure>;

#[derive(Parser, Debug)]
#[command(name = "evtpool", version, about = "Pooled extreme-value models of elite swim times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Suppress progress records on stderr.
    #[arg(long)]
    quiet: bool,
    /// Event registry JSON; the built-in 34 events when absent.
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ModelInput {
    /// Results CSV used for the fit; not needed to adjust a single swim.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Fitted model; defaults to `<out>/model.json`.
    #[arg(long)]
    fitted: Option<PathBuf>,
    /// Bootstrap ensemble; defaults to `<out>/ensemble.jsonl` when present.
    #[arg(long)]
    ensemble: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model and the model ladder; writes model.json, ladder.csv and
    /// diagnostics.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// FitConfig JSON; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "M7b")]
        model: String,
        /// Roughness weight, or `cv` to choose it by cross-validation.
        #[arg(long = "phi-r")]
        phi_r: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Exceedances kept per event.
        #[arg(long, default_value_t = data::DEFAULT_N_EXCEED)]
        n_exceed: usize,
        /// Comma-separated models for the ladder, or `all`.
        #[arg(long, default_value = "all")]
        ladder: String,
        /// Comma-separated event ids to keep.
        #[arg(long)]
        events: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Parametric bootstrap of a fitted model; writes ensemble.jsonl and
    /// parameters.csv.
    Bootstrap {
        #[command(flatten)]
        model: ModelInput,
        #[arg(long = "B", default_value_t = 250)]
        b: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Rank every exceedance by r-value; writes ranks.csv.
    Rank {
        #[command(flatten)]
        model: ModelInput,
        #[arg(long)]
        nation: Option<String>,
        #[arg(long)]
        top: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Record forecasts; writes ultimate.csv, next_record.csv, waiting.csv
    /// and next_event_prob.csv.
    Predict {
        #[command(flatten)]
        model: ModelInput,
        /// Forecast origin as a decimal year; the end of the data window by
        /// default.
        #[arg(long)]
        origin: Option<f64>,
        /// Years ahead for the waiting-time table.
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Suit adjustment. With --event, --time and --date adjusts one swim
    /// (adjusted_swim.csv); otherwise tabulates suit-era records
    /// (adjusted.csv).
    Adjust {
        #[command(flatten)]
        model: ModelInput,
        #[arg(long)]
        event: Option<String>,
        /// Swim time in seconds.
        #[arg(long)]
        time: Option<f64>,
        /// Swim date, YYYY-MM-DD.
        #[arg(long)]
        date: Option<NaiveDate>,
        #[arg(long, value_enum, default_value_t = Direction::Remove)]
        direction: Direction,
        #[command(flatten)]
        common: Common,
    },
    /// Probability plot and yearly rate checks; writes diagnostics/.
    Diagnose {
        #[command(flatten)]
        model: ModelInput,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a results file from the synthetic truth; writes results.csv
    /// and truth.json.
    Simulate {
        #[arg(long, default_value_t = 34)]
        n_events: usize,
        #[arg(long, default_value_t = 200.0)]
        count: f64,
        /// Slower swims added per event below the threshold.
        #[arg(long, default_value_t = 50)]
        filler: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Validate the headers and row widths of every known table in a
    /// directory.
    SchemaCheck {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Remove,
    Add1,
    Add2,
}

impl Direction {
    fn adjust(self) -> SuitAdjust {
        match self {
            Direction::Remove => SuitAdjust::Remove,
            Direction::Add1 => SuitAdjust::Add(1),
            Direction::Add2 => SuitAdjust::Add(2),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Direction::Remove => "remove",
            Direction::Add1 => "add1",
            Direction::Add2 => "add2",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = match &cli.command {
        Command::Fit { common, .. }
        | Command::Bootstrap { common, .. }
        | Command::Rank { common, .. }
        | Command::Predict { common, .. }
        | Command::Adjust { common, .. }
        | Command::Diagnose { common, .. }
        | Command::Simulate { common, .. } => common.quiet,
        Command::SchemaCheck { quiet, .. } => *quiet,
    };
    let log = Log { quiet };
    match run(cli.command, log) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log.error(f.kind(), f.message());
            ExitCode::from(f.code())
        }
    }
}

fn setup(common: &Common) -> Res<Registry> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    fs::create_dir_all(&common.out).map_err(|e| Failure::Input(format!("{}: {e}", common.out.display())))?;
    match &common.registry {
        Some(p) => Ok(Registry::load(p)?),
        None => Ok(Registry::builtin()),
    }
}

fn run(cmd: Command, log: Log) -> Res<()> {
    match cmd {
        Command::Fit {
            input,
            config,
            model,
            phi_r,
            seed,
            n_exceed,
            ladder,
            events,
            common,
        } => {
            let reg = setup(&common)?;
            cmd_fit(&log, &reg, &common.out, FitArgs {
                input,
                config,
                model,
                phi_r,
                seed,
                n_exceed,
                ladder,
                events,
            })
        }
        Command::Bootstrap { model, b, seed, common } => {
            let reg = setup(&common)?;
            cmd_bootstrap(&log, &reg, &common.out, &model, b, seed)
        }
        Command::Rank {
            model,
            nation,
            top,
            common,
        } => {
            let reg = setup(&common)?;
            cmd_rank(&log, &reg, &common.out, &model, nation.as_deref(), top)
        }
        Command::Predict {
            model,
            origin,
            horizon,
            common,
        } => {
            let reg = setup(&common)?;
            cmd_predict(&log, &reg, &common.out, &model, origin, horizon)
        }
        Command::Adjust {
            model,
            event,
            time,
            date,
            direction,
            common,
        } => {
            let reg = setup(&common)?;
            match (event, time, date) {
                (Some(e), Some(t), Some(d)) => cmd_adjust_swim(&log, &common.out, &model, &e, t, d, direction),
                (None, None, None) => cmd_adjust_table(&log, &reg, &common.out, &model),
                _ => Err(Failure::Input("--event, --time and --date go together".into())),
            }
        }
        Command::Diagnose { model, common } => {
            let reg = setup(&common)?;
            let (fitted, datasets) = load_model(&reg, &common.out, &model)?;
            let members = load_members(&log, &common.out, &model, &fitted)?;
            write_diagnostics(&common.out, &fitted, &datasets, members.as_deref())?;
            log.info("diagnostics written", json!({ "dir": common.out.join("diagnostics") }));
            Ok(())
        }
        Command::Simulate {
            n_events,
            count,
            filler,
            seed,
            common,
        } => {
            setup(&common)?;
            cmd_simulate(&log, &common.out, n_events, count, filler, seed)
        }
        Command::SchemaCheck { out, .. } => {
            let files = report::check_dir(&out)?;
            log.info("schemas valid", json!({ "files": files.len() }));
            Ok(())
        }
    }
}

fn read_records(path: &Path, reg: &Registry) -> Res<Vec<SwimRecord>> {
    if !path.is_file() {
        return Err(Failure::Input(format!("input file {} not found", path.display())));
    }
    Ok(data::ingest_csv(path, reg)?)
}

struct FitArgs {
    input: PathBuf,
    config: Option<PathBuf>,
    model: String,
    phi_r: Option<String>,
    seed: Option<u64>,
    n_exceed: usize,
    ladder: String,
    events: Option<String>,
}

fn parse_models(list: &str) -> Res<Vec<ModelId>> {
    if list.trim() == "all" {
        return Ok(ModelId::ALL.to_vec());
    }
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| Ok(ModelId::parse(s.trim())?))
        .collect()
}

fn cmd_fit(log: &Log, reg: &Registry, out: &Path, a: FitArgs) -> Res<()> {
    let records = read_records(&a.input, reg)?;
    let mut datasets = data::build_all(&records, reg, a.n_exceed, data::DEFAULT_CENSOR_S)?;
    if let Some(list) = &a.events {
        let keep: Vec<&str> = list.split(',').map(str::trim).collect();
        if let Some(missing) = keep.iter().find(|k| !datasets.iter().any(|d| d.event_id == **k)) {
            return Err(Failure::Input(format!("event {missing} has no data")));
        }
        datasets.retain(|d| keep.contains(&d.event_id.as_str()));
    }
    if datasets.is_empty() {
        return Err(Failure::Input("no registry events in the input".into()));
    }
    let scaler = data::fit_time_scaler(&datasets)?;
    scaler.apply(&mut datasets);
    let mut config = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<FitConfig>(&text).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?
        }
        None => FitConfig::default(),
    };
    config.model = ModelId::parse(&a.model)?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    log.info(
        "data",
        json!({ "events": datasets.len(), "points": datasets.iter().map(|d| d.points.len()).sum::<usize>() }),
    );
    match a.phi_r.as_deref() {
        Some("cv") => {
            let cv = model::cross_validate_phi_r(&datasets, &scaler, &reg.suit_epochs, &config)?;
            let mut t = Table::create(&out.join("cv.csv"), report::CV)?;
            for (phi, score) in &cv.scores {
                t.row([num(*phi), num(*score), (*phi == cv.chosen).to_string()])?;
            }
            t.finish()?;
            log.info("roughness weight chosen", json!({ "phi_r": cv.chosen }));
            config.phi_r = cv.chosen;
        }
        Some(v) => {
            config.phi_r = v
                .parse::<f64>()
                .ok()
                .filter(|p| *p >= 0.0)
                .ok_or_else(|| Failure::Input(format!("--phi-r {v}: expected a non-negative number or cv")))?;
        }
        None => {}
    }
    let mut models = parse_models(&a.ladder)?;
    if !models.contains(&config.model) {
        models.push(config.model);
    }
    let (rows, fits) = model::ladder(&datasets, &scaler, &reg.suit_epochs, &config, &models)?;
    let mut t = Table::create(&out.join("ladder.csv"), report::LADDER)?;
    for r in &rows {
        t.row([
            r.model.name().to_string(),
            r.constraints.clone(),
            num(r.loglik),
            r.n_params.to_string(),
            opt(r.effective_dof),
            opt(r.criterion),
            opt(r.relative),
        ])?;
    }
    t.finish()?;
    let fitted = fits
        .into_iter()
        .find(|f| f.layout.model == config.model)
        .ok_or_else(|| Failure::Internal("selected model missing from the ladder".into()))?;
    if !fitted.converged {
        log.warn("fit did not converge", json!({ "model": config.model.name() }));
    }
    if fitted.criterion.is_none() {
        log.warn(
            "information criterion unavailable; the spline may be unidentified at this roughness weight",
            json!({ "phi_r": config.phi_r }),
        );
    }
    fitted.save(&out.join("model.json"))?;
    write_diagnostics(out, &fitted, &datasets, None)?;
    log.info(
        "fitted",
        json!({
            "model": config.model.name(),
            "loglik": fitted.loglik,
            "criterion": fitted.criterion,
            "xi": fitted.values[0],
            "out": out,
        }),
    );
    Ok(())
}

/// The fitted model and its datasets rebuilt from the results file with
/// the fit's own exceedance counts.
fn load_model(reg: &Registry, out: &Path, m: &ModelInput) -> Res<(FittedModel, Vec<EventDataset>)> {
    let path = m.fitted.clone().unwrap_or_else(|| out.join("model.json"));
    if !path.is_file() {
        return Err(Failure::Input(format!("model file {} not found", path.display())));
    }
    let fitted = FittedModel::load(&path)?;
    let input = m.input.as_ref().ok_or_else(|| Failure::Input("--input is required".into()))?;
    let records = read_records(input, reg)?;
    let mut datasets = fitted
        .events
        .iter()
        .map(|ev| data::build_event_dataset(&records, &ev.event_id, ev.n_points, ev.censor_s, &fitted.suit_epochs))
        .collect::<evtpool::Result<Vec<_>>>()?;
    for (d, ev) in datasets.iter().zip(&fitted.events) {
        if (d.threshold_u - ev.threshold_u).abs() > 1e-9 {
            return Err(Failure::Input(format!(
                "{}: threshold of the input differs from the fitted model",
                ev.event_id
            )));
        }
    }
    fitted.scaler.apply(&mut datasets);
    Ok((fitted, datasets))
}

fn load_members(log: &Log, out: &Path, m: &ModelInput, fitted: &FittedModel) -> Res<Option<Vec<FittedModel>>> {
    let path = match &m.ensemble {
        Some(p) => p.clone(),
        None => {
            let p = out.join("ensemble.jsonl");
            if !p.is_file() {
                return Ok(None);
            }
            p
        }
    };
    let file = fs::File::open(&path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let ens = BootstrapEnsemble::read_jsonl(std::io::BufReader::new(file))?;
    if ens.replicates.iter().any(|r| r.values.len() != fitted.values.len()) {
        return Err(Failure::Version(format!(
            "{} does not match the fitted model's parameter layout",
            path.display()
        )));
    }
    let members = ens.models(fitted)?;
    log.info("ensemble loaded", json!({ "retained": members.len() }));
    Ok(Some(members))
}

fn cmd_bootstrap(log: &Log, reg: &Registry, out: &Path, m: &ModelInput, b: usize, seed: u64) -> Res<()> {
    if b == 0 {
        return Err(Failure::Input("--B must be at least 1".into()));
    }
    let (fitted, datasets) = load_model(reg, out, m)?;
    let config = BootstrapConfig {
        replicates: b,
        seed,
        ..BootstrapConfig::default()
    };
    let ens = bootstrap::bootstrap_ensemble(&fitted, &datasets, &config)?;
    let path = out.join("ensemble.jsonl");
    let file = fs::File::create(&path).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    ens.write_jsonl(&mut w)?;
    std::io::Write::flush(&mut w).map_err(|e| Failure::Internal(e.to_string()))?;
    let kept: Vec<&Vec<f64>> = ens.retained().map(|r| &r.values).collect();
    let names = fitted.layout.names(&fitted.event_ids());
    let mut t = Table::create(&out.join("parameters.csv"), report::PARAMETERS)?;
    for (i, name) in names.iter().enumerate() {
        let v: Vec<f64> = kept.iter().map(|x| x[i]).collect();
        let ci = bootstrap::percentile_ci(&v, 0.95).ok();
        let [lo, hi] = interval(ci);
        t.row([name.clone(), num(fitted.values[i]), lo, hi])?;
    }
    t.finish()?;
    log.info(
        "bootstrap",
        json!({
            "requested": b,
            "retained": ens.retained_count(),
            "nonconverged": ens.nonconverged_count(),
            "infeasible": ens.infeasible_count(),
        }),
    );
    Ok(())
}

/// Percentile interval of a statistic over the members where it exists.
fn member_ci<F: Fn(&FittedModel) -> evtpool::Result<f64>>(members: Option<&[FittedModel]>, f: F) -> Option<(f64, f64)> {
    let v: Vec<f64> = members?.iter().filter_map(|m| f(m).ok()).filter(|x| x.is_finite()).collect();
    bootstrap::percentile_ci(&v, 0.95).ok()
}

fn cmd_rank(log: &Log, reg: &Registry, out: &Path, m: &ModelInput, nation: Option<&str>, top: Option<usize>) -> Res<()> {
    let (fitted, datasets) = load_model(reg, out, m)?;
    let members = load_members(log, out, m, &fitted)?;
    let rows = analytics::rank_table(&fitted, &datasets, nation, top)?;
    let rank_ci = match &members {
        Some(ms) if !rows.is_empty() => match bootstrap::rank_intervals(ms, &rows, 0.95) {
            Ok(ci) => Some(ci),
            Err(Error::InsufficientData { have, .. }) => {
                log.warn("ensemble too small for rank intervals", json!({ "retained": have }));
                None
            }
            Err(e) => return Err(e.into()),
        },
        _ => None,
    };
    let mut t = Table::create(&out.join("ranks.csv"), report::RANKS)?;
    for (i, r) in rows.iter().enumerate() {
        let e = fitted.event_index(&r.event_id)?;
        let x = -r.time_s;
        let [lo, hi] = interval(member_ci(members.as_deref(), |mm| analytics::r_value(mm, e, x, r.date)));
        let [rlo, rhi] = interval(rank_ci.as_ref().map(|c| c[i]));
        t.row([
            r.rank.to_string(),
            r.swimmer_id.clone(),
            r.event_id.clone(),
            secs(r.time_s),
            r.date.to_string(),
            r.nation.clone().unwrap_or_default(),
            num(r.r_value),
            lo,
            hi,
            rlo,
            rhi,
        ])?;
    }
    t.finish()?;
    log.info("ranked", json!({ "rows": rows.len() }));
    Ok(())
}

fn cmd_predict(log: &Log, reg: &Registry, out: &Path, m: &ModelInput, origin: Option<f64>, horizon: usize) -> Res<()> {
    let (fitted, datasets) = load_model(reg, out, m)?;
    let members = load_members(log, out, m, &fitted)?;
    let ms = members.as_deref();
    let origin = origin.unwrap_or_else(|| analytics::default_origin(&fitted));
    let records = bootstrap::original_records(&fitted, &datasets)?;
    let ids = fitted.event_ids();

    let mut ult = Table::create(&out.join("ultimate.csv"), report::ULTIMATE)?;
    let mut next = Table::create(&out.join("next_record.csv"), report::NEXT_RECORD)?;
    let mut wait = Table::create(&out.join("waiting.csv"), report::WAITING)?;
    for (e, id) in ids.iter().enumerate() {
        let rec = records[e];
        let u = analytics::ultimate_time(&fitted, e).unwrap_or(f64::NAN);
        let [lo, hi] = interval(member_ci(ms, |mm| analytics::ultimate_time(mm, e)));
        ult.row([id.clone(), secs(u), lo, hi, secs(-rec)])?;

        let en = analytics::expected_next_record(&fitted, e, rec).unwrap_or(f64::NAN);
        let [lo, hi] = interval(member_ci(ms, |mm| analytics::expected_next_record(mm, e, rec)));
        let ew = analytics::expected_waiting_time(&fitted, e, rec, origin).unwrap_or(f64::NAN);
        next.row([id.clone(), secs(-rec), secs(en), lo, hi, num(ew)])?;

        for k in 1..=horizon {
            let t = k as f64;
            let c = analytics::record_waiting_cdf(&fitted, e, rec, origin, t)?;
            let [lo, hi] = interval(member_ci(ms, |mm| analytics::record_waiting_cdf(mm, e, rec, origin, t)));
            wait.row([id.clone(), k.to_string(), num(c), lo, hi])?;
        }
    }
    ult.finish()?;
    next.finish()?;
    wait.finish()?;

    let probs = analytics::prob_next_record_in_event(&fitted, &records, origin)?;
    let member_probs: Option<Vec<Vec<f64>>> = ms.map(|list| {
        list.iter()
            .filter_map(|mm| analytics::prob_next_record_in_event(mm, &records, origin).ok())
            .map(|p| p.normalized)
            .collect()
    });
    let mut t = Table::create(&out.join("next_event_prob.csv"), report::NEXT_EVENT)?;
    for (e, id) in ids.iter().enumerate() {
        let ci = member_probs.as_ref().and_then(|mp| {
            let v: Vec<f64> = mp.iter().map(|p| p[e]).collect();
            bootstrap::percentile_ci(&v, 0.95).ok()
        });
        let [lo, hi] = interval(ci);
        t.row([id.clone(), num(probs.raw[e]), num(probs.normalized[e]), lo, hi])?;
    }
    t.finish()?;
    log.info("forecasts written", json!({ "origin": origin, "events": ids.len() }));
    Ok(())
}

fn cmd_adjust_swim(
    log: &Log,
    out: &Path,
    m: &ModelInput,
    event: &str,
    time: f64,
    date: NaiveDate,
    dir: Direction,
) -> Res<()> {
    let path = m.fitted.clone().unwrap_or_else(|| out.join("model.json"));
    if !path.is_file() {
        return Err(Failure::Input(format!("model file {} not found", path.display())));
    }
    let fitted = FittedModel::load(&path)?;
    let e = fitted.event_index(event)?;
    let adjusted = analytics::adjust_suit_time(&fitted, e, time, date, dir.adjust())?;
    let mut t = Table::create(&out.join("adjusted_swim.csv"), report::ADJUSTED_SWIM)?;
    t.row([event.to_string(), date.to_string(), secs(time), dir.name().to_string(), secs(adjusted)])?;
    t.finish()?;
    println!("{adjusted:.2}");
    log.info("adjusted", json!({ "event": event, "time_s": time, "adjusted_s": adjusted }));
    Ok(())
}

fn cmd_adjust_table(log: &Log, reg: &Registry, out: &Path, m: &ModelInput) -> Res<()> {
    let (fitted, datasets) = load_model(reg, out, m)?;
    let rows = analytics::would_be_records(&fitted, &datasets)?;
    let mut t = Table::create(&out.join("adjusted.csv"), report::ADJUSTED)?;
    for r in &rows {
        t.row([
            r.event_id.clone(),
            r.holder.clone(),
            r.date.to_string(),
            secs(r.record_s),
            secs(r.adjusted_s),
            r.best_nonsuit_holder.clone().unwrap_or_default(),
            r.best_nonsuit_s.map(secs).unwrap_or_default(),
            r.winner.clone(),
            r.survives.to_string(),
        ])?;
    }
    t.finish()?;
    log.info("suit-era records", json!({ "rows": rows.len(), "survivors": rows.iter().filter(|r| r.survives).count() }));
    Ok(())
}

fn write_diagnostics(out: &Path, fitted: &FittedModel, datasets: &[EventDataset], members: Option<&[FittedModel]>) -> Res<()> {
    let dir = out.join("diagnostics");
    let pp = model::pooled_pp(fitted, datasets, None)?;
    let mut t = Table::create(&dir.join("pp.csv"), report::PP)?;
    for p in &pp {
        t.row([num(p.expected), num(p.observed), num(p.lo), num(p.hi)])?;
    }
    t.finish()?;
    for d in datasets {
        let rows = model::rate_check(fitted, d, members)?;
        let mut t = Table::create(&dir.join(format!("rate_{}.csv", d.event_id)), report::RATE)?;
        for r in &rows {
            t.row([r.year.to_string(), num(r.expected), r.observed.to_string(), num(r.lo), num(r.hi)])?;
        }
        t.finish()?;
    }
    Ok(())
}

fn cmd_simulate(log: &Log, out: &Path, n_events: usize, count: f64, filler: usize, seed: u64) -> Res<()> {
    if n_events == 0 || n_events > synth::THRESHOLD_TIMES.len() {
        return Err(Failure::Input(format!(
            "--n-events must be between 1 and {}",
            synth::THRESHOLD_TIMES.len()
        )));
    }
    let spec = if n_events == synth::THRESHOLD_TIMES.len() {
        SynthSpec {
            expected_count: count,
            ..SynthSpec::default()
        }
    } else {
        SynthSpec::reduced(n_events, count)
    };
    let truth = synth::truth_model(&spec)?;
    let datasets = synth::simulate(&truth, seed)?;
    let records = synth::to_records(&datasets, filler, seed);
    let path = out.join("results.csv");
    let file = fs::File::create(&path).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))?;
    data::write_csv(std::io::BufWriter::new(file), &records)?;
    truth.save(&out.join("truth.json"))?;
    log.info("simulated", json!({ "events": truth.events.len(), "records": records.len(), "seed": seed }));
    Ok(())
}
