use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use circumnav::evaluation::{
    self, constant_velocity_plans, circle_plans, fast_target_plans, nonholonomic_plans, run_sweep, run_trial, Estimator,
    Scenario, SweepKind, SweepResult, TrialLog, TrialPlan,
};
use circumnav::neural::{inspect_weights as read_header, load_weights, save_weights};
use circumnav::profiles;
use circumnav::training::{run_training, thread_pool};
use circumnav::{Error, LstmModel, Result, RunConfig};

use crate::{Common, EstimatorArgs, Outcome, SimulateArgs, SweepArgs, TrainArgs, OUT_ENV};

fn resolve_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            RunConfig::from_toml_str_with_base(&text, c.preset.as_deref()).map_err(|e| match e {
                Error::ConfigParse(p) => Error::InvalidConfig(format!("{}: {p}", path.display())),
                other => other,
            })?
        }
        None => RunConfig::preset(c.preset.as_deref().unwrap_or("paper"))?,
    };
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(s) = c.noise_sigma {
        cfg.noise.sigma = s;
    }
    if c.raw_noisy_bearing {
        cfg.noise.raw_noisy_bearing = true;
    }
    Ok(cfg)
}

fn output_dir(command: &str, explicit: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = match explicit {
        Some(d) => d.clone(),
        None => {
            let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
            let mut d = root.join(format!("{command}-{stamp}"));
            let mut n = 1;
            while d.exists() {
                d = root.join(format!("{command}-{stamp}-{n}"));
                n += 1;
            }
            d
        }
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml_string()).map_err(|e| Error::io(&path, e))
}

fn workers(c: &Common, cfg: &RunConfig) -> usize {
    c.workers.unwrap_or(cfg.run.workers)
}

pub fn train(a: TrainArgs) -> Result<Outcome> {
    let mut cfg = resolve_config(&a.common)?;
    if let Some(i) = a.iterations {
        cfg.training.iterations = i;
    }
    cfg.validate()?;
    let dir = output_dir("train", &a.common.out)?;
    write_config(&dir, &cfg)?;
    let ckpt = dir.join("checkpoints");
    fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;

    let log_path = dir.join("training.csv");
    let mut log = csv::Writer::from_writer(create(&log_path)?);
    log.write_record([
        "iteration",
        "threshold",
        "epoch",
        "loss",
        "samples",
        "episodes",
        "diverged_episodes",
        "gt_fraction",
        "mean_control_error",
    ])?;
    // Wall-clock time is kept apart so training.csv stays reproducible.
    let timing_path = dir.join("timing.csv");
    let mut timing = csv::Writer::from_writer(create(&timing_path)?);
    timing.write_record(["iteration", "wallclock_seconds"])?;

    let total = cfg.training.iterations;
    let pool = thread_pool(workers(&a.common, &cfg))?;
    let outcome = pool.install(|| {
        run_training(&cfg, |rep, model| {
            let c = &rep.collection;
            for e in &rep.epochs {
                log.write_record([
                    rep.iteration.to_string(),
                    rep.threshold.to_string(),
                    e.epoch.to_string(),
                    e.mean_loss.to_string(),
                    rep.samples.to_string(),
                    c.episodes.to_string(),
                    c.diverged_episodes.to_string(),
                    c.ground_truth_fraction().to_string(),
                    c.mean_control_error.to_string(),
                ])?;
            }
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            timing.write_record([rep.iteration.to_string(), format!("{:.3}", rep.wallclock_seconds)])?;
            timing.flush().map_err(|e| Error::io(&timing_path, e))?;
            save_weights(model, ckpt.join(format!("iteration-{:03}.bin", rep.iteration)))?;
            let loss = rep.epochs.last().map_or(f64::NAN, |e| e.mean_loss);
            eprintln!(
                "iteration {}/{total}  s={:+.2}  samples={}  loss={loss:.5}  truth={:.2}  control_error={:.3} m  ({:.1} s)",
                rep.iteration + 1,
                rep.threshold,
                rep.samples,
                c.ground_truth_fraction(),
                c.mean_control_error,
                rep.wallclock_seconds
            );
            Ok(())
        })
    })?;
    let weights = dir.join("weights.bin");
    save_weights(&outcome.model, &weights)?;
    say!("{}", weights.display());
    Ok(Outcome::Success)
}

enum Choice {
    Model(LstmModel),
    Oracle,
    Ablation,
}

impl Choice {
    fn load(a: &EstimatorArgs) -> Result<Option<Choice>> {
        Ok(if let Some(p) = &a.weights {
            Some(Choice::Model(load_weights(p)?))
        } else if a.oracle {
            Some(Choice::Oracle)
        } else if a.ablation {
            Some(Choice::Ablation)
        } else {
            None
        })
    }

    fn estimator(&self) -> Estimator<'_> {
        match self {
            Choice::Model(m) => Estimator::Lstm(m),
            Choice::Oracle => Estimator::Oracle,
            Choice::Ablation => Estimator::HeldInitialGuess,
        }
    }

    /// `cfg` adjusted to the model's window and input conventions.
    fn config_for(&self, cfg: &RunConfig) -> Result<RunConfig> {
        match self {
            Choice::Model(m) => cfg.adopt_model(m),
            _ => Ok(cfg.clone()),
        }
    }
}

fn use_fast_gains(cfg: &mut RunConfig) {
    cfg.controller.k_t = profiles::FAST.k_t;
    cfg.controller.k_r = profiles::FAST.k_r;
}

const NO_ESTIMATOR: &str = "choose an estimator: --weights PATH, --oracle or --ablation";

pub fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let mut cfg = resolve_config(&a.common)?;
    let spec = match a.scenario.strip_prefix("fast:") {
        Some(rest) => {
            use_fast_gains(&mut cfg);
            rest
        }
        None => a.scenario.as_str(),
    };
    let scenario = Scenario::parse(spec)?;
    let choice = Choice::load(&a.estimator)?.ok_or_else(|| Error::InvalidConfig(NO_ESTIMATOR.into()))?;
    let cfg = choice.config_for(&cfg)?;
    let dir = output_dir("simulate", &a.common.out)?;
    write_config(&dir, &cfg)?;

    let pool = thread_pool(workers(&a.common, &cfg))?;
    let log = pool.install(|| run_trial(&cfg, scenario, choice.estimator(), a.steps, a.trial))?;
    let path = dir.join("trial.csv");
    log.write_csv(create(&path)?)?;

    if let Some(last) = log.rows.last() {
        say!(
            "{} rows; final control error {:.4} m, estimation error {:.4} m",
            log.rows.len(),
            last.control_error,
            last.estimation_error
        );
    }
    say!("{}", path.display());
    if let Some(step) = log.diverged_at {
        eprintln!("trial diverged at step {step}");
        return Ok(Outcome::Diverged);
    }
    Ok(Outcome::Success)
}

/// Writes one CSV per trial under `dir/trials` when enabled.
struct TrialWriter {
    dir: Option<PathBuf>,
}

impl TrialWriter {
    fn new(dir: &Path, enabled: bool) -> Result<Self> {
        if !enabled {
            return Ok(Self { dir: None });
        }
        let d = dir.join("trials");
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(Self { dir: Some(d) })
    }

    fn write(&self, index: usize, log: &TrialLog) -> Result<()> {
        match &self.dir {
            Some(d) => log.write_csv(create(&d.join(format!("trial-{index:04}.csv")))?),
            None => Ok(()),
        }
    }
}

fn run_one(
    cfg: &RunConfig,
    name: &str,
    plans: &[TrialPlan],
    est: Estimator<'_>,
    out: &Path,
    per_trial: bool,
) -> Result<SweepResult> {
    let dir = out.join(name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let writer = TrialWriter::new(&dir, per_trial)?;
    let result = run_sweep(cfg, name, plans, est, |i, _, log| writer.write(i, log))?;
    result.write_summary_csv(create(&dir.join("summary.csv"))?)?;
    Ok(result)
}

fn parse_noise_weights(items: &[String]) -> Result<Vec<(f64, PathBuf)>> {
    items
        .iter()
        .map(|s| {
            let (sigma, path) = s
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("--noise-weights expects SIGMA=PATH, got `{s}`")))?;
            let sigma: f64 = sigma
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad noise level `{sigma}`")))?;
            Ok((sigma, PathBuf::from(path)))
        })
        .collect()
}

pub fn sweep(a: SweepArgs) -> Result<Outcome> {
    let kind = SweepKind::parse(&a.name).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "unknown sweep `{}` (expected constant-velocity, circle, nonholonomic, noise or fast-target)",
            a.name
        ))
    })?;
    let mut cfg = resolve_config(&a.common)?;
    let per_trial = !a.summary_only;
    let choice = Choice::load(&a.estimator)?;

    let (dir, results) = match kind {
        SweepKind::Noise => {
            if let Some(s) = &a.sigmas {
                cfg.evaluation.noise_sigmas = s.clone();
            }
            if let Some(n) = a.trials {
                cfg.evaluation.noise_trials = n;
            }
            cfg.validate()?;
            let sigmas = cfg.evaluation.noise_sigmas.clone();
            let models: Vec<(f64, Choice)> = match choice {
                Some(Choice::Model(_)) => {
                    return Err(Error::InvalidConfig(
                        "the noise sweep needs one model per level: use --noise-weights SIGMA=PATH".into(),
                    ))
                }
                Some(Choice::Oracle) => sigmas.iter().map(|&s| (s, Choice::Oracle)).collect(),
                Some(Choice::Ablation) => sigmas.iter().map(|&s| (s, Choice::Ablation)).collect(),
                None => {
                    let given = parse_noise_weights(&a.noise_weights)?;
                    let missing: Vec<String> = sigmas
                        .iter()
                        .filter(|s| !given.iter().any(|(g, _)| g == *s))
                        .map(|s| s.to_string())
                        .collect();
                    if !missing.is_empty() {
                        return Err(Error::MissingModel(missing));
                    }
                    sigmas
                        .iter()
                        .map(|&s| {
                            let (_, p) = given.iter().find(|(g, _)| *g == s).expect("checked above");
                            Ok((s, Choice::Model(load_weights(p)?)))
                        })
                        .collect::<Result<_>>()?
                }
            };
            let dir = output_dir("sweep", &a.common.out)?;
            write_config(&dir, &cfg)?;
            let plans = nonholonomic_plans(cfg.evaluation.noise_trials, cfg.evaluation.noise_steps, None);
            let pool = thread_pool(workers(&a.common, &cfg))?;
            let results = pool.install(|| {
                models
                    .iter()
                    .map(|(sigma, m)| {
                        let mut c = m.config_for(&cfg)?;
                        c.noise.sigma = *sigma;
                        run_one(&c, &format!("noise-{sigma}"), &plans, m.estimator(), &dir, per_trial)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            (dir, results)
        }
        _ => {
            let choice = choice.ok_or_else(|| Error::InvalidConfig(NO_ESTIMATOR.into()))?;
            match kind {
                SweepKind::Nonholonomic => {
                    if let Some(n) = a.trials {
                        cfg.evaluation.nonholonomic_trials = n;
                    }
                }
                SweepKind::FastTarget => {
                    use_fast_gains(&mut cfg);
                    if let Some(n) = a.trials {
                        cfg.evaluation.fast_trials = n;
                    }
                }
                _ => {}
            }
            let cfg = choice.config_for(&cfg)?;
            let e = &cfg.evaluation;
            let groups: Vec<(String, Vec<TrialPlan>)> = match kind {
                SweepKind::ConstantVelocity => vec![("constant-velocity".into(), constant_velocity_plans())],
                SweepKind::Circle => vec![("circle".into(), circle_plans())],
                SweepKind::Nonholonomic => vec![(
                    "nonholonomic".into(),
                    nonholonomic_plans(e.nonholonomic_trials, e.nonholonomic_steps, e.nonholonomic_average_seconds),
                )],
                SweepKind::FastTarget => fast_target_plans(e.fast_trials, e.fast_steps)
                    .into_iter()
                    .map(|(n, p)| (n.to_string(), p))
                    .collect(),
                SweepKind::Noise => unreachable!(),
            };
            let dir = output_dir("sweep", &a.common.out)?;
            write_config(&dir, &cfg)?;
            let pool = thread_pool(workers(&a.common, &cfg))?;
            let results = pool.install(|| {
                groups
                    .iter()
                    .map(|(name, plans)| run_one(&cfg, name, plans, choice.estimator(), &dir, per_trial))
                    .collect::<Result<Vec<_>>>()
            })?;
            (dir, results)
        }
    };
    evaluation::write_long_csv(&results, create(&dir.join("long.csv"))?)?;
    let mut diverged = 0;
    for r in &results {
        let (ctrl, est) = r.stats(true);
        diverged += r.diverged_count();
        say!(
            "{:<24} trials={:<5} control_error={:.4} ± {:.4} m  estimation_error={:.4} ± {:.4} m  diverged={}",
            r.name,
            r.trials.len(),
            ctrl.mean,
            ctrl.std,
            est.mean,
            est.std,
            r.diverged_count()
        );
    }
    say!("{}", dir.display());
    Ok(if diverged > 0 { Outcome::Diverged } else { Outcome::Success })
}

pub fn inspect_weights(path: &Path) -> Result<Outcome> {
    let h = read_header(path)?;
    let n = h.normalization;
    say!("format version         {}", h.version);
    say!("input size             {}", h.input_size);
    say!("hidden size            {}", h.hidden_size);
    say!("output size            {}", h.output_size);
    say!("window                 {}", h.window);
    say!("raw noisy bearing      {}", h.raw_bearing);
    say!("velocity scale         {}", n.velocity_scale);
    say!("position scale         {}", n.position_scale);
    say!("target velocity scale  {}", n.target_velocity_scale);
    say!("parameters             {}", h.param_count);
    load_weights(path)?;
    say!("checksum               ok");
    Ok(Outcome::Success)
}
