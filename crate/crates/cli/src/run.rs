//! `train`, `eval` and `sample` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use otm_core::data::{DatasetKind, Sampler};
use otm_core::metrics::{self, EvalReport};
use otm_core::nets::Mlp;
use otm_core::oracle::{self, AffineMap, Gaussian};
use otm_core::otm::{self, Embedding, IterationRecord, TrainHistory};
use otm_core::PointCloud;

use crate::config::{OracleSpec, RunConfig};
use crate::error::{io_err, CliError};
use crate::{model, svg};

/// Evaluation draws start here, far past anything training consumes.
pub const EVAL_POSITION: u64 = 1 << 62;
/// Stream offset of the points used to estimate `Var(ν)` when it has no closed form.
pub const VARIANCE_POSITION: u64 = 1 << 61;
pub const VARIANCE_SAMPLES: usize = 10_000;

pub const HISTORY_HEADER: &str = "iter,L_psi,L_G,reg_value,wall_ms";

fn gaussian_of(kind: &DatasetKind) -> Option<Gaussian> {
    match kind {
        DatasetKind::Gaussian { mean, covariance } => Gaussian::from_vecs(mean, covariance).ok(),
        _ => None,
    }
}

fn embedding_map(q: &Embedding) -> AffineMap {
    AffineMap { matrix: q.matrix().clone(), offset: DVector::zeros(q.output_dim()) }
}

/// Closed-form reference map `T* ∘ Q`, when one is available.
pub fn reference_map(config: &RunConfig) -> Result<Option<AffineMap>, CliError> {
    match &config.eval.oracle {
        OracleSpec::None => Ok(None),
        OracleSpec::Affine { matrix, offset } => {
            let (d, h) = (config.embedding.output_dim(), config.embedding.input_dim());
            Ok(Some(AffineMap::new(DMatrix::from_row_slice(d, h, matrix), DVector::from_column_slice(offset))?))
        }
        OracleSpec::Auto => {
            let (Some(mu), Some(nu)) = (gaussian_of(&config.mu.kind), gaussian_of(&config.nu.kind)) else {
                return Ok(None);
            };
            let q = embedding_map(&config.embedding);
            let embedded = mu.pushforward(&q)?;
            let t = oracle::gaussian_ot_map_on_support(&embedded, &nu)?;
            Ok(Some(t.compose(&q)?))
        }
    }
}

/// Fixed evaluation samples and references for one configuration.
pub struct Evaluator {
    q: Embedding,
    reference: Option<AffineMap>,
    nu_variance: f64,
    x: PointCloud,
    y: PointCloud,
    x_w2: PointCloud,
    y_w2: PointCloud,
    seed: u64,
}

fn head(cloud: &PointCloud, n: usize) -> PointCloud {
    let n = n.min(cloud.len());
    PointCloud::new(cloud.dim(), cloud.as_tensor().data()[..n * cloud.dim()].to_vec()).expect("prefix of a valid cloud")
}

fn population_variance(cloud: &PointCloud) -> f64 {
    let mean = cloud.mean();
    cloud.iter().map(|p| p.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>()).sum::<f64>()
        / cloud.len() as f64
}

impl Evaluator {
    pub fn new(config: &RunConfig, eval_seed: u64) -> Result<Self, CliError> {
        let mu = Sampler::new(config.mu.clone())?;
        let nu = Sampler::new(config.nu.clone())?;
        let position = EVAL_POSITION + (eval_seed << 32);
        let n = config.eval.samples.max(config.eval.w2_samples);
        let x = mu.sample(n, position);
        let y = nu.sample(n, position);
        let nu_variance = match nu.analytic_total_variance() {
            Some(v) => v,
            None => population_variance(&nu.sample(VARIANCE_SAMPLES, VARIANCE_POSITION)),
        };
        Ok(Self {
            q: config.embedding.clone(),
            reference: reference_map(config)?,
            nu_variance,
            x_w2: head(&x, config.eval.w2_samples),
            y_w2: head(&y, config.eval.w2_samples),
            x: head(&x, config.eval.samples),
            y: head(&y, config.eval.samples),
            seed: eval_seed,
        })
    }

    pub fn nu_variance(&self) -> f64 {
        self.nu_variance
    }

    pub fn report(&self, g: &Mlp, iteration: Option<usize>) -> Result<EvalReport, CliError> {
        let mapped = g.apply(&self.x)?;
        let l2_uvp_percent = match &self.reference {
            Some(t) => Some(metrics::l2_uvp(&mapped, &t.apply(&self.x)?, self.nu_variance)?),
            None => None,
        };
        let mapped_w2 = g.apply(&self.x_w2)?;
        Ok(EvalReport {
            iteration,
            l2_uvp_percent,
            empirical_transport_cost: metrics::empirical_transport_cost(g, &self.q, &self.x)?,
            empirical_w2_pushforward_vs_target: metrics::empirical_w2(&mapped_w2, &self.y_w2)?,
            empirical_w2_input_vs_target: Some(metrics::empirical_w2(&self.q.embed(&self.x_w2)?, &self.y_w2)?),
            frechet_gaussian: metrics::frechet_gaussian(&mapped, &self.y)?,
            sample_count: self.x.len(),
            seed: self.seed,
        })
    }

    /// Input (embedded), pushforward and target samples of the W2 clouds.
    pub fn scatter(&self, g: &Mlp) -> Result<String, CliError> {
        let input = self.q.embed(&self.x_w2)?;
        let pushed = g.apply(&self.x_w2)?;
        Ok(svg::scatter(&[
            ("input", svg::INPUT, &input),
            ("pushforward", svg::PUSHFORWARD, &pushed),
            ("target", svg::TARGET, &self.y_w2),
        ]))
    }
}

pub fn history_csv(history: &TrainHistory, wall_time: bool) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for IterationRecord { iteration, psi_loss, g_loss, regularizer, wall_ms } in &history.records {
        let wall = if wall_time { format!("{wall_ms:.3}") } else { "0".into() };
        let _ = writeln!(out, "{iteration},{psi_loss:?},{g_loss:?},{regularizer:?},{wall}");
    }
    out
}

pub fn eval_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(EvalReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub history: TrainHistory,
    pub reports: Vec<EvalReport>,
    pub g: Mlp,
    pub psi: Mlp,
}

impl TrainOutcome {
    pub fn final_report(&self) -> &EvalReport {
        self.reports.last().expect("a final report is always written")
    }

    /// `W2(pushforward, target) / W2(input, target)` of the final report.
    pub fn w2_ratio(&self) -> Option<f64> {
        let r = self.final_report();
        r.empirical_w2_input_vs_target.map(|base| r.empirical_w2_pushforward_vs_target / base)
    }
}

/// Trains, evaluates and writes all artifacts into the run directory.
pub fn run_train(config: &RunConfig) -> Result<TrainOutcome, CliError> {
    let dir = config.run_dir();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    write(&dir.join("config.resolved"), &config.resolved())?;
    let _ = fs::remove_file(dir.join("FAILED"));

    let mu = Sampler::new(config.mu.clone())?;
    let nu = Sampler::new(config.nu.clone())?;
    let g = Mlp::init(config.g.clone())?;
    let psi = Mlp::init(config.psi.clone())?;
    let evaluator = Evaluator::new(config, config.eval.seed)?;

    let mut reports = Vec::new();
    let mut eval_error = None;
    let period = config.eval.period;
    let mut observer = |iteration: usize, g: &Mlp, _: &Mlp| {
        if period > 0 && (iteration + 1).is_multiple_of(period) && eval_error.is_none() {
            match evaluator.report(g, Some(iteration + 1)) {
                Ok(r) => reports.push(r),
                Err(e) => eval_error = Some(e),
            }
        }
    };
    let result = otm::train_observed(&config.train, &mu, &nu, &config.embedding, g, psi, &mut observer);
    if let Some(e) = eval_error {
        return Err(e);
    }
    let (g, psi, history, failure) = match result {
        Ok(t) => (t.g, t.psi, t.history, None),
        Err(f) => {
            let message = f.to_string();
            (f.g, f.psi, f.history, Some(message))
        }
    };
    let done = history.len();
    if reports.last().and_then(|r| r.iteration) != Some(done) {
        reports.push(evaluator.report(&g, Some(done))?);
    }
    write(&dir.join("history.csv"), &history_csv(&history, config.record_wall_time))?;
    write(&dir.join("eval.csv"), &eval_csv(&reports))?;
    model::save(&g, &dir.join("G.model"))?;
    model::save(&psi, &dir.join("psi.model"))?;
    write(&dir.join("scatter.svg"), &evaluator.scatter(&g)?)?;
    if let Some(message) = failure {
        write(&dir.join("FAILED"), &format!("{message}\nartifacts hold the last finite parameters\n"))?;
        return Err(CliError::Training(message));
    }
    Ok(TrainOutcome { dir, history, reports, g, psi })
}

/// Runs one training per seed (overriding `train.seed`), `jobs` at a time.
/// Each run writes to `<name>-seed<k>`.
pub fn run_sweep(config: &RunConfig, seeds: &[u64], jobs: usize) -> Vec<(u64, Result<TrainOutcome, CliError>)> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, seeds.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                let mut c = config.clone();
                c.train.seed = seed;
                c.name = format!("{}-seed{seed}", config.name);
                let outcome = run_train(&c);
                results.lock().expect("no panics while holding the lock").push((i, seed, outcome));
            });
        }
    });
    let mut results = results.into_inner().expect("threads joined");
    results.sort_by_key(|(i, ..)| *i);
    results.into_iter().map(|(_, s, r)| (s, r)).collect()
}

/// Full report for saved models on fresh evaluation samples.
pub fn run_eval(config: &RunConfig, models: &Path, eval_seed: u64) -> Result<EvalReport, CliError> {
    let g = model::load(&models.join("G.model"))?;
    let psi = model::load(&models.join("psi.model"))?;
    if g.spec().dims() != config.g.dims() {
        return Err(CliError::Model(format!("G has dims {:?}, config expects {:?}", g.spec().dims(), config.g.dims())));
    }
    if psi.spec().dims() != config.psi.dims() {
        return Err(CliError::Model(format!(
            "psi has dims {:?}, config expects {:?}",
            psi.spec().dims(),
            config.psi.dims()
        )));
    }
    Evaluator::new(config, eval_seed)?.report(&g, None)
}

/// `n` points of each distribution from the start of its training stream.
pub fn run_sample(config: &RunConfig, n: usize) -> Result<String, CliError> {
    let mu = Sampler::new(config.mu.clone())?.sample(n, 0);
    let nu = Sampler::new(config.nu.clone())?.sample(n, 0);
    let width = mu.dim().max(nu.dim());
    let mut out = String::from("distribution,index");
    for c in 0..width {
        let _ = write!(out, ",x{c}");
    }
    out.push('\n');
    for (name, cloud) in [("mu", &mu), ("nu", &nu)] {
        for (i, p) in cloud.iter().enumerate() {
            let _ = write!(out, "{name},{i}");
            for c in 0..width {
                match p.get(c) {
                    Some(v) => {
                        let _ = write!(out, ",{v:?}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    Ok(out)
}
