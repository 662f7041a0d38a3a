use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use striplearn::evaluation::{
    error_rate, grid_rows_tsv, grid_summary_tsv, kernel_comparison, prediction_fscore, summarize, GridConfig,
    RulePredictor,
};
use striplearn::learner::{learn, LearnConfig, LearnOutput};
use striplearn::pddl::{emit_domain, parse_domain, parse_problem, Domain, Problem};
use striplearn::perceptron::TrainConfig;
use striplearn::rng::substream;
use striplearn::simulator::{
    generate_trace, read_success_sidecar, read_trace, write_success_sidecar, write_trace, ObservationModel, Trace,
    TraceConfig,
};

use crate::config::Settings;
use crate::error::CliError;

pub const TRACE: &str = "trace.jsonl";
pub const TEST_TRACE: &str = "test-trace.jsonl";
pub const LEARNED: &str = "learned.pddl";

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn load_domain(path: &Path) -> Result<Domain, CliError> {
    parse_domain(&read(path)?).map_err(|e| CliError::pddl(path, e))
}

fn load_problems(paths: &[PathBuf], domain: &Domain) -> Result<Vec<Problem>, CliError> {
    paths
        .iter()
        .map(|p| parse_problem(&read(p)?, domain).map_err(|e| CliError::pddl(p, e)))
        .collect()
}

/// `<name>.jsonl` plus its `<name>.success.jsonl` sidecar.
fn sidecar_path(trace: &Path) -> PathBuf {
    let stem = trace.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    trace.with_file_name(format!("{stem}.success.jsonl"))
}

fn save_trace(trace: &Trace, path: &Path) -> Result<(), CliError> {
    let mut main = Vec::new();
    write_trace(trace, &mut main).map_err(|e| CliError::sim(Some(path), e))?;
    write(path, main)?;
    let side = sidecar_path(path);
    let mut buf = Vec::new();
    write_success_sidecar(trace, &mut buf).map_err(|e| CliError::sim(Some(&side), e))?;
    write(&side, buf)
}

pub fn load_trace(path: &Path) -> Result<Trace, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut trace = read_trace(BufReader::new(f)).map_err(|e| CliError::sim(Some(path), e))?;
    let side = sidecar_path(path);
    if side.exists() {
        let f = fs::File::open(&side).map_err(|e| CliError::io(&side, e))?;
        read_success_sidecar(BufReader::new(f), &mut trace).map_err(|e| CliError::sim(Some(&side), e))?;
    }
    Ok(trace)
}

/// Records the resolved settings of a run next to its outputs.
pub fn snapshot(s: &Settings, command: &str) -> Result<(), CliError> {
    write(&s.out_dir().join(format!("{command}.config.toml")), s.to_toml())
}

fn trace_config(s: &Settings, steps: usize, observation: ObservationModel, seed: u64) -> TraceConfig {
    TraceConfig {
        n_steps: steps,
        success_ratio: s.success_ratio.unwrap(),
        episode_len: s.episode_len.unwrap(),
        observation,
        seed,
    }
}

/// Writes the training trace and its sidecar.
pub fn generate(s: &Settings) -> Result<Trace, CliError> {
    let domain = load_domain(s.require_domain()?)?;
    let problems = load_problems(s.require_problems()?, &domain)?;
    let seed = s.seed.unwrap();
    let observation = ObservationModel {
        observability: s.observability.unwrap(),
        noise_prob: s.noise.unwrap(),
        rng_seed: substream(seed, "observe"),
    };
    let cfg = trace_config(s, s.steps.unwrap(), observation, substream(seed, "trace"));
    let trace = generate_trace(&domain, &problems, &cfg).map_err(|e| CliError::sim(None, e))?;
    save_trace(&trace, &s.out_dir().join(TRACE))?;
    info!("wrote {} steps to {}", trace.steps.len(), s.out_dir().join(TRACE).display());
    Ok(trace)
}

/// Writes a noiseless, fully observed test trace over the test problems.
pub fn generate_test(s: &Settings) -> Result<Trace, CliError> {
    let domain = load_domain(s.require_domain()?)?;
    let problems = load_problems(s.test_problem_paths()?, &domain)?;
    let cfg = trace_config(
        s,
        s.test_steps.unwrap(),
        ObservationModel::perfect(),
        substream(s.seed.unwrap(), "test-trace"),
    );
    let trace = generate_trace(&domain, &problems, &cfg).map_err(|e| CliError::sim(None, e))?;
    save_trace(&trace, &s.out_dir().join(TEST_TRACE))?;
    Ok(trace)
}

fn check_trace_matches(domain: &Domain, trace: &Trace, path: &Path) -> Result<(), CliError> {
    let mismatch = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    if trace.domain != domain.name {
        return Err(mismatch(format!(
            "trace is for domain `{}`, not `{}`",
            trace.domain, domain.name
        )));
    }
    for st in &trace.steps {
        match domain.action(&st.action.name) {
            None => return Err(mismatch(format!("step {} uses unknown action {}", st.step, st.action))),
            Some(a) if a.arity() != st.action.args.len() => {
                return Err(mismatch(format!("step {}: {} has the wrong arity", st.step, st.action)))
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn learn_config(s: &Settings) -> Result<LearnConfig, CliError> {
    let mut cfg = LearnConfig {
        kernel: s.kernel()?,
        train: TrainConfig {
            epochs: s.epochs.unwrap(),
            shuffle_seed: s.shuffle.unwrap().then(|| substream(s.seed.unwrap(), "classifier")),
        },
        ..LearnConfig::default()
    };
    cfg.extract.strict = s.strict.unwrap();
    cfg.combine.eps_p = s.eps_p.unwrap();
    cfg.combine.eps_e = s.eps_e.unwrap();
    Ok(cfg)
}

/// Trains, extracts and combines; writes models, rules, the learned domain
/// and a report. An empty learned domain is reported as an error after the
/// files are written.
pub fn learn_cmd(s: &Settings, trace_path: &Path) -> Result<LearnOutput, CliError> {
    let domain = load_domain(s.require_domain()?)?;
    let trace = load_trace(trace_path)?;
    check_trace_matches(&domain, &trace, trace_path)?;
    let out = learn(&domain, &trace, &learn_config(s)?);
    let dir = s.out_dir();
    let models = dir.join("models");
    for (name, a) in &out.actions {
        write(&models.join(format!("{name}.index")), a.classifiers.index.to_text())?;
        for (bit, m) in &a.classifiers.models {
            write(&models.join(format!("{name}.{bit}.model")), m.to_text())?;
        }
    }
    write(&dir.join("rules.txt"), out.rules_text())?;
    write(&dir.join("report.txt"), out.report_text())?;
    write(&dir.join(LEARNED), emit_domain(&out.domain))?;
    if out.domain.actions.is_empty() {
        return Err(CliError::Empty(format!(
            "no action was observed in {}; learned domain is empty",
            trace_path.display()
        )));
    }
    println!("learned {} action schemas into {}", out.domain.actions.len(), dir.join(LEARNED).display());
    Ok(out)
}

/// Scores a learned domain against a reference, and optionally its change
/// predictions on a test trace.
pub fn eval_cmd(s: &Settings, learned: &Path, truth: &Path, test: Option<&Path>) -> Result<String, CliError> {
    let learned_d = load_domain(learned)?;
    let truth_d = load_domain(truth)?;
    let errors = error_rate(&learned_d, &truth_d);
    let dir = s.out_dir();
    write(&dir.join("error.tsv"), errors.to_tsv())?;
    let mut summary = String::new();
    writeln!(summary, "learned: {}", learned.display()).unwrap();
    writeln!(summary, "truth: {}", truth.display()).unwrap();
    for a in &errors.actions {
        writeln!(
            summary,
            "  {}: E_pre {} E_eff {} T {} error {:.4}",
            a.name, a.e_pre, a.e_eff, a.t, a.error
        )
        .unwrap();
    }
    writeln!(summary, "Error(A) {:.4}", errors.mean).unwrap();
    if let Some(tp) = test {
        let trace = load_trace(tp)?;
        check_trace_matches(&truth_d, &trace, tp)?;
        let pred = prediction_fscore(&RulePredictor(&learned_d), &trace);
        write(&dir.join("prediction.tsv"), pred.to_tsv())?;
        let f = pred.micro();
        writeln!(
            summary,
            "test trace {}: {} steps, precision {:.4} recall {:.4} F {:.4} (macro F {:.4})",
            tp.display(),
            trace.steps.len(),
            f.precision,
            f.recall,
            f.f,
            pred.macro_f()
        )
        .unwrap();
    }
    write(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(summary)
}

pub fn grid_config(s: &Settings) -> Result<GridConfig, CliError> {
    let seed = s.seed.unwrap();
    Ok(GridConfig {
        train_steps: s.steps.unwrap(),
        test_steps: s.test_steps.unwrap(),
        episode_len: s.episode_len.unwrap(),
        success_ratio: s.success_ratio.unwrap(),
        noise: s.grid_noise.clone().unwrap_or_default(),
        observability: s.grid_observability.clone().unwrap_or_default(),
        seeds: (0..s.grid_seeds.unwrap_or(1))
            .map(|i| substream(seed, &format!("grid/{i}")))
            .collect(),
        variants: s.variants()?,
        epochs: s.epochs.unwrap(),
    })
}

/// Prediction F of every perceptron variant over the configured grid.
pub fn compare_cmd(s: &Settings) -> Result<(), CliError> {
    let domain = load_domain(s.require_domain()?)?;
    let train = load_problems(s.require_problems()?, &domain)?;
    let test = load_problems(s.test_problem_paths()?, &domain)?;
    let grid = grid_config(s)?;
    let rows = kernel_comparison(&domain, &train, &test, &grid).map_err(|e| CliError::sim(None, e))?;
    if rows.is_empty() {
        return Err(CliError::Empty("kernel comparison grid has no cells".into()));
    }
    let dir = s.out_dir();
    write(&dir.join("grid.tsv"), grid_rows_tsv(&rows))?;
    let summary = grid_summary_tsv(&summarize(&rows));
    write(&dir.join("grid-summary.tsv"), &summary)?;
    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    w.write_all(summary.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

/// generate, learn, eval and compare-kernels in sequence.
pub fn pipeline(s: &Settings) -> Result<(), CliError> {
    generate(s)?;
    generate_test(s)?;
    let dir = s.out_dir();
    learn_cmd(s, &dir.join(TRACE))?;
    eval_cmd(s, &dir.join(LEARNED), s.require_domain()?, Some(&dir.join(TEST_TRACE)))?;
    compare_cmd(s)
}
