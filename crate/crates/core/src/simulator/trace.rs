use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{observe, BitState, GroundAction, ObservationModel, ObservedState, SimError, Simulator};
use crate::pddl::{Domain, Problem};
use crate::rng::stream;

const FORMAT: &str = "striplearn-trace";
const VERSION: u32 = 1;

/// Random draws tried before falling back to enumerating a whole pool.
const REJECTION_TRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub n_steps: usize,
    pub success_ratio: f64,
    pub episode_len: usize,
    pub observation: ObservationModel,
    pub seed: u64,
}

impl TraceConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.success_ratio) {
            return Err(SimError::Config(format!(
                "success ratio {} outside [0, 1]",
                self.success_ratio
            )));
        }
        if self.episode_len == 0 {
            return Err(SimError::Config("episode length must be at least 1".into()));
        }
        self.observation.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub episode: usize,
    pub prior: ObservedState,
    pub action: GroundAction,
    pub succ: ObservedState,
    /// Ground truth, kept out of the trace file. `None` when read back
    /// without its sidecar.
    pub succeeded: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub domain: String,
    pub problems: Vec<String>,
    pub config: TraceConfig,
    /// Index of the first step of each episode.
    pub episode_starts: Vec<usize>,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn success_fraction(&self) -> Option<f64> {
        let flags: Option<Vec<bool>> = self.steps.iter().map(|s| s.succeeded).collect();
        let flags = flags?;
        if flags.is_empty() {
            return None;
        }
        Some(flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64)
    }
}

/// Random walk over the problems in turn, restarting from the next problem's
/// initial state every `episode_len` steps.
///
/// Consecutive steps share an observation: the successor view of one step is
/// the prior view of the next.
pub fn generate_trace(
    domain: &Domain,
    problems: &[Problem],
    config: &TraceConfig,
) -> Result<Trace, SimError> {
    config.validate()?;
    if problems.is_empty() {
        return Err(SimError::Config("no problems given".into()));
    }
    let sims = problems
        .iter()
        .map(|p| Simulator::new(domain, p))
        .collect::<Result<Vec<_>, _>>()?;
    if sims.iter().any(|s| s.instances.is_empty()) {
        return Err(SimError::NoInstances);
    }

    let mut act_rng = stream(config.seed, "trace/actions");
    let mut obs_rng = stream(config.observation.rng_seed, "trace/observe");
    let model = &config.observation;

    let mut steps = Vec::with_capacity(config.n_steps);
    let mut episode_starts = Vec::new();
    let mut sim = &sims[0];
    let mut bits = BitState::new(0);
    let mut prior = ObservedState::new();
    for step in 0..config.n_steps {
        if step % config.episode_len == 0 {
            let episode = step / config.episode_len;
            episode_starts.push(step);
            sim = &sims[episode % sims.len()];
            let init = sim.initial_state();
            bits = sim.to_bits(&init);
            prior = observe(&init, &sim.universe, model, &mut obs_rng);
        }
        let want_success = act_rng.gen_bool(config.success_ratio);
        let (idx, ok) = pick(sim, &bits, want_success, &mut act_rng);
        let c = &sim.instances[idx];
        if ok {
            sim.compiled_apply(c, &mut bits);
        }
        let succ = observe(&sim.from_bits(&bits), &sim.universe, model, &mut obs_rng);
        steps.push(TraceStep {
            step,
            episode: episode_starts.len() - 1,
            prior: std::mem::replace(&mut prior, succ.clone()),
            action: c.action.clone(),
            succ,
            succeeded: Some(ok),
        });
    }
    Ok(Trace {
        domain: domain.name.clone(),
        problems: problems.iter().map(|p| p.name.clone()).collect(),
        config: config.clone(),
        episode_starts,
        steps,
    })
}

/// Uniform draw from the applicable (or inapplicable) instances, falling back
/// to the other pool when the requested one is empty. Returns the instance
/// index and whether it is applicable.
///
/// Rejection sampling is tried first; if it gives up, the pool is enumerated,
/// so the draw is exactly uniform either way.
fn pick<R: Rng>(sim: &Simulator, bits: &BitState, want: bool, rng: &mut R) -> (usize, bool) {
    let n = sim.instances.len();
    for _ in 0..REJECTION_TRIES {
        let i = rng.gen_range(0..n);
        if sim.compiled_applicable(&sim.instances[i], bits) == want {
            return (i, want);
        }
    }
    let (mut yes, mut no) = (Vec::new(), Vec::new());
    for (i, c) in sim.instances.iter().enumerate() {
        if sim.compiled_applicable(c, bits) {
            yes.push(i)
        } else {
            no.push(i)
        }
    }
    let (pool, ok) = match (want, yes.is_empty(), no.is_empty()) {
        (true, false, _) | (false, _, true) => (yes, true),
        _ => (no, false),
    };
    (pool[rng.gen_range(0..pool.len())], ok)
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    domain: String,
    problems: Vec<String>,
    config: TraceConfig,
    episode_starts: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: Header,
}

#[derive(Serialize, Deserialize)]
struct Record {
    step: usize,
    episode: usize,
    action: GroundAction,
    prior: ObservedState,
    succ: ObservedState,
}

#[derive(Serialize, Deserialize)]
struct Flag {
    step: usize,
    succeeded: bool,
}

fn json_err(e: serde_json::Error) -> SimError {
    SimError::Io(e.into())
}

/// Writes the trace as JSON lines: one header record, then one record per
/// step. Success flags are not written; see [`write_success_sidecar`].
pub fn write_trace<W: Write>(trace: &Trace, mut w: W) -> Result<(), SimError> {
    let header = HeaderLine {
        header: Header {
            format: FORMAT.into(),
            version: VERSION,
            domain: trace.domain.clone(),
            problems: trace.problems.clone(),
            config: trace.config.clone(),
            episode_starts: trace.episode_starts.clone(),
        },
    };
    serde_json::to_writer(&mut w, &header).map_err(json_err)?;
    w.write_all(b"\n")?;
    for s in &trace.steps {
        let r = Record {
            step: s.step,
            episode: s.episode,
            action: s.action.clone(),
            prior: s.prior.clone(),
            succ: s.succ.clone(),
        };
        serde_json::to_writer(&mut w, &r).map_err(json_err)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Trace, SimError> {
    let bad = |line: usize, message: String| SimError::TraceFormat { line, message };
    let mut lines = r.lines().enumerate();
    let header: Header = match lines.next() {
        Some((_, l)) => {
            let l = l?;
            serde_json::from_str::<HeaderLine>(&l)
                .map_err(|e| bad(1, format!("bad header: {e}")))?
                .header
        }
        None => return Err(bad(1, "empty trace file".into())),
    };
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad(
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    let mut steps = Vec::new();
    for (i, l) in lines {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&l).map_err(|e| bad(i + 1, e.to_string()))?;
        steps.push(TraceStep {
            step: rec.step,
            episode: rec.episode,
            prior: rec.prior,
            action: rec.action,
            succ: rec.succ,
            succeeded: None,
        });
    }
    Ok(Trace {
        domain: header.domain,
        problems: header.problems,
        config: header.config,
        episode_starts: header.episode_starts,
        steps,
    })
}

/// One `{"step": n, "succeeded": bool}` line per step.
pub fn write_success_sidecar<W: Write>(trace: &Trace, mut w: W) -> Result<(), SimError> {
    for s in &trace.steps {
        if let Some(ok) = s.succeeded {
            serde_json::to_writer(&mut w, &Flag { step: s.step, succeeded: ok }).map_err(json_err)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Fills in `succeeded` from a sidecar written by [`write_success_sidecar`].
pub fn read_success_sidecar<R: BufRead>(r: R, trace: &mut Trace) -> Result<(), SimError> {
    for (i, l) in r.lines().enumerate() {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let f: Flag = serde_json::from_str(&l).map_err(|e| SimError::TraceFormat {
            line: i + 1,
            message: e.to_string(),
        })?;
        let step = trace
            .steps
            .iter_mut()
            .find(|s| s.step == f.step)
            .ok_or_else(|| SimError::TraceFormat {
                line: i + 1,
                message: format!("no step {} in trace", f.step),
            })?;
        step.succeeded = Some(f.succeeded);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;
    use crate::pddl::{parse_domain, parse_problem};

    fn bw() -> (Domain, Problem) {
        let d = parse_domain(domains::BLOCKSWORLD).unwrap();
        let p = parse_problem(domains::BLOCKSWORLD_TRAIN, &d).unwrap();
        (d, p)
    }

    fn config(n: usize, ratio: f64, obs: ObservationModel) -> TraceConfig {
        TraceConfig {
            n_steps: n,
            success_ratio: ratio,
            episode_len: 400,
            observation: obs,
            seed: 11,
        }
    }

    #[test]
    fn failed_steps_leave_state_unchanged() {
        let (d, p) = bw();
        let t = generate_trace(&d, &[p], &config(2000, 0.5, ObservationModel::perfect())).unwrap();
        let mut failures = 0;
        for s in &t.steps {
            if s.succeeded == Some(false) {
                failures += 1;
                assert_eq!(s.prior, s.succ, "step {}", s.step);
            } else {
                assert_ne!(s.prior, s.succ, "step {}", s.step);
            }
        }
        assert!(failures > 0);
    }

    #[test]
    fn success_mixture_is_balanced() {
        let (d, p) = bw();
        let t = generate_trace(&d, &[p], &config(20_000, 0.5, ObservationModel::perfect())).unwrap();
        assert_eq!(t.steps.len(), 20_000);
        let f = t.success_fraction().unwrap();
        // four standard deviations of a Bernoulli(0.5) mean over 20000 draws
        assert!((f - 0.5).abs() < 4.0 * (0.25f64 / 20_000.0).sqrt(), "{f}");
    }

    #[test]
    fn all_success_when_ratio_one() {
        let (d, p) = bw();
        let t = generate_trace(&d, &[p], &config(500, 1.0, ObservationModel::perfect())).unwrap();
        assert!(t.steps.iter().all(|s| s.succeeded == Some(true)));
    }

    #[test]
    fn episodes_restart_from_init() {
        let (d, p) = bw();
        let sim = Simulator::new(&d, &p).unwrap();
        let init = ObservedState::full(&sim.initial_state(), sim.universe());
        let t = generate_trace(&d, &[p.clone()], &config(1200, 0.5, ObservationModel::perfect())).unwrap();
        assert_eq!(t.episode_starts, vec![0, 400, 800]);
        for &s in &t.episode_starts {
            assert_eq!(t.steps[s].prior, init);
        }
        assert_eq!(t.steps.last().unwrap().episode, 2);
    }

    #[test]
    fn observations_chain_within_episode() {
        let (d, p) = bw();
        let obs = ObservationModel {
            observability: 0.25,
            noise_prob: 0.05,
            rng_seed: 5,
        };
        let t = generate_trace(&d, &[p], &config(900, 0.5, obs)).unwrap();
        for w in t.steps.windows(2) {
            if w[1].episode == w[0].episode {
                assert_eq!(w[0].succ, w[1].prior);
            }
        }
    }

    #[test]
    fn deterministic_and_round_trips() {
        let (d, p) = bw();
        let obs = ObservationModel {
            observability: 0.5,
            noise_prob: 0.01,
            rng_seed: 9,
        };
        let cfg = config(300, 0.5, obs);
        let a = generate_trace(&d, &[p.clone()], &cfg).unwrap();
        let b = generate_trace(&d, &[p], &cfg).unwrap();
        assert_eq!(a, b);

        let mut buf = Vec::new();
        write_trace(&a, &mut buf).unwrap();
        let mut back = read_trace(buf.as_slice()).unwrap();
        assert!(back.steps.iter().all(|s| s.succeeded.is_none()));
        let mut side = Vec::new();
        write_success_sidecar(&a, &mut side).unwrap();
        read_success_sidecar(side.as_slice(), &mut back).unwrap();
        assert_eq!(back, a);

        let mut again = Vec::new();
        write_trace(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn trace_line_shape() {
        let (d, p) = bw();
        let t = generate_trace(&d, &[p], &config(1, 1.0, ObservationModel::perfect())).unwrap();
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rec: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        for k in ["step", "episode", "action", "prior", "succ"] {
            assert!(rec.get(k).is_some(), "{k}");
        }
        assert!(rec.get("succeeded").is_none());
        assert!(rec["action"]["name"].is_string());
        assert!(rec["prior"]["pos"].is_array());
    }

    #[test]
    fn rejects_bad_config_and_empty_problem() {
        let (d, p) = bw();
        let mut cfg = config(10, 0.5, ObservationModel::perfect());
        cfg.episode_len = 0;
        assert!(matches!(generate_trace(&d, &[p.clone()], &cfg), Err(SimError::Config(_))));
        let empty = parse_problem(
            "(define (problem none) (:domain blocksworld) (:objects) (:init))",
            &d,
        )
        .unwrap();
        // 0-ary actions do not exist in blocksworld, so nothing can be grounded
        assert!(matches!(
            generate_trace(&d, &[empty], &config(10, 0.5, ObservationModel::perfect())),
            Err(SimError::NoInstances)
        ));
        assert!(read_trace("".as_bytes()).is_err());
    }
}
