//! Shared fixtures for the criterion benches.

use striplearn::domains;
use striplearn::pddl::{parse_domain, parse_problem, Domain, Problem};
use striplearn::simulator::{generate_trace, ObservationModel, Trace, TraceConfig};

pub struct Fixture {
    pub domain: Domain,
    pub problems: Vec<Problem>,
}

impl Fixture {
    pub fn blocksworld() -> Self {
        Self::load(domains::BLOCKSWORLD, domains::BLOCKSWORLD_TRAIN)
    }

    pub fn zenotravel() -> Self {
        Self::load(domains::ZENOTRAVEL, domains::ZENOTRAVEL_TRAIN)
    }

    fn load(domain: &str, problem: &str) -> Self {
        let domain = parse_domain(domain).expect("bundled domain parses");
        let problem = parse_problem(problem, &domain).expect("bundled problem parses");
        Fixture {
            domain,
            problems: vec![problem],
        }
    }

    pub fn trace(&self, steps: usize, observability: f64, noise: f64, seed: u64) -> Trace {
        let cfg = TraceConfig {
            n_steps: steps,
            success_ratio: 0.5,
            episode_len: 400,
            observation: ObservationModel {
                observability,
                noise_prob: noise,
                rng_seed: seed ^ 0x5eed,
            },
            seed,
        };
        generate_trace(&self.domain, &self.problems, &cfg).expect("bundled problems simulate")
    }
}
