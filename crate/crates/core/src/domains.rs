//! Benchmark domains and problems shipped with the crate.

pub const BLOCKSWORLD: &str = include_str!("../domains/blocksworld.pddl");
/// 13 blocks in five towers.
pub const BLOCKSWORLD_TRAIN: &str = include_str!("../domains/blocksworld-13.pddl");
/// 30 blocks in nine towers.
pub const BLOCKSWORLD_TEST: &str = include_str!("../domains/blocksworld-30.pddl");

pub const ZENOTRAVEL: &str = include_str!("../domains/zenotravel.pddl");
/// 5 cities, 3 planes, 7 people.
pub const ZENOTRAVEL_TRAIN: &str = include_str!("../domains/zenotravel-train.pddl");
/// 10 cities, 5 planes, 10 people.
pub const ZENOTRAVEL_TEST: &str = include_str!("../domains/zenotravel-test.pddl");

pub const DEPOTS: &str = include_str!("../domains/depots.pddl");
