//! Tabular visitation counting and count-based intrinsic rewards.
//!
//! One [`CountTable`] persists across every episode of a training run; the
//! per-episode [`EpisodeVisitSet`] implements the once-per-episode payout
//! restriction of `bebold` and `counts1st`. Counts are keyed by canonical
//! state-key byte strings and stored under a 128-bit fingerprint.
//!
//! Count-update ordering: the count of a state is incremented when the
//! transition into it is observed, *before* any reward is computed, so a
//! brand-new state has N = 1 and no division by zero can occur.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::gridworld::KeyMode;
use crate::hashing::fnv128;
use crate::{Error, Result};

/// Persistent state -> visit count map for a whole training run.
#[derive(Debug, Clone, Default)]
pub struct CountTable {
    counts: HashMap<u128, u64>,
    total_insertions: u64,
}

impl CountTable {
    pub fn new() -> CountTable {
        CountTable::default()
    }

    /// Record one visit; returns the updated count.
    pub fn record_visit(&mut self, key: &[u8]) -> u64 {
        self.record_visit_hash(fnv128(key))
    }

    pub fn record_visit_hash(&mut self, key_hash: u128) -> u64 {
        self.total_insertions += 1;
        let n = self.counts.entry(key_hash).or_insert(0);
        *n += 1;
        *n
    }

    pub fn count(&self, key: &[u8]) -> u64 {
        self.count_hash(fnv128(key))
    }

    pub fn count_hash(&self, key_hash: u128) -> u64 {
        self.counts.get(&key_hash).copied().unwrap_or(0)
    }

    /// Number of distinct states seen.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Total visits recorded (sum of all counts).
    pub fn total_insertions(&self) -> u64 {
        self.total_insertions
    }

    /// Dump `(key_hash, count)` pairs as CSV, sorted by key hash.
    pub fn dump_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "key_hash,count")?;
        let mut rows: Vec<(&u128, &u64)> = self.counts.iter().collect();
        rows.sort_unstable();
        for (hash, count) in rows {
            writeln!(w, "{hash:032x},{count}")?;
        }
        Ok(())
    }
}

/// State keys visited in the current episode; cleared at every episode start.
#[derive(Debug, Clone, Default)]
pub struct EpisodeVisitSet {
    seen: HashSet<u128>,
}

impl EpisodeVisitSet {
    pub fn new() -> EpisodeVisitSet {
        EpisodeVisitSet::default()
    }

    pub fn clear(&mut self) {
        self.seen.clear();
    }

    pub fn insert(&mut self, key_hash: u128) -> bool {
        self.seen.insert(key_hash)
    }

    pub fn contains(&self, key_hash: u128) -> bool {
        self.seen.contains(&key_hash)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Intrinsic-reward strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    None,
    /// max(1/N(s') - 1/N(s), 0), paid at most once per episode per state.
    Bebold,
    /// 1/sqrt(N(s')) on every step.
    Counts,
    /// 1/sqrt(N(s')) on the first in-episode visit only.
    Counts1st,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicConfig {
    pub strategy: Strategy,
    /// Weight of the intrinsic reward in the combined reward.
    pub beta: f64,
    /// How states are canonicalized for counting.
    pub key_mode: KeyMode,
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        IntrinsicConfig {
            strategy: Strategy::None,
            beta: 0.005,
            // Observation keys recur across procedurally generated levels,
            // which keeps tabular novelty meaningful when every level is
            // fresh; full keys would make nearly every state unique and
            // the count signal vanish.
            key_mode: KeyMode::Obs,
        }
    }
}

impl IntrinsicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::Config(format!(
                "intrinsic beta must be >= 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// BeBold reward for the transition `prev -> next`.
///
/// Both counts must already include the current transition's visits.
/// Pays `max(1/N(next) - 1/N(prev), 0)`, forced to zero when `next` was
/// already visited this episode; always marks `next` visited.
pub fn bebold_reward(
    table: &CountTable,
    key_prev: u128,
    key_next: u128,
    visits: &mut EpisodeVisitSet,
) -> Result<f64> {
    let n_prev = nonzero_count(table, key_prev)?;
    let n_next = nonzero_count(table, key_next)?;
    let novel = visits.insert(key_next);
    if !novel {
        return Ok(0.0);
    }
    Ok((1.0 / n_next as f64 - 1.0 / n_prev as f64).max(0.0))
}

/// `counts` / `counts1st` reward for arriving in `next`.
pub fn counts_reward(
    table: &CountTable,
    key_next: u128,
    first_visit_only: bool,
    visits: &mut EpisodeVisitSet,
) -> Result<f64> {
    let n_next = nonzero_count(table, key_next)?;
    let novel = visits.insert(key_next);
    if first_visit_only && !novel {
        return Ok(0.0);
    }
    Ok(1.0 / (n_next as f64).sqrt())
}

/// Strategy dispatcher used by the rollout collector.
pub fn intrinsic_reward(
    strategy: Strategy,
    table: &CountTable,
    key_prev: u128,
    key_next: u128,
    visits: &mut EpisodeVisitSet,
) -> Result<f64> {
    match strategy {
        Strategy::None => Ok(0.0),
        Strategy::Bebold => bebold_reward(table, key_prev, key_next, visits),
        Strategy::Counts => counts_reward(table, key_next, false, visits),
        Strategy::Counts1st => counts_reward(table, key_next, true, visits),
    }
}

/// r = r_ext + beta * r_int
pub fn combine(r_ext: f64, r_int: f64, beta: f64) -> f64 {
    r_ext + beta * r_int
}

fn nonzero_count(table: &CountTable, key: u128) -> Result<u64> {
    match table.count_hash(key) {
        0 => Err(Error::Numeric(
            "visit count is zero; counts must be recorded before rewards".into(),
        )),
        n => Ok(n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;

    fn h(s: &str) -> u128 {
        fnv128(s.as_bytes())
    }

    #[test]
    fn record_visit_counts_up() {
        let mut t = CountTable::new();
        assert_eq!(t.record_visit(b"a"), 1);
        assert_eq!(t.record_visit(b"a"), 2);
        for _ in 0..5 {
            t.record_visit(b"b");
        }
        assert_eq!(t.count(b"b"), 5);
        assert_eq!(t.count(b"missing"), 0);
        assert_eq!(t.len(), 2);
        assert_eq!(t.total_insertions(), 7);
    }

    #[test]
    fn bebold_direct_substitution() {
        let mut t = CountTable::new();
        let mut visits = EpisodeVisitSet::new();
        t.record_visit_hash(h("prev"));
        t.record_visit_hash(h("prev"));
        t.record_visit_hash(h("next"));
        // N(next)=1, N(prev)=2 -> 1/1 - 1/2 = 0.5
        let r = bebold_reward(&t, h("prev"), h("next"), &mut visits).unwrap();
        assert_eq!(r, 0.5);
    }

    #[test]
    fn bebold_clips_at_zero() {
        let mut t = CountTable::new();
        let mut visits = EpisodeVisitSet::new();
        for _ in 0..2 {
            t.record_visit_hash(h("prev"));
        }
        for _ in 0..4 {
            t.record_visit_hash(h("next"));
        }
        // 1/4 - 1/2 < 0 -> clipped to 0
        let r = bebold_reward(&t, h("prev"), h("next"), &mut visits).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn bebold_pays_once_per_episode() {
        // The start state is passed twice per episode, the frontier once.
        let mut t = CountTable::new();
        let mut visits = EpisodeVisitSet::new();
        t.record_visit_hash(h("a"));
        t.record_visit_hash(h("a"));
        t.record_visit_hash(h("b"));
        // N(a)=2, N(b)=1 -> 1 - 1/2
        let first = bebold_reward(&t, h("a"), h("b"), &mut visits).unwrap();
        assert_eq!(first, 0.5);
        t.record_visit_hash(h("b"));
        let again = bebold_reward(&t, h("a"), h("b"), &mut visits).unwrap();
        assert_eq!(again, 0.0, "revisit within the episode pays nothing");
        // A fresh episode pays again, but less (novelty decayed).
        visits.clear();
        t.record_visit_hash(h("a"));
        t.record_visit_hash(h("a"));
        t.record_visit_hash(h("b"));
        // N(a)=4, N(b)=3 -> 1/3 - 1/4
        let fresh = bebold_reward(&t, h("a"), h("b"), &mut visits).unwrap();
        assert!(fresh > 0.0 && fresh < first, "fresh {fresh}");
    }

    #[test]
    fn zero_count_is_an_ordering_bug() {
        let t = CountTable::new();
        let mut visits = EpisodeVisitSet::new();
        assert!(matches!(
            bebold_reward(&t, h("a"), h("b"), &mut visits),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn counts_and_counts1st() {
        let mut t = CountTable::new();
        let mut visits = EpisodeVisitSet::new();
        t.record_visit_hash(h("s"));
        assert_eq!(counts_reward(&t, h("s"), false, &mut visits).unwrap(), 1.0);
        for _ in 0..3 {
            t.record_visit_hash(h("s"));
        }
        // N = 4 -> 0.5; plain counts pays on revisits too.
        assert_eq!(counts_reward(&t, h("s"), false, &mut visits).unwrap(), 0.5);
        // counts1st: already visited this episode -> 0.
        assert_eq!(counts_reward(&t, h("s"), true, &mut visits).unwrap(), 0.0);
        visits.clear();
        assert_eq!(counts_reward(&t, h("s"), true, &mut visits).unwrap(), 0.5);
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine(0.5, 0.5, 0.005), 0.5025);
        assert_eq!(combine(0.7, 123.0, 0.0), 0.7);
        let table = CountTable::new();
        let mut visits = EpisodeVisitSet::new();
        let r = intrinsic_reward(Strategy::None, &table, h("x"), h("y"), &mut visits).unwrap();
        assert_eq!(r, 0.0, "strategy none emits zero for every step");
    }

    #[test]
    fn intrinsic_rewards_are_nonnegative() {
        let mut t = CountTable::new();
        let mut visits = EpisodeVisitSet::new();
        let mut rng = Rng64::new(5);
        let keys: Vec<u128> = (0..20).map(|i| h(&format!("s{i}"))).collect();
        let mut prev = keys[0];
        t.record_visit_hash(prev);
        visits.insert(prev);
        for step in 0..2000 {
            if step % 50 == 0 {
                visits.clear();
                prev = *rng.choose(&keys);
                t.record_visit_hash(prev);
                visits.insert(prev);
            }
            let next = *rng.choose(&keys);
            t.record_visit_hash(next);
            for strategy in [Strategy::Bebold, Strategy::Counts, Strategy::Counts1st] {
                let mut v = visits.clone();
                let r = intrinsic_reward(strategy, &t, prev, next, &mut v).unwrap();
                assert!(r >= 0.0);
            }
            intrinsic_reward(Strategy::Bebold, &t, prev, next, &mut visits).unwrap();
            prev = next;
        }
    }

    #[test]
    fn bebold_novelty_decays_monotonically_across_episodes() {
        // Replay the same two-state transition once per episode; the payout
        // must never increase as training time grows.
        let mut t = CountTable::new();
        let mut last = f64::INFINITY;
        for _episode in 0..50 {
            let mut visits = EpisodeVisitSet::new();
            t.record_visit_hash(h("start"));
            visits.insert(h("start"));
            t.record_visit_hash(h("frontier"));
            let r = bebold_reward(&t, h("start"), h("frontier"), &mut visits).unwrap();
            assert!(r <= last + 1e-15, "bebold increased: {last} -> {r}");
            last = r;
        }
        assert!(last < 0.05, "novelty should have decayed, still {last}");
    }

    #[test]
    fn csv_dump_is_sorted_and_stable() {
        let mut t = CountTable::new();
        for key in ["z", "a", "m", "a"] {
            t.record_visit(key.as_bytes());
        }
        let mut buf1 = Vec::new();
        t.dump_csv(&mut buf1).unwrap();
        let mut buf2 = Vec::new();
        t.dump_csv(&mut buf2).unwrap();
        assert_eq!(buf1, buf2);
        let text = String::from_utf8(buf1).unwrap();
        assert_eq!(text.lines().count(), 4, "header + 3 distinct keys");
        assert!(text.starts_with("key_hash,count"));
    }
}
