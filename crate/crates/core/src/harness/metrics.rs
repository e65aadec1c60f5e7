//! Metrics rows, CSV writers and the buffer-composition report.
//!
//! The metrics column order is frozen (see [`METRICS_COLUMNS`]); runs of
//! the same (config, seed) produce byte-identical files. Wall-clock time is
//! deliberately kept out of the CSV and lives in the run summary instead.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::intrinsic::CountTable;
use crate::ppo::{Collector, PpoStats};
use crate::rapid::{RankedBuffer, RapidWeights};
use crate::schedule::UpdateLedger;
use crate::sil::SilBuffer;
use crate::Result;

/// Mean over the most recent `cap` episodic returns.
#[derive(Debug, Clone)]
pub struct RunningMean {
    window: std::collections::VecDeque<f64>,
    cap: usize,
}

impl RunningMean {
    pub fn new(cap: usize) -> RunningMean {
        RunningMean {
            window: std::collections::VecDeque::with_capacity(cap),
            cap,
        }
    }

    pub fn push(&mut self, value: f64) {
        if self.window.len() == self.cap {
            self.window.pop_front();
        }
        self.window.push_back(value);
    }

    pub fn mean(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().sum::<f64>() / self.window.len() as f64
        }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }
}

/// Fields of the most recently completed episode.
#[derive(Debug, Clone, Copy, Default)]
pub struct EpisodeSnapshot {
    pub len: u64,
    pub return_ext: f64,
    pub g_ext: f64,
    pub g_int: f64,
}

pub const METRICS_COLUMNS: [&str; 25] = [
    "frames",
    "episodes",
    "ep_len",
    "ep_return",
    "running_mean_100",
    "g_ext",
    "g_int",
    "policy_loss",
    "value_loss",
    "entropy",
    "mean_ratio",
    "onpolicy_updates",
    "offpolicy_updates",
    "off_per_10_on",
    "counts_entries",
    "buf_size",
    "buf_min_score",
    "buf_max_score",
    "buf_mean_score",
    "buf_share_ext",
    "buf_share_local",
    "buf_share_global",
    "buf_distinct_seeds",
    "buf_top_seed",
    "buf_top_seed_share",
];

/// One row of the per-rollout metrics CSV.
#[derive(Debug, Clone, Default)]
pub struct MetricsRow {
    pub frames: u64,
    pub episodes: u64,
    pub ep_len: u64,
    pub ep_return: f64,
    pub running_mean_100: f64,
    pub g_ext: f64,
    pub g_int: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub onpolicy_updates: u64,
    pub offpolicy_updates: u64,
    pub off_per_10_on: f64,
    pub counts_entries: u64,
    pub buf_size: u64,
    pub buf_min_score: f64,
    pub buf_max_score: f64,
    pub buf_mean_score: f64,
    pub buf_share_ext: f64,
    pub buf_share_local: f64,
    pub buf_share_global: f64,
    pub buf_distinct_seeds: u64,
    pub buf_top_seed: u64,
    pub buf_top_seed_share: f64,
}

impl MetricsRow {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn collect(
        collector: &Collector,
        window: &RunningMean,
        last: &EpisodeSnapshot,
        stats: &PpoStats,
        ledger: &UpdateLedger,
        counts: &CountTable,
        rapid_buffer: Option<&RankedBuffer>,
        sil_buffer: Option<&SilBuffer>,
        weights: &RapidWeights,
    ) -> MetricsRow {
        let mut row = MetricsRow {
            frames: collector.frames(),
            episodes: collector.episodes_completed(),
            ep_len: last.len,
            ep_return: last.return_ext,
            running_mean_100: window.mean(),
            g_ext: last.g_ext,
            g_int: last.g_int,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            mean_ratio: stats.mean_ratio,
            onpolicy_updates: ledger.on_total,
            offpolicy_updates: ledger.off_total,
            off_per_10_on: ledger.window_off_per_10_on(),
            counts_entries: counts.len() as u64,
            ..MetricsRow::default()
        };
        if let Some(buf) = rapid_buffer {
            let (min, max, mean) = buf.score_stats();
            let (se, sl, sg) = buf.component_shares(weights);
            let hist = buf.seed_histogram();
            let total: usize = hist.iter().map(|(_, n)| n).sum();
            let top = hist.iter().max_by_key(|(_, n)| *n);
            row.buf_size = buf.len() as u64;
            row.buf_min_score = min;
            row.buf_max_score = max;
            row.buf_mean_score = mean;
            row.buf_share_ext = se;
            row.buf_share_local = sl;
            row.buf_share_global = sg;
            row.buf_distinct_seeds = hist.len() as u64;
            if let Some((seed, n)) = top {
                row.buf_top_seed = *seed;
                row.buf_top_seed_share = *n as f64 / total as f64;
            }
        } else if let Some(buf) = sil_buffer {
            row.buf_size = buf.len() as u64;
        }
        row
    }

    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.frames,
            self.episodes,
            self.ep_len,
            f(self.ep_return),
            f(self.running_mean_100),
            f(self.g_ext),
            f(self.g_int),
            f(self.policy_loss),
            f(self.value_loss),
            f(self.entropy),
            f(self.mean_ratio),
            self.onpolicy_updates,
            self.offpolicy_updates,
            f(self.off_per_10_on),
            self.counts_entries,
            self.buf_size,
            f(self.buf_min_score),
            f(self.buf_max_score),
            f(self.buf_mean_score),
            f(self.buf_share_ext),
            f(self.buf_share_local),
            f(self.buf_share_global),
            self.buf_distinct_seeds,
            self.buf_top_seed,
            f(self.buf_top_seed_share),
        )
    }
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

pub struct MetricsWriter {
    out: BufWriter<std::fs::File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<MetricsWriter> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{}", METRICS_COLUMNS.join(","))?;
        Ok(MetricsWriter { out })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        self.out.write_all(row.to_csv_line().as_bytes())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Writes per-slot buffer composition rows: `frames,seed,count,share`.
pub struct CompositionWriter {
    out: BufWriter<std::fs::File>,
    last_frames: Option<u64>,
}

impl CompositionWriter {
    pub fn create(path: &Path) -> Result<CompositionWriter> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "frames,seed,count,share")?;
        Ok(CompositionWriter {
            out,
            last_frames: None,
        })
    }

    pub fn write_slot(&mut self, frames: u64, buffer: &RankedBuffer) -> Result<()> {
        if self.last_frames == Some(frames) {
            return Ok(());
        }
        self.last_frames = Some(frames);
        let hist = buffer.seed_histogram();
        let total: usize = hist.iter().map(|(_, n)| n).sum();
        for (seed, n) in hist {
            writeln!(
                self.out,
                "{frames},{seed},{n},{}",
                f(n as f64 / total as f64)
            )?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Parsed buffer-composition time series.
#[derive(Debug, Clone, Default)]
pub struct CompositionReport {
    /// (frames, per-seed shares) per recorded slot, in file order.
    pub slots: Vec<(u64, Vec<(u64, f64)>)>,
}

impl CompositionReport {
    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Share of the dominant seed in the final slot.
    pub fn final_top_share(&self) -> Option<(u64, f64)> {
        let (_, shares) = self.slots.last()?;
        shares
            .iter()
            .cloned()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Share of `seed` over time: (frames, share) pairs.
    pub fn seed_series(&self, seed: u64) -> Vec<(u64, f64)> {
        self.slots
            .iter()
            .map(|(frames, shares)| {
                let share = shares
                    .iter()
                    .find(|(s, _)| *s == seed)
                    .map(|(_, v)| *v)
                    .unwrap_or(0.0);
                (*frames, share)
            })
            .collect()
    }
}

/// Read a buffer-composition CSV produced by a rapid-method run.
pub fn buffer_composition_report(path: &Path) -> Result<CompositionReport> {
    let text = std::fs::read_to_string(path)?;
    let mut report = CompositionReport::default();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse_err = || crate::Error::Config(format!("bad composition row: {line}"));
        let frames: u64 = parts.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let seed: u64 = parts.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let _count = parts.next().ok_or_else(parse_err)?;
        let share: f64 = parts.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        match report.slots.last_mut() {
            Some((last_frames, shares)) if *last_frames == frames => shares.push((seed, share)),
            _ => report.slots.push((frames, vec![(seed, share)])),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_mean_uses_exactly_the_last_100() {
        let mut w = RunningMean::new(100);
        assert_eq!(w.mean(), 0.0);
        for i in 0..250 {
            w.push(i as f64);
        }
        assert_eq!(w.len(), 100);
        // Mean of 150..=249.
        let expected = (150..250).sum::<i64>() as f64 / 100.0;
        assert_eq!(w.mean(), expected);
    }

    #[test]
    fn csv_line_has_frozen_column_count() {
        let row = MetricsRow::default();
        let line = row.to_csv_line();
        assert_eq!(line.trim_end().split(',').count(), METRICS_COLUMNS.len());
    }

    #[test]
    fn composition_report_round_trips() {
        let dir = std::env::temp_dir().join(format!("gridlab_comp_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("comp.csv");
        let mut buf = crate::rapid::RankedBuffer::new(100);
        let mut writer = CompositionWriter::create(&path).unwrap();
        // Fresh buffer: nothing to report.
        writer.write_slot(0, &buf).unwrap();
        writer.flush().unwrap();
        let report = buffer_composition_report(&path).unwrap();
        assert!(report.is_empty());
        assert!(report.final_top_share().is_none());

        // Buffer filled from a single seed reports share 1.0.
        let scored = crate::rapid::ScoredEpisode {
            steps: vec![(vec![0.0; 2].into(), 0), (vec![0.0; 2].into(), 1)],
            s_ext: 0.5,
            s_local: 1.0,
            s_global: 0.2,
            score: 0.6,
            level_seed: 42,
            created_at: 0,
        };
        buf.insert(scored);
        let mut writer = CompositionWriter::create(&path).unwrap();
        writer.write_slot(128, &buf).unwrap();
        writer.flush().unwrap();
        let report = buffer_composition_report(&path).unwrap();
        assert_eq!(report.slots.len(), 1);
        assert_eq!(report.final_top_share(), Some((42, 1.0)));
        assert_eq!(report.seed_series(42), vec![(128, 1.0)]);
        assert_eq!(report.seed_series(7), vec![(128, 0.0)]);
        std::fs::remove_dir_all(&dir).ok();
    }
}
