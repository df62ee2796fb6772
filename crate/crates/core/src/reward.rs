//! Composite reward, group-relative advantages, the progressive training
//! schedule, and dataset difficulty statistics.
//!
//! The reward combines a binary format component with a binary correctness
//! component as `R = 0.2 * R_format + R_correct`, so the only reachable
//! values are {0, 0.2, 1.0, 1.2}. Advantages are normalized per rollout
//! group with a population standard deviation and a small epsilon guard.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rollout::Verdict;
use crate::trajectory::FormatReport;

/// Weight of the format component in the composite reward.
pub const FORMAT_WEIGHT: f64 = 0.2;

/// Epsilon guard in the advantage denominator.
pub const ADVANTAGE_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("unknown schedule stage {0} (schedule has {1} stages)")]
    UnknownStage(usize, usize),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// Per-rollout reward record, exported for an external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub trajectory_id: String,
    pub r_format: u8,
    pub r_correct: u8,
    pub reward: f64,
    pub group_id: String,
    pub advantage: f64,
}

/// Composite reward from the binary format and correctness components.
pub fn reward_components(format: &FormatReport, verdict: &Verdict) -> (u8, u8, f64) {
    let r_format: u8 = if format.well_formed { 1 } else { 0 };
    let r_correct: u8 = if verdict.correct { 1 } else { 0 };
    let reward = FORMAT_WEIGHT * f64::from(r_format) + f64::from(r_correct);
    (r_format, r_correct, reward)
}

/// Group-relative advantages: `(r_i - mean) / (std + eps)` with population
/// std. A zero-variance group (including size-1 groups) yields all zeros.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    assert!(!rewards.is_empty(), "advantage group must be non-empty");
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / (std + ADVANTAGE_EPS)).collect()
}

/// One stage of the progressive context/turn schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStage {
    pub stage: usize,
    pub max_context_units: u64,
    pub max_turns: u32,
}

/// Progressive expansion schedule over (context budget, turn limit) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    stages: Vec<(u64, u32)>,
}

impl Default for Schedule {
    fn default() -> Self {
        // 64K/50 -> 96K/75 -> 128K/100
        Schedule { stages: vec![(65_536, 50), (98_304, 75), (131_072, 100)] }
    }
}

impl Schedule {
    /// Builds a schedule, rejecting stage lists that are not strictly
    /// increasing in both the context budget and the turn limit.
    pub fn new(stages: Vec<(u64, u32)>) -> Result<Self, ScheduleError> {
        if stages.is_empty() {
            return Err(ScheduleError::InvalidSchedule("schedule has no stages".into()));
        }
        for w in stages.windows(2) {
            let (c0, t0) = w[0];
            let (c1, t1) = w[1];
            if c1 <= c0 || t1 <= t0 {
                return Err(ScheduleError::InvalidSchedule(format!(
                    "stages must strictly increase in both fields: ({c0},{t0}) -> ({c1},{t1})"
                )));
            }
        }
        Ok(Schedule { stages })
    }

    pub fn stage(&self, index: usize) -> Result<ScheduleStage, ScheduleError> {
        let (max_context_units, max_turns) = *self
            .stages
            .get(index)
            .ok_or(ScheduleError::UnknownStage(index, self.stages.len()))?;
        Ok(ScheduleStage { stage: index, max_context_units, max_turns })
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

/// Histogram layout for turn-count distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramConfig {
    /// Bucket width in turns.
    pub width: u32,
    /// Turns >= max fall into the single overflow bucket.
    pub max: u32,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig { width: 2, max: 30 }
    }
}

impl HistogramConfig {
    pub fn bucket_label(&self, turns: u32) -> String {
        if turns >= self.max {
            return format!("{}+", self.max);
        }
        let lo = (turns / self.width) * self.width;
        format!("{}-{}", lo, lo + self.width - 1)
    }

    /// All bucket labels in ascending order, including the overflow bucket.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut lo = 0;
        while lo < self.max {
            out.push(format!("{}-{}", lo, lo + self.width - 1));
            lo += self.width;
        }
        out.push(format!("{}+", self.max));
        out
    }
}

/// A (turn count, judged correct) observation for dataset statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turns: u32,
    pub correct: bool,
}

/// Aggregate difficulty statistics over a set of judged runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n: usize,
    pub accuracy_pct: f64,
    pub avg_turns: f64,
    pub turn_histogram: BTreeMap<String, u64>,
}

/// Exact-arithmetic accuracy and turn statistics with a bucketed histogram.
pub fn dataset_stats(records: &[TurnRecord], hist: HistogramConfig) -> DatasetStats {
    assert!(!records.is_empty(), "dataset_stats requires at least one record");
    let n = records.len();
    let correct = records.iter().filter(|r| r.correct).count();
    let turn_sum: u64 = records.iter().map(|r| u64::from(r.turns)).sum();
    let mut turn_histogram: BTreeMap<String, u64> = BTreeMap::new();
    for label in hist.labels() {
        turn_histogram.insert(label, 0);
    }
    for r in records {
        *turn_histogram.entry(hist.bucket_label(r.turns)).or_insert(0) += 1;
    }
    DatasetStats {
        n,
        accuracy_pct: 100.0 * correct as f64 / n as f64,
        avg_turns: turn_sum as f64 / n as f64,
        turn_histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::JudgeKind;

    fn report(well_formed: bool) -> FormatReport {
        if well_formed {
            FormatReport { well_formed: true, violations: vec![] }
        } else {
            FormatReport {
                well_formed: false,
                violations: vec![(0, crate::trajectory::ViolationCode::UnbalancedTags, "x".into())],
            }
        }
    }

    fn verdict(correct: bool) -> Verdict {
        Verdict { correct, judge_kind: JudgeKind::NormalizedMatch, raw_judge_text: None }
    }

    #[test]
    fn reward_truth_table() {
        let cases = [
            (false, false, 0.0),
            (false, true, 1.0),
            (true, false, 0.2),
            (true, true, 1.2),
        ];
        for (wf, ok, expected) in cases {
            let (rf, rc, r) = reward_components(&report(wf), &verdict(ok));
            assert_eq!(rf == 1, wf);
            assert_eq!(rc == 1, ok);
            assert_eq!(r, expected, "reward for ({wf},{ok})");
        }
    }

    #[test]
    fn advantages_zero_variance() {
        assert_eq!(group_advantages(&[0.7; 5]), vec![0.0; 5]);
        assert_eq!(group_advantages(&[1.2]), vec![0.0]);
    }

    #[test]
    fn advantages_two_point() {
        let advs = group_advantages(&[1.2, 0.2]);
        assert!((advs[0] - 1.0).abs() < 1e-5, "{advs:?}");
        assert!((advs[1] + 1.0).abs() < 1e-5, "{advs:?}");
    }

    #[test]
    fn advantages_eight_rollout_group() {
        // Expected values computed independently (mean 0.575, population
        // std 0.48412291827592707) before this implementation existed.
        let rewards = [1.2, 0.2, 0.2, 1.2, 0.2, 0.2, 1.2, 0.2];
        let advs = group_advantages(&rewards);
        let expected = [
            1.290991782074647,
            -0.7745950692447885,
            -0.7745950692447885,
            1.290991782074647,
            -0.7745950692447885,
            -0.7745950692447885,
            1.290991782074647,
            -0.7745950692447885,
        ];
        for (a, e) in advs.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn advantage_shift_invariance() {
        let rewards = [0.0, 0.2, 1.0, 1.2, 0.2];
        let shifted: Vec<f64> = rewards.iter().map(|r| r + 5.0).collect();
        let a = group_advantages(&rewards);
        let b = group_advantages(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn advantage_scale_preserves_ranking() {
        let rewards = [0.0, 1.2, 0.2, 1.0];
        let scaled: Vec<f64> = rewards.iter().map(|r| r * 7.0).collect();
        let a = group_advantages(&rewards);
        let b = group_advantages(&scaled);
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
            idx
        };
        assert_eq!(rank(&a), rank(&b));
    }

    #[test]
    fn default_schedule_matches_progressive_stages() {
        let s = Schedule::default();
        assert_eq!(s.stage(0).unwrap(), ScheduleStage { stage: 0, max_context_units: 65_536, max_turns: 50 });
        assert_eq!(s.stage(1).unwrap(), ScheduleStage { stage: 1, max_context_units: 98_304, max_turns: 75 });
        assert_eq!(s.stage(2).unwrap(), ScheduleStage { stage: 2, max_context_units: 131_072, max_turns: 100 });
        assert!(matches!(s.stage(3), Err(ScheduleError::UnknownStage(3, 3))));
    }

    #[test]
    fn non_increasing_schedule_rejected() {
        assert!(Schedule::new(vec![(1024, 10), (1024, 20)]).is_err());
        assert!(Schedule::new(vec![(1024, 10), (2048, 10)]).is_err());
        assert!(Schedule::new(vec![(2048, 20), (1024, 30)]).is_err());
        assert!(Schedule::new(vec![]).is_err());
        assert!(Schedule::new(vec![(1024, 10), (2048, 20)]).is_ok());
    }

    #[test]
    fn stats_evolved_qa_row() {
        // 1000 records: 671 correct, turn sum 9900 -> 67.1% / 9.9 exactly.
        let mut records = Vec::new();
        for i in 0..1000u32 {
            let turns = if i < 990 { 10 } else { 0 };
            records.push(TurnRecord { turns, correct: i < 671 });
        }
        assert_eq!(records.iter().map(|r| u64::from(r.turns)).sum::<u64>(), 9900);
        let stats = dataset_stats(&records, HistogramConfig::default());
        assert_eq!(stats.n, 1000);
        assert_eq!(stats.accuracy_pct, 67.1);
        assert_eq!(stats.avg_turns, 9.9);
        assert_eq!(stats.turn_histogram.values().sum::<u64>(), 1000);
        assert_eq!(stats.turn_histogram["10-11"], 990);
        assert_eq!(stats.turn_histogram["0-1"], 10);
    }

    #[test]
    fn stats_single_record() {
        let stats = dataset_stats(&[TurnRecord { turns: 8, correct: true }], HistogramConfig::default());
        assert_eq!(stats.accuracy_pct, 100.0);
        assert_eq!(stats.avg_turns, 8.0);
    }

    #[test]
    fn evolution_shifts_stats_in_expected_direction() {
        // Initial-style set (7.9 turns, 86.6%) vs evolved-style (9.9, 67.1):
        // evolution must raise turns and lower accuracy.
        let make = |n: u32, correct: u32, turn_sum: u64| {
            let mut v = Vec::new();
            for i in 0..n {
                let base = (turn_sum / u64::from(n)) as u32;
                let extra = if u64::from(i) < turn_sum % u64::from(n) { 1 } else { 0 };
                v.push(TurnRecord { turns: base + extra, correct: i < correct });
            }
            v
        };
        let initial = dataset_stats(&make(1000, 866, 7900), HistogramConfig::default());
        let evolved = dataset_stats(&make(1000, 671, 9900), HistogramConfig::default());
        assert_eq!(initial.accuracy_pct, 86.6);
        assert_eq!(initial.avg_turns, 7.9);
        assert!(evolved.accuracy_pct < initial.accuracy_pct);
        assert!(evolved.avg_turns > initial.avg_turns);
    }

    #[test]
    fn stats_permutation_invariant() {
        let mut records: Vec<TurnRecord> =
            (0..50).map(|i| TurnRecord { turns: i % 13, correct: i % 3 == 0 }).collect();
        let a = dataset_stats(&records, HistogramConfig::default());
        records.reverse();
        records.swap(3, 40);
        let b = dataset_stats(&records, HistogramConfig::default());
        assert_eq!(a, b);
    }

    #[test]
    fn histogram_overflow_bucket() {
        let cfg = HistogramConfig::default();
        assert_eq!(cfg.bucket_label(0), "0-1");
        assert_eq!(cfg.bucket_label(29), "28-29");
        assert_eq!(cfg.bucket_label(30), "30+");
        assert_eq!(cfg.bucket_label(95), "30+");
        assert_eq!(cfg.labels().len(), 16);
    }
}
