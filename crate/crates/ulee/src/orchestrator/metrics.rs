//! JSONL metrics stream. Records are plain serializable structs with no
//! timestamps or host data, so deterministic runs produce byte-identical
//! streams.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curriculum::PredictorTrainStats;
use crate::error::Result;
use crate::orchestrator::ledger::StepLedger;
use crate::rl::PpoStats;

/// Collects JSONL lines in memory; optionally flushed to a file.
#[derive(Debug, Default)]
pub struct MetricsWriter {
    lines: Vec<String>,
}

impl MetricsWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push<T: Serialize>(&mut self, record: &T) {
        self.lines
            .push(serde_json::to_string(record).expect("metrics record serializes"));
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn to_string(&self) -> String {
        let mut s = self.lines.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }

    pub fn flush_to(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_string().as_bytes())?;
        Ok(())
    }
}

/// Per-batch curriculum statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurriculumStats {
    /// Fraction of environments whose candidate band was empty (uniform
    /// fallback).
    pub frac_fallback: f64,
    /// Mean predicted difficulty of the goals actually sampled.
    pub mean_sampled_difficulty: f64,
    /// Mean empirical difficulty pushed to the buffer this batch.
    pub mean_empirical_difficulty: f64,
    pub buffer_len: usize,
}

/// One line per pre-training batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch: usize,
    pub ledger: StepLedger,
    pub curriculum: CurriculumStats,
    pub predictor: PredictorTrainStats,
    /// Mean over this batch's policy updates.
    pub policy: PpoStats,
    /// Stats of the goal-search updates, when the variant trains one.
    pub goal_search: Option<PpoStats>,
    /// Mean per-episode success rate over the batch's lifetimes.
    pub mean_success_rate: f64,
}

/// Averages a slice of PPO stats (weighted by sample counts).
pub fn mean_ppo_stats(stats: &[PpoStats]) -> PpoStats {
    let total: usize = stats.iter().map(|s| s.n_samples).sum();
    let w = |f: fn(&PpoStats) -> f64| -> f64 {
        stats
            .iter()
            .map(|s| f(s) * s.n_samples as f64)
            .sum::<f64>()
            / total.max(1) as f64
    };
    PpoStats {
        policy_loss: w(|s| s.policy_loss),
        value_loss: w(|s| s.value_loss),
        entropy: w(|s| s.entropy),
        clip_fraction: w(|s| s.clip_fraction),
        grad_norm: w(|s| s.grad_norm),
        n_samples: total,
        n_minibatches: stats.iter().map(|s| s.n_minibatches).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_emits_one_line_per_record() {
        let mut w = MetricsWriter::new();
        w.push(&serde_json::json!({"a": 1}));
        w.push(&serde_json::json!({"b": 2}));
        assert_eq!(w.lines().len(), 2);
        assert_eq!(w.to_string(), "{\"a\":1}\n{\"b\":2}\n");
    }

    #[test]
    fn mean_ppo_stats_weights_by_samples() {
        let a = PpoStats {
            policy_loss: 1.0,
            value_loss: 2.0,
            entropy: 0.5,
            clip_fraction: 0.1,
            grad_norm: 1.0,
            n_samples: 10,
            n_minibatches: 1,
        };
        let mut b = a.clone();
        b.policy_loss = 4.0;
        b.n_samples = 30;
        let m = mean_ppo_stats(&[a, b]);
        assert!((m.policy_loss - 3.25).abs() < 1e-12);
        assert_eq!(m.n_samples, 40);
    }
}
