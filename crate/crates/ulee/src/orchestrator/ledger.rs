//! Environment-step accounting by purpose.
//!
//! The pre-training counter deliberately excludes goal-search steps (the
//! reported "+25%" overhead), single-episode-difficulty extras, and all
//! evaluation episodes, so paper-style step counts can be reconstructed.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepClass {
    Pretrain,
    GoalSearch,
    SedExtra,
    Eval,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLedger {
    pub pretrain: u64,
    pub goal_search: u64,
    pub sed_extra: u64,
    pub eval: u64,
}

impl StepLedger {
    pub fn add(&mut self, class: StepClass, steps: u64) {
        match class {
            StepClass::Pretrain => self.pretrain += steps,
            StepClass::GoalSearch => self.goal_search += steps,
            StepClass::SedExtra => self.sed_extra += steps,
            StepClass::Eval => self.eval += steps,
        }
    }

    pub fn total(&self) -> u64 {
        self.pretrain + self.goal_search + self.sed_extra + self.eval
    }

    /// Goal-search overhead relative to pre-training steps.
    pub fn goal_search_overhead(&self) -> f64 {
        self.goal_search as f64 / self.pretrain as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_totals_are_conserved() {
        let mut l = StepLedger::default();
        l.add(StepClass::Pretrain, 100);
        l.add(StepClass::GoalSearch, 25);
        l.add(StepClass::SedExtra, 5);
        l.add(StepClass::Eval, 7);
        assert_eq!(l.total(), 137);
        assert!((l.goal_search_overhead() - 0.25).abs() < 1e-12);
    }
}
