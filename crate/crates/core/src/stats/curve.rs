//! Average-reward learning curves.

use serde::{Deserialize, Serialize};

use crate::agents::AgentTrace;
use crate::numeric::CompensatedSum;

/// Which epochs make up the time axis of a curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CurveAccounting {
    /// Every epoch, with iteration epochs contributing reward 0.
    #[default]
    AllEpochs,
    /// Only epochs that were played (verification and classical epochs).
    PlayedOnly,
}

impl CurveAccounting {
    fn reward_index(self, e: &crate::agents::RewardEvent) -> u64 {
        match self {
            CurveAccounting::AllEpochs => e.epoch,
            CurveAccounting::PlayedOnly => e.played_index,
        }
    }

    fn length(self, trace: &AgentTrace) -> u64 {
        match self {
            CurveAccounting::AllEpochs => trace.total_epochs,
            CurveAccounting::PlayedOnly => trace.played_epochs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub epoch: u64,
    pub mean_reward: f64,
    pub stderr: f64,
    pub n_alive: u64,
}

/// Streaming per-epoch reward moments across agents. Merge order is the
/// caller's responsibility; merging in a fixed order gives identical
/// results on every run.
#[derive(Clone, Debug)]
pub struct CurveAccumulator {
    horizon: u64,
    accounting: CurveAccounting,
    sum: Vec<CompensatedSum>,
    sum_sq: Vec<CompensatedSum>,
    ends: Vec<u64>,
}

impl CurveAccumulator {
    pub fn new(horizon: u64, accounting: CurveAccounting) -> Self {
        let h = horizon as usize;
        CurveAccumulator {
            horizon,
            accounting,
            sum: vec![CompensatedSum::new(); h],
            sum_sq: vec![CompensatedSum::new(); h],
            ends: vec![0; h + 1],
        }
    }

    pub fn add(&mut self, trace: &AgentTrace) {
        for e in &trace.rewards {
            let idx = self.accounting.reward_index(e);
            if idx >= 1 && idx <= self.horizon {
                self.sum[idx as usize - 1].add(e.reward);
                self.sum_sq[idx as usize - 1].add(e.reward * e.reward);
            }
        }
        let len = self.accounting.length(trace).min(self.horizon);
        self.ends[len as usize] += 1;
    }

    pub fn merge(&mut self, other: &CurveAccumulator) {
        assert_eq!(self.horizon, other.horizon, "curve horizons differ");
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            a.merge(b);
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            a.merge(b);
        }
        for (a, b) in self.ends.iter_mut().zip(&other.ends) {
            *a += b;
        }
    }

    pub fn finish(&self) -> Vec<CurvePoint> {
        let mut alive: u64 = self.ends.iter().sum();
        let mut out = Vec::with_capacity(self.horizon as usize);
        for e in 0..self.horizon as usize {
            // Agents whose run ended before epoch e + 1 drop out.
            alive -= self.ends[e];
            let n = alive as f64;
            let s = self.sum[e].value();
            let ss = self.sum_sq[e].value();
            let (mean, stderr) = if alive == 0 {
                (f64::NAN, f64::NAN)
            } else if alive == 1 {
                (s, 0.0)
            } else {
                let var = ((ss - s * s / n) / (n - 1.0)).max(0.0);
                (s / n, (var / n).sqrt())
            };
            out.push(CurvePoint {
                epoch: e as u64 + 1,
                mean_reward: mean,
                stderr,
                n_alive: alive,
            });
        }
        out
    }
}

pub fn average_reward_curve(traces: &[AgentTrace], horizon: u64, accounting: CurveAccounting) -> Vec<CurvePoint> {
    let mut acc = CurveAccumulator::new(horizon, accounting);
    for t in traces {
        acc.add(t);
    }
    acc.finish()
}

/// Per-agent average reward over epoch windows, then mean and standard
/// error across agents. Agents contribute to a bin only if their run
/// covers the whole bin.
#[derive(Clone, Debug)]
pub struct BinnedCurve {
    edges: Vec<u64>,
    accounting: CurveAccounting,
    sum: Vec<CompensatedSum>,
    sum_sq: Vec<CompensatedSum>,
    n: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinPoint {
    /// First and last epoch of the bin, inclusive.
    pub start: u64,
    pub end: u64,
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl BinnedCurve {
    /// Bins `[edges[i] + 1, edges[i + 1]]`; `edges` must increase.
    pub fn new(edges: Vec<u64>, accounting: CurveAccounting) -> Self {
        assert!(edges.windows(2).all(|w| w[0] < w[1]), "bin edges must increase");
        let bins = edges.len().saturating_sub(1);
        BinnedCurve {
            edges,
            accounting,
            sum: vec![CompensatedSum::new(); bins],
            sum_sq: vec![CompensatedSum::new(); bins],
            n: vec![0; bins],
        }
    }

    /// Equal-width bins covering `1..=horizon`.
    pub fn uniform(horizon: u64, width: u64, accounting: CurveAccounting) -> Self {
        let mut edges: Vec<u64> = (0..=horizon).step_by(width as usize).collect();
        if *edges.last().unwrap() != horizon {
            edges.push(horizon);
        }
        Self::new(edges, accounting)
    }

    pub fn add(&mut self, trace: &AgentTrace) {
        let len = self.accounting.length(trace);
        let mut totals = vec![0.0; self.n.len()];
        for e in &trace.rewards {
            let idx = self.accounting.reward_index(e);
            let b = self.edges.partition_point(|&edge| edge < idx);
            if b >= 1 && b <= totals.len() {
                totals[b - 1] += e.reward;
            }
        }
        for (b, total) in totals.into_iter().enumerate() {
            let (lo, hi) = (self.edges[b], self.edges[b + 1]);
            if len < hi {
                continue;
            }
            let avg = total / (hi - lo) as f64;
            self.sum[b].add(avg);
            self.sum_sq[b].add(avg * avg);
            self.n[b] += 1;
        }
    }

    pub fn merge(&mut self, other: &BinnedCurve) {
        assert_eq!(self.edges, other.edges, "bin edges differ");
        for b in 0..self.n.len() {
            self.sum[b].merge(&other.sum[b]);
            self.sum_sq[b].merge(&other.sum_sq[b]);
            self.n[b] += other.n[b];
        }
    }

    pub fn finish(&self) -> Vec<BinPoint> {
        (0..self.n.len())
            .map(|b| {
                let n = self.n[b] as f64;
                let s = self.sum[b].value();
                let ss = self.sum_sq[b].value();
                let var = if self.n[b] > 1 {
                    ((ss - s * s / n) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                BinPoint {
                    start: self.edges[b] + 1,
                    end: self.edges[b + 1],
                    mean: s / n,
                    stderr: (var / n).sqrt(),
                    n: self.n[b],
                }
            })
            .collect()
    }
}
