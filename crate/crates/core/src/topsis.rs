//! TOPSIS ranking of candidates over weighted criteria.
//!
//! Columns are vector-normalized (`x / sqrt(Σ x²)`), weighted, and each row
//! is scored by its closeness `d⁻ / (d⁺ + d⁻)` to the positive ideal.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::criteria::{CriteriaVector, Criterion, Direction};
use crate::error::{Error, Result};
use crate::ingest::ColumnRef;

/// Criterion weights in [`Criterion::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights([f64; 7]);

impl Default for Weights {
    /// 0.5 for intersection and 0.2 for every other criterion.
    fn default() -> Self {
        Self([0.2, 0.5, 0.2, 0.2, 0.2, 0.2, 0.2])
    }
}

impl Weights {
    pub fn new(values: [f64; 7]) -> Result<Self> {
        for (c, w) in Criterion::ALL.iter().zip(values) {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("weight for {c} must be a non-negative number, got {w}")));
            }
        }
        Ok(Self(values))
    }

    /// Single-criterion ablation: `criterion` at 1, everything else 0.
    pub fn only(criterion: Criterion) -> Self {
        let mut w = [0.0; 7];
        w[criterion.index()] = 1.0;
        Self(w)
    }

    /// Leave-one-out ablation: `criterion` set to 0.
    pub fn without(mut self, criterion: Criterion) -> Self {
        self.0[criterion.index()] = 0.0;
        self
    }

    pub fn get(&self, criterion: Criterion) -> f64 {
        self.0[criterion.index()]
    }

    pub fn as_array(&self) -> [f64; 7] {
        self.0
    }
}

/// User-facing weight settings: per-criterion overrides plus ablation switches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    pub weights: BTreeMap<Criterion, f64>,
    pub only: Option<Criterion>,
    pub drop: Option<Criterion>,
}

pub fn weights_from_config(config: &WeightConfig) -> Result<Weights> {
    if let Some((c, w)) = config.weights.iter().find(|(_, w)| **w < 0.0 || !w.is_finite()) {
        return Err(Error::Config(format!("weight for {c} must be non-negative, got {w}")));
    }
    if let Some(only) = config.only {
        return Ok(Weights::only(only));
    }
    let mut values = Weights::default().as_array();
    for (c, &w) in &config.weights {
        values[c.index()] = w;
    }
    let weights = Weights::new(values)?;
    Ok(match config.drop {
        Some(c) => weights.without(c),
        None => weights,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMatrix {
    pub alternatives: Vec<ColumnRef>,
    /// One row per alternative, one entry per criterion column.
    pub values: Vec<Vec<f64>>,
    pub directions: Vec<Direction>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRow {
    /// Position of the alternative in the input matrix.
    pub index: usize,
    pub candidate: ColumnRef,
    pub closeness: f64,
    /// 1-based.
    pub rank: usize,
    /// The alternative's weighted, normalized criterion values.
    pub weighted: Vec<f64>,
}

impl DecisionMatrix {
    /// Builds the seven-criterion matrix. Inapplicable Benefit entries are 0;
    /// inapplicable Cost entries take the column maximum so missing data is
    /// never rewarded. With `merge_join_sizes`, join and reverse join size
    /// become one Cost column (their sum) weighted by the join-size weight.
    pub fn from_criteria(rows: &[CriteriaVector], weights: &Weights, merge_join_sizes: bool) -> Self {
        let mut values: Vec<Vec<f64>> = rows.iter().map(|r| r.values().to_vec()).collect();
        for c in Criterion::ALL {
            let i = c.index();
            let fill = match c.direction() {
                Direction::Benefit => 0.0,
                Direction::Cost => rows
                    .iter()
                    .zip(&values)
                    .filter(|(r, _)| r.is_applicable(c))
                    .map(|(_, v)| v[i])
                    .fold(0.0, f64::max),
            };
            for (row, v) in rows.iter().zip(values.iter_mut()) {
                if !row.is_applicable(c) {
                    v[i] = fill;
                }
            }
        }

        let mut directions: Vec<Direction> = Criterion::ALL.iter().map(|c| c.direction()).collect();
        let mut weights = weights.as_array().to_vec();
        if merge_join_sizes {
            let (join, reverse) = (Criterion::JoinSize.index(), Criterion::ReverseJoinSize.index());
            for v in &mut values {
                v[join] += v[reverse];
                v.remove(reverse);
            }
            directions.remove(reverse);
            weights.remove(reverse);
        }
        Self {
            alternatives: rows.iter().map(|r| r.candidate.clone()).collect(),
            values,
            directions,
            weights,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.alternatives.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let n = self.directions.len();
        if self.weights.len() != n || self.values.len() != self.alternatives.len() {
            return Err(Error::InvalidScore("matrix shape mismatch".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("weights must be non-negative numbers".into()));
        }
        if self.weights.iter().all(|&w| w == 0.0) {
            return Err(Error::Config("at least one weight must be positive".into()));
        }
        for (alt, row) in self.alternatives.iter().zip(&self.values) {
            if row.len() != n {
                return Err(Error::InvalidScore(format!("{alt}: expected {n} values, got {}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidScore(format!("{alt}: non-finite value {v}")));
            }
        }
        Ok(())
    }

    /// Ranks alternatives by descending closeness, ties by ascending ref.
    pub fn rank(&self) -> Result<Vec<RankedRow>> {
        self.validate()?;
        let n_criteria = self.directions.len();

        let norms: Vec<f64> = (0..n_criteria)
            .map(|j| self.values.iter().map(|row| row[j] * row[j]).sum::<f64>().sqrt())
            .collect();
        let weighted: Vec<Vec<f64>> = self
            .values
            .iter()
            .map(|row| {
                (0..n_criteria)
                    .map(|j| if norms[j] == 0.0 { 0.0 } else { row[j] / norms[j] * self.weights[j] })
                    .collect()
            })
            .collect();

        let mut best = vec![0.0; n_criteria];
        let mut worst = vec![0.0; n_criteria];
        for j in 0..n_criteria {
            let column = weighted.iter().map(|row| row[j]);
            let max = column.clone().fold(f64::NEG_INFINITY, f64::max);
            let min = column.fold(f64::INFINITY, f64::min);
            (best[j], worst[j]) = match self.directions[j] {
                Direction::Benefit => (max, min),
                Direction::Cost => (min, max),
            };
        }

        let mut ranked: Vec<RankedRow> = weighted
            .into_iter()
            .enumerate()
            .map(|(index, row)| {
                let d_best = euclidean(&row, &best);
                let d_worst = euclidean(&row, &worst);
                let total = d_best + d_worst;
                let closeness = if total == 0.0 { 1.0 } else { d_worst / total };
                RankedRow {
                    index,
                    candidate: self.alternatives[index].clone(),
                    closeness,
                    rank: 0,
                    weighted: row,
                }
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.closeness
                .total_cmp(&a.closeness)
                .then_with(|| a.candidate.cmp(&b.candidate))
        });
        for (i, row) in ranked.iter_mut().enumerate() {
            row.rank = i + 1;
        }
        Ok(ranked)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
