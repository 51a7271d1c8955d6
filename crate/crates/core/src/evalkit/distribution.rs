//! Comparison of two risk-level distributions.

use serde::{Deserialize, Serialize};

use crate::risk::RiskLevel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelCounts {
    #[serde(rename = "Low")]
    pub low: u64,
    #[serde(rename = "Medium")]
    pub medium: u64,
    #[serde(rename = "High")]
    pub high: u64,
}

impl LevelCounts {
    pub fn new(low: u64, medium: u64, high: u64) -> Self {
        LevelCounts { low, medium, high }
    }

    pub fn total(&self) -> u64 {
        self.low + self.medium + self.high
    }

    pub fn get(&self, level: RiskLevel) -> u64 {
        match level {
            RiskLevel::Low => self.low,
            RiskLevel::Medium => self.medium,
            RiskLevel::High => self.high,
        }
    }

    pub fn tally(levels: impl IntoIterator<Item = RiskLevel>) -> Self {
        let mut c = LevelCounts::default();
        for l in levels {
            match l {
                RiskLevel::Low => c.low += 1,
                RiskLevel::Medium => c.medium += 1,
                RiskLevel::High => c.high += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelDeltas {
    #[serde(rename = "Low")]
    pub low: i64,
    #[serde(rename = "Medium")]
    pub medium: i64,
    #[serde(rename = "High")]
    pub high: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionComparison {
    pub a: LevelCounts,
    pub b: LevelCounts,
    /// b − a per level.
    pub deltas: LevelDeltas,
    pub total_a: u64,
    pub total_b: u64,
    /// Totals differ, so the two sides are not directly comparable as
    /// proportions.
    pub mismatch: bool,
}

pub fn compare_distributions(a: LevelCounts, b: LevelCounts) -> DistributionComparison {
    let d = |x: u64, y: u64| y as i64 - x as i64;
    DistributionComparison {
        a,
        b,
        deltas: LevelDeltas {
            low: d(a.low, b.low),
            medium: d(a.medium, b.medium),
            high: d(a.high, b.high),
        },
        total_a: a.total(),
        total_b: b.total(),
        mismatch: a.total() != b.total(),
    }
}

impl DistributionComparison {
    pub fn render(&self) -> String {
        let header = ["Level", "A", "B", "Delta"].map(String::from).to_vec();
        let mut rows: Vec<Vec<String>> = RiskLevel::ALL
            .into_iter()
            .map(|l| {
                let (x, y) = (self.a.get(l), self.b.get(l));
                vec![
                    l.to_string(),
                    x.to_string(),
                    y.to_string(),
                    format!("{:+}", y as i64 - x as i64),
                ]
            })
            .collect();
        rows.push(vec![
            "Total".into(),
            self.total_a.to_string(),
            self.total_b.to_string(),
            format!("{:+}", self.total_b as i64 - self.total_a as i64),
        ]);
        let mut out = super::table::render(&header, &rows);
        if self.mismatch {
            out.push_str(&format!(
                "totals differ ({} vs {}); counts are not directly comparable\n",
                self.total_a, self.total_b
            ));
        }
        out
    }
}
