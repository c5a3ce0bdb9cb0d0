use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ClaimRecord;

/// Daily risk sets for one entry age. Vectors are indexed by `day - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeCohort {
    pub age: i32,
    /// At risk just before day t.
    pub at_risk: Vec<u64>,
    pub exits: Vec<u64>,
    pub censored: Vec<u64>,
}

impl AgeCohort {
    pub fn size(&self) -> u64 {
        self.at_risk.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }

    pub fn n(&self, day: u32) -> u64 {
        self.at_risk[day as usize - 1]
    }

    pub fn d(&self, day: u32) -> u64 {
        self.exits[day as usize - 1]
    }

    pub fn c(&self, day: u32) -> u64 {
        self.censored[day as usize - 1]
    }

    pub fn total_exits(&self) -> u64 {
        self.exits.iter().sum()
    }
}

/// Per-age exposure and exit counts on days `1..=horizon`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortData {
    pub horizon: u32,
    /// Contiguous from the smallest to the largest observed age; ages with no
    /// records are present and empty.
    pub cohorts: BTreeMap<i32, AgeCohort>,
    /// Records whose duration exceeded the horizon and were censored there.
    pub horizon_censored: u64,
}

impl CohortData {
    pub fn day_min(&self) -> u32 {
        1
    }

    pub fn age(&self, age: i32) -> Option<&AgeCohort> {
        self.cohorts.get(&age)
    }

    pub fn age_range(&self) -> Option<(i32, i32)> {
        let lo = *self.cohorts.keys().next()?;
        let hi = *self.cohorts.keys().next_back()?;
        Some((lo, hi))
    }

    pub fn empty_ages(&self) -> Vec<i32> {
        self.cohorts
            .values()
            .filter(|c| c.is_empty())
            .map(|c| c.age)
            .collect()
    }

    pub fn total_records(&self) -> u64 {
        self.cohorts.values().map(AgeCohort::size).sum()
    }
}

/// Aggregates records into daily risk sets.
///
/// Durations beyond `horizon` are censored at the horizon. Exits on a day
/// are removed from the risk set before censorings of that same day.
pub fn build_cohorts(records: &[ClaimRecord], horizon: u32) -> CohortData {
    assert!(horizon >= 1, "horizon must be at least one day");
    let h = horizon as usize;
    let mut cohorts: BTreeMap<i32, AgeCohort> = BTreeMap::new();
    let mut horizon_censored = 0;

    if let (Some(lo), Some(hi)) = (
        records.iter().map(|r| r.entry_age).min(),
        records.iter().map(|r| r.entry_age).max(),
    ) {
        for age in lo..=hi {
            cohorts.insert(
                age,
                AgeCohort {
                    age,
                    at_risk: vec![0; h],
                    exits: vec![0; h],
                    censored: vec![0; h],
                },
            );
        }
    }

    for r in records {
        let c = cohorts.get_mut(&r.entry_age).expect("age range covers all records");
        if r.duration_days > horizon {
            horizon_censored += 1;
            c.censored[h - 1] += 1;
        } else if r.censored {
            c.censored[r.duration_days as usize - 1] += 1;
        } else {
            c.exits[r.duration_days as usize - 1] += 1;
        }
    }

    for c in cohorts.values_mut() {
        let mut n: u64 = c.exits.iter().sum::<u64>() + c.censored.iter().sum::<u64>();
        for t in 0..h {
            c.at_risk[t] = n;
            n -= c.exits[t] + c.censored[t];
        }
    }

    CohortData {
        horizon,
        cohorts,
        horizon_censored,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(age: i32, d: u32, censored: bool) -> ClaimRecord {
        ClaimRecord {
            entry_age: age,
            duration_days: d,
            censored,
        }
    }

    #[test]
    fn hand_counted_risk_sets() {
        let data = build_cohorts(&[rec(30, 2, false), rec(30, 2, false), rec(30, 3, true)], 10);
        let c = data.age(30).unwrap();
        assert_eq!(&c.at_risk[..3], &[3, 3, 1]);
        assert_eq!(c.d(2), 2);
        assert_eq!(c.c(3), 1);
        assert_eq!(c.n(4), 0);
    }

    #[test]
    fn single_censored_record() {
        let data = build_cohorts(&[rec(40, 5, true)], 10);
        let c = data.age(40).unwrap();
        assert!(c.exits.iter().all(|&d| d == 0));
        assert_eq!(c.c(5), 1);
    }

    #[test]
    fn ties_are_aggregated() {
        let data = build_cohorts(&[rec(35, 7, false), rec(35, 7, false)], 10);
        assert_eq!(data.age(35).unwrap().d(7), 2);
    }

    #[test]
    fn long_durations_censored_at_horizon() {
        let data = build_cohorts(&[rec(35, 20, false), rec(35, 3, false)], 10);
        let c = data.age(35).unwrap();
        assert_eq!(data.horizon_censored, 1);
        assert_eq!(c.c(10), 1);
        assert_eq!(c.n(10), 1);
    }

    #[test]
    fn gaps_in_ages_are_flagged_empty() {
        let data = build_cohorts(&[rec(30, 2, false), rec(33, 2, false)], 5);
        assert_eq!(data.empty_ages(), vec![31, 32]);
        assert_eq!(data.age_range(), Some((30, 33)));
    }

    #[test]
    fn empty_input_gives_no_cohorts() {
        let data = build_cohorts(&[], 5);
        assert!(data.cohorts.is_empty());
    }
}
