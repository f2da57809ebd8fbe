//! Night-time residence inference.
//!
//! A subscriber's residence distribution is the share of their night calls
//! placed through each tower. Summing these shares per tower gives the
//! expected number of residents served by that tower.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::NaiveTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CallRecord, TowerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidenceConfig {
    pub night_start: NaiveTime,
    pub night_end: NaiveTime,
}

impl Default for ResidenceConfig {
    fn default() -> Self {
        ResidenceConfig {
            night_start: NaiveTime::from_hms_opt(23, 0, 0).unwrap(),
            night_end: NaiveTime::from_hms_opt(8, 0, 0).unwrap(),
        }
    }
}

impl ResidenceConfig {
    pub fn validate(&self) -> Vec<String> {
        if self.night_start == self.night_end {
            vec!["residence.night_start must differ from residence.night_end".to_owned()]
        } else {
            Vec::new()
        }
    }

    /// Half-open window `[start, end)`, wrapping past midnight when `end < start`.
    pub fn is_night(&self, t: NaiveTime) -> bool {
        if self.night_start < self.night_end {
            t >= self.night_start && t < self.night_end
        } else {
            t >= self.night_start || t < self.night_end
        }
    }
}

pub fn night_filter(calls: &[CallRecord], cfg: &ResidenceConfig) -> Vec<CallRecord> {
    calls.iter().filter(|c| cfg.is_night(c.timestamp.time())).cloned().collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidenceTable {
    /// Per subscriber: tower -> probability of residing in that tower's cell.
    pub subscribers: BTreeMap<String, BTreeMap<TowerId, f64>>,
    /// Per tower: sum of subscriber probabilities.
    pub expected_residents: BTreeMap<TowerId, f64>,
}

impl ResidenceTable {
    pub fn total_residents(&self) -> f64 {
        self.expected_residents.values().sum()
    }

    pub fn residents_at(&self, tower: &TowerId) -> f64 {
        self.expected_residents.get(tower).copied().unwrap_or(0.0)
    }

    /// The tower with the largest probability for `subscriber` (ties to the smallest id).
    pub fn most_likely_tower(&self, subscriber: &str) -> Option<&TowerId> {
        let dist = self.subscribers.get(subscriber)?;
        let mut best: Option<(&TowerId, f64)> = None;
        for (t, &p) in dist {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((t, p));
            }
        }
        best.map(|(t, _)| t)
    }

    /// Writes `tower_id,expected_residents`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["tower_id", "expected_residents"])?;
        for (t, v) in &self.expected_residents {
            wr.write_record([t.0.as_str(), &v.to_string()])?;
        }
        wr.flush().map_err(|e| Error::io("<residence table>", e))?;
        Ok(())
    }

    /// Reads per-tower counts back. Subscriber distributions are not part of the file.
    pub fn read_tower_csv(path: &Path) -> Result<BTreeMap<TowerId, f64>> {
        let mut rd = csv::Reader::from_path(path)?;
        let mut out = BTreeMap::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let v: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                path: path.into(),
                line: i + 2,
                message: "expected_residents is not a number".into(),
            })?;
            out.insert(TowerId(rec[0].to_owned()), v);
        }
        Ok(out)
    }
}

/// Share of all subscribers that have at least one night call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub subscribers_total: usize,
    pub subscribers_with_night_calls: usize,
}

impl Coverage {
    pub fn compute(all_calls: &[CallRecord], table: &ResidenceTable) -> Self {
        let total: BTreeSet<&str> = all_calls.iter().map(|c| c.caller_id.as_str()).collect();
        Coverage {
            subscribers_total: total.len(),
            subscribers_with_night_calls: table.subscribers.len(),
        }
    }

    pub fn fraction(&self) -> f64 {
        if self.subscribers_total == 0 {
            0.0
        } else {
            self.subscribers_with_night_calls as f64 / self.subscribers_total as f64
        }
    }
}

pub fn residence_distribution(night_calls: &[CallRecord]) -> Result<ResidenceTable> {
    if night_calls.is_empty() {
        return Err(Error::Empty("no night-time calls to infer residence from".into()));
    }
    let mut counts: BTreeMap<&str, BTreeMap<&TowerId, u64>> = BTreeMap::new();
    for c in night_calls {
        *counts.entry(&c.caller_id).or_default().entry(&c.tower_id).or_default() += 1;
    }
    let mut table = ResidenceTable::default();
    for (sub, towers) in counts {
        let total: u64 = towers.values().sum();
        let dist: BTreeMap<TowerId, f64> = towers
            .into_iter()
            .map(|(t, n)| (t.clone(), n as f64 / total as f64))
            .collect();
        table.subscribers.insert(sub.to_owned(), dist);
    }
    // Fixed-order reduction: subscribers in id order.
    for dist in table.subscribers.values() {
        for (t, p) in dist {
            *table.expected_residents.entry(t.clone()).or_insert(0.0) += p;
        }
    }
    Ok(table)
}

/// Most frequently used tower per subscriber over the whole day.
/// Ties go to the lexicographically smallest tower id.
pub fn mode_location(calls: &[CallRecord]) -> BTreeMap<String, TowerId> {
    let mut counts: BTreeMap<&str, BTreeMap<&TowerId, u64>> = BTreeMap::new();
    for c in calls {
        *counts.entry(&c.caller_id).or_default().entry(&c.tower_id).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(sub, towers)| {
            let mut best: Option<(&TowerId, u64)> = None;
            for (t, n) in towers {
                if best.is_none_or(|(_, bn)| n > bn) {
                    best = Some((t, n));
                }
            }
            (sub.to_owned(), best.expect("non-empty").0.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::CallerGroup;
    use chrono::{NaiveDate, Timelike};
    use proptest::prelude::*;

    fn call(who: &str, tower: &str, h: u32, m: u32, s: u32) -> CallRecord {
        CallRecord {
            caller_id: who.into(),
            caller_group: CallerGroup::Refugee,
            timestamp: NaiveDate::from_ymd_opt(2017, 3, 1).unwrap().and_hms_opt(h, m, s).unwrap(),
            tower_id: TowerId::from(tower),
        }
    }

    #[test]
    fn window_boundaries() {
        let cfg = ResidenceConfig::default();
        let kept = night_filter(
            &[call("a", "T", 23, 0, 0), call("a", "T", 8, 0, 0), call("a", "T", 3, 30, 0), call("a", "T", 7, 59, 59), call("a", "T", 22, 59, 59)],
            &cfg,
        );
        let hours: Vec<_> = kept.iter().map(|c| c.timestamp.time().hour()).collect();
        assert_eq!(hours, vec![23, 3, 7]);
    }

    #[test]
    fn non_wrapping_window() {
        let cfg = ResidenceConfig {
            night_start: NaiveTime::from_hms_opt(1, 0, 0).unwrap(),
            night_end: NaiveTime::from_hms_opt(5, 0, 0).unwrap(),
        };
        assert!(cfg.is_night(NaiveTime::from_hms_opt(1, 0, 0).unwrap()));
        assert!(!cfg.is_night(NaiveTime::from_hms_opt(5, 0, 0).unwrap()));
        assert!(!cfg.is_night(NaiveTime::from_hms_opt(23, 0, 0).unwrap()));
    }

    #[test]
    fn frequency_ratio() {
        let t = residence_distribution(&[
            call("s", "A", 23, 0, 0),
            call("s", "A", 1, 0, 0),
            call("s", "A", 2, 0, 0),
            call("s", "B", 3, 0, 0),
        ])
        .unwrap();
        let d = &t.subscribers["s"];
        assert_eq!(d[&TowerId::from("A")], 0.75);
        assert_eq!(d[&TowerId::from("B")], 0.25);
    }

    #[test]
    fn single_tower_subscriber_counts_once() {
        let t = residence_distribution(&[call("s", "A", 23, 0, 0), call("s", "A", 1, 0, 0)]).unwrap();
        assert_eq!(t.residents_at(&TowerId::from("A")), 1.0);
    }

    #[test]
    fn split_subscribers_sum() {
        let t = residence_distribution(&[
            call("s1", "A", 23, 0, 0),
            call("s1", "B", 1, 0, 0),
            call("s2", "A", 23, 0, 0),
            call("s2", "B", 1, 0, 0),
        ])
        .unwrap();
        assert_eq!(t.residents_at(&TowerId::from("A")), 1.0);
        assert_eq!(t.residents_at(&TowerId::from("B")), 1.0);
    }

    #[test]
    fn empty_input_is_fatal() {
        assert!(residence_distribution(&[]).is_err());
    }

    #[test]
    fn coverage_counts_subscribers_without_night_calls() {
        let all = vec![call("a", "A", 23, 0, 0), call("b", "A", 12, 0, 0)];
        let table = residence_distribution(&night_filter(&all, &ResidenceConfig::default())).unwrap();
        let cov = Coverage::compute(&all, &table);
        assert_eq!(cov.subscribers_total, 2);
        assert_eq!(cov.subscribers_with_night_calls, 1);
        assert_eq!(cov.fraction(), 0.5);
    }

    #[test]
    fn mode_location_rules() {
        let mut calls = vec![];
        calls.extend((0..5).map(|_| call("x", "A", 12, 0, 0)));
        calls.extend((0..2).map(|_| call("x", "B", 12, 0, 0)));
        calls.extend((0..3).map(|_| call("y", "D", 12, 0, 0)));
        calls.extend((0..3).map(|_| call("y", "C", 12, 0, 0)));
        calls.push(call("z", "Q", 12, 0, 0));
        let m = mode_location(&calls);
        assert_eq!(m["x"], TowerId::from("A"));
        assert_eq!(m["y"], TowerId::from("C"));
        assert_eq!(m["z"], TowerId::from("Q"));
    }

    fn arb_calls() -> impl Strategy<Value = Vec<CallRecord>> {
        proptest::collection::vec((0u8..6, 0u8..5, 0u32..24), 1..80).prop_map(|v| {
            v.into_iter()
                .map(|(s, t, h)| call(&format!("s{s}"), &format!("T{t}"), h, 0, 0))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn table_invariants(calls in arb_calls()) {
            let table = residence_distribution(&calls).unwrap();
            for dist in table.subscribers.values() {
                let s: f64 = dist.values().sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
            }
            prop_assert!((table.total_residents() - table.subscribers.len() as f64).abs() <= 1e-6);
            for (t, v) in &table.expected_residents {
                let direct: f64 = table.subscribers.values().filter_map(|d| d.get(t)).sum();
                prop_assert!((direct - v).abs() <= 1e-12);
            }
        }

        #[test]
        fn adding_a_call_never_reduces_its_tower_share(calls in arb_calls(), s in 0u8..6, t in 0u8..5) {
            let sub = format!("s{s}");
            let tower = TowerId(format!("T{t}"));
            let before = residence_distribution(&calls).unwrap();
            let mut more = calls.clone();
            more.push(call(&sub, &tower.0, 2, 0, 0));
            let after = residence_distribution(&more).unwrap();
            let p0 = before.subscribers.get(&sub).and_then(|d| d.get(&tower)).copied().unwrap_or(0.0);
            let p1 = after.subscribers[&sub][&tower];
            prop_assert!(p1 >= p0);
        }

        #[test]
        fn mode_location_ignores_order(calls in arb_calls(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = calls.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(mode_location(&calls), mode_location(&shuffled));
        }
    }
}
