//! Run records and the aggregate tables built from them.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::coordinate::{RunResult, DEFAULT_MAX_ITERATIONS};
use crate::error::{Error, Result};

/// Exact header of the run records CSV.
pub const RECORDS_HEADER: &str =
    "strategy,n,n_sol,instance_seed,run_index,run_seed,converged,iterations,eta,rank,regret_pct";

/// Number of explicit rank buckets before the `>=10` bucket.
pub const EXPLICIT_RANKS: usize = 9;

/// Bins per decade of the convergence-time histogram.
pub const BINS_PER_DECADE: u32 = 10;

/// One row of the records CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: String,
    pub n: usize,
    pub n_sol: usize,
    pub instance_seed: u64,
    pub run_index: u64,
    pub run_seed: u64,
    pub converged: bool,
    pub iterations: u64,
    pub eta: f64,
    pub rank: Option<usize>,
    pub regret_pct: Option<f64>,
}

impl RunRecord {
    pub fn from_result(
        strategy: &str,
        n: usize,
        n_sol: usize,
        instance_seed: u64,
        run_index: u64,
        result: &RunResult,
    ) -> Self {
        RunRecord {
            strategy: strategy.to_string(),
            n,
            n_sol,
            instance_seed,
            run_index,
            run_seed: result.run_seed,
            converged: result.converged,
            iterations: result.iterations,
            eta: result.eta,
            rank: result.rank,
            regret_pct: result.regret_pct,
        }
    }

    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            strategy: self.strategy.clone(),
            n: self.n,
            n_sol: self.n_sol,
        }
    }

    fn sort_key(&self) -> (&str, usize, usize, u64, u64) {
        (&self.strategy, self.n, self.n_sol, self.instance_seed, self.run_index)
    }
}

/// Sorts records into the canonical order: strategy, n, n_sol, instance seed,
/// run index.
pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

pub fn write_records<W: io::Write>(writer: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(RECORDS_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records<R: io::Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != RECORDS_HEADER {
        return Err(Error::InvalidParams(format!(
            "unexpected records header: {}",
            header.join(",")
        )));
    }
    let records: Vec<RunRecord> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    for rec in &records {
        if !rec.converged && (rec.rank.is_some() || rec.regret_pct.is_some()) {
            return Err(Error::InvalidParams(format!(
                "run {} of {} on seed {} did not converge but carries a rank",
                rec.run_index, rec.strategy, rec.instance_seed
            )));
        }
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub strategy: String,
    pub n: usize,
    pub n_sol: usize,
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} n={} n_sol={}", self.strategy, self.n, self.n_sol)
    }
}

/// How the top-3 rate averages over runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopRateMode {
    /// Fraction over all runs in the group.
    #[default]
    Pooled,
    /// Per-instance fractions, averaged over instances.
    PerInstance,
}

/// Fractions of runs per final rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankHistogram {
    /// `ranks[r - 1]` for ranks 1 through 9.
    pub ranks: [f64; EXPLICIT_RANKS],
    pub ge10: f64,
    /// Converged runs on instances whose solutions were not enumerated.
    pub unranked: f64,
    pub fail: f64,
}

/// Nearest-rank summary of a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Nearest-rank quantile of sorted data: the value at position
/// `ceil(p * len)` (1-based), clamped to the first element.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = (p * sorted.len() as f64).ceil() as usize;
    sorted[pos.clamp(1, sorted.len()) - 1]
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Quantiles {
            count: sorted.len(),
            min: sorted[0],
            q1: nearest_rank(&sorted, 0.25),
            median: nearest_rank(&sorted, 0.5),
            q3: nearest_rank(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Convergence-time histogram with a bin for zero iterations followed by
/// logarithmic bins, `BINS_PER_DECADE` per decade. Bin `b` covers
/// `[10^(b/10), 10^((b+1)/10))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeHistogram {
    pub zero: u64,
    pub lower_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub failures: u64,
}

impl TimeHistogram {
    pub fn new(max_iterations: u64) -> Self {
        let decades = (max_iterations.max(10) as f64).log10().ceil() as u32;
        let bins = (decades * BINS_PER_DECADE) as usize;
        TimeHistogram {
            zero: 0,
            lower_edges: (0..bins)
                .map(|b| 10f64.powf(b as f64 / BINS_PER_DECADE as f64))
                .collect(),
            counts: vec![0; bins],
            failures: 0,
        }
    }

    pub fn bin_of(&self, iterations: u64) -> Option<usize> {
        if iterations == 0 {
            return None;
        }
        // the floating log can land a hair below an exact power of ten
        let mut b = ((iterations as f64).log10() * BINS_PER_DECADE as f64).floor() as usize;
        while b + 1 < self.lower_edges.len() && self.lower_edges[b + 1] <= iterations as f64 {
            b += 1;
        }
        while b > 0 && self.lower_edges[b.min(self.lower_edges.len() - 1)] > iterations as f64 {
            b -= 1;
        }
        Some(b.min(self.counts.len() - 1))
    }

    pub fn add(&mut self, iterations: u64) {
        match self.bin_of(iterations) {
            None => self.zero += 1,
            Some(b) => self.counts[b] += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub key: GroupKey,
    pub runs: usize,
    pub instances: usize,
    pub ranks: RankHistogram,
    pub top3_rate: f64,
    pub failure_rate: f64,
    /// Regret over converged runs ranked 2 or 3.
    pub regret: Option<Quantiles>,
    /// Median over all runs; failed runs count at the iteration bound.
    pub median_iterations: f64,
    pub convergence_times: TimeHistogram,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregateOptions {
    pub top_rate: TopRateMode,
    pub max_iterations: u64,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        AggregateOptions {
            top_rate: TopRateMode::Pooled,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Groups records by (strategy, n, n_sol) and summarises each group.
/// Reports come out sorted by group key.
pub fn aggregate(records: &[RunRecord], options: &AggregateOptions) -> Vec<AggregateReport> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.group_key()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(key, members)| summarise(key, &members, options))
        .collect()
}

/// Summary of one requested group.
pub fn aggregate_group(records: &[RunRecord], key: &GroupKey, options: &AggregateOptions) -> Result<AggregateReport> {
    let members: Vec<&RunRecord> = records.iter().filter(|r| &r.group_key() == key).collect();
    if members.is_empty() {
        return Err(Error::EmptyGroup(key.to_string()));
    }
    Ok(summarise(key.clone(), &members, options))
}

fn summarise(key: GroupKey, members: &[&RunRecord], options: &AggregateOptions) -> AggregateReport {
    let runs = members.len();
    let total = runs as f64;
    let mut rank_counts = [0usize; EXPLICIT_RANKS];
    let (mut ge10, mut unranked, mut fail) = (0usize, 0usize, 0usize);
    let mut time_hist = TimeHistogram::new(options.max_iterations);
    let mut regrets = Vec::new();
    let mut iterations: Vec<f64> = Vec::with_capacity(runs);
    // instance seed -> (runs, top-3 runs)
    let mut per_instance: BTreeMap<u64, (usize, usize)> = BTreeMap::new();

    for r in members {
        iterations.push(r.iterations as f64);
        let entry = per_instance.entry(r.instance_seed).or_default();
        entry.0 += 1;
        if !r.converged {
            fail += 1;
            time_hist.failures += 1;
            continue;
        }
        time_hist.add(r.iterations);
        match r.rank {
            None => unranked += 1,
            Some(rank) if rank <= EXPLICIT_RANKS => rank_counts[rank - 1] += 1,
            Some(_) => ge10 += 1,
        }
        if let Some(rank) = r.rank {
            if rank <= 3 {
                entry.1 += 1;
            }
            if rank == 2 || rank == 3 {
                if let Some(regret) = r.regret_pct {
                    regrets.push(regret);
                }
            }
        }
    }

    let top3_rate = match options.top_rate {
        TopRateMode::Pooled => {
            per_instance.values().map(|&(_, top)| top).sum::<usize>() as f64 / total
        }
        TopRateMode::PerInstance => {
            per_instance
                .values()
                .map(|&(n, top)| top as f64 / n as f64)
                .sum::<f64>()
                / per_instance.len() as f64
        }
    };

    let mut ranks = [0.0; EXPLICIT_RANKS];
    for (slot, &count) in ranks.iter_mut().zip(&rank_counts) {
        *slot = count as f64 / total;
    }
    iterations.sort_by(f64::total_cmp);

    AggregateReport {
        key,
        runs,
        instances: per_instance.len(),
        ranks: RankHistogram {
            ranks,
            ge10: ge10 as f64 / total,
            unranked: unranked as f64 / total,
            fail: fail as f64 / total,
        },
        top3_rate,
        failure_rate: fail as f64 / total,
        regret: Quantiles::of(&regrets),
        median_iterations: nearest_rank(&iterations, 0.5),
        convergence_times: time_hist,
    }
}

/// Flat one-row-per-group form of an [`AggregateReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
struct ReportRow<'a> {
    strategy: &'a str,
    n: usize,
    n_sol: usize,
    runs: usize,
    instances: usize,
    rank_1: f64,
    rank_2: f64,
    rank_3: f64,
    rank_4: f64,
    rank_5: f64,
    rank_6: f64,
    rank_7: f64,
    rank_8: f64,
    rank_9: f64,
    rank_ge10: f64,
    unranked: f64,
    fail: f64,
    top3_rate: f64,
    regret_count: usize,
    regret_min: Option<f64>,
    regret_q1: Option<f64>,
    regret_median: Option<f64>,
    regret_q3: Option<f64>,
    regret_max: Option<f64>,
    median_iterations: f64,
}

pub fn write_report_csv<W: io::Write>(writer: W, reports: &[AggregateReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for rep in reports {
        let r = &rep.ranks.ranks;
        let q = rep.regret.as_ref();
        w.serialize(ReportRow {
            strategy: &rep.key.strategy,
            n: rep.key.n,
            n_sol: rep.key.n_sol,
            runs: rep.runs,
            instances: rep.instances,
            rank_1: r[0],
            rank_2: r[1],
            rank_3: r[2],
            rank_4: r[3],
            rank_5: r[4],
            rank_6: r[5],
            rank_7: r[6],
            rank_8: r[7],
            rank_9: r[8],
            rank_ge10: rep.ranks.ge10,
            unranked: rep.ranks.unranked,
            fail: rep.ranks.fail,
            top3_rate: rep.top3_rate,
            regret_count: q.map_or(0, |q| q.count),
            regret_min: q.map(|q| q.min),
            regret_q1: q.map(|q| q.q1),
            regret_median: q.map(|q| q.median),
            regret_q3: q.map(|q| q.q3),
            regret_max: q.map(|q| q.max),
            median_iterations: rep.median_iterations,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn report_json(reports: &[AggregateReport]) -> String {
    serde_json::to_string_pretty(reports).expect("report serialisation cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(strategy: &str, seed: u64, run: u64, rank: Option<usize>, regret: Option<f64>, iterations: u64) -> RunRecord {
        RunRecord {
            strategy: strategy.into(),
            n: 10,
            n_sol: 3,
            instance_seed: seed,
            run_index: run,
            run_seed: run,
            converged: rank.is_some(),
            iterations,
            eta: 10.0,
            rank,
            regret_pct: regret,
        }
    }

    #[test]
    fn all_optimal() {
        let records: Vec<_> = (0..5).map(|i| rec("kall", 0, i, Some(1), Some(0.0), 10)).collect();
        let rep = &aggregate(&records, &AggregateOptions::default())[0];
        assert_eq!(rep.ranks.ranks[0], 1.0);
        assert_eq!(rep.top3_rate, 1.0);
        assert!(rep.regret.is_none());
    }

    #[test]
    fn one_failure_in_four() {
        let mut records: Vec<_> = (0..3).map(|i| rec("k1", 0, i, Some(2), Some(5.0), 10)).collect();
        records.push(rec("k1", 0, 3, None, None, 100_000));
        let rep = &aggregate(&records, &AggregateOptions::default())[0];
        assert_eq!(rep.ranks.fail, 0.25);
        assert_eq!(rep.top3_rate, 0.75);
        let total: f64 = rep.ranks.ranks.iter().sum::<f64>() + rep.ranks.ge10 + rep.ranks.unranked + rep.ranks.fail;
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(rep.convergence_times.failures, 1);
    }

    #[test]
    fn regret_median_over_ranks_two_and_three() {
        let records = vec![
            rec("kada", 0, 0, Some(1), Some(0.0), 5),
            rec("kada", 0, 1, Some(2), Some(5.0), 5),
            rec("kada", 0, 2, Some(3), Some(10.0), 5),
            rec("kada", 0, 3, Some(2), Some(15.0), 5),
            rec("kada", 0, 4, Some(4), Some(40.0), 5),
        ];
        let q = aggregate(&records, &AggregateOptions::default())[0].regret.clone().unwrap();
        assert_eq!(q.count, 3);
        assert_eq!(q.median, 10.0);
        assert_eq!(q.min, 5.0);
        assert_eq!(q.max, 15.0);
    }

    #[test]
    fn ranks_ten_and_above_share_a_bucket() {
        let records = vec![
            rec("dsa", 0, 0, Some(9), Some(1.0), 5),
            rec("dsa", 0, 1, Some(10), Some(1.0), 5),
            rec("dsa", 0, 2, Some(42), Some(1.0), 5),
            rec("dsa", 0, 3, Some(1), Some(0.0), 5),
        ];
        let rep = &aggregate(&records, &AggregateOptions::default())[0];
        assert_eq!(rep.ranks.ranks[8], 0.25);
        assert_eq!(rep.ranks.ge10, 0.5);
    }

    #[test]
    fn per_instance_top_rate() {
        // instance 0: 1/1 top-3; instance 1: 1/3 top-3
        let records = vec![
            rec("k1", 0, 0, Some(1), Some(0.0), 5),
            rec("k1", 1, 0, Some(1), Some(0.0), 5),
            rec("k1", 1, 1, Some(5), Some(9.0), 5),
            rec("k1", 1, 2, None, None, 100_000),
        ];
        let pooled = &aggregate(&records, &AggregateOptions::default())[0];
        assert_eq!(pooled.top3_rate, 0.5);
        let opts = AggregateOptions {
            top_rate: TopRateMode::PerInstance,
            ..Default::default()
        };
        let per = &aggregate(&records, &opts)[0];
        assert!((per.top3_rate - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn requested_empty_group() {
        let records = vec![rec("k1", 0, 0, Some(1), Some(0.0), 5)];
        let key = GroupKey {
            strategy: "kall".into(),
            n: 10,
            n_sol: 3,
        };
        assert!(matches!(
            aggregate_group(&records, &key, &AggregateOptions::default()),
            Err(Error::EmptyGroup(_))
        ));
    }

    #[test]
    fn nearest_rank_quantiles() {
        let data = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(nearest_rank(&data, 0.5), 2.0);
        assert_eq!(nearest_rank(&data, 0.25), 1.0);
        assert_eq!(nearest_rank(&data, 0.75), 3.0);
        assert_eq!(nearest_rank(&data, 0.0), 1.0);
        assert_eq!(nearest_rank(&data, 1.0), 4.0);
    }

    #[test]
    fn time_bins() {
        let h = TimeHistogram::new(100_000);
        assert_eq!(h.counts.len(), 50);
        assert_eq!(h.bin_of(0), None);
        assert_eq!(h.bin_of(1), Some(0));
        assert_eq!(h.bin_of(10), Some(10));
        assert_eq!(h.bin_of(1000), Some(30));
        assert_eq!(h.bin_of(999), Some(29));
        assert_eq!(h.bin_of(100_000), Some(49));
        for x in [1u64, 7, 13, 99, 100, 101, 5000, 99_999] {
            let b = h.bin_of(x).unwrap();
            assert!(h.lower_edges[b] <= x as f64);
            if b + 1 < h.lower_edges.len() {
                assert!((x as f64) < h.lower_edges[b + 1]);
            }
        }
    }

    #[test]
    fn csv_round_trip_keeps_empty_fields() {
        let records = vec![
            rec("k1", 0, 0, Some(2), Some(12.5), 17),
            rec("k1", 0, 1, None, None, 100_000),
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(RECORDS_HEADER));
        assert!(text.contains("k1,10,3,0,1,1,false,100000,10.0,,\n"));
        assert_eq!(read_records(&buf[..]).unwrap(), records);
    }

    #[test]
    fn rejects_ranked_failures() {
        let mut bad = rec("k1", 0, 0, Some(2), Some(1.0), 5);
        bad.converged = false;
        let mut buf = Vec::new();
        write_records(&mut buf, &[bad]).unwrap();
        assert!(read_records(&buf[..]).is_err());
    }
}
