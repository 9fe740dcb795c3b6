//! Weighted log-rank statistics computed from observed trial data.
//!
//! A trial dataset holds per-subject entry times, latent event and censoring
//! times on the follow-up scale, and arm labels. Freezing it at a calendar
//! time produces the observed snapshot; statistics walk the distinct event
//! times with left-continuous at-risk counts and the pooled Kaplan-Meier
//! curve supplying the Fleming-Harrington weights.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::weight::WeightSpec;

/// One randomized subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subject {
    /// Calendar entry time, in `[0, R]`.
    pub entry: f64,
    /// Latent event time on the follow-up scale; infinity when the subject
    /// never has an event within any horizon.
    pub event_time: f64,
    /// Latent dropout time on the follow-up scale; infinity when the subject
    /// is only administratively censored.
    pub censor_time: f64,
    /// 0 control, 1 treatment.
    pub arm: u8,
}

/// Per-subject trial records supporting counting-process evaluation.
#[derive(Debug, Clone, Default)]
pub struct TrialData {
    pub subjects: Vec<Subject>,
}

impl TrialData {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Calendar time of the `count`-th observed event, if that many events
    /// ever occur.
    pub fn calendar_time_of_event(&self, count: usize) -> Option<f64> {
        let mut times: Vec<f64> = self
            .subjects
            .iter()
            .filter(|s| s.event_time <= s.censor_time && s.event_time.is_finite())
            .map(|s| s.entry + s.event_time)
            .collect();
        if times.len() < count || count == 0 {
            return None;
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(times[count - 1])
    }
}

/// One observed row of a frozen dataset.
#[derive(Debug, Clone, Copy)]
struct Observation {
    y: f64,
    event: bool,
    arm: u8,
    entry: f64,
}

/// Deterministic snapshot of a trial at one analysis time, sorted by
/// observed time.
#[derive(Debug, Clone)]
pub struct FrozenView {
    analysis_time: f64,
    rows: Vec<Observation>,
    events: usize,
}

/// Freezes the dataset at calendar time `t`: subjects not yet enrolled are
/// absent, everyone else contributes `min(event, dropout, t - entry)` of
/// follow-up.
pub fn freeze(data: &TrialData, t: f64) -> FrozenView {
    let mut rows: Vec<Observation> = data
        .subjects
        .iter()
        .filter(|s| s.entry <= t)
        .map(|s| {
            let follow = t - s.entry;
            let y = s.event_time.min(s.censor_time).min(follow);
            let event = s.event_time <= s.censor_time.min(follow);
            Observation { y, event, arm: s.arm, entry: s.entry }
        })
        .collect();
    rows.sort_by(|a, b| a.y.partial_cmp(&b.y).unwrap());
    let events = rows.iter().filter(|r| r.event).count();
    FrozenView { analysis_time: t, rows, events }
}

impl FrozenView {
    pub fn analysis_time(&self) -> f64 {
        self.analysis_time
    }

    pub fn subjects(&self) -> usize {
        self.rows.len()
    }

    pub fn events(&self) -> usize {
        self.events
    }

    /// Left-continuous pooled Kaplan-Meier estimate at `s`, i.e. the value
    /// just before `s`.
    pub fn pooled_km(&self, s: f64) -> f64 {
        let mut km = 1.0;
        let mut i = 0;
        let n = self.rows.len();
        while i < n && self.rows[i].y < s {
            let y = self.rows[i].y;
            let at_risk = (n - i) as f64;
            let mut d = 0.0;
            while i < n && self.rows[i].y == y {
                if self.rows[i].event {
                    d += 1.0;
                }
                i += 1;
            }
            if d > 0.0 {
                km *= 1.0 - d / at_risk;
            }
        }
        km
    }

    /// Walks the distinct event times once, feeding numerator and product
    /// accumulators for a set of weights.
    fn sweep(&self, mut visit: impl FnMut(&EventSlice)) {
        let n = self.rows.len();
        let total_treated = self.rows.iter().filter(|r| r.arm == 1).count() as f64;
        let mut treated_before = 0.0;
        let mut km = 1.0;
        let mut i = 0;
        while i < n {
            let y = self.rows[i].y;
            let at_risk = (n - i) as f64;
            let treated_at_risk = total_treated - treated_before;
            let mut d = 0.0;
            let mut d_treated = 0.0;
            while i < n && self.rows[i].y == y {
                if self.rows[i].event {
                    d += 1.0;
                    if self.rows[i].arm == 1 {
                        d_treated += 1.0;
                    }
                }
                if self.rows[i].arm == 1 {
                    treated_before += 1.0;
                }
                i += 1;
            }
            if d > 0.0 {
                visit(&EventSlice {
                    km_before: km,
                    at_risk,
                    treated_at_risk,
                    events: d,
                    treated_events: d_treated,
                });
                km *= 1.0 - d / at_risk;
            }
        }
    }
}

struct EventSlice {
    km_before: f64,
    at_risk: f64,
    treated_at_risk: f64,
    events: f64,
    treated_events: f64,
}

/// Weighted log-rank statistic at a freeze: numerator, variance estimate and
/// the standardized value (negative when the treatment does better).
#[derive(Debug, Clone, Copy)]
pub struct WlrtStatistic {
    pub numerator: f64,
    pub variance: f64,
    pub standardized: f64,
}

/// Computes a single weighted log-rank statistic from a frozen view.
pub fn wlrt_statistic(view: &FrozenView, weight: WeightSpec) -> Result<WlrtStatistic> {
    let stats = joint_statistics(view, &[weight])?;
    Ok(stats.statistic(0))
}

/// Covariance estimate for two weights via the summed-exponent rule: the
/// variance sum evaluated with the product weight.
pub fn estimate_covariance(view: &FrozenView, w1: WeightSpec, w2: WeightSpec) -> Result<f64> {
    if view.events == 0 {
        return Err(Error::Degenerate("no events observed; nothing to estimate".into()));
    }
    let prod = w1.product(&w2);
    let mut acc = 0.0;
    view.sweep(|s| {
        acc += prod.eval(s.km_before) * information_increment(s);
    });
    Ok(acc)
}

fn information_increment(s: &EventSlice) -> f64 {
    let r = s.at_risk;
    let r1 = s.treated_at_risk;
    let r0 = r - r1;
    s.events * r1 * r0 / (r * r)
}

/// All numerators, variances and pairwise covariances of a set of weights,
/// computed in one pass over the event times.
#[derive(Debug, Clone)]
pub struct JointStatistics {
    pub weights: Vec<WeightSpec>,
    pub numerators: Vec<f64>,
    /// Gram matrix of covariance estimates, `information[i][j]`.
    pub information: Vec<Vec<f64>>,
}

impl JointStatistics {
    pub fn statistic(&self, k: usize) -> WlrtStatistic {
        let v = self.information[k][k];
        WlrtStatistic {
            numerator: self.numerators[k],
            variance: v,
            standardized: self.numerators[k] / v.sqrt(),
        }
    }

    /// Estimated correlation of two statistics at this freeze.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.information[i][j] / (self.information[i][i] * self.information[j][j]).sqrt()
    }
}

pub fn joint_statistics(view: &FrozenView, weights: &[WeightSpec]) -> Result<JointStatistics> {
    if view.events == 0 {
        return Err(Error::Degenerate("no events observed; cannot test".into()));
    }
    let k = weights.len();
    let mut numerators = vec![0.0; k];
    let mut information = vec![vec![0.0; k]; k];
    view.sweep(|s| {
        let centered = s.treated_events - s.events * s.treated_at_risk / s.at_risk;
        let info = information_increment(s);
        for i in 0..k {
            let wi = weights[i].eval(s.km_before);
            numerators[i] += wi * centered;
            for j in i..k {
                let wj = weights[j].eval(s.km_before);
                information[i][j] += wi * wj * info;
            }
        }
    });
    for i in 0..k {
        for j in 0..i {
            information[i][j] = information[j][i];
        }
        if information[i][i] <= 0.0 {
            return Err(Error::Degenerate(format!(
                "zero variance estimate for weight {}; no information in the data",
                weights[i]
            )));
        }
    }
    Ok(JointStatistics { weights: weights.to_vec(), numerators, information })
}

fn split_row(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .collect()
}

/// Reads a delimiter-separated dataset with header columns
/// `entry, time, event, arm`. Comma, semicolon, tab or space delimited.
pub fn read_dataset(reader: impl BufRead) -> Result<TrialData> {
    let mut subjects = Vec::new();
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Dataset("empty dataset: header line required".into()))?
        .map_err(|e| Error::Dataset(e.to_string()))?;
    let cols = split_row(&header);
    let want = ["entry", "time", "event", "arm"];
    let mut index = [0usize; 4];
    for (w, slot) in want.iter().zip(index.iter_mut()) {
        *slot = cols
            .iter()
            .position(|c| c.eq_ignore_ascii_case(w))
            .ok_or_else(|| Error::Dataset(format!("missing column '{w}' in header")))?;
    }
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Dataset(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_row(&line);
        let get = |slot: usize, name: &str| -> Result<f64> {
            fields
                .get(index[slot])
                .ok_or_else(|| Error::Dataset(format!("row {}: missing {name}", lineno + 2)))?
                .parse::<f64>()
                .map_err(|_| Error::Dataset(format!("row {}: bad {name} value", lineno + 2)))
        };
        let entry = get(0, "entry")?;
        let time = get(1, "time")?;
        let event = get(2, "event")?;
        let arm = get(3, "arm")?;
        if !(event == 0.0 || event == 1.0) || !(arm == 0.0 || arm == 1.0) {
            return Err(Error::Dataset(format!(
                "row {}: event and arm must be 0 or 1",
                lineno + 2
            )));
        }
        // observed rows: an event row pins the event time, a censored row
        // pins the dropout time
        let (event_time, censor_time) =
            if event == 1.0 { (time, f64::INFINITY) } else { (f64::INFINITY, time) };
        subjects.push(Subject { entry, event_time, censor_time, arm: arm as u8 });
    }
    Ok(TrialData { subjects })
}

/// Writes the observed snapshot of a frozen view in the dataset format.
pub fn write_dataset(view: &FrozenView, mut writer: impl Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Dataset(e.to_string());
    writeln!(writer, "entry,time,event,arm").map_err(io)?;
    for row in &view.rows {
        writeln!(
            writer,
            "{:.6},{:.6},{},{}",
            row.entry,
            row.y,
            u8::from(row.event),
            row.arm
        )
        .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn subject(entry: f64, event_time: f64, censor_time: f64, arm: u8) -> Subject {
        Subject { entry, event_time, censor_time, arm }
    }

    fn immediate(times_events_arms: &[(f64, bool, u8)]) -> TrialData {
        TrialData {
            subjects: times_events_arms
                .iter()
                .map(|&(t, e, a)| {
                    if e {
                        subject(0.0, t, f64::INFINITY, a)
                    } else {
                        subject(0.0, f64::INFINITY, t, a)
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn freeze_excludes_future_entries_and_censors() {
        let data = TrialData {
            subjects: vec![
                subject(3.0, 4.0, f64::INFINITY, 0),
                subject(6.0, 1.0, f64::INFINITY, 1),
            ],
        };
        let early = freeze(&data, 2.0);
        assert_eq!(early.subjects(), 0);
        // E=3, T=4, C=inf at t=5: follow-up 2 < T so censored at 2
        let v = freeze(&data, 5.0);
        assert_eq!(v.subjects(), 1);
        assert_eq!(v.events(), 0);
        assert_eq!(v.rows[0].y, 2.0);
        let late = freeze(&data, 100.0);
        assert_eq!(late.subjects(), 2);
        assert_eq!(late.events(), 2);
    }

    #[test]
    fn pooled_km_hand_fixture() {
        // events at 1, 2, 3, 5; censorings at 2 and 4 (six subjects)
        let data = immediate(&[
            (1.0, true, 0),
            (2.0, true, 1),
            (2.0, false, 0),
            (3.0, true, 1),
            (4.0, false, 0),
            (5.0, true, 1),
        ]);
        let v = freeze(&data, 100.0);
        assert_eq!(v.pooled_km(1.0), 1.0);
        assert_relative_eq!(v.pooled_km(2.0), 5.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(v.pooled_km(3.0), 5.0 / 6.0 * 4.0 / 5.0, epsilon = 1e-15);
        assert_relative_eq!(v.pooled_km(5.0), 2.0 / 3.0 * 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(v.pooled_km(100.0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn km_single_event_step() {
        let data = immediate(&[(1.0, true, 0), (2.0, false, 0), (3.0, false, 1)]);
        let v = freeze(&data, 10.0);
        assert_relative_eq!(v.pooled_km(1.5), 1.0 - 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn log_rank_hand_fixture() {
        // alternating arms, events at 1 < 2 < 3 < 4
        let data =
            immediate(&[(1.0, true, 0), (2.0, true, 1), (3.0, true, 0), (4.0, true, 1)]);
        let v = freeze(&data, 100.0);
        let s = wlrt_statistic(&v, WeightSpec::log_rank()).unwrap();
        assert_relative_eq!(s.numerator, -2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(s.variance, 13.0 / 18.0, epsilon = 1e-15);
        assert_relative_eq!(s.standardized, -2.0 / 3.0 / (13.0f64 / 18.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn single_arm_is_degenerate() {
        let data = immediate(&[(1.0, true, 0), (2.0, true, 0), (3.0, true, 0)]);
        let v = freeze(&data, 100.0);
        assert!(matches!(
            wlrt_statistic(&v, WeightSpec::log_rank()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn no_events_is_degenerate() {
        let data = immediate(&[(1.0, false, 0), (2.0, false, 1)]);
        let v = freeze(&data, 100.0);
        assert!(matches!(
            wlrt_statistic(&v, WeightSpec::log_rank()),
            Err(Error::Degenerate(_))
        ));
    }

    /// Independent log-rank implementation building explicit 2x2 tables per
    /// unique event time.
    fn log_rank_tables(rows: &[(f64, bool, u8)]) -> (f64, f64) {
        let mut times: Vec<f64> =
            rows.iter().filter(|r| r.1).map(|r| r.0).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let mut km_curve: Vec<(f64, f64)> = Vec::new();
        let mut km = 1.0;
        for &t in &times {
            let r = rows.iter().filter(|x| x.0 >= t).count() as f64;
            let d = rows.iter().filter(|x| x.0 == t && x.1).count() as f64;
            km_curve.push((t, km));
            km *= 1.0 - d / r;
        }
        let mut g = 0.0;
        let mut v = 0.0;
        for &(t, _km_before) in &km_curve {
            let r = rows.iter().filter(|x| x.0 >= t).count() as f64;
            let r1 = rows.iter().filter(|x| x.0 >= t && x.2 == 1).count() as f64;
            let d = rows.iter().filter(|x| x.0 == t && x.1).count() as f64;
            let d1 = rows.iter().filter(|x| x.0 == t && x.1 && x.2 == 1).count() as f64;
            g += d1 - d * r1 / r;
            v += d * r1 * (r - r1) / (r * r);
        }
        (g, v)
    }

    #[test]
    fn log_rank_matches_table_implementation_on_random_data() {
        let mut state = 0x1234_5678_9abc_def0_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let n = 5 + (next() * 20.0) as usize;
            let mut rows = Vec::new();
            for _ in 0..n {
                // integer-valued times force ties across both arms
                let t = (next() * 8.0).ceil();
                let e = next() < 0.7;
                let a = u8::from(next() < 0.5);
                rows.push((t, e, a));
            }
            if !rows.iter().any(|r| r.1) || rows.iter().all(|r| r.2 == rows[0].2) {
                continue;
            }
            let data = immediate(&rows);
            let v = freeze(&data, 1e9);
            if let Ok(s) = wlrt_statistic(&v, WeightSpec::log_rank()) {
                let (g, var) = log_rank_tables(&rows);
                assert_relative_eq!(s.numerator, g, epsilon = 1e-12);
                assert_relative_eq!(s.variance, var, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn arm_swap_negates_numerator() {
        let rows = [(1.0, true, 0), (2.0, true, 1), (2.5, false, 1), (3.0, true, 0), (5.0, true, 1)];
        let swapped: Vec<(f64, bool, u8)> =
            rows.iter().map(|&(t, e, a)| (t, e, 1 - a)).collect();
        let v1 = freeze(&immediate(&rows), 100.0);
        let v2 = freeze(&immediate(&swapped), 100.0);
        for w in [WeightSpec::log_rank(), WeightSpec::late_emphasis()] {
            let s1 = wlrt_statistic(&v1, w).unwrap();
            let s2 = wlrt_statistic(&v2, w).unwrap();
            assert_relative_eq!(s1.numerator, -s2.numerator, epsilon = 1e-14);
            assert_relative_eq!(s1.variance, s2.variance, epsilon = 1e-14);
        }
    }

    #[test]
    fn subject_order_is_irrelevant() {
        let rows = [(1.0, true, 0), (2.0, true, 1), (2.5, false, 1), (3.0, true, 0), (5.0, true, 1)];
        let mut reversed = rows;
        reversed.reverse();
        let a = wlrt_statistic(&freeze(&immediate(&rows), 99.0), WeightSpec::late_emphasis())
            .unwrap();
        let b =
            wlrt_statistic(&freeze(&immediate(&reversed), 99.0), WeightSpec::late_emphasis())
                .unwrap();
        assert_eq!(a.numerator, b.numerator);
        assert_eq!(a.variance, b.variance);
    }

    #[test]
    fn covariance_diagonal_and_cauchy_schwarz() {
        let rows = [
            (1.0, true, 0),
            (2.0, true, 1),
            (2.0, true, 0),
            (3.0, false, 1),
            (4.0, true, 0),
            (6.0, true, 1),
        ];
        let v = freeze(&immediate(&rows), 100.0);
        let w00 = WeightSpec::log_rank();
        let w01 = WeightSpec::late_emphasis();
        let s00 = wlrt_statistic(&v, w00).unwrap();
        let s01 = wlrt_statistic(&v, w01).unwrap();
        let c_self = estimate_covariance(&v, w00, w00).unwrap();
        assert_relative_eq!(c_self, s00.variance, epsilon = 1e-14);
        let c = estimate_covariance(&v, w00, w01).unwrap();
        assert!(c * c <= s00.variance * s01.variance * (1.0 + 1e-12));
    }

    #[test]
    fn joint_statistics_match_single_calls() {
        let rows = [
            (1.0, true, 0),
            (2.0, true, 1),
            (2.0, false, 0),
            (3.5, true, 1),
            (4.0, true, 0),
        ];
        let v = freeze(&immediate(&rows), 50.0);
        let weights = [WeightSpec::log_rank(), WeightSpec::late_emphasis()];
        let joint = joint_statistics(&v, &weights).unwrap();
        for (k, &w) in weights.iter().enumerate() {
            let single = wlrt_statistic(&v, w).unwrap();
            assert_relative_eq!(joint.statistic(k).numerator, single.numerator, epsilon = 1e-14);
            assert_relative_eq!(joint.statistic(k).variance, single.variance, epsilon = 1e-14);
        }
        let cov = estimate_covariance(&v, weights[0], weights[1]).unwrap();
        assert_relative_eq!(joint.information[0][1], cov, epsilon = 1e-14);
    }

    #[test]
    fn dataset_round_trip() {
        let rows = [(1.25, true, 0), (2.5, false, 1), (3.75, true, 1)];
        let view = freeze(&immediate(&rows), 10.0);
        let mut buf = Vec::new();
        write_dataset(&view, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = read_dataset(std::io::BufReader::new(text.as_bytes())).unwrap();
        assert_eq!(back.len(), 3);
        let reread = freeze(&back, 10.0);
        let a = wlrt_statistic(&view, WeightSpec::log_rank()).unwrap();
        let b = wlrt_statistic(&reread, WeightSpec::log_rank()).unwrap();
        assert_relative_eq!(a.standardized, b.standardized, epsilon = 1e-9);
    }

    #[test]
    fn dataset_rejects_bad_input() {
        let no_header = "1,2,1,0\n";
        assert!(read_dataset(std::io::BufReader::new(no_header.as_bytes())).is_err());
        let bad_event = "entry,time,event,arm\n0,1,2,0\n";
        assert!(read_dataset(std::io::BufReader::new(bad_event.as_bytes())).is_err());
    }

    #[test]
    fn calendar_event_times() {
        let data = TrialData {
            subjects: vec![
                subject(0.0, 5.0, f64::INFINITY, 0),
                subject(2.0, 1.0, f64::INFINITY, 1),
                subject(1.0, 10.0, 0.5, 0),
            ],
        };
        // events at calendar 5 and 3; the censored subject never events
        assert_eq!(data.calendar_time_of_event(1), Some(3.0));
        assert_eq!(data.calendar_time_of_event(2), Some(5.0));
        assert_eq!(data.calendar_time_of_event(3), None);
    }
}
