//! Population-level QoE statistics over per-user session reports.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Stall count at and above which a session counts as severely degraded.
pub const SEVERE_STALL_COUNT: u32 = 3;

/// Percentiles reported in a [`SummaryReport`].
pub const REPORTED_PERCENTILES: [u32; 3] = [10, 50, 90];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserReport {
    pub user_id: u32,
    pub stall_count: u32,
    pub total_stall_seconds: f64,
    /// Buffer level accumulated before playback started.
    pub startup_seconds: f64,
    /// Playback deadline of the first segment: availability start plus
    /// buffer.
    pub end_to_end_latency_seconds: f64,
    /// Share of segments lost on the broadcast path.
    pub loss_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Acceptable,
    Degraded,
    Severe,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Acceptable => "acceptable",
            Severity::Degraded => "degraded",
            Severity::Severe => "severe",
        }
    }
}

pub fn classify_severity(report: &UserReport) -> Severity {
    match report.stall_count {
        0 => Severity::Acceptable,
        n if n < SEVERE_STALL_COUNT => Severity::Degraded,
        _ => Severity::Severe,
    }
}

/// Nearest-rank percentile on the worst-first ordering: at least
/// `percentile` percent of the values are greater than or equal to the
/// result.
fn worst_tail<T: Copy + PartialOrd>(values: &[T], percentile: f64) -> Result<T> {
    if values.is_empty() {
        return Err(Error::domain("population", "no users"));
    }
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::domain("percentile", format!("{percentile} is not in (0, 100)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("NaN in population"));
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

/// Loss rate of the `percentile`-worst user.
pub fn worst_percentile_loss(loss_rates: &[f64], percentile: f64) -> Result<f64> {
    worst_tail(loss_rates, percentile)
}

pub fn worst_percentile_loss_of(reports: &[UserReport], percentile: f64) -> Result<f64> {
    let rates: Vec<f64> = reports.iter().map(|r| r.loss_rate).collect();
    worst_tail(&rates, percentile)
}

/// Number of users per stall-count bucket `0`, `1`, `2` and `3+`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StallHistogram {
    pub zero: usize,
    pub one: usize,
    pub two: usize,
    pub three_plus: usize,
}

impl StallHistogram {
    pub fn total(&self) -> usize {
        self.zero + self.one + self.two + self.three_plus
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryReport {
    pub n_users: usize,
    pub histogram: StallHistogram,
    pub severe_fraction: f64,
    /// Worst-tail percentile → loss rate.
    pub percentile_loss: BTreeMap<u32, f64>,
    /// Worst-tail percentile → stall count.
    pub percentile_stalls: BTreeMap<u32, u32>,
}

pub fn summarize(reports: &[UserReport]) -> Result<SummaryReport> {
    if reports.is_empty() {
        return Err(Error::domain("population", "no users"));
    }
    let mut histogram = StallHistogram::default();
    for r in reports {
        match r.stall_count {
            0 => histogram.zero += 1,
            1 => histogram.one += 1,
            2 => histogram.two += 1,
            _ => histogram.three_plus += 1,
        }
    }
    let severe = reports.iter().filter(|r| classify_severity(r) == Severity::Severe).count();
    let losses: Vec<f64> = reports.iter().map(|r| r.loss_rate).collect();
    let stalls: Vec<u32> = reports.iter().map(|r| r.stall_count).collect();
    let mut percentile_loss = BTreeMap::new();
    let mut percentile_stalls = BTreeMap::new();
    for p in REPORTED_PERCENTILES {
        percentile_loss.insert(p, worst_tail(&losses, p as f64)?);
        percentile_stalls.insert(p, worst_tail(&stalls, p as f64)?);
    }
    Ok(SummaryReport {
        n_users: reports.len(),
        histogram,
        severe_fraction: severe as f64 / reports.len() as f64,
        percentile_loss,
        percentile_stalls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(user_id: u32, stall_count: u32, loss_rate: f64) -> UserReport {
        UserReport {
            user_id,
            stall_count,
            total_stall_seconds: stall_count as f64,
            startup_seconds: 4.0,
            end_to_end_latency_seconds: 6.0,
            loss_rate,
        }
    }

    #[test]
    fn severity_boundaries() {
        assert_eq!(classify_severity(&report(0, 0, 0.0)), Severity::Acceptable);
        assert_eq!(classify_severity(&report(0, 1, 0.0)), Severity::Degraded);
        assert_eq!(classify_severity(&report(0, 2, 0.0)), Severity::Degraded);
        assert_eq!(classify_severity(&report(0, 3, 0.0)), Severity::Severe);
        assert_eq!(classify_severity(&report(0, 4, 0.0)), Severity::Severe);
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(worst_percentile_loss(&[0.2; 7], 10.0).unwrap(), 0.2);
        let rates: Vec<f64> = (1..=10).map(|i| 0.01 * i as f64).collect();
        assert_eq!(worst_percentile_loss(&rates, 10.0).unwrap(), rates[9]);
        assert_eq!(worst_percentile_loss(&[0.1, 0.2, 0.3, 0.4], 50.0).unwrap(), 0.3);
        assert!(worst_percentile_loss(&[], 10.0).is_err());
        assert!(worst_percentile_loss(&[0.1], 0.0).is_err());
        assert!(worst_percentile_loss(&[0.1], 100.0).is_err());
    }

    #[test]
    fn summary_buckets() {
        let reports: Vec<UserReport> =
            [0, 1, 3, 5].iter().enumerate().map(|(i, &s)| report(i as u32, s, 0.01)).collect();
        let s = summarize(&reports).unwrap();
        assert_eq!(s.histogram, StallHistogram { zero: 1, one: 1, two: 0, three_plus: 2 });
        assert_eq!(s.severe_fraction, 0.5);
        assert_eq!(s.percentile_stalls[&10], 5);
        assert_eq!(s.percentile_stalls[&50], 3);

        let clean: Vec<UserReport> = (0..5).map(|i| report(i, 0, 0.0)).collect();
        assert_eq!(summarize(&clean).unwrap().severe_fraction, 0.0);
        assert!(summarize(&[]).is_err());
    }
}
