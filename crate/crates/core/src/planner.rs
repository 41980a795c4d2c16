//! Closed-form dimensioning of the client buffer and the MPD timing fields.
//!
//! Timing arithmetic is generic over [`Quantity`] so it can be evaluated in
//! exact rationals; anything that touches the loss model needs [`Scalar`].

use crate::error::{Error, Result};
use crate::fec::{code_for_segment, segment_loss_probability, ErasureChannel, RaptorCode};
use crate::scalar::{ceil_div, from_count, lit, Quantity, Scalar};

/// Default probability of a service disruption tolerated when sizing bursts.
pub const DEFAULT_THRESHOLD: f64 = 1e-5;

fn non_negative<T: Quantity>(what: &'static str, v: T) -> Result<T> {
    if v >= T::zero() {
        Ok(v)
    } else {
        Err(Error::domain(what, format!("{v:?} is negative")))
    }
}

fn positive<T: Quantity>(what: &'static str, v: T) -> Result<T> {
    if v > T::zero() {
        Ok(v)
    } else {
        Err(Error::domain(what, format!("{v:?} is not positive")))
    }
}

fn rate_in_unit_interval<T: Quantity>(v: T) -> Result<T> {
    if v > T::zero() && v <= T::one() {
        Ok(v)
    } else {
        Err(Error::domain("code_rate", format!("{v:?} is not in (0, 1]")))
    }
}

/// Fixed delays between segment generation and its arrival in the client
/// cache, excluding the broadcast transfer itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBudget<T> {
    /// Time to generate one segment at the encoder.
    pub generation: T,
    pub fec_encoding: T,
    pub fec_decoding: T,
    /// Margin absorbing jitter in the other components so that a client never
    /// asks over unicast for a segment still in flight on the broadcast.
    pub safety_margin: T,
}

impl<T: Quantity> DelayBudget<T> {
    pub fn new(generation: T, fec_encoding: T, fec_decoding: T, safety_margin: T) -> Result<Self> {
        Ok(DelayBudget {
            generation: non_negative("generation delay", generation)?,
            fec_encoding: non_negative("fec encoding delay", fec_encoding)?,
            fec_decoding: non_negative("fec decoding delay", fec_decoding)?,
            safety_margin: non_negative("safety margin", safety_margin)?,
        })
    }

    pub fn zero() -> Self {
        DelayBudget {
            generation: T::zero(),
            fec_encoding: T::zero(),
            fec_decoding: T::zero(),
            safety_margin: T::zero(),
        }
    }
}

/// Broadcast service parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceConfig<T> {
    /// Segment duration in seconds.
    pub t_seg: T,
    /// Fixed broadcast link rate in bits per second.
    pub broadcast_rate: T,
    /// Media encoding rate in bits per second.
    pub media_bitrate: T,
    pub code_rate: T,
    pub symbol_size: u32,
}

impl<T: Quantity> ServiceConfig<T> {
    pub fn new(
        t_seg: T,
        broadcast_rate: T,
        media_bitrate: T,
        code_rate: T,
        symbol_size: u32,
    ) -> Result<Self> {
        if symbol_size == 0 {
            return Err(Error::domain("symbol_size", "must be at least one byte"));
        }
        Ok(ServiceConfig {
            t_seg: positive("t_seg", t_seg)?,
            broadcast_rate: positive("broadcast_rate", broadcast_rate)?,
            media_bitrate: positive("media_bitrate", media_bitrate)?,
            code_rate: rate_in_unit_interval(code_rate)?,
            symbol_size,
        })
    }

    /// Nominal media bits in one segment.
    pub fn segment_bits(&self) -> T {
        self.media_bitrate * self.t_seg
    }

    pub fn segment_bytes(&self) -> u64 {
        ceil_div(self.segment_bits(), from_count(8)).max(1)
    }

    /// Time to push one coded segment (source plus repair) through the
    /// broadcast link.
    pub fn broadcast_transfer_time(&self) -> T {
        self.segment_bits() / self.code_rate / self.broadcast_rate
    }

    /// A live service keeps up only if a coded segment fits in one segment
    /// duration of broadcast airtime.
    pub fn is_sustainable(&self) -> bool {
        self.broadcast_transfer_time() <= self.t_seg
    }

    pub fn with_t_seg(mut self, t_seg: T) -> Result<Self> {
        self.t_seg = positive("t_seg", t_seg)?;
        Ok(self)
    }

    pub fn with_code_rate(mut self, code_rate: T) -> Result<Self> {
        self.code_rate = rate_in_unit_interval(code_rate)?;
        Ok(self)
    }
}

impl<T: Scalar> ServiceConfig<T> {
    /// Raptor code protecting one segment of this service.
    pub fn code(&self) -> Result<RaptorCode> {
        code_for_segment(self.segment_bytes(), self.symbol_size, self.code_rate)
    }
}

/// How long the unicast path takes to deliver one segment once requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnicastTransfer<T> {
    /// Throughput in bits per second; delay follows from the segment size.
    Rate(T),
    /// Per-segment transfer delay in seconds.
    Delay(T),
}

/// Unicast recovery path over a persistent HTTP connection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnicastLink<T> {
    pub rtt: T,
    pub transfer: UnicastTransfer<T>,
}

impl<T: Quantity> UnicastLink<T> {
    pub fn with_delay(rtt: T, transfer_delay: T) -> Result<Self> {
        Ok(UnicastLink {
            rtt: non_negative("rtt", rtt)?,
            transfer: UnicastTransfer::Delay(non_negative("transfer delay", transfer_delay)?),
        })
    }

    pub fn with_rate(rtt: T, rate: T) -> Result<Self> {
        Ok(UnicastLink {
            rtt: non_negative("rtt", rtt)?,
            transfer: UnicastTransfer::Rate(positive("unicast rate", rate)?),
        })
    }

    /// Resolves the transfer delay for segments of `segment_bits` bits.
    pub fn recovery_path(&self, segment_bits: T) -> RecoveryPath<T> {
        let transfer_delay = match self.transfer {
            UnicastTransfer::Delay(d) => d,
            UnicastTransfer::Rate(rate) => segment_bits / rate,
        };
        RecoveryPath { rtt: self.rtt, transfer_delay }
    }
}

/// Round-trip time and per-segment transfer delay of the recovery path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryPath<T> {
    pub rtt: T,
    pub transfer_delay: T,
}

impl<T: Quantity> RecoveryPath<T> {
    pub fn new(rtt: T, transfer_delay: T) -> Result<Self> {
        Ok(RecoveryPath {
            rtt: non_negative("rtt", rtt)?,
            transfer_delay: non_negative("transfer delay", transfer_delay)?,
        })
    }
}

/// Result of buffer dimensioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferPlan<T> {
    /// Longest run of consecutively lost segments the buffer absorbs.
    pub burst: u32,
    /// Minimum buffer level in seconds.
    pub seconds: T,
    /// Minimum buffer level rounded up to whole segments.
    pub segments: u64,
    pub t_seg: T,
}

impl<T: Quantity> BufferPlan<T> {
    /// Buffer level after rounding up to whole segments, in seconds.
    pub fn rounded_seconds(&self) -> T {
        from_count::<T>(self.segments) * self.t_seg
    }
}

/// Smallest `m >= 1` with `p_loss^m < threshold`.
pub fn max_protected_burst<T: Scalar>(p_loss: T, threshold: T) -> Result<u32> {
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(Error::domain("threshold", format!("{threshold:?} is not in (0, 1)")));
    }
    if !(p_loss >= T::zero()) {
        return Err(Error::domain("p_loss", format!("{p_loss:?} is negative")));
    }
    let unsatisfiable = || Error::Unsatisfiable {
        p_loss: p_loss.to_f64().unwrap_or(f64::NAN),
        threshold: threshold.to_f64().unwrap_or(f64::NAN),
    };
    if p_loss >= T::one() {
        return Err(unsatisfiable());
    }
    if p_loss == T::zero() {
        return Ok(1);
    }
    let estimate = (threshold.ln() / p_loss.ln()).floor() + T::one();
    let estimate = estimate.to_f64().unwrap_or(f64::INFINITY);
    if !(estimate < i32::MAX as f64) {
        return Err(unsatisfiable());
    }
    let mut m = (estimate as i32).max(1);
    while m > 1 && p_loss.powi(m - 1) < threshold {
        m -= 1;
    }
    while !(p_loss.powi(m) < threshold) {
        m = m.checked_add(1).ok_or_else(unsatisfiable)?;
    }
    Ok(m as u32)
}

/// Minimum buffer level that lets a burst of `burst` consecutive losses be
/// recovered serially over the unicast path before playback needs them.
///
/// When the transfer delay exceeds the segment duration the recoveries queue
/// up and the last one of the burst dominates:
/// `rtt + burst * d_t - (burst - 1) * t_seg`. Otherwise each recovery
/// finishes before the next is requested and the buffer only covers one
/// recovery, `rtt + d_t`.
pub fn min_buffer<T: Quantity>(burst: u32, path: &RecoveryPath<T>, t_seg: T) -> Result<T> {
    if burst == 0 {
        return Err(Error::domain("burst", "must be at least one segment"));
    }
    positive("t_seg", t_seg)?;
    let d_t = path.transfer_delay;
    if d_t > t_seg {
        let m = from_count::<T>(burst as u64);
        Ok(path.rtt + m * d_t - (m - T::one()) * t_seg)
    } else {
        Ok(path.rtt + d_t)
    }
}

/// Buffer plan for a known burst length.
pub fn plan_buffer_for_burst<T: Quantity>(
    burst: u32,
    path: &RecoveryPath<T>,
    t_seg: T,
) -> Result<BufferPlan<T>> {
    let seconds = min_buffer(burst, path, t_seg)?;
    Ok(BufferPlan { burst, seconds, segments: ceil_div(seconds, t_seg), t_seg })
}

/// Buffer plan for a known per-segment loss probability.
pub fn plan_buffer_for_loss<T: Scalar>(
    p_loss: T,
    threshold: T,
    path: &RecoveryPath<T>,
    t_seg: T,
) -> Result<BufferPlan<T>> {
    let burst = max_protected_burst(p_loss, threshold)?;
    plan_buffer_for_burst(burst, path, t_seg)
}

/// Full chain from code and channel to the buffer plan.
pub fn plan_buffer<T: Scalar>(
    code: &RaptorCode,
    channel: &ErasureChannel<T>,
    threshold: T,
    path: &RecoveryPath<T>,
    t_seg: T,
) -> Result<BufferPlan<T>> {
    plan_buffer_for_loss(segment_loss_probability(code, channel), threshold, path, t_seg)
}

/// Earliest instant, relative to the start of generation of a segment, at
/// which that segment is guaranteed to sit in the client cache when it was
/// delivered over broadcast. Segment `i` becomes available at
/// `availability_start_time + i * t_seg`.
pub fn availability_start_time<T: Quantity>(budget: &DelayBudget<T>, svc: &ServiceConfig<T>) -> T {
    budget.generation
        + budget.fec_encoding
        + svc.broadcast_transfer_time()
        + budget.fec_decoding
        + budget.safety_margin
}

/// Instant at which playback of the first segment starts.
pub fn playback_deadline<T: Quantity>(availability_start: T, buffer: T) -> T {
    availability_start + buffer
}

/// Media-usable throughput of the broadcast link at a given code rate.
pub fn service_data_rate<T: Quantity>(broadcast_rate: T, code_rate: T) -> T {
    broadcast_rate * code_rate
}

/// One point of a code rate / segment duration sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow<T> {
    pub t_seg: T,
    pub code_rate: T,
    pub code: RaptorCode,
    pub p_loss: T,
    pub service_data_rate: T,
}

/// Evaluates every `(t_seg, code_rate)` pair. Rows are ordered by ascending
/// segment duration, then ascending code rate.
pub fn sweep_code_rate<T: Scalar>(
    svc: &ServiceConfig<T>,
    channel: &ErasureChannel<T>,
    code_rates: &[T],
    t_segs: &[T],
) -> Result<Vec<SweepRow<T>>> {
    if code_rates.is_empty() {
        return Err(Error::domain("code_rates", "empty grid"));
    }
    if t_segs.is_empty() {
        return Err(Error::domain("t_segs", "empty grid"));
    }
    let mut t_sorted = t_segs.to_vec();
    t_sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN segment duration"));
    let mut rates_sorted = code_rates.to_vec();
    rates_sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN code rate"));

    let mut rows = Vec::with_capacity(t_sorted.len() * rates_sorted.len());
    for &t_seg in &t_sorted {
        for &code_rate in &rates_sorted {
            let point = svc.with_t_seg(t_seg)?.with_code_rate(code_rate)?;
            let code = point.code()?;
            rows.push(SweepRow {
                t_seg,
                code_rate,
                code,
                p_loss: segment_loss_probability(&code, channel),
                service_data_rate: service_data_rate(point.broadcast_rate, code_rate),
            });
        }
    }
    Ok(rows)
}

/// Highest code rate at `t_seg` whose loss probability stays within
/// `recovery_limit`, the tolerated share of segments fetched over unicast.
pub fn max_code_rate_within<T: Scalar>(
    rows: &[SweepRow<T>],
    t_seg: T,
    recovery_limit: T,
) -> Option<T> {
    rows.iter()
        .filter(|row| row.t_seg == t_seg && row.p_loss <= recovery_limit)
        .map(|row| row.code_rate)
        .fold(None, |best, rate| match best {
            Some(b) if b >= rate => Some(b),
            _ => Some(rate),
        })
}

/// Threshold default as a scalar.
pub fn default_threshold<T: Scalar>() -> T {
    lit(DEFAULT_THRESHOLD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn q(n: i64, d: i64) -> Q {
        Ratio::new(n, d)
    }

    #[test]
    fn burst_examples() {
        assert_eq!(max_protected_burst(0.0387, 1e-5).unwrap(), 4);
        assert_eq!(max_protected_burst(0.0, 0.5).unwrap(), 1);
        assert_eq!(max_protected_burst(0.5, 0.25).unwrap(), 3);
        assert_eq!(max_protected_burst(0.9, 0.5).unwrap(), 7);
    }

    #[test]
    fn burst_errors() {
        assert!(matches!(max_protected_burst(1.0, 1e-5), Err(Error::Unsatisfiable { .. })));
        assert!(matches!(max_protected_burst(0.5, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(max_protected_burst(0.5, 1.0), Err(Error::Domain { .. })));
        assert!(matches!(max_protected_burst(-0.1, 0.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn burst_near_one_is_finite() {
        let m = max_protected_burst(0.999_999_f64, 1e-5).unwrap();
        assert!(0.999_999_f64.powi(m as i32) < 1e-5);
        assert!(0.999_999_f64.powi(m as i32 - 1) >= 1e-5);
    }

    #[test]
    fn min_buffer_examples() {
        let path = RecoveryPath::new(0.0, 4.0).unwrap();
        assert_eq!(min_buffer(4, &path, 2.0).unwrap(), 10.0);
        let path = RecoveryPath::new(0.1_f64, 1.0).unwrap();
        assert!((min_buffer(7, &path, 2.0).unwrap() - 1.1).abs() < 1e-12);
        assert!(min_buffer(0, &path, 2.0).is_err());
        assert!(min_buffer(1, &path, 0.0).is_err());
    }

    #[test]
    fn min_buffer_three_burst_exact() {
        let t_seg = q(2, 1);
        let path = RecoveryPath::new(q(1, 10), q(5, 2)).unwrap();
        let want = q(1, 10) + q(3, 1) * q(5, 2) - q(2, 1) * t_seg;
        assert_eq!(min_buffer(3, &path, t_seg).unwrap(), want);
    }

    #[test]
    fn reference_design_points_exact() {
        let t_seg = q(2, 1);
        let burst = max_protected_burst(0.0387_f64, 1e-5).unwrap();
        for (mult, segments) in [(q(5, 4), 2), (q(3, 2), 3), (q(7, 4), 4), (q(2, 1), 5)] {
            let path = RecoveryPath::new(q(0, 1), mult * t_seg).unwrap();
            let plan = plan_buffer_for_burst(burst, &path, t_seg).unwrap();
            assert_eq!(plan.segments, segments);
        }
    }

    #[test]
    fn five_loss_burst_design_points() {
        let path = RecoveryPath::new(0.0, 2.5).unwrap();
        let plan = plan_buffer_for_burst(5, &path, 2.0).unwrap();
        assert_eq!(plan.seconds, 4.5);
        assert_eq!(plan.segments, 3);
        assert_eq!(plan.rounded_seconds(), 6.0);
        let path = RecoveryPath::new(0.0, 4.0).unwrap();
        let plan = plan_buffer_for_burst(5, &path, 2.0).unwrap();
        assert_eq!(plan.rounded_seconds(), 12.0);
    }

    #[test]
    fn lossless_plan_uses_single_recovery() {
        let code = RaptorCode::new(100, 30, 1024).unwrap();
        let path = RecoveryPath::new(0.05_f64, 1.0).unwrap();
        let plan = plan_buffer(&code, &ErasureChannel::lossless(), 1e-5, &path, 2.0).unwrap();
        assert_eq!(plan.burst, 1);
        assert!((plan.seconds - 1.05).abs() < 1e-12);
        assert_eq!(plan.segments, 1);
    }

    #[test]
    fn plan_propagates_unsatisfiable() {
        let code = RaptorCode::new(10, 2, 1024).unwrap();
        let path = RecoveryPath::new(0.0, 1.0).unwrap();
        let err = plan_buffer(&code, &ErasureChannel::new(1.0).unwrap(), 1e-5, &path, 2.0);
        assert!(matches!(err, Err(Error::Unsatisfiable { .. })));
    }

    #[test]
    fn availability_examples() {
        // 1 Mbps for 2 s at rate 1 over a 1.470588 Mbps link -> 1.36 s.
        let svc = ServiceConfig::new(2.0_f64, 2.0e6 / 1.36, 1.0e6, 1.0, 1024).unwrap();
        let ast = availability_start_time(&DelayBudget::zero(), &svc);
        assert!((ast - 1.36).abs() < 1e-12);
        let budget = DelayBudget::new(2.0_f64, 0.1, 0.1, 0.5).unwrap();
        let ast_full = availability_start_time(&budget, &svc);
        assert!((ast_full - 4.06).abs() < 1e-12);
        let halved = svc.with_code_rate(0.5).unwrap();
        let ast_halved = availability_start_time(&budget, &halved);
        assert!((ast_halved - ast_full - 1.36).abs() < 1e-12);
        assert!((playback_deadline(ast_full, 6.0_f64) - 10.06).abs() < 1e-12);
        assert_eq!(playback_deadline(0.0_f64, 0.0), 0.0);
        assert!(DelayBudget::new(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn availability_exact_rational() {
        let svc = ServiceConfig::new(q(2, 1), q(1_250_000, 1), q(1_000_000, 1), q(4, 5), 1024).unwrap();
        assert_eq!(svc.broadcast_transfer_time(), q(2, 1));
        assert!(svc.is_sustainable());
        let budget = DelayBudget::new(q(2, 1), q(1, 10), q(1, 10), q(1, 2)).unwrap();
        assert_eq!(availability_start_time(&budget, &svc), q(47, 10));
    }

    #[test]
    fn unsustainable_service_detected() {
        let svc = ServiceConfig::new(2.0, 1.0e6, 1.0e6, 0.5, 1024).unwrap();
        assert!(!svc.is_sustainable());
    }

    #[test]
    fn service_rate_reference_points() {
        assert_eq!(service_data_rate(5.0e6_f64, 1.0), 5.0e6);
        let a = service_data_rate(1.2545e6_f64, 0.55);
        assert!((a - 0.69e6).abs() / 0.69e6 < 0.02);
        let b = service_data_rate(1.282e6_f64, 0.78);
        assert!((b - 1.0e6).abs() / 1.0e6 < 0.02);
    }

    #[test]
    fn unicast_rate_resolves_delay() {
        let link = UnicastLink::with_rate(0.1_f64, 0.5e6).unwrap();
        let path = link.recovery_path(2.0e6);
        assert_eq!(path.transfer_delay, 4.0);
        assert_eq!(path.rtt, 0.1);
        assert!(UnicastLink::with_rate(0.1, 0.0).is_err());
    }

    #[test]
    fn sweep_degenerate_matches_direct() {
        let svc = ServiceConfig::new(2.0, 1.25e6, 1.0e6, 0.8, 1024).unwrap();
        let channel = ErasureChannel::new(0.05).unwrap();
        let rows = sweep_code_rate(&svc, &channel, &[0.8], &[2.0]).unwrap();
        assert_eq!(rows.len(), 1);
        let code = svc.code().unwrap();
        assert_eq!(rows[0].code, code);
        assert_eq!(rows[0].p_loss, segment_loss_probability(&code, &channel));
        assert_eq!(rows[0].service_data_rate, 1.0e6);
        assert!(sweep_code_rate(&svc, &channel, &[], &[2.0]).is_err());
    }

    #[test]
    fn sweep_selection_limits() {
        let svc = ServiceConfig::new(2.0, 1.25e6, 1.0e6, 0.8, 1024).unwrap();
        let channel = ErasureChannel::new(0.05).unwrap();
        let rates = [0.7, 0.8, 0.9, 0.95, 1.0];
        let rows = sweep_code_rate(&svc, &channel, &rates, &[0.5, 2.0]).unwrap();
        assert_eq!(max_code_rate_within(&rows, 2.0, 0.0), None);
        let best = max_code_rate_within(&rows, 2.0, 0.1).unwrap();
        let row = rows.iter().find(|r| r.t_seg == 2.0 && r.code_rate == best).unwrap();
        assert!(row.p_loss <= 0.1);
        assert!(rows
            .iter()
            .filter(|r| r.t_seg == 2.0 && r.code_rate > best)
            .all(|r| r.p_loss > 0.1));
        let lossless = ErasureChannel::lossless();
        let rows = sweep_code_rate(&svc, &lossless, &[1.0], &[2.0]).unwrap();
        assert_eq!(max_code_rate_within(&rows, 2.0, 0.0), None);
    }
}
