//! Analytic model of AL-FEC protected segment delivery over an i.i.d.
//! packet erasure channel.
//!
//! One encoding symbol travels in one packet, so packet loss and symbol loss
//! are the same event. Each segment is a single source block of `k` source
//! symbols protected by `r` repair symbols. The decoder failure curve is the
//! empirical Raptor model `P(fail | n) = 1` for `n < k` and
//! `0.85 * 0.567^(n - k)` otherwise, applied for every `k >= 1`.

use crate::error::{Error, Result};
use crate::scalar::{ceil_div, from_count, lit, Scalar};

/// Decoder failure probability when exactly `k` symbols are received.
pub const FAILURE_AT_K: f64 = 0.85;
/// Per-extra-symbol decay of the decoder failure probability.
pub const FAILURE_DECAY: f64 = 0.567;
/// Symbol size used when none is configured.
pub const DEFAULT_SYMBOL_SIZE: u32 = 1024;

/// Source and repair symbol counts of one segment's source block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RaptorCode {
    k: u32,
    r: u32,
    symbol_size: u32,
}

impl RaptorCode {
    pub fn new(k: u32, r: u32, symbol_size: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("k", "source block needs at least one source symbol"));
        }
        if symbol_size == 0 {
            return Err(Error::domain("symbol_size", "must be at least one byte"));
        }
        if k.checked_add(r).is_none() {
            return Err(Error::domain("r", "k + r overflows"));
        }
        Ok(RaptorCode { k, r, symbol_size })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn symbol_size(&self) -> u32 {
        self.symbol_size
    }

    /// Number of encoding symbols sent, `k + r`.
    pub fn total(&self) -> u32 {
        self.k + self.r
    }

    /// `k / (k + r)`.
    pub fn code_rate<T: Scalar>(&self) -> T {
        from_count::<T>(self.k as u64) / from_count(self.total() as u64)
    }
}

/// Independent per-packet erasure channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErasureChannel<T> {
    per: T,
}

impl<T: Scalar> ErasureChannel<T> {
    pub fn new(per: T) -> Result<Self> {
        if !(per >= T::zero() && per <= T::one()) {
            return Err(Error::domain("per", format!("{per:?} is not in [0, 1]")));
        }
        Ok(ErasureChannel { per })
    }

    pub fn lossless() -> Self {
        ErasureChannel { per: T::zero() }
    }

    pub fn per(&self) -> T {
        self.per
    }
}

/// Probability that the decoder fails given `n` received symbols.
pub fn decoder_failure_given_n<T: Scalar>(code: &RaptorCode, n: u32) -> Result<T> {
    if n > code.total() {
        return Err(Error::domain("n", format!("{n} exceeds k + r = {}", code.total())));
    }
    Ok(failure_unchecked(code.k, n))
}

fn failure_unchecked<T: Scalar>(k: u32, n: u32) -> T {
    if n < k {
        T::one()
    } else {
        lit::<T>(FAILURE_AT_K) * lit::<T>(FAILURE_DECAY).powi((n - k) as i32)
    }
}

/// Distribution of the number of received symbols, `P(N = n)` for
/// `n = 0..=k + r`.
///
/// Terms are built by the ratio recurrence outward from the mode and then
/// normalized by their sum, so nothing overflows for very large blocks and
/// far tails underflow to zero.
pub fn symbols_received_distribution<T: Scalar>(
    code: &RaptorCode,
    channel: &ErasureChannel<T>,
) -> Vec<T> {
    let total = code.total() as usize;
    let per = channel.per();
    let mut w = vec![T::zero(); total + 1];
    if per == T::zero() {
        w[total] = T::one();
        return w;
    }
    if per == T::one() {
        w[0] = T::one();
        return w;
    }
    let success = T::one() - per;
    let up = success / per;
    let down = per / success;
    let mode = from_count::<T>(total as u64 + 1) * success;
    let mode = mode.floor().to_usize().unwrap_or(0).min(total);

    w[mode] = T::one();
    for n in mode + 1..=total {
        let ratio = from_count::<T>((total - n + 1) as u64) / from_count(n as u64);
        w[n] = w[n - 1] * ratio * up;
    }
    for n in (0..mode).rev() {
        let ratio = from_count::<T>(n as u64 + 1) / from_count((total - n) as u64);
        w[n] = w[n + 1] * ratio * down;
    }
    let sum = w.iter().fold(T::zero(), |acc, &x| acc + x);
    for x in &mut w {
        *x = *x / sum;
    }
    w
}

/// Probability of receiving exactly `n` of the `k + r` symbols.
pub fn symbols_received_pmf<T: Scalar>(
    code: &RaptorCode,
    channel: &ErasureChannel<T>,
    n: u32,
) -> Result<T> {
    let total = code.total();
    if n > total {
        return Err(Error::domain("n", format!("{n} exceeds k + r = {total}")));
    }
    Ok(symbols_received_distribution(code, channel)[n as usize])
}

/// Total probability that a segment is not recovered by the FEC decoder.
pub fn segment_loss_probability<T: Scalar>(code: &RaptorCode, channel: &ErasureChannel<T>) -> T {
    let total = code.total();
    let per = channel.per();
    if per == T::zero() {
        return failure_unchecked(code.k, total);
    }
    if per == T::one() {
        return T::one();
    }
    let pmf = symbols_received_distribution(code, channel);
    let mut sum = T::zero();
    for (n, &p) in pmf.iter().enumerate() {
        sum = sum + failure_unchecked::<T>(code.k, n as u32) * p;
    }
    sum.min(T::one()).max(T::zero())
}

/// Loss probability when the segment's FDT instance also rides the channel
/// as one packet: the segment is usable only if the FDT arrives and the
/// block decodes.
pub fn segment_loss_probability_with_fdt<T: Scalar>(
    code: &RaptorCode,
    channel: &ErasureChannel<T>,
) -> T {
    let p = segment_loss_probability(code, channel);
    T::one() - (T::one() - channel.per()) * (T::one() - p)
}

/// Dimension the code for one segment: `k = ceil(bytes / symbol_size)` and
/// the smallest `k + r` whose realized rate does not exceed `code_rate`.
pub fn code_for_segment<T: Scalar>(
    segment_bytes: u64,
    symbol_size: u32,
    code_rate: T,
) -> Result<RaptorCode> {
    if segment_bytes == 0 {
        return Err(Error::domain("segment_bytes", "must be at least one byte"));
    }
    if symbol_size == 0 {
        return Err(Error::domain("symbol_size", "must be at least one byte"));
    }
    if !(code_rate > T::zero() && code_rate <= T::one()) {
        return Err(Error::domain("code_rate", format!("{code_rate:?} is not in (0, 1]")));
    }
    let k = segment_bytes.div_ceil(symbol_size as u64);
    let k = u32::try_from(k).map_err(|_| Error::domain("segment_bytes", "too many source symbols"))?;
    let total = ceil_div(from_count::<T>(k as u64), code_rate).max(k as u64);
    let total =
        u32::try_from(total).map_err(|_| Error::domain("code_rate", "too many repair symbols"))?;
    RaptorCode::new(k, total - k, symbol_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(k: u32, r: u32) -> RaptorCode {
        RaptorCode::new(k, r, DEFAULT_SYMBOL_SIZE).unwrap()
    }

    fn ch(per: f64) -> ErasureChannel<f64> {
        ErasureChannel::new(per).unwrap()
    }

    #[test]
    fn failure_point_values() {
        let c = code(10, 4);
        assert_eq!(decoder_failure_given_n::<f64>(&c, 9).unwrap(), 1.0);
        assert!((decoder_failure_given_n::<f64>(&c, 10).unwrap() - 0.85).abs() < 1e-12);
        assert!((decoder_failure_given_n::<f64>(&c, 12).unwrap() - 0.273_265_65).abs() < 1e-9);
        assert!(decoder_failure_given_n::<f64>(&c, 15).is_err());
    }

    #[test]
    fn pmf_examples() {
        let c = code(2, 1);
        assert_eq!(symbols_received_pmf(&c, &ch(0.0), 3).unwrap(), 1.0);
        assert_eq!(symbols_received_pmf(&c, &ch(0.0), 2).unwrap(), 0.0);
        assert_eq!(symbols_received_pmf(&c, &ch(1.0), 0).unwrap(), 1.0);
        assert!((symbols_received_pmf(&c, &ch(0.5), 2).unwrap() - 0.375).abs() < 1e-12);
        assert!(symbols_received_pmf(&c, &ch(0.5), 4).is_err());
    }

    #[test]
    fn pmf_large_block_does_not_overflow() {
        let c = code(90_000, 10_000);
        let channel = ch(0.08);
        let pmf = symbols_received_distribution(&c, &channel);
        let sum: f64 = pmf.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "sum = {sum}");
        let mean: f64 = pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        assert!((mean - 92_000.0).abs() < 1e-6, "mean = {mean}");
        assert_eq!(pmf[0], 0.0);
        let p = segment_loss_probability(&c, &channel);
        assert!(p.is_finite() && (0.0..=1.0).contains(&p));
    }

    #[test]
    fn loss_examples() {
        assert_eq!(segment_loss_probability(&code(10, 4), &ch(1.0)), 1.0);
        assert!((segment_loss_probability(&code(10, 4), &ch(0.0)) - 0.087_851_900_552_849_97).abs() < 1e-12);
        assert!((segment_loss_probability(&code(2, 1), &ch(0.5)) - 0.878_993_75).abs() < 1e-12);
    }

    // Reference values from exact rational evaluation of the sum.
    #[test]
    fn loss_large_blocks_frozen() {
        let cases = [
            (100, 20, 0.1, 0.048_557_856_497_794_406),
            (244, 46, 0.1, 0.003_907_139_950_273_882),
            (1000, 100, 0.05, 1.268_292_304_420_839e-7),
        ];
        for (k, r, per, want) in cases {
            let got = segment_loss_probability(&code(k, r), &ch(per));
            assert!(((got - want) / want).abs() < 1e-9, "({k},{r},{per}): {got} vs {want}");
        }
    }

    #[test]
    fn f32_agrees_with_f64() {
        let c = code(10, 4);
        let a = segment_loss_probability(&c, &ErasureChannel::new(0.1f32).unwrap());
        let b = segment_loss_probability(&c, &ch(0.1));
        assert!((a as f64 - b).abs() < 1e-5);
    }

    #[test]
    fn fdt_loss_combines_independently() {
        let c = code(2, 1);
        let p = segment_loss_probability_with_fdt(&c, &ch(0.5));
        assert!((p - (1.0 - 0.5 * (1.0 - 0.878_993_75))).abs() < 1e-12);
    }

    #[test]
    fn code_dimensioning() {
        assert_eq!(code_for_segment(2048, 1024, 1.0).unwrap(), code(2, 0));
        assert_eq!(code_for_segment(2048, 1024, 0.5).unwrap(), code(2, 2));
        assert_eq!(code_for_segment(10240, 1024, 0.84).unwrap(), code(10, 2));
        assert_eq!(code_for_segment(2049, 1024, 1.0).unwrap(), code(3, 0));
        assert_eq!(code_for_segment(9 * 1024, 1024, 0.9).unwrap(), code(9, 1));
        assert!(code_for_segment(2048, 1024, 0.0).is_err());
        assert!(code_for_segment(2048, 1024, 1.01).is_err());
        assert!(code_for_segment(0, 1024, 0.5).is_err());
    }

    #[test]
    fn invalid_inputs() {
        assert!(RaptorCode::new(0, 4, 1024).is_err());
        assert!(RaptorCode::new(4, 4, 0).is_err());
        assert!(ErasureChannel::new(-0.1).is_err());
        assert!(ErasureChannel::new(f64::NAN).is_err());
        assert!(ErasureChannel::new(1.5).is_err());
    }
}
