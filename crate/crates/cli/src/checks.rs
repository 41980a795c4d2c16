//! Analytic-versus-simulation cross checks run by `mbcast validate`.

use mbcast::fec::{decoder_failure_given_n, segment_loss_probability, ErasureChannel, RaptorCode};
use mbcast::planner::{
    max_protected_burst, min_buffer, plan_buffer_for_burst, plan_buffer_for_loss,
    service_data_rate, RecoveryPath, ServiceConfig, UnicastLink,
};
use mbcast::sim::{
    broadcast_arrivals, run_scenario, BufferSetting, ForcedBurst, LossSpec, Scenario, UserSpec,
};

use crate::error::CliError;

pub const CHECK_NAMES: [&str; 8] = ["eq4", "eq3", "eq5", "eq7", "burst", "fig4", "fig6", "sdr"];

pub const DEFAULT_TRIALS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn within(name: &'static str, measured: f64, expected: f64, tolerance: f64) -> Self {
        CheckResult { name, measured, expected, tolerance, passed: (measured - expected).abs() <= tolerance }
    }
}

/// Loss probability summed over every reception pattern of the block.
fn enumerated_loss(k: u32, r: u32, per: f64) -> f64 {
    let total = k + r;
    (0u32..1 << total)
        .map(|pattern| {
            let received = pattern.count_ones();
            let p = (1.0 - per).powi(received as i32) * per.powi((total - received) as i32);
            let fail = if received < k { 1.0 } else { 0.85 * 0.567f64.powi((received - k) as i32) };
            fail * p
        })
        .sum()
}

fn code(k: u32, r: u32) -> Result<RaptorCode, CliError> {
    Ok(RaptorCode::new(k, r, 1024)?)
}

fn check_eq4() -> Result<CheckResult, CliError> {
    let c = code(10, 4)?;
    let points = [(9, 1.0), (10, 0.85), (12, 0.85 * 0.567 * 0.567)];
    let mut worst = 0.0f64;
    for (n, want) in points {
        let got: f64 = decoder_failure_given_n(&c, n)?;
        worst = worst.max((got - want).abs());
    }
    Ok(CheckResult::within("eq4", worst, 0.0, 1e-9))
}

fn check_eq3() -> Result<CheckResult, CliError> {
    let mut worst = 0.0f64;
    for total in 1..=12u32 {
        for k in 1..=total {
            for per in [0.1, 0.3, 0.5] {
                let analytic = segment_loss_probability(&code(k, total - k)?, &ErasureChannel::new(per)?);
                worst = worst.max((analytic - enumerated_loss(k, total - k, per)).abs());
            }
        }
    }
    Ok(CheckResult::within("eq3", worst, 0.0, 1e-10))
}

fn check_eq5(trials: u64) -> Result<CheckResult, CliError> {
    // k = 10, r = 2 per segment, symbols lost at PER 0.05, FDT loss off
    let svc = ServiceConfig::new(2.0, 1.0e5, 40_960.0, 0.84, 1024)?;
    let link = UnicastLink::with_delay(0.0, 1.0)?;
    let mut s = Scenario::new(svc, link, vec![UserSpec { user_id: 1, loss: LossSpec::Per(0.05) }]);
    s.model_fdt_loss = false;
    s.n_segments = u32::try_from(trials).map_err(|_| CliError::Usage("--trials too large".into()))?;
    s.master_seed = 0x00E5;
    let p = s.analytic_loss(&s.users[0])?;
    let outcomes = broadcast_arrivals(&s, &s.users[0])?;
    let rate = outcomes.iter().filter(|o| o.is_lost()).count() as f64 / trials as f64;
    let three_sigma = 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
    Ok(CheckResult::within("eq5", rate, p, three_sigma))
}

fn burst_scenario(rtt: f64, d_t: f64, t_seg: f64, burst: u32, buffer: f64) -> Result<Scenario, CliError> {
    let svc = ServiceConfig::new(t_seg, 1.25e6, 1.0e6, 0.8, 1024)?;
    let link = UnicastLink::with_delay(rtt, d_t)?;
    let mut s = Scenario::new(svc, link, vec![UserSpec { user_id: 1, loss: LossSpec::SegmentLoss(0.0) }]);
    s.n_segments = 40;
    s.buffer = BufferSetting::Seconds(buffer);
    s.forced_bursts = vec![ForcedBurst { user_id: 1, start_index: 5, length: burst }];
    Ok(s)
}

fn check_eq7() -> Result<CheckResult, CliError> {
    let (rtt, t_seg, d_t) = (0.1, 2.0, 3.0);
    let run = run_scenario(&burst_scenario(rtt, d_t, t_seg, 3, 0.0)?, Some(1))?;
    let last = run.reports[0]
        .recoveries
        .last()
        .copied()
        .ok_or_else(|| CliError::Other("no recoveries recorded".into()))?;
    Ok(CheckResult::within(
        "eq7",
        last.completed_at - last.requested_at,
        rtt + 3.0 * d_t - 2.0 * t_seg,
        1e-9,
    ))
}

fn check_burst() -> Result<CheckResult, CliError> {
    let t_seg = 2.0;
    let mut cases = 0u32;
    let mut held = 0u32;
    for m in 1..=8u32 {
        for mult in [0.5, 1.25, 1.5, 1.75, 2.0] {
            for rtt in [0.0, 0.1] {
                let d_t = mult * t_seg;
                let buffer = min_buffer(m, &RecoveryPath::new(rtt, d_t)?, t_seg)?;
                let fits = run_scenario(&burst_scenario(rtt, d_t, t_seg, m, buffer)?, Some(1))?;
                let mut ok = fits.reports[0].stalls.is_empty();
                if d_t > t_seg {
                    let over = run_scenario(&burst_scenario(rtt, d_t, t_seg, m + 1, buffer)?, Some(1))?;
                    ok &= !over.reports[0].stalls.is_empty();
                }
                cases += 1;
                held += ok as u32;
            }
        }
    }
    Ok(CheckResult::within("burst", held as f64, cases as f64, 0.0))
}

fn check_fig4() -> Result<CheckResult, CliError> {
    let t_seg = 2.0;
    let mut matched = 0;
    for (mult, want) in [(1.25, 2), (1.5, 3), (1.75, 4), (2.0, 5)] {
        let plan = plan_buffer_for_loss(0.0387, 1e-5, &RecoveryPath::new(0.0, mult * t_seg)?, t_seg)?;
        matched += (plan.burst == 4 && plan.segments == want) as u32;
    }
    matched += (max_protected_burst(0.0387, 1e-5)? == 4) as u32;
    Ok(CheckResult::within("fig4", matched as f64, 5.0, 0.0))
}

fn check_fig6() -> Result<CheckResult, CliError> {
    let t_seg = 2.0;
    let mut matched = 0;
    for (mult, want) in [(1.25, 6.0), (2.0, 12.0)] {
        let plan = plan_buffer_for_burst(5, &RecoveryPath::new(0.0, mult * t_seg)?, t_seg)?;
        matched += (plan.rounded_seconds() == want) as u32;
    }
    Ok(CheckResult::within("fig6", matched as f64, 2.0, 0.0))
}

fn check_sdr() -> Result<CheckResult, CliError> {
    let a: f64 = service_data_rate(1.2545e6, 0.55) / 0.69e6 - 1.0;
    let b: f64 = service_data_rate(1.282e6, 0.78) / 1.0e6 - 1.0;
    Ok(CheckResult::within("sdr", a.abs().max(b.abs()), 0.0, 0.02))
}

/// Runs the named checks (all when `only` is empty) in their fixed order.
pub fn run_checks(trials: u64, only: &[String]) -> Result<Vec<CheckResult>, CliError> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    if let Some(unknown) = only.iter().find(|n| !CHECK_NAMES.contains(&n.as_str())) {
        return Err(CliError::Usage(format!(
            "unknown check `{unknown}` (known: {})",
            CHECK_NAMES.join(", ")
        )));
    }
    let mut results = Vec::new();
    for name in CHECK_NAMES {
        if !only.is_empty() && !only.iter().any(|n| n == name) {
            continue;
        }
        results.push(match name {
            "eq4" => check_eq4()?,
            "eq3" => check_eq3()?,
            "eq5" => check_eq5(trials)?,
            "eq7" => check_eq7()?,
            "burst" => check_burst()?,
            "fig4" => check_fig4()?,
            "fig6" => check_fig6()?,
            "sdr" => check_sdr()?,
            _ => unreachable!(),
        });
    }
    Ok(results)
}
