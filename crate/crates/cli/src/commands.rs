//! Subcommand implementations. Each returns the exit code on success.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use mbcast::fec::{code_for_segment, segment_loss_probability, ErasureChannel};
use mbcast::metrics::{classify_severity, summarize};
use mbcast::planner::{
    availability_start_time, max_code_rate_within, plan_buffer_for_loss, playback_deadline,
    sweep_code_rate, DelayBudget, RecoveryPath, ServiceConfig, UnicastLink,
};
use mbcast::sim::run_scenario;
use mbcast::RaptorCode;

use crate::checks::run_checks;
use crate::error::{CliError, EXIT_CHECK_FAILED, EXIT_OK};
use crate::format::{round_sig, sig};
use crate::scenario::ScenarioFile;
use crate::{OutputFormat, PlanBufferArgs, PlanTimingArgs, SimRunArgs, SweepArgs, ValidateArgs};

/// Ordered `(name, value)` pairs rendered as text, CSV or JSON.
struct Record(Vec<(&'static str, Value)>);

enum Value {
    Num(f64),
    Int(u64),
    Bool(bool),
}

impl Value {
    fn text(&self) -> String {
        match self {
            Value::Num(x) => sig(*x),
            Value::Int(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Value::Num(x) => serde_json::json!(round_sig(*x)),
            Value::Int(n) => serde_json::json!(n),
            Value::Bool(b) => serde_json::json!(b),
        }
    }
}

impl Record {
    fn write(&self, format: OutputFormat, out: &mut dyn Write) -> Result<(), CliError> {
        match format {
            OutputFormat::Text => {
                for (k, v) in &self.0 {
                    writeln!(out, "{k}={}", v.text())?;
                }
            }
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(self.0.iter().map(|(k, _)| *k))?;
                w.write_record(self.0.iter().map(|(_, v)| v.text()))?;
                out.write_all(&w.into_inner().map_err(|e| CliError::Other(e.to_string()))?)?;
            }
            OutputFormat::Json => {
                // Keys in insertion order, so build the object by hand.
                let body: Vec<String> = self
                    .0
                    .iter()
                    .map(|(k, v)| format!("  {}: {}", serde_json::json!(k), v.json()))
                    .collect();
                writeln!(out, "{{\n{}\n}}", body.join(",\n"))?;
            }
        }
        Ok(())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn non_negative(flag: &str, value: f64) -> Result<f64, CliError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(usage(format!("--{flag} must be a finite non-negative number, got {value}")))
    }
}

fn plan_code(a: &PlanBufferArgs) -> Result<Option<RaptorCode>, CliError> {
    let cr = match a.code_rate {
        Some(cr) => cr,
        None => return Ok(None),
    };
    let bytes = match (a.k, a.segment_bytes) {
        (Some(k), None) => k as u64 * a.symbol_size as u64,
        (None, Some(b)) => b,
        (Some(_), Some(_)) => return Err(usage("give only one of --k / --segment-bytes")),
        (None, None) => match a.media_bitrate {
            Some(rate) => ServiceConfig::new(a.t_seg, 1.0, rate, cr, a.symbol_size)?.segment_bytes(),
            None => return Err(usage("--code-rate needs --k, --segment-bytes or --media-bitrate")),
        },
    };
    Ok(Some(code_for_segment(bytes, a.symbol_size, cr)?))
}

pub fn plan_buffer(a: &PlanBufferArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if !(a.t_seg > 0.0) {
        return Err(usage(format!("--t-seg must be positive, got {}", a.t_seg)));
    }
    let fec_given = a.per.is_some() || a.k.is_some() || a.segment_bytes.is_some() || a.code_rate.is_some();
    let code = plan_code(a)?;
    let p_loss = match (a.p_loss, a.per) {
        (Some(_), _) if fec_given => {
            return Err(usage("--p-loss conflicts with --per / --k / --segment-bytes / --code-rate"))
        }
        (Some(p), None) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(usage(format!("--p-loss must be in [0, 1], got {p}")));
            }
            p
        }
        (None, Some(per)) => {
            let code = code.ok_or_else(|| usage("--per needs --code-rate and one of --k / --segment-bytes"))?;
            segment_loss_probability(&code, &ErasureChannel::new(per)?)
        }
        _ => return Err(usage("give either --p-loss or --per with --code-rate")),
    };
    let rtt = non_negative("rtt", a.rtt)?;
    let link = match (a.d_t, a.unicast_rate) {
        (Some(d_t), None) => UnicastLink::with_delay(rtt, d_t)?,
        (None, Some(rate)) => UnicastLink::with_rate(rtt, rate)?,
        _ => return Err(usage("give one of --d-t / --unicast-rate")),
    };
    let segment_bits = match (code, a.media_bitrate) {
        (Some(c), _) => c.k() as f64 * c.symbol_size() as f64 * 8.0,
        (None, Some(rate)) => rate * a.t_seg,
        (None, None) if a.d_t.is_some() => 0.0,
        (None, None) => return Err(usage("--unicast-rate needs a segment size (--media-bitrate)")),
    };
    let path = link.recovery_path(segment_bits);
    let plan = plan_buffer_for_loss(p_loss, a.threshold, &path, a.t_seg)?;

    let mut fields = vec![("p_loss", Value::Num(p_loss))];
    if let Some(c) = code {
        fields.push(("k", Value::Int(c.k() as u64)));
        fields.push(("r", Value::Int(c.r() as u64)));
    }
    fields.extend([
        ("threshold", Value::Num(a.threshold)),
        ("m", Value::Int(plan.burst as u64)),
        ("d_t_seconds", Value::Num(path.transfer_delay)),
        ("d_b_seconds", Value::Num(plan.seconds)),
        ("d_b_segments", Value::Int(plan.segments)),
        ("d_b_rounded_seconds", Value::Num(plan.rounded_seconds())),
    ]);
    Record(fields).write(a.format, out)?;
    Ok(EXIT_OK)
}

pub fn plan_timing(a: &PlanTimingArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let budget = DelayBudget::new(
        non_negative("d-se", a.d_se)?,
        non_negative("d-fe", a.d_fe)?,
        non_negative("d-fd", a.d_fd)?,
        non_negative("d-pvs", a.d_pvs)?,
    )?;
    let d_b = non_negative("d-b", a.d_b)?;
    let svc = ServiceConfig::new(a.t_seg, a.r_embms, a.media_bitrate, a.code_rate, mbcast::fec::DEFAULT_SYMBOL_SIZE)?;
    if !svc.is_sustainable() {
        writeln!(
            err,
            "warning: a coded segment needs {} s of airtime but segments arrive every {} s",
            sig(svc.broadcast_transfer_time()),
            sig(svc.t_seg)
        )?;
    }
    let ast = availability_start_time(&budget, &svc);
    Record(vec![
        ("d_vs", Value::Num(svc.broadcast_transfer_time())),
        ("availability_start_time", Value::Num(ast)),
        ("min_buffer_time", Value::Num(d_b)),
        ("playback_deadline", Value::Num(playback_deadline(ast, d_b))),
        ("sustainable", Value::Bool(svc.is_sustainable())),
    ])
    .write(a.format, out)?;
    Ok(EXIT_OK)
}

pub const SWEEP_COLUMNS: [&str; 10] =
    ["t_seg", "code_rate", "k", "r", "p_loss", "sdr", "m", "d_b_seconds", "d_b_segments", "selected"];

pub fn sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if !(0.0..=1.0).contains(&a.recovery_limit) {
        return Err(usage(format!("--recovery-limit must be in [0, 1], got {}", a.recovery_limit)));
    }
    let rtt = non_negative("rtt", a.rtt)?;
    let svc = ServiceConfig::new(a.t_segs[0], a.r_embms, a.media_bitrate, a.code_rates[0], a.symbol_size)?;
    let rows = sweep_code_rate(&svc, &ErasureChannel::new(a.per)?, &a.code_rates, &a.t_segs)?;

    let mut table: Vec<Vec<String>> = Vec::with_capacity(rows.len());
    let mut json_rows = Vec::with_capacity(rows.len());
    for row in &rows {
        let point = svc.with_t_seg(row.t_seg)?;
        let path = match (a.d_t, a.d_t_factor, a.unicast_rate) {
            (Some(d_t), None, None) => RecoveryPath::new(rtt, d_t)?,
            (None, Some(f), None) => RecoveryPath::new(rtt, f * row.t_seg)?,
            (None, None, Some(rate)) => UnicastLink::with_rate(rtt, rate)?.recovery_path(point.segment_bits()),
            _ => return Err(usage("give one of --d-t / --d-t-factor / --unicast-rate")),
        };
        let plan = match plan_buffer_for_loss(row.p_loss, a.threshold, &path, row.t_seg) {
            Ok(p) => Some(p),
            Err(mbcast::Error::Unsatisfiable { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let selected = max_code_rate_within(&rows, row.t_seg, a.recovery_limit) == Some(row.code_rate);
        let sdr = row.service_data_rate;
        table.push(vec![
            sig(row.t_seg),
            sig(row.code_rate),
            row.code.k().to_string(),
            row.code.r().to_string(),
            sig(row.p_loss),
            sig(sdr),
            plan.map(|p| p.burst.to_string()).unwrap_or_default(),
            plan.map(|p| sig(p.seconds)).unwrap_or_default(),
            plan.map(|p| p.segments.to_string()).unwrap_or_default(),
            selected.to_string(),
        ]);
        json_rows.push(SweepJson {
            t_seg: round_sig(row.t_seg),
            code_rate: round_sig(row.code_rate),
            k: row.code.k(),
            r: row.code.r(),
            p_loss: round_sig(row.p_loss),
            sdr: round_sig(sdr),
            m: plan.map(|p| p.burst),
            d_b_seconds: plan.map(|p| round_sig(p.seconds)),
            d_b_segments: plan.map(|p| p.segments),
            selected,
        });
    }

    let bytes = match a.format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&json_rows)?;
            s.push('\n');
            s.into_bytes()
        }
        OutputFormat::Csv | OutputFormat::Text => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(SWEEP_COLUMNS)?;
            for r in &table {
                w.write_record(r)?;
            }
            w.into_inner().map_err(|e| CliError::Other(e.to_string()))?
        }
    };
    match &a.out {
        Some(path) => fs::write(path, bytes)?,
        None => out.write_all(&bytes)?,
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SweepJson {
    t_seg: f64,
    code_rate: f64,
    k: u32,
    r: u32,
    p_loss: f64,
    sdr: f64,
    m: Option<u32>,
    d_b_seconds: Option<f64>,
    d_b_segments: Option<u64>,
    selected: bool,
}

#[derive(Serialize)]
struct Histogram {
    #[serde(rename = "0")]
    zero: usize,
    #[serde(rename = "1")]
    one: usize,
    #[serde(rename = "2")]
    two: usize,
    #[serde(rename = "3plus")]
    three_plus: usize,
}

#[derive(Serialize)]
struct SummaryJson {
    n_users: usize,
    histogram: Histogram,
    severe_fraction: f64,
    percentile_loss: BTreeMap<String, f64>,
    percentile_stalls: BTreeMap<String, u32>,
    buffer_s: f64,
    availability_start_s: f64,
    n_segments: u32,
    scenario_hash: String,
    seed: u64,
}

pub const USERS_COLUMNS: [&str; 7] =
    ["user_id", "loss_rate", "stall_count", "total_stall_s", "startup_s", "e2e_latency_s", "severity"];

fn parse_threads(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(usage(format!("{} must be a positive integer, got `{v}`", crate::THREADS_ENV))),
        },
    }
}

pub fn sim_run(a: &SimRunArgs, threads: Option<&str>, out: &mut dyn Write) -> Result<i32, CliError> {
    let threads = parse_threads(threads)?;
    let text = fs::read_to_string(&a.scenario)
        .map_err(|e| usage(format!("cannot read {}: {e}", a.scenario.display())))?;
    let mut file = ScenarioFile::parse(&text)?;
    if let Some(seed) = a.seed {
        file.seed = seed;
    }
    let scenario = file.to_scenario()?;
    let run = run_scenario(&scenario, threads)?;
    let reports: Vec<_> = run.reports.iter().map(|r| r.user_report()).collect();
    let summary = summarize(&reports)?;

    fs::create_dir_all(&a.out)?;
    write_users(&a.out.join("users.csv"), &reports)?;

    let json = SummaryJson {
        n_users: summary.n_users,
        histogram: Histogram {
            zero: summary.histogram.zero,
            one: summary.histogram.one,
            two: summary.histogram.two,
            three_plus: summary.histogram.three_plus,
        },
        severe_fraction: round_sig(summary.severe_fraction),
        percentile_loss: summary.percentile_loss.iter().map(|(p, v)| (p.to_string(), round_sig(*v))).collect(),
        percentile_stalls: summary.percentile_stalls.iter().map(|(p, v)| (p.to_string(), *v)).collect(),
        buffer_s: round_sig(run.buffer_seconds),
        availability_start_s: round_sig(run.availability_start),
        n_segments: scenario.n_segments,
        scenario_hash: file.hash(),
        seed: file.seed,
    };
    let mut body = serde_json::to_string_pretty(&json)?;
    body.push('\n');
    fs::write(a.out.join("summary.json"), body)?;

    writeln!(
        out,
        "users={} buffer_s={} severe_fraction={} -> {}",
        summary.n_users,
        sig(run.buffer_seconds),
        sig(summary.severe_fraction),
        a.out.display()
    )?;
    Ok(EXIT_OK)
}

fn write_users(path: &Path, reports: &[mbcast::metrics::UserReport]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(USERS_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.user_id.to_string(),
            sig(r.loss_rate),
            r.stall_count.to_string(),
            sig(r.total_stall_seconds),
            sig(r.startup_seconds),
            sig(r.end_to_end_latency_seconds),
            classify_severity(r).as_str().to_owned(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn validate(a: &ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let results = run_checks(a.trials, &a.checks)?;
    let mut failed = Vec::new();
    for r in &results {
        writeln!(
            out,
            "{} {:<6} measured={} expected={} tolerance={}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            sig(r.measured),
            sig(r.expected),
            sig(r.tolerance)
        )?;
        if !r.passed {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        writeln!(err, "failed checks: {}", failed.join(", "))?;
        Ok(EXIT_CHECK_FAILED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_env_parsing() {
        assert_eq!(parse_threads(None).unwrap(), None);
        assert_eq!(parse_threads(Some("4")).unwrap(), Some(4));
        assert!(parse_threads(Some("0")).is_err());
        assert!(parse_threads(Some("many")).is_err());
    }
}
