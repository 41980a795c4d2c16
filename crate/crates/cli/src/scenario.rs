//! Scenario file schema (TOML). Units are part of every key name.
//!
//! ```toml
//! seed = 42
//! n_segments = 2000
//! threshold = 1e-5
//! buffer_s = "auto"            # or seconds, e.g. 6.0
//! stall_policy = "resume"      # or "refill"
//! model_fdt_loss = true
//! design_percentile = 10.0
//!
//! [service]
//! t_seg_s = 2.0
//! r_embms_bps = 1.25e6
//! media_bitrate_bps = 1.0e6
//! code_rate = 0.84
//! symbol_size_bytes = 1024
//!
//! [delays]
//! segment_generation_s = 2.0
//! fec_encoding_s = 0.1
//! fec_decoding_s = 0.1
//! safety_margin_s = 0.5
//!
//! [unicast]
//! rtt_s = 0.05
//! d_t_s = 4.0                  # or rate_bps = 5e5
//!
//! [[users]]
//! id = 1
//! p_loss = 0.0387              # or per = 0.05
//!
//! [[user_ranges]]              # count users with ids first_id.. whose loss
//! first_id = 100               # is from + (to - from) * ((i + 0.5) / count)^exponent
//! count = 399
//! p_loss_from = 0.0            # or per_from / per_to
//! p_loss_to = 0.25
//! exponent = 4.0
//!
//! [[forced_bursts]]
//! user_id = 1
//! start_index = 10
//! length = 4
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mbcast::fec::DEFAULT_SYMBOL_SIZE;
use mbcast::planner::{DelayBudget, ServiceConfig, UnicastLink, DEFAULT_THRESHOLD};
use mbcast::sim::{BufferSetting, ForcedBurst, LossSpec, Scenario, StallPolicy, UserSpec};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub n_segments: u32,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub buffer_s: BufferField,
    #[serde(default)]
    pub stall_policy: PolicyField,
    #[serde(default = "default_true")]
    pub model_fdt_loss: bool,
    #[serde(default = "default_percentile")]
    pub design_percentile: f64,
    pub service: ServiceSection,
    #[serde(default)]
    pub delays: DelaySection,
    pub unicast: UnicastSection,
    #[serde(default)]
    pub users: Vec<UserEntry>,
    #[serde(default)]
    pub user_ranges: Vec<UserRange>,
    #[serde(default)]
    pub forced_bursts: Vec<BurstEntry>,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_true() -> bool {
    true
}

fn default_percentile() -> f64 {
    10.0
}

fn default_symbol_size() -> u32 {
    DEFAULT_SYMBOL_SIZE
}

fn default_exponent() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BufferField {
    Seconds(f64),
    Keyword(String),
}

impl Default for BufferField {
    fn default() -> Self {
        BufferField::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyField {
    #[default]
    Resume,
    Refill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    pub t_seg_s: f64,
    pub r_embms_bps: f64,
    pub media_bitrate_bps: f64,
    pub code_rate: f64,
    #[serde(default = "default_symbol_size")]
    pub symbol_size_bytes: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySection {
    #[serde(default)]
    pub segment_generation_s: f64,
    #[serde(default)]
    pub fec_encoding_s: f64,
    #[serde(default)]
    pub fec_decoding_s: f64,
    #[serde(default)]
    pub safety_margin_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnicastSection {
    #[serde(default)]
    pub rtt_s: f64,
    pub d_t_s: Option<f64>,
    pub rate_bps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserEntry {
    pub id: u32,
    pub per: Option<f64>,
    pub p_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserRange {
    pub first_id: u32,
    pub count: u32,
    pub per_from: Option<f64>,
    pub per_to: Option<f64>,
    pub p_loss_from: Option<f64>,
    pub p_loss_to: Option<f64>,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstEntry {
    pub user_id: u32,
    pub start_index: u32,
    pub length: u32,
}

fn invalid(field: impl std::fmt::Display, reason: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("scenario field `{field}`: {reason}"))
}

fn loss_spec(field: &str, per: Option<f64>, p_loss: Option<f64>) -> Result<LossSpec, CliError> {
    match (per, p_loss) {
        (Some(p), None) => Ok(LossSpec::Per(p)),
        (None, Some(p)) => Ok(LossSpec::SegmentLoss(p)),
        _ => Err(invalid(field, "exactly one of `per` / `p_loss` is required")),
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("scenario: {e}")))
    }

    /// SHA-256 over the canonical JSON form of the parsed file.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        let s = &self.service;
        let svc = ServiceConfig::new(s.t_seg_s, s.r_embms_bps, s.media_bitrate_bps, s.code_rate, s.symbol_size_bytes)
            .map_err(|e| invalid("service", e))?;
        let d = &self.delays;
        let budget = DelayBudget::new(d.segment_generation_s, d.fec_encoding_s, d.fec_decoding_s, d.safety_margin_s)
            .map_err(|e| invalid("delays", e))?;
        let u = &self.unicast;
        let link = match (u.d_t_s, u.rate_bps) {
            (Some(d_t), None) => UnicastLink::with_delay(u.rtt_s, d_t),
            (None, Some(rate)) => UnicastLink::with_rate(u.rtt_s, rate),
            _ => return Err(invalid("unicast", "exactly one of `d_t_s` / `rate_bps` is required")),
        }
        .map_err(|e| invalid("unicast", e))?;

        let mut users = Vec::new();
        for (i, entry) in self.users.iter().enumerate() {
            let loss = loss_spec(&format!("users[{i}]"), entry.per, entry.p_loss)?;
            users.push(UserSpec { user_id: entry.id, loss });
        }
        for (i, range) in self.user_ranges.iter().enumerate() {
            let field = format!("user_ranges[{i}]");
            let (from, to, per_mode) = match (range.per_from, range.per_to, range.p_loss_from, range.p_loss_to) {
                (Some(a), Some(b), None, None) => (a, b, true),
                (None, None, Some(a), Some(b)) => (a, b, false),
                _ => return Err(invalid(&field, "give either per_from/per_to or p_loss_from/p_loss_to")),
            };
            if !(range.exponent > 0.0) {
                return Err(invalid(format!("{field}.exponent"), "must be positive"));
            }
            for j in 0..range.count {
                let u = (j as f64 + 0.5) / range.count as f64;
                let value = from + (to - from) * u.powf(range.exponent);
                let id = range
                    .first_id
                    .checked_add(j)
                    .ok_or_else(|| invalid(format!("{field}.count"), "user ids overflow"))?;
                let loss = if per_mode { LossSpec::Per(value) } else { LossSpec::SegmentLoss(value) };
                users.push(UserSpec { user_id: id, loss });
            }
        }

        let buffer = match &self.buffer_s {
            BufferField::Seconds(s) => BufferSetting::Seconds(*s),
            BufferField::Keyword(k) if k == "auto" => BufferSetting::Auto,
            BufferField::Keyword(k) => return Err(invalid("buffer_s", format!("expected \"auto\" or seconds, found `{k}`"))),
        };

        let mut scenario = Scenario::new(svc, link, users);
        scenario.budget = budget;
        scenario.threshold = self.threshold;
        scenario.n_segments = self.n_segments;
        scenario.buffer = buffer;
        scenario.master_seed = self.seed;
        scenario.stall_policy = match self.stall_policy {
            PolicyField::Resume => StallPolicy::ResumeImmediately,
            PolicyField::Refill => StallPolicy::Refill,
        };
        scenario.model_fdt_loss = self.model_fdt_loss;
        scenario.design_percentile = self.design_percentile;
        scenario.forced_bursts = self
            .forced_bursts
            .iter()
            .map(|b| ForcedBurst { user_id: b.user_id, start_index: b.start_index, length: b.length })
            .collect();
        scenario.validate().map_err(|e| match e {
            mbcast::Error::Config { field, reason } => invalid(field, reason),
            other => CliError::Usage(other.to_string()),
        })?;
        Ok(scenario)
    }
}
