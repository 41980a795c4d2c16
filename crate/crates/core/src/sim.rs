//! Deterministic discrete-event simulation of one broadcast session per user.
//!
//! Each user is an independent state machine driven by three event kinds:
//! the availability instant of a segment (broadcast delivery or, if the
//! segment was lost, a unicast request), completion of a unicast recovery,
//! and the instant playback needs the next segment. Unicast recoveries are
//! served one at a time over a persistent connection.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fec::{
    segment_loss_probability, segment_loss_probability_with_fdt, ErasureChannel, RaptorCode,
};
use crate::flute::{adjudicate_decode_with, apply_channel_with, packetize, SourceBlockPlan, SymbolPacket};
use crate::metrics::{worst_percentile_loss, UserReport};
use crate::planner::{
    availability_start_time, plan_buffer_for_loss, DelayBudget, RecoveryPath, ServiceConfig,
    UnicastLink,
};

/// Stalls shorter than this are treated as float noise, not events.
pub const TIME_EPSILON: f64 = 1e-9;

/// How a user's broadcast losses are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    /// Packet error rate; symbols, FDT and decoder are simulated.
    Per(f64),
    /// Segment loss probability drawn directly per segment.
    SegmentLoss(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserSpec {
    pub user_id: u32,
    pub loss: LossSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BufferSetting {
    /// Size the buffer with the planner at the population's design
    /// percentile.
    Auto,
    Seconds(f64),
}

/// Segments `start_index .. start_index + length` are lost on broadcast for
/// `user_id` regardless of the channel draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForcedBurst {
    pub user_id: u32,
    pub start_index: u32,
    pub length: u32,
}

/// What the player does once a missing segment finally arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StallPolicy {
    /// Resume as soon as the missing segment is in the cache.
    #[default]
    ResumeImmediately,
    /// Resume once a full buffer's worth of segments from the missing one on
    /// is cached.
    Refill,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub svc: ServiceConfig<f64>,
    pub budget: DelayBudget<f64>,
    pub link: UnicastLink<f64>,
    pub threshold: f64,
    pub n_segments: u32,
    pub users: Vec<UserSpec>,
    pub buffer: BufferSetting,
    pub master_seed: u64,
    pub forced_bursts: Vec<ForcedBurst>,
    pub stall_policy: StallPolicy,
    /// Lose the segment when its single-packet FDT instance is dropped.
    pub model_fdt_loss: bool,
    /// Worst-tail percentile of users the automatic buffer is sized for.
    pub design_percentile: f64,
}

impl Scenario {
    /// Scenario with defaults for everything but the service, link and users.
    pub fn new(svc: ServiceConfig<f64>, link: UnicastLink<f64>, users: Vec<UserSpec>) -> Self {
        Scenario {
            svc,
            budget: DelayBudget::zero(),
            link,
            threshold: crate::planner::DEFAULT_THRESHOLD,
            n_segments: 1000,
            users,
            buffer: BufferSetting::Auto,
            master_seed: 0,
            forced_bursts: Vec::new(),
            stall_policy: StallPolicy::default(),
            model_fdt_loss: true,
            design_percentile: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_segments == 0 {
            return Err(Error::config("n_segments", "must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config("threshold", format!("{} is not in (0, 1)", self.threshold)));
        }
        if !(self.design_percentile > 0.0 && self.design_percentile < 100.0) {
            return Err(Error::config(
                "design_percentile",
                format!("{} is not in (0, 100)", self.design_percentile),
            ));
        }
        if self.users.is_empty() {
            return Err(Error::config("users", "at least one user is required"));
        }
        let mut ids: Vec<u32> = self.users.iter().map(|u| u.user_id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config("users", format!("duplicate user_id {}", w[0])));
        }
        for (i, user) in self.users.iter().enumerate() {
            let (name, p) = match user.loss {
                LossSpec::Per(p) => ("per", p),
                LossSpec::SegmentLoss(p) => ("p_loss", p),
            };
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("users[{i}].{name}"), format!("{p} is not in [0, 1]")));
            }
        }
        if let BufferSetting::Seconds(s) = self.buffer {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config("buffer_seconds", format!("{s} is not a non-negative number")));
            }
        }
        for (i, burst) in self.forced_bursts.iter().enumerate() {
            if ids.binary_search(&burst.user_id).is_err() {
                return Err(Error::config(
                    format!("forced_bursts[{i}].user_id"),
                    format!("unknown user {}", burst.user_id),
                ));
            }
            if burst.length == 0 {
                return Err(Error::config(format!("forced_bursts[{i}].length"), "must be at least 1"));
            }
            if burst.start_index as u64 + burst.length as u64 > self.n_segments as u64 {
                return Err(Error::config(
                    format!("forced_bursts[{i}].start_index"),
                    "burst runs past the last segment",
                ));
            }
        }
        if self.users.iter().any(|u| matches!(u.loss, LossSpec::Per(_))) {
            self.svc.code().map_err(|e| Error::config("svc", e.to_string()))?;
        }
        Ok(())
    }

    pub fn recovery_path(&self) -> RecoveryPath<f64> {
        self.link.recovery_path(self.svc.segment_bits())
    }

    pub fn availability_start(&self) -> f64 {
        availability_start_time(&self.budget, &self.svc)
    }

    /// Analytic per-segment loss probability of a user.
    pub fn analytic_loss(&self, user: &UserSpec) -> Result<f64> {
        match user.loss {
            LossSpec::SegmentLoss(p) => Ok(p),
            LossSpec::Per(per) => {
                let code = self.svc.code()?;
                let channel = ErasureChannel::new(per)?;
                Ok(if self.model_fdt_loss {
                    segment_loss_probability_with_fdt(&code, &channel)
                } else {
                    segment_loss_probability(&code, &channel)
                })
            }
        }
    }

    /// Buffer level used by every client in seconds. `Auto` plans for the
    /// design-percentile user and rounds up to whole segments.
    pub fn resolve_buffer(&self) -> Result<f64> {
        match self.buffer {
            BufferSetting::Seconds(s) => Ok(s),
            BufferSetting::Auto => {
                let losses = self
                    .users
                    .iter()
                    .map(|u| self.analytic_loss(u))
                    .collect::<Result<Vec<_>>>()?;
                let design = worst_percentile_loss(&losses, self.design_percentile)?;
                let plan =
                    plan_buffer_for_loss(design, self.threshold, &self.recovery_path(), self.svc.t_seg)?;
                Ok(plan.rounded_seconds())
            }
        }
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of a user's private random stream.
pub fn user_seed(master_seed: u64, user_id: u32) -> u64 {
    mix64(mix64(master_seed) ^ mix64(0x5EED_0000_0000_0000 | user_id as u64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentOutcome {
    /// In the cache at the given instant.
    Delivered(f64),
    Lost,
}

impl SegmentOutcome {
    pub fn is_lost(&self) -> bool {
        matches!(self, SegmentOutcome::Lost)
    }
}

/// Broadcast outcome of every segment for one user. Surviving segment `i`
/// lands in the cache at `availability_start + i * t_seg`.
pub fn broadcast_arrivals(scenario: &Scenario, user: &UserSpec) -> Result<Vec<SegmentOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(user_seed(scenario.master_seed, user.user_id));
    let ast = scenario.availability_start();
    let t_seg = scenario.svc.t_seg;
    let n = scenario.n_segments;

    let mut lost: Vec<bool> = match user.loss {
        LossSpec::SegmentLoss(p) => {
            ErasureChannel::new(p)?;
            (0..n).map(|_| rng.gen_bool(p)).collect()
        }
        LossSpec::Per(per) => {
            let channel = ErasureChannel::new(per)?;
            let code = scenario.svc.code()?;
            let block = SourceBlockPlan::new(1, code, scenario.svc.segment_bytes())?;
            let packets = packetize(&block);
            (0..n)
                .map(|_| symbol_level_loss(&code, &packets, &channel, scenario.model_fdt_loss, &mut rng))
                .collect::<Result<_>>()?
        }
    };
    for burst in scenario.forced_bursts.iter().filter(|b| b.user_id == user.user_id) {
        let end = (burst.start_index + burst.length).min(n);
        for flag in &mut lost[burst.start_index.min(n) as usize..end as usize] {
            *flag = true;
        }
    }
    Ok(lost
        .into_iter()
        .enumerate()
        .map(|(i, l)| if l { SegmentOutcome::Lost } else { SegmentOutcome::Delivered(ast + i as f64 * t_seg) })
        .collect())
}

fn symbol_level_loss<R: Rng>(
    code: &RaptorCode,
    packets: &[SymbolPacket],
    channel: &ErasureChannel<f64>,
    model_fdt_loss: bool,
    rng: &mut R,
) -> Result<bool> {
    let fdt_lost = model_fdt_loss && rng.gen_bool(channel.per());
    let received = apply_channel_with(packets, channel, rng).len() as u32;
    let decoded = adjudicate_decode_with(code, received, rng)?;
    Ok(fdt_lost || !decoded)
}

/// A persistent unicast connection serving one recovery at a time.
#[derive(Debug, Clone, Copy)]
pub struct RecoveryConnection {
    path: RecoveryPath<f64>,
    last_completion: f64,
}

impl RecoveryConnection {
    pub fn new(path: RecoveryPath<f64>) -> Self {
        RecoveryConnection { path, last_completion: f64::NEG_INFINITY }
    }

    /// Completion time of a request issued at `treq`: the response starts
    /// after one RTT or after the previous response finishes, whichever is
    /// later, and takes one transfer delay.
    pub fn request(&mut self, treq: f64) -> f64 {
        let start = (treq + self.path.rtt).max(self.last_completion);
        self.last_completion = start + self.path.transfer_delay;
        self.last_completion
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryRecord {
    pub segment: u32,
    pub requested_at: f64,
    pub completed_at: f64,
}

/// Completion times for a batch of requests `(segment, treq)` served in
/// order over one connection.
pub fn unicast_recovery(requests: &[(u32, f64)], path: &RecoveryPath<f64>) -> Vec<RecoveryRecord> {
    let mut conn = RecoveryConnection::new(*path);
    requests
        .iter()
        .map(|&(segment, requested_at)| RecoveryRecord {
            segment,
            requested_at,
            completed_at: conn.request(requested_at),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StallEvent {
    pub start: f64,
    pub duration: f64,
    pub first_missing_segment: u32,
}

/// Outcome of one user's session.
#[derive(Debug, Clone, PartialEq)]
pub struct StallReport {
    pub user_id: u32,
    pub availability_start: f64,
    pub buffer_seconds: f64,
    /// Instant playback of the first segment began.
    pub playback_start: f64,
    pub n_segments: u32,
    pub broadcast_losses: u32,
    pub stalls: Vec<StallEvent>,
    pub recoveries: Vec<RecoveryRecord>,
    /// Instant the last segment finished playing.
    pub finished_at: f64,
}

impl StallReport {
    pub fn total_stall_seconds(&self) -> f64 {
        self.stalls.iter().map(|s| s.duration).sum()
    }

    pub fn loss_rate(&self) -> f64 {
        self.broadcast_losses as f64 / self.n_segments as f64
    }

    pub fn user_report(&self) -> UserReport {
        UserReport {
            user_id: self.user_id,
            stall_count: self.stalls.len() as u32,
            total_stall_seconds: self.total_stall_seconds(),
            startup_seconds: self.buffer_seconds,
            end_to_end_latency_seconds: self.playback_start,
            loss_rate: self.loss_rate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Available,
    RecoveryComplete,
    PlaybackNeed,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    segment: u32,
    kind: EventKind,
}

// Users run in separate queues, so (time, segment, kind) is the full
// (time, user, segment, kind) order.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.segment.cmp(&other.segment))
            .then(self.kind.cmp(&other.kind))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

/// Mutable client state while a session runs.
#[derive(Debug)]
pub struct ClientState {
    /// Arrival instant of each cached segment.
    pub cache: Vec<Option<f64>>,
    /// Media seconds played so far.
    pub play_position: f64,
    pub playback_started_at: f64,
    /// Segment the player is blocked on and since when.
    stalled: Option<(u32, f64)>,
    pub stall_log: Vec<StallEvent>,
    pub recoveries: Vec<RecoveryRecord>,
}

struct Session<'a> {
    outcomes: &'a [SegmentOutcome],
    t_seg: f64,
    policy: StallPolicy,
    refill_segments: u32,
    conn: RecoveryConnection,
    queue: BinaryHeap<Reverse<Event>>,
    state: ClientState,
    finished_at: Option<f64>,
}

impl Session<'_> {
    fn push(&mut self, time: f64, segment: u32, kind: EventKind) {
        self.queue.push(Reverse(Event { time, segment, kind }));
    }

    fn n(&self) -> u32 {
        self.outcomes.len() as u32
    }

    fn cache_insert(&mut self, segment: u32, now: f64) {
        self.state.cache[segment as usize] = Some(now);
        if let Some((missing, since)) = self.state.stalled {
            if self.can_resume(missing) {
                self.resume(missing, since, now);
            }
        }
    }

    fn can_resume(&self, missing: u32) -> bool {
        let window = match self.policy {
            StallPolicy::ResumeImmediately => 1,
            StallPolicy::Refill => self.refill_segments.max(1),
        };
        let end = (missing + window).min(self.n());
        (missing..end).all(|i| self.state.cache[i as usize].is_some())
    }

    fn resume(&mut self, segment: u32, since: f64, now: f64) {
        self.state.stalled = None;
        let duration = now - since;
        let play_from = if duration > TIME_EPSILON {
            self.state.stall_log.push(StallEvent { start: since, duration, first_missing_segment: segment });
            now
        } else {
            since
        };
        self.play(segment, play_from);
    }

    fn play(&mut self, segment: u32, at: f64) {
        self.state.play_position = (segment + 1) as f64 * self.t_seg;
        let next = at + self.t_seg;
        if segment + 1 < self.n() {
            self.push(next, segment + 1, EventKind::PlaybackNeed);
        } else {
            self.finished_at = Some(next);
        }
    }

    fn handle(&mut self, ev: Event) {
        match ev.kind {
            EventKind::Available => match self.outcomes[ev.segment as usize] {
                SegmentOutcome::Delivered(_) => self.cache_insert(ev.segment, ev.time),
                SegmentOutcome::Lost => {
                    let completed_at = self.conn.request(ev.time);
                    self.state.recoveries.push(RecoveryRecord {
                        segment: ev.segment,
                        requested_at: ev.time,
                        completed_at,
                    });
                    self.push(completed_at, ev.segment, EventKind::RecoveryComplete);
                }
            },
            EventKind::RecoveryComplete => self.cache_insert(ev.segment, ev.time),
            EventKind::PlaybackNeed => {
                if self.state.cache[ev.segment as usize].is_some() {
                    self.play(ev.segment, ev.time);
                } else {
                    self.state.stalled = Some((ev.segment, ev.time));
                }
            }
        }
    }
}

/// Runs one user's session against precomputed broadcast outcomes.
///
/// Every segment becomes available at `availability_start + i * t_seg`; a
/// lost segment is requested over unicast at exactly that instant. Playback
/// starts at `availability_start + buffer_seconds`.
pub fn simulate_user(
    user_id: u32,
    outcomes: &[SegmentOutcome],
    availability_start: f64,
    buffer_seconds: f64,
    t_seg: f64,
    path: &RecoveryPath<f64>,
    policy: StallPolicy,
) -> StallReport {
    let n = outcomes.len() as u32;
    let playback_start = availability_start + buffer_seconds;
    let mut session = Session {
        outcomes,
        t_seg,
        policy,
        refill_segments: (buffer_seconds / t_seg).ceil() as u32,
        conn: RecoveryConnection::new(*path),
        queue: BinaryHeap::with_capacity(2 * n as usize + 1),
        state: ClientState {
            cache: vec![None; n as usize],
            play_position: 0.0,
            playback_started_at: playback_start,
            stalled: None,
            stall_log: Vec::new(),
            recoveries: Vec::new(),
        },
        finished_at: None,
    };
    for i in 0..n {
        session.push(availability_start + i as f64 * t_seg, i, EventKind::Available);
    }
    if n > 0 {
        session.push(playback_start, 0, EventKind::PlaybackNeed);
    }
    while let Some(Reverse(ev)) = session.queue.pop() {
        session.handle(ev);
        if session.finished_at.is_some() {
            break;
        }
    }
    let broadcast_losses = outcomes.iter().filter(|o| o.is_lost()).count() as u32;
    StallReport {
        user_id,
        availability_start,
        buffer_seconds,
        playback_start,
        n_segments: n,
        broadcast_losses,
        finished_at: session.finished_at.unwrap_or(playback_start),
        stalls: session.state.stall_log,
        recoveries: session.state.recoveries,
    }
}

/// Result of a whole scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub availability_start: f64,
    pub buffer_seconds: f64,
    /// One report per user, sorted by `user_id`.
    pub reports: Vec<StallReport>,
}

fn run_user(scenario: &Scenario, user: &UserSpec, ast: f64, buffer: f64) -> Result<StallReport> {
    let outcomes = broadcast_arrivals(scenario, user)?;
    Ok(simulate_user(
        user.user_id,
        &outcomes,
        ast,
        buffer,
        scenario.svc.t_seg,
        &scenario.recovery_path(),
        scenario.stall_policy,
    ))
}

/// Runs every user. `threads` selects the worker count; `None` uses the
/// global pool. Results do not depend on the worker count.
pub fn run_scenario(scenario: &Scenario, threads: Option<usize>) -> Result<ScenarioRun> {
    scenario.validate()?;
    let buffer_seconds = scenario.resolve_buffer()?;
    let ast = scenario.availability_start();
    let work = || {
        scenario
            .users
            .par_iter()
            .map(|u| run_user(scenario, u, ast, buffer_seconds))
            .collect::<Result<Vec<_>>>()
    };
    let mut reports = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    reports.sort_by_key(|r| r.user_id);
    Ok(ScenarioRun { availability_start: ast, buffer_seconds, reports })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delivered(n: u32, ast: f64, t_seg: f64, lost: &[u32]) -> Vec<SegmentOutcome> {
        (0..n)
            .map(|i| {
                if lost.contains(&i) {
                    SegmentOutcome::Lost
                } else {
                    SegmentOutcome::Delivered(ast + i as f64 * t_seg)
                }
            })
            .collect()
    }

    fn path(rtt: f64, d_t: f64) -> RecoveryPath<f64> {
        RecoveryPath::new(rtt, d_t).unwrap()
    }

    #[test]
    fn connection_recurrence() {
        let recs = unicast_recovery(&[(0, 0.0), (1, 2.0), (2, 4.0)], &path(0.1, 3.0));
        let done: Vec<f64> = recs.iter().map(|r| r.completed_at).collect();
        assert_eq!(done, vec![3.1, 6.1, 9.1]);
        let recs = unicast_recovery(&[(0, 0.0), (1, 2.0)], &path(0.1, 1.0));
        assert_eq!(recs[1].completed_at - recs[1].requested_at, 1.1);
    }

    #[test]
    fn lossless_session_has_no_stalls() {
        let out = delivered(50, 1.5, 2.0, &[]);
        let rep = simulate_user(3, &out, 1.5, 0.0, 2.0, &path(0.0, 4.0), StallPolicy::default());
        assert!(rep.stalls.is_empty());
        assert_eq!(rep.playback_start, 1.5);
        assert_eq!(rep.finished_at, 1.5 + 100.0);
        assert!(rep.recoveries.is_empty());
    }

    #[test]
    fn single_loss_recovery_time() {
        let out = delivered(10, 0.0, 2.0, &[4]);
        let rep = simulate_user(0, &out, 0.0, 5.0, 2.0, &path(0.2, 1.5), StallPolicy::default());
        assert_eq!(rep.recoveries.len(), 1);
        let rec = rep.recoveries[0];
        assert_eq!(rec.requested_at, 8.0);
        assert!((rec.completed_at - (8.0 + 0.2 + 1.5)).abs() < 1e-12);
        assert!(rep.stalls.is_empty());
    }

    #[test]
    fn unbuffered_loss_stalls_until_recovery() {
        let out = delivered(10, 0.0, 2.0, &[3]);
        let rep = simulate_user(0, &out, 0.0, 0.0, 2.0, &path(0.0, 3.0), StallPolicy::default());
        assert_eq!(rep.stalls.len(), 1);
        let stall = rep.stalls[0];
        assert_eq!(stall.first_missing_segment, 3);
        assert_eq!(stall.start, 6.0);
        assert!((stall.duration - 3.0).abs() < 1e-12);
        assert!((rep.finished_at - (20.0 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn refill_policy_waits_for_window() {
        let out = delivered(10, 0.0, 2.0, &[3]);
        let immediate = simulate_user(0, &out, 0.0, 4.0, 2.0, &path(0.0, 9.0), StallPolicy::ResumeImmediately);
        let refill = simulate_user(0, &out, 0.0, 4.0, 2.0, &path(0.0, 9.0), StallPolicy::Refill);
        assert_eq!(immediate.stalls.len(), 1);
        assert_eq!(refill.stalls.len(), 1);
        assert!(refill.total_stall_seconds() >= immediate.total_stall_seconds());
    }

    #[test]
    fn seeds_differ_per_user_and_master() {
        assert_ne!(user_seed(0, 1), user_seed(0, 2));
        assert_ne!(user_seed(0, 1), user_seed(1, 1));
        assert_eq!(user_seed(7, 9), user_seed(7, 9));
    }

    fn scenario(users: Vec<UserSpec>) -> Scenario {
        let svc = ServiceConfig::new(2.0, 1.25e6, 1.0e6, 0.8, 1024).unwrap();
        let link = UnicastLink::with_delay(0.0, 4.0).unwrap();
        let mut s = Scenario::new(svc, link, users);
        s.n_segments = 200;
        s
    }

    #[test]
    fn validation_names_fields() {
        let mut s = scenario(vec![UserSpec { user_id: 1, loss: LossSpec::Per(1.5) }]);
        match s.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "users[0].per"),
            other => panic!("{other:?}"),
        }
        s.users[0].loss = LossSpec::SegmentLoss(0.1);
        s.forced_bursts.push(ForcedBurst { user_id: 2, start_index: 0, length: 1 });
        match s.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "forced_bursts[0].user_id"),
            other => panic!("{other:?}"),
        }
        s.forced_bursts[0] = ForcedBurst { user_id: 1, start_index: 199, length: 2 };
        assert!(s.validate().is_err());
        s.forced_bursts.clear();
        s.users.push(UserSpec { user_id: 1, loss: LossSpec::SegmentLoss(0.0) });
        assert!(s.validate().is_err());
    }

    #[test]
    fn model_mode_extremes() {
        let s = scenario(vec![
            UserSpec { user_id: 1, loss: LossSpec::SegmentLoss(0.0) },
            UserSpec { user_id: 2, loss: LossSpec::SegmentLoss(1.0) },
        ]);
        let a = broadcast_arrivals(&s, &s.users[0]).unwrap();
        assert!(a.iter().enumerate().all(|(i, o)| *o == SegmentOutcome::Delivered(s.availability_start() + 2.0 * i as f64)));
        let b = broadcast_arrivals(&s, &s.users[1]).unwrap();
        assert!(b.iter().all(SegmentOutcome::is_lost));
    }

    #[test]
    fn per_mode_lossless_delivers_everything() {
        let mut s = scenario(vec![UserSpec { user_id: 1, loss: LossSpec::Per(0.0) }]);
        // 250 kB segments at rate 0.5: r = k, failure ~ 0.85 * 0.567^245.
        s.svc = s.svc.with_code_rate(0.5).unwrap();
        let out = broadcast_arrivals(&s, &s.users[0]).unwrap();
        assert!(out.iter().all(|o| !o.is_lost()));
    }

    #[test]
    fn forced_burst_overrides_channel() {
        let mut s = scenario(vec![UserSpec { user_id: 1, loss: LossSpec::SegmentLoss(0.0) }]);
        s.forced_bursts.push(ForcedBurst { user_id: 1, start_index: 10, length: 3 });
        let out = broadcast_arrivals(&s, &s.users[0]).unwrap();
        let lost: Vec<usize> = out.iter().enumerate().filter(|(_, o)| o.is_lost()).map(|(i, _)| i).collect();
        assert_eq!(lost, vec![10, 11, 12]);
    }

    #[test]
    fn auto_buffer_uses_design_percentile() {
        let users = (0..10)
            .map(|i| UserSpec { user_id: i, loss: LossSpec::SegmentLoss(if i == 0 { 0.0387 } else { 0.001 }) })
            .collect();
        let s = scenario(users);
        // worst 10% of 10 users is the single 0.0387 user: m = 4, d_t = 2 t_seg.
        assert_eq!(s.resolve_buffer().unwrap(), 10.0);
    }
}
