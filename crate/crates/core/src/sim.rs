//! Discrete-event simulation of periodic tasks under memory contention.
//!
//! Time and work are exact rationals, so completions land precisely on the
//! instants the rates predict. Between two events every rate is constant.
//! At a shared instant completions happen first, then releases, then the
//! monitor poll.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::math::InterferenceMatrix;
use crate::planner::{self, CgroupPlan, PlannerConfig, TaskSpec};

pub type Time = BigRational;

pub const DEFAULT_JOB_COUNT: u64 = 100;
pub const DEFAULT_MAX_EVENTS: u64 = 5_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("simulation did not terminate after {0} events")]
    NonTerminating(u64),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{0}` has no job records")]
    NoRecords(String),
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
}

fn malformed(msg: impl Into<String>) -> SimError {
    SimError::Malformed(msg.into())
}

/// Exact value of the shortest decimal that round-trips to `x`, so `0.3`
/// becomes `3/10` rather than the nearest binary fraction.
pub fn exact(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    let text = format!("{x}");
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let den = num_traits::pow(BigInt::from(10u8), frac.len());
    let r = BigRational::new(digits, den);
    Some(if neg { -r } else { r })
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn exact_field(x: f64, what: &str) -> Result<BigRational, SimError> {
    exact(x).ok_or_else(|| malformed(format!("{what} must be finite, got {x}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Victim,
    Aggressor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Solo,
    Interference,
    Protected,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Solo, Mode::Interference, Mode::Protected];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Solo => "solo",
            Mode::Interference => "interference",
            Mode::Protected => "protected",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "solo" => Ok(Mode::Solo),
            "interference" => Ok(Mode::Interference),
            "protected" => Ok(Mode::Protected),
            _ => Err(format!("unknown mode `{s}`, expected solo, interference or protected")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTask {
    pub id: String,
    pub role: Role,
    pub period_ms: f64,
    /// Defaults to the period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_deadline_ms: Option<f64>,
    /// Work per job at rate 1. Required for victims.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isolation_exec_ms: Option<f64>,
    #[serde(default)]
    pub phase_ms: f64,
    #[serde(default)]
    pub core: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Aggressors execute `busy_fraction * period` of work per period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub busy_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub poll_interval_ms: f64,
    pub usage_threshold: f64,
    /// Defaults to the poll interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_ms: Option<f64>,
    pub monitor_core: u32,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            poll_interval_ms: 50.0,
            usage_threshold: 0.30,
            window_ms: None,
            monitor_core: 3,
        }
    }
}

/// Inline value or a path relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(String),
    Inline(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: Mode,
    #[serde(default = "default_job_count")]
    pub job_count: u64,
    pub tasks: Vec<SimTask>,
    pub interference: Source<InterferenceMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Source<CgroupPlan>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<u64>,
}

fn default_job_count() -> u64 {
    DEFAULT_JOB_COUNT
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub job_count: u64,
    pub tasks: Vec<SimTask>,
    pub interference: InterferenceMatrix,
    pub monitor: MonitorConfig,
    /// In protected mode a missing plan is built with the default threshold.
    pub plan: Option<CgroupPlan>,
    pub max_events: u64,
}

fn read(path: &Path) -> Result<String, SimError> {
    std::fs::read_to_string(path).map_err(|e| SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

impl Scenario {
    /// Parses scenario JSON; relative `Source::Path`s resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self, SimError> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let resolve = |p: &str| match base_dir {
            Some(dir) if Path::new(p).is_relative() => dir.join(p),
            _ => Path::new(p).to_path_buf(),
        };
        let interference = match file.interference {
            Source::Inline(m) => m,
            Source::Path(p) => InterferenceMatrix::from_json(&read(&resolve(&p))?)
                .map_err(|e| malformed(format!("interference matrix: {e}")))?,
        };
        let plan = match file.plan {
            None => None,
            Some(Source::Inline(p)) => Some(p),
            Some(Source::Path(p)) => Some(
                CgroupPlan::from_json(&read(&resolve(&p))?)
                    .map_err(|e| malformed(format!("plan: {e}")))?,
            ),
        };
        let s = Scenario {
            name: file.name.unwrap_or_else(|| "scenario".into()),
            mode: file.mode,
            job_count: file.job_count,
            tasks: file.tasks,
            interference,
            monitor: file.monitor.unwrap_or_default(),
            plan,
            max_events: file.max_events.unwrap_or(DEFAULT_MAX_EVENTS),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_json(&read(path)?, path.parent())
    }

    /// Same scenario in another mode. Solo drops every aggressor.
    pub fn with_mode(&self, mode: Mode) -> Scenario {
        let mut s = self.clone();
        s.mode = mode;
        if mode == Mode::Solo {
            s.tasks.retain(|t| t.role == Role::Victim);
        }
        s
    }

    /// Moves every aggressor onto the first victim's core.
    pub fn same_core(&self) -> Scenario {
        let mut s = self.clone();
        if let Some(core) = s.tasks.iter().find(|t| t.role == Role::Victim).map(|t| t.core) {
            for t in s.tasks.iter_mut().filter(|t| t.role == Role::Aggressor) {
                t.core = core;
            }
        }
        s
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.tasks.is_empty() {
            return Err(malformed("no tasks"));
        }
        if self.job_count == 0 {
            return Err(malformed("job_count must be at least 1"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for t in &self.tasks {
            if !ids.insert(t.id.as_str()) {
                return Err(malformed(format!("duplicate task `{}`", t.id)));
            }
            if !(t.period_ms > 0.0) || !t.period_ms.is_finite() {
                return Err(malformed(format!("task `{}`: period must be positive", t.id)));
            }
            if !(t.phase_ms >= 0.0) || !t.phase_ms.is_finite() {
                return Err(malformed(format!("task `{}`: phase must be non-negative", t.id)));
            }
            let d = t.relative_deadline_ms.unwrap_or(t.period_ms);
            match t.role {
                Role::Victim => {
                    if !(d > 0.0 && d <= t.period_ms) {
                        return Err(malformed(format!(
                            "victim `{}`: need 0 < deadline <= period",
                            t.id
                        )));
                    }
                    match t.isolation_exec_ms {
                        Some(e) if e > 0.0 && e.is_finite() => {}
                        _ => {
                            return Err(malformed(format!(
                                "victim `{}`: isolation_exec_ms must be positive",
                                t.id
                            )))
                        }
                    }
                }
                Role::Aggressor => {
                    match t.busy_fraction {
                        Some(b) if b > 0.0 && b <= 1.0 => {}
                        _ => {
                            return Err(malformed(format!(
                                "aggressor `{}`: busy_fraction must lie in (0, 1]",
                                t.id
                            )))
                        }
                    }
                    if !(d > 0.0) || !d.is_finite() {
                        return Err(malformed(format!("aggressor `{}`: bad deadline", t.id)));
                    }
                }
            }
        }
        let victims: Vec<&SimTask> = self.tasks.iter().filter(|t| t.role == Role::Victim).collect();
        let aggressors: Vec<&SimTask> =
            self.tasks.iter().filter(|t| t.role == Role::Aggressor).collect();
        if victims.is_empty() {
            return Err(malformed("at least one victim is required"));
        }
        if self.mode == Mode::Solo && !aggressors.is_empty() {
            return Err(malformed("solo mode runs victims only"));
        }
        for v in &victims {
            for a in &aggressors {
                if self.interference.get(&v.id, &a.id).is_none() {
                    return Err(malformed(format!(
                        "interference matrix lacks the pair ({}, {})",
                        v.id, a.id
                    )));
                }
            }
        }
        if self.mode == Mode::Protected {
            let m = &self.monitor;
            if !(m.poll_interval_ms > 0.0) || !m.poll_interval_ms.is_finite() {
                return Err(malformed("poll_interval_ms must be positive"));
            }
            if !(m.usage_threshold > 0.0 && m.usage_threshold < 1.0) {
                return Err(malformed("usage_threshold must lie in (0, 1)"));
            }
            if let Some(w) = m.window_ms {
                if !(w > 0.0) || !w.is_finite() {
                    return Err(malformed("window_ms must be positive"));
                }
            }
            let plan = self.effective_plan()?;
            let group = |id: &str| {
                plan.group_of(id)
                    .map(|g| g.name.clone())
                    .ok_or_else(|| malformed(format!("plan does not place task `{id}`")))
            };
            for v in &victims {
                let gv = group(&v.id)?;
                for a in &aggressors {
                    if group(&a.id)? == gv {
                        return Err(malformed(format!(
                            "victim `{}` and aggressor `{}` share group `{gv}`",
                            v.id, a.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The scenario's plan, or one built from the tasks at the default threshold.
    pub fn effective_plan(&self) -> Result<CgroupPlan, SimError> {
        if let Some(p) = &self.plan {
            return Ok(p.clone());
        }
        let specs: Vec<TaskSpec> = self
            .tasks
            .iter()
            .map(|t| TaskSpec {
                core_affinity: Some(vec![t.core]),
                period_ms: Some(t.period_ms),
                deadline_ms: t.relative_deadline_ms,
                ..TaskSpec::new(&t.id)
            })
            .collect();
        let ids: Vec<String> = specs.iter().map(|s| s.id.clone()).collect();
        let n = ids.len();
        let mut rows = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    rows[i][j] = self.interference.get(&ids[i], &ids[j]).unwrap_or(1.0);
                }
            }
        }
        let sub = InterferenceMatrix::new(ids, rows).map_err(|e| malformed(e.to_string()))?;
        planner::plan(&specs, &sub, &PlannerConfig::default()).map_err(|e| malformed(e.to_string()))
    }
}

/// Named experiment calibration: a victim and one memory-bandwidth aggressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub victim_period_ms: f64,
    pub victim_deadline_ms: f64,
    pub victim_exec_ms: f64,
    pub victim_phase_ms: f64,
    pub victim_core: u32,
    pub noise_period_ms: f64,
    pub noise_busy_fraction: f64,
    pub noise_phase_ms: f64,
    pub noise_core: u32,
    pub interference: f64,
    pub job_count: u64,
    pub monitor: MonitorConfig,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            victim_period_ms: 100.0,
            victim_deadline_ms: 30.0,
            victim_exec_ms: 20.0,
            victim_phase_ms: 50.0,
            victim_core: 1,
            noise_period_ms: 200.0,
            noise_busy_fraction: 0.5,
            noise_phase_ms: 0.0,
            noise_core: 2,
            interference: 2.5,
            job_count: DEFAULT_JOB_COUNT,
            monitor: MonitorConfig::default(),
        }
    }
}

impl Calibration {
    pub fn scenario(&self, mode: Mode) -> Result<Scenario, SimError> {
        let victim = SimTask {
            id: "victim".into(),
            role: Role::Victim,
            period_ms: self.victim_period_ms,
            relative_deadline_ms: Some(self.victim_deadline_ms),
            isolation_exec_ms: Some(self.victim_exec_ms),
            phase_ms: self.victim_phase_ms,
            core: self.victim_core,
            group: None,
            busy_fraction: None,
        };
        let noise = SimTask {
            id: "noise".into(),
            role: Role::Aggressor,
            period_ms: self.noise_period_ms,
            relative_deadline_ms: None,
            isolation_exec_ms: None,
            phase_ms: self.noise_phase_ms,
            core: self.noise_core,
            group: None,
            busy_fraction: Some(self.noise_busy_fraction),
        };
        let interference = InterferenceMatrix::from_pairs(
            vec!["victim".into(), "noise".into()],
            [("victim", "noise", self.interference)],
        )
        .map_err(|e| malformed(e.to_string()))?;
        let base = Scenario {
            name: "calibrated".into(),
            mode: Mode::Interference,
            job_count: self.job_count,
            tasks: vec![victim, noise],
            interference,
            monitor: self.monitor,
            plan: None,
            max_events: DEFAULT_MAX_EVENTS,
        };
        let mut s = base.with_mode(mode);
        if mode == Mode::Protected {
            s.plan = Some(s.effective_plan()?);
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobRecord {
    pub task: String,
    pub job: u64,
    pub release: Time,
    /// When the job reached the head of its task's queue.
    pub start: Time,
    pub completion: Time,
    pub deadline_met: bool,
}

impl JobRecord {
    pub fn exec_time(&self) -> Time {
        &self.completion - &self.start
    }
}

/// Interval over which one job progressed at a constant positive rate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecSegment {
    pub task: String,
    pub job: u64,
    pub start: Time,
    pub end: Time,
    pub rate: BigRational,
}

impl ExecSegment {
    pub fn work(&self) -> BigRational {
        &self.rate * (&self.end - &self.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreezeInterval {
    pub group: String,
    pub start: Time,
    pub end: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissRatio {
    pub misses: u64,
    pub jobs: u64,
}

impl MissRatio {
    pub fn ratio(&self) -> BigRational {
        if self.jobs == 0 {
            BigRational::zero()
        } else {
            BigRational::new(self.misses.into(), self.jobs.into())
        }
    }

    pub fn value(&self) -> f64 {
        to_f64(&self.ratio())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfPoint {
    pub exec: Time,
    pub fraction: BigRational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub mode: Mode,
    pub end_time: Time,
    pub tasks: Vec<String>,
    /// Ordered by task (scenario order) and job index.
    pub records: Vec<JobRecord>,
    pub segments: Vec<ExecSegment>,
    pub freeze_intervals: Vec<FreezeInterval>,
}

impl SimResult {
    pub fn records_for<'a>(&'a self, task: &'a str) -> impl Iterator<Item = &'a JobRecord> + 'a {
        self.records.iter().filter(move |r| r.task == task)
    }
}

struct Job {
    index: u64,
    release: Time,
    start: Time,
    remaining: Time,
}

struct TaskState {
    role: Role,
    core: u32,
    period: Time,
    deadline: Time,
    work: Time,
    next_release: Time,
    released: u64,
    queue: VecDeque<Job>,
    group: Option<usize>,
    /// Merged intervals during which the task executed.
    busy: Vec<(Time, Time)>,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    tasks: Vec<TaskState>,
    /// delta[v][a] for victim v and aggressor a, already exact.
    slowdown: Vec<Vec<Option<BigRational>>>,
    groups: Vec<String>,
    monitored: Vec<bool>,
    frozen: Vec<Option<Time>>,
    records: Vec<(usize, JobRecord)>,
    segments: Vec<ExecSegment>,
    freeze_intervals: Vec<FreezeInterval>,
}

impl Engine<'_> {
    fn can_release(&self, i: usize) -> bool {
        let t = &self.tasks[i];
        t.role == Role::Aggressor || t.released < self.scenario.job_count
    }

    fn victims_done(&self) -> bool {
        self.tasks
            .iter()
            .filter(|t| t.role == Role::Victim)
            .all(|t| t.released == self.scenario.job_count && t.queue.is_empty())
    }

    fn victim_pending(&self) -> bool {
        self.tasks
            .iter()
            .any(|t| t.role == Role::Victim && !t.queue.is_empty())
    }

    fn is_frozen(&self, i: usize) -> bool {
        self.tasks[i].group.is_some_and(|g| self.frozen[g].is_some())
    }

    fn runnable(&self, i: usize) -> bool {
        !self.tasks[i].queue.is_empty() && !self.is_frozen(i)
    }

    fn rates(&self) -> Vec<BigRational> {
        let n = self.tasks.len();
        (0..n)
            .map(|i| {
                if !self.runnable(i) {
                    return BigRational::zero();
                }
                let me = &self.tasks[i];
                let sharing = (0..n)
                    .filter(|&j| self.runnable(j) && self.tasks[j].core == me.core)
                    .count();
                let share = BigRational::new(BigInt::one(), BigInt::from(sharing));
                if me.role == Role::Aggressor {
                    return share;
                }
                let worst = (0..n)
                    .filter(|&j| {
                        self.tasks[j].role == Role::Aggressor
                            && self.runnable(j)
                            && self.tasks[j].core != me.core
                    })
                    .filter_map(|j| self.slowdown[i][j].as_ref())
                    .filter(|d| *d > &BigRational::one())
                    .max();
                match worst {
                    Some(d) => share / d,
                    None => share,
                }
            })
            .collect()
    }

    fn release(&mut self, i: usize, now: &Time) {
        let st = &mut self.tasks[i];
        // a queued job's start is reset when it reaches the head
        st.queue.push_back(Job {
            index: st.released,
            release: st.next_release.clone(),
            start: now.clone(),
            remaining: st.work.clone(),
        });
        st.released += 1;
        st.next_release = &st.next_release + &st.period;
    }

    fn busy_in(&self, group: usize, lo: &Time, hi: &Time) -> BigRational {
        let mut total = BigRational::zero();
        for t in self.tasks.iter().filter(|t| t.group == Some(group)) {
            for (s, e) in t.busy.iter().rev() {
                if e <= lo {
                    break;
                }
                let a = if s > lo { s } else { lo };
                let b = if e < hi { e } else { hi };
                if b > a {
                    total += b - a;
                }
            }
        }
        total
    }

    fn poll(&mut self, now: &Time, window: &Time, threshold: &BigRational) {
        let pending = self.victim_pending();
        let lo = now - window;
        for g in 0..self.groups.len() {
            if !self.monitored[g] {
                continue;
            }
            match self.frozen[g].take() {
                Some(since) if !pending => self.freeze_intervals.push(FreezeInterval {
                    group: self.groups[g].clone(),
                    start: since,
                    end: now.clone(),
                }),
                Some(since) => self.frozen[g] = Some(since),
                None => {
                    let usage = self.busy_in(g, &lo, now) / window;
                    if pending && &usage > threshold {
                        self.frozen[g] = Some(now.clone());
                    }
                }
            }
        }
    }

    /// Advances from `now` to `next` at constant `rates`, completing jobs
    /// whose remaining work reaches zero at `next`.
    fn advance(&mut self, now: &Time, next: &Time, rates: &[BigRational]) {
        let dt = next - now;
        for (i, rate) in rates.iter().enumerate() {
            if rate.is_zero() {
                continue;
            }
            let st = &mut self.tasks[i];
            let job = st.queue.front_mut().expect("positive rate implies a job");
            job.remaining -= rate * &dt;
            let task_id = &self.scenario.tasks[i].id;
            match self.segments.last_mut() {
                Some(seg)
                    if seg.task == *task_id && seg.job == job.index && seg.end == *now && seg.rate == *rate =>
                {
                    seg.end = next.clone();
                }
                _ => self.segments.push(ExecSegment {
                    task: task_id.clone(),
                    job: job.index,
                    start: now.clone(),
                    end: next.clone(),
                    rate: rate.clone(),
                }),
            }
            match st.busy.last_mut() {
                Some((_, e)) if e == now => *e = next.clone(),
                _ => st.busy.push((now.clone(), next.clone())),
            }
            if job.remaining.is_zero() {
                let job = st.queue.pop_front().expect("head exists");
                let deadline_met = *next <= &job.release + &st.deadline;
                self.records.push((
                    i,
                    JobRecord {
                        task: task_id.clone(),
                        job: job.index,
                        release: job.release,
                        start: job.start,
                        completion: next.clone(),
                        deadline_met,
                    },
                ));
                if let Some(head) = st.queue.front_mut() {
                    head.start = next.clone();
                }
            }
        }
    }
}

/// Runs `scenario` to the completion of the last victim job.
pub fn run(scenario: &Scenario) -> Result<SimResult, SimError> {
    scenario.validate()?;
    let protected = scenario.mode == Mode::Protected;
    let plan = if protected {
        Some(scenario.effective_plan()?)
    } else {
        None
    };

    let mut groups: Vec<String> = Vec::new();
    let mut tasks = Vec::with_capacity(scenario.tasks.len());
    for t in &scenario.tasks {
        let period = exact_field(t.period_ms, "period_ms")?;
        let deadline = match t.relative_deadline_ms {
            Some(d) => exact_field(d, "relative_deadline_ms")?,
            None => period.clone(),
        };
        let work = match t.role {
            Role::Victim => exact_field(t.isolation_exec_ms.unwrap_or_default(), "isolation_exec_ms")?,
            Role::Aggressor => &period * exact_field(t.busy_fraction.unwrap_or_default(), "busy_fraction")?,
        };
        let group = plan.as_ref().and_then(|p| p.group_of(&t.id)).map(|g| {
            groups.iter().position(|n| *n == g.name).unwrap_or_else(|| {
                groups.push(g.name.clone());
                groups.len() - 1
            })
        });
        tasks.push(TaskState {
            role: t.role,
            core: t.core,
            period,
            deadline,
            work,
            next_release: exact_field(t.phase_ms, "phase_ms")?,
            released: 0,
            queue: VecDeque::new(),
            group,
            busy: Vec::new(),
        });
    }
    let monitored: Vec<bool> = (0..groups.len())
        .map(|g| {
            let members = || tasks.iter().filter(|t| t.group == Some(g));
            members().any(|t| t.role == Role::Aggressor) && members().all(|t| t.role == Role::Aggressor)
        })
        .collect();
    let n = tasks.len();
    let mut slowdown = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if tasks[i].role == Role::Victim && tasks[j].role == Role::Aggressor {
                let v = scenario
                    .interference
                    .get(&scenario.tasks[i].id, &scenario.tasks[j].id)
                    .expect("validated");
                slowdown[i][j] = Some(exact_field(v, "interference entry")?);
            }
        }
    }
    let poll = exact_field(scenario.monitor.poll_interval_ms, "poll_interval_ms")?;
    let window = match scenario.monitor.window_ms {
        Some(w) => exact_field(w, "window_ms")?,
        None => poll.clone(),
    };
    let threshold = exact_field(scenario.monitor.usage_threshold, "usage_threshold")?;

    let mut e = Engine {
        scenario,
        tasks,
        slowdown,
        frozen: vec![None; groups.len()],
        groups,
        monitored,
        records: Vec::new(),
        segments: Vec::new(),
        freeze_intervals: Vec::new(),
    };
    let mut now = Time::zero();
    let mut next_poll = Time::zero();
    let mut events: u64 = 0;
    loop {
        for i in 0..n {
            if e.can_release(i) && e.tasks[i].next_release == now {
                e.release(i, &now);
            }
        }
        if protected && next_poll == now {
            e.poll(&now, &window, &threshold);
            next_poll = &next_poll + &poll;
        }
        if e.victims_done() {
            break;
        }
        events += 1;
        if events > scenario.max_events {
            return Err(SimError::NonTerminating(scenario.max_events));
        }
        let rates = e.rates();
        let mut next: Option<Time> = None;
        let mut consider = |t: Time| {
            if next.as_ref().is_none_or(|n| t < *n) {
                next = Some(t);
            }
        };
        for i in 0..n {
            if e.can_release(i) {
                consider(e.tasks[i].next_release.clone());
            }
            if !rates[i].is_zero() {
                let job = e.tasks[i].queue.front().expect("runnable");
                consider(&now + &job.remaining / &rates[i]);
            }
        }
        if protected {
            consider(next_poll.clone());
        }
        let Some(next) = next else {
            return Err(SimError::NonTerminating(events));
        };
        e.advance(&now, &next, &rates);
        now = next;
    }

    for g in 0..e.groups.len() {
        if let Some(since) = e.frozen[g].take() {
            e.freeze_intervals.push(FreezeInterval {
                group: e.groups[g].clone(),
                start: since,
                end: now.clone(),
            });
        }
    }
    e.freeze_intervals
        .sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.group.cmp(&b.group)));
    let mut records = e.records;
    records.sort_by_key(|(i, r)| (*i, r.job));
    Ok(SimResult {
        mode: scenario.mode,
        end_time: now,
        tasks: scenario.tasks.iter().map(|t| t.id.clone()).collect(),
        records: records.into_iter().map(|(_, r)| r).collect(),
        segments: e.segments,
        freeze_intervals: e.freeze_intervals,
    })
}

pub fn miss_ratio(result: &SimResult, task: &str) -> Result<MissRatio, SimError> {
    if !result.tasks.iter().any(|t| t == task) {
        return Err(SimError::UnknownTask(task.to_string()));
    }
    let (jobs, misses) = result
        .records_for(task)
        .fold((0, 0), |(j, m), r| (j + 1, m + u64::from(!r.deadline_met)));
    Ok(MissRatio { misses, jobs })
}

/// Empirical CDF of execution times: one point per distinct value.
pub fn cdf(result: &SimResult, task: &str) -> Result<Vec<CdfPoint>, SimError> {
    if !result.tasks.iter().any(|t| t == task) {
        return Err(SimError::UnknownTask(task.to_string()));
    }
    let mut times: Vec<Time> = result.records_for(task).map(JobRecord::exec_time).collect();
    if times.is_empty() {
        return Err(SimError::NoRecords(task.to_string()));
    }
    times.sort();
    let n = BigInt::from(times.len());
    let mut out: Vec<CdfPoint> = Vec::new();
    for (k, t) in times.iter().enumerate() {
        let fraction = BigRational::new(BigInt::from(k + 1), n.clone());
        match out.last_mut() {
            Some(p) if p.exec == *t => p.fraction = fraction,
            _ => out.push(CdfPoint {
                exec: t.clone(),
                fraction,
            }),
        }
    }
    Ok(out)
}

/// Fraction of `points`'s jobs with exec time at most `x`.
pub fn cdf_at(points: &[CdfPoint], x: &Time) -> BigRational {
    points
        .iter()
        .take_while(|p| p.exec <= *x)
        .last()
        .map(|p| p.fraction.clone())
        .unwrap_or_else(BigRational::zero)
}

pub fn export_results(result: &SimResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["task", "job", "release_ms", "completion_ms", "exec_ms", "deadline_met"])
        .expect("in-memory write");
    for r in &result.records {
        w.write_record([
            r.task.clone(),
            r.job.to_string(),
            to_f64(&r.release).to_string(),
            to_f64(&r.completion).to_string(),
            to_f64(&r.exec_time()).to_string(),
            r.deadline_met.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn export_cdf(points: &[CdfPoint]) -> String {
    let mut s = String::from("exec_ms,fraction\n");
    for p in points {
        s.push_str(&format!("{},{}\n", to_f64(&p.exec), to_f64(&p.fraction)));
    }
    s
}

/// Per-task miss ratios and execution-time extremes.
pub fn summary(result: &SimResult) -> serde_json::Value {
    let tasks: Vec<serde_json::Value> = result
        .tasks
        .iter()
        .map(|t| {
            let mr = miss_ratio(result, t).expect("own task");
            let execs: Vec<Time> = result.records_for(t).map(JobRecord::exec_time).collect();
            let max = execs.iter().max().map(to_f64);
            let mean = if execs.is_empty() {
                None
            } else {
                let total: BigRational = execs.iter().sum();
                Some(to_f64(&(total / BigInt::from(execs.len()))))
            };
            json!({
                "task": t,
                "jobs": mr.jobs,
                "misses": mr.misses,
                "miss_ratio": mr.value(),
                "max_exec_ms": max,
                "mean_exec_ms": mean,
            })
        })
        .collect();
    json!({
        "mode": result.mode.to_string(),
        "end_ms": to_f64(&result.end_time),
        "tasks": tasks,
        "freeze_intervals": result.freeze_intervals.len(),
    })
}
