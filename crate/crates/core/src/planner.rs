//! Static cgroup v2 hierarchies that keep contending tasks apart.
//!
//! Every task starts in the root group. Each pair whose interference exceeds
//! the threshold gets its two tasks moved into dedicated freezer-enabled
//! sub-groups, so a monitor can suspend one side while the other runs.
//! Tasks without any strong contender stay in the root.

use std::collections::BTreeSet;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::InterferenceMatrix;

pub const DEFAULT_THETA: f64 = 1.5;
pub const DEFAULT_MOUNT: &str = "/sys/fs/cgroup";
pub const MOUNT_ENV: &str = "INTERFERE_CGROUP_MOUNT";
pub const ROOT_GROUP: &str = "root";

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("threshold must be greater than 1, got {0}")]
    InvalidTheta(f64),
    #[error("duplicate task id `{0}`")]
    DuplicateTask(String),
    #[error("task id `{0}` is not a valid cgroup name (use letters, digits, `_`, `-`, `.`)")]
    UnsafeTaskId(String),
    #[error("task `{task}` pins core {core} but the platform has {cores} cores")]
    AffinityOutOfRange { task: String, core: u32, cores: u32 },
    #[error("task set and matrix disagree: {0}")]
    TaskMismatch(String),
    #[error("plan does not cover the matrix tasks: {0}")]
    Coverage(String),
    #[error("malformed plan: {0}")]
    InvalidPlan(String),
    #[error("invalid mount point `{0}`")]
    InvalidMount(String),
    #[error("malformed input: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Critical,
    #[default]
    BestEffort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    #[serde(default)]
    pub executable: String,
    #[serde(default)]
    pub criticality: Criticality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_affinity: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_ms: Option<f64>,
}

impl TaskSpec {
    pub fn new(id: &str) -> Self {
        TaskSpec {
            id: id.to_string(),
            executable: String::new(),
            criticality: Criticality::default(),
            core_affinity: None,
            period_ms: None,
            deadline_ms: None,
        }
    }
}

/// Contents of a tasks file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub tasks: Vec<TaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform_cores: Option<u32>,
}

impl TaskSet {
    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let set: TaskSet =
            serde_json::from_str(text).map_err(|e| PlanError::Parse(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let mut seen = BTreeSet::new();
        for t in &self.tasks {
            if !is_safe_name(&t.id) {
                return Err(PlanError::UnsafeTaskId(t.id.clone()));
            }
            if !seen.insert(t.id.as_str()) {
                return Err(PlanError::DuplicateTask(t.id.clone()));
            }
            if let (Some(cores), Some(aff)) = (self.platform_cores, &t.core_affinity) {
                if let Some(&core) = aff.iter().find(|&&c| c >= cores) {
                    return Err(PlanError::AffinityOutOfRange {
                        task: t.id.clone(),
                        core,
                        cores,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn ids(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.id.clone()).collect()
    }
}

fn is_safe_name(s: &str) -> bool {
    !s.is_empty()
        && s != "."
        && s != ".."
        && !s.starts_with("cgroup.")
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub theta: f64,
    /// Merge mutually non-conflicting tasks into shared sub-groups.
    pub consolidate: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            theta: DEFAULT_THETA,
            consolidate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Controller {
    Cpuset,
    Cpu,
    Freezer,
}

impl Controller {
    /// Freezing is a core cgroup v2 interface (`cgroup.freeze`), not a
    /// controller listed in `cgroup.subtree_control`.
    pub fn in_subtree_control(self) -> bool {
        !matches!(self, Controller::Freezer)
    }

    pub fn name(self) -> &'static str {
        match self {
            Controller::Cpuset => "cpuset",
            Controller::Cpu => "cpu",
            Controller::Freezer => "freezer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub members: Vec<String>,
    pub controllers: Vec<Controller>,
    #[serde(default)]
    pub cpuset: Vec<u32>,
    pub freezer: bool,
}

impl GroupSpec {
    /// Directory of the group relative to the root cgroup.
    pub fn rel_dir(&self) -> &str {
        self.name
            .strip_prefix(ROOT_GROUP)
            .map(|s| s.trim_start_matches('/'))
            .unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CgroupPlan {
    pub root: GroupSpec,
    pub groups: Vec<GroupSpec>,
}

impl CgroupPlan {
    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let plan: CgroupPlan =
            serde_json::from_str(text).map_err(|e| PlanError::Parse(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn all_groups(&self) -> impl Iterator<Item = &GroupSpec> {
        std::iter::once(&self.root).chain(&self.groups)
    }

    pub fn group_of(&self, task: &str) -> Option<&GroupSpec> {
        self.all_groups()
            .find(|g| g.members.iter().any(|m| m == task))
    }

    pub fn tasks(&self) -> BTreeSet<&str> {
        self.all_groups()
            .flat_map(|g| g.members.iter().map(String::as_str))
            .collect()
    }

    /// Structural invariants: unique safe names, every task in one group.
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: String| PlanError::InvalidPlan(m);
        if self.root.name != ROOT_GROUP {
            return Err(bad(format!("root group must be named `{ROOT_GROUP}`")));
        }
        let mut names = BTreeSet::new();
        let mut members = BTreeSet::new();
        for g in self.all_groups() {
            if !names.insert(g.name.as_str()) {
                return Err(bad(format!("group name `{}` repeats", g.name)));
            }
            for m in &g.members {
                if !members.insert(m.as_str()) {
                    return Err(bad(format!("task `{m}` appears in more than one group")));
                }
            }
        }
        for g in &self.groups {
            let rel = g.rel_dir();
            if !g.name.starts_with(&format!("{ROOT_GROUP}/")) || !is_safe_name(rel) {
                return Err(bad(format!(
                    "group `{}` must be named `{ROOT_GROUP}/<id>` with a filesystem-safe id",
                    g.name
                )));
            }
            if g.freezer != g.controllers.contains(&Controller::Freezer) {
                return Err(bad(format!(
                    "group `{}` freezer flag disagrees with its controllers",
                    g.name
                )));
            }
        }
        Ok(())
    }
}

fn check_alignment(tasks: &[TaskSpec], matrix: &InterferenceMatrix) -> Result<Vec<usize>, PlanError> {
    if tasks.len() != matrix.len() {
        return Err(PlanError::TaskMismatch(format!(
            "{} tasks but the matrix has {} rows",
            tasks.len(),
            matrix.len()
        )));
    }
    tasks
        .iter()
        .map(|t| {
            matrix
                .index(&t.id)
                .ok_or_else(|| PlanError::TaskMismatch(format!("task `{}` is not in the matrix", t.id)))
        })
        .collect()
}

/// Builds the cgroup hierarchy for `tasks`.
///
/// Pairs are visited in ascending index order of `tasks`. With
/// `consolidate`, a conflicting task joins the first existing sub-group
/// holding none of its contenders instead of getting its own.
pub fn plan(
    tasks: &[TaskSpec],
    matrix: &InterferenceMatrix,
    config: &PlannerConfig,
) -> Result<CgroupPlan, PlanError> {
    if !(config.theta > 1.0) || !config.theta.is_finite() {
        return Err(PlanError::InvalidTheta(config.theta));
    }
    TaskSet {
        tasks: tasks.to_vec(),
        platform_cores: None,
    }
    .validate()?;
    let idx = check_alignment(tasks, matrix)?;
    let n = tasks.len();
    let conflicts = |a: usize, b: usize| matrix.at(idx[a], idx[b]) > config.theta;

    // group index per task; None = root
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let place = |t: usize, assignment: &mut Vec<Option<usize>>, groups: &mut Vec<Vec<usize>>| {
        if assignment[t].is_some() {
            return;
        }
        let slot = if config.consolidate {
            groups
                .iter()
                .position(|members| members.iter().all(|&m| !conflicts(m, t)))
        } else {
            None
        };
        let g = slot.unwrap_or_else(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(t);
        assignment[t] = Some(g);
    };
    for i in 0..n {
        for j in i + 1..n {
            if conflicts(i, j) {
                place(i, &mut assignment, &mut groups);
                place(j, &mut assignment, &mut groups);
            }
        }
    }

    let groups: Vec<GroupSpec> = groups
        .iter()
        .map(|members| {
            let cpuset: BTreeSet<u32> = members
                .iter()
                .flat_map(|&m| tasks[m].core_affinity.iter().flatten().copied())
                .collect();
            let mut controllers = Vec::new();
            if !cpuset.is_empty() {
                controllers.push(Controller::Cpuset);
            }
            controllers.push(Controller::Freezer);
            GroupSpec {
                name: format!("{ROOT_GROUP}/{}", tasks[members[0]].id),
                members: members.iter().map(|&m| tasks[m].id.clone()).collect(),
                controllers,
                cpuset: cpuset.into_iter().collect(),
                freezer: true,
            }
        })
        .collect();

    let root_controllers: Vec<Controller> = groups
        .iter()
        .flat_map(|g| g.controllers.iter().copied())
        .filter(|c| c.in_subtree_control())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let root = GroupSpec {
        name: ROOT_GROUP.to_string(),
        members: (0..n)
            .filter(|&t| assignment[t].is_none())
            .map(|t| tasks[t].id.clone())
            .collect(),
        controllers: root_controllers,
        cpuset: Vec::new(),
        freezer: false,
    };
    Ok(CgroupPlan { root, groups })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    SameGroup,
    FreezerMissing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub a: String,
    pub b: String,
    pub interference: f64,
    pub reason: ViolationReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub verified: bool,
    pub violations: Vec<Violation>,
}

/// Checks that every pair above `theta` sits in two distinct freezer groups.
pub fn verify(
    plan: &CgroupPlan,
    matrix: &InterferenceMatrix,
    theta: f64,
) -> Result<Verification, PlanError> {
    plan.validate()?;
    let planned = plan.tasks();
    let wanted: BTreeSet<&str> = matrix.tasks().iter().map(String::as_str).collect();
    if planned != wanted {
        let missing: Vec<&&str> = wanted.difference(&planned).collect();
        let extra: Vec<&&str> = planned.difference(&wanted).collect();
        return Err(PlanError::Coverage(format!(
            "missing from plan: {missing:?}; not in matrix: {extra:?}"
        )));
    }
    let tasks = matrix.tasks();
    let mut violations = Vec::new();
    for i in 0..tasks.len() {
        for j in i + 1..tasks.len() {
            let v = matrix.at(i, j);
            if !(v > theta) {
                continue;
            }
            let ga = plan.group_of(&tasks[i]).expect("coverage checked");
            let gb = plan.group_of(&tasks[j]).expect("coverage checked");
            let reason = if ga.name == gb.name {
                Some(ViolationReason::SameGroup)
            } else if !ga.freezer || !gb.freezer {
                Some(ViolationReason::FreezerMissing)
            } else {
                None
            };
            if let Some(reason) = reason {
                violations.push(Violation {
                    a: tasks[i].clone(),
                    b: tasks[j].clone(),
                    interference: v,
                    reason,
                });
            }
        }
    }
    Ok(Verification {
        verified: violations.is_empty(),
        violations,
    })
}

/// One filesystem operation needed to realize a plan. Directories are
/// relative to the root cgroup; the empty string is the root itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Action {
    EnableControllers { dir: String, controllers: Vec<Controller> },
    CreateGroup { dir: String },
    SetCpus { dir: String, cpus: String },
    RequireFreezer { dir: String },
}

fn join(dir: &str, file: &str) -> String {
    if dir.is_empty() {
        file.to_string()
    } else {
        format!("{dir}/{file}")
    }
}

impl Action {
    fn shell_path(dir: &str, file: Option<&str>) -> String {
        let rel = match file {
            Some(f) => join(dir, f),
            None => dir.to_string(),
        };
        if rel.is_empty() {
            "\"$CGROUP_ROOT\"".to_string()
        } else {
            format!("\"$CGROUP_ROOT/{rel}\"")
        }
    }

    fn subtree_line(controllers: &[Controller]) -> String {
        controllers
            .iter()
            .map(|c| format!("+{}", c.name()))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn shell(&self) -> String {
        match self {
            Action::EnableControllers { dir, controllers } => format!(
                "echo '{}' > {}",
                Self::subtree_line(controllers),
                Self::shell_path(dir, Some("cgroup.subtree_control"))
            ),
            Action::CreateGroup { dir } => format!("mkdir {}", Self::shell_path(dir, None)),
            Action::SetCpus { dir, cpus } => {
                format!("echo '{cpus}' > {}", Self::shell_path(dir, Some("cpuset.cpus")))
            }
            Action::RequireFreezer { dir } => {
                format!("test -e {}", Self::shell_path(dir, Some("cgroup.freeze")))
            }
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.shell())
    }
}

fn cpus_list(cores: &[u32]) -> String {
    cores
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Ordered filesystem operations that realize `plan`. The script and the
/// applier are both driven by this list.
pub fn plan_actions(plan: &CgroupPlan) -> Vec<Action> {
    let mut out = Vec::new();
    let subtree: Vec<Controller> = plan
        .root
        .controllers
        .iter()
        .copied()
        .filter(|c| c.in_subtree_control())
        .collect();
    if !subtree.is_empty() && !plan.groups.is_empty() {
        out.push(Action::EnableControllers {
            dir: String::new(),
            controllers: subtree,
        });
    }
    for g in &plan.groups {
        let dir = g.rel_dir().to_string();
        out.push(Action::CreateGroup { dir: dir.clone() });
        if !g.cpuset.is_empty() {
            out.push(Action::SetCpus {
                dir: dir.clone(),
                cpus: cpus_list(&g.cpuset),
            });
        }
        if g.freezer {
            out.push(Action::RequireFreezer { dir });
        }
    }
    out
}

/// Accepts absolute paths made of `[A-Za-z0-9_.-/]` without `..` segments.
pub fn validate_mount(mount: &str) -> Result<(), PlanError> {
    let ok = mount.starts_with('/')
        && mount
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '/' | '_' | '-' | '.'))
        && !mount.split('/').any(|seg| seg == "..");
    if ok {
        Ok(())
    } else {
        Err(PlanError::InvalidMount(mount.to_string()))
    }
}

/// POSIX shell script that builds the hierarchy under `mount_point`.
pub fn emit_script(plan: &CgroupPlan, mount_point: &str) -> Result<String, PlanError> {
    validate_mount(mount_point)?;
    plan.validate()?;
    let mount = mount_point.trim_end_matches('/');
    let mount = if mount.is_empty() { "/" } else { mount };
    let mut s = String::new();
    s.push_str("#!/bin/sh\n");
    s.push_str("# Static cgroup v2 hierarchy generated by interfere.\n");
    s.push_str(&format!(
        "# {} sub-group(s); tasks listed under the root stay in the root cgroup.\n",
        plan.groups.len()
    ));
    s.push_str("set -eu\n\n");
    s.push_str(&format!("CGROUP_ROOT='{mount}'\n"));

    let actions = plan_actions(plan);
    if let Some(a @ Action::EnableControllers { .. }) = actions.first() {
        s.push('\n');
        s.push_str(&a.shell());
        s.push('\n');
    }
    for g in &plan.groups {
        let dir = g.rel_dir();
        s.push_str(&format!("\n# group {}: {}\n", g.name, g.members.join(", ")));
        for a in actions.iter().filter(|a| match a {
            Action::CreateGroup { dir: d }
            | Action::SetCpus { dir: d, .. }
            | Action::RequireFreezer { dir: d } => d == dir,
            Action::EnableControllers { .. } => false,
        }) {
            s.push_str(&a.shell());
            s.push('\n');
        }
        if g.freezer {
            s.push_str(&format!(
                "# echo 1 > {}   # freeze (echo 0 to thaw)\n",
                Action::shell_path(dir, Some("cgroup.freeze"))
            ));
        }
    }

    s.push_str("\n# Task attachment: write each task's PID into its group's cgroup.procs.\n");
    for g in plan.all_groups() {
        for m in &g.members {
            s.push_str(&format!(
                "# {m}: echo <pid> > {}\n",
                Action::shell_path(g.rel_dir(), Some("cgroup.procs"))
            ));
        }
    }
    Ok(s)
}

/// Filesystem surface the applier needs; swapped out in tests.
pub trait CgroupFs {
    fn exists(&self, path: &Path) -> bool;
    fn read_to_string(&self, path: &Path) -> io::Result<String>;
    fn create_dir(&mut self, path: &Path) -> io::Result<()>;
    fn write(&mut self, path: &Path, contents: &str) -> io::Result<()>;
}

/// The host filesystem.
#[derive(Debug, Default, Clone, Copy)]
pub struct HostFs;

impl CgroupFs for HostFs {
    fn exists(&self, path: &Path) -> bool {
        path.exists()
    }

    fn read_to_string(&self, path: &Path) -> io::Result<String> {
        std::fs::read_to_string(path)
    }

    fn create_dir(&mut self, path: &Path) -> io::Result<()> {
        std::fs::create_dir(path)
    }

    fn write(&mut self, path: &Path, contents: &str) -> io::Result<()> {
        std::fs::write(path, contents)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Planned,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub action: Action,
    pub status: ActionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionLog {
    pub dry_run: bool,
    pub entries: Vec<LogEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyErrorKind {
    PermissionDenied,
    MissingController,
    NotCgroup2,
    Unsupported,
    Io,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind:?}: {message}")]
pub struct ApplyError {
    pub kind: ApplyErrorKind,
    pub message: String,
    /// Actions attempted before the failure, the failing one last.
    pub log: ActionLog,
}

fn io_kind(e: &io::Error) -> ApplyErrorKind {
    match e.kind() {
        io::ErrorKind::PermissionDenied | io::ErrorKind::ReadOnlyFilesystem => {
            ApplyErrorKind::PermissionDenied
        }
        _ => ApplyErrorKind::Io,
    }
}

/// Realizes `plan` under `mount_point`. With `dry_run` nothing is touched and
/// the log lists the planned actions. Otherwise actions run strictly in order
/// and the first failure stops the run.
pub fn apply(
    plan: &CgroupPlan,
    mount_point: &str,
    dry_run: bool,
    fs: &mut dyn CgroupFs,
) -> Result<ActionLog, ApplyError> {
    let fail = |kind, message: String, log: &ActionLog| ApplyError {
        kind,
        message,
        log: log.clone(),
    };
    let mut log = ActionLog {
        dry_run,
        entries: Vec::new(),
    };
    validate_mount(mount_point).map_err(|e| fail(ApplyErrorKind::Io, e.to_string(), &log))?;
    plan.validate()
        .map_err(|e| fail(ApplyErrorKind::Io, e.to_string(), &log))?;
    let actions = plan_actions(plan);
    if dry_run {
        log.entries = actions
            .into_iter()
            .map(|action| LogEntry {
                action,
                status: ActionStatus::Planned,
                detail: None,
            })
            .collect();
        return Ok(log);
    }

    let root = PathBuf::from(mount_point);
    let controllers_file = root.join("cgroup.controllers");
    if !fs.exists(&controllers_file) {
        return Err(fail(
            ApplyErrorKind::NotCgroup2,
            format!("{} is not a cgroup v2 mount (no cgroup.controllers)", root.display()),
            &log,
        ));
    }
    let available = fs
        .read_to_string(&controllers_file)
        .map_err(|e| fail(io_kind(&e), e.to_string(), &log))?;
    let available: BTreeSet<&str> = available.split_whitespace().collect();

    for action in actions {
        let result: Result<(), (ApplyErrorKind, String)> = match &action {
            Action::EnableControllers { dir, controllers } => {
                match controllers.iter().find(|c| !available.contains(c.name())) {
                    Some(c) => Err((
                        ApplyErrorKind::MissingController,
                        format!("controller `{}` is not available at {}", c.name(), root.display()),
                    )),
                    None => fs
                        .write(
                            &root.join(join(dir, "cgroup.subtree_control")),
                            &Action::subtree_line(controllers),
                        )
                        .map_err(|e| (io_kind(&e), e.to_string())),
                }
            }
            Action::CreateGroup { dir } => fs
                .create_dir(&root.join(dir))
                .map_err(|e| (io_kind(&e), e.to_string())),
            Action::SetCpus { dir, cpus } => fs
                .write(&root.join(join(dir, "cpuset.cpus")), cpus)
                .map_err(|e| (io_kind(&e), e.to_string())),
            Action::RequireFreezer { dir } => {
                let p = root.join(join(dir, "cgroup.freeze"));
                if fs.exists(&p) {
                    Ok(())
                } else {
                    Err((
                        ApplyErrorKind::MissingController,
                        format!("{} does not exist; freezer unavailable", p.display()),
                    ))
                }
            }
        };
        match result {
            Ok(()) => log.entries.push(LogEntry {
                action,
                status: ActionStatus::Done,
                detail: None,
            }),
            Err((kind, message)) => {
                log.entries.push(LogEntry {
                    action,
                    status: ActionStatus::Failed,
                    detail: Some(message.clone()),
                });
                return Err(ApplyError { kind, message, log });
            }
        }
    }
    Ok(log)
}

/// Applies against the host cgroup hierarchy. Only meaningful on Linux.
pub fn apply_live(plan: &CgroupPlan, mount_point: &str) -> Result<ActionLog, ApplyError> {
    if cfg!(target_os = "linux") {
        apply(plan, mount_point, false, &mut HostFs)
    } else {
        Err(ApplyError {
            kind: ApplyErrorKind::Unsupported,
            message: "live cgroup application requires Linux".into(),
            log: ActionLog::default(),
        })
    }
}

/// Mount point from the flag, then the environment, then the default.
pub fn resolve_mount(flag: Option<&str>) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(MOUNT_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| DEFAULT_MOUNT.to_string())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn tasks(ids: &[&str]) -> Vec<TaskSpec> {
        ids.iter().map(|id| TaskSpec::new(id)).collect()
    }

    fn victim_noise() -> (Vec<TaskSpec>, InterferenceMatrix) {
        let t = tasks(&["victim", "noise"]);
        let m = InterferenceMatrix::from_pairs(
            vec!["victim".into(), "noise".into()],
            [("victim", "noise", 2.5)],
        )
        .unwrap();
        (t, m)
    }

    #[test]
    fn victim_noise_split() {
        let (t, m) = victim_noise();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        assert!(p.root.members.is_empty());
        let names: Vec<&str> = p.groups.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, ["root/victim", "root/noise"]);
        assert!(p.groups.iter().all(|g| g.freezer));
        assert!(verify(&p, &m, 1.5).unwrap().verified);
    }

    #[test]
    fn below_threshold_stays_in_root() {
        let t = tasks(&["a", "b", "c"]);
        let m = InterferenceMatrix::from_pairs(
            vec!["a".into(), "b".into(), "c".into()],
            [("a", "b", 1.5), ("b", "c", 1.2)],
        )
        .unwrap();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        assert!(p.groups.is_empty());
        assert_eq!(p.root.members, ["a", "b", "c"]);
        assert!(plan_actions(&p).is_empty());
    }

    #[test]
    fn all_conflicting_triple() {
        let t = tasks(&["a", "b", "c"]);
        let m = InterferenceMatrix::from_pairs(
            vec!["a".into(), "b".into(), "c".into()],
            [("a", "b", 2.0), ("a", "c", 2.0), ("b", "c", 2.0)],
        )
        .unwrap();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        assert_eq!(p.groups.len(), 3);
        assert!(p.groups.iter().all(|g| g.freezer && g.members.len() == 1));
        let c = plan(
            &t,
            &m,
            &PlannerConfig {
                consolidate: true,
                ..PlannerConfig::default()
            },
        )
        .unwrap();
        assert_eq!(c.groups.len(), 3);
    }

    #[test]
    fn consolidation_shares_groups() {
        // a conflicts with b and c; b and c are compatible
        let t = tasks(&["a", "b", "c"]);
        let m = InterferenceMatrix::from_pairs(
            vec!["a".into(), "b".into(), "c".into()],
            [("a", "b", 2.0), ("a", "c", 2.0)],
        )
        .unwrap();
        let cfg = PlannerConfig {
            theta: 1.5,
            consolidate: true,
        };
        let p = plan(&t, &m, &cfg).unwrap();
        assert_eq!(p.groups.len(), 2);
        assert_eq!(p.groups[1].members, ["b", "c"]);
        assert!(verify(&p, &m, 1.5).unwrap().verified);
    }

    #[test]
    fn plan_errors() {
        let (t, m) = victim_noise();
        assert_eq!(
            plan(&t, &m, &PlannerConfig { theta: 1.0, consolidate: false }),
            Err(PlanError::InvalidTheta(1.0))
        );
        assert!(matches!(
            plan(&tasks(&["victim"]), &m, &PlannerConfig::default()),
            Err(PlanError::TaskMismatch(_))
        ));
        assert!(matches!(
            plan(&tasks(&["victim", "other"]), &m, &PlannerConfig::default()),
            Err(PlanError::TaskMismatch(_))
        ));
        assert!(matches!(
            plan(&tasks(&["vic tim", "noise"]), &m, &PlannerConfig::default()),
            Err(PlanError::UnsafeTaskId(_))
        ));
    }

    #[test]
    fn verify_flags_shared_root() {
        let (_, m) = victim_noise();
        let p = CgroupPlan {
            root: GroupSpec {
                name: "root".into(),
                members: vec!["victim".into(), "noise".into()],
                controllers: vec![],
                cpuset: vec![],
                freezer: false,
            },
            groups: vec![],
        };
        let v = verify(&p, &m, 1.5).unwrap();
        assert!(!v.verified);
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].reason, ViolationReason::SameGroup);
    }

    #[test]
    fn verify_flags_missing_freezer_and_coverage() {
        let (t, m) = victim_noise();
        let mut p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        p.groups[1].freezer = false;
        p.groups[1].controllers.retain(|c| *c != Controller::Freezer);
        let v = verify(&p, &m, 1.5).unwrap();
        assert_eq!(v.violations[0].reason, ViolationReason::FreezerMissing);
        p.groups.pop();
        assert!(matches!(verify(&p, &m, 1.5), Err(PlanError::Coverage(_))));
    }

    #[test]
    fn empty_conflict_set_verifies() {
        let t = tasks(&["a", "b"]);
        let m = InterferenceMatrix::from_pairs(vec!["a".into(), "b".into()], []).unwrap();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        assert!(verify(&p, &m, 1.5).unwrap().verified);
    }

    #[test]
    fn script_structure() {
        let (t, m) = victim_noise();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        let s = emit_script(&p, "/sys/fs/cgroup").unwrap();
        assert_eq!(s.matches("mkdir").count(), 2);
        assert!(s.contains("# echo 1 > \"$CGROUP_ROOT/victim/cgroup.freeze\""));
        assert!(s.contains("# echo 1 > \"$CGROUP_ROOT/noise/cgroup.freeze\""));
        assert!(s.starts_with("#!/bin/sh\n"));

        let all_root = CgroupPlan {
            root: GroupSpec {
                name: "root".into(),
                members: vec!["a".into()],
                controllers: vec![],
                cpuset: vec![],
                freezer: false,
            },
            groups: vec![],
        };
        let s = emit_script(&all_root, "/sys/fs/cgroup").unwrap();
        assert!(!s.contains("mkdir"));
    }

    #[test]
    fn script_writes_cpusets_and_subtree_control() {
        let mut t = tasks(&["victim", "noise"]);
        t[0].core_affinity = Some(vec![1]);
        t[1].core_affinity = Some(vec![2, 3]);
        let (_, m) = victim_noise();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        assert_eq!(p.root.controllers, [Controller::Cpuset]);
        let s = emit_script(&p, "/mnt/cg/").unwrap();
        assert!(s.contains("CGROUP_ROOT='/mnt/cg'"));
        assert!(s.contains("echo '+cpuset' > \"$CGROUP_ROOT/cgroup.subtree_control\""));
        assert!(s.contains("echo '2,3' > \"$CGROUP_ROOT/noise/cpuset.cpus\""));
    }

    #[test]
    fn bad_mounts() {
        let (t, m) = victim_noise();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        for bad in ["relative/path", "/a/../b", "/with space", "/x;rm", ""] {
            assert!(emit_script(&p, bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn plan_json_roundtrip_and_validation() {
        let (t, m) = victim_noise();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        assert_eq!(CgroupPlan::from_json(&p.to_json()).unwrap(), p);
        let mut dup = p.clone();
        dup.root.members.push("victim".into());
        assert!(dup.validate().is_err());
        let mut unsafe_name = p.clone();
        unsafe_name.groups[0].name = "root/../x".into();
        assert!(unsafe_name.validate().is_err());
    }

    /// In-memory cgroup2 mount with per-path write denial.
    #[derive(Default)]
    struct FakeFs {
        files: BTreeMap<PathBuf, String>,
        dirs: BTreeSet<PathBuf>,
        denied: BTreeSet<PathBuf>,
        kernel_freeze: bool,
    }

    impl FakeFs {
        fn cgroup2(mount: &str, controllers: &str) -> Self {
            let mut fs = FakeFs {
                kernel_freeze: true,
                ..Default::default()
            };
            fs.dirs.insert(PathBuf::from(mount));
            fs.files
                .insert(Path::new(mount).join("cgroup.controllers"), controllers.into());
            fs
        }
    }

    impl CgroupFs for FakeFs {
        fn exists(&self, path: &Path) -> bool {
            self.files.contains_key(path) || self.dirs.contains(path)
        }
        fn read_to_string(&self, path: &Path) -> io::Result<String> {
            self.files
                .get(path)
                .cloned()
                .ok_or_else(|| io::Error::from(io::ErrorKind::NotFound))
        }
        fn create_dir(&mut self, path: &Path) -> io::Result<()> {
            if self.denied.contains(path.parent().unwrap()) {
                return Err(io::Error::from(io::ErrorKind::PermissionDenied));
            }
            self.dirs.insert(path.to_path_buf());
            if self.kernel_freeze {
                self.files.insert(path.join("cgroup.freeze"), "0".into());
            }
            Ok(())
        }
        fn write(&mut self, path: &Path, contents: &str) -> io::Result<()> {
            if self.denied.contains(path.parent().unwrap()) {
                return Err(io::Error::from(io::ErrorKind::PermissionDenied));
            }
            self.files.insert(path.to_path_buf(), contents.into());
            Ok(())
        }
    }

    #[test]
    fn dry_run_touches_nothing() {
        let (t, m) = victim_noise();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        let mut fs = FakeFs::default();
        let log = apply(&p, "/sys/fs/cgroup", true, &mut fs).unwrap();
        assert!(log.dry_run);
        assert_eq!(
            log.entries.iter().map(|e| e.action.clone()).collect::<Vec<_>>(),
            plan_actions(&p)
        );
        assert!(fs.files.is_empty() && fs.dirs.is_empty());
    }

    #[test]
    fn live_apply_on_fake_mount() {
        let mut t = tasks(&["victim", "noise"]);
        t[0].core_affinity = Some(vec![1]);
        let (_, m) = victim_noise();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        let mut fs = FakeFs::cgroup2("/cg", "cpuset cpu io memory");
        let log = apply(&p, "/cg", false, &mut fs).unwrap();
        assert!(log.entries.iter().all(|e| e.status == ActionStatus::Done));
        assert_eq!(fs.files[Path::new("/cg/cgroup.subtree_control")], "+cpuset");
        assert_eq!(fs.files[Path::new("/cg/victim/cpuset.cpus")], "1");
        assert!(fs.dirs.contains(Path::new("/cg/noise")));
    }

    #[test]
    fn permission_denied_stops_without_partial_state() {
        let (t, m) = victim_noise();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        let mut fs = FakeFs::cgroup2("/cg", "cpuset cpu");
        fs.denied.insert(PathBuf::from("/cg"));
        let err = apply(&p, "/cg", false, &mut fs).unwrap_err();
        assert_eq!(err.kind, ApplyErrorKind::PermissionDenied);
        assert_eq!(err.log.entries.len(), 1);
        assert_eq!(err.log.entries[0].status, ActionStatus::Failed);
        assert_eq!(fs.dirs.len(), 1);
    }

    #[test]
    fn error_categories() {
        let mut t = tasks(&["victim", "noise"]);
        t[0].core_affinity = Some(vec![0]);
        let (_, m) = victim_noise();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();

        let mut not_cg = FakeFs::default();
        assert_eq!(
            apply(&p, "/cg", false, &mut not_cg).unwrap_err().kind,
            ApplyErrorKind::NotCgroup2
        );

        let mut no_cpuset = FakeFs::cgroup2("/cg", "cpu memory");
        assert_eq!(
            apply(&p, "/cg", false, &mut no_cpuset).unwrap_err().kind,
            ApplyErrorKind::MissingController
        );

        let mut no_freeze = FakeFs::cgroup2("/cg", "cpuset cpu");
        no_freeze.kernel_freeze = false;
        let err = apply(&p, "/cg", false, &mut no_freeze).unwrap_err();
        assert_eq!(err.kind, ApplyErrorKind::MissingController);
        // subtree_control, mkdir, cpuset done; freezer check failed
        assert_eq!(err.log.entries.len(), 4);
    }

    #[test]
    fn host_fs_on_plain_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mount = dir.path().to_str().unwrap().to_string();
        let (t, m) = victim_noise();
        let p = plan(&t, &m, &PlannerConfig::default()).unwrap();
        let err = apply(&p, &mount, false, &mut HostFs).unwrap_err();
        assert_eq!(err.kind, ApplyErrorKind::NotCgroup2);
        assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());

        // a directory posing as cgroup2: no kernel creates cgroup.freeze
        std::fs::write(dir.path().join("cgroup.controllers"), "cpuset cpu").unwrap();
        let err = apply(&p, &mount, false, &mut HostFs).unwrap_err();
        assert_eq!(err.kind, ApplyErrorKind::MissingController);
        assert!(dir.path().join("victim").is_dir());
        assert!(!dir.path().join("noise").exists());
    }

    #[test]
    fn mount_resolution_prefers_flag() {
        assert_eq!(resolve_mount(Some("/x")), "/x");
    }
}
