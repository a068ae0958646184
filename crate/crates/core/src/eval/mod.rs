//! Scoring: the auto-judge, trial driver, scripted suites and the
//! benchmark table.

mod judge;
mod suites;

pub use judge::{
    accuracy_ratio, auto_judge, ground, instruction_accuracy, moved_excluded, progress_ratio, task_progress,
    task_progress_with, Grounded, JudgeContext, Mark, MetricError, ReferentEffect, Repair, TruthEntry, TruthTracker,
};
pub use suites::{
    bundled_suite, bundled_suites, constrained_bussing, constrained_sandwich, export_suites, grocery_additions,
    interjection_bussing, ScriptStep, Suite, Trial, Trigger, UserScript, TRIALS_PER_SUITE,
};

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{HighLevelDecision, ObjectId, SceneState, Skill, SkillCommand, UserEvent, UserEventKind};
use crate::highlevel::{decide, DialogueContext, Observation, Policy, PolicyKind, PolicyOutput, RemoteConfig};
use crate::lowlevel::{parse_command, LatencyModel};
use crate::orchestrator::{make_policy, EventLog, LogKind, Session, SessionConfig, SessionError};
use crate::simenv::TaskCatalog;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("bad script: {0}")]
    Script(String),
}

/// Plays the script's ground truth: the judge and this policy share a goal.
pub struct OraclePolicy {
    truth: TruthTracker,
}

impl OraclePolicy {
    pub fn new(script: &UserScript) -> Self {
        let catalog = TaskCatalog::bundled(script.task);
        let arms = catalog.profile().arms().len();
        OraclePolicy { truth: TruthTracker::new(script.ground_truth.clone(), catalog.default_goal(), arms) }
    }
}

impl Policy for OraclePolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::OracleScripted
    }

    fn on_user_event(&mut self, event: &UserEvent, obs: &Observation<'_>) {
        self.truth.apply(&event.kind, obs.scene);
    }

    fn decide(&mut self, obs: &Observation<'_>) -> PolicyOutput {
        let ctx = DialogueContext {
            reclassified: self.truth.reclassified.clone(),
            excluded_ids: self.truth.excluded_ids.clone(),
            put_back: self.truth.put_back.clone(),
            ..DialogueContext::default()
        };
        let d = decide(obs.scene, &ctx, &self.truth.goal);
        self.truth.repair = None;
        HighLevelDecision::command(d.skill_text).into()
    }

    fn dispatched(&mut self, command: &SkillCommand, target: Option<&ObjectId>) {
        if matches!(command.skill, Skill::Pick { .. }) {
            self.truth.note_target(target.cloned());
        }
    }
}

/// Session knobs shared by every trial of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOptions {
    pub latency: LatencyModel,
    pub failure_prob: f64,
    pub timeout_s: f64,
    pub remote: Option<RemoteConfig>,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions {
            latency: LatencyModel::default(),
            failure_prob: 0.0,
            timeout_s: crate::orchestrator::DEFAULT_TIMEOUT_S,
            remote: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairCheck {
    pub repair: String,
    pub time: f64,
    pub skill_text: String,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResumeCheck {
    pub time: f64,
    /// The truth timeline returns to the goal before the interjection.
    pub goal_restored: bool,
    /// The policy's pending set equals the truth's, for policies with
    /// dialogue state.
    pub pending_match: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub suite: String,
    pub script: String,
    pub task: crate::domain::TaskKind,
    pub policy: PolicyKind,
    pub seed: u64,
    pub marks: Vec<Mark>,
    pub instruction_accuracy: f64,
    pub task_progress: f64,
    pub violations: usize,
    pub repairs: Vec<RepairCheck>,
    pub resumes: Vec<ResumeCheck>,
    pub end_reason: String,
    pub end_time: f64,
    pub log_hash: String,
}

fn build_policy(kind: PolicyKind, cfg: &SessionConfig, script: &UserScript) -> Result<Box<dyn Policy>, EvalError> {
    Ok(match kind {
        PolicyKind::OracleScripted => Box::new(OraclePolicy::new(script)),
        _ => make_policy(cfg)?,
    })
}

fn session_config(policy: PolicyKind, trial: &Trial, seed: u64, opts: &TrialOptions) -> SessionConfig {
    let mut cfg = SessionConfig::new(trial.script.task, policy, seed);
    cfg.latency = opts.latency;
    cfg.failure_prob = opts.failure_prob;
    cfg.timeout_s = opts.timeout_s;
    cfg.remote = opts.remote.clone();
    cfg
}

struct Driver<'a> {
    steps: &'a [ScriptStep],
    next_step: usize,
    skills_done: usize,
    truth: TruthTracker,
    repair: Option<Repair>,
    marks: Vec<Mark>,
    repairs: Vec<RepairCheck>,
    resumes: Vec<ResumeCheck>,
    contacts: BTreeSet<ObjectId>,
    scanned: usize,
}

impl Driver<'_> {
    /// Schedules every step from `next_step` on that is due now or at a
    /// fixed time; stops at the first step waiting on the session.
    fn arm(&mut self, session: &mut Session) {
        while let Some(step) = self.steps.get(self.next_step) {
            match step.trigger {
                Trigger::AtTime { time } => {
                    session.schedule_user_event(UserEvent { kind: step.event.clone(), time });
                    self.next_step += 1;
                }
                _ => break,
            }
        }
    }

    fn fire(&mut self, session: &mut Session) {
        let kind = self.steps[self.next_step].event.clone();
        let time = session.now_us() as f64 / 1e6;
        session.schedule_user_event(UserEvent { kind, time });
        self.next_step += 1;
        self.arm(session);
    }

    fn scan(&mut self, session: &mut Session) {
        let new: Vec<_> = session.log().records[self.scanned..].to_vec();
        self.scanned = session.log().records.len();
        for r in new {
            match r.kind {
                LogKind::UserEvent => {
                    let Ok(event) = serde_json::from_value::<UserEvent>(r.payload["event"].clone()) else { continue };
                    let scene: SceneState = serde_json::from_value(r.payload["scene"].clone()).unwrap_or_default();
                    let before = self.truth.saved_goal().cloned();
                    self.truth.apply(&event.kind, &scene);
                    self.repair = self.truth.repair.clone();
                    if event.kind == UserEventKind::Resume {
                        let pending_match = session.policy().dialogue().map(|(ctx, goal)| {
                            goal.agenda(&scene, &ctx.overrides()).pending_ids() == self.truth.agenda(&scene).pending_ids()
                        });
                        self.resumes.push(ResumeCheck {
                            time: r.time,
                            goal_restored: before.as_ref() == Some(&self.truth.goal),
                            pending_match,
                        });
                    }
                }
                LogKind::HlInvoked => {
                    if r.payload["retain_previous"].as_bool().unwrap_or(false) {
                        continue;
                    }
                    let decision = HighLevelDecision {
                        skill_text: r.payload["skill_text"].as_str().unwrap_or_default().to_string(),
                        utterance: r.payload["utterance"].as_str().map(String::from),
                    };
                    let scene = session.scene();
                    let mut ctx = self.truth.judge_context();
                    ctx.repair = self.repair.as_ref();
                    let correct = auto_judge(&decision, &self.truth.goal, scene, &ctx);
                    if let Some(rep) = self.repair.take() {
                        self.repairs.push(RepairCheck {
                            repair: rep.name().into(),
                            time: r.time,
                            skill_text: decision.skill_text.clone(),
                            ok: correct,
                        });
                    }
                    self.marks.push(Mark {
                        decision_id: r.payload["decision_id"].as_u64().unwrap_or(0),
                        time: r.time,
                        skill_text: decision.skill_text,
                        correct,
                    });
                }
                LogKind::CommandIssued if r.payload["action"] == "start" => {
                    let text = r.payload["skill_text"].as_str().unwrap_or_default();
                    if matches!(parse_command(text).map(|c| c.skill), Ok(Skill::Pick { .. })) {
                        self.truth.note_target(r.payload["target"].as_str().map(ObjectId::new));
                    }
                    if let Some(ScriptStep { trigger: Trigger::OnCommandMatching { pattern }, .. }) =
                        self.steps.get(self.next_step)
                    {
                        if text.contains(pattern.as_str()) {
                            self.fire(session);
                        }
                    }
                }
                LogKind::SkillDone => {
                    self.skills_done += 1;
                    if r.payload["skill"] == "pick" {
                        if let (Some(id), Ok(scene)) = (
                            r.payload["object"].as_str(),
                            serde_json::from_value::<SceneState>(r.payload["scene"].clone()),
                        ) {
                            let id = ObjectId::new(id);
                            if self.truth.agenda(&scene).excluded.contains(&id) {
                                self.contacts.insert(id);
                            }
                        }
                    }
                    if let Some(ScriptStep { trigger: Trigger::OnSkillDone { n }, .. }) = self.steps.get(self.next_step) {
                        if self.skills_done >= *n {
                            self.fire(session);
                        }
                    }
                }
                _ => {}
            }
        }
    }
}

/// Runs one scripted trial and scores it against the script's ground truth.
pub fn run_trial(
    suite: &str,
    policy: PolicyKind,
    trial: &Trial,
    seed: u64,
    opts: &TrialOptions,
) -> Result<(TrialResult, EventLog), EvalError> {
    trial.script.check().map_err(EvalError::Script)?;
    let cfg = session_config(policy, trial, seed, opts);
    let pol = build_policy(policy, &cfg, &trial.script)?;
    let catalog = TaskCatalog::bundled(trial.script.task);
    let mut session = Session::new(cfg, pol)?;
    let mut d = Driver {
        steps: &trial.script.steps,
        next_step: 0,
        skills_done: 0,
        truth: TruthTracker::new(trial.script.ground_truth.clone(), catalog.default_goal(), catalog.profile().arms().len()),
        repair: None,
        marks: Vec::new(),
        repairs: Vec::new(),
        resumes: Vec::new(),
        contacts: BTreeSet::new(),
        scanned: 0,
    };
    d.arm(&mut session);
    while session.step() {
        d.scan(&mut session);
    }
    d.scan(&mut session);

    let scene = session.scene();
    let ov = d.truth.overrides();
    let mut violations = d.contacts.clone();
    violations.extend(moved_excluded(scene, &d.truth.goal, &ov));
    let tp = task_progress_with(scene, &d.truth.goal, &ov).unwrap_or(0.0);
    let ia = instruction_accuracy(&d.marks).unwrap_or(0.0);
    let end = session.log().of_kind(LogKind::TrialEnd).last().cloned();
    let log = session.into_log();
    let result = TrialResult {
        suite: suite.to_string(),
        script: trial.script.name.clone(),
        task: trial.script.task,
        policy,
        seed,
        marks: d.marks,
        instruction_accuracy: ia,
        task_progress: tp,
        violations: violations.len(),
        repairs: d.repairs,
        resumes: d.resumes,
        end_reason: end.as_ref().and_then(|e| e.payload["reason"].as_str()).unwrap_or("unfinished").to_string(),
        end_time: end.map_or(0.0, |e| e.time),
        log_hash: log.hash(),
    };
    Ok((result, log))
}

/// Aggregate of one (policy, suite) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub policy: PolicyKind,
    pub suite: String,
    pub task: crate::domain::TaskKind,
    pub trials: usize,
    pub ia_mean: f64,
    pub ia_min: f64,
    pub ia_max: f64,
    pub tp_mean: f64,
    pub violations: usize,
    pub trials_with_violations: usize,
    pub repairs_ok: usize,
    pub repairs_total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedGap {
    pub suite: String,
    pub ia_gap: f64,
    pub tp_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub trials_per_cell: usize,
    pub cells: Vec<Cell>,
    /// hierarchical_reference minus flat_passthrough, per suite.
    pub gaps: Vec<PairedGap>,
    pub results: Vec<TrialResult>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn cell(policy: PolicyKind, suite: &Suite, rs: &[&TrialResult]) -> Cell {
    let ias = || rs.iter().map(|r| r.instruction_accuracy);
    Cell {
        policy,
        suite: suite.name.clone(),
        task: suite.task,
        trials: rs.len(),
        ia_mean: mean(ias()),
        ia_min: ias().fold(f64::INFINITY, f64::min),
        ia_max: ias().fold(f64::NEG_INFINITY, f64::max),
        tp_mean: mean(rs.iter().map(|r| r.task_progress)),
        violations: rs.iter().map(|r| r.violations).sum(),
        trials_with_violations: rs.iter().filter(|r| r.violations > 0).count(),
        repairs_ok: rs.iter().flat_map(|r| &r.repairs).filter(|c| c.ok).count(),
        repairs_total: rs.iter().map(|r| r.repairs.len()).sum(),
    }
}

/// Runs every (policy, suite) cell. Trial `i` of a cell uses the suite's
/// `i`-th script (cycling) with scene seed `seed + suite seed`.
pub fn run_benchmark(
    policies: &[PolicyKind],
    suites: &[Suite],
    trials_per_cell: usize,
    seed: u64,
    opts: &TrialOptions,
) -> Result<Report, EvalError> {
    let mut jobs = Vec::new();
    for p in policies {
        for si in 0..suites.len() {
            for i in 0..trials_per_cell {
                jobs.push((*p, si, i));
            }
        }
    }
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(p, si, i)| {
            let s = &suites[si];
            let trial = &s.trials[i % s.trials.len()];
            let trial_seed = seed.wrapping_add(trial.seed).wrapping_add((i / s.trials.len()) as u64 * 1000);
            run_trial(&s.name, p, trial, trial_seed, opts).map(|(r, _)| r)
        })
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::new();
    for p in policies {
        for s in suites {
            let rs: Vec<&TrialResult> = results.iter().filter(|r| r.policy == *p && r.suite == s.name).collect();
            cells.push(cell(*p, s, &rs));
        }
    }
    let find = |p: PolicyKind, s: &str| cells.iter().find(|c| c.policy == p && c.suite == s);
    let gaps = suites
        .iter()
        .filter_map(|s| {
            let h = find(PolicyKind::HierarchicalReference, &s.name)?;
            let f = find(PolicyKind::FlatPassthrough, &s.name)?;
            Some(PairedGap { suite: s.name.clone(), ia_gap: h.ia_mean - f.ia_mean, tp_gap: h.tp_mean - f.tp_mean })
        })
        .collect();
    Ok(Report { seed, trials_per_cell, cells, gaps, results })
}

impl Report {
    pub fn cell(&self, policy: PolicyKind, suite: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.policy == policy && c.suite == suite)
    }

    /// Suites as rows, policies as columns, "IA / TP" per cell.
    pub fn table(&self) -> String {
        let mut policies: Vec<PolicyKind> = Vec::new();
        let mut suites: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !policies.contains(&c.policy) {
                policies.push(c.policy);
            }
            if !suites.contains(&c.suite.as_str()) {
                suites.push(&c.suite);
            }
        }
        let w = 26;
        let mut out = String::new();
        let _ = write!(out, "{:<22}", "suite (IA / TP / viol)");
        for p in &policies {
            let _ = write!(out, " {:>w$}", p.as_str());
        }
        out.push('\n');
        for s in &suites {
            let _ = write!(out, "{s:<22}");
            for p in &policies {
                match self.cell(*p, s) {
                    Some(c) => {
                        let v = format!("{:.2} / {:.2} / {}", c.ia_mean, c.tp_mean, c.violations);
                        let _ = write!(out, " {v:>w$}");
                    }
                    None => {
                        let _ = write!(out, " {:>w$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        for g in &self.gaps {
            let _ = writeln!(out, "gap {:<18} IA {:+.2}  TP {:+.2}", g.suite, g.ia_gap, g.tp_gap);
        }
        out
    }
}
