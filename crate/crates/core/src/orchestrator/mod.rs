//! Two-rate control loop over a virtual microsecond clock.
//!
//! The high level is invoked on the first prompt, then one period after
//! its last invocation, and immediately on user events. Decisions take
//! effect after their modeled decoding latency. The low level streams
//! chunks back to back, each needing one inference before it can start.

mod flat;
mod log;

pub use flat::FlatPolicy;
pub use log::{detect_gaps, EventLog, Gap, LogError, LogKind, LogRecord};

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::domain::{Overrides, RobotState, SceneState, Skill, TaskKind, UserEvent, UserEventKind};
use crate::highlevel::{
    Observation, Policy, PolicyKind, PolicyOutput, ReferencePolicy, RemoteConfig, RemotePolicy, Strictness,
};
use crate::lowlevel::{parse_command, ExecutionPlan, Executor, LatencyModel, DEFAULT_H};
use crate::simenv::{goal_satisfied, goal_satisfied_with, load_task, Outcome, TaskCatalog};

pub const DEFAULT_TIMEOUT_S: f64 = 120.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub task: TaskKind,
    pub seed: u64,
    pub policy: PolicyKind,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default = "default_period")]
    pub highlevel_period_s: f64,
    #[serde(default)]
    pub realtime: bool,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default)]
    pub failure_prob: f64,
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
}

fn default_h() -> usize {
    DEFAULT_H
}
fn default_period() -> f64 {
    1.0
}
fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

impl SessionConfig {
    pub fn new(task: TaskKind, policy: PolicyKind, seed: u64) -> Self {
        SessionConfig {
            task,
            seed,
            policy,
            latency: LatencyModel::default(),
            h: DEFAULT_H,
            highlevel_period_s: 1.0,
            realtime: false,
            timeout_s: DEFAULT_TIMEOUT_S,
            failure_prob: 0.0,
            remote: None,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if !(self.highlevel_period_s > 0.0) {
            return Err(SessionError::Config("highlevel_period_s must be positive".into()));
        }
        if self.h < 1 {
            return Err(SessionError::Config("h must be at least 1".into()));
        }
        if !self.latency.is_valid() {
            return Err(SessionError::Config("latency values must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.failure_prob) {
            return Err(SessionError::Config("failure_prob outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("policy {0} needs a scripted trial")]
    NeedsScript(PolicyKind),
    #[error("policy remote_backend needs an endpoint")]
    NeedsRemote,
}

/// Builds the high-level policy for a config. The scripted oracle lives
/// with the evaluation harness.
pub fn make_policy(cfg: &SessionConfig) -> Result<Box<dyn Policy>, SessionError> {
    let catalog = TaskCatalog::bundled(cfg.task);
    Ok(match cfg.policy {
        PolicyKind::HierarchicalReference => Box::new(ReferencePolicy::new(catalog, Strictness::Full)),
        PolicyKind::ReferenceNoConstraints => Box::new(ReferencePolicy::new(catalog, Strictness::IgnoreConstraints)),
        PolicyKind::FlatPassthrough => Box::new(FlatPolicy::new(catalog)),
        PolicyKind::RemoteBackend => {
            let remote = cfg.remote.clone().ok_or(SessionError::NeedsRemote)?;
            Box::new(RemotePolicy::new(cfg.task, remote))
        }
        PolicyKind::OracleScripted => return Err(SessionError::NeedsScript(cfg.policy)),
    })
}

pub fn secs_to_us(s: f64) -> u64 {
    (s * 1e6).round().max(0.0) as u64
}

#[derive(Clone, Debug, PartialEq)]
enum Ev {
    Timeout,
    SkillEnd(u64),
    ChunkStart(u64, u64),
    DecisionReady(u64),
    User(UserEvent),
    HlTick(u64),
}

impl Ev {
    fn priority(&self) -> u8 {
        match self {
            Ev::Timeout => 0,
            Ev::SkillEnd(_) => 1,
            Ev::ChunkStart(..) => 2,
            Ev::DecisionReady(_) => 3,
            Ev::User(_) => 4,
            Ev::HlTick(_) => 5,
        }
    }
}

struct Queued {
    key: (u64, u8, u64),
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.key.cmp(&o.key)
    }
}

struct Pending {
    id: u64,
    invoked_at: u64,
    output: PolicyOutput,
}

struct Active {
    plan: ExecutionPlan,
    last_start: Option<u64>,
}

/// One session: scene, robot, policy and the event queue driving them.
pub struct Session {
    pub config: SessionConfig,
    scene: SceneState,
    robot: RobotState,
    executor: Executor,
    policy: Box<dyn Policy>,
    rng: ChaCha8Rng,
    log: EventLog,
    queue: BinaryHeap<Reverse<Queued>>,
    queue_seq: u64,
    now: u64,
    started: bool,
    ended: bool,
    tick_gen: u64,
    next_decision: u64,
    pending: Option<Pending>,
    active: Option<Active>,
    next_command: u64,
    prior_skills: Vec<String>,
    last_skill_end: Option<u64>,
}

impl Session {
    pub fn new(config: SessionConfig, policy: Box<dyn Policy>) -> Result<Session, SessionError> {
        config.validate()?;
        let (scene, robot, _) = load_task(config.task, config.seed);
        let mut executor = Executor::new(robot.profile);
        executor.h = config.h;
        executor.latency = config.latency;
        executor.failure_prob = config.failure_prob;
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5eed);
        let mut log = EventLog::default();
        log.push(
            0,
            LogKind::SessionStart,
            json!({ "task": config.task, "seed": config.seed, "policy": policy.kind(), "scene": scene, "robot": robot }),
        );
        Ok(Session {
            config,
            scene,
            robot,
            executor,
            policy,
            rng,
            log,
            queue: BinaryHeap::new(),
            queue_seq: 0,
            now: 0,
            started: false,
            ended: false,
            tick_gen: 0,
            next_decision: 0,
            pending: None,
            active: None,
            next_command: 0,
            prior_skills: Vec::new(),
            last_skill_end: None,
        })
    }

    pub fn from_config(config: SessionConfig) -> Result<Session, SessionError> {
        let policy = make_policy(&config)?;
        Session::new(config, policy)
    }

    pub fn scene(&self) -> &SceneState {
        &self.scene
    }
    pub fn robot(&self) -> &RobotState {
        &self.robot
    }
    pub fn log(&self) -> &EventLog {
        &self.log
    }
    pub fn into_log(self) -> EventLog {
        self.log
    }
    pub fn policy(&self) -> &dyn Policy {
        self.policy.as_ref()
    }
    pub fn now_us(&self) -> u64 {
        self.now
    }
    pub fn is_ended(&self) -> bool {
        self.ended
    }
    pub fn prior_skills(&self) -> &[String] {
        &self.prior_skills
    }
    pub fn span_us(&self) -> u64 {
        self.config.latency.chunk_span_us(self.config.h)
    }

    fn push(&mut self, at: u64, ev: Ev) {
        self.queue_seq += 1;
        self.queue.push(Reverse(Queued { key: (at, ev.priority(), self.queue_seq), ev }));
    }

    /// Queues a user event at its own time (never earlier than now).
    pub fn schedule_user_event(&mut self, mut event: UserEvent) {
        let at = secs_to_us(event.time).max(self.now);
        event.time = at as f64 / 1e6;
        self.push(at, Ev::User(event));
    }

    pub fn next_event_time(&self) -> Option<u64> {
        self.queue.peek().map(|Reverse(q)| q.key.0)
    }

    /// Processes the next queued event. Returns false once nothing is left.
    pub fn step(&mut self) -> bool {
        if self.ended {
            return false;
        }
        let Some(Reverse(q)) = self.queue.pop() else { return false };
        self.now = q.key.0;
        self.scene.time = self.now as f64 / 1e6;
        match q.ev {
            Ev::Timeout => self.end("timeout"),
            Ev::SkillEnd(id) => self.on_skill_end(id),
            Ev::ChunkStart(id, k) => self.on_chunk(id, k),
            Ev::DecisionReady(id) => self.on_decision(id),
            Ev::User(ev) => self.on_user(ev),
            Ev::HlTick(g) => {
                if g == self.tick_gen {
                    self.invoke("tick");
                }
            }
        }
        true
    }

    /// Processes every event strictly before `t_us`, then sets the clock to it.
    pub fn run_until(&mut self, t_us: u64) {
        while !self.ended && self.next_event_time().is_some_and(|t| t < t_us) {
            self.step();
        }
        if !self.ended {
            self.now = self.now.max(t_us);
        }
    }

    /// Ends the session at the current time.
    pub fn stop(&mut self) {
        self.end("stopped");
    }

    /// Logs an operator's verdict on a decision.
    pub fn record_mark(&mut self, decision_id: u64, correct: bool) {
        self.log.push(self.now, LogKind::EvalMark, json!({ "decision_id": decision_id, "correct": correct }));
    }

    pub fn run_to_end(&mut self) {
        while self.step() {}
    }

    fn snapshot(&self) -> Value {
        json!({ "scene": self.scene, "robot": self.robot })
    }

    fn on_user(&mut self, ev: UserEvent) {
        let mut payload = json!({ "event": ev });
        payload["scene"] = json!(self.scene);
        payload["robot"] = json!(self.robot);
        self.log.push(self.now, LogKind::UserEvent, payload);
        let obs = Observation { scene: &self.scene, robot: &self.robot, prior_skills: &self.prior_skills, time: self.scene.time };
        self.policy.on_user_event(&ev, &obs);
        if !self.started {
            if !matches!(ev.kind, UserEventKind::Prompt { .. }) {
                return;
            }
            self.started = true;
            let end = self.now + secs_to_us(self.config.timeout_s);
            self.push(end, Ev::Timeout);
        }
        let triggers = matches!(ev.kind, UserEventKind::Prompt { .. }) || self.policy.reactive();
        if triggers {
            self.invoke("user_event");
        }
    }

    fn invoke(&mut self, trigger: &str) {
        let obs = Observation { scene: &self.scene, robot: &self.robot, prior_skills: &self.prior_skills, time: self.scene.time };
        let output = self.policy.decide(&obs);
        let tokens = output.decision.token_count();
        let latency = if self.policy.charges_latency() { self.config.latency.highlevel_us(tokens) } else { 0 };
        let id = self.next_decision;
        self.next_decision += 1;
        let mut payload = json!({
            "decision_id": id,
            "trigger": trigger,
            "policy": self.policy.kind(),
            "skill_text": output.decision.skill_text,
            "utterance": output.decision.utterance,
            "tokens": tokens,
            "latency": latency as f64 / 1e6,
            "retain_previous": output.retain_previous,
        });
        if let Some(e) = &output.error {
            payload["error"] = json!(e);
        }
        self.log.push(self.now, LogKind::HlInvoked, payload);
        if !output.retain_previous {
            self.pending = Some(Pending { id, invoked_at: self.now, output });
            self.push(self.now + latency, Ev::DecisionReady(id));
        }
        self.tick_gen += 1;
        let next = self.now + secs_to_us(self.config.highlevel_period_s);
        self.push(next, Ev::HlTick(self.tick_gen));
    }

    fn on_decision(&mut self, id: u64) {
        let Some(p) = self.pending.take_if(|p| p.id == id) else { return };
        let stale = self.last_skill_end.is_some_and(|t| t > p.invoked_at && t <= self.now);
        if stale && self.active.is_none() {
            return;
        }
        let decision = p.output.decision.stripped();
        if let Some(u) = decision.utterance.as_ref().filter(|u| !u.trim().is_empty()) {
            self.log.push(self.now, LogKind::Utterance, json!({ "decision_id": id, "text": u }));
            self.policy.utterance_issued();
        }
        let cmd = match parse_command(&decision.skill_text) {
            Ok(c) => c,
            Err(e) => {
                let cid = self.new_command_id();
                self.log.push(
                    self.now,
                    LogKind::CommandIssued,
                    json!({ "id": cid, "decision_id": id, "skill_text": decision.skill_text, "action": "rejected" }),
                );
                self.log.push(
                    self.now,
                    LogKind::SkillFailed,
                    json!({ "command_id": cid, "reason": "out_of_grammar", "detail": e.to_string(), "skill_text": decision.skill_text }),
                );
                return;
            }
        };
        if let Some(a) = &self.active {
            if a.plan.command.skill == cmd.skill {
                self.log.push(
                    self.now,
                    LogKind::CommandIssued,
                    json!({
                        "id": a.plan.command_id,
                        "decision_id": id,
                        "skill_text": decision.skill_text,
                        "action": "continue",
                        "target": a.plan.resolved_object_id,
                    }),
                );
                return;
            }
        }
        let preempted = self.active.take().map(|a| a.plan.command_id);
        let cid = self.new_command_id();
        let begun = self.executor.begin_skill(&self.scene, &self.robot, &cmd, cid, &mut self.rng);
        let target = begun.as_ref().ok().and_then(|p| p.resolved_object_id.clone());
        self.log.push(
            self.now,
            LogKind::CommandIssued,
            json!({
                "id": cid,
                "decision_id": id,
                "skill_text": decision.skill_text,
                "action": "start",
                "target": target,
                "preempted": preempted,
            }),
        );
        match begun {
            Ok(plan) => {
                self.policy.dispatched(&cmd, plan.resolved_object_id.as_ref());
                self.active = Some(Active { plan, last_start: None });
                let at = self.now + self.config.latency.chunk_inference_us();
                self.push(at, Ev::ChunkStart(cid, 0));
            }
            Err(e) => {
                self.log.push(
                    self.now,
                    LogKind::SkillFailed,
                    json!({ "command_id": cid, "reason": e.code(), "detail": e.to_string(), "skill_text": decision.skill_text }),
                );
            }
        }
    }

    fn new_command_id(&mut self) -> u64 {
        self.next_command += 1;
        self.next_command
    }

    fn on_chunk(&mut self, cid: u64, index: u64) {
        let span = self.span_us();
        let inference = self.config.latency.chunk_inference_us();
        let rate = self.config.latency.control_rate_hz;
        let now = self.now;
        let Some(a) = self.active.as_mut().filter(|a| a.plan.command_id == cid) else { return };
        let start_step = (now as f64 * rate / 1e6).round() as u64;
        let chunk = match self.executor.next_chunk(&mut a.plan, &mut self.robot, start_step) {
            Ok(c) => c,
            Err(_) => return,
        };
        let gap = a.last_start.map(|prev| now - prev).filter(|d| *d > span);
        a.last_start = Some(now);
        let complete = a.plan.is_complete();
        let text = a.plan.command.raw_text.clone();
        self.log.push(
            now,
            LogKind::Chunk,
            json!({
                "command_id": cid,
                "index": index,
                "start_step": chunk.start_step,
                "skill_text": text,
                "span": span as f64 / 1e6,
                "actions": chunk.actions,
            }),
        );
        if let Some(d) = gap {
            self.log.push(
                now,
                LogKind::GapDetected,
                json!({ "command_id": cid, "index": index, "delta": d as f64 / 1e6, "span": span as f64 / 1e6 }),
            );
        }
        if complete {
            self.push(now + span, Ev::SkillEnd(cid));
        } else {
            self.push(now + span.max(inference), Ev::ChunkStart(cid, index + 1));
        }
    }

    fn on_skill_end(&mut self, cid: u64) {
        let Some(a) = self.active.take_if(|a| a.plan.command_id == cid) else { return };
        self.last_skill_end = Some(self.now);
        let plan = a.plan;
        match self.executor.finish(&plan, &self.scene, &self.robot) {
            Ok((scene, robot)) => {
                self.scene = scene;
                self.scene.time = self.now as f64 / 1e6;
                self.robot = robot;
            }
            Err(e) => {
                self.log.push(
                    self.now,
                    LogKind::SkillFailed,
                    json!({ "command_id": cid, "reason": "effect_error", "detail": e.to_string(), "skill_text": plan.command.raw_text }),
                );
                return;
            }
        }
        if plan.outcome == Outcome::Failure {
            self.log.push(
                self.now,
                LogKind::SkillFailed,
                json!({ "command_id": cid, "reason": "execution_failed", "detail": "skill did not succeed", "skill_text": plan.command.raw_text }),
            );
            return;
        }
        let mut payload = json!({
            "command_id": cid,
            "skill_text": plan.command.raw_text,
            "skill": plan.command.skill,
            "object": plan.resolved_object_id,
            "arm": plan.arm,
            "outcome": plan.outcome,
        });
        payload["scene"] = json!(self.scene);
        payload["robot"] = json!(self.robot);
        self.log.push(self.now, LogKind::SkillDone, payload);
        self.prior_skills.push(plan.command.raw_text.clone());
        if matches!(plan.command.skill, Skill::Home | Skill::Done) {
            self.end("done");
        }
    }

    fn end(&mut self, reason: &str) {
        if self.ended {
            return;
        }
        let default_goal = TaskCatalog::bundled(self.config.task).default_goal();
        let (satisfied, (done, total)) = match self.policy.dialogue() {
            Some((ctx, goal)) => (
                goal_satisfied_with(&self.scene, goal, &ctx.overrides()),
                goal.agenda(&self.scene, &ctx.overrides()).progress(),
            ),
            None => (
                goal_satisfied(&self.scene, &default_goal),
                default_goal.agenda(&self.scene, &Overrides::none()).progress(),
            ),
        };
        let tp = (total > 0).then(|| done as f64 / total as f64);
        let mut payload = json!({ "reason": reason, "goal_satisfied": satisfied, "task_progress": tp });
        let snap = self.snapshot();
        payload["scene"] = snap["scene"].clone();
        payload["robot"] = snap["robot"].clone();
        self.log.push(self.now, LogKind::TrialEnd, payload);
        self.ended = true;
    }
}

/// Runs a session headless over a fixed event timeline.
pub fn run_session(config: SessionConfig, events: &[UserEvent]) -> Result<EventLog, SessionError> {
    let mut s = Session::from_config(config)?;
    for e in events {
        s.schedule_user_event(e.clone());
    }
    s.run_to_end();
    Ok(s.into_log())
}

pub fn prompt_at(text: &str, time: f64) -> UserEvent {
    UserEvent { kind: UserEventKind::Prompt { text: text.into() }, time }
}

pub fn interjection_at(text: &str, time: f64) -> UserEvent {
    UserEvent { kind: UserEventKind::Interjection { text: text.into() }, time }
}
