//! Low-level executor: grounds parsed commands in the scene and streams
//! them out as fixed-size action chunks under a latency model.

mod grammar;

pub use grammar::{normalize, parse_command, render_command, Grammar, GrammarError, Rule};

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    name_matches, ActionChunk, Arm, ArmSide, Direction, GripperAction, Location, ObjectClass, ObjectId,
    RobotProfile, RobotState, Rotation, SceneObject, SceneState, Skill, SkillCommand, ARM_JOINTS,
};
use crate::simenv::{apply_robot_effect, apply_skill_effect, Outcome, ResolvedSkill, SimError};

/// Fixed duration for Move/Rotate/Gripper primitives and Done.
pub const PRIMITIVE_DURATION_S: f64 = 0.5;
pub const SKILL_DURATION_RANGE_S: (f64, f64) = (1.0, 3.0);
pub const DEFAULT_H: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub per_chunk_inference_ms: f64,
    pub control_rate_hz: f64,
    pub highlevel_prefill_ms: f64,
    pub highlevel_per_token_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            per_chunk_inference_ms: 86.0,
            control_rate_hz: 50.0,
            highlevel_prefill_ms: 47.0,
            highlevel_per_token_ms: 13.2,
        }
    }
}

pub fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round() as u64
}

impl LatencyModel {
    pub fn is_valid(&self) -> bool {
        self.per_chunk_inference_ms > 0.0
            && self.control_rate_hz > 0.0
            && self.highlevel_prefill_ms > 0.0
            && self.highlevel_per_token_ms > 0.0
    }

    /// Wall time covered by one chunk of `h` actions, in microseconds.
    pub fn chunk_span_us(&self, h: usize) -> u64 {
        (h as f64 * 1e6 / self.control_rate_hz).round() as u64
    }

    pub fn chunk_inference_us(&self) -> u64 {
        ms_to_us(self.per_chunk_inference_ms)
    }

    pub fn highlevel_us(&self, tokens: usize) -> u64 {
        ms_to_us(self.highlevel_prefill_ms + tokens as f64 * self.highlevel_per_token_ms)
    }

    /// Chunks arrive before the previous one runs out.
    pub fn realtime_feasible(&self, h: usize) -> bool {
        self.per_chunk_inference_ms < 1000.0 * h as f64 / self.control_rate_hz
    }

    pub fn chunks_for(&self, duration_s: f64, h: usize) -> u32 {
        (duration_s * self.control_rate_hz / h as f64 - 1e-9).ceil().max(1.0) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum StartError {
    #[error("no object matches '{0}'")]
    NotFound(String),
    #[error("gripper occupied")]
    GripperOccupied,
    #[error("gripper empty")]
    GripperEmpty,
    #[error("destination '{0}' not in fixture catalog")]
    UnknownDestination(String),
}

impl StartError {
    pub fn code(&self) -> &'static str {
        match self {
            StartError::NotFound(_) => "not_found",
            StartError::GripperOccupied => "gripper_occupied",
            StartError::GripperEmpty => "gripper_empty",
            StartError::UnknownDestination(_) => "unknown_destination",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("chunk requested after plan completed")]
    ChunkAfterComplete,
    #[error("plan not complete")]
    Incomplete,
    #[error(transparent)]
    Sim(#[from] SimErrorText),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct SimErrorText(pub String);

impl From<SimError> for ExecError {
    fn from(e: SimError) -> Self {
        ExecError::Sim(SimErrorText(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub command_id: u64,
    pub command: SkillCommand,
    pub resolved_object_id: Option<ObjectId>,
    pub arm: Arm,
    pub duration: f64,
    pub chunks_total: u32,
    pub chunks_emitted: u32,
    pub outcome: Outcome,
    pub start_q: Vec<f64>,
}

impl ExecutionPlan {
    pub fn is_complete(&self) -> bool {
        self.chunks_emitted >= self.chunks_total
    }

    pub fn resolved(&self) -> ResolvedSkill {
        ResolvedSkill { skill: self.command.skill.clone(), object: self.resolved_object_id.clone(), arm: self.arm }
    }
}

/// Grounds a noun phrase: exact display name, then head noun, then class
/// noun. Held objects are skipped; objects on a surface beat those in
/// containers; remaining ties go to the smallest id.
pub fn resolve_object<'a>(scene: &'a SceneState, phrase: &str) -> Result<&'a SceneObject, StartError> {
    let p = Grammar::bundled().strip_determiners(phrase);
    let free: Vec<&SceneObject> = scene.objects.iter().filter(|o| !o.is_held()).collect();
    let tiers: [&dyn Fn(&SceneObject) -> bool; 3] = [
        &|o| normalize(&o.display_name) == p,
        &|o| name_matches(&o.display_name, &p),
        &|o| ObjectClass::ALL.iter().any(|c| c.as_str() == p && o.object_class == *c),
    ];
    for tier in tiers {
        let hits: Vec<&SceneObject> = free.iter().copied().filter(|o| tier(o)).collect();
        let best = hits
            .iter()
            .filter(|o| matches!(o.location, Location::Surface(_)))
            .min_by(|a, b| a.id.cmp(&b.id))
            .or_else(|| hits.iter().min_by(|a, b| a.id.cmp(&b.id)));
        if let Some(o) = best {
            return Ok(o);
        }
    }
    Err(StartError::NotFound(p))
}

/// Runs skills for one robot. Stateless between plans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Executor {
    pub profile: RobotProfile,
    pub h: usize,
    pub latency: LatencyModel,
    /// Probability a started skill fails at its end.
    pub failure_prob: f64,
}

impl Executor {
    pub fn new(profile: RobotProfile) -> Self {
        Executor { profile, h: DEFAULT_H, latency: LatencyModel::default(), failure_prob: 0.0 }
    }

    fn move_arm(&self, side: Option<ArmSide>) -> Arm {
        match (self.profile.arms(), side) {
            ([single], _) => *single,
            (_, Some(s)) => s.arm(),
            (arms, None) => arms[0],
        }
    }

    pub fn begin_skill<R: Rng>(
        &self,
        scene: &SceneState,
        robot: &RobotState,
        command: &SkillCommand,
        command_id: u64,
        rng: &mut R,
    ) -> Result<ExecutionPlan, StartError> {
        let arms = self.profile.arms();
        let (object, arm) = match &command.skill {
            Skill::Pick { object } => {
                let o = resolve_object(scene, object)?;
                let arm = arms
                    .iter()
                    .copied()
                    .find(|a| scene.held_by(*a).is_none())
                    .ok_or(StartError::GripperOccupied)?;
                (Some(o.id.clone()), arm)
            }
            Skill::Place { object, destination } => {
                if !scene.fixtures.contains(destination) {
                    return Err(StartError::UnknownDestination(destination.clone()));
                }
                let holding: Vec<(Arm, &SceneObject)> =
                    arms.iter().filter_map(|a| scene.held_by(*a).map(|o| (*a, o))).collect();
                let pick = object
                    .as_ref()
                    .and_then(|p| holding.iter().find(|(_, o)| name_matches(&o.display_name, p) || o.object_class.as_str() == p))
                    .or(holding.first())
                    .ok_or(StartError::GripperEmpty)?;
                (Some(pick.1.id.clone()), pick.0)
            }
            Skill::Move { arm, .. } => (None, self.move_arm(*arm)),
            _ => (None, arms[0]),
        };
        let duration = if command.skill.is_primitive() || command.skill == Skill::Done {
            PRIMITIVE_DURATION_S
        } else {
            rng.gen_range(SKILL_DURATION_RANGE_S.0..=SKILL_DURATION_RANGE_S.1)
        };
        let fail_draw: f64 = rng.gen();
        let outcome = if fail_draw < self.failure_prob { Outcome::Failure } else { Outcome::Success };
        Ok(ExecutionPlan {
            command_id,
            command: command.clone(),
            resolved_object_id: object,
            arm,
            duration,
            chunks_total: self.latency.chunks_for(duration, self.h),
            chunks_emitted: 0,
            outcome,
            start_q: robot.q.clone(),
        })
    }

    /// Emits the next `h` actions and advances the robot along them.
    pub fn next_chunk(
        &self,
        plan: &mut ExecutionPlan,
        robot: &mut RobotState,
        start_step: u64,
    ) -> Result<ActionChunk, ExecError> {
        if plan.is_complete() {
            return Err(ExecError::ChunkAfterComplete);
        }
        let total = (plan.chunks_total as usize * self.h) as f64;
        let base = plan.chunks_emitted as usize * self.h;
        let actions: Vec<Vec<f64>> = (1..=self.h)
            .map(|i| trajectory(&self.profile, plan, (base + i) as f64 / total))
            .collect();
        plan.chunks_emitted += 1;
        let last = actions.last().expect("h >= 1");
        robot.q.copy_from_slice(&last[..self.profile.config_dim]);
        for a in self.profile.arms() {
            let g = self.profile.arm_offset(*a) + ARM_JOINTS;
            robot.gripper_open.insert(*a, robot.q[g].clamp(0.0, 1.0));
        }
        Ok(ActionChunk { command_id: plan.command_id, actions, start_step })
    }

    /// Applies the plan's effect once every chunk has been emitted.
    pub fn finish(
        &self,
        plan: &ExecutionPlan,
        scene: &SceneState,
        robot: &RobotState,
    ) -> Result<(SceneState, RobotState), ExecError> {
        if !plan.is_complete() {
            return Err(ExecError::Incomplete);
        }
        let resolved = plan.resolved();
        let next = apply_skill_effect(scene, &resolved, plan.outcome)?;
        let r = apply_robot_effect(robot, &resolved, plan.outcome);
        Ok((next, r))
    }
}

fn smooth(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    p * p * (3.0 - 2.0 * p)
}

fn window(p: f64, a: f64, b: f64) -> f64 {
    smooth((p - a) / (b - a))
}

/// Axis inside an arm block that a Move primitive drives, with its sign.
pub fn move_axis(direction: Direction) -> (usize, f64) {
    match direction {
        Direction::Left => (0, -1.0),
        Direction::Right => (0, 1.0),
        Direction::TowardUser => (1, -1.0),
        Direction::AwayFromUser => (1, 1.0),
        Direction::Higher => (2, 1.0),
        Direction::Lower => (2, -1.0),
    }
}

pub const MOVE_STEP: f64 = 0.2;

/// Canned joint target at progress `p` in (0, 1].
fn trajectory(profile: &RobotProfile, plan: &ExecutionPlan, p: f64) -> Vec<f64> {
    let mut a = vec![0.0; profile.action_dim];
    a[..profile.config_dim].copy_from_slice(&plan.start_q);
    let off = profile.arm_offset(plan.arm);
    let g = off + ARM_JOINTS;
    let bump = (PI * p).sin();
    match &plan.command.skill {
        Skill::Pick { .. } | Skill::Place { .. } => {
            a[off + 1] += 0.3 * bump;
            a[off + 2] -= 0.2 * bump;
            a[off + 4] += 0.1 * bump;
            let target = if matches!(plan.command.skill, Skill::Pick { .. }) { 0.0 } else { 1.0 };
            let s = window(p, 0.55, 0.8);
            a[g] = plan.start_q[g] * (1.0 - s) + target * s;
        }
        Skill::Move { direction, .. } => {
            let (axis, sign) = move_axis(*direction);
            a[off + axis] += sign * MOVE_STEP * smooth(p);
        }
        Skill::Rotate { rotation } => {
            let sign = if *rotation == Rotation::Cw { -1.0 } else { 1.0 };
            a[off + 5] += sign * 0.5 * smooth(p);
        }
        Skill::Gripper { action } => {
            let target = if *action == GripperAction::Open { 1.0 } else { 0.0 };
            a[g] = plan.start_q[g] * (1.0 - smooth(p)) + target * smooth(p);
        }
        Skill::Home => {
            let s = smooth(p);
            for (i, v) in a.iter_mut().enumerate().take(profile.config_dim) {
                let home = if profile.gripper_dims().contains(&i) { plan.start_q[i] } else { 0.0 };
                *v = plan.start_q[i] * (1.0 - s) + home * s;
            }
        }
        Skill::Done => {}
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Fixtures, RobotKind, TaskKind};
    use crate::simenv::load_task;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn obj(id: &str, name: &str) -> SceneObject {
        SceneObject {
            id: ObjectId::new(id),
            display_name: name.into(),
            object_class: ObjectClass::Dish,
            attributes: BTreeSet::new(),
            color_tags: BTreeSet::new(),
            location: Location::Surface("table".into()),
            origin: Location::Surface("table".into()),
        }
    }

    fn scene(objs: Vec<SceneObject>) -> SceneState {
        SceneState {
            objects: objs,
            fixtures: Fixtures { surfaces: vec!["table".into()], containers: vec!["bussing_bin".into()] },
            time: 0.0,
        }
    }

    #[test]
    fn resolve_examples() {
        let s = scene(vec![obj("p1", "plate")]);
        assert_eq!(resolve_object(&s, "the plate").unwrap().id.as_str(), "p1");
        let s = scene(vec![obj("b9", "bowl"), obj("b2", "bowl")]);
        assert_eq!(resolve_object(&s, "bowl").unwrap().id.as_str(), "b2");
        let s = scene(vec![obj("b10", "white bowl"), obj("b9", "plastic bowl")]);
        assert_eq!(resolve_object(&s, "bowl").unwrap().id.as_str(), "b9");
        let s = scene(vec![]);
        assert!(matches!(resolve_object(&s, "kitkat"), Err(StartError::NotFound(_))));
    }

    #[test]
    fn resolve_prefers_surface() {
        let mut a = obj("b1", "bowl");
        a.location = Location::Container("bussing_bin".into());
        let s = scene(vec![a, obj("b2", "bowl")]);
        assert_eq!(resolve_object(&s, "bowl").unwrap().id.as_str(), "b2");
    }

    #[test]
    fn latency_defaults() {
        let l = LatencyModel::default();
        assert_eq!(l.chunk_span_us(10), 200_000);
        assert_eq!(l.chunk_inference_us(), 86_000);
        assert!(l.realtime_feasible(10));
        // 47 + 5 * 13.2 = 113 ms
        assert_eq!(l.highlevel_us(5), 113_000);
        // hand count: 0.5 s * 50 Hz = 25 steps -> 3 chunks of 10
        assert_eq!(l.chunks_for(0.5, 10), 3);
        assert_eq!(l.chunks_for(1.0, 10), 5);
        assert_eq!(l.chunks_for(1.01, 10), 6);
    }

    fn setup(task: TaskKind) -> (SceneState, RobotState, Executor) {
        let (s, r, _) = load_task(task, 1);
        let ex = Executor::new(r.profile);
        (s, r, ex)
    }

    #[test]
    fn pick_duration_and_move_plan() {
        let (s, r, ex) = setup(TaskKind::TableBussing);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let plan = ex.begin_skill(&s, &r, &parse_command("pick up the paper cup").unwrap(), 1, &mut rng).unwrap();
            assert!((1.0..=3.0).contains(&plan.duration));
            assert_eq!(plan.chunks_total, ex.latency.chunks_for(plan.duration, 10));
        }
        let mv = ex.begin_skill(&s, &r, &parse_command("move to the left").unwrap(), 2, &mut rng).unwrap();
        assert_eq!(mv.duration, 0.5);
        assert_eq!(mv.chunks_total, 3);
        let missing = ex.begin_skill(&s, &r, &parse_command("pick up kitkat").unwrap(), 3, &mut rng);
        assert!(matches!(missing, Err(StartError::NotFound(_))));
    }

    #[test]
    fn chunks_then_effect() {
        let (s, mut r, ex) = setup(TaskKind::TableBussing);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cmd = parse_command("pick up the paper cup").unwrap();
        let mut plan = ex.begin_skill(&s, &r, &cmd, 7, &mut rng).unwrap();
        plan.chunks_total = 5;
        for i in 0..5 {
            assert!(ex.finish(&plan, &s, &r).is_err());
            let c = ex.next_chunk(&mut plan, &mut r, i * 10).unwrap();
            assert_eq!(c.actions.len(), 10);
            assert!(c.actions.iter().all(|a| a.len() == 7));
            assert_eq!(c.command_id, 7);
        }
        assert!(plan.is_complete());
        assert_eq!(ex.next_chunk(&mut plan, &mut r, 50), Err(ExecError::ChunkAfterComplete));
        let (s2, r2) = ex.finish(&plan, &s, &r).unwrap();
        let cup = plan.resolved_object_id.clone().unwrap();
        assert_eq!(s2.object(&cup).unwrap().location, Location::Gripper(Arm::Single));
        assert_eq!(r2.gripper_open[&Arm::Single], 0.0);
    }

    #[test]
    fn action_dims_per_profile() {
        for t in TaskKind::ALL {
            let (s, mut r, ex) = setup(t);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut plan = ex.begin_skill(&s, &r, &parse_command("go higher").unwrap(), 1, &mut rng).unwrap();
            let c = ex.next_chunk(&mut plan, &mut r, 0).unwrap();
            let want = match r.profile.name {
                RobotKind::Ur5e => 7,
                RobotKind::BimanualArx => 14,
                RobotKind::MobileArx => 16,
            };
            assert!(c.actions.iter().all(|a| a.len() == want));
            assert!(r.is_valid());
        }
    }

    #[test]
    fn move_drives_one_axis() {
        let (s, mut r, ex) = setup(TaskKind::SandwichMaking);
        let start = r.q.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut plan =
            ex.begin_skill(&s, &r, &parse_command("move the right arm towards me").unwrap(), 1, &mut rng).unwrap();
        while !plan.is_complete() {
            ex.next_chunk(&mut plan, &mut r, 0).unwrap();
        }
        let off = r.profile.arm_offset(Arm::Right);
        for (i, (a, b)) in start.iter().zip(&r.q).enumerate() {
            if i == off + 1 {
                assert!((b - a + MOVE_STEP).abs() < 1e-9);
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn deterministic_plans() {
        let (s, r, ex) = setup(TaskKind::GroceryShopping);
        let cmd = parse_command("pick up twix").unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut rr = r.clone();
            let mut plan = ex.begin_skill(&s, &rr, &cmd, 1, &mut rng).unwrap();
            let mut chunks = vec![];
            while !plan.is_complete() {
                chunks.push(ex.next_chunk(&mut plan, &mut rr, 0).unwrap());
            }
            (plan, chunks)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn place_start_errors() {
        let (s, r, ex) = setup(TaskKind::TableBussing);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let place = parse_command("put bowl in box").unwrap();
        assert_eq!(ex.begin_skill(&s, &r, &place, 1, &mut rng), Err(StartError::GripperEmpty));
        let lid = parse_command("drop plastic lid into recycling bin").unwrap();
        assert!(matches!(ex.begin_skill(&s, &r, &lid, 1, &mut rng), Err(StartError::UnknownDestination(_))));
    }
}
