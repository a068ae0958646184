use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    name_matches, Agenda, GoalSpec, HighLevelDecision, Location, ObjectClass, ObjectId, Overrides, SceneState,
    Skill, UserEventKind,
};
use crate::lowlevel::{parse_command, resolve_object};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("no marks to score")]
    EmptyMarks,
    #[error("goal selects no objects")]
    EmptyGoal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub decision_id: u64,
    pub time: f64,
    pub skill_text: String,
    pub correct: bool,
}

/// (correct, total) over the marks.
pub fn accuracy_ratio(marks: &[Mark]) -> Result<(usize, usize), MetricError> {
    if marks.is_empty() {
        return Err(MetricError::EmptyMarks);
    }
    Ok((marks.iter().filter(|m| m.correct).count(), marks.len()))
}

pub fn instruction_accuracy(marks: &[Mark]) -> Result<f64, MetricError> {
    accuracy_ratio(marks).map(|(c, n)| c as f64 / n as f64)
}

/// (placed, targeted) objects for a goal in a final scene.
pub fn progress_ratio(scene: &SceneState, goal: &GoalSpec, ov: &Overrides<'_>) -> Result<(usize, usize), MetricError> {
    let (done, total) = goal.agenda(scene, ov).progress();
    if total == 0 {
        return if goal.halt { Ok((1, 1)) } else { Err(MetricError::EmptyGoal) };
    }
    Ok((done, total))
}

pub fn task_progress(scene: &SceneState, goal: &GoalSpec) -> Result<f64, MetricError> {
    task_progress_with(scene, goal, &Overrides::none())
}

pub fn task_progress_with(scene: &SceneState, goal: &GoalSpec, ov: &Overrides<'_>) -> Result<f64, MetricError> {
    progress_ratio(scene, goal, ov).map(|(d, t)| d as f64 / t as f64)
}

/// Excluded objects that are no longer where they started.
pub fn moved_excluded(scene: &SceneState, goal: &GoalSpec, ov: &Overrides<'_>) -> BTreeSet<ObjectId> {
    let agenda = goal.agenda(scene, ov);
    scene.objects.iter().filter(|o| agenda.excluded.contains(&o.id) && o.has_moved()).map(|o| o.id.clone()).collect()
}

/// What a decision would do in a scene.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Grounded {
    Pick(ObjectId),
    Place { object: ObjectId, dest: Location },
    Finish,
    Primitive,
    Invalid,
}

pub fn ground(scene: &SceneState, skill_text: &str) -> Grounded {
    let Ok(cmd) = parse_command(skill_text) else { return Grounded::Invalid };
    match cmd.skill {
        Skill::Pick { object } => match resolve_object(scene, &object) {
            Ok(o) => Grounded::Pick(o.id.clone()),
            Err(_) => Grounded::Invalid,
        },
        Skill::Place { object, destination } => {
            let Some(dest) = scene.fixtures.location(&destination) else { return Grounded::Invalid };
            let held: Vec<_> = scene.held().collect();
            let o = object
                .as_deref()
                .and_then(|p| held.iter().find(|o| name_matches(&o.display_name, p) || o.object_class.as_str() == p))
                .or(held.first());
            match o {
                Some(o) => Grounded::Place { object: o.id.clone(), dest },
                None => Grounded::Invalid,
            }
        }
        Skill::Home | Skill::Done => Grounded::Finish,
        _ => Grounded::Primitive,
    }
}

impl Grounded {
    pub fn target(&self) -> Option<&ObjectId> {
        match self {
            Grounded::Pick(id) | Grounded::Place { object: id, .. } => Some(id),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferentEffect {
    /// The object was misjudged; it returns to where it started.
    PutBack { class: ObjectClass },
    /// The object is off limits from now on.
    LeaveAlone,
}

/// What the first decision after a corrective interjection must do.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Repair {
    PutBack(ObjectId),
    Avoid(ObjectId),
    Halt,
}

impl Repair {
    pub fn name(&self) -> &'static str {
        match self {
            Repair::PutBack(_) => "put_back",
            Repair::Avoid(_) => "avoid",
            Repair::Halt => "halt",
        }
    }

    pub fn satisfied_by(&self, g: &Grounded, scene: &SceneState, agenda: &Agenda) -> bool {
        match self {
            Repair::PutBack(id) => {
                let Some(o) = scene.object(id) else { return false };
                if o.is_held() {
                    matches!(g, Grounded::Place { object, dest } if object == id && *dest == o.origin)
                } else if o.has_moved() {
                    *g == Grounded::Pick(id.clone())
                } else {
                    g.target() != Some(id)
                }
            }
            Repair::Avoid(id) => {
                let holding = scene.object(id).is_some_and(|o| o.is_held());
                if holding {
                    matches!(g, Grounded::Place { object, dest } if object == id && Some(dest) == scene.object(id).map(|o| &o.origin))
                } else {
                    g.target() != Some(id)
                }
            }
            Repair::Halt => match scene.held().next() {
                Some(o) => matches!(g, Grounded::Place { object, dest } if *object == o.id && Some(dest) == agenda.destination(&o.id)),
                None => *g == Grounded::Finish,
            },
        }
    }
}

/// Ground truth the judge reads besides the goal.
#[derive(Clone, Copy, Debug)]
pub struct JudgeContext<'a> {
    pub overrides: Overrides<'a>,
    pub repair: Option<&'a Repair>,
    pub arms: usize,
}

/// True iff the decision is an admissible next action under the goal.
pub fn auto_judge(decision: &HighLevelDecision, goal: &GoalSpec, scene: &SceneState, ctx: &JudgeContext<'_>) -> bool {
    let agenda = goal.agenda(scene, &ctx.overrides);
    let g = ground(scene, &decision.stripped().skill_text);
    if let Some(r) = ctx.repair {
        if !r.satisfied_by(&g, scene, &agenda) {
            return false;
        }
    }
    if g.target().is_some_and(|id| agenda.excluded.contains(id) && !scene.object(id).is_some_and(|o| o.is_held())) {
        return false;
    }
    match &g {
        Grounded::Pick(id) => {
            let free_arm = scene.held().count() < ctx.arms;
            free_arm && (agenda.pickable().contains(id) || agenda.repairs.contains(id))
        }
        Grounded::Place { object, dest } => agenda.destination(object) == Some(dest),
        Grounded::Finish => agenda.is_complete(),
        Grounded::Primitive | Grounded::Invalid => false,
    }
}

/// One entry of a script's ground-truth timeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub goal: GoalSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<ReferentEffect>,
}

impl TruthEntry {
    pub fn goal(goal: GoalSpec) -> Self {
        TruthEntry { goal, effect: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Saved {
    goal: GoalSpec,
    excluded_ids: BTreeSet<ObjectId>,
}

/// Replays a script's ground truth alongside a session.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthTracker {
    timeline: Vec<TruthEntry>,
    next: usize,
    pub goal: GoalSpec,
    pub reclassified: BTreeMap<ObjectId, ObjectClass>,
    pub excluded_ids: BTreeSet<ObjectId>,
    pub put_back: BTreeSet<ObjectId>,
    pub last_target: Option<ObjectId>,
    pub repair: Option<Repair>,
    pub arms: usize,
    saved: Vec<Saved>,
}

impl TruthTracker {
    pub fn new(timeline: Vec<TruthEntry>, initial: GoalSpec, arms: usize) -> Self {
        TruthTracker {
            timeline,
            next: 0,
            goal: initial,
            reclassified: BTreeMap::new(),
            excluded_ids: BTreeSet::new(),
            put_back: BTreeSet::new(),
            last_target: None,
            repair: None,
            arms,
            saved: Vec::new(),
        }
    }

    pub fn overrides(&self) -> Overrides<'_> {
        Overrides { reclassified: &self.reclassified, excluded_ids: &self.excluded_ids, put_back: &self.put_back }
    }

    pub fn agenda(&self, scene: &SceneState) -> Agenda {
        self.goal.agenda(scene, &self.overrides())
    }

    pub fn judge_context(&self) -> JudgeContext<'_> {
        JudgeContext { overrides: self.overrides(), repair: self.repair.as_ref(), arms: self.arms }
    }

    pub fn note_target(&mut self, id: Option<ObjectId>) {
        self.last_target = id;
    }

    /// Advances to the next timeline entry. `scene` is the scene when the
    /// event arrived.
    pub fn apply(&mut self, event: &UserEventKind, scene: &SceneState) {
        let Some(entry) = self.timeline.get(self.next).cloned() else { return };
        self.next += 1;
        let referent = scene.held().next().map(|o| o.id.clone()).or_else(|| self.last_target.clone());
        match event {
            UserEventKind::Prompt { .. } => {
                self.saved.clear();
                self.goal = entry.goal;
                self.repair = None;
            }
            UserEventKind::Interjection { .. } => {
                let before = Saved { goal: self.goal.clone(), excluded_ids: self.excluded_ids.clone() };
                self.saved.push(before);
                let halting = entry.goal.halt && !self.goal.halt;
                self.goal = entry.goal;
                self.repair = None;
                match (entry.effect, referent) {
                    (Some(ReferentEffect::PutBack { class }), Some(id)) => {
                        self.reclassified.insert(id.clone(), class);
                        self.put_back.insert(id.clone());
                        self.repair = Some(Repair::PutBack(id));
                    }
                    (Some(ReferentEffect::LeaveAlone), Some(id)) => {
                        self.excluded_ids.insert(id.clone());
                        self.repair = Some(Repair::Avoid(id));
                    }
                    _ if halting => self.repair = Some(Repair::Halt),
                    _ => {}
                }
            }
            UserEventKind::Resume => {
                if let Some(s) = self.saved.pop() {
                    self.excluded_ids = s.excluded_ids;
                }
                self.goal = entry.goal;
                self.repair = None;
            }
        }
    }

    /// Goal in force before the most recent unresolved interjection.
    pub fn saved_goal(&self) -> Option<&GoalSpec> {
        self.saved.last().map(|s| &s.goal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Arm, Predicate, TaskKind};
    use crate::simenv::{load_task, TaskCatalog};

    fn only_trash() -> GoalSpec {
        let mut g = TaskCatalog::bundled(TaskKind::TableBussing).default_goal();
        g.include_predicate = Predicate::Class(ObjectClass::Trash);
        g.exclude_predicate = Predicate::Class(ObjectClass::Trash).negate();
        g
    }

    fn none() -> JudgeContext<'static> {
        JudgeContext { overrides: Overrides::none(), repair: None, arms: 1 }
    }

    #[test]
    fn plastic_cup_is_a_dish() {
        let (scene, _, _) = load_task(TaskKind::TableBussing, 0);
        let d = HighLevelDecision::command("pick up the plastic cup");
        assert!(!auto_judge(&d, &only_trash(), &scene, &none()));
        let d = HighLevelDecision::command("pick up the paper cup");
        assert!(auto_judge(&d, &only_trash(), &scene, &none()));
    }

    #[test]
    fn bowl_goes_back_down() {
        let (mut scene, _, _) = load_task(TaskKind::TableBussing, 0);
        let cup = scene.objects.iter().find(|o| o.display_name == "paper cup").unwrap().id.clone();
        scene.object_mut(&cup).unwrap().location = Location::Gripper(Arm::Single);
        let mut t = TruthTracker::new(
            vec![
                TruthEntry::goal(only_trash()),
                TruthEntry { goal: only_trash(), effect: Some(ReferentEffect::PutBack { class: ObjectClass::Dish }) },
            ],
            GoalSpec::default(),
            1,
        );
        t.apply(&UserEventKind::Prompt { text: "clean up only the trash".into() }, &scene);
        t.apply(&UserEventKind::Interjection { text: "that's not trash".into() }, &scene);
        let bin = HighLevelDecision::command("place cup to box");
        let back = HighLevelDecision::command("put cup back on table");
        let trash = HighLevelDecision::command("throw cup away");
        assert!(!auto_judge(&bin, &t.goal, &scene, &t.judge_context()));
        assert!(!auto_judge(&trash, &t.goal, &scene, &t.judge_context()));
        assert!(auto_judge(&back, &t.goal, &scene, &t.judge_context()));
    }

    #[test]
    fn done_only_when_nothing_pending() {
        let (mut scene, _, _) = load_task(TaskKind::TableBussing, 1);
        let g = only_trash();
        let home = HighLevelDecision::command("go back to home position");
        assert!(!auto_judge(&home, &g, &scene, &none()));
        for o in scene.objects.iter_mut().filter(|o| o.object_class == ObjectClass::Trash) {
            o.location = Location::Container("trash_bin".into());
        }
        assert!(auto_judge(&home, &g, &scene, &none()));
    }

    #[test]
    fn out_of_grammar_is_wrong() {
        let (scene, _, _) = load_task(TaskKind::TableBussing, 1);
        let d = HighLevelDecision::command("clean up only the trash");
        assert!(!auto_judge(&d, &only_trash(), &scene, &none()));
    }

    #[test]
    fn accuracy_ratios() {
        let m = |c| Mark { decision_id: 0, time: 0.0, skill_text: String::new(), correct: c };
        assert_eq!(instruction_accuracy(&[m(true), m(true), m(true), m(true), m(false)]).unwrap(), 0.8);
        assert_eq!(instruction_accuracy(&[m(true)]).unwrap(), 1.0);
        assert_eq!(instruction_accuracy(&[m(false), m(false)]).unwrap(), 0.0);
        assert_eq!(instruction_accuracy(&[]), Err(MetricError::EmptyMarks));
    }

    #[test]
    fn three_of_four_trash() {
        let (mut scene, _, _) = load_task(TaskKind::TableBussing, 0);
        scene.objects.retain(|o| o.object_class != ObjectClass::Trash);
        let proto = load_task(TaskKind::TableBussing, 0).0.objects.into_iter().find(|o| o.display_name == "paper cup").unwrap();
        for i in 0..4 {
            let mut o = proto.clone();
            o.id = ObjectId::new(format!("x{i}"));
            if i < 3 {
                o.location = Location::Container("trash_bin".into());
            }
            scene.objects.push(o);
        }
        assert_eq!(task_progress(&scene, &only_trash()).unwrap(), 0.75);
    }

    #[test]
    fn empty_goal() {
        let (scene, _, _) = load_task(TaskKind::TableBussing, 0);
        let mut g = only_trash();
        g.include_predicate = Predicate::Nothing;
        assert_eq!(task_progress(&scene, &g), Err(MetricError::EmptyGoal));
        g.halt = true;
        assert_eq!(task_progress(&scene, &g), Ok(1.0));
    }

    #[test]
    fn forbidden_pickle_counts_as_violation() {
        let cat = TaskCatalog::bundled(TaskKind::SandwichMaking);
        let (mut scene, _, _) = load_task(TaskKind::SandwichMaking, 0);
        let mut g = cat.default_goal();
        g.exclude_predicate = Predicate::Name("pickles".into());
        let order = ["bread", "pickles", "lettuce"];
        for name in order {
            let idx = scene.objects.iter().position(|o| o.display_name == name && !o.has_moved()).unwrap();
            let mut o = scene.objects.remove(idx);
            o.location = Location::Container("sandwich_stack".into());
            scene.objects.push(o);
        }
        let ov = Overrides::none();
        let moved = moved_excluded(&scene, &g, &ov);
        assert_eq!(moved.len(), 1);
        // placed: bottom bread and lettuce; targets: bread, five allowed fillings, bread
        let (done, total) = progress_ratio(&scene, &g, &ov).unwrap();
        assert_eq!((done, total), (2, 7));
    }
}
