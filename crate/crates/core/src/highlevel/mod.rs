//! High-level policy: turns prompts, interjections and scene views into
//! one atomic command at a time, plus an optional spoken reply.

mod prompt;
mod remote;

pub use prompt::{diet, mentions, parse_goal, read_prompt, Mention, Reading, Strictness, Term};
pub use remote::{RemoteConfig, RemotePolicy, RemoteReply, RemoteRequest};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{
    Arm, GoalSpec, HighLevelDecision, ItemRequest, Location, ObjectClass, ObjectId, Overrides, RobotState,
    SceneObject, SceneState, Skill, SkillCommand, TaskKind, UserEvent, UserEventKind,
};
use crate::lowlevel::{normalize, Grammar};
use crate::simenv::TaskCatalog;

pub const ALL_DONE: &str = "All done!";
pub const HOME_TEXT: &str = "go back to home position";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    HierarchicalReference,
    FlatPassthrough,
    OracleScripted,
    RemoteBackend,
    ReferenceNoConstraints,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::HierarchicalReference,
        PolicyKind::FlatPassthrough,
        PolicyKind::OracleScripted,
        PolicyKind::RemoteBackend,
        PolicyKind::ReferenceNoConstraints,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::HierarchicalReference => "hierarchical_reference",
            PolicyKind::FlatPassthrough => "flat_passthrough",
            PolicyKind::OracleScripted => "oracle_scripted",
            PolicyKind::RemoteBackend => "remote_backend",
            PolicyKind::ReferenceNoConstraints => "reference_no_constraints",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| format!("unknown policy '{s}'"))
    }
}

/// Dialogue state saved before an interjection so Resume can restore it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub goal: GoalSpec,
    pub active_prompt: String,
    pub excluded_ids: BTreeSet<ObjectId>,
    pub added_requests: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterjectionEntry {
    pub text: String,
    pub time: f64,
    pub handled: bool,
    pub snapshot: Snapshot,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DialogueContext {
    pub active_prompt: String,
    pub interjection_stack: Vec<InterjectionEntry>,
    /// Commands whose skills have finished, oldest first.
    pub prior_skills: Vec<String>,
    pub held_objects: BTreeMap<Arm, Option<ObjectId>>,
    pub reclassified: BTreeMap<ObjectId, ObjectClass>,
    pub excluded_ids: BTreeSet<ObjectId>,
    pub added_requests: Vec<String>,
    /// Objects that must go back where they started.
    pub put_back: BTreeSet<ObjectId>,
    pub last_target: Option<ObjectId>,
    /// Reply waiting to be attached to the next decision.
    pub pending_utterance: Option<String>,
}

impl DialogueContext {
    pub fn overrides(&self) -> Overrides<'_> {
        Overrides { reclassified: &self.reclassified, excluded_ids: &self.excluded_ids, put_back: &self.put_back }
    }

    pub fn observe(&mut self, scene: &SceneState) {
        self.held_objects = scene
            .objects
            .iter()
            .filter_map(|o| match o.location {
                Location::Gripper(a) => Some((a, Some(o.id.clone()))),
                _ => None,
            })
            .collect();
    }

    /// The object an interjection like "that" refers to.
    pub fn referent<'a>(&self, scene: &'a SceneState) -> Option<&'a SceneObject> {
        scene.held().next().or_else(|| self.last_target.as_ref().and_then(|id| scene.object(id)))
    }

    fn snapshot(&self, goal: &GoalSpec) -> Snapshot {
        Snapshot {
            goal: goal.clone(),
            active_prompt: self.active_prompt.clone(),
            excluded_ids: self.excluded_ids.clone(),
            added_requests: self.added_requests.clone(),
        }
    }
}

/// Last word of a display name, used when addressing an object in hand.
pub fn head_noun(name: &str) -> String {
    let n = normalize(name);
    n.rsplit(' ').next().unwrap_or(&n).to_string()
}

fn place_text(o: &SceneObject, dest: &Location) -> String {
    let g = Grammar::bundled();
    match dest {
        Location::Surface(s) => format!("put {} back on {}", head_noun(&o.display_name), g.destination_phrase(s)),
        Location::Container(c) => format!("place {} to {}", head_noun(&o.display_name), g.destination_phrase(c)),
        Location::Gripper(_) => HOME_TEXT.to_string(),
    }
}

pub fn pick_text(o: &SceneObject) -> String {
    format!("pick up the {}", normalize(&o.display_name))
}

/// Reference decision rule over the agenda of (goal, dialogue overrides).
pub fn decide(scene: &SceneState, ctx: &DialogueContext, goal: &GoalSpec) -> HighLevelDecision {
    let agenda = goal.agenda(scene, &ctx.overrides());
    let utter = ctx.pending_utterance.clone();
    if let Some(o) = scene.held().next() {
        let dest = agenda.destination(&o.id).unwrap_or(&o.origin);
        return HighLevelDecision::command(place_text(o, dest)).with_utterance(utter);
    }
    if let Some(id) = agenda.repairs.iter().min() {
        let o = scene.object(id).expect("repair in scene");
        return HighLevelDecision::command(pick_text(o)).with_utterance(utter);
    }
    if let Some(id) = agenda.next_pick() {
        let o = scene.object(&id).expect("agenda id in scene");
        return HighLevelDecision::command(pick_text(o)).with_utterance(utter);
    }
    HighLevelDecision::command(HOME_TEXT).with_utterance(utter.or_else(|| Some(ALL_DONE.to_string())))
}

fn contains_any(text: &str, phrases: &[&str]) -> bool {
    let t = format!(" {} ", normalize(text));
    phrases.iter().any(|p| t.contains(&format!(" {p} ")))
}

/// Corrective interjections the reference reasoner recognizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterjectionKind {
    NotTrash,
    LeaveAlone,
    LeaveRest,
    NoMore,
    AlsoWant,
    Constraint,
    Unknown,
}

pub fn classify_interjection(text: &str) -> InterjectionKind {
    if contains_any(text, &["not trash", "isnt trash", "not garbage", "not rubbish"]) {
        InterjectionKind::NotTrash
    } else if contains_any(text, &["leave it alone", "leave that alone", "leave this alone", "dont touch that", "dont touch it", "not that one"]) {
        InterjectionKind::LeaveAlone
    } else if contains_any(text, &["leave the rest", "thats enough", "stop here", "stop after this"]) {
        InterjectionKind::LeaveRest
    } else if contains_any(text, &["thats all", "no more", "thats it", "nothing else"]) {
        InterjectionKind::NoMore
    } else if contains_any(text, &["also", "add", "as well", "too"]) {
        InterjectionKind::AlsoWant
    } else {
        InterjectionKind::Constraint
    }
}

/// Applies an interjection's effect to the dialogue and goal. Returns the
/// decision it calls for right away.
pub fn handle_interjection(
    text: &str,
    time: f64,
    scene: &SceneState,
    ctx: &mut DialogueContext,
    goal: &mut GoalSpec,
    catalog: &TaskCatalog,
    strict: Strictness,
) -> HighLevelDecision {
    ctx.observe(scene);
    let snapshot = ctx.snapshot(goal);
    let kind = classify_interjection(text);
    let full = strict == Strictness::Full;
    let mut understood = true;
    match kind {
        InterjectionKind::NotTrash if full => match ctx.referent(scene).map(|o| o.id.clone()) {
            Some(id) => {
                ctx.reclassified.insert(id.clone(), ObjectClass::Dish);
                ctx.put_back.insert(id);
                ctx.pending_utterance = Some("Sorry, I'll put it back.".into());
            }
            None => understood = false,
        },
        InterjectionKind::LeaveAlone if full => match ctx.referent(scene).map(|o| o.id.clone()) {
            Some(id) => {
                ctx.excluded_ids.insert(id);
                ctx.pending_utterance = Some("Okay, I'll leave it.".into());
            }
            None => understood = false,
        },
        InterjectionKind::LeaveRest if full => {
            goal.halt = true;
            ctx.pending_utterance = Some("Okay, I'll stop after this.".into());
        }
        InterjectionKind::NoMore if full => {
            goal.closed = true;
            ctx.pending_utterance = Some("Okay, that's everything then.".into());
        }
        InterjectionKind::NotTrash | InterjectionKind::LeaveAlone | InterjectionKind::LeaveRest | InterjectionKind::NoMore => {}
        InterjectionKind::AlsoWant | InterjectionKind::Constraint | InterjectionKind::Unknown => {
            let ms = mentions(text, catalog);
            let d = diet(text);
            let mut added = Vec::new();
            let mut changed = false;
            for m in &ms {
                match (&m.term, m.negated) {
                    (Term::Name(_) | Term::Attr(_), false) if catalog.task != TaskKind::TableBussing => {
                        if let Term::Name(n) = &m.term {
                            added.push(n.clone());
                            ctx.added_requests.push(n.clone());
                        }
                        let req = ItemRequest::count(m.term.predicate(), m.count.unwrap_or(1));
                        if catalog.task == TaskKind::SandwichMaking {
                            add_filling(goal, m.term.predicate());
                        } else {
                            goal.required_items.push(req);
                        }
                        goal.closed = false;
                        changed = true;
                    }
                    (_, true) if full => {
                        goal.exclude_predicate = goal.exclude_predicate.clone().or(m.term.predicate());
                        changed = true;
                    }
                    _ => {}
                }
            }
            if full && !d.is_empty() {
                goal.forbidden_attributes.extend(d.iter().copied());
                changed = true;
            }
            if changed {
                ctx.pending_utterance = Some(match added.first() {
                    Some(n) => format!("Sure, I'll get the {n} too."),
                    None => "Sure.".into(),
                });
            } else {
                understood = false;
            }
        }
    }
    if !understood && full {
        ctx.pending_utterance = Some("Sorry, could you say that again?".into());
    }
    ctx.interjection_stack.push(InterjectionEntry { text: text.to_string(), time, handled: true, snapshot });
    decide(scene, ctx, goal)
}

fn add_filling(goal: &mut GoalSpec, pred: crate::domain::Predicate) {
    use crate::domain::Predicate;
    if let Some(req) = goal.required_items.iter_mut().find(|r| r.stage == 1) {
        if let Predicate::AllOf(parts) = &mut req.selector {
            if let Some(last) = parts.last_mut() {
                *last = match std::mem::take(last) {
                    Predicate::Any => pred,
                    other => other.or(pred),
                };
            }
        }
    }
}

/// Pops the latest interjection and restores what it changed. Object
/// reclassifications stay.
pub fn handle_resume(ctx: &mut DialogueContext, goal: &mut GoalSpec) -> bool {
    match ctx.interjection_stack.pop() {
        Some(entry) => {
            *goal = entry.snapshot.goal;
            ctx.active_prompt = entry.snapshot.active_prompt;
            ctx.excluded_ids = entry.snapshot.excluded_ids;
            ctx.added_requests = entry.snapshot.added_requests;
            ctx.pending_utterance = Some("Okay, back to what I was doing.".into());
            true
        }
        None => false,
    }
}

/// What the policy sees at an invocation.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub scene: &'a SceneState,
    pub robot: &'a RobotState,
    pub prior_skills: &'a [String],
    pub time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutput {
    pub decision: HighLevelDecision,
    /// The backend failed; the previous command stays in force.
    #[serde(default)]
    pub retain_previous: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<HighLevelDecision> for PolicyOutput {
    fn from(decision: HighLevelDecision) -> Self {
        PolicyOutput { decision, retain_previous: false, error: None }
    }
}

/// A high-level policy driven by the orchestrator.
pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    /// Whether interjections and resume signals trigger an invocation.
    fn reactive(&self) -> bool {
        true
    }

    /// Whether decoding time is charged before a decision takes effect.
    fn charges_latency(&self) -> bool {
        true
    }

    fn on_user_event(&mut self, event: &UserEvent, obs: &Observation<'_>);

    fn decide(&mut self, obs: &Observation<'_>) -> PolicyOutput;

    /// A decision's utterance went out; drop it from pending state.
    fn utterance_issued(&mut self) {}

    /// A command started executing against `target`.
    fn dispatched(&mut self, _command: &SkillCommand, _target: Option<&ObjectId>) {}

    /// Current dialogue state, for policies that keep one.
    fn dialogue(&self) -> Option<(&DialogueContext, &GoalSpec)> {
        None
    }
}

/// Rule-based reasoner over parsed goals and explicit dialogue memory.
pub struct ReferencePolicy {
    pub catalog: TaskCatalog,
    pub ctx: DialogueContext,
    pub goal: GoalSpec,
    pub strict: Strictness,
}

impl ReferencePolicy {
    pub fn new(catalog: TaskCatalog, strict: Strictness) -> Self {
        let goal = catalog.default_goal();
        ReferencePolicy { catalog, ctx: DialogueContext::default(), goal, strict }
    }
}

impl Policy for ReferencePolicy {
    fn kind(&self) -> PolicyKind {
        match self.strict {
            Strictness::Full => PolicyKind::HierarchicalReference,
            Strictness::IgnoreConstraints => PolicyKind::ReferenceNoConstraints,
        }
    }

    fn on_user_event(&mut self, event: &UserEvent, obs: &Observation<'_>) {
        match &event.kind {
            UserEventKind::Prompt { text } => {
                let (goal, reading) = read_prompt(text, &self.catalog, self.strict);
                self.goal = goal;
                self.ctx.active_prompt = text.clone();
                self.ctx.interjection_stack.clear();
                self.ctx.pending_utterance = reading.utterance;
            }
            UserEventKind::Interjection { text } => {
                handle_interjection(text, event.time, obs.scene, &mut self.ctx, &mut self.goal, &self.catalog, self.strict);
            }
            UserEventKind::Resume => {
                handle_resume(&mut self.ctx, &mut self.goal);
            }
        }
    }

    fn decide(&mut self, obs: &Observation<'_>) -> PolicyOutput {
        self.ctx.observe(obs.scene);
        self.ctx.prior_skills = obs.prior_skills.to_vec();
        decide(obs.scene, &self.ctx, &self.goal).into()
    }

    fn utterance_issued(&mut self) {
        self.ctx.pending_utterance = None;
    }

    fn dispatched(&mut self, command: &SkillCommand, target: Option<&ObjectId>) {
        if matches!(command.skill, Skill::Pick { .. }) {
            self.ctx.last_target = target.cloned();
        }
    }

    fn dialogue(&self) -> Option<(&DialogueContext, &GoalSpec)> {
        Some((&self.ctx, &self.goal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Attribute, Predicate};
    use crate::lowlevel::parse_command;
    use crate::simenv::load_task;

    fn bussing(seed: u64) -> (SceneState, TaskCatalog) {
        (load_task(TaskKind::TableBussing, seed).0, TaskCatalog::bundled(TaskKind::TableBussing))
    }

    fn hold(scene: &mut SceneState, name: &str) -> ObjectId {
        let o = scene.objects.iter_mut().find(|o| o.display_name == name).unwrap();
        o.location = Location::Gripper(Arm::Single);
        o.id.clone()
    }

    #[test]
    fn first_trash_item_in_id_order() {
        for seed in 0..20 {
            let (scene, cat) = bussing(seed);
            let goal = parse_goal("clean up only the trash", &cat);
            let d = decide(&scene, &DialogueContext::default(), &goal);
            // oracle: walk ids in order, first trash wins
            let mut objs: Vec<&SceneObject> = scene.objects.iter().collect();
            objs.sort_by(|a, b| a.id.cmp(&b.id));
            let first = objs.iter().find(|o| o.object_class == ObjectClass::Trash).unwrap();
            assert_eq!(d.skill_text, format!("pick up the {}", first.display_name));
        }
    }

    #[test]
    fn holding_white_bowl() {
        let (mut scene, cat) = bussing(0);
        if !scene.objects.iter().any(|o| o.display_name == "white bowl") {
            let mut b = scene.objects[0].clone();
            b.id = ObjectId::new("t99");
            b.display_name = "white bowl".into();
            b.object_class = ObjectClass::Dish;
            scene.objects.push(b);
        }
        hold(&mut scene, "white bowl");
        let d = decide(&scene, &DialogueContext::default(), &cat.default_goal());
        assert_eq!(d.skill_text, "place bowl to box");
        assert!(parse_command(&d.skill_text).is_ok());
    }

    #[test]
    fn nothing_pending() {
        let (mut scene, cat) = bussing(0);
        scene.objects.clear();
        let d = decide(&scene, &DialogueContext::default(), &cat.default_goal());
        assert_eq!(d.skill_text, HOME_TEXT);
        assert_eq!(d.utterance.as_deref(), Some(ALL_DONE));
    }

    #[test]
    fn not_trash_puts_back() {
        let (mut scene, cat) = bussing(3);
        let mut goal = parse_goal("clean up only the trash", &cat);
        let id = hold(&mut scene, "paper cup");
        let mut ctx = DialogueContext::default();
        let d = handle_interjection("that's not trash", 2.0, &scene, &mut ctx, &mut goal, &cat, Strictness::Full);
        assert_eq!(d.skill_text, "put cup back on table");
        assert!(ctx.put_back.contains(&id));
        assert_eq!(ctx.reclassified[&id], ObjectClass::Dish);
    }

    #[test]
    fn leave_it_alone_moves_on() {
        let (scene, cat) = bussing(5);
        let mut goal = cat.default_goal();
        let mut ctx = DialogueContext::default();
        let first = decide(&scene, &ctx, &goal);
        let target = resolve(&scene, &first.skill_text);
        ctx.last_target = Some(target.clone());
        let d = handle_interjection("leave it alone", 1.0, &scene, &mut ctx, &mut goal, &cat, Strictness::Full);
        assert_ne!(resolve(&scene, &d.skill_text), target);
        let before = goal.agenda(&scene, &ctx.overrides()).pending_ids();
        assert!(!before.contains(&target));
        assert!(handle_resume(&mut ctx, &mut goal));
        assert!(goal.agenda(&scene, &ctx.overrides()).pending_ids().contains(&target));
    }

    fn resolve(scene: &SceneState, text: &str) -> ObjectId {
        match parse_command(text).unwrap().skill {
            Skill::Pick { object } => crate::lowlevel::resolve_object(scene, &object).unwrap().id.clone(),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn leave_the_rest_halts() {
        let (mut scene, cat) = bussing(2);
        let mut goal = cat.default_goal();
        let mut ctx = DialogueContext::default();
        let ids: Vec<ObjectId> = scene.by_id().iter().map(|o| o.id.clone()).collect();
        for id in &ids[..2] {
            let o = scene.object_mut(id).unwrap();
            o.location = goal.destination_for(o.object_class).unwrap();
        }
        let d = handle_interjection("leave the rest", 5.0, &scene, &mut ctx, &mut goal, &cat, Strictness::Full);
        assert_eq!(d.skill_text, HOME_TEXT);
        let _ = &mut scene;
    }

    #[test]
    fn also_want_kitkat() {
        let cat = TaskCatalog::bundled(TaskKind::GroceryShopping);
        let (scene, _, _) = load_task(TaskKind::GroceryShopping, 1);
        let mut goal = parse_goal("get me a Twix", &cat);
        let mut ctx = DialogueContext::default();
        handle_interjection("I also want some Kitkat", 3.0, &scene, &mut ctx, &mut goal, &cat, Strictness::Full);
        assert_eq!(goal.required_items.len(), 2);
        assert_eq!(goal.required_items[1].selector, Predicate::Name("kitkat".into()));
        assert_eq!(ctx.added_requests, vec!["kitkat".to_string()]);
    }

    #[test]
    fn lactose_mid_task() {
        let cat = TaskCatalog::bundled(TaskKind::SandwichMaking);
        let (scene, _, _) = load_task(TaskKind::SandwichMaking, 1);
        let mut goal = parse_goal("make me a sandwich", &cat);
        let mut ctx = DialogueContext::default();
        handle_interjection("oh wait, I'm lactose intolerant", 3.0, &scene, &mut ctx, &mut goal, &cat, Strictness::Full);
        assert!(goal.forbidden_attributes.contains(&Attribute::Dairy));
    }

    #[test]
    fn unmatched_interjection_asks() {
        let (scene, cat) = bussing(1);
        let mut goal = cat.default_goal();
        let before = goal.clone();
        let mut ctx = DialogueContext::default();
        handle_interjection("what a nice day", 1.0, &scene, &mut ctx, &mut goal, &cat, Strictness::Full);
        assert_eq!(goal, before);
        assert!(ctx.pending_utterance.is_some());
    }

    #[test]
    fn decide_is_deterministic() {
        let (scene, cat) = bussing(9);
        let goal = parse_goal("bus all the yellowish things", &cat);
        let ctx = DialogueContext::default();
        assert_eq!(decide(&scene, &ctx, &goal), decide(&scene, &ctx, &goal));
    }
}
