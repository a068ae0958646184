//! Scripted user trials with ground truth written out by hand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::judge::{ReferentEffect, TruthEntry};
use crate::domain::{Attribute, GoalSpec, ItemRequest, ObjectClass, Predicate, TaskKind, UserEventKind};
use crate::simenv::{sandwich_order, TaskCatalog};

pub const TRIALS_PER_SUITE: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trigger {
    AtTime { time: f64 },
    /// The next started command whose text contains the pattern.
    OnCommandMatching { pattern: String },
    /// The n-th completed skill of the trial, counting from 1.
    OnSkillDone { n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub trigger: Trigger,
    pub event: UserEventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserScript {
    pub name: String,
    pub task: TaskKind,
    pub steps: Vec<ScriptStep>,
    /// Goal after each step, aligned with `steps`.
    pub ground_truth: Vec<TruthEntry>,
}

impl UserScript {
    pub fn check(&self) -> Result<(), String> {
        if self.steps.len() != self.ground_truth.len() {
            return Err(format!("{}: {} steps but {} truth entries", self.name, self.steps.len(), self.ground_truth.len()));
        }
        if !matches!(self.steps.first().map(|s| &s.event), Some(UserEventKind::Prompt { .. })) {
            return Err(format!("{}: script must open with a prompt", self.name));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub seed: u64,
    pub script: UserScript,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub task: TaskKind,
    /// Prompts carry exclusions or diets.
    pub constrained: bool,
    pub trials: Vec<Trial>,
}

impl Suite {
    pub fn load(path: &Path) -> Result<Suite, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let suite: Suite = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        for t in &suite.trials {
            t.script.check()?;
        }
        Ok(suite)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes") + "\n"
    }
}

fn prompt(text: &str) -> ScriptStep {
    ScriptStep { trigger: Trigger::AtTime { time: 0.0 }, event: UserEventKind::Prompt { text: text.into() } }
}

fn say(trigger: Trigger, text: &str) -> ScriptStep {
    ScriptStep { trigger, event: UserEventKind::Interjection { text: text.into() } }
}

fn resume(trigger: Trigger) -> ScriptStep {
    ScriptStep { trigger, event: UserEventKind::Resume }
}

fn done(n: usize) -> Trigger {
    Trigger::OnSkillDone { n }
}

fn matching(p: &str) -> Trigger {
    Trigger::OnCommandMatching { pattern: p.into() }
}

fn base(task: TaskKind) -> GoalSpec {
    GoalSpec { destination_map: TaskCatalog::bundled(task).destination_map.clone(), ..GoalSpec::default() }
}

fn bussing_only(p: Predicate) -> GoalSpec {
    GoalSpec { include_predicate: p.clone(), exclude_predicate: p.negate(), ..base(TaskKind::TableBussing) }
}

fn bussing_all() -> GoalSpec {
    let all = Predicate::AnyOf(vec![
        Predicate::Class(ObjectClass::Trash),
        Predicate::Class(ObjectClass::Dish),
        Predicate::Class(ObjectClass::Utensil),
    ]);
    GoalSpec { include_predicate: all, ..base(TaskKind::TableBussing) }
}

fn trash() -> Predicate {
    Predicate::Class(ObjectClass::Trash)
}

fn sandwich(forbidden: &[Attribute], exclude: Option<&str>) -> GoalSpec {
    GoalSpec {
        required_items: sandwich_order(Predicate::Any),
        forbidden_attributes: forbidden.iter().copied().collect(),
        exclude_predicate: exclude.map_or(Predicate::Nothing, |n| Predicate::Name(n.into())),
        ..base(TaskKind::SandwichMaking)
    }
}

fn order(items: Vec<ItemRequest>) -> GoalSpec {
    GoalSpec { required_items: items, ..base(TaskKind::GroceryShopping) }
}

fn script(name: String, task: TaskKind, steps: Vec<(ScriptStep, TruthEntry)>) -> UserScript {
    let (steps, ground_truth) = steps.into_iter().unzip();
    UserScript { name, task, steps, ground_truth }
}

fn suite(name: &str, task: TaskKind, constrained: bool, variants: Vec<UserScript>) -> Suite {
    let trials = (0..TRIALS_PER_SUITE)
        .map(|i| Trial { seed: i as u64, script: variants[i % variants.len()].clone() })
        .collect();
    Suite { name: name.into(), task, constrained, trials }
}

/// (a) Bussing with a scoping or exclusion clause in the prompt.
pub fn constrained_bussing() -> Suite {
    let t = TaskKind::TableBussing;
    let dishes = Predicate::AnyOf(vec![Predicate::Class(ObjectClass::Dish), Predicate::Class(ObjectClass::Utensil)]);
    let yellow = Predicate::Color("yellowish".into());
    let variants: Vec<(&str, GoalSpec)> = vec![
        ("clean up only the trash", bussing_only(trash())),
        ("clean up only the dishes", bussing_only(dishes)),
        ("bus all the yellowish things", bussing_only(yellow.clone())),
        ("clean up only the trash, but not dishes", bussing_only(trash())),
        ("throw away the trash but leave the dishes", bussing_only(trash())),
    ];
    let scripts = variants
        .into_iter()
        .enumerate()
        .map(|(i, (p, g))| script(format!("constrained_bussing_{i}"), t, vec![(prompt(p), TruthEntry::goal(g))]))
        .collect();
    suite("constrained_bussing", t, true, scripts)
}

/// (b) Bussing with a corrective interjection, then a resume.
pub fn interjection_bussing() -> Suite {
    let t = TaskKind::TableBussing;
    let not_trash = script(
        "interjection_not_trash".into(),
        t,
        vec![
            (prompt("clean up only the trash"), TruthEntry::goal(bussing_only(trash()))),
            (
                say(done(1), "that's not trash"),
                TruthEntry { goal: bussing_only(trash()), effect: Some(ReferentEffect::PutBack { class: ObjectClass::Dish }) },
            ),
            (resume(done(2)), TruthEntry::goal(bussing_only(trash()))),
        ],
    );
    let leave_alone = script(
        "interjection_leave_alone".into(),
        t,
        vec![
            (prompt("clean up the table"), TruthEntry::goal(bussing_all())),
            (say(matching("pick up"), "leave it alone"), TruthEntry { goal: bussing_all(), effect: Some(ReferentEffect::LeaveAlone) }),
            (resume(done(2)), TruthEntry::goal(bussing_all())),
        ],
    );
    let halted = GoalSpec { halt: true, ..bussing_all() };
    let leave_rest = script(
        "interjection_leave_rest".into(),
        t,
        vec![
            (prompt("clean up the table"), TruthEntry::goal(bussing_all())),
            (say(done(2), "leave the rest"), TruthEntry::goal(halted)),
            (resume(matching("home")), TruthEntry::goal(bussing_all())),
        ],
    );
    suite("interjection_bussing", t, false, vec![not_trash, leave_alone, leave_rest])
}

/// (c) Sandwiches under diets, exclusions and an early stop.
pub fn constrained_sandwich() -> Suite {
    let t = TaskKind::SandwichMaking;
    let one = |name: &str, p: &str, g: GoalSpec| script(name.into(), t, vec![(prompt(p), TruthEntry::goal(g))]);
    let vegan = sandwich(&[Attribute::Meat, Attribute::Dairy], None);
    let vegan_closed = GoalSpec { closed: true, ..vegan.clone() };
    let scripts = vec![
        one("sandwich_lactose", "Can you make a sandwich for me? I'm lactose intolerant", sandwich(&[Attribute::Dairy], None)),
        one("sandwich_vegetarian", "make me a vegetarian sandwich", sandwich(&[Attribute::Meat], None)),
        one(
            "sandwich_vegetarian_no_pickles",
            "can you make me a vegetarian sandwich? I'm allergic to pickles",
            sandwich(&[Attribute::Meat], Some("pickles")),
        ),
        one("sandwich_no_cheese", "make me a sandwich without cheese", sandwich(&[], Some("cheese"))),
        script(
            "sandwich_vegan_thats_all".into(),
            t,
            vec![
                (prompt("make me a vegan sandwich"), TruthEntry::goal(vegan)),
                (say(done(4), "that's all, no more"), TruthEntry::goal(vegan_closed)),
            ],
        ),
    ];
    suite("constrained_sandwich", t, true, scripts)
}

/// (d) Grocery orders that grow mid-task.
pub fn grocery_additions() -> Suite {
    let t = TaskKind::GroceryShopping;
    let name = |n: &str| ItemRequest::count(Predicate::Name(n.into()), 1);
    let sweet = ItemRequest::count(Predicate::Attribute(Attribute::Sweet), 1);
    let drink = ItemRequest::count(Predicate::Attribute(Attribute::Drink), 1);
    let variants: Vec<(&str, Vec<ItemRequest>, &str, &str)> = vec![
        ("Can you get me something sweet?", vec![sweet], "I also want some Kitkat", "kitkat"),
        ("get me a Twix", vec![name("twix")], "I also want some Kitkat", "kitkat"),
        ("I want a Twix and Skittles", vec![name("twix"), name("skittles")], "can you also add some chips", "chips"),
        ("I'm thirsty, get me something to drink", vec![drink], "I also want some Kitkat", "kitkat"),
    ];
    let scripts = variants
        .into_iter()
        .enumerate()
        .map(|(i, (p, items, extra, item))| {
            let mut more = items.clone();
            more.push(name(item));
            script(
                format!("grocery_additions_{i}"),
                t,
                vec![
                    (prompt(p), TruthEntry::goal(order(items))),
                    (say(done(2), extra), TruthEntry::goal(order(more))),
                ],
            )
        })
        .collect();
    suite("grocery_additions", t, false, scripts)
}

pub fn bundled_suites() -> Vec<Suite> {
    vec![constrained_bussing(), interjection_bussing(), constrained_sandwich(), grocery_additions()]
}

pub fn bundled_suite(name: &str) -> Option<Suite> {
    bundled_suites().into_iter().find(|s| s.name == name)
}

/// Writes each bundled suite to `<dir>/<name>.json`.
pub fn export_suites(dir: &Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for s in bundled_suites() {
        let p = dir.join(format!("{}.json", s.name));
        std::fs::write(&p, s.to_json())?;
        out.push(p);
    }
    Ok(out)
}
