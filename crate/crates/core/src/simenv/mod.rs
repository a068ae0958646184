//! Deterministic symbolic simulators for the three task domains.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Arm, Attribute, Fixtures, GoalSpec, ItemRequest, Location, ObjectClass, ObjectId, Overrides,
    Predicate, RobotKind, RobotProfile, RobotState, SceneObject, SceneState, Skill, TaskKind,
};

const BUNDLED_CATALOGS: &str = include_str!("../../data/catalogs.json");

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("catalog: {0}")]
    Catalog(String),
    #[error("gripper occupied")]
    GripperOccupied,
    #[error("gripper empty")]
    GripperEmpty,
    #[error("destination '{0}' not in fixture catalog")]
    UnknownDestination(String),
    #[error("object '{0}' not in scene")]
    MissingObject(ObjectId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub name: String,
    pub class: ObjectClass,
    #[serde(default)]
    pub attributes: BTreeSet<Attribute>,
    #[serde(default)]
    pub color_tags: BTreeSet<String>,
    /// Not named in the original task descriptions; added to round out the pool.
    #[serde(default)]
    pub extension: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Names placed in every scene (repeats allowed).
    pub always: Vec<String>,
    /// One random name drawn from each group.
    #[serde(default)]
    pub one_of: Vec<Vec<String>>,
    pub extra_min: usize,
    pub extra_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskCatalog {
    pub task: TaskKind,
    pub robot: RobotKind,
    pub id_prefix: String,
    pub surfaces: Vec<String>,
    pub containers: Vec<String>,
    pub start_surface: String,
    pub destination_map: BTreeMap<ObjectClass, String>,
    pub pool: Vec<CatalogItem>,
    pub generator: GeneratorParams,
}

impl TaskCatalog {
    pub fn bundled(task: TaskKind) -> TaskCatalog {
        bundled_catalogs()
            .into_iter()
            .find(|c| c.task == task)
            .expect("bundled catalog for every task")
    }

    pub fn load(path: &Path) -> Result<Vec<TaskCatalog>, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Catalog(e.to_string()))?;
        let cats: Vec<TaskCatalog> =
            serde_json::from_str(&text).map_err(|e| SimError::Catalog(e.to_string()))?;
        for c in &cats {
            c.check()?;
        }
        Ok(cats)
    }

    fn check(&self) -> Result<(), SimError> {
        if self.robot != self.task.robot() {
            return Err(SimError::Catalog(format!(
                "{} must run on {}",
                self.task.as_str(),
                self.task.robot().as_str()
            )));
        }
        let names: Vec<&String> = self
            .generator
            .always
            .iter()
            .chain(self.generator.one_of.iter().flatten())
            .collect();
        for n in names {
            if self.item(n).is_none() {
                return Err(SimError::Catalog(format!("generator names unknown item '{n}'")));
            }
        }
        for item in &self.pool {
            for tag in &item.color_tags {
                if !crate::domain::COLOR_PALETTE.contains(&tag.as_str()) {
                    return Err(SimError::Catalog(format!("unknown color tag '{tag}'")));
                }
            }
        }
        Ok(())
    }

    pub fn item(&self, name: &str) -> Option<&CatalogItem> {
        self.pool.iter().find(|i| i.name == name)
    }

    pub fn profile(&self) -> RobotProfile {
        RobotProfile::for_kind(self.robot)
    }

    pub fn fixtures(&self) -> Fixtures {
        Fixtures { surfaces: self.surfaces.clone(), containers: self.containers.clone() }
    }

    /// The task's behaviour when the user asks for nothing in particular.
    pub fn default_goal(&self) -> GoalSpec {
        let mut goal = GoalSpec { destination_map: self.destination_map.clone(), ..GoalSpec::default() };
        match self.task {
            TaskKind::TableBussing => {
                goal.include_predicate =
                    Predicate::classes(&[ObjectClass::Trash, ObjectClass::Dish, ObjectClass::Utensil]);
            }
            TaskKind::SandwichMaking => {
                goal.required_items = sandwich_order(Predicate::Any);
            }
            TaskKind::GroceryShopping => {
                goal.include_predicate = Predicate::Class(ObjectClass::Grocery);
            }
        }
        goal
    }
}

/// Bottom slice, one of each filling the selector admits, top slice.
pub fn sandwich_order(fillings: Predicate) -> Vec<ItemRequest> {
    let bread = || Predicate::Name("bread".into());
    vec![
        ItemRequest::count(bread(), 1).fixed(),
        ItemRequest::each_kind(Predicate::AllOf(vec![
            Predicate::Class(ObjectClass::Ingredient),
            bread().negate(),
            fillings,
        ]))
        .at_stage(1),
        ItemRequest::count(bread(), 1).at_stage(2).fixed(),
    ]
}

pub fn bundled_catalogs() -> Vec<TaskCatalog> {
    serde_json::from_str(BUNDLED_CATALOGS).expect("bundled catalogs parse")
}

fn task_salt(task: TaskKind) -> u64 {
    match task {
        TaskKind::TableBussing => 0x7462_7573,
        TaskKind::SandwichMaking => 0x7361_6e64,
        TaskKind::GroceryShopping => 0x6772_6f63,
    }
}

/// Draws the initial scene for a task from the bundled catalog.
pub fn load_task(task: TaskKind, seed: u64) -> (SceneState, RobotState, GoalSpec) {
    load_from_catalog(&TaskCatalog::bundled(task), seed)
}

pub fn load_task_named(task: &str, seed: u64) -> Result<(SceneState, RobotState, GoalSpec), SimError> {
    let task: TaskKind = task.parse().map_err(|_| SimError::UnknownTask(task.to_string()))?;
    Ok(load_task(task, seed))
}

pub fn load_from_catalog(catalog: &TaskCatalog, seed: u64) -> (SceneState, RobotState, GoalSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ task_salt(catalog.task));
    let gen = &catalog.generator;
    let mut names: Vec<String> = gen.always.clone();
    for group in &gen.one_of {
        let choices: Vec<&String> = group.iter().filter(|n| !names.contains(n)).collect();
        if let Some(n) = choices.choose(&mut rng) {
            names.push((*n).clone());
        }
    }
    let mut rest: Vec<&CatalogItem> =
        catalog.pool.iter().filter(|i| !names.contains(&i.name)).collect();
    rest.shuffle(&mut rng);
    let extra = if gen.extra_max > gen.extra_min {
        rng.gen_range(gen.extra_min..=gen.extra_max)
    } else {
        gen.extra_min
    };
    names.extend(rest.into_iter().take(extra).map(|i| i.name.clone()));
    names.shuffle(&mut rng);

    let start = Location::Surface(catalog.start_surface.clone());
    let objects = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let item = catalog.item(n).expect("generator names checked");
            SceneObject {
                id: ObjectId::new(format!("{}{}", catalog.id_prefix, i + 1)),
                display_name: item.name.clone(),
                object_class: item.class,
                attributes: item.attributes.clone(),
                color_tags: item.color_tags.clone(),
                location: start.clone(),
                origin: start.clone(),
            }
        })
        .collect();
    let scene = SceneState { objects, fixtures: catalog.fixtures(), time: 0.0 };
    (scene, RobotState::home(catalog.profile()), catalog.default_goal())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

/// A skill bound to concrete scene entities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedSkill {
    pub skill: Skill,
    pub object: Option<ObjectId>,
    pub arm: Arm,
}

/// Applies the discrete effect of a finished skill. Preconditions are
/// checked regardless of outcome; a failed skill leaves the scene as is.
pub fn apply_skill_effect(
    scene: &SceneState,
    resolved: &ResolvedSkill,
    outcome: Outcome,
) -> Result<SceneState, SimError> {
    let mut next = scene.clone();
    match &resolved.skill {
        Skill::Pick { .. } => {
            let id = resolved.object.clone().ok_or(SimError::GripperEmpty)?;
            if scene.object(&id).is_none() {
                return Err(SimError::MissingObject(id));
            }
            if scene.held_by(resolved.arm).is_some() {
                return Err(SimError::GripperOccupied);
            }
            if outcome == Outcome::Success {
                next.object_mut(&id).expect("checked").location = Location::Gripper(resolved.arm);
            }
        }
        Skill::Place { destination, .. } => {
            let held = scene.held_by(resolved.arm).ok_or(SimError::GripperEmpty)?;
            let dest = scene
                .fixtures
                .location(destination)
                .ok_or_else(|| SimError::UnknownDestination(destination.clone()))?;
            if outcome == Outcome::Success {
                let idx = next.objects.iter().position(|o| o.id == held.id).expect("held object");
                let mut o = next.objects.remove(idx);
                o.location = dest;
                next.objects.push(o);
            }
        }
        Skill::Move { .. } | Skill::Rotate { .. } | Skill::Gripper { .. } | Skill::Home | Skill::Done => {}
    }
    Ok(next)
}

/// Robot-side bookkeeping for a finished skill: gripper apertures.
pub fn apply_robot_effect(robot: &RobotState, resolved: &ResolvedSkill, outcome: Outcome) -> RobotState {
    let mut next = robot.clone();
    if outcome == Outcome::Failure {
        return next;
    }
    let aperture = match &resolved.skill {
        Skill::Pick { .. } => Some(0.0),
        Skill::Place { .. } => Some(1.0),
        Skill::Gripper { action } => Some(match action {
            crate::domain::GripperAction::Open => 1.0,
            crate::domain::GripperAction::Close => 0.0,
        }),
        _ => None,
    };
    if let Some(a) = aperture {
        next.gripper_open.insert(resolved.arm, a);
    }
    next
}

pub fn goal_satisfied(scene: &SceneState, goal: &GoalSpec) -> bool {
    goal_satisfied_with(scene, goal, &Overrides::none())
}

/// True when every target sits at its destination in stage order and no
/// excluded object has left its starting place.
pub fn goal_satisfied_with(scene: &SceneState, goal: &GoalSpec, ov: &Overrides<'_>) -> bool {
    let agenda = goal.agenda(scene, ov);
    if !agenda.is_complete() {
        return false;
    }
    for o in &scene.objects {
        if agenda.excluded.contains(&o.id) && o.has_moved() {
            return false;
        }
    }
    let containers: BTreeSet<&String> = goal.destination_map.values().collect();
    for c in containers {
        let mut last = 0;
        for id in scene.stack(c) {
            match agenda.stage_of(&id) {
                Some(s) if s >= last => last = s,
                _ => return false,
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{validate_scene, Quantity};

    fn place_into(scene: &mut SceneState, name: &str, container: &str) {
        let idx = scene.objects.iter().position(|o| o.display_name == name && !matches!(o.location, Location::Container(_))).unwrap();
        let mut o = scene.objects.remove(idx);
        o.location = Location::Container(container.into());
        scene.objects.push(o);
    }

    #[test]
    fn load_is_deterministic() {
        let a = serde_json::to_vec(&load_task(TaskKind::TableBussing, 7)).unwrap();
        let b = serde_json::to_vec(&load_task(TaskKind::TableBussing, 7)).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_vec(&load_task(TaskKind::TableBussing, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bussing_has_both_cups() {
        for seed in 0..50 {
            let (scene, robot, _) = load_task(TaskKind::TableBussing, seed);
            let class_of = |n: &str| scene.objects.iter().find(|o| o.display_name == n).map(|o| o.object_class);
            assert_eq!(class_of("paper cup"), Some(ObjectClass::Trash));
            assert_eq!(class_of("plastic cup"), Some(ObjectClass::Dish));
            assert!(scene.objects.iter().any(|o| o.color_tags.contains("yellowish")));
            assert!(validate_scene(&scene, &robot.profile).is_empty());
        }
    }

    #[test]
    fn sandwich_has_bread_and_at_most_six_fillings() {
        for seed in 0..20 {
            let (scene, robot, _) = load_task(TaskKind::SandwichMaking, seed);
            assert!(scene.objects.iter().any(|o| o.display_name == "bread"));
            let kinds: BTreeSet<&str> = scene
                .objects
                .iter()
                .filter(|o| o.display_name != "bread")
                .map(|o| o.display_name.as_str())
                .collect();
            assert!(!kinds.is_empty() && kinds.len() <= 6);
            assert_eq!(robot.profile.name, RobotKind::BimanualArx);
        }
    }

    #[test]
    fn profile_binding() {
        for t in TaskKind::ALL {
            let (_, robot, _) = load_task(t, 0);
            assert_eq!(robot.profile.name, t.robot());
        }
        assert!(load_task_named("dish_washing", 0).is_err());
    }

    fn resolved(skill: Skill, object: Option<&str>) -> ResolvedSkill {
        ResolvedSkill { skill, object: object.map(ObjectId::new), arm: Arm::Single }
    }

    #[test]
    fn pick_and_place_effects() {
        let (scene, _, _) = load_task(TaskKind::TableBussing, 7);
        let cup = scene.objects.iter().find(|o| o.display_name == "paper cup").unwrap().id.clone();
        let pick = resolved(Skill::Pick { object: "paper cup".into() }, Some(cup.as_str()));
        let held = apply_skill_effect(&scene, &pick, Outcome::Success).unwrap();
        assert_eq!(held.object(&cup).unwrap().location, Location::Gripper(Arm::Single));

        let place = resolved(Skill::Place { object: None, destination: "trash_bin".into() }, None);
        let done = apply_skill_effect(&held, &place, Outcome::Success).unwrap();
        assert_eq!(done.object(&cup).unwrap().location, Location::Container("trash_bin".into()));
        assert_eq!(done.id_multiset(), scene.id_multiset());

        let failed = apply_skill_effect(&held, &place, Outcome::Failure).unwrap();
        assert_eq!(failed, held);

        let other = scene.objects.iter().find(|o| o.id != cup).unwrap().id.clone();
        let pick2 = resolved(Skill::Pick { object: "x".into() }, Some(other.as_str()));
        assert!(matches!(apply_skill_effect(&held, &pick2, Outcome::Success), Err(SimError::GripperOccupied)));
        assert!(matches!(apply_skill_effect(&scene, &place, Outcome::Success), Err(SimError::GripperEmpty)));
        let bad = resolved(Skill::Place { object: None, destination: "dishwasher".into() }, None);
        assert!(matches!(apply_skill_effect(&held, &bad, Outcome::Success), Err(SimError::UnknownDestination(_))));
    }

    #[test]
    fn drop_wrapper_in_trash() {
        let (mut scene, _, _) = load_task(TaskKind::TableBussing, 1);
        if !scene.objects.iter().any(|o| o.display_name == "wrapper") {
            let mut w = scene.objects[0].clone();
            w.id = ObjectId::new("t99");
            w.display_name = "wrapper".into();
            scene.objects.push(w);
        }
        let wrapper = scene.objects.iter().find(|o| o.display_name == "wrapper").unwrap().id.clone();
        scene.object_mut(&wrapper).unwrap().location = Location::Gripper(Arm::Single);
        let place = resolved(Skill::Place { object: Some("wrapper".into()), destination: "trash_bin".into() }, None);
        let next = apply_skill_effect(&scene, &place, Outcome::Success).unwrap();
        assert_eq!(next.object(&wrapper).unwrap().location, Location::Container("trash_bin".into()));
    }

    #[test]
    fn only_trash_goal() {
        let (mut scene, _, default_goal) = load_task(TaskKind::TableBussing, 3);
        let goal = GoalSpec {
            include_predicate: Predicate::Class(ObjectClass::Trash),
            exclude_predicate: Predicate::classes(&[ObjectClass::Dish, ObjectClass::Utensil]),
            ..default_goal
        };
        assert!(goal.overlaps(&scene).is_empty());
        let trash: Vec<String> = scene
            .objects
            .iter()
            .filter(|o| o.object_class == ObjectClass::Trash)
            .map(|o| o.display_name.clone())
            .collect();
        assert!(trash.len() >= 2);
        for n in &trash[..trash.len() - 1] {
            place_into(&mut scene, n, "trash_bin");
        }
        assert!(!goal_satisfied(&scene, &goal));
        place_into(&mut scene, trash.last().unwrap(), "trash_bin");
        assert!(goal_satisfied(&scene, &goal));
        // touching a dish breaks it
        let dish = scene.objects.iter().position(|o| o.object_class == ObjectClass::Dish).unwrap();
        scene.objects[dish].location = Location::Container("bussing_bin".into());
        assert!(!goal_satisfied(&scene, &goal));
    }

    #[test]
    fn sandwich_missing_lettuce() {
        let (mut scene, _, default_goal) = load_task(TaskKind::SandwichMaking, 0);
        let goal = GoalSpec {
            required_items: sandwich_order(Predicate::Name("lettuce".into())),
            ..default_goal.clone()
        };
        for n in ["bread", "cheese", "bread"] {
            place_into(&mut scene, n, "sandwich_stack");
        }
        assert!(!goal_satisfied(&scene, &goal));
        let cheese_goal = GoalSpec { required_items: sandwich_order(Predicate::Name("cheese".into())), ..default_goal };
        assert!(goal_satisfied(&scene, &cheese_goal));
        assert!(matches!(cheese_goal.required_items[1].quantity, Quantity::EachKind));
    }

    #[test]
    fn sandwich_stack_order_matters() {
        let (mut scene, _, default_goal) = load_task(TaskKind::SandwichMaking, 0);
        let goal = GoalSpec { required_items: sandwich_order(Predicate::Name("cheese".into())), ..default_goal };
        for n in ["cheese", "bread", "bread"] {
            place_into(&mut scene, n, "sandwich_stack");
        }
        assert!(!goal_satisfied(&scene, &goal));
    }

    proptest::proptest! {
        #[test]
        fn effects_conserve_objects(seed in 0u64..500, ops in proptest::collection::vec((0usize..16, 0usize..4, proptest::bool::ANY), 0..30)) {
            let (mut scene, _, _) = load_task(TaskKind::TableBussing, seed);
            let before = scene.id_multiset();
            let dests = ["trash_bin", "bussing_bin", "table", "nowhere"];
            for (obj, dest, ok) in ops {
                let outcome = if ok { Outcome::Success } else { Outcome::Failure };
                let r = if scene.held_by(Arm::Single).is_none() {
                    let id = scene.objects[obj % scene.objects.len()].id.clone();
                    ResolvedSkill { skill: Skill::Pick { object: "x".into() }, object: Some(id), arm: Arm::Single }
                } else {
                    ResolvedSkill { skill: Skill::Place { object: None, destination: dests[dest].into() }, object: None, arm: Arm::Single }
                };
                if let Ok(next) = apply_skill_effect(&scene, &r, outcome) {
                    scene = next;
                }
                proptest::prop_assert_eq!(&scene.id_multiset(), &before);
                proptest::prop_assert!(scene.held().count() <= 1);
            }
        }
    }
}
