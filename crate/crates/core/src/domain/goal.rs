//! Goal specifications and the agenda derived from them.
//!
//! A [`GoalSpec`] says which objects should end up where. Given a scene and
//! the dialogue overrides (reclassifications, exclusions, put-backs) it
//! expands into an [`Agenda`]: the requirements still pending, the objects
//! admissible to pick next, and where each held object belongs. The
//! reasoner, the judge, goal checks and task progress all read the same
//! agenda.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Attribute, Location, ObjectClass, ObjectId, SceneObject, SceneState};

/// Boolean selector over scene objects.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    #[default]
    Any,
    Nothing,
    Class(ObjectClass),
    Name(String),
    Attribute(Attribute),
    Color(String),
    AnyOf(Vec<Predicate>),
    AllOf(Vec<Predicate>),
    Not(Box<Predicate>),
}

/// The parts of an object a predicate can see, after overrides.
#[derive(Clone, Copy, Debug)]
pub struct ObjectView<'a> {
    pub name: &'a str,
    pub class: ObjectClass,
    pub attributes: &'a BTreeSet<Attribute>,
    pub color_tags: &'a BTreeSet<String>,
}

impl<'a> ObjectView<'a> {
    pub fn of(o: &'a SceneObject, overrides: &Overrides<'_>) -> Self {
        ObjectView {
            name: &o.display_name,
            class: overrides.reclassified.get(&o.id).copied().unwrap_or(o.object_class),
            attributes: &o.attributes,
            color_tags: &o.color_tags,
        }
    }
}

/// Case-insensitive name match on the full display name or its head noun,
/// tolerating a plural `s`.
pub fn name_matches(display_name: &str, wanted: &str) -> bool {
    let d = display_name.trim().to_lowercase();
    let w = wanted.trim().to_lowercase();
    if w.is_empty() {
        return false;
    }
    let same = |a: &str, b: &str| a == b || format!("{a}s") == b || format!("{b}s") == a;
    if same(&d, &w) {
        return true;
    }
    match d.rsplit_once(' ') {
        Some((_, head)) => (!w.contains(' ') && same(head, &w)) || d.ends_with(&format!(" {w}")),
        None => false,
    }
}

impl Predicate {
    pub fn any_of(preds: impl IntoIterator<Item = Predicate>) -> Predicate {
        Predicate::AnyOf(preds.into_iter().collect())
    }

    pub fn classes(classes: &[ObjectClass]) -> Predicate {
        match classes {
            [c] => Predicate::Class(*c),
            cs => Predicate::AnyOf(cs.iter().map(|c| Predicate::Class(*c)).collect()),
        }
    }

    pub fn negate(self) -> Predicate {
        Predicate::Not(Box::new(self))
    }

    pub fn matches(&self, v: &ObjectView<'_>) -> bool {
        match self {
            Predicate::Any => true,
            Predicate::Nothing => false,
            Predicate::Class(c) => v.class == *c,
            Predicate::Name(n) => name_matches(v.name, n),
            Predicate::Attribute(a) => v.attributes.contains(a),
            Predicate::Color(c) => v.color_tags.contains(c),
            Predicate::AnyOf(ps) => ps.iter().any(|p| p.matches(v)),
            Predicate::AllOf(ps) => ps.iter().all(|p| p.matches(v)),
            Predicate::Not(p) => !p.matches(v),
        }
    }

    /// Adds `other` as an extra disjunct.
    pub fn or(self, other: Predicate) -> Predicate {
        match self {
            Predicate::Nothing => other,
            Predicate::AnyOf(mut ps) => {
                ps.push(other);
                Predicate::AnyOf(ps)
            }
            p => Predicate::AnyOf(vec![p, other]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Count(u32),
    /// One object of every distinct display name the selector matches.
    EachKind,
}

/// One line of an order: "two bags of chips", "something sweet", "bread".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRequest {
    pub selector: Predicate,
    pub quantity: Quantity,
    /// Lower stages must be complete before higher stages start.
    #[serde(default)]
    pub stage: u32,
    /// Dropped when the user closes the order.
    #[serde(default = "yes")]
    pub closable: bool,
}

fn yes() -> bool {
    true
}

impl ItemRequest {
    pub fn count(selector: Predicate, n: u32) -> Self {
        ItemRequest { selector, quantity: Quantity::Count(n), stage: 0, closable: true }
    }

    pub fn each_kind(selector: Predicate) -> Self {
        ItemRequest { selector, quantity: Quantity::EachKind, stage: 0, closable: true }
    }

    pub fn at_stage(mut self, stage: u32) -> Self {
        self.stage = stage;
        self
    }

    pub fn fixed(mut self) -> Self {
        self.closable = false;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    /// Object class to container name.
    pub destination_map: BTreeMap<ObjectClass, String>,
    pub include_predicate: Predicate,
    pub exclude_predicate: Predicate,
    /// Empty: every included object is a target. Otherwise only the
    /// requested items are.
    #[serde(default)]
    pub required_items: Vec<ItemRequest>,
    #[serde(default)]
    pub forbidden_attributes: BTreeSet<Attribute>,
    #[serde(default)]
    pub halt: bool,
    #[serde(default)]
    pub closed: bool,
}

impl Default for GoalSpec {
    fn default() -> Self {
        GoalSpec {
            destination_map: BTreeMap::new(),
            include_predicate: Predicate::Any,
            exclude_predicate: Predicate::Nothing,
            required_items: Vec::new(),
            forbidden_attributes: BTreeSet::new(),
            halt: false,
            closed: false,
        }
    }
}

/// Dialogue-level adjustments layered over a goal.
#[derive(Clone, Copy, Debug)]
pub struct Overrides<'a> {
    pub reclassified: &'a BTreeMap<ObjectId, ObjectClass>,
    pub excluded_ids: &'a BTreeSet<ObjectId>,
    pub put_back: &'a BTreeSet<ObjectId>,
}

static NO_CLASSES: BTreeMap<ObjectId, ObjectClass> = BTreeMap::new();
static NO_IDS: BTreeSet<ObjectId> = BTreeSet::new();

impl Overrides<'static> {
    pub fn none() -> Self {
        Overrides { reclassified: &NO_CLASSES, excluded_ids: &NO_IDS, put_back: &NO_IDS }
    }
}

impl GoalSpec {
    pub fn destination_for(&self, class: ObjectClass) -> Option<Location> {
        self.destination_map.get(&class).map(|c| Location::Container(c.clone()))
    }

    /// True when the object must not be touched.
    pub fn is_excluded(&self, o: &SceneObject, ov: &Overrides<'_>) -> bool {
        let v = ObjectView::of(o, ov);
        self.exclude_predicate.matches(&v)
            || o.attributes.iter().any(|a| self.forbidden_attributes.contains(a))
            || ov.excluded_ids.contains(&o.id)
    }

    /// Objects matching both the include and exclude predicates.
    pub fn overlaps(&self, scene: &SceneState) -> Vec<ObjectId> {
        let ov = Overrides::none();
        scene
            .by_id()
            .into_iter()
            .filter(|o| {
                let v = ObjectView::of(o, &ov);
                self.include_predicate.matches(&v) && self.exclude_predicate.matches(&v)
            })
            .map(|o| o.id.clone())
            .collect()
    }

    pub fn agenda(&self, scene: &SceneState, ov: &Overrides<'_>) -> Agenda {
        Agenda::build(self, scene, ov)
    }
}

/// A slot group that objects fill: one object in include-all mode, or one
/// line of an order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Requirement {
    pub request: Option<usize>,
    pub stage: u32,
    pub slots: usize,
    pub placed: Vec<ObjectId>,
    pub held: Vec<ObjectId>,
    pub candidates: Vec<ObjectId>,
}

impl Requirement {
    pub fn open_slots(&self) -> usize {
        self.slots.saturating_sub(self.placed.len() + self.held.len())
    }

    pub fn is_pending(&self) -> bool {
        !self.held.is_empty() || (self.open_slots() > 0 && !self.candidates.is_empty())
    }

    /// Slots that can still be filled from the scene.
    pub fn feasible(&self) -> usize {
        self.slots.min(self.placed.len() + self.held.len() + self.candidates.len())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Agenda {
    pub requirements: Vec<Requirement>,
    /// Put-back objects not yet back at their origin.
    pub repairs: Vec<ObjectId>,
    /// Held objects that belong to no requirement.
    pub strays: Vec<ObjectId>,
    pub excluded: BTreeSet<ObjectId>,
    destinations: BTreeMap<ObjectId, Location>,
}

struct Sub {
    request: usize,
    stage: u32,
    closable: bool,
    count: usize,
    matching: Vec<ObjectId>,
}

impl Agenda {
    fn build(goal: &GoalSpec, scene: &SceneState, ov: &Overrides<'_>) -> Agenda {
        let objects = scene.by_id();
        let mut agenda = Agenda::default();
        let mut eligible: Vec<&SceneObject> = Vec::new();
        for o in &objects {
            if ov.put_back.contains(&o.id) {
                agenda.destinations.insert(o.id.clone(), o.origin.clone());
                if o.location != o.origin {
                    agenda.repairs.push(o.id.clone());
                }
                continue;
            }
            if goal.is_excluded(o, ov) {
                agenda.excluded.insert(o.id.clone());
                continue;
            }
            let v = ObjectView::of(o, ov);
            if !goal.include_predicate.matches(&v) {
                continue;
            }
            if let Some(dest) = goal.destination_for(v.class) {
                agenda.destinations.insert(o.id.clone(), dest);
                eligible.push(o);
            }
        }

        let at_dest = |o: &SceneObject| agenda.destinations.get(&o.id) == Some(&o.location);

        if goal.required_items.is_empty() {
            for o in &eligible {
                let mut r = Requirement {
                    request: None,
                    stage: 0,
                    slots: 1,
                    placed: vec![],
                    held: vec![],
                    candidates: vec![],
                };
                if at_dest(o) {
                    r.placed.push(o.id.clone());
                } else if o.is_held() {
                    r.held.push(o.id.clone());
                } else {
                    r.candidates.push(o.id.clone());
                }
                if goal.halt {
                    r.slots = r.placed.len() + r.held.len();
                }
                agenda.requirements.push(r);
            }
        } else {
            let mut subs: Vec<Sub> = Vec::new();
            for (i, req) in goal.required_items.iter().enumerate() {
                let matching: Vec<&SceneObject> = eligible
                    .iter()
                    .copied()
                    .filter(|o| req.selector.matches(&ObjectView::of(o, ov)))
                    .collect();
                match req.quantity {
                    Quantity::Count(n) => subs.push(Sub {
                        request: i,
                        stage: req.stage,
                        closable: req.closable,
                        count: n as usize,
                        matching: matching.iter().map(|o| o.id.clone()).collect(),
                    }),
                    Quantity::EachKind => {
                        let mut names: Vec<String> = Vec::new();
                        for o in &matching {
                            let n = o.display_name.to_lowercase();
                            if !names.contains(&n) {
                                names.push(n);
                            }
                        }
                        for n in names {
                            subs.push(Sub {
                                request: i,
                                stage: req.stage,
                                closable: req.closable,
                                count: 1,
                                matching: matching
                                    .iter()
                                    .filter(|o| o.display_name.to_lowercase() == n)
                                    .map(|o| o.id.clone())
                                    .collect(),
                            });
                        }
                    }
                }
            }
            // Most constrained lines claim already-placed objects first.
            let mut order: Vec<usize> = (0..subs.len()).collect();
            order.sort_by_key(|&i| (subs[i].matching.len(), i));
            let mut used: BTreeSet<ObjectId> = BTreeSet::new();
            let mut reqs: Vec<Requirement> = subs
                .iter()
                .map(|s| Requirement {
                    request: Some(s.request),
                    stage: s.stage,
                    slots: s.count,
                    placed: vec![],
                    held: vec![],
                    candidates: vec![],
                })
                .collect();
            for &i in &order {
                let sub = &subs[i];
                for id in &sub.matching {
                    if reqs[i].placed.len() >= sub.count {
                        break;
                    }
                    let o = scene.object(id).expect("matching id from scene");
                    if !used.contains(id) && at_dest(o) {
                        reqs[i].placed.push(id.clone());
                        used.insert(id.clone());
                    }
                }
                for id in &sub.matching {
                    if reqs[i].placed.len() + reqs[i].held.len() >= sub.count {
                        break;
                    }
                    let o = scene.object(id).expect("matching id from scene");
                    if !used.contains(id) && o.is_held() {
                        reqs[i].held.push(id.clone());
                        used.insert(id.clone());
                    }
                }
            }
            for (i, sub) in subs.iter().enumerate() {
                reqs[i].candidates = sub
                    .matching
                    .iter()
                    .filter(|id| {
                        let o = scene.object(id).expect("matching id from scene");
                        !used.contains(*id) && !at_dest(o) && !o.is_held()
                    })
                    .cloned()
                    .collect();
                if goal.halt || (goal.closed && sub.closable) {
                    reqs[i].slots = reqs[i].slots.min(reqs[i].placed.len() + reqs[i].held.len());
                }
            }
            agenda.requirements = reqs;
        }

        let assigned: BTreeSet<&ObjectId> =
            agenda.requirements.iter().flat_map(|r| r.held.iter()).collect();
        let strays: Vec<ObjectId> = objects
            .iter()
            .filter(|o| o.is_held() && !assigned.contains(&o.id) && !ov.put_back.contains(&o.id))
            .map(|o| o.id.clone())
            .collect();
        for id in &strays {
            let o = scene.object(id).expect("stray from scene");
            agenda.destinations.insert(id.clone(), o.origin.clone());
        }
        agenda.strays = strays;
        agenda
    }

    /// Lowest stage with a pending requirement.
    pub fn active_stage(&self) -> Option<u32> {
        self.requirements.iter().filter(|r| r.is_pending()).map(|r| r.stage).min()
    }

    fn open_in_stage(&self) -> impl Iterator<Item = &Requirement> {
        let stage = self.active_stage();
        self.requirements
            .iter()
            .filter(move |r| Some(r.stage) == stage && r.open_slots() > 0 && !r.candidates.is_empty())
    }

    /// Every object that may be picked next.
    pub fn pickable(&self) -> Vec<ObjectId> {
        let mut ids: BTreeSet<ObjectId> = BTreeSet::new();
        for r in self.open_in_stage() {
            ids.extend(r.candidates.iter().cloned());
        }
        ids.into_iter().collect()
    }

    /// Deterministic choice among [`Agenda::pickable`]: the most constrained
    /// open line first, lowest id within it.
    pub fn next_pick(&self) -> Option<ObjectId> {
        self.open_in_stage()
            .enumerate()
            .min_by_key(|(i, r)| (r.candidates.len(), *i))
            .and_then(|(_, r)| r.candidates.iter().min().cloned())
    }

    /// Where a held (or to-be-held) object should be placed.
    pub fn destination(&self, id: &ObjectId) -> Option<&Location> {
        self.destinations.get(id)
    }

    pub fn pending_ids(&self) -> BTreeSet<ObjectId> {
        let mut ids: BTreeSet<ObjectId> = self.repairs.iter().cloned().collect();
        ids.extend(self.strays.iter().cloned());
        for r in self.requirements.iter().filter(|r| r.is_pending()) {
            ids.extend(r.held.iter().cloned());
            if r.open_slots() > 0 {
                ids.extend(r.candidates.iter().cloned());
            }
        }
        ids
    }

    pub fn is_complete(&self) -> bool {
        self.repairs.is_empty()
            && self.strays.is_empty()
            && self.requirements.iter().all(|r| !r.is_pending())
    }

    /// (filled slots, feasible slots) over all requirements.
    pub fn progress(&self) -> (usize, usize) {
        self.requirements.iter().fold((0, 0), |(done, total), r| {
            (done + r.placed.len().min(r.slots), total + r.feasible())
        })
    }

    /// Stage of the requirement an object was assigned to, if any.
    pub fn stage_of(&self, id: &ObjectId) -> Option<u32> {
        self.requirements
            .iter()
            .find(|r| r.placed.contains(id) || r.held.contains(id))
            .map(|r| r.stage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Arm, Fixtures};

    fn obj(id: &str, name: &str, class: ObjectClass, attrs: &[Attribute]) -> SceneObject {
        SceneObject {
            id: ObjectId::new(id),
            display_name: name.into(),
            object_class: class,
            attributes: attrs.iter().copied().collect(),
            color_tags: BTreeSet::new(),
            location: Location::Surface("shelf".into()),
            origin: Location::Surface("shelf".into()),
        }
    }

    fn grocery_scene() -> SceneState {
        SceneState {
            objects: vec![
                obj("g1", "twix", ObjectClass::Grocery, &[Attribute::Sweet]),
                obj("g2", "kitkat", ObjectClass::Grocery, &[Attribute::Sweet]),
                obj("g3", "chips", ObjectClass::Grocery, &[Attribute::Salty]),
            ],
            fixtures: Fixtures { surfaces: vec!["shelf".into()], containers: vec!["basket".into()] },
            time: 0.0,
        }
    }

    fn grocery_goal(items: Vec<ItemRequest>) -> GoalSpec {
        GoalSpec {
            destination_map: [(ObjectClass::Grocery, "basket".to_string())].into_iter().collect(),
            required_items: items,
            ..GoalSpec::default()
        }
    }

    #[test]
    fn name_matching() {
        assert!(name_matches("white bowl", "bowl"));
        assert!(name_matches("KitKat", "kitkat"));
        assert!(name_matches("pickles", "pickle"));
        assert!(name_matches("roast beef", "roast beef"));
        assert!(!name_matches("paper cup", "plastic cup"));
        assert!(!name_matches("fork", "for"));
    }

    #[test]
    fn attribute_request_admits_any_match() {
        let g = grocery_goal(vec![ItemRequest::count(Predicate::Attribute(Attribute::Sweet), 1)]);
        let a = g.agenda(&grocery_scene(), &Overrides::none());
        assert_eq!(a.pickable(), vec![ObjectId::new("g1"), ObjectId::new("g2")]);
        assert_eq!(a.next_pick(), Some(ObjectId::new("g1")));
        assert_eq!(a.progress(), (0, 1));
    }

    #[test]
    fn specific_line_claims_placed_item_first() {
        let mut scene = grocery_scene();
        scene.objects[1].location = Location::Container("basket".into());
        let g = grocery_goal(vec![
            ItemRequest::count(Predicate::Attribute(Attribute::Sweet), 1),
            ItemRequest::count(Predicate::Name("kitkat".into()), 1),
        ]);
        let a = g.agenda(&scene, &Overrides::none());
        // kitkat line owns the placed kitkat, the sweet line still wants twix
        assert_eq!(a.pickable(), vec![ObjectId::new("g1")]);
        assert_eq!(a.progress(), (1, 2));
    }

    #[test]
    fn halt_keeps_only_held_work() {
        let mut scene = grocery_scene();
        scene.objects[0].location = Location::Gripper(Arm::Left);
        let mut g = grocery_goal(vec![]);
        g.halt = true;
        let a = g.agenda(&scene, &Overrides::none());
        assert_eq!(a.pending_ids(), [ObjectId::new("g1")].into_iter().collect());
        assert_eq!(a.destination(&ObjectId::new("g1")), Some(&Location::Container("basket".into())));
    }

    #[test]
    fn put_back_and_strays_go_to_origin() {
        let mut scene = grocery_scene();
        scene.objects[2].location = Location::Gripper(Arm::Left);
        let g = grocery_goal(vec![ItemRequest::count(Predicate::Name("twix".into()), 1)]);
        let a = g.agenda(&scene, &Overrides::none());
        assert_eq!(a.strays, vec![ObjectId::new("g3")]);
        assert_eq!(a.destination(&ObjectId::new("g3")), Some(&Location::Surface("shelf".into())));

        let put_back: BTreeSet<ObjectId> = [ObjectId::new("g3")].into_iter().collect();
        let ov = Overrides { put_back: &put_back, ..Overrides::none() };
        let a = g.agenda(&scene, &ov);
        assert_eq!(a.repairs, vec![ObjectId::new("g3")]);
        assert!(a.strays.is_empty());
    }

    #[test]
    fn staged_requests_gate_later_stages() {
        let mut scene = grocery_scene();
        for o in &mut scene.objects {
            o.object_class = ObjectClass::Ingredient;
        }
        let g = GoalSpec {
            destination_map: [(ObjectClass::Ingredient, "basket".to_string())].into_iter().collect(),
            required_items: vec![
                ItemRequest::count(Predicate::Name("chips".into()), 1).fixed(),
                ItemRequest::each_kind(Predicate::Attribute(Attribute::Sweet)).at_stage(1),
            ],
            ..GoalSpec::default()
        };
        let a = g.agenda(&scene, &Overrides::none());
        assert_eq!(a.pickable(), vec![ObjectId::new("g3")]);
        scene.objects[2].location = Location::Container("basket".into());
        let a = g.agenda(&scene, &Overrides::none());
        assert_eq!(a.pickable(), vec![ObjectId::new("g1"), ObjectId::new("g2")]);
        assert_eq!(a.progress(), (1, 3));
    }
}
