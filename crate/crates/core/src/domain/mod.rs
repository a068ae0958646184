//! Shared data model: robot profiles, symbolic scenes, skill commands,
//! dialogue events, episodes and synthetic interaction records.
//!
//! Every type here is a plain value. They serialize to JSON with field
//! names as declared and enums in `lower_snake_case`.

mod goal;
mod ids;

pub use goal::{name_matches, Agenda, GoalSpec, ItemRequest, ObjectView, Overrides, Predicate, Quantity, Requirement};
pub use ids::ObjectId;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Closed color palette for `SceneObject::color_tags`.
pub const COLOR_PALETTE: &[&str] = &[
    "white", "black", "red", "green", "blue", "brown", "silver", "clear", "orange", "purple",
    "pink", "yellowish",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotKind {
    Ur5e,
    BimanualArx,
    MobileArx,
}

impl RobotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RobotKind::Ur5e => "ur5e",
            RobotKind::BimanualArx => "bimanual_arx",
            RobotKind::MobileArx => "mobile_arx",
        }
    }
}

/// Dimensions of one of the three robot platforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotProfile {
    pub name: RobotKind,
    pub config_dim: usize,
    pub action_dim: usize,
    pub camera_count: usize,
}

/// Joints per arm block in the action layout (three end-effector
/// translation axes, three rotation axes), followed by one gripper entry.
pub const ARM_JOINTS: usize = 6;
pub const ARM_BLOCK: usize = ARM_JOINTS + 1;

impl RobotProfile {
    pub fn for_kind(name: RobotKind) -> Self {
        let (config_dim, action_dim, camera_count) = match name {
            RobotKind::Ur5e => (7, 7, 2),
            RobotKind::BimanualArx => (14, 14, 3),
            RobotKind::MobileArx => (14, 16, 3),
        };
        RobotProfile { name, config_dim, action_dim, camera_count }
    }

    pub fn is_consistent(&self) -> bool {
        *self == RobotProfile::for_kind(self.name)
    }

    pub fn arms(&self) -> &'static [Arm] {
        match self.name {
            RobotKind::Ur5e => &[Arm::Single],
            RobotKind::BimanualArx | RobotKind::MobileArx => &[Arm::Left, Arm::Right],
        }
    }

    /// Offset of an arm's block inside configuration and action vectors.
    pub fn arm_offset(&self, arm: Arm) -> usize {
        match arm {
            Arm::Single | Arm::Left => 0,
            Arm::Right => ARM_BLOCK,
        }
    }

    /// Indices of gripper entries in the action vector.
    pub fn gripper_dims(&self) -> Vec<usize> {
        self.arms().iter().map(|a| self.arm_offset(*a) + ARM_JOINTS).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Single,
    Left,
    Right,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Single => "single",
            Arm::Left => "left",
            Arm::Right => "right",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Surface(String),
    Container(String),
    Gripper(Arm),
}

impl Location {
    pub fn fixture_name(&self) -> Option<&str> {
        match self {
            Location::Surface(n) | Location::Container(n) => Some(n),
            Location::Gripper(_) => None,
        }
    }

    pub fn is_gripper(&self) -> bool {
        matches!(self, Location::Gripper(_))
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Surface(n) => write!(f, "surface:{n}"),
            Location::Container(n) => write!(f, "container:{n}"),
            Location::Gripper(a) => write!(f, "gripper:{}", a.as_str()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Trash,
    Dish,
    Utensil,
    Ingredient,
    Grocery,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 5] = [
        ObjectClass::Trash,
        ObjectClass::Dish,
        ObjectClass::Utensil,
        ObjectClass::Ingredient,
        ObjectClass::Grocery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Trash => "trash",
            ObjectClass::Dish => "dish",
            ObjectClass::Utensil => "utensil",
            ObjectClass::Ingredient => "ingredient",
            ObjectClass::Grocery => "grocery",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Sweet,
    Salty,
    Drink,
    Vegetarian,
    Dairy,
    Meat,
    Fragile,
}

impl Attribute {
    pub const ALL: [Attribute; 7] = [
        Attribute::Sweet,
        Attribute::Salty,
        Attribute::Drink,
        Attribute::Vegetarian,
        Attribute::Dairy,
        Attribute::Meat,
        Attribute::Fragile,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Sweet => "sweet",
            Attribute::Salty => "salty",
            Attribute::Drink => "drink",
            Attribute::Vegetarian => "vegetarian",
            Attribute::Dairy => "dairy",
            Attribute::Meat => "meat",
            Attribute::Fragile => "fragile",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub display_name: String,
    pub object_class: ObjectClass,
    #[serde(default)]
    pub attributes: BTreeSet<Attribute>,
    #[serde(default)]
    pub color_tags: BTreeSet<String>,
    pub location: Location,
    /// Where the object started the episode; put-back commands return it here.
    pub origin: Location,
}

impl SceneObject {
    pub fn is_held(&self) -> bool {
        self.location.is_gripper()
    }

    pub fn has_moved(&self) -> bool {
        self.location != self.origin
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixtures {
    pub surfaces: Vec<String>,
    pub containers: Vec<String>,
}

impl Fixtures {
    /// Maps a fixture name to its location variant.
    pub fn location(&self, name: &str) -> Option<Location> {
        if self.surfaces.iter().any(|s| s == name) {
            Some(Location::Surface(name.to_string()))
        } else if self.containers.iter().any(|c| c == name) {
            Some(Location::Container(name.to_string()))
        } else {
            None
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.location(name).is_some()
    }
}

/// Symbolic stand-in for the camera views of one instant.
///
/// The order of `objects` is significant for containers: an object placed
/// into a container is moved to the end of the list, so the objects sharing
/// a container location appear bottom-to-top.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub objects: Vec<SceneObject>,
    pub fixtures: Fixtures,
    pub time: f64,
}

impl SceneState {
    pub fn object(&self, id: &ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| &o.id == id)
    }

    pub fn object_mut(&mut self, id: &ObjectId) -> Option<&mut SceneObject> {
        self.objects.iter_mut().find(|o| &o.id == id)
    }

    pub fn held_by(&self, arm: Arm) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.location == Location::Gripper(arm))
    }

    pub fn held(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.is_held())
    }

    /// Objects sorted by id.
    pub fn by_id(&self) -> Vec<&SceneObject> {
        let mut v: Vec<&SceneObject> = self.objects.iter().collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    /// Ids at a container, bottom first.
    pub fn stack(&self, container: &str) -> Vec<ObjectId> {
        self.objects
            .iter()
            .filter(|o| matches!(&o.location, Location::Container(c) if c == container))
            .map(|o| o.id.clone())
            .collect()
    }

    pub fn id_multiset(&self) -> BTreeMap<ObjectId, usize> {
        let mut m = BTreeMap::new();
        for o in &self.objects {
            *m.entry(o.id.clone()).or_insert(0) += 1;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub profile: RobotProfile,
    pub q: Vec<f64>,
    pub gripper_open: BTreeMap<Arm, f64>,
}

impl RobotState {
    /// Robot at its home pose with all grippers open.
    pub fn home(profile: RobotProfile) -> Self {
        let mut q = vec![0.0; profile.config_dim];
        for g in profile.gripper_dims() {
            q[g] = 1.0;
        }
        RobotState {
            profile,
            q,
            gripper_open: profile.arms().iter().map(|a| (*a, 1.0)).collect(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.q.len() == self.profile.config_dim
            && self.gripper_open.values().all(|g| (0.0..=1.0).contains(g))
            && self.gripper_open.keys().all(|a| self.profile.arms().contains(a))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    pub command_id: u64,
    pub actions: Vec<Vec<f64>>,
    pub start_step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Higher,
    Lower,
    TowardUser,
    AwayFromUser,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::Left,
        Direction::Right,
        Direction::Higher,
        Direction::Lower,
        Direction::TowardUser,
        Direction::AwayFromUser,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmSide {
    Left,
    Right,
}

impl ArmSide {
    pub fn arm(self) -> Arm {
        match self {
            ArmSide::Left => Arm::Left,
            ArmSide::Right => Arm::Right,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    Cw,
    Ccw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperAction {
    Open,
    Close,
}

/// Atomic skill from the closed command grammar.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "skill", rename_all = "snake_case")]
pub enum Skill {
    Pick {
        object: String,
    },
    Place {
        object: Option<String>,
        destination: String,
    },
    Move {
        direction: Direction,
        arm: Option<ArmSide>,
    },
    Rotate {
        rotation: Rotation,
    },
    Gripper {
        action: GripperAction,
    },
    Home,
    Done,
}

impl Skill {
    /// Move/Rotate/Gripper: short corrective motions with a fixed duration.
    pub fn is_primitive(&self) -> bool {
        matches!(self, Skill::Move { .. } | Skill::Rotate { .. } | Skill::Gripper { .. })
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Skill::Home | Skill::Done)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillCommand {
    #[serde(flatten)]
    pub skill: Skill,
    pub raw_text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UserEventKind {
    Prompt { text: String },
    Interjection { text: String },
    Resume,
}

impl UserEventKind {
    pub fn text(&self) -> Option<&str> {
        match self {
            UserEventKind::Prompt { text } | UserEventKind::Interjection { text } => Some(text),
            UserEventKind::Resume => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserEvent {
    #[serde(flatten)]
    pub kind: UserEventKind,
    pub time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighLevelDecision {
    pub skill_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<String>,
}

impl HighLevelDecision {
    pub fn command(text: impl Into<String>) -> Self {
        HighLevelDecision { skill_text: text.into(), utterance: None }
    }

    pub fn with_utterance(mut self, utterance: Option<String>) -> Self {
        self.utterance = utterance;
        self
    }

    /// Removes the utterance from the command text, if the two were merged.
    pub fn stripped(&self) -> HighLevelDecision {
        let mut skill_text = self.skill_text.clone();
        if let Some(u) = self.utterance.as_deref().map(str::trim).filter(|u| !u.is_empty()) {
            while let Some(pos) = skill_text.find(u) {
                skill_text.replace_range(pos..pos + u.len(), " ");
            }
        }
        let skill_text = skill_text.split_whitespace().collect::<Vec<_>>().join(" ");
        HighLevelDecision { skill_text, utterance: self.utterance.clone() }
    }

    /// Whitespace tokens across command and utterance.
    pub fn token_count(&self) -> usize {
        self.skill_text.split_whitespace().count()
            + self.utterance.as_deref().map_or(0, |u| u.split_whitespace().count())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    TableBussing,
    SandwichMaking,
    GroceryShopping,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] =
        [TaskKind::TableBussing, TaskKind::SandwichMaking, TaskKind::GroceryShopping];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::TableBussing => "table_bussing",
            TaskKind::SandwichMaking => "sandwich_making",
            TaskKind::GroceryShopping => "grocery_shopping",
        }
    }

    pub fn robot(self) -> RobotKind {
        match self {
            TaskKind::TableBussing => RobotKind::Ur5e,
            TaskKind::SandwichMaking => RobotKind::BimanualArx,
            TaskKind::GroceryShopping => RobotKind::MobileArx,
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub scene: SceneState,
    pub q: RobotState,
    pub action: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub task: TaskKind,
    pub frames: Vec<Frame>,
    pub segments: Vec<Segment>,
    pub goal_annotation: String,
}

impl Episode {
    pub fn segment_span_secs(&self, seg: &Segment) -> Option<f64> {
        let a = self.frames.get(seg.start_frame)?;
        let b = self.frames.get(seg.end_frame)?;
        Some(b.t - a.t)
    }

    /// Segments must be ordered, non-overlapping and inside the frame range.
    pub fn segments_valid(&self) -> bool {
        let mut last_end: Option<usize> = None;
        for s in &self.segments {
            if s.start_frame > s.end_frame || s.end_frame >= self.frames.len() {
                return false;
            }
            if let Some(e) = last_end {
                if s.start_frame <= e {
                    return false;
                }
            }
            last_end = Some(s.end_frame);
        }
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioType {
    NegativeTask,
    SituatedCorrection,
    SpecificConstraint,
    DirectRequest,
}

impl ScenarioType {
    pub const ALL: [ScenarioType; 4] = [
        ScenarioType::NegativeTask,
        ScenarioType::SituatedCorrection,
        ScenarioType::SpecificConstraint,
        ScenarioType::DirectRequest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioType::NegativeTask => "negative_task",
            ScenarioType::SituatedCorrection => "situated_correction",
            ScenarioType::SpecificConstraint => "specific_constraint",
            ScenarioType::DirectRequest => "direct_request",
        }
    }
}

impl std::str::FromStr for ScenarioType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown scenario type '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseType {
    SimpleConfirmation,
    Clarification,
    ErrorHandling,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInteraction {
    pub episode_id: String,
    pub frame_index: usize,
    pub task: TaskKind,
    pub scene: SceneState,
    pub prior_skills: Vec<String>,
    pub skill_label: String,
    pub scenario_type: ScenarioType,
    pub user_prompt: String,
    pub robot_utterance: Option<String>,
    pub response_type: ResponseType,
}

/// Checks the scene and profile invariants. Returns human-readable
/// violations; an empty list means the scene is well formed.
pub fn validate_scene(scene: &SceneState, profile: &RobotProfile) -> Vec<String> {
    let mut out = Vec::new();
    if !profile.is_consistent() {
        out.push(format!("profile dimensions do not match {}", profile.name.as_str()));
    }
    let mut seen = BTreeSet::new();
    for o in &scene.objects {
        if !seen.insert(&o.id) {
            out.push(format!("duplicate object id {}", o.id));
        }
    }
    let mut per_arm: BTreeMap<Arm, usize> = BTreeMap::new();
    for o in &scene.objects {
        match &o.location {
            Location::Gripper(arm) => {
                if !profile.arms().contains(arm) {
                    out.push(format!("object {} held by absent arm {}", o.id, arm.as_str()));
                }
                *per_arm.entry(*arm).or_insert(0) += 1;
            }
            loc => {
                if !scene.fixtures.location(loc.fixture_name().unwrap_or_default()).is_some_and(|l| &l == loc) {
                    out.push(format!("object {} at unknown fixture {}", o.id, loc));
                }
            }
        }
        if let Some(name) = o.origin.fixture_name() {
            if !scene.fixtures.contains(name) {
                out.push(format!("object {} has unknown origin {}", o.id, o.origin));
            }
        }
        for tag in &o.color_tags {
            if !COLOR_PALETTE.contains(&tag.as_str()) {
                out.push("unknown color tag".to_string());
            }
        }
    }
    if per_arm.values().any(|n| *n > 1) {
        out.push("gripper capacity exceeded".to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(id: &str, name: &str, class: ObjectClass, loc: Location) -> SceneObject {
        SceneObject {
            id: ObjectId::new(id),
            display_name: name.into(),
            object_class: class,
            attributes: BTreeSet::new(),
            color_tags: BTreeSet::new(),
            origin: Location::Surface("table".into()),
            location: loc,
        }
    }

    fn fixtures() -> Fixtures {
        Fixtures {
            surfaces: vec!["table".into()],
            containers: vec!["trash_bin".into(), "bussing_bin".into()],
        }
    }

    #[test]
    fn profile_dimensions() {
        let dims = |k| {
            let p = RobotProfile::for_kind(k);
            (p.config_dim, p.action_dim, p.camera_count)
        };
        assert_eq!(dims(RobotKind::Ur5e), (7, 7, 2));
        assert_eq!(dims(RobotKind::BimanualArx), (14, 14, 3));
        assert_eq!(dims(RobotKind::MobileArx), (14, 16, 3));
    }

    #[test]
    fn two_objects_in_single_gripper() {
        let scene = SceneState {
            objects: vec![
                obj("o1", "plate", ObjectClass::Dish, Location::Gripper(Arm::Single)),
                obj("o2", "fork", ObjectClass::Utensil, Location::Gripper(Arm::Single)),
            ],
            fixtures: fixtures(),
            time: 0.0,
        };
        let v = validate_scene(&scene, &RobotProfile::for_kind(RobotKind::Ur5e));
        assert_eq!(v, vec!["gripper capacity exceeded".to_string()]);
    }

    #[test]
    fn empty_scene_is_valid() {
        let scene = SceneState::default();
        assert!(validate_scene(&scene, &RobotProfile::for_kind(RobotKind::Ur5e)).is_empty());
    }

    #[test]
    fn unknown_color_tag() {
        let mut o = obj("o1", "plate", ObjectClass::Dish, Location::Surface("table".into()));
        o.color_tags.insert("chartreuse-ish".into());
        let scene = SceneState { objects: vec![o], fixtures: fixtures(), time: 0.0 };
        let v = validate_scene(&scene, &RobotProfile::for_kind(RobotKind::Ur5e));
        assert_eq!(v, vec!["unknown color tag".to_string()]);
    }

    #[test]
    fn duplicate_ids_and_bad_fixture() {
        let scene = SceneState {
            objects: vec![
                obj("o1", "plate", ObjectClass::Dish, Location::Surface("table".into())),
                obj("o1", "fork", ObjectClass::Utensil, Location::Container("sink".into())),
            ],
            fixtures: fixtures(),
            time: 0.0,
        };
        let v = validate_scene(&scene, &RobotProfile::for_kind(RobotKind::Ur5e));
        assert_eq!(v.len(), 2, "{v:?}");
    }

    #[test]
    fn decision_strip_removes_merged_utterance() {
        let d = HighLevelDecision {
            skill_text: "Sure, I won't put cheese on it. pick up the lettuce".into(),
            utterance: Some("Sure, I won't put cheese on it.".into()),
        };
        assert_eq!(d.stripped().skill_text, "pick up the lettuce");
        assert_eq!(HighLevelDecision::command("pick up the plate").token_count(), 4);
    }

    #[test]
    fn json_forms() {
        let loc = Location::Gripper(Arm::Left);
        assert_eq!(serde_json::to_string(&loc).unwrap(), r#"{"gripper":"left"}"#);
        let ev = UserEvent { kind: UserEventKind::Interjection { text: "leave it alone".into() }, time: 1.37 };
        let s = serde_json::to_string(&ev).unwrap();
        assert_eq!(s, r#"{"type":"interjection","text":"leave it alone","time":1.37}"#);
        let back: UserEvent = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ev);
        let cmd = SkillCommand {
            skill: Skill::Place { object: Some("bowl".into()), destination: "bussing_bin".into() },
            raw_text: "place bowl to box".into(),
        };
        let s = serde_json::to_string(&cmd).unwrap();
        assert_eq!(
            s,
            r#"{"skill":"place","object":"bowl","destination":"bussing_bin","raw_text":"place bowl to box"}"#
        );
        assert_eq!(serde_json::from_str::<SkillCommand>(&s).unwrap(), cmd);
        assert_eq!(serde_json::to_string(&RobotKind::BimanualArx).unwrap(), "\"bimanual_arx\"");
    }
}
