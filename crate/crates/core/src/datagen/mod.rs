//! Synthetic interaction data: demo episodes, motion-primitive extraction,
//! template-based prompt generation and record validation.

mod demos;
mod motion;

pub use demos::{bundled_demos, demo_episode, demo_prompts, DEMO_HZ, NUDGE_PROB};
pub use motion::{dim_phrase, extract_motion_primitives, extract_with, MotionParams};

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{
    name_matches, Attribute, Episode, HighLevelDecision, Overrides, ResponseType, RobotProfile, ScenarioType,
    SceneObject, SceneState, Skill, SyntheticInteraction, TaskKind,
};
use crate::eval::{auto_judge, JudgeContext};
use crate::highlevel::{mentions, parse_goal, Term};
use crate::lowlevel::{normalize, parse_command, resolve_object, Grammar};
use crate::simenv::{bundled_catalogs, TaskCatalog};

const BUNDLED_TEMPLATES: &str = include_str!("../../data/templates.json");

pub const RESPONSE_WEIGHTS: [(ResponseType, f64); 4] = [
    (ResponseType::SimpleConfirmation, 0.5),
    (ResponseType::Clarification, 0.2),
    (ResponseType::ErrorHandling, 0.1),
    (ResponseType::None, 0.2),
];

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("no template for {0:?} / {1}")]
    NoTemplate(TaskKind, &'static str),
    #[error("no {1} template fits '{2}' in {0:?}")]
    Inapplicable(TaskKind, &'static str, String),
    #[error("template bank: {0}")]
    Templates(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillKind {
    Pick,
    Place,
    Primitive,
    Any,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub tasks: Vec<TaskKind>,
    pub scenario: ScenarioType,
    pub kind: SkillKind,
    /// Target must carry this attribute.
    #[serde(default)]
    pub attr: Option<Attribute>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub not_name: Option<String>,
    #[serde(default)]
    pub needs_y: bool,
    #[serde(default)]
    pub needs_prior: bool,
    pub prompt: String,
    #[serde(default)]
    pub confirm: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateBank {
    pub templates: Vec<Template>,
}

impl TemplateBank {
    pub fn bundled() -> &'static TemplateBank {
        static B: OnceLock<TemplateBank> = OnceLock::new();
        B.get_or_init(|| TemplateBank::from_json(BUNDLED_TEMPLATES).expect("bundled templates"))
    }

    pub fn from_json(text: &str) -> Result<TemplateBank, DatagenError> {
        let templates: Vec<Template> = serde_json::from_str(text).map_err(|e| DatagenError::Templates(e.to_string()))?;
        Ok(TemplateBank { templates })
    }

    pub fn load(path: &Path) -> Result<TemplateBank, DatagenError> {
        TemplateBank::from_json(&fs::read_to_string(path)?)
    }

    pub fn get(&self, task: TaskKind, scenario: ScenarioType) -> Vec<&Template> {
        self.templates.iter().filter(|t| t.scenario == scenario && t.tasks.contains(&task)).collect()
    }
}

/// One labeled segment with what came before it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentContext {
    pub episode_id: String,
    pub frame_index: usize,
    pub task: TaskKind,
    pub scene: SceneState,
    pub prior_skills: Vec<String>,
    pub skill_label: String,
}

/// Labeled and extracted segments of an episode, in frame order.
pub fn segment_contexts(ep: &Episode) -> Vec<SegmentContext> {
    let mut segs = ep.segments.clone();
    segs.extend(extract_motion_primitives(ep));
    segs.sort_by_key(|s| (s.start_frame, s.end_frame));
    let mut prior = Vec::new();
    let mut out = Vec::new();
    for s in segs {
        let Some(frame) = ep.frames.get(s.start_frame) else { continue };
        out.push(SegmentContext {
            episode_id: ep.id.clone(),
            frame_index: s.start_frame,
            task: ep.task,
            scene: frame.scene.clone(),
            prior_skills: prior.clone(),
            skill_label: s.label.clone(),
        });
        prior.push(s.label);
    }
    out
}

/// The object a skill label acts on, if any.
pub fn skill_target<'a>(scene: &'a SceneState, label: &str) -> Option<&'a SceneObject> {
    match parse_command(label).ok()?.skill {
        Skill::Pick { object } => resolve_object(scene, &object).ok(),
        Skill::Place { object, .. } => {
            let held: Vec<&SceneObject> = scene.held().collect();
            object
                .as_ref()
                .and_then(|p| held.iter().copied().find(|o| name_matches(&o.display_name, p)))
                .or(held.first().copied())
        }
        _ => None,
    }
}

fn skill_kind(label: &str) -> Option<SkillKind> {
    match parse_command(label).ok()?.skill {
        Skill::Pick { .. } => Some(SkillKind::Pick),
        Skill::Place { .. } => Some(SkillKind::Place),
        s if s.is_primitive() => Some(SkillKind::Primitive),
        _ => None,
    }
}

/// Objects a prior pick already acted on: moved away from where they started.
fn touched_by<'a>(scene: &'a SceneState, label: &str) -> Option<&'a SceneObject> {
    let Skill::Pick { object } = parse_command(label).ok()?.skill else { return None };
    let p = Grammar::bundled().strip_determiners(&object);
    scene.objects.iter().find(|o| o.has_moved() && name_matches(&o.display_name, &p))
}

fn fits(t: &Template, ctx: &SegmentContext, kind: SkillKind, target: Option<&SceneObject>) -> bool {
    if t.kind != SkillKind::Any && t.kind != kind {
        return false;
    }
    if t.needs_prior && ctx.prior_skills.is_empty() {
        return false;
    }
    let name = target.map(|o| normalize(&o.display_name));
    if t.prompt.contains("{x}") && name.is_none() {
        return false;
    }
    if let Some(n) = &t.name {
        if name.as_deref() != Some(n.as_str()) {
            return false;
        }
    }
    if let Some(n) = &t.not_name {
        if name.as_deref() == Some(n.as_str()) {
            return false;
        }
    }
    if let Some(a) = t.attr {
        if !target.is_some_and(|o| o.attributes.contains(&a)) {
            return false;
        }
    }
    true
}

/// Other objects a negative clause could name: untouched, not the target,
/// not bread for sandwiches.
fn y_candidates(ctx: &SegmentContext, target: Option<&SceneObject>) -> Vec<String> {
    let x = target.map(|o| normalize(&o.display_name));
    let mut names: BTreeSet<String> = BTreeSet::new();
    for o in &ctx.scene.objects {
        let n = normalize(&o.display_name);
        if o.has_moved() || o.is_held() || Some(&n) == x.as_ref() {
            continue;
        }
        if ctx.task == TaskKind::SandwichMaking && n == "bread" {
            continue;
        }
        names.insert(n);
    }
    names.into_iter().collect()
}

fn fill(text: &str, x: Option<&str>, y: Option<&str>, label: &str) -> String {
    let mut s = text.replace("{label}", label);
    if let Some(x) = x {
        s = s.replace("{x}", x);
    }
    if let Some(y) = y {
        s = s.replace("{y}", y);
    }
    s
}

fn utterance<R: Rng>(kind: ResponseType, t: &Template, x: Option<&str>, y: Option<&str>, rng: &mut R) -> Option<String> {
    let pick = |opts: &[&str], rng: &mut R| opts.choose(rng).map(|s| s.to_string()).expect("options");
    let text = match kind {
        ResponseType::None => return None,
        ResponseType::SimpleConfirmation => match &t.confirm {
            Some(c) => c.clone(),
            None if x.is_some() => pick(&["Sure.", "Okay!", "Sure, getting the {x}.", "Got it, the {x}."], rng),
            None => pick(&["Sure.", "Okay!", "Got it."], rng),
        },
        ResponseType::Clarification if x.is_some() => {
            pick(&["Just to check, you mean the {x}?", "Do you want the {x}? I'll grab it."], rng)
        }
        ResponseType::Clarification => pick(&["A little more, like this?", "Is this about right?"], rng),
        ResponseType::ErrorHandling => pick(
            &["Sorry, I slipped. Let me try that again.", "Oops, I missed it. Trying again.", "Sorry, let me redo that."],
            rng,
        ),
    };
    Some(fill(&text, x, y, ""))
}

/// Writes one synthetic exchange for a segment. Templates are tried in
/// random order; the first whose record validates and round-trips wins.
pub fn generate_interaction<R: Rng>(
    ctx: &SegmentContext,
    scenario: ScenarioType,
    rng: &mut R,
) -> Result<SyntheticInteraction, DatagenError> {
    generate_with(TemplateBank::bundled(), ctx, scenario, rng)
}

pub fn generate_with<R: Rng>(
    bank: &TemplateBank,
    ctx: &SegmentContext,
    scenario: ScenarioType,
    rng: &mut R,
) -> Result<SyntheticInteraction, DatagenError> {
    let all = bank.get(ctx.task, scenario);
    if all.is_empty() {
        return Err(DatagenError::NoTemplate(ctx.task, scenario.as_str()));
    }
    let weights = WeightedIndex::new(RESPONSE_WEIGHTS.iter().map(|(_, w)| *w)).expect("weights");
    let response_type = RESPONSE_WEIGHTS[weights.sample(rng)].0;
    let inapplicable = || DatagenError::Inapplicable(ctx.task, scenario.as_str(), ctx.skill_label.clone());
    let kind = skill_kind(&ctx.skill_label).ok_or_else(inapplicable)?;
    let target = skill_target(&ctx.scene, &ctx.skill_label);
    let x = target.map(|o| normalize(&o.display_name));
    let mut ys = y_candidates(ctx, target);
    ys.shuffle(rng);
    let mut candidates: Vec<&Template> = all.into_iter().filter(|t| fits(t, ctx, kind, target)).collect();
    candidates.shuffle(rng);

    for t in candidates {
        let y_options: Vec<Option<&str>> =
            if t.needs_y { ys.iter().map(|y| Some(y.as_str())).collect() } else { vec![None] };
        for y in y_options {
            let prompt = fill(&t.prompt, x.as_deref(), y, &ctx.skill_label);
            let record = SyntheticInteraction {
                episode_id: ctx.episode_id.clone(),
                frame_index: ctx.frame_index,
                task: ctx.task,
                scene: ctx.scene.clone(),
                prior_skills: ctx.prior_skills.clone(),
                skill_label: ctx.skill_label.clone(),
                scenario_type: scenario,
                user_prompt: prompt,
                robot_utterance: utterance(response_type, t, x.as_deref(), y, rng),
                response_type,
            };
            if validate_interaction(&record).is_empty() && round_trip_consistent(&record) {
                return Ok(record);
            }
        }
    }
    Err(inapplicable())
}

fn catalog(task: TaskKind) -> TaskCatalog {
    TaskCatalog::bundled(task)
}

/// Returns every rule the record breaks; empty means it is usable.
pub fn validate_interaction(r: &SyntheticInteraction) -> Vec<String> {
    let mut out = Vec::new();
    match (&r.response_type, &r.robot_utterance) {
        (ResponseType::None, Some(_)) => out.push("response type none with an utterance".to_string()),
        (ResponseType::None, None) => {}
        (_, None) => out.push("missing utterance".to_string()),
        (_, Some(u)) if u.trim().is_empty() => out.push("empty utterance".to_string()),
        _ => {}
    }
    if r.user_prompt.trim().is_empty() {
        out.push("empty prompt".to_string());
    }
    let Ok(cmd) = parse_command(&r.skill_label) else {
        out.push(format!("skill label '{}' outside grammar", r.skill_label));
        return out;
    };
    if matches!(cmd.skill, Skill::Pick { .. } | Skill::Place { .. }) && skill_target(&r.scene, &r.skill_label).is_none() {
        out.push(format!("skill label '{}' names nothing in the scene", r.skill_label));
    }

    let own = catalog(r.task);
    for other in bundled_catalogs() {
        for m in mentions(&r.user_prompt, &other) {
            let Term::Name(n) = &m.term else { continue };
            let known = own.pool.iter().any(|i| name_matches(&i.name, n))
                || r.scene.objects.iter().any(|o| name_matches(&o.display_name, n));
            if !known {
                out.push(format!("prompt names '{n}', which is not in the scene or catalog"));
            }
        }
    }

    let goal = parse_goal(&r.user_prompt, &own);
    let ov = Overrides::none();
    for p in &r.prior_skills {
        if let Some(o) = touched_by(&r.scene, p) {
            if goal.is_excluded(o, &ov) {
                out.push(format!("prompt rules out '{}', which already ran", p));
            }
        }
    }
    if let Some(o) = skill_target(&r.scene, &r.skill_label) {
        if goal.is_excluded(o, &ov) {
            out.push(format!("prompt rules out the labeled skill '{}'", r.skill_label));
        }
    }
    out
}

/// Reading the prompt back must make the labeled skill a correct next step.
/// Primitive corrections must carry the command itself.
pub fn round_trip_consistent(r: &SyntheticInteraction) -> bool {
    let Ok(cmd) = parse_command(&r.skill_label) else { return false };
    if cmd.skill.is_primitive() {
        let p = format!(" {} ", normalize(&r.user_prompt));
        return p.contains(&format!(" {} ", normalize(&r.skill_label)));
    }
    let goal = parse_goal(&r.user_prompt, &catalog(r.task));
    let arms = RobotProfile::for_kind(r.task.robot()).arms().len();
    let jc = JudgeContext { overrides: Overrides::none(), repair: None, arms };
    auto_judge(&HighLevelDecision::command(r.skill_label.clone()), &goal, &r.scene, &jc)
}

fn sample_seed(seed: u64, episode: &str, frame: usize, sample: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(episode.as_bytes());
    h.update((frame as u64).to_le_bytes());
    h.update((sample as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// `per_segment` records for every segment. The scenario is drawn uniformly
/// from `scenarios`; if no template fits the segment, the other scenarios
/// are tried in random order and the sample is dropped when none fit.
/// Output order is (episode, frame, sample) regardless of thread count.
pub fn build_dataset(
    episodes: &[Episode],
    per_segment: usize,
    seed: u64,
    scenarios: &[ScenarioType],
) -> Vec<SyntheticInteraction> {
    let contexts: Vec<SegmentContext> = episodes.par_iter().flat_map_iter(segment_contexts).collect();
    let mut keyed: Vec<((String, usize, usize), SyntheticInteraction)> = contexts
        .par_iter()
        .flat_map_iter(|ctx| {
            (0..per_segment).filter_map(move |k| {
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, &ctx.episode_id, ctx.frame_index, k));
                let mut order: Vec<ScenarioType> = scenarios.to_vec();
                let first = *order.choose(&mut rng)?;
                order.retain(|s| *s != first);
                order.shuffle(&mut rng);
                std::iter::once(first)
                    .chain(order)
                    .find_map(|s| generate_interaction(ctx, s, &mut rng).ok())
                    .map(|r| ((ctx.episode_id.clone(), ctx.frame_index, k), r))
            })
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.into_iter().map(|(_, r)| r).collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("serializable"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<(), DatagenError> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_jsonl(items).as_bytes())?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatagenError> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatagenError::Parse { line: i + 1, detail: e.to_string() })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Location;
    use std::collections::BTreeMap;

    fn ctx_for(task: TaskKind, label: &str, prior: &[&str], seed: u64) -> SegmentContext {
        let (scene, _, _) = crate::simenv::load_task(task, seed);
        SegmentContext {
            episode_id: "t".into(),
            frame_index: 0,
            task,
            scene,
            prior_skills: prior.iter().map(|s| s.to_string()).collect(),
            skill_label: label.into(),
        }
    }

    fn prompts(ctx: &SegmentContext, s: ScenarioType) -> BTreeMap<String, Option<String>> {
        (0..200)
            .filter_map(|i| generate_interaction(ctx, s, &mut ChaCha8Rng::seed_from_u64(i)).ok())
            .map(|r| (r.user_prompt, r.robot_utterance))
            .collect()
    }

    fn on_stack(ctx: &mut SegmentContext, name: &str) {
        let o = ctx.scene.objects.iter_mut().find(|o| o.display_name == name && !o.has_moved()).unwrap();
        o.location = Location::Container("sandwich_stack".into());
    }

    #[test]
    fn lettuce_request() {
        let mut ctx = ctx_for(TaskKind::SandwichMaking, "pick up one piece of lettuce", &[], 0);
        on_stack(&mut ctx, "bread");
        ctx.prior_skills = vec!["pick up one slice of bread".into(), "place bread to sandwich".into()];
        let ps = prompts(&ctx, ScenarioType::DirectRequest);
        assert!(ps.contains_key("Can you add some lettuce for me?"), "{ps:?}");
    }

    #[test]
    fn lactose_constraint() {
        let ctx = ctx_for(TaskKind::SandwichMaking, "pick up one slice of bread", &[], 0);
        let ps = prompts(&ctx, ScenarioType::SpecificConstraint);
        let lactose = "Can you make a sandwich for me? I'm lactose intolerant";
        assert!(ps.contains_key(lactose), "{ps:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let confirmed = (0..200).find_map(|_| {
            let r = generate_interaction(&ctx, ScenarioType::SpecificConstraint, &mut rng).ok()?;
            (r.user_prompt == lactose && r.response_type == ResponseType::SimpleConfirmation).then_some(r)
        });
        assert_eq!(confirmed.unwrap().robot_utterance.as_deref(), Some("Sure, I won't put cheese on it."));
    }

    #[test]
    fn no_dairy_prompt_after_cheese() {
        let mut ctx = ctx_for(TaskKind::SandwichMaking, "pick up one piece of lettuce", &[], 1);
        on_stack(&mut ctx, "bread");
        on_stack(&mut ctx, "cheese");
        ctx.prior_skills =
            ["pick up one slice of bread", "place bread to sandwich", "pick up one slice of cheese", "place cheese to sandwich"]
                .map(String::from)
                .to_vec();
        for p in prompts(&ctx, ScenarioType::SpecificConstraint).keys() {
            assert!(!p.contains("lactose"), "{p}");
        }
    }

    #[test]
    fn kitkat_is_sweet() {
        let ctx = ctx_for(TaskKind::GroceryShopping, "pick up the kitkat", &[], 0);
        let ps = prompts(&ctx, ScenarioType::DirectRequest);
        assert!(ps.keys().any(|p| p.contains("something sweet")), "{ps:?}");
    }

    #[test]
    fn bussing_has_no_templates() {
        let ctx = ctx_for(TaskKind::TableBussing, "pick up the paper cup", &[], 0);
        let e = generate_interaction(&ctx, ScenarioType::DirectRequest, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(e, DatagenError::NoTemplate(TaskKind::TableBussing, "direct_request")));
    }

    #[test]
    fn primitive_correction_carries_command() {
        let ctx = ctx_for(TaskKind::SandwichMaking, "move the right arm to the left", &[], 0);
        let r = generate_interaction(&ctx, ScenarioType::SituatedCorrection, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(r.user_prompt.contains("move the right arm to the left"));
        assert!(generate_interaction(&ctx, ScenarioType::DirectRequest, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn validator_catches_bad_records() {
        let mut ctx = ctx_for(TaskKind::SandwichMaking, "pick up one slice of cheese", &[], 0);
        on_stack(&mut ctx, "bread");
        let mut r = generate_interaction(&ctx, ScenarioType::DirectRequest, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(validate_interaction(&r).is_empty());
        r.user_prompt = "Can you make a sandwich for me? I'm lactose intolerant".into();
        assert!(!validate_interaction(&r).is_empty());
        r.user_prompt = "Can you add a kitkat?".into();
        assert!(validate_interaction(&r).iter().any(|v| v.contains("kitkat")));
        r.user_prompt = "Can you add some lettuce?".into();
        r.skill_label = "juggle the cheese".into();
        assert!(validate_interaction(&r).iter().any(|v| v.contains("grammar")));
        r.skill_label = "pick up one slice of cheese".into();
        r.response_type = ResponseType::None;
        r.robot_utterance = Some("Sure.".into());
        assert!(!validate_interaction(&r).is_empty());
    }

    #[test]
    fn dataset_is_deterministic_and_valid() {
        let mut eps = bundled_demos(TaskKind::SandwichMaking, 3, 0);
        eps.extend(bundled_demos(TaskKind::GroceryShopping, 3, 0));
        let a = build_dataset(&eps, 3, 11, &ScenarioType::ALL);
        let b = build_dataset(&eps, 3, 11, &ScenarioType::ALL);
        assert_eq!(to_jsonl(&a), to_jsonl(&b));
        let segs: usize = eps.iter().map(|e| segment_contexts(e).len()).sum();
        assert_eq!(a.len(), segs * 3);
        for r in &a {
            assert!(validate_interaction(r).is_empty(), "{r:?}");
            assert!(round_trip_consistent(r), "{r:?}");
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let eps = bundled_demos(TaskKind::GroceryShopping, 1, 5);
        let recs = build_dataset(&eps, 2, 1, &[ScenarioType::DirectRequest]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        write_jsonl(&recs, &p).unwrap();
        let back: Vec<SyntheticInteraction> = read_jsonl(&p).unwrap();
        assert_eq!(back, recs);
        fs::write(&p, "{\"episode_id\": 1\n").unwrap();
        let e = read_jsonl::<SyntheticInteraction>(&p).unwrap_err();
        assert!(matches!(e, DatagenError::Parse { line: 1, .. }));
    }
}
