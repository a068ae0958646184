use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    ArmSide, Direction, Episode, Frame, RobotState, SceneObject, SceneState, Segment, Skill, SkillCommand, TaskKind,
};
use crate::highlevel::{decide, parse_goal, DialogueContext};
use crate::lowlevel::{normalize, parse_command, render_command, resolve_object, Executor};
use crate::simenv::{load_task, TaskCatalog};

pub const DEMO_HZ: f64 = 50.0;
/// Chance of an unlabeled corrective nudge after each placement.
pub const NUDGE_PROB: f64 = 0.3;
const MAX_SKILLS: usize = 40;

/// What the demonstrator was asked to do, per task.
pub fn demo_prompts(task: TaskKind) -> &'static [&'static str] {
    match task {
        TaskKind::SandwichMaking => &[
            "make me a sandwich",
            "can you make me a vegetarian sandwich",
            "make me a sandwich with cheese, roast beef, and lettuce",
            "make me a sandwich with ham and tomato",
            "Can you make a sandwich for me? I'm lactose intolerant",
            "make me a sandwich with lettuce, tomato and pickles",
            "make me a sandwich without cheese",
        ],
        TaskKind::GroceryShopping => &[
            "I want a Twix and Skittles",
            "I'm thirsty, get me something to drink",
            "Can you get me something sweet?",
            "get me some chips and a soda can",
            "get me a kitkat, a water bottle and chips",
            "get me a twix, some chips and something to drink",
        ],
        TaskKind::TableBussing => &["clean up the table", "clean up only the trash"],
    }
}

/// How an annotator would phrase a pick.
fn pick_label(task: TaskKind, o: &SceneObject) -> String {
    let name = normalize(&o.display_name);
    if task != TaskKind::SandwichMaking {
        return format!("pick up the {name}");
    }
    match name.as_str() {
        "lettuce" => format!("pick up one piece of {name}"),
        "pickles" => format!("pick up some {name}"),
        _ => format!("pick up one slice of {name}"),
    }
}

struct Recorder {
    frames: Vec<Frame>,
    pad: usize,
}

impl Recorder {
    fn push(&mut self, scene: &SceneState, robot: &RobotState, mut action: Vec<f64>) {
        action.resize(self.pad, 0.0);
        let t = self.frames.len() as f64 / DEMO_HZ;
        self.frames.push(Frame { t, scene: scene.clone(), q: robot.clone(), action });
    }
}

/// Runs one skill to completion, recording a frame per action step.
/// Returns the (first, last) frame indices it covered.
fn run_skill(
    exec: &Executor,
    rec: &mut Recorder,
    scene: &mut SceneState,
    robot: &mut RobotState,
    cmd: &SkillCommand,
    id: u64,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, usize)> {
    let mut plan = exec.begin_skill(scene, robot, cmd, id, rng).ok()?;
    let first = rec.frames.len();
    let mut step = 0;
    while !plan.is_complete() {
        let chunk = exec.next_chunk(&mut plan, robot, step).ok()?;
        step += chunk.actions.len() as u64;
        for a in chunk.actions {
            rec.push(scene, robot, a);
        }
    }
    let (s, r) = exec.finish(&plan, scene, robot).ok()?;
    *scene = s;
    *robot = r;
    Some((first, rec.frames.len() - 1))
}

/// Scripted teleoperation episode: the reference decision rule drives the
/// robot through the task, with occasional single-axis nudges between
/// skills. Only the skills get segment labels.
pub fn demo_episode(task: TaskKind, seed: u64, index: usize) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(index as u64));
    let catalog = TaskCatalog::bundled(task);
    let prompts = demo_prompts(task);
    let prompt = prompts[index % prompts.len()];
    let goal = parse_goal(prompt, &catalog);
    let (mut scene, mut robot, _) = load_task(task, seed.wrapping_add(index as u64));
    let exec = Executor::new(catalog.profile());
    let mut rec = Recorder { frames: Vec::new(), pad: catalog.profile().action_dim };
    rec.push(&scene, &robot, robot.q.clone());

    let ctx = DialogueContext::default();
    let mut segments = Vec::new();
    for id in 0..MAX_SKILLS as u64 {
        let d = decide(&scene, &ctx, &goal);
        let Ok(mut cmd) = parse_command(&d.skill_text) else { break };
        if cmd.skill.is_terminal() {
            break;
        }
        let mut label = d.skill_text.clone();
        let relabel = match &cmd.skill {
            Skill::Pick { object } => resolve_object(&scene, object).ok().map(|o| pick_label(task, o)),
            _ => None,
        };
        if let Some(l) = relabel {
            cmd = parse_command(&l).expect("pick labels are in the grammar");
            label = l;
        }
        let placing = matches!(cmd.skill, Skill::Place { .. });
        let Some((a, b)) = run_skill(&exec, &mut rec, &mut scene, &mut robot, &cmd, id, &mut rng) else { break };
        segments.push(Segment { start_frame: a, end_frame: b, label });
        if placing && rng.gen_bool(NUDGE_PROB) {
            let direction = *Direction::ALL.choose(&mut rng).expect("directions");
            let arm = (catalog.profile().arms().len() > 1)
                .then(|| if rng.gen_bool(0.5) { ArmSide::Left } else { ArmSide::Right });
            let skill = Skill::Move { direction, arm };
            let nudge = SkillCommand { raw_text: render_command(&skill), skill };
            run_skill(&exec, &mut rec, &mut scene, &mut robot, &nudge, 1000 + id, &mut rng);
        }
    }
    rec.push(&scene, &robot, robot.q.clone());
    Episode {
        id: format!("{}-{seed}-{index:03}", task.as_str()),
        task,
        frames: rec.frames,
        segments,
        goal_annotation: prompt.to_string(),
    }
}

pub fn bundled_demos(task: TaskKind, count: usize, seed: u64) -> Vec<Episode> {
    (0..count).map(|i| demo_episode(task, seed, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::extract_motion_primitives;

    #[test]
    fn demos_are_well_formed() {
        for task in [TaskKind::SandwichMaking, TaskKind::GroceryShopping] {
            for ep in bundled_demos(task, 6, 3) {
                assert!(ep.segments_valid(), "{}", ep.id);
                assert!(ep.segments.len() >= 2, "{} {}", ep.id, ep.segments.len());
                for s in &ep.segments {
                    parse_command(&s.label).unwrap();
                }
                let last = ep.frames.last().unwrap();
                assert!(last.scene.held().next().is_none());
            }
        }
    }

    #[test]
    fn nudges_are_found_and_skills_are_not() {
        let mut found = 0;
        for ep in bundled_demos(TaskKind::SandwichMaking, 8, 1) {
            let prims = extract_motion_primitives(&ep);
            found += prims.len();
            for p in &prims {
                assert!(parse_command(&p.label).unwrap().skill.is_primitive());
                for s in &ep.segments {
                    assert!(p.end_frame < s.start_frame || p.start_frame > s.end_frame, "{p:?} overlaps {s:?}");
                }
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn deterministic() {
        assert_eq!(demo_episode(TaskKind::GroceryShopping, 9, 2), demo_episode(TaskKind::GroceryShopping, 9, 2));
    }
}
