use crate::domain::{
    ArmSide, Direction, Episode, RobotProfile, Rotation, Segment, Skill, ARM_BLOCK,
};
use crate::lowlevel::render_command;

/// Tuning for [`extract_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionParams {
    /// Minimum net displacement on the dominant dimension.
    pub threshold: f64,
    /// Dominant dimension must beat every other one by this factor.
    pub ratio: f64,
    pub min_frames: usize,
    pub eps: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams { threshold: 0.05, ratio: 3.0, min_frames: 2, eps: 1e-9 }
    }
}

pub fn extract_motion_primitives(ep: &Episode) -> Vec<Segment> {
    extract_with(ep, &RobotProfile::for_kind(ep.task.robot()), &MotionParams::default())
}

/// Label for net motion along one action dimension, if the dimension has one.
pub fn dim_phrase(profile: &RobotProfile, dim: usize, sign: f64) -> Option<String> {
    let arms = profile.arms();
    let block = dim / ARM_BLOCK;
    if block >= arms.len() {
        return None;
    }
    let side = match (arms.len(), block) {
        (1, _) => None,
        (_, 0) => Some(ArmSide::Left),
        _ => Some(ArmSide::Right),
    };
    let positive = sign > 0.0;
    let skill = match dim % ARM_BLOCK {
        0 => Skill::Move { direction: if positive { Direction::Right } else { Direction::Left }, arm: side },
        1 => Skill::Move {
            direction: if positive { Direction::AwayFromUser } else { Direction::TowardUser },
            arm: side,
        },
        2 => Skill::Move { direction: if positive { Direction::Higher } else { Direction::Lower }, arm: side },
        5 => Skill::Rotate { rotation: if positive { Rotation::Ccw } else { Rotation::Cw } },
        _ => return None,
    };
    Some(render_command(&skill))
}

fn gripper_dims(profile: &RobotProfile, dim: usize) -> Vec<usize> {
    let mut g = profile.gripper_dims();
    g.retain(|d| *d < dim);
    g
}

/// Finds maximal frame windows where a single non-gripper action dimension
/// carries the motion. A frame belongs to a window when its step on that
/// dimension dominates every other step and grippers hold still; the window
/// is kept if its net displacement also dominates and clears the threshold.
pub fn extract_with(ep: &Episode, profile: &RobotProfile, params: &MotionParams) -> Vec<Segment> {
    let frames = &ep.frames;
    if frames.len() < 2 {
        return Vec::new();
    }
    let dim = frames.iter().map(|f| f.action.len()).min().unwrap_or(0);
    let grip = gripper_dims(profile, dim);
    let free: Vec<usize> = (0..dim).filter(|d| !grip.contains(d)).collect();

    let step_class = |t: usize| -> Option<(usize, bool)> {
        let (a, b) = (&frames[t - 1].action, &frames[t].action);
        if grip.iter().any(|g| (b[*g] - a[*g]).abs() > params.eps) {
            return None;
        }
        let (best, mag) = free
            .iter()
            .map(|d| (*d, (b[*d] - a[*d]).abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))?;
        if mag <= params.eps {
            return None;
        }
        let rest = free.iter().filter(|d| **d != best).map(|d| (b[*d] - a[*d]).abs()).fold(0.0, f64::max);
        (mag >= params.ratio * rest).then_some((best, b[best] > a[best]))
    };

    let mut out = Vec::new();
    let mut t = 1;
    while t < frames.len() {
        let Some(class) = step_class(t) else {
            t += 1;
            continue;
        };
        let start = t;
        while t + 1 < frames.len() && step_class(t + 1) == Some(class) {
            t += 1;
        }
        let end = t;
        t += 1;
        if end + 1 - start < params.min_frames {
            continue;
        }
        let (before, after) = (&frames[start - 1].action, &frames[end].action);
        let net = after[class.0] - before[class.0];
        let others = free
            .iter()
            .filter(|d| **d != class.0)
            .map(|d| (after[*d] - before[*d]).abs())
            .fold(0.0, f64::max);
        if net.abs() < params.threshold || net.abs() < params.ratio * others {
            continue;
        }
        if let Some(label) = dim_phrase(profile, class.0, net) {
            out.push(Segment { start_frame: start, end_frame: end, label });
        }
    }
    out
}
