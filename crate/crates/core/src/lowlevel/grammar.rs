//! Closed command grammar: pattern rules over a noun lexicon.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{ArmSide, Direction, GripperAction, Rotation, Skill, SkillCommand};

const BUNDLED_GRAMMAR: &str = include_str!("../../data/grammar.json");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("out of grammar: '{0}'")]
    OutOfGrammar(String),
    #[error("grammar file: {0}")]
    Load(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Rule {
    pub pattern: String,
    pub ast: Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Grammar {
    pub determiners: Vec<String>,
    pub pronouns: Vec<String>,
    pub objects: Vec<String>,
    pub destinations: BTreeMap<String, String>,
    pub render_destinations: BTreeMap<String, String>,
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

enum Tok<'a> {
    Lit(&'a str),
    Slot(&'a str),
}

/// Lowercases, drops punctuation and collapses whitespace.
pub fn normalize(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| match c {
            '-' | '_' | '/' => ' ',
            c if c.is_alphanumeric() || c.is_whitespace() => c.to_ascii_lowercase(),
            _ => '\0',
        })
        .filter(|c| *c != '\0')
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Grammar {
    pub fn bundled() -> &'static Grammar {
        static G: OnceLock<Grammar> = OnceLock::new();
        G.get_or_init(|| Grammar::from_json(BUNDLED_GRAMMAR).expect("bundled grammar"))
    }

    pub fn from_json(text: &str) -> Result<Grammar, GrammarError> {
        let mut g: Grammar = serde_json::from_str(text).map_err(|e| GrammarError::Load(e.to_string()))?;
        g.determiners.sort_by_key(|d| std::cmp::Reverse(d.len()));
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Grammar, GrammarError> {
        let text = std::fs::read_to_string(path).map_err(|e| GrammarError::Load(e.to_string()))?;
        Grammar::from_json(&text)
    }

    /// Removes leading determiners ("the", "one slice of", ...).
    pub fn strip_determiners(&self, phrase: &str) -> String {
        let mut p = normalize(phrase);
        loop {
            let before = p.len();
            for d in &self.determiners {
                if let Some(rest) = p.strip_prefix(d.as_str()).and_then(|r| r.strip_prefix(' ')) {
                    p = rest.to_string();
                    break;
                }
            }
            if p.len() == before {
                return p;
            }
        }
    }

    pub fn is_object_noun(&self, phrase: &str) -> bool {
        let p = self.strip_determiners(phrase);
        self.objects.iter().any(|o| *o == p)
    }

    pub fn destination(&self, phrase: &str) -> Option<&str> {
        self.destinations.get(&self.strip_determiners(phrase)).map(|s| s.as_str())
    }

    pub fn destination_phrase<'a>(&'a self, fixture: &'a str) -> &'a str {
        self.render_destinations.get(fixture).map(|s| s.as_str()).unwrap_or(fixture)
    }

    fn slot_value(&self, slot: &str, words: &[&str]) -> Option<Value> {
        let phrase = words.join(" ");
        match slot {
            "object" => {
                let p = self.strip_determiners(&phrase);
                if self.pronouns.contains(&p) {
                    Some(Value::Null)
                } else if self.objects.contains(&p) {
                    Some(Value::String(p))
                } else {
                    None
                }
            }
            "destination" => self.destination(&phrase).map(|d| Value::String(d.to_string())),
            "arm" => match phrase.as_str() {
                "left" | "right" => Some(Value::String(phrase)),
                _ => None,
            },
            _ => None,
        }
    }

    fn match_rule(&self, pattern: &[Tok<'_>], words: &[&str], slots: &mut BTreeMap<String, Value>) -> bool {
        match pattern.split_first() {
            None => words.is_empty(),
            Some((Tok::Lit(l), rest)) => {
                words.first() == Some(l) && self.match_rule(rest, &words[1..], slots)
            }
            Some((Tok::Slot(name), rest)) => {
                for n in 1..=words.len() {
                    if let Some(v) = self.slot_value(name, &words[..n]) {
                        slots.insert(name.to_string(), v);
                        if self.match_rule(rest, &words[n..], slots) {
                            return true;
                        }
                        slots.remove(*name);
                    }
                }
                false
            }
        }
    }

    pub fn parse(&self, text: &str) -> Result<SkillCommand, GrammarError> {
        let norm = normalize(text);
        let words: Vec<&str> = norm.split(' ').filter(|w| !w.is_empty()).collect();
        for rule in &self.rules {
            let toks: Vec<Tok<'_>> = rule
                .pattern
                .split(' ')
                .map(|t| match t.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
                    Some(slot) => Tok::Slot(slot),
                    None => Tok::Lit(t),
                })
                .collect();
            let mut slots = BTreeMap::new();
            if self.match_rule(&toks, &words, &mut slots) {
                let ast = fill(&rule.ast, &slots);
                let skill: Skill = serde_json::from_value(ast)
                    .map_err(|e| GrammarError::Load(format!("rule '{}': {e}", rule.pattern)))?;
                return Ok(SkillCommand { skill, raw_text: text.to_string() });
            }
        }
        Err(GrammarError::OutOfGrammar(text.to_string()))
    }

    /// Canonical text for a skill; parses back to the same skill.
    pub fn render(&self, skill: &Skill) -> String {
        match skill {
            Skill::Pick { object } => format!("pick up the {object}"),
            Skill::Place { object: Some(o), destination } if destination == "table" || destination == "shelf" => {
                format!("put {o} back on {}", self.destination_phrase(destination))
            }
            Skill::Place { object: Some(o), destination } => {
                format!("place {o} to {}", self.destination_phrase(destination))
            }
            Skill::Place { object: None, destination } => {
                format!("put it in the {}", self.destination_phrase(destination))
            }
            Skill::Move { direction, arm } => {
                let tail = match direction {
                    Direction::Left => "to the left",
                    Direction::Right => "to the right",
                    Direction::Higher => "higher",
                    Direction::Lower => "lower",
                    Direction::TowardUser => "towards me",
                    Direction::AwayFromUser => "away from me",
                };
                match (arm, direction) {
                    (Some(a), _) => {
                        let side = if *a == ArmSide::Left { "left" } else { "right" };
                        format!("move the {side} arm {tail}")
                    }
                    (None, Direction::Higher) => "go higher".into(),
                    (None, Direction::Lower) => "go lower".into(),
                    (None, _) => format!("move {tail}"),
                }
            }
            Skill::Rotate { rotation: Rotation::Cw } => "rotate clockwise".into(),
            Skill::Rotate { rotation: Rotation::Ccw } => "rotate counterclockwise".into(),
            Skill::Gripper { action: GripperAction::Open } => "open gripper".into(),
            Skill::Gripper { action: GripperAction::Close } => "close gripper".into(),
            Skill::Home => "go back to home position".into(),
            Skill::Done => "done".into(),
        }
    }
}

fn fill(template: &Value, slots: &BTreeMap<String, Value>) -> Value {
    match template {
        Value::String(s) => match s.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
            Some(name) => slots.get(name).cloned().unwrap_or(Value::Null),
            None => Value::String(s.clone()),
        },
        Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), fill(v, slots))).collect()),
        other => other.clone(),
    }
}

pub fn parse_command(text: &str) -> Result<SkillCommand, GrammarError> {
    Grammar::bundled().parse(text)
}

pub fn render_command(skill: &Skill) -> String {
    Grammar::bundled().render(skill)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LISTED: &str = include_str!("../../data/listed_commands.txt");

    #[test]
    fn every_listed_command_parses() {
        let lines: Vec<&str> = LISTED.lines().collect();
        assert_eq!(lines.len(), 50);
        for line in lines {
            let cmd = parse_command(line).unwrap_or_else(|e| panic!("{e}"));
            let again = parse_command(&render_command(&cmd.skill)).unwrap();
            assert_eq!(again.skill, cmd.skill, "{line}");
        }
    }

    #[test]
    fn examples() {
        assert_eq!(
            parse_command("put food container in trash bin").unwrap().skill,
            Skill::Place { object: Some("food container".into()), destination: "trash_bin".into() }
        );
        assert_eq!(parse_command("go back to home position").unwrap().skill, Skill::Home);
        assert!(matches!(parse_command("pick up bermuda triangle"), Err(GrammarError::OutOfGrammar(_))));
        assert_eq!(
            parse_command("throw it in the trash").unwrap().skill,
            Skill::Place { object: None, destination: "trash_bin".into() }
        );
        assert_eq!(
            parse_command("Drop the bowl into the bin.").unwrap().skill,
            Skill::Place { object: Some("bowl".into()), destination: "bussing_bin".into() }
        );
        assert_eq!(
            parse_command("place one slice of cheese on the sandwich").unwrap().skill,
            Skill::Place { object: Some("cheese".into()), destination: "sandwich_stack".into() }
        );
        assert_eq!(
            parse_command("move the right arm higher").unwrap().skill,
            Skill::Move { direction: Direction::Higher, arm: Some(ArmSide::Right) }
        );
    }

    #[test]
    fn catalog_names_are_in_lexicon() {
        let g = Grammar::bundled();
        for cat in crate::simenv::bundled_catalogs() {
            for item in &cat.pool {
                assert!(g.is_object_noun(&item.name), "{}", item.name);
                let head = item.name.rsplit(' ').next().unwrap();
                assert!(g.is_object_noun(head), "{head}");
            }
            for c in cat.containers.iter().chain(&cat.surfaces) {
                assert!(g.render_destinations.contains_key(c), "{c}");
            }
        }
    }

    fn arb_skill() -> impl Strategy<Value = Skill> {
        let g = Grammar::bundled();
        let objects = g.objects.clone();
        let dests: Vec<String> = g.render_destinations.keys().cloned().collect();
        prop_oneof![
            proptest::sample::select(objects.clone()).prop_map(|object| Skill::Pick { object }),
            (proptest::option::of(proptest::sample::select(objects)), proptest::sample::select(dests))
                .prop_map(|(object, destination)| Skill::Place { object, destination }),
            (
                proptest::sample::select(Direction::ALL.to_vec()),
                proptest::option::of(prop_oneof![Just(ArmSide::Left), Just(ArmSide::Right)])
            )
                .prop_map(|(direction, arm)| Skill::Move { direction, arm }),
            prop_oneof![Just(Rotation::Cw), Just(Rotation::Ccw)].prop_map(|rotation| Skill::Rotate { rotation }),
            prop_oneof![Just(GripperAction::Open), Just(GripperAction::Close)]
                .prop_map(|action| Skill::Gripper { action }),
            Just(Skill::Home),
            Just(Skill::Done),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn parse_render_round_trip(skill in arb_skill()) {
            let text = render_command(&skill);
            let parsed = parse_command(&text).unwrap();
            prop_assert_eq!(parsed.skill, skill);
        }
    }
}
