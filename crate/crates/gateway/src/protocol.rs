use hilo_core::domain::{RobotState, SceneState, TaskKind};
use hilo_core::highlevel::PolicyKind;
use hilo_core::orchestrator::{LogKind, LogRecord};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMsg {
    StartSession {
        task: TaskKind,
        #[serde(deserialize_with = "policy_alias")]
        policy: PolicyKind,
        #[serde(default)]
        seed: u64,
    },
    Prompt {
        text: String,
    },
    Interjection {
        text: String,
    },
    Resume,
    EvalMark {
        decision_id: u64,
        correct: bool,
    },
    Pause,
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    StateUpdate {
        scene: SceneState,
        robot: RobotState,
        time: f64,
    },
    CommandIssued {
        id: u64,
        skill_text: String,
    },
    Utterance {
        text: String,
    },
    SkillDone {
        id: u64,
        skill_text: String,
    },
    Metrics {
        ia: Option<f64>,
        tp: Option<f64>,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl ServerMsg {
    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        ServerMsg::Error { code: code.to_string(), detail: detail.into() }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Accepts the full policy names plus short forms.
pub fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    match s {
        "reference" => Ok(PolicyKind::HierarchicalReference),
        "flat" => Ok(PolicyKind::FlatPassthrough),
        "oracle" => Ok(PolicyKind::OracleScripted),
        "remote" => Ok(PolicyKind::RemoteBackend),
        "no_constraints" => Ok(PolicyKind::ReferenceNoConstraints),
        other => other.parse(),
    }
}

fn policy_alias<'de, D: serde::Deserializer<'de>>(d: D) -> Result<PolicyKind, D::Error> {
    let s = String::deserialize(d)?;
    parse_policy(&s).map_err(serde::de::Error::custom)
}

/// Turns log records into outgoing frames. Live sessions and replays both
/// go through this, so the two streams match byte for byte.
#[derive(Clone, Debug, Default)]
pub struct Framer {
    marks: Vec<bool>,
}

fn state(p: &Value, time: f64) -> Option<ServerMsg> {
    Some(ServerMsg::StateUpdate {
        scene: serde_json::from_value(p.get("scene")?.clone()).ok()?,
        robot: serde_json::from_value(p.get("robot")?.clone()).ok()?,
        time,
    })
}

fn text(p: &Value, key: &str) -> String {
    p[key].as_str().unwrap_or_default().to_string()
}

impl Framer {
    pub fn ia(&self) -> Option<f64> {
        (!self.marks.is_empty())
            .then(|| self.marks.iter().filter(|m| **m).count() as f64 / self.marks.len() as f64)
    }

    pub fn frames(&mut self, r: &LogRecord) -> Vec<ServerMsg> {
        let p = &r.payload;
        match r.kind {
            LogKind::SessionStart | LogKind::UserEvent => state(p, r.time).into_iter().collect(),
            LogKind::CommandIssued if p["action"] == "start" => {
                vec![ServerMsg::CommandIssued { id: p["id"].as_u64().unwrap_or(0), skill_text: text(p, "skill_text") }]
            }
            LogKind::Utterance => vec![ServerMsg::Utterance { text: text(p, "text") }],
            LogKind::SkillDone => {
                let mut v = vec![ServerMsg::SkillDone {
                    id: p["command_id"].as_u64().unwrap_or(0),
                    skill_text: text(p, "skill_text"),
                }];
                v.extend(state(p, r.time));
                v
            }
            LogKind::SkillFailed => vec![ServerMsg::error(
                p["reason"].as_str().unwrap_or("skill_failed"),
                format!("{}: {}", text(p, "skill_text"), text(p, "detail")),
            )],
            LogKind::EvalMark => {
                self.marks.push(p["correct"].as_bool().unwrap_or(false));
                vec![ServerMsg::Metrics { ia: self.ia(), tp: None }]
            }
            LogKind::TrialEnd => {
                let mut v: Vec<ServerMsg> = state(p, r.time).into_iter().collect();
                v.push(ServerMsg::Metrics { ia: self.ia(), tp: p["task_progress"].as_f64() });
                v
            }
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let m: ClientMsg =
            serde_json::from_str(r#"{"type":"start_session","task":"table_bussing","policy":"reference","seed":3}"#)
                .unwrap();
        assert_eq!(
            m,
            ClientMsg::StartSession { task: TaskKind::TableBussing, policy: PolicyKind::HierarchicalReference, seed: 3 }
        );
        let m: ClientMsg = serde_json::from_str(r#"{"type":"resume"}"#).unwrap();
        assert_eq!(m, ClientMsg::Resume);
        let m: ClientMsg = serde_json::from_str(r#"{"type":"eval_mark","decision_id":2,"correct":false}"#).unwrap();
        assert_eq!(m, ClientMsg::EvalMark { decision_id: 2, correct: false });
        assert!(serde_json::from_str::<ClientMsg>(r#"{"type":"prompt"}"#).is_err());
        assert!(serde_json::from_str::<ClientMsg>(r#"{"type":"dance"}"#).is_err());
    }

    #[test]
    fn server_messages_are_tagged() {
        let t = ServerMsg::Metrics { ia: Some(0.5), tp: None }.to_text();
        assert_eq!(t, r#"{"type":"metrics","ia":0.5,"tp":null}"#);
        let t = ServerMsg::error("bad_message", "x").to_text();
        assert_eq!(t, r#"{"type":"error","code":"bad_message","detail":"x"}"#);
    }

    #[test]
    fn marks_accumulate() {
        let mut f = Framer::default();
        let mk = |c: bool| LogRecord {
            seq: 0,
            time: 0.0,
            kind: LogKind::EvalMark,
            payload: serde_json::json!({ "decision_id": 0, "correct": c }),
        };
        f.frames(&mk(true));
        let out = f.frames(&mk(false));
        assert_eq!(out, vec![ServerMsg::Metrics { ia: Some(0.5), tp: None }]);
    }
}
