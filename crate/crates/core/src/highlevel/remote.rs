//! Adapter that asks an HTTP endpoint for each decision.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{pick_text, Observation, Policy, PolicyKind, PolicyOutput, HOME_TEXT};
use crate::domain::{HighLevelDecision, RobotState, SceneState, TaskKind, UserEvent, UserEventKind};
use crate::lowlevel::Grammar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_timeout() -> u64 {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Views {
    pub scene: SceneState,
    pub robot: RobotState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub task: TaskKind,
    pub views: Views,
    pub active_prompt: String,
    pub interjections: Vec<String>,
    pub prior_skills: Vec<String>,
    pub allowed_skills: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteReply {
    pub skill_text: String,
    #[serde(default)]
    pub utterance: Option<String>,
}

/// Candidate commands offered to the backend: a pick for every object, a
/// place into every fixture, and the grammar's fixed primitives.
pub fn allowed_skills(scene: &SceneState) -> Vec<String> {
    let g = Grammar::bundled();
    let mut out: Vec<String> = scene.by_id().into_iter().map(pick_text).collect();
    for f in scene.fixtures.containers.iter().chain(&scene.fixtures.surfaces) {
        out.push(format!("put it in the {}", g.destination_phrase(f)));
    }
    out.extend(
        [
            "move to the left",
            "move to the right",
            "go higher",
            "go lower",
            "move towards me",
            "move away from me",
            "rotate clockwise",
            "rotate counterclockwise",
            "open gripper",
            "close gripper",
            HOME_TEXT,
        ]
        .map(String::from),
    );
    out
}

pub struct RemotePolicy {
    pub task: TaskKind,
    pub config: RemoteConfig,
    pub active_prompt: String,
    pub interjections: Vec<String>,
    agent: ureq::Agent,
}

impl RemotePolicy {
    pub fn new(task: TaskKind, config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_millis(config.timeout_ms)).build();
        RemotePolicy { task, config, active_prompt: String::new(), interjections: Vec::new(), agent }
    }

    pub fn request(&self, obs: &Observation<'_>) -> RemoteRequest {
        RemoteRequest {
            task: self.task,
            views: Views { scene: obs.scene.clone(), robot: obs.robot.clone() },
            active_prompt: self.active_prompt.clone(),
            interjections: self.interjections.clone(),
            prior_skills: obs.prior_skills.to_vec(),
            allowed_skills: allowed_skills(obs.scene),
        }
    }

    pub fn remote_decide(&self, req: &RemoteRequest) -> Result<HighLevelDecision, String> {
        let resp = self.agent.post(&self.config.endpoint).send_json(req).map_err(|e| match e {
            ureq::Error::Transport(t) if t.kind() == ureq::ErrorKind::Io => format!("backend_timeout: {t}"),
            other => format!("backend_error: {other}"),
        })?;
        let reply: RemoteReply = resp.into_json().map_err(|e| format!("malformed_reply: {e}"))?;
        Ok(HighLevelDecision { skill_text: reply.skill_text, utterance: reply.utterance })
    }
}

impl Policy for RemotePolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::RemoteBackend
    }

    fn on_user_event(&mut self, event: &UserEvent, _obs: &Observation<'_>) {
        match &event.kind {
            UserEventKind::Prompt { text } => {
                self.active_prompt = text.clone();
                self.interjections.clear();
            }
            UserEventKind::Interjection { text } => self.interjections.push(text.clone()),
            UserEventKind::Resume => {
                self.interjections.pop();
            }
        }
    }

    fn decide(&mut self, obs: &Observation<'_>) -> PolicyOutput {
        match self.remote_decide(&self.request(obs)) {
            Ok(d) => d.into(),
            Err(e) => {
                tracing::warn!(error = %e, "remote backend failed");
                PolicyOutput { decision: HighLevelDecision::default(), retain_previous: true, error: Some(e) }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simenv::load_task;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn serve_once(body: &'static str, delay_ms: u64) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut s, _)) = listener.accept() {
                let mut buf = [0u8; 65536];
                let _ = s.read(&mut buf);
                std::thread::sleep(Duration::from_millis(delay_ms));
                let resp = format!(
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{}",
                    body.len(),
                    body
                );
                let _ = s.write_all(resp.as_bytes());
            }
        });
        format!("http://{addr}/decide")
    }

    fn obs_call(endpoint: String, timeout_ms: u64) -> PolicyOutput {
        let (scene, robot, _) = load_task(TaskKind::TableBussing, 0);
        let mut p = RemotePolicy::new(TaskKind::TableBussing, RemoteConfig { endpoint, timeout_ms });
        let obs = Observation { scene: &scene, robot: &robot, prior_skills: &[], time: 0.0 };
        p.decide(&obs)
    }

    #[test]
    fn echo_backend() {
        let out = obs_call(serve_once(r#"{"skill_text":"pick up the plate"}"#, 0), 2000);
        assert_eq!(out.decision.skill_text, "pick up the plate");
        assert!(!out.retain_previous);
    }

    #[test]
    fn malformed_reply_retains() {
        let out = obs_call(serve_once("not json", 0), 2000);
        assert!(out.retain_previous);
        assert!(out.error.unwrap().starts_with("malformed_reply"));
    }

    #[test]
    fn timeout_retains() {
        let out = obs_call(serve_once(r#"{"skill_text":"done"}"#, 600), 100);
        assert!(out.retain_previous);
        assert!(out.error.is_some());
    }

    #[test]
    fn allowed_skills_parse() {
        let (scene, _, _) = load_task(TaskKind::TableBussing, 0);
        for s in allowed_skills(&scene) {
            assert!(crate::lowlevel::parse_command(&s).is_ok(), "{s}");
        }
    }
}
