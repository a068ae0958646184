use crate::domain::{HighLevelDecision, UserEvent, UserEventKind};
use crate::highlevel::{decide, DialogueContext, Observation, Policy, PolicyKind, PolicyOutput, HOME_TEXT};
use crate::lowlevel::parse_command;
use crate::simenv::TaskCatalog;

/// Hands the raw prompt straight to the executor. Prompts outside the
/// command grammar fall back to the task's default routine.
pub struct FlatPolicy {
    catalog: TaskCatalog,
    prompt: Option<String>,
    forwarded: bool,
}

impl FlatPolicy {
    pub fn new(catalog: TaskCatalog) -> Self {
        FlatPolicy { catalog, prompt: None, forwarded: false }
    }
}

impl Policy for FlatPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::FlatPassthrough
    }

    fn reactive(&self) -> bool {
        false
    }

    fn charges_latency(&self) -> bool {
        false
    }

    fn on_user_event(&mut self, event: &UserEvent, _obs: &Observation<'_>) {
        if let UserEventKind::Prompt { text } = &event.kind {
            self.prompt = Some(text.clone());
            self.forwarded = false;
        }
    }

    fn decide(&mut self, obs: &Observation<'_>) -> PolicyOutput {
        let Some(prompt) = self.prompt.clone() else {
            return HighLevelDecision::command(HOME_TEXT).into();
        };
        if parse_command(&prompt).is_ok() {
            if obs.prior_skills.contains(&prompt) {
                return HighLevelDecision::command(HOME_TEXT).into();
            }
            return HighLevelDecision::command(prompt).into();
        }
        if !self.forwarded {
            self.forwarded = true;
            return HighLevelDecision::command(prompt).into();
        }
        let mut d = decide(obs.scene, &DialogueContext::default(), &self.catalog.default_goal());
        d.utterance = None;
        d.into()
    }
}
