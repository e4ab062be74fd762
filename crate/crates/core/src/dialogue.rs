//! The human partner. A scripted process replays the fixture turns; a
//! console source lets a person type instead.

use std::collections::BTreeSet;
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;

use crate::sim::{QuestionKind, ScriptedTurn, Trigger};

/// A turn released into the world.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HumanTurn {
    pub id: Option<String>,
    pub text: String,
}

pub trait DialogueSource {
    /// Turns to release at this tick.
    fn poll(&mut self, tick: u64) -> Vec<HumanTurn>;
    /// The agent said something at this tick.
    fn observe_agent(&mut self, text: &str, tick: u64);
    /// The source will never produce another turn.
    fn exhausted(&self) -> bool {
        false
    }
    /// The person left; the trial ends once the agent settles.
    fn hung_up(&self) -> bool {
        false
    }
}

/// Classifies an agent utterance as a question about features or location.
pub fn classify_question(text: &str) -> Option<QuestionKind> {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    let (features, location) = RE.get_or_init(|| {
        (
            Regex::new(r"(?i)\b(label|labell?ed|identify|features?|look like|looks like|distinguish|tell (it|them) apart|marking|part number|which one)\b").unwrap(),
            Regex::new(r"(?i)\b(where|location|located|stored|kept|find it)\b").unwrap(),
        )
    });
    if !text.contains('?') {
        return None;
    }
    if features.is_match(text) {
        Some(QuestionKind::Features)
    } else if location.is_match(text) {
        Some(QuestionKind::Location)
    } else {
        None
    }
}

/// Replays fixture turns. Each turn fires at most once; replies wait the
/// configured delay.
#[derive(Clone, Debug)]
pub struct ScriptedPartner {
    turns: Vec<ScriptedTurn>,
    delay: u64,
    fired: BTreeSet<String>,
    /// `(due tick, turn index)` in scheduling order.
    scheduled: Vec<(u64, usize)>,
    /// Tick each fired turn was released.
    fired_at: Vec<Option<u64>>,
    agent_utterances: Vec<(u64, String)>,
}

impl ScriptedPartner {
    pub fn new(turns: Vec<ScriptedTurn>, delay: u64) -> Self {
        let n = turns.len();
        Self {
            turns,
            delay,
            fired: BTreeSet::new(),
            scheduled: Vec::new(),
            fired_at: vec![None; n],
            agent_utterances: Vec::new(),
        }
    }

    fn is_pending(&self, i: usize) -> bool {
        !self.fired.contains(&self.turns[i].id) && !self.scheduled.iter().any(|(_, j)| *j == i)
    }

    fn schedule(&mut self, i: usize, due: u64) {
        if self.is_pending(i) {
            self.scheduled.push((due, i));
        }
    }

    fn fired_tick(&self, id: &str) -> Option<u64> {
        self.turns
            .iter()
            .position(|t| t.id == id)
            .and_then(|i| self.fired_at[i])
    }
}

impl DialogueSource for ScriptedPartner {
    fn poll(&mut self, tick: u64) -> Vec<HumanTurn> {
        for i in 0..self.turns.len() {
            match &self.turns[i].trigger {
                Trigger::Start => self.schedule(i, 0),
                Trigger::ReplyTo {
                    turn,
                    timeout: Some(timeout),
                } => {
                    if let Some(t0) = self.fired_tick(turn) {
                        if tick >= t0 + timeout {
                            self.schedule(i, tick);
                        }
                    }
                }
                _ => {}
            }
        }
        let mut due: Vec<(u64, usize)> = self.scheduled.iter().copied().filter(|(d, _)| *d <= tick).collect();
        due.sort();
        self.scheduled.retain(|(d, _)| *d > tick);
        due.into_iter()
            .map(|(_, i)| {
                self.fired.insert(self.turns[i].id.clone());
                self.fired_at[i] = Some(tick);
                HumanTurn {
                    id: Some(self.turns[i].id.clone()),
                    text: self.turns[i].text.clone(),
                }
            })
            .collect()
    }

    fn observe_agent(&mut self, text: &str, tick: u64) {
        self.agent_utterances.push((tick, text.to_string()));
        let question = classify_question(text);
        for i in 0..self.turns.len() {
            let fire = match &self.turns[i].trigger {
                Trigger::ReplyTo { turn, .. } => self.fired_tick(turn).is_some_and(|t0| tick >= t0),
                Trigger::Question(kind) => question == Some(*kind),
                Trigger::Start => false,
            };
            if fire {
                self.schedule(i, tick + self.delay.max(1));
            }
        }
    }

    fn exhausted(&self) -> bool {
        self.fired.len() == self.turns.len()
    }
}

/// Lines typed by a person, delivered through a channel.
pub struct ConsolePartner {
    rx: Receiver<String>,
    closed: bool,
    pace: Duration,
}

impl ConsolePartner {
    pub fn new(rx: Receiver<String>) -> Self {
        Self {
            rx,
            closed: false,
            pace: Duration::ZERO,
        }
    }

    /// Waits up to `pace` per tick for the person to type.
    pub fn with_pace(mut self, pace: Duration) -> Self {
        self.pace = pace;
        self
    }

    pub fn closed(&self) -> bool {
        self.closed
    }
}

impl DialogueSource for ConsolePartner {
    fn poll(&mut self, _tick: u64) -> Vec<HumanTurn> {
        let mut out = Vec::new();
        if !self.closed && !self.pace.is_zero() {
            match self.rx.recv_timeout(self.pace) {
                Ok(line) if !line.trim().is_empty() => out.push(HumanTurn {
                    id: None,
                    text: line.trim().to_string(),
                }),
                Err(RecvTimeoutError::Disconnected) => self.closed = true,
                _ => {}
            }
        }
        while !self.closed {
            match self.rx.try_recv() {
                Ok(line) if line.trim().is_empty() => continue,
                Ok(line) => out.push(HumanTurn {
                    id: None,
                    text: line.trim().to_string(),
                }),
                Err(std::sync::mpsc::TryRecvError::Empty) => break,
                Err(std::sync::mpsc::TryRecvError::Disconnected) => {
                    self.closed = true;
                    break;
                }
            }
        }
        out
    }

    fn observe_agent(&mut self, _text: &str, _tick: u64) {}

    fn exhausted(&self) -> bool {
        self.closed
    }

    fn hung_up(&self) -> bool {
        self.closed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ScenarioFixture;

    #[test]
    fn questions_are_classified() {
        assert_eq!(
            classify_question("How can I identify the new thermostat? What label does it have?"),
            Some(QuestionKind::Features)
        );
        assert_eq!(
            classify_question("Where is the new thermostat kept?"),
            Some(QuestionKind::Location)
        );
        assert_eq!(classify_question("It might be a pipe obstruction."), None);
    }

    #[test]
    fn replies_follow_agent_turns_once() {
        let f = ScenarioFixture::canonical();
        let mut p = ScriptedPartner::new(f.turns.clone(), 1);
        let m1 = p.poll(0);
        assert_eq!(m1.len(), 1);
        assert!(p.poll(1).is_empty());
        p.observe_agent("It might be a pipe obstruction or a broken thermostat.", 1);
        p.observe_agent("Something else.", 1);
        let m3 = p.poll(2);
        assert_eq!(m3.iter().map(|t| t.id.as_deref().unwrap()).collect::<Vec<_>>(), ["M3"]);
        p.observe_agent("How can I identify the new thermostat? What label does it have?", 3);
        p.observe_agent("How can I identify the new thermostat? What label does it have?", 3);
        let next: Vec<String> = p.poll(4).into_iter().filter_map(|t| t.id).collect();
        assert_eq!(next, ["M5", "M7"]);
        assert!(p.poll(50).is_empty());
    }

    #[test]
    fn silence_triggers_timeout() {
        let f = ScenarioFixture::canonical();
        let mut p = ScriptedPartner::new(f.turns.clone(), 1);
        p.poll(0);
        let mut fired = Vec::new();
        for t in 1..=45 {
            fired.extend(p.poll(t).into_iter().map(|x| (t, x.id.unwrap())));
        }
        assert_eq!(fired, [(40, "M3".to_string())]);
    }
}
