//! JSON-lines trajectories and a checker that replays them through the
//! simulator.
//!
//! The first line carries the scenario parameters. Each episode then has a
//! `start` line with the initial state followed by one `slot` line per slot
//! with the fly commands, the formation in force and the resulting state.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use uavnet_core::channel::FormationMatrix;
use uavnet_core::marl::{MetricsSink, SlotRecord};
use uavnet_core::world::{step, FlyCommand, GroundUser, SimParams, UavState, WorldState};

use crate::error::{HarnessError, Result};
use crate::metrics::{decode_links, encode_links};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: u64,
    pub uavs: Vec<UavState>,
    pub gus: Vec<GroundUser>,
    pub channels: usize,
    /// Formation of the last completed slot, encoded as in the metrics file.
    pub formation: String,
}

impl Snapshot {
    pub fn of(w: &WorldState) -> Self {
        Self {
            t: w.t,
            uavs: w.uavs.clone(),
            gus: w.gus.clone(),
            channels: w.formation.channels(),
            formation: encode_links(&w.formation),
        }
    }

    pub fn to_world(&self) -> Result<WorldState> {
        let mut w = WorldState::new(self.uavs.clone(), self.gus.clone(), self.channels);
        w.t = self.t;
        w.formation = formation(&self.formation, self.uavs.len(), self.channels)?;
        Ok(w)
    }
}

fn formation(s: &str, uavs: usize, channels: usize) -> Result<FormationMatrix> {
    let links = decode_links(s).ok_or_else(|| HarnessError::Runtime(format!("bad formation `{s}`")))?;
    if links.iter().any(|l| l.tx >= uavs || l.rx.slot() > uavs || l.k >= channels) {
        return Err(HarnessError::Runtime(format!("formation `{s}` out of range")));
    }
    Ok(FormationMatrix::from_links(uavs, channels, &links))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Line {
    Params { params: SimParams },
    Start { episode: u64, state: Snapshot },
    Slot { episode: u64, slot: u64, commands: Vec<FlyCommand>, formation: String, state: Snapshot },
}

/// Streams trajectories of every `every`-th episode.
pub struct TrajectorySink<W: Write> {
    out: W,
    every: u64,
    error: Option<HarnessError>,
}

impl<W: Write> TrajectorySink<W> {
    pub fn new(out: W, params: &SimParams, every: u64) -> Self {
        let mut s = Self { out, every: every.max(1), error: None };
        s.write(&Line::Params { params: params.clone() });
        s
    }

    fn write(&mut self, line: &Line) {
        if self.error.is_some() {
            return;
        }
        let r = serde_json::to_writer(&mut self.out, line)
            .map_err(|e| HarnessError::Runtime(format!("writing trajectory: {e}")))
            .and_then(|_| self.out.write_all(b"\n").map_err(|e| HarnessError::io("writing", "trajectories.jsonl", e)));
        if let Err(e) = r {
            self.error = Some(e);
        }
    }

    pub fn finish(mut self) -> Result<()> {
        let flushed = self.out.flush().map_err(|e| HarnessError::io("flushing", "trajectories.jsonl", e));
        match self.error.take() {
            Some(e) => Err(e),
            None => flushed,
        }
    }
}

impl<W: Write> MetricsSink for TrajectorySink<W> {
    fn episode_start(&mut self, episode: u64, world: &WorldState) {
        if episode % self.every == 0 {
            self.write(&Line::Start { episode, state: Snapshot::of(world) });
        }
    }

    fn slot(&mut self, rec: &SlotRecord<'_>) {
        if rec.episode % self.every == 0 {
            self.write(&Line::Slot {
                episode: rec.episode,
                slot: rec.slot,
                commands: rec.commands.to_vec(),
                formation: encode_links(rec.formation),
                state: Snapshot::of(rec.world),
            });
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub episodes: u64,
    pub slots: u64,
    /// `(episode, slot)` of every slot whose replayed state differs.
    pub mismatches: Vec<(u64, u64)>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Replays every recorded slot from the episode's start state and compares
/// each resulting state with the recorded one, bit for bit.
pub fn replay<R: BufRead>(input: R) -> Result<ReplayReport> {
    let mut params: Option<SimParams> = None;
    let mut current: Option<(u64, WorldState)> = None;
    let mut report = ReplayReport::default();
    for (no, line) in input.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io("reading", "trajectories.jsonl", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Runtime(format!("trajectory line {}: {e}", no + 1)))?;
        match parsed {
            Line::Params { params: p } => params = Some(p),
            Line::Start { episode, state } => {
                report.episodes += 1;
                current = Some((episode, state.to_world()?));
            }
            Line::Slot { episode, slot, commands, formation: f, state } => {
                let p = params.as_ref().ok_or_else(|| HarnessError::Runtime("trajectory has no params line".into()))?;
                let (ep, w) = current
                    .as_mut()
                    .ok_or_else(|| HarnessError::Runtime(format!("slot line {} before any start", no + 1)))?;
                if *ep != episode {
                    return Err(HarnessError::Runtime(format!("slot line {} belongs to another episode", no + 1)));
                }
                let phi = formation(&f, w.uavs.len(), w.formation.channels())?;
                let (next, _) = step(p, w, &commands, &phi)?;
                report.slots += 1;
                let recorded = state.to_world()?;
                if next != recorded {
                    report.mismatches.push((episode, slot));
                }
                *w = next;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uavnet_core::config::SimConfig;
    use uavnet_core::marl::Trainer;

    fn recorded(episodes: u64) -> Vec<u8> {
        let mut cfg = SimConfig::default();
        cfg.training.horizon = 12;
        let tr = Trainer::new(&cfg, 5).unwrap();
        let mut buf = Vec::new();
        let mut sink = TrajectorySink::new(&mut buf, tr.params(), 1);
        for ep in 0..episodes {
            tr.scripted_episode(ep, &mut sink).unwrap();
        }
        sink.finish().unwrap();
        buf
    }

    #[test]
    fn replay_matches_recording() {
        let buf = recorded(2);
        let rep = replay(buf.as_slice()).unwrap();
        assert_eq!(rep.episodes, 2);
        assert_eq!(rep.slots, 24);
        assert!(rep.ok(), "{:?}", rep.mismatches);
    }

    #[test]
    fn tampered_command_is_caught() {
        let buf = recorded(1);
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut l: Line = serde_json::from_str(&lines[3]).unwrap();
        if let Line::Slot { commands, .. } = &mut l {
            commands[0].speed = if commands[0].speed > 1.0 { 0.0 } else { 15.0 };
        }
        lines[3] = serde_json::to_string(&l).unwrap();
        let rep = replay(lines.join("\n").as_bytes()).unwrap();
        assert!(!rep.ok());
    }
}
