//! CSV metrics: one row per episode, slot and UAV, plus one row per episode.

use std::io::Write;

use serde::{Deserialize, Serialize};
use uavnet_core::channel::{FormationMatrix, Link, Node};
use uavnet_core::marl::{EpisodeSummary, MetricsSink, SlotRecord};
use uavnet_core::world::WorldState;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: u64,
    pub slot: u64,
    pub uav_id: usize,
    pub x: f64,
    pub y: f64,
    pub buffer_bits: f64,
    pub energy_j: f64,
    pub reward_total: f64,
    pub reward_e: f64,
    pub reward_d: f64,
    pub reward_s: f64,
    pub penalty: f64,
    pub b_i: f64,
    pub c_i: f64,
    pub formation_links: String,
    pub gu_backlog_total: f64,
}

impl MetricsRow {
    pub fn is_finite(&self) -> bool {
        [
            self.x,
            self.y,
            self.buffer_bits,
            self.energy_j,
            self.reward_total,
            self.reward_e,
            self.reward_d,
            self.reward_s,
            self.penalty,
            self.b_i,
            self.c_i,
            self.gu_backlog_total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub const METRICS_HEADER: &str = "episode,slot,uav_id,x,y,buffer_bits,energy_j,reward_total,reward_e,reward_d,reward_s,penalty,b_i,c_i,formation_links,gu_backlog_total";

/// `tx>rx@k` joined by `;`, the receiver being `bs` or a UAV index.
pub fn encode_links(phi: &FormationMatrix) -> String {
    phi.links()
        .map(|l| match l.rx {
            Node::Bs => format!("{}>bs@{}", l.tx, l.k),
            Node::Uav(j) => format!("{}>{}@{}", l.tx, j, l.k),
        })
        .collect::<Vec<_>>()
        .join(";")
}

pub fn decode_links(s: &str) -> Option<Vec<Link>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(';')
        .map(|item| {
            let (tx, rest) = item.split_once('>')?;
            let (rx, k) = rest.split_once('@')?;
            let rx = if rx == "bs" { Node::Bs } else { Node::Uav(rx.parse().ok()?) };
            Some(Link { tx: tx.parse().ok()?, rx, k: k.parse().ok()? })
        })
        .collect()
}

pub fn rows(rec: &SlotRecord<'_>) -> Vec<MetricsRow> {
    let links = encode_links(rec.formation);
    let backlog = rec.world.gu_backlog();
    rec.world
        .uavs
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let r = &rec.rewards[i];
            MetricsRow {
                episode: rec.episode,
                slot: rec.slot,
                uav_id: u.id,
                x: u.pos.x,
                y: u.pos.y,
                buffer_bits: u.buffer,
                energy_j: rec.report.energy[i],
                reward_total: r.total,
                reward_e: r.energy,
                reward_d: r.data,
                reward_s: r.sensing,
                penalty: r.penalty,
                b_i: rec.cost.b[i],
                c_i: rec.cost.c[i],
                formation_links: links.clone(),
                gu_backlog_total: backlog,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: u64,
    pub slots: u64,
    pub completion_slots: Option<u64>,
    pub reward: f64,
    pub sensed_bits: f64,
    pub delivered_bits: f64,
    pub energy_j: f64,
    pub max_buffer_bits: f64,
    pub remaining_bits: f64,
    pub objective: f64,
    pub safety_violations: u64,
    pub updates: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub bo_chosen: u64,
    pub random_chosen: u64,
}

impl From<&EpisodeSummary> for EpisodeRow {
    fn from(s: &EpisodeSummary) -> Self {
        Self {
            episode: s.episode,
            slots: s.slots,
            completion_slots: s.completion_slots,
            reward: s.reward,
            sensed_bits: s.sensed_bits,
            delivered_bits: s.delivered_bits,
            energy_j: s.energy_j,
            max_buffer_bits: s.max_buffer_bits,
            remaining_bits: s.remaining_bits,
            objective: s.objective,
            safety_violations: s.safety_violations,
            updates: s.updates,
            critic_loss: s.critic_loss,
            actor_loss: s.actor_loss,
            bo_chosen: s.bo_chosen,
            random_chosen: s.random_chosen,
        }
    }
}

/// Writes slot rows and episode rows to two CSV streams. Write errors are
/// kept and returned by [`CsvSink::finish`].
pub struct CsvSink<W: Write, E: Write> {
    slots: csv::Writer<W>,
    episodes: csv::Writer<E>,
    every: u64,
    error: Option<HarnessError>,
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Runtime(format!("writing metrics: {e}"))
}

impl<W: Write, E: Write> CsvSink<W, E> {
    /// Slot rows are written for every `every`-th episode, episode rows always.
    pub fn new(slots: W, episodes: E, every: u64) -> Self {
        Self {
            slots: csv::Writer::from_writer(slots),
            episodes: csv::Writer::from_writer(episodes),
            every: every.max(1),
            error: None,
        }
    }

    fn keep(&mut self, r: std::result::Result<(), csv::Error>) {
        if let Err(e) = r {
            self.error.get_or_insert(csv_err(e));
        }
    }

    pub fn flush(&mut self) -> Result<()> {
        self.slots.flush().map_err(|e| HarnessError::io("flushing metrics", "metrics.csv", e))?;
        self.episodes.flush().map_err(|e| HarnessError::io("flushing metrics", "episodes.csv", e))
    }

    pub fn finish(mut self) -> Result<()> {
        let flushed = self.flush();
        match self.error.take() {
            Some(e) => Err(e),
            None => flushed,
        }
    }
}

impl<W: Write, E: Write> MetricsSink for CsvSink<W, E> {
    fn slot(&mut self, rec: &SlotRecord<'_>) {
        if rec.episode % self.every != 0 {
            return;
        }
        for row in rows(rec) {
            let r = self.slots.serialize(&row);
            self.keep(r);
        }
    }

    fn episode_end(&mut self, summary: &EpisodeSummary) {
        let r = self.episodes.serialize(EpisodeRow::from(summary));
        self.keep(r);
    }
}

/// Forwards every event to each sink in turn.
pub struct Tee<'a>(pub Vec<&'a mut dyn MetricsSink>);

impl MetricsSink for Tee<'_> {
    fn episode_start(&mut self, episode: u64, world: &WorldState) {
        for s in &mut self.0 {
            s.episode_start(episode, world);
        }
    }

    fn slot(&mut self, rec: &SlotRecord<'_>) {
        for s in &mut self.0 {
            s.slot(rec);
        }
    }

    fn episode_end(&mut self, summary: &EpisodeSummary) {
        for s in &mut self.0 {
            s.episode_end(summary);
        }
    }
}

/// Per-slot curves of one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveSink {
    /// Data left in GU queues and UAV buffers after each slot, in bits.
    pub remaining: Vec<f64>,
    /// Reward of each slot summed over agents.
    pub reward: Vec<f64>,
    /// Largest UAV buffer after each slot, in bits.
    pub max_buffer: Vec<f64>,
}

impl MetricsSink for CurveSink {
    fn slot(&mut self, rec: &SlotRecord<'_>) {
        let w = rec.world;
        self.remaining.push(w.gu_backlog() + w.buffers().iter().sum::<f64>());
        self.reward.push(rec.rewards.iter().map(|r| r.total).sum());
        self.max_buffer.push(w.uavs.iter().map(|u| u.buffer).fold(0.0, f64::max));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use uavnet_core::config::SimConfig;
    use uavnet_core::marl::Trainer;

    #[test]
    fn links_round_trip() {
        let links = vec![
            Link { tx: 0, rx: Node::Bs, k: 1 },
            Link { tx: 2, rx: Node::Uav(0), k: 0 },
        ];
        let phi = FormationMatrix::from_links(3, 2, &links);
        let s = encode_links(&phi);
        let back = decode_links(&s).unwrap();
        assert_eq!(FormationMatrix::from_links(3, 2, &back), phi);
        assert_eq!(decode_links(""), Some(vec![]));
        assert_eq!(decode_links("1>x@0"), None);
    }

    #[test]
    fn csv_has_fixed_header_and_finite_rows() {
        let mut cfg = SimConfig::default();
        cfg.training.horizon = 5;
        let tr = Trainer::new(&cfg, 3).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let mut sink = CsvSink::new(&mut a, &mut b, 1);
        tr.scripted_episode(0, &mut sink).unwrap();
        sink.finish().unwrap();
        let text = String::from_utf8(a).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER));
        assert_eq!(lines.count(), 5 * cfg.scenario.uavs);
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        for row in rd.deserialize::<MetricsRow>() {
            assert!(row.unwrap().is_finite());
        }
        assert_eq!(String::from_utf8(b).unwrap().lines().count(), 2);
    }

    #[test]
    fn stride_skips_episodes() {
        let mut cfg = SimConfig::default();
        cfg.training.horizon = 2;
        let tr = Trainer::new(&cfg, 3).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let mut sink = CsvSink::new(&mut a, &mut b, 2);
        for ep in 0..3 {
            tr.scripted_episode(ep, &mut sink).unwrap();
        }
        sink.finish().unwrap();
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 2 * cfg.scenario.uavs);
    }
}
