//! Static offline datasets: container, JSONL format, minibatches.
//!
//! File layout: one header line
//! `{"state_dim":..,"action_dim":..,"action_low":[..],"action_high":[..],"provenance":"..","count":N}`
//! followed by exactly `N` lines, one transition object each
//! (`state`, `action`, `reward`, `next_state`, `done`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{concat_cols, Mat, Mlp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    state_dim: usize,
    action_dim: usize,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
    provenance: String,
    count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    transitions: Vec<Transition>,
    state_dim: usize,
    action_dim: usize,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
    provenance: String,
}

/// Column-stacked minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Mat,
    pub actions: Mat,
    pub rewards: Array1<f64>,
    pub next_states: Mat,
    /// 1.0 for terminal transitions, 0.0 otherwise.
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

impl Dataset {
    /// Validates dimensions, finiteness and action bounds.
    pub fn new(
        transitions: Vec<Transition>,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let first = transitions
            .first()
            .ok_or_else(|| Error::Dataset("dataset is empty".into()))?;
        let state_dim = first.state.len();
        let action_dim = first.action.len();
        if action_low.len() != action_dim || action_high.len() != action_dim {
            return Err(Error::Dataset(format!(
                "bounds have {}/{} entries for action dimension {action_dim}",
                action_low.len(),
                action_high.len()
            )));
        }
        if action_low.iter().zip(&action_high).any(|(l, h)| !(l <= h)) {
            return Err(Error::Dataset("action_low must not exceed action_high".into()));
        }
        for (row, t) in transitions.iter().enumerate() {
            if t.state.len() != state_dim || t.next_state.len() != state_dim || t.action.len() != action_dim {
                return Err(Error::Dataset(format!("row {row}: inconsistent dimensions")));
            }
            let finite = t.reward.is_finite()
                && t.state.iter().chain(&t.next_state).chain(&t.action).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Dataset(format!("row {row}: non-finite value")));
            }
            let inside = t
                .action
                .iter()
                .zip(action_low.iter().zip(&action_high))
                .all(|(a, (l, h))| a >= l && a <= h);
            if !inside {
                return Err(Error::Dataset(format!(
                    "row {row}: action {:?} outside bounds {action_low:?}..{action_high:?}",
                    t.action
                )));
            }
        }
        Ok(Self {
            transitions,
            state_dim,
            action_dim,
            action_low,
            action_high,
            provenance: provenance.into(),
        })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn action_low(&self) -> &[f64] {
        &self.action_low
    }

    pub fn action_high(&self) -> &[f64] {
        &self.action_high
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Largest absolute reward in the data.
    pub fn max_abs_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward.abs()).fold(0.0, f64::max)
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let header = Header {
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            action_low: self.action_low.clone(),
            action_high: self.action_high.clone(),
            provenance: self.provenance.clone(),
            count: self.transitions.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for t in &self.transitions {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Dataset("missing header line".into()))??;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| Error::Dataset(format!("header: {e}")))?;
        let mut transitions = Vec::with_capacity(header.count);
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let t: Transition = serde_json::from_str(&line)
                .map_err(|e| Error::Dataset(format!("row {row}: {e}")))?;
            transitions.push(t);
        }
        if transitions.len() != header.count {
            return Err(Error::Dataset(format!(
                "header declares {} transitions but file holds {}",
                header.count,
                transitions.len()
            )));
        }
        let ds = Dataset::new(transitions, header.action_low, header.action_high, header.provenance)?;
        if ds.state_dim != header.state_dim || ds.action_dim != header.action_dim {
            return Err(Error::Dataset(format!(
                "header declares dims ({}, {}) but rows have ({}, {})",
                header.state_dim, header.action_dim, ds.state_dim, ds.action_dim
            )));
        }
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }

    /// Gathers the given rows into a batch.
    pub fn batch_of(&self, indices: &[usize]) -> Batch {
        let b = indices.len();
        let mut states = Mat::zeros((b, self.state_dim));
        let mut next_states = Mat::zeros((b, self.state_dim));
        let mut actions = Mat::zeros((b, self.action_dim));
        let mut rewards = Array1::zeros(b);
        let mut dones = Array1::zeros(b);
        for (row, &i) in indices.iter().enumerate() {
            let t = &self.transitions[i];
            for (d, v) in t.state.iter().enumerate() {
                states[[row, d]] = *v;
            }
            for (d, v) in t.next_state.iter().enumerate() {
                next_states[[row, d]] = *v;
            }
            for (d, v) in t.action.iter().enumerate() {
                actions[[row, d]] = *v;
            }
            rewards[row] = t.reward;
            dones[row] = if t.done { 1.0 } else { 0.0 };
        }
        Batch {
            states,
            actions,
            rewards,
            next_states,
            dones,
        }
    }

    /// `size` uniform draws with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Batch> {
        if size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.transitions.is_empty() {
            return Err(Error::Dataset("cannot sample from an empty dataset".into()));
        }
        let n = self.transitions.len();
        let indices: Vec<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
        Ok(self.batch_of(&indices))
    }

    pub fn full_batch(&self) -> Batch {
        self.batch_of(&(0..self.len()).collect::<Vec<_>>())
    }
}

/// Mean of |Q(s, a)| over the batch's own state-action pairs.
pub fn mean_abs_q(batch: &Batch, critic: &Mlp) -> Result<f64> {
    let q = critic.predict(&concat_cols(&batch.states, &batch.actions)?)?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("critic output in mean_abs_q".into()));
    }
    Ok(q.iter().map(|v| v.abs()).sum::<f64>() / q.len() as f64)
}
