use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::trajectory::{JumpEvent, Trajectory};
use crate::error::{Error, Result};
use crate::model::ProcessSpec;
use crate::rng::fnv1a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reversed,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Reversed,
            Direction::Reversed => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub fingerprint: u64,
    pub seed: u64,
    pub direction: Direction,
    pub horizon: f64,
    pub paths: Vec<Trajectory>,
}

pub fn spec_fingerprint(spec: &ProcessSpec) -> u64 {
    fnv1a(format!("{spec:?}").as_bytes())
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    fingerprint: String,
    seed: u64,
    direction: Direction,
    horizon: f64,
    n_paths: usize,
}

#[derive(Serialize, Deserialize)]
struct PathLine {
    initial: Vec<f64>,
    terminal: Vec<f64>,
    events: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

const FORMAT: &str = "jumprev-ensemble-v1";

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn reversed(&self) -> PathEnsemble {
        PathEnsemble {
            fingerprint: self.fingerprint,
            seed: self.seed,
            direction: self.direction.flipped(),
            horizon: self.horizon,
            paths: self.paths.iter().map(Trajectory::reversed).collect(),
        }
    }

    /// One header line, then one JSON object per path.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            format: FORMAT.into(),
            fingerprint: format!("{:016x}", self.fingerprint),
            seed: self.seed,
            direction: self.direction,
            horizon: self.horizon,
            n_paths: self.paths.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for p in &self.paths {
            let line = PathLine {
                initial: p.initial_state.clone(),
                terminal: p.terminal_state.clone(),
                events: p.events.iter().map(|e| (e.time, e.from.clone(), e.to.clone())).collect(),
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads an ensemble back. A fingerprint different from `expected` is
    /// returned as a warning. Imported paths carry no drift flow.
    pub fn read_jsonl<R: BufRead>(r: R, expected: Option<u64>) -> Result<(PathEnsemble, Option<String>)> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| Error::Format("empty ensemble file".into()))??;
        let header: Header = serde_json::from_str(&first)?;
        if header.format != FORMAT {
            return Err(Error::Format(format!("unknown ensemble format {}", header.format)));
        }
        let fingerprint = u64::from_str_radix(&header.fingerprint, 16)
            .map_err(|e| Error::Format(format!("bad fingerprint: {e}")))?;
        let mut paths = Vec::with_capacity(header.n_paths);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: PathLine = serde_json::from_str(&line)?;
            let traj = Trajectory {
                initial_state: p.initial,
                terminal_state: p.terminal,
                events: p.events.into_iter().map(|(time, from, to)| JumpEvent { time, from, to }).collect(),
                horizon: header.horizon,
                flow: None,
            };
            traj.check()?;
            paths.push(traj);
        }
        if paths.len() != header.n_paths {
            return Err(Error::Format(format!("header promises {} paths, found {}", header.n_paths, paths.len())));
        }
        let warning = match expected {
            Some(e) if e != fingerprint => {
                Some(format!("ensemble fingerprint {fingerprint:016x} differs from the configuration's {e:016x}"))
            }
            _ => None,
        };
        let ens = PathEnsemble { fingerprint, seed: header.seed, direction: header.direction, horizon: header.horizon, paths };
        Ok((ens, warning))
    }
}
