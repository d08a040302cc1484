use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A time-dependent vector field driving the state between jumps.
pub trait VectorField: Send + Sync + fmt::Debug {
    fn velocity(&self, t: f64, x: &[f64]) -> Result<Vec<f64>>;
}

/// Deterministic motion between jumps, integrated with fixed-step RK4.
///
/// On a reversed path the field is read as `-b(T - s, y)`.
#[derive(Clone, Debug)]
pub struct PathFlow {
    pub field: Arc<dyn VectorField>,
    pub step: f64,
    pub reversed: bool,
}

impl PathFlow {
    fn velocity(&self, horizon: f64, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if self.reversed {
            let mut v = self.field.velocity(horizon - t, x)?;
            v.iter_mut().for_each(|c| *c = -*c);
            Ok(v)
        } else {
            self.field.velocity(t, x)
        }
    }

    fn rk4(&self, horizon: f64, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
        let shift = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> {
            base.iter().zip(k).map(|(a, b)| a + s * b).collect()
        };
        let k1 = self.velocity(horizon, t, x)?;
        let k2 = self.velocity(horizon, t + 0.5 * h, &shift(x, &k1, 0.5 * h))?;
        let k3 = self.velocity(horizon, t + 0.5 * h, &shift(x, &k2, 0.5 * h))?;
        let k4 = self.velocity(horizon, t + h, &shift(x, &k3, h))?;
        Ok((0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
    }
}

/// Walks a flow forward from an anchor. Full steps sit on the grid
/// `anchor + k·step`; positions between nodes come from one partial step
/// that is not stored, so the result never depends on which intermediate
/// times were queried.
pub(crate) struct FlowCursor<'a> {
    flow: &'a PathFlow,
    horizon: f64,
    anchor: f64,
    steps: u64,
    node: Vec<f64>,
}

impl<'a> FlowCursor<'a> {
    pub(crate) fn new(flow: &'a PathFlow, horizon: f64, anchor: f64, state: Vec<f64>) -> Self {
        FlowCursor { flow, horizon, anchor, steps: 0, node: state }
    }

    fn node_time(&self, k: u64) -> f64 {
        self.anchor + k as f64 * self.flow.step
    }

    pub(crate) fn position(&mut self, t: f64) -> Result<Vec<f64>> {
        while self.node_time(self.steps + 1) <= t {
            let t0 = self.node_time(self.steps);
            self.node = self.flow.rk4(self.horizon, t0, &self.node, self.flow.step)?;
            self.steps += 1;
        }
        let t0 = self.node_time(self.steps);
        if t > t0 {
            self.flow.rk4(self.horizon, t0, &self.node, t - t0)
        } else {
            Ok(self.node.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub from: Vec<f64>,
    pub to: Vec<f64>,
}

impl JumpEvent {
    pub fn jump(&self) -> Vec<f64> {
        self.to.iter().zip(&self.from).map(|(a, b)| a - b).collect()
    }
}

/// A càdlàg path on `[0, T]`: initial state, ordered jumps and optional
/// drift flow between them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial_state: Vec<f64>,
    pub terminal_state: Vec<f64>,
    pub events: Vec<JumpEvent>,
    pub horizon: f64,
    pub flow: Option<PathFlow>,
}

impl PartialEq for Trajectory {
    fn eq(&self, other: &Self) -> bool {
        self.initial_state == other.initial_state
            && self.terminal_state == other.terminal_state
            && self.events == other.events
            && self.horizon == other.horizon
    }
}

/// Event times are kept on multiples of `ulp(T)` so that `T - t` is exact.
pub fn time_quantum(horizon: f64) -> f64 {
    f64::from_bits(horizon.to_bits() + 1) - horizon
}

pub(crate) fn snap_time(t: f64, horizon: f64) -> f64 {
    let q = time_quantum(horizon);
    ((t / q).floor() * q).max(q)
}

impl Trajectory {
    pub fn constant(state: Vec<f64>, horizon: f64) -> Self {
        Trajectory { initial_state: state.clone(), terminal_state: state, events: Vec::new(), horizon, flow: None }
    }

    pub fn n_jumps(&self) -> usize {
        self.events.len()
    }

    pub fn check(&self) -> Result<()> {
        let mut last = 0.0;
        for e in &self.events {
            if !(e.time > last) || e.time > self.horizon {
                return Err(Error::Format(format!("event time {} out of order or outside (0, T]", e.time)));
            }
            last = e.time;
        }
        Ok(())
    }

    /// State right after the last event at or before `t`, and that event's time.
    pub(crate) fn anchor_at(&self, t: f64) -> (f64, &[f64]) {
        match self.events.partition_point(|e| e.time <= t) {
            0 => (0.0, &self.initial_state),
            k => (self.events[k - 1].time, &self.events[k - 1].to),
        }
    }

    /// Càdlàg evaluation `X_t`.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        if t == self.horizon {
            return Ok(self.terminal_state.clone());
        }
        let (anchor, state) = self.anchor_at(t);
        match &self.flow {
            None => Ok(state.to_vec()),
            Some(flow) => FlowCursor::new(flow, self.horizon, anchor, state.to_vec()).position(t),
        }
    }

    /// The path of `X*_s = X_{(T-s)-}`.
    pub fn reversed(&self) -> Trajectory {
        let horizon = self.horizon;
        let events = self
            .events
            .iter()
            .rev()
            .map(|e| JumpEvent { time: horizon - e.time, from: e.to.clone(), to: e.from.clone() })
            .collect();
        Trajectory {
            initial_state: self.terminal_state.clone(),
            terminal_state: self.initial_state.clone(),
            events,
            horizon,
            flow: self.flow.as_ref().map(|f| PathFlow { reversed: !f.reversed, ..f.clone() }),
        }
    }
}

/// Free-function form of [`Trajectory::reversed`].
pub fn reverse_path(traj: &Trajectory) -> Trajectory {
    traj.reversed()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Unit;

    impl VectorField for Unit {
        fn velocity(&self, _t: f64, x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![1.0; x.len()])
        }
    }

    #[derive(Debug)]
    struct Linear;

    impl VectorField for Linear {
        fn velocity(&self, _t: f64, x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![-x[0]])
        }
    }

    fn one_jump() -> Trajectory {
        Trajectory {
            initial_state: vec![0.0],
            terminal_state: vec![1.0],
            events: vec![JumpEvent { time: snap_time(0.3, 1.0), from: vec![0.0], to: vec![1.0] }],
            horizon: 1.0,
            flow: None,
        }
    }

    #[test]
    fn constant_path() {
        let p = Trajectory::constant(vec![2.5], 1.0);
        assert_eq!(p.state_at(0.5).unwrap(), vec![2.5]);
        assert_eq!(p.reversed(), p);
    }

    #[test]
    fn single_jump_reversal() {
        let p = one_jump();
        assert_eq!(p.state_at(0.3).unwrap(), vec![1.0]);
        assert_eq!(p.state_at(0.29).unwrap(), vec![0.0]);
        let r = p.reversed();
        assert_eq!(r.initial_state, vec![1.0]);
        assert_eq!(r.events.len(), 1);
        assert!((r.events[0].time - 0.7).abs() < 1e-15);
        assert_eq!(r.events[0].jump(), vec![-1.0]);
        assert_eq!(r.reversed(), p);
        assert_eq!(r.reversed().events[0].time, p.events[0].time);
    }

    #[test]
    fn out_of_range_time() {
        let p = one_jump();
        assert!(matches!(p.state_at(1.5), Err(Error::TimeOutOfRange { .. })));
        assert!(p.state_at(-0.1).is_err());
        assert!(p.state_at(f64::NAN).is_err());
    }

    #[test]
    fn linear_flow() {
        let flow = PathFlow { field: Arc::new(Unit), step: 1e-3, reversed: false };
        let mut p = Trajectory::constant(vec![0.0], 1.0);
        p.terminal_state = vec![1.0];
        p.flow = Some(flow);
        assert!((p.state_at(0.25).unwrap()[0] - 0.25).abs() < 1e-12);
        let r = p.reversed();
        assert!((r.state_at(0.25).unwrap()[0] - 0.75).abs() < 1e-12);
        assert_eq!(r.state_at(0.0).unwrap(), p.state_at(1.0).unwrap());
    }

    #[test]
    fn cursor_ignores_intermediate_queries() {
        let flow = PathFlow { field: Arc::new(Linear), step: 0.01, reversed: false };
        let mut a = FlowCursor::new(&flow, 1.0, 0.0, vec![1.0]);
        let direct = a.position(0.777).unwrap();
        let mut b = FlowCursor::new(&flow, 1.0, 0.0, vec![1.0]);
        for t in [0.1234, 0.5, 0.7001] {
            b.position(t).unwrap();
        }
        assert_eq!(b.position(0.777).unwrap(), direct);
        assert!((direct[0] - (-0.777f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn snapped_times_mirror_exactly() {
        for t in [0.1, 0.3333333, 0.9999999, 1e-20] {
            let s = snap_time(t, 1.0);
            assert!(s > 0.0 && s <= t.max(time_quantum(1.0)));
            assert_eq!(1.0 - (1.0 - s), s);
        }
        let s = snap_time(1.37, 2.5);
        assert_eq!(2.5 - (2.5 - s), s);
    }
}
