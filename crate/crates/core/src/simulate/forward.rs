use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use super::ensemble::{spec_fingerprint, Direction, PathEnsemble};
use super::trajectory::{snap_time, FlowCursor, JumpEvent, PathFlow, Trajectory, VectorField};
use crate::error::{Error, Result};
use crate::model::{norm, DriftField, JumpKernel, JumpMenu, ProcessSpec, Shell, StateSpace, TruncationDelta};
use crate::rng::path_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    /// Jumps with `|ξ| <= epsilon` are not simulated; their mean moves into the drift.
    pub epsilon: f64,
    pub max_jumps: usize,
    /// RK4 steps per horizon.
    pub ode_steps: usize,
    /// Look-ahead window of the thinning majorant, as a fraction of `T`.
    pub window_fraction: f64,
    pub bound_safety: f64,
    /// How far a flowing state may leave the bounding box.
    pub box_margin: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            epsilon: 0.0,
            max_jumps: 1_000_000,
            ode_steps: 1000,
            window_fraction: 0.1,
            bound_safety: 1.2,
            box_margin: 1.0,
        }
    }
}

/// `b_eff = b^δ + ∫(ξ 1{|ξ|≤ε} - ⌊ξ⌋^δ) K(dξ)`: the drift that, together with
/// the jumps above `ε`, reproduces the generator to first order in small jumps.
#[derive(Debug)]
pub struct EffectiveDrift {
    drift: DriftField,
    kernel: JumpKernel,
    delta: TruncationDelta,
    epsilon: f64,
    /// The kernel term, when it is the same everywhere.
    shift: Option<Vec<f64>>,
}

impl EffectiveDrift {
    pub fn new(spec: &ProcessSpec, epsilon: f64) -> Self {
        let mut field =
            EffectiveDrift { drift: spec.drift.clone(), kernel: spec.kernel.clone(), delta: spec.delta, epsilon, shift: None };
        if spec.kernel.is_homogeneous() {
            field.shift = field.kernel_term(0.0, &vec![0.0; spec.dimension()]).ok();
        }
        field
    }

    fn kernel_term(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let (eps, delta) = (self.epsilon, self.delta.value());
        if eps == delta {
            return Ok(vec![0.0; x.len()]);
        }
        let shell = Shell { lo: eps.min(delta), hi: eps.max(delta) };
        let sign = if eps > delta { 1.0 } else { -1.0 };
        Ok(self.kernel.first_moment(t, x, shell)?.into_iter().map(|m| sign * m).collect())
    }

    /// True when `b_eff` vanishes by construction.
    pub fn is_trivial(&self) -> bool {
        let cancels = match &self.drift {
            DriftField::Compensator { kernel, delta } => {
                **kernel == self.kernel && *delta == self.delta && self.epsilon == 0.0
            }
            d => d.is_zero() && self.epsilon == self.delta.value(),
        };
        cancels || (self.drift.is_zero() && self.epsilon == 0.0 && self.delta.is_zero())
    }
}

impl VectorField for EffectiveDrift {
    fn velocity(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = self.drift.evaluate(t, x)?;
        let m = match &self.shift {
            Some(m) => m.clone(),
            None => self.kernel_term(t, x)?,
        };
        for (a, b) in v.iter_mut().zip(m) {
            *a += b;
        }
        Ok(v)
    }
}

struct Simulator<'a> {
    spec: &'a ProcessSpec,
    opts: &'a SimulationOptions,
    flow: Option<PathFlow>,
    field: Arc<EffectiveDrift>,
    window: f64,
    /// Rate and menu of a homogeneous kernel.
    fixed: Option<(f64, JumpMenu)>,
}

impl Simulator<'_> {
    fn rate(&self, t: f64, x: &[f64]) -> Result<f64> {
        if let Some((rate, _)) = &self.fixed {
            return Ok(*rate);
        }
        let q = self.spec.kernel.total_rate(t, x, self.opts.epsilon);
        if q.diverged {
            return Err(Error::InvalidSpec(format!(
                "infinite jump activity above epsilon={} at x={x:?}; increase epsilon",
                self.opts.epsilon
            )));
        }
        Ok(q.value)
    }

    fn majorant(&self, t0: f64, t1: f64, x: &[f64]) -> Result<f64> {
        let mut points = vec![x.to_vec()];
        if self.flow.is_some() {
            let speed = norm(&self.field.velocity(t0, x)?);
            let radius = (t1 - t0) * 2.0 * speed;
            if radius > 0.0 {
                for d in 0..x.len() {
                    for s in [-1.0, 1.0] {
                        let mut p = x.to_vec();
                        p[d] += s * radius;
                        points.push(p);
                    }
                }
            }
        }
        let mut best = 0.0f64;
        for k in 0..=4 {
            let t = t0 + (t1 - t0) * k as f64 / 4.0;
            for p in &points {
                best = best.max(self.rate(t, p)?);
            }
        }
        Ok(self.opts.bound_safety * best)
    }

    fn check_state(&self, t: f64, x: &[f64]) -> Result<()> {
        if x.iter().any(|c| !c.is_finite()) || !self.spec.space.within_box(x, self.opts.box_margin) {
            return Err(Error::NonfiniteState { time: t, state: x.to_vec() });
        }
        Ok(())
    }

    fn check_discrete_drift(&self, t: f64, x: &[f64]) -> Result<()> {
        if self.field.is_trivial() {
            return Ok(());
        }
        let v = self.field.velocity(t, x)?;
        if norm(&v) > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "discrete state spaces need a vanishing effective drift, found {v:?} at x={x:?}"
            )));
        }
        Ok(())
    }

    fn land(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a + b).collect();
        match &self.spec.space {
            StateSpace::Finite { embedding } => match embedding.index_of(&y) {
                Some(i) => embedding.point(i).to_vec(),
                None => y,
            },
            StateSpace::Lattice { step, .. } => y.iter().map(|c| (c / step).round() * step).collect(),
            StateSpace::Continuous { .. } => y,
        }
    }

    fn path(&self, seed: u64, index: usize) -> Result<Trajectory> {
        let horizon = self.spec.horizon;
        let mut rng = path_rng(seed, index as u64);
        let x0 = self.spec.initial.sample(&mut rng)?;
        let discrete = !matches!(self.spec.space, StateSpace::Continuous { .. });
        let mut events: Vec<JumpEvent> = Vec::new();
        let mut t = 0.0;
        let mut x = x0.clone();
        let mut cursor = self.flow.as_ref().map(|f| FlowCursor::new(f, horizon, 0.0, x0.clone()));
        if discrete {
            self.check_discrete_drift(0.0, &x)?;
        }
        while t < horizon {
            let t_end = (t + self.window).min(horizon);
            let bound = self.majorant(t, t_end, &x)?;
            let mut s = t;
            let mut jumped = false;
            while bound > 0.0 {
                let tau: f64 = rng.sample(Exp1);
                s += tau / bound;
                if s >= t_end {
                    break;
                }
                let candidate = snap_time(s, horizon);
                if events.last().is_some_and(|e| e.time >= candidate) || candidate >= horizon {
                    continue;
                }
                let xs = match cursor.as_mut() {
                    Some(c) => c.position(candidate)?,
                    None => x.clone(),
                };
                self.check_state(candidate, &xs)?;
                let lambda = self.rate(candidate, &xs)?;
                if lambda > bound {
                    return Err(Error::IntensityBoundExceeded { time: candidate, intensity: lambda, bound });
                }
                if rng.gen::<f64>() * bound < lambda {
                    let menu = match &self.fixed {
                        Some((_, m)) => m.clone(),
                        None => self.spec.kernel.jump_menu(candidate, &xs, self.opts.epsilon)?,
                    };
                    let (u, v): (f64, f64) = (rng.gen(), rng.gen());
                    let to = self.land(&xs, &menu.pick(u, v));
                    self.check_state(candidate, &to)?;
                    if discrete {
                        self.check_discrete_drift(candidate, &to)?;
                    }
                    events.push(JumpEvent { time: candidate, from: xs, to: to.clone() });
                    if events.len() > self.opts.max_jumps {
                        return Err(Error::ExplosionDetected { path: index, max_jumps: self.opts.max_jumps });
                    }
                    if let Some(f) = &self.flow {
                        cursor = Some(FlowCursor::new(f, horizon, candidate, to.clone()));
                    }
                    x = to;
                    t = candidate;
                    jumped = true;
                    break;
                }
            }
            if !jumped {
                t = t_end;
                if let Some(c) = cursor.as_mut() {
                    x = c.position(t)?;
                    self.check_state(t, &x)?;
                }
            }
        }
        Ok(Trajectory { initial_state: x0, terminal_state: x, events, horizon, flow: self.flow.clone() })
    }
}

/// Monte Carlo paths of the process by thinning, run in parallel with one
/// random stream per path index.
pub fn simulate_forward(
    spec: &ProcessSpec,
    n_paths: usize,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be positive".into()));
    }
    if !(opts.epsilon >= 0.0) || opts.ode_steps == 0 || !(opts.window_fraction > 0.0) || !(opts.bound_safety >= 1.0)
    {
        return Err(Error::Config("invalid simulation options".into()));
    }
    let report = spec.validate()?;
    if !report.finite_activity && opts.epsilon == 0.0 {
        return Err(Error::InvalidSpec("infinite-activity kernel needs epsilon > 0".into()));
    }
    let field = Arc::new(EffectiveDrift::new(spec, opts.epsilon));
    let discrete = !matches!(spec.space, StateSpace::Continuous { .. });
    let flow = (!discrete && !field.is_trivial()).then(|| PathFlow {
        field: field.clone() as Arc<dyn VectorField>,
        step: spec.horizon / opts.ode_steps as f64,
        reversed: false,
    });
    let mut sim = Simulator { spec, opts, flow, field, window: opts.window_fraction * spec.horizon, fixed: None };
    if spec.kernel.is_homogeneous() {
        let origin = vec![0.0; spec.dimension()];
        sim.fixed = Some((sim.rate(0.0, &origin)?, spec.kernel.jump_menu(0.0, &origin, opts.epsilon)?));
    }
    let paths = (0..n_paths).into_par_iter().map(|i| sim.path(seed, i)).collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        fingerprint: spec_fingerprint(spec),
        seed,
        direction: Direction::Forward,
        horizon: spec.horizon,
        paths,
    })
}
