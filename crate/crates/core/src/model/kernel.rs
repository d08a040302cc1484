//! Jump kernels `K_{t,x}(dξ)`, indexed by the jump `ξ = y - x`.

use nalgebra::DMatrix;

use super::functions::norm;
use super::quadrature::{gauss_legendre, integrate_radial, radial_cells, QuadOutcome};
use super::space::Embedding;
use crate::error::{Error, Result};
use crate::expr::{Expr, VarKind, Vars};

/// A jump `ξ` fired at rate `λ(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub jump: Vec<f64>,
    pub rate: Expr,
}

/// A one-dimensional intensity density `k(t, x, ξ)` supported on `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpDensity {
    pub density: Expr,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyAtom {
    pub jump: Vec<f64>,
    pub weight: f64,
}

/// A state-independent density `k(ξ)` on `[lower, upper]`. When `reflected`
/// is set the stored expression is read at `-ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyDensity {
    pub density: Expr,
    pub lower: f64,
    pub upper: f64,
    pub reflected: bool,
}

impl LevyDensity {
    pub fn eval(&self, xi: f64) -> f64 {
        let arg = if self.reflected { -xi } else { xi };
        self.density.eval(&Vars::jump(0.0, &[], &[], &[arg]))
    }
}

/// A Lévy measure: atoms plus an optional one-dimensional density.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyMeasure {
    pub atoms: Vec<LevyAtom>,
    pub density: Option<LevyDensity>,
}

/// Source of the off-diagonal rates of a finite chain.
#[derive(Debug, Clone, PartialEq)]
pub enum RateSource {
    Constant(DMatrix<f64>),
    /// Entries as functions of `t`; `None` is a zero rate.
    Expressions(Vec<Vec<Option<Expr>>>),
    /// Piecewise constant in time: slice `i` applies on `[times[i], times[i+1])`.
    Slices { times: Vec<f64>, matrices: Vec<DMatrix<f64>> },
    /// Restriction of an atomic kernel to the embedded states; jumps landing
    /// outside the state set are dropped.
    Projected(Box<JumpKernel>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    pub embedding: Embedding,
    pub source: RateSource,
}

impl RateMatrix {
    pub fn constant(embedding: Embedding, rates: DMatrix<f64>) -> Self {
        RateMatrix { embedding, source: RateSource::Constant(rates) }
    }

    pub fn slices(embedding: Embedding, times: Vec<f64>, matrices: Vec<DMatrix<f64>>) -> Self {
        RateMatrix { embedding, source: RateSource::Slices { times, matrices } }
    }

    pub fn n_states(&self) -> usize {
        self.embedding.len()
    }

    fn slice_index(times: &[f64], t: f64) -> usize {
        times.partition_point(|s| *s <= t).saturating_sub(1)
    }

    /// Visit `(j, rate)` for the off-diagonal entries of row `i` at time `t`.
    pub fn for_each_in_row(&self, t: f64, i: usize, f: &mut dyn FnMut(usize, f64)) {
        match &self.source {
            RateSource::Constant(m) => {
                for j in 0..m.ncols() {
                    if j != i && m[(i, j)] != 0.0 {
                        f(j, m[(i, j)]);
                    }
                }
            }
            RateSource::Expressions(rows) => {
                let vars = Vars::at(t, &[]);
                for (j, e) in rows[i].iter().enumerate() {
                    if let (true, Some(e)) = (j != i, e) {
                        f(j, e.eval(&vars));
                    }
                }
            }
            RateSource::Slices { times, matrices } => {
                let m = &matrices[Self::slice_index(times, t)];
                for j in 0..m.ncols() {
                    if j != i && m[(i, j)] != 0.0 {
                        f(j, m[(i, j)]);
                    }
                }
            }
            RateSource::Projected(kernel) => {
                let x = self.embedding.point(i);
                let mut landing = vec![0.0; x.len()];
                kernel.for_each_atom(t, x, &mut |xi, rate| {
                    for (l, (a, b)) in landing.iter_mut().zip(x.iter().zip(xi)) {
                        *l = a + b;
                    }
                    if let Some(j) = self.embedding.index_of(&landing) {
                        if j != i {
                            f(j, rate);
                        }
                    }
                });
            }
        }
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let n = self.n_states();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            self.for_each_in_row(t, i, &mut |j, r| m[(i, j)] += r);
        }
        m
    }

    pub fn depends_on_time(&self) -> bool {
        match &self.source {
            RateSource::Constant(_) => false,
            RateSource::Expressions(rows) => {
                rows.iter().flatten().flatten().any(|e| e.uses(VarKind::Time))
            }
            RateSource::Slices { times, .. } => times.len() > 1,
            RateSource::Projected(k) => k.depends_on_time(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_states();
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match &self.source {
            RateSource::Constant(m) => check_rate_matrix(m, n)?,
            RateSource::Expressions(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return bad(format!("rate expressions must be {n}x{n}"));
                }
                for (i, row) in rows.iter().enumerate() {
                    if row[i].is_some() {
                        return bad(format!("rate expression on the diagonal at state {i}"));
                    }
                    for e in row.iter().flatten() {
                        e.check_scope(&[VarKind::Time], 0)?;
                    }
                }
            }
            RateSource::Slices { times, matrices } => {
                if times.is_empty() || times.len() != matrices.len() {
                    return bad("rate slices need one matrix per time".into());
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("rate slice times must increase".into());
                }
                for m in matrices {
                    check_rate_matrix(m, n)?;
                }
            }
            RateSource::Projected(k) => {
                if k.has_density() {
                    return bad("only atomic kernels can be projected onto finite states".into());
                }
                k.validate(self.embedding.dimension())?;
            }
        }
        Ok(())
    }
}

fn check_rate_matrix(m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidSpec(format!("rate matrix must be {n}x{n}")));
    }
    for i in 0..n {
        for j in 0..n {
            let r = m[(i, j)];
            if !r.is_finite() || r < 0.0 {
                return Err(Error::InvalidSpec(format!("rate ({i},{j}) = {r} must be finite and >= 0")));
            }
            if i == j && r != 0.0 {
                return Err(Error::InvalidSpec(format!("rate matrix diagonal must be zero at {i}")));
            }
        }
    }
    Ok(())
}

/// Range of jump norms `|ξ| ∈ (lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shell {
    pub lo: f64,
    pub hi: f64,
}

impl Shell {
    pub const ALL: Shell = Shell { lo: 0.0, hi: f64::INFINITY };

    pub fn above(lo: f64) -> Self {
        Shell { lo, hi: f64::INFINITY }
    }

    pub fn within(hi: f64) -> Self {
        Shell { lo: 0.0, hi }
    }

    pub fn contains(&self, r: f64) -> bool {
        r > self.lo && r <= self.hi
    }
}

/// Jumps available at `(t, x)` above a cutoff, ready for sampling.
#[derive(Debug, Clone, Default)]
pub struct JumpMenu {
    pub atoms: Vec<(Vec<f64>, f64)>,
    /// One-dimensional cells `[a, b]` in ξ with their mass.
    pub cells: Vec<(f64, f64, f64)>,
    pub total: f64,
}

impl JumpMenu {
    /// Pick a jump from a uniform `u` in `[0, 1)`; `v` places the jump inside a
    /// density cell.
    pub fn pick(&self, u: f64, v: f64) -> Vec<f64> {
        let mut target = u * self.total;
        for (xi, rate) in &self.atoms {
            if target < *rate {
                return xi.clone();
            }
            target -= rate;
        }
        for (a, b, mass) in &self.cells {
            if target < *mass {
                return vec![a + v * (b - a)];
            }
            target -= mass;
        }
        // Round-off at the upper end.
        if let Some((a, b, _)) = self.cells.last() {
            return vec![a + v * (b - a)];
        }
        self.atoms.last().map(|(xi, _)| xi.clone()).unwrap_or_default()
    }
}

const CELLS_PER_BAND: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum JumpKernel {
    FiniteRateMatrix(RateMatrix),
    Atomic(Vec<Atom>),
    Density(JumpDensity),
    Levy(LevyMeasure),
    /// `j(t, x, y) · base(dy)`.
    Tilted { base: Box<JumpKernel>, tilt: Expr },
}

impl JumpKernel {
    pub fn tilted(base: JumpKernel, tilt: Expr) -> Self {
        JumpKernel::Tilted { base: Box::new(base), tilt }
    }

    pub fn dimension(&self) -> usize {
        match self {
            JumpKernel::FiniteRateMatrix(m) => m.embedding.dimension(),
            JumpKernel::Atomic(atoms) => atoms.first().map_or(1, |a| a.jump.len()),
            JumpKernel::Density(_) => 1,
            JumpKernel::Levy(l) => l.atoms.first().map_or(1, |a| a.jump.len()),
            JumpKernel::Tilted { base, .. } => base.dimension(),
        }
    }

    pub fn has_density(&self) -> bool {
        match self {
            JumpKernel::FiniteRateMatrix(_) | JumpKernel::Atomic(_) => false,
            JumpKernel::Density(_) => true,
            JumpKernel::Levy(l) => l.density.is_some(),
            JumpKernel::Tilted { base, .. } => base.has_density(),
        }
    }

    pub fn depends_on_time(&self) -> bool {
        match self {
            JumpKernel::FiniteRateMatrix(m) => m.depends_on_time(),
            JumpKernel::Atomic(atoms) => atoms.iter().any(|a| a.rate.uses(VarKind::Time)),
            JumpKernel::Density(d) => d.density.uses(VarKind::Time),
            JumpKernel::Levy(_) => false,
            JumpKernel::Tilted { base, tilt } => base.depends_on_time() || tilt.uses(VarKind::Time),
        }
    }

    /// True when the kernel depends on neither `t` nor `x`.
    pub fn is_homogeneous(&self) -> bool {
        let fixed = |e: &Expr| !e.uses(VarKind::Time) && !e.uses(VarKind::Point) && !e.uses(VarKind::Landing);
        match self {
            JumpKernel::FiniteRateMatrix(_) => false,
            JumpKernel::Atomic(atoms) => atoms.iter().all(|a| fixed(&a.rate)),
            JumpKernel::Density(d) => fixed(&d.density),
            JumpKernel::Levy(_) => true,
            JumpKernel::Tilted { base, tilt } => base.is_homogeneous() && fixed(tilt),
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match self {
            JumpKernel::FiniteRateMatrix(m) => {
                if m.embedding.dimension() != dimension {
                    return bad("rate matrix embedding dimension mismatch".into());
                }
                m.validate()?;
            }
            JumpKernel::Atomic(atoms) => {
                if atoms.is_empty() {
                    return bad("atomic kernel needs at least one atom".into());
                }
                for a in atoms {
                    check_jump(&a.jump, dimension)?;
                    a.rate.check_scope(&[VarKind::Time, VarKind::Point], dimension)?;
                }
            }
            JumpKernel::Density(d) => {
                if dimension != 1 {
                    return bad("density kernels are one-dimensional".into());
                }
                check_support(d.lower, d.upper)?;
                d.density.check_scope(&[VarKind::Time, VarKind::Point, VarKind::Jump], 1)?;
            }
            JumpKernel::Levy(l) => {
                for a in &l.atoms {
                    check_jump(&a.jump, dimension)?;
                    if !(a.weight >= 0.0) || !a.weight.is_finite() {
                        return bad(format!("Lévy atom weight {} must be finite and >= 0", a.weight));
                    }
                }
                if let Some(d) = &l.density {
                    if dimension != 1 {
                        return bad("Lévy densities are one-dimensional".into());
                    }
                    check_support(d.lower, d.upper)?;
                    d.density.check_scope(&[VarKind::Jump], 1)?;
                }
                if l.atoms.is_empty() && l.density.is_none() {
                    return bad("Lévy measure is empty".into());
                }
            }
            JumpKernel::Tilted { base, tilt } => {
                base.validate(dimension)?;
                tilt.check_scope(
                    &[VarKind::Time, VarKind::Point, VarKind::Landing, VarKind::Jump],
                    dimension,
                )?;
            }
        }
        Ok(())
    }

    /// Visit the atomic part of `K_{t,x}` as `(ξ, rate)` pairs.
    pub fn for_each_atom(&self, t: f64, x: &[f64], f: &mut dyn FnMut(&[f64], f64)) {
        match self {
            JumpKernel::FiniteRateMatrix(m) => {
                let Some(i) = m.embedding.index_of(x) else { return };
                let mut xi = vec![0.0; x.len()];
                m.for_each_in_row(t, i, &mut |j, rate| {
                    for (d, (p, q)) in xi.iter_mut().zip(m.embedding.point(j).iter().zip(x)) {
                        *d = p - q;
                    }
                    f(&xi, rate);
                });
            }
            JumpKernel::Atomic(atoms) => {
                let vars = Vars::at(t, x);
                for a in atoms {
                    f(&a.jump, a.rate.eval(&vars));
                }
            }
            JumpKernel::Density(_) => {}
            JumpKernel::Levy(l) => {
                for a in &l.atoms {
                    f(&a.jump, a.weight);
                }
            }
            JumpKernel::Tilted { base, tilt } => {
                let mut y = vec![0.0; x.len()];
                base.for_each_atom(t, x, &mut |xi, rate| {
                    for (l, (a, b)) in y.iter_mut().zip(x.iter().zip(xi)) {
                        *l = a + b;
                    }
                    let j = tilt.eval(&Vars::jump(t, x, &y, xi));
                    f(xi, j * rate);
                });
            }
        }
    }

    /// Support `[lower, upper]` of the density part, if any.
    pub fn density_support(&self) -> Option<(f64, f64)> {
        match self {
            JumpKernel::Density(d) => Some((d.lower, d.upper)),
            JumpKernel::Levy(l) => l.density.as_ref().map(|d| (d.lower, d.upper)),
            JumpKernel::Tilted { base, .. } => base.density_support(),
            _ => None,
        }
    }

    /// Density part `k(t, x, ξ)` for one-dimensional kernels.
    pub fn density_at(&self, t: f64, x: &[f64], xi: f64) -> f64 {
        match self {
            JumpKernel::Density(d) => {
                if xi < d.lower || xi > d.upper {
                    return 0.0;
                }
                d.density.eval(&Vars::jump(t, x, &[], &[xi]))
            }
            JumpKernel::Levy(l) => match &l.density {
                Some(d) if xi >= d.lower && xi <= d.upper => d.eval(xi),
                _ => 0.0,
            },
            JumpKernel::Tilted { base, tilt } => {
                let k = base.density_at(t, x, xi);
                if k == 0.0 {
                    return 0.0;
                }
                let y = [x[0] + xi];
                k * tilt.eval(&Vars::jump(t, x, &y, &[xi]))
            }
            _ => 0.0,
        }
    }

    /// `∫ g(ξ) 1{|ξ| ∈ shell} K_{t,x}(dξ)`.
    pub fn integrate(&self, t: f64, x: &[f64], g: &dyn Fn(&[f64]) -> f64, shell: Shell) -> QuadOutcome {
        let mut atoms = 0.0;
        self.for_each_atom(t, x, &mut |xi, rate| {
            let r = norm(xi);
            if r > 0.0 && shell.contains(r) && rate != 0.0 {
                atoms += g(xi) * rate;
            }
        });
        let mut out = QuadOutcome::finite(atoms);
        if let Some((lower, upper)) = self.density_support() {
            // positive jumps: ξ = r
            let (a, b) = (shell.lo.max(lower.max(0.0)), shell.hi.min(upper));
            if b > a {
                out = out.combine(integrate_radial(|r| g(&[r]) * self.density_at(t, x, r), a, b));
            }
            // negative jumps: ξ = -r
            let (a, b) = (shell.lo.max((-upper).max(0.0)), shell.hi.min(-lower));
            if b > a {
                out = out.combine(integrate_radial(|r| g(&[-r]) * self.density_at(t, x, -r), a, b));
            }
        }
        out
    }

    /// Total intensity of jumps with `|ξ| > cutoff`.
    pub fn total_rate(&self, t: f64, x: &[f64], cutoff: f64) -> QuadOutcome {
        self.integrate(t, x, &|_| 1.0, Shell::above(cutoff))
    }

    /// `∫ ξ 1{|ξ| ∈ shell} K_{t,x}(dξ)`, componentwise.
    pub fn first_moment(&self, t: f64, x: &[f64], shell: Shell) -> Result<Vec<f64>> {
        let dim = x.len();
        let mut out = vec![0.0; dim];
        if !self.has_density() {
            self.for_each_atom(t, x, &mut |xi, rate| {
                let r = norm(xi);
                if r > 0.0 && shell.contains(r) {
                    for (o, c) in out.iter_mut().zip(xi) {
                        *o += c * rate;
                    }
                }
            });
            return Ok(out);
        }
        for (d, o) in out.iter_mut().enumerate() {
            let q = self.integrate(t, x, &|xi| xi[d], shell);
            if q.diverged {
                return Err(Error::QuadratureDivergence(format!(
                    "first moment over |ξ| in ({}, {}] at t={t}, x={x:?}",
                    shell.lo, shell.hi
                )));
            }
            *o = q.value;
        }
        Ok(out)
    }

    /// Jumps with `|ξ| > cutoff` at `(t, x)`, split into sampling cells.
    pub fn jump_menu(&self, t: f64, x: &[f64], cutoff: f64) -> Result<JumpMenu> {
        let mut menu = JumpMenu::default();
        let mut negative = None;
        self.for_each_atom(t, x, &mut |xi, rate| {
            if rate < 0.0 || !rate.is_finite() {
                negative = Some(rate);
            }
            let r = norm(xi);
            if rate > 0.0 && r > cutoff {
                menu.atoms.push((xi.to_vec(), rate));
                menu.total += rate;
            }
        });
        if let Some(rate) = negative {
            return Err(Error::InvalidSpec(format!("negative or non-finite jump rate {rate} at t={t}, x={x:?}")));
        }
        if let Some((lower, upper)) = self.density_support() {
            let mut push = |a: f64, b: f64| -> Result<()> {
                let mass = gauss_legendre(|xi| self.density_at(t, x, xi), a, b);
                if mass < 0.0 || !mass.is_finite() {
                    return Err(Error::InvalidSpec(format!("density mass {mass} on [{a}, {b}] at x={x:?}")));
                }
                if mass > 0.0 {
                    menu.cells.push((a, b, mass));
                    menu.total += mass;
                }
                Ok(())
            };
            let lo = if lower > 0.0 { lower.max(cutoff) } else { cutoff };
            if upper > lo {
                for (a, b) in radial_cells(lo, upper, CELLS_PER_BAND) {
                    push(a, b)?;
                }
            }
            let lo = if upper < 0.0 { (-upper).max(cutoff) } else { cutoff };
            if -lower > lo {
                for (a, b) in radial_cells(lo, -lower, CELLS_PER_BAND) {
                    push(-b, -a)?;
                }
            }
        }
        Ok(menu)
    }

    /// Rates between the embedded states at time `t`. Jumps landing outside
    /// the state set are dropped.
    pub fn rate_matrix_at(&self, t: f64, embedding: &Embedding) -> Result<DMatrix<f64>> {
        if self.has_density() {
            return Err(Error::InvalidSpec("kernels with a density part have no rate matrix".into()));
        }
        if let JumpKernel::FiniteRateMatrix(m) = self {
            if m.embedding.matches(embedding) {
                return Ok(m.at(t));
            }
        }
        let n = embedding.len();
        let mut out = DMatrix::zeros(n, n);
        let mut landing = vec![0.0; embedding.dimension()];
        for i in 0..n {
            let x = embedding.point(i);
            self.for_each_atom(t, x, &mut |xi, rate| {
                for (l, (a, b)) in landing.iter_mut().zip(x.iter().zip(xi)) {
                    *l = a + b;
                }
                if let Some(j) = embedding.index_of(&landing) {
                    if j != i {
                        out[(i, j)] += rate;
                    }
                }
            });
        }
        Ok(out)
    }
}

fn check_jump(jump: &[f64], dimension: usize) -> Result<()> {
    if jump.len() != dimension {
        return Err(Error::InvalidSpec(format!("jump {jump:?} has wrong dimension (expected {dimension})")));
    }
    if jump.iter().any(|c| !c.is_finite()) || norm(jump) == 0.0 {
        return Err(Error::InvalidSpec(format!("jump {jump:?} must be finite and nonzero")));
    }
    Ok(())
}

fn check_support(lower: f64, upper: f64) -> Result<()> {
    if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
        return Err(Error::InvalidSpec(format!("density support [{lower}, {upper}] must be a finite interval")));
    }
    Ok(())
}
