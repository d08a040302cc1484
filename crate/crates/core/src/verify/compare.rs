use std::io::Write;

use super::intensity::IntensityEstimate;
use crate::csvfmt::{num, writer};
use crate::error::{Error, Result};
use crate::reversal::BackwardCharacteristics;
use crate::simulate::Direction;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    /// Time bins whose forward-clock lower edge lies below this are skipped.
    /// Bins starting at `t = 0` are always skipped.
    pub exclude_time_below: f64,
    /// A cell is usable when expected or observed jumps reach this count.
    pub min_count: f64,
    /// Multiplies the theoretical kernel. Anything but 1 is a negative control.
    pub theory_scale: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { exclude_time_below: 0.0, min_count: 10.0, theory_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellComparison {
    /// Time bin in the forward clock.
    pub t_lo: f64,
    pub t_hi: f64,
    pub from: usize,
    pub to: usize,
    pub count: u64,
    pub occupation: f64,
    pub empirical: f64,
    pub theoretical: f64,
    pub standard_error: f64,
    pub z: f64,
    pub usable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversalReport {
    pub cells: Vec<CellComparison>,
    pub n_usable: usize,
    pub within_3: f64,
    pub within_4: f64,
    pub worst: Option<CellComparison>,
    pub pass: bool,
}

impl ReversalReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let header = [
            "t_lo", "t_hi", "from", "to", "count", "occupation", "empirical", "theoretical", "se", "z", "usable",
        ]
        .map(String::from);
        let mut out = writer(w, &header)?;
        for c in &self.cells {
            out.write_record([
                num(c.t_lo),
                num(c.t_hi),
                c.from.to_string(),
                c.to.to_string(),
                c.count.to_string(),
                num(c.occupation),
                num(c.empirical),
                num(c.theoretical),
                num(c.standard_error),
                num(c.z),
                u8::from(c.usable).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Trapezoid weights over the slice times inside `[lo, hi]`.
fn slice_weights(times: &[f64], lo: f64, hi: f64) -> Vec<(usize, f64)> {
    let tol = 1e-12 * hi.abs().max(1.0);
    let inside: Vec<usize> = (0..times.len()).filter(|k| times[*k] >= lo - tol && times[*k] <= hi + tol).collect();
    match inside.len() {
        0 => Vec::new(),
        1 => vec![(inside[0], 1.0)],
        m => (0..m)
            .map(|a| {
                let left = if a == 0 { times[inside[0]] } else { times[inside[a - 1]] };
                let right = if a + 1 == m { times[inside[m - 1]] } else { times[inside[a + 1]] };
                (inside[a], 0.5 * (right - left))
            })
            .collect(),
    }
}

/// Compares jump rates counted on reversed paths with the solved backward
/// kernel. The theoretical rate of a cell is `∫p J← dt / ∫p dt` over the
/// time bin, approximated on the slice grid.
pub fn compare_reversal(
    estimate: &IntensityEstimate,
    backward: &BackwardCharacteristics,
    opts: &CompareOptions,
) -> Result<ReversalReport> {
    if estimate.clock != Direction::Reversed {
        return Err(Error::Config("intensity estimate was not taken on reversed paths".into()));
    }
    if !estimate.bins.matches(&backward.support) {
        return Err(Error::BinMismatch(format!(
            "estimate has {} bins, backward kernel {} states",
            estimate.bins.len(),
            backward.support.len()
        )));
    }
    let nb = estimate.n_bins();
    let horizon = estimate.horizon;
    let mut cells = Vec::new();
    for tb in 0..estimate.n_time_bins() {
        let t_lo = horizon - estimate.time_edges[tb + 1];
        let t_hi = horizon - estimate.time_edges[tb];
        if t_lo <= 0.0 || t_lo < opts.exclude_time_below {
            continue;
        }
        let weights = slice_weights(&backward.times, t_lo, t_hi);
        if weights.is_empty() {
            return Err(Error::BinMismatch(format!("no backward slice inside time bin [{t_lo}, {t_hi}]")));
        }
        for from in 0..nb {
            let mass: f64 = weights.iter().map(|(k, w)| w * backward.marginal[*k][from]).sum();
            let occupation = estimate.occupation(tb, from);
            for to in (0..nb).filter(|to| *to != from) {
                let count = estimate.count(tb, from, to);
                let theoretical = if mass > 0.0 {
                    let flux: f64 =
                        weights.iter().map(|(k, w)| w * backward.marginal[*k][from] * backward.rates[*k][(from, to)]).sum();
                    opts.theory_scale * flux / mass
                } else {
                    0.0
                };
                if theoretical == 0.0 && count == 0 {
                    continue;
                }
                let empirical = if occupation > 0.0 { count as f64 / occupation } else { 0.0 };
                let expected = theoretical * occupation;
                let usable = occupation > 0.0 && expected.max(count as f64) >= opts.min_count;
                let standard_error = if occupation > 0.0 { (theoretical / occupation).sqrt() } else { 0.0 };
                let z = if standard_error > 0.0 {
                    (empirical - theoretical) / standard_error
                } else if count > 0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                cells.push(CellComparison {
                    t_lo,
                    t_hi,
                    from,
                    to,
                    count,
                    occupation,
                    empirical,
                    theoretical,
                    standard_error,
                    z,
                    usable,
                });
            }
        }
    }
    cells.sort_by(|a, b| a.t_lo.total_cmp(&b.t_lo).then(a.from.cmp(&b.from)).then(a.to.cmp(&b.to)));
    let usable: Vec<&CellComparison> = cells.iter().filter(|c| c.usable).collect();
    let n_usable = usable.len();
    let frac = |k: f64| {
        if n_usable == 0 {
            0.0
        } else {
            usable.iter().filter(|c| c.z.abs() <= k).count() as f64 / n_usable as f64
        }
    };
    let (within_3, within_4) = (frac(3.0), frac(4.0));
    let worst = usable.iter().max_by(|a, b| a.z.abs().total_cmp(&b.z.abs())).map(|c| (*c).clone());
    let pass = n_usable > 0 && within_4 >= 0.99 && within_3 >= 0.95;
    Ok(ReversalReport { cells, n_usable, within_3, within_4, worst, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_linear_functions() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let w = slice_weights(&times, 0.2, 0.6);
        assert_eq!(w.len(), 5);
        let total: f64 = w.iter().map(|(_, w)| w).sum();
        assert!((total - 0.4).abs() < 1e-12);
        let first: f64 = w.iter().map(|(k, w)| w * times[*k]).sum();
        assert!((first - 0.16).abs() < 1e-12);
        assert_eq!(slice_weights(&times, 0.25, 0.28), vec![]);
        assert_eq!(slice_weights(&times, 0.3, 0.3), vec![(3, 1.0)]);
    }
}
