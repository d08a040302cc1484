//! Dormand-Prince 5(4) with step-size control.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const MAX_STEPS: usize = 10_000_000;

/// Integrates `y' = f(t, y)` from `t0` to `t1`, landing exactly on `t1`.
pub fn dopri5(
    f: &dyn Fn(f64, &[f64], &mut [f64]),
    t0: f64,
    y0: &[f64],
    t1: f64,
    rtol: f64,
    atol: f64,
) -> Result<Vec<f64>> {
    let n = y0.len();
    let mut y = y0.to_vec();
    if t1 <= t0 {
        return Ok(y);
    }
    let mut t = t0;
    let mut h = (t1 - t0) / 100.0;
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    f(t, &y, &mut k[0]);
    for _ in 0..MAX_STEPS {
        if t >= t1 {
            return Ok(y);
        }
        let last = t + h >= t1;
        let step = if last { t1 - t } else { h };
        for s in 1..7 {
            for i in 0..n {
                stage[i] = y[i] + step * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            f(t + C[s] * step, &stage, &mut k[s]);
        }
        // The seventh stage is evaluated at the 5th-order solution.
        y5.copy_from_slice(&stage);
        let mut err = 0.0;
        for i in 0..n {
            let e = step * (0..7).map(|j| (B5[j] - B4[j]) * k[j][i]).sum::<f64>();
            let scale = atol + rtol * y[i].abs().max(y5[i].abs());
            err += (e / scale).powi(2);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::NegativeProbability { time: t, value: f64::NAN });
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + step };
            y.copy_from_slice(&y5);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = step * factor;
    }
    Err(Error::NegativeProbability { time: t, value: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = dopri5(&|_, y, d| d[0] = -y[0], 0.0, &[1.0], 2.0, 1e-12, 1e-15).unwrap();
        assert!((y[0] - (-2f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn time_dependent_rate() {
        // y' = -(1+t) y
        let y = dopri5(&|t, y, d| d[0] = -(1.0 + t) * y[0], 0.0, &[1.0], 1.0, 1e-11, 1e-15).unwrap();
        assert!((y[0] - (-1.5f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillator() {
        let y = dopri5(&|_, y, d| {
            d[0] = y[1];
            d[1] = -y[0];
        }, 0.0, &[1.0, 0.0], 10.0, 1e-11, 1e-14)
        .unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-8);
    }
}
