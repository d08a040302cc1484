use crate::model::{LevyAtom, LevyDensity, LevyMeasure};

/// The reversal of a Lévy process `(b, Λ)` is `(-b, η#Λ)` with `η(ξ) = -ξ`.
pub fn levy_reverse(b: &[f64], levy: &LevyMeasure) -> (Vec<f64>, LevyMeasure) {
    let drift = b.iter().map(|v| -v).collect();
    let atoms = levy
        .atoms
        .iter()
        .map(|a| LevyAtom { jump: a.jump.iter().map(|c| -c).collect(), weight: a.weight })
        .collect();
    let density = levy.density.as_ref().map(|d| LevyDensity {
        density: d.density.clone(),
        lower: 0.0 - d.upper,
        upper: 0.0 - d.lower,
        reflected: !d.reflected,
    });
    (drift, LevyMeasure { atoms, density })
}
