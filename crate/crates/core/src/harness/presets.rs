//! Experiment configurations shipped with the library.

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// `(name, TOML text)` for every shipped preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("decompose-noisy", include_str!("../../presets/decompose-noisy.toml")),
    ("decompose", include_str!("../../presets/decompose.toml")),
    ("kappa-decompose-noise0-rho0", include_str!("../../presets/kappa-decompose-noise0-rho0.toml")),
    ("kappa-decompose-noise0-rho05", include_str!("../../presets/kappa-decompose-noise0-rho05.toml")),
    ("kappa-decompose-noise0-rho075", include_str!("../../presets/kappa-decompose-noise0-rho075.toml")),
    ("kappa-decompose-noise05-rho0", include_str!("../../presets/kappa-decompose-noise05-rho0.toml")),
    ("kappa-decompose-noise05-rho05", include_str!("../../presets/kappa-decompose-noise05-rho05.toml")),
    ("kappa-decompose-noise05-rho075", include_str!("../../presets/kappa-decompose-noise05-rho075.toml")),
    ("kappa-decompose-noise1-rho0", include_str!("../../presets/kappa-decompose-noise1-rho0.toml")),
    ("kappa-decompose-noise1-rho05", include_str!("../../presets/kappa-decompose-noise1-rho05.toml")),
    ("kappa-decompose-noise1-rho075", include_str!("../../presets/kappa-decompose-noise1-rho075.toml")),
    ("kappa-regress-noise0-rho0", include_str!("../../presets/kappa-regress-noise0-rho0.toml")),
    ("kappa-regress-noise0-rho05", include_str!("../../presets/kappa-regress-noise0-rho05.toml")),
    ("kappa-regress-noise0-rho075", include_str!("../../presets/kappa-regress-noise0-rho075.toml")),
    ("kappa-regress-noise05-rho0", include_str!("../../presets/kappa-regress-noise05-rho0.toml")),
    ("kappa-regress-noise05-rho05", include_str!("../../presets/kappa-regress-noise05-rho05.toml")),
    ("kappa-regress-noise05-rho075", include_str!("../../presets/kappa-regress-noise05-rho075.toml")),
    ("kappa-regress-noise1-rho0", include_str!("../../presets/kappa-regress-noise1-rho0.toml")),
    ("kappa-regress-noise1-rho05", include_str!("../../presets/kappa-regress-noise1-rho05.toml")),
    ("kappa-regress-noise1-rho075", include_str!("../../presets/kappa-regress-noise1-rho075.toml")),
    ("regress-coherent", include_str!("../../presets/regress-coherent.toml")),
    ("regress", include_str!("../../presets/regress.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}; available: {}", preset_names().collect::<Vec<_>>().join(", "))))
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(preset_text(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{FactorLaw, Task, WeightLaw};

    #[test]
    fn every_preset_parses() {
        for name in preset_names() {
            let c = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(c.replicates, 20, "{name}");
            assert_eq!(c.max_iters, 30, "{name}");
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn kappa_grid_is_complete() {
        let mut seen = Vec::new();
        for name in preset_names().filter(|n| n.starts_with("kappa-")) {
            let c = preset(name).unwrap();
            assert_eq!(c.dims, vec![20, 20, 20]);
            assert_eq!((c.weights, c.kappa, c.factors), (WeightLaw::GeometricKappa, 10.0, FactorLaw::Ar1));
            seen.push((c.task == Task::Regress, (c.noise_sd * 10.0) as i32, (c.rho * 100.0) as i32));
        }
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 18);
    }
}
