//! Morphological perturbation contexts.
//!
//! An episode's body is described by a vector of relative deviations
//! `c in [-sigma, sigma]^P` applied to link thicknesses and lengths; the
//! five components map to (torso thickness, limb thickness, foot thickness,
//! limb length, foot length) for both planar bodies. Perturbed value =
//! base * (1 + c_i); link mass follows the cylinder rule
//! `density * length * thickness^2`.

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::rng::Rng;

/// Number of perturbation components for the planar bodies.
pub const PERTURBATION_DIM: usize = 5;

/// Component indices into a perturbation vector.
pub mod component {
    pub const TORSO_THICKNESS: usize = 0;
    pub const LIMB_THICKNESS: usize = 1;
    pub const FOOT_THICKNESS: usize = 2;
    pub const LIMB_LENGTH: usize = 3;
    pub const FOOT_LENGTH: usize = 4;
}

/// One episode's body: the bound `sigma` and the sampled deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphologyContext {
    sigma: f64,
    components: Vec<f64>,
}

impl MorphologyContext {
    pub fn new(sigma: f64, components: Vec<f64>) -> Result<Self, EnvError> {
        if sigma < 0.0 {
            return Err(EnvError::InvalidContext(format!("sigma {sigma} < 0")));
        }
        for (i, &c) in components.iter().enumerate() {
            if !c.is_finite() || c.abs() > sigma + 1e-12 {
                return Err(EnvError::InvalidContext(format!(
                    "component {i} = {c} outside [-{sigma}, {sigma}]"
                )));
            }
        }
        Ok(MorphologyContext { sigma, components })
    }

    /// The unperturbed body.
    pub fn nominal(dim: usize) -> Self {
        MorphologyContext { sigma: 0.0, components: vec![0.0; dim] }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Euclidean norm of the deviation vector (the "perturbation intensity").
    pub fn intensity(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Draw each component i.i.d. uniform on `[-sigma, sigma]`.
pub fn sample_morphology(sigma: f64, dim: usize, rng: &mut Rng) -> MorphologyContext {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    let components = (0..dim).map(|_| rng.uniform_range(-sigma, sigma)).collect();
    MorphologyContext { sigma, components }
}

/// Morphology for one training episode, on its own seed stream.
pub fn episode_morphology(sigma: f64, dim: usize, seed: u64, episode: u64) -> MorphologyContext {
    let mut rng = Rng::stream(seed, "train-episode-morphology", &[episode]);
    sample_morphology(sigma, dim, &mut rng)
}

/// A fixed test set of `n` morphologies. The stream label keeps the seeding
/// domain disjoint from training episodes.
pub fn make_test_set(sigma: f64, dim: usize, n: usize, seed: u64) -> Vec<MorphologyContext> {
    assert!(n >= 1, "test set needs at least one morphology");
    (0..n)
        .map(|i| {
            let mut rng = Rng::stream(seed, "test-set-morphology", &[i as u64]);
            sample_morphology(sigma, dim, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_gives_the_nominal_body() {
        let mut rng = Rng::new(1);
        let ctx = sample_morphology(0.0, PERTURBATION_DIM, &mut rng);
        assert_eq!(ctx.components(), &[0.0; 5]);
    }

    #[test]
    fn components_stay_in_bounds_and_mean_vanishes() {
        let sigma = 0.5;
        let n = 10_000;
        let mut sum = 0.0;
        for i in 0..n {
            let mut rng = Rng::stream(42, "bounds-test", &[i]);
            let ctx = sample_morphology(sigma, PERTURBATION_DIM, &mut rng);
            for &c in ctx.components() {
                assert!(c.abs() <= sigma);
                sum += c;
            }
        }
        // mean of U(-s, s) is 0 with sd s/sqrt(3); 3 standard errors
        let draws = (n as usize * PERTURBATION_DIM) as f64;
        let se = sigma / 3f64.sqrt() / draws.sqrt();
        assert!(
            (sum / draws).abs() < 3.0 * se,
            "empirical mean {} exceeds 3 se {}",
            sum / draws,
            3.0 * se
        );
    }

    #[test]
    fn same_seed_reproduces_the_vector() {
        let a = episode_morphology(0.3, PERTURBATION_DIM, 9, 4);
        let b = episode_morphology(0.3, PERTURBATION_DIM, 9, 4);
        assert_eq!(a, b);
    }

    #[test]
    fn test_sets_are_deterministic_and_seed_sensitive() {
        let a = make_test_set(0.3, PERTURBATION_DIM, 100, 7);
        let b = make_test_set(0.3, PERTURBATION_DIM, 100, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        for ctx in &a {
            for &c in ctx.components() {
                assert!(c.abs() <= 0.3);
            }
        }
        let c = make_test_set(0.3, PERTURBATION_DIM, 100, 8);
        assert_ne!(a, c);
    }
}
