//! Seeded synthetic bundles: Gaussian class clusters observed through `L`
//! noisy layers, with an OOD split shifted along the diagonal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::model::{EmbeddingBundle, UNSET_LABEL};

/// Noise distribution of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerNoise {
    Gaussian { scale: f64 },
    /// Scaled Student-t with `dof` degrees of freedom.
    StudentT { scale: f64, dof: f64 },
}

impl LayerNoise {
    pub fn scale(self) -> f64 {
        match self {
            LayerNoise::Gaussian { scale } | LayerNoise::StudentT { scale, .. } => scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub layers: usize,
    pub dim: usize,
    /// Distance of each class center from the origin.
    pub separation: f64,
    /// Length of the OOD shift along the unit diagonal.
    pub shift: f64,
    /// One entry per layer.
    pub noise: Vec<LayerNoise>,
    pub seed: u64,
}

impl SynthSpec {
    /// Isotropic Gaussian noise of scale `sigma` on every layer.
    #[allow(clippy::too_many_arguments)]
    pub fn gaussian(
        classes: usize,
        per_class: usize,
        layers: usize,
        dim: usize,
        separation: f64,
        shift: f64,
        sigma: f64,
        seed: u64,
    ) -> Self {
        SynthSpec {
            classes,
            per_class,
            layers,
            dim,
            separation,
            shift,
            noise: vec![LayerNoise::Gaussian { scale: sigma }; layers],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("synthetic spec", "need at least 2 classes"));
        }
        if self.per_class == 0 || self.layers == 0 || self.dim == 0 {
            return Err(Error::invalid("synthetic spec", "counts must be at least 1"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid("synthetic spec", "separation must be finite and >= 0"));
        }
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return Err(Error::invalid("synthetic spec", "shift must be finite and >= 0"));
        }
        if self.noise.len() != self.layers {
            return Err(Error::DimensionMismatch {
                what: "per-layer noise",
                expected: self.layers,
                found: self.noise.len(),
            });
        }
        for noise in &self.noise {
            let ok = match *noise {
                LayerNoise::Gaussian { scale } => scale > 0.0 && scale.is_finite(),
                LayerNoise::StudentT { scale, dof } => scale > 0.0 && scale.is_finite() && dof > 0.0 && dof.is_finite(),
            };
            if !ok {
                return Err(Error::invalid("synthetic spec", format!("invalid layer noise {noise:?}")));
            }
        }
        Ok(())
    }

    /// Center of class `y`: `separation` times the `(y mod d)`-th basis vector.
    pub fn center(&self, y: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        c[y % self.dim] = self.separation;
        c
    }
}

/// Training, in-distribution test and OOD test bundles.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSplits {
    pub train: EmbeddingBundle,
    pub test_in: EmbeddingBundle,
    pub test_out: EmbeddingBundle,
}

enum Sampler {
    Gaussian(f64),
    StudentT(f64, StudentT<f64>),
}

impl Sampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Gaussian(s) => {
                let z: f64 = StandardNormal.sample(rng);
                s * z
            }
            Sampler::StudentT(s, t) => s * t.sample(rng),
        }
    }
}

fn split(spec: &SynthSpec, samplers: &[Sampler], shift: f64, rng: &mut ChaCha8Rng) -> Result<EmbeddingBundle> {
    let (c, l, d) = (spec.classes, spec.layers, spec.dim);
    let n = c * spec.per_class;
    let centers: Vec<Vec<f64>> = (0..c).map(|y| spec.center(y)).collect();
    let offset = shift / (d as f64).sqrt();

    let mut features = Vec::with_capacity(n * l * d);
    let mut logits = Vec::with_capacity(n * c);
    let mut gold = Vec::with_capacity(n);
    let mut last = vec![0.0f32; d];
    for y in 0..c {
        for _ in 0..spec.per_class {
            for sampler in samplers {
                for (j, slot) in last.iter_mut().enumerate() {
                    *slot = (centers[y][j] + offset + sampler.sample(rng)) as f32;
                }
                features.extend_from_slice(&last);
            }
            // classifier surrogate: negative squared distance of the last layer
            for center in &centers {
                let dist2: f64 = last
                    .iter()
                    .zip(center)
                    .map(|(&v, &m)| (f64::from(v) - m).powi(2))
                    .sum();
                logits.push(-dist2 as f32);
            }
            gold.push(y as i32);
        }
    }
    EmbeddingBundle::from_parts(n, l, d, c, features, logits, gold, vec![UNSET_LABEL; n])
}

/// Draws the three splits from one sequential stream seeded by `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<SynthSplits> {
    spec.validate()?;
    let samplers = spec
        .noise
        .iter()
        .map(|noise| match *noise {
            LayerNoise::Gaussian { scale } => Ok(Sampler::Gaussian(scale)),
            LayerNoise::StudentT { scale, dof } => StudentT::new(dof)
                .map(|t| Sampler::StudentT(scale, t))
                .map_err(|e| Error::invalid("synthetic spec", e.to_string())),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = split(spec, &samplers, 0.0, &mut rng)?;
    let test_in = split(spec, &samplers, 0.0, &mut rng)?;
    let test_out = split(spec, &samplers, spec.shift, &mut rng)?;
    Ok(SynthSplits {
        train,
        test_in,
        test_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::resolve_predicted_labels;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec::gaussian(3, 20, 2, 4, 4.0, 2.0, 1.0, seed)
    }

    #[test]
    fn shapes() {
        let s = generate(&small(1)).unwrap();
        for b in [&s.train, &s.test_in, &s.test_out] {
            assert_eq!((b.n(), b.layers(), b.dim(), b.classes()), (60, 2, 4, 3));
        }
        assert_eq!(s.train.gold_labels()[59], 2);
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small(5)).unwrap(), generate(&small(5)).unwrap());
        assert_ne!(generate(&small(5)).unwrap().train, generate(&small(6)).unwrap().train);
    }

    #[test]
    fn centers_cycle_when_classes_exceed_dim() {
        let spec = SynthSpec::gaussian(5, 1, 1, 3, 2.0, 0.0, 1.0, 0);
        assert_eq!(spec.center(4), vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn predicted_labels_follow_geometry() {
        let spec = SynthSpec::gaussian(3, 100, 2, 8, 6.0, 0.0, 0.5, 3);
        let s = generate(&spec).unwrap();
        let pred = resolve_predicted_labels(&s.train);
        let agree = pred
            .labels()
            .iter()
            .zip(s.train.gold_labels())
            .filter(|(&p, &g)| p as i32 == g)
            .count();
        assert!(agree >= 295, "{agree}");
    }

    #[test]
    fn ood_split_is_shifted() {
        let spec = SynthSpec::gaussian(2, 200, 1, 4, 3.0, 8.0, 1.0, 2);
        let s = generate(&spec).unwrap();
        let mean = |b: &EmbeddingBundle| b.features().iter().map(|&v| f64::from(v)).sum::<f64>() / b.features().len() as f64;
        // per-coordinate shift is 8 / sqrt(4) = 4
        assert!((mean(&s.test_out) - mean(&s.test_in) - 4.0).abs() < 0.2);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = small(0);
        spec.noise[0] = LayerNoise::Gaussian { scale: 0.0 };
        assert!(generate(&spec).is_err());
        let mut spec = small(0);
        spec.noise.pop();
        assert!(generate(&spec).is_err());
        let mut spec = small(0);
        spec.classes = 1;
        assert!(generate(&spec).is_err());
    }
}
