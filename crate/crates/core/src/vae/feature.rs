use alloc::vec::Vec;

use super::{dice_value, soft_dice_per_channel, to_f64, VaeModel};
use crate::dice::one_hot_encode;
use crate::nn::{FeatureMap, Real};
use crate::preprocess::crop_to_centroid_cube;
use crate::rng::{derive_seed, seeded, standard_normal};
use crate::volume::{SoftMask, VolumetricMask};
use crate::{Error, Result};

/// `KL[N(μ, diag(exp(log σ²))) ‖ N(0, I)] = ½·Σ(exp(lv) + μ² − 1 − lv)`.
pub fn kl_divergence(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(&m, &lv)| (libm::expm1(lv) - lv).max(0.0) + m * m)
        .sum::<f64>()
}

/// `z = μ + exp(log σ² / 2) ⊙ ε` with `ε ~ N(0, I)` drawn from `seed`.
pub fn reparameterize(mu: &[f64], log_var: &[f64], seed: u64) -> Result<Vec<f64>> {
    if mu.len() != log_var.len() {
        return Err(Error::invalid("mu and log_var lengths differ"));
    }
    let mut rng = seeded(seed);
    Ok(mu
        .iter()
        .zip(log_var)
        .map(|(&m, &lv)| m + libm::exp(lv / 2.0) * standard_normal(&mut rng))
        .collect())
}

/// How the latent code is chosen when scoring a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Inference {
    /// `z = μ`; the feature is a pure function of model and mask.
    #[default]
    Deterministic,
    /// Average over `mc_samples` reparameterized draws.
    Sampled { seed: u64 },
}

/// The shape feature of one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFeature {
    /// Dice between the mask and its reconstruction, averaged over classes.
    pub fake_dice: f64,
    /// Fake Dice of each foreground class.
    pub per_class_fake_dice: Vec<f64>,
    pub kl_term: f64,
    /// `fake_dice − λ·kl_term`.
    pub s_value: f64,
    /// Set for the sentinel standing in for an empty prediction.
    pub empty: bool,
}

impl ShapeFeature {
    pub fn from_parts(per_class_fake_dice: Vec<f64>, kl_term: f64, lambda_kl: f64) -> Self {
        let fake_dice = per_class_fake_dice.iter().sum::<f64>() / per_class_fake_dice.len() as f64;
        Self { fake_dice, per_class_fake_dice, kl_term, s_value: fake_dice - lambda_kl * kl_term, empty: false }
    }

    /// Stand-in for a prediction with no foreground: fake Dice 0, KL 0.
    pub fn empty_sentinel(foreground_classes: usize) -> Self {
        Self {
            fake_dice: 0.0,
            per_class_fake_dice: alloc::vec![0.0; foreground_classes],
            kl_term: 0.0,
            s_value: 0.0,
            empty: true,
        }
    }
}

impl<T: Real> VaeModel<T> {
    fn per_class_dice(&self, z: &[T], target: &FeatureMap<T>) -> Vec<f64> {
        let probs = self.decode_pass(z, false).probs;
        soft_dice_per_channel(&probs, target).into_iter().map(|(i, u)| dice_value(i, u)).collect()
    }

    /// Training objective and shape feature of a cube-sized soft mask,
    /// averaging fake Dice over `mc_samples` draws seeded by `seed`.
    pub fn vae_loss(&self, mask: &SoftMask, seed: u64) -> Result<(f64, ShapeFeature)> {
        let x = FeatureMap::<T>::from_soft_mask(mask);
        self.check_input(&x)?;
        let enc = self.encode_pass(&x, false);
        let (mu, lv) = (to_f64(&enc.mu), to_f64(&enc.log_var));
        let samples = self.config.mc_samples;
        let mut per_class = alloc::vec![0.0; x.channels];
        for s in 0..samples {
            let z: Vec<T> = reparameterize(&mu, &lv, derive_seed(seed, s as u64))?.into_iter().map(T::of).collect();
            for (acc, d) in per_class.iter_mut().zip(self.per_class_dice(&z, &x)) {
                *acc += d / samples as f64;
            }
        }
        let feature = ShapeFeature::from_parts(per_class, super::kl_divergence(&mu, &lv), self.config.lambda_kl);
        Ok((1.0 - feature.s_value, feature))
    }

    /// Dice between a cube-sized soft mask and the reconstruction of its mean code.
    pub fn reconstruction_dice(&self, mask: &SoftMask) -> Result<f64> {
        let x = FeatureMap::<T>::from_soft_mask(mask);
        self.check_input(&x)?;
        let enc = self.encode_pass(&x, false);
        let d = self.per_class_dice(&enc.mu, &x);
        Ok(d.iter().sum::<f64>() / d.len() as f64)
    }

    /// Shape feature of an arbitrary predicted mask.
    ///
    /// The mask is cropped to its centroid cube, resized to the model input
    /// and one-hot encoded first. Empty masks yield [`Error::EmptyMask`];
    /// callers typically substitute [`ShapeFeature::empty_sentinel`].
    pub fn shape_feature(&self, predicted: &VolumetricMask, inference: Inference) -> Result<ShapeFeature> {
        if usize::from(predicted.num_classes()) != self.config.num_classes {
            return Err(Error::invalid("mask class count differs from the model"));
        }
        let cube = crop_to_centroid_cube(predicted, self.config.input_cube)?;
        let soft = one_hot_encode(&cube);
        match inference {
            Inference::Sampled { seed } => Ok(self.vae_loss(&soft, seed)?.1),
            Inference::Deterministic => {
                let x = FeatureMap::<T>::from_soft_mask(&soft);
                let enc = self.encode_pass(&x, false);
                let per_class = self.per_class_dice(&enc.mu, &x);
                let kl = kl_divergence(&to_f64(&enc.mu), &to_f64(&enc.log_var));
                Ok(ShapeFeature::from_parts(per_class, kl, self.config.lambda_kl))
            }
        }
    }
}
