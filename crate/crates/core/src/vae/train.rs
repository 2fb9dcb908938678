use alloc::vec::Vec;

use rand::Rng;

use super::{StepStats, VaeConfig, VaeModel};
use crate::dice::one_hot_encode;
use crate::nn::{FeatureMap, Real, Sgd};
use crate::preprocess::{random_augmentation, PreprocessConfig};
use crate::rng::{derive_seed, seeded, standard_normal};
use crate::volume::VolumetricMask;
use crate::{Error, Result};

/// Mini-batch means after one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRecord {
    pub iteration: usize,
    pub loss: f64,
    pub fake_dice: f64,
    pub kl_term: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub records: Vec<TrainingRecord>,
}

impl TrainingLog {
    pub fn last(&self) -> Option<&TrainingRecord> {
        self.records.last()
    }

    /// Mean fake Dice over the final `window` records.
    pub fn trailing_fake_dice(&self, window: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(window.max(1))..];
        tail.iter().map(|r| r.fake_dice).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Trains an `f32` VAE on cube-sized ground-truth masks.
pub fn train_vae(
    dataset: &[VolumetricMask],
    config: &VaeConfig,
    augmentation: &PreprocessConfig,
) -> Result<(VaeModel<f32>, TrainingLog)> {
    train_vae_with(dataset, config, augmentation, |_| {})
}

/// Runs `config.iterations` SGD steps on mini-batches drawn uniformly from
/// `dataset`, each sample randomly rotated and translated. `on_step` sees
/// every record as it is produced.
pub fn train_vae_with<T: Real>(
    dataset: &[VolumetricMask],
    config: &VaeConfig,
    augmentation: &PreprocessConfig,
    mut on_step: impl FnMut(&TrainingRecord),
) -> Result<(VaeModel<T>, TrainingLog)> {
    config.validate()?;
    augmentation.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let c = config.input_cube;
    for m in dataset {
        if m.dims() != [c, c, c] {
            return Err(Error::invalid("training masks must be preprocessed to the input cube"));
        }
        if usize::from(m.num_classes()) != config.num_classes {
            return Err(Error::invalid("training mask class count differs from the config"));
        }
    }

    let mut model = VaeModel::<T>::new(config.clone())?;
    let mut opt = Sgd::<T>::new(config.learning_rate, config.momentum);
    let mut rng = seeded(derive_seed(config.seed, 0x7a17));
    let scale = 1.0 / config.batch_size as f64;
    let mut log = TrainingLog { records: Vec::with_capacity(config.iterations) };

    for iteration in 0..config.iterations {
        model.zero_grad();
        let mut acc = StepStats::default();
        for _ in 0..config.batch_size {
            let mask = &dataset[rng.random_range(0..dataset.len())];
            let augmented = random_augmentation(mask, augmentation, &mut rng);
            let x = FeatureMap::<T>::from_soft_mask(&one_hot_encode(&augmented));
            let noise: Vec<T> = (0..config.latent_dim).map(|_| T::of(standard_normal(&mut rng))).collect();
            let s = model.accumulate_gradients(&x, &noise, scale)?;
            acc.loss += s.loss * scale;
            acc.fake_dice += s.fake_dice * scale;
            acc.kl_term += s.kl_term * scale;
        }
        if !acc.loss.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        opt.step(model.params_mut());
        let record = TrainingRecord { iteration, loss: acc.loss, fake_dice: acc.fake_dice, kl_term: acc.kl_term };
        on_step(&record);
        log.records.push(record);
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_bad_datasets() {
        let cfg = VaeConfig { latent_dim: 2, input_cube: 8, channel_schedule: vec![2], iterations: 1, ..VaeConfig::default() };
        let aug = PreprocessConfig { cube_size: 8, ..PreprocessConfig::default() };
        assert!(matches!(train_vae(&[], &cfg, &aug), Err(Error::InvalidArgument(_))));
        let wrong = VolumetricMask::zeros([4, 4, 4], [1.0; 3], 2).unwrap();
        assert!(train_vae(&[wrong], &cfg, &aug).is_err());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let cfg = VaeConfig {
            latent_dim: 2,
            input_cube: 8,
            channel_schedule: vec![2],
            iterations: 5,
            batch_size: 2,
            ..VaeConfig::default()
        };
        let aug = PreprocessConfig { cube_size: 8, ..PreprocessConfig::desk_scale() };
        let m = VolumetricMask::from_fn([8; 3], [1.0; 3], 2, |x, y, z| u8::from((2..6).contains(&x) && (1..7).contains(&y) && (2..6).contains(&z))).unwrap();
        let (a, la) = train_vae(core::slice::from_ref(&m), &cfg, &aug).unwrap();
        let (b, lb) = train_vae(&[m], &cfg, &aug).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
        assert_eq!(la.records.len(), 5);
    }
}
