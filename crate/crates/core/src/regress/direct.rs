use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::dice::one_hot_encode;
use crate::nn::{backward_chain, chain_params, forward_chain, sigmoid, Block, FeatureMap, Linear, ParamsMut, Real, Sgd};
use crate::preprocess::crop_to_centroid_cube;
use crate::rng::{derive_seed, seeded};
use crate::vae::build_encoder;
use crate::volume::VolumetricMask;
use crate::{Error, Result};

/// Baseline that regresses Dice straight from a predicted mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectConfig {
    pub input_cube: usize,
    pub channel_schedule: Vec<usize>,
    pub hidden_units: usize,
    pub num_classes: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            input_cube: 32,
            channel_schedule: alloc::vec![8, 16, 32],
            hidden_units: 32,
            num_classes: 2,
            learning_rate: 0.02,
            momentum: 0.9,
            iterations: 2000,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl DirectConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self.input_cube;
        if c < 2 || !c.is_power_of_two() {
            return Err(Error::invalid("input_cube must be a power of two ≥ 2"));
        }
        let n = self.channel_schedule.len();
        if n == 0 || n > c.trailing_zeros() as usize || self.channel_schedule.contains(&0) {
            return Err(Error::invalid("channel_schedule must have between 1 and log2(input_cube) positive stages"));
        }
        if !(2..=256).contains(&self.num_classes) || self.hidden_units == 0 {
            return Err(Error::invalid("num_classes must lie in 2..=256 and hidden_units be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("learning_rate must be positive and momentum in [0, 1)"));
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::invalid("iterations and batch_size must be positive"));
        }
        Ok(())
    }
}

/// VAE-style encoder followed by a two-layer fully connected head with a
/// sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectRegressor<T = f32> {
    config: DirectConfig,
    encoder: Vec<Block<T>>,
    hidden: Linear<T>,
    output: Linear<T>,
}

struct Pass<T> {
    caches: Vec<crate::nn::BlockCache<T>>,
    flat: Vec<T>,
    act: Vec<T>,
    out: T,
}

impl<T: Real> DirectRegressor<T> {
    pub fn new(config: DirectConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(derive_seed(config.seed, 0xd1ec));
        let encoder = build_encoder(config.num_classes - 1, &config.channel_schedule, &mut rng);
        let last = *config.channel_schedule.last().expect("validated");
        let flat = last * (config.input_cube >> config.channel_schedule.len()).pow(3);
        let hidden = Linear::new(flat, config.hidden_units, libm::sqrt(2.0), &mut rng);
        let output = Linear::new(config.hidden_units, 1, 1.0, &mut rng);
        Ok(Self { config, encoder, hidden, output })
    }

    pub fn config(&self) -> &DirectConfig {
        &self.config
    }

    pub fn params_mut(&mut self) -> ParamsMut<'_, T> {
        let mut out = Vec::new();
        chain_params(&mut self.encoder, "encoder", &mut out);
        out.push((String::from("hidden.weight"), &mut self.hidden.weight));
        out.push((String::from("hidden.bias"), &mut self.hidden.bias));
        out.push((String::from("output.weight"), &mut self.output.weight));
        out.push((String::from("output.bias"), &mut self.output.bias));
        out
    }

    /// Model input for a predicted mask; an empty mask becomes an all-zero cube.
    pub fn prepare(&self, mask: &VolumetricMask) -> Result<FeatureMap<T>> {
        if usize::from(mask.num_classes()) != self.config.num_classes {
            return Err(Error::invalid("mask class count differs from the model"));
        }
        let c = self.config.input_cube;
        if !mask.has_foreground() {
            return Ok(FeatureMap::zeros(self.config.num_classes - 1, [c, c, c]));
        }
        Ok(FeatureMap::from_soft_mask(&one_hot_encode(&crop_to_centroid_cube(mask, c)?)))
    }

    fn pass(&self, x: &FeatureMap<T>, keep: bool) -> Pass<T> {
        let (h, caches) = forward_chain(&self.encoder, x.clone(), keep);
        let mut act = self.hidden.forward(&h.data);
        act.iter_mut().for_each(|v| {
            if *v < T::zero() {
                *v = T::zero()
            }
        });
        let out = self.output.forward(&act)[0];
        Pass { caches, flat: h.data, act, out }
    }

    /// Predicted Dice in `[0, 1]` for a prepared input.
    pub fn predict_map(&self, x: &FeatureMap<T>) -> f64 {
        sigmoid(self.pass(x, false).out).to_f64_lossy()
    }

    /// Predicted Dice in `[0, 1]` for a predicted mask.
    pub fn predict(&self, mask: &VolumetricMask) -> Result<f64> {
        Ok(self.predict_map(&self.prepare(mask)?))
    }

    /// Squared error `(ŷ − y)²`; gradients accumulate scaled by `scale`.
    pub fn accumulate_gradients(&mut self, x: &FeatureMap<T>, target: f64, scale: f64) -> f64 {
        let pass = self.pass(x, true);
        let p = sigmoid(pass.out);
        let err = p - T::of(target);
        let dout = T::of(2.0 * scale) * err * p * (T::one() - p);
        let mut dact = self.output.backward(&pass.act, &[dout]);
        for (d, &a) in dact.iter_mut().zip(&pass.act) {
            if a <= T::zero() {
                *d = T::zero();
            }
        }
        let dflat = self.hidden.backward(&pass.flat, &dact);
        let last = *self.config.channel_schedule.last().expect("validated");
        let b = self.config.input_cube >> self.config.channel_schedule.len();
        backward_chain(&mut self.encoder, &pass.caches, FeatureMap::from_vec(last, [b, b, b], dflat), false);
        (err * err).to_f64_lossy()
    }
}

/// Trains the baseline on `(predicted mask, real Dice)` pairs with
/// mini-batch SGD on squared error.
pub fn train_direct_regressor(data: &[(VolumetricMask, f64)], config: &DirectConfig) -> Result<DirectRegressor<f32>> {
    if data.is_empty() {
        return Err(Error::invalid("direct regressor needs at least one sample"));
    }
    if data.iter().any(|(_, y)| !(0.0..=1.0).contains(y)) {
        return Err(Error::invalid("targets must lie in [0, 1]"));
    }
    let mut model = DirectRegressor::<f32>::new(config.clone())?;
    let inputs: Vec<FeatureMap<f32>> = data.iter().map(|(m, _)| model.prepare(m)).collect::<Result<_>>()?;
    let mut opt = Sgd::<f32>::new(config.learning_rate, config.momentum);
    let mut rng = seeded(derive_seed(config.seed, 0xd1ed));
    let scale = 1.0 / config.batch_size as f64;
    for iteration in 0..config.iterations {
        model.params_mut().into_iter().for_each(|(_, p)| p.zero_grad());
        let mut loss = 0.0;
        for _ in 0..config.batch_size {
            let i = rng.random_range(0..data.len());
            loss += model.accumulate_gradients(&inputs[i], data[i].1, scale);
        }
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        opt.step(model.params_mut());
    }
    Ok(model)
}
