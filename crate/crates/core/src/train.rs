//! Mini-batch training of one network, the two-stage cascade procedure and
//! the single-stage baseline.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentConfig, Sample};
use crate::cascade::{
    argmax_labels, predict_unfiltered, stage1_distance_map, CascadeConfig, InputMode, ModelBundle, SingleStageModel,
};
use crate::data::{LabelMap, LabeledVolume};
use crate::error::{Error, Result};
use crate::fluid::{component_examples, FluidFilter};
use crate::lfunet::{LfUNet, NetworkConfig};
use crate::losses::{class_weights, pixel_weight_map, total_loss_grad, LossConfig};
use crate::nn::{Adam, AdamConfig};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    /// Epochs without a gain in training accuracy before stopping.
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 3,
            learning_rate: 1e-5,
            adam: AdamConfig::default(),
            patience_epochs: 5,
            max_epochs: 100,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Random streams derived from the training seed.
mod stream {
    pub const INIT: u64 = 0;
    pub const SHUFFLE: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const AUGMENT: u64 = 3;
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total loss over the epoch's samples.
    pub loss: f64,
    pub dice: f64,
    pub logistic: f64,
    /// Pixel accuracy of the training predictions seen during the epoch.
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Mean loss of every optimizer step, in order.
    pub batch_losses: Vec<f64>,
    pub best_epoch: usize,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch)
    }
}

/// A labelled sample whose pixel weights come from its own ground truth.
pub fn make_sample(input: Tensor<f32>, labels: LabelMap, loss: &LossConfig) -> Sample {
    let weights = pixel_weight_map(&labels, loss);
    Sample { input, labels, weights }
}

fn check_samples(samples: &[Sample], net: &NetworkConfig) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidData("training set is empty".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        let (h, w) = (s.labels.height(), s.labels.width());
        if s.input.channels() != net.in_channels
            || s.labels.scheme().num_classes() != net.num_classes
            || (s.input.height(), s.input.width()) != (h, w)
            || (s.weights.height(), s.weights.width()) != (h, w)
        {
            return Err(Error::InvalidData(format!("sample {i} does not fit the network configuration")));
        }
    }
    Ok(())
}

/// Trains one network. Stops when training accuracy has not improved for
/// `patience_epochs` epochs or after `max_epochs`; returns the network as of
/// its best epoch.
pub fn train_stage(
    samples: &[Sample],
    net_config: &NetworkConfig,
    train: &TrainConfig,
    loss: &LossConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(LfUNet<f32>, History)> {
    train.validate()?;
    loss.validate()?;
    check_samples(samples, net_config)?;
    let cw = class_weights(samples.iter().map(|s| &s.labels))?;
    let mut net = LfUNet::new(net_config.clone(), &mut rng(train.seed, stream::INIT))?;
    let mut opt = Adam::new(train.learning_rate, train.adam);
    let mut shuffle = rng(train.seed, stream::SHUFFLE);
    let mut dropout = rng(train.seed, stream::DROPOUT);
    let mut aug = rng(train.seed, stream::AUGMENT);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = History::default();
    let mut best = (f64::NEG_INFINITY, net.clone());

    for epoch in 0..train.max_epochs {
        order.shuffle(&mut shuffle);
        let (mut sums, mut correct, mut pixels) = ([0.0f64; 3], 0usize, 0usize);
        for (batch, idx) in order.chunks(train.batch_size).enumerate() {
            net.zero_grad();
            let mut batch_loss = 0.0;
            for &i in idx {
                let s = augment(&samples[i], &train.augment, &mut aug)?;
                let trace = net.forward(&s.input, Some(&mut dropout))?;
                let probs = trace.probabilities();
                let (lv, grad) = total_loss_grad(&probs, &s.labels, &cw, &s.weights, loss)?;
                if !lv.total.is_finite() {
                    return Err(Error::Divergence { epoch, batch });
                }
                net.backward(&trace, &grad);
                batch_loss += lv.total;
                sums[0] += lv.total;
                sums[1] += lv.dice;
                sums[2] += lv.logistic;
                correct += probs.argmax_channels().iter().zip(s.labels.labels()).filter(|(a, b)| a == b).count();
                pixels += s.labels.labels().len();
            }
            opt.step(&mut net.params_mut(), 1.0 / idx.len() as f32);
            history.batch_losses.push(batch_loss / idx.len() as f64);
        }
        let n = samples.len() as f64;
        let record = EpochRecord {
            epoch,
            loss: sums[0] / n,
            dice: sums[1] / n,
            logistic: sums[2] / n,
            accuracy: correct as f64 / pixels as f64,
        };
        history.epochs.push(record);
        observer(&record);
        if record.accuracy > best.0 {
            best = (record.accuracy, net.clone());
            history.best_epoch = epoch;
        } else if epoch - history.best_epoch >= train.patience_epochs {
            break;
        }
    }
    Ok((best.1, history))
}

/// Which network a progress record belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Stage1,
    Stage2,
    Single,
}

#[derive(Clone, Debug)]
pub struct CascadeOutcome {
    pub bundle: ModelBundle,
    pub stage1: History,
    pub stage2: History,
    /// Training B-scans whose stage-1 prediction gave no usable surfaces.
    pub fallbacks: usize,
    /// Fluid components the filter was trained on, and how many were hits.
    pub filter_examples: (usize, usize),
}

/// Trains stage 1 on merged 3-class targets, stage 2 on the B-scans plus
/// the distance map predicted by stage 1, then the fluid filter on stage-2
/// predictions of the training set.
pub fn train_cascade(
    volumes: &[LabeledVolume],
    config: &CascadeConfig,
    observer: &mut dyn FnMut(Stage, &EpochRecord),
) -> Result<CascadeOutcome> {
    config.validate()?;
    let mut stage1_samples = Vec::new();
    for v in volumes {
        for (i, l) in v.labels.iter().enumerate() {
            let stack = v.volume.extract_bscan_stack(i)?.into_tensor();
            stage1_samples.push(make_sample(stack, l.to_stage1()?, &config.loss));
        }
    }
    let (stage1, h1) =
        train_stage(&stage1_samples, &config.stage1, &config.train, &config.loss, &mut |r| observer(Stage::Stage1, r))?;
    drop(stage1_samples);

    let mut stage2_samples = Vec::new();
    let mut fallbacks = 0;
    for v in volumes {
        for (i, l) in v.labels.iter().enumerate() {
            let stack = v.volume.extract_bscan_stack(i)?;
            let s1 = argmax_labels(&stage1.predict(stack.tensor())?)?;
            let (map, surfaces) = stage1_distance_map(&s1)?;
            fallbacks += surfaces.is_none() as usize;
            stage2_samples.push(make_sample(stack.with_distance_map(&map)?.into_tensor(), l.clone(), &config.loss));
        }
    }
    let train2 = TrainConfig { seed: config.train.seed.wrapping_add(1), ..config.train.clone() };
    let (stage2, h2) =
        train_stage(&stage2_samples, &config.stage2, &train2, &config.loss, &mut |r| observer(Stage::Stage2, r))?;
    drop(stage2_samples);

    let mut examples = Vec::new();
    for v in volumes {
        for (i, truth) in v.labels.iter().enumerate() {
            let (_, _, map, pred) = predict_unfiltered(&stage1, &stage2, &v.volume, i)?;
            examples.extend(component_examples(&pred, v.volume.bscan(i), &map, truth)?);
        }
    }
    let hits = examples.iter().filter(|e| e.1).count();
    let filter = FluidFilter::train(&examples, config.forest.clone())?;
    Ok(CascadeOutcome {
        bundle: ModelBundle { config: config.clone(), stage1, stage2, filter },
        stage1: h1,
        stage2: h2,
        fallbacks,
        filter_examples: (examples.len(), hits),
    })
}

/// One 8-class network on single or adjacent B-scans, no distance prior.
pub fn train_single_stage(
    volumes: &[LabeledVolume],
    mode: InputMode,
    net: &NetworkConfig,
    train: &TrainConfig,
    loss: &LossConfig,
    observer: &mut dyn FnMut(Stage, &EpochRecord),
) -> Result<(SingleStageModel, History)> {
    if net.in_channels != mode.channels() || net.num_classes != 8 {
        return Err(Error::Config(format!(
            "single-stage network needs {} input channels and 8 classes",
            mode.channels()
        )));
    }
    let mut samples = Vec::new();
    for v in volumes {
        for (i, l) in v.labels.iter().enumerate() {
            samples.push(make_sample(mode.stack(&v.volume, i)?, l.clone(), loss));
        }
    }
    let (net, history) = train_stage(&samples, net, train, loss, &mut |r| observer(Stage::Single, r))?;
    Ok((SingleStageModel { mode, net }, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassScheme;

    fn tiny_net(classes: usize) -> NetworkConfig {
        NetworkConfig {
            in_channels: 1,
            num_classes: classes,
            base_features: 4,
            depth: 1,
            dilated_branch_features: 4,
            ..NetworkConfig::default()
        }
    }

    fn quiet() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            augment: AugmentConfig::disabled(),
            max_epochs: 30,
            ..TrainConfig::default()
        }
    }

    fn stripes(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|k| {
                let (h, w) = (16, 16);
                let labels: Vec<u8> = (0..h * w).map(|p| ((p / w + k) / 6 % 3) as u8).collect();
                let input = labels.iter().map(|&l| l as f32 / 2.0).collect();
                let labels = LabelMap::new(h, w, ClassScheme::Stage1, labels).unwrap();
                make_sample(Tensor::from_vec(1, h, w, input).unwrap(), labels, &LossConfig::default())
            })
            .collect()
    }

    #[test]
    fn single_class_fit_stops_by_patience() {
        let mut s = stripes(1);
        s[0].labels = LabelMap::filled(16, 16, ClassScheme::Stage1, 0).unwrap();
        s[0].weights = pixel_weight_map(&s[0].labels, &LossConfig::default());
        let (_, h) = train_stage(&s, &tiny_net(3), &quiet(), &LossConfig::default(), &mut |_| {}).unwrap();
        let best = h.best().unwrap();
        assert_eq!(best.accuracy, 1.0);
        assert_eq!(h.epochs.len(), h.best_epoch + 6);
        assert!(h.epochs.len() < 30);
    }

    #[test]
    fn loss_falls_and_best_epoch_dominates() {
        let cfg = TrainConfig { batch_size: 1, ..quiet() };
        let (net, h) = train_stage(&stripes(6), &tiny_net(3), &cfg, &LossConfig::default(), &mut |_| {}).unwrap();
        assert!(h.batch_losses[5] < h.batch_losses[0], "{:?}", &h.batch_losses[..6]);
        let best = h.best().unwrap().accuracy;
        assert!(h.epochs[h.best_epoch..].iter().all(|e| e.accuracy <= best));
        assert!(best > 0.9, "{best}");
        assert!(h.epochs.len() <= 30);
        assert_eq!(net.config(), &tiny_net(3));
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = TrainConfig { max_epochs: 3, augment: AugmentConfig::default(), ..quiet() };
        let run = || train_stage(&stripes(4), &tiny_net(3), &cfg, &LossConfig::default(), &mut |_| {}).unwrap().1;
        let (a, b) = (run(), run());
        assert_eq!(
            a.batch_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.batch_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_mismatched_samples_and_bad_configs() {
        let s = stripes(1);
        let loss = LossConfig::default();
        assert!(train_stage(&s, &tiny_net(8), &quiet(), &loss, &mut |_| {}).is_err());
        assert!(train_stage(&[], &tiny_net(3), &quiet(), &loss, &mut |_| {}).is_err());
        let bad = TrainConfig { batch_size: 0, ..quiet() };
        assert!(matches!(train_stage(&s, &tiny_net(3), &bad, &loss, &mut |_| {}), Err(Error::Config(_))));
        let nan = TrainConfig { learning_rate: f64::NAN, ..quiet() };
        assert!(nan.validate().is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut s = stripes(2);
        s[1].input.data_mut()[0] = f32::NAN;
        let cfg = TrainConfig { batch_size: 1, ..quiet() };
        let err = train_stage(&s, &tiny_net(3), &cfg, &LossConfig::default(), &mut |_| {}).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 0, .. }), "{err:?}");
    }
}
