//! Adam, the training loop, metrics, and the raw / Bayesian / network
//! comparison.

mod compare;
mod metrics;

pub use compare::{compare, detail_survival, CompareReport, ConditionRow, PROBE_SOURCE_SEED};
pub use metrics::{evaluate, format_metrics_rows, MetricsRecord, METRICS_COLUMNS};

use crate::error::{Error, Result};
use crate::net::{init_params, loss_and_grads, RefinerConfig, RefinerParams};
use crate::synth::{splitmix64, RngState, Sample};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(self.eps_adam > 0.0) {
            return Err(Error::Config("eps_adam must be > 0".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, one entry per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// Bias-corrected Adam update of `params` in place; `t` counts from 1.
pub fn adam_update(
    params: &mut [f32],
    grads: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    t: usize,
    cfg: &TrainConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || m.len() != n || v.len() != n {
        return Err(Error::dim(format!(
            "adam: params {n}, grads {}, m {}, v {}",
            grads.len(),
            m.len(),
            v.len()
        )));
    }
    if t == 0 {
        return Err(Error::Config("adam step index starts at 1".into()));
    }
    let b1 = cfg.beta1 as f32;
    let b2 = cfg.beta2 as f32;
    let c1 = (1.0 - cfg.beta1.powi(t as i32)) as f32;
    let c2 = (1.0 - cfg.beta2.powi(t as i32)) as f32;
    let lr = cfg.lr as f32;
    let eps = cfg.eps_adam as f32;
    for i in 0..n {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// One Adam step over every refiner parameter, in canonical order.
pub fn adam_step(
    params: &mut RefinerParams,
    grads: &RefinerParams,
    state: &mut AdamState,
    t: usize,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.config() != grads.config() {
        return Err(Error::dim("adam: gradient shapes differ from parameters"));
    }
    let n = params.param_count();
    if state.m.len() != n || state.v.len() != n {
        return Err(Error::dim(format!(
            "adam: moment state holds {} entries for {n} parameters",
            state.m.len()
        )));
    }
    let mut at = 0;
    for (k, g) in params.kernels_mut().into_iter().zip(grads.kernels()) {
        let nw = k.weights().len();
        adam_update(
            k.weights_mut().data_mut(),
            g.weights().data(),
            &mut state.m[at..at + nw],
            &mut state.v[at..at + nw],
            t,
            cfg,
        )?;
        at += nw;
        let nb = k.bias().len();
        adam_update(
            k.bias_mut(),
            g.bias(),
            &mut state.m[at..at + nb],
            &mut state.v[at..at + nb],
            t,
            cfg,
        )?;
        at += nb;
    }
    Ok(())
}

/// Per-epoch shuffled batch order.
#[derive(Clone, Debug)]
pub struct BatchSchedule {
    rng: RngState,
    len: usize,
    batch_size: usize,
}

impl BatchSchedule {
    pub fn new(seed: u64, len: usize, batch_size: usize) -> Self {
        Self {
            rng: RngState::new(seed),
            len,
            batch_size: batch_size.max(1),
        }
    }

    /// Sample indices for the next epoch, split into batches; the last
    /// batch may be short.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len).collect();
        self.rng.shuffle(&mut order);
        order
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

/// Final parameters plus the mean loss of every epoch.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: RefinerParams,
    pub loss_history: Vec<f64>,
    pub steps: usize,
}

fn check_dataset(dataset: &[Sample], net: &RefinerConfig) -> Result<()> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Config("training needs a nonempty dataset".into()))?;
    let (h, w) = first.dims();
    let m = net.spatial_multiple();
    if h % m != 0 || w % m != 0 {
        return Err(Error::dim(format!(
            "samples are {h}x{w}, not divisible by 2^{} = {m}",
            net.levels
        )));
    }
    if let Some(s) = dataset.iter().find(|s| s.dims() != (h, w)) {
        return Err(Error::dim(format!(
            "dataset mixes sample dims {:?} and {:?}",
            (h, w),
            s.dims()
        )));
    }
    if net.source_channels != 1 {
        return Err(Error::Config(
            "samples carry grayscale sources; source_channels must be 1".into(),
        ));
    }
    Ok(())
}

/// Seed used to initialize the network for a training seed.
pub fn init_seed(train_seed: u64) -> u64 {
    splitmix64(train_seed)
}

/// Runs the optimizer without judging the result. `on_epoch` receives the
/// 1-based epoch number and its mean loss.
pub fn fit(
    cfg: &TrainConfig,
    net: &RefinerConfig,
    dataset: &[Sample],
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    net.validate()?;
    check_dataset(dataset, net)?;

    let mut params = init_params(net, init_seed(cfg.seed))?;
    let mut state = AdamState::zeros(params.param_count());
    let mut schedule = BatchSchedule::new(cfg.seed, dataset.len(), cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let mut weighted = 0.0f64;
        for batch in schedule.next_epoch() {
            step += 1;
            let samples: Vec<&Sample> = batch.iter().map(|&i| &dataset[i]).collect();
            let (loss, grads) = loss_and_grads(&params, &samples)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    step,
                    loss: loss as f64,
                });
            }
            adam_step(&mut params, &grads, &mut state, step, cfg)?;
            weighted += loss as f64 * batch.len() as f64;
        }
        let mean = weighted / dataset.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
        steps: step,
    })
}

/// [`fit`], then requires the final epoch's loss to be below the first's
/// whenever more than one epoch ran.
pub fn train(
    cfg: &TrainConfig,
    net: &RefinerConfig,
    dataset: &[Sample],
    on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    let out = fit(cfg, net, dataset, on_epoch)?;
    if let (Some(&first), Some(&last)) = (out.loss_history.first(), out.loss_history.last()) {
        if out.loss_history.len() > 1 && last >= first {
            return Err(Error::NoProgress { first, last });
        }
    }
    Ok(out)
}
