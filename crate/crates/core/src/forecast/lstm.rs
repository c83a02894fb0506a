//! Single-layer LSTM regressor: one input, `H` hidden units, linear output.
//!
//! The network reads the series one value per step and predicts the next
//! value. Hidden state is carried along the series; training uses truncated
//! backpropagation through time over a sliding window, one Adam update per
//! step (batch size 1).
//!
//! Parameter layout (flat vector, gates ordered input, forget, cell, output;
//! row `r = gate * H + unit`):
//!
//! ```text
//! w_input     4H       input weights
//! w_recurrent 4H * H   row-major, w_recurrent[r * H + k]
//! bias        4H
//! w_out       H
//! b_out       1
//! ```

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{rmse, Adam, ForecastError};

/// Names of the parameter groups, in storage order.
pub const PARAM_GROUPS: [&str; 5] = ["w_input", "w_recurrent", "bias", "w_out", "b_out"];

const MIN_SERIES_LEN: usize = 10;
const INIT_SCALE: f64 = 0.1;

/// Min-max scaling of the training data onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    /// Fits to `values`; a constant series gets a unit-width window centered
    /// on its value so that the scale stays invertible.
    pub fn fit(values: &[f64]) -> Self {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if max - min <= 1e-12 * min.abs().max(1.0) {
            let half = 0.5 * min.abs().max(1.0);
            return Self {
                min: min - half,
                max: min + half,
            };
        }
        Self { min, max }
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn denormalize(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    hidden: usize,
    params: Vec<f64>,
    norm: Normalization,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
struct StepCache {
    x: f64,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, `4H` long.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
    y: f64,
}

impl LstmModel {
    /// Fresh model with weights uniform in [-0.1, 0.1].
    pub fn new(hidden: usize, norm: Normalization, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Self::param_count(hidden);
        let params = (0..n)
            .map(|_| rng.random_range(-INIT_SCALE..=INIT_SCALE))
            .collect();
        Self {
            hidden,
            params,
            norm,
        }
    }

    /// Rebuilds a model from named parameter groups (see [`PARAM_GROUPS`]).
    pub fn from_parts(
        hidden: usize,
        norm: Normalization,
        groups: &[(&str, &[f64])],
    ) -> Result<Self, ForecastError> {
        if hidden == 0 {
            return Err(ForecastError::InvalidParameter("hidden units must be >= 1"));
        }
        if !norm.min.is_finite() || !norm.max.is_finite() || norm.max <= norm.min {
            return Err(ForecastError::InvalidParameter(
                "normalization max must exceed min",
            ));
        }
        let mut params = Vec::with_capacity(Self::param_count(hidden));
        for (name, len) in PARAM_GROUPS.iter().zip(Self::group_lens(hidden)) {
            let values = groups
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| *v)
                .ok_or(ForecastError::InvalidParameter("missing parameter group"))?;
            if values.len() != len {
                return Err(ForecastError::InvalidParameter(
                    "parameter group has wrong length",
                ));
            }
            params.extend_from_slice(values);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ForecastError::InvalidParameter("parameters must be finite"));
        }
        Ok(Self {
            hidden,
            params,
            norm,
        })
    }

    fn group_lens(hidden: usize) -> [usize; 5] {
        [4 * hidden, 4 * hidden * hidden, 4 * hidden, hidden, 1]
    }

    pub fn param_count(hidden: usize) -> usize {
        Self::group_lens(hidden).iter().sum()
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden
    }

    pub fn normalization(&self) -> Normalization {
        self.norm
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Parameters split into their named groups.
    pub fn param_groups(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = Vec::with_capacity(PARAM_GROUPS.len());
        let mut rest = self.params.as_slice();
        for (name, len) in PARAM_GROUPS.iter().zip(Self::group_lens(self.hidden)) {
            let (head, tail) = rest.split_at(len);
            out.push((*name, head));
            rest = tail;
        }
        out
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let h = self.hidden;
        let w_rec = 4 * h;
        let bias = w_rec + 4 * h * h;
        let w_out = bias + 4 * h;
        let b_out = w_out + h;
        (w_rec, bias, w_out, b_out)
    }

    fn step(&self, x: f64, h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let hd = self.hidden;
        let (o_rec, o_bias, o_out, o_bout) = self.offsets();
        let p = &self.params;
        let mut gates = vec![0.0; 4 * hd];
        for (r, gate) in gates.iter_mut().enumerate() {
            let row = &p[o_rec + r * hd..o_rec + (r + 1) * hd];
            let z =
                p[r] * x + row.iter().zip(h_prev).map(|(w, h)| w * h).sum::<f64>() + p[o_bias + r];
            *gate = if r / hd == 2 {
                libm::tanh(z)
            } else {
                sigmoid(z)
            };
        }
        let mut c = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, g, o) = (
                gates[j],
                gates[hd + j],
                gates[2 * hd + j],
                gates[3 * hd + j],
            );
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = libm::tanh(c[j]);
            h[j] = o * tanh_c[j];
        }
        let y = p[o_out..o_out + hd]
            .iter()
            .zip(&h)
            .map(|(w, h)| w * h)
            .sum::<f64>()
            + p[o_bout];
        StepCache {
            x,
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            tanh_c,
            h,
            c,
            y,
        }
    }

    fn forward(&self, inputs: &[f64], h0: &[f64], c0: &[f64]) -> Vec<StepCache> {
        let mut caches: Vec<StepCache> = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let cache = match caches.last() {
                Some(prev) => self.step(x, &prev.h, &prev.c),
                None => self.step(x, h0, c0),
            };
            caches.push(cache);
        }
        caches
    }

    /// Mean squared error over the last `scored` steps of a window started
    /// from `(h0, c0)`, and its gradient with respect to every parameter.
    /// Inputs and targets are in normalized units.
    fn window_loss_grad(
        &self,
        inputs: &[f64],
        targets: &[f64],
        h0: &[f64],
        c0: &[f64],
        scored: usize,
    ) -> (f64, Vec<f64>, Vec<StepCache>) {
        let hd = self.hidden;
        let (o_rec, o_bias, o_out, o_bout) = self.offsets();
        let caches = self.forward(inputs, h0, c0);
        let n = caches.len();
        let first_scored = n - scored.min(n);
        let count = (n - first_scored).max(1) as f64;

        let mut loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dz = vec![0.0; 4 * hd];
        let p = &self.params;

        for t in (0..n).rev() {
            let s = &caches[t];
            let dy = if t >= first_scored {
                let e = s.y - targets[t];
                loss += e * e / count;
                2.0 * e / count
            } else {
                0.0
            };
            for j in 0..hd {
                grad[o_out + j] += dy * s.h[j];
            }
            grad[o_bout] += dy;

            for j in 0..hd {
                let (i, f, g, o) = (
                    s.gates[j],
                    s.gates[hd + j],
                    s.gates[2 * hd + j],
                    s.gates[3 * hd + j],
                );
                let dh = dy * p[o_out + j] + dh_next[j];
                let d_o = dh * s.tanh_c[j];
                let dc = dh * o * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * s.c_prev[j];
                dc_next[j] = dc * f;
                dz[j] = d_i * i * (1.0 - i);
                dz[hd + j] = d_f * f * (1.0 - f);
                dz[2 * hd + j] = d_g * (1.0 - g * g);
                dz[3 * hd + j] = d_o * o * (1.0 - o);
            }
            for v in dh_next.iter_mut() {
                *v = 0.0;
            }
            for (r, &dzr) in dz.iter().enumerate() {
                grad[r] += dzr * s.x;
                grad[o_bias + r] += dzr;
                let row = o_rec + r * hd;
                for k in 0..hd {
                    grad[row + k] += dzr * s.h_prev[k];
                    dh_next[k] += dzr * p[row + k];
                }
            }
        }
        (loss, grad, caches)
    }

    /// Loss (mean squared error over every step, zero initial state) and
    /// analytic gradient for a normalized `(inputs, targets)` window.
    pub fn loss_and_grad(&self, inputs: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
        let zeros = vec![0.0; self.hidden];
        let (loss, grad, _) = self.window_loss_grad(inputs, targets, &zeros, &zeros, inputs.len());
        (loss, grad)
    }

    /// Same loss as [`loss_and_grad`](Self::loss_and_grad), forward pass only.
    pub fn loss(&self, inputs: &[f64], targets: &[f64]) -> f64 {
        let zeros = vec![0.0; self.hidden];
        let caches = self.forward(inputs, &zeros, &zeros);
        let n = caches.len().max(1) as f64;
        caches
            .iter()
            .zip(targets)
            .map(|(c, t)| (c.y - t) * (c.y - t) / n)
            .sum()
    }

    /// Normalized outputs for every step of `inputs`, zero initial state.
    pub fn outputs(&self, inputs: &[f64]) -> Vec<f64> {
        let zeros = vec![0.0; self.hidden];
        self.forward(inputs, &zeros, &zeros)
            .into_iter()
            .map(|c| c.y)
            .collect()
    }

    /// Starts a streaming predictor at zero state.
    pub fn stream(&self) -> LstmStream<'_> {
        LstmStream {
            model: self,
            h: vec![0.0; self.hidden],
            c: vec![0.0; self.hidden],
            last_output: None,
        }
    }
}

/// Runs a model along a series one observation at a time.
#[derive(Debug, Clone)]
pub struct LstmStream<'a> {
    model: &'a LstmModel,
    h: Vec<f64>,
    c: Vec<f64>,
    last_output: Option<f64>,
}

impl LstmStream<'_> {
    /// Feeds one observation (original units).
    pub fn observe(&mut self, value: f64) {
        let x = self.model.norm.normalize(value);
        let s = self.model.step(x, &self.h, &self.c);
        self.h = s.h;
        self.c = s.c;
        self.last_output = Some(s.y);
    }

    /// Next-step estimate in original units (clamped to >= 0), or `None`
    /// before the first observation.
    pub fn next(&self) -> Option<f64> {
        self.last_output
            .map(|y| self.model.norm.denormalize(y).max(0.0))
    }

    /// `k` estimates, feeding each one back as the next input.
    pub fn forecast(&self, k: usize) -> Option<Vec<f64>> {
        let first = self.next()?;
        let mut out = Vec::with_capacity(k);
        out.push(first);
        let mut probe = self.clone();
        while out.len() < k {
            let prev = *out.last().expect("non-empty");
            probe.observe(prev);
            out.push(probe.next().expect("observed"));
        }
        out.truncate(k);
        Some(out)
    }
}

/// One-step-ahead estimate after reading `history` from zero state.
pub fn predict_next(model: &LstmModel, history: &[f64]) -> Result<f64, ForecastError> {
    let mut stream = model.stream();
    for &v in history {
        stream.observe(v);
    }
    stream
        .next()
        .ok_or(ForecastError::InsufficientHistory { needed: 1, got: 0 })
}

/// `k`-step forecast by recursive self-feeding; element 0 equals
/// [`predict_next`].
pub fn predict_horizon(
    model: &LstmModel,
    history: &[f64],
    k: usize,
) -> Result<Vec<f64>, ForecastError> {
    if k == 0 {
        return Err(ForecastError::InvalidParameter("horizon must be >= 1"));
    }
    let mut stream = model.stream();
    for &v in history {
        stream.observe(v);
    }
    stream
        .forecast(k)
        .ok_or(ForecastError::InsufficientHistory { needed: 1, got: 0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Fraction of the series used for training.
    pub split: f64,
    pub seed: u64,
    pub hidden_units: usize,
    pub learning_rate: f64,
    /// Steps of backpropagation through time per update.
    pub bptt_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            split: 0.67,
            seed: 0,
            hidden_units: 4,
            learning_rate: 0.001,
            bptt_window: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub epochs_run: usize,
    /// One-step RMSE over the training targets, original units.
    pub train_rmse: f64,
    /// One-step RMSE over the held-out targets, original units.
    pub test_rmse: f64,
    pub split_fraction: f64,
    /// Training pairs seen: epochs times pairs per epoch.
    pub training_trials: usize,
    /// Mean per-update loss of each epoch (normalized units).
    pub epoch_loss: Vec<f64>,
}

/// Trains with default hyper-parameters (4 hidden units, Adam at 0.001).
pub fn train_lstm(
    series: &[f64],
    epochs: usize,
    split: f64,
    seed: u64,
) -> Result<(LstmModel, TrainReport), ForecastError> {
    train_lstm_with(
        series,
        &TrainConfig {
            epochs,
            split,
            seed,
            ..TrainConfig::default()
        },
    )
}

pub fn train_lstm_with(
    series: &[f64],
    cfg: &TrainConfig,
) -> Result<(LstmModel, TrainReport), ForecastError> {
    if series.len() < MIN_SERIES_LEN {
        return Err(ForecastError::TooShort {
            needed: MIN_SERIES_LEN,
            got: series.len(),
        });
    }
    if cfg.epochs == 0 {
        return Err(ForecastError::InvalidParameter("epochs must be >= 1"));
    }
    if !(cfg.split > 0.0 && cfg.split < 1.0) {
        return Err(ForecastError::InvalidParameter("split must lie in (0, 1)"));
    }
    if cfg.hidden_units == 0 || cfg.bptt_window == 0 {
        return Err(ForecastError::InvalidParameter(
            "hidden units and window must be >= 1",
        ));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::InvalidParameter("series must be finite"));
    }
    let n_train = ((series.len() as f64 * cfg.split) as usize).clamp(2, series.len() - 1);
    let train = &series[..n_train];
    let norm = Normalization::fit(train);
    let scaled: Vec<f64> = series.iter().map(|&v| norm.normalize(v)).collect();
    // pair t: input scaled[t], target scaled[t + 1]
    let inputs = &scaled[..n_train - 1];
    let targets = &scaled[1..n_train];
    let pairs = inputs.len();

    let mut model = LstmModel::new(cfg.hidden_units, norm, cfg.seed);
    let mut opt = Adam::new(model.params.len(), cfg.learning_rate);
    let hd = cfg.hidden_units;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    // hidden state entering each step, refreshed as the epoch advances
    let mut h_at = vec![vec![0.0; hd]; pairs + 1];
    let mut c_at = vec![vec![0.0; hd]; pairs + 1];

    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for end in 1..=pairs {
            let start = end.saturating_sub(cfg.bptt_window);
            let (loss, grad, caches) = model.window_loss_grad(
                &inputs[start..end],
                &targets[start..end],
                &h_at[start],
                &c_at[start],
                1,
            );
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ForecastError::Diverged { epoch: epoch + 1 });
            }
            total += loss;
            let last = caches.last().expect("window is non-empty");
            h_at[end].clone_from(&last.h);
            c_at[end].clone_from(&last.c);
            opt.update(&mut model.params, &grad);
        }
        epoch_loss.push(total / pairs as f64);
    }

    // evaluate by streaming the whole series through the trained model
    let mut stream = model.stream();
    let mut predicted = Vec::with_capacity(series.len() - 1);
    for &v in &series[..series.len() - 1] {
        stream.observe(v);
        predicted.push(stream.next().expect("observed"));
    }
    let train_rmse = rmse(&predicted[..n_train - 1], &series[1..n_train]);
    let test_rmse = rmse(&predicted[n_train - 1..], &series[n_train..]);

    let report = TrainReport {
        epochs_run: cfg.epochs,
        train_rmse,
        test_rmse,
        split_fraction: cfg.split,
        training_trials: cfg.epochs * pairs,
        epoch_loss,
    };
    Ok((model, report))
}

/// Largest relative difference between `analytic` and a central finite
/// difference (step 1e-5) of the window loss, over parameters whose gradient
/// magnitude exceeds 1e-8. Returns 0 when every gradient is below that.
pub fn relative_gradient_error(
    model: &LstmModel,
    sample: (&[f64], &[f64]),
    analytic: &[f64],
) -> f64 {
    const STEP: f64 = 1e-5;
    const FLOOR: f64 = 1e-8;
    let (inputs, targets) = sample;
    let n = inputs.len().max(1) as f64;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + STEP;
        let up = probe.outputs(inputs);
        probe.params[i] = orig - STEP;
        let down = probe.outputs(inputs);
        probe.params[i] = orig;
        // loss(up) - loss(down), expanded per step to avoid cancellation
        let delta: f64 = up
            .iter()
            .zip(&down)
            .zip(targets)
            .map(|((u, d), t)| (u - d) * (u + d - 2.0 * t))
            .sum::<f64>()
            / n;
        let numeric = delta / (2.0 * STEP);
        let scale = a.abs().max(numeric.abs());
        if scale > FLOOR {
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}

/// Checks backpropagation-through-time gradients against finite differences.
pub fn gradient_check(model: &LstmModel, sample: (&[f64], &[f64])) -> f64 {
    let (_, grad) = model.loss_and_grad(sample.0, sample.1);
    relative_gradient_error(model, sample, &grad)
}
