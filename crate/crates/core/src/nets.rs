//! Encoder, Gaussian measurement channel, and decoder networks.
//!
//! The measurement path is `y = W f(x) + sigma * z` with `z` standard normal:
//! a deterministic transform of the noise draw, so gradients flow through the
//! mean while `z` stays constant. All forward passes record a tape; the
//! backward pass produces exact analytic gradients for every parameter in the
//! flat layout shared with checkpoints (encoder `W` row-major, then
//! acquisition layers as `[weights row-major, bias]`, then decoder layers
//! likewise).

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenActivation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

/// Output-distribution family of the decoder.
///
/// Gaussian fixes the observation std at 1, so the negative log-likelihood is
/// half the squared error plus a constant. Bernoulli sums binary
/// cross-entropy over coordinates and requires a sigmoid output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderFamily {
    Gaussian,
    Bernoulli,
}

impl DecoderFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecoderFamily::Gaussian => "gaussian",
            DecoderFamily::Bernoulli => "bernoulli",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DecoderFamily::Gaussian),
            "bernoulli" => Ok(DecoderFamily::Bernoulli),
            other => Err(Error::Validation(format!("unknown decoder family '{other}'"))),
        }
    }
}

/// Architecture of a multilayer perceptron. `layer_sizes` runs
/// `[input, hidden..., output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: OutputActivation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Validation(
                "an MLP needs at least an input and an output size".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Validation("layer sizes must be positive".into()));
        }
        Ok(Self {
            layer_sizes,
            hidden_activation: HiddenActivation::Relu,
            output_activation,
        })
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`, row-major.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

/// An MLP with concrete parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Mlp {
    /// Entries drawn from N(0, 1/fan_in); biases start at zero.
    pub fn random_init(spec: MlpSpec, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(spec.layer_count());
        for l in 0..spec.layer_count() {
            let fan_in = spec.layer_sizes[l];
            let fan_out = spec.layer_sizes[l + 1];
            let std = (1.0 / fan_in as f64).sqrt();
            let data = (0..fan_out * fan_in).map(|_| rng.normal(0.0, std)).collect();
            layers.push(Layer {
                weights: Matrix::from_vec(fan_out, fan_in, data).unwrap(),
                bias: vec![0.0; fan_out],
            });
        }
        Self { spec, layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Forward pass recording per-layer pre-activations and activations.
    /// `activations[0]` is the input, `activations[k+1] = act(preacts[k])`.
    pub fn forward_tape(&self, input: &[f64]) -> MlpTape {
        assert_eq!(input.len(), self.spec.input_size(), "mlp input size");
        let n_layers = self.layers.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        let mut preacts = Vec::with_capacity(n_layers);
        activations.push(input.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.weights.matvec(activations.last().unwrap());
            for (p, b) in pre.iter_mut().zip(&layer.bias) {
                *p += b;
            }
            let act = if l + 1 == n_layers {
                match self.spec.output_activation {
                    OutputActivation::Identity => pre.clone(),
                    OutputActivation::Sigmoid => pre.iter().map(|&v| sigmoid(v)).collect(),
                }
            } else {
                pre.iter().map(|&v| v.max(0.0)).collect()
            };
            preacts.push(pre);
            activations.push(act);
        }
        MlpTape { activations, preacts }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_tape(input).output().to_vec()
    }

    /// Backpropagates `delta_out` (gradient w.r.t. the output pre-activation
    /// of the last layer) through the net, accumulating parameter gradients
    /// into `grads` (flat `[weights, bias]` per layer) and returning the
    /// gradient w.r.t. the input.
    fn backprop(&self, tape: &MlpTape, delta_out: Vec<f64>, grads: &mut [f64]) -> Vec<f64> {
        let mut delta = delta_out;
        let mut offset = grads.len();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (rows, cols) = layer.weights.shape();
            offset -= rows * cols + rows;
            let input = &tape.activations[l];
            let (w_grad, b_grad) = grads[offset..offset + rows * cols + rows]
                .split_at_mut(rows * cols);
            for i in 0..rows {
                let d = delta[i];
                b_grad[i] += d;
                if d != 0.0 {
                    for (g, a) in w_grad[i * cols..(i + 1) * cols].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            let mut upstream = layer.weights.matvec_t(&delta);
            if l > 0 {
                // relu' on the previous layer's pre-activation
                for (u, p) in upstream.iter_mut().zip(&tape.preacts[l - 1]) {
                    if *p <= 0.0 {
                        *u = 0.0;
                    }
                }
            }
            delta = upstream;
        }
        debug_assert_eq!(offset, 0);
        delta
    }

    /// Converts a gradient w.r.t. the MLP output into a gradient w.r.t. the
    /// final pre-activation.
    fn output_delta(&self, tape: &MlpTape, grad_output: &[f64]) -> Vec<f64> {
        match self.spec.output_activation {
            OutputActivation::Identity => grad_output.to_vec(),
            OutputActivation::Sigmoid => {
                let out = tape.output();
                grad_output
                    .iter()
                    .zip(out)
                    .map(|(g, &o)| g * o * (1.0 - o))
                    .collect()
            }
        }
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
        }
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut offset = 0;
        for layer in &mut self.layers {
            let w_len = layer.weights.rows() * layer.weights.cols();
            layer
                .weights
                .as_mut_slice()
                .copy_from_slice(&src[offset..offset + w_len]);
            offset += w_len;
            let b_len = layer.bias.len();
            layer.bias.copy_from_slice(&src[offset..offset + b_len]);
            offset += b_len;
        }
        offset
    }
}

/// Forward-pass record for one MLP evaluation.
#[derive(Debug, Clone)]
pub struct MlpTape {
    pub activations: Vec<Vec<f64>>,
    pub preacts: Vec<Vec<f64>>,
}

impl MlpTape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

/// The acquisition side: a measurement matrix `W` (m x l) over an optional
/// feature net. Without a feature net the encoder is linear and `l = n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub w: Matrix,
    pub acquisition: Option<Mlp>,
}

impl Encoder {
    pub fn linear(w: Matrix) -> Self {
        Self { w, acquisition: None }
    }

    pub fn with_acquisition(w: Matrix, acquisition: Mlp) -> Result<Self> {
        if acquisition.spec.output_size() != w.cols() {
            return Err(Error::Dimension(format!(
                "acquisition output {} does not feed a {}-column measurement matrix",
                acquisition.spec.output_size(),
                w.cols()
            )));
        }
        Ok(Self { w, acquisition: Some(acquisition) })
    }

    /// Signal dimension n.
    pub fn input_size(&self) -> usize {
        self.acquisition
            .as_ref()
            .map_or(self.w.cols(), |a| a.spec.input_size())
    }

    /// Measurement count m.
    pub fn measurement_count(&self) -> usize {
        self.w.rows()
    }

    /// Feature dimension l.
    pub fn feature_size(&self) -> usize {
        self.w.cols()
    }

    pub fn param_count(&self) -> usize {
        self.w.rows() * self.w.cols()
            + self.acquisition.as_ref().map_or(0, Mlp::param_count)
    }

    /// Noiseless measurement mean `W f(x)`.
    pub fn encode_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_size() {
            return Err(Error::Dimension(format!(
                "encode_mean: input length {} but encoder expects {}",
                x.len(),
                self.input_size()
            )));
        }
        Ok(match &self.acquisition {
            Some(acq) => self.w.matvec(&acq.forward(x)),
            None => self.w.matvec(x),
        })
    }
}

/// The measurement model: `y ~ N(W f(x), sigma^2 I)`.
///
/// `sigma = 0` is the deterministic evaluation mode; training requires a
/// positive sigma, enforced by the training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChannel {
    pub encoder: Encoder,
    pub sigma: f64,
}

impl GaussianChannel {
    pub fn new(encoder: Encoder, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::Validation(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { encoder, sigma })
    }

    /// Reparameterized sample: draws `z ~ N(0, I_m)` and returns
    /// `(mean + sigma * z, z)`.
    pub fn sample_measurement(&self, x: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
        let mean = self.encoder.encode_mean(x)?;
        let z = rng.normal_vec(mean.len());
        let y = mean
            .iter()
            .zip(&z)
            .map(|(mu, zi)| mu + self.sigma * zi)
            .collect();
        Ok((y, z))
    }
}

/// Amortized recovery net `g: R^m -> R^n` with its output family.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderNet {
    pub mlp: Mlp,
    pub family: DecoderFamily,
}

impl DecoderNet {
    pub fn new(mlp: Mlp, family: DecoderFamily) -> Result<Self> {
        if family == DecoderFamily::Bernoulli
            && mlp.spec.output_activation != OutputActivation::Sigmoid
        {
            return Err(Error::Validation(
                "bernoulli decoders require a sigmoid output activation".into(),
            ));
        }
        Ok(Self { mlp, family })
    }

    pub fn decode(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.mlp.spec.input_size() {
            return Err(Error::Dimension(format!(
                "decode: measurement length {} but decoder expects {}",
                y.len(),
                self.mlp.spec.input_size()
            )));
        }
        Ok(self.mlp.forward(y))
    }
}

/// A full uncertainty autoencoder: channel parameters phi = (W, acquisition)
/// and decoder parameters theta.
#[derive(Debug, Clone, PartialEq)]
pub struct UaeModel {
    pub channel: GaussianChannel,
    pub decoder: DecoderNet,
}

impl UaeModel {
    pub fn new(channel: GaussianChannel, decoder: DecoderNet) -> Result<Self> {
        let m = channel.encoder.measurement_count();
        let n = channel.encoder.input_size();
        if decoder.mlp.spec.input_size() != m {
            return Err(Error::Dimension(format!(
                "decoder input {} does not match {m} measurements",
                decoder.mlp.spec.input_size()
            )));
        }
        if decoder.mlp.spec.output_size() != n {
            return Err(Error::Dimension(format!(
                "decoder output {} does not match signal dimension {n}",
                decoder.mlp.spec.output_size()
            )));
        }
        Ok(Self { channel, decoder })
    }

    pub fn signal_dim(&self) -> usize {
        self.channel.encoder.input_size()
    }

    pub fn measurement_count(&self) -> usize {
        self.channel.encoder.measurement_count()
    }

    /// Number of encoder-side (phi) parameters; these occupy the first
    /// segment of the flat layout.
    pub fn encoder_param_count(&self) -> usize {
        self.channel.encoder.param_count()
    }

    pub fn decoder_param_count(&self) -> usize {
        self.decoder.mlp.param_count()
    }

    pub fn param_count(&self) -> usize {
        self.encoder_param_count() + self.decoder_param_count()
    }

    /// Flat parameter vector in checkpoint order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.channel.encoder.w.as_slice());
        if let Some(acq) = &self.channel.encoder.acquisition {
            acq.write_params(&mut out);
        }
        self.decoder.mlp.write_params(&mut out);
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count(), "set_params length");
        let w_len = self.channel.encoder.w.rows() * self.channel.encoder.w.cols();
        self.channel.encoder.w.as_mut_slice().copy_from_slice(&p[..w_len]);
        let mut offset = w_len;
        if let Some(acq) = &mut self.channel.encoder.acquisition {
            offset += acq.read_params(&p[offset..]);
        }
        offset += self.decoder.mlp.read_params(&p[offset..]);
        debug_assert_eq!(offset, p.len());
    }

    /// Forward pass for one example with the given noise draw, recording the
    /// full tape. `z` must have length m.
    pub fn forward_example(&self, x: &[f64], z: &[f64]) -> Result<ExampleTape> {
        let enc = &self.channel.encoder;
        if x.len() != enc.input_size() {
            return Err(Error::Dimension(format!(
                "forward: input length {} but model expects {}",
                x.len(),
                enc.input_size()
            )));
        }
        assert_eq!(z.len(), enc.measurement_count(), "noise length");
        let acq_tape = enc.acquisition.as_ref().map(|a| a.forward_tape(x));
        let feat = match &acq_tape {
            Some(t) => t.output().to_vec(),
            None => x.to_vec(),
        };
        let mean = enc.w.matvec(&feat);
        let y: Vec<f64> = mean
            .iter()
            .zip(z)
            .map(|(mu, zi)| mu + self.channel.sigma * zi)
            .collect();
        let dec_tape = self.decoder.mlp.forward_tape(&y);
        Ok(ExampleTape {
            x: x.to_vec(),
            acq: acq_tape,
            feat,
            z: z.to_vec(),
            y,
            dec: dec_tape,
        })
    }

    /// Negative log-likelihood of this example under the decoder family.
    pub fn example_nll(&self, tape: &ExampleTape) -> f64 {
        let n = tape.x.len();
        match self.decoder.family {
            DecoderFamily::Gaussian => {
                let x_hat = tape.dec.output();
                let sq: f64 = tape
                    .x
                    .iter()
                    .zip(x_hat)
                    .map(|(x, h)| (x - h) * (x - h))
                    .sum();
                0.5 * sq + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
            }
            DecoderFamily::Bernoulli => {
                // Computed from the final pre-activation for stability:
                // bce(a, x) = softplus(a) - x * a.
                let preact = tape.dec.preacts.last().unwrap();
                tape.x
                    .iter()
                    .zip(preact)
                    .map(|(x, &a)| softplus(a) - x * a)
                    .sum()
            }
        }
    }

    /// Per-example contribution to the flat gradient vector, accumulated
    /// into `grads` (unscaled; the caller divides by the batch size).
    fn accumulate_example_grads(&self, tape: &ExampleTape, grads: &mut [f64]) {
        let enc = &self.channel.encoder;
        let enc_len = self.encoder_param_count();
        let (enc_grads, dec_grads) = grads.split_at_mut(enc_len);

        // Gradient w.r.t. the decoder's final pre-activation. For gaussian +
        // sigmoid the chain rule factor sits in output_delta; for bernoulli
        // (sigmoid forced) the simplification is x_hat - x directly.
        let delta_out = match self.decoder.family {
            DecoderFamily::Gaussian => {
                let grad_output: Vec<f64> = tape
                    .dec
                    .output()
                    .iter()
                    .zip(&tape.x)
                    .map(|(h, x)| h - x)
                    .collect();
                self.decoder.mlp.output_delta(&tape.dec, &grad_output)
            }
            DecoderFamily::Bernoulli => tape
                .dec
                .output()
                .iter()
                .zip(&tape.x)
                .map(|(h, x)| h - x)
                .collect(),
        };

        let grad_y = self.decoder.mlp.backprop(&tape.dec, delta_out, dec_grads);

        // y = W feat + sigma z, z constant: dL/dW = grad_y (outer) feat.
        let w_len = enc.w.rows() * enc.w.cols();
        let (w_grads, acq_grads) = enc_grads.split_at_mut(w_len);
        let l = enc.w.cols();
        for (i, d) in grad_y.iter().enumerate() {
            if *d != 0.0 {
                for (g, f) in w_grads[i * l..(i + 1) * l].iter_mut().zip(&tape.feat) {
                    *g += d * f;
                }
            }
        }

        if let Some(acq) = &enc.acquisition {
            let grad_feat = enc.w.matvec_t(&grad_y);
            let acq_tape = tape.acq.as_ref().expect("tape matches model");
            let delta = acq.output_delta(acq_tape, &grad_feat);
            acq.backprop(acq_tape, delta, acq_grads);
        }
    }
}

/// Forward record for one example; everything backward needs.
#[derive(Debug, Clone)]
pub struct ExampleTape {
    pub x: Vec<f64>,
    pub acq: Option<MlpTape>,
    pub feat: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub dec: MlpTape,
}

impl ExampleTape {
    pub fn x_hat(&self) -> &[f64] {
        self.dec.output()
    }
}

/// Forward record for one minibatch.
#[derive(Debug, Clone)]
pub struct BatchTape {
    pub examples: Vec<ExampleTape>,
}

impl BatchTape {
    pub fn batch_size(&self) -> usize {
        self.examples.len()
    }
}

/// Exact gradients of the mean minibatch NLL for all parameters (phi then
/// theta) in the flat layout. Per-example gradients are reduced through the
/// fixed chunk tree, so the result does not depend on thread count.
pub fn backward(model: &UaeModel, tape: &BatchTape) -> Result<Vec<f64>> {
    if tape.examples.is_empty() {
        return Err(Error::State("backward called with an empty tape".into()));
    }
    let n_params = model.param_count();
    let partials = par::map_chunks(tape.examples.len(), par::CHUNK_SIZE, |range| {
        let mut grads = vec![0.0; n_params];
        for ex in &tape.examples[range] {
            model.accumulate_example_grads(ex, &mut grads);
        }
        grads
    });
    let mut total = vec![0.0; n_params];
    for partial in partials {
        for (t, p) in total.iter_mut().zip(&partial) {
            *t += p;
        }
    }
    let scale = 1.0 / tape.batch_size() as f64;
    for g in &mut total {
        *g *= scale;
    }
    Ok(total)
}
