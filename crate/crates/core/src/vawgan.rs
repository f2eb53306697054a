//! Conditional variational autoencoder with a Wasserstein critic: encoder,
//! emotion/F0-conditioned generator, unconditioned critic, their losses and
//! one training update.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::neuro::{rmsprop_step, Activation, LayerSpec, Network, ParameterStore, RmsProp, Tensor};

pub const LATENT_DIM: usize = 128;
pub const EMOTION_SLOTS: usize = 10;
/// Latent + emotion one-hot + one F0 scalar.
pub const SPECTRUM_COND_WIDTH: usize = LATENT_DIM + EMOTION_SLOTS + 1;
/// Latent + emotion one-hot.
pub const PROSODY_COND_WIDTH: usize = LATENT_DIM + EMOTION_SLOTS;

/// Frames per forward call at inference time.
const INFERENCE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Spectrum,
    Prosody,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Spectrum => "spectrum",
            Role::Prosody => "prosody",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "spectrum" => Ok(Role::Spectrum),
            "prosody" => Ok(Role::Prosody),
            other => Err(Error::Invalid(format!("unknown model role '{other}'"))),
        }
    }
}

/// Layer dimensions of the three networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub role: Role,
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub emotion_slots: usize,
    pub f0_condition: bool,
    pub enc_channels: Vec<usize>,
    pub enc_kernel: usize,
    pub enc_stride: usize,
    pub gen_seed_channels: usize,
    pub gen_channels: Vec<usize>,
    pub gen_kernels: Vec<usize>,
    pub gen_strides: Vec<usize>,
    pub disc_channels: Vec<usize>,
    pub disc_kernels: Vec<usize>,
    pub disc_stride: usize,
}

impl ArchConfig {
    pub fn spectrum(feature_dim: usize) -> Self {
        Self {
            role: Role::Spectrum,
            feature_dim,
            latent_dim: LATENT_DIM,
            emotion_slots: EMOTION_SLOTS,
            f0_condition: true,
            enc_channels: vec![16, 32, 64, 128, 256],
            enc_kernel: 7,
            enc_stride: 3,
            gen_seed_channels: 64,
            gen_channels: vec![32, 16, 8, 1],
            gen_kernels: vec![9, 7, 7, 1025],
            gen_strides: vec![3, 3, 3, 1],
            disc_channels: vec![16, 32, 64],
            disc_kernels: vec![7, 7, 115],
            disc_stride: 3,
        }
    }

    pub fn prosody(feature_dim: usize) -> Self {
        Self {
            role: Role::Prosody,
            f0_condition: false,
            ..Self::spectrum(feature_dim)
        }
    }

    /// Spectrum network with the F0 scalar removed from the conditioning.
    pub fn without_f0(mut self) -> Self {
        self.f0_condition = false;
        self
    }

    /// Divides every hidden channel count by `factor` (at least 1 channel),
    /// keeping the final generator channel at 1.
    pub fn reduced(mut self, factor: usize) -> Self {
        let shrink = |v: &mut Vec<usize>| v.iter_mut().for_each(|c| *c = (*c / factor).max(1));
        shrink(&mut self.enc_channels);
        shrink(&mut self.disc_channels);
        let last = self.gen_channels.len() - 1;
        shrink(&mut self.gen_channels);
        self.gen_channels[last] = 1;
        self.gen_seed_channels = (self.gen_seed_channels / factor).max(1);
        self
    }

    pub fn cond_width(&self) -> usize {
        self.latent_dim + self.emotion_slots + usize::from(self.f0_condition)
    }

    pub fn expected_cond_width(&self) -> usize {
        match (self.role, self.f0_condition) {
            (Role::Spectrum, true) => SPECTRUM_COND_WIDTH,
            _ => PROSODY_COND_WIDTH,
        }
    }

    /// Upsampling factor of the generator's deconvolution stack.
    pub fn gen_upsampling(&self) -> usize {
        self.gen_strides.iter().product()
    }

    /// Length of the generator's seed sequence.
    pub fn gen_seed_len(&self) -> usize {
        self.feature_dim.div_ceil(self.gen_upsampling())
    }

    pub fn validate(&self) -> Result<()> {
        if self.role == Role::Prosody && self.f0_condition {
            return Err(Error::ConditionWidth {
                expected: PROSODY_COND_WIDTH,
                actual: self.cond_width(),
            });
        }
        if self.cond_width() != self.expected_cond_width()
            || self.latent_dim != LATENT_DIM
            || self.emotion_slots != EMOTION_SLOTS
        {
            return Err(Error::ConditionWidth {
                expected: self.expected_cond_width(),
                actual: self.cond_width(),
            });
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        let n = self.gen_channels.len();
        if n == 0
            || self.gen_kernels.len() != n
            || self.gen_strides.len() != n
            || self.gen_channels[n - 1] != 1
        {
            return Err(Error::Config(
                "generator needs matching kernels/strides and a 1-channel output".into(),
            ));
        }
        if self.disc_channels.len() != self.disc_kernels.len() || self.enc_channels.is_empty() {
            return Err(Error::Config(
                "critic kernels must match its channels".into(),
            ));
        }
        Ok(())
    }

    fn seq_len_after(&self, mut len: usize, layers: usize, stride: usize) -> usize {
        for _ in 0..layers {
            len = len.div_ceil(stride);
        }
        len
    }

    pub fn encoder_layers(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let mut cin = 1;
        for &c in &self.enc_channels {
            layers.push(LayerSpec::conv1d(cin, c, self.enc_kernel, self.enc_stride));
            cin = c;
        }
        let len = self.seq_len_after(self.feature_dim, self.enc_channels.len(), self.enc_stride);
        layers.push(
            LayerSpec::dense(cin * len, 2 * self.latent_dim).with_activation(Activation::Linear),
        );
        layers
    }

    pub fn generator_layers(&self) -> Vec<LayerSpec> {
        let mut layers = vec![LayerSpec::dense(
            self.cond_width(),
            self.gen_seed_channels * self.gen_seed_len(),
        )];
        let mut cin = self.gen_seed_channels;
        let n = self.gen_channels.len();
        for i in 0..n {
            let mut l = LayerSpec::deconv1d(
                cin,
                self.gen_channels[i],
                self.gen_kernels[i],
                self.gen_strides[i],
            );
            if i == n - 1 {
                l = l.with_activation(Activation::Linear);
            }
            layers.push(l);
            cin = self.gen_channels[i];
        }
        layers
    }

    pub fn discriminator_layers(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let mut cin = 1;
        for (&c, &k) in self.disc_channels.iter().zip(&self.disc_kernels) {
            layers.push(LayerSpec::conv1d(cin, c, k, self.disc_stride));
            cin = c;
        }
        let len = self.seq_len_after(self.feature_dim, self.disc_channels.len(), self.disc_stride);
        layers.push(LayerSpec::dense(cin * len, 1).with_activation(Activation::Linear));
        layers
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Number of updates; 0 derives it from `epochs` and the corpus size.
    pub steps: usize,
    pub n_critic: usize,
    pub clip_c: f64,
    pub lambda_adv: f64,
    pub lambda_kl: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-scale settings: RMSProp at 1e-5, batches of 256 for 45 epochs.
    pub fn paper() -> Self {
        Self {
            lr: 1e-5,
            batch: 256,
            epochs: 45,
            steps: 0,
            n_critic: 5,
            clip_c: 0.01,
            lambda_adv: 1.0,
            lambda_kl: 1.0,
            seed: 0,
        }
    }

    /// Laptop-scale settings used by the bundled corpus and the tests.
    pub fn desk() -> Self {
        Self {
            lr: 1e-3,
            batch: 32,
            epochs: 0,
            steps: 600,
            n_critic: 1,
            clip_c: 0.01,
            lambda_adv: 0.1,
            lambda_kl: 0.01,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.clip_c]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        let nonneg = [self.lambda_adv, self.lambda_kl]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite());
        if !positive
            || !nonneg
            || self.batch < 2
            || self.n_critic == 0
            || (self.steps == 0 && self.epochs == 0)
        {
            return Err(Error::Config(format!(
                "invalid training configuration {self:?}"
            )));
        }
        Ok(())
    }

    /// Updates to run for a corpus of `frames` training frames.
    pub fn total_steps(&self, frames: usize) -> usize {
        if self.steps > 0 {
            self.steps
        } else {
            (self.epochs * frames).div_ceil(self.batch).max(1)
        }
    }
}

/// Decoder conditioning for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVector {
    emotion: Vec<f64>,
    f0: Option<f64>,
}

impl ConditionVector {
    pub fn new(emotion: Vec<f64>, f0: Option<f64>) -> Result<Self> {
        if emotion.len() != EMOTION_SLOTS {
            return Err(Error::OneHot(format!(
                "{} slots, expected {EMOTION_SLOTS}",
                emotion.len()
            )));
        }
        let ones = emotion.iter().filter(|&&v| v == 1.0).count();
        let zeros = emotion.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != EMOTION_SLOTS - 1 {
            return Err(Error::OneHot(format!("{emotion:?}")));
        }
        if let Some(v) = f0 {
            if !v.is_finite() {
                return Err(Error::NonFinite("F0 condition".into()));
            }
        }
        Ok(Self { emotion, f0 })
    }

    pub fn from_slot(slot: usize, f0: Option<f64>) -> Result<Self> {
        if slot >= EMOTION_SLOTS {
            return Err(Error::OneHot(format!("slot {slot} out of range")));
        }
        let mut e = vec![0.0; EMOTION_SLOTS];
        e[slot] = 1.0;
        Self::new(e, f0)
    }

    pub fn emotion(&self) -> &[f64] {
        &self.emotion
    }

    pub fn slot(&self) -> usize {
        self.emotion.iter().position(|&v| v == 1.0).unwrap_or(0)
    }

    pub fn f0(&self) -> Option<f64> {
        self.f0
    }

    pub fn width(&self) -> usize {
        self.emotion.len() + usize::from(self.f0.is_some())
    }
}

/// Posterior parameters and a sample for a batch, each `[B, latent]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub z: Tensor,
    pub eps: Tensor,
}

/// Source of reparameterization noise.
pub enum Noise<'a> {
    Zero,
    Sampled(&'a mut ChaCha8Rng),
}

pub fn kl_loss(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

pub fn recon_loss(x: &[f64], x_hat: &[f64]) -> f64 {
    x.iter()
        .zip(x_hat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / x.len() as f64
}

/// `(d_loss, g_adv_loss) = (mean(fake) - mean(real), -mean(fake))`.
pub fn wgan_losses(real: &[f64], fake: &[f64]) -> Result<(f64, f64)> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::BatchTooSmall(real.len().min(fake.len())));
    }
    let mr = real.iter().sum::<f64>() / real.len() as f64;
    let mf = fake.iter().sum::<f64>() / fake.len() as f64;
    Ok((mf - mr, -mf))
}

pub fn clip_weights(store: &mut ParameterStore, c: f64) {
    store.clip_values(c);
}

/// One training batch: normalized frames with emotion slots and, for the
/// F0-conditioned network, one F0 scalar per frame.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub frames: Tensor,
    pub emotions: Vec<usize>,
    pub f0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub recon: f64,
    pub kl: f64,
    pub d_loss: f64,
    pub g_adv: f64,
    pub total: f64,
}

impl LossReport {
    fn check(self) -> Result<Self> {
        if [self.recon, self.kl, self.d_loss, self.g_adv, self.total]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(self)
        } else {
            Err(Error::NonFinite(format!("training losses {self:?}")))
        }
    }
}

/// The encoder, generator and critic with disjoint parameter stores.
#[derive(Debug, Clone, PartialEq)]
pub struct VawGan {
    arch: ArchConfig,
    encoder: Network,
    generator: Network,
    discriminator: Network,
    pub enc: ParameterStore,
    pub gen: ParameterStore,
    pub disc: ParameterStore,
}

impl VawGan {
    /// Builds the three networks with seeded initialization; critic weights
    /// start inside the clipping box.
    pub fn new(arch: ArchConfig, cfg: &TrainConfig) -> Result<Self> {
        let mut model = Self::empty(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        model.encoder.init_params(&mut model.enc, &mut rng)?;
        model.generator.init_params(&mut model.gen, &mut rng)?;
        model.discriminator.init_params(&mut model.disc, &mut rng)?;
        clip_weights(&mut model.disc, cfg.clip_c);
        Ok(model)
    }

    /// Networks without parameters, for loading from a checkpoint.
    pub fn empty(arch: ArchConfig) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            encoder: Network::new("", arch.encoder_layers())?,
            generator: Network::new("", arch.generator_layers())?,
            discriminator: Network::new("", arch.discriminator_layers())?,
            arch,
            enc: ParameterStore::new(),
            gen: ParameterStore::new(),
            disc: ParameterStore::new(),
        })
    }

    pub fn from_stores(
        arch: ArchConfig,
        enc: ParameterStore,
        gen: ParameterStore,
        disc: ParameterStore,
    ) -> Result<Self> {
        let mut m = Self::empty(arch)?;
        for (net, store) in [
            (&m.encoder, &enc),
            (&m.generator, &gen),
            (&m.discriminator, &disc),
        ] {
            for (i, spec) in net.layers().iter().enumerate() {
                if store.value(&net.weight_name(i))?.shape() != spec.weight_shape().as_slice()
                    || store.value(&net.bias_name(i))?.shape() != spec.bias_shape().as_slice()
                {
                    return Err(Error::Shape(format!(
                        "stored parameters do not fit layer {i}"
                    )));
                }
            }
            if store.len() != 2 * net.layers().len() {
                return Err(Error::Shape("unexpected parameters in store".into()));
            }
        }
        m.enc = enc;
        m.gen = gen;
        m.disc = disc;
        Ok(m)
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn generator(&self) -> &Network {
        &self.generator
    }

    pub fn discriminator(&self) -> &Network {
        &self.discriminator
    }

    fn check_frames(&self, frames: &Tensor) -> Result<usize> {
        match frames.shape() {
            [b, d] if *d == self.arch.feature_dim => Ok(*b),
            [_, d] => Err(Error::Dimension {
                expected: self.arch.feature_dim,
                actual: *d,
            }),
            s => Err(Error::Shape(format!("frames must be [B, D], got {s:?}"))),
        }
    }

    fn split_latent(&self, out: &Tensor, noise: &mut Noise) -> Result<LatentCode> {
        let b = out.shape()[0];
        let l = self.arch.latent_dim;
        let mut mu = Vec::with_capacity(b * l);
        let mut logvar = Vec::with_capacity(b * l);
        for row in out.data().chunks(2 * l) {
            mu.extend_from_slice(&row[..l]);
            logvar.extend_from_slice(&row[l..]);
        }
        let eps: Vec<f64> = match noise {
            Noise::Zero => vec![0.0; b * l],
            Noise::Sampled(rng) => (0..b * l)
                .map(|_| StandardNormal.sample(&mut **rng))
                .collect(),
        };
        let z = mu
            .iter()
            .zip(&logvar)
            .zip(&eps)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();
        Ok(LatentCode {
            mu: Tensor::new(vec![b, l], mu)?,
            logvar: Tensor::new(vec![b, l], logvar)?,
            z: Tensor::new(vec![b, l], z)?,
            eps: Tensor::new(vec![b, l], eps)?,
        })
    }

    pub fn encode(&self, frames: &Tensor, mut noise: Noise) -> Result<LatentCode> {
        self.check_frames(frames)?;
        let out = self.encoder.forward(&self.enc, frames)?;
        self.split_latent(&out, &mut noise)
    }

    /// Encodes one frame.
    pub fn encode_frame(&self, frame: &[f64], noise: Noise) -> Result<LatentCode> {
        self.encode(&Tensor::new(vec![1, frame.len()], frame.to_vec())?, noise)
    }

    fn decoder_input(&self, z: &Tensor, conds: &[ConditionVector]) -> Result<Tensor> {
        let (b, l) = match z.shape() {
            [b, l] => (*b, *l),
            s => {
                return Err(Error::Shape(format!(
                    "latent must be [B, {}], got {s:?}",
                    self.arch.latent_dim
                )))
            }
        };
        if l != self.arch.latent_dim {
            return Err(Error::Dimension {
                expected: self.arch.latent_dim,
                actual: l,
            });
        }
        if conds.len() != b {
            return Err(Error::Shape(format!(
                "{b} latents but {} conditions",
                conds.len()
            )));
        }
        let width = self.arch.cond_width();
        let mut input = Vec::with_capacity(b * width);
        for (row, c) in z.data().chunks(l).zip(conds) {
            if l + c.width() != width {
                return Err(Error::ConditionWidth {
                    expected: width,
                    actual: l + c.width(),
                });
            }
            input.extend_from_slice(row);
            input.extend_from_slice(c.emotion());
            if let Some(f) = c.f0() {
                input.push(f);
            }
        }
        Tensor::new(vec![b, width], input)
    }

    fn crop(&self, out: &Tensor) -> Result<Tensor> {
        let b = out.shape()[0];
        let grid = out.len() / b;
        let d = self.arch.feature_dim;
        let data = out
            .data()
            .chunks(grid)
            .flat_map(|r| r[..d].iter().copied())
            .collect();
        Tensor::new(vec![b, d], data)
    }

    pub fn decode(&self, z: &Tensor, conds: &[ConditionVector]) -> Result<Tensor> {
        let input = self.decoder_input(z, conds)?;
        self.crop(&self.generator.forward(&self.gen, &input)?)
    }

    pub fn discriminate(&self, frames: &Tensor) -> Result<Vec<f64>> {
        self.check_frames(frames)?;
        Ok(self.discriminator.forward(&self.disc, frames)?.into_data())
    }

    /// Encode with `eps = 0` then decode under new conditions, in chunks.
    pub fn convert(&self, frames: &Tensor, conds: &[ConditionVector]) -> Result<Tensor> {
        let b = self.check_frames(frames)?;
        if conds.len() != b {
            return Err(Error::Shape(format!(
                "{b} frames but {} conditions",
                conds.len()
            )));
        }
        let d = self.arch.feature_dim;
        let mut out = Vec::with_capacity(b * d);
        for start in (0..b).step_by(INFERENCE_CHUNK) {
            let end = (start + INFERENCE_CHUNK).min(b);
            let chunk = Tensor::new(
                vec![end - start, d],
                frames.data()[start * d..end * d].to_vec(),
            )?;
            let code = self.encode(&chunk, Noise::Zero)?;
            out.extend(self.decode(&code.mu, &conds[start..end])?.into_data());
        }
        Tensor::new(vec![b, d], out)
    }

    fn conditions(&self, batch: &TrainBatch) -> Result<Vec<ConditionVector>> {
        let b = batch.emotions.len();
        match (&batch.f0, self.arch.f0_condition) {
            (Some(f), true) if f.len() == b => (0..b)
                .map(|i| ConditionVector::from_slot(batch.emotions[i], Some(f[i])))
                .collect(),
            (_, true) => Err(Error::Invalid(
                "F0-conditioned network needs one F0 value per frame".into(),
            )),
            (_, false) => (0..b)
                .map(|i| ConditionVector::from_slot(batch.emotions[i], None))
                .collect(),
        }
    }

    /// Critic updates on a fixed generated batch, then one encoder and
    /// generator update on `recon + lambda_kl * KL + lambda_adv * g_adv`.
    pub fn train_step(
        &mut self,
        batch: &TrainBatch,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<LossReport> {
        let b = self.check_frames(&batch.frames)?;
        if b < 2 {
            return Err(Error::BatchTooSmall(b));
        }
        if batch.emotions.len() != b {
            return Err(Error::Shape(format!(
                "{b} frames but {} emotion tags",
                batch.emotions.len()
            )));
        }
        let conds = self.conditions(batch)?;
        let opt = RmsProp::new(cfg.lr);
        let d = self.arch.feature_dim;
        let l = self.arch.latent_dim;
        let bf = b as f64;

        let (enc_out, enc_trace) = self.encoder.forward_traced(&self.enc, &batch.frames)?;
        let code = self.split_latent(&enc_out, &mut Noise::Sampled(rng))?;
        let gen_in = self.decoder_input(&code.z, &conds)?;
        let (gen_out, gen_trace) = self.generator.forward_traced(&self.gen, &gen_in)?;
        let x_hat = self.crop(&gen_out)?;

        let mut d_loss = 0.0;
        let mut both = batch.frames.data().to_vec();
        both.extend_from_slice(x_hat.data());
        let both = Tensor::new(vec![2 * b, d], both)?;
        let critic_grad =
            Tensor::from_fn(&[2 * b, 1], |i| if i < b { -1.0 / bf } else { 1.0 / bf });
        for _ in 0..cfg.n_critic {
            let (scores, trace) = self.discriminator.forward_traced(&self.disc, &both)?;
            let (real, fake) = scores.data().split_at(b);
            d_loss = wgan_losses(real, fake)?.0;
            self.disc.zero_grads();
            self.discriminator
                .backward(&mut self.disc, &trace, &critic_grad)?;
            rmsprop_step(&mut self.disc, &opt)?;
            clip_weights(&mut self.disc, cfg.clip_c);
        }

        let (fake_scores, disc_trace) = self.discriminator.forward_traced(&self.disc, &x_hat)?;
        let g_adv = -fake_scores.data().iter().sum::<f64>() / bf;
        let adv_grad = Tensor::from_fn(&[b, 1], |_| -cfg.lambda_adv / bf);
        let grad_adv_x = self
            .discriminator
            .backward(&mut self.disc, &disc_trace, &adv_grad)?;
        self.disc.zero_grads();

        let recon = recon_loss(batch.frames.data(), x_hat.data());
        let kl = (0..b)
            .map(|i| {
                kl_loss(
                    &code.mu.data()[i * l..(i + 1) * l],
                    &code.logvar.data()[i * l..(i + 1) * l],
                )
            })
            .sum::<f64>()
            / bf;
        let scale = 2.0 / (bf * d as f64);
        let grid = gen_out.len() / b;
        let mut grad_gen = vec![0.0; gen_out.len()];
        for i in 0..b {
            for j in 0..d {
                let idx = i * d + j;
                grad_gen[i * grid + j] =
                    scale * (x_hat.data()[idx] - batch.frames.data()[idx]) + grad_adv_x.data()[idx];
            }
        }
        let grad_gen = Tensor::new(gen_out.shape().to_vec(), grad_gen)?;
        self.gen.zero_grads();
        let grad_in = self
            .generator
            .backward(&mut self.gen, &gen_trace, &grad_gen)?;

        let width = self.arch.cond_width();
        let mut grad_enc = vec![0.0; b * 2 * l];
        for i in 0..b {
            for k in 0..l {
                let idx = i * l + k;
                let dz = grad_in.data()[i * width + k];
                let (mu, lv, eps) = (
                    code.mu.data()[idx],
                    code.logvar.data()[idx],
                    code.eps.data()[idx],
                );
                grad_enc[i * 2 * l + k] = dz + cfg.lambda_kl * mu / bf;
                grad_enc[i * 2 * l + l + k] =
                    dz * eps * 0.5 * (0.5 * lv).exp() + cfg.lambda_kl * 0.5 * (lv.exp() - 1.0) / bf;
            }
        }
        self.enc.zero_grads();
        self.encoder.backward(
            &mut self.enc,
            &enc_trace,
            &Tensor::new(vec![b, 2 * l], grad_enc)?,
        )?;
        rmsprop_step(&mut self.gen, &opt)?;
        rmsprop_step(&mut self.enc, &opt)?;

        LossReport {
            recon,
            kl,
            d_loss,
            g_adv,
            total: recon + cfg.lambda_kl * kl + cfg.lambda_adv * g_adv,
        }
        .check()
    }

    /// Losses of the current parameters on a batch, without updating.
    pub fn evaluate_losses(&self, batch: &TrainBatch, cfg: &TrainConfig) -> Result<LossReport> {
        let conds = self.conditions(batch)?;
        let code = self.encode(&batch.frames, Noise::Zero)?;
        let x_hat = self.decode(&code.mu, &conds)?;
        let b = conds.len();
        let l = self.arch.latent_dim;
        let real = self.discriminate(&batch.frames)?;
        let fake = self.discriminate(&x_hat)?;
        let (d_loss, g_adv) = wgan_losses(&real, &fake)?;
        let recon = recon_loss(batch.frames.data(), x_hat.data());
        let kl = (0..b)
            .map(|i| {
                kl_loss(
                    &code.mu.data()[i * l..(i + 1) * l],
                    &code.logvar.data()[i * l..(i + 1) * l],
                )
            })
            .sum::<f64>()
            / b as f64;
        LossReport {
            recon,
            kl,
            d_loss,
            g_adv,
            total: recon + cfg.lambda_kl * kl + cfg.lambda_adv * g_adv,
        }
        .check()
    }
}

/// Exposes an encoder, generator or critic (with its store) to the gradient
/// checker.
pub fn component_model(model: &VawGan, which: Component) -> crate::neuro::Model {
    let (network, store) = match which {
        Component::Encoder => (model.encoder.clone(), model.enc.clone()),
        Component::Generator => (model.generator.clone(), model.gen.clone()),
        Component::Discriminator => (model.discriminator.clone(), model.disc.clone()),
    };
    crate::neuro::Model { network, store }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Encoder,
    Generator,
    Discriminator,
}
