//! Hourglass (encoder-decoder with skip connections) generator
//! networks, parameter initialization, and checkpoint serialization.
//!
//! Block layout at each depth i:
//!   down d_i:  conv(k_d, stride) -> norm -> lrelu -> conv(k_d, 1) -> norm -> lrelu
//!   skip s_i:  conv(k_s = 1)     -> norm -> lrelu   (taps d_i's input)
//!   up   u_i:  upsample x2 (stride-2 nets) -> concat with s_i -> norm
//!              -> conv(k_u) -> norm -> lrelu -> conv(1x1) -> norm -> lrelu
//! followed by a final 1x1 conv and the output activation. Upsampling
//! happens at decoder-block entry so the decoder convolutions run at
//! the finer resolution; with the upsample at block exit the head
//! sees nearest-upsampled features and the output cannot express
//! detail below the 2x2 block grid. The image-generator variant
//! downsamples with stride 2 and restores resolution by
//! nearest-neighbor upsampling; the kernel generator keeps stride 1
//! everywhere so its 9x9 support never degenerates.

use std::io::{Read as _, Write as _};
use std::path::Path;

use ndarray::Array4;

use crate::autograd::{
    concat_channels, conv2d, instance_norm, leaky_relu, sigmoid, softmax_all, upsample_nearest,
    Tensor,
};
use crate::error::{DeconvError, Result};
use crate::rng::Rng;

/// Head activation: sigmoid for images (pixels in (0,1)), global
/// softmax for kernels (entries sum to 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Sigmoid,
    SoftmaxAll,
}

/// Architecture hyperparameters. Defaults follow the generator
/// settings used throughout: depth 5, 128 filters down/up with 3x3
/// kernels, 4-channel 1x1 skips, noise input U(0, 0.1).
#[derive(Debug, Clone)]
pub struct HourglassConfig {
    pub depth: usize,
    pub filters_down: Vec<usize>,
    pub filters_up: Vec<usize>,
    pub filters_skip: Vec<usize>,
    pub kernels_down: Vec<usize>,
    pub kernels_up: Vec<usize>,
    pub kernels_skip: Vec<usize>,
    /// 2 for the image net, 1 for the kernel net.
    pub down_stride: usize,
    pub output_activation: OutputActivation,
    /// Noise channels fed to the net.
    pub input_channels: usize,
    pub input_spatial: (usize, usize),
    pub output_channels: usize,
    pub leaky_slope: f64,
}

impl HourglassConfig {
    /// Image generator: stride 2, sigmoid head, 32 noise channels.
    pub fn image(output_channels: usize, input_spatial: (usize, usize)) -> HourglassConfig {
        HourglassConfig {
            depth: 5,
            filters_down: vec![128; 5],
            filters_up: vec![128; 5],
            filters_skip: vec![4; 5],
            kernels_down: vec![3; 5],
            kernels_up: vec![3; 5],
            kernels_skip: vec![1; 5],
            down_stride: 2,
            output_activation: OutputActivation::Sigmoid,
            input_channels: 32,
            input_spatial,
            output_channels,
            leaky_slope: 0.1,
        }
    }

    /// Kernel generator: stride 1, softmax head, 8 noise channels,
    /// single output channel covering the kernel support.
    pub fn kernel(support: (usize, usize)) -> HourglassConfig {
        HourglassConfig {
            down_stride: 1,
            output_activation: OutputActivation::SoftmaxAll,
            input_channels: 8,
            input_spatial: support,
            output_channels: 1,
            ..HourglassConfig::image(1, support)
        }
    }

    /// Replaces every down/up filter count; the desk-scale knob.
    pub fn with_filters(mut self, n: usize) -> HourglassConfig {
        self.filters_down = vec![n; self.depth];
        self.filters_up = vec![n; self.depth];
        self
    }

    pub fn with_input_channels(mut self, n: usize) -> HourglassConfig {
        self.input_channels = n;
        self
    }

    fn validate(&self) -> Result<()> {
        let d = self.depth;
        if d == 0 {
            return Err(DeconvError::Config("depth must be >= 1".into()));
        }
        for (name, list) in [
            ("filters_down", &self.filters_down),
            ("filters_up", &self.filters_up),
            ("filters_skip", &self.filters_skip),
            ("kernels_down", &self.kernels_down),
            ("kernels_up", &self.kernels_up),
            ("kernels_skip", &self.kernels_skip),
        ] {
            if list.len() != d {
                return Err(DeconvError::Config(format!(
                    "{name} has {} entries for depth {d}",
                    list.len()
                )));
            }
            if list.iter().any(|&v| v == 0) {
                return Err(DeconvError::Config(format!("{name} contains zero")));
            }
        }
        if self.down_stride != 1 && self.down_stride != 2 {
            return Err(DeconvError::Config(format!(
                "down_stride must be 1 or 2, got {}",
                self.down_stride
            )));
        }
        if self.down_stride == 2 {
            let div = 1usize << d;
            let (h, w) = self.input_spatial;
            if h % div != 0 || w % div != 0 {
                return Err(DeconvError::Config(format!(
                    "input {h}x{w} not divisible by 2^{d}"
                )));
            }
        }
        Ok(())
    }
}

struct ConvLayer {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
}

impl ConvLayer {
    /// Weights and biases drawn U(-a, a), a = sqrt(1 / fan_in).
    fn init(in_ch: usize, out_ch: usize, k: usize, stride: usize, rng: &mut Rng) -> ConvLayer {
        let fan_in = (in_ch * k * k) as f64;
        let a = (1.0 / fan_in).sqrt();
        let mut w = Array4::zeros((out_ch, in_ch, k, k));
        rng.fill_uniform(w.as_slice_mut().unwrap(), -a, a);
        let mut b = Array4::zeros((1, out_ch, 1, 1));
        rng.fill_uniform(b.as_slice_mut().unwrap(), -a, a);
        ConvLayer {
            weight: Tensor::parameter(w),
            bias: Tensor::parameter(b),
            stride,
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.weight, &self.bias, self.stride)
    }
}

struct NormLayer {
    gain: Tensor,
    bias: Tensor,
}

impl NormLayer {
    fn init(channels: usize) -> NormLayer {
        NormLayer {
            gain: Tensor::parameter(Array4::ones((1, channels, 1, 1))),
            bias: Tensor::parameter(Array4::zeros((1, channels, 1, 1))),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        instance_norm(x, &self.gain, &self.bias)
    }
}

struct DownBlock {
    conv1: ConvLayer,
    norm1: NormLayer,
    conv2: ConvLayer,
    norm2: NormLayer,
}

impl DownBlock {
    fn forward(&self, x: &Tensor, slope: f64) -> Result<Tensor> {
        let x = leaky_relu(&self.norm1.forward(&self.conv1.forward(x)?)?, slope);
        Ok(leaky_relu(
            &self.norm2.forward(&self.conv2.forward(&x)?)?,
            slope,
        ))
    }
}

struct SkipBlock {
    conv: ConvLayer,
    norm: NormLayer,
}

impl SkipBlock {
    fn forward(&self, x: &Tensor, slope: f64) -> Result<Tensor> {
        Ok(leaky_relu(&self.norm.forward(&self.conv.forward(x)?)?, slope))
    }
}

struct UpBlock {
    norm_in: NormLayer,
    conv1: ConvLayer,
    norm1: NormLayer,
    conv2: ConvLayer,
    norm2: NormLayer,
    upsample: bool,
}

impl UpBlock {
    fn forward(&self, carried: &Tensor, skip: &Tensor, slope: f64) -> Result<Tensor> {
        let carried = if self.upsample {
            upsample_nearest(carried, 2)?
        } else {
            carried.clone()
        };
        let x = concat_channels(&carried, skip)?;
        let x = self.norm_in.forward(&x)?;
        let x = leaky_relu(&self.norm1.forward(&self.conv1.forward(&x)?)?, slope);
        Ok(leaky_relu(
            &self.norm2.forward(&self.conv2.forward(&x)?)?,
            slope,
        ))
    }
}

/// A built hourglass generator holding its trainable parameters.
pub struct Network {
    config: HourglassConfig,
    downs: Vec<DownBlock>,
    skips: Vec<SkipBlock>,
    ups: Vec<UpBlock>,
    out_conv: ConvLayer,
    params: Vec<Tensor>,
}

/// Constructs the network, drawing initial weights from the seeded
/// stream in a fixed layer order (two builds from the same stream are
/// identical).
pub fn build_hourglass(cfg: &HourglassConfig, rng: &mut Rng) -> Result<Network> {
    cfg.validate()?;
    let depth = cfg.depth;
    let mut params: Vec<Tensor> = Vec::new();
    let track = |layer: &ConvLayer, params: &mut Vec<Tensor>| {
        params.push(layer.weight.clone());
        params.push(layer.bias.clone());
    };
    let track_norm = |layer: &NormLayer, params: &mut Vec<Tensor>| {
        params.push(layer.gain.clone());
        params.push(layer.bias.clone());
    };

    let mut downs = Vec::with_capacity(depth);
    let mut in_ch = cfg.input_channels;
    for i in 0..depth {
        let out_ch = cfg.filters_down[i];
        let k = cfg.kernels_down[i];
        let conv1 = ConvLayer::init(in_ch, out_ch, k, cfg.down_stride, rng);
        let norm1 = NormLayer::init(out_ch);
        let conv2 = ConvLayer::init(out_ch, out_ch, k, 1, rng);
        let norm2 = NormLayer::init(out_ch);
        track(&conv1, &mut params);
        track_norm(&norm1, &mut params);
        track(&conv2, &mut params);
        track_norm(&norm2, &mut params);
        downs.push(DownBlock {
            conv1,
            norm1,
            conv2,
            norm2,
        });
        in_ch = out_ch;
    }

    let mut skips = Vec::with_capacity(depth);
    for i in 0..depth {
        // skips tap the encoder block input, so their channel count is
        // the block's input count
        let tap_ch = if i == 0 {
            cfg.input_channels
        } else {
            cfg.filters_down[i - 1]
        };
        let conv = ConvLayer::init(tap_ch, cfg.filters_skip[i], cfg.kernels_skip[i], 1, rng);
        let norm = NormLayer::init(cfg.filters_skip[i]);
        track(&conv, &mut params);
        track_norm(&norm, &mut params);
        skips.push(SkipBlock { conv, norm });
    }

    let mut ups = Vec::with_capacity(depth);
    for i in 0..depth {
        let carried = if i == depth - 1 {
            cfg.filters_down[depth - 1]
        } else {
            cfg.filters_up[i + 1]
        };
        let cat_ch = carried + cfg.filters_skip[i];
        let out_ch = cfg.filters_up[i];
        let norm_in = NormLayer::init(cat_ch);
        let conv1 = ConvLayer::init(cat_ch, out_ch, cfg.kernels_up[i], 1, rng);
        let norm1 = NormLayer::init(out_ch);
        let conv2 = ConvLayer::init(out_ch, out_ch, 1, 1, rng);
        let norm2 = NormLayer::init(out_ch);
        track_norm(&norm_in, &mut params);
        track(&conv1, &mut params);
        track_norm(&norm1, &mut params);
        track(&conv2, &mut params);
        track_norm(&norm2, &mut params);
        ups.push(UpBlock {
            norm_in,
            conv1,
            norm1,
            conv2,
            norm2,
            upsample: cfg.down_stride == 2,
        });
    }

    let out_conv = ConvLayer::init(cfg.filters_up[0], cfg.output_channels, 1, 1, rng);
    track(&out_conv, &mut params);

    Ok(Network {
        config: cfg.clone(),
        downs,
        skips,
        ups,
        out_conv,
        params,
    })
}

impl Network {
    pub fn config(&self) -> &HourglassConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// Copies of all parameter values, in registration order.
    pub fn snapshot(&self) -> Vec<Array4<f64>> {
        self.params.iter().map(|p| p.data().clone()).collect()
    }

    pub fn restore(&self, snap: &[Array4<f64>]) -> Result<()> {
        if snap.len() != self.params.len() {
            return Err(DeconvError::Config("snapshot length mismatch".into()));
        }
        for (p, s) in self.params.iter().zip(snap) {
            if p.data().raw_dim() != s.raw_dim() {
                return Err(DeconvError::ShapeMismatch("snapshot shape mismatch".into()));
            }
            p.data_mut().assign(s);
        }
        Ok(())
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let (zb, zc, zh, zw) = z.shape();
        if zb != 1
            || zc != self.config.input_channels
            || (zh, zw) != self.config.input_spatial
        {
            return Err(DeconvError::ShapeMismatch(format!(
                "network input {:?}, configured (1, {}, {:?})",
                z.shape(),
                self.config.input_channels,
                self.config.input_spatial
            )));
        }
        let slope = self.config.leaky_slope;
        let depth = self.config.depth;

        // encoder, remembering each block's input for its skip
        let mut taps = Vec::with_capacity(depth);
        let mut cur = z.clone();
        for block in &self.downs {
            taps.push(cur.clone());
            cur = block.forward(&cur, slope)?;
        }

        // decoder: upsample the carried feature back to the matching
        // skip resolution, merge, refine
        let mut y = cur;
        for i in (0..depth).rev() {
            let s = self.skips[i].forward(&taps[i], slope)?;
            y = self.ups[i].forward(&y, &s, slope)?;
        }

        let head = self.out_conv.forward(&y)?;
        Ok(match self.config.output_activation {
            OutputActivation::Sigmoid => sigmoid(&head),
            OutputActivation::SoftmaxAll => softmax_all(&head),
        })
    }

    /// Writes all parameters as a versioned flat binary blob: magic,
    /// format version, parameter count, then per parameter a 4-entry
    /// shape table and little-endian f64 data.
    pub fn save_params<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"DCNV")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            let d = p.data();
            for dim in d.shape() {
                w.write_all(&(*dim as u64).to_le_bytes())?;
            }
            for v in d.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Restores parameters from [`Network::save_params`] output.
    pub fn load_params<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"DCNV" {
            return Err(DeconvError::Format("bad checkpoint magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != 1 {
            return Err(DeconvError::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        r.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf) as usize;
        if count != self.params.len() {
            return Err(DeconvError::Format(format!(
                "checkpoint has {count} parameters, network has {}",
                self.params.len()
            )));
        }
        for p in &self.params {
            let mut dims = [0usize; 4];
            let mut u64buf = [0u8; 8];
            for d in dims.iter_mut() {
                r.read_exact(&mut u64buf)?;
                *d = u64::from_le_bytes(u64buf) as usize;
            }
            let expect = p.data().shape().to_vec();
            if dims.to_vec() != expect {
                return Err(DeconvError::ShapeMismatch(format!(
                    "checkpoint shape {dims:?}, parameter shape {expect:?}"
                )));
            }
            let mut data = p.data_mut();
            for v in data.iter_mut() {
                r.read_exact(&mut u64buf)?;
                *v = f64::from_le_bytes(u64buf);
            }
        }
        Ok(())
    }
}
