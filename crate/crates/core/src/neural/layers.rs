//! Layer primitives. Activations are flat row-major `batch × width`
//! buffers; convolutional layers read a row as `channels × length`,
//! channel-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    /// output × input, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_len: usize,
    pub out_len: usize,
    /// out_ch × in_ch × kernel.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Transposed ("fractionally strided") convolution used for upsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvTranspose1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_len: usize,
    pub out_len: usize,
    /// in_ch × out_ch × kernel.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPool1d {
    pub channels: usize,
    pub window: usize,
    pub stride: usize,
    pub in_len: usize,
    pub out_len: usize,
}

/// Nearest-neighbour resampling to an arbitrary length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Upsample {
    pub channels: usize,
    pub in_len: usize,
    pub out_len: usize,
}

/// Per-channel batch normalization; `length` is 1 after dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub channels: usize,
    pub length: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relu {
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    ConvTranspose1d(ConvTranspose1d),
    MaxPool1d(MaxPool1d),
    Upsample(Upsample),
    BatchNorm(BatchNorm),
    Relu(Relu),
}

/// Per-layer state kept between forward and backward.
#[derive(Debug, Clone)]
pub enum LayerCache {
    None,
    MaxPool {
        argmax: Vec<usize>,
    },
    BatchNorm {
        x_hat: Vec<f64>,
        inv_std: Vec<f64>,
        mode: Mode,
    },
}

/// Batch statistics from a train-mode batch-norm pass.
#[derive(Debug, Clone)]
pub struct BnBatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

impl Dense {
    pub fn new(input: usize, output: usize) -> Self {
        Dense {
            input,
            output,
            weight: vec![0.0; input * output],
            bias: vec![0.0; output],
        }
    }

    fn forward(&self, x: &[f64], b: usize) -> Vec<f64> {
        let (ni, no) = (self.input, self.output);
        let mut y = vec![0.0; b * no];
        for n in 0..b {
            let xr = &x[n * ni..(n + 1) * ni];
            let yr = &mut y[n * no..(n + 1) * no];
            for o in 0..no {
                let w = &self.weight[o * ni..(o + 1) * ni];
                yr[o] = self.bias[o] + w.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
            }
        }
        y
    }

    fn backward(&self, x: &[f64], g: &[f64], b: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (ni, no) = (self.input, self.output);
        let mut dx = vec![0.0; b * ni];
        let mut dw = vec![0.0; ni * no];
        let mut db = vec![0.0; no];
        for n in 0..b {
            let xr = &x[n * ni..(n + 1) * ni];
            let gr = &g[n * no..(n + 1) * no];
            let dxr = &mut dx[n * ni..(n + 1) * ni];
            for o in 0..no {
                let go = gr[o];
                if go == 0.0 {
                    continue;
                }
                db[o] += go;
                let w = &self.weight[o * ni..(o + 1) * ni];
                let dwr = &mut dw[o * ni..(o + 1) * ni];
                for i in 0..ni {
                    dwr[i] += go * xr[i];
                    dxr[i] += go * w[i];
                }
            }
        }
        (dx, vec![dw, db])
    }
}

impl Conv1d {
    /// `out_len = (in_len + 2p − k) / s + 1`.
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        in_len: usize,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 || in_len + 2 * padding < kernel {
            return Err(Error::Validation(format!(
                "conv kernel {kernel} stride {stride} padding {padding} does not fit length {in_len}"
            )));
        }
        let out_len = (in_len + 2 * padding - kernel) / stride + 1;
        Ok(Conv1d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            in_len,
            out_len,
            weight: vec![0.0; out_ch * in_ch * kernel],
            bias: vec![0.0; out_ch],
        })
    }

    /// Output positions `t` whose tap `k` lands inside the input.
    fn taps(&self, k: usize) -> std::ops::Range<usize> {
        let lo = self.padding.saturating_sub(k).div_ceil(self.stride);
        let hi = if self.in_len + self.padding > k {
            ((self.in_len + self.padding - k - 1) / self.stride + 1).min(self.out_len)
        } else {
            0
        };
        lo..hi.max(lo)
    }

    fn forward(&self, x: &[f64], b: usize) -> Vec<f64> {
        let (il, ol, s) = (self.in_len, self.out_len, self.stride);
        let (iw, ow) = (self.in_ch * il, self.out_ch * ol);
        let kk = self.kernel;
        let mut y = vec![0.0; b * ow];
        for n in 0..b {
            let xr = &x[n * iw..(n + 1) * iw];
            let yr = &mut y[n * ow..(n + 1) * ow];
            for co in 0..self.out_ch {
                let yc = &mut yr[co * ol..(co + 1) * ol];
                yc.fill(self.bias[co]);
                for ci in 0..self.in_ch {
                    let xc = &xr[ci * il..(ci + 1) * il];
                    for k in 0..kk {
                        let w = self.weight[(co * self.in_ch + ci) * kk + k];
                        let r = self.taps(k);
                        let x0 = r.start * s + k - self.padding;
                        for (yv, xv) in yc[r].iter_mut().zip(xc[x0..].iter().step_by(s)) {
                            *yv += w * xv;
                        }
                    }
                }
            }
        }
        y
    }

    fn backward(&self, x: &[f64], g: &[f64], b: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (il, ol, s) = (self.in_len, self.out_len, self.stride);
        let (iw, ow) = (self.in_ch * il, self.out_ch * ol);
        let kk = self.kernel;
        let mut dx = vec![0.0; b * iw];
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; self.out_ch];
        for n in 0..b {
            let xr = &x[n * iw..(n + 1) * iw];
            let gr = &g[n * ow..(n + 1) * ow];
            let dxr = &mut dx[n * iw..(n + 1) * iw];
            for co in 0..self.out_ch {
                let gc = &gr[co * ol..(co + 1) * ol];
                db[co] += gc.iter().sum::<f64>();
                for ci in 0..self.in_ch {
                    let xc = &xr[ci * il..(ci + 1) * il];
                    let dxc = &mut dxr[ci * il..(ci + 1) * il];
                    for k in 0..kk {
                        let wi = (co * self.in_ch + ci) * kk + k;
                        let w = self.weight[wi];
                        let r = self.taps(k);
                        let x0 = r.start * s + k - self.padding;
                        let mut acc = 0.0;
                        for ((gv, xv), dv) in gc[r]
                            .iter()
                            .zip(xc[x0..].iter().step_by(s))
                            .zip(dxc[x0..].iter_mut().step_by(s))
                        {
                            acc += gv * xv;
                            *dv += gv * w;
                        }
                        dw[wi] += acc;
                    }
                }
            }
        }
        (dx, vec![dw, db])
    }
}

impl ConvTranspose1d {
    /// Output length is `target_len`; it must lie in
    /// `[(in_len − 1)s − 2p + k, (in_len − 1)s − 2p + k + s − 1]`.
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        in_len: usize,
        target_len: usize,
    ) -> Result<Self> {
        let base = ((in_len.saturating_sub(1)) * stride + kernel) as isize - 2 * padding as isize;
        let extra = target_len as isize - base;
        if kernel == 0 || stride == 0 || base < 1 || extra < 0 || extra >= stride as isize {
            return Err(Error::Validation(format!(
                "transposed conv cannot map length {in_len} to {target_len} (k={kernel}, s={stride}, p={padding})"
            )));
        }
        Ok(ConvTranspose1d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            in_len,
            out_len: target_len,
            weight: vec![0.0; in_ch * out_ch * kernel],
            bias: vec![0.0; out_ch],
        })
    }

    #[inline]
    fn dst(&self, t: usize, k: usize) -> Option<usize> {
        let pos = (t * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < self.out_len).then_some(pos as usize)
    }

    fn forward(&self, x: &[f64], b: usize) -> Vec<f64> {
        let (iw, ow) = (self.in_ch * self.in_len, self.out_ch * self.out_len);
        let kk = self.kernel;
        let mut y = vec![0.0; b * ow];
        for n in 0..b {
            let xr = &x[n * iw..(n + 1) * iw];
            let yr = &mut y[n * ow..(n + 1) * ow];
            for co in 0..self.out_ch {
                yr[co * self.out_len..(co + 1) * self.out_len].fill(self.bias[co]);
            }
            for ci in 0..self.in_ch {
                for t in 0..self.in_len {
                    let xv = xr[ci * self.in_len + t];
                    for k in 0..kk {
                        if let Some(p) = self.dst(t, k) {
                            for co in 0..self.out_ch {
                                yr[co * self.out_len + p] += self.weight[(ci * self.out_ch + co) * kk + k] * xv;
                            }
                        }
                    }
                }
            }
        }
        y
    }

    fn backward(&self, x: &[f64], g: &[f64], b: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (iw, ow) = (self.in_ch * self.in_len, self.out_ch * self.out_len);
        let kk = self.kernel;
        let mut dx = vec![0.0; b * iw];
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; self.out_ch];
        for n in 0..b {
            let xr = &x[n * iw..(n + 1) * iw];
            let gr = &g[n * ow..(n + 1) * ow];
            let dxr = &mut dx[n * iw..(n + 1) * iw];
            for co in 0..self.out_ch {
                db[co] += gr[co * self.out_len..(co + 1) * self.out_len].iter().sum::<f64>();
            }
            for ci in 0..self.in_ch {
                for t in 0..self.in_len {
                    let xv = xr[ci * self.in_len + t];
                    let mut acc = 0.0;
                    for k in 0..kk {
                        if let Some(p) = self.dst(t, k) {
                            for co in 0..self.out_ch {
                                let wi = (ci * self.out_ch + co) * kk + k;
                                let go = gr[co * self.out_len + p];
                                dw[wi] += go * xv;
                                acc += go * self.weight[wi];
                            }
                        }
                    }
                    dxr[ci * self.in_len + t] = acc;
                }
            }
        }
        (dx, vec![dw, db])
    }
}

impl MaxPool1d {
    pub fn new(channels: usize, window: usize, stride: usize, in_len: usize) -> Result<Self> {
        if window == 0 || stride == 0 || in_len < window {
            return Err(Error::Validation(format!(
                "max-pool window {window} does not fit length {in_len}"
            )));
        }
        Ok(MaxPool1d {
            channels,
            window,
            stride,
            in_len,
            out_len: (in_len - window) / stride + 1,
        })
    }

    fn forward(&self, x: &[f64], b: usize) -> (Vec<f64>, Vec<usize>) {
        let (iw, ow) = (self.channels * self.in_len, self.channels * self.out_len);
        let mut y = vec![0.0; b * ow];
        let mut arg = vec![0usize; b * ow];
        for n in 0..b {
            for c in 0..self.channels {
                for t in 0..self.out_len {
                    let start = n * iw + c * self.in_len + t * self.stride;
                    let mut best = start;
                    for i in start + 1..start + self.window {
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                    let o = n * ow + c * self.out_len + t;
                    y[o] = x[best];
                    arg[o] = best;
                }
            }
        }
        (y, arg)
    }

    fn backward(&self, argmax: &[usize], g: &[f64], b: usize) -> Vec<f64> {
        let mut dx = vec![0.0; b * self.channels * self.in_len];
        for (o, &src) in argmax.iter().enumerate() {
            dx[src] += g[o];
        }
        dx
    }
}

impl Upsample {
    pub fn new(channels: usize, in_len: usize, out_len: usize) -> Result<Self> {
        if in_len == 0 || out_len < in_len {
            return Err(Error::Validation(format!("cannot upsample {in_len} to {out_len}")));
        }
        Ok(Upsample {
            channels,
            in_len,
            out_len,
        })
    }

    #[inline]
    fn src(&self, t: usize) -> usize {
        t * self.in_len / self.out_len
    }

    fn forward(&self, x: &[f64], b: usize) -> Vec<f64> {
        let (iw, ow) = (self.channels * self.in_len, self.channels * self.out_len);
        let mut y = vec![0.0; b * ow];
        for n in 0..b {
            for c in 0..self.channels {
                for t in 0..self.out_len {
                    y[n * ow + c * self.out_len + t] = x[n * iw + c * self.in_len + self.src(t)];
                }
            }
        }
        y
    }

    fn backward(&self, g: &[f64], b: usize) -> Vec<f64> {
        let (iw, ow) = (self.channels * self.in_len, self.channels * self.out_len);
        let mut dx = vec![0.0; b * iw];
        for n in 0..b {
            for c in 0..self.channels {
                for t in 0..self.out_len {
                    dx[n * iw + c * self.in_len + self.src(t)] += g[n * ow + c * self.out_len + t];
                }
            }
        }
        dx
    }
}

impl BatchNorm {
    pub fn new(channels: usize, length: usize) -> Self {
        BatchNorm {
            channels,
            length,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    fn width(&self) -> usize {
        self.channels * self.length
    }

    fn forward(&self, x: &[f64], b: usize, mode: Mode) -> (Vec<f64>, LayerCache, Option<BnBatchStats>) {
        let (w, len) = (self.width(), self.length);
        let count = b * len;
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; self.channels];
                let mut var = vec![0.0; self.channels];
                for c in 0..self.channels {
                    let mut s = 0.0;
                    for n in 0..b {
                        s += x[n * w + c * len..n * w + (c + 1) * len].iter().sum::<f64>();
                    }
                    let m = s / count as f64;
                    let mut v = 0.0;
                    for n in 0..b {
                        v += x[n * w + c * len..n * w + (c + 1) * len]
                            .iter()
                            .map(|t| (t - m) * (t - m))
                            .sum::<f64>();
                    }
                    mean[c] = m;
                    var[c] = v / count as f64;
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut x_hat = vec![0.0; x.len()];
        let mut y = vec![0.0; x.len()];
        for n in 0..b {
            for c in 0..self.channels {
                for t in 0..len {
                    let i = n * w + c * len + t;
                    let h = (x[i] - mean[c]) * inv_std[c];
                    x_hat[i] = h;
                    y[i] = self.gamma[c] * h + self.beta[c];
                }
            }
        }
        let stats = (mode == Mode::Train).then_some(BnBatchStats { mean, var, count });
        (y, LayerCache::BatchNorm { x_hat, inv_std, mode }, stats)
    }

    /// Folds one batch's statistics into the running estimates (unbiased
    /// variance).
    pub fn update_running(&mut self, stats: &BnBatchStats) {
        let correction = if stats.count > 1 {
            stats.count as f64 / (stats.count - 1) as f64
        } else {
            1.0
        };
        for c in 0..self.channels {
            self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * stats.mean[c];
            self.running_var[c] =
                (1.0 - self.momentum) * self.running_var[c] + self.momentum * stats.var[c] * correction;
        }
    }

    fn backward(&self, x_hat: &[f64], inv_std: &[f64], mode: Mode, g: &[f64], b: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (w, len) = (self.width(), self.length);
        let count = (b * len) as f64;
        let mut dgamma = vec![0.0; self.channels];
        let mut dbeta = vec![0.0; self.channels];
        for n in 0..b {
            for c in 0..self.channels {
                for t in 0..len {
                    let i = n * w + c * len + t;
                    dgamma[c] += g[i] * x_hat[i];
                    dbeta[c] += g[i];
                }
            }
        }
        let mut dx = vec![0.0; g.len()];
        for c in 0..self.channels {
            let k = self.gamma[c] * inv_std[c];
            for n in 0..b {
                for t in 0..len {
                    let i = n * w + c * len + t;
                    dx[i] = match mode {
                        Mode::Train => k * (g[i] - dbeta[c] / count - x_hat[i] * dgamma[c] / count),
                        Mode::Eval => k * g[i],
                    };
                }
            }
        }
        (dx, vec![dgamma, dbeta])
    }
}

impl Layer {
    pub fn in_width(&self) -> usize {
        match self {
            Layer::Dense(l) => l.input,
            Layer::Conv1d(l) => l.in_ch * l.in_len,
            Layer::ConvTranspose1d(l) => l.in_ch * l.in_len,
            Layer::MaxPool1d(l) => l.channels * l.in_len,
            Layer::Upsample(l) => l.channels * l.in_len,
            Layer::BatchNorm(l) => l.width(),
            Layer::Relu(l) => l.width,
        }
    }

    pub fn out_width(&self) -> usize {
        match self {
            Layer::Dense(l) => l.output,
            Layer::Conv1d(l) => l.out_ch * l.out_len,
            Layer::ConvTranspose1d(l) => l.out_ch * l.out_len,
            Layer::MaxPool1d(l) => l.channels * l.out_len,
            Layer::Upsample(l) => l.channels * l.out_len,
            Layer::BatchNorm(l) => l.width(),
            Layer::Relu(l) => l.width,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv1d(_) => "conv1d",
            Layer::ConvTranspose1d(_) => "conv_transpose1d",
            Layer::MaxPool1d(_) => "max_pool1d",
            Layer::Upsample(_) => "upsample",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Relu(_) => "relu",
        }
    }

    /// Trainable tensors in a fixed order.
    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Conv1d(l) => vec![&l.weight, &l.bias],
            Layer::ConvTranspose1d(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv1d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::ConvTranspose1d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => vec![],
        }
    }

    /// Fan-in used for weight initialization, if the layer has weights.
    pub fn fan_in(&self) -> Option<usize> {
        match self {
            Layer::Dense(l) => Some(l.input),
            Layer::Conv1d(l) => Some(l.in_ch * l.kernel),
            Layer::ConvTranspose1d(l) => Some(l.in_ch * l.kernel),
            _ => None,
        }
    }

    pub(crate) fn forward(&self, x: &[f64], b: usize, mode: Mode) -> (Vec<f64>, LayerCache, Option<BnBatchStats>) {
        match self {
            Layer::Dense(l) => (l.forward(x, b), LayerCache::None, None),
            Layer::Conv1d(l) => (l.forward(x, b), LayerCache::None, None),
            Layer::ConvTranspose1d(l) => (l.forward(x, b), LayerCache::None, None),
            Layer::MaxPool1d(l) => {
                let (y, argmax) = l.forward(x, b);
                (y, LayerCache::MaxPool { argmax }, None)
            }
            Layer::Upsample(l) => (l.forward(x, b), LayerCache::None, None),
            Layer::BatchNorm(l) => l.forward(x, b, mode),
            Layer::Relu(_) => (x.iter().map(|v| v.max(0.0)).collect(), LayerCache::None, None),
        }
    }

    /// Returns (input gradient, parameter gradients in `params()` order).
    pub(crate) fn backward(&self, x: &[f64], cache: &LayerCache, g: &[f64], b: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        match (self, cache) {
            (Layer::Dense(l), _) => l.backward(x, g, b),
            (Layer::Conv1d(l), _) => l.backward(x, g, b),
            (Layer::ConvTranspose1d(l), _) => l.backward(x, g, b),
            (Layer::MaxPool1d(l), LayerCache::MaxPool { argmax }) => (l.backward(argmax, g, b), vec![]),
            (Layer::Upsample(l), _) => (l.backward(g, b), vec![]),
            (Layer::BatchNorm(l), LayerCache::BatchNorm { x_hat, inv_std, mode }) => {
                l.backward(x_hat, inv_std, *mode, g, b)
            }
            (Layer::Relu(_), _) => (
                x.iter()
                    .zip(g)
                    .map(|(xi, gi)| if *xi > 0.0 { *gi } else { 0.0 })
                    .collect(),
                vec![],
            ),
            (layer, _) => unreachable!("cache does not match layer {}", layer.name()),
        }
    }
}
