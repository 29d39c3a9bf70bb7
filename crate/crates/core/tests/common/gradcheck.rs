//! Central finite-difference oracle for network parameter gradients.

use kedge_core::neural::{
    init_network, ArchKind, BatchNorm, Conv1d, ConvTranspose1d, Dense, Layer, MaxPool1d, Mode, Network, NetworkArch,
    Relu, Upsample,
};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub layer: usize,
    pub block: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

fn loss(net: &Network, batch: ArrayView2<f64>, proj: &Array2<f64>) -> (f64, Vec<u64>) {
    let mut n = net.clone();
    let (out, cache) = n.forward(batch, Mode::Train).expect("forward");
    let l = (&out * proj).sum();
    (l, pattern(&n, &cache))
}

/// Active set of every piecewise-linear layer (ReLU sign, max-pool argmax).
fn pattern(net: &Network, cache: &kedge_core::neural::ForwardCache) -> Vec<u64> {
    let b = cache.batch();
    let mut out = Vec::new();
    for (layer, x) in net.layers().iter().zip(cache.layer_inputs()) {
        match layer {
            Layer::Relu(_) => out.extend(x.iter().map(|v| (*v > 0.0) as u64)),
            Layer::MaxPool1d(p) => {
                let w = p.channels * p.in_len;
                for n in 0..b {
                    for c in 0..p.channels {
                        for t in 0..p.out_len {
                            let s = n * w + c * p.in_len + t * p.stride;
                            let mut best = s;
                            for i in s + 1..s + p.window {
                                if x[i] > x[best] {
                                    best = i;
                                }
                            }
                            out.push(best as u64);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Checks up to `per_layer` random coordinates of every parameterized
/// layer against the five-point central difference of `L = Σ out ⊙ R`
/// with step `h`. Coordinates whose stencil changes a ReLU/max-pool active
/// set are redrawn.
pub fn check_network(net: &Network, batch: ArrayView2<f64>, per_layer: usize, h: f64, seed: u64) -> Vec<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = Array2::from_shape_fn((batch.nrows(), net.input_len()), |_| rng.random_range(-1.0..1.0));
    let mut base = net.clone();
    let (_, cache) = base.forward(batch, Mode::Train).expect("forward");
    let grads = base.backward(&cache, proj.view()).expect("backward");
    let (_, base_pattern) = loss(net, batch, &proj);

    let mut results = Vec::new();
    let mut block = 0;
    for (li, layer) in net.layers().iter().enumerate() {
        let sizes: Vec<usize> = layer.params().iter().map(|p| p.len()).collect();
        for (bi, &size) in sizes.iter().enumerate() {
            let global = block + bi;
            let wanted = per_layer.div_ceil(sizes.len()).min(size);
            let mut found = 0;
            let mut attempts = 0;
            while found < wanted && attempts < 20 * wanted {
                attempts += 1;
                let idx = rng.random_range(0..size);
                let mut values = [0.0; 4];
                let mut kinked = false;
                for (slot, offset) in [2.0, 1.0, -1.0, -2.0].into_iter().enumerate() {
                    let mut shifted = net.clone();
                    shifted.params_mut()[global][idx] += offset * h;
                    let (l, p) = loss(&shifted, batch, &proj);
                    kinked |= p != base_pattern;
                    values[slot] = l;
                }
                if kinked {
                    continue;
                }
                let numeric = (-values[0] + 8.0 * values[1] - 8.0 * values[2] + values[3]) / (12.0 * h);
                let analytic = grads.blocks[global][idx];
                let scale = analytic.abs().max(numeric.abs()).max(1e-6);
                results.push(GradCheck {
                    layer: li,
                    block: bi,
                    index: idx,
                    analytic,
                    numeric,
                    rel_error: (analytic - numeric).abs() / scale,
                });
                found += 1;
            }
        }
        block += sizes.len();
    }
    results
}

pub const STEP: f64 = 1e-3;
pub const MAX_REL: f64 = 1e-4;

pub fn randomize(net: &mut Network, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for block in net.params_mut() {
        for v in block.iter_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
}

pub fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.5..1.5))
}

/// Dense(n → inner.in) → inner → Dense(inner.out → n).
pub fn sandwich(n: usize, inner: Layer) -> Network {
    let (a, b) = (inner.in_width(), inner.out_width());
    let arch = NetworkArch::new(ArchKind::Fcnn1, n, a);
    let layers = vec![Layer::Dense(Dense::new(n, a)), inner, Layer::Dense(Dense::new(b, n))];
    let mut net = Network::from_layers(arch, layers, 0).expect("sandwich chains");
    randomize(&mut net, 11);
    net
}

pub struct Case {
    pub label: String,
    pub net: Network,
    pub batch: Array2<f64>,
}

/// Every layer type, each between two random dense layers.
pub fn layer_cases() -> Vec<Case> {
    let mut out = Vec::new();
    let mut push = |label: String, net: Network, batch: Array2<f64>| out.push(Case { label, net, batch });
    push(
        "dense".into(),
        sandwich(6, Layer::Dense(Dense::new(5, 4))),
        random_batch(4, 6, 1),
    );
    for (k, s, p) in [(3, 1, 1), (3, 2, 1), (5, 2, 2), (2, 3, 0)] {
        let inner = Layer::Conv1d(Conv1d::new(2, 3, k, s, p, 9).expect("valid conv"));
        push(
            format!("conv k{k} s{s} p{p}"),
            sandwich(7, inner),
            random_batch(3, 7, 2),
        );
    }
    for (k, s, p, lin, lout) in [(3, 2, 1, 4, 8), (3, 2, 1, 4, 7), (4, 3, 1, 3, 9), (3, 1, 1, 5, 5)] {
        let inner = Layer::ConvTranspose1d(ConvTranspose1d::new(2, 3, k, s, p, lin, lout).expect("valid convT"));
        push(
            format!("convT k{k} s{s} p{p} {lin}->{lout}"),
            sandwich(6, inner),
            random_batch(3, 6, 3),
        );
    }
    let pool = Layer::MaxPool1d(MaxPool1d::new(2, 2, 2, 9).expect("valid pool"));
    push("maxpool".into(), sandwich(5, pool), random_batch(4, 5, 4));
    for (lin, lout) in [(3, 6), (4, 9), (5, 5)] {
        let inner = Layer::Upsample(Upsample::new(2, lin, lout).expect("valid upsample"));
        push(
            format!("upsample {lin}->{lout}"),
            sandwich(5, inner),
            random_batch(4, 5, 5),
        );
    }
    for (c, l) in [(1, 6), (3, 4)] {
        let mut net = sandwich(5, Layer::BatchNorm(BatchNorm::new(c, l)));
        randomize(&mut net, 21);
        push(format!("batchnorm {c}x{l}"), net, random_batch(5, 5, 6));
    }
    push(
        "relu".into(),
        sandwich(5, Layer::Relu(Relu { width: 7 })),
        random_batch(4, 5, 7),
    );
    out
}

/// Every architecture at He initialization, latent 5 and 3.
pub fn architecture_cases() -> Vec<Case> {
    let mut out = Vec::new();
    for kind in ArchKind::ALL {
        for (n, d) in [(26, 5), (26, 3)] {
            let net = init_network(&NetworkArch::new(kind, n, d), 3).expect("architecture builds");
            out.push(Case {
                label: format!("{} latent {d}", kind.name()),
                net,
                batch: random_batch(8, n, 8),
            });
        }
    }
    out
}

/// Checks of one case; empty means no coordinate could be checked.
pub fn run_case(case: &Case) -> Vec<GradCheck> {
    check_network(&case.net, case.batch.view(), 10, STEP, 5)
}
