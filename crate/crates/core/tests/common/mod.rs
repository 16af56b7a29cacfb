//! Shared fixtures: finite-difference oracles and small labeled datasets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sarslide_core::nn::{
    conv3x3_backward, conv3x3_forward, dense_backward, dense_forward, dropout_train, maxpool2x2,
    maxpool2x2_backward, relu, relu_backward, scc_loss, softmax, Architecture, Mode, Model, Shape,
    Tensor4,
};
use sarslide_core::sampling::{Label, Patch, PATCH_LEN};

/// Entries with both gradients below this magnitude are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n, floor))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at every coordinate of `x`.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xs[i];
            xs[i] = orig + h;
            let up = f(&xs);
            xs[i] = orig - h;
            let down = f(&xs);
            xs[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn uniform(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values bounded away from zero, for checks across the ReLU kink.
pub fn off_zero(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub max_rel: f64,
}

const H64: f64 = 1e-5;

/// Per-layer f64 checks of every backward pass against `sum(G * layer(x))`.
pub fn layer_checks(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name: &str, a: &[f64], n: &[f64]| {
        out.push(Check {
            name: name.to_string(),
            max_rel: max_rel_err(a, n, REL_FLOOR),
        })
    };

    // conv3x3: input, weights, bias.
    let dims = [2, 5, 4, 3];
    let cout = 4;
    let x = uniform(2 * 5 * 4 * 3, -1.0, 1.0, &mut rng);
    let w = uniform(9 * 3 * cout, -0.5, 0.5, &mut rng);
    let b = uniform(cout, -0.2, 0.2, &mut rng);
    let g = uniform(2 * 5 * 4 * cout, -1.0, 1.0, &mut rng);
    let xt = Tensor4::new(dims, x.clone()).unwrap();
    let gt = Tensor4::new([2, 5, 4, cout], g.clone()).unwrap();
    let cg = conv3x3_backward(&xt, &w, &b, &gt, true).unwrap();
    let conv = |x: &[f64], w: &[f64], b: &[f64]| {
        dot(
            conv3x3_forward(&Tensor4::new(dims, x.to_vec()).unwrap(), w, b)
                .unwrap()
                .data(),
            &g,
        )
    };
    push(
        "conv3x3 dx",
        cg.grad_x.unwrap().data(),
        &numeric_grad(&x, H64, |v| conv(v, &w, &b)),
    );
    push(
        "conv3x3 dW",
        &cg.grad_w,
        &numeric_grad(&w, H64, |v| conv(&x, v, &b)),
    );
    push(
        "conv3x3 db",
        &cg.grad_b,
        &numeric_grad(&b, H64, |v| conv(&x, &w, v)),
    );

    // ReLU away from the kink.
    let dims = [2, 3, 3, 2];
    let x = off_zero(36, &mut rng);
    let g = uniform(36, -1.0, 1.0, &mut rng);
    let an = relu_backward(
        &Tensor4::new(dims, x.clone()).unwrap(),
        &Tensor4::new(dims, g.clone()).unwrap(),
    );
    let num = numeric_grad(&x, H64, |v| {
        dot(relu(&Tensor4::new(dims, v.to_vec()).unwrap()).data(), &g)
    });
    push("relu dx", an.data(), &num);

    // Max pool over distinct values (no ties within a step).
    let dims = [2, 4, 6, 3];
    let len = 2 * 4 * 6 * 3;
    let mut perm: Vec<f64> = (0..len).map(|i| i as f64 * 0.01).collect();
    for i in (1..len).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let g = uniform(len / 4, -1.0, 1.0, &mut rng);
    let xt = Tensor4::new(dims, perm.clone()).unwrap();
    let (y, arg) = maxpool2x2(&xt).unwrap();
    let an = maxpool2x2_backward(dims, &arg, &Tensor4::new(y.dims(), g.clone()).unwrap()).unwrap();
    let num = numeric_grad(&perm, H64, |v| {
        dot(
            maxpool2x2(&Tensor4::new(dims, v.to_vec()).unwrap())
                .unwrap()
                .0
                .data(),
            &g,
        )
    });
    push("maxpool2x2 dx", an.data(), &num);

    // Dropout with a fixed mask: the scale is the backward multiplier.
    let dims = [3, 2, 2, 4];
    let x = uniform(48, -1.0, 1.0, &mut rng);
    let g = uniform(48, -1.0, 1.0, &mut rng);
    let (_, scale) = dropout_train(
        &Tensor4::new(dims, x.clone()).unwrap(),
        0.3,
        &mut ChaCha8Rng::seed_from_u64(11),
    );
    let an: Vec<f64> = g.iter().zip(&scale).map(|(a, s)| a * s).collect();
    let num = numeric_grad(&x, H64, |v| {
        let (y, _) = dropout_train(
            &Tensor4::new(dims, v.to_vec()).unwrap(),
            0.3,
            &mut ChaCha8Rng::seed_from_u64(11),
        );
        dot(y.data(), &g)
    });
    push("dropout dx", &an, &num);

    // Dense.
    let (n, d, u) = (3, 5, 4);
    let x = uniform(n * d, -1.0, 1.0, &mut rng);
    let w = uniform(d * u, -0.5, 0.5, &mut rng);
    let b = uniform(u, -0.2, 0.2, &mut rng);
    let g = uniform(n * u, -1.0, 1.0, &mut rng);
    let dg = dense_backward(&x, n, &w, &b, &g).unwrap();
    let dense = |x: &[f64], w: &[f64], b: &[f64]| dot(&dense_forward(x, n, w, b).unwrap(), &g);
    push(
        "dense dx",
        &dg.grad_x,
        &numeric_grad(&x, H64, |v| dense(v, &w, &b)),
    );
    push(
        "dense dW",
        &dg.grad_w,
        &numeric_grad(&w, H64, |v| dense(&x, v, &b)),
    );
    push(
        "dense db",
        &dg.grad_b,
        &numeric_grad(&b, H64, |v| dense(&x, &w, v)),
    );

    // Softmax + cross-entropy, differentiated jointly.
    let labels = [0usize, 1, 1, 0, 1];
    let z = uniform(10, -3.0, 3.0, &mut rng);
    let an = scc_loss(&softmax(&z, 2), &labels, 2).unwrap().grad_logits;
    let num = numeric_grad(&z, H64, |v| {
        scc_loss(&softmax(v, 2), &labels, 2).unwrap().loss
    });
    push("softmax+scc dlogits", &an, &num);
    out
}

/// The shrunken end-to-end networks on 8x8x1 inputs.
pub fn small_architectures() -> Vec<(&'static str, Architecture)> {
    let input = Shape::new(8, 8, 1);
    vec![
        (
            "e2e 8x8x1 conv4-pool-dense8",
            Architecture::conv_stack(input, &[4], 0.0, 8),
        ),
        (
            "e2e 8x8x1 conv3-conv5-dense6",
            Architecture::conv_stack(input, &[3, 5], 0.0, 6),
        ),
        (
            "e2e 8x8x1 conv4-dropout-dense8",
            Architecture::conv_stack(input, &[4], 0.25, 8),
        ),
    ]
}

fn e2e_batch(n: usize, rng: &mut ChaCha8Rng) -> (Tensor4<f64>, Vec<usize>) {
    let x = uniform(n * 64, 0.0, 1.0, rng);
    let labels = (0..n).map(|i| i % 2).collect();
    (Tensor4::new([n, 8, 8, 1], x).unwrap(), labels)
}

fn has_dropout(arch: &Architecture) -> bool {
    arch.layers
        .iter()
        .any(|l| matches!(l, sarslide_core::nn::LayerSpec::Dropout { .. }))
}

fn e2e_loss<T: sarslide_core::Scalar>(
    model: &Model<T>,
    batch: &Tensor4<T>,
    labels: &[usize],
    dropout_seed: Option<u64>,
) -> sarslide_core::nn::LossAndGrads<T> {
    match dropout_seed {
        Some(s) => {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            model
                .loss_and_grads(batch, labels, Mode::Train(&mut r))
                .unwrap()
        }
        None => model.loss_and_grads(batch, labels, Mode::Infer).unwrap(),
    }
}

/// f64 end-to-end check of every parameter of each shrunken network.
pub fn end_to_end_f64(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    small_architectures()
        .into_iter()
        .map(|(name, arch)| {
            let drop = has_dropout(&arch).then_some(seed ^ 0xD0);
            let mut model: Model<f64> = Model::new(arch, seed).unwrap();
            // Non-zero biases so ReLU inputs are not exactly at the kink.
            for p in model.params_mut() {
                if p.len() <= 8 {
                    for v in p.iter_mut() {
                        *v = rng.random_range(-0.1..0.1);
                    }
                }
            }
            let (batch, labels) = e2e_batch(4, &mut rng);
            let an = e2e_loss(&model, &batch, &labels, drop).grads;
            let mut worst: f64 = 0.0;
            for (ti, grad) in an.iter().enumerate() {
                let base = model.params()[ti].clone();
                let num = numeric_grad(&base, 1e-6, |v| {
                    let mut m = model.clone();
                    m.params_mut()[ti].copy_from_slice(v);
                    e2e_loss(&m, &batch, &labels, drop).loss
                });
                worst = worst.max(max_rel_err(grad, &num, REL_FLOOR));
            }
            Check {
                name: format!("{name} (f64)"),
                max_rel: worst,
            }
        })
        .collect()
}

/// f32 spot check: the 12 largest-magnitude gradient entries of each tensor
/// against f32 central differences with h = 1e-3. Points where a ReLU or
/// max-pool switch lies within +-h (the one-sided slopes disagree by more
/// than 10%) are not differentiable at that scale and are counted as skipped.
pub fn end_to_end_f32(seed: u64) -> Vec<(Check, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF32);
    small_architectures()
        .into_iter()
        .map(|(name, arch)| {
            let drop = has_dropout(&arch).then_some(seed ^ 0xD1);
            let model: Model<f32> = Model::new(arch, seed).unwrap();
            let (batch, labels) = e2e_batch(4, &mut rng);
            let batch = batch.cast::<f32>();
            let base = e2e_loss(&model, &batch, &labels, drop);
            let h = 1e-3f32;
            let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
            for (ti, grad) in base.grads.iter().enumerate() {
                let mut idx: Vec<usize> = (0..grad.len()).collect();
                idx.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()));
                for &i in idx.iter().take(12) {
                    let at = |delta: f32| {
                        let mut m = model.clone();
                        m.params_mut()[ti][i] += delta;
                        e2e_loss(&m, &batch, &labels, drop).loss as f64
                    };
                    let (up, down, mid) = (at(h), at(-h), base.loss as f64);
                    let (fwd, bwd) = ((up - mid) / h as f64, (mid - down) / h as f64);
                    if rel_err(fwd, bwd, 1e-3) > 0.1 {
                        skipped += 1;
                        continue;
                    }
                    checked += 1;
                    let num = (up - down) / (2.0 * h as f64);
                    worst = worst.max(rel_err(grad[i] as f64, num, 1e-3));
                }
            }
            let check = Check {
                name: format!("{name} (f32 spot)"),
                max_rel: worst,
            };
            (check, checked, skipped)
        })
        .collect()
}

/// A linearly separable patch: landslides are bright in channel 1 with a
/// soft blob, stable ground is dark with texture.
pub fn separable_patch(label: Label, rng: &mut ChaCha8Rng, polygon: usize) -> Patch {
    let bright = label == Label::Landslide;
    let mut px = Vec::with_capacity(PATCH_LEN);
    for r in 0..25 {
        for c in 0..25 {
            let d = ((r as f64 - 12.0).powi(2) + (c as f64 - 12.0).powi(2)).sqrt();
            let blob = if bright {
                (1.0 - d / 14.0).max(0.0)
            } else {
                0.0
            };
            for ch in 0..3 {
                let base = match (ch, bright) {
                    (1, true) => 0.45 + 0.5 * blob,
                    (1, false) => 0.2,
                    _ => 0.3,
                };
                let v: f64 = base + rng.random_range(-0.1..0.1);
                px.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Patch::new(px, label, (0, 0), polygon).unwrap()
}

pub fn separable_set(n: usize, seed: u64) -> Vec<Patch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 {
                Label::Landslide
            } else {
                Label::NonLandslide
            };
            separable_patch(label, &mut rng, i)
        })
        .collect()
}
