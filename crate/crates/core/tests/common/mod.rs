//! Oracles and fixtures shared by the integration tests. Everything here is
//! written independently of the library kernels it checks.
#![allow(dead_code)]

use sapgan_core::image::RawImage;
use sapgan_core::nn::{Bound, Forward};
use sapgan_core::paint::{paint_d_loss, paint_g_loss, pair_and_pack, PaintConfig, UNetGenerator};
use sapgan_core::sketch::{pac_pack_var, rals_d_loss, rals_g_loss};
use sapgan_core::survey::{Judgement, NativeLang, Source, SurveyResponse};
use sapgan_core::tensor::gradcheck::{grad_check, GradCheckReport};
use sapgan_core::{Graph, Result, Stream, Tensor, Var};

/// Direct nested-loop cross-correlation. `x: N×C×H×W`, `w: O×C×k×k`.
pub fn naive_conv2d(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let [n, c, h, wd] = x.shape().try_into().unwrap();
    let [o, _, k, _] = w.shape().try_into().unwrap();
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((b * c + ic) * h + iy as usize) * wd + ix as usize];
                                acc += xv * w.data()[((oc * c + ic) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((b * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, o, oh, ow], out).unwrap()
}

/// Scatter-form transposed convolution. `y: N×Ci×H×W`, `w: Ci×Co×k×k`.
pub fn naive_conv_transpose2d(y: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let [n, ci, h, wd] = y.shape().try_into().unwrap();
    let [_, co, k, _] = w.shape().try_into().unwrap();
    let oh = (h - 1) * stride + k - 2 * pad;
    let ow = (wd - 1) * stride + k - 2 * pad;
    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        for ic in 0..ci {
            for iy in 0..h {
                for ix in 0..wd {
                    let v = y.data()[((b * ci + ic) * h + iy) * wd + ix];
                    for oc in 0..co {
                        for ky in 0..k {
                            for kx in 0..k {
                                let oy = (iy * stride + ky) as isize - pad as isize;
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                out[((b * co + oc) * oh + oy as usize) * ow + ox as usize] +=
                                    v * w.data()[((ic * co + oc) * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, co, oh, ow], out).unwrap()
}

/// Full-scan nearest neighbors: per-pixel differences on the `[0, 1]` scale,
/// sorted by distance then id.
pub fn brute_force_nn(query: &RawImage, corpus: &[(String, RawImage)]) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = corpus
        .iter()
        .map(|(id, img)| {
            let sq: f64 = query
                .pixels()
                .iter()
                .zip(img.pixels())
                .map(|(&a, &b)| {
                    let d = f64::from(a) / 255.0 - f64::from(b) / 255.0;
                    d * d
                })
                .sum();
            (id.clone(), sq.sqrt())
        })
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all
}

pub fn random_image(stream: &mut Stream, w: usize, h: usize, c: usize) -> RawImage {
    RawImage::from_fn(w, h, c, |_, _, _| stream.below(256) as u8).unwrap()
}

/// `<conv(x), y> = <x, conv_transpose(y)>` in single precision; returns the
/// worst relative discrepancy over `trials` random geometries.
pub fn adjoint_gap(trials: usize, seed: u64) -> f64 {
    let mut s = Stream::new(seed);
    let (mut worst, mut done) = (0.0f64, 0);
    while done < trials {
        let (n, ci, co) = (1 + s.below(3), 1 + s.below(4), 1 + s.below(4));
        let k = 1 + s.below(4);
        let (stride, pad) = (1 + s.below(3), s.below(k));
        let out_h = 1 + s.below(5);
        let out_w = 1 + s.below(5);
        // Input sizes that the transposed conv maps back onto exactly.
        let h = (out_h - 1) * stride + k;
        let w = (out_w - 1) * stride + k;
        if h <= 2 * pad || w <= 2 * pad {
            continue;
        }
        let (h, w) = (h - 2 * pad, w - 2 * pad);
        let x = Tensor::<f32>::randn(&[n, ci, h, w], 1.0, &mut s);
        let wt = Tensor::<f32>::randn(&[co, ci, k, k], 1.0, &mut s);
        let y = Tensor::<f32>::randn(&[n, co, out_h, out_w], 1.0, &mut s);
        let mut g = Graph::<f32>::new();
        let (xv, wv, yv) = (g.constant(x.clone()), g.constant(wt), g.constant(y.clone()));
        let ax = g.conv2d(xv, wv, None, stride, pad).unwrap();
        let aty = g.conv_transpose2d(yv, wv, None, stride, pad).unwrap();
        let lhs = f64::from(g.value(ax).dot(&y));
        let rhs = f64::from(x.dot(g.value(aty)));
        done += 1;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }
    worst
}

// ---------------------------------------------------------------------------
// Gradient suite

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::<f32>::randn(shape, 1.0, &mut Stream::new(seed)).cast()
}

/// `mean(out ⊙ R)` for a fixed random `R`, so every output element carries
/// a distinct weight and gradients that cancel under a plain sum still show.
fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let r = g.constant(randn(g.shape(out), seed));
    let p = g.mul(out, r)?;
    g.mean(p)
}

type Case = (&'static str, Vec<Tensor<f64>>, Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>);

fn unet_case() -> Case {
    let cfg = PaintConfig { size: 8, depth: Some(2), width: 2, disc_layers: 1, ..Default::default() };
    let unet = UNetGenerator::new(cfg, "u", &mut Stream::new(40)).unwrap();
    // Re-draw the weights at unit scale so activations sit well away from
    // the relu kinks and the tanh saturation is mild.
    let mut inputs = vec![randn(&[2, 1, 8, 8], 41)];
    for (i, (name, t)) in unet.params().named().enumerate() {
        let v = if name.ends_with("running_var") || name.ends_with("gamma") {
            Tensor::full(t.shape(), 1.0)
        } else {
            Tensor::<f32>::randn(t.shape(), 0.5, &mut Stream::new(100 + i as u64)).cast()
        };
        inputs.push(v);
    }
    let f = move |g: &mut Graph<f64>, v: &[Var]| {
        let bound = Bound::from_vars(v[1..].to_vec());
        let mut stream = Stream::new(7);
        let mut fwd = Forward::train(Some(&mut stream));
        let out = unet.forward(g, &bound, v[0], &mut fwd)?;
        project(g, out, 42)
    };
    ("unet_2_level", inputs, Box::new(f))
}

fn cases() -> Vec<Case> {
    let x = || randn(&[2, 3, 4, 4], 1);
    let y = || randn(&[2, 3, 4, 4], 2);
    let mut c: Vec<Case> = vec![
        (
            "add",
            vec![x(), y()],
            Box::new(|g, v| {
                let o = g.add(v[0], v[1])?;
                project(g, o, 9)
            }),
        ),
        (
            "sub",
            vec![x(), y()],
            Box::new(|g, v| {
                let o = g.sub(v[0], v[1])?;
                project(g, o, 9)
            }),
        ),
        (
            "mul",
            vec![x(), y()],
            Box::new(|g, v| {
                let o = g.mul(v[0], v[1])?;
                project(g, o, 9)
            }),
        ),
        (
            "scale",
            vec![x()],
            Box::new(|g, v| {
                let o = g.scale(v[0], -1.7)?;
                project(g, o, 9)
            }),
        ),
        (
            "add_scalar",
            vec![x()],
            Box::new(|g, v| {
                let o = g.add_scalar(v[0], 0.3)?;
                project(g, o, 9)
            }),
        ),
        (
            "sub_broadcast",
            vec![x(), randn(&[1], 3)],
            Box::new(|g, v| {
                let o = g.sub_broadcast(v[0], v[1])?;
                project(g, o, 9)
            }),
        ),
        (
            "square",
            vec![x()],
            Box::new(|g, v| {
                let o = g.square(v[0])?;
                project(g, o, 9)
            }),
        ),
        (
            "mean",
            vec![x()],
            Box::new(|g, v| {
                let o = g.square(v[0])?;
                g.mean(o)
            }),
        ),
        (
            "relu",
            vec![x()],
            Box::new(|g, v| {
                let o = g.relu(v[0])?;
                project(g, o, 9)
            }),
        ),
        (
            "leaky_relu",
            vec![x()],
            Box::new(|g, v| {
                let o = g.leaky_relu(v[0], 0.2)?;
                project(g, o, 9)
            }),
        ),
        (
            "tanh",
            vec![x()],
            Box::new(|g, v| {
                let o = g.tanh(v[0])?;
                project(g, o, 9)
            }),
        ),
        (
            "sigmoid",
            vec![x()],
            Box::new(|g, v| {
                let o = g.sigmoid(v[0])?;
                project(g, o, 9)
            }),
        ),
        (
            "linear",
            vec![randn(&[3, 5], 4), randn(&[4, 5], 5), randn(&[4], 6)],
            Box::new(|g, v| {
                let o = g.linear(v[0], v[1], Some(v[2]))?;
                project(g, o, 9)
            }),
        ),
        (
            "reshape",
            vec![x()],
            Box::new(|g, v| {
                let o = g.reshape(v[0], &[6, 16])?;
                project(g, o, 9)
            }),
        ),
        (
            "concat_channels",
            vec![x(), randn(&[2, 2, 4, 4], 7)],
            Box::new(|g, v| {
                let o = g.concat_channels(v[0], v[1])?;
                project(g, o, 9)
            }),
        ),
        (
            "conv2d",
            vec![randn(&[2, 3, 5, 5], 8), randn(&[4, 3, 3, 3], 10), randn(&[4], 11)],
            Box::new(|g, v| {
                let o = g.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
                project(g, o, 9)
            }),
        ),
        (
            "conv_transpose2d",
            vec![randn(&[2, 3, 3, 3], 12), randn(&[3, 2, 4, 4], 13), randn(&[2], 14)],
            Box::new(|g, v| {
                let o = g.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 1)?;
                project(g, o, 9)
            }),
        ),
        (
            "batch_norm_train",
            vec![x(), randn(&[3], 15), randn(&[3], 16)],
            Box::new(|g, v| {
                let (o, _) = g.batch_norm_train(v[0], v[1], v[2], 1e-5)?;
                project(g, o, 9)
            }),
        ),
        (
            "batch_norm_eval",
            vec![x(), randn(&[3], 15), randn(&[3], 16)],
            Box::new(|g, v| {
                let o = g.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0], 1e-5)?;
                project(g, o, 9)
            }),
        ),
        (
            "dropout",
            vec![x()],
            Box::new(|g, v| {
                let o = g.dropout(v[0], 0.5, &mut Stream::new(3))?;
                project(g, o, 9)
            }),
        ),
        ("l1", vec![x(), y()], Box::new(|g, v| g.l1(v[0], v[1]))),
        ("mse", vec![x(), y()], Box::new(|g, v| g.mse(v[0], v[1]))),
        (
            "bce_with_logits",
            vec![x().reshape(&[96]).unwrap(), Tensor::<f32>::uniform(&[96], 0.0, 1.0, &mut Stream::new(17)).cast()],
            Box::new(|g, v| g.bce_with_logits(v[0], v[1])),
        ),
        ("rals_d_loss", vec![randn(&[6], 18), randn(&[6], 19)], Box::new(|g, v| rals_d_loss(g, v[0], v[1]))),
        ("rals_g_loss", vec![randn(&[6], 18), randn(&[6], 19)], Box::new(|g, v| rals_g_loss(g, v[0], v[1]))),
        (
            "pac_pack",
            vec![randn(&[4, 1, 3, 3], 20)],
            Box::new(|g, v| {
                let o = pac_pack_var(g, v[0], 2)?;
                project(g, o, 9)
            }),
        ),
        (
            "pair_and_pack",
            vec![randn(&[2, 1, 3, 3], 21), randn(&[2, 3, 3, 3], 22)],
            Box::new(|g, v| {
                let o = pair_and_pack(g, v[0], v[1], 2)?;
                project(g, o, 9)
            }),
        ),
        (
            "paint_losses",
            vec![
                randn(&[2, 1, 2, 2], 23),
                randn(&[2, 1, 2, 2], 24),
                randn(&[1, 3, 4, 4], 25),
                randn(&[1, 3, 4, 4], 26),
            ],
            Box::new(|g, v| {
                let cfg = PaintConfig::default();
                let d = paint_d_loss(g, v[0], v[1])?;
                let gl = paint_g_loss(g, v[1], v[2], v[3], &cfg)?;
                g.add(d, gl.total)
            }),
        ),
        (
            "conv_bn_leaky_conv_mse",
            vec![
                randn(&[2, 2, 6, 6], 27),
                randn(&[3, 2, 3, 3], 28),
                randn(&[3], 29),
                randn(&[3], 30),
                randn(&[1, 3, 3, 3], 31),
                randn(&[2, 1, 6, 6], 32),
            ],
            Box::new(|g, v| {
                let h = g.conv2d(v[0], v[1], None, 1, 1)?;
                let (h, _) = g.batch_norm_train(h, v[2], v[3], 1e-5)?;
                let h = g.leaky_relu(h, 0.2)?;
                let h = g.conv2d(h, v[4], None, 1, 1)?;
                g.mse(h, v[5])
            }),
        ),
    ];
    c.push(unet_case());
    c
}

/// Runs every gradient check; `(name, report)` per case.
pub fn gradient_suite() -> Vec<(&'static str, GradCheckReport)> {
    cases()
        .into_iter()
        .map(|(name, inputs, f)| {
            let report = grad_check(&inputs, 1e-6, |g, v| f(g, v)).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, report)
        })
        .collect()
}

pub const GRADIENT_OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "scale",
    "add_scalar",
    "sub_broadcast",
    "square",
    "mean",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "linear",
    "reshape",
    "concat_channels",
    "conv2d",
    "conv_transpose2d",
    "batch_norm_train",
    "batch_norm_eval",
    "dropout",
    "l1",
    "mse",
    "bce_with_logits",
];

// ---------------------------------------------------------------------------
// Constructed survey cohorts

fn response(p: &str, lang: NativeLang, img: String, source: Source, q1: Judgement, aesthetic: u8) -> SurveyResponse {
    SurveyResponse {
        participant_id: p.into(),
        native_lang: lang,
        image_id: img,
        source,
        q1,
        q2_certainty: 7,
        q3_aesthetic: aesthetic,
        q3_composition: 3,
        q3_clarity: 3,
        q3_creative: 3,
        timestamp: "2020-01-01T00:00:00Z".into(),
    }
}

/// One participant's 18 answers: 6 paintings per source.
/// `human_right` human paintings called human, `baseline_fooled` and
/// `sapgan_fooled` machine paintings called human, `sapgan_aesthetic_sum`
/// spread over the six sapgan aesthetic ratings.
fn eighteen(
    p: &str,
    lang: NativeLang,
    human_right: usize,
    baseline_fooled: usize,
    sapgan_fooled: usize,
    sapgan_aesthetic_sum: usize,
) -> Vec<SurveyResponse> {
    let mut rows = Vec::new();
    let pick = |i: usize, k: usize| if i < k { Judgement::Human } else { Judgement::Computer };
    let other = |i: usize, k: usize| if i < k { Judgement::Computer } else { Judgement::Human };
    for i in 0..6 {
        rows.push(response(p, lang, format!("h{i}"), Source::Human, other(i, 6 - human_right), 3));
        rows.push(response(p, lang, format!("b{i}"), Source::Baseline, pick(i, baseline_fooled), 2));
        let base = sapgan_aesthetic_sum / 6;
        let extra = usize::from(i < sapgan_aesthetic_sum % 6);
        rows.push(response(p, lang, format!("s{i}"), Source::Sapgan, pick(i, sapgan_fooled), (base + extra) as u8));
    }
    rows
}

/// 100 participants built so that the sapgan fool rate is 0.55, the
/// baseline fool rate 0.11, the human aesthetic mean 3.00 against sapgan's
/// 2.65, and the mean accuracy 0.705. Rows are shuffled.
pub fn reference_cohort() -> Vec<SurveyResponse> {
    let mut rows = Vec::new();
    for p in 0..100 {
        let sapgan_fooled = if p < 30 { 4 } else { 3 }; // 30·4 + 70·3 = 330 = 0.55·600
        let baseline_fooled = usize::from(p < 66); // 66 = 0.11·600
        let human_right = if p < 65 { 5 } else { 4 }; // 465; (465 + 534 + 270) / 1800 = 0.705
        let aesthetic = if p < 90 { 16 } else { 15 }; // 1590 / 600 = 2.65
        rows.extend(eighteen(
            &format!("p{p:03}"),
            NativeLang::En,
            human_right,
            baseline_fooled,
            sapgan_fooled,
            aesthetic,
        ));
    }
    Stream::new(2020).shuffle(&mut rows);
    rows
}

/// 125 zh participants averaging 8.856/18 = 0.492 correct and 100 en
/// participants averaging 13.23/18 = 0.735.
pub fn language_cohort() -> Vec<SurveyResponse> {
    let mut rows = Vec::new();
    // correct = human_right + (6 − baseline_fooled) + (6 − sapgan_fooled)
    let with_correct = |p: String, lang, correct: usize| {
        let wrong = 18 - correct;
        let sapgan_fooled = wrong.min(6);
        let baseline_fooled = (wrong - sapgan_fooled).min(6);
        let human_right = 6 - (wrong - sapgan_fooled - baseline_fooled);
        eighteen(&p, lang, human_right, baseline_fooled, sapgan_fooled, 15)
    };
    for p in 0..125 {
        rows.extend(with_correct(format!("zh{p:03}"), NativeLang::Zh, if p < 107 { 9 } else { 8 }));
    }
    for p in 0..100 {
        rows.extend(with_correct(format!("en{p:03}"), NativeLang::En, if p < 23 { 14 } else { 13 }));
    }
    Stream::new(7).shuffle(&mut rows);
    rows
}

// ---------------------------------------------------------------------------
// High-precision t-test references (40-digit incomplete beta evaluations).

/// a = [2, 4, 6], b = [1, 3, 5].
pub const T_SQRT_3_8_P: f64 = 0.573_392_253_825_355_5;
/// a = [0.3, 1.7, 2.2, 5.1, 0.9], b = [2.5, 3.1, 4.4, 3.9].
pub const T_FIVE_FOUR: (f64, f64) = (-1.416_723_257_927_995_8, 0.199_494_018_202_262_16);
/// `(t, df, two-tailed p)`.
pub const T_TAILS: &[(f64, f64, f64)] = &[
    (2.5, 3.0, 0.087_706_647_008_065_55),
    (10.0, 7.0, 2.139_420_289_077_281_2e-5),
    (0.1, 30.0, 0.921_009_611_790_271_2),
    (4.2, 100.0, 5.802_735_483_958_662e-5),
];

// ---------------------------------------------------------------------------
// Training runs

use sapgan_core::data::{normalize, normalize_batch, synth_landscape};
use sapgan_core::edge::{edge_map, EdgeParams};
use sapgan_core::paint::PaintGan;
use sapgan_core::sketch::{LatentSpec, SketchConfig, SketchGan, SketchStepStats};

/// A 32×32 synthetic painting and its edge map, both normalized.
pub fn training_pair(seed: u64, size: usize) -> (Tensor<f32>, Tensor<f32>) {
    let painting = synth_landscape(&mut Stream::new(seed), size).unwrap();
    let edges = edge_map(&painting, &EdgeParams::default()).unwrap();
    (normalize(&edges), normalize(&painting))
}

pub struct OverfitRun {
    pub l1: Vec<f32>,
    pub loss_g: Vec<f32>,
    /// l1 of the eval-mode translation after training.
    pub eval_l1: f64,
}

pub fn overfit_l1_only(steps: usize, seed: u64) -> OverfitRun {
    let cfg = PaintConfig { size: 32, adv_weight: 0.0, ..Default::default() };
    let mut gan = PaintGan::new(cfg, &mut Stream::new(seed)).unwrap();
    let (edges, painting) = training_pair(seed, 32);
    let mut run = OverfitRun { l1: Vec::new(), loss_g: Vec::new(), eval_l1: f64::NAN };
    for _ in 0..steps {
        let l = gan.train_step(&edges, &painting).unwrap();
        run.l1.push(l.l1);
        run.loss_g.push(l.loss_g);
    }
    let out = gan.gen.translate(&edges).unwrap();
    run.eval_l1 =
        out.data().iter().zip(painting.data()).map(|(a, b)| f64::from((a - b).abs())).sum::<f64>() / out.numel() as f64;
    run
}

pub fn windowed_means(xs: &[f32], window: usize) -> Vec<f64> {
    xs.chunks(window).map(|c| c.iter().map(|&v| f64::from(v)).sum::<f64>() / c.len() as f64).collect()
}

pub struct SketchRun {
    pub stats: Vec<SketchStepStats>,
    /// Mean over pixels of the across-sample standard deviation of 16
    /// eval-mode generations.
    pub output_std: f64,
    pub gan: SketchGan,
}

/// SketchGAN on `corpus` synthetic edge maps of side `size`.
pub fn sketch_run(steps: usize, corpus: usize, batch: usize, size: usize, seed: u64) -> SketchRun {
    let root = Stream::new(seed);
    let edges: Vec<RawImage> = (0..corpus as u64)
        .map(|i| {
            edge_map(
                &synth_landscape(&mut root.derive("corpus").derive_index(i), size).unwrap(),
                &EdgeParams::default(),
            )
            .unwrap()
        })
        .collect();
    let cfg = SketchConfig { size, ..Default::default() };
    let mut gan = SketchGan::new(cfg, &mut root.derive("model")).unwrap();
    let latent = LatentSpec::new(cfg.latent_dim).unwrap();
    let mut order = root.derive("order");
    let mut zs = root.derive("latent");
    let mut stats = Vec::new();
    for _ in 0..steps {
        let picks: Vec<RawImage> = (0..batch).map(|_| edges[order.below(corpus)].clone()).collect();
        let real = normalize_batch(&picks).unwrap();
        stats.push(gan.train_step(&real, &latent.sample(batch, &mut zs)).unwrap());
    }
    let samples = gan.gen.generate(&latent.sample(16, &mut root.derive("probe"))).unwrap();
    let plane = size * size;
    let output_std = (0..plane)
        .map(|p| {
            let v: Vec<f64> = (0..16).map(|n| f64::from(samples.data()[n * plane + p])).collect();
            let m = v.iter().sum::<f64>() / 16.0;
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 15.0).sqrt()
        })
        .sum::<f64>()
        / plane as f64;
    SketchRun { stats, output_std, gan }
}

/// A paint generator fitted with L1 alone to `pairs` synthetic pairs.
pub fn l1_painter(steps: usize, pairs: u64, size: usize, seed: u64) -> UNetGenerator {
    let cfg = PaintConfig { size, adv_weight: 0.0, ..Default::default() };
    let mut gan = PaintGan::new(cfg, &mut Stream::new(seed)).unwrap();
    let data: Vec<(Tensor<f32>, Tensor<f32>)> = (0..pairs).map(|i| training_pair(seed * 1000 + i, size)).collect();
    for step in 0..steps {
        let (e, p) = &data[step % data.len()];
        gan.train_step(e, p).unwrap();
    }
    gan.gen
}
