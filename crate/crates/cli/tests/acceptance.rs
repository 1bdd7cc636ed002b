//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. The trained model from the trainer check is
//! shared by the benchmark-trend checks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use attribench::attrib::{
    deeplift, input_x_gradient, integrated_gradients, lime_with, occlusion_with, saliency, BaselineSpec, IgConfig,
    LimeConfig, Method, OcclusionConfig, SmoothBase,
};
use attribench::metrics::{auc_morf, evaluate_all, morf_curve_with, ClassSelection, EvalConfig, MorfConfig};
use attribench::nn::{save_model, LayerDesc, ModelSpec, ReluBackwardMode, Target, WeightStore};
use attribench::rng::rng_from;
use attribench::slic::{slic, SlicConfig};
use attribench::synth::{
    evaluate_classifier, generate_dataset, save_dataset, split_validation, train, DatasetConfig, SampleRecord,
    TrainConfig,
};
use attribench::{Network, Tensor};
use attribench_cli::split_test;
use rand::Rng;

type Check = Result<(bool, String), String>;

struct Report {
    lines: BTreeMap<usize, String>,
    failed: usize,
}

impl Report {
    fn run(&mut self, n: usize, name: &str, budget_s: f64, f: impl FnOnce() -> Check) -> f64 {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = secs < budget_s;
        let pass = ok && in_time;
        if !pass {
            self.failed += 1;
        }
        let timing = if in_time {
            format!("{secs:.1}s < {budget_s:.0}s")
        } else {
            format!("{secs:.1}s OVER {budget_s:.0}s budget")
        };
        let line = format!("{} [{n:>2}] {name}: {detail} ({timing})", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.insert(n, line);
        secs
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn random_input(shape: [usize; 3], seed: u64) -> Tensor {
    let mut rng = rng_from(seed, &[0xacc]);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn random_net(layers: Vec<LayerDesc>, input: [usize; 3], classes: usize, gradcam: usize, seed: u64) -> Network {
    let spec = ModelSpec::new(layers, input, classes, gradcam).unwrap();
    let mut w = WeightStore::init(&spec, seed);
    let mut rng = rng_from(seed, &[0xb1a5]);
    for i in 0..spec.layers().len() {
        if let Some(p) = w.layer_mut(i) {
            for b in p.bias.data_mut() {
                *b = rng.random_range(-0.1..0.1);
            }
        }
    }
    Network::new(spec, w).unwrap()
}

fn relu_cnn(channels: (usize, usize), classes: usize) -> Vec<LayerDesc> {
    vec![
        LayerDesc::conv(channels.0, 3, 1, 1),
        LayerDesc::Relu,
        LayerDesc::MaxPool2x2,
        LayerDesc::conv(channels.1, 3, 1, 1),
        LayerDesc::Relu,
        LayerDesc::GlobalAvgPool,
        LayerDesc::dense(classes),
    ]
}

/// ReLU signs and max-pool winners: the linear piece `x` sits on.
fn regime(net: &Network, x: &Tensor) -> Vec<u8> {
    let rec = net.forward(x).unwrap();
    let mut out = Vec::new();
    for (i, layer) in net.spec().layers().iter().enumerate() {
        let a = &rec.activations[i];
        match layer {
            LayerDesc::Relu => out.extend(a.data().iter().map(|&v| (v > 0.0) as u8)),
            LayerDesc::MaxPool2x2 => {
                let [c, h, w] = a.shape()[..] else { panic!() };
                for ch in 0..c {
                    for oy in 0..h / 2 {
                        for ox in 0..w / 2 {
                            let at = |dy: usize, dx: usize| a[ch * h * w + (2 * oy + dy) * w + 2 * ox + dx];
                            let vals = [at(0, 0), at(0, 1), at(1, 0), at(1, 1)];
                            let mut best = 0;
                            for k in 1..4 {
                                if vals[k] > vals[best] {
                                    best = k;
                                }
                            }
                            out.push(best as u8);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

fn gradient_check() -> Check {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for k in 0..5u64 {
        let shape = [1 + k as usize % 3, 8 + 2 * k as usize, 8 + 2 * k as usize];
        let net = random_net(relu_cnn((3 + k as usize, 4 + k as usize), 3), shape, 3, 3, 100 + k);
        let x = random_input(shape, 200 + k);
        let class = k as usize % 3;
        let g = net.grad_input(&x, class, ReluBackwardMode::Standard).map_err(e)?;
        let base = regime(&net, &x);
        let mut rng = rng_from(300 + k, &[]);
        let mut n = 0;
        while n < 100 {
            let d = rng.random_range(0..x.len());
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[d] += h;
            xm[d] -= h;
            // Central differences are meaningless across a kink.
            if regime(&net, &xp) != base || regime(&net, &xm) != base {
                skipped += 1;
                if skipped > 5000 {
                    return Err("too many coordinates straddle kinks".into());
                }
                continue;
            }
            let fd = (net.score(&xp, class, Target::Logit).map_err(e)? - net.score(&xm, class, Target::Logit).map_err(e)?)
                / (2.0 * h);
            let rel = (fd - g[d]).abs() / fd.abs().max(g[d].abs()).max(1e-8);
            worst = worst.max(rel);
            n += 1;
            checked += 1;
        }
    }
    Ok((worst <= 1e-4, format!("max rel err {worst:.2e} over {checked} coords, 5 nets ({skipped} kink coords redrawn)")))
}

/// `C×H×W → classes` network computing `W x + b`: identity 1×1 conv, dense.
fn linear_net(w: &[f64], b: &[f64], shape: [usize; 3]) -> Network {
    let c = shape[0];
    let spec = ModelSpec::new(vec![LayerDesc::conv(c, 1, 1, 0), LayerDesc::dense(b.len())], shape, b.len(), 0).unwrap();
    let mut store = WeightStore::zeros(&spec);
    let conv = store.layer_mut(0).unwrap();
    for i in 0..c {
        conv.weight[i * c + i] = 1.0;
    }
    let dense = store.layer_mut(1).unwrap();
    dense.weight = Tensor::new(vec![b.len(), w.len() / b.len()], w.to_vec()).unwrap();
    dense.bias = Tensor::from_vec(b.to_vec());
    Network::new(spec, store).unwrap()
}

fn random_linear(shape: [usize; 3], classes: usize, seed: u64) -> (Network, Vec<f64>) {
    let n: usize = shape.iter().product();
    let mut rng = rng_from(seed, &[0x11]);
    let w: Vec<f64> = (0..n * classes).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..classes).map(|_| rng.random_range(-0.5..0.5)).collect();
    (linear_net(&w, &b, shape), w)
}

fn ig_completeness() -> Check {
    let shape = [2, 10, 10];
    let layers = vec![
        LayerDesc::conv(4, 3, 1, 1),
        LayerDesc::Sigmoid,
        LayerDesc::conv(5, 3, 2, 1),
        LayerDesc::Sigmoid,
        LayerDesc::GlobalAvgPool,
        LayerDesc::dense(2),
    ];
    let mut worst_smooth: f64 = 0.0;
    for seed in 0..3 {
        let net = random_net(layers.clone(), shape, 2, 2, 40 + seed);
        let x = random_input(shape, 50 + seed);
        let zero = Tensor::zeros(&shape[..]);
        let cfg = IgConfig { steps: 300, baseline: BaselineSpec::Zero };
        for class in 0..2 {
            let phi: f64 = integrated_gradients(&net, &x, class, &cfg).map_err(e)?.scores.data().iter().sum();
            let delta = net.score(&x, class, Target::Logit).map_err(e)? - net.score(&zero, class, Target::Logit).map_err(e)?;
            worst_smooth = worst_smooth.max((phi - delta).abs() / delta.abs());
        }
    }
    let mut worst_linear: f64 = 0.0;
    let (net, _) = random_linear([2, 5, 5], 3, 9);
    let x = random_input([2, 5, 5], 10);
    let zero = Tensor::zeros(&[2, 5, 5]);
    for steps in [1, 2, 7, 50] {
        for class in 0..3 {
            let cfg = IgConfig { steps, baseline: BaselineSpec::Zero };
            let phi: f64 = integrated_gradients(&net, &x, class, &cfg).map_err(e)?.scores.data().iter().sum();
            let delta = net.score(&x, class, Target::Logit).map_err(e)? - net.score(&zero, class, Target::Logit).map_err(e)?;
            worst_linear = worst_linear.max((phi - delta).abs());
        }
    }
    Ok((
        worst_smooth <= 0.01 && worst_linear <= 1e-12,
        format!("smooth rel gap {worst_smooth:.2e} (≤ 1e-2), linear abs gap {worst_linear:.1e} (≤ 1e-12)"),
    ))
}

fn deeplift_summation() -> Check {
    let mut worst: f64 = 0.0;
    let mut nets = 0;
    let mut seed = 0;
    while nets < 20 {
        seed += 1;
        let shape = [2, 8, 8];
        let net = random_net(relu_cnn((4, 6), 3), shape, 3, 3, 500 + seed);
        let x = random_input(shape, 600 + seed);
        let baseline = BaselineSpec::Blur { sigma: 2.0, kernel_size: 9 };
        let xb = baseline.resolve(&x).map_err(e)?;
        let class = (seed % 3) as usize;
        let delta = net.score(&x, class, Target::Logit).map_err(e)? - net.score(&xb, class, Target::Logit).map_err(e)?;
        if delta.abs() < 1e-6 {
            continue;
        }
        let phi: f64 = deeplift(&net, &x, class, &baseline).map_err(e)?.scores.data().iter().sum();
        worst = worst.max((phi - delta).abs() / delta.abs());
        nets += 1;
    }
    Ok((worst <= 1e-6, format!("max rel gap {worst:.2e} over 20 nets")))
}

fn linear_closed_forms() -> Check {
    let shape = [3, 6, 6];
    let n: usize = shape.iter().product();
    let (net, w) = random_linear(shape, 2, 77);
    let x = random_input(shape, 78);
    let baseline = BaselineSpec::Blur { sigma: 2.0, kernel_size: 9 };
    let xb = baseline.resolve(&x).map_err(e)?;
    let ig = IgConfig { steps: 50, baseline: BaselineSpec::Zero };
    let mut worst = [0.0f64; 4];
    for class in 0..2 {
        let wc = &w[class * n..(class + 1) * n];
        let maps = [
            saliency(&net, &x, class).map_err(e)?,
            input_x_gradient(&net, &x, class).map_err(e)?,
            integrated_gradients(&net, &x, class, &ig).map_err(e)?,
            deeplift(&net, &x, class, &baseline).map_err(e)?,
        ];
        for i in 0..n {
            let expected = [wc[i], x[i] * wc[i], x[i] * wc[i], (x[i] - xb[i]) * wc[i]];
            for m in 0..4 {
                worst[m] = worst[m].max((maps[m].scores[i] - expected[m]).abs());
            }
        }
    }
    Ok((
        worst.iter().all(|&v| v <= 1e-10),
        format!(
            "max abs err saliency {:.1e}, ixg {:.1e}, ig {:.1e}, deeplift {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn occlusion_oracle() -> Check {
    let x = random_input([2, 6, 6], 5);
    let mut rng = rng_from(6, &[]);
    let a: Vec<f64> = (0..72).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..72).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = |t: &Tensor| -> f64 {
        let s: f64 = t.data().iter().zip(&a).map(|(v, w)| v * w).sum();
        let q: f64 = t.data().iter().zip(&b).map(|(v, w)| v * w).sum();
        s.sin() + 0.3 * q * q
    };
    let mut worst: f64 = 0.0;
    for (win, stride) in [(3, 1), (4, 2), (2, 1), (3, 3)] {
        let cfg = OcclusionConfig { window: (win, win), stride: (stride, stride), baseline: BaselineSpec::Zero };
        let got = occlusion_with(&x, &cfg, |t| Ok(f(t))).map_err(e)?;
        // Every placement on the stride grid, all fully inside the image.
        let mut sums = [0.0; 36];
        let mut counts = [0usize; 36];
        let mut oy = 0;
        while oy + win <= 6 {
            let mut ox = 0;
            while ox + win <= 6 {
                let mut occluded = x.clone();
                for ch in 0..2 {
                    for y in oy..oy + win {
                        for xx in ox..ox + win {
                            occluded[ch * 36 + y * 6 + xx] = 0.0;
                        }
                    }
                }
                let d = f(&x) - f(&occluded);
                for y in oy..oy + win {
                    for xx in ox..ox + win {
                        sums[y * 6 + xx] += d;
                        counts[y * 6 + xx] += 1;
                    }
                }
                ox += stride;
            }
            oy += stride;
        }
        for p in 0..36 {
            worst = worst.max((got[p] - sums[p] / counts[p] as f64).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max abs err {worst:.1e} over 4 window/stride settings")))
}

fn morf_oracle() -> Check {
    // 2×2 image, relevance ranks pixels 1, 3, 2, 0 (tie between 1 and 3 to
    // the lower index). One pixel per round.
    let x = Tensor::new(vec![1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let relevance = [0.5, 2.0, 1.0, 2.0];
    let w = [1.0, -2.0, 3.0, 0.5];
    let f = |t: &Tensor| -> f64 { t.data().iter().zip(&w).map(|(v, k)| v * k).sum::<f64>().tanh() };
    let cfg = MorfConfig { removal_fraction: 0.25, max_iters: 3 };
    let curve = morf_curve_with(&x, &relevance, &cfg, |t| Ok(f(t))).map_err(e)?;
    let hand = [
        [0.1, 0.2, 0.3, 0.4],
        // pixel 1 copies its nearest kept pixel; 0 and 3 tie, 0 wins
        [0.1, 0.1, 0.3, 0.4],
        // pixel 3 copies pixel 2
        [0.1, 0.1, 0.3, 0.3],
        // only pixel 0 is kept
        [0.1, 0.1, 0.1, 0.1],
        // pixel 0 copies its nearest earlier-removed pixel (1)
        [0.1, 0.1, 0.1, 0.1],
    ];
    let expected: Vec<(f64, f64)> = hand
        .iter()
        .enumerate()
        .map(|(k, img)| (k as f64 / 4.0, f(&Tensor::new(vec![1, 2, 2], img.to_vec()).unwrap())))
        .collect();
    let trace_ok = curve.checkpoints.len() == expected.len()
        && curve
            .checkpoints
            .iter()
            .zip(&expected)
            .all(|(a, b)| a.0 == b.0 && (a.1 - b.1).abs() < 1e-12);
    let (auc, _) = auc_morf(&[1.0, 0.5, 0.25]).map_err(e)?;
    Ok((
        trace_ok && (auc - 1.125).abs() < 1e-15,
        format!("trace {} ({} checkpoints), auc([1, .5, .25]) = {auc}", if trace_ok { "matches" } else { "differs" }, curve.checkpoints.len()),
    ))
}

fn lime_recovery() -> Check {
    let sample = attribench::synth::generate_sample(&DatasetConfig::default(), 3);
    let x = sample.image;
    let seg = slic(&x, &SlicConfig { requested_segments: 40, ..Default::default() }).map_err(e)?;
    let k = seg.num_segments;
    let (_, h, w) = x.chw().map_err(e)?;
    let plane = h * w;
    let mut rng = rng_from(12, &[]);
    let coef: Vec<f64> = (0..k)
        .map(|_| rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let sizes = seg.segment_sizes();
    let channel_mass = |t: &Tensor, j: usize| -> f64 {
        let mut s = 0.0;
        for p in (0..plane).filter(|&p| seg.labels[p] == j) {
            for ch in 0..t.shape()[0] {
                s += t[ch * plane + p];
            }
        }
        s / sizes[j] as f64
    };
    let full: Vec<f64> = (0..k).map(|j| channel_mass(&x, j)).collect();
    // Linear in the keep-mask: each segment's mean intensity relative to
    // the original is exactly its mask bit.
    let model = |t: &Tensor| -> attribench::Result<Vec<f64>> {
        Ok(vec![0.25 + (0..k).map(|j| coef[j] * channel_mass(t, j) / full[j]).sum::<f64>()])
    };
    let cfg = LimeConfig { num_segments: 40, num_samples: 6000, seed: 3, ..Default::default() };
    let fit = lime_with(&x, &seg, &cfg, 1, model).map_err(e)?;
    let worst = fit[0]
        .coefficients
        .iter()
        .zip(&coef)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0f64, f64::max);
    Ok((worst <= 0.05, format!("max rel coefficient err {worst:.2e} over {k} segments, 6000 samples")))
}

struct Trained {
    net: Network,
    data: Vec<SampleRecord>,
    micro_f1: f64,
}

fn train_model() -> Result<Trained, String> {
    let data = generate_dataset(&DatasetConfig::default()).map_err(e)?;
    let (train_val, test) = split_test(&data);
    let (train_set, val_set) = split_validation(train_val);
    let spec = ModelSpec::default_cnn([3, 32, 32], 6).map_err(e)?;
    let (weights, _) = train(&spec, &TrainConfig::default(), train_set, val_set).map_err(e)?;
    let net = Network::new(spec, weights).map_err(e)?;
    let micro_f1 = evaluate_classifier(&net, test, 0.5).map_err(e)?.micro.f1;
    Ok(Trained { net, data, micro_f1 })
}

fn mean_of(report: &attribench::metrics::EvaluationReport, id: &str, f: impl Fn(&attribench::metrics::ReportRow) -> Option<f64>) -> Result<f64, String> {
    report.row(id).and_then(f).ok_or_else(|| format!("no {id} row"))
}

fn morf_trend(t: &Trained) -> Check {
    let (_, test) = split_test(&t.data);
    let methods = [Method::Occlusion, Method::GradCam, Method::Lime, Method::InputXGradient];
    let cfg = EvalConfig { compute_sensitivity: false, ..Default::default() };
    let report = evaluate_all(&t.net, &test[..50], &methods, &cfg).map_err(e)?;
    let auc = |id: &str| mean_of(&report, id, |r| Some(r.auc_morf_mean));
    let (random, ixg) = (auc("random")?, auc("input_x_gradient")?);
    let mut ok = t.micro_f1 >= 0.90 && report.failures.is_empty();
    let mut parts = Vec::new();
    for id in ["occlusion", "grad_cam", "lime"] {
        let v = auc(id)?;
        ok &= v < random && v < ixg;
        parts.push(format!("{id} {v:.3}"));
    }
    Ok((
        ok,
        format!(
            "mean AUC {}; input_x_gradient {ixg:.3}; random {random:.3} ({} records, model F1 {:.3})",
            parts.join(", "),
            report.records.len(),
            t.micro_f1
        ),
    ))
}

fn smoothgrad_trend(t: &Trained) -> Check {
    let (_, test) = split_test(&t.data);
    let pairs = [
        (Method::Saliency, Method::SmoothGrad(SmoothBase::Saliency)),
        (Method::InputXGradient, Method::SmoothGrad(SmoothBase::InputXGradient)),
        (Method::IntegratedGradients, Method::SmoothGrad(SmoothBase::IntegratedGradients)),
    ];
    let methods: Vec<Method> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let cfg = EvalConfig { classes: ClassSelection::Top, include_random: false, ..Default::default() };
    let report = evaluate_all(&t.net, &test[..20], &methods, &cfg).map_err(e)?;
    let mut ok = report.failures.is_empty();
    let mut parts = Vec::new();
    for (base, smooth) in pairs {
        let b = mean_of(&report, base.id(), |r| r.max_sensitivity_mean)?;
        let s = mean_of(&report, smooth.id(), |r| r.max_sensitivity_mean)?;
        ok &= s <= b;
        parts.push(format!("{} {b:.3} -> {s:.3}", base.id()));
    }
    Ok((ok, format!("mean Max-Sensitivity {}", parts.join(", "))))
}

fn filesize_trend(t: &Trained) -> Check {
    let (_, test) = split_test(&t.data);
    let coarse = [Method::GradCam, Method::Occlusion, Method::Lime];
    let gradient = [
        Method::Saliency,
        Method::InputXGradient,
        Method::IntegratedGradients,
        Method::GuidedBackprop,
        Method::SmoothGrad(SmoothBase::Saliency),
        Method::SmoothGrad(SmoothBase::InputXGradient),
        Method::SmoothGrad(SmoothBase::IntegratedGradients),
    ];
    let methods: Vec<Method> = coarse.iter().chain(&gradient).copied().collect();
    let cfg = EvalConfig {
        classes: ClassSelection::Top,
        compute_sensitivity: false,
        include_random: false,
        ..Default::default()
    };
    let report = evaluate_all(&t.net, &test[..50], &methods, &cfg).map_err(e)?;
    let size = |m: &Method| mean_of(&report, m.id(), |r| Some(r.file_size_bytes_mean));
    let coarse_max = coarse.iter().map(size).collect::<Result<Vec<_>, _>>()?.into_iter().fold(0.0, f64::max);
    let (mut grad_min, mut grad_min_id) = (f64::INFINITY, "");
    for m in &gradient {
        let v = size(m)?;
        if v < grad_min {
            (grad_min, grad_min_id) = (v, m.id());
        }
    }
    let detail = coarse
        .iter()
        .map(|m| Ok(format!("{} {:.1}", m.id(), size(m)?)))
        .collect::<Result<Vec<_>, String>>()?
        .join(", ");
    Ok((
        coarse_max < grad_min && report.failures.is_empty(),
        format!("mean bytes {detail}; smallest gradient method {grad_min_id} {grad_min:.1}"),
    ))
}

fn strip_time(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn collect_files(dir: &Path, root: &Path, out: &mut Vec<String>) {
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            collect_files(&p, root, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_string_lossy().into_owned());
        }
    }
}

fn determinism(t: &Trained) -> Check {
    let tmp = tempfile::tempdir().map_err(e)?;
    let data_path = tmp.path().join("dataset.bin");
    let model_path = tmp.path().join("model.bin");
    save_dataset(&t.data, &data_path).map_err(e)?;
    save_model(t.net.spec(), t.net.weights(), &model_path).map_err(e)?;
    let cfg_path = tmp.path().join("run.cfg");
    fs::write(
        &cfg_path,
        "attribench-config 1\nseed = 11\neval.samples = 3\nlime.samples = 800\nsensitivity.samples = 3\n\
         smoothgrad.samples = 10\nig.steps = 20\n",
    )
    .map_err(e)?;
    let mut outs = Vec::new();
    for run in ["first", "second"] {
        let out = tmp.path().join(run);
        let args = [
            "attribench",
            "evaluate",
            "--config",
            cfg_path.to_str().unwrap(),
            "--data",
            data_path.to_str().unwrap(),
            "--model",
            model_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        if attribench_cli::run(args) != 0 {
            return Err(format!("{run} evaluate run failed"));
        }
        outs.push(out);
    }
    let mut names = Vec::new();
    collect_files(&outs[0], &outs[0], &mut names);
    names.sort();
    let mut other = Vec::new();
    collect_files(&outs[1], &outs[1], &mut other);
    other.sort();
    if names != other {
        return Ok((false, "runs produced different file sets".into()));
    }
    let mut differing = Vec::new();
    for name in &names {
        let a = fs::read(outs[0].join(name)).map_err(e)?;
        let b = fs::read(outs[1].join(name)).map_err(e)?;
        let same = if name == "report.csv" || name == "records.csv" {
            strip_time(&String::from_utf8_lossy(&a)) == strip_time(&String::from_utf8_lossy(&b))
        } else {
            a == b
        };
        if !same {
            differing.push(name.clone());
        }
    }
    let images = names.iter().filter(|n| n.ends_with(".pgm")).count();
    Ok((
        differing.is_empty() && images > 0,
        if differing.is_empty() {
            format!(
                "{} files identical ({images} heatmaps); computation_time_seconds column excluded",
                names.len()
            )
        } else {
            format!("differing: {}", differing.join(", "))
        },
    ))
}

fn main() {
    // Keep `cargo test -- <filter>` and `--list` from triggering the full run.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args.iter().any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }
    let total = Instant::now();
    let mut r = Report { lines: BTreeMap::new(), failed: 0 };
    r.run(1, "gradient vs central differences", 30.0, gradient_check);
    r.run(2, "integrated gradients completeness", 10.0, ig_completeness);
    r.run(3, "deeplift summation to delta", 10.0, deeplift_summation);
    r.run(4, "linear-model closed forms", 5.0, linear_closed_forms);
    r.run(5, "occlusion exhaustive oracle", 5.0, occlusion_oracle);
    r.run(6, "morf hand trace and auc", 5.0, morf_oracle);
    r.run(12, "lime surrogate recovery", 120.0, lime_recovery);

    let mut trained = None;
    r.run(9, "trainer reaches micro-F1 >= 0.90", 600.0, || {
        let t = train_model()?;
        let f1 = t.micro_f1;
        trained = Some(t);
        Ok((f1 >= 0.90, format!("held-out micro-F1 {f1:.4} within 30 epochs")))
    });
    match &trained {
        Some(t) => {
            let morf_secs = r.run(7, "morf trend vs random and input x gradient", 900.0, || morf_trend(t));
            r.run(8, "smoothgrad lowers max-sensitivity", 600.0, || smoothgrad_trend(t));
            r.run(10, "coarse maps have smaller files", 300.0, || filesize_trend(t));
            r.run(11, "evaluate is deterministic", 2.0 * morf_secs, || determinism(t));
        }
        None => {
            for (n, name) in [(7, "morf trend"), (8, "smoothgrad trend"), (10, "file-size trend"), (11, "determinism")] {
                r.run(n, name, f64::INFINITY, || Err("no trained model".into()));
            }
        }
    }

    println!("\nacceptance summary ({:.0}s):", total.elapsed().as_secs_f64());
    for line in r.lines.values() {
        println!("  {line}");
    }
    println!("{} of {} criteria passed", r.lines.len() - r.failed, r.lines.len());
    if r.failed > 0 {
        std::process::exit(1);
    }
}
