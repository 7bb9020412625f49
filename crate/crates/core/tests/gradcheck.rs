use octseg_core::data::{ClassScheme, LabelMap};
use octseg_core::lfunet::{LfUNet, NetworkConfig};
use octseg_core::losses::{class_weights, pixel_weight_map, total_loss, total_loss_grad, LossConfig};
use octseg_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DROPOUT_SEED: u64 = 5;

struct Problem {
    x: Tensor<f64>,
    labels: LabelMap,
    loss: LossConfig,
}

impl Problem {
    fn new(h: usize, w: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_vec(4, h, w, (0..4 * h * w).map(|_| rng.random::<f64>()).collect()).unwrap();
        // layered truth with a fluid blob so every weight term is active
        let labels = (0..h * w)
            .map(|p| {
                let (y, c) = (p / w, p % w);
                if (3..5).contains(&y) && (2..4).contains(&c) {
                    7
                } else {
                    (y * 7 / h) as u8
                }
            })
            .collect();
        let labels = LabelMap::new(h, w, ClassScheme::Stage2, labels).unwrap();
        Self { x, labels, loss: LossConfig::default() }
    }

    fn loss(&self, net: &LfUNet<f64>) -> f64 {
        let probs = net.forward(&self.x, Some(&mut ChaCha8Rng::seed_from_u64(DROPOUT_SEED))).unwrap().probabilities();
        let cw = class_weights([&self.labels]).unwrap();
        let pw = pixel_weight_map(&self.labels, &self.loss);
        total_loss(&probs, &self.labels, &cw, &pw, &self.loss).unwrap().total
    }

    fn grads(&self, net: &mut LfUNet<f64>) {
        net.zero_grad();
        let trace = net.forward(&self.x, Some(&mut ChaCha8Rng::seed_from_u64(DROPOUT_SEED))).unwrap();
        let cw = class_weights([&self.labels]).unwrap();
        let pw = pixel_weight_map(&self.labels, &self.loss);
        let (_, g) = total_loss_grad(&trace.probabilities(), &self.labels, &cw, &pw, &self.loss).unwrap();
        net.backward(&trace, &g);
    }
}

fn network() -> LfUNet<f64> {
    let cfg = NetworkConfig {
        in_channels: 4,
        num_classes: 8,
        base_features: 4,
        depth: 2,
        dilated_branch_features: 4,
        ..NetworkConfig::default()
    };
    let mut net = LfUNet::with_seed(cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (name, p) in net.named_params_mut() {
        if name.ends_with("bias") {
            p.value.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    net
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Analytic parameter gradients of the full network against central
/// differences of the composite loss, in f64.
#[test]
fn network_gradient_matches_finite_differences() {
    let problem = Problem::new(8, 8, 3);
    let mut net = network();
    problem.grads(&mut net);
    let analytic: Vec<(String, Vec<f64>)> = net.named_params().into_iter().map(|(n, p)| (n, p.grad)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = 1e-5;
    let mut errors = Vec::new();
    for _ in 0..20 {
        let t = rng.random_range(0..analytic.len());
        let i = rng.random_range(0..analytic[t].1.len());
        let nudge = |net: &mut LfUNet<f64>, d: f64| {
            let mut params = net.params_mut();
            params[t].value[i] += d;
        };
        nudge(&mut net, eps);
        let up = problem.loss(&net);
        nudge(&mut net, -2.0 * eps);
        let down = problem.loss(&net);
        nudge(&mut net, eps);
        let numeric = (up - down) / (2.0 * eps);
        errors.push((analytic[t].0.clone(), i, analytic[t].1[i], numeric, relative_error(analytic[t].1[i], numeric)));
    }
    let good = errors.iter().filter(|e| e.4 < 1e-4).count();
    assert!(good >= 19, "{errors:#?}");
    assert!(errors.iter().all(|e| e.4 < 1e-2), "{errors:#?}");
}

/// Same check on inputs whose dims need padding to the network multiple.
#[test]
fn gradient_through_padding_and_crop() {
    let problem = Problem::new(10, 9, 8);
    let mut net = network();
    problem.grads(&mut net);
    let params = net.named_params();
    let (name, p) = params.iter().find(|(n, _)| n == "encoder.0.conv1.weight").unwrap();
    for i in [0, 7, 30] {
        let eps = 1e-5;
        let mut shifted = net.clone();
        shifted.params_mut()[0].value[i] += eps;
        let up = problem.loss(&shifted);
        shifted.params_mut()[0].value[i] -= 2.0 * eps;
        let down = problem.loss(&shifted);
        let numeric = (up - down) / (2.0 * eps);
        assert!(relative_error(p.grad[i], numeric) < 1e-4, "{name}[{i}]: {} vs {numeric}", p.grad[i]);
    }
}
