use mime_core::trainer::{batch_loss, loss_and_grads_with, Activation, Batch, Dataset, GateMode, SurrogateSpec, TrainConfig};
use mime_core::{init_network, LayerShape, NetworkSpec, Tensor, ThresholdSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

fn random_net(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let classes = rng.random_range(2..=4);
    let bias = rng.random_bool(0.5);
    let mut layers = Vec::new();
    let n_layers = rng.random_range(2..=3);
    let mut width = if rng.random_bool(0.5) {
        let c_out = rng.random_range(1..=4);
        layers.push(LayerShape::conv("c", 1, 4, 4, c_out, 3, 1, 1).with_bias(bias));
        c_out * 16
    } else {
        let n_in = rng.random_range(2..=8);
        let n_out = rng.random_range(2..=16);
        layers.push(LayerShape::fc("f0", n_in, n_out).with_bias(bias));
        n_out
    };
    if n_layers == 3 {
        let n_out = rng.random_range(2..=16);
        layers.push(LayerShape::fc("f1", width, n_out).with_bias(bias));
        width = n_out;
    }
    layers.push(LayerShape::fc("out", width, classes).with_bias(bias));
    NetworkSpec::new(layers, classes).unwrap()
}

#[test]
fn relaxed_threshold_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for net in 0..120u64 {
        let spec = random_net(&mut rng);
        let weights = init_network(&spec, net).unwrap();
        let n = 6;
        let inputs: Vec<Tensor> = (0..n)
            .map(|_| {
                let shape = spec.input_shape();
                let len = shape.iter().product();
                Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
            })
            .collect();
        let labels = (0..n).map(|_| rng.random_range(0..spec.classifier_classes)).collect();
        let ds = Dataset::new(inputs, labels, spec.classifier_classes).unwrap();
        let batch = Batch::whole(&ds);
        let mut t = ThresholdSet::constant(&spec, "g", 0.1).unwrap();
        for layer in &mut t.layers {
            for v in layer.data_mut() {
                *v = rng.random_range(0.02..0.6);
            }
        }
        let config = TrainConfig {
            beta: 1e-2,
            surrogate: SurrogateSpec { width: rng.random_range(0.3..1.2), ..Default::default() },
            train_head: false,
            ..Default::default()
        };
        let g = loss_and_grads_with(&spec, &weights, &t, &batch, &config, GateMode::Relaxed).unwrap();
        let loss_at = |t: &ThresholdSet| {
            batch_loss(&spec, &weights, &Activation::relaxed(t, &config), &batch, config.beta).unwrap().total
        };
        for l in 0..t.layers.len() {
            for i in 0..t.layers[l].len() {
                let mut plus = t.clone();
                plus.layers[l].data_mut()[i] += STEP;
                let mut minus = t.clone();
                minus.layers[l].data_mut()[i] -= STEP;
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * STEP);
                let analytic = g.thresholds[l].data()[i];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
                worst = worst.max(rel);
                assert!(rel <= REL_TOL, "net {net} layer {l} idx {i}: {analytic} vs {numeric} (rel {rel})");
                checked += 1;
            }
        }
    }
    println!("checked {checked} threshold gradients, worst relative error {worst:.2e}");
}
