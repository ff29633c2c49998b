use mime_core::arch::{savings_ratio_words, storage_plan, LayerFootprint, ModelFootprint};
use mime_core::cost::{
    energy_schedule, layer_traffic, CostOptions, HardwareConfig, InferenceCase, LayerCostReport, ProfileSet,
    Residency, TaskSchedule, TrafficQuery,
};
use mime_core::{
    apply_mask, init_network, masked_forward, measure_sparsity, LayerShape, LayerSparsity, NetworkSpec, SparsityMode,
    SparsityProfile, SparsitySource, Tensor, ThresholdSet,
};
use proptest::prelude::*;

fn tensor(v: Vec<f64>) -> Tensor {
    Tensor::from_vec(v)
}

proptest! {
    #[test]
    fn mask_gates_exactly_and_is_monotone_in_t(
        pairs in prop::collection::vec((-2.0f64..2.0, 1e-4f64..2.0, 0.0f64..1.0), 1..64)
    ) {
        let y = tensor(pairs.iter().map(|p| p.0).collect());
        let t = tensor(pairs.iter().map(|p| p.1).collect());
        let raised = tensor(pairs.iter().map(|p| p.1 + p.2).collect());
        let (m, a) = apply_mask(&y, &t).unwrap();
        let (m2, _) = apply_mask(&y, &raised).unwrap();
        for i in 0..pairs.len() {
            let (yi, mi, ai) = (y.data()[i], m.data()[i], a.data()[i]);
            prop_assert!(mi == 0.0 || mi == 1.0);
            prop_assert!(ai == 0.0 || ai == yi);
            prop_assert_eq!(mi == 1.0, yi >= t.data()[i]);
            prop_assert!(m2.data()[i] <= mi);
        }
    }
}

fn toy_net() -> NetworkSpec {
    NetworkSpec::new(
        vec![
            LayerShape::conv("c1", 1, 5, 5, 3, 3, 1, 1),
            LayerShape::fc("f1", 75, 12),
            LayerShape::fc("out", 12, 2),
        ],
        2,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mime_sparsity_dominates_relu_and_grows_with_own_threshold(
        seed in 0u64..1000,
        t0 in 1e-4f64..0.5,
        t1 in 1e-4f64..0.5,
        bump in 0.0f64..0.5,
        xs in prop::collection::vec(-1.0f64..1.0, 25 * 6),
    ) {
        let spec = toy_net();
        let w = init_network(&spec, seed).unwrap();
        let inputs: Vec<Tensor> = xs.chunks(25).map(|c| Tensor::new(vec![1, 5, 5], c.to_vec()).unwrap()).collect();
        let mut t = ThresholdSet::constant(&spec, "p", t0).unwrap();
        t.layers[1] = Tensor::filled(&[12], t1);
        let mime = measure_sparsity(&spec, &w, SparsityMode::Mime(&t), "p", &inputs).unwrap();
        let relu = measure_sparsity(&spec, &w, SparsityMode::Relu, "p", &inputs).unwrap();
        for m in &mime.layers {
            prop_assert!((0.0..=1.0).contains(&m.value));
        }
        prop_assert!(mime.layers[0].value >= relu.layers[0].value);
        // Deeper layers receive masked inputs, so the comparison is made on
        // the same pre-activations: every y <= 0 is also below t > 0.
        for x in &inputs {
            let tr = masked_forward(&spec, &w, &t, x).unwrap();
            for (y, m) in tr.pre_activations.iter().zip(&tr.masks) {
                let relu_zeros = y.data().iter().filter(|v| **v <= 0.0).count();
                prop_assert!(m.count_zeros() >= relu_zeros);
            }
        }
        for l in 0..2 {
            let mut up = t.clone();
            up.layers[l] = up.layers[l].map(|v| v + bump);
            let raised = measure_sparsity(&spec, &w, SparsityMode::Mime(&up), "p", &inputs).unwrap();
            prop_assert!(raised.layers[l].value >= mime.layers[l].value);
        }
    }
}

fn footprint(w: u64, t: u64) -> ModelFootprint {
    ModelFootprint::from_layers(
        vec![LayerFootprint { name: "l".into(), n_weights: w, n_thresholds: t, n_output_neurons: t, n_macs_dense: w }],
        2,
    )
}

proptest! {
    #[test]
    fn storage_ratio_properties(w in 1u64..1_000_000, t in 0u64..1_000_000, n in 1u64..20) {
        let (ratio, exceeds) = savings_ratio_words(w as f64, t as f64, n).unwrap();
        prop_assert_eq!(exceeds, w > n * n * t);
        prop_assert_eq!(exceeds, ratio > n as f64);
        let plan = storage_plan(&footprint(w, t), n, 0).unwrap();
        if t < w {
            prop_assert!(plan.mime_bytes < plan.conventional_bytes);
        }
        let next = storage_plan(&footprint(w, t), n + 1, 0).unwrap();
        if t < w {
            prop_assert!(next.conventional_bytes - next.mime_bytes > plan.conventional_bytes - plan.mime_bytes);
        }
        let (more_t, _) = savings_ratio_words(w as f64, (t + 1) as f64, n).unwrap();
        prop_assert!(more_t < ratio);
    }
}

fn cost_net() -> NetworkSpec {
    NetworkSpec::new(
        vec![
            LayerShape::conv("a", 16, 8, 8, 64, 3, 1, 1),
            LayerShape::conv("b", 64, 8, 8, 128, 3, 2, 1),
            LayerShape::fc("c", 2048, 256),
            LayerShape::fc("out", 256, 10),
        ],
        10,
    )
    .unwrap()
}

fn profiles(tasks: &[&str], values: &[f64], source: SparsitySource) -> ProfileSet {
    tasks
        .iter()
        .enumerate()
        .map(|(i, task)| {
            let layers = ["a", "b", "c"]
                .iter()
                .enumerate()
                .map(|(l, name)| LayerSparsity::new(*name, values[(i * 3 + l) % values.len()]))
                .collect();
            (task.to_string(), SparsityProfile { task_id: task.to_string(), source, layers })
        })
        .collect()
}

fn run(case: InferenceCase, schedule: &TaskSchedule, p: &ProfileSet) -> Vec<LayerCostReport> {
    energy_schedule(&cost_net(), &HardwareConfig::default(), case, schedule, p, &CostOptions::default()).unwrap()
}

const TASKS: [&str; 3] = ["x", "y", "z"];

fn schedule_strategy() -> impl Strategy<Value = TaskSchedule> {
    prop::collection::vec(0usize..3, 1..12).prop_map(|s| TaskSchedule::pipelined(&s.iter().map(|&i| TASKS[i]).collect::<Vec<_>>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_skipping_never_costs_more(schedule in schedule_strategy(), s in prop::collection::vec(0.0f64..0.95, 9)) {
        let p = profiles(&TASKS, &s, SparsitySource::Relu);
        let dense = run(InferenceCase::DenseBaseline, &schedule, &p);
        let skip = run(InferenceCase::ZeroSkipBaseline, &schedule, &p);
        for (d, z) in dense.iter().zip(&skip) {
            prop_assert!(z.energy.total <= d.energy.total);
            prop_assert!(z.effective_macs <= z.dense_macs);
            for e in [z.energy.e_dram, z.energy.e_cache, z.energy.e_reg, z.energy.e_mac] {
                prop_assert!(e >= 0.0);
            }
            prop_assert_eq!(z.energy.total, z.energy.e_dram + z.energy.e_cache + z.energy.e_reg + z.energy.e_mac);
        }
    }

    #[test]
    fn mime_weight_traffic_ignores_task_switches(
        order in prop::collection::vec(0usize..3, 2..12),
        s in prop::collection::vec(0.0f64..0.95, 9),
    ) {
        let p = profiles(&TASKS, &s, SparsitySource::Mime);
        let mixed = TaskSchedule::pipelined(&order.iter().map(|&i| TASKS[i]).collect::<Vec<_>>());
        let mut sorted_order = order.clone();
        sorted_order.sort();
        let sorted = TaskSchedule::pipelined(&sorted_order.iter().map(|&i| TASKS[i]).collect::<Vec<_>>());
        prop_assert!(sorted.task_switches() <= mixed.task_switches());
        let a = run(InferenceCase::Mime, &mixed, &p);
        let b = run(InferenceCase::Mime, &sorted, &p);
        let ca = run(InferenceCase::ZeroSkipBaseline, &mixed, &p);
        let cb = run(InferenceCase::ZeroSkipBaseline, &sorted, &p);
        for i in 0..a.len() {
            prop_assert_eq!(a[i].traffic.dram_w, b[i].traffic.dram_w);
            prop_assert!(ca[i].traffic.dram_w >= cb[i].traffic.dram_w);
        }
    }

    #[test]
    fn mime_wins_on_interleaved_schedules_when_weights_dominate(k in 3usize..10, s in prop::collection::vec(0.0f64..0.9, 9), extra in 0.0f64..0.1) {
        // Every image switches task, so conventional inference reloads weights k times.
        let order: Vec<&str> = (0..k).map(|i| TASKS[i % 3]).collect();
        let schedule = TaskSchedule::pipelined(&order);
        let relu = profiles(&TASKS, &s, SparsitySource::Relu);
        let boosted: Vec<f64> = s.iter().map(|v| (v + extra).min(0.95)).collect();
        let mime = profiles(&TASKS, &boosted, SparsitySource::Mime);
        let spec = cost_net();
        let c2 = run(InferenceCase::ZeroSkipBaseline, &schedule, &relu);
        let c3 = run(InferenceCase::Mime, &schedule, &mime);
        for (i, (a, b)) in c2.iter().zip(&c3).enumerate() {
            let l = &spec.layers[i];
            if l.n_weights() > 2 * l.n_outputs() {
                prop_assert!(b.energy.total <= a.energy.total, "layer {}", l.name);
            }
        }
    }
}

proptest! {
    #[test]
    fn degenerate_and_pruned_cases_coincide(
        s in 0.0f64..0.95,
        images in 1u64..5,
        cold in any::<bool>(),
        idx in 0usize..3,
    ) {
        let spec = cost_net();
        let l = &spec.layers[idx];
        let hw = HardwareConfig::default();
        let residency = if cold { Residency::Cold } else { Residency::Warm };
        let q = |case, s, thr| TrafficQuery { case, sparsity_in: s, sparsity_out: s, residency, threshold_needed: thr, images };
        let mask_free = layer_traffic(l, &hw, &q(InferenceCase::Mime, 0.0, false)).unwrap();
        let dense = layer_traffic(l, &hw, &q(InferenceCase::DenseBaseline, s, false)).unwrap();
        prop_assert_eq!(mask_free, dense);
        let pruned = layer_traffic(l, &hw, &q(InferenceCase::PrunedBaseline { weight_sparsity: 0.0 }, s, false)).unwrap();
        let skip = layer_traffic(l, &hw, &q(InferenceCase::ZeroSkipBaseline, s, false)).unwrap();
        prop_assert_eq!(pruned, skip);
    }

    #[test]
    fn singular_per_image_traffic_is_additive(k in 1u64..20, s in 0.0f64..0.95, idx in 0usize..3) {
        let spec = cost_net();
        let l = &spec.layers[idx];
        let hw = HardwareConfig::default();
        let q = |images| TrafficQuery {
            case: InferenceCase::Mime, sparsity_in: s, sparsity_out: s,
            residency: Residency::Cold, threshold_needed: true, images,
        };
        let one = layer_traffic(l, &hw, &q(1)).unwrap();
        let many = layer_traffic(l, &hw, &q(k)).unwrap();
        let kf = k as f64;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        prop_assert_eq!(many.dram_w, one.dram_w);
        for (a, b) in [
            (many.dram_t, one.dram_t), (many.dram_act_out, one.dram_act_out), (many.cache_w, one.cache_w),
            (many.cache_t, one.cache_t), (many.cache_act, one.cache_act), (many.reg_accesses, one.reg_accesses),
            (many.macs, one.macs), (many.cmp_ops, one.cmp_ops),
        ] {
            prop_assert!(close(a, kf * b), "{a} vs {kf} * {b}");
        }
        prop_assert!(many.dram_act_in >= kf * one.dram_act_in);
    }
}
