use mime_core::cost::{
    energy_layer, layer_traffic, passes, HardwareConfig, InferenceCase, LayerTraffic, Residency, TrafficQuery,
    WeightReuse,
};
use mime_core::LayerShape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Walks the output-stationary schedule pass by pass.
fn count_passes(l: &LayerShape, pe: u64, images: u64) -> u64 {
    let c_out = l.c_out as u64;
    let lanes = c_out.min(pe);
    let per_pass = (pe / lanes).max(1);
    let positions = (l.h_out() * l.w_out()) as u64;
    let mut n = 0;
    for _ in 0..images {
        let mut ch = 0;
        while ch < c_out {
            let mut pos = 0;
            while pos < positions {
                n += 1;
                pos += per_pass;
            }
            ch += lanes;
        }
    }
    n
}

/// Greedily fills the weight cache one output channel at a time.
fn count_weight_tiles(l: &LayerShape, cache_words: u64) -> u64 {
    let per = (l.n_weights() / l.c_out) as u64;
    let (mut tiles, mut used) = (0, 0);
    for _ in 0..l.c_out {
        if used == 0 || used + per > cache_words {
            tiles += 1;
            used = 0;
        }
        used += per;
    }
    tiles
}

fn oracle(l: &LayerShape, hw: &HardwareConfig, q: &TrafficQuery) -> LayerTraffic {
    let k = q.images as f64;
    let (s_in, s_out) = if q.case == InferenceCase::DenseBaseline { (0.0, 0.0) } else { (q.sparsity_in, q.sparsity_out) };
    let wsp = q.case.weight_sparsity();
    let n_w = l.n_weights() as f64;
    let kk = (l.k_h * l.k_w) as f64;
    let nz_in = l.n_inputs() as f64 * (1.0 - s_in);
    let nz_out = l.n_outputs() as f64 * (1.0 - s_out);
    let lanes = (l.c_out as u64).min(hw.pe_count);
    let spatial_tiles = ((l.h_out() * l.w_out()) as u64).div_ceil((hw.pe_count / lanes).max(1));
    let tiles = count_weight_tiles(l, hw.cache_bytes_weight / hw.bytes_per_word);
    let mut t = LayerTraffic::default();
    if q.residency == Residency::Cold {
        t.dram_w = n_w;
    }
    for _img in 0..q.images {
        for _ in 0..spatial_tiles {
            t.cache_w += n_w;
        }
        for _ in 0..tiles {
            t.cache_act += nz_in * kk;
        }
        t.dram_act_out += nz_out;
        let mut macs = 0.0;
        for _o in 0..l.n_outputs() {
            for _c in 0..l.c_in {
                macs += kk;
            }
        }
        t.macs += macs * (1.0 - s_in) * (1.0 - wsp);
        if q.threshold_needed {
            t.dram_t += l.n_outputs() as f64;
            t.cache_t += l.n_outputs() as f64;
            t.cmp_ops += l.n_outputs() as f64;
        }
    }
    // Input refetch: once per episode, or once per weight tile when the
    // episode's nonzero inputs overflow the activation cache.
    let bytes = nz_in * k * hw.bytes_per_word as f64;
    let mut spill = 1.0;
    while spill < tiles as f64 && spill * (hw.cache_bytes_activation as f64) < bytes {
        spill += 1.0;
    }
    t.dram_act_in = k * nz_in * spill;
    t.reg_accesses = 3.0 * t.macs + 2.0 * t.cmp_ops;
    t
}

fn random_layer(rng: &mut ChaCha8Rng) -> LayerShape {
    if rng.random_bool(0.3) {
        LayerShape::fc("f", rng.random_range(1..2048), rng.random_range(1..1024))
    } else {
        let side = [2, 4, 7, 8, 16, 32][rng.random_range(0..6)];
        let k = [1, 3][rng.random_range(0..2)];
        LayerShape::conv("c", rng.random_range(1..512), side, side, rng.random_range(1..700), k, rng.random_range(1..=2), k / 2)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn tiled_counts_match_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let l = random_layer(&mut rng);
        let hw = HardwareConfig::default()
            .with_pe([16, 64, 256, 1024][rng.random_range(0..4)])
            .with_cache_kb([1, 8, 64, 156][rng.random_range(0..4)]);
        let case = match rng.random_range(0..4) {
            0 => InferenceCase::DenseBaseline,
            1 => InferenceCase::ZeroSkipBaseline,
            2 => InferenceCase::Mime,
            _ => InferenceCase::PrunedBaseline { weight_sparsity: rng.random_range(0.0..0.95) },
        };
        let s = rng.random_range(0.0..0.9);
        let q = TrafficQuery {
            case,
            sparsity_in: s,
            sparsity_out: rng.random_range(0.0..0.9),
            residency: if rng.random_bool(0.5) { Residency::Cold } else { Residency::Warm },
            threshold_needed: case == InferenceCase::Mime,
            images: rng.random_range(1..6),
        };
        let got = layer_traffic(&l, &hw, &q).unwrap();
        let want = oracle(&l, &hw, &q);
        let fields = |t: &LayerTraffic| {
            [t.dram_w, t.dram_t, t.dram_act_in, t.dram_act_out, t.cache_w, t.cache_t, t.cache_act, t.reg_accesses, t.macs, t.cmp_ops]
        };
        for (i, (a, b)) in fields(&got).iter().zip(fields(&want)).enumerate() {
            assert!(close(*a, b), "field {i} of {l:?} under {q:?}: {a} vs {b}");
        }
        assert_eq!(passes(&l, &hw, q.images), count_passes(&l, hw.pe_count, q.images));
        let e = energy_layer(&got, &hw);
        let direct = 200.0 * got.dram_words() + 6.0 * got.cache_words() + 2.0 * got.reg_accesses + got.macs + got.cmp_ops;
        assert!(close(e.total, direct));
        assert!(close(e.total, e.e_dram + e.e_cache + e.e_reg + e.e_mac));
    }
}

#[test]
fn streaming_weights_match_pass_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let l = random_layer(&mut rng);
        let mut hw = HardwareConfig::default().with_cache_kb([4, 32, 156][rng.random_range(0..3)]);
        hw.weight_reuse = WeightReuse::PerPassStreaming;
        let images = rng.random_range(1..4);
        for residency in [Residency::Cold, Residency::Warm] {
            let q = TrafficQuery {
                case: InferenceCase::ZeroSkipBaseline,
                sparsity_in: 0.3,
                sparsity_out: 0.3,
                residency,
                threshold_needed: false,
                images,
            };
            let got = layer_traffic(&l, &hw, &q).unwrap();
            let cache = (hw.cache_bytes_weight / hw.bytes_per_word) as f64;
            let n_w = l.n_weights() as f64;
            let mut words = 0.0;
            for p in 0..count_passes(&l, hw.pe_count, images) {
                // The resident part survives between passes; the rest streams.
                words += if p == 0 && residency == Residency::Cold { n_w } else { (n_w - cache).max(0.0) };
            }
            assert!(close(got.dram_w, words), "{l:?}: {} vs {words}", got.dram_w);
        }
    }
}
