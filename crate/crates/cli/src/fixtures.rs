//! Built-in networks and reference layerwise sparsity tables.

use mime_core::cost::ProfileSet;
use mime_core::mask::{LayerSparsity, SparsityProfile, SparsitySource};
use mime_core::{LayerShape, NetworkSpec, Result};

pub const VGG16_CIFAR: &str = "vgg16-cifar";
pub const DESK_CNN: &str = "desk-cnn";

/// Thirteen 3x3 convolutions at 32x32 input with stride 2 at the start of
/// blocks two to five, two hidden fc layers and a 10-way classifier.
/// Hidden layers are named `conv1`..`conv15` to match the reference tables.
pub fn vgg16_cifar() -> NetworkSpec {
    // (c_in, c_out, input side, stride)
    const CONVS: [(usize, usize, usize, usize); 13] = [
        (3, 64, 32, 1),
        (64, 64, 32, 1),
        (64, 128, 32, 2),
        (128, 128, 16, 1),
        (128, 256, 16, 2),
        (256, 256, 8, 1),
        (256, 256, 8, 1),
        (256, 512, 8, 2),
        (512, 512, 4, 1),
        (512, 512, 4, 1),
        (512, 512, 4, 2),
        (512, 512, 2, 1),
        (512, 512, 2, 1),
    ];
    let mut layers: Vec<LayerShape> = CONVS
        .iter()
        .enumerate()
        .map(|(i, &(ci, co, side, stride))| {
            LayerShape::conv(format!("conv{}", i + 1), ci, side, side, co, 3, stride, 1)
        })
        .collect();
    layers.push(LayerShape::fc("conv14", 512 * 2 * 2, 512));
    layers.push(LayerShape::fc("conv15", 512, 512));
    layers.push(LayerShape::fc("classifier", 512, 10));
    NetworkSpec::new(layers, 10).expect("fixture geometry is valid")
}

/// Small parent network for the built-in synthetic 1x8x8 tasks.
pub fn desk_cnn(classes: usize) -> Result<NetworkSpec> {
    NetworkSpec::new(
        vec![
            LayerShape::conv("conv1", 1, 8, 8, 8, 3, 1, 1),
            LayerShape::conv("conv2", 8, 8, 8, 16, 3, 2, 1),
            LayerShape::fc("fc1", 256, 32),
            LayerShape::fc("classifier", 32, classes),
        ],
        classes,
    )
}

pub fn network_fixture(name: &str) -> Option<NetworkSpec> {
    match name {
        VGG16_CIFAR => Some(vgg16_cifar()),
        DESK_CNN => desk_cnn(4).ok(),
        _ => None,
    }
}

/// Layers with tabulated values, in table order.
pub const PUBLISHED_LAYERS: [&str; 11] = [
    "conv2", "conv4", "conv5", "conv7", "conv8", "conv9", "conv10", "conv12", "conv13", "conv14", "conv15",
];

pub const FIXTURE_TASKS: [&str; 3] = ["cifar10", "cifar100", "fmnist"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublishedRow {
    pub task: &'static str,
    pub accuracy: &'static str,
    pub sparsity: [&'static str; 11],
}

pub const MIME_TABLE: [PublishedRow; 3] = [
    PublishedRow {
        task: "cifar10",
        accuracy: "83.57",
        sparsity: ["0.6493", "0.6081", "0.6587", "0.6203", "0.6233", "0.6449", "0.6679", "0.6477", "0.6553", "0.6855", "0.657"],
    },
    PublishedRow {
        task: "cifar100",
        accuracy: "59.42",
        sparsity: ["0.6522", "0.5951", "0.6373", "0.6100", "0.6121", "0.6279", "0.6580", "0.6374", "0.6388", "0.6703", "0.6571"],
    },
    PublishedRow {
        task: "fmnist",
        accuracy: "88.36",
        sparsity: ["0.6075", "0.5634", "0.6138", "0.5991", "0.5959", "0.6017", "0.6204", "0.6014", "0.6125", "0.6138", "0.6287"],
    },
];

pub const RELU_TABLE: [PublishedRow; 3] = [
    PublishedRow {
        task: "cifar10",
        accuracy: "84.25",
        sparsity: ["0.4983", "0.4506", "0.5390", "0.5015", "0.5097", "0.5341", "0.5635", "0.5358", "0.5420", "0.5627", "0.5608"],
    },
    PublishedRow {
        task: "cifar100",
        accuracy: "60.55",
        sparsity: ["0.5030", "0.4586", "0.5399", "0.5069", "0.5129", "0.5333", "0.5633", "0.5345", "0.5449", "0.5842", "0.6002"],
    },
    PublishedRow {
        task: "fmnist",
        accuracy: "90.12",
        sparsity: ["0.5114", "0.4796", "0.5488", "0.5230", "0.5260", "0.5329", "0.5503", "0.5280", "0.5343", "0.5507", "0.5820"],
    },
];

pub fn table(source: SparsitySource) -> &'static [PublishedRow; 3] {
    match source {
        SparsitySource::Mime => &MIME_TABLE,
        SparsitySource::Relu => &RELU_TABLE,
    }
}

fn layer_number(name: &str) -> Option<i64> {
    name.strip_prefix("conv").and_then(|n| n.parse().ok())
}

/// Reference profiles keyed by task. With `interpolate_for`, hidden layers of
/// that network without a tabulated value take the value of the nearest
/// tabulated layer (ties go to the earlier one); these carry no source text.
pub fn fixture_profiles(source: SparsitySource, interpolate_for: Option<&NetworkSpec>) -> Result<ProfileSet> {
    table(source)
        .iter()
        .map(|row| {
            let mut layers = PUBLISHED_LAYERS
                .iter()
                .zip(row.sparsity)
                .map(|(label, text)| LayerSparsity::from_decimal(*label, text))
                .collect::<Result<Vec<_>>>()?;
            if let Some(spec) = interpolate_for {
                let published = layers.clone();
                let mut filled = Vec::new();
                for l in spec.hidden() {
                    if let Some(p) = published.iter().find(|p| p.label == l.name) {
                        filled.push(p.clone());
                        continue;
                    }
                    let Some(n) = layer_number(&l.name) else { continue };
                    let nearest = published
                        .iter()
                        .filter_map(|p| layer_number(&p.label).map(|m| ((m - n).abs(), m, p)))
                        .min_by_key(|&(d, m, _)| (d, m))
                        .map(|(_, _, p)| p.value);
                    if let Some(v) = nearest {
                        filled.push(LayerSparsity::new(l.name.clone(), v));
                    }
                }
                layers = filled;
            }
            Ok((
                row.task.to_string(),
                SparsityProfile {
                    task_id: row.task.to_string(),
                    source,
                    layers,
                },
            ))
        })
        .collect()
}
