//! Architecture builders.
//!
//! All builders return a [`ModelSpec`]; call [`ModelSpec::build`] to get
//! initialized weights. The "desk" profiles keep the block structure of the
//! full architectures at a size that trains on a CPU in seconds.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{PoolMode, PoolOp};
use crate::zoo::spec::{LayerDesc, LayerKind, ModelSpec};

/// Input pixels arrive as 0..=255 and are mapped to 0..=1 by the first layer.
pub const INPUT_RESCALE: f32 = 1.0 / 255.0;

fn conv3(name: String, out_channels: usize) -> LayerDesc {
    LayerDesc::new(
        name,
        LayerKind::Conv2d {
            out_channels,
            kernel_h: 3,
            kernel_w: 3,
        },
    )
}

fn relu(name: String) -> LayerDesc {
    LayerDesc::new(name, LayerKind::Relu)
}

fn max_pool(name: String) -> LayerDesc {
    LayerDesc::new(name, LayerKind::Pool(PoolMode::new(PoolOp::Max)))
}

fn finish(name: &str, input: [usize; 3], classes: usize, layers: Vec<LayerDesc>) -> Result<ModelSpec> {
    let spec = ModelSpec {
        name: name.into(),
        input: input.to_vec(),
        classes,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

fn head(layers: &mut Vec<LayerDesc>, classes: usize) {
    layers.push(LayerDesc::new("head", LayerKind::Dense { units: classes }));
    layers.push(LayerDesc::new("softmax", LayerKind::Softmax));
}

/// Hidden dense width of the proposed model at `scale = 1`.
pub const PROPOSED_HIDDEN: usize = 32;
/// Conv widths of the proposed model at `scale = 1`.
pub const PROPOSED_WIDTHS: [usize; 3] = [8, 16, 32];

/// rescale -> 3 x [conv3x3 -> relu -> maxpool2] -> flatten -> dense -> relu -> dense(K) -> softmax.
pub fn proposed_cnn(input: [usize; 3], classes: usize, scale: usize) -> Result<ModelSpec> {
    let scale = scale.max(1);
    let mut layers = vec![LayerDesc::new("rescale", LayerKind::Rescale { factor: INPUT_RESCALE })];
    for (i, w) in PROPOSED_WIDTHS.iter().enumerate() {
        let b = i + 1;
        layers.push(conv3(format!("conv{b}"), w * scale));
        layers.push(relu(format!("relu{b}")));
        layers.push(max_pool(format!("pool{b}")));
    }
    layers.push(LayerDesc::new("flatten", LayerKind::Flatten));
    layers.push(LayerDesc::new("fc1", LayerKind::Dense { units: PROPOSED_HIDDEN * scale }));
    layers.push(relu("fc1_relu".into()));
    head(&mut layers, classes);
    finish("proposed", input, classes, layers)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VggProfile {
    /// Convolutions per block; a max-pool closes every block.
    pub blocks: Vec<usize>,
    pub base_width: usize,
    pub max_width: usize,
    pub dense_units: usize,
}

impl VggProfile {
    /// VGG-16: 13 convolutions in five blocks, two 4096-unit dense layers and the head.
    pub fn full() -> Self {
        Self {
            blocks: vec![2, 2, 3, 3, 3],
            base_width: 64,
            max_width: 512,
            dense_units: 4096,
        }
    }

    pub fn desk() -> Self {
        Self {
            blocks: vec![1, 1, 2],
            base_width: 4,
            max_width: 16,
            dense_units: 16,
        }
    }
}

/// Stacked 3x3 blocks with doubling widths, then two dense layers and the softmax head.
pub fn vgg_style(input: [usize; 3], classes: usize, profile: &VggProfile) -> Result<ModelSpec> {
    let mut layers = vec![LayerDesc::new("rescale", LayerKind::Rescale { factor: INPUT_RESCALE })];
    let mut width = profile.base_width;
    for (bi, &convs) in profile.blocks.iter().enumerate() {
        let b = bi + 1;
        for ci in 1..=convs {
            layers.push(conv3(format!("block{b}_conv{ci}"), width));
            layers.push(relu(format!("block{b}_relu{ci}")));
        }
        layers.push(max_pool(format!("block{b}_pool")));
        width = (width * 2).min(profile.max_width);
    }
    layers.push(LayerDesc::new("flatten", LayerKind::Flatten));
    for i in 1..=2 {
        layers.push(LayerDesc::new(format!("fc{i}"), LayerKind::Dense { units: profile.dense_units }));
        layers.push(relu(format!("fc{i}_relu")));
    }
    head(&mut layers, classes);
    finish("vgg_style", input, classes, layers)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualProfile {
    pub stem_width: usize,
    /// Width of each residual block, in order.
    pub blocks: Vec<usize>,
}

impl ResidualProfile {
    pub fn desk() -> Self {
        Self {
            stem_width: 8,
            blocks: vec![8, 16],
        }
    }

    /// Channel widths of the 16 bottleneck stages of ResNet-50.
    pub fn full() -> Self {
        let mut blocks = Vec::new();
        for (count, width) in [(3, 256), (4, 512), (6, 1024), (3, 2048)] {
            blocks.extend(std::iter::repeat_n(width, count));
        }
        Self { stem_width: 64, blocks }
    }
}

/// Conv stem, residual blocks each followed by ReLU, global average pool, dense(K), softmax.
pub fn residual_style(input: [usize; 3], classes: usize, profile: &ResidualProfile) -> Result<ModelSpec> {
    let mut layers = vec![
        LayerDesc::new("rescale", LayerKind::Rescale { factor: INPUT_RESCALE }),
        conv3("stem_conv".into(), profile.stem_width),
        relu("stem_relu".into()),
        max_pool("stem_pool".into()),
    ];
    for (i, &width) in profile.blocks.iter().enumerate() {
        let b = i + 1;
        layers.push(LayerDesc::new(format!("res{b}"), LayerKind::Residual { width }));
        layers.push(relu(format!("res{b}_relu")));
    }
    // validate the trunk to size the global pool
    let trunk = ModelSpec {
        name: "residual_style".into(),
        input: input.to_vec(),
        classes,
        layers: layers.clone(),
    };
    let dims = {
        let mut probe = trunk.clone();
        probe.layers.push(LayerDesc::new("flatten", LayerKind::Flatten));
        head(&mut probe.layers, classes);
        probe.validate()?
    };
    let trunk_out = &dims[layers.len() - 1];
    layers.push(LayerDesc::new(
        "global_pool",
        LayerKind::Pool(PoolMode {
            op: PoolOp::Average,
            window_h: trunk_out[1],
            window_w: trunk_out[2],
            stride: 1,
        }),
    ));
    layers.push(LayerDesc::new("flatten", LayerKind::Flatten));
    head(&mut layers, classes);
    finish("residual_style", input, classes, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn proposed_head_width_follows_classes() {
        let s = proposed_cnn([1, 32, 32], 2, 1).unwrap();
        assert_eq!(s.layers[s.layers.len() - 2].kind, LayerKind::Dense { units: 2 });
        assert_eq!(s.layers.last().unwrap().kind, LayerKind::Softmax);
        assert_eq!(s.layers[0].kind, LayerKind::Rescale { factor: INPUT_RESCALE });
    }

    #[test]
    fn proposed_rejects_tiny_input() {
        assert!(matches!(proposed_cnn([1, 12, 12], 2, 1), Err(Error::Build { .. })));
        assert!(proposed_cnn([1, 22, 22], 2, 1).is_ok());
    }

    #[test]
    fn full_vgg_has_thirteen_convs_and_three_dense() {
        let s = vgg_style([3, 224, 224], 1000, &VggProfile::full()).unwrap();
        assert_eq!(s.count(|k| matches!(k, LayerKind::Conv2d { .. })), 13);
        assert_eq!(s.count(|k| matches!(k, LayerKind::Dense { .. })), 3);
        assert_eq!(s.count(|k| matches!(k, LayerKind::Pool(_))), 5);
    }

    #[test]
    fn desk_vgg_keeps_block_structure() {
        let s = vgg_style([1, 64, 64], 2, &VggProfile::desk()).unwrap();
        assert_eq!(s.count(|k| matches!(k, LayerKind::Conv2d { .. })), 4);
        assert_eq!(s.count(|k| matches!(k, LayerKind::Dense { .. })), 3);
        assert!(vgg_style([1, 8, 8], 2, &VggProfile::desk()).is_err());
    }

    #[test]
    fn residual_zero_blocks_is_stem_plus_head() {
        let s = residual_style(
            [1, 16, 16],
            3,
            &ResidualProfile {
                stem_width: 4,
                blocks: vec![],
            },
        )
        .unwrap();
        let names: Vec<_> = s.layers.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(
            names,
            ["rescale", "stem_conv", "stem_relu", "stem_pool", "global_pool", "flatten", "head", "softmax"]
        );
        let dims = s.validate().unwrap();
        assert_eq!(dims[4], vec![4, 1, 1]);
    }

    #[test]
    fn full_residual_profile_has_sixteen_blocks() {
        assert_eq!(ResidualProfile::full().blocks.len(), 16);
    }
}
