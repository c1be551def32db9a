//! The three convolutional cores, at paper scale and at a tiny desk scale.
//!
//! Every network is `core -> global average pool -> dropout -> dense(34)`,
//! followed by the (1, 100) concentration squash applied in `forward`.

use rand::Rng;

use super::graph::{Builder, Family, NetworkDescription, Preset};
use super::params::ParameterSet;
use crate::dirichlet::{CONCENTRATION_MAX, CONCENTRATION_MIN};
use crate::error::{Error, Result};
use crate::image::CROP_SIDE;
use crate::scalar::Scalar;
use crate::schema::DecisionTreeSchema;
use crate::seed;

pub const DEFAULT_DROPOUT: f64 = 0.2;
const BN_EPS: f64 = 1e-3;
const BN_MOMENTUM: f64 = 0.9;

/// Build a network and its deterministically initialized parameters.
pub fn build_model<T: Scalar>(
    family: Family,
    preset: Preset,
    schema: &DecisionTreeSchema,
    dropout_rate: f64,
    seed_value: u64,
) -> Result<(NetworkDescription, ParameterSet<T>)> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {dropout_rate} not in [0, 1)"
        )));
    }
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::stream::INIT]));
    let mut b = Builder::<T, _>::new(&mut rng, CROP_SIDE);
    let features = match (family, preset) {
        (Family::Residual, Preset::Paper) => residual(&mut b, &ResidualSpec::PAPER),
        (Family::Residual, Preset::Tiny) => residual(&mut b, &ResidualSpec::TINY),
        (Family::DenseConnect, Preset::Paper) => dense_connect(&mut b, &DenseSpec::PAPER),
        (Family::DenseConnect, Preset::Tiny) => dense_connect(&mut b, &DenseSpec::TINY),
        (Family::CompoundScaled, Preset::Paper) => compound_scaled(&mut b, &CompoundSpec::PAPER),
        (Family::CompoundScaled, Preset::Tiny) => compound_scaled(&mut b, &CompoundSpec::TINY),
    };
    let pooled = b.global_avg_pool("head.pool", features);
    let dropped = b.dropout("head.dropout", pooled);
    let output = b.dense("head.dense", dropped, schema.total_answers());
    let Builder { nodes, params, .. } = b;
    Ok((
        NetworkDescription {
            family,
            preset,
            dropout_rate,
            seed: seed_value,
            input_side: CROP_SIDE,
            bn_eps: BN_EPS,
            bn_momentum: BN_MOMENTUM,
            concentration_range: (CONCENTRATION_MIN, CONCENTRATION_MAX),
            nodes,
            output,
        },
        params,
    ))
}

/// Input downsampling by average pooling ahead of the stem (1 = none).
fn stem_input<T: Scalar, R: Rng>(b: &mut Builder<T, R>, input_pool: usize) -> usize {
    if input_pool > 1 {
        b.avgpool("stem.input_pool", 0, input_pool)
    } else {
        0
    }
}

struct ResidualSpec {
    input_pool: usize,
    stem_width: usize,
    stem_kernel: usize,
    /// (bottleneck width, output width, blocks, first-block stride)
    stages: &'static [(usize, usize, usize, usize)],
}

impl ResidualSpec {
    // 50-layer bottleneck stack.
    const PAPER: Self = Self {
        input_pool: 1,
        stem_width: 64,
        stem_kernel: 7,
        stages: &[(64, 256, 3, 1), (128, 512, 4, 2), (256, 1024, 6, 2), (512, 2048, 3, 2)],
    };
    const TINY: Self = Self {
        input_pool: 2,
        stem_width: 16,
        stem_kernel: 3,
        stages: &[(8, 32, 2, 1), (16, 64, 2, 2), (32, 128, 2, 2)],
    };
}

fn residual<T: Scalar, R: Rng>(b: &mut Builder<T, R>, spec: &ResidualSpec) -> usize {
    let x = stem_input(b, spec.input_pool);
    let x = b.conv("stem.conv", x, spec.stem_width, spec.stem_kernel, 2, true);
    let x = b.bn("stem.bn", x);
    let x = b.relu(x);
    let mut x = b.maxpool("stem.pool", x, 3, 2, 1);
    for (s, &(width, out, blocks, stride)) in spec.stages.iter().enumerate() {
        for blk in 0..blocks {
            let p = format!("stage{}.block{blk}", s + 1);
            let stride = if blk == 0 { stride } else { 1 };
            let shortcut = if blk == 0 {
                let sc = b.conv(&format!("{p}.proj"), x, out, 1, stride, true);
                b.bn(&format!("{p}.proj_bn"), sc)
            } else {
                x
            };
            let y = b.conv(&format!("{p}.conv1"), x, width, 1, stride, true);
            let y = b.bn(&format!("{p}.bn1"), y);
            let y = b.relu(y);
            let y = b.conv(&format!("{p}.conv2"), y, width, 3, 1, true);
            let y = b.bn(&format!("{p}.bn2"), y);
            let y = b.relu(y);
            let y = b.conv(&format!("{p}.conv3"), y, out, 1, 1, true);
            let y = b.bn(&format!("{p}.bn3"), y);
            let y = b.add(&format!("{p}.add"), y, shortcut);
            x = b.relu(y);
        }
    }
    x
}

struct DenseSpec {
    input_pool: usize,
    stem_width: usize,
    stem_kernel: usize,
    growth: usize,
    layers: &'static [usize],
}

impl DenseSpec {
    // 121-layer densely connected network.
    const PAPER: Self = Self {
        input_pool: 1,
        stem_width: 64,
        stem_kernel: 7,
        growth: 32,
        layers: &[6, 12, 24, 16],
    };
    const TINY: Self = Self {
        input_pool: 2,
        stem_width: 24,
        stem_kernel: 3,
        growth: 12,
        layers: &[3, 3, 3],
    };
}

fn transition<T: Scalar, R: Rng>(b: &mut Builder<T, R>, name: &str, x: usize) -> usize {
    let c = b.shape(x).0;
    let y = b.bn(&format!("{name}.bn"), x);
    let y = b.relu(y);
    let y = b.conv(&format!("{name}.conv"), y, c / 2, 1, 1, false);
    b.avgpool(&format!("{name}.pool"), y, 2)
}

fn dense_connect<T: Scalar, R: Rng>(b: &mut Builder<T, R>, spec: &DenseSpec) -> usize {
    let x = stem_input(b, spec.input_pool);
    let x = b.conv("stem.conv", x, spec.stem_width, spec.stem_kernel, 2, false);
    let x = b.bn("stem.bn", x);
    let x = b.relu(x);
    let mut x = b.maxpool("stem.pool", x, 3, 2, 1);
    for (s, &layers) in spec.layers.iter().enumerate() {
        if s > 0 {
            x = transition(b, &format!("transition{}", s + 1), x);
        }
        for l in 0..layers {
            let p = format!("block{}.layer{l}", s + 1);
            let y = b.bn(&format!("{p}.bn1"), x);
            let y = b.relu(y);
            let y = b.conv(&format!("{p}.conv1"), y, 4 * spec.growth, 1, 1, false);
            let y = b.bn(&format!("{p}.bn2"), y);
            let y = b.relu(y);
            let y = b.conv(&format!("{p}.conv2"), y, spec.growth, 3, 1, false);
            x = b.concat(&format!("{p}.concat"), vec![x, y]);
        }
    }
    let x = b.bn("final.bn", x);
    b.relu(x)
}

struct CompoundSpec {
    input_pool: usize,
    stem_width: usize,
    /// (expansion, kernel, first-block stride, output width, repeats)
    stages: &'static [(usize, usize, usize, usize, usize)],
    head_width: usize,
}

impl CompoundSpec {
    // B0 baseline of the compound-scaled family.
    const PAPER: Self = Self {
        input_pool: 1,
        stem_width: 32,
        stages: &[
            (1, 3, 1, 16, 1),
            (6, 3, 2, 24, 2),
            (6, 5, 2, 40, 2),
            (6, 3, 2, 80, 3),
            (6, 5, 1, 112, 3),
            (6, 5, 2, 192, 4),
            (6, 3, 1, 320, 1),
        ],
        head_width: 1280,
    };
    // The expansion-1 block downsamples along with the two expanding stages.
    const TINY: Self = Self {
        input_pool: 2,
        stem_width: 16,
        stages: &[(1, 3, 2, 16, 1), (6, 3, 2, 24, 2), (6, 5, 2, 48, 2)],
        head_width: 256,
    };
}

/// Mobile inverted bottleneck with squeeze-and-excitation (ratio 1/4 of the block input).
fn mbconv<T: Scalar, R: Rng>(
    b: &mut Builder<T, R>,
    name: &str,
    x: usize,
    expand: usize,
    k: usize,
    stride: usize,
    cout: usize,
) -> usize {
    let cin = b.shape(x).0;
    let mut y = x;
    if expand != 1 {
        y = b.conv(&format!("{name}.expand"), y, cin * expand, 1, 1, false);
        y = b.bn(&format!("{name}.expand_bn"), y);
        y = b.swish(y);
    }
    let y = b.depthwise(&format!("{name}.dw"), y, k, stride);
    let y = b.bn(&format!("{name}.dw_bn"), y);
    let y = b.swish(y);
    let wide = b.shape(y).0;
    let squeezed = (cin / 4).max(1);
    let s = b.global_avg_pool(&format!("{name}.se.pool"), y);
    let s = b.conv(&format!("{name}.se.reduce"), s, squeezed, 1, 1, true);
    let s = b.swish(s);
    let s = b.conv(&format!("{name}.se.expand"), s, wide, 1, 1, true);
    let s = b.sigmoid(s);
    let y = b.channel_scale(&format!("{name}.se.scale"), y, s);
    let y = b.conv(&format!("{name}.project"), y, cout, 1, 1, false);
    let y = b.bn(&format!("{name}.project_bn"), y);
    if stride == 1 && cin == cout {
        b.add(&format!("{name}.add"), y, x)
    } else {
        y
    }
}

fn compound_scaled<T: Scalar, R: Rng>(b: &mut Builder<T, R>, spec: &CompoundSpec) -> usize {
    let x = stem_input(b, spec.input_pool);
    let x = b.conv("stem.conv", x, spec.stem_width, 3, 2, false);
    let x = b.bn("stem.bn", x);
    let mut x = b.swish(x);
    for (s, &(expand, k, stride, cout, repeats)) in spec.stages.iter().enumerate() {
        for r in 0..repeats {
            let stride = if r == 0 { stride } else { 1 };
            x = mbconv(b, &format!("stage{}.block{r}", s + 1), x, expand, k, stride, cout);
        }
    }
    let x = b.conv("top.conv", x, spec.head_width, 1, 1, false);
    let x = b.bn("top.bn", x);
    b.swish(x)
}
