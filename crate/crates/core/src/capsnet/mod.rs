//! The capsule network classifier.
//!
//! Architecture: convolution (ReLU optional) -> primary capsule layer
//! (convolution, capsule regrouping, squash) -> class capsule layer
//! (per-pair affine predictions, dynamic routing with 3 iterations) ->
//! length layer. Each class capsule's length is its match probability;
//! there is no decoder and lengths are not normalized across classes.
//!
//! For differentiation, the coupling coefficients from the final routing
//! iteration are constants: gradients flow through the last
//! coupling-weighted sum and squash only.

pub mod optim;
pub mod routing;

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pdb::CHANNEL_COUNT;
use crate::tensor::cwts;
use crate::tensor::{ConvSpec, Tape, Tensor, TensorError, Var};
use crate::voxel::VoxelGrid;

pub use optim::{RmsProp, RmsPropConfig};
pub use routing::{dynamic_routing, dynamic_routing_traced, squash, RoutingOutcome};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub use crate::voxel::Mode;

/// Loss function identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "categorical_hinge")]
    CategoricalHinge,
    #[serde(rename = "logcosh")]
    LogCosh,
}

impl LossKind {
    pub fn parse(s: &str) -> Option<LossKind> {
        match s {
            "categorical_hinge" => Some(LossKind::CategoricalHinge),
            "logcosh" => Some(LossKind::LogCosh),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::CategoricalHinge => "categorical_hinge",
            LossKind::LogCosh => "logcosh",
        }
    }
}

fn default_stride() -> usize {
    8
}
fn default_routing_iterations() -> usize {
    3
}
fn default_primary_maps() -> usize {
    8
}
fn default_n_classes() -> usize {
    2
}
fn default_relu() -> bool {
    true
}

/// Tunable architecture knobs. Stride defaults to 8 and applies to both
/// convolutional stages; routing runs 3 iterations unless overridden.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub filters: usize,
    pub kernel_size: usize,
    pub primarycap_dim: usize,
    pub voxelcap_dim: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_routing_iterations")]
    pub routing_iterations: usize,
    #[serde(default = "default_primary_maps")]
    pub primary_maps: usize,
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
    #[serde(default = "default_relu")]
    pub relu: bool,
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("filters", self.filters),
            ("kernel_size", self.kernel_size),
            ("primarycap_dim", self.primarycap_dim),
            ("voxelcap_dim", self.voxelcap_dim),
            ("stride", self.stride),
            ("routing_iterations", self.routing_iterations),
            ("primary_maps", self.primary_maps),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.n_classes < 2 {
            return Err(ModelError::Config("n_classes must be at least 2".into()));
        }
        Ok(())
    }
}

/// A named training preset: dataset-specific loss and hyperparameters.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub mode: Mode,
    pub loss: LossKind,
    pub hyperparameters: Hyperparameters,
}

pub const PRESET_NAMES: [&str; 4] = [
    "2d-kras-hras",
    "3d-kras-hras",
    "2d-psi-blast",
    "3d-psi-blast",
];

/// Look up one of the four named presets.
pub fn preset(name: &str) -> Option<Preset> {
    let base = |filters, kernel_size, primarycap_dim, voxelcap_dim| Hyperparameters {
        filters,
        kernel_size,
        primarycap_dim,
        voxelcap_dim,
        stride: default_stride(),
        routing_iterations: default_routing_iterations(),
        primary_maps: default_primary_maps(),
        n_classes: default_n_classes(),
        relu: default_relu(),
    };
    let preset = match name {
        "2d-kras-hras" => Preset {
            name: "2d-kras-hras",
            mode: Mode::D2,
            loss: LossKind::CategoricalHinge,
            hyperparameters: base(64, 9, 32, 64),
        },
        "3d-kras-hras" => Preset {
            name: "3d-kras-hras",
            mode: Mode::D3,
            loss: LossKind::CategoricalHinge,
            hyperparameters: base(128, 7, 32, 64),
        },
        "2d-psi-blast" => Preset {
            name: "2d-psi-blast",
            mode: Mode::D2,
            loss: LossKind::LogCosh,
            hyperparameters: base(512, 5, 16, 32),
        },
        "3d-psi-blast" => Preset {
            name: "3d-psi-blast",
            mode: Mode::D3,
            loss: LossKind::LogCosh,
            hyperparameters: base(64, 5, 16, 32),
        },
        _ => return None,
    };
    Some(preset)
}

/// Spatial/capsule shapes of an instantiated model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerShapes {
    pub input: Vec<usize>,
    pub conv_output: Vec<usize>,
    pub primary_output: Vec<usize>,
    /// [number of primary capsules, capsule dim]
    pub primary_capsules: [usize; 2],
    /// [number of class capsules, capsule dim]
    pub class_capsules: [usize; 2],
}

/// Per-class capsule vectors and their lengths for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationVectors {
    /// One voxelcap_dim vector per class.
    pub vectors: Vec<Vec<f64>>,
    /// Euclidean norms of the vectors, each strictly below 1.
    pub lengths: Vec<f64>,
}

impl ActivationVectors {
    /// Argmax over lengths; ties break toward the lower class index.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0usize;
        for (k, &l) in self.lengths.iter().enumerate() {
            if l > self.lengths[best] {
                best = k;
            }
        }
        best
    }
}

/// Categorical hinge on class scores:
/// max(0, 1 + best incorrect score - correct score).
pub fn categorical_hinge_loss(lengths: &[f64], true_class: usize) -> f64 {
    let mut tape = Tape::new();
    let v = tape
        .leaf(Tensor::from_vec(&[lengths.len()], lengths.to_vec()).expect("shape matches data"));
    let loss = tape.hinge_loss(v, true_class).expect("valid scores");
    tape.value(loss).item()
}

/// Sum over classes of log(cosh(score - target)) against a one-hot target.
pub fn logcosh_loss(lengths: &[f64], target_one_hot: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let v = tape
        .leaf(Tensor::from_vec(&[lengths.len()], lengths.to_vec()).expect("shape matches data"));
    let target =
        Tensor::from_vec(&[target_one_hot.len()], target_one_hot.to_vec()).expect("shape");
    let loss = tape.logcosh_loss(v, &target).expect("valid scores");
    tape.value(loss).item()
}

/// Convert a voxel grid into the model input tensor [channels, spatial...].
pub fn grid_tensor(grid: &VoxelGrid) -> Tensor {
    let mut shape = vec![CHANNEL_COUNT];
    shape.extend(grid.extents());
    let data = grid.data().iter().map(|&v| v as f64).collect();
    Tensor::from_vec(&shape, data).expect("grid data matches its extents")
}

/// Number of parameter tensors (fixed order: conv weight/bias, primary
/// weight/bias, routing weight).
pub const PARAM_COUNT: usize = 5;

const PARAM_NAMES: [&str; PARAM_COUNT] = [
    "conv.weight",
    "conv.bias",
    "primary.weight",
    "primary.bias",
    "routing.weight",
];

/// The classifier: architecture plus learned parameters, built for a fixed
/// input extent.
#[derive(Debug, Clone, PartialEq)]
pub struct CapsNetModel {
    hp: Hyperparameters,
    mode: Mode,
    input_extent: usize,
    conv_spec: ConvSpec,
    primary_spec: ConvSpec,
    num_primary: usize,
    params: [Tensor; PARAM_COUNT],
}

impl CapsNetModel {
    /// Build a model with seeded Glorot-uniform weights and zero biases.
    pub fn new(
        hp: Hyperparameters,
        mode: Mode,
        input_extent: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        hp.validate()?;
        let rank = mode.spatial_rank();
        let conv_spec = ConvSpec::new(CHANNEL_COUNT, hp.filters, hp.kernel_size, hp.stride)?;
        let conv_out = conv_spec.output_extent(input_extent)?;
        // Primary conv keeps the configured stride unless the feature map is
        // already smaller than it.
        let primary_stride = if conv_out < hp.stride { 1 } else { hp.stride };
        let primary_spec = ConvSpec::new(
            hp.filters,
            hp.primary_maps * hp.primarycap_dim,
            hp.kernel_size,
            primary_stride,
        )?;
        let primary_out = primary_spec.output_extent(conv_out)?;
        let num_primary = hp.primary_maps * primary_out.pow(rank as u32);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernel_cells = hp.kernel_size.pow(rank as u32);
        let conv_weight = glorot(
            &mut rng,
            &conv_spec.weight_shape(rank),
            CHANNEL_COUNT * kernel_cells,
            hp.filters * kernel_cells,
        );
        let conv_bias = Tensor::zeros(&[hp.filters]);
        let primary_weight = glorot(
            &mut rng,
            &primary_spec.weight_shape(rank),
            hp.filters * kernel_cells,
            hp.primary_maps * hp.primarycap_dim * kernel_cells,
        );
        let primary_bias = Tensor::zeros(&[hp.primary_maps * hp.primarycap_dim]);
        let routing_weight = glorot(
            &mut rng,
            &[num_primary, hp.n_classes, hp.voxelcap_dim, hp.primarycap_dim],
            hp.primarycap_dim,
            hp.voxelcap_dim,
        );

        Ok(Self {
            hp,
            mode,
            input_extent,
            conv_spec,
            primary_spec,
            num_primary,
            params: [
                conv_weight,
                conv_bias,
                primary_weight,
                primary_bias,
                routing_weight,
            ],
        })
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn input_extent(&self) -> usize {
        self.input_extent
    }

    /// Expected input tensor shape.
    pub fn input_shape(&self) -> Vec<usize> {
        let mut shape = vec![CHANNEL_COUNT];
        shape.extend(std::iter::repeat(self.input_extent).take(self.mode.spatial_rank()));
        shape
    }

    pub fn layer_shapes(&self) -> LayerShapes {
        let rank = self.mode.spatial_rank();
        let conv_out = self
            .conv_spec
            .output_extent(self.input_extent)
            .expect("validated at construction");
        let primary_out = self
            .primary_spec
            .output_extent(conv_out)
            .expect("validated at construction");
        let spatial = |channels: usize, extent: usize| {
            let mut v = vec![channels];
            v.extend(std::iter::repeat(extent).take(rank));
            v
        };
        LayerShapes {
            input: self.input_shape(),
            conv_output: spatial(self.hp.filters, conv_out),
            primary_output: spatial(self.hp.primary_maps * self.hp.primarycap_dim, primary_out),
            primary_capsules: [self.num_primary, self.hp.primarycap_dim],
            class_capsules: [self.hp.n_classes, self.hp.voxelcap_dim],
        }
    }

    /// Parameter tensors with their checkpoint names, in update order.
    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        PARAM_NAMES.iter().copied().zip(self.params.iter()).collect()
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; PARAM_COUNT] {
        let [a, b, c, d, e] = &mut self.params;
        [a, b, c, d, e]
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params.iter().map(|p| p.shape().to_vec()).collect()
    }

    /// Run the network, recording the pass on a fresh tape.
    pub fn forward(&self, input: &Tensor) -> Result<ForwardPass, ModelError> {
        if input.shape() != self.input_shape().as_slice() {
            return Err(ModelError::Tensor(TensorError::ShapeMismatch {
                op: "forward",
                detail: format!(
                    "input {:?}, model expects {:?}",
                    input.shape(),
                    self.input_shape()
                ),
            }));
        }
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone());
        let param_vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let [cw, cb, pw, pb, rw]: [Var; PARAM_COUNT] =
            param_vars.clone().try_into().expect("five params");

        let mut hidden = tape.conv(x, cw, cb, &self.conv_spec)?;
        if self.hp.relu {
            hidden = tape.relu(hidden)?;
        }
        let primary = tape.conv(hidden, pw, pb, &self.primary_spec)?;
        let capsules =
            tape.capsule_reshape(primary, self.hp.primary_maps, self.hp.primarycap_dim)?;
        let child = tape.squash_rows(capsules)?;
        let predictions = tape.capsule_transform(child, rw)?;

        let routing =
            routing::dynamic_routing(tape.value(predictions), self.hp.routing_iterations)?;
        let mixed = tape.class_mix(predictions, &routing.couplings)?;
        let parents = tape.squash_rows(mixed)?;
        let lengths = tape.norm_along_axis(parents, 1)?;

        Ok(ForwardPass {
            tape,
            params: param_vars,
            parents,
            lengths,
            couplings: routing.couplings,
        })
    }

    /// Activation vectors for one input (inference shortcut).
    pub fn activations(&self, input: &Tensor) -> Result<ActivationVectors, ModelError> {
        Ok(self.forward(input)?.activations())
    }

    /// Write the model as a CWTS checkpoint with a JSON metadata header.
    pub fn save<W: Write>(&self, writer: &mut W, extras: &CheckpointExtras) -> Result<(), ModelError> {
        let meta = CheckpointMeta {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            mode: self.mode,
            input_extent: self.input_extent,
            hyperparameters: self.hp.clone(),
            loss: extras.loss,
            optimizer: extras.optimizer,
            class_names: extras.class_names.clone(),
        };
        let meta_bytes =
            serde_json::to_vec(&meta).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        cwts::write_cwts(writer, &meta_bytes, &self.named_params())
            .map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    /// Read a checkpoint written by [`save`](Self::save).
    pub fn load<R: Read>(reader: &mut R) -> Result<(CapsNetModel, CheckpointExtras), ModelError> {
        let (meta_bytes, arrays) =
            cwts::read_cwts(reader).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)
            .map_err(|e| ModelError::Checkpoint(format!("bad metadata: {e}")))?;
        if meta.format != CHECKPOINT_FORMAT || meta.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                meta.format, meta.version
            )));
        }
        let mut model =
            CapsNetModel::new(meta.hyperparameters.clone(), meta.mode, meta.input_extent, 0)?;
        if arrays.len() != PARAM_COUNT {
            return Err(ModelError::Checkpoint(format!(
                "expected {PARAM_COUNT} arrays, found {}",
                arrays.len()
            )));
        }
        for (((name, tensor), slot), expected) in arrays
            .into_iter()
            .zip(model.params.iter_mut())
            .zip(PARAM_NAMES)
        {
            if name != expected {
                return Err(ModelError::Checkpoint(format!(
                    "array {name} out of order, expected {expected}"
                )));
            }
            if tensor.shape() != slot.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "array {name} has shape {:?}, model expects {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor;
        }
        let extras = CheckpointExtras {
            loss: meta.loss,
            optimizer: meta.optimizer,
            class_names: meta.class_names,
        };
        Ok((model, extras))
    }
}

const CHECKPOINT_FORMAT: &str = "capsfold-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Training-side metadata stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointExtras {
    pub loss: LossKind,
    pub optimizer: RmsPropConfig,
    pub class_names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    format: String,
    version: u32,
    mode: Mode,
    input_extent: usize,
    hyperparameters: Hyperparameters,
    loss: LossKind,
    optimizer: RmsPropConfig,
    class_names: Vec<String>,
}

/// One recorded forward pass: activations plus everything needed to take a
/// gradient step.
pub struct ForwardPass {
    tape: Tape,
    params: Vec<Var>,
    parents: Var,
    lengths: Var,
    couplings: Tensor,
}

impl ForwardPass {
    /// Class capsule lengths, one per class.
    pub fn lengths(&self) -> &[f64] {
        self.tape.value(self.lengths).data()
    }

    /// Final-iteration coupling coefficients [children, classes].
    pub fn couplings(&self) -> &Tensor {
        &self.couplings
    }

    pub fn activations(&self) -> ActivationVectors {
        let parents = self.tape.value(self.parents);
        let dim = parents.shape()[1];
        let vectors = parents
            .data()
            .chunks_exact(dim)
            .map(|row| row.to_vec())
            .collect();
        ActivationVectors {
            vectors,
            lengths: self.lengths().to_vec(),
        }
    }

    fn loss_var(&mut self, kind: LossKind, true_class: usize) -> Result<Var, ModelError> {
        let var = match kind {
            LossKind::CategoricalHinge => self.tape.hinge_loss(self.lengths, true_class)?,
            LossKind::LogCosh => {
                let k = self.lengths().len();
                let mut target = Tensor::zeros(&[k]);
                target.data_mut()[true_class] = 1.0;
                self.tape.logcosh_loss(self.lengths, &target)?
            }
        };
        Ok(var)
    }

    /// Loss value without gradients (metrics evaluation).
    pub fn loss_value(&mut self, kind: LossKind, true_class: usize) -> Result<f64, ModelError> {
        let var = self.loss_var(kind, true_class)?;
        Ok(self.tape.value(var).item())
    }

    /// Loss plus parameter gradients in [`CapsNetModel::named_params`] order.
    pub fn loss_and_gradients(
        &mut self,
        kind: LossKind,
        true_class: usize,
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        let var = self.loss_var(kind, true_class)?;
        let loss = self.tape.value(var).item();
        let mut grads = self.tape.backward(var)?;
        let out = self
            .params
            .iter()
            .map(|&v| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(self.tape.value(v).shape()))
            })
            .collect();
        Ok((loss, out))
    }
}

/// Uniform init in +/- sqrt(6 / (fan_in + fan_out)).
fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..shape.iter().product())
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches data")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_hp() -> Hyperparameters {
        Hyperparameters {
            filters: 4,
            kernel_size: 3,
            primarycap_dim: 4,
            voxelcap_dim: 8,
            stride: 2,
            routing_iterations: 3,
            primary_maps: 2,
            n_classes: 2,
            relu: true,
        }
    }

    #[test]
    fn presets_match_published_table() {
        let p = preset("2d-kras-hras").unwrap();
        assert_eq!(p.loss, LossKind::CategoricalHinge);
        assert_eq!(p.hyperparameters.filters, 64);
        assert_eq!(p.hyperparameters.kernel_size, 9);
        assert_eq!(p.hyperparameters.primarycap_dim, 32);
        assert_eq!(p.hyperparameters.voxelcap_dim, 64);
        assert_eq!(p.hyperparameters.stride, 8);
        assert_eq!(p.hyperparameters.routing_iterations, 3);

        let p = preset("3d-kras-hras").unwrap();
        assert_eq!((p.hyperparameters.filters, p.hyperparameters.kernel_size), (128, 7));
        let p = preset("2d-psi-blast").unwrap();
        assert_eq!(p.loss, LossKind::LogCosh);
        assert_eq!((p.hyperparameters.filters, p.hyperparameters.kernel_size), (512, 5));
        assert_eq!(
            (p.hyperparameters.primarycap_dim, p.hyperparameters.voxelcap_dim),
            (16, 32)
        );
        let p = preset("3d-psi-blast").unwrap();
        assert_eq!((p.hyperparameters.filters, p.hyperparameters.kernel_size), (64, 5));
        assert!(preset("4d-unknown").is_none());
    }

    #[test]
    fn layer_shapes_for_2d_table_config() {
        let p = preset("2d-kras-hras").unwrap();
        let model = CapsNetModel::new(p.hyperparameters, Mode::D2, 512, 1).unwrap();
        let shapes = model.layer_shapes();
        assert_eq!(shapes.input, vec![8, 512, 512]);
        assert_eq!(shapes.conv_output, vec![64, 63, 63]);
        assert_eq!(shapes.primary_output, vec![8 * 32, 7, 7]);
        assert_eq!(shapes.primary_capsules, [8 * 49, 32]);
        assert_eq!(shapes.class_capsules, [2, 64]);
    }

    #[test]
    fn zero_input_gives_zero_lengths_and_uniform_couplings() {
        let model = CapsNetModel::new(tiny_hp(), Mode::D3, 8, 7).unwrap();
        let input = Tensor::zeros(&[8, 8, 8, 8]);
        let pass = model.forward(&input).unwrap();
        // Biases are zero, so every activation and prediction is zero.
        assert!(pass.lengths().iter().all(|&l| l == 0.0));
        assert!(pass.couplings().data().iter().all(|&c| (c - 0.5).abs() < 1e-15));
        let acts = pass.activations();
        assert_eq!(acts.predicted_class(), 0); // tie breaks low
    }

    #[test]
    fn lengths_stay_below_one_and_do_not_sum_to_one() {
        let model = CapsNetModel::new(tiny_hp(), Mode::D3, 8, 3).unwrap();
        let data: Vec<f64> = (0..8 * 512).map(|i| ((i * 13 + 5) % 7 == 0) as u8 as f64).collect();
        let input = Tensor::from_vec(&[8, 8, 8, 8], data).unwrap();
        let acts = model.activations(&input).unwrap();
        for &l in &acts.lengths {
            assert!((0.0..1.0).contains(&l));
        }
        // Independent capsule probabilities: no softmax at the output.
        let sum: f64 = acts.lengths.iter().sum();
        assert!((sum - 1.0).abs() > 1e-6);
    }

    #[test]
    fn forward_is_deterministic() {
        let model = CapsNetModel::new(tiny_hp(), Mode::D3, 8, 3).unwrap();
        let data: Vec<f64> = (0..8 * 512).map(|i| (i % 11 == 0) as u8 as f64).collect();
        let input = Tensor::from_vec(&[8, 8, 8, 8], data).unwrap();
        let a = model.activations(&input).unwrap();
        let b = model.activations(&input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = CapsNetModel::new(tiny_hp(), Mode::D3, 8, 11).unwrap();
        let extras = CheckpointExtras {
            loss: LossKind::CategoricalHinge,
            optimizer: RmsPropConfig::default(),
            class_names: vec!["kras".into(), "hras".into()],
        };
        let mut buf = Vec::new();
        model.save(&mut buf, &extras).unwrap();
        let (loaded, loaded_extras) = CapsNetModel::load(&mut buf.as_slice()).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded_extras, extras);

        // Saving the loaded model reproduces the bytes.
        let mut buf2 = Vec::new();
        loaded.save(&mut buf2, &loaded_extras).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn loss_helpers_match_hand_values() {
        assert!((categorical_hinge_loss(&[0.9, 0.1], 0) - 0.2).abs() < 1e-15);
        assert!((categorical_hinge_loss(&[0.2, 0.9], 0) - 1.7).abs() < 1e-15);
        assert_eq!(logcosh_loss(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn permuting_classes_permutes_lengths() {
        let hp = tiny_hp();
        let model = CapsNetModel::new(hp.clone(), Mode::D3, 8, 5).unwrap();
        let data: Vec<f64> = (0..8 * 512).map(|i| (i % 9 == 0) as u8 as f64).collect();
        let input = Tensor::from_vec(&[8, 8, 8, 8], data).unwrap();
        let base = model.activations(&input).unwrap();

        // Swap the two classes inside the routing weight [N, K, Dout, Din].
        let mut swapped = model.clone();
        {
            let [_, _, _, _, rw] = swapped.params_mut();
            let (n, k) = (rw.shape()[0], rw.shape()[1]);
            let block: usize = rw.shape()[2] * rw.shape()[3];
            assert_eq!(k, 2);
            let data = rw.data_mut();
            for i in 0..n {
                for e in 0..block {
                    data.swap((i * k) * block + e, (i * k + 1) * block + e);
                }
            }
        }
        let permuted = swapped.activations(&input).unwrap();
        assert!((base.lengths[0] - permuted.lengths[1]).abs() < 1e-12);
        assert!((base.lengths[1] - permuted.lengths[0]).abs() < 1e-12);
    }
}
