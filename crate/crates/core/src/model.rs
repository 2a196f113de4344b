//! Assembly of the full network: feature extractor F, classifier C, global
//! domain discriminator, per-class local discriminators, and trainable class
//! centers, all sharing one parameter store.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Tensor};
use crate::error::Error;
use crate::losses::HyperParams;
use crate::nn::{Bindings, Mlp, ParamBuf, ParamId, ParamStore};
use crate::rng::Rng;

/// Hidden-layer widths; data-dependent dimensions are filled in by
/// [`ArchSpec::to_arch`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub f_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub global_hidden: Vec<usize>,
    pub local_hidden: Vec<usize>,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            f_hidden: vec![32],
            feature_dim: 16,
            global_hidden: vec![16],
            local_hidden: vec![8],
        }
    }
}

impl ArchSpec {
    pub fn to_arch(&self, input_dim: usize, num_classes: usize, num_domains: usize) -> ModelArch {
        ModelArch {
            input_dim,
            feature_dim: self.feature_dim,
            num_classes,
            num_domains,
            f_hidden: self.f_hidden.clone(),
            global_hidden: self.global_hidden.clone(),
            local_hidden: self.local_hidden.clone(),
        }
    }
}

/// Complete architecture description; together with the parameter buffers it
/// reconstructs a model exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelArch {
    pub input_dim: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub num_domains: usize,
    pub f_hidden: Vec<usize>,
    pub global_hidden: Vec<usize>,
    pub local_hidden: Vec<usize>,
}

impl ModelArch {
    pub fn validate(&self) -> Result<(), Error> {
        let fixed = [
            ("input_dim", self.input_dim),
            ("feature_dim", self.feature_dim),
            ("num_classes", self.num_classes),
            ("num_domains", self.num_domains),
        ];
        for (name, v) in fixed {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.f_hidden.iter().any(|&w| w == 0)
            || self.global_hidden.iter().any(|&w| w == 0)
            || self.local_hidden.iter().any(|&w| w == 0)
        {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    fn feature_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.f_hidden);
        dims.push(self.feature_dim);
        dims
    }

    fn classifier_dims(&self) -> Vec<usize> {
        vec![self.feature_dim, self.num_classes]
    }

    fn global_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.feature_dim];
        dims.extend_from_slice(&self.global_hidden);
        dims.push(self.num_domains);
        dims
    }

    fn local_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.feature_dim];
        dims.extend_from_slice(&self.local_hidden);
        dims.push(self.num_domains);
        dims
    }
}

/// The assembled networks plus class centers. Parameter registration order
/// (F, C, global discriminator, local heads in class order, centers) is
/// fixed; it defines the layout of the serialized model.
#[derive(Debug, Clone)]
pub struct DdianModel {
    store: ParamStore,
    feature_net: Mlp,
    classifier: Mlp,
    global_disc: Mlp,
    local_heads: Vec<Mlp>,
    centers: ParamId,
    arch: ModelArch,
    hp: HyperParams,
}

/// Which discriminator branches [`DdianModel::forward_all`] should build.
#[derive(Debug, Clone, Copy)]
pub struct BranchMask {
    pub global: bool,
    pub local: bool,
}

impl Default for BranchMask {
    fn default() -> Self {
        BranchMask {
            global: true,
            local: true,
        }
    }
}

/// Tensors produced by one full forward pass. `class_probs` is a detached
/// copy: a constant leaf whose rows sum to 1.
#[derive(Debug, Clone)]
pub struct ForwardOutputs {
    pub features: Tensor,
    pub class_logits: Tensor,
    pub class_probs: Tensor,
    pub global_domain_logits: Option<Tensor>,
    pub local_domain_logits: Option<Vec<Tensor>>,
}

/// Row-wise stable softmax on plain values.
pub fn softmax_rows(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(values.len(), rows * cols);
    let mut out = Vec::with_capacity(values.len());
    for i in 0..rows {
        let row = &values[i * cols..(i + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&x| libm::exp(x - max)).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|&e| e / sum));
    }
    out
}

impl DdianModel {
    /// Fresh model with Glorot-initialized networks and centers drawn from
    /// `0.1 * N(0, 1)`, all off one seed.
    pub fn new(arch: ModelArch, hp: HyperParams, seed: u64) -> Result<Self, Error> {
        arch.validate()?;
        hp.validate()?;
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let feature_net = Mlp::init(&mut store, &arch.feature_dims(), &mut rng)?;
        let classifier = Mlp::init(&mut store, &arch.classifier_dims(), &mut rng)?;
        let global_disc = Mlp::init(&mut store, &arch.global_dims(), &mut rng)?;
        let local_heads = (0..arch.num_classes)
            .map(|_| Mlp::init(&mut store, &arch.local_dims(), &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let center_values: Vec<f64> = (0..arch.num_classes * arch.feature_dim)
            .map(|_| 0.1 * rng.normal())
            .collect();
        let centers = store.register(arch.num_classes, arch.feature_dim, center_values);
        Ok(DdianModel {
            store,
            feature_net,
            classifier,
            global_disc,
            local_heads,
            centers,
            arch,
            hp,
        })
    }

    /// Rebuilds a model from externally stored parameter buffers, which must
    /// match the registration layout of `arch` exactly.
    pub fn from_parts(
        arch: ModelArch,
        hp: HyperParams,
        buffers: Vec<ParamBuf>,
    ) -> Result<Self, Error> {
        let mut model = DdianModel::new(arch, hp, 0)?;
        if buffers.len() != model.store.len() {
            return Err(Error::Config(format!(
                "expected {} parameter buffers, got {}",
                model.store.len(),
                buffers.len()
            )));
        }
        for (i, buf) in buffers.into_iter().enumerate() {
            let slot = model.store.buf_mut(ParamId(i));
            if (buf.rows, buf.cols) != (slot.rows, slot.cols) {
                return Err(Error::Config(format!(
                    "parameter {i} has shape {}x{}, expected {}x{}",
                    buf.rows, buf.cols, slot.rows, slot.cols
                )));
            }
            if buf.values.len() != buf.rows * buf.cols {
                return Err(Error::Config(format!(
                    "parameter {i} carries {} values for shape {}x{}",
                    buf.values.len(),
                    buf.rows,
                    buf.cols
                )));
            }
            slot.values = buf.values;
        }
        Ok(model)
    }

    pub fn arch(&self) -> &ModelArch {
        &self.arch
    }

    pub fn hp(&self) -> &HyperParams {
        &self.hp
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn feature_net(&self) -> &Mlp {
        &self.feature_net
    }

    pub fn classifier(&self) -> &Mlp {
        &self.classifier
    }

    pub fn global_disc(&self) -> &Mlp {
        &self.global_disc
    }

    pub fn local_heads(&self) -> &[Mlp] {
        &self.local_heads
    }

    pub fn centers_id(&self) -> ParamId {
        self.centers
    }

    /// Parameter ids of the feature extractor; everything else (classifier,
    /// discriminators, centers) trains at the boosted learning rate.
    pub fn feature_param_ids(&self) -> Vec<ParamId> {
        self.feature_net.param_ids().collect()
    }

    /// One pass through every enabled branch. The global branch is the
    /// discriminator on gradient-reversed features; local branch k scores
    /// features scaled by the detached class-k probability.
    pub fn forward_all(
        &self,
        g: &mut Graph,
        bind: &Bindings,
        x: Tensor,
        lambda: f64,
        mask: BranchMask,
    ) -> Result<ForwardOutputs, Error> {
        let features = self.feature_net.forward(g, bind, x)?;
        let class_logits = self.classifier.forward(g, bind, features)?;
        let m = class_logits.rows();
        let k = class_logits.cols();
        let probs = softmax_rows(g.values(class_logits), m, k);
        let class_probs = g.leaf(probs.clone(), m, k)?;

        let global_domain_logits = if mask.global {
            let reversed = g.grad_reverse(features, lambda)?;
            Some(self.global_disc.forward(g, bind, reversed)?)
        } else {
            None
        };

        let local_domain_logits = if mask.local {
            let d = features.cols();
            let ones_row = g.leaf(vec![1.0; d], 1, d)?;
            let mut per_head = Vec::with_capacity(k);
            for (class, head) in self.local_heads.iter().enumerate() {
                let column: Vec<f64> = (0..m).map(|i| probs[i * k + class]).collect();
                let p_col = g.leaf(column, m, 1)?;
                let p_bcast = g.matmul(p_col, ones_row)?;
                let scaled = g.mul_elementwise(features, p_bcast)?;
                let reversed = g.grad_reverse(scaled, lambda)?;
                per_head.push(head.forward(g, bind, reversed)?);
            }
            Some(per_head)
        } else {
            None
        };

        Ok(ForwardOutputs {
            features,
            class_logits,
            class_probs,
            global_domain_logits,
            local_domain_logits,
        })
    }

    /// Argmax class per row; ties break toward the lowest class index.
    pub fn predict(&self, x: &[f64], rows: usize) -> Result<Vec<usize>, Error> {
        let mut g = Graph::new();
        let bind = self.store.bind_all(&mut g);
        let input = g.leaf(x.to_vec(), rows, self.arch.input_dim)?;
        let features = self.feature_net.forward(&mut g, &bind, input)?;
        let logits = self.classifier.forward(&mut g, &bind, features)?;
        let k = self.arch.num_classes;
        let values = g.values(logits);
        let mut out = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = &values[i * k..(i + 1) * k];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            out.push(best);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses;

    fn tiny_model(seed: u64) -> DdianModel {
        let spec = ArchSpec {
            f_hidden: vec![4],
            feature_dim: 3,
            global_hidden: vec![3],
            local_hidden: vec![3],
        };
        DdianModel::new(spec.to_arch(2, 3, 3), HyperParams::default(), seed).unwrap()
    }

    #[test]
    fn forward_all_shapes() {
        let model = tiny_model(1);
        let mut g = Graph::new();
        let bind = model.store().bind_all(&mut g);
        let x = g.leaf(vec![0.5, -0.2], 1, 2).unwrap();
        let out = model
            .forward_all(&mut g, &bind, x, 0.3, BranchMask::default())
            .unwrap();
        assert_eq!(out.features.shape(), (1, 3));
        assert_eq!(out.class_logits.shape(), (1, 3));
        assert_eq!(out.class_probs.shape(), (1, 3));
        assert_eq!(out.global_domain_logits.unwrap().shape(), (1, 3));
        let locals = out.local_domain_logits.unwrap();
        assert_eq!(locals.len(), 3);
        assert!(locals.iter().all(|t| t.shape() == (1, 3)));
    }

    #[test]
    fn class_probs_rows_sum_to_one() {
        let model = tiny_model(2);
        let mut g = Graph::new();
        let bind = model.store().bind_all(&mut g);
        let x = g.leaf(vec![0.5, -0.2, 3.0, 1.0, -2.0, 0.0], 3, 2).unwrap();
        let out = model
            .forward_all(&mut g, &bind, x, 0.0, BranchMask::default())
            .unwrap();
        for i in 0..3 {
            let s: f64 = g.values(out.class_probs)[i * 3..(i + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lambda_zero_gives_no_discriminator_gradient_to_features() {
        let model = tiny_model(3);
        let mut g = Graph::new();
        let bind = model.store().bind_all(&mut g);
        let x = g.leaf(vec![0.5, -0.2, 1.0, 0.7], 2, 2).unwrap();
        let out = model
            .forward_all(&mut g, &bind, x, 0.0, BranchMask::default())
            .unwrap();
        let dm = losses::classification_loss(&mut g, out.global_domain_logits.unwrap(), &[0, 1])
            .unwrap();
        g.backward(dm).unwrap();
        // The reversal at lambda = 0 blocks all gradient into F parameters.
        for id in model.feature_param_ids() {
            assert!(g.grad(bind.tensor(id)).iter().all(|&v| v == 0.0));
        }
        assert!(g.grad(out.features).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn predict_argmax_tie_and_batch_consistency() {
        let model = tiny_model(4);
        // Hand-check the tie rule on raw logits via a zero-weight classifier.
        let mut clone = model.clone();
        for layer in clone.classifier.layers() {
            clone.store.buf_mut(layer.weight).values.fill(0.0);
            clone.store.buf_mut(layer.bias).values.fill(0.0);
        }
        // All logits equal -> every prediction is class 0.
        let preds = clone.predict(&[0.3, 0.4, -1.0, 2.0], 2).unwrap();
        assert_eq!(preds, vec![0, 0]);

        // Batch prediction equals row-wise prediction.
        let xs = [0.3, 0.4, -1.0, 2.0, 0.0, -0.5];
        let batch = model.predict(&xs, 3).unwrap();
        for i in 0..3 {
            let single = model.predict(&xs[i * 2..(i + 1) * 2], 1).unwrap();
            assert_eq!(batch[i], single[0]);
        }
    }

    #[test]
    fn predict_invariant_to_constant_logit_shift() {
        let model = tiny_model(5);
        let xs = [0.3, 0.4, -1.0, 2.0];
        let base = model.predict(&xs, 2).unwrap();
        let mut shifted = model.clone();
        let bias = shifted.classifier.layers()[0].bias;
        for b in &mut shifted.store.buf_mut(bias).values {
            *b += 7.5;
        }
        assert_eq!(shifted.predict(&xs, 2).unwrap(), base);
    }

    #[test]
    fn from_parts_round_trips() {
        let model = tiny_model(6);
        let buffers: Vec<ParamBuf> = model.store().buffers().cloned().collect();
        let rebuilt =
            DdianModel::from_parts(model.arch().clone(), model.hp().clone(), buffers).unwrap();
        assert_eq!(rebuilt.store(), model.store());
        let xs = [1.0, -0.4, 0.2, 0.9];
        assert_eq!(
            rebuilt.predict(&xs, 2).unwrap(),
            model.predict(&xs, 2).unwrap()
        );
    }

    #[test]
    fn from_parts_rejects_wrong_shapes() {
        let model = tiny_model(7);
        let mut buffers: Vec<ParamBuf> = model.store().buffers().cloned().collect();
        buffers.pop();
        assert!(matches!(
            DdianModel::from_parts(model.arch().clone(), model.hp().clone(), buffers),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn same_seed_same_model() {
        let a = tiny_model(123);
        let b = tiny_model(123);
        assert_eq!(a.store(), b.store());
    }
}
