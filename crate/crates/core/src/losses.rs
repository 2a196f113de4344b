//! The loss terms of the training objective, each built as a differentiable
//! scalar on the graph:
//!
//! * classification cross-entropy over class labels,
//! * global domain alignment: cross-entropy of a domain discriminator fed
//!   gradient-reversed features (marginal distribution alignment),
//! * local sub-domain alignment: one discriminator per class, fed features
//!   scaled by the predicted class probability and weighted by the same
//!   probability (conditional distribution alignment),
//! * center loss: half squared distance of each feature to its class center,
//! * discriminative loss: intra-class distance over summed rival-center
//!   distances, pushing classes compact and mutually separated.
//!
//! Component losses are unweighted batch reductions; the weights alpha, beta
//! and gamma are applied exactly once, in [`total_objective`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Tensor};
use crate::error::Error;
use crate::nn::{Bindings, Mlp};

/// Scalar weights and loop controls shared by the losses and the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Weight of the discriminative loss.
    pub alpha: f64,
    /// Weight of the local sub-domain alignment loss.
    pub beta: f64,
    /// Weight of the global domain alignment loss.
    pub gamma: f64,
    /// Denominator offset of the discriminative loss.
    pub phi: f64,
    pub batch_size: usize,
    pub momentum: f64,
    /// Base learning rate of the annealing schedule.
    pub eta0: f64,
    pub epochs: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.5,
            phi: 1e-3,
            batch_size: 32,
            momentum: 0.9,
            eta0: 0.01,
            epochs: 60,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), Error> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("alpha, beta, gamma must be >= 0".into()));
        }
        if !(self.phi > 0.0) {
            return Err(Error::Config(format!("phi must be > 0, got {}", self.phi)));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.eta0 > 0.0) {
            return Err(Error::Config(format!(
                "eta0 must be > 0, got {}",
                self.eta0
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Evaluated components of one objective, with the weights that combined
/// them. `total = l_cls + beta*l_dc + gamma*l_dm + alpha*l_dis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_cls: f64,
    pub l_dm: f64,
    pub l_dc: f64,
    pub l_dis: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<(), Error> {
    if labels.len() != rows {
        return Err(Error::Contract(format!(
            "{} labels for {} rows",
            labels.len(),
            rows
        )));
    }
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Data {
                row,
                message: format!("label {label} out of range [0, {classes})"),
            });
        }
    }
    Ok(())
}

/// Per-sample cross-entropy `-log_softmax(logits)[i, target_i]` as an
/// `m x 1` tensor.
fn ce_per_sample(g: &mut Graph, logits: Tensor, targets: &[usize]) -> Result<Tensor, Error> {
    let (m, n) = logits.shape();
    check_labels(targets, m, n)?;
    let log_probs = g.log_softmax_rows(logits);
    let mut one_hot = vec![0.0; m * n];
    for (i, &t) in targets.iter().enumerate() {
        one_hot[i * n + t] = 1.0;
    }
    let mask = g.leaf(one_hot, m, n)?;
    let picked = g.mul_elementwise(log_probs, mask)?;
    let ones = g.leaf(vec![1.0; n], n, 1)?;
    let row_sums = g.matmul(picked, ones)?;
    Ok(g.scale(row_sums, -1.0))
}

/// Mean cross-entropy of `logits` against class labels.
pub fn classification_loss(
    g: &mut Graph,
    logits: Tensor,
    labels: &[usize],
) -> Result<Tensor, Error> {
    let ce = ce_per_sample(g, logits, labels)?;
    Ok(g.mean_all(ce))
}

/// Marginal alignment: mean cross-entropy of the global domain discriminator
/// on gradient-reversed features. Unweighted; gamma is applied once in
/// [`total_objective`].
pub fn global_domain_loss(
    g: &mut Graph,
    features: Tensor,
    discriminator: &Mlp,
    bind: &Bindings,
    domain_labels: &[usize],
    lambda: f64,
) -> Result<Tensor, Error> {
    let reversed = g.grad_reverse(features, lambda)?;
    let logits = discriminator.forward(g, bind, reversed)?;
    let ce = ce_per_sample(g, logits, domain_labels)?;
    Ok(g.mean_all(ce))
}

/// Conditional alignment: for each class k, head k scores the features
/// scaled by the class-k probability, and its per-sample cross-entropy is
/// weighted by that probability; terms are batch means summed over heads.
///
/// `class_probs` rows must lie on the probability simplex (within 1e-4) and
/// are treated as constants: no gradient flows back through the weighting.
pub fn local_domain_loss(
    g: &mut Graph,
    features: Tensor,
    class_probs: Tensor,
    heads: &[Mlp],
    bind: &Bindings,
    domain_labels: &[usize],
    lambda: f64,
) -> Result<Tensor, Error> {
    let (m, d) = features.shape();
    let k = heads.len();
    if k == 0 {
        return Err(Error::Config(
            "local alignment needs at least one head".into(),
        ));
    }
    if class_probs.shape() != (m, k) {
        return Err(Error::Dimension {
            op: "local_domain_loss",
            lhs: class_probs.shape(),
            rhs: (m, k),
        });
    }
    let probs = g.values(class_probs).to_vec();
    for (row, chunk) in probs.chunks(k).enumerate() {
        let sum: f64 = chunk.iter().sum();
        if (sum - 1.0).abs() > 1e-4 || chunk.iter().any(|&p| p < -1e-4) {
            return Err(Error::Contract(format!(
                "class_probs row {row} off the simplex (sum {sum})"
            )));
        }
    }

    let ones_row = g.leaf(vec![1.0; d], 1, d)?;
    let mut total: Option<Tensor> = None;
    for (class, head) in heads.iter().enumerate() {
        let column: Vec<f64> = (0..m).map(|i| probs[i * k + class]).collect();
        let p_col = g.leaf(column, m, 1)?;
        let p_bcast = g.matmul(p_col, ones_row)?;
        let scaled = g.mul_elementwise(features, p_bcast)?;
        let reversed = g.grad_reverse(scaled, lambda)?;
        let logits = head.forward(g, bind, reversed)?;
        let ce = ce_per_sample(g, logits, domain_labels)?;
        let weighted = g.mul_elementwise(ce, p_col)?;
        let term = g.mean_all(weighted);
        total = Some(match total {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    Ok(total.expect("k >= 1 checked above"))
}

/// Half the summed squared distance of each feature to its class center.
pub fn center_loss(
    g: &mut Graph,
    features: Tensor,
    centers: Tensor,
    labels: &[usize],
) -> Result<Tensor, Error> {
    if features.cols() != centers.cols() {
        return Err(Error::Dimension {
            op: "center_loss",
            lhs: features.shape(),
            rhs: centers.shape(),
        });
    }
    check_labels(labels, features.rows(), centers.rows())?;
    let own = g.gather_rows(centers, labels)?;
    let diff = g.sub(features, own)?;
    let sq = g.square(diff);
    let s = g.sum_all(sq);
    Ok(g.scale(s, 0.5))
}

/// Ratio loss: half of `sum_i ||f_i - c_{y_i}||^2 / (sum_{j != y_i}
/// ||f_i - c_j||^2 + phi)`. Gradients flow into features and centers through
/// both the numerator and the denominator.
pub fn discriminative_loss(
    g: &mut Graph,
    features: Tensor,
    centers: Tensor,
    labels: &[usize],
    phi: f64,
) -> Result<Tensor, Error> {
    let k = centers.rows();
    if k < 2 {
        return Err(Error::Config(format!(
            "discriminative loss needs >= 2 classes, got {k}"
        )));
    }
    if !(phi > 0.0) {
        return Err(Error::Parameter(format!("phi must be > 0, got {phi}")));
    }
    let (m, d) = features.shape();
    if d != centers.cols() {
        return Err(Error::Dimension {
            op: "discriminative_loss",
            lhs: features.shape(),
            rhs: centers.shape(),
        });
    }
    check_labels(labels, m, k)?;

    let ones = g.leaf(vec![1.0; d], d, 1)?;
    // ||f_i - c_{y_i}||^2 per sample.
    let own = g.gather_rows(centers, labels)?;
    let diff = g.sub(features, own)?;
    let sq = g.square(diff);
    let numerator = g.matmul(sq, ones)?;
    // sum over all centers j of ||f_i - c_j||^2.
    let mut all: Option<Tensor> = None;
    for j in 0..k {
        let c_row = g.gather_rows(centers, &[j])?;
        let neg_c = g.scale(c_row, -1.0);
        let diff_j = g.add_row_broadcast(features, neg_c)?;
        let sq_j = g.square(diff_j);
        let dist_j = g.matmul(sq_j, ones)?;
        all = Some(match all {
            None => dist_j,
            Some(acc) => g.add(acc, dist_j)?,
        });
    }
    let rivals = g.sub(all.expect("k >= 2"), numerator)?;
    let denominator = g.add_scalar(rivals, phi);
    let ratio = g.div_elementwise(numerator, denominator)?;
    let s = g.sum_all(ratio);
    Ok(g.scale(s, 0.5))
}

/// The four component scalars of one objective. Disabled components are
/// zero-constant leaves.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub cls: Tensor,
    pub dm: Tensor,
    pub dc: Tensor,
    pub dis: Tensor,
}

/// Combines the components as `cls + beta*dc + gamma*dm + alpha*dis` and
/// records the evaluated breakdown.
pub fn total_objective(
    g: &mut Graph,
    parts: &LossParts,
    hp: &HyperParams,
) -> Result<(Tensor, LossBreakdown), Error> {
    for (name, t) in [
        ("cls", parts.cls),
        ("dm", parts.dm),
        ("dc", parts.dc),
        ("dis", parts.dis),
    ] {
        if !t.is_scalar() {
            return Err(Error::Contract(format!(
                "loss component {name} must be 1x1, got {}x{}",
                t.shape().0,
                t.shape().1
            )));
        }
    }
    let dc_w = g.scale(parts.dc, hp.beta);
    let dm_w = g.scale(parts.dm, hp.gamma);
    let dis_w = g.scale(parts.dis, hp.alpha);
    let s1 = g.add(parts.cls, dc_w)?;
    let s2 = g.add(s1, dm_w)?;
    let total = g.add(s2, dis_w)?;
    let breakdown = LossBreakdown {
        l_cls: g.scalar(parts.cls),
        l_dm: g.scalar(parts.dm),
        l_dc: g.scalar(parts.dc),
        l_dis: g.scalar(parts.dis),
        total: g.scalar(total),
        alpha: hp.alpha,
        beta: hp.beta,
        gamma: hp.gamma,
        phi: hp.phi,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, ParamStore};

    #[test]
    fn classification_uniform_logits_gives_ln2() {
        let mut g = Graph::new();
        let logits = g.leaf(vec![0.0, 0.0], 1, 2).unwrap();
        let loss = classification_loss(&mut g, logits, &[0]).unwrap();
        assert!((g.scalar(loss) - libm::log(2.0)).abs() < 1e-12);
    }

    #[test]
    fn classification_confident_correct_is_near_zero() {
        let mut g = Graph::new();
        let logits = g.leaf(vec![1000.0, 0.0], 1, 2).unwrap();
        let loss = classification_loss(&mut g, logits, &[0]).unwrap();
        assert!(g.scalar(loss).abs() < 1e-12);
    }

    #[test]
    fn classification_batch_is_mean_of_rows() {
        let mut g = Graph::new();
        let row_a = g.leaf(vec![0.3, -0.2, 1.1], 1, 3).unwrap();
        let row_b = g.leaf(vec![-0.5, 0.9, 0.0], 1, 3).unwrap();
        let la = classification_loss(&mut g, row_a, &[2]).unwrap();
        let lb = classification_loss(&mut g, row_b, &[1]).unwrap();
        let both = g.leaf(vec![0.3, -0.2, 1.1, -0.5, 0.9, 0.0], 2, 3).unwrap();
        let l = classification_loss(&mut g, both, &[2, 1]).unwrap();
        let expected = 0.5 * (g.scalar(la) + g.scalar(lb));
        assert!((g.scalar(l) - expected).abs() < 1e-12);
    }

    #[test]
    fn classification_rejects_out_of_range_label_naming_row() {
        let mut g = Graph::new();
        let logits = g.zeros(3, 2);
        match classification_loss(&mut g, logits, &[0, 2, 1]) {
            Err(Error::Data { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn global_loss_uniform_discriminator_gives_ln3() {
        // Zero-weight discriminator emits equal logits over 3 domains.
        let mut store = ParamStore::new();
        let disc = init_params(&mut store, &[4, 3], 0).unwrap();
        store.buf_mut(disc.layers()[0].weight).values.fill(0.0);
        let mut g = Graph::new();
        let bind = store.bind_all(&mut g);
        let features = g.leaf(vec![0.5; 8], 2, 4).unwrap();
        let loss = global_domain_loss(&mut g, features, &disc, &bind, &[0, 2], 1.0).unwrap();
        assert!((g.scalar(loss) - libm::log(3.0)).abs() < 1e-12);
    }

    #[test]
    fn global_loss_perfect_discriminator_is_near_zero() {
        // One-hot domain features through a 1000x identity layer: the
        // correct-domain logit dominates by 1000.
        let mut store = ParamStore::new();
        let disc = init_params(&mut store, &[3, 3], 0).unwrap();
        let w = store.buf_mut(disc.layers()[0].weight);
        w.values.copy_from_slice(&[
            1000.0, 0.0, 0.0, //
            0.0, 1000.0, 0.0, //
            0.0, 0.0, 1000.0,
        ]);
        let mut g = Graph::new();
        let bind = store.bind_all(&mut g);
        let features = g
            .leaf(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3, 3)
            .unwrap();
        let loss = global_domain_loss(&mut g, features, &disc, &bind, &[0, 1, 2], 0.5).unwrap();
        assert!(g.scalar(loss).abs() < 1e-9);
    }

    #[test]
    fn global_loss_feature_gradient_is_minus_lambda_times_unreversed() {
        let mut store = ParamStore::new();
        let disc = init_params(&mut store, &[3, 2, 3], 11).unwrap();
        let lambda = 0.8;
        let grads = |store: &ParamStore, lam: f64| {
            let mut g = Graph::new();
            let bind = store.bind_all(&mut g);
            let features = g.leaf(vec![0.4, -1.2, 0.7, 0.1, 0.0, 2.0], 2, 3).unwrap();
            let loss = global_domain_loss(&mut g, features, &disc, &bind, &[0, 2], lam).unwrap();
            g.backward(loss).unwrap();
            g.grad(features).to_vec()
        };
        // lambda = 0 zeroes the reversed path entirely; measure the raw
        // gradient by negating a lambda = 1 run instead.
        let reversed = grads(&store, lambda);
        let unit = grads(&store, 1.0);
        for (r, u) in reversed.iter().zip(&unit) {
            let unreversed = -u;
            assert!((r - (-lambda) * unreversed).abs() < 1e-12);
        }
    }

    #[test]
    fn local_loss_with_single_head_equals_global() {
        let mut store = ParamStore::new();
        let head = init_params(&mut store, &[3, 4, 2], 5).unwrap();
        let mut g = Graph::new();
        let bind = store.bind_all(&mut g);
        let features = g.leaf(vec![0.3, -0.8, 1.5, 0.2, 0.4, -0.6], 2, 3).unwrap();
        let probs = g.leaf(vec![1.0, 1.0], 2, 1).unwrap();
        let local = local_domain_loss(
            &mut g,
            features,
            probs,
            core::slice::from_ref(&head),
            &bind,
            &[1, 0],
            0.5,
        )
        .unwrap();
        let global = global_domain_loss(&mut g, features, &head, &bind, &[1, 0], 0.5).unwrap();
        assert_eq!(g.scalar(local), g.scalar(global));
    }

    #[test]
    fn local_loss_one_hot_probs_uses_only_that_head() {
        let mut store = ParamStore::new();
        let heads = [
            init_params(&mut store, &[2, 3], 1).unwrap(),
            init_params(&mut store, &[2, 3], 2).unwrap(),
            init_params(&mut store, &[2, 3], 3).unwrap(),
        ];
        let mut g = Graph::new();
        let bind = store.bind_all(&mut g);
        let features = g.leaf(vec![0.7, -0.4], 1, 2).unwrap();
        let probs = g.leaf(vec![0.0, 0.0, 1.0], 1, 3).unwrap();
        let loss = local_domain_loss(&mut g, features, probs, &heads, &bind, &[2], 1.0).unwrap();
        // Head 2 alone, weight 1: equals the unweighted CE through head 2.
        let expected = global_domain_loss(&mut g, features, &heads[2], &bind, &[2], 1.0).unwrap();
        assert_eq!(g.scalar(loss), g.scalar(expected));
    }

    #[test]
    fn local_loss_matches_direct_summation_oracle() {
        // Independent evaluation of sum_k mean_i p_ik * CE_k(i) with plain
        // f64 arithmetic, no graph.
        let mut store = ParamStore::new();
        let heads = [
            init_params(&mut store, &[2, 2], 21).unwrap(),
            init_params(&mut store, &[2, 2], 22).unwrap(),
        ];
        let feat = [0.9, -0.3, -1.1, 0.6];
        let probs = [0.3, 0.7, 0.55, 0.45];
        let domains = [1usize, 0];

        let mut g = Graph::new();
        let bind = store.bind_all(&mut g);
        let features = g.leaf(feat.to_vec(), 2, 2).unwrap();
        let probs_t = g.leaf(probs.to_vec(), 2, 2).unwrap();
        let loss =
            local_domain_loss(&mut g, features, probs_t, &heads, &bind, &domains, 0.9).unwrap();

        let mut expected = 0.0;
        for (k, head) in heads.iter().enumerate() {
            let w = &store.buf(head.layers()[0].weight).values;
            let b = &store.buf(head.layers()[0].bias).values;
            let mut mean = 0.0;
            for i in 0..2 {
                let p = probs[i * 2 + k];
                let x = [p * feat[i * 2], p * feat[i * 2 + 1]];
                let logits = [
                    x[0] * w[0] + x[1] * w[2] + b[0],
                    x[0] * w[1] + x[1] * w[3] + b[1],
                ];
                let max = logits[0].max(logits[1]);
                let lse = max + libm::log(libm::exp(logits[0] - max) + libm::exp(logits[1] - max));
                let ce = lse - logits[domains[i]];
                mean += p * ce;
            }
            expected += mean / 2.0;
        }
        assert!((g.scalar(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn local_loss_rejects_off_simplex_probs() {
        let mut store = ParamStore::new();
        let heads = [init_params(&mut store, &[2, 2], 0).unwrap()];
        let mut g = Graph::new();
        let bind = store.bind_all(&mut g);
        let features = g.zeros(1, 2);
        let probs = g.leaf(vec![0.6], 1, 1).unwrap();
        assert!(matches!(
            local_domain_loss(&mut g, features, probs, &heads, &bind, &[0], 1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn center_loss_hand_values() {
        let mut g = Graph::new();
        let features = g.leaf(vec![2.0, 0.0], 1, 2).unwrap();
        let centers = g.leaf(vec![0.0, 0.0, 1.0, 1.0], 2, 2).unwrap();
        let loss = center_loss(&mut g, features, centers, &[0]).unwrap();
        assert_eq!(g.scalar(loss), 2.0);
    }

    #[test]
    fn center_loss_zero_at_centers() {
        let mut g = Graph::new();
        let features = g.leaf(vec![1.0, 1.0, -2.0, 0.5], 2, 2).unwrap();
        let centers = g.leaf(vec![1.0, 1.0, -2.0, 0.5], 2, 2).unwrap();
        let loss = center_loss(&mut g, features, centers, &[0, 1]).unwrap();
        assert_eq!(g.scalar(loss), 0.0);
    }

    #[test]
    fn center_loss_center_gradient_is_negative_residual_sum() {
        let mut g = Graph::new();
        let features = g.leaf(vec![2.0, 1.0, 4.0, -1.0], 2, 2).unwrap();
        let centers = g.leaf(vec![1.0, 0.0, 9.0, 9.0], 2, 2).unwrap();
        let loss = center_loss(&mut g, features, centers, &[0, 0]).unwrap();
        g.backward(loss).unwrap();
        // d/dc_0 = -sum_{i: y_i = 0} (f_i - c_0) = -((1,1) + (3,-1)).
        assert_eq!(&g.grad(centers)[..2], &[-4.0, 0.0]);
        assert_eq!(&g.grad(centers)[2..], &[0.0, 0.0]);
    }

    #[test]
    fn discriminative_loss_zero_at_own_center() {
        let mut g = Graph::new();
        let features = g.leaf(vec![1.0, -2.0], 1, 2).unwrap();
        let centers = g.leaf(vec![1.0, -2.0, 0.0, 0.0], 2, 2).unwrap();
        let loss = discriminative_loss(&mut g, features, centers, &[0], 0.01).unwrap();
        assert_eq!(g.scalar(loss), 0.0);
    }

    #[test]
    fn discriminative_loss_hand_value_two_classes() {
        let mut g = Graph::new();
        let features = g.leaf(vec![0.0, 0.0], 1, 2).unwrap();
        let centers = g.leaf(vec![1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        let loss = discriminative_loss(&mut g, features, centers, &[0], 0.01).unwrap();
        assert!((g.scalar(loss) - 0.5 / 1.01).abs() < 1e-12);
    }

    #[test]
    fn discriminative_loss_hand_value_three_classes() {
        let mut g = Graph::new();
        let features = g.leaf(vec![1.0, 1.0], 1, 2).unwrap();
        let centers = g.leaf(vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0], 3, 2).unwrap();
        let loss = discriminative_loss(&mut g, features, centers, &[1], 0.01).unwrap();
        assert!((g.scalar(loss) - 0.5 * 2.0 / 2.01).abs() < 1e-12);
    }

    #[test]
    fn discriminative_loss_rejects_single_class() {
        let mut g = Graph::new();
        let features = g.zeros(1, 2);
        let centers = g.zeros(1, 2);
        assert!(matches!(
            discriminative_loss(&mut g, features, centers, &[0], 0.01),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn discriminative_loss_translation_invariant() {
        // 2 samples of dimension 3, 3 centers; the same constant vector is
        // added to every feature and every center.
        let feat = [0.2, -1.0, 0.5, 0.8, 1.4, -0.3];
        let cent = [0.0, 0.1, -0.7, 1.2, 0.4, 0.4, -0.9, 0.3, 1.1];
        let labels = [2usize, 0];
        let shift = [13.25, -7.5, 4.0];
        let eval = |offset: &[f64; 3]| {
            let mut g = Graph::new();
            let f: Vec<f64> = feat
                .iter()
                .enumerate()
                .map(|(i, &v)| v + offset[i % 3])
                .collect();
            let c: Vec<f64> = cent
                .iter()
                .enumerate()
                .map(|(i, &v)| v + offset[i % 3])
                .collect();
            let features = g.leaf(f, 2, 3).unwrap();
            let centers = g.leaf(c, 3, 3).unwrap();
            let loss = discriminative_loss(&mut g, features, centers, &labels, 1e-3).unwrap();
            g.scalar(loss)
        };
        let base = eval(&[0.0, 0.0, 0.0]);
        let shifted = eval(&shift);
        assert!((base - shifted).abs() < 1e-9, "{base} vs {shifted}");
    }

    #[test]
    fn total_objective_source_only_equals_cls() {
        let mut g = Graph::new();
        let cls = g.scalar_leaf(0.83);
        let zero = g.zeros(1, 1);
        let hp = HyperParams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            ..HyperParams::default()
        };
        let parts = LossParts {
            cls,
            dm: zero,
            dc: zero,
            dis: zero,
        };
        let (_, breakdown) = total_objective(&mut g, &parts, &hp).unwrap();
        assert_eq!(breakdown.total, 0.83);
    }

    #[test]
    fn total_objective_hand_arithmetic() {
        let mut g = Graph::new();
        let parts = LossParts {
            cls: g.scalar_leaf(1.0),
            dc: g.scalar_leaf(0.4),
            dm: g.scalar_leaf(0.6),
            dis: g.scalar_leaf(0.2),
        };
        let hp = HyperParams::default(); // alpha 1, beta 0.5, gamma 0.5
        let (total, breakdown) = total_objective(&mut g, &parts, &hp).unwrap();
        assert!((g.scalar(total) - 1.7).abs() < 1e-15);
        assert!(
            (breakdown.total
                - (breakdown.l_cls
                    + breakdown.beta * breakdown.l_dc
                    + breakdown.gamma * breakdown.l_dm
                    + breakdown.alpha * breakdown.l_dis))
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn total_objective_component_build_order_does_not_matter() {
        let build = |order_swapped: bool| {
            let mut g = Graph::new();
            let (dm, dc) = if order_swapped {
                let dc = g.scalar_leaf(0.4);
                let dm = g.scalar_leaf(0.6);
                (dm, dc)
            } else {
                let dm = g.scalar_leaf(0.6);
                let dc = g.scalar_leaf(0.4);
                (dm, dc)
            };
            let parts = LossParts {
                cls: g.scalar_leaf(1.0),
                dm,
                dc,
                dis: g.scalar_leaf(0.2),
            };
            let (total, _) = total_objective(&mut g, &parts, &HyperParams::default()).unwrap();
            g.scalar(total)
        };
        assert_eq!(build(false).to_bits(), build(true).to_bits());
    }
}
