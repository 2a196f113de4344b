//! The training loop, leave-one-domain-out evaluation, the component
//! ablation suite, and a finite-difference gradient checker for every loss.
//!
//! One optimizer step per mini-batch: forward through the enabled branches,
//! combine the enabled losses, backward, SGD-with-momentum update at the
//! scheduled learning rate. Training progress `p` counts optimizer steps and
//! drives both the learning-rate decay and the gradient-reversal coefficient
//! ramp-up.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Graph;
use crate::data::{DomainDataset, Sample};
use crate::error::Error;
use crate::losses::{
    classification_loss, discriminative_loss, global_domain_loss, local_domain_loss,
    total_objective, HyperParams, LossBreakdown, LossParts,
};
use crate::model::{softmax_rows, ArchSpec, DdianModel};
use crate::nn::{ParamId, Schedules, SgdMomentum};
use crate::rng::{derive, Rng};

const SALT_MODEL_INIT: u64 = 0x21;
const SALT_VAL_SPLIT: u64 = 0x22;
const SALT_GRADCHECK: u64 = 0x23;

/// Learning-rate boost for everything trained from scratch on top of the
/// feature extractor: classifier, discriminators, centers.
const HEAD_LR_MULTIPLIER: f64 = 10.0;

/// How the local alignment heads are gated per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalGate {
    /// Weight each head by the detached predicted class probability.
    Soft,
    /// Route each sample only through the head of its true class.
    Hard,
}

/// Full training configuration: hyperparameters, component ablation flags,
/// and the run seed. Disabling a component zeroes its weight and skips its
/// forward branch entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hp: HyperParams,
    pub use_global: bool,
    pub use_local: bool,
    pub use_discriminative: bool,
    pub local_gate: LocalGate,
    pub seed: u64,
    /// Evaluate on the held-back source-validation split every this many
    /// epochs (and always after the last).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hp: HyperParams::default(),
            use_global: true,
            use_local: true,
            use_discriminative: true,
            local_gate: LocalGate::Soft,
            seed: 0,
            eval_every: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.hp.validate()?;
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Weights actually applied: a disabled component contributes zero.
    pub fn effective_hp(&self) -> HyperParams {
        let mut hp = self.hp.clone();
        if !self.use_global {
            hp.gamma = 0.0;
        }
        if !self.use_local {
            hp.beta = 0.0;
        }
        if !self.use_discriminative {
            hp.alpha = 0.0;
        }
        hp
    }
}

/// Source-validation accuracy measured at one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochEval {
    pub epoch: usize,
    pub accuracy: f64,
}

/// Everything a run produced. Deterministic for a fixed `(config, data)`
/// except `wall_clock_secs`, which the caller measures and which is excluded
/// from serialized results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Mean loss components per epoch; length equals the epoch count.
    pub loss_series: Vec<LossBreakdown>,
    pub val_history: Vec<EpochEval>,
    /// Last source-validation accuracy; `None` if the split was empty.
    pub source_val_accuracy: Option<f64>,
    /// Filled by the caller after evaluating on the held-out domain;
    /// training itself never sees the target.
    pub target_accuracy: Option<f64>,
    pub seed: u64,
    pub config: TrainConfig,
    pub wall_clock_secs: f64,
}

fn collect_matrix<'a>(samples: impl Iterator<Item = &'a Sample>) -> (Vec<f64>, Vec<usize>, usize) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rows = 0;
    for s in samples {
        xs.extend_from_slice(&s.x);
        ys.push(s.y);
        rows += 1;
    }
    (xs, ys, rows)
}

fn accuracy(model: &DdianModel, xs: &[f64], ys: &[usize], rows: usize) -> Result<f64, Error> {
    let preds = model.predict(xs, rows)?;
    let correct = preds.iter().zip(ys).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / rows as f64)
}

/// Holds out 10% of the pooled source samples (keyed by the run seed) for
/// monitoring; returns the remaining 90% regrouped by domain.
fn split_validation(
    sources: &DomainDataset,
    seed: u64,
) -> Result<(DomainDataset, Vec<Sample>), Error> {
    let per_domain: Vec<Vec<Sample>> = (0..sources.num_domains())
        .map(|d| sources.samples(d).to_vec())
        .collect();
    let total: usize = per_domain.iter().map(|d| d.len()).sum();
    let val_count = total / 10;
    if val_count == 0 {
        return DomainDataset::from_grouped(
            per_domain,
            sources.domain_ids().to_vec(),
            sources.num_classes(),
            sources.feature_dim(),
        )
        .map(|ds| (ds, Vec::new()));
    }
    let mut slots: Vec<(usize, usize)> = per_domain
        .iter()
        .enumerate()
        .flat_map(|(d, dom)| (0..dom.len()).map(move |i| (d, i)))
        .collect();
    Rng::new(derive(seed, SALT_VAL_SPLIT)).shuffle(&mut slots);
    let val_slots = &slots[..val_count];
    let val_samples: Vec<Sample> = val_slots
        .iter()
        .map(|&(d, i)| per_domain[d][i].clone())
        .collect();
    let mut keep: Vec<Vec<bool>> = per_domain.iter().map(|dom| vec![true; dom.len()]).collect();
    for &(d, i) in val_slots {
        keep[d][i] = false;
    }
    let train_domains: Vec<Vec<Sample>> = per_domain
        .into_iter()
        .zip(keep)
        .map(|(dom, mask)| {
            dom.into_iter()
                .zip(mask)
                .filter_map(|(s, k)| k.then_some(s))
                .collect()
        })
        .collect();
    let train_ds = DomainDataset::from_grouped(
        train_domains,
        sources.domain_ids().to_vec(),
        sources.num_classes(),
        sources.feature_dim(),
    )?;
    Ok((train_ds, val_samples))
}

struct StepInputs<'a> {
    x: &'a [f64],
    rows: usize,
    y: &'a [usize],
    d: &'a [usize],
    lambda: f64,
    lr: f64,
}

fn train_step(
    model: &mut DdianModel,
    optimizer: &mut SgdMomentum,
    config: &TrainConfig,
    hp_eff: &HyperParams,
    inputs: &StepInputs<'_>,
) -> Result<LossBreakdown, Error> {
    let mut g = Graph::new();
    let bind = model.store().bind_all(&mut g);
    let x = g.leaf(inputs.x.to_vec(), inputs.rows, model.arch().input_dim)?;
    let features = model.feature_net().forward(&mut g, &bind, x)?;
    let class_logits = model.classifier().forward(&mut g, &bind, features)?;
    let cls = classification_loss(&mut g, class_logits, inputs.y)?;

    let dm = if config.use_global {
        global_domain_loss(
            &mut g,
            features,
            model.global_disc(),
            &bind,
            inputs.d,
            inputs.lambda,
        )?
    } else {
        g.zeros(1, 1)
    };

    let dc = if config.use_local {
        let k = model.arch().num_classes;
        let probs = match config.local_gate {
            LocalGate::Soft => softmax_rows(g.values(class_logits), inputs.rows, k),
            LocalGate::Hard => {
                let mut one_hot = vec![0.0; inputs.rows * k];
                for (i, &label) in inputs.y.iter().enumerate() {
                    one_hot[i * k + label] = 1.0;
                }
                one_hot
            }
        };
        let probs_t = g.leaf(probs, inputs.rows, k)?;
        local_domain_loss(
            &mut g,
            features,
            probs_t,
            model.local_heads(),
            &bind,
            inputs.d,
            inputs.lambda,
        )?
    } else {
        g.zeros(1, 1)
    };

    let dis = if config.use_discriminative {
        let centers = bind.tensor(model.centers_id());
        discriminative_loss(&mut g, features, centers, inputs.y, hp_eff.phi)?
    } else {
        g.zeros(1, 1)
    };

    let parts = LossParts { cls, dm, dc, dis };
    let (total, breakdown) = total_objective(&mut g, &parts, hp_eff)?;
    g.backward(total)?;
    optimizer.step(model.store_mut(), &g, &bind, inputs.lr);
    Ok(breakdown)
}

/// Trains a fresh model on the source domains only.
///
/// Fails before touching any parameter if a class is missing from a source
/// domain. Deterministic for a fixed `(config.seed, config, sources)`.
pub fn train(
    config: &TrainConfig,
    arch: &ArchSpec,
    sources: &DomainDataset,
) -> Result<(DdianModel, RunResult), Error> {
    config.validate()?;
    if let Some((domain, class)) = sources.missing_class() {
        return Err(Error::Protocol(format!(
            "class {class} has no samples in source domain {domain}"
        )));
    }
    let hp = &config.hp;
    let model_arch = arch.to_arch(
        sources.feature_dim(),
        sources.num_classes(),
        sources.num_domains(),
    );
    let mut model = DdianModel::new(model_arch, hp.clone(), derive(config.seed, SALT_MODEL_INIT))?;

    let (train_ds, val_samples) = split_validation(sources, config.seed)?;
    let (val_x, val_y, val_rows) = collect_matrix(val_samples.iter());

    let mut optimizer = SgdMomentum::new(model.store(), hp.momentum);
    let feature_ids = model.feature_param_ids();
    for i in 0..model.store().len() {
        let id = ParamId(i);
        if !feature_ids.contains(&id) {
            optimizer.set_lr_multiplier(id, HEAD_LR_MULTIPLIER);
        }
    }
    let schedules = Schedules::new(hp.eta0);
    let hp_eff = config.effective_hp();

    let steps_per_epoch = train_ds.total_len().div_ceil(hp.batch_size);
    let total_steps = (steps_per_epoch * hp.epochs) as f64;
    let mut done_steps = 0usize;
    let mut loss_series = Vec::with_capacity(hp.epochs);
    let mut val_history = Vec::new();

    for epoch in 0..hp.epochs {
        let mut sums = [0.0f64; 5];
        let mut batches_seen = 0usize;
        for batch in train_ds.batches(hp.batch_size, config.seed, epoch as u64)? {
            let p = done_steps as f64 / total_steps;
            let breakdown = train_step(
                &mut model,
                &mut optimizer,
                config,
                &hp_eff,
                &StepInputs {
                    x: &batch.x,
                    rows: batch.rows,
                    y: &batch.y,
                    d: &batch.d,
                    lambda: schedules.grl_lambda_at(p),
                    lr: schedules.lr_at(p),
                },
            )?;
            sums[0] += breakdown.l_cls;
            sums[1] += breakdown.l_dm;
            sums[2] += breakdown.l_dc;
            sums[3] += breakdown.l_dis;
            sums[4] += breakdown.total;
            batches_seen += 1;
            done_steps += 1;
        }
        let n = batches_seen as f64;
        loss_series.push(LossBreakdown {
            l_cls: sums[0] / n,
            l_dm: sums[1] / n,
            l_dc: sums[2] / n,
            l_dis: sums[3] / n,
            total: sums[4] / n,
            alpha: hp_eff.alpha,
            beta: hp_eff.beta,
            gamma: hp_eff.gamma,
            phi: hp_eff.phi,
        });
        let last_epoch = epoch + 1 == hp.epochs;
        if val_rows > 0 && ((epoch + 1) % config.eval_every == 0 || last_epoch) {
            val_history.push(EpochEval {
                epoch,
                accuracy: accuracy(&model, &val_x, &val_y, val_rows)?,
            });
        }
    }

    let result = RunResult {
        source_val_accuracy: val_history.last().map(|e| e.accuracy),
        loss_series,
        val_history,
        target_accuracy: None,
        seed: config.seed,
        config: config.clone(),
        wall_clock_secs: 0.0,
    };
    Ok((model, result))
}

/// Fraction of samples the model classifies correctly.
pub fn evaluate(model: &DdianModel, ds: &DomainDataset) -> Result<f64, Error> {
    if ds.feature_dim() != model.arch().input_dim {
        return Err(Error::Dimension {
            op: "evaluate",
            lhs: (1, ds.feature_dim()),
            rhs: (1, model.arch().input_dim),
        });
    }
    let refs = ds.pooled();
    let (xs, ys, rows) = collect_matrix(refs.into_iter());
    if rows == 0 {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    accuracy(model, &xs, &ys, rows)
}

/// The five ablation variants, in reporting order.
pub const ABLATION_VARIANTS: [(&str, [bool; 3]); 5] = [
    ("source_only", [false, false, false]),
    ("global_only", [true, false, false]),
    ("local_only", [false, true, false]),
    ("discriminative_only", [false, false, true]),
    ("full", [true, true, true]),
];

/// One (variant, seed) run of the ablation suite.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: &'static str,
    pub seed: u64,
    pub target_accuracy: f64,
    pub source_val_accuracy: Option<f64>,
    pub final_total_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub variant: &'static str,
    pub mean_target_accuracy: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std_target_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub summaries: Vec<VariantSummary>,
}

impl AblationReport {
    pub fn summary(&self, variant: &str) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant)
    }
}

/// Runs `{source-only, single components, full} x n_seeds` with identical
/// data splits across variants, holding out `target_id` for evaluation.
pub fn ablation_suite(
    base: &TrainConfig,
    arch: &ArchSpec,
    ds: &DomainDataset,
    target_id: usize,
    n_seeds: u64,
) -> Result<AblationReport, Error> {
    if n_seeds == 0 {
        return Err(Error::Config("n_seeds must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(5 * n_seeds as usize);
    let mut summaries = Vec::with_capacity(5);
    for (variant, [global, local, disc]) in ABLATION_VARIANTS {
        let mut accs = Vec::with_capacity(n_seeds as usize);
        for s in 0..n_seeds {
            let config = TrainConfig {
                use_global: global,
                use_local: local,
                use_discriminative: disc,
                seed: base.seed + s,
                ..base.clone()
            };
            let (sources, target) = ds.leave_one_out(target_id)?;
            let (model, result) = train(&config, arch, &sources)?;
            if target.read_count() != 0 {
                return Err(Error::Protocol(format!(
                    "target domain was read {} times during training",
                    target.read_count()
                )));
            }
            let target_accuracy = evaluate(&model, &target)?;
            accs.push(target_accuracy);
            rows.push(AblationRow {
                variant,
                seed: config.seed,
                target_accuracy,
                source_val_accuracy: result.source_val_accuracy,
                final_total_loss: result.loss_series.last().map(|b| b.total).unwrap_or(0.0),
            });
        }
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let std = if accs.len() > 1 {
            libm::sqrt(accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0))
        } else {
            0.0
        };
        summaries.push(VariantSummary {
            variant,
            mean_target_accuracy: mean,
            std_target_accuracy: std,
        });
    }
    Ok(AblationReport { rows, summaries })
}

/// Result of checking one loss's analytic gradients against central finite
/// differences over every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Per-loss gradient checks plus the combined-objective check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// One entry per loss term (classification, global alignment, local
    /// alignment, center, discriminative).
    pub losses: Vec<GradCheckEntry>,
    pub composite: GradCheckEntry,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn all_pass(&self) -> bool {
        self.losses.iter().all(|e| e.pass) && self.composite.pass
    }
}

const GRADCHECK_TOLERANCE: f64 = 1e-4;
const GRADCHECK_STEP: f64 = 1e-5;
const GRADCHECK_LAMBDA: f64 = 0.7;

struct CheckSetup {
    x: Vec<f64>,
    rows: usize,
    y: Vec<usize>,
    d: Vec<usize>,
    probs: Vec<f64>,
    hp: HyperParams,
}

/// Builds all five loss scalars on one graph, sharing the feature forward
/// pass. Class probabilities for the local loss are a fixed random input so
/// the analytic/finite-difference comparison is exact.
fn build_losses(
    g: &mut Graph,
    model: &DdianModel,
    bind: &crate::nn::Bindings,
    setup: &CheckSetup,
) -> Result<[crate::autodiff::Tensor; 5], Error> {
    let x = g.leaf(setup.x.clone(), setup.rows, model.arch().input_dim)?;
    let features = model.feature_net().forward(g, bind, x)?;
    let class_logits = model.classifier().forward(g, bind, features)?;
    let cls = classification_loss(g, class_logits, &setup.y)?;
    let dm = global_domain_loss(
        g,
        features,
        model.global_disc(),
        bind,
        &setup.d,
        GRADCHECK_LAMBDA,
    )?;
    let probs_t = g.leaf(setup.probs.clone(), setup.rows, model.arch().num_classes)?;
    let dc = local_domain_loss(
        g,
        features,
        probs_t,
        model.local_heads(),
        bind,
        &setup.d,
        GRADCHECK_LAMBDA,
    )?;
    let centers = bind.tensor(model.centers_id());
    let dis = discriminative_loss(g, features, centers, &setup.y, setup.hp.phi)?;
    let center = crate::losses::center_loss(g, features, centers, &setup.y)?;
    Ok([cls, dm, dc, dis, center])
}

fn component_values(model: &DdianModel, setup: &CheckSetup) -> [f64; 5] {
    let mut g = Graph::new();
    let bind = model.store().bind_all(&mut g);
    let roots = build_losses(&mut g, model, &bind, setup).expect("fixed check setup is valid");
    [
        g.scalar(roots[0]),
        g.scalar(roots[1]),
        g.scalar(roots[2]),
        g.scalar(roots[3]),
        g.scalar(roots[4]),
    ]
}

/// Analytic gradients of one root, flattened per parameter.
fn analytic_grads(model: &DdianModel, setup: &CheckSetup, which: usize) -> Vec<Vec<f64>> {
    let mut g = Graph::new();
    let bind = model.store().bind_all(&mut g);
    let roots = build_losses(&mut g, model, &bind, setup).expect("fixed check setup is valid");
    let root = if which < 5 {
        roots[which]
    } else {
        let parts = LossParts {
            cls: roots[0],
            dm: roots[1],
            dc: roots[2],
            dis: roots[3],
        };
        let (total, _) =
            total_objective(&mut g, &parts, &setup.hp).expect("loss parts are scalars");
        total
    };
    g.backward(root).expect("root is scalar");
    (0..model.store().len())
        .map(|i| g.grad(bind.tensor(ParamId(i))).to_vec())
        .collect()
}

/// Checks analytic gradients of each loss (and of the combined objective)
/// against central finite differences on a tiny random instance.
///
/// Parameters upstream of a gradient reversal are checked against the
/// reversal-scaled objective: their analytic gradient must equal `-lambda`
/// times the forward derivative of the raw discriminator loss.
pub fn gradient_check(seed: u64) -> GradCheckReport {
    let spec = ArchSpec {
        f_hidden: vec![4],
        feature_dim: 3,
        global_hidden: vec![3],
        local_hidden: vec![3],
    };
    let hp = HyperParams::default();
    let mut model = DdianModel::new(
        spec.to_arch(2, 3, 3),
        hp.clone(),
        derive(seed, SALT_MODEL_INIT),
    )
    .expect("fixed check architecture is valid");

    let mut rng = Rng::new(derive(seed, SALT_GRADCHECK));
    let rows = 3;
    let x: Vec<f64> = (0..rows * 2).map(|_| rng.normal()).collect();
    let y: Vec<usize> = (0..rows).map(|_| rng.next_index(3)).collect();
    let d: Vec<usize> = (0..rows).map(|_| rng.next_index(3)).collect();
    let probs: Vec<f64> = (0..rows)
        .flat_map(|_| {
            let raw: [f64; 3] = [
                rng.uniform(0.1, 1.0),
                rng.uniform(0.1, 1.0),
                rng.uniform(0.1, 1.0),
            ];
            let sum: f64 = raw.iter().sum();
            raw.map(|v| v / sum)
        })
        .collect();
    let setup = CheckSetup {
        x,
        rows,
        y,
        d,
        probs,
        hp: hp.clone(),
    };

    let feature_ids = model.feature_param_ids();
    let is_feature: Vec<bool> = (0..model.store().len())
        .map(|i| feature_ids.contains(&ParamId(i)))
        .collect();

    // Central finite differences of all five components per parameter scalar.
    let n_params = model.store().len();
    let mut fd: Vec<Vec<[f64; 5]>> = Vec::with_capacity(n_params);
    for p in 0..n_params {
        let len = model.store().buf(ParamId(p)).values.len();
        let mut per_scalar = Vec::with_capacity(len);
        for j in 0..len {
            let old = model.store().buf(ParamId(p)).values[j];
            model.store_mut().buf_mut(ParamId(p)).values[j] = old + GRADCHECK_STEP;
            let plus = component_values(&model, &setup);
            model.store_mut().buf_mut(ParamId(p)).values[j] = old - GRADCHECK_STEP;
            let minus = component_values(&model, &setup);
            model.store_mut().buf_mut(ParamId(p)).values[j] = old;
            let mut diffs = [0.0; 5];
            for c in 0..5 {
                diffs[c] = (plus[c] - minus[c]) / (2.0 * GRADCHECK_STEP);
            }
            per_scalar.push(diffs);
        }
        fd.push(per_scalar);
    }

    let rel = |a: f64, n: f64| (a - n).abs() / f64::max(1e-6, f64::max(a.abs(), n.abs()));
    let lambda = GRADCHECK_LAMBDA;
    let expected = |c: usize, p: usize, j: usize| -> f64 {
        let comp = fd[p][j];
        match c {
            // classification, center, discriminative: plain forward derivative
            0 => comp[0],
            4 => comp[4],
            3 => comp[3],
            // adversarial losses: feature-extractor parameters sit behind
            // the reversal
            1 | 2 => {
                if is_feature[p] {
                    -lambda * comp[c]
                } else {
                    comp[c]
                }
            }
            // combined objective
            _ => {
                if is_feature[p] {
                    comp[0] + setup.hp.alpha * comp[3]
                        - lambda * (setup.hp.beta * comp[2] + setup.hp.gamma * comp[1])
                } else {
                    comp[0]
                        + setup.hp.beta * comp[2]
                        + setup.hp.gamma * comp[1]
                        + setup.hp.alpha * comp[3]
                }
            }
        }
    };

    let names = [
        "classification",
        "global_domain",
        "local_domain",
        "discriminative",
        "center",
    ];
    let mut entries = Vec::with_capacity(6);
    for c in 0..6 {
        let grads = analytic_grads(&model, &setup, if c < 5 { c } else { 5 });
        let mut max_rel: f64 = 0.0;
        for p in 0..n_params {
            for (j, &a) in grads[p].iter().enumerate() {
                max_rel = max_rel.max(rel(a, expected(c, p, j)));
            }
        }
        entries.push(GradCheckEntry {
            name: if c < 5 { names[c] } else { "total_objective" },
            max_rel_err: max_rel,
            pass: max_rel < GRADCHECK_TOLERANCE,
        });
    }
    let composite = entries.pop().expect("six entries built");
    GradCheckReport {
        losses: entries,
        composite,
        tolerance: GRADCHECK_TOLERANCE,
    }
}
