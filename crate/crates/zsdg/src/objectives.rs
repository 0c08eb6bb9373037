//! Training objectives.
//!
//! Three semantically constrained objectives plus their vanilla baselines:
//!
//! * aggregation: cross-entropy over pooled source domains, optionally plus
//!   a weighted semantic-alignment term;
//! * multi-task autoencoding: a shared encoder with per-domain decoders,
//!   self- and cross-domain reconstruction, optionally plus the semantic
//!   term;
//! * feature critic: a meta-learned auxiliary loss that scores extractor
//!   features, trained from simulated domain shift between a meta-train and
//!   a meta-test split of the source domains.
//!
//! Vanilla variants are the same code paths with the semantic weight at
//! zero (and, for aggregation parity tests, no semantic bookkeeping at
//! all: a zero weight skips building the semantic branch entirely).
//!
//! The critic update is first-order: the virtual parameter steps are taken
//! on detached copies, the meta advantage `tanh(ce' - ce'')` is computed as
//! a plain number, and the critic descends `advantage * d(aux)/d(omega)`.
//! No second-order gradients flow through the inner update.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, Optimizer, Tensor};
use crate::embeddings::{semantic_loss, EmbeddingTable};
use crate::error::{Error, Result};
use crate::models::{BoundModel, ModelBundle};

/// Loss weighting: `lambda` scales the semantic term; `eta` is the
/// regularization weight, consumed by the optimizer as decoupled weight
/// decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub eta: f64,
}

impl LossWeights {
    pub fn new(lambda: f64, eta: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0 && eta.is_finite() && eta >= 0.0) {
            return Err(Error::usage(format!(
                "loss weights must be finite and nonnegative, got lambda={lambda} eta={eta}"
            )));
        }
        Ok(LossWeights { lambda, eta })
    }
}

/// One prepared minibatch: pixels, head-class indices, and label names for
/// embedding lookup.
pub struct ObjectiveBatch<'a> {
    pub x: Tensor,
    /// Index of each example's class within the head's class list.
    pub class_indices: Vec<usize>,
    /// Class names, for the embedding table.
    pub label_names: Vec<&'a str>,
}

impl ObjectiveBatch<'_> {
    fn check(&self) -> Result<()> {
        let rows = self.x.rows();
        if rows != self.class_indices.len() || rows != self.label_names.len() {
            return Err(Error::usage(format!(
                "batch of {rows} rows with {} indices / {} names",
                self.class_indices.len(),
                self.label_names.len()
            )));
        }
        Ok(())
    }
}

/// Loss nodes produced by an aggregation forward pass.
#[derive(Debug)]
pub struct AggTerms {
    pub total: NodeId,
    pub ce: NodeId,
    /// Unweighted semantic term; absent when lambda is zero.
    pub semantic: Option<NodeId>,
}

/// Cross-entropy on pooled-domain batches plus `lambda *` semantic
/// alignment. With `lambda == 0` the semantic branch is not built, so the
/// graph is identical to the vanilla aggregation objective.
pub fn s_agg_loss(
    g: &mut Graph,
    bound: &BoundModel,
    x: NodeId,
    batch: &ObjectiveBatch,
    table: &EmbeddingTable,
    weights: &LossWeights,
) -> Result<AggTerms> {
    batch.check()?;
    let features = bound.extract(g, x)?;
    let logits = bound.classify(g, features)?;
    let ce = g.softmax_cross_entropy(logits, &batch.class_indices)?;
    if weights.lambda == 0.0 {
        return Ok(AggTerms {
            total: ce,
            ce,
            semantic: None,
        });
    }
    let sem = semantic_loss(g, features, &batch.label_names, table)?;
    let sem_weighted = g.scale(sem, weights.lambda)?;
    let total = g.add(ce, sem_weighted)?;
    Ok(AggTerms {
        total,
        ce,
        semantic: Some(sem),
    })
}

/// Loss nodes produced by a multi-task autoencoder forward pass.
#[derive(Debug)]
pub struct MtaeTerms {
    pub total: NodeId,
    /// Sum over decoders of reconstruction MSE.
    pub reconstruction: NodeId,
    pub semantic: Option<NodeId>,
}

/// Encode one source-domain batch and reconstruct the index-aligned pixels
/// of every training domain through its own decoder; sum the per-decoder
/// MSEs and add `lambda *` semantic alignment of the encoded features.
/// `paired_targets[j]` must hold the same batch rows as drawn from domain
/// `j` (self-reconstruction included).
#[allow(clippy::too_many_arguments)]
pub fn s_mtae_loss(
    g: &mut Graph,
    bound: &BoundModel,
    bundle: &ModelBundle,
    x_source: NodeId,
    paired_targets: &[Tensor],
    batch: &ObjectiveBatch,
    table: &EmbeddingTable,
    weights: &LossWeights,
) -> Result<MtaeTerms> {
    batch.check()?;
    let n_decoders = bundle.n_decoders();
    if n_decoders == 0 {
        return Err(Error::usage("multi-task autoencoding needs a decoder bank"));
    }
    if paired_targets.len() != n_decoders {
        return Err(Error::usage(format!(
            "{} paired targets for {} decoders: domains misaligned",
            paired_targets.len(),
            n_decoders
        )));
    }
    let src_shape = g.value(x_source).shape().to_vec();
    for (j, t) in paired_targets.iter().enumerate() {
        if t.shape() != src_shape.as_slice() {
            return Err(Error::usage(format!(
                "paired target for domain {j} has shape {:?}, source batch is {:?}: domains misaligned",
                t.shape(),
                src_shape
            )));
        }
    }
    let features = bound.extract(g, x_source)?;
    let mut recon: Option<NodeId> = None;
    for (j, target) in paired_targets.iter().enumerate() {
        let decoded = bound.decode(g, j, features)?;
        let target_id = g.leaf(target.clone());
        let mse = g.mse_loss(decoded, target_id)?;
        recon = Some(match recon {
            Some(acc) => g.add(acc, mse)?,
            None => mse,
        });
    }
    let reconstruction = recon.expect("at least one decoder");
    if weights.lambda == 0.0 {
        return Ok(MtaeTerms {
            total: reconstruction,
            reconstruction,
            semantic: None,
        });
    }
    let sem = semantic_loss(g, features, &batch.label_names, table)?;
    let sem_weighted = g.scale(sem, weights.lambda)?;
    let total = g.add(reconstruction, sem_weighted)?;
    Ok(MtaeTerms {
        total,
        reconstruction,
        semantic: Some(sem),
    })
}

/// Within-training partition of the source domains used by the feature
/// critic to simulate domain shift.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaSplit {
    pub meta_train: Vec<usize>,
    pub meta_test: Vec<usize>,
}

/// Seeded random 3:2 partition of `0..domain_count` (sizes
/// `round(count*3/5)` and the remainder, both nonempty). Resample every
/// meta-iteration.
pub fn sample_meta_split(domain_count: usize, seed: u64) -> Result<MetaSplit> {
    if domain_count < 2 {
        return Err(Error::usage(
            "meta split needs at least 2 training domains",
        ));
    }
    let k = ((domain_count as f64 * 3.0 / 5.0).round() as usize).clamp(1, domain_count - 1);
    let mut order: Vec<usize> = (0..domain_count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut meta_train = order[..k].to_vec();
    let mut meta_test = order[k..].to_vec();
    meta_train.sort_unstable();
    meta_test.sort_unstable();
    Ok(MetaSplit {
        meta_train,
        meta_test,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FcStepOptions {
    /// Step size of the virtual extractor update inside the critic branch.
    pub inner_lr: f64,
    /// Drop the auxiliary term entirely (degenerate vanilla-AGG check).
    pub include_aux: bool,
}

/// Per-step report: loss terms on the meta-train batch, the two meta-test
/// cross-entropies under the virtual updates, and the critic's meta
/// advantage.
#[derive(Debug, Clone, Copy)]
pub struct FcDiagnostics {
    pub ce: f64,
    /// Unweighted semantic term (zero when lambda is zero).
    pub semantic: f64,
    pub aux: f64,
    pub meta_ce_with_aux: f64,
    pub meta_ce_without_aux: f64,
    /// `tanh(meta_ce_with_aux - meta_ce_without_aux)`.
    pub advantage: f64,
}

fn add_maps(
    a: &std::collections::BTreeMap<String, Tensor>,
    b: &std::collections::BTreeMap<String, Tensor>,
) -> std::collections::BTreeMap<String, Tensor> {
    let mut out = a.clone();
    for (name, tb) in b {
        let entry = out.get_mut(name).expect("same parameter sets");
        for (x, y) in entry.values_mut().iter_mut().zip(tb.values()) {
            *x += y;
        }
    }
    out
}

/// Evaluate meta-test cross-entropy under a virtual extractor, head shared.
fn meta_test_ce(bundle: &ModelBundle, batch: &ObjectiveBatch) -> Result<f64> {
    let mut g = Graph::new();
    let bound = bundle.bind(&mut g);
    let x = g.leaf(batch.x.clone());
    let f = bound.extract(&mut g, x)?;
    let logits = bound.classify(&mut g, f)?;
    let ce = g.softmax_cross_entropy(logits, &batch.class_indices)?;
    Ok(g.value(ce).item())
}

/// Apply `params[name] -= step * grads[name]` to a bundle copy, extractor
/// parameters only.
fn virtual_extractor_step(
    bundle: &ModelBundle,
    grads: &std::collections::BTreeMap<String, Tensor>,
    step: f64,
) -> ModelBundle {
    let mut virt = bundle.clone();
    for (name, param) in virt.params_mut() {
        if !name.starts_with("extractor.") {
            continue;
        }
        if let Some(g) = grads.get(&name) {
            for (p, gv) in param.values_mut().iter_mut().zip(g.values()) {
                *p -= step * gv;
            }
        }
    }
    virt
}

/// One feature-critic training step.
///
/// 1. Base update: one optimizer step on the meta-train loss
///    `ce + lambda * semantic + aux` for the extractor and head.
/// 2. Critic update: virtual extractor steps with and without the auxiliary
///    gradient, meta-test cross-entropy under both (head shared), meta
///    advantage `tanh(ce_with - ce_without)`, then one optimizer step on
///    the critic along `advantage * d(aux)/d(omega)`.
///
/// All gradients are taken at the step's starting parameters; updates are
/// applied at the end.
#[allow(clippy::too_many_arguments)]
pub fn s_fc_step(
    bundle: &mut ModelBundle,
    model_opt: &mut Optimizer,
    critic_opt: &mut Optimizer,
    meta_train: &ObjectiveBatch,
    meta_test: &ObjectiveBatch,
    table: &EmbeddingTable,
    weights: &LossWeights,
    opts: &FcStepOptions,
) -> Result<FcDiagnostics> {
    meta_train.check()?;
    meta_test.check()?;
    if meta_test.class_indices.is_empty() {
        return Err(Error::stats("empty meta-test batch"));
    }
    if opts.include_aux && bundle.critic.is_none() {
        return Err(Error::usage("feature-critic step needs a critic"));
    }

    // Base-loss graph: ce + lambda * semantic on the meta-train batch.
    let mut g_base = Graph::new();
    let bound = bundle.bind(&mut g_base);
    let x = g_base.leaf(meta_train.x.clone());
    let agg = s_agg_loss(&mut g_base, &bound, x, meta_train, table, weights)?;
    let ce_value = g_base.value(agg.ce).item();
    let sem_value = agg.semantic.map_or(0.0, |s| g_base.value(s).item());
    g_base.backward(agg.total)?;
    let base_grads = bound.grads(&g_base, bundle);

    // Auxiliary graph: critic score of the same batch's features.
    let (aux_value, aux_grads) = if opts.include_aux {
        let mut g_aux = Graph::new();
        let bound_aux = bundle.bind(&mut g_aux);
        let x_aux = g_aux.leaf(meta_train.x.clone());
        let f_aux = bound_aux.extract(&mut g_aux, x_aux)?;
        let aux = bound_aux.criticize(&mut g_aux, f_aux)?;
        let value = g_aux.value(aux).item();
        g_aux.backward(aux)?;
        (value, Some(bound_aux.grads(&g_aux, bundle)))
    } else {
        (0.0, None)
    };

    // Virtual extractor branches and the meta advantage.
    let (meta_with, meta_without, advantage) = match &aux_grads {
        Some(aux_grads) => {
            let combined = add_maps(&base_grads, aux_grads);
            let with_aux = virtual_extractor_step(bundle, &combined, opts.inner_lr);
            let without_aux = virtual_extractor_step(bundle, &base_grads, opts.inner_lr);
            let ce_with = meta_test_ce(&with_aux, meta_test)?;
            let ce_without = meta_test_ce(&without_aux, meta_test)?;
            (ce_with, ce_without, (ce_with - ce_without).tanh())
        }
        None => {
            let virt = virtual_extractor_step(bundle, &base_grads, opts.inner_lr);
            let ce = meta_test_ce(&virt, meta_test)?;
            (ce, ce, 0.0)
        }
    };

    // Base update on extractor + head.
    let mut model_grads = match &aux_grads {
        Some(aux_grads) => add_maps(&base_grads, aux_grads),
        None => base_grads,
    };
    model_grads.retain(|name, _| !name.starts_with("critic."));
    let mut model_params: Vec<(String, &mut Tensor)> = bundle
        .params_mut()
        .into_iter()
        .filter(|(name, _)| !name.starts_with("critic."))
        .collect();
    model_opt.step(&mut model_params, &model_grads)?;

    // Critic update along the advantage-weighted auxiliary gradient.
    if let Some(aux_grads) = aux_grads {
        let mut critic_grads = aux_grads;
        critic_grads.retain(|name, _| name.starts_with("critic."));
        for t in critic_grads.values_mut() {
            for v in t.values_mut() {
                *v *= advantage;
            }
        }
        let mut critic_params: Vec<(String, &mut Tensor)> = bundle
            .params_mut()
            .into_iter()
            .filter(|(name, _)| name.starts_with("critic."))
            .collect();
        critic_opt.step(&mut critic_params, &critic_grads)?;
    }

    Ok(FcDiagnostics {
        ce: ce_value,
        semantic: sem_value,
        aux: aux_value,
        meta_ce_with_aux: meta_with,
        meta_ce_without_aux: meta_without,
        advantage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::OptimizerSpec;
    use crate::models::{ArchSpec, BundleParts};

    fn table_1d() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            [("a".to_string(), vec![1.0]), ("b".to_string(), vec![-1.0])],
            false,
        )
        .unwrap()
    }

    fn table_4d() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            [
                ("a".to_string(), vec![1.0, 0.0, 0.0, 0.0]),
                ("b".to_string(), vec![0.0, 1.0, 0.0, 0.0]),
                ("c".to_string(), vec![0.0, 0.0, 1.0, 0.0]),
            ],
            false,
        )
        .unwrap()
    }

    fn demo_bundle(parts: BundleParts, seed: u64) -> ModelBundle {
        let arch = ArchSpec {
            extractor_hidden: vec![6],
            decoder_hidden: vec![6],
            critic_hidden: vec![5],
        };
        ModelBundle::init(8, 4, 3, 2, &arch, parts, seed).unwrap()
    }

    fn demo_batch(table: &EmbeddingTable) -> ObjectiveBatch<'static> {
        let _ = table;
        let x = Tensor::new(vec![3, 8], (0..24).map(|i| (i % 5) as f64 / 5.0).collect()).unwrap();
        ObjectiveBatch {
            x,
            class_indices: vec![0, 1, 2],
            label_names: vec!["a", "b", "c"],
        }
    }

    #[test]
    fn agg_with_zero_lambda_is_plain_ce() {
        let table = table_4d();
        let bundle = demo_bundle(
            BundleParts {
                head: true,
                decoders: false,
                critic: false,
            },
            3,
        );
        let batch = demo_batch(&table);
        let w0 = LossWeights::new(0.0, 0.0).unwrap();
        let mut g = Graph::new();
        let bound = bundle.bind(&mut g);
        let x = g.leaf(batch.x.clone());
        let terms = s_agg_loss(&mut g, &bound, x, &batch, &table, &w0).unwrap();
        assert!(terms.semantic.is_none());
        assert_eq!(terms.total, terms.ce);
    }

    #[test]
    fn agg_semantic_term_vanishes_at_exact_embeddings() {
        // features frozen at the exact embeddings: total == ce
        let mut bundle = demo_bundle(
            BundleParts {
                head: true,
                decoders: false,
                critic: false,
            },
            4,
        );
        // a zeroed extractor puts every feature row at the origin; an
        // all-zero embedding table makes that the exact target
        for (name, t) in bundle.params_mut() {
            if name.starts_with("extractor.") {
                for v in t.values_mut() {
                    *v = 0.0;
                }
            }
        }
        let zero_table = EmbeddingTable::from_entries(
            [
                ("a".to_string(), vec![0.0; 4]),
                ("b".to_string(), vec![0.0; 4]),
                ("c".to_string(), vec![0.0; 4]),
            ],
            false,
        )
        .unwrap();
        let batch = demo_batch(&zero_table);
        let w = LossWeights::new(2.5, 0.0).unwrap();
        let mut g = Graph::new();
        let bound = bundle.bind(&mut g);
        let x = g.leaf(batch.x.clone());
        let terms = s_agg_loss(&mut g, &bound, x, &batch, &zero_table, &w).unwrap();
        assert_eq!(g.value(terms.semantic.unwrap()).item(), 0.0);
        assert_eq!(g.value(terms.total).item(), g.value(terms.ce).item());
    }

    #[test]
    fn agg_lambda_linearity_two_evaluations() {
        let table = table_4d();
        let bundle = demo_bundle(
            BundleParts {
                head: true,
                decoders: false,
                critic: false,
            },
            5,
        );
        let batch = demo_batch(&table);
        let eval = |lambda: f64| -> (f64, f64) {
            let mut g = Graph::new();
            let bound = bundle.bind(&mut g);
            let x = g.leaf(batch.x.clone());
            let t = s_agg_loss(
                &mut g,
                &bound,
                x,
                &batch,
                &table,
                &LossWeights::new(lambda, 0.0).unwrap(),
            )
            .unwrap();
            let sem = t.semantic.map_or(0.0, |s| g.value(s).item());
            (g.value(t.total).item(), sem)
        };
        let (t1, sem) = eval(1.0);
        let (t2, sem2) = eval(2.0);
        assert_eq!(sem, sem2);
        assert!(((t2 - t1) - sem).abs() < 1e-12);
    }

    #[test]
    fn mtae_identity_composition_gives_zero_reconstruction() {
        // one decoder preset to invert a linear encoder on its range:
        // encoder = identity on 4 dims (input 4, h 4), decoder = identity.
        let arch = ArchSpec {
            extractor_hidden: vec![],
            decoder_hidden: vec![],
            critic_hidden: vec![],
        };
        let mut bundle = ModelBundle::init(
            4,
            4,
            2,
            1,
            &arch,
            BundleParts {
                head: false,
                decoders: true,
                critic: false,
            },
            0,
        )
        .unwrap();
        for (name, t) in bundle.params_mut() {
            let vals = t.values_mut();
            if name.ends_with(".w0") {
                for v in vals.iter_mut() {
                    *v = 0.0;
                }
                // identity 4x4
                for i in 0..4 {
                    vals[i * 4 + i] = 1.0;
                }
            } else {
                for v in vals.iter_mut() {
                    *v = 0.0;
                }
            }
        }
        let x = Tensor::new(vec![2, 4], vec![0.1, 0.5, 0.9, 0.0, 1.0, 0.2, 0.3, 0.4]).unwrap();
        let batch = ObjectiveBatch {
            x: x.clone(),
            class_indices: vec![0, 1],
            label_names: vec!["a", "b"],
        };
        let mut g = Graph::new();
        let bound = bundle.bind(&mut g);
        let xid = g.leaf(x.clone());
        let terms = s_mtae_loss(
            &mut g,
            &bound,
            &bundle,
            xid,
            &[x],
            &batch,
            &table_4d(),
            &LossWeights::new(0.0, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(g.value(terms.reconstruction).item(), 0.0);
        assert!(terms.semantic.is_none());
    }

    #[test]
    fn mtae_matches_term_by_term_oracle() {
        let table = table_4d();
        let bundle = demo_bundle(
            BundleParts {
                head: false,
                decoders: true,
                critic: false,
            },
            11,
        );
        let batch = demo_batch(&table);
        let targets = [
            Tensor::new(vec![3, 8], vec![0.25; 24]).unwrap(),
            Tensor::new(vec![3, 8], vec![0.75; 24]).unwrap(),
        ];
        let lambda = 1.5;
        let mut g = Graph::new();
        let bound = bundle.bind(&mut g);
        let x = g.leaf(batch.x.clone());
        let terms = s_mtae_loss(
            &mut g,
            &bound,
            &bundle,
            x,
            &targets,
            &batch,
            &table,
            &LossWeights::new(lambda, 0.0).unwrap(),
        )
        .unwrap();
        let total = g.value(terms.total).item();

        // independent recomputation: three separate forward graphs
        let mut oracle = 0.0;
        for (j, target) in targets.iter().enumerate() {
            let mut g2 = Graph::new();
            let bound2 = bundle.bind(&mut g2);
            let x2 = g2.leaf(batch.x.clone());
            let f2 = bound2.extract(&mut g2, x2).unwrap();
            let dec = bound2.decode(&mut g2, j, f2).unwrap();
            let t2 = g2.leaf(target.clone());
            let mse = g2.mse_loss(dec, t2).unwrap();
            oracle += g2.value(mse).item();
        }
        {
            let mut g3 = Graph::new();
            let bound3 = bundle.bind(&mut g3);
            let x3 = g3.leaf(batch.x.clone());
            let f3 = bound3.extract(&mut g3, x3).unwrap();
            let sem = semantic_loss(&mut g3, f3, &batch.label_names, &table).unwrap();
            oracle += lambda * g3.value(sem).item();
        }
        assert!((total - oracle).abs() < 1e-12, "{total} vs {oracle}");
    }

    #[test]
    fn mtae_misaligned_pairing_rejected() {
        let table = table_4d();
        let bundle = demo_bundle(
            BundleParts {
                head: false,
                decoders: true,
                critic: false,
            },
            2,
        );
        let batch = demo_batch(&table);
        let mut g = Graph::new();
        let bound = bundle.bind(&mut g);
        let x = g.leaf(batch.x.clone());
        // wrong target count
        let err = s_mtae_loss(
            &mut g,
            &bound,
            &bundle,
            x,
            &[Tensor::new(vec![3, 8], vec![0.0; 24]).unwrap()],
            &batch,
            &table,
            &LossWeights::new(0.0, 0.0).unwrap(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("misaligned"), "{err}");
        // wrong target shape
        let err = s_mtae_loss(
            &mut g,
            &bound,
            &bundle,
            x,
            &[
                Tensor::new(vec![2, 8], vec![0.0; 16]).unwrap(),
                Tensor::new(vec![3, 8], vec![0.0; 24]).unwrap(),
            ],
            &batch,
            &table,
            &LossWeights::new(0.0, 0.0).unwrap(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("misaligned"), "{err}");
    }

    #[test]
    fn meta_split_sizes_and_partition() {
        let split = sample_meta_split(5, 42).unwrap();
        assert_eq!(split.meta_train.len(), 3);
        assert_eq!(split.meta_test.len(), 2);
        let mut all: Vec<usize> = split
            .meta_train
            .iter()
            .chain(&split.meta_test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert!(sample_meta_split(1, 0).is_err());
    }

    #[test]
    fn meta_split_frequency_is_three_fifths() {
        let draws = 10_000;
        let mut counts = [0usize; 5];
        for seed in 0..draws {
            let split = sample_meta_split(5, seed).unwrap();
            for &d in &split.meta_train {
                counts[d] += 1;
            }
        }
        for (d, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.6).abs() < 0.02, "domain {d} frequency {freq}");
        }
    }

    // With the decoders bypassed (reconstruction masked to zero), training
    // reduces to pure semantic regression: features converge toward their
    // class embeddings.
    #[test]
    fn semantic_regression_pulls_features_to_embeddings() {
        use crate::autodiff::OptimizerSpec;
        let table = EmbeddingTable::from_entries(
            [
                ("a".to_string(), vec![1.0, -0.5, 0.25, 2.0]),
                ("b".to_string(), vec![-1.5, 0.75, -0.25, -1.0]),
            ],
            false,
        )
        .unwrap();
        let arch = ArchSpec {
            extractor_hidden: vec![10],
            decoder_hidden: vec![6],
            critic_hidden: vec![],
        };
        let mut bundle = ModelBundle::init(
            6,
            4,
            2,
            1,
            &arch,
            BundleParts {
                head: false,
                decoders: true,
                critic: false,
            },
            3,
        )
        .unwrap();
        let x = Tensor::new(
            vec![4, 6],
            vec![
                0.9, 0.8, 0.7, 0.1, 0.0, 0.1, // class a
                0.1, 0.0, 0.2, 0.9, 1.0, 0.8, // class b
                0.8, 0.9, 0.8, 0.0, 0.1, 0.0, // class a
                0.0, 0.1, 0.1, 0.8, 0.9, 0.9, // class b
            ],
        )
        .unwrap();
        let names = ["a", "b", "a", "b"];
        let mean_distance = |bundle: &ModelBundle| -> f64 {
            let f = bundle.extract_values(&x).unwrap();
            let mut total = 0.0;
            for (r, name) in names.iter().enumerate() {
                let w = table.lookup(name).unwrap();
                total += f
                    .row(r)
                    .iter()
                    .zip(&w)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
            }
            total / names.len() as f64
        };
        let initial = mean_distance(&bundle);
        let mut opt = Optimizer::new(OptimizerSpec::adam(1e-2)).unwrap();
        for _ in 0..300 {
            let mut g = Graph::new();
            let bound = bundle.bind(&mut g);
            let xid = g.leaf(x.clone());
            let f = bound.extract(&mut g, xid).unwrap();
            let loss = semantic_loss(&mut g, f, &names, &table).unwrap();
            g.backward(loss).unwrap();
            let grads = bound.grads(&g, &bundle);
            let mut params = bundle.params_mut();
            opt.step(&mut params, &grads).unwrap();
        }
        let final_distance = mean_distance(&bundle);
        assert!(
            final_distance < 0.1 * initial,
            "mean feature-to-embedding distance {final_distance} vs initial {initial}"
        );
    }

    fn fc_batches(table: &EmbeddingTable) -> (ObjectiveBatch<'static>, ObjectiveBatch<'static>) {
        let _ = table;
        let train = ObjectiveBatch {
            x: Tensor::new(vec![2, 8], (0..16).map(|i| (i % 3) as f64 / 3.0).collect()).unwrap(),
            class_indices: vec![0, 2],
            label_names: vec!["a", "c"],
        };
        let test = ObjectiveBatch {
            x: Tensor::new(vec![2, 8], (0..16).map(|i| (i % 4) as f64 / 4.0).collect()).unwrap(),
            class_indices: vec![1, 0],
            label_names: vec!["b", "a"],
        };
        (train, test)
    }

    #[test]
    fn critic_silenced_by_large_negative_bias_gives_zero_advantage() {
        let table = table_4d();
        let mut bundle = demo_bundle(
            BundleParts {
                head: true,
                decoders: false,
                critic: true,
            },
            21,
        );
        // push the critic's final pre-softplus activation to -1000: softplus
        // underflows to exactly 0 and so does its gradient
        if let Some(critic) = &mut bundle.critic {
            let last = critic.layers() - 1;
            for (name, t) in critic.params_mut("critic") {
                if name == format!("critic.b{last}") {
                    for v in t.values_mut() {
                        *v = -1000.0;
                    }
                }
            }
        }
        let (train, test) = fc_batches(&table);
        let mut model_opt = Optimizer::new(OptimizerSpec::adam(1e-3)).unwrap();
        let mut critic_opt = Optimizer::new(OptimizerSpec::adam(1e-3)).unwrap();
        let diag = s_fc_step(
            &mut bundle,
            &mut model_opt,
            &mut critic_opt,
            &train,
            &test,
            &table,
            &LossWeights::new(1.0, 0.0).unwrap(),
            &FcStepOptions {
                inner_lr: 1e-3,
                include_aux: true,
            },
        )
        .unwrap();
        assert_eq!(diag.aux, 0.0);
        assert_eq!(diag.meta_ce_with_aux, diag.meta_ce_without_aux);
        assert_eq!(diag.advantage, 0.0);
    }

    #[test]
    fn lambda_zero_without_aux_equals_vanilla_agg_step() {
        let table = table_4d();
        let parts = BundleParts {
            head: true,
            decoders: false,
            critic: true,
        };
        let bundle0 = demo_bundle(parts, 33);
        let (train, test) = fc_batches(&table);
        let w0 = LossWeights::new(0.0, 0.0).unwrap();

        // path 1: fc step with lambda 0 and the critic term dropped
        let mut fc_bundle = bundle0.clone();
        let mut model_opt = Optimizer::new(OptimizerSpec::adam(1e-3)).unwrap();
        let mut critic_opt = Optimizer::new(OptimizerSpec::adam(1e-3)).unwrap();
        s_fc_step(
            &mut fc_bundle,
            &mut model_opt,
            &mut critic_opt,
            &train,
            &test,
            &table,
            &w0,
            &FcStepOptions {
                inner_lr: 1e-3,
                include_aux: false,
            },
        )
        .unwrap();

        // path 2: one vanilla aggregation step on the same meta-train batch
        let mut agg_bundle = bundle0.clone();
        let mut g = Graph::new();
        let bound = agg_bundle.bind(&mut g);
        let x = g.leaf(train.x.clone());
        let terms = s_agg_loss(&mut g, &bound, x, &train, &table, &w0).unwrap();
        g.backward(terms.total).unwrap();
        let mut grads = bound.grads(&g, &agg_bundle);
        grads.retain(|name, _| !name.starts_with("critic."));
        let mut opt = Optimizer::new(OptimizerSpec::adam(1e-3)).unwrap();
        let mut params: Vec<(String, &mut Tensor)> = agg_bundle
            .params_mut()
            .into_iter()
            .filter(|(n, _)| !n.starts_with("critic."))
            .collect();
        opt.step(&mut params, &grads).unwrap();

        for ((na, ta), (nb, tb)) in fc_bundle.params().iter().zip(agg_bundle.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.values(), tb.values(), "parameter {na} diverged");
        }
    }

    #[test]
    fn fc_step_preserves_shapes_and_table() {
        let table = table_4d();
        let before_vec = table.lookup("a").unwrap();
        let mut bundle = demo_bundle(
            BundleParts {
                head: true,
                decoders: false,
                critic: true,
            },
            55,
        );
        let shapes: Vec<Vec<usize>> = bundle
            .params()
            .iter()
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        let (train, test) = fc_batches(&table);
        let mut model_opt = Optimizer::new(OptimizerSpec::adam(1e-3)).unwrap();
        let mut critic_opt = Optimizer::new(OptimizerSpec::adam(1e-3)).unwrap();
        s_fc_step(
            &mut bundle,
            &mut model_opt,
            &mut critic_opt,
            &train,
            &test,
            &table,
            &LossWeights::new(0.5, 0.0).unwrap(),
            &FcStepOptions {
                inner_lr: 1e-3,
                include_aux: true,
            },
        )
        .unwrap();
        let after: Vec<Vec<usize>> = bundle
            .params()
            .iter()
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        assert_eq!(shapes, after);
        assert_eq!(table.lookup("a").unwrap(), before_vec);
    }

    // Full two-branch update on a tiny scalar model, recomputed by a
    // hand-rolled oracle.
    #[test]
    fn fc_step_matches_scalar_hand_oracle() {
        let table = table_1d();
        let arch = ArchSpec {
            extractor_hidden: vec![],
            decoder_hidden: vec![],
            critic_hidden: vec![],
        };
        let mut bundle = ModelBundle::init(
            1,
            1,
            2,
            1,
            &arch,
            BundleParts {
                head: true,
                decoders: false,
                critic: true,
            },
            77,
        )
        .unwrap();
        // force distinct, hand-pickable scalar parameters
        let assign: &[(&str, f64)] = &[
            ("extractor.w0", 0.7),
            ("extractor.b0", 0.1),
            ("head.w0", 0.4), // first of two head weights
            ("critic.w0", 0.9),
            ("critic.b0", -0.2),
        ];
        for (name, t) in bundle.params_mut() {
            for (target, v) in assign {
                if name == *target && t.numel() == 1 {
                    t.values_mut()[0] = *v;
                }
            }
            if name == "head.w0" {
                t.values_mut().copy_from_slice(&[0.4, -0.3]);
            }
            if name == "head.b0" {
                t.values_mut().copy_from_slice(&[0.05, -0.05]);
            }
        }
        let lr = 0.01;
        let inner_lr = 0.02;
        let lambda = 0.8;
        let x_tr = 0.6;
        let y_tr = 0usize; // class "a", embedding +1
        let x_ts = -0.4;
        let y_ts = 1usize; // class "b"

        let train = ObjectiveBatch {
            x: Tensor::new(vec![1, 1], vec![x_tr]).unwrap(),
            class_indices: vec![y_tr],
            label_names: vec!["a"],
        };
        let test = ObjectiveBatch {
            x: Tensor::new(vec![1, 1], vec![x_ts]).unwrap(),
            class_indices: vec![y_ts],
            label_names: vec!["b"],
        };
        let mut model_opt = Optimizer::new(OptimizerSpec::sgd(lr, 0.0)).unwrap();
        let mut critic_opt = Optimizer::new(OptimizerSpec::sgd(lr, 0.0)).unwrap();
        let diag = s_fc_step(
            &mut bundle,
            &mut model_opt,
            &mut critic_opt,
            &train,
            &test,
            &table,
            &LossWeights::new(lambda, 0.0).unwrap(),
            &FcStepOptions {
                inner_lr,
                include_aux: true,
            },
        )
        .unwrap();

        // ---- hand oracle, plain scalar math ----
        let (w, b) = (0.7, 0.1);
        let (v1, v2) = (0.4, -0.3);
        let (c1, c2) = (0.05, -0.05);
        let (u, d) = (0.9, -0.2);
        let e_a = 1.0; // embedding of "a"

        let f = w * x_tr + b;
        let (l1, l2) = (f * v1 + c1, f * v2 + c2);
        let z = (l1 - l1.max(l2)).exp() + (l2 - l1.max(l2)).exp();
        let p1 = (l1 - l1.max(l2)).exp() / z;
        let p2 = (l2 - l1.max(l2)).exp() / z;
        let ce = -(p1.ln());
        let sem = (f - e_a) * (f - e_a);

        // d(ce)/df = (p1-1) v1 + p2 v2 ; d(sem)/df = 2(f-e)
        let dce_df = (p1 - 1.0) * v1 + p2 * v2;
        let dbase_df = dce_df + lambda * 2.0 * (f - e_a);
        let g_w = dbase_df * x_tr;
        let g_b = dbase_df;
        let g_v1 = (p1 - 1.0) * f;
        let g_v2 = p2 * f;
        let g_c1 = p1 - 1.0;
        let g_c2 = p2;

        // aux = softplus(u f + d)
        let pre = u * f + d;
        let aux = pre.max(0.0) + (-pre.abs()).exp().ln_1p();
        let sig = 1.0 / (1.0 + (-pre).exp());
        let ga_w = sig * u * x_tr;
        let ga_b = sig * u;
        let ga_u = sig * f;
        let ga_d = sig;

        // virtual branches
        let meta_ce = |w: f64, b: f64| -> f64 {
            let f2 = w * x_ts + b;
            let (m1, m2) = (f2 * v1 + c1, f2 * v2 + c2);
            let mx = m1.max(m2);
            let zz = (m1 - mx).exp() + (m2 - mx).exp();
            -((m2 - mx).exp() / zz).ln() // label is class 2
        };
        let ce_with = meta_ce(w - inner_lr * (g_w + ga_w), b - inner_lr * (g_b + ga_b));
        let ce_without = meta_ce(w - inner_lr * g_w, b - inner_lr * g_b);
        let adv = (ce_with - ce_without).tanh();

        // updates
        let w_new = w - lr * (g_w + ga_w);
        let b_new = b - lr * (g_b + ga_b);
        let v1_new = v1 - lr * g_v1;
        let v2_new = v2 - lr * g_v2;
        let c1_new = c1 - lr * g_c1;
        let c2_new = c2 - lr * g_c2;
        let u_new = u - lr * adv * ga_u;
        let d_new = d - lr * adv * ga_d;

        assert!((diag.ce - ce).abs() < 1e-10);
        assert!((diag.semantic - sem).abs() < 1e-10);
        assert!((diag.aux - aux).abs() < 1e-10);
        assert!((diag.meta_ce_with_aux - ce_with).abs() < 1e-10);
        assert!((diag.meta_ce_without_aux - ce_without).abs() < 1e-10);
        assert!((diag.advantage - adv).abs() < 1e-10);

        let expect: std::collections::BTreeMap<&str, Vec<f64>> = [
            ("extractor.w0", vec![w_new]),
            ("extractor.b0", vec![b_new]),
            ("head.w0", vec![v1_new, v2_new]),
            ("head.b0", vec![c1_new, c2_new]),
            ("critic.w0", vec![u_new]),
            ("critic.b0", vec![d_new]),
        ]
        .into();
        for (name, t) in bundle.params() {
            let want = &expect[name.as_str()];
            for (got, want) in t.values().iter().zip(want) {
                assert!((got - want).abs() < 1e-10, "{name}: {got} vs {want}");
            }
        }
    }
}
