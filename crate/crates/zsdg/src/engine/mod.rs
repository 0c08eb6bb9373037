//! Deterministic training loop and run records.
//!
//! A [`RunConfig`] pins everything that can influence a run; [`train`]
//! executes it and produces a [`RunRecord`] whose every number is fully
//! determined by the config (wall time is measured separately and excluded
//! from that guarantee). One global seed drives model init, shuffling, and
//! meta splits through derived streams (`seed`, `seed+1`, `seed+2`), so
//! toggling one stage does not perturb the others.

pub mod checkpoint;

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Optimizer, OptimizerSpec, Tensor};
use crate::data::{epoch_batches, Domain, DomainSet, LabeledImageSet};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{dg_accuracy, zsdg_accuracy, AccuracyReport, DgMode};
use crate::models::{ArchSpec, BundleParts, Mlp, ModelBundle};
use crate::objectives::{
    s_agg_loss, s_fc_step, s_mtae_loss, sample_meta_split, FcStepOptions, LossWeights,
    ObjectiveBatch,
};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Agg,
    SAgg,
    Mtae,
    SMtae,
    Fc,
    SFc,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "agg" => Ok(Method::Agg),
            "s-agg" => Ok(Method::SAgg),
            "mtae" => Ok(Method::Mtae),
            "s-mtae" => Ok(Method::SMtae),
            "fc" => Ok(Method::Fc),
            "s-fc" => Ok(Method::SFc),
            other => Err(Error::usage(format!(
                "unknown method '{other}' (expected agg, s-agg, mtae, s-mtae, fc, s-fc)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Agg => "agg",
            Method::SAgg => "s-agg",
            Method::Mtae => "mtae",
            Method::SMtae => "s-mtae",
            Method::Fc => "fc",
            Method::SFc => "s-fc",
        }
    }

    pub fn is_semantic(&self) -> bool {
        matches!(self, Method::SAgg | Method::SMtae | Method::SFc)
    }

    fn parts(&self) -> BundleParts {
        BundleParts {
            head: matches!(self, Method::Agg | Method::SAgg | Method::Fc | Method::SFc),
            decoders: matches!(self, Method::Mtae | Method::SMtae),
            critic: matches!(self, Method::Fc | Method::SFc),
        }
    }

    /// How DG accuracy is scored: head argmax where a head is trained
    /// jointly, nearest seen prototype for the semantic autoencoder, and a
    /// frozen-encoder head fitted after training for the vanilla autoencoder.
    fn dg_mode(&self) -> DgMode {
        match self {
            Method::SMtae => DgMode::SemanticNn,
            _ => DgMode::Head,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Dataset id, echoed into records.
    pub dataset: String,
    /// Setting name, resolved against the dataset's settings catalog.
    pub setting: String,
    pub target_domain: usize,
    pub lambda: f64,
    pub eta: f64,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub arch: ArchSpec,
    pub optimizer: OptimizerSpec,
    /// Virtual-step size of the feature-critic branch; defaults to the
    /// optimizer learning rate.
    pub inner_lr: Option<f64>,
    /// Score zero-shot accuracy against prototypes spanning seen plus
    /// unseen classes instead of the default unseen-only span.
    #[serde(default)]
    pub generalized_zsl: bool,
}

impl RunConfig {
    pub fn new(method: Method, dataset: impl Into<String>, setting: impl Into<String>) -> Self {
        RunConfig {
            method,
            dataset: dataset.into(),
            setting: setting.into(),
            target_domain: 0,
            lambda: 1.0,
            eta: 0.0,
            seed: 0,
            epochs: 30,
            batch_size: 64,
            arch: ArchSpec::default(),
            optimizer: OptimizerSpec::default(),
            inner_lr: None,
            generalized_zsl: false,
        }
    }

    /// Check field consistency and coerce vanilla methods to lambda 0.
    pub fn normalized(&self) -> Result<RunConfig> {
        let mut cfg = self.clone();
        if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
            return Err(Error::usage("lambda must be finite and >= 0"));
        }
        if !(cfg.eta.is_finite() && cfg.eta >= 0.0) {
            return Err(Error::usage("eta must be finite and >= 0"));
        }
        if cfg.batch_size == 0 {
            return Err(Error::usage("batch size must be >= 1"));
        }
        if cfg.dataset.contains(',') || cfg.setting.contains(',') {
            return Err(Error::usage("dataset and setting names must not contain commas"));
        }
        cfg.optimizer.validate()?;
        if !cfg.method.is_semantic() {
            cfg.lambda = 0.0;
        }
        Ok(cfg)
    }
}

/// Weighted loss contributions for one epoch; parts sum to the total.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    /// `lambda *` semantic term.
    pub semantic: f64,
    pub reconstruction: f64,
    pub aux: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub epoch_losses: Vec<LossBreakdown>,
    pub dg_accuracy: f64,
    pub zsdg_accuracy: f64,
    pub wall_seconds: f64,
    pub checkpoint_path: Option<String>,
}

fn pool_domains(domains: &[Domain]) -> Result<LabeledImageSet> {
    let first = &domains[0].data;
    let dims = first.dims();
    let vocab = first.vocab().to_vec();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for d in domains {
        for i in 0..d.data.len() {
            images.extend_from_slice(d.data.image(i));
            labels.push(d.data.label_id(i));
        }
    }
    LabeledImageSet::new(dims, images, labels, vocab)
}

/// Map vocabulary label ids to positions within the seen-class list.
struct SeenIndex {
    by_vocab: Vec<Option<usize>>,
}

impl SeenIndex {
    fn new(vocab: &[String], seen: &[String]) -> SeenIndex {
        let by_vocab = vocab
            .iter()
            .map(|name| seen.iter().position(|s| s == name))
            .collect();
        SeenIndex { by_vocab }
    }

    fn of(&self, vocab_id: usize) -> Result<usize> {
        self.by_vocab[vocab_id]
            .ok_or_else(|| Error::usage("training batch contains an unseen class"))
    }
}

fn objective_batch<'v>(
    x: Tensor,
    vocab_ids: &[usize],
    vocab: &'v [String],
    seen: &SeenIndex,
) -> Result<ObjectiveBatch<'v>> {
    let class_indices = vocab_ids
        .iter()
        .map(|&id| seen.of(id))
        .collect::<Result<Vec<_>>>()?;
    let label_names = vocab_ids.iter().map(|&id| vocab[id].as_str()).collect();
    Ok(ObjectiveBatch {
        x,
        class_indices,
        label_names,
    })
}

fn check_finite(value: f64, epoch: usize, batch: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: format!("training loss at epoch {epoch}, batch {batch}"),
        })
    }
}

/// Train a fresh linear head on frozen encoder features (full-batch Adam).
/// Used to score DG accuracy for the vanilla multi-task autoencoder.
fn train_frozen_head(
    features: &Tensor,
    class_indices: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<Mlp> {
    let h = features.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = Mlp::init(&[h, n_classes], &mut rng)?;
    let mut opt = Optimizer::new(OptimizerSpec::adam(1e-2))?;
    for _ in 0..200 {
        let mut g = Graph::new();
        let layers: Vec<_> = head
            .params("frozen-head")
            .iter()
            .map(|(_, t)| g.leaf((*t).clone()))
            .collect();
        let x = g.leaf(features.clone());
        let z = g.matmul(x, layers[0])?;
        let logits = g.add(z, layers[1])?;
        let ce = g.softmax_cross_entropy(logits, class_indices)?;
        g.backward(ce)?;
        let grads: std::collections::BTreeMap<String, Tensor> = [
            ("frozen-head.w0".to_string(), g.grad_tensor(layers[0])),
            ("frozen-head.b0".to_string(), g.grad_tensor(layers[1])),
        ]
        .into();
        let mut params = head.params_mut("frozen-head");
        let mut refs: Vec<(String, &mut Tensor)> = params
            .iter_mut()
            .map(|(n, t)| (n.clone(), &mut **t))
            .collect();
        opt.step(&mut refs, &grads)?;
    }
    Ok(head)
}

/// Run one experiment end to end: build the model, train it with the
/// configured objective, and score DG/ZSDG accuracy on the held-out domain.
/// Returns the record together with the trained bundle (the vanilla
/// autoencoder comes back with its frozen evaluation head attached).
pub fn train(
    cfg: &RunConfig,
    domain_set: &DomainSet,
    table: &EmbeddingTable,
) -> Result<(RunRecord, ModelBundle)> {
    let cfg = cfg.normalized()?;
    let start = Instant::now();

    let model_seed = cfg.seed;
    let data_seed = cfg.seed.wrapping_add(1);
    let meta_seed = cfg.seed.wrapping_add(2);

    // every class used anywhere must resolve in the embedding table
    for class in domain_set.vocab() {
        table.lookup(class)?;
    }

    let split = domain_set.split();
    if split.train_domains.is_empty() {
        return Err(Error::usage("no training domains left after holding out the target"));
    }
    let n_domains = split.train_domains.len();
    let vocab = domain_set.vocab();
    let seen = domain_set.seen_classes().to_vec();
    let unseen = domain_set.unseen_classes().to_vec();
    let seen_index = SeenIndex::new(vocab, &seen);
    let input_dim = split.train_domains[0].data.pixel_count();

    let mut bundle = ModelBundle::init(
        input_dim,
        table.dim(),
        seen.len(),
        n_domains,
        &cfg.arch,
        cfg.method.parts(),
        model_seed,
    )?;
    let weights = LossWeights::new(cfg.lambda, cfg.eta)?;
    let opt_spec = cfg.optimizer.with_weight_decay(cfg.eta);
    let mut model_opt = Optimizer::new(opt_spec)?;
    let mut critic_opt = Optimizer::new(opt_spec)?;

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    match cfg.method {
        Method::Agg | Method::SAgg => {
            let pooled = pool_domains(&split.train_domains)?;
            for epoch in 0..cfg.epochs {
                let mut sums = LossBreakdown::default();
                let mut batches = 0usize;
                let epoch_seed = derive_seed(data_seed, epoch as u64);
                for (b, batch) in epoch_batches(&pooled, cfg.batch_size, epoch_seed)?.enumerate() {
                    let obatch = objective_batch(batch.x, &batch.labels, vocab, &seen_index)?;
                    let mut g = Graph::new();
                    let bound = bundle.bind(&mut g);
                    let x = g.leaf(obatch.x.clone());
                    let terms = s_agg_loss(&mut g, &bound, x, &obatch, table, &weights)?;
                    let total = g.value(terms.total).item();
                    check_finite(total, epoch, b)?;
                    sums.total += total;
                    sums.ce += g.value(terms.ce).item();
                    if let Some(s) = terms.semantic {
                        sums.semantic += cfg.lambda * g.value(s).item();
                    }
                    g.backward(terms.total)?;
                    let grads = bound.grads(&g, &bundle);
                    let mut params = bundle.params_mut();
                    model_opt.step(&mut params, &grads)?;
                    batches += 1;
                }
                epoch_losses.push(scale_breakdown(sums, batches));
            }
        }
        Method::Mtae | Method::SMtae => {
            let aligned = domains_index_aligned(&split.train_domains);
            for epoch in 0..cfg.epochs {
                let mut sums = LossBreakdown::default();
                let mut batches = 0usize;
                let epoch_seed = derive_seed(data_seed, epoch as u64);
                let base = &split.train_domains[0].data;
                for (b, batch) in epoch_batches(base, cfg.batch_size, epoch_seed)?.enumerate() {
                    let source = b % n_domains;
                    let x_src = split.train_domains[source].data.gather(&batch.indices);
                    let targets: Vec<Tensor> = if aligned {
                        split
                            .train_domains
                            .iter()
                            .map(|d| d.data.gather(&batch.indices))
                            .collect()
                    } else {
                        same_class_targets(
                            &split.train_domains,
                            &batch.labels,
                            derive_seed(epoch_seed, b as u64),
                        )?
                    };
                    let labels: Vec<usize> = batch.indices
                        .iter()
                        .map(|&i| split.train_domains[source].data.label_id(i))
                        .collect();
                    let obatch = objective_batch(x_src, &labels, vocab, &seen_index)?;
                    let mut g = Graph::new();
                    let bound = bundle.bind(&mut g);
                    let x = g.leaf(obatch.x.clone());
                    let terms = s_mtae_loss(
                        &mut g, &bound, &bundle, x, &targets, &obatch, table, &weights,
                    )?;
                    let total = g.value(terms.total).item();
                    check_finite(total, epoch, b)?;
                    sums.total += total;
                    sums.reconstruction += g.value(terms.reconstruction).item();
                    if let Some(s) = terms.semantic {
                        sums.semantic += cfg.lambda * g.value(s).item();
                    }
                    g.backward(terms.total)?;
                    let grads = bound.grads(&g, &bundle);
                    let mut params = bundle.params_mut();
                    model_opt.step(&mut params, &grads)?;
                    batches += 1;
                }
                epoch_losses.push(scale_breakdown(sums, batches));
            }
        }
        Method::Fc | Method::SFc => {
            if n_domains < 2 {
                return Err(Error::usage(
                    "feature-critic training needs at least 2 source domains",
                ));
            }
            let total_images: usize = split.train_domains.iter().map(|d| d.data.len()).sum();
            let iters_per_epoch = total_images.div_ceil(cfg.batch_size).max(1);
            let fc_opts = FcStepOptions {
                inner_lr: cfg.inner_lr.unwrap_or(cfg.optimizer.learning_rate),
                include_aux: true,
            };
            for epoch in 0..cfg.epochs {
                let mut sums = LossBreakdown::default();
                for iter in 0..iters_per_epoch {
                    let salt = (epoch * iters_per_epoch + iter) as u64;
                    let ms = sample_meta_split(n_domains, derive_seed(meta_seed, salt))?;
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(data_seed, salt));
                    let (x_tr, y_tr) = sample_pooled(
                        &split.train_domains,
                        &ms.meta_train,
                        cfg.batch_size,
                        &mut rng,
                    )?;
                    let (x_ts, y_ts) = sample_pooled(
                        &split.train_domains,
                        &ms.meta_test,
                        cfg.batch_size,
                        &mut rng,
                    )?;
                    let meta_train = objective_batch(x_tr, &y_tr, vocab, &seen_index)?;
                    let meta_test = objective_batch(x_ts, &y_ts, vocab, &seen_index)?;
                    let diag = s_fc_step(
                        &mut bundle,
                        &mut model_opt,
                        &mut critic_opt,
                        &meta_train,
                        &meta_test,
                        table,
                        &weights,
                        &fc_opts,
                    )?;
                    let total = diag.ce + cfg.lambda * diag.semantic + diag.aux;
                    check_finite(total, epoch, iter)?;
                    sums.total += total;
                    sums.ce += diag.ce;
                    sums.semantic += cfg.lambda * diag.semantic;
                    sums.aux += diag.aux;
                }
                epoch_losses.push(scale_breakdown(sums, iters_per_epoch));
            }
        }
    }

    // vanilla autoencoder: fit the frozen-encoder evaluation head
    if cfg.method == Method::Mtae {
        let pooled = pool_domains(&split.train_domains)?;
        let features = bundle.extract_values(&pooled.as_matrix())?;
        let class_indices: Vec<usize> = pooled
            .label_ids()
            .iter()
            .map(|&id| seen_index.of(id))
            .collect::<Result<Vec<_>>>()?;
        let head = train_frozen_head(
            &features,
            &class_indices,
            seen.len(),
            derive_seed(model_seed, 0x46524f5a), // "FROZ"
        )?;
        bundle.head = Some(head);
    }

    let zsdg_span: Vec<String> = if cfg.generalized_zsl {
        domain_set.vocab().to_vec()
    } else {
        unseen.clone()
    };
    let report = AccuracyReport {
        dg: dg_accuracy(&bundle, &split.eval_dg, table, &seen, cfg.method.dg_mode())?,
        zsdg: zsdg_accuracy(&bundle, &split.eval_zsdg, table, &zsdg_span)?,
    };

    let record = RunRecord {
        config: cfg,
        epoch_losses,
        dg_accuracy: report.dg.accuracy(),
        zsdg_accuracy: report.zsdg.accuracy(),
        wall_seconds: start.elapsed().as_secs_f64(),
        checkpoint_path: None,
    };
    Ok((record, bundle))
}

fn scale_breakdown(mut sums: LossBreakdown, batches: usize) -> LossBreakdown {
    let n = batches.max(1) as f64;
    sums.total /= n;
    sums.ce /= n;
    sums.semantic /= n;
    sums.reconstruction /= n;
    sums.aux /= n;
    sums
}

fn domains_index_aligned(domains: &[Domain]) -> bool {
    let first = &domains[0].data;
    domains
        .iter()
        .all(|d| d.data.len() == first.len() && d.data.label_ids() == first.label_ids())
}

/// Same-class random pairing fallback for non-aligned domain collections:
/// for each target domain, pick a random same-class image per batch row.
fn same_class_targets(
    domains: &[Domain],
    batch_labels: &[usize],
    seed: u64,
) -> Result<Vec<Tensor>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets = Vec::with_capacity(domains.len());
    for d in domains {
        let mut by_class: std::collections::HashMap<usize, Vec<usize>> =
            std::collections::HashMap::new();
        for i in 0..d.data.len() {
            by_class.entry(d.data.label_id(i)).or_default().push(i);
        }
        let mut indices = Vec::with_capacity(batch_labels.len());
        for &label in batch_labels {
            let pool = by_class.get(&label).ok_or_else(|| {
                Error::usage(format!(
                    "domain '{}' has no image of class id {label}: domains misaligned",
                    d.tag
                ))
            })?;
            indices.push(pool[rng.random_range(0..pool.len())]);
        }
        targets.push(d.data.gather(&indices));
    }
    Ok(targets)
}

/// Draw a batch uniformly from the union of the given domains.
fn sample_pooled(
    domains: &[Domain],
    which: &[usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Vec<usize>)> {
    let sizes: Vec<usize> = which.iter().map(|&d| domains[d].data.len()).collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::stats("meta split selected only empty domains"));
    }
    let pixel = domains[which[0]].data.pixel_count();
    let mut values = Vec::with_capacity(batch_size * pixel);
    let mut labels = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let mut flat = rng.random_range(0..total);
        for (&d, &size) in which.iter().zip(&sizes) {
            if flat < size {
                values.extend_from_slice(domains[d].data.image(flat));
                labels.push(domains[d].data.label_id(flat));
                break;
            }
            flat -= size;
        }
    }
    Ok((Tensor::new(vec![batch_size, pixel], values)?, labels))
}

/// Serialize a bundle's parameters to the tensor container.
pub fn save_checkpoint(bundle: &ModelBundle, path: impl AsRef<std::path::Path>) -> Result<()> {
    checkpoint::save_tensors(&bundle.params(), path)
}

/// Restore a bundle from a checkpoint written by [`save_checkpoint`].
/// The bundle composition (head, decoders, critic) and all layer widths
/// are inferred from the stored tensor names and shapes.
pub fn load_checkpoint(path: impl AsRef<std::path::Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let tensors = checkpoint::load_tensors(path)?;
    let widths_of = |prefix: &str| -> Vec<usize> {
        let mut widths = Vec::new();
        let mut layer = 0;
        loop {
            let name = format!("{prefix}.w{layer}");
            match tensors.iter().find(|(n, _)| n == &name) {
                Some((_, t)) if t.shape().len() == 2 => {
                    if layer == 0 {
                        widths.push(t.shape()[0]);
                    }
                    widths.push(t.shape()[1]);
                    layer += 1;
                }
                _ => break,
            }
        }
        widths
    };
    let extractor_widths = widths_of("extractor");
    if extractor_widths.len() < 2 {
        return Err(Error::format(path, "checkpoint has no extractor layers".to_string()));
    }
    let input_dim = extractor_widths[0];
    let embed_dim = *extractor_widths.last().unwrap();
    let head_widths = widths_of("head");
    let mut decoder_count = 0;
    while !widths_of(&format!("decoder{decoder_count}")).is_empty() {
        decoder_count += 1;
    }
    let critic_widths = widths_of("critic");

    let arch = ArchSpec {
        extractor_hidden: extractor_widths[1..extractor_widths.len() - 1].to_vec(),
        decoder_hidden: if decoder_count > 0 {
            let w = widths_of("decoder0");
            w[1..w.len() - 1].to_vec()
        } else {
            Vec::new()
        },
        critic_hidden: if critic_widths.len() >= 2 {
            critic_widths[1..critic_widths.len() - 1].to_vec()
        } else {
            Vec::new()
        },
    };
    let parts = BundleParts {
        head: !head_widths.is_empty(),
        decoders: decoder_count > 0,
        critic: !critic_widths.is_empty(),
    };
    let n_classes = head_widths.last().copied().unwrap_or(1);
    let mut bundle = ModelBundle::init(
        input_dim,
        embed_dim,
        n_classes,
        decoder_count.max(1),
        &arch,
        parts,
        0,
    )?;
    if !parts.decoders {
        bundle.decoders = None;
    }
    bundle.load_params(tensors.into_iter().collect())?;
    Ok(bundle)
}
