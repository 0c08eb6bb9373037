//! Networks: shared feature extractor/encoder, classifier head, per-domain
//! decoder bank, and the feature critic.
//!
//! All components are MLPs over flattened pixels emitting into autodiff
//! graphs. The extractor maps images into the semantic space, so its output
//! width must equal the embedding dimension; this is validated at build
//! time. A bundle is owned by one training worker; snapshots can be cloned
//! out for evaluation.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Fully connected stack: relu on all but the final layer, final linear.
#[derive(Debug, Clone)]
pub struct Mlp {
    widths: Vec<usize>,
    /// One `[in, out]` weight and `[out]` bias per layer.
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl Mlp {
    /// Xavier-uniform weights (`±sqrt(6/(fan_in+fan_out))`), zero biases.
    pub fn init(widths: &[usize], rng: &mut ChaCha8Rng) -> Result<Mlp> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::usage(format!("bad layer widths {widths:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let values: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            weights.push(Tensor::new(vec![fan_in, fan_out], values)?);
            biases.push(Tensor::zeros(vec![fan_out]));
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            weights,
            biases,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("{prefix}.w{i}"), w));
            out.push((format!("{prefix}.b{i}"), b));
        }
        out
    }

    pub(crate) fn params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.weights.iter_mut().zip(self.biases.iter_mut()).enumerate() {
            out.push((format!("{prefix}.w{i}"), w));
            out.push((format!("{prefix}.b{i}"), b));
        }
        out
    }
}

/// Architecture hyperparameters; widths exclude the input/output dims,
/// which come from the data and embedding table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArchSpec {
    pub extractor_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            extractor_hidden: vec![256, 128],
            decoder_hidden: vec![128, 256],
            critic_hidden: vec![32],
        }
    }
}

/// Which components a method needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleParts {
    pub head: bool,
    pub decoders: bool,
    pub critic: bool,
}

/// Full parameter collection for one run: extractor plus the optional
/// classifier head, per-domain decoders, and feature critic.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub extractor: Mlp,
    pub head: Option<Mlp>,
    pub decoders: Option<Vec<Mlp>>,
    pub critic: Option<Mlp>,
}

impl ModelBundle {
    /// Deterministically initialize all requested components.
    /// `embed_dim` must match the embedding table used for training.
    pub fn init(
        input_dim: usize,
        embed_dim: usize,
        n_classes: usize,
        n_domains: usize,
        arch: &ArchSpec,
        parts: BundleParts,
        seed: u64,
    ) -> Result<ModelBundle> {
        use rand::SeedableRng;
        if embed_dim == 0 {
            return Err(Error::usage("embedding dimension must be nonzero"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut extractor_widths = vec![input_dim];
        extractor_widths.extend(&arch.extractor_hidden);
        extractor_widths.push(embed_dim);
        let extractor = Mlp::init(&extractor_widths, &mut rng)?;

        let head = if parts.head {
            if n_classes == 0 {
                return Err(Error::usage("classifier head needs at least one class"));
            }
            Some(Mlp::init(&[embed_dim, n_classes], &mut rng)?)
        } else {
            None
        };

        let decoders = if parts.decoders {
            if n_domains == 0 {
                return Err(Error::usage("decoder bank needs at least one domain"));
            }
            let mut widths = vec![embed_dim];
            widths.extend(&arch.decoder_hidden);
            widths.push(input_dim);
            let mut bank = Vec::with_capacity(n_domains);
            for _ in 0..n_domains {
                bank.push(Mlp::init(&widths, &mut rng)?);
            }
            Some(bank)
        } else {
            None
        };

        let critic = if parts.critic {
            let mut widths = vec![embed_dim];
            widths.extend(&arch.critic_hidden);
            widths.push(1);
            Some(Mlp::init(&widths, &mut rng)?)
        } else {
            None
        };

        Ok(ModelBundle {
            input_dim,
            embed_dim,
            extractor,
            head,
            decoders,
            critic,
        })
    }

    pub fn n_decoders(&self) -> usize {
        self.decoders.as_ref().map_or(0, Vec::len)
    }

    /// All parameters in a stable order.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.extractor.params("extractor");
        if let Some(head) = &self.head {
            out.extend(head.params("head"));
        }
        if let Some(bank) = &self.decoders {
            for (j, dec) in bank.iter().enumerate() {
                out.extend(dec.params(&format!("decoder{j}")));
            }
        }
        if let Some(critic) = &self.critic {
            out.extend(critic.params("critic"));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = self.extractor.params_mut("extractor");
        if let Some(head) = &mut self.head {
            out.extend(head.params_mut("head"));
        }
        if let Some(bank) = &mut self.decoders {
            for (j, dec) in bank.iter_mut().enumerate() {
                out.extend(dec.params_mut(&format!("decoder{j}")));
            }
        }
        if let Some(critic) = &mut self.critic {
            out.extend(critic.params_mut("critic"));
        }
        out
    }

    /// Replace parameter values from a name -> tensor map (shapes must
    /// match). Unknown names in the map are rejected.
    pub fn load_params(&mut self, mut values: BTreeMap<String, Tensor>) -> Result<()> {
        for (name, param) in self.params_mut() {
            let tensor = values.remove(&name).ok_or_else(|| {
                Error::usage(format!("parameter '{name}' missing from checkpoint"))
            })?;
            if tensor.shape() != param.shape() {
                return Err(Error::Shape {
                    op: "load_params",
                    lhs: param.shape().to_vec(),
                    rhs: tensor.shape().to_vec(),
                });
            }
            *param = tensor;
        }
        if let Some(extra) = values.keys().next() {
            return Err(Error::usage(format!(
                "checkpoint has unknown parameter '{extra}'"
            )));
        }
        Ok(())
    }

    /// Register every parameter as a graph leaf for one forward/backward
    /// pass. Bind once per graph; repeated forwards reuse the same leaves so
    /// gradients accumulate correctly.
    pub fn bind(&self, g: &mut Graph) -> BoundModel {
        let bind_mlp = |g: &mut Graph, mlp: &Mlp| -> Vec<(NodeId, NodeId)> {
            mlp.weights
                .iter()
                .zip(&mlp.biases)
                .map(|(w, b)| (g.leaf(w.clone()), g.leaf(b.clone())))
                .collect()
        };
        BoundModel {
            extractor: bind_mlp(g, &self.extractor),
            head: self.head.as_ref().map(|m| bind_mlp(g, m)),
            decoders: self
                .decoders
                .as_ref()
                .map(|bank| bank.iter().map(|m| bind_mlp(g, m)).collect()),
            critic: self.critic.as_ref().map(|m| bind_mlp(g, m)),
        }
    }

    /// Extract features for a raw batch outside any training step.
    pub fn extract_values(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xid = g.leaf(x.clone());
        let f = bound.extract(&mut g, xid)?;
        Ok(g.value(f).clone())
    }
}

/// Per-graph parameter handles; see [`ModelBundle::bind`].
pub struct BoundModel {
    extractor: Vec<(NodeId, NodeId)>,
    head: Option<Vec<(NodeId, NodeId)>>,
    decoders: Option<Vec<Vec<(NodeId, NodeId)>>>,
    critic: Option<Vec<(NodeId, NodeId)>>,
}

fn mlp_forward(
    g: &mut Graph,
    layers: &[(NodeId, NodeId)],
    x: NodeId,
    op_name: &'static str,
) -> Result<NodeId> {
    let mut cur = x;
    for (i, &(w, b)) in layers.iter().enumerate() {
        let z = g.matmul(cur, w).map_err(|e| match e {
            Error::Shape { lhs, rhs, .. } => Error::Shape {
                op: op_name,
                lhs,
                rhs,
            },
            other => other,
        })?;
        cur = g.add(z, b)?;
        if i + 1 < layers.len() {
            cur = g.relu(cur)?;
        }
    }
    Ok(cur)
}

impl BoundModel {
    /// Differentiable forward pass from pixels to semantic-space features.
    pub fn extract(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        mlp_forward(g, &self.extractor, x, "extract")
    }

    /// Seen-class logits from features.
    pub fn classify(&self, g: &mut Graph, features: NodeId) -> Result<NodeId> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::usage("model has no classifier head"))?;
        mlp_forward(g, head, features, "classify")
    }

    /// Reconstruct domain `j` pixels from features; output clamped to [0,1].
    pub fn decode(&self, g: &mut Graph, domain: usize, features: NodeId) -> Result<NodeId> {
        let bank = self
            .decoders
            .as_ref()
            .ok_or_else(|| Error::usage("model has no decoder bank"))?;
        let dec = bank.get(domain).ok_or_else(|| {
            Error::usage(format!(
                "decoder index {domain} out of range for {} domains",
                bank.len()
            ))
        })?;
        let raw = mlp_forward(g, dec, features, "decode")?;
        g.clamp01(raw)
    }

    /// Nonnegative auxiliary loss: softplus MLP over the batch-mean feature
    /// vector.
    pub fn criticize(&self, g: &mut Graph, features: NodeId) -> Result<NodeId> {
        let critic = self
            .critic
            .as_ref()
            .ok_or_else(|| Error::usage("model has no feature critic"))?;
        let batch = g.value(features).rows();
        let pool = g.leaf(Tensor::new(
            vec![1, batch],
            vec![1.0 / batch as f64; batch],
        )?);
        let mean_feat = g.matmul(pool, features)?;
        let raw = mlp_forward(g, critic, mean_feat, "criticize")?;
        let pos = g.softplus(raw)?;
        g.reshape(pos, vec![1])
    }

    /// Collect gradients for every bundle parameter after `backward`;
    /// parameters unreachable from the root get zeros.
    pub fn grads(&self, g: &Graph, bundle: &ModelBundle) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        let mut grab = |g: &Graph, layers: &[(NodeId, NodeId)], prefix: &str| {
            for (i, &(w, b)) in layers.iter().enumerate() {
                out.insert(format!("{prefix}.w{i}"), g.grad_tensor(w));
                out.insert(format!("{prefix}.b{i}"), g.grad_tensor(b));
            }
        };
        grab(g, &self.extractor, "extractor");
        if let Some(head) = &self.head {
            grab(g, head, "head");
        }
        if let Some(bank) = &self.decoders {
            for (j, dec) in bank.iter().enumerate() {
                grab(g, dec, &format!("decoder{j}"));
            }
        }
        if let Some(critic) = &self.critic {
            grab(g, critic, "critic");
        }
        debug_assert_eq!(out.len(), bundle.params().len());
        out
    }
}
