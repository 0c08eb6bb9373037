//! Class word embeddings and nearest-neighbor inference in semantic space.
//!
//! The embedding table maps class names to h-dimensional word vectors loaded
//! from GloVe-style text files (one `word v1 v2 ... vh` line per entry). At
//! inference time, a feature vector is classified by the nearest class
//! prototype under squared Euclidean distance.
//!
//! Multi-token class names such as `pine-tree` or `t-shirt` resolve to the
//! mean of their token embeddings, splitting on `-` and `_`.
//!
//! Both [`EmbeddingTable`] and [`PrototypeSet`] are immutable after
//! construction and safe for concurrent reads.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    names: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
    normalized: bool,
}

impl EmbeddingTable {
    /// Build a table from `(name, vector)` pairs. With `normalize`, every
    /// vector is L2-normalized on the way in (zero vectors are rejected).
    pub fn from_entries(
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
        normalize: bool,
    ) -> Result<Self> {
        let mut table = EmbeddingTable {
            dim: 0,
            names: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
            normalized: normalize,
        };
        for (name, mut vector) in entries {
            if table.names.is_empty() {
                table.dim = vector.len();
            }
            if vector.len() != table.dim {
                return Err(Error::usage(format!(
                    "embedding '{}' has dimension {}, table dimension is {}",
                    name,
                    vector.len(),
                    table.dim
                )));
            }
            if table.index.contains_key(&name) {
                return Err(Error::usage(format!("duplicate embedding entry '{name}'")));
            }
            if normalize {
                let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::usage(format!(
                        "cannot L2-normalize zero vector for '{name}'"
                    )));
                }
                for v in vector.iter_mut() {
                    *v /= norm;
                }
            }
            table.index.insert(name.clone(), table.names.len());
            table.names.push(name);
            table.vectors.push(vector);
        }
        if table.names.is_empty() {
            return Err(Error::usage("embedding table has no entries"));
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Vector for a class name. Multi-token names (split on `-`/`_`) resolve
    /// to the mean of their token vectors. Unknown names error with the
    /// closest available names listed.
    pub fn lookup(&self, name: &str) -> Result<Vec<f64>> {
        if let Some(&i) = self.index.get(name) {
            return Ok(self.vectors[i].clone());
        }
        let tokens: Vec<&str> = name
            .split(['-', '_'])
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.len() > 1 && tokens.iter().all(|t| self.index.contains_key(*t)) {
            let mut mean = vec![0.0; self.dim];
            for token in &tokens {
                let v = &self.vectors[self.index[*token]];
                for (m, x) in mean.iter_mut().zip(v) {
                    *m += x;
                }
            }
            let k = tokens.len() as f64;
            for m in mean.iter_mut() {
                *m /= k;
            }
            return Ok(mean);
        }
        Err(Error::usage(format!(
            "no embedding for '{}'; nearest available names: {}",
            name,
            self.nearest_names(name, 3).join(", ")
        )))
    }

    /// Stack the label embeddings of a batch into a `[batch, dim]` tensor.
    pub fn embed_batch(&self, labels: &[&str]) -> Result<Tensor> {
        let mut values = Vec::with_capacity(labels.len() * self.dim);
        for label in labels {
            values.extend(self.lookup(label)?);
        }
        Tensor::new(vec![labels.len(), self.dim], values)
    }

    fn nearest_names(&self, query: &str, k: usize) -> Vec<String> {
        let mut scored: Vec<(usize, &String)> = self
            .names
            .iter()
            .map(|n| (levenshtein(query, n), n))
            .collect();
        scored.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        scored.into_iter().take(k).map(|(_, n)| n.clone()).collect()
    }
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Parse a GloVe-style text file: `word v1 v2 ... vh`, single-space
/// separated, one entry per line. The dimension is inferred from the first
/// line, or validated against `expected_dim` when given.
pub fn load_embedding_text(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
    normalize: bool,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embedding_text(&text, expected_dim, normalize)
        .map_err(|msg| Error::format(path, msg))
}

fn parse_embedding_text(
    text: &str,
    expected_dim: Option<usize>,
    normalize: bool,
) -> std::result::Result<EmbeddingTable, String> {
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    let mut dim = expected_dim;
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let word = parts
            .next()
            .filter(|w| !w.is_empty())
            .ok_or_else(|| format!("line {lineno}: missing word"))?;
        if let Some(first) = seen.insert(word, lineno) {
            return Err(format!(
                "line {lineno}: duplicate word '{word}' (first seen on line {first})"
            ));
        }
        let mut vector = Vec::new();
        for field in parts {
            let v: f64 = field.parse().map_err(|_| {
                format!("line {lineno}: unparsable float '{field}'")
            })?;
            vector.push(v);
        }
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(format!(
                    "line {lineno}: expected {d} values, found {}",
                    vector.len()
                ))
            }
            _ => {}
        }
        if vector.is_empty() {
            return Err(format!("line {lineno}: no values after word '{word}'"));
        }
        entries.push((word.to_string(), vector));
    }
    EmbeddingTable::from_entries(entries, normalize).map_err(|e| e.to_string())
}

/// Write a table back out in the same text format (full-precision floats).
pub fn write_embedding_text(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (name, vector) in table.names.iter().zip(&table.vectors) {
        out.push_str(name);
        for v in vector {
            out.push(' ');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    crate::engine::checkpoint::write_atomic(path, out.as_bytes())
}

/// Mean over the batch of the squared Euclidean distance between each
/// feature row and its label's embedding. Differentiable w.r.t. `features`.
pub fn semantic_loss(
    g: &mut Graph,
    features: NodeId,
    labels: &[&str],
    table: &EmbeddingTable,
) -> Result<NodeId> {
    let shape = g.value(features).shape().to_vec();
    if shape.len() != 2 || shape[1] != table.dim() {
        return Err(Error::Shape {
            op: "semantic_loss",
            lhs: shape,
            rhs: vec![labels.len(), table.dim()],
        });
    }
    if shape[0] != labels.len() {
        return Err(Error::usage(format!(
            "semantic_loss: {} feature rows but {} labels",
            shape[0],
            labels.len()
        )));
    }
    let batch = labels.len() as f64;
    let targets = g.leaf(table.embed_batch(labels)?);
    let diff = g.sub(features, targets)?;
    let sq = g.mul(diff, diff)?;
    let sum = g.sum_reduce(sq)?;
    g.scale(sum, 1.0 / batch)
}

/// Ordered class prototypes for nearest-neighbor classification.
#[derive(Debug, Clone)]
pub struct PrototypeSet {
    class_ids: Vec<String>,
    matrix: Vec<Vec<f64>>,
    dim: usize,
}

impl PrototypeSet {
    /// One prototype row per class, in the given order. Class ids must be
    /// distinct; each row is the table embedding of its class.
    pub fn new(table: &EmbeddingTable, class_ids: &[String]) -> Result<Self> {
        if class_ids.is_empty() {
            return Err(Error::stats("prototype set needs at least one class"));
        }
        let mut seen = HashMap::new();
        for (i, id) in class_ids.iter().enumerate() {
            if seen.insert(id.as_str(), i).is_some() {
                return Err(Error::usage(format!("duplicate prototype class '{id}'")));
            }
        }
        let matrix = class_ids
            .iter()
            .map(|id| table.lookup(id))
            .collect::<Result<Vec<_>>>()?;
        Ok(PrototypeSet {
            class_ids: class_ids.to_vec(),
            matrix,
            dim: table.dim(),
        })
    }

    pub fn class_ids(&self) -> &[String] {
        &self.class_ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of the class with minimal squared Euclidean distance to
    /// `query`; ties break toward the lowest class index.
    pub fn nearest_index(&self, query: &[f64]) -> Result<usize> {
        if query.len() != self.dim {
            return Err(Error::Shape {
                op: "nearest_class",
                lhs: vec![query.len()],
                rhs: vec![self.dim],
            });
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, row) in self.matrix.iter().enumerate() {
            let d: f64 = row
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        Ok(best)
    }
}

/// Nearest-neighbor classification of `query` against the prototype rows.
pub fn nearest_class<'p>(query: &[f64], prototypes: &'p PrototypeSet) -> Result<&'p str> {
    Ok(&prototypes.class_ids[prototypes.nearest_index(query)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_table() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            [
                ("cat".to_string(), vec![1.0, 0.0]),
                ("dog".to_string(), vec![0.0, 1.0]),
                ("pine".to_string(), vec![2.0, 2.0]),
                ("tree".to_string(), vec![4.0, 0.0]),
            ],
            false,
        )
        .unwrap()
    }

    #[test]
    fn parse_two_entries() {
        let t = parse_embedding_text("cat 1.0 0.0\ndog 0.0 1.0\n", None, false).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup("cat").unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn dimension_change_reports_line_number() {
        let err = parse_embedding_text("cat 1.0 0.0\ndog 0.0 1.0 2.0\n", None, false).unwrap_err();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_word_rejected_with_line() {
        let err = parse_embedding_text("cat 1.0\ncat 2.0\n", None, false).unwrap_err();
        assert!(err.contains("line 2") && err.contains("cat"), "{err}");
    }

    #[test]
    fn unparsable_float_reports_line() {
        let err = parse_embedding_text("cat 1.0\ndog x\n", None, false).unwrap_err();
        assert!(err.contains("line 2") && err.contains("'x'"), "{err}");
    }

    #[test]
    fn expected_dim_is_validated() {
        assert!(parse_embedding_text("cat 1.0 2.0\n", Some(2), false).is_ok());
        assert!(parse_embedding_text("cat 1.0 2.0\n", Some(3), false).is_err());
    }

    #[test]
    fn composite_name_is_token_mean() {
        let t = small_table();
        let v = t.lookup("pine-tree").unwrap();
        // hand-averaged: ((2,2) + (4,0)) / 2
        assert_eq!(v, vec![3.0, 1.0]);
        let v2 = t.lookup("pine_tree").unwrap();
        assert_eq!(v2, vec![3.0, 1.0]);
    }

    #[test]
    fn unknown_name_lists_nearest() {
        let t = small_table();
        let err = t.lookup("cot").unwrap_err().to_string();
        assert!(err.contains("cat"), "{err}");
    }

    #[test]
    fn normalization_unit_length_and_zero_vector_rejected() {
        let t = EmbeddingTable::from_entries(
            [("a".to_string(), vec![3.0, 4.0])],
            true,
        )
        .unwrap();
        let v = t.lookup("a").unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);

        assert!(
            EmbeddingTable::from_entries([("z".to_string(), vec![0.0, 0.0])], true).is_err()
        );
    }

    #[test]
    fn semantic_loss_identity_and_offsets() {
        let table = small_table();
        let mut g = Graph::new();
        let exact = g.leaf(table.embed_batch(&["cat", "dog"]).unwrap());
        let zero = semantic_loss(&mut g, exact, &["cat", "dog"], &table).unwrap();
        assert_eq!(g.value(zero).item(), 0.0);

        // unit offset in one coordinate -> squared distance 1
        let mut t = table.embed_batch(&["cat"]).unwrap();
        t.values_mut()[0] += 1.0;
        let shifted = g.leaf(t);
        let one = semantic_loss(&mut g, shifted, &["cat"], &table).unwrap();
        assert_eq!(g.value(one).item(), 1.0);
    }

    #[test]
    fn semantic_loss_matches_brute_force_mean_distance() {
        let table = small_table();
        let rows = vec![vec![0.3, -0.7], vec![1.5, 2.5]];
        let labels = ["cat", "dog"];
        let mut expected = 0.0;
        for (row, label) in rows.iter().zip(labels) {
            let w = table.lookup(label).unwrap();
            expected += row
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        expected /= 2.0;

        let mut g = Graph::new();
        let f = g.leaf(Tensor::from_rows(&rows).unwrap());
        let loss = semantic_loss(&mut g, f, &labels, &table).unwrap();
        assert!((g.value(loss).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn semantic_loss_gradient_is_scaled_residual() {
        let table = small_table();
        let rows = vec![vec![0.5, 0.5], vec![2.0, -1.0]];
        let labels = ["cat", "dog"];
        let mut g = Graph::new();
        let f = g.leaf(Tensor::from_rows(&rows).unwrap());
        let loss = semantic_loss(&mut g, f, &labels, &table).unwrap();
        g.backward(loss).unwrap();
        let grad = g.grad(f).unwrap();
        let batch = 2.0;
        for (i, label) in labels.iter().enumerate() {
            let w = table.lookup(label).unwrap();
            for j in 0..2 {
                let expected = 2.0 * (rows[i][j] - w[j]) / batch;
                assert!((grad[i * 2 + j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shipped_fixture_loads_and_round_trips() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("fixtures/glove_50d_12.txt");
        let table = load_embedding_text(&path, Some(50), false).unwrap();
        assert_eq!(table.dim(), 50);
        assert_eq!(table.len(), 12);
        let dir = tempfile::tempdir().unwrap();
        let copy = dir.path().join("copy.txt");
        write_embedding_text(&table, &copy).unwrap();
        let back = load_embedding_text(&copy, Some(50), false).unwrap();
        assert_eq!(back.names(), table.names());
        for name in table.names() {
            assert_eq!(back.lookup(name).unwrap(), table.lookup(name).unwrap());
        }
        // composite class names resolve against the fixture vocabulary
        let tshirt = table.lookup("t-shirt").unwrap();
        let t = table.lookup("t").unwrap();
        let shirt = table.lookup("shirt").unwrap();
        for ((c, a), b) in tshirt.iter().zip(&t).zip(&shirt) {
            assert!((c - (a + b) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn nearest_class_exact_and_tie() {
        let table = small_table();
        let protos =
            PrototypeSet::new(&table, &["cat".to_string(), "dog".to_string()]).unwrap();
        assert_eq!(nearest_class(&[1.0, 0.0], &protos).unwrap(), "cat");
        // equidistant from cat and dog -> first in class order
        assert_eq!(nearest_class(&[0.5, 0.5], &protos).unwrap(), "cat");
    }

    #[test]
    fn empty_prototype_set_rejected() {
        let table = small_table();
        assert!(PrototypeSet::new(&table, &[]).is_err());
    }

    proptest! {
        // NN decision is invariant under common positive scaling of all
        // prototype rows and the query.
        #[test]
        fn nearest_class_scale_invariant(
            scale in 0.05f64..20.0,
            qx in -5.0f64..5.0,
            qy in -5.0f64..5.0,
        ) {
            let base = [("a", vec![1.0, 0.2]), ("b", vec![-0.5, 1.0]), ("c", vec![0.0, -2.0])];
            let t1 = EmbeddingTable::from_entries(
                base.iter().map(|(n, v)| (n.to_string(), v.clone())), false).unwrap();
            let t2 = EmbeddingTable::from_entries(
                base.iter().map(|(n, v)| (n.to_string(), v.iter().map(|x| x * scale).collect())), false).unwrap();
            let ids: Vec<String> = base.iter().map(|(n, _)| n.to_string()).collect();
            let p1 = PrototypeSet::new(&t1, &ids).unwrap();
            let p2 = PrototypeSet::new(&t2, &ids).unwrap();
            let q = [qx, qy];
            let qs = [qx * scale, qy * scale];
            prop_assert_eq!(
                nearest_class(&q, &p1).unwrap(),
                nearest_class(&qs, &p2).unwrap()
            );
        }

        // For any query, the winning prototype is at least as close as every
        // other prototype.
        #[test]
        fn nearest_is_minimal(q in proptest::collection::vec(-3.0f64..3.0, 4)) {
            let entries: Vec<(String, Vec<f64>)> = (0..6)
                .map(|i| (format!("c{i}"), (0..4).map(|j| ((i * 7 + j * 3) % 5) as f64 - 2.0).collect()))
                .collect();
            let table = EmbeddingTable::from_entries(entries, false).unwrap();
            let ids: Vec<String> = table.names().to_vec();
            let protos = PrototypeSet::new(&table, &ids).unwrap();
            let win = protos.nearest_index(&q).unwrap();
            let dist = |row: &[f64]| row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let wd = dist(&protos.rows()[win]);
            for row in protos.rows() {
                prop_assert!(wd <= dist(row) + 1e-15);
            }
        }
    }
}
