//! Multi-domain image datasets with seen/unseen class partitions.
//!
//! A [`LabeledImageSet`] is a stack of `H×W×C` float images with class-name
//! labels drawn from an ordered vocabulary. A [`DomainSet`] groups several
//! such sets (one per domain) under a shared vocabulary, tags one domain as
//! the held-out target, and splits the vocabulary into seen training classes
//! and unseen zero-shot classes. Construction is single-threaded and
//! deterministic; constructed sets are immutable.

mod batches;
mod cifar;
mod idx;
mod rotate;
mod synthetic;

pub use batches::{epoch_batches, Batch, Batches};
pub use cifar::load_cifar_binary;
pub use idx::load_idx;
pub use rotate::{build_rotated_domains, rotate_image, DEFAULT_ANGLES};
pub use synthetic::{make_synthetic_zsdg, SyntheticSpec, SyntheticUniverse};

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Images with class-name labels over an ordered vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    height: usize,
    width: usize,
    channels: usize,
    /// `n * height * width * channels` values in `[0,1]`, row-major.
    images: Vec<f64>,
    /// Per-image index into `vocab`.
    labels: Vec<usize>,
    vocab: Vec<String>,
}

impl LabeledImageSet {
    pub fn new(
        (height, width, channels): (usize, usize, usize),
        images: Vec<f64>,
        labels: Vec<usize>,
        vocab: Vec<String>,
    ) -> Result<Self> {
        let pixel = height * width * channels;
        if pixel == 0 {
            return Err(Error::usage("image dimensions must be nonzero"));
        }
        if images.len() != labels.len() * pixel {
            return Err(Error::usage(format!(
                "{} pixel values do not fill {} images of {} pixels",
                images.len(),
                labels.len(),
                pixel
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= vocab.len()) {
            return Err(Error::usage(format!(
                "label index {bad} outside vocabulary of {} classes",
                vocab.len()
            )));
        }
        if let Some(v) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::usage(format!("pixel value {v} outside [0,1]")));
        }
        Ok(LabeledImageSet {
            height,
            width,
            channels,
            images,
            labels,
            vocab,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Flattened image width `H*W*C`.
    pub fn pixel_count(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let p = self.pixel_count();
        &self.images[i * p..(i + 1) * p]
    }

    pub fn label_id(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn label_name(&self, i: usize) -> &str {
        &self.vocab[self.labels[i]]
    }

    pub fn label_ids(&self) -> &[usize] {
        &self.labels
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Rows `indices` flattened into a `[batch, H*W*C]` tensor.
    pub fn gather(&self, indices: &[usize]) -> Tensor {
        let p = self.pixel_count();
        let mut values = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            values.extend_from_slice(self.image(i));
        }
        Tensor::new(vec![indices.len(), p], values).expect("gather shape is consistent")
    }

    /// All images as one `[n, H*W*C]` tensor.
    pub fn as_matrix(&self) -> Tensor {
        Tensor::new(
            vec![self.len(), self.pixel_count()],
            self.images.clone(),
        )
        .expect("image buffer is consistent")
    }

    /// Label names for `indices`, borrowed from the vocabulary.
    pub fn label_names(&self, indices: &[usize]) -> Vec<&str> {
        indices
            .iter()
            .map(|&i| self.vocab[self.labels[i]].as_str())
            .collect()
    }

    /// Keep only images whose class is in `keep` (vocabulary unchanged).
    pub fn filter_classes(&self, keep: &HashSet<usize>) -> LabeledImageSet {
        let p = self.pixel_count();
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (i, &label) in self.labels.iter().enumerate() {
            if keep.contains(&label) {
                images.extend_from_slice(&self.images[i * p..(i + 1) * p]);
                labels.push(label);
            }
        }
        LabeledImageSet {
            height: self.height,
            width: self.width,
            channels: self.channels,
            images,
            labels,
            vocab: self.vocab.clone(),
        }
    }
}

/// One domain: a tag (e.g. `D3`) plus its labeled images.
#[derive(Debug, Clone)]
pub struct Domain {
    pub tag: String,
    pub data: LabeledImageSet,
}

/// A named zero-shot setting: which classes are held out as unseen.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Setting {
    pub name: String,
    pub unseen_classes: Vec<String>,
}

impl Setting {
    pub fn new(name: impl Into<String>, unseen: &[&str]) -> Self {
        Setting {
            name: name.into(),
            unseen_classes: unseen.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Built-in zero-shot settings per dataset.
pub fn builtin_settings(dataset: &str) -> Vec<Setting> {
    match dataset {
        "fmnist" => vec![
            Setting::new("setting1", &["t-shirt", "sandal"]),
            Setting::new("setting2", &["sandal", "shirt"]),
            Setting::new("setting3", &["t-shirt", "boot"]),
            Setting::new("setting4", &["sandal", "boot"]),
        ],
        "cifar10" => vec![
            Setting::new("setting1", &["cat", "truck"]),
            Setting::new("setting2", &["cat", "dog"]),
            Setting::new("setting3", &["deer", "ship"]),
            Setting::new("setting4", &["car", "deer"]),
            Setting::new("setting5", &["airplane", "car"]),
        ],
        "cifar100" => vec![
            Setting::new(
                "setting1",
                &[
                    "whale",
                    "fish",
                    "rose",
                    "can",
                    "orange",
                    "lamp",
                    "couch",
                    "beetle",
                    "tiger",
                    "skyscraper",
                    "mountain",
                    "kangaroo",
                    "fox",
                    "snail",
                    "man",
                    "snake",
                    "squirrel",
                    "pine-tree",
                    "motorcycle",
                    "streetcar",
                ],
            ),
            Setting::new(
                "setting2",
                &[
                    "seal",
                    "shark",
                    "poppy",
                    "bottle",
                    "apple",
                    "keyboard",
                    "table",
                    "caterpillar",
                    "lion",
                    "bridge",
                    "forest",
                    "camel",
                    "raccoon",
                    "crab",
                    "girl",
                    "dinosaur",
                    "rabbit",
                    "maple",
                    "bicycle",
                    "tractor",
                ],
            ),
        ],
        _ => Vec::new(),
    }
}

/// The experimental universe for one run: domains with a shared vocabulary,
/// a seen/unseen class partition, and a held-out target domain.
#[derive(Debug, Clone)]
pub struct DomainSet {
    domains: Vec<Domain>,
    vocab: Vec<String>,
    seen: Vec<String>,
    unseen: Vec<String>,
    target: usize,
}

/// Training/evaluation material produced by [`DomainSet::split`]: training
/// domains restricted to seen classes, plus target-domain evaluation sets.
#[derive(Debug, Clone)]
pub struct SettingSplit {
    pub train_domains: Vec<Domain>,
    pub eval_dg: LabeledImageSet,
    pub eval_zsdg: LabeledImageSet,
}

impl DomainSet {
    pub fn new(domains: Vec<Domain>, setting: &Setting, target: usize) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::usage("domain set needs at least one domain"));
        }
        if target >= domains.len() {
            return Err(Error::usage(format!(
                "target domain index {target} out of range for {} domains",
                domains.len()
            )));
        }
        let vocab = domains[0].data.vocab().to_vec();
        for d in &domains {
            if d.data.vocab() != vocab.as_slice() {
                return Err(Error::usage(format!(
                    "domain '{}' does not share the common vocabulary",
                    d.tag
                )));
            }
        }
        if setting.unseen_classes.is_empty() {
            return Err(Error::usage(format!(
                "setting '{}' has no unseen classes",
                setting.name
            )));
        }
        for c in &setting.unseen_classes {
            if !vocab.contains(c) {
                return Err(Error::usage(format!(
                    "setting '{}' names unknown class '{c}'",
                    setting.name
                )));
            }
        }
        let unseen: Vec<String> = vocab
            .iter()
            .filter(|c| setting.unseen_classes.contains(c))
            .cloned()
            .collect();
        let seen: Vec<String> = vocab
            .iter()
            .filter(|c| !setting.unseen_classes.contains(c))
            .cloned()
            .collect();
        if seen.is_empty() {
            return Err(Error::usage(format!(
                "setting '{}' leaves zero seen classes",
                setting.name
            )));
        }
        debug_assert!(seen.iter().all(|c| !unseen.contains(c)));
        Ok(DomainSet {
            domains,
            vocab,
            seen,
            unseen,
            target,
        })
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn seen_classes(&self) -> &[String] {
        &self.seen
    }

    pub fn unseen_classes(&self) -> &[String] {
        &self.unseen
    }

    pub fn target(&self) -> usize {
        self.target
    }

    fn class_ids(&self, names: &[String]) -> HashSet<usize> {
        self.vocab
            .iter()
            .enumerate()
            .filter(|(_, c)| names.contains(c))
            .map(|(i, _)| i)
            .collect()
    }

    /// Leave-one-domain-out split: training domains hold seen classes only;
    /// the target domain yields seen-class (DG) and unseen-class (ZSDG)
    /// evaluation sets.
    pub fn split(&self) -> SettingSplit {
        let seen_ids = self.class_ids(&self.seen);
        let unseen_ids = self.class_ids(&self.unseen);
        let train_domains: Vec<Domain> = self
            .domains
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.target)
            .map(|(_, d)| Domain {
                tag: d.tag.clone(),
                data: d.data.filter_classes(&seen_ids),
            })
            .collect();
        let target = &self.domains[self.target].data;
        SettingSplit {
            train_domains,
            eval_dg: target.filter_classes(&seen_ids),
            eval_zsdg: target.filter_classes(&unseen_ids),
        }
    }
}

/// Parse a class-name map file: one `index<TAB>name` line per class,
/// indices forming a dense `0..k` range.
pub fn load_class_map(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (idx, name) = line.split_once('\t').ok_or_else(|| {
            Error::format(path, format!("line {}: expected 'index<TAB>name'", lineno + 1))
        })?;
        let idx: usize = idx.trim().parse().map_err(|_| {
            Error::format(path, format!("line {}: bad index '{idx}'", lineno + 1))
        })?;
        pairs.push((idx, name.trim().to_string()));
    }
    pairs.sort_by_key(|(i, _)| *i);
    for (want, (got, _)) in pairs.iter().enumerate() {
        if *got != want {
            return Err(Error::format(
                path,
                format!("class indices must form a dense 0..k range; missing {want}"),
            ));
        }
    }
    Ok(pairs.into_iter().map(|(_, n)| n).collect())
}

#[cfg(test)]
pub(crate) fn tiny_set(labels: &[usize], vocab: &[&str]) -> LabeledImageSet {
    // 2x2 single-channel images whose pixel values encode the label
    let images: Vec<f64> = labels
        .iter()
        .flat_map(|&l| {
            let v = (l as f64 + 1.0) / (vocab.len() as f64 + 1.0);
            vec![v; 4]
        })
        .collect();
    LabeledImageSet::new(
        (2, 2, 1),
        images,
        labels.to_vec(),
        vocab.iter().map(|s| s.to_string()).collect(),
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_domains() -> Vec<Domain> {
        (0..3)
            .map(|i| Domain {
                tag: format!("D{i}"),
                data: tiny_set(&[0, 1, 2, 0, 1, 2], &["a", "b", "c"]),
            })
            .collect()
    }

    #[test]
    fn split_partitions_target_and_filters_train() {
        let setting = Setting::new("s", &["c"]);
        let ds = DomainSet::new(three_domains(), &setting, 1).unwrap();
        assert_eq!(ds.seen_classes(), &["a".to_string(), "b".to_string()]);
        let split = ds.split();
        assert_eq!(split.train_domains.len(), 2);
        // no unseen-class image in any train domain
        for d in &split.train_domains {
            for i in 0..d.data.len() {
                assert_ne!(d.data.label_name(i), "c");
            }
        }
        // |eval_dg| + |eval_zsdg| == |target|
        assert_eq!(split.eval_dg.len() + split.eval_zsdg.len(), 6);
        assert_eq!(split.eval_zsdg.len(), 2);
    }

    #[test]
    fn zero_seen_classes_rejected() {
        let setting = Setting::new("all", &["a", "b", "c"]);
        assert!(DomainSet::new(three_domains(), &setting, 0).is_err());
    }

    #[test]
    fn unknown_setting_class_rejected() {
        let setting = Setting::new("bad", &["zebra"]);
        assert!(DomainSet::new(three_domains(), &setting, 0).is_err());
    }

    #[test]
    fn target_out_of_range_rejected() {
        let setting = Setting::new("s", &["c"]);
        assert!(DomainSet::new(three_domains(), &setting, 3).is_err());
    }

    #[test]
    fn leave_one_out_touches_every_domain_once() {
        let setting = Setting::new("s", &["c"]);
        let mut seen_targets = Vec::new();
        for t in 0..3 {
            let ds = DomainSet::new(three_domains(), &setting, t).unwrap();
            let split = ds.split();
            assert_eq!(split.train_domains.len(), 2);
            seen_targets.push(t);
        }
        assert_eq!(seen_targets, vec![0, 1, 2]);
    }

    #[test]
    fn pixel_range_is_enforced() {
        let r = LabeledImageSet::new((1, 1, 1), vec![1.5], vec![0], vec!["a".into()]);
        assert!(r.is_err());
    }

    #[test]
    fn fmnist_setting1_matches_catalog() {
        let settings = builtin_settings("fmnist");
        assert_eq!(settings[0].unseen_classes, vec!["t-shirt", "sandal"]);
        assert_eq!(builtin_settings("cifar10").len(), 5);
        assert_eq!(builtin_settings("cifar100")[0].unseen_classes.len(), 20);
    }
}
