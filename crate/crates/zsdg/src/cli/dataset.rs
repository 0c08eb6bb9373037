//! Prepared-dataset directories: per-domain tensor containers plus a JSON
//! manifest (domains, angles, vocabulary, counts, settings).

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::{Domain, LabeledImageSet, Setting};
use crate::engine::checkpoint;
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dataset: String,
    pub angles: Vec<f64>,
    pub domains: Vec<String>,
    pub files: Vec<String>,
    pub vocabulary: Vec<String>,
    pub counts: Vec<usize>,
    pub image_dims: [usize; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_file: Option<String>,
    pub settings: Vec<Setting>,
}

/// Write per-domain tensor files and the manifest into `dir`.
pub fn save_prepared(
    dir: &Path,
    dataset: &str,
    angles: &[f64],
    domains: &[Domain],
    settings: &[Setting],
    embedding_file: Option<&str>,
    force: bool,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join(MANIFEST_NAME);
    if manifest_path.exists() && !force {
        return Err(Error::usage(format!(
            "{} already exists; pass --force to overwrite",
            manifest_path.display()
        )));
    }
    let mut files = Vec::new();
    let mut counts = Vec::new();
    for (i, domain) in domains.iter().enumerate() {
        let file = format!("domain_{i:02}.tensors");
        let set = &domain.data;
        let (h, w, c) = set.dims();
        let images = Tensor::new(
            vec![set.len(), h, w, c],
            (0..set.len()).flat_map(|j| set.image(j).to_vec()).collect(),
        )?;
        let labels = Tensor::new(
            vec![set.len()],
            set.label_ids().iter().map(|&l| l as f64).collect(),
        )?;
        checkpoint::save_tensors(
            &[("images".to_string(), &images), ("labels".to_string(), &labels)],
            dir.join(&file),
        )?;
        files.push(file);
        counts.push(set.len());
    }
    let (h, w, c) = domains[0].data.dims();
    let manifest = Manifest {
        dataset: dataset.to_string(),
        angles: angles.to_vec(),
        domains: domains.iter().map(|d| d.tag.clone()).collect(),
        files,
        vocabulary: domains[0].data.vocab().to_vec(),
        counts,
        image_dims: [h, w, c],
        embedding_file: embedding_file.map(String::from),
        settings: settings.to_vec(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::usage(format!("manifest serialization failed: {e}")))?;
    let tmp = manifest_path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &manifest_path).map_err(|e| Error::io(&manifest_path, e))
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, format!("bad manifest: {e}")))
}

/// Load every domain listed in the manifest.
pub fn load_prepared(dir: &Path) -> Result<(Manifest, Vec<Domain>)> {
    let manifest = load_manifest(dir)?;
    let [h, w, c] = manifest.image_dims;
    let mut domains = Vec::with_capacity(manifest.files.len());
    for (tag, file) in manifest.domains.iter().zip(&manifest.files) {
        let path = dir.join(file);
        let tensors = checkpoint::load_tensor_map(&path)?;
        let images = tensors
            .get("images")
            .ok_or_else(|| Error::format(&path, "missing 'images' tensor".to_string()))?;
        let labels = tensors
            .get("labels")
            .ok_or_else(|| Error::format(&path, "missing 'labels' tensor".to_string()))?;
        let label_ids: Vec<usize> = labels.values().iter().map(|&v| v as usize).collect();
        let set = LabeledImageSet::new(
            (h, w, c),
            images.values().to_vec(),
            label_ids,
            manifest.vocabulary.clone(),
        )
        .map_err(|e| Error::format(&path, e.to_string()))?;
        domains.push(Domain {
            tag: tag.clone(),
            data: set,
        });
    }
    Ok((manifest, domains))
}

/// Deterministically keep at most `cap` images per class (seeded choice).
pub fn per_class_cap(set: &LabeledImageSet, cap: usize, seed: u64) -> Result<LabeledImageSet> {
    if cap == 0 {
        return Err(Error::usage("per-class cap must be >= 1"));
    }
    let mut keep: Vec<usize> = Vec::new();
    for class_id in 0..set.vocab().len() {
        let mut indices: Vec<usize> = (0..set.len())
            .filter(|&i| set.label_id(i) == class_id)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class_id as u64));
        indices.shuffle(&mut rng);
        indices.truncate(cap);
        keep.extend(indices);
    }
    keep.sort_unstable();
    let (h, w, c) = set.dims();
    let images: Vec<f64> = keep.iter().flat_map(|&i| set.image(i).to_vec()).collect();
    let labels: Vec<usize> = keep.iter().map(|&i| set.label_id(i)).collect();
    LabeledImageSet::new((h, w, c), images, labels, set.vocab().to_vec())
}

/// Zero-pad every image onto a centered `ceil(side * sqrt(2))` canvas so
/// rotations never clip.
pub fn enlarge_canvas(set: &LabeledImageSet) -> Result<LabeledImageSet> {
    let (h, w, c) = set.dims();
    let side = h.max(w);
    let new_side = (side as f64 * std::f64::consts::SQRT_2).ceil() as usize;
    let (dr, dc) = ((new_side - h) / 2, (new_side - w) / 2);
    let mut images = vec![0.0; set.len() * new_side * new_side * c];
    let frame = new_side * new_side * c;
    for i in 0..set.len() {
        let src = set.image(i);
        for r in 0..h {
            for col in 0..w {
                for ch in 0..c {
                    images[i * frame + ((r + dr) * new_side + (col + dc)) * c + ch] =
                        src[(r * w + col) * c + ch];
                }
            }
        }
    }
    LabeledImageSet::new(
        (new_side, new_side, c),
        images,
        set.label_ids().to_vec(),
        set.vocab().to_vec(),
    )
}

/// Default checkpoint filename for a run.
pub fn checkpoint_name(method: &str, setting: &str, target: usize, seed: u64, lambda: f64) -> PathBuf {
    PathBuf::from(format!(
        "ckpt_{method}_{setting}_t{target}_s{seed}_l{lambda}.zsdg"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic_zsdg, SyntheticSpec};

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            classes: 4,
            images_per_class: 3,
            canvas: 8,
            angles: vec![0.0, 45.0],
            ..Default::default()
        };
        let u = make_synthetic_zsdg(&spec).unwrap();
        save_prepared(
            dir.path(),
            "synthetic",
            &spec.angles,
            &u.domains,
            std::slice::from_ref(&u.default_setting),
            None,
            false,
        )
        .unwrap();
        let (manifest, domains) = load_prepared(dir.path()).unwrap();
        assert_eq!(manifest.domains, vec!["D0", "D1"]);
        assert_eq!(manifest.counts, vec![12, 12]);
        assert_eq!(domains.len(), 2);
        assert_eq!(domains[0].data, u.domains[0].data);

        // second save without force collides
        let err = save_prepared(
            dir.path(),
            "synthetic",
            &spec.angles,
            &u.domains,
            std::slice::from_ref(&u.default_setting),
            None,
            false,
        )
        .unwrap_err();
        assert!(err.to_string().contains("--force"), "{err}");
        // with force it succeeds
        save_prepared(
            dir.path(),
            "synthetic",
            &spec.angles,
            &u.domains,
            &[u.default_setting],
            None,
            true,
        )
        .unwrap();
    }

    #[test]
    fn per_class_cap_is_deterministic_and_bounded() {
        let spec = SyntheticSpec {
            classes: 4,
            images_per_class: 10,
            canvas: 8,
            angles: vec![0.0],
            ..Default::default()
        };
        let u = make_synthetic_zsdg(&spec).unwrap();
        let base = &u.domains[0].data;
        let a = per_class_cap(base, 4, 7).unwrap();
        let b = per_class_cap(base, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        for class_id in 0..4 {
            let count = a.label_ids().iter().filter(|&&l| l == class_id).count();
            assert_eq!(count, 4);
        }
        let c = per_class_cap(base, 4, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn enlarged_canvas_holds_all_mass() {
        let spec = SyntheticSpec {
            classes: 4,
            images_per_class: 2,
            canvas: 8,
            angles: vec![0.0],
            ..Default::default()
        };
        let u = make_synthetic_zsdg(&spec).unwrap();
        let base = &u.domains[0].data;
        let big = enlarge_canvas(base).unwrap();
        assert_eq!(big.dims().0, 12); // ceil(8 * sqrt2)
        let sum_base: f64 = (0..base.len()).flat_map(|i| base.image(i)).sum();
        let sum_big: f64 = (0..big.len()).flat_map(|i| big.image(i)).sum();
        assert!((sum_base - sum_big).abs() < 1e-12);
    }
}
