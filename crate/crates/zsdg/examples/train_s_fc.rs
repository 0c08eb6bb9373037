//! One feature-critic meta-step in slow motion, then a full training run.
//!
//! Each step simulates domain shift inside the training set: a 3:2
//! meta-train/meta-test split of the source domains, a virtual extractor
//! update with and without the critic's auxiliary loss, and a critic update
//! along the tanh meta-advantage between the two branches.
//!
//! Run with `cargo run --example train_s_fc`.

use zsdg::autodiff::{Optimizer, OptimizerSpec, Tensor};
use zsdg::data::{epoch_batches, make_synthetic_zsdg, DomainSet, SyntheticSpec};
use zsdg::engine::{train, Method, RunConfig};
use zsdg::models::{ArchSpec, BundleParts, ModelBundle};
use zsdg::objectives::{s_fc_step, sample_meta_split, FcStepOptions, LossWeights, ObjectiveBatch};

fn main() -> zsdg::Result<()> {
    let universe = make_synthetic_zsdg(&SyntheticSpec::default())?;
    let ds = DomainSet::new(universe.domains.clone(), &universe.default_setting, 3)?;
    let split = ds.split();

    // --- a single step, by hand ---
    let arch = ArchSpec {
        extractor_hidden: vec![96, 48],
        decoder_hidden: vec![48, 96],
        critic_hidden: vec![16],
    };
    let mut bundle = ModelBundle::init(
        split.train_domains[0].data.pixel_count(),
        universe.table.dim(),
        ds.seen_classes().len(),
        split.train_domains.len(),
        &arch,
        BundleParts {
            head: true,
            decoders: false,
            critic: true,
        },
        0,
    )?;
    let meta = sample_meta_split(split.train_domains.len(), 7)?;
    println!(
        "meta split: train domains {:?}, test domains {:?}",
        meta.meta_train, meta.meta_test
    );

    let batch_from = |domain: usize| -> zsdg::Result<(Tensor, Vec<usize>, Vec<&str>)> {
        let data = &split.train_domains[domain].data;
        let batch = epoch_batches(data, 32, 11)?.next().expect("nonempty domain");
        let seen = ds.seen_classes();
        let indices = batch
            .labels
            .iter()
            .map(|&l| {
                seen.iter()
                    .position(|c| c == &data.vocab()[l])
                    .expect("seen class")
            })
            .collect();
        let names = batch.labels.iter().map(|&l| data.vocab()[l].as_str()).collect();
        Ok((batch.x, indices, names))
    };
    let (xtr, itr, ntr) = batch_from(meta.meta_train[0])?;
    let (xts, its, nts) = batch_from(meta.meta_test[0])?;
    let meta_train = ObjectiveBatch { x: xtr, class_indices: itr, label_names: ntr };
    let meta_test = ObjectiveBatch { x: xts, class_indices: its, label_names: nts };

    let mut model_opt = Optimizer::new(OptimizerSpec::adam(1e-3))?;
    let mut critic_opt = Optimizer::new(OptimizerSpec::adam(1e-3))?;
    let diag = s_fc_step(
        &mut bundle,
        &mut model_opt,
        &mut critic_opt,
        &meta_train,
        &meta_test,
        &universe.table,
        &LossWeights::new(1.0, 0.0)?,
        &FcStepOptions { inner_lr: 1e-3, include_aux: true },
    )?;
    println!(
        "one step: ce {:.4}, semantic {:.4}, aux {:.4}",
        diag.ce, diag.semantic, diag.aux
    );
    println!(
        "meta-test ce with aux {:.6} vs without {:.6} -> advantage {:+.2e}",
        diag.meta_ce_with_aux, diag.meta_ce_without_aux, diag.advantage
    );

    // --- the full run ---
    let mut cfg = RunConfig::new(Method::SFc, "synthetic", "setting1");
    cfg.target_domain = 3;
    cfg.epochs = 20;
    cfg.batch_size = 64;
    cfg.arch = arch;
    let (record, _) = train(&cfg, &ds, &universe.table)?;
    println!(
        "\nfull s-fc run: DG {:.3}  ZSDG {:.3}  ({:.1}s)",
        record.dg_accuracy, record.zsdg_accuracy, record.wall_seconds
    );
    Ok(())
}
