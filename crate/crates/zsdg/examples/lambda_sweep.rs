//! Sweep the semantic weight over the standard ablation grid and aggregate
//! across seeds.
//!
//! Run with `cargo run --example lambda_sweep`.

use zsdg::data::{make_synthetic_zsdg, DomainSet, SyntheticSpec};
use zsdg::engine::{train, Method, RunConfig};
use zsdg::eval::aggregate;
use zsdg::models::ArchSpec;

fn main() -> zsdg::Result<()> {
    let universe = make_synthetic_zsdg(&SyntheticSpec {
        images_per_class: 25,
        ..Default::default()
    })?;
    let ds = DomainSet::new(universe.domains.clone(), &universe.default_setting, 3)?;

    println!("{:<8} {:<20} {:<20}", "lambda", "DG (mean +/- std)", "ZSDG (mean +/- std)");
    for lambda in [0.1, 0.5, 1.0, 5.0, 10.0] {
        let mut dg = Vec::new();
        let mut zsdg = Vec::new();
        for seed in 0..3 {
            let mut cfg = RunConfig::new(Method::SAgg, "synthetic", "setting1");
            cfg.target_domain = 3;
            cfg.lambda = lambda;
            cfg.seed = seed;
            cfg.epochs = 15;
            cfg.batch_size = 64;
            cfg.arch = ArchSpec {
                extractor_hidden: vec![64, 32],
                decoder_hidden: vec![32, 64],
                critic_hidden: vec![16],
            };
            let (record, _) = train(&cfg, &ds, &universe.table)?;
            dg.push(record.dg_accuracy);
            zsdg.push(record.zsdg_accuracy);
        }
        let dg = aggregate(&dg)?;
        let zs = aggregate(&zsdg)?;
        println!(
            "{lambda:<8} {:.3} +/- {:<12.3} {:.3} +/- {:.3}",
            dg.mean, dg.std, zs.mean, zs.std
        );
    }
    println!("\n(the CLI equivalent: zsdg sweep --lambdas 0.1,0.5,1,5,10 --seeds 5 ...)");
    Ok(())
}
