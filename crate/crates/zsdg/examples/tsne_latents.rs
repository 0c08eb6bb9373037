//! Project a trained model's latent space to two dimensions with exact
//! t-SNE and render the scatter to SVG.
//!
//! Run with `cargo run --example tsne_latents`. Outputs land in the
//! current directory as `latents.svg` / `latents.csv`.

use zsdg::data::{make_synthetic_zsdg, DomainSet, SyntheticSpec};
use zsdg::engine::{train, Method, RunConfig};
use zsdg::eval::{emit_scatter_svg, tsne_project, TsneOptions};
use zsdg::models::ArchSpec;

fn main() -> zsdg::Result<()> {
    let universe = make_synthetic_zsdg(&SyntheticSpec::default())?;
    let ds = DomainSet::new(universe.domains.clone(), &universe.default_setting, 3)?;
    let mut cfg = RunConfig::new(Method::SAgg, "synthetic", "setting1");
    cfg.target_domain = 3;
    cfg.epochs = 30;
    cfg.batch_size = 64;
    cfg.arch = ArchSpec {
        extractor_hidden: vec![96, 48],
        decoder_hidden: vec![48, 96],
        critic_hidden: vec![16],
    };
    let (_, bundle) = train(&cfg, &ds, &universe.table)?;

    // latents of the full held-out domain: seen classes plus the two
    // zero-shot classes
    let target = &ds.domains()[3].data;
    let features = bundle.extract_values(&target.as_matrix())?;
    let result = tsne_project(
        &features,
        &TsneOptions {
            perplexity: 20.0,
            iterations: 600,
            seed: 0,
            learning_rate: 50.0,
        },
    )?;
    println!(
        "projected {} latents; KL {:.3} -> {:.3} (bisection depth {})",
        result.points.len(),
        result.kl_initial,
        result.kl_final,
        result.bisection_max_iters
    );

    let class_ids: Vec<usize> = target.label_ids().to_vec();
    emit_scatter_svg(
        &result.points,
        &class_ids,
        target.vocab(),
        "latents.svg",
    )?;
    let mut csv = String::from("x,y,class\n");
    for (p, &c) in result.points.iter().zip(target.label_ids()) {
        csv.push_str(&format!("{},{},{}\n", p[0], p[1], target.vocab()[c]));
    }
    std::fs::write("latents.csv", csv).expect("write points");
    println!("wrote latents.svg and latents.csv (zero-shot classes cluster by their seen twins)");
    Ok(())
}
