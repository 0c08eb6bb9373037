//! Tour of the synthetic zero-shot benchmark: domains, class split, and
//! the semantic geometry that makes transfer to held-out classes possible.
//!
//! Run with `cargo run --example synthetic_benchmark`.

use zsdg::data::{make_synthetic_zsdg, DomainSet, SyntheticSpec};

fn main() -> zsdg::Result<()> {
    let spec = SyntheticSpec::default();
    let universe = make_synthetic_zsdg(&spec)?;
    println!(
        "classes: {:?}\ndomains: {} rotations x {} images each",
        universe.vocab,
        universe.domains.len(),
        universe.domains[0].data.len()
    );
    println!(
        "default setting '{}' holds out: {:?}",
        universe.default_setting.name, universe.default_setting.unseen_classes
    );

    // embedding geometry: each held-out class sits next to its seen twin
    let dist = |a: &str, b: &str| -> zsdg::Result<f64> {
        let (va, vb) = (universe.table.lookup(a)?, universe.table.lookup(b)?);
        Ok(va
            .iter()
            .zip(&vb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt())
    };
    for unseen in &universe.default_setting.unseen_classes {
        let mut pairs: Vec<(String, f64)> = universe
            .vocab
            .iter()
            .filter(|c| *c != unseen)
            .map(|c| Ok((c.clone(), dist(unseen, c)?)))
            .collect::<zsdg::Result<_>>()?;
        pairs.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        println!(
            "nearest embeddings to '{unseen}': {}",
            pairs
                .iter()
                .take(3)
                .map(|(c, d)| format!("{c} ({d:.2})"))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }

    // leave-one-domain-out views
    for target in 0..universe.domains.len() {
        let ds = DomainSet::new(universe.domains.clone(), &universe.default_setting, target)?;
        let split = ds.split();
        println!(
            "target D{target}: {} train domains x {} seen-class images, eval {} DG / {} ZSDG",
            split.train_domains.len(),
            split.train_domains[0].data.len(),
            split.eval_dg.len(),
            split.eval_zsdg.len()
        );
    }
    Ok(())
}
