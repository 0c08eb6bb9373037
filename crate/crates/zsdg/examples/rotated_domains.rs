//! Build rotated domains from a base image set and inspect the result.
//!
//! Run with `cargo run --example rotated_domains`.

use zsdg::data::{build_rotated_domains, make_synthetic_zsdg, SyntheticSpec, DEFAULT_ANGLES};

fn ascii(image: &[f64], side: usize) -> String {
    let shades = [' ', '.', ':', 'o', '#'];
    let mut out = String::new();
    for r in 0..side {
        for c in 0..side {
            let v = image[r * side + c];
            let idx = ((v * 4.0).round() as usize).min(4);
            out.push(shades[idx]);
            out.push(shades[idx]);
        }
        out.push('\n');
    }
    out
}

fn main() -> zsdg::Result<()> {
    let spec = SyntheticSpec {
        classes: 6,
        images_per_class: 1,
        noise_sigma: 0.0,
        angles: vec![0.0],
        ..Default::default()
    };
    let universe = make_synthetic_zsdg(&spec)?;
    let base = &universe.domains[0].data;

    let domains = build_rotated_domains(base, &DEFAULT_ANGLES)?;
    println!(
        "built {} domains ({:?} degrees), each holding {} images",
        domains.len(),
        DEFAULT_ANGLES,
        base.len()
    );

    // the cross glyph, swept across the domain grid
    let cross = (0..base.len())
        .find(|&i| base.label_name(i) == "cross")
        .expect("cross class present");
    for d in &domains {
        println!("domain {} ({}):", d.tag, d.data.label_name(cross));
        println!("{}", ascii(d.data.image(cross), d.data.dims().0));
    }

    // rotation keeps labels and counts aligned across domains
    for d in &domains {
        assert_eq!(d.data.label_ids(), base.label_ids());
    }
    println!("all domains share the base label sequence (index-aligned)");
    Ok(())
}
