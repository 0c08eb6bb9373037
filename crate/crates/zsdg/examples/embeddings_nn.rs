//! Load the shipped word-vector fixture and classify by nearest prototype.
//!
//! Run with `cargo run --example embeddings_nn`.

use std::path::Path;

use zsdg::embeddings::{load_embedding_text, nearest_class, PrototypeSet};

fn main() -> zsdg::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/glove_50d_12.txt");
    let table = load_embedding_text(&path, Some(50), false)?;
    println!(
        "loaded {} vectors of dimension {}: {}",
        table.len(),
        table.dim(),
        table.names().join(", ")
    );

    // multi-token class names resolve to the mean of their token vectors
    let composite = table.lookup("t-shirt")?;
    println!(
        "lookup(\"t-shirt\") = mean of t and shirt, first coords: [{:.3}, {:.3}, ...]",
        composite[0], composite[1]
    );

    // unknown names suggest the closest alternatives
    if let Err(e) = table.lookup("sandals") {
        println!("{e}");
    }

    // nearest-neighbor inference over the zero-shot classes of setting 1
    let unseen = vec!["t-shirt".to_string(), "sandal".to_string()];
    let protos = PrototypeSet::new(&table, &unseen)?;
    for probe in ["shirt", "sneaker", "boot", "pullover"] {
        let v = table.lookup(probe)?;
        println!(
            "an image feature sitting at w[{probe}] classifies as '{}'",
            nearest_class(&v, &protos)?
        );
    }
    Ok(())
}
