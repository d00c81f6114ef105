//! Cross-validates Baseline, IR and LR on one synthetic dataset and prints
//! the comparison table.
//!
//! cargo run --release -p mvc-core --example compare -- [seed] [epochs]

use std::time::Instant;

use mvc_core::dataset::{generate_synthetic, SynthConfig};
use mvc_core::pairing::PairVariant;
use mvc_core::report::comparison_text;
use mvc_core::trainer::{compare_methods, Method, TrainConfig};

fn main() -> mvc_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let data = generate_synthetic(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;
    let config = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let methods = [
        Method::Baseline,
        Method::Contrastive(PairVariant::Ir),
        Method::Contrastive(PairVariant::Lr),
    ];
    let start = Instant::now();
    let table = compare_methods(&data, &config, &methods, 5)?;
    println!("{}", comparison_text(&table));
    for row in &table.rows {
        let knn: Vec<String> = row
            .knn_mean
            .iter()
            .map(|p| format!("k={}:{:.3}", p.k, p.auc))
            .collect();
        println!("{:<9} knn {}", row.label, knn.join(" "));
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
