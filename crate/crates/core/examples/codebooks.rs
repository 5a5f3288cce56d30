//! Clusters a bimodal weight population with k-means and with the binary codebook tree.

use lutnn::composer::{build_tree, kmeans};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lutnn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let weights: Vec<f64> = (0..4000)
        .map(|i| {
            let centre = if i % 3 == 0 { -0.4 } else { 0.25 };
            centre + 0.08 * (rng.gen::<f64>() + rng.gen::<f64>() - 1.0)
        })
        .collect();

    let km = kmeans(&weights, 8, 1)?;
    println!("k-means, 8 centroids, WCSS {:.4}", km.wcss);
    println!("  {:?}", rounded(km.codebook.centroids()));
    println!("  sizes {:?}", km.sizes);

    // Each level doubles the codebook; level l holds 2^l centroids.
    let tree = build_tree(&weights, 4, 1)?;
    for l in 1..=tree.depth() {
        println!("tree level {l}: {:?}", rounded(tree.level(l).centroids()));
    }

    let cb = tree.with_size(8)?;
    for w in [-0.5, -0.38, 0.0, 0.3] {
        let code = cb.encode(w);
        println!("{w:+.2} -> code {code} ({}-bit) -> {:+.4}", cb.bits(), cb.decode(code));
    }
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
