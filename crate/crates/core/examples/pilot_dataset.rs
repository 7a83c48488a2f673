//! Writes the desk-scale training set: 20 random binary 8x8 images drawn
//! from ChaCha8 with seed 0, as PGM files plus a manifest.
//!
//! ```text
//! cargo run --release --example pilot_dataset -- fixtures/pilot
//! eqr train --dataset fixtures/pilot/manifest.txt --out net.eqn --log train.csv
//! ```

use eqr_core::io::save_pgm;
use eqr_core::tensor::{CircularTensor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

fn main() -> eqr_core::Result<()> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "fixtures/pilot".into()),
    );
    std::fs::create_dir_all(&dir)?;
    let shape = Shape::new(&[8, 8])?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut manifest = String::from("#version=1\n#shape=8x8\n#channels=1\n#range=binary\n");
    for i in 0..20 {
        let data = (0..64).map(|_| rng.gen_range(0..2) as f64).collect();
        let name = format!("img{i:02}.pgm");
        save_pgm(&CircularTensor::new(shape.clone(), data)?, dir.join(&name))?;
        manifest.push_str(&format!("{name}\timg{i:02}\n"));
    }
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    println!("wrote 20 images to {}", dir.display());
    Ok(())
}
