//! Materializes the bundled example models and frames as files so the CLI
//! can be driven from disk:
//!
//! ```text
//! cargo run --release --example make_fixtures -- <out_dir>
//! ```
//!
//! Writes one manifest (plus weight blobs) per model under `<out_dir>` and
//! a pair of test images.

use lightator::fixtures;
use lightator::netir;

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/fixtures".into());
    let dir = std::path::Path::new(&out);

    for model in [
        fixtures::lenet_like(),
        fixtures::vgg9_like(),
        fixtures::vgg9_like_ca(),
        fixtures::conv7_demo(),
    ] {
        let subdir = dir.join(&model.name);
        let manifest = fixtures::write_fixture(&model, &subdir).expect("write fixture");
        println!("{}", manifest.display());
    }

    let digit = fixtures::digit_frame();
    netir::save_pgm(dir.join("digit.pgm"), 28, 28, &digit.source).expect("digit image");
    println!("{}", dir.join("digit.pgm").display());

    let rgb = fixtures::cifar_frame();
    netir::save_ppm(dir.join("rgb32.ppm"), 32, 32, &rgb.source).expect("rgb image");
    println!("{}", dir.join("rgb32.ppm").display());
}
