//! Round-trips an image through PNG and a saliency map through PFT.

use puzzlemix::saliency::proxy_saliency;
use puzzlemix::synthetic::synthetic_pairs;
use puzzlemix::tensor_io::{load_image, read_pft, save_image, write_pft};

fn main() -> puzzlemix::Result<()> {
    let dir = std::env::temp_dir().join("puzzlemix-tensor-io");
    std::fs::create_dir_all(&dir).map_err(|e| puzzlemix::Error::Format(e.to_string()))?;
    let (image, _) = synthetic_pairs(0, 1)?.remove(0);

    let png = dir.join("image.png");
    save_image(&image, &png)?;
    let back = load_image(&png)?;
    let worst = image.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
    println!("{} {:?}: max PNG round-trip error {:.4} (quantization step {:.4})", png.display(), back.shape(), worst, 1.0 / 255.0);

    let pft = dir.join("saliency.pft");
    let sal = proxy_saliency(&image);
    write_pft(&sal, &pft)?;
    assert_eq!(read_pft(&pft)?, sal);
    println!("{} {:?}: bit-exact", pft.display(), sal.shape());
    Ok(())
}
