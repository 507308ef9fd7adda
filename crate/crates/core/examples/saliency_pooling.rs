//! Edge saliency of a synthetic image pooled onto each grid size.

use puzzlemix::saliency::{proxy_saliency, region_saliency, Grid, GRID_SIDES};
use puzzlemix::synthetic::synthetic_pairs;

fn main() -> puzzlemix::Result<()> {
    let (image, _) = synthetic_pairs(1, 1)?.remove(0);
    let map = proxy_saliency(&image);
    for side in GRID_SIDES {
        let grid = Grid::for_image(side, image.height(), image.width())?;
        let pooled = region_saliency(&map, &grid)?;
        let v = pooled.saliency.values();
        let top = v.iter().cloned().fold(0.0, f64::max);
        println!("{side:>2}x{side:<2} regions: sum {:.6}, largest region {:.4}", v.iter().sum::<f64>(), top);
        if side == 4 {
            for row in v.chunks(side) {
                println!("      {}", row.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" "));
            }
        }
    }
    Ok(())
}
