//! Encode a 2D joint into a heatmap and decode it back by center of mass.

use sfr_core::plane::{
    decode_plane, encode_corners, encode_heatmap, ComKernel, CornerCell, GaussKernel,
};

fn main() -> sfr_core::Result<()> {
    let n = 64;
    let (u, v) = (0.4137, 0.6021);
    let kernel = GaussKernel::with_default_sigma(7)?;
    let com = ComKernel::new(n);

    let cell = CornerCell::locate(u, v, n)?;
    let (lo, hi) = cell.feasible_interval();
    println!(
        "cell row {} col {} a={:.4} b={:.4}",
        cell.row, cell.col, cell.a, cell.b
    );
    println!(
        "free weight interval [{lo:.4}, {hi:.4}], midpoint {:.4}",
        cell.midpoint_t()
    );
    println!("corner weights {:?}", cell.weights_for(cell.midpoint_t()));

    let corners = encode_corners(u, v, n)?;
    let (cu, cv) = decode_plane(&corners, &com)?;
    println!("corners only:   ({cu:.12}, {cv:.12})");

    let h = encode_heatmap(u, v, n, &kernel)?;
    let (du, dv) = decode_plane(&h, &com)?;
    println!("smoothed:       ({du:.12}, {dv:.12})");
    println!("residual {:e}", (du - u).abs().max((dv - v).abs()));
    Ok(())
}
