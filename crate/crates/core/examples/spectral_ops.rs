//! Fourier pseudo-spectral building blocks: derivatives, Parseval and snapshots.

use std::f64::consts::PI;

use gfrk::spectral::{inner, read_snapshot, write_snapshot, Field, Grid, Spectral};

fn main() -> gfrk::Result<()> {
    let grid = Grid::new(64, 32, 2.0 * PI, PI)?;
    let sp = Spectral::new(&grid);
    let f = Field::from_fn(&grid, |x, y| x.sin() * (2.0 * y).cos());

    let lap = sp.laplacian(&f);
    let exact = f.map(|v| -5.0 * v);
    println!("laplacian error  {:.2e}", lap.sub(&exact).max_abs());

    let (fx, fy) = sp.gradient(&f);
    let div = sp.divergence(&fx, &fy);
    println!("div grad - lap   {:.2e}", div.sub(&lap).max_abs());

    let coeffs = sp.forward(&f);
    let parseval: f64 = coeffs.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>()
        * grid.area();
    println!("(f, f) = {:.12}, Parseval {:.12}", inner(&f, &f), parseval);

    let mut buf = Vec::new();
    write_snapshot(&mut buf, &f, 0.5).expect("in-memory write");
    let (back, t) = read_snapshot(buf.as_slice())?;
    println!("snapshot at t = {t} round-trips: {}", back == f);
    Ok(())
}
