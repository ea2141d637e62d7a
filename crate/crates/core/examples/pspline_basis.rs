//! Cubic B-spline basis for the age smooths and the first-difference prior
//! that makes them P-splines.
//!
//! cargo run --example pspline_basis -- [x_old]

use mortcast::splines::{difference_penalty, smooth_prior, PenaltyEigen, SplineBlock};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x_old: u32 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(85);
    let ages: Vec<f64> = (1..x_old).map(f64::from).collect();
    let block = SplineBlock::regular(ages, 4.0, 3)?;
    println!("ages 1-{}: {} coefficients", x_old - 1, block.n_coef);
    println!("knots {:?}", block.knots);

    let worst = (0..block.basis.nrows())
        .map(|i| (block.basis.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    println!("rows sum to one within {worst:.1e}");

    // a straight line in the coefficients stays a straight line in age
    let coef: Vec<f64> = (0..block.n_coef).map(|j| -9.0 + 0.25 * j as f64).collect();
    let s = block.evaluate(&coef);
    println!("s(1) = {:.3}, s(40) = {:.3}, s({}) = {:.3}", s[0], s[39], x_old - 1, s[s.len() - 1]);

    let pen = difference_penalty(block.n_coef);
    let eig = PenaltyEigen::new(block.n_coef);
    println!(
        "penalty rank {}, log pdet {:.4}, smallest nonzero eigenvalue {:.4}",
        block.n_coef - 1,
        pen.log_pdet_diff(),
        eig.values[1]
    );
    for (sa, sb) in [(0.05, 10.0), (0.5, 10.0)] {
        let p = smooth_prior(&coef, sa, sb);
        println!("log prior of the line at sigma_A {sa}, sigma_B {sb}: {:.3}", p.log_density);
    }

    let mut out = Vec::new();
    block.write_csv(&mut out)?;
    for line in String::from_utf8(out)?.lines().take(3) {
        println!("  {}", &line[..line.len().min(100)]);
    }
    Ok(())
}
