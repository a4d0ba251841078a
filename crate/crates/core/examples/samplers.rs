//! Draws from the building-block samplers and prints their sample moments
//! next to the closed forms.
//!
//! Run with `cargo run --release --example samplers`.

use mqbsts::distributions::{sample_gig, sample_inverse_wishart, sample_mal};
use mqbsts::{Rng, SymmetricPd};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

const DRAWS: usize = 200_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = Rng::new(7);

    // GIG(a, b, -1/2) is inverse Gaussian with mean √(b/a)
    let (a, b) = (2.0, 8.0);
    let gig: f64 = (0..DRAWS).map(|_| sample_gig(a, b, -0.5, &mut rng)).sum::<Result<f64, _>>()? / DRAWS as f64;
    println!("GIG({a}, {b}, -0.5) mean {gig:.4}, exact {:.4}", (b / a).sqrt());

    let scale = SymmetricPd::new(dmatrix![2.0, 0.5; 0.5, 1.0])?;
    let df = 6.0;
    let mut iw = DMatrix::zeros(2, 2);
    for _ in 0..DRAWS {
        iw += sample_inverse_wishart(df, &scale, &mut rng)?.matrix();
    }
    let exact = scale.matrix() / (df - 3.0);
    println!("inverse Wishart mean {:.4?}, exact {:.4?}", (iw / DRAWS as f64).as_slice(), exact.as_slice());

    let phi = dvector![1.5, -0.5];
    let sigma = SymmetricPd::new(dmatrix![1.0, 0.6; 0.6, 2.0])?;
    let mut mal = DVector::zeros(2);
    for _ in 0..DRAWS {
        mal += sample_mal(&phi, &sigma, &mut rng)?;
    }
    println!("asymmetric Laplace mean {:.4?}, location {:?}", (mal / DRAWS as f64).as_slice(), phi.as_slice());
    Ok(())
}
