//! Inter-rater agreement on send-worthiness scores (0 = rewrite,
//! 1 = minor edits, 2 = send as is).
//!
//! cargo run --example kappa

use admitrag::evaluation::{cohens_kappa, rating_distribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = [2, 2, 2, 2, 1, 1, 1, 0, 0, 0];
    let b = [2, 2, 2, 1, 1, 1, 0, 0, 0, 0];
    println!("rater a: {:?}", rating_distribution(a));
    println!("rater b: {:?}", rating_distribution(b));
    println!("kappa = {:.4}", cohens_kappa(&a, &b)?);
    println!("identical raters: {:.4}", cohens_kappa(&a, &a)?);
    println!("everyone says 2: {:.4}", cohens_kappa(&[2; 5], &[2; 5])?);
    match cohens_kappa(&a[..3], &b) {
        Ok(k) => println!("unexpected {k}"),
        Err(e) => println!("length mismatch: {e}"),
    }
    Ok(())
}
