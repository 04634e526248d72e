//! Scores a toy interval forecast with pinball loss, PICP, Winkler score and
//! normalized deviation.
//!
//! cargo run --release --example metrics

use mqtcn::metrics::{mean_pinball, normalized_deviation, picp, winkler};

fn main() -> mqtcn::Result<()> {
    let actual = [12.0, 30.0, 41.0, 18.0, 5.0, 0.0];
    let q05 = [8.0, 20.0, 30.0, 19.0, 1.0, 0.0];
    let q50 = [11.0, 27.0, 38.0, 22.0, 4.0, 0.5];
    let q90 = [15.0, 33.0, 40.0, 26.0, 7.0, 2.0];
    for (q, f) in [(0.05, &q05), (0.5, &q50), (0.9, &q90)] {
        println!("pinball q={q:<4}: {:.4}", mean_pinball(q, &actual, f)?);
    }
    println!("PICP [q05, q90]: {:.2}% (nominal 85%)", picp(&actual, &q05, &q90)?);
    println!("Winkler (alpha 0.15): {:.4}", winkler(&actual, &q05, &q90, 0.15)?);
    println!("ND of the median: {:.4}", normalized_deviation(&actual, &q50)?);
    Ok(())
}
