//! Writes `fixtures/alcohol_synthetic.csv`: 89 synthetic subjects with the
//! column layout of the drinking-diary data (count response, seven
//! covariates and five interaction columns). Values are simulated; no real
//! data is involved.
//!
//! ```text
//! cargo run --example make_alcohol_fixture -- fixtures/alcohol_synthetic.csv
//! ```

use std::error::Error;

use ghl::family::Family;
use ghl::sampling::{sample_response, stream};
use rand::Rng;

const N: usize = 89;
const SEED: u64 = 2008;

fn round(x: f64, places: i32) -> f64 {
    let s = 10f64.powi(places);
    (x * s).round() / s
}

fn main() -> Result<(), Box<dyn Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "fixtures/alcohol_synthetic.csv".into());
    let mut rng = stream(SEED, 0);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "NUMALL",
        "NEGEVENT",
        "PREL",
        "AGE",
        "ROSN",
        "STATE",
        "GENDER",
        "DESIRED",
        "ROSN_PREL",
        "AGE_ROSN",
        "DESIRED_GENDER",
        "DESIRED_AGE",
        "STATE_NEGEVENT",
    ])?;
    for _ in 0..N {
        let negevent = round(rng.random_range(0.0..2.5), 3);
        let prel = round(rng.random_range(0.0..6.0), 3);
        let age = rng.random_range(21..=44) as f64;
        let rosn = round(rng.random_range(2.0..4.0), 2);
        let state = round(rng.random_range(2.5..5.0), 2);
        let gender = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        let desired = round(rng.random_range(1.0..8.0), 2);
        let eta = 0.9 + 0.15 * negevent
            - 0.05 * prel
            - 0.01 * (age - 30.0)
            - 0.1 * (rosn - 3.0)
            - 0.05 * (state - 4.0)
            + 0.1 * gender
            + 0.12 * (desired - 4.0)
            + 0.02 * (rosn - 3.0) * prel
            - 0.005 * (desired - 4.0) * (age - 30.0);
        let y = sample_response(&Family::poisson(), eta.exp(), &mut rng);
        let row = [
            y,
            negevent,
            prel,
            age,
            rosn,
            state,
            gender,
            desired,
            round(rosn * prel, 6),
            round(age * rosn, 6),
            round(desired * gender, 6),
            round(desired * age, 6),
            round(state * negevent, 6),
        ];
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
