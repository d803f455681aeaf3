//! Airlines-shaped synthetic data for tests and benchmarks.
//!
//! Same columns and kinds as the real benchmark. Labels come from a noisy
//! logistic rule over carrier, route, departure time and flight length, so a
//! tree can learn something but nowhere near perfectly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{airlines_schema, BinaryLabel, Dataset, FeatureValue, Sample};

const AIRLINES: usize = 18;
const AIRPORTS: usize = 60;

pub fn airlines_like(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut schema = airlines_schema();
    schema.features[0].values = (0..AIRLINES).map(|i| format!("A{i:02}")).collect();
    schema.features[2].values = (0..AIRPORTS).map(|i| format!("P{i:02}")).collect();
    schema.features[3].values = schema.features[2].values.clone();
    schema.features[4].values = (1..=7).map(|d| d.to_string()).collect();

    let carrier_effect: Vec<f64> = (0..AIRLINES).map(|_| rng.gen_range(-1.2..1.2)).collect();
    let airport_effect: Vec<f64> = (0..AIRPORTS).map(|_| rng.gen_range(-0.6..0.6)).collect();

    let samples = (0..n)
        .map(|_| {
            let airline = rng.gen_range(0..AIRLINES);
            let from = rng.gen_range(0..AIRPORTS);
            let to = rng.gen_range(0..AIRPORTS);
            let day = rng.gen_range(0..7);
            let time: f64 = rng.gen_range(10..1440) as f64;
            let length: f64 = rng.gen_range(20..600) as f64;
            let flight: f64 = rng.gen_range(1..7000) as f64;
            let logit = -0.3 + carrier_effect[airline] + airport_effect[from]
                + 0.0025 * (time - 720.0)
                + 0.001 * (length - 200.0)
                + if day >= 4 { 0.2 } else { -0.1 };
            let p = 1.0 / (1.0 + (-logit).exp());
            let label = if rng.gen::<f64>() < p {
                BinaryLabel::Positive
            } else {
                BinaryLabel::Negative
            };
            Sample::labeled(
                vec![
                    FeatureValue::Categorical(airline as u32),
                    FeatureValue::Numeric(flight),
                    FeatureValue::Categorical(from as u32),
                    FeatureValue::Categorical(to as u32),
                    FeatureValue::Categorical(day as u32),
                    FeatureValue::Numeric(time),
                    FeatureValue::Numeric(length),
                ],
                label,
            )
        })
        .collect();
    Dataset { schema, samples }
}
