//! Per-type random generators for seed-free fuzzing.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use super::{FuzzConfig, TypeHint};
use crate::corpus::InputValue;

const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
const MAX_STR_SAMPLE: usize = 16;

/// Samples `config.n_inputs` argument tuples, one value per hint. The RNG
/// is seeded from `config.rng_seed` alone.
pub fn sample_seed_free(hints: &[TypeHint], config: &FuzzConfig) -> Vec<InputValue> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    sample_with(hints, config, &mut rng, config.n_inputs)
}

pub(super) fn sample_with(hints: &[TypeHint], config: &FuzzConfig, rng: &mut ChaCha8Rng, count: usize) -> Vec<InputValue> {
    (0..count)
        .map(|_| InputValue::args(hints.iter().map(|h| sample_value(h, config, rng)).collect()))
        .collect()
}

fn sample_int(cap: i64, rng: &mut ChaCha8Rng) -> i64 {
    // Log-uniform magnitude so small values are as likely as large ones.
    let top = (cap as f64 + 1.0).ln();
    let magnitude = (rng.random_range(0.0..=top).exp() - 1.0).floor() as i64;
    let magnitude = magnitude.clamp(0, cap);
    if rng.random_bool(0.3) {
        -magnitude
    } else {
        magnitude
    }
}

fn sample_str(max_len: usize, rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| ALNUM[rng.random_range(0..ALNUM.len())] as char).collect()
}

/// One random value of the given type. `Unknown` picks int, str or list of
/// ints uniformly.
pub fn sample_value(hint: &TypeHint, config: &FuzzConfig, rng: &mut ChaCha8Rng) -> Value {
    let cap = config.numeric_magnitude_cap;
    match hint {
        TypeHint::Int => Value::from(sample_int(cap, rng)),
        TypeHint::Float => {
            let x = sample_int(cap, rng) as f64 + rng.random_range(0.0..1.0);
            Value::from(x.clamp(-(cap as f64), cap as f64))
        }
        TypeHint::Bool => Value::from(rng.random_bool(0.5)),
        TypeHint::Str => Value::from(sample_str(MAX_STR_SAMPLE.min(config.max_str_len()), rng)),
        TypeHint::ListOf(inner) => {
            let len = rng.random_range(0..=config.max_collection_len);
            Value::Array((0..len).map(|_| sample_value(inner, config, rng)).collect())
        }
        TypeHint::TupleOf(items) => Value::Array(items.iter().map(|h| sample_value(h, config, rng)).collect()),
        TypeHint::DictOf(key, value) => {
            let len = rng.random_range(0..=config.max_collection_len);
            let mut map = Map::new();
            for _ in 0..len {
                let k = match sample_value(key, config, rng) {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                let v = sample_value(value, config, rng);
                map.insert(k, v);
            }
            Value::Object(map)
        }
        TypeHint::Unknown => {
            let pick = match rng.random_range(0..3) {
                0 => TypeHint::Int,
                1 => TypeHint::Str,
                _ => TypeHint::list_of(TypeHint::Int),
            };
            sample_value(&pick, config, rng)
        }
    }
}
