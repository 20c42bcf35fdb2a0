//! Structure-preserving, type-aware mutation of seed inputs.
//!
//! Operators per type:
//! - int: +1, -1, x2, negate, resample near the magnitude, boundary value
//! - float: the int operators plus a small relative jitter
//! - str: insert, delete or replace one char, empty string, case flip
//! - list: mutate an element, append a mutated copy, pop, shuffle a prefix, empty
//! - dict: mutate a value, add a key
//!
//! The top-level argument tuple of a function task keeps its arity. Raw
//! stdin is tokenized on whitespace and tokens are mutated by their
//! inferred type, keeping the original separators.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Number, Value};

use super::{task_rng, FuzzConfig, FuzzError, TypeHint};
use crate::corpus::{InputValue, Task};

const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Produces `config.n_inputs` mutated inputs for a task with seeds.
pub fn mutate_seeded(task: &Task, config: &FuzzConfig) -> Result<Vec<InputValue>, FuzzError> {
    config.validate()?;
    let mut rng = task_rng(&task.task_id, config.rng_seed);
    mutate_with(task, config, &mut rng, config.n_inputs)
}

pub(super) fn mutate_with(
    task: &Task,
    config: &FuzzConfig,
    rng: &mut ChaCha8Rng,
    count: usize,
) -> Result<Vec<InputValue>, FuzzError> {
    let seeds = &task.seed_inputs;
    if seeds.is_empty() {
        return Err(FuzzError::NoSeeds(task.task_id.clone()));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut produced = None;
        for _ in 0..config.max_attempts_per_input {
            let seed = &seeds[rng.random_range(0..seeds.len())];
            let candidate = mutate_input(seed, config, rng);
            if structurally_valid(seed, &candidate) {
                produced = Some(candidate);
                break;
            }
        }
        match produced {
            Some(v) => out.push(v),
            None => {
                return Err(FuzzError::ExhaustedAttempts {
                    task_id: task.task_id.clone(),
                    attempts: config.max_attempts_per_input,
                })
            }
        }
    }
    Ok(out)
}

/// Shape of a JSON value under the type-hint lattice. Empty or mixed
/// collections get `Unknown` element types.
pub fn shape_of(value: &Value) -> TypeHint {
    match value {
        Value::Null => TypeHint::Unknown,
        Value::Bool(_) => TypeHint::Bool,
        Value::Number(n) if n.is_f64() => TypeHint::Float,
        Value::Number(_) => TypeHint::Int,
        Value::String(_) => TypeHint::Str,
        Value::Array(items) => TypeHint::list_of(common_shape(items.iter())),
        Value::Object(map) => TypeHint::dict_of(TypeHint::Str, common_shape(map.values())),
    }
}

fn common_shape<'a>(mut values: impl Iterator<Item = &'a Value>) -> TypeHint {
    let Some(first) = values.next() else {
        return TypeHint::Unknown;
    };
    let shape = shape_of(first);
    if values.all(|v| shape_of(v) == shape) {
        shape
    } else {
        TypeHint::Unknown
    }
}

fn token_shapes(text: &str) -> Vec<TypeHint> {
    text.split_whitespace()
        .map(|t| match Token::classify(t) {
            Token::Int(_) => TypeHint::Int,
            Token::Float(_) => TypeHint::Float,
            Token::Word => TypeHint::Str,
        })
        .collect()
}

fn structurally_valid(seed: &InputValue, mutated: &InputValue) -> bool {
    match (seed, mutated) {
        (InputValue::Value(Value::Array(a)), InputValue::Value(Value::Array(b))) => {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    let (sx, sy) = (shape_of(x), shape_of(y));
                    sx.accepts(&sy) && sy.accepts(&sx)
                })
        }
        (InputValue::Value(a), InputValue::Value(b)) => {
            let (sa, sb) = (shape_of(a), shape_of(b));
            sa.accepts(&sb) && sb.accepts(&sa)
        }
        (InputValue::RawStdin(a), InputValue::RawStdin(b)) => token_shapes(a) == token_shapes(b),
        _ => false,
    }
}

fn mutate_input(seed: &InputValue, config: &FuzzConfig, rng: &mut ChaCha8Rng) -> InputValue {
    let rounds = rng.random_range(1..=3);
    match seed {
        InputValue::Value(Value::Array(args)) => {
            let mut args = args.clone();
            if !args.is_empty() {
                for _ in 0..rounds {
                    let i = rng.random_range(0..args.len());
                    mutate_value(&mut args[i], config, rng, 0);
                }
            }
            args.iter_mut().for_each(|v| enforce_caps(v, config));
            InputValue::Value(Value::Array(args))
        }
        InputValue::Value(v) => {
            let mut v = v.clone();
            for _ in 0..rounds {
                mutate_value(&mut v, config, rng, 0);
            }
            enforce_caps(&mut v, config);
            InputValue::Value(v)
        }
        InputValue::RawStdin(text) => InputValue::RawStdin(mutate_stdin(text, rounds, config, rng)),
    }
}

fn mutate_int(x: i64, cap: i64, rng: &mut ChaCha8Rng) -> i64 {
    let y = match rng.random_range(0..7) {
        0 => x.saturating_add(1),
        1 => x.saturating_sub(1),
        2 => x.saturating_mul(2),
        3 => x.saturating_neg(),
        4 => {
            let m = x.saturating_abs().clamp(1, cap);
            let r = rng.random_range(0..=m.saturating_mul(2).min(cap));
            if x < 0 {
                -r
            } else {
                r
            }
        }
        _ => *[0, 1, -1, cap, -cap].choose(rng).expect("non-empty"),
    };
    y.clamp(-cap, cap)
}

fn mutate_float(x: f64, cap: f64, rng: &mut ChaCha8Rng) -> f64 {
    let y = match rng.random_range(0..8) {
        0 => x + 1.0,
        1 => x - 1.0,
        2 => x * 2.0,
        3 => -x,
        4 => {
            let m = x.abs().clamp(1.0, cap);
            x.signum() * rng.random_range(0.0..=2.0 * m)
        }
        5 => *[0.0, 1.0, -1.0, cap, -cap].choose(rng).expect("non-empty"),
        _ => x + x.abs().max(1.0) * rng.random_range(-0.01..=0.01),
    };
    if y.is_finite() {
        y.clamp(-cap, cap)
    } else {
        x.clamp(-cap, cap)
    }
}

fn random_char(rng: &mut ChaCha8Rng) -> char {
    ALNUM[rng.random_range(0..ALNUM.len())] as char
}

fn flip_case(s: &str) -> String {
    s.chars()
        .flat_map(|c| {
            if c.is_uppercase() {
                c.to_lowercase().collect::<Vec<_>>()
            } else {
                c.to_uppercase().collect()
            }
        })
        .collect()
}

fn mutate_str(s: &str, max_len: usize, allow_empty: bool, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    match rng.random_range(0..5) {
        0 if chars.len() < max_len => {
            let at = rng.random_range(0..=chars.len());
            chars.insert(at, random_char(rng));
        }
        1 if chars.len() > 1 || (allow_empty && !chars.is_empty()) => {
            chars.remove(rng.random_range(0..chars.len()));
        }
        2 if !chars.is_empty() => {
            let at = rng.random_range(0..chars.len());
            chars[at] = random_char(rng);
        }
        3 if allow_empty => chars.clear(),
        _ => return flip_case(s),
    }
    chars.into_iter().collect()
}

fn mutate_value(value: &mut Value, config: &FuzzConfig, rng: &mut ChaCha8Rng, depth: usize) {
    let cap = config.numeric_magnitude_cap;
    match value {
        Value::Null => {}
        Value::Bool(b) => *b = !*b,
        Value::Number(n) => {
            *value = if let Some(i) = n.as_i64() {
                Value::from(mutate_int(i, cap, rng))
            } else if n.is_u64() {
                Value::from(mutate_int(i64::MAX, cap, rng))
            } else {
                let x = mutate_float(n.as_f64().unwrap_or(0.0), cap as f64, rng);
                Number::from_f64(x).map(Value::Number).unwrap_or(Value::from(0.0))
            };
        }
        Value::String(s) => *s = mutate_str(s, config.max_str_len(), true, rng),
        Value::Array(items) => {
            let descend = !items.is_empty() && depth < super::MAX_HINT_DEPTH && rng.random_bool(0.6);
            if descend {
                let i = rng.random_range(0..items.len());
                mutate_value(&mut items[i], config, rng, depth + 1);
                return;
            }
            match rng.random_range(0..4) {
                0 if !items.is_empty() && items.len() < config.max_collection_len => {
                    let mut extra = items[rng.random_range(0..items.len())].clone();
                    mutate_value(&mut extra, config, rng, depth + 1);
                    items.push(extra);
                }
                1 if !items.is_empty() => {
                    items.pop();
                }
                2 if items.len() > 1 => {
                    let k = rng.random_range(2..=items.len());
                    items[..k].shuffle(rng);
                }
                _ => items.clear(),
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                return;
            }
            let keys: Vec<String> = map.keys().cloned().collect();
            let key = keys[rng.random_range(0..keys.len())].clone();
            if rng.random_bool(0.7) || map.len() >= config.max_collection_len {
                if let Some(v) = map.get_mut(&key) {
                    mutate_value(v, config, rng, depth + 1);
                }
            } else {
                let mut v = map[&key].clone();
                mutate_value(&mut v, config, rng, depth + 1);
                let new_key = if key.parse::<i64>().is_ok() {
                    rng.random_range(-cap..=cap).to_string()
                } else {
                    mutate_str(&key, config.max_str_len(), false, rng)
                };
                map.entry(new_key).or_insert(v);
            }
        }
    }
    enforce_caps(value, config);
}

fn enforce_caps(value: &mut Value, config: &FuzzConfig) {
    let cap = config.numeric_magnitude_cap;
    match value {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                if i.abs() > cap {
                    *value = Value::from(i.clamp(-cap, cap));
                }
            } else if n.is_u64() {
                *value = Value::from(cap);
            } else if let Some(x) = n.as_f64() {
                if x.abs() > cap as f64 {
                    *value = Value::from(x.clamp(-(cap as f64), cap as f64));
                }
            }
        }
        Value::Array(items) => {
            items.truncate(config.max_collection_len);
            items.iter_mut().for_each(|v| enforce_caps(v, config));
        }
        Value::Object(map) => {
            if map.len() > config.max_collection_len {
                let kept: Map<String, Value> = std::mem::take(map).into_iter().take(config.max_collection_len).collect();
                *map = kept;
            }
            map.values_mut().for_each(|v| enforce_caps(v, config));
        }
        _ => {}
    }
}

enum Token {
    Int(i64),
    Float(f64),
    Word,
}

impl Token {
    fn classify(tok: &str) -> Token {
        if let Ok(i) = tok.parse::<i64>() {
            Token::Int(i)
        } else if let Some(x) = tok.parse::<f64>().ok().filter(|x| x.is_finite() && tok.contains('.')) {
            Token::Float(x)
        } else {
            Token::Word
        }
    }
}

fn mutate_stdin(text: &str, rounds: usize, config: &FuzzConfig, rng: &mut ChaCha8Rng) -> String {
    // (separator, token) pairs; the trailing separator is kept separately.
    let mut parts: Vec<(String, String)> = Vec::new();
    let mut rest = text;
    loop {
        let ws = rest.find(|c: char| !c.is_whitespace()).unwrap_or(rest.len());
        let sep = &rest[..ws];
        rest = &rest[ws..];
        if rest.is_empty() {
            parts.push((sep.to_string(), String::new()));
            break;
        }
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        parts.push((sep.to_string(), rest[..end].to_string()));
        rest = &rest[end..];
    }
    let token_count = parts.iter().filter(|(_, t)| !t.is_empty()).count();
    if token_count > 0 {
        let cap = config.numeric_magnitude_cap;
        for _ in 0..rounds {
            let pick = rng.random_range(0..token_count);
            let (_, tok) = parts.iter_mut().filter(|(_, t)| !t.is_empty()).nth(pick).expect("in range");
            *tok = match Token::classify(tok) {
                Token::Int(i) => mutate_int(i, cap, rng).to_string(),
                Token::Float(x) => {
                    let decimals = tok.split_once('.').map(|(_, f)| f.len()).unwrap_or(1).max(1);
                    format!("{:.*}", decimals, mutate_float(x, cap as f64, rng))
                }
                Token::Word => {
                    let mutated = mutate_str(tok, config.max_str_len().max(tok.len()), false, rng);
                    if matches!(Token::classify(&mutated), Token::Word) {
                        mutated
                    } else {
                        flip_case(tok)
                    }
                }
            };
        }
    }
    parts.into_iter().flat_map(|(s, t)| [s, t]).collect()
}
