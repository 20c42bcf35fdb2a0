//! Rule-based parameter type inference for seed-free fuzzing.
//!
//! Declared annotations win. Otherwise the parameter name is split into
//! lowercase words (snake and camel case) and matched against a fixed
//! rule table; failing that, the sentence of the description mentioning
//! the parameter is scanned for type keywords.

use super::TypeHint;
use crate::corpus::Task;

const BOOL_WORDS: &[&str] = &["flag", "is", "has", "should", "can", "enabled", "allow"];
const LIST_WORDS: &[&str] = &["nums", "arr", "array", "list", "lst", "values", "vals", "items", "elements", "seq"];
const STR_WORDS: &[&str] = &["s", "str", "string", "word", "text", "t", "name", "pattern", "sentence", "char", "ch"];
const STR_LIST_WORDS: &[&str] = &["words", "strs", "strings", "names", "sentences", "texts"];
const INT_WORDS: &[&str] = &[
    "num", "n", "count", "k", "m", "x", "y", "target", "size", "length", "len", "idx", "index", "total", "limit",
    "amount", "number", "i", "j", "val", "value", "low", "high", "left", "right", "start", "end", "steps",
];
const FLOAT_WORDS: &[&str] = &["rate", "ratio", "prob", "probability", "weight", "score", "temperature"];

fn words(name: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for c in name.chars() {
        if c == '_' || c == '-' || c.is_ascii_digit() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        prev_lower = c.is_lowercase();
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn is_plural(word: &str) -> bool {
    word.len() > 2 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") && !word.ends_with("is")
}

/// Type suggested by a parameter name alone, `Unknown` when no rule fires.
pub fn name_rule(name: &str) -> TypeHint {
    let lower = name.to_ascii_lowercase();
    let ws = words(name);
    let has = |table: &[&str]| ws.iter().any(|w| table.contains(&w.as_str()));
    if lower.starts_with("is_") || lower.starts_with("has_") || has(BOOL_WORDS) {
        return TypeHint::Bool;
    }
    if has(STR_LIST_WORDS) {
        return TypeHint::list_of(TypeHint::Str);
    }
    if has(LIST_WORDS) {
        return TypeHint::list_of(TypeHint::Int);
    }
    let last = ws.last().map(String::as_str).unwrap_or("");
    if is_plural(last) && !INT_WORDS.contains(&last) {
        return TypeHint::list_of(TypeHint::Int);
    }
    if has(INT_WORDS) {
        return TypeHint::Int;
    }
    if has(FLOAT_WORDS) {
        return TypeHint::Float;
    }
    if has(STR_WORDS) {
        return TypeHint::Str;
    }
    TypeHint::Unknown
}

fn description_rule(description: &str, name: &str) -> TypeHint {
    let needle = name.to_ascii_lowercase();
    let lower = description.to_ascii_lowercase();
    for sentence in lower.split(['.', '\n', ';']) {
        let mentions = sentence
            .split(|c: char| !(c.is_alphanumeric() || c == '_'))
            .any(|tok| tok == needle);
        if !mentions {
            continue;
        }
        let collection = sentence.contains("array") || sentence.contains("list");
        let stringy = sentence.contains("string") || sentence.contains("word");
        if collection && stringy {
            return TypeHint::list_of(TypeHint::Str);
        }
        if collection {
            return TypeHint::list_of(TypeHint::Int);
        }
        if sentence.contains("boolean") || sentence.contains("true or false") {
            return TypeHint::Bool;
        }
        if stringy {
            return TypeHint::Str;
        }
        if sentence.contains("integer") || sentence.contains("number") {
            return TypeHint::Int;
        }
        if sentence.contains("real") || sentence.contains("decimal") || sentence.contains("float") {
            return TypeHint::Float;
        }
    }
    TypeHint::Unknown
}

/// One hint per declared parameter, in declaration order. Stdin tasks have
/// no parameters and get an empty list.
pub fn infer_types(task: &Task) -> Vec<TypeHint> {
    let Some(interface) = task.interface.function() else {
        return Vec::new();
    };
    interface
        .parameters
        .iter()
        .map(|p| match &p.declared_type {
            Some(hint) if *hint != TypeHint::Unknown => hint.clone(),
            _ => match name_rule(&p.name) {
                TypeHint::Unknown => description_rule(&task.description, &p.name),
                hint => hint,
            },
        })
        .collect()
}
