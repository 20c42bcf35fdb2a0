//! Canonical serialization of program outputs.
//!
//! Two normal outcomes are equal iff their canonical strings are equal, so
//! every formatting tolerance lives here: trailing whitespace, float
//! precision and JSON key order.

use serde_json::Value;

/// Significant digits kept when reformatting floats.
pub const FLOAT_SIG_DIGITS: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("output is not decodable as UTF-8 text")]
pub struct OutputDecodeError;

/// Normalizes raw program output.
///
/// Invalid UTF-8 is decoded lossily; only output with no recoverable
/// character at all is rejected.
pub fn normalize(raw: &[u8]) -> Result<String, OutputDecodeError> {
    let text = match std::str::from_utf8(raw) {
        Ok(s) => std::borrow::Cow::Borrowed(s),
        Err(_) => {
            let lossy = String::from_utf8_lossy(raw);
            if lossy.chars().all(|c| c == char::REPLACEMENT_CHARACTER || c.is_whitespace()) {
                return Err(OutputDecodeError);
            }
            lossy
        }
    };
    let trimmed = text.trim_end();
    if let Ok(value) = serde_json::from_str::<Value>(trimmed) {
        return Ok(canonical_json(&value));
    }
    let lines: Vec<String> = trimmed.lines().map(|l| normalize_line(l.trim_end())).collect();
    Ok(lines.join("\n").trim_end().to_string())
}

fn normalize_line(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    while !rest.is_empty() {
        let ws = rest.find(|c: char| !c.is_whitespace()).unwrap_or(rest.len());
        out.push_str(&rest[..ws]);
        rest = &rest[ws..];
        let tok = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let token = &rest[..tok];
        match float_token(token) {
            Some(x) => out.push_str(&format_float(x)),
            None => out.push_str(token),
        }
        rest = &rest[tok..];
    }
    out
}

/// Parses tokens that are written as decimals or in exponent form.
/// Plain integers are left alone so large integers stay exact.
fn float_token(token: &str) -> Option<f64> {
    let body = token.strip_prefix(['+', '-']).unwrap_or(token);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (mantissa, None),
    };
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int_part) || !frac_part.is_none_or(digits) {
        return None;
    }
    if int_part.is_empty() && frac_part.is_none_or(str::is_empty) {
        return None;
    }
    match exponent {
        Some(e) => {
            let e = e.strip_prefix(['+', '-']).unwrap_or(e);
            if e.is_empty() || !digits(e) {
                return None;
            }
        }
        None if frac_part.is_none() => return None,
        None => {}
    }
    token.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Formats `x` with [`FLOAT_SIG_DIGITS`] significant digits: fixed notation
/// for decimal exponents in `[-4, 15)`, exponent notation otherwise.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", FLOAT_SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..15).contains(&exp) {
        return sci;
    }
    // Lay the already-rounded digits out in fixed notation.
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let int_len = exp + 1;
    let body = if int_len <= 0 {
        format!("0.{}{digits}", "0".repeat((-int_len) as usize))
    } else if int_len as usize >= digits.len() {
        format!("{digits}{}", "0".repeat(int_len as usize - digits.len()))
    } else {
        let (i, f) = digits.split_at(int_len as usize);
        format!("{i}.{f}")
    };
    format!("{sign}{body}")
}

/// Compact JSON with object keys sorted and floats reformatted.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Rounds the shortest decimal expansion of `x` to `sig` significant
    /// digits with string arithmetic, then lays it out in fixed notation.
    /// Only valid for exponents in the fixed-notation window.
    fn decimal_oracle(x: f64, sig: usize) -> String {
        let shortest = format!("{:e}", x.abs());
        let (mant, exp) = shortest.split_once('e').unwrap();
        let mut exp: i32 = exp.parse().unwrap();
        let mut digits: Vec<u8> = mant.bytes().filter(u8::is_ascii_digit).map(|b| b - b'0').collect();
        digits.resize(digits.len().max(sig + 1), 0);
        let round_up = digits[sig] >= 5;
        digits.truncate(sig);
        if round_up {
            let mut i = sig;
            loop {
                if i == 0 {
                    digits.insert(0, 1);
                    digits.truncate(sig);
                    exp += 1;
                    break;
                }
                i -= 1;
                if digits[i] == 9 {
                    digits[i] = 0;
                } else {
                    digits[i] += 1;
                    break;
                }
            }
        }
        let text: String = digits.iter().map(|d| (b'0' + d) as char).collect();
        let body = if exp >= 0 {
            let point = exp as usize + 1;
            if point >= sig {
                text.clone() + &"0".repeat(point - sig)
            } else {
                format!("{}.{}", &text[..point], &text[point..])
            }
        } else {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), text)
        };
        if x < 0.0 {
            format!("-{body}")
        } else {
            body
        }
    }

    #[test]
    fn trailing_whitespace_is_stripped() {
        assert_eq!(normalize(b"42\n").unwrap(), "42");
        assert_eq!(normalize(b"1 2  \n3\t\n\n").unwrap(), "1 2\n3");
        assert_eq!(normalize(b"0 100\n").unwrap(), "0 100");
    }

    #[test]
    fn floats_keep_nine_significant_digits() {
        let expected = decimal_oracle(0.30000000000000004, FLOAT_SIG_DIGITS);
        assert_eq!(expected, "0.300000000");
        assert_eq!(normalize(b"0.30000000000000004").unwrap(), expected);
        assert_eq!(normalize(b"x 2.5 y 1e-3").unwrap(), "x 2.50000000 y 0.00100000000");
    }

    #[test]
    fn json_keys_are_sorted() {
        assert_eq!(normalize(br#"{"b":1, "a":2}"#).unwrap(), r#"{"a":2,"b":1}"#);
        assert_eq!(normalize(br#"[1, {"z": [0.5], "y": null}]"#).unwrap(), r#"[1,{"y":null,"z":[0.500000000]}]"#);
    }

    #[test]
    fn integers_stay_exact() {
        assert_eq!(normalize(b"123456789012345678").unwrap(), "123456789012345678");
        assert_eq!(normalize(b"7 -8 +9").unwrap(), "7 -8 +9");
    }

    #[test]
    fn undecodable_output_is_an_error() {
        assert_eq!(normalize(&[0xff, 0xfe, 0xfd]), Err(OutputDecodeError));
        assert_eq!(normalize(b"ok\xff").unwrap(), "ok\u{fffd}");
        assert_eq!(normalize(b"").unwrap(), "");
    }

    #[test]
    fn float_formatting_matches_decimal_oracle() {
        for x in [1.0, -2.5, 123.456789012, 0.000123456789, 99999.99999999, 1.0 / 3.0, 5e14, -7.77e-4] {
            assert_eq!(format_float(x), decimal_oracle(x, FLOAT_SIG_DIGITS), "x = {x}");
        }
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(text in "[ -~\n\t]{0,40}") {
            let once = normalize(text.as_bytes()).unwrap();
            prop_assert_eq!(normalize(once.as_bytes()).unwrap(), once);
        }

        #[test]
        fn numeric_text_is_idempotent(xs in proptest::collection::vec(-1e20f64..1e20, 0..6)) {
            let text = xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            let once = normalize(text.as_bytes()).unwrap();
            prop_assert_eq!(normalize(once.as_bytes()).unwrap(), once);
        }

        #[test]
        fn fixed_window_matches_oracle(x in -1e14f64..1e14) {
            prop_assume!(x.abs() >= 1e-4);
            prop_assert_eq!(format_float(x), decimal_oracle(x, FLOAT_SIG_DIGITS));
        }
    }
}
