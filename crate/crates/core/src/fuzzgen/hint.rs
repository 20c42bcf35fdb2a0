//! Parameter type hints and the annotation parser.
//!
//! Hints are written and read as Python-style annotation strings
//! (`List[int]`, `dict[str, int]`, `Optional[float]`, ...), which is how
//! they appear in `tasks.jsonl`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Maximum nesting depth accepted by the annotation parser.
pub const MAX_HINT_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeHint {
    Int,
    Float,
    Bool,
    Str,
    ListOf(Box<TypeHint>),
    TupleOf(Vec<TypeHint>),
    DictOf(Box<TypeHint>, Box<TypeHint>),
    Unknown,
}

impl TypeHint {
    pub fn list_of(inner: TypeHint) -> Self {
        TypeHint::ListOf(Box::new(inner))
    }

    pub fn dict_of(key: TypeHint, value: TypeHint) -> Self {
        TypeHint::DictOf(Box::new(key), Box::new(value))
    }

    pub fn depth(&self) -> usize {
        match self {
            TypeHint::ListOf(inner) => 1 + inner.depth(),
            TypeHint::TupleOf(items) => 1 + items.iter().map(TypeHint::depth).max().unwrap_or(0),
            TypeHint::DictOf(k, v) => 1 + k.depth().max(v.depth()),
            _ => 0,
        }
    }

    /// Whether a value of shape `other` may stand where `self` is expected.
    /// `Unknown` on either side matches anything.
    pub fn accepts(&self, other: &TypeHint) -> bool {
        use TypeHint::*;
        match (self, other) {
            (Unknown, _) | (_, Unknown) => true,
            (ListOf(a), ListOf(b)) => a.accepts(b),
            (TupleOf(a), TupleOf(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.accepts(y)),
            (DictOf(ka, va), DictOf(kb, vb)) => ka.accepts(kb) && va.accepts(vb),
            (a, b) => a == b,
        }
    }
}

impl fmt::Display for TypeHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeHint::Int => f.write_str("int"),
            TypeHint::Float => f.write_str("float"),
            TypeHint::Bool => f.write_str("bool"),
            TypeHint::Str => f.write_str("str"),
            TypeHint::Unknown => f.write_str("Any"),
            TypeHint::ListOf(inner) => write!(f, "list[{inner}]"),
            TypeHint::DictOf(k, v) => write!(f, "dict[{k}, {v}]"),
            TypeHint::TupleOf(items) => {
                f.write_str("tuple[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse type annotation {input:?}: {reason}")]
pub struct HintParseError {
    pub input: String,
    pub reason: String,
}

impl FromStr for TypeHint {
    type Err = HintParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parser = Parser { src: s, pos: 0 };
        let err = |reason: String| HintParseError { input: s.to_string(), reason };
        let hint = parser.parse(0).map_err(err)?;
        parser.skip_ws();
        if parser.pos != s.len() {
            return Err(err(format!("trailing input at byte {}", parser.pos)));
        }
        Ok(hint)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'))
            .unwrap_or(rest.len());
        self.pos += len;
        rest[..len].to_string()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn args(&mut self, depth: usize) -> Result<Vec<TypeHint>, String> {
        let mut out = Vec::new();
        if !self.eat('[') {
            return Ok(out);
        }
        loop {
            // `Tuple[int, ...]` style ellipsis is tolerated and ignored.
            self.skip_ws();
            if self.src[self.pos..].starts_with("...") {
                self.pos += 3;
            } else {
                out.push(self.parse(depth + 1)?);
            }
            if self.eat(',') {
                continue;
            }
            if self.eat(']') {
                return Ok(out);
            }
            return Err(format!("expected ',' or ']' at byte {}", self.pos));
        }
    }

    fn parse(&mut self, depth: usize) -> Result<TypeHint, String> {
        if depth > MAX_HINT_DEPTH {
            return Err(format!("nesting deeper than {MAX_HINT_DEPTH}"));
        }
        let name = self.ident();
        if name.is_empty() {
            return Err(format!("expected a type name at byte {}", self.pos));
        }
        let base = name.rsplit('.').next().unwrap_or(&name).to_ascii_lowercase();
        let args = self.args(depth)?;
        let first = |args: &[TypeHint]| args.first().cloned().unwrap_or(TypeHint::Unknown);
        Ok(match base.as_str() {
            "int" | "integer" | "long" => TypeHint::Int,
            "float" | "double" | "decimal" => TypeHint::Float,
            "bool" | "boolean" => TypeHint::Bool,
            "str" | "string" | "char" => TypeHint::Str,
            "list" | "sequence" | "iterable" | "set" | "frozenset" | "deque" => {
                TypeHint::list_of(first(&args))
            }
            "tuple" => TypeHint::TupleOf(args),
            "dict" | "mapping" | "defaultdict" | "counter" => {
                let key = args.first().cloned().unwrap_or(TypeHint::Unknown);
                let value = args.get(1).cloned().unwrap_or(TypeHint::Unknown);
                TypeHint::dict_of(key, value)
            }
            "optional" => first(&args),
            _ => TypeHint::Unknown,
        })
    }
}

impl Serialize for TypeHint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TypeHint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typing_annotations() {
        assert_eq!("List[int]".parse::<TypeHint>().unwrap(), TypeHint::list_of(TypeHint::Int));
        assert_eq!("list[str]".parse::<TypeHint>().unwrap(), TypeHint::list_of(TypeHint::Str));
        assert_eq!(
            "Dict[str, List[int]]".parse::<TypeHint>().unwrap(),
            TypeHint::dict_of(TypeHint::Str, TypeHint::list_of(TypeHint::Int))
        );
        assert_eq!(
            "Tuple[int, float]".parse::<TypeHint>().unwrap(),
            TypeHint::TupleOf(vec![TypeHint::Int, TypeHint::Float])
        );
        assert_eq!("Optional[bool]".parse::<TypeHint>().unwrap(), TypeHint::Bool);
        assert_eq!("typing.List[int]".parse::<TypeHint>().unwrap(), TypeHint::list_of(TypeHint::Int));
        assert_eq!("ListNode".parse::<TypeHint>().unwrap(), TypeHint::Unknown);
    }

    #[test]
    fn rejects_excess_nesting() {
        let deep = "List[".repeat(10) + "int" + &"]".repeat(10);
        assert!(deep.parse::<TypeHint>().is_err());
        let ok = "List[".repeat(8) + "int" + &"]".repeat(8);
        assert!(ok.parse::<TypeHint>().is_ok());
    }

    #[test]
    fn display_round_trips() {
        let hint = TypeHint::TupleOf(vec![
            TypeHint::dict_of(TypeHint::Str, TypeHint::list_of(TypeHint::Float)),
            TypeHint::Bool,
            TypeHint::Unknown,
        ]);
        assert_eq!(hint.to_string().parse::<TypeHint>().unwrap(), hint);
    }
}
