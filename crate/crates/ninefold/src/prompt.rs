//! The structured prompt language: a routing envelope, a natural-language
//! core, and optional control parameters.
//!
//! ```text
//! prompt := "[" ROLE "|" ASPECT "]" WS core ( "{" kvlist "}" )?
//! kvlist := kv ("," kv)*
//! kv     := KEY "=" QUOTED
//! ```
//!
//! Example: `[GD|TR] a poster saying "SALE" {font="Futura"}`. The envelope
//! routes the prompt to a scorer and never reaches the image model; the core
//! is the creative directive; parameters carry machine-readable ground truth
//! for the deterministic metrics.
//!
//! Parsing rules worth knowing:
//! - a trailing `{...}` group is always treated as the parameter block, so
//!   core text may contain braces anywhere except at its (trimmed) end;
//! - parameter values are double-quoted with `\"` and `\\` escapes, and may
//!   not contain braces or control characters;
//! - keys match `[A-Za-z_][A-Za-z0-9_-]*` and must be unique;
//! - whitespace around `{`, `,` and `=` is accepted and normalized away by
//!   [`StructuredPrompt::serialize`].
//!
//! All parse errors carry the byte offset of the offending token.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ontology::{Aspect, Ontology, RoleId};

/// Why a source line failed to parse, with the byte offset it failed at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    MalformedEnvelope { offset: usize, reason: &'static str },
    UnknownRole { offset: usize, token: String },
    UnknownAspect { offset: usize, token: String },
    /// The (role, aspect) pair exists but its relevance-mask entry is 0.
    IrrelevantPair { offset: usize, role: String, aspect: String },
    MalformedParams { offset: usize, reason: &'static str },
    EmptyCore { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::MalformedEnvelope { offset, .. }
            | ParseError::UnknownRole { offset, .. }
            | ParseError::UnknownAspect { offset, .. }
            | ParseError::IrrelevantPair { offset, .. }
            | ParseError::MalformedParams { offset, .. }
            | ParseError::EmptyCore { offset } => *offset,
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::MalformedEnvelope { offset, reason } => {
                write!(f, "malformed envelope at offset {offset}: {reason}")
            }
            ParseError::UnknownRole { offset, token } => {
                write!(f, "unknown role `{token}` at offset {offset}")
            }
            ParseError::UnknownAspect { offset, token } => {
                write!(f, "unknown aspect `{token}` at offset {offset}")
            }
            ParseError::IrrelevantPair { offset, role, aspect } => write!(
                f,
                "pair ({role}, {aspect}) at offset {offset} is masked out as irrelevant"
            ),
            ParseError::MalformedParams { offset, reason } => {
                write!(f, "malformed parameters at offset {offset}: {reason}")
            }
            ParseError::EmptyCore { offset } => {
                write!(f, "empty prompt core at offset {offset}")
            }
        }
    }
}

impl core::error::Error for ParseError {}

/// Errors from building a prompt directly (not via the parser).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildError {
    IrrelevantPair,
    EmptyCore,
    /// A trimmed core ending in `}` would be re-read as a parameter block.
    CoreEndsWithBrace,
    BadParamKey(String),
    BadParamValue(String),
    DuplicateParamKey(String),
}

impl fmt::Display for BuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildError::IrrelevantPair => f.write_str("(role, aspect) pair is masked out"),
            BuildError::EmptyCore => f.write_str("core text is empty"),
            BuildError::CoreEndsWithBrace => {
                f.write_str("core text may not end with `}` (reserved for parameters)")
            }
            BuildError::BadParamKey(k) => write!(f, "invalid parameter key `{k}`"),
            BuildError::BadParamValue(k) => {
                write!(f, "parameter `{k}` contains braces or control characters")
            }
            BuildError::DuplicateParamKey(k) => write!(f, "duplicate parameter key `{k}`"),
        }
    }
}

impl core::error::Error for BuildError {}

/// A parsed prompt triplet. `raw` preserves the original source string and is
/// excluded from equality; two prompts are equal when their routing, core,
/// and parameters agree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub role: RoleId,
    pub aspect: Aspect,
    pub core_text: String,
    /// Key-value control parameters in insertion order.
    params: Vec<(String, String)>,
    pub raw: String,
}

impl PartialEq for StructuredPrompt {
    fn eq(&self, other: &Self) -> bool {
        self.role == other.role
            && self.aspect == other.aspect
            && self.core_text == other.core_text
            && self.params == other.params
    }
}

impl Eq for StructuredPrompt {}

fn valid_key(key: &str) -> bool {
    let mut chars = key.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn valid_value(value: &str) -> bool {
    value.chars().all(|c| c != '{' && c != '}' && !c.is_control())
}

impl StructuredPrompt {
    /// Build a prompt programmatically, enforcing the same invariants the
    /// parser guarantees. `raw` is set to the canonical serialization.
    pub fn new(
        ontology: &Ontology,
        role: RoleId,
        aspect: Aspect,
        core_text: &str,
        params: Vec<(String, String)>,
    ) -> Result<Self, BuildError> {
        if !ontology.is_relevant(&role, aspect) {
            return Err(BuildError::IrrelevantPair);
        }
        let core = core_text.trim();
        if core.is_empty() {
            return Err(BuildError::EmptyCore);
        }
        if core.ends_with('}') {
            return Err(BuildError::CoreEndsWithBrace);
        }
        for (i, (k, v)) in params.iter().enumerate() {
            if !valid_key(k) {
                return Err(BuildError::BadParamKey(k.clone()));
            }
            if !valid_value(v) {
                return Err(BuildError::BadParamValue(k.clone()));
            }
            if params[..i].iter().any(|(k2, _)| k2 == k) {
                return Err(BuildError::DuplicateParamKey(k.clone()));
            }
        }
        let mut prompt = Self {
            role,
            aspect,
            core_text: core.to_string(),
            params,
            raw: String::new(),
        };
        prompt.raw = prompt.serialize();
        Ok(prompt)
    }

    pub fn params(&self) -> &[(String, String)] {
        &self.params
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Canonical textual form: single space after the envelope, parameters
    /// in insertion order without interior whitespace.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push('[');
        out.push_str(self.role.as_str());
        out.push('|');
        out.push_str(self.aspect.token());
        out.push_str("] ");
        out.push_str(&self.core_text);
        if !self.params.is_empty() {
            out.push_str(" {");
            for (i, (k, v)) in self.params.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(k);
                out.push_str("=\"");
                for c in v.chars() {
                    if c == '"' || c == '\\' {
                        out.push('\\');
                    }
                    out.push(c);
                }
                out.push('"');
            }
            out.push('}');
        }
        out
    }

    /// Stable content digest of the canonical form, used to key questionnaire
    /// caches. Parameter changes alter the digest.
    pub fn content_hash(&self) -> String {
        crate::util::fnv64_hex(self.serialize().as_bytes())
    }
}

/// Parse one prompt line against an ontology.
pub fn parse_prompt(ontology: &Ontology, source: &str) -> Result<StructuredPrompt, ParseError> {
    let bytes = source.as_bytes();
    if bytes.first() != Some(&b'[') {
        return Err(ParseError::MalformedEnvelope {
            offset: 0,
            reason: "expected `[` opening the routing envelope",
        });
    }
    let pipe = source.find('|').ok_or(ParseError::MalformedEnvelope {
        offset: source.len(),
        reason: "expected `|` between role and aspect",
    })?;
    let close = source[pipe..]
        .find(']')
        .map(|i| i + pipe)
        .ok_or(ParseError::MalformedEnvelope {
            offset: source.len(),
            reason: "expected `]` closing the routing envelope",
        })?;
    let role_token = &source[1..pipe];
    let aspect_offset = pipe + 1;
    let aspect_token = &source[aspect_offset..close];
    if role_token.is_empty() || ontology.role(role_token).is_none() {
        return Err(ParseError::UnknownRole {
            offset: 1,
            token: role_token.to_string(),
        });
    }
    let aspect = Aspect::from_token(aspect_token).ok_or_else(|| ParseError::UnknownAspect {
        offset: aspect_offset,
        token: aspect_token.to_string(),
    })?;
    let role = RoleId::new(role_token);
    if !ontology.is_relevant(&role, aspect) {
        return Err(ParseError::IrrelevantPair {
            offset: aspect_offset,
            role: role_token.to_string(),
            aspect: aspect_token.to_string(),
        });
    }

    let body_start = close + 1;
    let body = &source[body_start..];
    if body.is_empty() || body.trim().is_empty() {
        return Err(ParseError::EmptyCore { offset: body_start });
    }
    if !body.starts_with(|c: char| c.is_whitespace()) {
        return Err(ParseError::MalformedEnvelope {
            offset: body_start,
            reason: "expected whitespace after the routing envelope",
        });
    }

    // A trailing `{...}` group is the parameter block; values cannot contain
    // braces, so the last `{` is its unambiguous start.
    let trimmed_end = body.trim_end();
    let (core_part, params) = if trimmed_end.ends_with('}') {
        let brace = body.rfind('{').ok_or(ParseError::MalformedParams {
            offset: body_start + trimmed_end.len() - 1,
            reason: "`}` without matching `{`",
        })?;
        let params = parse_params(&body[brace..trimmed_end.len()], body_start + brace)?;
        (&body[..brace], params)
    } else {
        (body, Vec::new())
    };

    let core = core_part.trim();
    if core.is_empty() {
        return Err(ParseError::EmptyCore { offset: body_start });
    }

    Ok(StructuredPrompt {
        role,
        aspect,
        core_text: core.to_string(),
        params,
        raw: source.to_string(),
    })
}

/// Parse `{ kv ("," kv)* }`. `base` is the byte offset of `block` in the
/// original source, used for error reporting.
fn parse_params(block: &str, base: usize) -> Result<Vec<(String, String)>, ParseError> {
    let err = |offset: usize, reason: &'static str| ParseError::MalformedParams {
        offset: base + offset,
        reason,
    };
    let chars: Vec<char> = block.chars().collect();
    // Byte offset of each char index, so errors report byte positions.
    let mut byte_at = Vec::with_capacity(chars.len() + 1);
    let mut acc = 0;
    for c in &chars {
        byte_at.push(acc);
        acc += c.len_utf8();
    }
    byte_at.push(acc);

    let mut i = 0usize;
    if chars.get(i) != Some(&'{') {
        return Err(err(byte_at[i.min(chars.len())], "expected `{`"));
    }
    i += 1;
    let mut params: Vec<(String, String)> = Vec::new();
    loop {
        while chars.get(i).is_some_and(|c| c.is_whitespace()) {
            i += 1;
        }
        let key_start = i;
        while chars
            .get(i)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == '-')
        {
            i += 1;
        }
        let key: String = chars[key_start..i].iter().collect();
        if key.is_empty() || !valid_key(&key) {
            return Err(err(byte_at[key_start.min(chars.len())], "expected parameter key"));
        }
        if params.iter().any(|(k, _)| *k == key) {
            return Err(err(byte_at[key_start], "duplicate parameter key"));
        }
        while chars.get(i).is_some_and(|c| c.is_whitespace()) {
            i += 1;
        }
        if chars.get(i) != Some(&'=') {
            return Err(err(byte_at[i.min(chars.len())], "expected `=` after key"));
        }
        i += 1;
        while chars.get(i).is_some_and(|c| c.is_whitespace()) {
            i += 1;
        }
        if chars.get(i) != Some(&'"') {
            return Err(err(byte_at[i.min(chars.len())], "expected quoted value"));
        }
        i += 1;
        let mut value = String::new();
        loop {
            match chars.get(i) {
                Some('"') => {
                    i += 1;
                    break;
                }
                Some('\\') => match chars.get(i + 1) {
                    Some(c @ ('"' | '\\')) => {
                        value.push(*c);
                        i += 2;
                    }
                    _ => return Err(err(byte_at[i], "unknown escape in value")),
                },
                Some(c) if *c != '{' && *c != '}' && !c.is_control() => {
                    value.push(*c);
                    i += 1;
                }
                Some(_) => return Err(err(byte_at[i], "braces and control characters are not allowed in values")),
                None => return Err(err(byte_at[chars.len()], "unterminated quoted value")),
            }
        }
        params.push((key, value));
        while chars.get(i).is_some_and(|c| c.is_whitespace()) {
            i += 1;
        }
        match chars.get(i) {
            Some(',') => {
                i += 1;
            }
            Some('}') => {
                i += 1;
                if i != chars.len() {
                    return Err(err(byte_at[i], "content after closing `}`"));
                }
                return Ok(params);
            }
            _ => return Err(err(byte_at[i.min(chars.len())], "expected `,` or `}`")),
        }
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::ontology::default_ontology;
    use alloc::collections::BTreeMap;
    use proptest::prelude::*;

    fn core_strategy() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 .,!?'\"-]{1,40}".prop_filter("trimmed nonempty", |s| !s.trim().is_empty())
    }

    fn params_strategy() -> impl Strategy<Value = BTreeMap<String, String>> {
        proptest::collection::btree_map(
            "[a-z][a-z0-9_-]{0,8}",
            "[a-zA-Z0-9 \\\\\"'!.,-]{0,12}",
            0..4,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        // Round-trip: parse . serialize is the identity on valid prompts.
        #[test]
        fn serialize_then_parse_is_identity(
            pair_idx in 0usize..28,
            core in core_strategy(),
            params in params_strategy(),
        ) {
            let ont = default_ontology();
            let (role, aspect) = ont.relevant_pairs()[pair_idx].clone();
            let params: alloc::vec::Vec<(String, String)> = params.into_iter().collect();
            let p = StructuredPrompt::new(&ont, role, aspect, &core, params).unwrap();
            let reparsed = parse_prompt(&ont, &p.serialize()).unwrap();
            prop_assert_eq!(reparsed, p);
        }

        // Canonicalization: serialize . parse is a fixed point.
        #[test]
        fn parse_then_serialize_is_canonical(
            pair_idx in 0usize..28,
            core in core_strategy(),
            pad in "[ \t]{1,3}",
        ) {
            let ont = default_ontology();
            let (role, aspect) = ont.relevant_pairs()[pair_idx].clone();
            let source = alloc::format!("[{role}|{aspect}]{pad}{core}");
            if let Ok(p) = parse_prompt(&ont, &source) {
                let canon = p.serialize();
                let p2 = parse_prompt(&ont, &canon).unwrap();
                prop_assert_eq!(p2.serialize(), canon);
            }
        }
    }
}
