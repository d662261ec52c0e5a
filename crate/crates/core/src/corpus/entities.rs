//! The MISC `Entity` bracket notation.
//!
//! A token's value is a concatenation of markers:
//!
//! * `(type-id` opens a span, optionally `(type-id-identity`;
//! * `id)` closes the span opened with that id;
//! * `(type-id)` / `(type-id-identity)` is a single-token span.
//!
//! At each token, opening markers are written outermost first, then
//! single-token spans, then closing markers innermost first. Inside an
//! identity `%`, `(`, `)`, `|`, tab and newline are percent-escaped and
//! spaces become `_`.

use std::collections::{BTreeMap, HashSet};

use crate::{Error, Result};

use super::{sort_spans, EntitySpan, EntityType, Token};

#[derive(Debug, PartialEq, Eq)]
enum Marker {
    Open {
        etype: EntityType,
        id: u32,
        identity: Option<String>,
    },
    Single {
        etype: EntityType,
        id: u32,
        identity: Option<String>,
    },
    Close {
        id: u32,
    },
}

fn escape_identity(identity: &str) -> String {
    let mut out = String::with_capacity(identity.len());
    for c in identity.chars() {
        match c {
            '%' => out.push_str("%25"),
            '(' => out.push_str("%28"),
            ')' => out.push_str("%29"),
            '|' => out.push_str("%7C"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            ' ' => out.push('_'),
            c => out.push(c),
        }
    }
    out
}

fn unescape_identity(raw: &str) -> Result<String> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(pos) = rest.find('%') {
        out.push_str(&rest[..pos]);
        let code = rest
            .get(pos + 1..pos + 3)
            .ok_or_else(|| Error::Decode(format!("truncated escape in identity `{raw}`")))?;
        let c = match code {
            "25" => '%',
            "28" => '(',
            "29" => ')',
            "7C" | "7c" => '|',
            "09" => '\t',
            "0A" | "0a" => '\n',
            _ => return Err(Error::Decode(format!("bad escape `%{code}` in identity `{raw}`"))),
        };
        out.push(c);
        rest = &rest[pos + 3..];
    }
    out.push_str(rest);
    Ok(out)
}

fn read_id(s: &str, at: usize, value: &str) -> Result<(u32, usize)> {
    let digits = s[at..].bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return Err(Error::Decode(format!("expected entity id in `{value}`")));
    }
    let id: u32 = s[at..at + digits]
        .parse()
        .map_err(|_| Error::Decode(format!("entity id too large in `{value}`")))?;
    if id == 0 {
        return Err(Error::Decode(format!("entity id must be positive in `{value}`")));
    }
    Ok((id, at + digits))
}

fn parse_markers(value: &str) -> Result<Vec<Marker>> {
    let bytes = value.as_bytes();
    let mut markers = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'(' {
            let type_end = value[i + 1..]
                .find('-')
                .map(|p| i + 1 + p)
                .ok_or_else(|| Error::Decode(format!("open marker without id in `{value}`")))?;
            let etype: EntityType = value[i + 1..type_end].parse()?;
            let (id, mut j) = read_id(value, type_end + 1, value)?;
            let mut identity = None;
            if j < bytes.len() && bytes[j] == b'-' {
                let stop = value[j + 1..]
                    .find(['(', ')'])
                    .map(|p| j + 1 + p)
                    .unwrap_or(bytes.len());
                let raw = &value[j + 1..stop];
                if raw.is_empty() {
                    return Err(Error::Decode(format!("empty identity in `{value}`")));
                }
                identity = Some(unescape_identity(raw)?);
                j = stop;
            }
            if j < bytes.len() && bytes[j] == b')' {
                markers.push(Marker::Single { etype, id, identity });
                i = j + 1;
            } else {
                markers.push(Marker::Open { etype, id, identity });
                i = j;
            }
        } else if bytes[i].is_ascii_digit() {
            let (id, j) = read_id(value, i, value)?;
            if j >= bytes.len() || bytes[j] != b')' {
                return Err(Error::Decode(format!("close marker without `)` in `{value}`")));
            }
            markers.push(Marker::Close { id });
            i = j + 1;
        } else {
            return Err(Error::Decode(format!(
                "unexpected character at offset {i} in `{value}`"
            )));
        }
    }
    Ok(markers)
}

/// True if the two ranges partially overlap (neither disjoint nor nested).
pub fn spans_cross(a: (usize, usize), b: (usize, usize)) -> bool {
    let disjoint = a.1 < b.0 || b.1 < a.0;
    let a_in_b = b.0 <= a.0 && a.1 <= b.1;
    let b_in_a = a.0 <= b.0 && b.1 <= a.1;
    !(disjoint || a_in_b || b_in_a)
}

pub(crate) fn check_nesting(spans: &[EntitySpan]) -> Result<()> {
    for (i, a) in spans.iter().enumerate() {
        for b in &spans[i + 1..] {
            if spans_cross((a.start, a.end), (b.start, b.end)) {
                return Err(Error::Nesting(a.start, a.end, b.start, b.end));
            }
        }
    }
    Ok(())
}

/// Head of the token range `[start, end]`: the leftmost non-punctuation
/// token whose governor lies outside the range (or is the root); failing
/// that the leftmost non-punctuation token; failing that `start`.
pub fn span_head(start: usize, end: usize, tokens: &[Token]) -> Result<usize> {
    if start == 0 || start > end || end > tokens.len() {
        return Err(Error::InvalidArgument(format!(
            "span [{start},{end}] is empty or outside 1..={}",
            tokens.len()
        )));
    }
    let range = &tokens[start - 1..end];
    let outside = |t: &Token| t.head == 0 || t.head < start || t.head > end;
    Ok(range
        .iter()
        .find(|t| !t.is_punct() && outside(t))
        .or_else(|| range.iter().find(|t| !t.is_punct()))
        .map_or(start, |t| t.id))
}

/// Decodes per-token raw `Entity` values (aligned with `tokens`) into spans
/// in canonical order. Heads are computed with [`span_head`].
pub fn decode_entities(tokens: &[Token], raw: &[Option<&str>]) -> Result<Vec<EntitySpan>> {
    if raw.len() != tokens.len() {
        return Err(Error::InvalidArgument(format!(
            "{} entity values for {} tokens",
            raw.len(),
            tokens.len()
        )));
    }
    let mut open: BTreeMap<u32, (usize, EntityType, Option<String>)> = BTreeMap::new();
    let mut used = HashSet::new();
    let mut spans = Vec::new();
    let mut finish = |id: u32, start: usize, end: usize, etype, identity| -> Result<()> {
        spans.push(EntitySpan {
            start,
            end,
            etype,
            head: span_head(start, end, tokens)?,
            entity_id: id,
            identity,
        });
        Ok(())
    };
    for (pos, value) in raw.iter().enumerate() {
        let Some(value) = value else { continue };
        let tok = pos + 1;
        for marker in parse_markers(value)? {
            match marker {
                Marker::Open { etype, id, identity } => {
                    if !used.insert(id) {
                        return Err(Error::Decode(format!("entity id {id} used twice")));
                    }
                    open.insert(id, (tok, etype, identity));
                }
                Marker::Single { etype, id, identity } => {
                    if !used.insert(id) {
                        return Err(Error::Decode(format!("entity id {id} used twice")));
                    }
                    finish(id, tok, tok, etype, identity)?;
                }
                Marker::Close { id } => {
                    let (start, etype, identity) = open
                        .remove(&id)
                        .ok_or_else(|| Error::Decode(format!("token {tok}: close marker `{id})` has no opening")))?;
                    finish(id, start, tok, etype, identity)?;
                }
            }
        }
    }
    if let Some((id, (start, _, _))) = open.into_iter().next() {
        return Err(Error::Decode(format!(
            "entity {id} opened at token {start} is never closed"
        )));
    }
    sort_spans(&mut spans);
    check_nesting(&spans)?;
    Ok(spans)
}

fn open_marker(span: &EntitySpan, single: bool) -> String {
    let mut s = format!("({}-{}", span.etype, span.entity_id);
    if let Some(identity) = &span.identity {
        s.push('-');
        s.push_str(&escape_identity(identity));
    }
    if single {
        s.push(')');
    }
    s
}

/// Encodes spans over a sentence of `n_tokens` tokens into per-token
/// `Entity` values (`None` where a token carries no marker).
pub fn encode_entities(spans: &[EntitySpan], n_tokens: usize) -> Result<Vec<Option<String>>> {
    for s in spans {
        if s.start == 0 || s.start > s.end || s.end > n_tokens {
            return Err(Error::InvalidArgument(format!(
                "span [{},{}] outside 1..={n_tokens}",
                s.start, s.end
            )));
        }
    }
    check_nesting(spans)?;
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| s.order_key());

    let mut out = vec![String::new(); n_tokens];
    // Opens in canonical (outermost-first) order, then singles.
    for s in sorted.iter().filter(|s| s.start < s.end) {
        out[s.start - 1].push_str(&open_marker(s, false));
    }
    for s in sorted.iter().filter(|s| s.start == s.end) {
        out[s.start - 1].push_str(&open_marker(s, true));
    }
    // Closes innermost first: reverse canonical order.
    for s in sorted.iter().rev().filter(|s| s.start < s.end) {
        out[s.end - 1].push_str(&format!("{})", s.entity_id));
    }
    Ok(out
        .into_iter()
        .map(|v| if v.is_empty() { None } else { Some(v) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(heads: &[usize], upos: &[&str]) -> Vec<Token> {
        heads
            .iter()
            .zip(upos)
            .enumerate()
            .map(|(i, (&h, &u))| Token::new(i + 1, &format!("w{}", i + 1), "l", u, h, "dep"))
            .collect()
    }

    fn span(start: usize, end: usize, etype: EntityType, id: u32) -> EntitySpan {
        EntitySpan {
            start,
            end,
            etype,
            head: start,
            entity_id: id,
            identity: None,
        }
    }

    #[test]
    fn single_bracket_pair() {
        let t = toks(&[0, 1, 1], &["NOUN", "ADJ", "ADJ"]);
        let spans = decode_entities(&t, &[Some("(person-1"), None, Some("1)")]).unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].start, spans[0].end), (1, 3));
        assert_eq!(spans[0].etype, EntityType::Person);
        assert_eq!(spans[0].head, 1);
    }

    #[test]
    fn la_police_chief_nesting() {
        // LA police chief: LA <- police <- chief
        let t = toks(&[2, 3, 0], &["PROPN", "NOUN", "NOUN"]);
        let raw = [Some("(person-1(organization-2(place-3)"), Some("2)"), Some("1)")];
        let spans = decode_entities(&t, &raw).unwrap();
        assert_eq!(spans.len(), 3);
        let by_type = |ty| spans.iter().find(|s| s.etype == ty).unwrap().clone();
        let per = by_type(EntityType::Person);
        let org = by_type(EntityType::Organization);
        let place = by_type(EntityType::Place);
        assert!(per.contains(&org) && org.contains(&place) && per.contains(&place));
        assert_eq!((per.start, per.end, per.head), (1, 3, 3));
        assert_eq!((org.start, org.end, org.head), (1, 2, 2));
        assert_eq!((place.start, place.end, place.head), (1, 1, 1));
    }

    #[test]
    fn unmatched_and_bad_markers() {
        let t = toks(&[0, 1], &["NOUN", "NOUN"]);
        assert!(matches!(
            decode_entities(&t, &[Some("(person-2"), None]),
            Err(Error::Decode(_))
        ));
        assert!(matches!(
            decode_entities(&t, &[None, Some("3)")]),
            Err(Error::Decode(_))
        ));
        assert!(matches!(
            decode_entities(&t, &[Some("(human-1)"), None]),
            Err(Error::Decode(_))
        ));
        assert!(decode_entities(&t, &[Some("(person-0)"), None]).is_err());
        assert!(decode_entities(&t, &[Some("x"), None]).is_err());
    }

    #[test]
    fn crossing_rejected() {
        let t = toks(&[0, 1, 1, 1], &["NOUN"; 4]);
        let raw = [Some("(person-1"), Some("(place-2"), Some("1)"), Some("2)")];
        assert!(matches!(decode_entities(&t, &raw), Err(Error::Nesting(..))));
        let spans = vec![span(1, 3, EntityType::Person, 1), span(2, 4, EntityType::Place, 2)];
        assert!(matches!(encode_entities(&spans, 4), Err(Error::Nesting(..))));
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode_entities(&[], 3).unwrap(), vec![None, None, None]);
        let out = encode_entities(&[span(2, 2, EntityType::Time, 4)], 3).unwrap();
        assert_eq!(out, vec![None, Some("(time-4)".to_string()), None]);

        let spans = vec![
            span(1, 3, EntityType::Person, 1),
            span(1, 2, EntityType::Organization, 2),
            span(1, 1, EntityType::Place, 3),
        ];
        let out = encode_entities(&spans, 3).unwrap();
        assert_eq!(out[0].as_deref(), Some("(person-1(organization-2(place-3)"));
        assert_eq!(out[1].as_deref(), Some("2)"));
        assert_eq!(out[2].as_deref(), Some("1)"));
    }

    #[test]
    fn identity_escaping_round_trips() {
        let t = toks(&[0, 1], &["PROPN", "PROPN"]);
        let mut s = span(1, 2, EntityType::Place, 7);
        s.identity = Some("Kingdom_of_Israel_(united_monarchy)".into());
        let enc = encode_entities(&[s.clone()], 2).unwrap();
        assert_eq!(
            enc[0].as_deref(),
            Some("(place-7-Kingdom_of_Israel_%28united_monarchy%29")
        );
        let raw: Vec<Option<&str>> = enc.iter().map(|v| v.as_deref()).collect();
        let back = decode_entities(&t, &raw).unwrap();
        assert_eq!(back[0].identity, s.identity);

        let mut single = span(2, 2, EntityType::Person, 3);
        single.identity = Some("Paul_of_Thebes".into());
        let enc = encode_entities(&[single], 2).unwrap();
        assert_eq!(enc[1].as_deref(), Some("(person-3-Paul_of_Thebes)"));
        let raw: Vec<Option<&str>> = enc.iter().map(|v| v.as_deref()).collect();
        let back = decode_entities(&t, &raw).unwrap();
        assert_eq!(back[0].identity.as_deref(), Some("Paul_of_Thebes"));
    }

    #[test]
    fn head_rule() {
        // the <- army -> of -> Diocletian
        let t = toks(&[2, 0, 2, 3], &["DET", "NOUN", "ADP", "PROPN"]);
        assert_eq!(span_head(1, 4, &t).unwrap(), 2);
        assert_eq!(span_head(3, 3, &t).unwrap(), 3);
        assert_eq!(span_head(3, 4, &t).unwrap(), 3);
        assert!(span_head(3, 2, &t).is_err());
        assert!(span_head(0, 1, &t).is_err());

        // punctuation is skipped, and all-punct ranges fall back to the left edge
        let p = toks(&[0, 1, 1], &["PUNCT", "NOUN", "PUNCT"]);
        assert_eq!(span_head(1, 3, &p).unwrap(), 2);
        assert_eq!(span_head(3, 3, &p).unwrap(), 3);
    }
}
