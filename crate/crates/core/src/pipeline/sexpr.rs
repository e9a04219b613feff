//! Parser for the pipeline expression format.
//!
//! The grammar is exactly what `Display` produces, except that any run of
//! ASCII whitespace is accepted where the canonical form has one space, and
//! surrounding whitespace is ignored. Integers are unsigned decimal without
//! leading zeros.

use std::ops::RangeInclusive;

use super::{check_root, Invalid, Node, PipelineTree, MAX_DEPTH_RANGE, MAX_TREE_SIZE, N_PAIRS_RANGE, N_TREES_RANGE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
    End,
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    nodes: usize,
}

fn syntax(offset: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        offset,
        message: message.into(),
    }
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        let bytes = self.text.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next token and its starting offset.
    fn next(&mut self) -> (Tok<'a>, usize) {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.text.as_bytes();
        match bytes.get(start) {
            None => (Tok::End, start),
            Some(b'(') => {
                self.pos += 1;
                (Tok::Open, start)
            }
            Some(b')') => {
                self.pos += 1;
                (Tok::Close, start)
            }
            Some(_) => {
                let mut end = start;
                while end < bytes.len() && !bytes[end].is_ascii_whitespace() && bytes[end] != b'(' && bytes[end] != b')'
                {
                    end += 1;
                }
                self.pos = end;
                (Tok::Atom(&self.text[start..end]), start)
            }
        }
    }

    fn count_node(&mut self, offset: usize) -> Result<()> {
        self.nodes += 1;
        if self.nodes > MAX_TREE_SIZE {
            return Err(syntax(
                offset,
                format!("pipeline exceeds the limit of {MAX_TREE_SIZE} nodes"),
            ));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Node> {
        let (tok, at) = self.next();
        match tok {
            Tok::Atom("input") => {
                self.count_node(at)?;
                Ok(Node::Input)
            }
            Tok::Atom(a) => Err(syntax(at, format!("expected `input` or `(`, found `{a}`"))),
            Tok::Open => self.operator(),
            Tok::Close => Err(syntax(at, "unexpected `)`")),
            Tok::End => Err(syntax(at, "unexpected end of input")),
        }
    }

    fn operator(&mut self) -> Result<Node> {
        let (tok, at) = self.next();
        let name = match tok {
            Tok::Atom(a) => a,
            Tok::End => return Err(syntax(at, "unexpected end of input")),
            _ => return Err(syntax(at, "expected an operator name")),
        };
        let node = match name {
            "dt" | "rf" | "pairs" => {
                self.count_node(at)?;
                let child = Box::new(self.expr()?);
                match name {
                    "dt" => Node::ClassifyDt {
                        child,
                        max_depth: self.param("depth", MAX_DEPTH_RANGE)?,
                    },
                    "rf" => Node::ClassifyRf {
                        child,
                        n_trees: self.param("trees", N_TREES_RANGE)?,
                    },
                    _ => Node::SelectPairs {
                        child,
                        n_pairs: self.param("n", N_PAIRS_RANGE)?,
                    },
                }
            }
            "combine" => {
                self.count_node(at)?;
                let left = Box::new(self.expr()?);
                let right = Box::new(self.expr()?);
                Node::Combine { left, right }
            }
            other => return Err(syntax(at, format!("unknown operator `{other}`"))),
        };
        match self.next() {
            (Tok::Close, _) => Ok(node),
            (Tok::End, at) => Err(syntax(at, "unexpected end of input, expected `)`")),
            (_, at) => Err(syntax(at, "expected `)`")),
        }
    }

    fn param(&mut self, key: &str, range: RangeInclusive<u32>) -> Result<u32> {
        let (tok, at) = self.next();
        let atom = match tok {
            Tok::Atom(a) => a,
            Tok::End => return Err(syntax(at, format!("unexpected end of input, expected `{key}=`"))),
            _ => return Err(syntax(at, format!("expected `{key}=<int>`"))),
        };
        let digits = atom
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| syntax(at, format!("expected `{key}=<int>`, found `{atom}`")))?;
        let value_at = at + key.len() + 1;
        let well_formed = !digits.is_empty()
            && digits.bytes().all(|b| b.is_ascii_digit())
            && !(digits.len() > 1 && digits.starts_with('0'));
        if !well_formed {
            return Err(syntax(value_at, format!("`{digits}` is not an unsigned integer")));
        }
        match digits.parse::<u32>() {
            Ok(v) if range.contains(&v) => Ok(v),
            _ => Err(syntax(
                value_at,
                format!(
                    "{key}={digits} is outside the allowed range {}..={}",
                    range.start(),
                    range.end()
                ),
            )),
        }
    }
}

/// Parses one pipeline expression and checks every genome invariant.
pub fn parse_pipeline(text: &str) -> Result<PipelineTree> {
    let mut p = Parser { text, pos: 0, nodes: 0 };
    p.skip_ws();
    let root_at = p.pos;
    let root = p.expr()?;
    match p.next() {
        (Tok::End, _) => {}
        (_, at) => return Err(syntax(at, "trailing text after pipeline")),
    }
    check_root(&root).map_err(|e| match e {
        Invalid::RootNotClassifier => syntax(root_at, "root must be a classifier (dt or rf)"),
        other => syntax(root_at, other.to_string()),
    })?;
    Ok(PipelineTree::new(root).expect("checked above"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::OperatorSet;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;

    fn offset_of(text: &str) -> usize {
        match parse_pipeline(text) {
            Err(Error::Syntax { offset, .. }) => offset,
            other => panic!("expected syntax error for {text:?}, got {other:?}"),
        }
    }

    #[test]
    fn fixed_point() {
        let p = parse_pipeline("(dt input depth=5)").unwrap();
        assert_eq!(p.to_string(), "(dt input depth=5)");
    }

    #[test]
    fn root_must_be_classifier() {
        let err = parse_pipeline("(pairs input n=3)").unwrap_err();
        assert!(err.to_string().contains("root must be a classifier"), "{err}");
        assert_eq!(offset_of("  input"), 2);
    }

    #[test]
    fn whitespace_is_normalized() {
        let p = parse_pipeline("\n ( rf\t(combine input  input)\n trees=10 ) \n").unwrap();
        assert_eq!(p.to_string(), "(rf (combine input input) trees=10)");
    }

    #[test]
    fn error_offsets() {
        assert_eq!(offset_of("(dt input depth=11)"), 16);
        assert_eq!(offset_of("(dt input depth=05)"), 16);
        assert_eq!(offset_of("(dt input depth=)"), 16);
        assert_eq!(offset_of("(dt input depth=-1)"), 16);
        assert_eq!(offset_of("(svm input c=1)"), 1);
        assert_eq!(offset_of("(dt input trees=5)"), 10);
        assert_eq!(offset_of("(dt input depth=5"), 17);
        assert_eq!(offset_of("(dt input depth=5))"), 18);
        assert_eq!(offset_of("(dt inputs depth=5)"), 4);
        assert_eq!(offset_of(""), 0);
        assert_eq!(offset_of("(rf input trees=99999999999)"), 16);
        assert_eq!(offset_of("(combine input)"), 14);
    }

    #[test]
    fn size_cap_and_deep_nesting() {
        let deep = |n: usize| {
            let mut s = "input".to_string();
            for _ in 0..n {
                s = format!("(dt {s} depth=1)");
            }
            s
        };
        assert!(parse_pipeline(&deep(49)).is_ok());
        assert!(parse_pipeline(&deep(50)).is_err());
        // Rejected on the node count long before recursion gets deep.
        let hostile = "(dt ".repeat(1_000_000);
        assert!(parse_pipeline(&hostile).is_err());
    }

    #[test]
    fn thousand_random_pipelines_round_trip() {
        let mut rng = rng_from_seed(11);
        for _ in 0..1000 {
            let p = PipelineTree::random_with(&mut rng, 5, OperatorSet::Full);
            let text = p.to_string();
            let q = parse_pipeline(&text).unwrap();
            assert_eq!(q, p);
            assert_eq!(q.to_string(), text);
            assert_eq!(q.complexity(), p.complexity());
        }
    }

    fn canonical_ws(s: &str) -> String {
        // Collapse whitespace the way the serializer lays it out.
        let spaced = s.replace('(', " ( ").replace(')', " ) ");
        let toks: Vec<&str> = spaced.split_ascii_whitespace().collect();
        let mut out = String::new();
        for (i, t) in toks.iter().enumerate() {
            if i > 0 && toks[i - 1] != "(" && *t != ")" {
                out.push(' ');
            }
            out.push_str(t);
        }
        out
    }

    proptest! {
        #[test]
        fn parse_accepts_exactly_the_serializer_language(
            seed in any::<u64>(),
            edits in proptest::collection::vec((any::<prop::sample::Index>(), 0usize..8), 0..3),
        ) {
            let p = PipelineTree::random(seed, 4);
            let mut text = p.to_string();
            const PIECES: [&str; 8] = ["(", ")", " ", "0", "9", "input", "=", "x"];
            for (idx, piece) in edits {
                let at = idx.index(text.len() + 1);
                if piece % 2 == 0 {
                    text.insert_str(at, PIECES[piece]);
                } else if at < text.len() {
                    text.remove(at);
                }
            }
            match parse_pipeline(&text) {
                Ok(q) => prop_assert_eq!(q.to_string(), canonical_ws(&text)),
                Err(_) => {
                    // Nothing the serializer emits may be rejected.
                    let reparsed_from_canonical = parse_pipeline(&canonical_ws(&text));
                    prop_assert!(reparsed_from_canonical.is_err());
                }
            }
        }
    }
}
