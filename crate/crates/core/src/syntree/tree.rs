//! Penn-style bracketed constituency trees.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A rooted, ordered, labeled constituency tree. Leaves may carry a surface
/// word; a node with a word has no children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseTree {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ParseTree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
}

/// Pre-order linearization of a tree with explicit bracket tokens and no
/// surface words; the target alphabet of the syntactic losses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxTokenSeq(pub Vec<String>);

impl ParseTree {
    pub fn leaf(label: &str) -> Self {
        ParseTree {
            label: label.to_string(),
            children: Vec::new(),
            word: None,
        }
    }

    pub fn word_leaf(label: &str, word: &str) -> Self {
        ParseTree {
            label: label.to_string(),
            children: Vec::new(),
            word: Some(word.to_string()),
        }
    }

    pub fn node(label: &str, children: Vec<ParseTree>) -> Self {
        ParseTree {
            label: label.to_string(),
            children,
            word: None,
        }
    }

    /// Total node count.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(|c| c.size()).sum::<usize>()
    }

    /// Number of leaves (with or without attached words).
    pub fn leaf_count(&self) -> usize {
        if self.children.is_empty() {
            1
        } else {
            self.children.iter().map(|c| c.leaf_count()).sum()
        }
    }

    /// Leaf words in order, for trees whose leaves carry words.
    pub fn words(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_words(&mut out);
        out
    }

    fn collect_words(&self, out: &mut Vec<String>) {
        if let Some(w) = &self.word {
            out.push(w.clone());
        }
        for c in &self.children {
            c.collect_words(out);
        }
    }

    /// Labels of the leaves in order (the POS front for pre-terminal trees).
    pub fn leaf_labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_leaf_labels(&mut out);
        out
    }

    fn collect_leaf_labels(&self, out: &mut Vec<String>) {
        if self.children.is_empty() {
            out.push(self.label.clone());
        }
        for c in &self.children {
            c.collect_leaf_labels(out);
        }
    }

    /// A copy with every surface word removed (category labels only).
    pub fn strip_words(&self) -> ParseTree {
        ParseTree {
            label: self.label.clone(),
            children: self.children.iter().map(|c| c.strip_words()).collect(),
            word: None,
        }
    }

    /// Bracketed text form, e.g. `(ROOT (NP (DT the) (NN dog)))`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        self.write_to(&mut s);
        s
    }

    fn write_to(&self, s: &mut String) {
        s.push('(');
        s.push_str(&self.label);
        if let Some(w) = &self.word {
            s.push(' ');
            s.push_str(w);
        }
        for c in &self.children {
            s.push(' ');
            c.write_to(s);
        }
        s.push(')');
    }

    /// Pre-order linearization; leaf words are dropped.
    pub fn syntax_tokens(&self) -> SyntaxTokenSeq {
        let mut toks = Vec::new();
        self.collect_tokens(&mut toks);
        SyntaxTokenSeq(toks)
    }

    fn collect_tokens(&self, toks: &mut Vec<String>) {
        toks.push("(".to_string());
        toks.push(self.label.clone());
        for c in &self.children {
            c.collect_tokens(toks);
        }
        toks.push(")".to_string());
    }
}

impl SyntaxTokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Balanced parentheses with no surface words (every non-paren token
    /// directly follows an opening paren).
    pub fn is_well_formed(&self) -> bool {
        let mut depth = 0i64;
        let mut prev_open = false;
        for (i, t) in self.0.iter().enumerate() {
            match t.as_str() {
                "(" => {
                    depth += 1;
                    prev_open = true;
                }
                ")" => {
                    depth -= 1;
                    if depth < 0 {
                        return false;
                    }
                    prev_open = false;
                }
                _ => {
                    if !prev_open {
                        return false;
                    }
                    prev_open = false;
                    let _ = i;
                }
            }
        }
        depth == 0 && !self.0.is_empty()
    }
}

/// Parse a bracketed constituency tree.
///
/// Whitespace-tolerant; labels are case-preserved. Errors carry the byte
/// offset of the problem.
pub fn parse_bracketed(s: &str) -> Result<ParseTree> {
    let bytes = s.as_bytes();
    let mut pos = 0usize;
    skip_ws(bytes, &mut pos);
    let tree = parse_node(bytes, &mut pos)?;
    skip_ws(bytes, &mut pos);
    if pos != bytes.len() {
        return Err(CoreError::Parse {
            offset: pos,
            msg: "trailing garbage after tree".to_string(),
        });
    }
    Ok(tree)
}

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
}

fn read_token(bytes: &[u8], pos: &mut usize) -> String {
    let start = *pos;
    while *pos < bytes.len()
        && !bytes[*pos].is_ascii_whitespace()
        && bytes[*pos] != b'('
        && bytes[*pos] != b')'
    {
        *pos += 1;
    }
    String::from_utf8_lossy(&bytes[start..*pos]).into_owned()
}

fn parse_node(bytes: &[u8], pos: &mut usize) -> Result<ParseTree> {
    if *pos >= bytes.len() || bytes[*pos] != b'(' {
        return Err(CoreError::Parse {
            offset: *pos,
            msg: "expected '('".to_string(),
        });
    }
    let open_at = *pos;
    *pos += 1;
    skip_ws(bytes, pos);
    let label = read_token(bytes, pos);
    if label.is_empty() {
        return Err(CoreError::Parse {
            offset: *pos,
            msg: "empty node label".to_string(),
        });
    }

    let mut children = Vec::new();
    let mut word: Option<String> = None;
    loop {
        skip_ws(bytes, pos);
        if *pos >= bytes.len() {
            return Err(CoreError::Parse {
                offset: open_at,
                msg: "unbalanced brackets: node never closed".to_string(),
            });
        }
        match bytes[*pos] {
            b')' => {
                *pos += 1;
                return Ok(ParseTree {
                    label,
                    children,
                    word,
                });
            }
            b'(' => {
                if word.is_some() {
                    return Err(CoreError::Parse {
                        offset: *pos,
                        msg: "a node with a word cannot have children".to_string(),
                    });
                }
                children.push(parse_node(bytes, pos)?);
            }
            _ => {
                let at = *pos;
                let w = read_token(bytes, pos);
                if !children.is_empty() {
                    return Err(CoreError::Parse {
                        offset: at,
                        msg: "word token after child subtree".to_string(),
                    });
                }
                if word.is_some() {
                    return Err(CoreError::Parse {
                        offset: at,
                        msg: "multiple words under one node".to_string(),
                    });
                }
                word = Some(w);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER_TREE: &str = "(ROOT (NP (NP (NP (DT) (JJ) (NN)) (PP (IN) (NP (NN)))) (PP (IN) (NP (DT) (JJ) (NN)))))";

    #[test]
    fn paper_example_tree_shape() {
        // "a short clip of news on a white background"
        let t = parse_bracketed(PAPER_TREE).unwrap();
        assert_eq!(t.label, "ROOT");
        assert_eq!(t.children.len(), 1);
        assert_eq!(t.children[0].label, "NP");
        // 9 leaves (DT JJ NN IN NN IN DT JJ NN) + 5 NP + 2 PP + ROOT
        assert_eq!(t.size(), 17);
    }

    #[test]
    fn paper_example_syntax_tokens() {
        let t = parse_bracketed(PAPER_TREE).unwrap();
        let toks = t.syntax_tokens();
        let expect: Vec<&str> = vec![
            "(", "ROOT", "(", "NP", "(", "NP", "(", "NP", "(", "DT", ")", "(", "JJ", ")", "(",
            "NN", ")", ")", "(", "PP", "(", "IN", ")", "(", "NP", "(", "NN", ")", ")", ")", ")",
            "(", "PP", "(", "IN", ")", "(", "NP", "(", "DT", ")", "(", "JJ", ")", "(", "NN", ")",
            ")", ")", ")", ")",
        ];
        assert_eq!(toks.0, expect);
        assert!(toks.is_well_formed());
    }

    #[test]
    fn single_leaf_tree() {
        let t = parse_bracketed("(ROOT (NN))").unwrap();
        assert_eq!(t.children.len(), 1);
        assert_eq!(t.children[0], ParseTree::leaf("NN"));
        assert_eq!(t.syntax_tokens().0, vec!["(", "ROOT", "(", "NN", ")", ")"]);
    }

    #[test]
    fn unbalanced_is_parse_error() {
        let err = parse_bracketed("(ROOT (NP)").unwrap_err();
        assert!(matches!(err, CoreError::Parse { .. }), "{err}");
    }

    #[test]
    fn trailing_garbage_reports_offset() {
        let err = parse_bracketed("(ROOT (NN)) x").unwrap_err();
        match err {
            CoreError::Parse { offset, .. } => assert_eq!(offset, 12),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_node_is_parse_error() {
        assert!(parse_bracketed("(ROOT ())").is_err());
    }

    #[test]
    fn words_attach_to_leaves_and_are_dropped_from_tokens() {
        let t = parse_bracketed("(ROOT (NP (DT the) (NN dog)))").unwrap();
        assert_eq!(t.words(), vec!["the", "dog"]);
        let toks = t.syntax_tokens();
        assert!(!toks.0.contains(&"dog".to_string()));
        assert!(!toks.0.contains(&"the".to_string()));
        assert_eq!(t.strip_words().words(), Vec::<String>::new());
    }

    #[test]
    fn serialize_parse_round_trip_normalizes_whitespace() {
        let src = "( ROOT   (NP (DT the)\n  (NN dog) ) )";
        let t = parse_bracketed(src).unwrap();
        let s = t.serialize();
        assert_eq!(s, "(ROOT (NP (DT the) (NN dog)))");
        assert_eq!(parse_bracketed(&s).unwrap(), t);
    }

    #[test]
    fn word_then_child_is_error() {
        assert!(parse_bracketed("(NN dog (X))").is_err());
        assert!(parse_bracketed("(NN dog cat)").is_err());
    }
}
