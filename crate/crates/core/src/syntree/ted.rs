//! Ordered-tree edit distance.
//!
//! [`tree_edit_distance`] is the Zhang–Shasha dynamic program with unit
//! costs for insert, delete, and relabel; [`brute_force_ted`] minimizes cost
//! over explicitly enumerated edit mappings and exists to cross-check it on
//! small trees. Both compare category labels only; surface words never
//! participate.

use crate::error::{CoreError, Result};
use crate::syntree::tree::ParseTree;

/// Default size bound for the brute-force oracle.
pub const ORACLE_MAX_NODES: usize = 8;

/// Zhang–Shasha tree edit distance between two trees.
pub fn tree_edit_distance(a: &ParseTree, b: &ParseTree) -> usize {
    zs_distance(&PostOrder::of_tree(a), &PostOrder::of_tree(b))
}

/// Edit distance between ordered forests (an empty forest is allowed).
pub fn forest_edit_distance(a: &[ParseTree], b: &[ParseTree]) -> usize {
    zs_distance(&PostOrder::of_forest(a), &PostOrder::of_forest(b))
}

/// `tree_edit_distance` normalized by the total node count, in [0, 1].
pub fn normalized_tree_edit_distance(a: &ParseTree, b: &ParseTree) -> f64 {
    tree_edit_distance(a, b) as f64 / (a.size() + b.size()) as f64
}

/// Exhaustive minimum over valid edit mappings; equals
/// [`tree_edit_distance`] on its domain.
pub fn brute_force_ted(a: &ParseTree, b: &ParseTree, max_nodes: usize) -> Result<usize> {
    if a.size() > max_nodes || b.size() > max_nodes {
        return Err(CoreError::domain(format!(
            "brute_force_ted: tree sizes {} and {} exceed limit {max_nodes}",
            a.size(),
            b.size()
        )));
    }
    Ok(mapping_search(&NodeList::of_tree(a), &NodeList::of_tree(b)))
}

/// Brute-force distance between forests, for the empty-forest edge cases.
pub fn brute_force_forest_ted(a: &[ParseTree], b: &[ParseTree], max_nodes: usize) -> Result<usize> {
    let na: usize = a.iter().map(|t| t.size()).sum();
    let nb: usize = b.iter().map(|t| t.size()).sum();
    if na > max_nodes || nb > max_nodes {
        return Err(CoreError::domain(format!(
            "brute_force_forest_ted: forest sizes {na} and {nb} exceed limit {max_nodes}"
        )));
    }
    Ok(mapping_search(&NodeList::of_forest(a), &NodeList::of_forest(b)))
}

// ---- Zhang–Shasha ----

/// Postorder view of a tree (or a forest under a virtual root). The virtual
/// root has label `None`, which never matches a real label but always
/// matches the other side's virtual root.
struct PostOrder {
    labels: Vec<Option<String>>,
    /// Leftmost leaf descendant, as a postorder index.
    lld: Vec<usize>,
    keyroots: Vec<usize>,
}

impl PostOrder {
    fn of_tree(t: &ParseTree) -> Self {
        let mut labels = Vec::new();
        let mut lld = Vec::new();
        walk(t, &mut labels, &mut lld);
        Self::finish(labels, lld)
    }

    fn of_forest(f: &[ParseTree]) -> Self {
        let mut labels = Vec::new();
        let mut lld = Vec::new();
        for t in f {
            walk(t, &mut labels, &mut lld);
        }
        // Virtual root over the whole forest; its leftmost leaf is postorder
        // index 0 (itself, when the forest is empty).
        labels.push(None);
        lld.push(0);
        Self::finish(labels, lld)
    }

    fn finish(labels: Vec<Option<String>>, lld: Vec<usize>) -> Self {
        let n = labels.len();
        // keyroots: for each distinct lld value keep the largest node index
        let mut keyroots = Vec::new();
        for i in 0..n {
            if !(i + 1 < n && lld[i + 1..].contains(&lld[i])) {
                keyroots.push(i);
            }
        }
        PostOrder {
            labels,
            lld,
            keyroots,
        }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

fn walk(t: &ParseTree, labels: &mut Vec<Option<String>>, lld: &mut Vec<usize>) {
    // In postorder the leftmost leaf of a subtree is pushed first, so its
    // index before descending is the lld of every node on the left spine.
    let leftmost = labels.len();
    for c in &t.children {
        walk(c, labels, lld);
    }
    labels.push(Some(t.label.clone()));
    lld.push(leftmost);
}

fn cost_relabel(a: &Option<String>, b: &Option<String>) -> usize {
    usize::from(a != b)
}

fn zs_distance(a: &PostOrder, b: &PostOrder) -> usize {
    let (na, nb) = (a.len(), b.len());
    if na == 0 {
        return nb;
    }
    if nb == 0 {
        return na;
    }
    let mut td = vec![vec![0usize; nb]; na];

    for &i in &a.keyroots {
        for &j in &b.keyroots {
            // forest distance over descendants of keyroots i, j
            let (li, lj) = (a.lld[i], b.lld[j]);
            let m = i - li + 2;
            let n = j - lj + 2;
            let mut fd = vec![vec![0usize; n]; m];
            for x in 1..m {
                fd[x][0] = fd[x - 1][0] + 1;
            }
            for y in 1..n {
                fd[0][y] = fd[0][y - 1] + 1;
            }
            for x in 1..m {
                let i1 = li + x - 1;
                for y in 1..n {
                    let j1 = lj + y - 1;
                    if a.lld[i1] == li && b.lld[j1] == lj {
                        // both prefixes form whole trees
                        let c = cost_relabel(&a.labels[i1], &b.labels[j1]);
                        fd[x][y] = (fd[x - 1][y] + 1)
                            .min(fd[x][y - 1] + 1)
                            .min(fd[x - 1][y - 1] + c);
                        td[i1][j1] = fd[x][y];
                    } else {
                        let px = a.lld[i1] - li; // forest prefix before subtree i1
                        let py = b.lld[j1] - lj;
                        fd[x][y] = (fd[x - 1][y] + 1)
                            .min(fd[x][y - 1] + 1)
                            .min(fd[px][py] + td[i1][j1]);
                    }
                }
            }
        }
    }
    td[na - 1][nb - 1]
}

// ---- brute-force oracle ----

/// Flat node list with preorder/postorder numbers; two nodes' structural
/// relation (ancestor, descendant, left, right) is decidable from them.
struct NodeList {
    labels: Vec<Option<String>>,
    pre: Vec<usize>,
    post: Vec<usize>,
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum Relation {
    Ancestor,
    Descendant,
    Left,
    Right,
}

impl NodeList {
    fn of_tree(t: &ParseTree) -> Self {
        let mut nl = NodeList {
            labels: Vec::new(),
            pre: Vec::new(),
            post: Vec::new(),
        };
        let mut pre = 0;
        let mut post = 0;
        nl.number(t, &mut pre, &mut post);
        nl
    }

    fn of_forest(f: &[ParseTree]) -> Self {
        // virtual shared root, same convention as the Zhang–Shasha side
        let mut nl = NodeList {
            labels: vec![None],
            pre: vec![0],
            post: vec![usize::MAX],
        };
        let mut pre = 1;
        let mut post = 0;
        for t in f {
            nl.number(t, &mut pre, &mut post);
        }
        nl.post[0] = post; // virtual root closes last
        nl
    }

    fn number(&mut self, t: &ParseTree, pre: &mut usize, post: &mut usize) {
        let idx = self.labels.len();
        self.labels.push(Some(t.label.clone()));
        self.pre.push(*pre);
        self.post.push(0);
        *pre += 1;
        for c in &t.children {
            self.number(c, pre, post);
        }
        self.post[idx] = *post;
        *post += 1;
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn relation(&self, u: usize, v: usize) -> Relation {
        if self.pre[u] < self.pre[v] {
            if self.post[u] > self.post[v] {
                Relation::Ancestor
            } else {
                Relation::Left
            }
        } else if self.post[u] < self.post[v] {
            Relation::Descendant
        } else {
            Relation::Right
        }
    }
}

/// Depth-first enumeration of valid edit mappings with branch-and-bound.
fn mapping_search(a: &NodeList, b: &NodeList) -> usize {
    let (na, nb) = (a.len(), b.len());
    let mut best = na + nb; // delete-all + insert-all
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut used_b = vec![false; nb];
    search(a, b, 0, 0, &mut pairs, &mut used_b, &mut best);
    best
}

fn search(
    a: &NodeList,
    b: &NodeList,
    next_a: usize,
    cost_so_far: usize,
    pairs: &mut Vec<(usize, usize)>,
    used_b: &mut Vec<bool>,
    best: &mut usize,
) {
    // Admissible bound: unmatched b nodes are at least nb - matched - remaining_a.
    let remaining_a = a.len() - next_a;
    let lower = cost_so_far
        + (b.len() - pairs.len()).saturating_sub(remaining_a);
    if lower >= *best {
        return;
    }
    if next_a == a.len() {
        let total = cost_so_far + (b.len() - pairs.len());
        if total < *best {
            *best = total;
        }
        return;
    }

    // Option 1: map next_a to each compatible unused b node.
    for v in 0..b.len() {
        if used_b[v] {
            continue;
        }
        let compatible = pairs
            .iter()
            .all(|&(pu, pv)| a.relation(next_a, pu) == b.relation(v, pv));
        if !compatible {
            continue;
        }
        let c = cost_relabel(&a.labels[next_a], &b.labels[v]);
        pairs.push((next_a, v));
        used_b[v] = true;
        search(a, b, next_a + 1, cost_so_far + c, pairs, used_b, best);
        used_b[v] = false;
        pairs.pop();
    }

    // Option 2: delete next_a.
    search(a, b, next_a + 1, cost_so_far + 1, pairs, used_b, best);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntree::tree::parse_bracketed;

    fn t(s: &str) -> ParseTree {
        parse_bracketed(s).unwrap()
    }

    #[test]
    fn identical_trees_are_distance_zero() {
        let a = t("(ROOT (NP (DT) (NN)) (VP (VBZ)))");
        assert_eq!(tree_edit_distance(&a, &a), 0);
        assert_eq!(brute_force_ted(&a, &a, ORACLE_MAX_NODES).unwrap(), 0);
    }

    #[test]
    fn single_relabel_is_one() {
        let a = t("(A)");
        let b = t("(B)");
        assert_eq!(tree_edit_distance(&a, &b), 1);
    }

    #[test]
    fn dropped_child_is_one() {
        let a = t("(A (B) (C))");
        let b = t("(A (B))");
        assert_eq!(tree_edit_distance(&a, &b), 1);
        assert_eq!(
            brute_force_ted(&a, &b, ORACLE_MAX_NODES).unwrap(),
            tree_edit_distance(&a, &b)
        );
    }

    #[test]
    fn words_are_ignored() {
        let a = t("(NP (DT the) (NN dog))");
        let b = t("(NP (DT a) (NN cat))");
        assert_eq!(tree_edit_distance(&a, &b), 0);
    }

    #[test]
    fn empty_forest_vs_tree_is_node_count() {
        let b = t("(A (B) (C (D)))");
        assert_eq!(forest_edit_distance(&[], &[b.clone()]), 4);
        assert_eq!(brute_force_forest_ted(&[], &[b], ORACLE_MAX_NODES).unwrap(), 4);
        assert_eq!(forest_edit_distance(&[], &[]), 0);
    }

    #[test]
    fn known_structural_case() {
        // delete one interior node: (F (D (A) (C (B))) (E)) vs textbook pair
        let a = t("(F (D (A) (C (B))) (E))");
        let b = t("(F (C (D (A) (B))) (E))");
        // classic Zhang–Shasha example: distance 2
        assert_eq!(tree_edit_distance(&a, &b), 2);
        assert_eq!(brute_force_ted(&a, &b, ORACLE_MAX_NODES).unwrap(), 2);
    }

    #[test]
    fn oracle_rejects_oversized_trees() {
        let a = t("(A (B) (C) (D) (E) (F) (G) (H) (I))");
        assert!(matches!(
            brute_force_ted(&a, &a, ORACLE_MAX_NODES),
            Err(CoreError::Domain(_))
        ));
    }

    #[test]
    fn normalized_is_bounded() {
        let a = t("(A (B) (C))");
        let b = t("(X (Y))");
        let n = normalized_tree_edit_distance(&a, &b);
        assert!((0.0..=1.0).contains(&n));
        assert_eq!(normalized_tree_edit_distance(&a, &a), 0.0);
    }
}
