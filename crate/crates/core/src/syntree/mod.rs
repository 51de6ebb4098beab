//! Constituency-tree parsing, linearization, and tree edit distance.

mod ted;
mod tree;

pub use ted::{
    brute_force_forest_ted, brute_force_ted, forest_edit_distance, normalized_tree_edit_distance,
    tree_edit_distance, ORACLE_MAX_NODES,
};
pub use tree::{parse_bracketed, ParseTree, SyntaxTokenSeq};
