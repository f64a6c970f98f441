use std::collections::HashMap;

use crate::{Error, Result};

/// Rooted class hierarchy; leaves are the class labels `0..n_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassTree {
    names: Vec<String>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    /// label → leaf node
    leaves: Vec<usize>,
}

impl ClassTree {
    /// Complete binary tree of the given depth; leaves labelled left to right.
    pub fn balanced_binary(depth: usize) -> Self {
        let n_nodes = (1usize << (depth + 1)) - 1;
        let mut parent = Vec::with_capacity(n_nodes);
        let mut d = Vec::with_capacity(n_nodes);
        let mut names = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            parent.push(if i == 0 { None } else { Some((i - 1) / 2) });
            let level = (usize::BITS - (i + 1).leading_zeros() - 1) as usize;
            d.push(level);
            names.push(format!("n{i}"));
        }
        let first_leaf = (1usize << depth) - 1;
        let leaves: Vec<usize> = (first_leaf..n_nodes).collect();
        for (label, &leaf) in leaves.iter().enumerate() {
            names[leaf] = label.to_string();
        }
        Self {
            names,
            parent,
            depth: d,
            leaves,
        }
    }

    /// Parse a `parent child` edge list (one pair per line, `#` comments).
    ///
    /// Leaves are labelled in order of first appearance.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut names = Vec::new();
        let mut parent: Vec<Option<usize>> = Vec::new();
        let mut intern = |name: &str, names: &mut Vec<String>, parent: &mut Vec<Option<usize>>| {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                parent.push(None);
                names.len() - 1
            })
        };
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(p), Some(c), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Config(format!(
                    "class tree line {}: expected `parent child`",
                    ln + 1
                )));
            };
            let pi = intern(p, &mut names, &mut parent);
            let ci = intern(c, &mut names, &mut parent);
            if parent[ci].is_some() {
                return Err(Error::Config(format!(
                    "class tree node `{c}` has two parents"
                )));
            }
            if pi == ci {
                return Err(Error::Config(format!(
                    "class tree node `{c}` is its own parent"
                )));
            }
            parent[ci] = Some(pi);
        }
        let roots: Vec<usize> = (0..names.len()).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Config(format!(
                "class tree must have exactly one root, found {}",
                roots.len()
            )));
        }
        let mut depth = vec![usize::MAX; names.len()];
        for start in 0..names.len() {
            // walk up until a node of known depth (or the root), detecting cycles
            let mut path = vec![start];
            let mut cur = start;
            while depth[cur] == usize::MAX {
                match parent[cur] {
                    None => {
                        depth[cur] = 0;
                        break;
                    }
                    Some(p) => {
                        if path.len() > names.len() {
                            return Err(Error::Config("class tree contains a cycle".into()));
                        }
                        path.push(p);
                        cur = p;
                    }
                }
            }
            for &n in path.iter().rev() {
                if depth[n] == usize::MAX {
                    depth[n] = depth[parent[n].unwrap()] + 1;
                }
            }
        }
        let mut has_child = vec![false; names.len()];
        for p in parent.iter().flatten() {
            has_child[*p] = true;
        }
        let leaves = (0..names.len()).filter(|&i| !has_child[i]).collect();
        Ok(Self {
            names,
            parent,
            depth,
            leaves,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.leaves.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn leaf(&self, label: i64) -> Result<usize> {
        usize::try_from(label)
            .ok()
            .and_then(|l| self.leaves.get(l).copied())
            .ok_or(Error::UnknownLabel(label))
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn label_name(&self, label: i64) -> Result<&str> {
        Ok(self.name(self.leaf(label)?))
    }

    /// Nodes from the root down to `node`, inclusive.
    pub fn path_from_root(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Edge-list text accepted by [`ClassTree::from_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                out.push_str(&format!("{} {}\n", self.names[*p], self.names[i]));
            }
        }
        out
    }
}

/// Depth of the deepest common ancestor of two classes (a leaf is its own ancestor).
pub fn lca_depth(tree: &ClassTree, a: i64, b: i64) -> Result<usize> {
    let mut x = tree.leaf(a)?;
    let mut y = tree.leaf(b)?;
    while tree.depth[x] > tree.depth[y] {
        x = tree.parent[x].unwrap();
    }
    while tree.depth[y] > tree.depth[x] {
        y = tree.parent[y].unwrap();
    }
    while x != y {
        x = tree.parent[x].unwrap();
        y = tree.parent[y].unwrap();
    }
    Ok(tree.depth[x])
}
