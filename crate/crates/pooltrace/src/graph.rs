//! Contact-graph structure extraction: maximal cliques and k-clique
//! communities, turned into the group structure consumed by the grouped
//! decoders.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::epidemic::ContactEdge;
use crate::error::{Error, Result};

/// Simple undirected graph over `0..n`.
#[derive(Debug, Clone)]
pub struct UGraph {
    pub n: usize,
    adj: Vec<HashSet<u32>>,
}

impl UGraph {
    pub fn new(n: usize) -> Self {
        UGraph { n, adj: vec![HashSet::new(); n] }
    }

    pub fn add_edge(&mut self, a: u32, b: u32) {
        if a == b {
            return;
        }
        self.adj[a as usize].insert(b);
        self.adj[b as usize].insert(a);
    }

    pub fn from_contact_edges(n: usize, edges: impl IntoIterator<Item = ContactEdge>) -> Self {
        let mut g = UGraph::new(n);
        for e in edges {
            g.add_edge(e.i, e.j);
        }
        g
    }

    pub fn neighbors(&self, v: u32) -> &HashSet<u32> {
        &self.adj[v as usize]
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.adj[a as usize].contains(&b)
    }
}

/// All maximal cliques (Bron-Kerbosch with pivoting). Isolated vertices come
/// back as singleton cliques. Each clique is sorted and the list is sorted,
/// so the output is deterministic.
pub fn bron_kerbosch(g: &UGraph) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut r = Vec::new();
    let p: HashSet<u32> = (0..g.n as u32).collect();
    let x = HashSet::new();
    bk_recurse(g, &mut r, p, x, &mut out);
    for c in &mut out {
        c.sort_unstable();
    }
    out.sort();
    out
}

fn bk_recurse(
    g: &UGraph,
    r: &mut Vec<u32>,
    p: HashSet<u32>,
    mut x: HashSet<u32>,
    out: &mut Vec<Vec<u32>>,
) {
    if p.is_empty() && x.is_empty() {
        out.push(r.clone());
        return;
    }
    // pivot on the vertex covering the most of P
    let pivot = p
        .iter()
        .chain(x.iter())
        .max_by_key(|&&u| (p.iter().filter(|v| g.neighbors(u).contains(v)).count(), u))
        .copied();
    let candidates: Vec<u32> = match pivot {
        Some(u) => {
            let mut c: Vec<u32> = p.iter().filter(|v| !g.neighbors(u).contains(v)).copied().collect();
            c.sort_unstable();
            c
        }
        None => {
            let mut c: Vec<u32> = p.iter().copied().collect();
            c.sort_unstable();
            c
        }
    };
    let mut p = p;
    for v in candidates {
        let nv = g.neighbors(v);
        let new_p: HashSet<u32> = p.intersection(nv).copied().collect();
        let new_x: HashSet<u32> = x.intersection(nv).copied().collect();
        r.push(v);
        bk_recurse(g, r, new_p, new_x, out);
        r.pop();
        p.remove(&v);
        x.insert(v);
    }
}

/// k-clique percolation from a maximal-clique list: take all k-subsets of
/// the maximal cliques as k-cliques, join two k-cliques when they share k-1
/// vertices, and return the vertex union of each connected component.
pub fn k_clique_communities(cliques: &[Vec<u32>], k: usize) -> Vec<Vec<u32>> {
    assert!(k >= 2, "k-clique percolation needs k >= 2");
    // enumerate distinct k-cliques
    let mut k_cliques: Vec<Vec<u32>> = Vec::new();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    for c in cliques {
        if c.len() < k {
            continue;
        }
        for sub in subsets_of_size(c, k) {
            if seen.insert(sub.clone()) {
                k_cliques.push(sub);
            }
        }
    }
    if k_cliques.is_empty() {
        return Vec::new();
    }
    // union through (k-1)-subset buckets
    let mut uf = UnionFind::new(k_cliques.len());
    let mut bucket: HashMap<Vec<u32>, usize> = HashMap::new();
    for (idx, kc) in k_cliques.iter().enumerate() {
        for sub in subsets_of_size(kc, k - 1) {
            match bucket.get(&sub) {
                Some(&first) => uf.union(first, idx),
                None => {
                    bucket.insert(sub, idx);
                }
            }
        }
    }
    let mut by_root: HashMap<usize, HashSet<u32>> = HashMap::new();
    for (idx, kc) in k_cliques.iter().enumerate() {
        by_root.entry(uf.find(idx)).or_default().extend(kc.iter().copied());
    }
    let mut communities: Vec<Vec<u32>> = by_root
        .into_values()
        .map(|s| {
            let mut v: Vec<u32> = s.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect();
    communities.sort();
    communities
}

fn subsets_of_size(set: &[u32], k: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > set.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| set[i]).collect());
        // advance the combination
        let mut pos = k;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if idx[pos] != pos + set.len() - k {
                break;
            }
        }
        idx[pos] += 1;
        for i in pos + 1..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// How groups are read off the contact graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingMode {
    MaximalCliques,
    ThreeCliqueCommunities,
}

/// Index sets over individuals used by the grouped estimators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupStructure {
    pub groups: Vec<Vec<usize>>,
    pub overlapping: bool,
}

impl GroupStructure {
    pub fn new(groups: Vec<Vec<usize>>) -> Self {
        let overlapping = {
            let total: usize = groups.iter().map(Vec::len).sum();
            let distinct: HashSet<usize> = groups.iter().flatten().copied().collect();
            total != distinct.len()
        };
        GroupStructure { groups, overlapping }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for g in &self.groups {
            if g.is_empty() {
                return Err(Error::structural("empty group"));
            }
            if g.iter().any(|&i| i >= n) {
                return Err(Error::structural("group index outside population"));
            }
        }
        Ok(())
    }

    /// The set of individuals appearing in at least one group.
    pub fn covered(&self) -> HashSet<usize> {
        self.groups.iter().flatten().copied().collect()
    }

    pub fn singletons(n: usize) -> Self {
        GroupStructure { groups: (0..n).map(|i| vec![i]).collect(), overlapping: false }
    }
}

/// Derive decoder groups from a contact graph. Maximal-cliques mode labels
/// each maximal clique a group. Community mode labels each 3-clique
/// community a group and adds every maximal clique not already inside one,
/// so all contacts stay covered; isolated vertices become singletons either
/// way.
pub fn derive_groups(g: &UGraph, mode: GroupingMode) -> GroupStructure {
    let cliques = bron_kerbosch(g);
    let groups: Vec<Vec<u32>> = match mode {
        GroupingMode::MaximalCliques => cliques,
        GroupingMode::ThreeCliqueCommunities => {
            let communities = k_clique_communities(&cliques, 3);
            let mut groups = communities.clone();
            for c in cliques {
                let inside = communities
                    .iter()
                    .any(|comm| c.iter().all(|v| comm.binary_search(v).is_ok()));
                if !inside {
                    groups.push(c);
                }
            }
            groups.sort();
            groups
        }
    };
    GroupStructure::new(groups.into_iter().map(|g| g.into_iter().map(|v| v as usize).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn graph_from(n: usize, edges: &[(u32, u32)]) -> UGraph {
        let mut g = UGraph::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    /// Exhaustive maximal-clique enumeration over all vertex subsets.
    fn brute_force_cliques(g: &UGraph) -> Vec<Vec<u32>> {
        let n = g.n;
        assert!(n <= 20);
        let is_clique = |mask: u32| -> bool {
            let verts: Vec<u32> = (0..n as u32).filter(|v| mask >> v & 1 == 1).collect();
            verts.iter().enumerate().all(|(i, &a)| verts[i + 1..].iter().all(|&b| g.has_edge(a, b)))
        };
        let mut cliques = Vec::new();
        for mask in 1u32..(1 << n) {
            if !is_clique(mask) {
                continue;
            }
            let maximal = (0..n as u32).all(|v| {
                mask >> v & 1 == 1 || !is_clique(mask | 1 << v)
            });
            if maximal {
                let mut c: Vec<u32> = (0..n as u32).filter(|v| mask >> v & 1 == 1).collect();
                c.sort_unstable();
                cliques.push(c);
            }
        }
        cliques.sort();
        cliques
    }

    /// Brute-force k-clique percolation: enumerate every k-subset that is a
    /// clique, join pairs sharing k-1 vertices, BFS the components.
    fn brute_force_communities(g: &UGraph, k: usize) -> Vec<Vec<u32>> {
        let n = g.n;
        let mut k_cliques: Vec<Vec<u32>> = Vec::new();
        for mask in 1u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let verts: Vec<u32> = (0..n as u32).filter(|v| mask >> v & 1 == 1).collect();
            let clique = verts
                .iter()
                .enumerate()
                .all(|(i, &a)| verts[i + 1..].iter().all(|&b| g.has_edge(a, b)));
            if clique {
                k_cliques.push(verts);
            }
        }
        let m = k_cliques.len();
        let mut adj = vec![Vec::new(); m];
        for i in 0..m {
            for j in i + 1..m {
                let shared =
                    k_cliques[i].iter().filter(|v| k_cliques[j].contains(v)).count();
                if shared == k - 1 {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        let mut seen = vec![false; m];
        let mut communities = Vec::new();
        for start in 0..m {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut verts: HashSet<u32> = HashSet::new();
            seen[start] = true;
            while let Some(c) = stack.pop() {
                verts.extend(k_cliques[c].iter().copied());
                for &nb in &adj[c] {
                    if !seen[nb] {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                }
            }
            let mut v: Vec<u32> = verts.into_iter().collect();
            v.sort_unstable();
            communities.push(v);
        }
        communities.sort();
        communities
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> UGraph {
        let mut rng = crate::rng::SimRng::seed_from_u64(seed);
        let mut g = UGraph::new(n);
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                if rng.random::<f64>() < p {
                    g.add_edge(a, b);
                }
            }
        }
        g
    }

    #[test]
    fn triangle_is_one_clique() {
        let g = graph_from(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(bron_kerbosch(&g), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn path_gives_two_edges() {
        let g = graph_from(3, &[(0, 1), (1, 2)]);
        assert_eq!(bron_kerbosch(&g), vec![vec![0, 1], vec![1, 2]]);
    }

    #[test]
    fn isolated_vertices_become_singletons() {
        let g = graph_from(4, &[(0, 1)]);
        assert_eq!(bron_kerbosch(&g), vec![vec![0, 1], vec![2], vec![3]]);
    }

    #[test]
    fn bron_kerbosch_matches_brute_force() {
        for seed in 0..60 {
            let n = 6 + (seed as usize % 9);
            let p = 0.25 + 0.05 * (seed % 10) as f64;
            let g = random_graph(n, p, seed);
            assert_eq!(bron_kerbosch(&g), brute_force_cliques(&g), "seed {seed}");
        }
    }

    #[test]
    fn shared_edge_merges_triangles() {
        let g = graph_from(4, &[(0, 1), (1, 2), (0, 2), (1, 3), (2, 3)]);
        let comms = k_clique_communities(&bron_kerbosch(&g), 3);
        assert_eq!(comms, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn shared_vertex_keeps_triangles_apart() {
        let g = graph_from(5, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4)]);
        let comms = k_clique_communities(&bron_kerbosch(&g), 3);
        assert_eq!(comms, vec![vec![0, 1, 2], vec![2, 3, 4]]);
    }

    #[test]
    fn communities_match_brute_force() {
        for seed in 0..40 {
            let n = 7 + (seed as usize % 6);
            let g = random_graph(n, 0.5, 1000 + seed);
            let got = k_clique_communities(&bron_kerbosch(&g), 3);
            let want = brute_force_communities(&g, 3);
            assert_eq!(got, want, "seed {seed}");
        }
    }

    #[test]
    fn two_clique_communities_are_connected_components() {
        for seed in 0..20 {
            let g = random_graph(10, 0.2, 7000 + seed);
            let comms = k_clique_communities(&bron_kerbosch(&g), 2);
            let want = brute_force_communities(&g, 2);
            assert_eq!(comms, want, "seed {seed}");
        }
    }

    #[test]
    fn groups_from_disjoint_cliques_are_the_families() {
        let g = graph_from(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let gs = derive_groups(&g, GroupingMode::MaximalCliques);
        assert_eq!(gs.groups, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert!(!gs.overlapping);
    }

    #[test]
    fn cross_family_edge_becomes_a_group() {
        let g = graph_from(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]);
        let gs = derive_groups(&g, GroupingMode::MaximalCliques);
        assert!(gs.groups.contains(&vec![2, 3]));
        assert!(gs.overlapping);
    }

    #[test]
    fn community_mode_keeps_every_contact_covered() {
        // two triangles sharing an edge plus a dangling edge and an isolate
        let g = graph_from(7, &[(0, 1), (1, 2), (0, 2), (1, 3), (2, 3), (4, 5)]);
        let gs = derive_groups(&g, GroupingMode::ThreeCliqueCommunities);
        assert!(gs.groups.contains(&vec![0, 1, 2, 3]));
        assert!(gs.groups.contains(&vec![4, 5]));
        assert!(gs.groups.contains(&vec![6]));
        let covered = gs.covered();
        assert_eq!(covered.len(), 7);
    }
}
