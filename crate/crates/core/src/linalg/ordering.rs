//! Minimum-degree fill-reducing ordering.

use std::collections::{BTreeSet, HashMap};

use super::CsrMatrix;

/// Minimum-degree ordering of the symmetrized pattern of `a` (A + Aᵀ).
///
/// Rows with identical closed neighbourhoods (for instance the components of a
/// vector field at one node) are merged into weighted supervariables first and
/// eliminated together. Ties in degree go to the lowest index, so the result is
/// deterministic. Returns `perm` with `perm[k]` = the k-th eliminated row.
pub fn minimum_degree(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let at = a.transpose();
    // closed neighbourhoods in A + A^T
    let mut closed: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut s: Vec<usize> = a.row(i).0.iter().chain(at.row(i).0).copied().collect();
            s.push(i);
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();

    // supervariables: identical closed neighbourhoods
    let mut rep_of = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    {
        let mut seen: HashMap<&[usize], usize> = HashMap::new();
        for i in 0..n {
            let key: &[usize] = &closed[i];
            match seen.get(key) {
                Some(&s) => {
                    rep_of[i] = s;
                    members[s].push(i);
                }
                None => {
                    let s = members.len();
                    seen.insert(key, s);
                    rep_of[i] = s;
                    members.push(vec![i]);
                }
            }
        }
    }
    let ns = members.len();
    let weight: Vec<usize> = members.iter().map(|m| m.len()).collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); ns];
    for s in 0..ns {
        let i = members[s][0];
        let mut v: Vec<usize> = closed[i].iter().map(|&j| rep_of[j]).filter(|&t| t != s).collect();
        v.sort_unstable();
        v.dedup();
        adj[s] = v;
    }
    for c in closed.iter_mut() {
        *c = Vec::new();
    }

    let degree = |adj: &Vec<Vec<usize>>, s: usize| -> usize { adj[s].iter().map(|&t| weight[t]).sum() };
    let mut deg: Vec<usize> = (0..ns).map(|s| degree(&adj, s)).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..ns).map(|s| (deg[s], s)).collect();
    let mut eliminated = vec![false; ns];
    let mut perm = Vec::with_capacity(n);
    let mut merged = Vec::new();

    while let Some((_, p)) = queue.pop_first() {
        eliminated[p] = true;
        perm.extend_from_slice(&members[p]);
        let nbrs = std::mem::take(&mut adj[p]);
        for &u in &nbrs {
            // adj[u] := (adj[u] ∪ nbrs) \ {u, p}
            merged.clear();
            let (a1, a2) = (&adj[u], &nbrs);
            let (mut i, mut j) = (0, 0);
            while i < a1.len() || j < a2.len() {
                let next = match (a1.get(i), a2.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        j += 1;
                        y
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != p && !eliminated[next] {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            let d = degree(&adj, u);
            if d != deg[u] {
                queue.remove(&(deg[u], u));
                deg[u] = d;
                queue.insert((d, u));
            }
        }
    }
    perm
}
