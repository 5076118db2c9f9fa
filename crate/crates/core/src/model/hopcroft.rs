//! Hopcroft partition refinement for partial DFAs.

use std::collections::{BTreeMap, HashSet};

/// Equivalence classes of a partial DFA's states. `delta[s]` maps letters to
/// successor states; missing letters lead to an implicit rejecting sink.
/// Classes are numbered in order of their smallest member.
pub fn minimize(delta: &[BTreeMap<usize, usize>], accepting: &[bool]) -> Vec<usize> {
    let n = delta.len();
    assert_eq!(accepting.len(), n, "one acceptance flag per state");
    if n == 0 {
        return Vec::new();
    }
    let sink = n;
    let letters: Vec<usize> = {
        let mut all: Vec<usize> = delta.iter().flat_map(|m| m.keys().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    let step = |s: usize, c: usize| {
        if s == sink {
            sink
        } else {
            delta[s].get(&c).copied().unwrap_or(sink)
        }
    };
    // inverse[c][t] = states reaching t on letter c
    let mut inverse: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n + 1]; letters.len()];
    for (ci, &c) in letters.iter().enumerate() {
        for s in 0..=n {
            inverse[ci][step(s, c)].push(s);
        }
    }

    let (acc, rej): (Vec<usize>, Vec<usize>) = (0..=n).partition(|&s| s != sink && accepting[s]);
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut class = vec![0usize; n + 1];
    for block in [acc, rej] {
        if !block.is_empty() {
            for &s in &block {
                class[s] = blocks.len();
            }
            blocks.push(block);
        }
    }
    let mut work: Vec<(usize, usize)> = Vec::new();
    let mut queued: HashSet<(usize, usize)> = HashSet::new();
    if blocks.len() == 2 {
        let smaller = if blocks[0].len() <= blocks[1].len() {
            0
        } else {
            1
        };
        for ci in 0..letters.len() {
            work.push((smaller, ci));
            queued.insert((smaller, ci));
        }
    }

    while let Some((splitter, ci)) = work.pop() {
        queued.remove(&(splitter, ci));
        let mut hits: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &t in &blocks[splitter] {
            for &s in &inverse[ci][t] {
                hits.entry(class[s]).or_default().push(s);
            }
        }
        for (b, inside) in hits {
            if inside.len() == blocks[b].len() {
                continue;
            }
            let inside_set: HashSet<usize> = inside.iter().copied().collect();
            let outside: Vec<usize> = blocks[b]
                .iter()
                .copied()
                .filter(|s| !inside_set.contains(s))
                .collect();
            let new_id = blocks.len();
            // the larger part keeps the old id
            let (keep, moved) = if inside.len() > outside.len() {
                (inside, outside)
            } else {
                (outside, inside)
            };
            for &s in &moved {
                class[s] = new_id;
            }
            blocks[b] = keep;
            blocks.push(moved);
            for cj in 0..letters.len() {
                if queued.contains(&(b, cj)) {
                    work.push((new_id, cj));
                    queued.insert((new_id, cj));
                } else {
                    let smaller = if blocks[b].len() <= blocks[new_id].len() {
                        b
                    } else {
                        new_id
                    };
                    work.push((smaller, cj));
                    queued.insert((smaller, cj));
                }
            }
        }
    }

    let mut renumber: BTreeMap<usize, usize> = BTreeMap::new();
    (0..n)
        .map(|s| {
            let next = renumber.len();
            *renumber.entry(class[s]).or_insert(next)
        })
        .collect()
}
