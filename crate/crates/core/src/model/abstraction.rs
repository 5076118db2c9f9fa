use std::collections::HashMap;

use super::{abstract_roots, roots_of_type, Result};
use crate::graph::{Graph, Props};
use crate::labels::*;
use crate::parse::sql::mutates;
use crate::parse::{load_tree, store_tree, AbstractionConfig};

/// Stores one abstract tree per distinct abstract fingerprint and links it to
/// every concrete HTTP/SQL root it abstracts. Returns the number of abstract
/// roots created by this call.
pub fn build_abstractions(graph: &mut Graph, config: &AbstractionConfig) -> Result<usize> {
    let mut by_fp: HashMap<String, _> = abstract_roots(graph)
        .filter_map(|r| Some((graph.str_prop(r, P_FINGERPRINT)?.to_owned(), r)))
        .collect();
    let concrete: Vec<_> = roots_of_type(graph, T_HTTP)
        .chain(roots_of_type(graph, T_SQL))
        .collect();
    let mut created = 0;
    for root in concrete {
        if graph.in_degree(root, ABSTRACTS)? > 0 {
            continue;
        }
        let (tree, _) = load_tree(graph, root)?;
        let abs = tree.abstract_tree(config)?;
        let fp = abs.fingerprint();
        let abs_root = match by_fp.get(&fp) {
            Some(r) => *r,
            None => {
                let mut extra = Props::new();
                if abs.tag.as_str() == T_ABS_SQL {
                    extra.insert(P_MUTATES.into(), mutates(&abs).into());
                }
                let r = store_tree(graph, &abs, extra)?;
                by_fp.insert(fp, r);
                created += 1;
                r
            }
        };
        graph.add_edge(abs_root, root, ABSTRACTS, Props::new())?;
    }
    Ok(created)
}
