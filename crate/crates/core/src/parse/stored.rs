//! Parse trees as `Root`/`NTerm`/`Term` nodes joined by ordered `child` edges.

use crate::graph::{props, Graph, GraphError, NodeId, Props, Value};
use crate::labels::*;

use super::{NodeKind, ParseTree, Role, TreeNode, TreeTag};

/// Stores `tree` and returns the id of its root. The root carries the tree
/// type, its fingerprint and `extra`; every node carries symbol and role.
pub fn store_tree(graph: &mut Graph, tree: &ParseTree, extra: Props) -> Result<NodeId, GraphError> {
    let mut root_props = extra;
    root_props.insert(P_TYPE.into(), tree.tag.as_str().into());
    root_props.insert(P_FINGERPRINT.into(), tree.fingerprint().into());
    store_node(graph, &tree.root, root_props)
}

fn store_node(
    graph: &mut Graph,
    node: &TreeNode,
    mut node_props: Props,
) -> Result<NodeId, GraphError> {
    node_props.insert(P_SYMBOL.into(), node.symbol.as_str().into());
    node_props.insert(P_ROLE.into(), node.role.as_str().into());
    if node.role == Role::Boundary {
        node_props.insert("boundary".into(), true.into());
    }
    let id = graph.add_node([node.kind.label()], node_props)?;
    for (i, child) in node.children.iter().enumerate() {
        let child_id = store_node(graph, child, Props::new())?;
        graph.add_edge(id, child_id, CHILD, props([(P_IDX, i as i64)]))?;
    }
    Ok(id)
}

/// Reads back the tree rooted at `root`, with node ids in pre-order.
pub fn load_tree(graph: &Graph, root: NodeId) -> Result<(ParseTree, Vec<NodeId>), GraphError> {
    let tag: TreeTag = graph
        .str_prop(root, P_TYPE)
        .ok_or_else(|| GraphError::Validation(format!("{root} is not a parse-tree root")))?
        .parse()
        .map_err(|e: super::ParseError| GraphError::Validation(e.to_string()))?;
    let mut ids = Vec::new();
    let node = load_node(graph, root, &mut ids)?;
    if node.kind != NodeKind::Root {
        return Err(GraphError::Validation(format!("{root} is not a Root node")));
    }
    Ok((ParseTree { tag, root: node }, ids))
}

fn load_node(graph: &Graph, id: NodeId, ids: &mut Vec<NodeId>) -> Result<TreeNode, GraphError> {
    let n = graph.try_node(id)?;
    let kind = if n.has_label(ROOT) {
        NodeKind::Root
    } else if n.has_label(NTERM) {
        NodeKind::NTerm
    } else if n.has_label(TERM) {
        NodeKind::Term
    } else {
        return Err(GraphError::Validation(format!(
            "{id} is not a parse-tree node"
        )));
    };
    let role: Role = n
        .str_prop(P_ROLE)
        .unwrap_or("root")
        .parse()
        .map_err(|e: super::ParseError| GraphError::Validation(e.to_string()))?;
    let symbol = n.str_prop(P_SYMBOL).unwrap_or_default().to_owned();
    ids.push(id);
    let mut edges: Vec<(i64, NodeId)> = graph
        .out_edges(id)
        .filter(|e| e.label == CHILD)
        .map(|e| {
            (
                e.props.get(P_IDX).and_then(Value::as_int).unwrap_or(0),
                e.dst,
            )
        })
        .collect();
    edges.sort();
    let children = edges
        .into_iter()
        .map(|(_, c)| load_node(graph, c, ids))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TreeNode {
        kind,
        role,
        symbol,
        children,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_http_request, HttpRequestRaw};

    #[test]
    fn stored_tree_reads_back_identically() {
        let raw = HttpRequestRaw::new("POST", "/change_pwd.php?x=1")
            .header("Cookie", "SESSION=X4a")
            .form_body("password=pwnd");
        let tree = parse_http_request(&raw).unwrap();
        let mut g = Graph::new();
        let root = store_tree(&mut g, &tree, props([(P_SESSION, 1i64)])).unwrap();
        assert_eq!(g.node_count(), tree.node_count());
        assert_eq!(g.int_prop(root, P_SESSION), Some(1));
        assert_eq!(
            g.str_prop(root, P_FINGERPRINT),
            Some(tree.fingerprint().as_str())
        );
        let (back, ids) = load_tree(&g, root).unwrap();
        assert_eq!(back, tree);
        assert_eq!(ids.len(), tree.node_count());
        assert_eq!(ids[0], root);
    }
}
