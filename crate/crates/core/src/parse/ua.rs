//! User-action parse trees: `Root(UA)` with action type, element and input
//! terms. Element and input are omitted when absent.

use super::{ParseError, ParseTree, Role, TreeNode, TreeTag};

pub fn parse_user_action(
    action_type: &str,
    element: Option<&str>,
    input: Option<&str>,
) -> Result<ParseTree, ParseError> {
    if action_type.trim().is_empty() {
        return Err(ParseError::Validation(
            "user action without action type".into(),
        ));
    }
    let mut children = vec![TreeNode::term(Role::ActionType, action_type)];
    if let Some(e) = element {
        children.push(TreeNode::term(Role::Element, e));
    }
    if let Some(i) = input {
        children.push(TreeNode::term(Role::Input, i));
    }
    Ok(ParseTree::new(TreeTag::Ua, children))
}
