//! Parameters, return values, call arguments and call outputs of a function.

use serde::{Deserialize, Serialize};
use tree_sitter::Node;

use super::cfg::Cfg;
use super::tree::{line_of, FunctionInfo, SyntaxTree};
use super::{Role, ValueRef};

/// A call expression inside a function body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub callee: String,
    pub line: usize,
    /// Argument expression texts in positional order.
    pub args: Vec<String>,
    /// Variable receiving the call's result, if any.
    pub receiver: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSite {
    pub value: ValueRef,
    pub callee: String,
    pub index: usize,
    pub arg_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutSite {
    pub value: ValueRef,
    pub callee: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetSite {
    pub value: ValueRef,
    pub expr: String,
}

/// `V_par`, `V_ret`, `V_arg` and `V_out` of one function, each ordered by
/// line and then identifier.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceValues {
    pub v_par: Vec<ValueRef>,
    pub v_ret: Vec<ValueRef>,
    pub v_arg: Vec<ValueRef>,
    pub v_out: Vec<ValueRef>,
    pub arg_sites: Vec<ArgSite>,
    pub out_sites: Vec<OutSite>,
    pub ret_sites: Vec<RetSite>,
    pub calls: Vec<CallSite>,
}

impl InterfaceValues {
    pub fn is_empty(&self) -> bool {
        self.v_par.is_empty() && self.v_ret.is_empty() && self.v_arg.is_empty() && self.v_out.is_empty()
    }
}

/// Collects the interface values of `func`. `cfg` must be the graph built
/// for `func`; return values are taken from its reachable return nodes.
pub fn interface_values(func: &FunctionInfo, cfg: &Cfg, tree: &SyntaxTree) -> InterfaceValues {
    let mut iv = InterfaceValues::default();
    for p in &func.params {
        iv.v_par.push(ValueRef::new(&func.unit, p.line, &p.name, Role::Param));
    }
    let Some(decl) = tree.function_node(func) else {
        return iv;
    };
    let Some(body) = decl.child_by_field_name("body") else {
        finish(&mut iv);
        return iv;
    };
    let return_lines: Vec<usize> = cfg
        .nodes
        .iter()
        .filter(|n| n.returned.is_some())
        .map(|n| n.line)
        .collect();
    let mut walker = Walker { tree, func, iv: &mut iv, return_lines: &return_lines };
    walker.visit(body);
    finish(&mut iv);
    iv
}

fn finish(iv: &mut InterfaceValues) {
    for set in [&mut iv.v_par, &mut iv.v_ret, &mut iv.v_arg, &mut iv.v_out] {
        set.sort_by(|a, b| (a.line, &a.identifier).cmp(&(b.line, &b.identifier)));
        set.dedup_by(|a, b| a.key() == b.key());
    }
    iv.arg_sites.sort_by(|a, b| (a.value.line, &a.callee, a.index, &a.value.identifier).cmp(&(b.value.line, &b.callee, b.index, &b.value.identifier)));
    iv.arg_sites.dedup();
    iv.out_sites.sort_by(|a, b| (a.value.line, &a.value.identifier).cmp(&(b.value.line, &b.value.identifier)));
    iv.out_sites.dedup();
    iv.ret_sites.sort_by(|a, b| (a.value.line, &a.value.identifier).cmp(&(b.value.line, &b.value.identifier)));
    iv.ret_sites.dedup();
    iv.calls.sort_by(|a, b| (a.line, &a.callee).cmp(&(b.line, &b.callee)));
}

struct Walker<'a, 't> {
    tree: &'t SyntaxTree,
    func: &'a FunctionInfo,
    iv: &'a mut InterfaceValues,
    return_lines: &'a [usize],
}

fn unwrap_expr(node: Node<'_>) -> Node<'_> {
    let mut node = node;
    loop {
        match node.kind() {
            "parenthesized_expression" => match node.named_child(0) {
                Some(n) => node = n,
                None => return node,
            },
            "cast_expression" => match node.child_by_field_name("value") {
                Some(n) => node = n,
                None => return node,
            },
            _ => return node,
        }
    }
}

fn is_call(node: Node<'_>) -> bool {
    matches!(node.kind(), "method_invocation" | "object_creation_expression")
}

impl Walker<'_, '_> {
    fn text(&self, node: Node<'_>) -> String {
        self.tree.node_text(node).split_whitespace().collect::<Vec<_>>().join(" ")
    }

    fn visit(&mut self, node: Node<'_>) {
        match node.kind() {
            "method_invocation" | "object_creation_expression" => self.call(node, None),
            "variable_declarator" => {
                if let (Some(name), Some(value)) = (node.child_by_field_name("name"), node.child_by_field_name("value")) {
                    let inner = unwrap_expr(value);
                    if is_call(inner) {
                        let receiver = self.text(name);
                        self.call(inner, Some((receiver, line_of(name))));
                        return self.visit_except(node, inner);
                    }
                }
            }
            "assignment_expression" => {
                if let (Some(left), Some(right)) = (node.child_by_field_name("left"), node.child_by_field_name("right")) {
                    let inner = unwrap_expr(right);
                    if left.kind() == "identifier" && is_call(inner) {
                        let receiver = self.text(left);
                        self.call(inner, Some((receiver, line_of(left))));
                        return self.visit_except(node, inner);
                    }
                }
            }
            "return_statement" => {
                if self.return_lines.contains(&line_of(node)) {
                    let first = node.named_child(0);
                    if let Some(expr) = first {
                        let expr_text = self.text(expr);
                        for id in variable_identifiers(self.tree, expr) {
                            let value = ValueRef::new(&self.func.unit, line_of(id), self.text(id), Role::Ret);
                            self.iv.ret_sites.push(RetSite { value: value.clone(), expr: expr_text.clone() });
                            self.iv.v_ret.push(value);
                        }
                    }
                }
            }
            "lambda_expression" | "class_body" => return,
            _ => {}
        }
        let mut cursor = node.walk();
        let children: Vec<Node<'_>> = node.named_children(&mut cursor).collect();
        for child in children {
            self.visit(child);
        }
    }

    fn visit_except(&mut self, node: Node<'_>, skip: Node<'_>) {
        let mut cursor = node.walk();
        let children: Vec<Node<'_>> = node.named_children(&mut cursor).collect();
        for child in children {
            if child.id() == skip.id() {
                // the call itself was handled; descend into its pieces only
                let mut c2 = child.walk();
                let inner: Vec<Node<'_>> = child.named_children(&mut c2).collect();
                for n in inner {
                    self.visit(n);
                }
            } else if unwrap_expr(child).id() == skip.id() {
                self.visit_except(child, skip);
            } else {
                self.visit(child);
            }
        }
    }

    fn call(&mut self, node: Node<'_>, receiver: Option<(String, usize)>) {
        let callee = match node.kind() {
            "method_invocation" => node.child_by_field_name("name").map(|n| self.text(n)),
            _ => node.child_by_field_name("type").map(|n| {
                let t = self.text(n);
                t.split('<').next().unwrap_or(&t).rsplit('.').next().unwrap_or(&t).to_string()
            }),
        };
        let Some(callee) = callee else { return };
        let line = line_of(node.child_by_field_name("arguments").unwrap_or(node));
        let mut args = Vec::new();
        if let Some(list) = node.child_by_field_name("arguments") {
            let mut cursor = list.walk();
            let items: Vec<Node<'_>> = list.named_children(&mut cursor).filter(|n| !n.is_extra()).collect();
            for (index, arg) in items.into_iter().enumerate() {
                let arg_text = self.text(arg);
                for id in variable_identifiers(self.tree, arg) {
                    let value = ValueRef::new(&self.func.unit, line_of(id), self.text(id), Role::Arg);
                    self.iv.arg_sites.push(ArgSite {
                        value: value.clone(),
                        callee: callee.clone(),
                        index,
                        arg_text: arg_text.clone(),
                    });
                    self.iv.v_arg.push(value);
                }
                args.push(arg_text);
            }
        }
        if let Some((name, rline)) = &receiver {
            let value = ValueRef::new(&self.func.unit, *rline, name, Role::Out);
            self.iv.out_sites.push(OutSite { value: value.clone(), callee: callee.clone() });
            self.iv.v_out.push(value);
        }
        self.iv.calls.push(CallSite { callee, line, args, receiver: receiver.map(|r| r.0) });
    }
}

/// Identifiers in `expr` that denote variables: method names, field names
/// after a dot and capitalized class qualifiers are skipped.
pub(crate) fn variable_identifiers<'t>(tree: &SyntaxTree, expr: Node<'t>) -> Vec<Node<'t>> {
    let mut out = Vec::new();
    collect_vars(tree, expr, &mut out);
    out
}

fn collect_vars<'t>(tree: &SyntaxTree, node: Node<'t>, out: &mut Vec<Node<'t>>) {
    match node.kind() {
        "identifier" => {
            if is_variable_use(tree, node) {
                out.push(node);
            }
        }
        "lambda_expression" | "class_body" => {}
        _ => {
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                collect_vars(tree, child, out);
            }
        }
    }
}

pub(crate) fn is_variable_use(tree: &SyntaxTree, node: Node<'_>) -> bool {
    let Some(parent) = node.parent() else { return true };
    let is_field = |name: &str| parent.child_by_field_name(name).map(|n| n.id()) == Some(node.id());
    match parent.kind() {
        "method_invocation" if is_field("name") => false,
        "method_invocation" | "field_access" if is_field("object") => {
            !tree.node_text(node).starts_with(|c: char| c.is_ascii_uppercase())
        }
        "field_access" if is_field("field") => false,
        "method_reference" | "scoped_identifier" | "labeled_statement" | "break_statement" | "continue_statement" => false,
        _ => true,
    }
}
