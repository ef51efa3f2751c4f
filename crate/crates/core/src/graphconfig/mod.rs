//! Experiment files compiled into a component DAG.
//!
//! Every table carrying a `class` key becomes a [`ComponentDecl`]. Tables
//! nested under it (and arrays of tables) become its dependencies, scalar
//! keys become parameters. The graph is validated, ordered with Kahn's
//! algorithm, and instantiated against a [`Registry`].

pub mod dialect;
mod registry;

use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::cmp::Reverse;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use self::dialect::{Table, Value};
pub use self::registry::{
    instantiate, BuildArgs, ClassEntry, Instances, ParamKind, ParamSpec, Params, Registry, RoleSpec,
};

/// Top-level sections every experiment file must define.
pub const SECTIONS: [&str; 3] = ["dataset", "model", "engine"];

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("unknown top-level section `{0}` (expected dataset, model, engine)")]
    UnknownSection(String),
    #[error("table [{0}] has no `class` key")]
    MissingClassKey(String),
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("dangling reference from `{from}` to missing `{to}`")]
    DanglingReference { from: String, to: String },
    #[error("duplicate component id `{0}`")]
    DuplicateId(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class `{name}` is not supported: {reason}")]
    UnsupportedClass { name: String, reason: String },
    #[error("`{id}`: parameter `{key}` must be {expected}")]
    ParamTypeError { id: String, key: String, expected: String },
    #[error("`{id}`: missing required parameter `{key}`")]
    MissingParam { id: String, key: String },
    #[error("`{id}`: unexpected parameter `{key}`")]
    ExtraParam { id: String, key: String },
    #[error("`{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<dialect::SyntaxError> for GraphError {
    fn from(e: dialect::SyntaxError) -> Self {
        GraphError::Syntax {
            line: e.line,
            message: e.message,
        }
    }
}

/// A parameter value bound in the experiment file.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    String(String),
    Integer(i64),
    Float(f64),
    Boolean(bool),
    List(Vec<ParamValue>),
}

impl ParamValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ParamValue::String(_) => "string",
            ParamValue::Integer(_) => "integer",
            ParamValue::Float(_) => "float",
            ParamValue::Boolean(_) => "boolean",
            ParamValue::List(_) => "array",
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::String(s) => write!(f, "{s:?}"),
            ParamValue::Integer(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x:?}"),
            ParamValue::Boolean(b) => write!(f, "{b}"),
            ParamValue::List(items) => {
                write!(f, "[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// A dependency edge from a parent's point of view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dependency {
    pub role: String,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDecl {
    pub id: String,
    pub class_name: String,
    pub params: BTreeMap<String, ParamValue>,
    pub deps: Vec<Dependency>,
}

impl ComponentDecl {
    pub fn new(id: impl Into<String>, class_name: impl Into<String>) -> Self {
        ComponentDecl {
            id: id.into(),
            class_name: class_name.into(),
            params: BTreeMap::new(),
            deps: Vec::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: ParamValue) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_dep(mut self, role: &str, id: &str) -> Self {
        self.deps.push(Dependency {
            role: role.to_string(),
            id: id.to_string(),
        });
        self
    }
}

/// Component declarations plus `dependency -> dependent` edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGraph {
    nodes: Vec<ComponentDecl>,
    edges: Vec<(String, String)>,
}

/// Node ids in instantiation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstantiationPlan {
    pub order: Vec<String>,
}

impl ComponentGraph {
    /// Builds a graph from declarations; edges are derived from each
    /// declaration's dependency list. No validation is performed.
    pub fn from_decls(nodes: Vec<ComponentDecl>) -> Self {
        let edges = nodes
            .iter()
            .flat_map(|n| n.deps.iter().map(move |d| (d.id.clone(), n.id.clone())))
            .collect();
        ComponentGraph { nodes, edges }
    }

    pub fn nodes(&self) -> &[ComponentDecl] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&ComponentDecl> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Section roots (`dataset`, `model`, `engine`) that are present.
    pub fn roots(&self) -> Vec<&ComponentDecl> {
        let dependents: HashSet<&str> = self.edges.iter().map(|(d, _)| d.as_str()).collect();
        self.nodes.iter().filter(|n| !dependents.contains(n.id.as_str())).collect()
    }
}

pub fn parse_experiment(path: impl AsRef<Path>) -> Result<ComponentGraph, GraphError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_experiment_str(&text)
}

pub fn parse_experiment_str(text: &str) -> Result<ComponentGraph, GraphError> {
    let doc = dialect::parse(text)?;
    for (key, value) in &doc.entries {
        match value {
            Value::Table(_) if SECTIONS.contains(&key.as_str()) => {}
            _ => return Err(GraphError::UnknownSection(key.clone())),
        }
    }
    let mut nodes = Vec::new();
    for section in SECTIONS {
        match doc.get(section) {
            Some(Value::Table(t)) => collect(section, t, &mut nodes)?,
            _ => return Err(GraphError::MissingSection(section.to_string())),
        }
    }
    let graph = ComponentGraph::from_decls(nodes);
    validate_graph(&graph)?;
    Ok(graph)
}

fn collect(id: &str, table: &Table, out: &mut Vec<ComponentDecl>) -> Result<(), GraphError> {
    let class_name = match table.get("class") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        _ => return Err(GraphError::MissingClassKey(id.to_string())),
    };
    let mut decl = ComponentDecl::new(id, class_name);
    let mut children = Vec::new();
    for (key, value) in &table.entries {
        if key == "class" {
            continue;
        }
        match value {
            Value::Table(t) => {
                let child = format!("{id}.{key}");
                decl = decl.with_dep(key, &child);
                children.push((child, t));
            }
            Value::TableArray(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    let child = format!("{id}.{key}[{i}]");
                    decl = decl.with_dep(key, &child);
                    children.push((child, t));
                }
            }
            scalar => {
                let param = to_param(scalar).ok_or_else(|| GraphError::Syntax {
                    line: table.line,
                    message: format!("unsupported value for `{id}.{key}`"),
                })?;
                decl.params.insert(key.clone(), param);
            }
        }
    }
    out.push(decl);
    for (child, t) in children {
        collect(&child, t, out)?;
    }
    Ok(())
}

fn to_param(value: &Value) -> Option<ParamValue> {
    Some(match value {
        Value::String(s) => ParamValue::String(s.clone()),
        Value::Integer(i) => ParamValue::Integer(*i),
        Value::Float(x) => ParamValue::Float(*x),
        Value::Boolean(b) => ParamValue::Boolean(*b),
        Value::Array(items) => ParamValue::List(items.iter().map(to_param).collect::<Option<_>>()?),
        Value::Table(_) | Value::TableArray(_) => return None,
    })
}

/// Checks for duplicate ids, dangling references and cycles.
pub fn validate_graph(graph: &ComponentGraph) -> Result<(), GraphError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        if index.insert(n.id.as_str(), i).is_some() {
            return Err(GraphError::DuplicateId(n.id.clone()));
        }
    }
    for (dep, dependent) in &graph.edges {
        for (from, to) in [(dependent, dep), (dep, dependent)] {
            if !index.contains_key(to.as_str()) {
                return Err(GraphError::DanglingReference {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
        }
    }

    // DFS with white/grey/black colors over dependency links.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for (dep, dependent) in &graph.edges {
        adj[index[dependent.as_str()]].push(index[dep.as_str()]);
    }
    for list in &mut adj {
        list.sort_by(|&a, &b| graph.nodes[a].id.cmp(&graph.nodes[b].id));
    }
    let mut starts: Vec<usize> = (0..graph.nodes.len()).collect();
    starts.sort_by(|&a, &b| graph.nodes[a].id.cmp(&graph.nodes[b].id));

    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Grey,
        Black,
    }
    let mut color = vec![Color::White; graph.nodes.len()];
    for start in starts {
        if color[start] != Color::White {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        color[start] = Color::Grey;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&succ) = adj[node].get(*next) {
                *next += 1;
                match color[succ] {
                    Color::White => {
                        color[succ] = Color::Grey;
                        stack.push((succ, 0));
                    }
                    Color::Grey => {
                        let pos = stack.iter().position(|&(n, _)| n == succ).expect("grey node is on the stack");
                        let mut cycle: Vec<String> =
                            stack[pos..].iter().map(|&(n, _)| graph.nodes[n].id.clone()).collect();
                        let min = (0..cycle.len()).min_by_key(|&i| &cycle[i]).unwrap_or(0);
                        cycle.rotate_left(min);
                        return Err(GraphError::CycleDetected(cycle));
                    }
                    Color::Black => {}
                }
            } else {
                color[node] = Color::Black;
                stack.pop();
            }
        }
    }
    Ok(())
}

/// Kahn's algorithm; among ready nodes the lexicographically smallest id
/// goes first.
pub fn topo_order(graph: &ComponentGraph) -> Result<InstantiationPlan, GraphError> {
    let mut indegree: BTreeMap<&str, usize> = graph.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
    let mut dependents: HashMap<&str, Vec<&str>> = HashMap::new();
    for (dep, dependent) in &graph.edges {
        match indegree.get_mut(dependent.as_str()) {
            Some(d) => *d += 1,
            None => {
                return Err(GraphError::DanglingReference {
                    from: dep.clone(),
                    to: dependent.clone(),
                })
            }
        }
        dependents.entry(dep.as_str()).or_default().push(dependent.as_str());
    }
    let mut ready: BinaryHeap<Reverse<&str>> =
        indegree.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| Reverse(id)).collect();
    let mut order = Vec::with_capacity(graph.nodes.len());
    while let Some(Reverse(id)) = ready.pop() {
        order.push(id.to_string());
        for &next in dependents.get(id).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indegree.get_mut(next).expect("checked above");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(next));
            }
        }
    }
    if order.len() != graph.nodes.len() {
        let placed: HashSet<&str> = order.iter().map(String::as_str).collect();
        let stuck = indegree.keys().filter(|id| !placed.contains(*id)).map(|s| s.to_string()).collect();
        return Err(GraphError::CycleDetected(stuck));
    }
    Ok(InstantiationPlan { order })
}
