use std::collections::{BTreeMap, HashMap};

use super::{ComponentDecl, ComponentGraph, GraphError, InstantiationPlan, ParamValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    String,
    Integer,
    /// Accepts integers as well; no other coercion.
    Float,
    Boolean,
    StringList,
}

impl ParamKind {
    fn describe(self) -> &'static str {
        match self {
            ParamKind::String => "a string",
            ParamKind::Integer => "an integer",
            ParamKind::Float => "a number",
            ParamKind::Boolean => "a boolean",
            ParamKind::StringList => "an array of strings",
        }
    }

    fn accepts(self, value: &ParamValue) -> bool {
        match (self, value) {
            (ParamKind::String, ParamValue::String(_)) => true,
            (ParamKind::Integer, ParamValue::Integer(_)) => true,
            (ParamKind::Float, ParamValue::Float(_) | ParamValue::Integer(_)) => true,
            (ParamKind::Boolean, ParamValue::Boolean(_)) => true,
            (ParamKind::StringList, ParamValue::List(items)) => {
                items.iter().all(|i| matches!(i, ParamValue::String(_)))
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub required: bool,
}

impl ParamSpec {
    pub const fn required(name: &'static str, kind: ParamKind) -> Self {
        ParamSpec {
            name,
            kind,
            required: true,
        }
    }

    pub const fn optional(name: &'static str, kind: ParamKind) -> Self {
        ParamSpec {
            name,
            kind,
            required: false,
        }
    }
}

/// A dependency slot: how many children of this role a class accepts.
#[derive(Debug, Clone, Copy)]
pub struct RoleSpec {
    pub name: &'static str,
    pub min: usize,
    pub max: usize,
}

impl RoleSpec {
    pub const fn new(name: &'static str, min: usize, max: usize) -> Self {
        RoleSpec { name, min, max }
    }
}

/// Type-checked parameter access for constructors.
#[derive(Debug, Clone, Copy)]
pub struct Params<'a> {
    decl: &'a ComponentDecl,
}

impl<'a> Params<'a> {
    pub fn id(&self) -> &'a str {
        &self.decl.id
    }

    pub fn get(&self, key: &str) -> Option<&'a ParamValue> {
        self.decl.params.get(key)
    }

    pub fn str(&self, key: &str) -> Option<&'a str> {
        match self.get(key) {
            Some(ParamValue::String(s)) => Some(s),
            _ => None,
        }
    }

    pub fn int(&self, key: &str) -> Option<i64> {
        match self.get(key) {
            Some(ParamValue::Integer(i)) => Some(*i),
            _ => None,
        }
    }

    pub fn float(&self, key: &str) -> Option<f64> {
        match self.get(key) {
            Some(ParamValue::Float(x)) => Some(*x),
            Some(ParamValue::Integer(i)) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn bool(&self, key: &str) -> Option<bool> {
        match self.get(key) {
            Some(ParamValue::Boolean(b)) => Some(*b),
            _ => None,
        }
    }

    pub fn strings(&self, key: &str) -> Option<Vec<String>> {
        match self.get(key) {
            Some(ParamValue::List(items)) => items
                .iter()
                .map(|i| match i {
                    ParamValue::String(s) => Some(s.clone()),
                    _ => None,
                })
                .collect(),
            _ => None,
        }
    }

    pub fn invalid(&self, message: impl Into<String>) -> GraphError {
        GraphError::Invalid {
            id: self.decl.id.clone(),
            message: message.into(),
        }
    }
}

/// What a constructor receives: its declaration, checked params, and built
/// dependencies in declaration order, tagged with their role.
pub struct BuildArgs<'a, T> {
    pub decl: &'a ComponentDecl,
    pub params: Params<'a>,
    pub deps: Vec<(String, T)>,
}

impl<T> BuildArgs<'_, T> {
    /// Removes and returns every dependency of `role`.
    pub fn take(&mut self, role: &str) -> Vec<T> {
        let (taken, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.deps).into_iter().partition(|(r, _)| r == role);
        self.deps = rest;
        taken.into_iter().map(|(_, t)| t).collect()
    }
}

type Constructor<T> = Box<dyn Fn(BuildArgs<'_, T>) -> Result<T, GraphError> + Send + Sync>;

pub struct ClassEntry<T> {
    pub params: Vec<ParamSpec>,
    pub roles: Vec<RoleSpec>,
    build: Constructor<T>,
}

/// Class name to constructor map with static parameter schemas.
pub struct Registry<T> {
    classes: HashMap<String, ClassEntry<T>>,
    unsupported: HashMap<String, String>,
}

impl<T> Default for Registry<T> {
    fn default() -> Self {
        Registry {
            classes: HashMap::new(),
            unsupported: HashMap::new(),
        }
    }
}

impl<T> Registry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, name: &str, params: Vec<ParamSpec>, roles: Vec<RoleSpec>, build: F) -> &mut Self
    where
        F: Fn(BuildArgs<'_, T>) -> Result<T, GraphError> + Send + Sync + 'static,
    {
        self.classes.insert(
            name.to_string(),
            ClassEntry {
                params,
                roles,
                build: Box::new(build),
            },
        );
        self
    }

    /// Marks a class name as recognized but rejected.
    pub fn reject(&mut self, name: &str, reason: &str) -> &mut Self {
        self.unsupported.insert(name.to_string(), reason.to_string());
        self
    }

    pub fn entry(&self, name: &str) -> Result<&ClassEntry<T>, GraphError> {
        if let Some(reason) = self.unsupported.get(name) {
            return Err(GraphError::UnsupportedClass {
                name: name.to_string(),
                reason: reason.clone(),
            });
        }
        self.classes
            .get(name)
            .ok_or_else(|| GraphError::UnknownClass(name.to_string()))
    }

    pub fn class_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.classes.keys().map(String::as_str).collect();
        names.sort_unstable();
        names
    }

    /// Checks a declaration against its class schema without building it.
    pub fn check(&self, decl: &ComponentDecl) -> Result<(), GraphError> {
        let entry = self.entry(&decl.class_name)?;
        for (key, value) in &decl.params {
            let spec = entry
                .params
                .iter()
                .find(|p| p.name == key)
                .ok_or_else(|| GraphError::ExtraParam {
                    id: decl.id.clone(),
                    key: key.clone(),
                })?;
            if !spec.kind.accepts(value) {
                return Err(GraphError::ParamTypeError {
                    id: decl.id.clone(),
                    key: key.clone(),
                    expected: spec.kind.describe().to_string(),
                });
            }
        }
        for spec in entry.params.iter().filter(|p| p.required) {
            if !decl.params.contains_key(spec.name) {
                return Err(GraphError::MissingParam {
                    id: decl.id.clone(),
                    key: spec.name.to_string(),
                });
            }
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for dep in &decl.deps {
            if !entry.roles.iter().any(|r| r.name == dep.role) {
                return Err(GraphError::ExtraParam {
                    id: decl.id.clone(),
                    key: dep.role.clone(),
                });
            }
            *counts.entry(dep.role.as_str()).or_default() += 1;
        }
        for role in &entry.roles {
            let n = counts.get(role.name).copied().unwrap_or(0);
            if n < role.min {
                return Err(GraphError::MissingParam {
                    id: decl.id.clone(),
                    key: role.name.to_string(),
                });
            }
            if n > role.max {
                return Err(GraphError::Invalid {
                    id: decl.id.clone(),
                    message: format!("at most {} `{}` allowed, found {n}", role.max, role.name),
                });
            }
        }
        Ok(())
    }
}

/// Root instances keyed by component id.
#[derive(Debug)]
pub struct Instances<T> {
    pub roots: BTreeMap<String, T>,
}

impl<T> Instances<T> {
    pub fn take(&mut self, id: &str) -> Option<T> {
        self.roots.remove(id)
    }
}

/// Builds every node in plan order, handing each constructor its already
/// built dependencies. Declarations must match their schemas exactly.
pub fn instantiate<T>(
    graph: &ComponentGraph,
    plan: &InstantiationPlan,
    registry: &Registry<T>,
) -> Result<Instances<T>, GraphError> {
    for id in &plan.order {
        let decl = graph.node(id).ok_or_else(|| GraphError::DanglingReference {
            from: "plan".into(),
            to: id.clone(),
        })?;
        registry.check(decl)?;
    }
    let mut built: BTreeMap<String, T> = BTreeMap::new();
    for id in &plan.order {
        let decl = graph.node(id).expect("checked above");
        let entry = registry.entry(&decl.class_name)?;
        let mut deps = Vec::with_capacity(decl.deps.len());
        for dep in &decl.deps {
            let inst = built.remove(&dep.id).ok_or_else(|| GraphError::DanglingReference {
                from: decl.id.clone(),
                to: dep.id.clone(),
            })?;
            deps.push((dep.role.clone(), inst));
        }
        let value = (entry.build)(BuildArgs {
            decl,
            params: Params { decl },
            deps,
        })?;
        built.insert(decl.id.clone(), value);
    }
    Ok(Instances { roots: built })
}
