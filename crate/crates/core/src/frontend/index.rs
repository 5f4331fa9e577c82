//! Project-wide index: every parsed type and method, with call sites resolved.

use super::ast::*;
use super::parser::parse_file;
use crate::config::LanguageConfig;
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Call node id, resolved callee, canonical receiver type.
type ResolvedCall = (u32, MethodId, Option<String>);

/// A file that could not be read or parsed. Indexing continues without it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileError {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProjectIndex {
    /// Sorted by path, then declaration order.
    pub units: Vec<SourceUnit>,
    pub errors: Vec<FileError>,
    /// method_id → (unit, method) position.
    #[serde(skip)]
    by_id: BTreeMap<MethodId, (usize, usize)>,
    #[serde(skip)]
    by_type: BTreeMap<String, usize>,
}

impl ProjectIndex {
    /// Walks `root`, parses every file with a configured extension, and
    /// resolves call targets.
    pub fn parse_source(root: &Path, lang: &LanguageConfig) -> Result<ProjectIndex> {
        if !root.is_dir() {
            return Err(Error::Data(format!("source root {} is not a directory", root.display())));
        }
        let files = collect_files(root, lang)?;
        let parsed: Vec<(String, std::result::Result<Vec<SourceUnit>, String>)> = files
            .par_iter()
            .map(|(rel, abs)| {
                let res = std::fs::read_to_string(abs)
                    .map_err(|e| e.to_string())
                    .and_then(|src| parse_file(rel, &src).map_err(|e| e.to_string()));
                (rel.clone(), res)
            })
            .collect();
        let mut units = Vec::new();
        let mut errors = Vec::new();
        for (path, res) in parsed {
            match res {
                Ok(u) => units.extend(u),
                Err(message) => {
                    log::warn!("skipping {path}: {message}");
                    errors.push(FileError { path, message });
                }
            }
        }
        Self::from_units(units, errors)
    }

    /// Builds an index from already-parsed units. Fails on a duplicate method id.
    pub fn from_units(units: Vec<SourceUnit>, errors: Vec<FileError>) -> Result<ProjectIndex> {
        let mut idx = ProjectIndex { units, errors, ..Default::default() };
        idx.rebuild_maps()?;
        idx.resolve_calls();
        Ok(idx)
    }

    fn rebuild_maps(&mut self) -> Result<()> {
        self.by_id.clear();
        self.by_type.clear();
        for (ui, u) in self.units.iter().enumerate() {
            if let Some(&prev) = self.by_type.get(&u.qualified_type_name) {
                let p = &self.units[prev];
                return Err(Error::DuplicateType {
                    name: u.qualified_type_name.clone(),
                    first: p.path.clone(),
                    second: u.path.clone(),
                });
            }
            self.by_type.insert(u.qualified_type_name.clone(), ui);
            for (mi, m) in u.methods.iter().enumerate() {
                if let Some(&(pu, pm)) = self.by_id.get(&m.method_id) {
                    let prev = &self.units[pu].methods[pm];
                    return Err(Error::DuplicateMethod {
                        id: m.method_id.to_string(),
                        first: format!("{}:{}", prev.path, prev.line),
                        second: format!("{}:{}", m.path, m.line),
                    });
                }
                self.by_id.insert(m.method_id.clone(), (ui, mi));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn method(&self, id: &MethodId) -> Option<&MethodDecl> {
        self.by_id.get(id).map(|&(u, m)| &self.units[u].methods[m])
    }

    pub fn unit(&self, qualified_type: &str) -> Option<&SourceUnit> {
        self.by_type.get(qualified_type).map(|&u| &self.units[u])
    }

    /// All methods in method_id order.
    pub fn methods(&self) -> impl Iterator<Item = &MethodDecl> {
        self.by_id.values().map(|&(u, m)| &self.units[u].methods[m])
    }

    /// Finds the project type a (possibly simple) type name refers to from `from`.
    pub fn lookup_type(&self, name: &str, from: &SourceUnit) -> Option<&SourceUnit> {
        if let Some(u) = self.unit(name) {
            return Some(u);
        }
        if !from.package.is_empty() {
            if let Some(u) = self.unit(&format!("{}.{name}", from.package)) {
                return Some(u);
            }
        }
        // Nested type of the current class or one of its enclosing classes.
        let mut scope = from.qualified_type_name.as_str();
        loop {
            if let Some(u) = self.unit(&format!("{scope}.{name}")) {
                return Some(u);
            }
            match scope.rsplit_once('.') {
                Some((outer, _)) => scope = outer,
                None => break,
            }
        }
        let mut hits = self.units.iter().filter(|u| u.simple_name == name || u.qualified_type_name.ends_with(&format!(".{name}")));
        match (hits.next(), hits.next()) {
            (Some(u), None) => Some(u),
            _ => None,
        }
    }

    /// Looks `name/arity` up in `ty`, then its superclasses, then its interfaces.
    fn lookup_method(&self, ty: &SourceUnit, name: &str, arity: usize) -> Option<MethodId> {
        let mut seen = Vec::new();
        let mut queue = vec![ty];
        while let Some(u) = queue.first().copied() {
            queue.remove(0);
            if seen.contains(&u.qualified_type_name) {
                continue;
            }
            seen.push(u.qualified_type_name.clone());
            let id = MethodId::new(&u.qualified_type_name, name, arity);
            if self.by_id.contains_key(&id) {
                return Some(id);
            }
            if name == "<init>" {
                return None;
            }
            if let Some(sup) = u.superclass.as_deref().and_then(|s| self.lookup_type(s, u)) {
                queue.push(sup);
            }
            for i in &u.interfaces {
                if let Some(iu) = self.lookup_type(i, u) {
                    queue.push(iu);
                }
            }
        }
        None
    }

    fn resolve_calls(&mut self) {
        let mut resolved: Vec<(usize, usize, Vec<ResolvedCall>)> = Vec::new();
        for (ui, u) in self.units.iter().enumerate() {
            for (mi, m) in u.methods.iter().enumerate() {
                let Some(body) = &m.body else { continue };
                let mut out = Vec::new();
                for n in body.walk() {
                    let Some(call) = n.call() else { continue };
                    let target_type = call.receiver_type.as_deref().and_then(|t| self.lookup_type(t, u));
                    let callee = target_type
                        .and_then(|t| self.lookup_method(t, &call.name, call.arity()))
                        .unwrap_or_else(|| {
                            MethodId::external(call.receiver_type.as_deref(), &call.name, call.arity())
                        });
                    // Canonicalize the receiver type once the project type is known.
                    let canonical = target_type.map(|t| t.qualified_type_name.clone());
                    out.push((n.id, callee, canonical));
                }
                resolved.push((ui, mi, out));
            }
        }
        for (ui, mi, calls) in resolved {
            let body = self.units[ui].methods[mi].body.as_mut().expect("resolved only bodies");
            let map: BTreeMap<u32, (MethodId, Option<String>)> =
                calls.into_iter().map(|(id, c, t)| (id, (c, t))).collect();
            body.walk_mut(&mut |n| {
                if let (Some((callee, canonical)), Detail::Call(c)) = (map.get(&n.id), &mut n.detail) {
                    c.callee = Some(callee.clone());
                    if canonical.is_some() {
                        c.receiver_type = canonical.clone();
                    }
                }
            });
        }
    }

    /// Mutable access for passes that annotate bodies in place.
    pub(crate) fn methods_mut(&mut self) -> impl Iterator<Item = &mut MethodDecl> {
        self.units.iter_mut().flat_map(|u| u.methods.iter_mut())
    }

    /// Restores lookup tables after deserialization.
    pub fn reindex(&mut self) -> Result<()> {
        self.rebuild_maps()
    }
}

/// Relative path (with `/` separators) and absolute path of every source file, sorted.
fn collect_files(root: &Path, lang: &LanguageConfig) -> Result<Vec<(String, std::path::PathBuf)>> {
    let mut out = Vec::new();
    let walker = walkdir::WalkDir::new(root).follow_links(false).sort_by_file_name().into_iter();
    let walker = walker.filter_entry(|e| {
        e.depth() == 0 || !e.file_type().is_dir() || !lang.exclude_dirs.iter().any(|x| e.file_name() == x.as_str())
    });
    for entry in walker {
        let entry = entry.map_err(|e| Error::Data(format!("walking {}: {e}", root.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let ext = entry.path().extension().and_then(|e| e.to_str()).unwrap_or("");
        if !lang.extensions.iter().any(|x| x.trim_start_matches('.') == ext) {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        out.push((rel, entry.path().to_path_buf()));
    }
    out.sort();
    Ok(out)
}
