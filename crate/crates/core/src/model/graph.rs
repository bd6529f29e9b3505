use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

/// Bipartite links from clauses to the parameters and variables they use.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConnectionGraph {
    clause_param_edges: IndexSet<(String, String)>,
    clause_var_edges: IndexSet<(String, String)>,
}

impl ConnectionGraph {
    pub(crate) fn link_parameter(&mut self, clause: &str, symbol: &str) {
        self.clause_param_edges
            .insert((clause.to_string(), symbol.to_string()));
    }

    pub(crate) fn link_variable(&mut self, clause: &str, symbol: &str) {
        self.clause_var_edges
            .insert((clause.to_string(), symbol.to_string()));
    }

    pub(crate) fn remove_clause(&mut self, clause: &str) {
        self.clause_param_edges.retain(|(c, _)| c != clause);
        self.clause_var_edges.retain(|(c, _)| c != clause);
    }

    pub(crate) fn remove_symbol(&mut self, symbol: &str) {
        self.clause_param_edges.retain(|(_, s)| s != symbol);
        self.clause_var_edges.retain(|(_, s)| s != symbol);
    }

    pub fn len(&self) -> usize {
        self.clause_param_edges.len() + self.clause_var_edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parameter_edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.clause_param_edges
            .iter()
            .map(|(c, s)| (c.as_str(), s.as_str()))
    }

    pub fn variable_edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.clause_var_edges
            .iter()
            .map(|(c, s)| (c.as_str(), s.as_str()))
    }

    /// All symbols linked to `clause`, parameters first.
    pub fn edges_of<'a>(&'a self, clause: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.parameter_edges()
            .chain(self.variable_edges())
            .filter(move |(c, _)| *c == clause)
            .map(|(_, s)| s)
    }

    pub fn is_linked(&self, clause: &str, symbol: &str) -> bool {
        self.edges_of(clause).any(|s| s == symbol)
    }

    /// Clauses linked to `symbol`, in edge insertion order, without repeats.
    pub fn clauses_of<'a>(&'a self, symbol: &'a str) -> Vec<&'a str> {
        let mut out: Vec<&str> = Vec::new();
        for (c, s) in self.parameter_edges().chain(self.variable_edges()) {
            if s == symbol && !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }
}
