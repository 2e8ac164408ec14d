use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use super::MemoryError;

pub type NodeId = usize;
pub const ROOT: NodeId = 0;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Node {
    goto: BTreeMap<u32, NodeId>,
    fail: NodeId,
    /// Pattern ids ending here, including those inherited through fail
    /// links once compiled; kept sorted.
    outputs: Vec<usize>,
}

/// An occurrence of pattern `pattern` ending (exclusively) at `end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatchEvent {
    pub end: usize,
    pub pattern: usize,
}

/// Trie over token-id patterns that turns into an Aho-Corasick automaton
/// after [`compile`](PatternAutomaton::compile).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternAutomaton {
    nodes: Vec<Node>,
    patterns: Vec<Vec<u32>>,
    compiled: bool,
}

impl Default for PatternAutomaton {
    fn default() -> Self {
        Self::new()
    }
}

impl PatternAutomaton {
    pub fn new() -> Self {
        Self {
            nodes: vec![Node::default()],
            patterns: Vec::new(),
            compiled: false,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn patterns(&self) -> &[Vec<u32>] {
        &self.patterns
    }

    pub fn is_compiled(&self) -> bool {
        self.compiled
    }

    /// Adds a pattern and returns its id; re-inserting returns the old id.
    pub fn insert(&mut self, pattern: &[u32]) -> Result<usize, MemoryError> {
        if self.compiled {
            return Err(MemoryError::State("insert after compile".into()));
        }
        if pattern.is_empty() {
            return Err(MemoryError::Argument("empty pattern".into()));
        }
        let mut cur = ROOT;
        for &tok in pattern {
            cur = match self.nodes[cur].goto.get(&tok) {
                Some(&next) => next,
                None => {
                    self.nodes.push(Node::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[cur].goto.insert(tok, next);
                    next
                }
            };
        }
        if let Some(&id) = self.nodes[cur].outputs.first() {
            return Ok(id);
        }
        let id = self.patterns.len();
        self.patterns.push(pattern.to_vec());
        self.nodes[cur].outputs.push(id);
        Ok(id)
    }

    /// Computes fail links breadth-first and merges outputs along them.
    pub fn compile(&mut self) -> Result<(), MemoryError> {
        if self.compiled {
            return Err(MemoryError::State("automaton already compiled".into()));
        }
        let mut queue = VecDeque::new();
        let root_children: Vec<NodeId> = self.nodes[ROOT].goto.values().copied().collect();
        for child in root_children {
            self.nodes[child].fail = ROOT;
            queue.push_back(child);
        }
        while let Some(node) = queue.pop_front() {
            let edges: Vec<(u32, NodeId)> =
                self.nodes[node].goto.iter().map(|(&t, &n)| (t, n)).collect();
            for (tok, child) in edges {
                let mut f = self.nodes[node].fail;
                let fail = loop {
                    if let Some(&next) = self.nodes[f].goto.get(&tok) {
                        break next;
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = self.nodes[f].fail;
                };
                self.nodes[child].fail = fail;
                let inherited = self.nodes[fail].outputs.clone();
                let outputs = &mut self.nodes[child].outputs;
                outputs.extend(inherited);
                outputs.sort_unstable();
                outputs.dedup();
                queue.push_back(child);
            }
        }
        self.compiled = true;
        Ok(())
    }

    fn require_compiled(&self) -> Result<(), MemoryError> {
        if self.compiled {
            Ok(())
        } else {
            Err(MemoryError::State("automaton not compiled".into()))
        }
    }

    fn transition(&self, mut state: NodeId, token: u32) -> NodeId {
        loop {
            if let Some(&next) = self.nodes[state].goto.get(&token) {
                return next;
            }
            if state == ROOT {
                return ROOT;
            }
            state = self.nodes[state].fail;
        }
    }

    /// Advances one token and reports the pattern ids ending at the new state.
    pub fn step(&self, state: NodeId, token: u32) -> Result<(NodeId, &[usize]), MemoryError> {
        self.require_compiled()?;
        if state >= self.nodes.len() {
            return Err(MemoryError::Argument(format!("invalid automaton state {state}")));
        }
        let next = self.transition(state, token);
        Ok((next, &self.nodes[next].outputs))
    }

    /// Tokens with a direct trie edge out of `state`.
    pub fn continuations(&self, state: NodeId) -> impl Iterator<Item = u32> + '_ {
        self.nodes
            .get(state)
            .into_iter()
            .flat_map(|n| n.goto.keys().copied())
    }

    /// Every pattern occurrence in `seq`, ordered by end position then pattern id.
    pub fn scan(&self, seq: &[u32]) -> Result<Vec<MatchEvent>, MemoryError> {
        self.require_compiled()?;
        let mut out = Vec::new();
        let mut state = ROOT;
        for (i, &tok) in seq.iter().enumerate() {
            state = self.transition(state, tok);
            out.extend(
                self.nodes[state]
                    .outputs
                    .iter()
                    .map(|&pattern| MatchEvent { end: i + 1, pattern }),
            );
        }
        Ok(out)
    }

    /// Pattern list, one space-separated token-id sequence per line.
    pub fn to_text(&self) -> String {
        self.patterns
            .iter()
            .map(|p| {
                let ids: Vec<String> = p.iter().map(u32::to_string).collect();
                ids.join(" ") + "\n"
            })
            .collect()
    }

    /// Parses a pattern list and compiles it.
    pub fn from_text(text: &str) -> Result<Self, MemoryError> {
        let mut automaton = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let pattern = line
                .split_whitespace()
                .map(str::parse::<u32>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| MemoryError::Format(format!("pattern line {}: {e}", i + 1)))?;
            automaton.insert(&pattern)?;
        }
        automaton.compile()?;
        Ok(automaton)
    }

    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
