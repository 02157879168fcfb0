//! Event symbols: the set of event types that fired together at one step.
//!
//! A symbol is the alphabet of the correlation model. The empty symbol
//! (written `{}`) stands for a step where no event fired.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// A canonical (sorted, de-duplicated) set of event-type indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct EventSymbol(Vec<usize>);

impl EventSymbol {
    /// The no-event symbol.
    pub fn empty() -> Self {
        EventSymbol(Vec::new())
    }

    pub fn single(event: usize) -> Self {
        EventSymbol(vec![event])
    }

    pub fn from_events<I: IntoIterator<Item = usize>>(events: I) -> Self {
        let mut v: Vec<usize> = events.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        EventSymbol(v)
    }

    pub fn events(&self) -> &[usize] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, event: usize) -> bool {
        self.0.binary_search(&event).is_ok()
    }

    pub fn is_subset_of(&self, other: &EventSymbol) -> bool {
        self.0.iter().all(|e| other.contains(*e))
    }

    /// Whether the symbol holds at a step with the given flags.
    ///
    /// A non-empty symbol holds when every one of its events is flagged;
    /// the empty symbol holds only when nothing is flagged.
    pub fn is_active(&self, flags: &[bool]) -> bool {
        if self.0.is_empty() {
            !flags.iter().any(|&f| f)
        } else {
            self.0.iter().all(|&e| flags.get(e).copied().unwrap_or(false))
        }
    }

    /// Largest event index plus one, or 0 for the empty symbol.
    pub fn width(&self) -> usize {
        self.0.last().map_or(0, |e| e + 1)
    }
}

/// Names of the event types, one per stream, in column order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

pub(crate) fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl Vocabulary {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(names: I) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if !valid_name(name) {
                return Err(Error::Header(format!(
                    "event name `{name}` must be non-empty and use only [A-Za-z0-9_.]"
                )));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Header(format!("duplicate event name `{name}`")));
            }
        }
        Ok(Vocabulary { names, index })
    }

    /// `e1..en`, used when a stream table carries no usable names.
    pub fn numbered(n: usize) -> Self {
        Self::new((1..=n).map(|i| format!("e{i}"))).expect("generated names are valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, event: usize) -> Option<&str> {
        self.names.get(event).map(String::as_str)
    }

    pub fn lookup(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownEvent(name.to_string()))
    }

    /// Parses a comma-separated list of event names into a symbol.
    pub fn parse_event_list(&self, text: &str) -> Result<EventSymbol> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(EventSymbol::empty());
        }
        let mut events = Vec::new();
        for part in text.split(',') {
            events.push(self.lookup(part.trim())?);
        }
        Ok(EventSymbol::from_events(events))
    }

    /// Event names of a symbol, in index order.
    pub fn symbol_names(&self, symbol: &EventSymbol) -> Vec<String> {
        symbol
            .events()
            .iter()
            .map(|&e| self.name(e).map_or_else(|| format!("#{e}"), str::to_string))
            .collect()
    }

    /// Canonical text: `{}` for no event, a bare name for one event,
    /// `{A,B}` for several.
    pub fn format_symbol(&self, symbol: &EventSymbol) -> String {
        let names = self.symbol_names(symbol);
        match names.len() {
            1 => names.into_iter().next().unwrap(),
            _ => format!("{{{}}}", names.join(",")),
        }
    }

    pub fn display<'a>(&'a self, symbol: &'a EventSymbol) -> SymbolDisplay<'a> {
        SymbolDisplay { vocab: self, symbol }
    }
}

pub struct SymbolDisplay<'a> {
    vocab: &'a Vocabulary,
    symbol: &'a EventSymbol,
}

impl fmt::Display for SymbolDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.vocab.format_symbol(self.symbol))
    }
}
