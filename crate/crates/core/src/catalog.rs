//! Ordered set of class labels.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("class catalog is empty")]
    Empty,
    #[error("class name at position {0} is empty")]
    EmptyName(usize),
    #[error("duplicate class name `{0}`")]
    Duplicate(String),
}

/// Class labels in canonical order: case-insensitive lexicographic, with
/// the exact byte order breaking ties between names differing only in case.
/// A label's index in this list is its class index everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassCatalog {
    names: Vec<String>,
}

fn canonical_order(a: &str, b: &str) -> Ordering {
    let fold = |s: &str| s.chars().flat_map(char::to_lowercase).collect::<String>();
    fold(a).cmp(&fold(b)).then_with(|| a.cmp(b))
}

impl ClassCatalog {
    /// Builds a catalog from names in any order.
    pub fn new<I, S>(names: I) -> Result<Self, CatalogError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(CatalogError::Empty);
        }
        if let Some(i) = names.iter().position(|n| n.trim().is_empty()) {
            return Err(CatalogError::EmptyName(i));
        }
        names.sort_by(|a, b| canonical_order(a, b));
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(CatalogError::Duplicate(w[0].clone()));
        }
        Ok(Self { names })
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for ClassCatalog {
    type Error = CatalogError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(names)
    }
}

impl From<ClassCatalog> for Vec<String> {
    fn from(c: ClassCatalog) -> Self {
        c.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn orders_case_insensitively() {
        let c = ClassCatalog::new(["Jute stick insect", "Jute Stem Weevil", "jute stem girdler", "Black hairy"]).unwrap();
        assert_eq!(c.names(), ["Black hairy", "jute stem girdler", "Jute Stem Weevil", "Jute stick insect"]);
        assert_eq!(c.index_of("Jute Stem Weevil"), Some(2));
        assert_eq!(c.count(), 4);
    }

    #[test]
    fn rejects_bad_names() {
        assert_eq!(ClassCatalog::new(Vec::<String>::new()), Err(CatalogError::Empty));
        assert_eq!(ClassCatalog::new(["a", " "]), Err(CatalogError::EmptyName(1)));
        assert_eq!(ClassCatalog::new(["a", "b", "a"]), Err(CatalogError::Duplicate("a".into())));
        // differing only in case is allowed; exact order breaks the tie
        let c = ClassCatalog::new(["mite", "Mite"]).unwrap();
        assert_eq!(c.names(), vec!["Mite", "mite"]);
    }
}
