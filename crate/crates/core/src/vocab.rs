use std::collections::HashMap;

use crate::error::{Error, Result};

/// Index of a token in a [`Vocabulary`].
pub type TokenId = u32;

/// Reserved begin-of-sequence index.
pub const BOS: TokenId = 0;

/// Label used for the begin-of-sequence marker in text artifacts.
pub const BOS_LABEL: &str = "<s>";

/// Ordered set of distinct token labels. Index 0 is always the
/// begin-of-sequence marker, which is never sampled and never a target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    labels: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from ordinary labels; BOS is prepended at index 0.
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![BOS_LABEL.to_string()];
        all.extend(labels.into_iter().map(Into::into));
        Self::with_bos(all)
    }

    /// Builds a vocabulary from a full label list whose first entry is BOS.
    pub fn with_bos(labels: Vec<String>) -> Result<Self> {
        match labels.first() {
            Some(first) if first == BOS_LABEL => {}
            _ => {
                return Err(Error::InvalidVocabulary(format!(
                    "index 0 must be `{BOS_LABEL}`"
                )))
            }
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocabulary(format!(
                    "label `{label}` is empty or contains whitespace"
                )));
            }
            if index.insert(label.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate label `{label}`")));
            }
        }
        Ok(Self { labels, index })
    }

    /// Synthetic vocabulary `t0 .. t{n-1}` plus BOS.
    pub fn synthetic(n: usize) -> Self {
        Self::new((0..n).map(|i| format!("t{i}"))).expect("synthetic labels are valid")
    }

    /// |V| including BOS.
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, id: TokenId) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, label: &str) -> Option<TokenId> {
        self.index.get(label).copied()
    }

    pub fn require_id(&self, label: &str) -> Result<TokenId> {
        self.id(label)
            .ok_or_else(|| Error::UnknownToken(label.to_string()))
    }

    pub(crate) fn intern(&mut self, label: &str) -> TokenId {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as TokenId;
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    /// Space-joined labels of a token slice.
    pub fn render(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&t| self.label(t).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
