use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{FgpError, Result};

/// Pretrained word vectors keyed by lowercase token.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    duplicates: usize,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
            duplicates: 0,
        }
    }

    /// Inserts or replaces a token. Returns an error if `vector` has the wrong dimension.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(FgpError::Shape {
                op: "WordVectorTable::insert",
                left: (vector.len(), 1),
                right: (self.dim, 1),
            });
        }
        if self.vectors.insert(token.to_lowercase(), vector).is_some() {
            self.duplicates += 1;
        }
        Ok(())
    }

    /// Parses the whitespace-separated text format: `token v1 v2 ... vd` per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: Option<WordVectorTable> = None;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let values = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|e| {
                        FgpError::format(
                            format!("word vectors line {line_no}"),
                            format!("bad float {f:?}: {e}"),
                        )
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.is_empty() {
                return Err(FgpError::format(
                    format!("word vectors line {line_no}"),
                    format!("token {token:?} has no components"),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(FgpError::format(
                    format!("word vectors line {line_no}"),
                    "non-finite component",
                ));
            }
            let table = table.get_or_insert_with(|| WordVectorTable::new(values.len()));
            if values.len() != table.dim {
                return Err(FgpError::format(
                    format!("word vectors line {line_no}"),
                    format!(
                        "token {token:?} has dimension {} but earlier lines have {}",
                        values.len(),
                        table.dim
                    ),
                ));
            }
            table.insert(token, values)?;
        }
        let table = table.ok_or_else(|| FgpError::format("word vectors", "file has no entries"))?;
        if table.duplicates > 0 {
            log::warn!(
                "{} duplicate word-vector tokens; later entries replaced earlier ones",
                table.duplicates
            );
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| FgpError::io(path, e))?;
        Self::parse(&text)
    }

    /// Serialises in the same text format, tokens sorted for stable output.
    pub fn to_text(&self) -> String {
        let mut tokens: Vec<&String> = self.vectors.keys().collect();
        tokens.sort();
        let mut out = String::new();
        for t in tokens {
            out.push_str(t);
            for v in &self.vectors[t] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Number of tokens that were overwritten by a later duplicate.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    /// `None` means out of vocabulary.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }
}
