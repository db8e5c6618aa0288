use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// Item-keyed embedding vectors.
///
/// Text form: a header `rows dim`, then one `item_id v1 … vdim` line per
/// item, floats in shortest round-trip decimal.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Tensor2,
}

impl EmbeddingTable {
    pub fn new(ids: Vec<String>, vectors: Tensor2) -> Result<Self> {
        if ids.len() != vectors.rows() {
            return Err(Error::shape("embedding table rows", ids.len(), vectors.rows()));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() || id.contains(char::is_whitespace) {
                return Err(Error::InvalidItem {
                    item: id.clone(),
                    reason: "ids in embedding tables must be non-empty without whitespace".into(),
                });
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateItem(id.clone()));
            }
        }
        Ok(Self { ids, index, vectors })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vectors(&self) -> &Tensor2 {
        &self.vectors
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.vectors.row(i))
    }

    /// Rows for `ids`, substituting zeros for unknown ids.
    pub fn lookup_or_zero(&self, ids: &[String]) -> Tensor2 {
        let mut out = Tensor2::zeros(ids.len(), self.dim());
        for (o, id) in ids.iter().enumerate() {
            if let Some(v) = self.get(id) {
                out.row_mut(o).copy_from_slice(v);
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim());
        for (id, row) in self.ids.iter().zip(self.vectors.iter_rows()) {
            out.push_str(id);
            for v in row {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            file: file.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| err(1, format!("bad header field {v:?}"))))
            .collect::<Result<_>>()?;
        let [rows, dim] = dims[..] else {
            return Err(err(1, "header must be `rows dim`".into()));
        };
        let mut ids = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * dim);
        for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let mut fields = line.split_whitespace();
            let id = fields.next().expect("non-blank line");
            let before = data.len();
            for f in fields {
                data.push(f.parse::<f64>().map_err(|_| err(i + 1, format!("bad float {f:?}")))?);
            }
            if data.len() - before != dim {
                return Err(err(i + 1, format!("expected {dim} values, found {}", data.len() - before)));
            }
            ids.push(id.to_string());
        }
        if ids.len() != rows {
            return Err(err(1, format!("header promises {rows} rows, found {}", ids.len())));
        }
        Self::new(ids, Tensor2::from_vec(rows, dim, data)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}
