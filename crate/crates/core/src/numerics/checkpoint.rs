//! Plain-text parameter checkpoints.
//!
//! ```text
//! cofirec-checkpoint 1
//! @key value            (optional metadata lines)
//! name rows cols
//! v0 v1 v2 ...          (row-major, shortest round-trip decimal)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Params, Tensor2};
use crate::error::{Error, Result};

const MAGIC: &str = "cofirec-checkpoint 1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor2)>,
}

impl Checkpoint {
    pub fn from_params<P: Params>(p: &P) -> Self {
        Self {
            meta: BTreeMap::new(),
            tensors: p.names().into_iter().zip(p.tensors().into_iter().cloned()).collect(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    /// Copies tensors into `p`, checking names and shapes one by one.
    pub fn load_into<P: Params>(&self, p: &mut P) -> Result<()> {
        let names = p.names();
        if names.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", names.len(), self.tensors.len())));
        }
        for ((name, dst), (src_name, src)) in names.iter().zip(p.tensors_mut()).zip(&self.tensors) {
            if name != src_name {
                return Err(Error::Checkpoint(format!("expected tensor {name}, found {src_name}")));
            }
            if dst.shape() != src.shape() {
                return Err(Error::Checkpoint(format!("tensor {name}: shape {:?} != {:?}", src.shape(), dst.shape())));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "@{k} {v}");
        }
        for (name, t) in &self.tensors {
            let _ = writeln!(out, "{name} {} {}", t.rows(), t.cols());
            let mut first = true;
            for v in t.data() {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            file: "checkpoint".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(err(1, format!("missing header {MAGIC:?}"))),
        }
        let mut ck = Checkpoint::default();
        while let Some((i, line)) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('@') {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.insert(k.to_string(), v.to_string());
                continue;
            }
            let head: Vec<&str> = line.split_whitespace().collect();
            if head.len() != 3 {
                return Err(err(i + 1, "expected `name rows cols`".into()));
            }
            let rows: usize = head[1].parse().map_err(|_| err(i + 1, format!("bad rows {:?}", head[1])))?;
            let cols: usize = head[2].parse().map_err(|_| err(i + 1, format!("bad cols {:?}", head[2])))?;
            let (j, values) = lines.next().ok_or_else(|| err(i + 2, "missing tensor data".into()))?;
            let data = values
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| err(j + 1, format!("bad float {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let t = Tensor2::from_vec(rows, cols, data).map_err(|e| err(j + 1, e.to_string()))?;
            ck.tensors.push((head[0].to_string(), t));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                file: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }
}
