//! Kernel file format.
//!
//! A single JSON document:
//!
//! ```text
//! {"n": 2, "eigenvalues": [...], "eigenvectors": [...], "meta": {...}}
//! ```
//!
//! `eigenvectors` is the row-major `n x n` matrix whose columns are the
//! eigenvectors. Every float is written with 17 significant digits, so a
//! write/read round trip is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::SpectralKernel;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
pub struct KernelDocument {
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<f64>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl KernelDocument {
    pub fn into_kernel(self) -> Result<SpectralKernel> {
        let n = self.n;
        if self.eigenvalues.len() != n || self.eigenvectors.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "kernel file: expected {n} eigenvalues and {} eigenvector entries, got {} and {}",
                n * n,
                self.eigenvalues.len(),
                self.eigenvectors.len()
            )));
        }
        SpectralKernel::new(
            DMatrix::from_row_slice(n, n, &self.eigenvectors),
            DVector::from_vec(self.eigenvalues),
        )
    }
}

fn push_float_array(out: &mut String, values: impl Iterator<Item = f64>) {
    out.push('[');
    for (i, v) in values.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{v:.16e}").unwrap();
    }
    out.push(']');
}

/// Serializes `kernel` with `meta` (any JSON value; `null` becomes `{}`).
pub fn kernel_to_json(kernel: &SpectralKernel, meta: &serde_json::Value) -> String {
    let n = kernel.n();
    let mut out = String::new();
    write!(out, "{{\n  \"n\": {n},\n  \"eigenvalues\": ").unwrap();
    push_float_array(&mut out, kernel.eigenvalues().iter().copied());
    out.push_str(",\n  \"eigenvectors\": ");
    let v = kernel.eigenvectors();
    push_float_array(&mut out, (0..n * n).map(|i| v[(i / n, i % n)]));
    let meta = if meta.is_null() { serde_json::json!({}) } else { meta.clone() };
    write!(out, ",\n  \"meta\": {}\n}}\n", serde_json::to_string(&meta).unwrap()).unwrap();
    out
}

pub fn write_kernel(path: &Path, kernel: &SpectralKernel, meta: &serde_json::Value) -> Result<()> {
    std::fs::write(path, kernel_to_json(kernel, meta))?;
    Ok(())
}

pub fn read_kernel(path: &Path) -> Result<(SpectralKernel, serde_json::Value)> {
    let text = std::fs::read_to_string(path)?;
    let doc: KernelDocument = serde_json::from_str(&text)?;
    let meta = doc.meta.clone();
    Ok((doc.into_kernel()?, meta))
}
