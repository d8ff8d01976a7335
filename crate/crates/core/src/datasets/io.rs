//! Dataset files.
//!
//! One JSON object per line. The first line is a header carrying the ground
//! set size and, optionally, a catalog CSV path relative to the dataset file:
//!
//! ```text
//! {"ground_size": 3, "catalog": "items.csv"}
//! {"items": [1]}
//! {"items": [1, 2]}
//! ```
//!
//! Item ids in files are 1-based. The catalog CSV has an `id,name` header.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Catalog, SubsetDataset};
use crate::error::{Error, Result};
use crate::kernel::Subset;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    ground_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    catalog: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExampleLine {
    items: Vec<i64>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses dataset text. A catalog named in the header is resolved against
/// `base_dir` when given, and ignored otherwise.
pub fn parse_dataset(text: &str, base_dir: Option<&Path>) -> Result<SubsetDataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, htext) = lines.next().ok_or_else(|| parse_err(1, "missing header line"))?;
    let header: Header =
        serde_json::from_str(htext).map_err(|e| parse_err(hline + 1, format!("bad header: {e}")))?;
    let n = header.ground_size;
    if n == 0 {
        return Err(parse_err(hline + 1, "ground_size must be at least 1"));
    }
    let mut examples = Vec::new();
    for (idx, l) in lines {
        let line = idx + 1;
        let ex: ExampleLine =
            serde_json::from_str(l).map_err(|e| parse_err(line, format!("malformed example: {e}")))?;
        let mut items = Vec::with_capacity(ex.items.len());
        for id in ex.items {
            if id < 1 || id as u64 > n as u64 {
                return Err(parse_err(line, format!("item id {id} outside 1..={n}")));
            }
            items.push(id as usize - 1);
        }
        let y = Subset::new(items, n).map_err(|e| parse_err(line, e.to_string()))?;
        examples.push(y);
    }
    let mut data = SubsetDataset::new(n, examples)?;
    if let (Some(cat), Some(dir)) = (header.catalog, base_dir) {
        data = data.with_catalog(read_catalog_csv(&dir.join(cat), n)?);
    }
    Ok(data)
}

pub fn load_dataset(path: &Path) -> Result<SubsetDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, Some(path.parent().unwrap_or(Path::new("."))))
}

fn catalog_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    path.with_file_name(format!("{stem}.catalog.csv"))
}

/// Writes the dataset, plus `<stem>.catalog.csv` next to it when the dataset
/// has a catalog.
pub fn save_dataset(data: &SubsetDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let catalog = data.catalog().map(|c| (catalog_path(path), c));
    let header = Header {
        ground_size: data.ground_size(),
        catalog: catalog
            .as_ref()
            .map(|(p, _)| p.file_name().unwrap().to_string_lossy().into_owned()),
    };
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    for y in data.examples() {
        let line = ExampleLine { items: y.one_based().into_iter().map(|i| i as i64).collect() };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    if let Some((p, c)) = catalog {
        write_catalog_csv(&p, c)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogRow {
    id: usize,
    name: String,
}

fn read_catalog_csv(path: &Path, n: usize) -> Result<Catalog> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::InvalidInput(format!("catalog {}: {e}", path.display())))?;
    let mut cat = Catalog::new();
    for (i, row) in rdr.deserialize::<CatalogRow>().enumerate() {
        let row = row.map_err(|e| parse_err(i + 2, format!("catalog: {e}")))?;
        if row.id < 1 || row.id > n {
            return Err(parse_err(i + 2, format!("catalog id {} outside 1..={n}", row.id)));
        }
        cat.insert(row.id - 1, row.name);
    }
    Ok(cat)
}

pub fn write_catalog_csv(path: &Path, catalog: &Catalog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::InvalidInput(format!("catalog {}: {e}", path.display())))?;
    for (&i, name) in catalog {
        w.serialize(CatalogRow { id: i + 1, name: name.clone() })
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_examples() {
        let d = parse_dataset("{\"ground_size\": 2}\n{\"items\":[1]}\n{\"items\":[1,2]}\n", None).unwrap();
        assert_eq!(d.ground_size(), 2);
        assert_eq!(d.len(), 2);
        assert_eq!(d.examples()[1].items(), &[0, 1]);
    }

    #[test]
    fn empty_sets_and_blank_lines() {
        let d = parse_dataset("{\"ground_size\": 3}\n\n{\"items\":[]}\n", None).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.examples()[0].is_empty());
    }

    #[test]
    fn errors_name_the_line() {
        let dup = parse_dataset("{\"ground_size\": 3}\n{\"items\":[1]}\n{\"items\":[2,2]}\n", None);
        assert!(matches!(dup, Err(Error::Parse { line: 3, .. })), "{dup:?}");
        let range = parse_dataset("{\"ground_size\": 3}\n{\"items\":[4]}\n", None);
        assert!(matches!(range, Err(Error::Parse { line: 2, .. })));
        let zero = parse_dataset("{\"ground_size\": 3}\n{\"items\":[0]}\n", None);
        assert!(matches!(zero, Err(Error::Parse { line: 2, .. })));
        let bad = parse_dataset("{\"ground_size\": 3}\n{\"items\":[1}\n", None);
        assert!(matches!(bad, Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("", None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_dataset("{\"items\":[1]}\n", None), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut cat = Catalog::new();
        cat.insert(0, "Carseat, deluxe".into());
        cat.insert(2, "Monitor".into());
        let d = SubsetDataset::new(
            3,
            vec![Subset::new(vec![0, 2], 3).unwrap(), Subset::empty(), Subset::new(vec![1], 3).unwrap()],
        )
        .unwrap()
        .with_catalog(cat);
        save_dataset(&d, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d);

        let plain = d.with_examples(vec![Subset::empty()]);
        let plain = SubsetDataset::new(plain.ground_size(), plain.examples().to_vec()).unwrap();
        save_dataset(&plain, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), plain);
    }
}
