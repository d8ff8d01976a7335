//! Observed-subset datasets: file I/O, ingestion filters, splitting, moment
//! statistics, kernel initializers and synthetic data.

mod io;
mod moments;
mod synth;

pub use io::{load_dataset, parse_dataset, save_dataset, write_catalog_csv};
pub use moments::{
    diversity_stat, empirical_moments, moments_init, moments_matrix, wishart_init, wishart_l,
    MomentTable,
};
pub use synth::{clustered_kernel, mixed_kernel, random_orthogonal, random_spectrum_kernel, synth_generate};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::Subset;
use crate::rng::RngStream;

/// Item display names, keyed by 0-based item index.
pub type Catalog = BTreeMap<usize, String>;

/// An ordered list of observed subsets of `{0, .., ground_size - 1}`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SubsetDataset {
    ground_size: usize,
    examples: Vec<Subset>,
    catalog: Option<Catalog>,
}

impl SubsetDataset {
    pub fn new(ground_size: usize, examples: Vec<Subset>) -> Result<Self> {
        if ground_size == 0 {
            return Err(Error::InvalidInput("ground set must have at least one item".into()));
        }
        for (i, y) in examples.iter().enumerate() {
            if y.items().last().is_some_and(|&last| last >= ground_size) {
                return Err(Error::InvalidInput(format!(
                    "example {i} has an item outside the ground set of size {ground_size}"
                )));
            }
        }
        Ok(SubsetDataset { ground_size, examples, catalog: None })
    }

    pub fn with_catalog(mut self, catalog: Catalog) -> Self {
        self.catalog = Some(catalog);
        self
    }

    pub fn ground_size(&self) -> usize {
        self.ground_size
    }

    pub fn examples(&self) -> &[Subset] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn catalog(&self) -> Option<&Catalog> {
        self.catalog.as_ref()
    }

    /// Largest example size (0 for an empty dataset).
    pub fn max_set_size(&self) -> usize {
        self.examples.iter().map(Subset::len).max().unwrap_or(0)
    }

    pub fn mean_set_size(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        self.examples.iter().map(Subset::len).sum::<usize>() as f64 / self.examples.len() as f64
    }

    /// `histogram[s]` = number of examples of size `s`.
    pub fn size_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.max_set_size() + 1];
        for y in &self.examples {
            h[y.len()] += 1;
        }
        h
    }

    /// Number of examples containing each item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.ground_size];
        for y in &self.examples {
            for &i in y.items() {
                c[i] += 1;
            }
        }
        c
    }

    /// Same ground set and catalog, different examples.
    pub fn with_examples(&self, examples: Vec<Subset>) -> Self {
        SubsetDataset {
            ground_size: self.ground_size,
            examples,
            catalog: self.catalog.clone(),
        }
    }

    pub fn display_name(&self, item: usize) -> String {
        self.catalog
            .as_ref()
            .and_then(|c| c.get(&item).cloned())
            .unwrap_or_else(|| format!("item {}", item + 1))
    }
}

/// Optional preprocessing applied at ingestion. All filters default to off.
#[derive(Clone, Debug, Default)]
pub struct IngestFilter {
    /// Drop examples with fewer items (applied first, to the raw examples).
    pub min_set_size: Option<usize>,
    /// Drop examples with more items (applied first, to the raw examples).
    pub max_set_size: Option<usize>,
    /// Keep only the most frequent items (ties broken by lower index).
    pub top_items: Option<usize>,
    /// Drop items occurring in fewer examples than this.
    pub min_item_support: Option<usize>,
    /// Drop examples that become empty after item filtering.
    pub drop_empty: bool,
    /// Fail if fewer examples than this remain.
    pub min_examples: Option<usize>,
}

/// Applies `filter`, re-indexing the surviving items compactly in their
/// original order. The catalog follows the re-indexing.
pub fn apply_filter(data: &SubsetDataset, filter: &IngestFilter) -> Result<SubsetDataset> {
    let sized: Vec<&Subset> = data
        .examples
        .iter()
        .filter(|y| filter.min_set_size.map_or(true, |m| y.len() >= m))
        .filter(|y| filter.max_set_size.map_or(true, |m| y.len() <= m))
        .collect();

    let mut counts = vec![0usize; data.ground_size];
    for y in &sized {
        for &i in y.items() {
            counts[i] += 1;
        }
    }
    let mut keep = vec![true; data.ground_size];
    if let Some(top) = filter.top_items {
        let mut order: Vec<usize> = (0..data.ground_size).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        for &i in order.iter().skip(top) {
            keep[i] = false;
        }
    }
    if let Some(min) = filter.min_item_support {
        for (i, &c) in counts.iter().enumerate() {
            if c < min {
                keep[i] = false;
            }
        }
    }
    let mut remap = vec![usize::MAX; data.ground_size];
    let mut next = 0;
    for i in 0..data.ground_size {
        if keep[i] {
            remap[i] = next;
            next += 1;
        }
    }
    if next == 0 {
        return Err(Error::InvalidInput("ingestion filters removed every item".into()));
    }
    let examples: Vec<Subset> = sized
        .into_iter()
        .map(|y| {
            Subset::from_sorted_unchecked(
                y.items().iter().filter(|&&i| keep[i]).map(|&i| remap[i]).collect(),
            )
        })
        .filter(|y| !(filter.drop_empty && y.is_empty()))
        .collect();
    if let Some(min) = filter.min_examples {
        if examples.len() < min {
            return Err(Error::InvalidInput(format!(
                "only {} examples remain after filtering, need {min}",
                examples.len()
            )));
        }
    }
    let mut out = SubsetDataset::new(next, examples)?;
    if let Some(cat) = &data.catalog {
        out.catalog = Some(
            cat.iter()
                .filter(|(&i, _)| i < data.ground_size && keep[i])
                .map(|(&i, name)| (remap[i], name.clone()))
                .collect(),
        );
    }
    Ok(out)
}

/// Seeded shuffle split. The test part gets `floor(n * test_fraction)`
/// examples (at least one, at most `n - 1`); both parts keep the original
/// example order.
pub fn split_train_test(
    data: &SubsetDataset,
    test_fraction: f64,
    rng: &mut RngStream,
) -> Result<(SubsetDataset, SubsetDataset)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("cannot split {n} examples")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n_test = ((n as f64 * test_fraction + 1e-9).floor() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let mut test_idx = perm[..n_test].to_vec();
    let mut train_idx = perm[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |idx: &[usize]| data.with_examples(idx.iter().map(|&i| data.examples[i].clone()).collect());
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// `count` examples drawn without replacement, in original order.
pub fn subsample(data: &SubsetDataset, count: usize, rng: &mut RngStream) -> SubsetDataset {
    let mut perm: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut perm);
    let mut idx = perm[..count.min(data.len())].to_vec();
    idx.sort_unstable();
    data.with_examples(idx.iter().map(|&i| data.examples[i].clone()).collect())
}
