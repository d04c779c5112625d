use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::table::Table;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    /// File listing 0-based test row indices, one per line; overrides
    /// `test_fraction`.
    pub index_file: Option<PathBuf>,
    /// Grouping column; test rows are then allocated to groups in
    /// proportion to their size.
    pub stratify: Option<String>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn fraction(test_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            test_fraction,
            index_file: None,
            stratify: None,
            seed,
        }
    }
}

/// Row indices `(train, test)`, each sorted; together they partition the
/// table.
pub fn split(table: &Table, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = table.n_rows();
    let mut is_test = vec![false; n];
    if let Some(path) = &spec.index_file {
        for (line_no, line) in std::fs::read_to_string(path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let i: usize = line
                .parse()
                .map_err(|_| Error::Data(format!("{}:{}: `{line}` is not a row index", path.display(), line_no + 1)))?;
            if i >= n {
                return Err(Error::Data(format!("test index {i} exceeds the {n} rows")));
            }
            is_test[i] = true;
        }
    } else {
        if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
            return Err(Error::Config(format!("test fraction {} must lie in (0, 1)", spec.test_fraction)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let total = (spec.test_fraction * n as f64).round() as usize;
        let groups = match &spec.stratify {
            Some(col) => group_rows(table, col)?,
            None => vec![(0..n).collect()],
        };
        for (mut rows, k) in groups.iter().cloned().zip(allocate(&groups, total)) {
            rows.shuffle(&mut rng);
            for &i in &rows[..k] {
                is_test[i] = true;
            }
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_test[i]);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("split leaves an empty training or test set".into()));
    }
    Ok((train, test))
}

fn group_rows(table: &Table, column: &str) -> Result<Vec<Vec<usize>>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, key) in table.text_column(column)?.into_iter().enumerate() {
        groups.entry(key).or_default().push(i);
    }
    Ok(groups.into_values().collect())
}

/// Largest-remainder allocation of `total` draws proportional to group size.
fn allocate(groups: &[Vec<usize>], total: usize) -> Vec<usize> {
    let n: usize = groups.iter().map(Vec::len).sum();
    let quotas: Vec<f64> = groups.iter().map(|g| total as f64 * g.len() as f64 / n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
    let mut left = total - counts.iter().sum::<usize>();
    for g in order {
        if left == 0 {
            break;
        }
        if counts[g] < groups[g].len() {
            counts[g] += 1;
            left -= 1;
        }
    }
    counts
}
