//! Tabular case/control data: integer-coded features, binary labels, a
//! train/test flag per record and an optional volatile `guess` column.
//!
//! Columns are stored column-major behind `Arc`s, so deriving a dataset that
//! adds, drops or reorders columns never copies the untouched ones.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Name of the label column in CSV files.
pub const LABEL_COLUMN: &str = "class";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    columns: Vec<Arc<[i32]>>,
    labels: Arc<[u8]>,
    partition: Arc<[Split]>,
    guess: Option<Arc<[u8]>>,
}

impl Dataset {
    /// Builds a dataset from feature columns. Every row starts as `Train`.
    pub fn new(feature_names: Vec<String>, columns: Vec<Vec<i32>>, labels: Vec<u8>) -> Result<Self> {
        if feature_names.len() != columns.len() {
            return Err(Error::Contract(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                columns.len()
            )));
        }
        let n = labels.len();
        if let Some((j, _)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::Contract(format!(
                "column `{}` has {} values, expected {}",
                feature_names[j],
                columns[j].len(),
                n
            )));
        }
        check_unique_names(&feature_names)?;
        check_labels(&labels)?;
        Ok(Dataset {
            feature_names,
            columns: columns.into_iter().map(Arc::from).collect(),
            labels: labels.into(),
            partition: vec![Split::Train; n].into(),
            guess: None,
        })
    }

    /// Row-major convenience constructor.
    pub fn from_rows(feature_names: Vec<String>, rows: &[Vec<i32>], labels: Vec<u8>) -> Result<Self> {
        let f = feature_names.len();
        if let Some(i) = rows.iter().position(|r| r.len() != f) {
            return Err(Error::Contract(format!(
                "row {i} has {} values, expected {f}",
                rows[i].len()
            )));
        }
        let columns = (0..f).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::new(feature_names, columns, labels)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> &[i32] {
        &self.columns[j]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn partition(&self) -> &[Split] {
        &self.partition
    }

    pub fn guess(&self) -> Option<&[u8]> {
        self.guess.as_deref()
    }

    pub fn train_rows(&self) -> Vec<usize> {
        self.rows_in(Split::Train)
    }

    pub fn test_rows(&self) -> Vec<usize> {
        self.rows_in(Split::Test)
    }

    fn rows_in(&self, split: Split) -> Vec<usize> {
        self.partition
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn with_partition(&self, partition: Vec<Split>) -> Result<Self> {
        if partition.len() != self.n_rows() {
            return Err(Error::Contract(format!(
                "partition has {} flags for {} rows",
                partition.len(),
                self.n_rows()
            )));
        }
        Ok(Dataset {
            partition: partition.into(),
            ..self.clone()
        })
    }

    pub fn with_guess(&self, guess: Vec<u8>) -> Result<Self> {
        if guess.len() != self.n_rows() || guess.iter().any(|&g| g > 1) {
            return Err(Error::Contract("guess must hold one 0/1 value per row".into()));
        }
        Ok(Dataset {
            guess: Some(guess.into()),
            ..self.clone()
        })
    }

    pub fn without_guess(&self) -> Self {
        Dataset {
            guess: None,
            ..self.clone()
        }
    }

    /// Appends a feature column; the name must not already exist.
    pub fn with_feature(&self, name: String, values: Vec<i32>) -> Result<Self> {
        if values.len() != self.n_rows() {
            return Err(Error::Contract(format!(
                "new feature `{name}` has {} values for {} rows",
                values.len(),
                self.n_rows()
            )));
        }
        if self.feature_index(&name).is_some() {
            return Err(Error::Contract(format!("feature `{name}` already exists")));
        }
        let mut out = self.clone();
        out.feature_names.push(name);
        out.columns.push(values.into());
        Ok(out)
    }

    /// Keeps the listed feature columns, in the order given.
    pub fn select_features(&self, indices: &[usize]) -> Self {
        Dataset {
            feature_names: indices.iter().map(|&j| self.feature_names[j].clone()).collect(),
            columns: indices.iter().map(|&j| Arc::clone(&self.columns[j])).collect(),
            ..self.clone()
        }
    }

    /// Appends every column of `other` whose name is not present here.
    /// Both datasets must describe the same records.
    pub(crate) fn union_features(&self, other: &Dataset) -> Self {
        let present: HashSet<&str> = self.feature_names.iter().map(String::as_str).collect();
        let mut out = self.without_guess();
        for (name, col) in other.feature_names.iter().zip(&other.columns) {
            if !present.contains(name.as_str()) {
                out.feature_names.push(name.clone());
                out.columns.push(Arc::clone(col));
            }
        }
        out
    }

    /// True when both datasets hold the same records: row count, labels and
    /// partition flags.
    pub fn same_records(&self, other: &Dataset) -> bool {
        self.n_rows() == other.n_rows()
            && (Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels)
            && (Arc::ptr_eq(&self.partition, &other.partition) || self.partition == other.partition)
    }

    /// Reads a comma-separated file with a header row and a `class` column.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
            .clone();
        if header.is_empty() {
            return Err(Error::Format("empty header row".into()));
        }
        let label_col = header
            .iter()
            .position(|h| h == LABEL_COLUMN)
            .ok_or_else(|| Error::Format(format!("no `{LABEL_COLUMN}` column in header")))?;
        let feature_names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != label_col)
            .map(|(_, h)| h.to_string())
            .collect();
        check_unique_names(&feature_names).map_err(|e| Error::Format(e.to_string()))?;

        let mut columns: Vec<Vec<i32>> = vec![Vec::new(); feature_names.len()];
        let mut labels = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::Format(format!("line {line}: {e}")))?;
            let mut feature = 0;
            for (j, cell) in record.iter().enumerate() {
                let value: i32 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    column: j + 1,
                    message: format!("`{cell}` is not an integer"),
                })?;
                if j == label_col {
                    if value != 0 && value != 1 {
                        return Err(Error::Data(format!(
                            "line {line}: class label {value} is not 0 or 1"
                        )));
                    }
                    labels.push(value as u8);
                } else {
                    columns[feature].push(value);
                    feature += 1;
                }
            }
        }
        Self::new(feature_names, columns, labels)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes features in column order followed by `class`. Partition and
    /// guess are not persisted.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(LABEL_COLUMN);
        w.write_record(&header).map_err(csv_err)?;
        let mut row: Vec<String> = Vec::with_capacity(self.n_features() + 1);
        for i in 0..self.n_rows() {
            row.clear();
            row.extend(self.columns.iter().map(|c| c[i].to_string()));
            row.push(self.labels[i].to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_unique_names(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Contract(format!("duplicate feature name `{n}`")));
        }
    }
    Ok(())
}

fn check_labels(labels: &[u8]) -> Result<()> {
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::Data("both classes must be present".into()));
    }
    Ok(())
}

/// Row indices of each class, in row order.
fn rows_by_class(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    by_class
}

/// Flags `round(train_fraction * class_count)` rows of each class as Train
/// (half rounds up) and the rest as Test. Each class keeps at least one row
/// on either side.
pub fn stratified_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Contract(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut partition = vec![Split::Test; ds.n_rows()];
    for (class, mut rows) in rows_by_class(ds.labels()).into_iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::Data(format!(
                "class {class} has {} rows; stratified splitting needs at least 2",
                rows.len()
            )));
        }
        let n_train = ((train_fraction * rows.len() as f64 + 0.5).floor() as usize).clamp(1, rows.len() - 1);
        rows.shuffle(&mut rng);
        for &i in &rows[..n_train] {
            partition[i] = Split::Train;
        }
    }
    ds.with_partition(partition)
}

/// Stratified fold assignment: fold id in `0..k` for every row. Within each
/// class the rows are shuffled and dealt round-robin, so fold sizes per class
/// differ by at most one.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Contract(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut folds = vec![0; labels.len()];
    // The rotation carries over between classes so fold sizes differ by at
    // most one overall.
    let mut next = 0;
    for (class, mut rows) in rows_by_class(labels).into_iter().enumerate() {
        if rows.len() < k {
            return Err(Error::Data(format!(
                "class {class} has {} rows, fewer than {k} folds",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        for &i in &rows {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

/// Mean of per-class recall: (sensitivity + specificity) / 2.
pub fn balanced_accuracy(labels: &[u8], guesses: &[u8]) -> Result<f64> {
    if labels.len() != guesses.len() {
        return Err(Error::Contract(format!(
            "{} labels vs {} guesses",
            labels.len(),
            guesses.len()
        )));
    }
    balanced_accuracy_over(labels, guesses, 0..labels.len())
}

/// Balanced accuracy restricted to the given row indices.
pub fn balanced_accuracy_over(
    labels: &[u8],
    guesses: &[u8],
    rows: impl IntoIterator<Item = usize>,
) -> Result<f64> {
    let mut total = [0usize; 2];
    let mut correct = [0usize; 2];
    for i in rows {
        let l = labels[i] as usize;
        total[l] += 1;
        if guesses[i] == labels[i] {
            correct[l] += 1;
        }
    }
    if total[0] == 0 || total[1] == 0 {
        return Err(Error::Contract(
            "balanced accuracy needs both classes among the scored rows".into(),
        ));
    }
    Ok(0.5 * (correct[0] as f64 / total[0] as f64 + correct[1] as f64 / total[1] as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("snp{}", j + 1)).collect()
    }

    fn two_class(n0: usize, n1: usize) -> Dataset {
        let labels: Vec<u8> = std::iter::repeat(0).take(n0).chain(std::iter::repeat(1).take(n1)).collect();
        let col = (0..labels.len() as i32).map(|i| i % 3).collect();
        Dataset::new(names(1), vec![col], labels).unwrap()
    }

    #[test]
    fn minimal_csv_loads() {
        let text = "snp1,snp2,class\n0,1,0\n1,2,1\n2,0,0\n0,0,1\n";
        let ds = Dataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.n_rows(), 4);
        assert_eq!(ds.labels(), &[0, 1, 0, 1]);
        assert_eq!(ds.column(1), &[1, 2, 0, 0]);
        assert!(ds.partition().iter().all(|s| *s == Split::Train));
        assert!(ds.guess().is_none());
    }

    #[test]
    fn class_column_may_appear_anywhere() {
        let ds = Dataset::read_csv("class,a\n1,5\n0,7\n".as_bytes()).unwrap();
        assert_eq!(ds.feature_names(), &["a".to_string()]);
        assert_eq!(ds.column(0), &[5, 7]);
    }

    #[test]
    fn missing_class_column_is_format_error() {
        let err = Dataset::read_csv("a,b\n0,1\n1,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn non_integer_cell_reports_coordinates() {
        let err = Dataset::read_csv("a,b,class\n0,1,0\n1,x,1\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn single_label_is_data_error() {
        let err = Dataset::read_csv("a,class\n0,1\n1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn duplicate_header_rejected() {
        let err = Dataset::read_csv("a,a,class\n0,1,0\n1,0,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn write_then_read_is_identity_and_bytes_stable() {
        let text = "snp1,snp2,class\n0,1,0\n1,2,1\n2,0,0\n";
        let ds = Dataset::read_csv(text.as_bytes()).unwrap();
        let mut out = Vec::new();
        ds.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), text);
        assert_eq!(Dataset::read_csv(out.as_slice()).unwrap(), ds);
    }

    #[test]
    fn split_exact_counts() {
        let ds = stratified_split(&two_class(100, 100), 0.75, 3).unwrap();
        let train = ds.train_rows();
        let cases = train.iter().filter(|&&i| ds.labels()[i] == 1).count();
        assert_eq!(cases, 75);
        assert_eq!(train.len() - cases, 75);
    }

    #[test]
    fn split_rounds_half_up() {
        // 0.75 * 101 = 75.75 -> 76; 0.5 * 5 = 2.5 -> 3
        let ds = stratified_split(&two_class(4, 101), 0.75, 1).unwrap();
        let cases = ds.train_rows().iter().filter(|&&i| ds.labels()[i] == 1).count();
        assert_eq!(cases, 76);
        let ds = stratified_split(&two_class(5, 5), 0.5, 1).unwrap();
        let controls = ds.train_rows().iter().filter(|&&i| ds.labels()[i] == 0).count();
        assert_eq!(controls, 3);
    }

    #[test]
    fn split_keeps_both_sides_for_tiny_classes() {
        let ds = stratified_split(&two_class(2, 2), 0.75, 9).unwrap();
        assert_eq!(ds.train_rows().len(), 2);
        assert_eq!(ds.test_rows().len(), 2);
    }

    #[test]
    fn split_rejects_singleton_class() {
        assert!(matches!(stratified_split(&two_class(1, 5), 0.75, 0), Err(Error::Data(_))));
        assert!(matches!(stratified_split(&two_class(3, 5), 1.0, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let ds = two_class(40, 40);
        let a = stratified_split(&ds, 0.75, 11).unwrap();
        let b = stratified_split(&ds, 0.75, 11).unwrap();
        let c = stratified_split(&ds, 0.75, 12).unwrap();
        assert_eq!(a.partition(), b.partition());
        assert_ne!(a.partition(), c.partition());
        // features and labels keep their row order
        assert_eq!(a.column(0), ds.column(0));
        assert_eq!(a.labels(), ds.labels());
    }

    #[test]
    fn folds_cover_and_balance() {
        let labels: Vec<u8> = (0..23).map(|i| (i % 2) as u8).collect();
        let folds = stratified_folds(&labels, 5, 4).unwrap();
        for f in 0..5 {
            let members: Vec<usize> = (0..23).filter(|&i| folds[i] == f).collect();
            assert!(members.len() >= 4 && members.len() <= 5);
        }
        assert!(stratified_folds(&labels, 20, 0).is_err());
    }

    #[test]
    fn balanced_accuracy_examples() {
        assert_eq!(balanced_accuracy(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[1, 0, 1, 0], &[0, 0, 0, 0]).unwrap(), 0.5);
        // recall(1) = 1/2, recall(0) = 2/2
        assert_eq!(balanced_accuracy(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap(), 0.75);
    }

    #[test]
    fn balanced_accuracy_contract_errors() {
        assert!(balanced_accuracy(&[1, 0], &[1]).is_err());
        assert!(balanced_accuracy(&[1, 1], &[1, 0]).is_err());
    }

    proptest! {
        #[test]
        fn balanced_accuracy_symmetries(
            pairs in proptest::collection::vec((0u8..2, 0u8..2), 2..60),
            rot in 0usize..60,
        ) {
            let mut pairs = pairs;
            pairs[0].0 = 0;
            pairs[1].0 = 1;
            let (l, g): (Vec<u8>, Vec<u8>) = pairs.iter().cloned().unzip();
            let base = balanced_accuracy(&l, &g).unwrap();

            let mut permuted = pairs.clone();
            let r = rot % permuted.len();
            permuted.rotate_left(r);
            permuted.reverse();
            let (pl, pg): (Vec<u8>, Vec<u8>) = permuted.into_iter().unzip();
            prop_assert!((balanced_accuracy(&pl, &pg).unwrap() - base).abs() < 1e-12);

            let fl: Vec<u8> = l.iter().map(|x| 1 - x).collect();
            let fg: Vec<u8> = g.iter().map(|x| 1 - x).collect();
            prop_assert!((balanced_accuracy(&fl, &fg).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn csv_round_trip(
            rows in proptest::collection::vec(proptest::collection::vec(0i32..3, 3), 2..30),
        ) {
            let labels: Vec<u8> = (0..rows.len()).map(|i| (i % 2) as u8).collect();
            let ds = Dataset::from_rows(names(3), &rows, labels).unwrap();
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            prop_assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), ds);
        }
    }
}
