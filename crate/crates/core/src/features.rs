//! Feature schemas, record encoding, bid-log ingestion and dataset splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pricegrid::{scale_price, PriceGrid};

pub const MAX_EMBEDDING_DIM: usize = 64;

/// One raw feature record: field name to textual value. An absent key or an
/// empty string both mean "missing".
pub type RawRecord = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Cat,
    Num,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldGroup {
    Publisher,
    User,
    Ad,
    Context,
}

/// Sidecar declaration of one feature column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: String,
    pub kind: FieldKind,
    pub group: FieldGroup,
}

impl FieldDecl {
    pub fn cat(name: &str, group: FieldGroup) -> Self {
        FieldDecl {
            name: name.to_string(),
            kind: FieldKind::Cat,
            group,
        }
    }

    pub fn num(name: &str, group: FieldGroup) -> Self {
        FieldDecl {
            name: name.to_string(),
            kind: FieldKind::Num,
            group,
        }
    }
}

pub fn read_field_decls(path: &Path) -> Result<Vec<FieldDecl>> {
    let file = File::open(path)?;
    let decls: Vec<FieldDecl> = serde_json::from_reader(BufReader::new(file))?;
    Ok(decls)
}

pub fn write_field_decls(path: &Path, decls: &[FieldDecl]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, decls)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalField {
    pub name: String,
    pub group: FieldGroup,
    /// Observed values to dense indices `0..cardinality`.
    pub vocab: BTreeMap<String, usize>,
    pub missing_index: usize,
    pub oov_index: usize,
    pub embedding_dim: usize,
}

impl CategoricalField {
    pub fn cardinality(&self) -> usize {
        self.vocab.len()
    }

    /// Table size including the missing and out-of-vocabulary slots.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len() + 2
    }

    pub fn index_of(&self, value: Option<&str>) -> usize {
        match value {
            None | Some("") => self.missing_index,
            Some(v) => self.vocab.get(v).copied().unwrap_or(self.oov_index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericField {
    pub name: String,
    pub group: FieldGroup,
    pub min: f64,
    pub max: f64,
    pub fill: f64,
}

impl NumericField {
    pub fn normalize(&self, v: f64) -> f64 {
        if self.max <= self.min {
            return 0.0;
        }
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub categorical: Vec<CategoricalField>,
    pub numeric: Vec<NumericField>,
}

impl FeatureSchema {
    /// Width of the 1-order vector: all embedding dims plus one slot per
    /// numeric field.
    pub fn first_order_width(&self) -> usize {
        self.categorical.iter().map(|f| f.embedding_dim).sum::<usize>() + self.numeric.len()
    }

    /// Stable content hash, hex encoded.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&canonical);
        let mut out = String::with_capacity(64);
        for byte in digest.iter() {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }

    pub fn categorical_field(&self, name: &str) -> Option<(usize, &CategoricalField)> {
        self.categorical.iter().enumerate().find(|(_, f)| f.name == name)
    }

    /// Field declarations in schema order (categoricals first).
    pub fn decls(&self) -> Vec<FieldDecl> {
        self.categorical
            .iter()
            .map(|f| FieldDecl {
                name: f.name.clone(),
                kind: FieldKind::Cat,
                group: f.group,
            })
            .chain(self.numeric.iter().map(|f| FieldDecl {
                name: f.name.clone(),
                kind: FieldKind::Num,
                group: f.group,
            }))
            .collect()
    }
}

/// Square-root embedding sizing, capped at [`MAX_EMBEDDING_DIM`].
pub fn embedding_dim(cardinality: usize) -> Result<usize> {
    if cardinality == 0 {
        return Err(Error::config("embedding for an empty vocabulary"));
    }
    let mut dim = (cardinality as f64).sqrt().ceil() as usize;
    // guard the float sqrt at perfect squares
    while dim > 1 && (dim - 1) * (dim - 1) >= cardinality {
        dim -= 1;
    }
    while dim * dim < cardinality {
        dim += 1;
    }
    Ok(dim.min(MAX_EMBEDDING_DIM))
}

fn parse_numeric(value: Option<&String>) -> Option<f64> {
    value
        .filter(|v| !v.is_empty())
        .and_then(|v| v.parse::<f64>().ok())
        .filter(|v| v.is_finite())
}

/// Builds vocabularies and numeric statistics from training records.
pub fn build_schema<'a, I>(records: I, fields: &[FieldDecl]) -> Result<FeatureSchema>
where
    I: IntoIterator<Item = &'a RawRecord>,
{
    let mut seen_cats: Vec<BTreeSet<String>> = Vec::new();
    let mut nums: Vec<(f64, f64, f64, usize)> = Vec::new();
    let cat_decls: Vec<&FieldDecl> = fields.iter().filter(|f| f.kind == FieldKind::Cat).collect();
    let num_decls: Vec<&FieldDecl> = fields.iter().filter(|f| f.kind == FieldKind::Num).collect();
    seen_cats.resize(cat_decls.len(), BTreeSet::new());
    nums.resize(num_decls.len(), (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0));

    let mut count = 0usize;
    for record in records {
        count += 1;
        for (decl, seen) in cat_decls.iter().zip(seen_cats.iter_mut()) {
            if let Some(v) = record.get(&decl.name).filter(|v| !v.is_empty()) {
                if !seen.contains(v) {
                    seen.insert(v.clone());
                }
            }
        }
        for (decl, stats) in num_decls.iter().zip(nums.iter_mut()) {
            if let Some(v) = parse_numeric(record.get(&decl.name)) {
                stats.0 = stats.0.min(v);
                stats.1 = stats.1.max(v);
                stats.2 += v;
                stats.3 += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::data("cannot build a schema from zero records"));
    }

    let mut categorical = Vec::with_capacity(cat_decls.len());
    for (decl, seen) in cat_decls.iter().zip(seen_cats) {
        let vocab: BTreeMap<String, usize> =
            seen.into_iter().enumerate().map(|(i, v)| (v, i)).collect();
        let card = vocab.len();
        categorical.push(CategoricalField {
            name: decl.name.clone(),
            group: decl.group,
            missing_index: card,
            oov_index: card + 1,
            embedding_dim: embedding_dim(card + 2)?,
            vocab,
        });
    }
    let mut numeric = Vec::with_capacity(num_decls.len());
    for (decl, (min, max, sum, n)) in num_decls.iter().zip(nums) {
        if n == 0 {
            return Err(Error::data(format!(
                "numeric field {} has no finite values",
                decl.name
            )));
        }
        numeric.push(NumericField {
            name: decl.name.clone(),
            group: decl.group,
            min,
            max,
            fill: sum / n as f64,
        });
    }
    Ok(FeatureSchema {
        categorical,
        numeric,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub cat_indices: Vec<usize>,
    pub num_values: Vec<f64>,
}

/// Total, deterministic encoding of a record under a fixed schema.
pub fn encode(record: &RawRecord, schema: &FeatureSchema) -> EncodedSample {
    let cat_indices = schema
        .categorical
        .iter()
        .map(|f| f.index_of(record.get(&f.name).map(String::as_str)))
        .collect();
    let num_values = schema
        .numeric
        .iter()
        .map(|f| f.normalize(parse_numeric(record.get(&f.name)).unwrap_or(f.fill)))
        .collect();
    EncodedSample {
        cat_indices,
        num_values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Won { winning_scaled: f64 },
    /// The hidden winning price is for evaluation only; training never
    /// reads it.
    Lost { hidden_winning_scaled: Option<f64> },
}

const ORDER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidObservation {
    pub sample: EncodedSample,
    pub bid_scaled: f64,
    pub outcome: Outcome,
}

impl BidObservation {
    /// Checks the second-price ordering: a win pays at most the bid, a loss
    /// means the winning price was at least the bid.
    pub fn new(sample: EncodedSample, bid_scaled: f64, outcome: Outcome) -> Result<Self> {
        if !bid_scaled.is_finite() {
            return Err(Error::data("non-finite bid"));
        }
        match outcome {
            Outcome::Won { winning_scaled } => {
                if !winning_scaled.is_finite() || winning_scaled > bid_scaled + ORDER_SLACK {
                    return Err(Error::data(format!(
                        "won auction with winning price {winning_scaled} above bid {bid_scaled}"
                    )));
                }
            }
            Outcome::Lost {
                hidden_winning_scaled: Some(z),
            } => {
                if !z.is_finite() || z < bid_scaled - ORDER_SLACK {
                    return Err(Error::data(format!(
                        "lost auction with winning price {z} below bid {bid_scaled}"
                    )));
                }
            }
            Outcome::Lost { .. } => {}
        }
        Ok(BidObservation {
            sample,
            bid_scaled,
            outcome,
        })
    }

    pub fn is_won(&self) -> bool {
        matches!(self.outcome, Outcome::Won { .. })
    }

    /// Winning price visible to a bidder (wins only).
    pub fn observed_winning_price(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Won { winning_scaled } => Some(winning_scaled),
            Outcome::Lost { .. } => None,
        }
    }

    /// Winning price for evaluation, including hidden prices of losses.
    pub fn true_winning_price(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Won { winning_scaled } => Some(winning_scaled),
            Outcome::Lost {
                hidden_winning_scaled,
            } => hidden_winning_scaled,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Arc<FeatureSchema>,
    pub observations: Vec<BidObservation>,
    pub grid: PriceGrid,
}

impl Dataset {
    pub fn new(schema: Arc<FeatureSchema>, observations: Vec<BidObservation>, grid: PriceGrid) -> Self {
        Dataset {
            schema,
            observations,
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn won_count(&self) -> usize {
        self.observations.iter().filter(|o| o.is_won()).count()
    }

    pub fn lost_count(&self) -> usize {
        self.len() - self.won_count()
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            observations: indices.iter().map(|&i| self.observations[i].clone()).collect(),
            grid: self.grid,
        }
    }
}

/// One parsed row of the bid-log TSV, prices still raw.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub won: bool,
    pub bid_price: f64,
    pub winning_price: Option<f64>,
    pub duration: f64,
    pub record: RawRecord,
}

impl LogRow {
    pub fn to_observation(&self, schema: &FeatureSchema) -> Result<BidObservation> {
        let bid = scale_price(self.bid_price, self.duration)?;
        let z = self
            .winning_price
            .map(|p| scale_price(p, self.duration))
            .transpose()?;
        let outcome = if self.won {
            Outcome::Won {
                winning_scaled: z.ok_or_else(|| Error::data("WON row without winning price"))?,
            }
        } else {
            Outcome::Lost {
                hidden_winning_scaled: z,
            }
        };
        BidObservation::new(encode(&self.record, schema), bid, outcome)
    }
}

const FIXED_COLUMNS: [&str; 4] = ["outcome", "bid_price", "winning_price", "duration"];

/// Rows that failed to parse or violated price ordering.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub total_rows: usize,
    pub skipped: Vec<(usize, String)>,
}

impl IngestReport {
    pub fn skip_count(&self) -> usize {
        self.skipped.len()
    }
}

fn parse_row(line: &str, header: &[String], fields: &[FieldDecl]) -> Result<LogRow> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != header.len() {
        return Err(Error::data(format!(
            "expected {} columns, found {}",
            header.len(),
            cols.len()
        )));
    }
    let won = match cols[0] {
        "WON" => true,
        "LOST" => false,
        other => return Err(Error::data(format!("unknown outcome {other:?}"))),
    };
    let number = |s: &str, what: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::data(format!("bad {what} {s:?}")))
    };
    let bid_price = number(cols[1], "bid_price")?;
    let winning_price = if cols[2].trim().is_empty() {
        None
    } else {
        Some(number(cols[2], "winning_price")?)
    };
    let duration = number(cols[3], "duration")?;
    let mut record = RawRecord::new();
    for decl in fields {
        let pos = header
            .iter()
            .position(|h| h == &decl.name)
            .ok_or_else(|| Error::data(format!("missing column {}", decl.name)))?;
        let v = cols[pos];
        if !v.is_empty() {
            record.insert(decl.name.clone(), v.to_string());
        }
    }
    Ok(LogRow {
        won,
        bid_price,
        winning_price,
        duration,
        record,
    })
}

/// Reads and syntactically validates the TSV; malformed rows are reported
/// and skipped.
pub fn read_log_rows(path: &Path, fields: &[FieldDecl]) -> Result<(Vec<LogRow>, IngestReport)> {
    let (rows, report) = read_numbered_rows(path, fields)?;
    Ok((rows.into_iter().map(|(_, r)| r).collect(), report))
}

fn read_numbered_rows(
    path: &Path,
    fields: &[FieldDecl],
) -> Result<(Vec<(usize, LogRow)>, IngestReport)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h?.split('\t').map(str::to_string).collect(),
        None => return Err(Error::data(format!("{} is empty", path.display()))),
    };
    if header.len() < FIXED_COLUMNS.len()
        || header.iter().zip(FIXED_COLUMNS).any(|(h, f)| h != f)
    {
        return Err(Error::data(format!("unexpected header {header:?}")));
    }
    for decl in fields {
        if !header.contains(&decl.name) {
            return Err(Error::data(format!("declared field {} not in header", decl.name)));
        }
    }
    let mut rows = Vec::new();
    let mut report = IngestReport::default();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let line_no = i + 2;
        report.total_rows += 1;
        match parse_row(&line, &header, fields) {
            Ok(row) => rows.push((line_no, row)),
            Err(e) => report.skipped.push((line_no, e.to_string())),
        }
    }
    Ok((rows, report))
}

/// Ingests a bid log. Without a schema one is built from this file first.
pub fn read_log(
    path: &Path,
    fields: &[FieldDecl],
    schema: Option<Arc<FeatureSchema>>,
    grid: PriceGrid,
) -> Result<(Dataset, IngestReport)> {
    let (rows, mut report) = read_numbered_rows(path, fields)?;
    // validate price ordering before the schema sees any record
    let empty = FeatureSchema {
        categorical: vec![],
        numeric: vec![],
    };
    let mut valid = Vec::with_capacity(rows.len());
    for (line_no, row) in rows {
        match row.to_observation(&empty) {
            Ok(_) => valid.push(row),
            Err(e) => report.skipped.push((line_no, e.to_string())),
        }
    }
    report.skipped.sort_by_key(|(line, _)| *line);
    if report.total_rows == 0 {
        return Err(Error::data(format!("{} has no rows", path.display())));
    }
    if report.skip_count() * 2 > report.total_rows {
        return Err(Error::data(format!(
            "{} of {} rows rejected in {}",
            report.skip_count(),
            report.total_rows,
            path.display()
        )));
    }
    let schema = match schema {
        Some(s) => s,
        None => Arc::new(build_schema(valid.iter().map(|r| &r.record), fields)?),
    };
    let observations = valid
        .iter()
        .map(|r| r.to_observation(&schema))
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset::new(schema, observations, grid), report))
}

fn format_price(p: f64) -> String {
    format!("{p:?}")
}

/// Writes rows in the TSV layout, feature columns in declaration order.
pub fn write_log(path: &Path, fields: &[FieldDecl], rows: &[LogRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(fields.iter().map(|f| f.name.as_str()));
    writeln!(w, "{}", header.join("\t"))?;
    for row in rows {
        write!(
            w,
            "{}\t{}\t{}\t{}",
            if row.won { "WON" } else { "LOST" },
            format_price(row.bid_price),
            row.winning_price.map(format_price).unwrap_or_default(),
            format_price(row.duration)
        )?;
        for decl in fields {
            write!(w, "\t{}", row.record.get(&decl.name).map(String::as_str).unwrap_or(""))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn check_fractions(fractions: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = fractions;
    if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    Ok(())
}

/// Seeded shuffle of `0..n` cut into (train, val, test) index lists.
pub fn split_indices(
    n: usize,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    check_fractions(fractions)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (n as f64 * fractions.1 + 1e-9).floor() as usize;
    let n_test = (n as f64 * fractions.2 + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok((order, val, test))
}

pub fn split(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (tr, va, te) = split_indices(dataset.len(), fractions, seed)?;
    Ok((dataset.subset(&tr), dataset.subset(&va), dataset.subset(&te)))
}
