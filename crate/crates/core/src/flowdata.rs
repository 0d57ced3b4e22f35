//! Interval flow measurements: ingestion, day filtering, centering and
//! partial-day splitting.
//!
//! A [`FlowDataset`] stores one row per day. Each row is the concatenation of
//! `M` movement blocks, each block holding that movement's `T` interval flows
//! in vehicles per hour:
//!
//! ```text
//! [ x_1(1) .. x_1(T) | x_2(1) .. x_2(T) | ... | x_M(1) .. x_M(T) ]
//! ```
//!
//! Interval indices are 1-based throughout the public API.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

const MINUTES_PER_DAY: u32 = 1440;
const CSV_HEADER: [&str; 4] = ["date", "movement", "interval_index", "flow_vph"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Weekday {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl Weekday {
    pub const ALL: [Weekday; 7] = [
        Weekday::Mon,
        Weekday::Tue,
        Weekday::Wed,
        Weekday::Thu,
        Weekday::Fri,
        Weekday::Sat,
        Weekday::Sun,
    ];

    /// Monday through Thursday, the group the case-study days come from.
    pub const MON_TO_THU: [Weekday; 4] = [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu];

    pub fn of(date: NaiveDate) -> Weekday {
        Weekday::ALL[date.weekday().num_days_from_monday() as usize]
    }
}

impl fmt::Display for Weekday {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Weekday {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Weekday::ALL
            .iter()
            .copied()
            .find(|d| d.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::validation(format!("unknown day-of-week tag {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayRecord {
    pub date: String,
    pub weekday: Weekday,
}

impl DayRecord {
    pub fn from_date(date: NaiveDate) -> Self {
        DayRecord {
            date: date.format("%Y-%m-%d").to_string(),
            weekday: Weekday::of(date),
        }
    }
}

/// Days × (T·M) matrix of per-movement interval flows (vph).
#[derive(Clone, Debug, PartialEq)]
pub struct FlowDataset {
    days: Vec<DayRecord>,
    flows: DMatrix<f64>,
    interval_minutes: u32,
    movements: Vec<String>,
    intervals_per_day: usize,
}

impl FlowDataset {
    pub fn new(
        days: Vec<DayRecord>,
        flows: DMatrix<f64>,
        interval_minutes: u32,
        movements: Vec<String>,
    ) -> Result<Self> {
        let intervals_per_day = intervals_per_day(interval_minutes)?;
        if movements.is_empty() {
            return Err(Error::validation("dataset needs at least one movement"));
        }
        if days.len() != flows.nrows() {
            return Err(Error::Dimension {
                what: "day records",
                expected: flows.nrows(),
                found: days.len(),
            });
        }
        let width = intervals_per_day * movements.len();
        if flows.ncols() != width {
            return Err(Error::Dimension {
                what: "flow columns (T*M)",
                expected: width,
                found: flows.ncols(),
            });
        }
        if let Some(bad) = flows.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::validation(format!(
                "flows must be finite and non-negative, found {bad}"
            )));
        }
        Ok(FlowDataset {
            days,
            flows,
            interval_minutes,
            movements,
            intervals_per_day,
        })
    }

    pub fn days(&self) -> &[DayRecord] {
        &self.days
    }

    pub fn flows(&self) -> &DMatrix<f64> {
        &self.flows
    }

    pub fn movements(&self) -> &[String] {
        &self.movements
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    /// `T`, the number of intervals per movement per day.
    pub fn intervals_per_day(&self) -> usize {
        self.intervals_per_day
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn n_movements(&self) -> usize {
        self.movements.len()
    }

    pub fn day_index(&self, date: &str) -> Option<usize> {
        self.days.iter().position(|d| d.date == date)
    }

    /// Flow of movement `m` (0-based) during interval `t` (1-based) on day `d`.
    pub fn value(&self, d: usize, m: usize, t: usize) -> f64 {
        self.flows[(d, m * self.intervals_per_day + t - 1)]
    }

    /// Row `d` in the movement-block layout.
    pub fn day_vector(&self, d: usize) -> Vec<f64> {
        self.flows.row(d).iter().copied().collect()
    }

    /// Row `d` as a time-major series covering intervals `1..=T`.
    pub fn day_series(&self, d: usize) -> FlowSeries {
        FlowSeries::from_day_vector(
            &self.day_vector(d),
            self.intervals_per_day,
            self.n_movements(),
        )
    }

    /// Subset of days, in the given order.
    pub fn select(&self, indices: &[usize]) -> FlowDataset {
        let flows = self.flows.select_rows(indices.iter());
        FlowDataset {
            days: indices.iter().map(|&i| self.days[i].clone()).collect(),
            flows,
            interval_minutes: self.interval_minutes,
            movements: self.movements.clone(),
            intervals_per_day: self.intervals_per_day,
        }
    }

    /// All days except day `d`.
    pub fn without_day(&self, d: usize) -> FlowDataset {
        let keep: Vec<usize> = (0..self.n_days()).filter(|&i| i != d).collect();
        self.select(&keep)
    }

    /// Writes the long-format CSV (`date,movement,interval_index,flow_vph`).
    ///
    /// Flows are written with Rust's shortest round-trip float formatting, so a
    /// reload reproduces every value bit for bit.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(CSV_HEADER)?;
        for (d, day) in self.days.iter().enumerate() {
            for (m, movement) in self.movements.iter().enumerate() {
                for t in 1..=self.intervals_per_day {
                    out.write_record([
                        day.date.as_str(),
                        movement.as_str(),
                        &t.to_string(),
                        &self.value(d, m, t).to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn metadata(&self) -> DatasetMeta {
        DatasetMeta {
            version: FORMAT_VERSION,
            interval_minutes: self.interval_minutes,
            intervals_per_day: self.intervals_per_day,
            movements: self.movements.clone(),
            days: self.days.clone(),
        }
    }

    /// Saves the flows CSV plus its JSON metadata sidecar.
    pub fn save(&self, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
        let mut csv_file = BufWriter::new(File::create(csv_path)?);
        self.write_csv(&mut csv_file)?;
        csv_file.flush()?;
        let mut meta_file = BufWriter::new(File::create(sidecar_path)?);
        serde_json::to_writer_pretty(&mut meta_file, &self.metadata())?;
        meta_file.write_all(b"\n")?;
        meta_file.flush()?;
        Ok(())
    }

    /// Loads a CSV + sidecar pair written by [`FlowDataset::save`].
    ///
    /// The sidecar fixes the movement order and the expected day list; a CSV
    /// that disagrees with it is rejected.
    pub fn load(csv_path: &Path, sidecar_path: &Path) -> Result<FlowDataset> {
        let meta: DatasetMeta = serde_json::from_reader(File::open(sidecar_path)?)?;
        if meta.version != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION,
                found: meta.version,
            });
        }
        let loaded = load_csv(csv_path, meta.interval_minutes)?;
        if !loaded.dropped_dates.is_empty() {
            return Err(Error::validation(format!(
                "dataset CSV has incomplete days: {}",
                loaded.dropped_dates.join(", ")
            )));
        }
        let ds = loaded.dataset.with_movement_order(&meta.movements)?;
        if ds.days != meta.days {
            return Err(Error::validation("day list differs from sidecar metadata"));
        }
        Ok(ds)
    }

    /// Reorders the movement blocks to match `order`.
    pub fn with_movement_order(&self, order: &[String]) -> Result<FlowDataset> {
        if order.len() != self.movements.len() {
            return Err(Error::Dimension {
                what: "movement list",
                expected: self.movements.len(),
                found: order.len(),
            });
        }
        let t_len = self.intervals_per_day;
        let mut columns = Vec::with_capacity(self.flows.ncols());
        for name in order {
            let m = self
                .movements
                .iter()
                .position(|x| x == name)
                .ok_or_else(|| Error::validation(format!("movement {name:?} not in dataset")))?;
            columns.extend(m * t_len..(m + 1) * t_len);
        }
        Ok(FlowDataset {
            days: self.days.clone(),
            flows: self.flows.select_columns(columns.iter()),
            interval_minutes: self.interval_minutes,
            movements: order.to_vec(),
            intervals_per_day: t_len,
        })
    }
}

/// JSON sidecar describing a saved dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub interval_minutes: u32,
    pub intervals_per_day: usize,
    pub movements: Vec<String>,
    pub days: Vec<DayRecord>,
}

fn intervals_per_day(interval_minutes: u32) -> Result<usize> {
    if interval_minutes == 0 || MINUTES_PER_DAY % interval_minutes != 0 {
        return Err(Error::Config(format!(
            "interval of {interval_minutes} minutes does not divide a 24h day"
        )));
    }
    Ok((MINUTES_PER_DAY / interval_minutes) as usize)
}

#[derive(Clone, Debug)]
pub struct LoadOutcome {
    pub dataset: FlowDataset,
    /// Dates dropped because at least one (movement, interval) was missing.
    pub dropped_dates: Vec<String>,
}

/// Reads a long-format flow CSV.
///
/// Days are sorted by date, movements keep their order of first appearance in
/// the file, and any date lacking a row for some (movement, interval) is
/// dropped and reported.
pub fn load_csv(path: &Path, interval_minutes: u32) -> Result<LoadOutcome> {
    let file = File::open(path)?;
    read_csv(file, path, interval_minutes)
}

pub fn read_csv<R: Read>(reader: R, path: &Path, interval_minutes: u32) -> Result<LoadOutcome> {
    let t_len = intervals_per_day(interval_minutes)?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(parse_err(
            1,
            format!(
                "expected header {:?}, found {:?}",
                CSV_HEADER.join(","),
                header
            ),
        ));
    }

    let mut movements: Vec<String> = Vec::new();
    let mut movement_index: HashMap<String, usize> = HashMap::new();
    let mut by_date: BTreeMap<NaiveDate, HashMap<usize, Vec<Option<f64>>>> = BTreeMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(parse_err(
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date {:?}: {e}", &record[0])))?;
        let movement = &record[1];
        if movement.is_empty() {
            return Err(parse_err(line, "empty movement label".into()));
        }
        let interval: usize = record[2]
            .parse()
            .map_err(|e| parse_err(line, format!("bad interval_index {:?}: {e}", &record[2])))?;
        let flow: f64 = record[3]
            .parse()
            .map_err(|e| parse_err(line, format!("bad flow_vph {:?}: {e}", &record[3])))?;

        if interval == 0 || interval > t_len {
            return Err(Error::validation(format!(
                "line {line}: interval_index {interval} outside 1..={t_len}"
            )));
        }
        if !flow.is_finite() || flow < 0.0 {
            return Err(Error::validation(format!(
                "line {line}: flow must be finite and non-negative, found {flow}"
            )));
        }

        let m = *movement_index
            .entry(movement.to_string())
            .or_insert_with(|| {
                movements.push(movement.to_string());
                movements.len() - 1
            });
        let slot = &mut by_date
            .entry(date)
            .or_default()
            .entry(m)
            .or_insert_with(|| vec![None; t_len])[interval - 1];
        if slot.is_some() {
            return Err(Error::validation(format!(
                "line {line}: duplicate row for ({date}, {movement}, {interval})"
            )));
        }
        *slot = Some(flow);
    }

    let n_mov = movements.len();
    let mut days = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut dropped_dates = Vec::new();
    for (date, per_movement) in &by_date {
        let complete = (0..n_mov).all(|m| {
            per_movement
                .get(&m)
                .is_some_and(|vals| vals.iter().all(Option::is_some))
        });
        if !complete {
            dropped_dates.push(date.format("%Y-%m-%d").to_string());
            continue;
        }
        days.push(DayRecord::from_date(*date));
        for m in 0..n_mov {
            rows.extend(per_movement[&m].iter().map(|v| v.unwrap_or_default()));
        }
    }
    if !dropped_dates.is_empty() {
        log::warn!(
            "dropped {} incomplete day(s): {}",
            dropped_dates.len(),
            dropped_dates.join(", ")
        );
    }
    if days.is_empty() {
        return Err(Error::validation(format!(
            "{}: no complete days",
            path.display()
        )));
    }

    let flows = DMatrix::from_row_slice(days.len(), t_len * n_mov, &rows);
    let dataset = FlowDataset::new(days, flows, interval_minutes, movements)?;
    Ok(LoadOutcome {
        dataset,
        dropped_dates,
    })
}

/// Keeps the days whose weekday is in `allowed`, preserving order.
pub fn filter_days(ds: &FlowDataset, allowed: &BTreeSet<Weekday>) -> Result<FlowDataset> {
    if allowed.is_empty() {
        return Err(Error::Config("day filter is empty".into()));
    }
    let keep: Vec<usize> = ds
        .days
        .iter()
        .enumerate()
        .filter(|(_, d)| allowed.contains(&d.weekday))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::NoDaysMatch);
    }
    Ok(ds.select(&keep))
}

/// Entrywise mean over days.
pub fn mean_profile(ds: &FlowDataset) -> DVector<f64> {
    column_means(&ds.flows)
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Mean profile and the residual matrix `X - 1 x̄ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredMatrix {
    mean: DVector<f64>,
    residuals: DMatrix<f64>,
}

impl CenteredMatrix {
    pub fn from_matrix(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::Range(format!(
                "centering needs at least 2 days, got {}",
                x.nrows()
            )));
        }
        let mean = column_means(x);
        let mut residuals = x.clone();
        for mut row in residuals.row_iter_mut() {
            row -= mean.transpose();
        }
        Ok(CenteredMatrix { mean, residuals })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn residuals(&self) -> &DMatrix<f64> {
        &self.residuals
    }

    /// Adds the mean back to every row.
    pub fn uncenter(&self) -> DMatrix<f64> {
        let mut x = self.residuals.clone();
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        x
    }
}

pub fn center(ds: &FlowDataset) -> Result<CenteredMatrix> {
    CenteredMatrix::from_matrix(&ds.flows)
}

/// Where to cut the day into predictor measurements and predicted flows.
///
/// Predictors are intervals `1..=cutoff`, predicted flows are
/// `predict_from..=predict_to`. Each window may be coarsened by averaging
/// `stride` consecutive intervals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub cutoff: usize,
    pub predict_from: usize,
    pub predict_to: usize,
    #[serde(default = "one")]
    pub predictor_stride: usize,
    #[serde(default = "one")]
    pub predicted_stride: usize,
}

fn one() -> usize {
    1
}

impl SplitSpec {
    /// Predict everything after `cutoff` up to `t_end` at the native resolution.
    pub fn contiguous(cutoff: usize, t_end: usize) -> Self {
        SplitSpec {
            cutoff,
            predict_from: cutoff + 1,
            predict_to: t_end,
            predictor_stride: 1,
            predicted_stride: 1,
        }
    }

    pub fn validate(&self, intervals_per_day: usize) -> Result<()> {
        let t_len = intervals_per_day;
        if self.cutoff < 1 || self.cutoff >= t_len {
            return Err(Error::Range(format!(
                "cutoff {} (must lie in 1..={})",
                self.cutoff,
                t_len.saturating_sub(1)
            )));
        }
        if !(self.cutoff < self.predict_from
            && self.predict_from <= self.predict_to
            && self.predict_to <= t_len)
        {
            return Err(Error::Range(format!(
                "prediction window {}..={} (need {} < from <= to <= {t_len})",
                self.predict_from, self.predict_to, self.cutoff
            )));
        }
        if self.predictor_stride == 0 || self.cutoff % self.predictor_stride != 0 {
            return Err(Error::Config(format!(
                "predictor stride {} does not divide the {}-interval predictor window",
                self.predictor_stride, self.cutoff
            )));
        }
        let len = self.predicted_intervals();
        if self.predicted_stride == 0 || len % self.predicted_stride != 0 {
            return Err(Error::Config(format!(
                "predicted stride {} does not divide the {len}-interval prediction window",
                self.predicted_stride
            )));
        }
        Ok(())
    }

    pub fn predicted_intervals(&self) -> usize {
        self.predict_to + 1 - self.predict_from
    }

    /// Length of a predictor vector for `m` movements.
    pub fn predictor_dim(&self, m: usize) -> usize {
        self.cutoff / self.predictor_stride * m
    }

    /// Length of a predicted vector for `m` movements.
    pub fn predicted_dim(&self, m: usize) -> usize {
        self.predicted_intervals() / self.predicted_stride * m
    }

    /// Splits one day vector (movement-block layout over `1..=T`).
    pub fn split_row(
        &self,
        row: &[f64],
        intervals_per_day: usize,
        m: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let z = aggregate_window(
            row,
            intervals_per_day,
            m,
            1,
            self.cutoff,
            self.predictor_stride,
        );
        let y = aggregate_window(
            row,
            intervals_per_day,
            m,
            self.predict_from,
            self.predict_to,
            self.predicted_stride,
        );
        (z, y)
    }
}

/// Extracts intervals `from..=to` of each movement block and averages every
/// `stride` consecutive values. The caller guarantees that `stride` divides
/// the window length.
pub fn aggregate_window(
    row: &[f64],
    intervals_per_day: usize,
    m: usize,
    from: usize,
    to: usize,
    stride: usize,
) -> Vec<f64> {
    let len = to + 1 - from;
    let mut out = Vec::with_capacity(len / stride * m);
    for mv in 0..m {
        let block = &row[mv * intervals_per_day + from - 1..mv * intervals_per_day + to];
        out.extend(
            block
                .chunks_exact(stride)
                .map(|c| c.iter().sum::<f64>() / stride as f64),
        );
    }
    out
}

/// Builds the predictor matrix `Z` and predicted matrix `Y` (one row per day).
pub fn split_at(ds: &FlowDataset, spec: &SplitSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    spec.validate(ds.intervals_per_day)?;
    let m = ds.n_movements();
    let (dz, dy) = (spec.predictor_dim(m), spec.predicted_dim(m));
    let mut z = DMatrix::zeros(ds.n_days(), dz);
    let mut y = DMatrix::zeros(ds.n_days(), dy);
    for d in 0..ds.n_days() {
        let (zr, yr) = spec.split_row(&ds.day_vector(d), ds.intervals_per_day, m);
        z.row_mut(d).copy_from_slice(&zr);
        y.row_mut(d).copy_from_slice(&yr);
    }
    Ok((z, y))
}

/// Time-major flows over a contiguous range of intervals.
///
/// Row `t` (absolute, 1-based) holds the `M` movement flows of interval `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSeries {
    first: usize,
    n_movements: usize,
    values: Vec<f64>,
}

impl FlowSeries {
    /// `values` is time-major: `values[(t - first) * m + k]`.
    pub fn new(first: usize, n_movements: usize, values: Vec<f64>) -> Result<Self> {
        if first == 0 {
            return Err(Error::Range("series start interval 0".into()));
        }
        if n_movements == 0 || values.len() % n_movements != 0 {
            return Err(Error::Dimension {
                what: "series values (multiple of movement count)",
                expected: n_movements,
                found: values.len(),
            });
        }
        Ok(FlowSeries {
            first,
            n_movements,
            values,
        })
    }

    /// From the movement-block layout of a full day.
    pub fn from_day_vector(row: &[f64], intervals_per_day: usize, m: usize) -> Self {
        Self::from_blocks(row, 1, intervals_per_day, m)
    }

    /// From `m` movement blocks of `len` values each, the first value of every
    /// block being interval `first`.
    pub fn from_blocks(blocks: &[f64], first: usize, len: usize, m: usize) -> Self {
        debug_assert_eq!(blocks.len(), len * m);
        let mut values = vec![0.0; len * m];
        for mv in 0..m {
            for i in 0..len {
                values[i * m + mv] = blocks[mv * len + i];
            }
        }
        FlowSeries {
            first,
            n_movements: m,
            values,
        }
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn last(&self) -> usize {
        self.first + self.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.n_movements
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_movements(&self) -> usize {
        self.n_movements
    }

    pub fn covers(&self, from: usize, to: usize) -> bool {
        from > to || (from >= self.first && to <= self.last())
    }

    /// Movement flows during interval `t`.
    pub fn at(&self, t: usize) -> &[f64] {
        let i = t - self.first;
        &self.values[i * self.n_movements..(i + 1) * self.n_movements]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Intervals `from..=to` as a new series.
    pub fn window(&self, from: usize, to: usize) -> FlowSeries {
        let m = self.n_movements;
        let lo = (from - self.first) * m;
        let hi = (to + 1 - self.first) * m;
        FlowSeries {
            first: from,
            n_movements: m,
            values: self.values[lo..hi].to_vec(),
        }
    }

    /// Movement-block layout of the whole series.
    pub fn to_blocks(&self) -> Vec<f64> {
        let len = self.len();
        let m = self.n_movements;
        let mut out = vec![0.0; len * m];
        for i in 0..len {
            for mv in 0..m {
                out[mv * len + i] = self.values[i * m + mv];
            }
        }
        out
    }

    /// Sum over movements for each interval.
    pub fn totals(&self) -> Vec<f64> {
        self.values
            .chunks_exact(self.n_movements)
            .map(|c| c.iter().sum())
            .collect()
    }

    pub fn clamp_nonnegative(&mut self) {
        for v in &mut self.values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    pub fn scaled(&self, k: f64) -> FlowSeries {
        FlowSeries {
            first: self.first,
            n_movements: self.n_movements,
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }
}
