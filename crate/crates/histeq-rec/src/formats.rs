//! Dataset loaders and the plain-text artifact formats.
//!
//! * MovieLens-1M `ratings.dat`: `UserID::MovieID::Rating::Timestamp` per line.
//! * LDOS-CoMoDa style CSV: header row, user/item/rating columns chosen by name.
//! * Rating fixtures: CSV `user,item,rating` with raw identifiers.
//! * Equalization maps: an `r_max,<value>` line, then `level,transformed` rows.
//! * Factor models: `n_users,n_items,rank` header and values, then the rows
//!   of U, then the rows of V.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! artifact re-parses to bit-identical values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use histeq_rec_core::{
    EqualizationMap, FactorModel, LevelScale, RatingsBuilder, SparseRatings,
};

use crate::error::{Error, Result};

pub const MOVIELENS_LEVELS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn load_movielens_1m(path: &Path) -> Result<SparseRatings> {
    read_movielens_1m(open(path)?)
}

pub fn read_movielens_1m<R: BufRead>(reader: R) -> Result<SparseRatings> {
    let mut builder = RatingsBuilder::new();
    for (k, line) in reader.lines().enumerate() {
        let line_no = k as u64 + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(Error::parse(line_no, format!("expected 4 '::'-separated fields, found {}", fields.len())));
        }
        for (name, value) in ["UserID", "MovieID", "Timestamp"].iter().zip([fields[0], fields[1], fields[3]]) {
            if value.parse::<u64>().is_err() {
                return Err(Error::parse(line_no, format!("{name} {value:?} is not a non-negative integer")));
            }
        }
        let rating: u8 = fields[2]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("rating {:?} is not an integer", fields[2])))?;
        if !(1..=5).contains(&rating) {
            return Err(Error::parse(line_no, format!("rating {rating} outside 1..=5")));
        }
        builder.push(fields[0], fields[1], f64::from(rating));
    }
    if builder.is_empty() {
        return Err(Error::EmptyInput("MovieLens file has no ratings".into()));
    }
    Ok(builder.finish(LevelScale::Fixed(MOVIELENS_LEVELS.to_vec()))?)
}

/// Names of the CoMoDa columns holding user, item and rating.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ComodaColumns {
    pub user: String,
    pub item: String,
    pub rating: String,
}

impl Default for ComodaColumns {
    fn default() -> Self {
        ComodaColumns { user: "userID".into(), item: "itemID".into(), rating: "rating".into() }
    }
}

pub fn load_comoda_csv(path: &Path, columns: &ComodaColumns) -> Result<SparseRatings> {
    read_comoda_csv(open(path)?, columns)
}

/// Levels are the distinct observed ratings; a repeated (user, item) pair keeps
/// its last row. Other columns are ignored.
pub fn read_comoda_csv<R: Read>(reader: R, columns: &ComodaColumns) -> Result<SparseRatings> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = csv.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in header")))
    };
    let (user_col, item_col, rating_col) = (find(&columns.user)?, find(&columns.item)?, find(&columns.rating)?);
    let mut builder = RatingsBuilder::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| {
            record.get(col).ok_or_else(|| Error::parse(line, format!("row has no column {}", col + 1)))
        };
        let raw_rating = field(rating_col)?;
        let rating: f64 = raw_rating
            .parse()
            .ok()
            .filter(|r: &f64| r.is_finite() && r.fract() == 0.0)
            .ok_or_else(|| Error::parse(line, format!("rating {raw_rating:?} is not an integer")))?;
        builder.push(field(user_col)?, field(item_col)?, rating);
    }
    if builder.is_empty() {
        return Err(Error::EmptyInput("CoMoDa file has no data rows".into()));
    }
    Ok(builder.finish(LevelScale::Observed)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes `user,item,rating` rows with the raw identifiers.
pub fn write_ratings_csv<W: Write>(ratings: &SparseRatings, mut out: W) -> std::io::Result<()> {
    writeln!(out, "user,item,rating")?;
    for o in ratings.observations() {
        writeln!(
            out,
            "{},{},{}",
            ratings.user_ids()[o.user as usize],
            ratings.item_ids()[o.item as usize],
            o.rating
        )?;
    }
    out.flush()
}

pub fn save_ratings_csv(ratings: &SparseRatings, path: &Path) -> Result<()> {
    write_ratings_csv(ratings, create(path)?).map_err(|e| Error::io(path, e))
}

/// Reads a `user,item,rating` fixture. Levels are the distinct ratings.
pub fn read_ratings_csv<R: Read>(reader: R) -> Result<SparseRatings> {
    let mut csv = csv::ReaderBuilder::new().from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["user", "item", "rating"] {
        return Err(Error::Schema(format!("expected header user,item,rating, found {:?}", headers)));
    }
    let mut builder = RatingsBuilder::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 fields, found {}", record.len())));
        }
        let rating: f64 = record[2]
            .parse()
            .map_err(|_| Error::parse(line, format!("rating {:?} is not a number", &record[2])))?;
        builder.push(&record[0], &record[1], rating);
    }
    if builder.is_empty() {
        return Err(Error::EmptyInput("rating fixture has no rows".into()));
    }
    Ok(builder.finish(LevelScale::Observed)?)
}

pub fn load_ratings_csv(path: &Path) -> Result<SparseRatings> {
    read_ratings_csv(open(path)?)
}

pub fn write_map_csv<W: Write>(map: &EqualizationMap, mut out: W) -> std::io::Result<()> {
    writeln!(out, "r_max,{}", map.r_max())?;
    writeln!(out, "level,transformed")?;
    for (level, value) in map.levels().iter().zip(map.transformed()) {
        writeln!(out, "{level},{value}")?;
    }
    out.flush()
}

pub fn save_map_csv(map: &EqualizationMap, path: &Path) -> Result<()> {
    write_map_csv(map, create(path)?).map_err(|e| Error::io(path, e))
}

fn parse_f64(line: u64, text: &str) -> Result<f64> {
    text.trim().parse().map_err(|_| Error::parse(line, format!("{text:?} is not a number")))
}

pub fn read_map_csv<R: BufRead>(reader: R) -> Result<EqualizationMap> {
    let mut lines = reader.lines().enumerate().map(|(k, l)| (k as u64 + 1, l));
    let mut next = || -> Result<Option<(u64, String)>> {
        match lines.next() {
            None => Ok(None),
            Some((n, l)) => Ok(Some((n, l.map_err(|e| Error::parse(n, e.to_string()))?))),
        }
    };
    let (n, first) = next()?.ok_or_else(|| Error::EmptyInput("empty map file".into()))?;
    let r_max = match first.trim_end().split_once(',') {
        Some(("r_max", v)) => parse_f64(n, v)?,
        _ => return Err(Error::parse(n, "expected `r_max,<value>`")),
    };
    match next()? {
        Some((_, h)) if h.trim_end() == "level,transformed" => {}
        Some((n, _)) => return Err(Error::parse(n, "expected header `level,transformed`")),
        None => return Err(Error::EmptyInput("map file has no table".into())),
    }
    let (mut levels, mut transformed) = (Vec::new(), Vec::new());
    while let Some((n, line)) = next()? {
        let (l, t) = line.trim_end().split_once(',').ok_or_else(|| Error::parse(n, "expected `level,transformed`"))?;
        levels.push(parse_f64(n, l)?);
        transformed.push(parse_f64(n, t)?);
    }
    Ok(EqualizationMap::from_parts(levels, transformed, r_max)?)
}

pub fn load_map_csv(path: &Path) -> Result<EqualizationMap> {
    read_map_csv(open(path)?)
}

fn write_row<W: Write>(out: &mut W, row: &[f64]) -> std::io::Result<()> {
    let mut first = true;
    for x in row {
        if !first {
            out.write_all(b",")?;
        }
        write!(out, "{x}")?;
        first = false;
    }
    out.write_all(b"\n")
}

pub fn write_model_csv<W: Write>(model: &FactorModel, mut out: W) -> std::io::Result<()> {
    writeln!(out, "n_users,n_items,rank")?;
    writeln!(out, "{},{},{}", model.n_users(), model.n_items(), model.rank())?;
    for row in model.user_factors().chunks(model.rank()).chain(model.item_factors().chunks(model.rank())) {
        write_row(&mut out, row)?;
    }
    out.flush()
}

pub fn save_model_csv(model: &FactorModel, path: &Path) -> Result<()> {
    write_model_csv(model, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn read_model_csv<R: BufRead>(reader: R) -> Result<FactorModel> {
    let mut lines = reader.lines().enumerate().map(|(k, l)| (k as u64 + 1, l));
    let mut next = |what: &str| -> Result<(u64, String)> {
        match lines.next() {
            None => Err(Error::EmptyInput(format!("model file ends before {what}"))),
            Some((n, l)) => Ok((n, l.map_err(|e| Error::parse(n, e.to_string()))?)),
        }
    };
    let (n, header) = next("the header")?;
    if header.trim_end() != "n_users,n_items,rank" {
        return Err(Error::parse(n, "expected header `n_users,n_items,rank`"));
    }
    let (n, dims) = next("the dimensions")?;
    let dims: Vec<usize> = dims
        .trim_end()
        .split(',')
        .map(|d| d.parse().map_err(|_| Error::parse(n, format!("{d:?} is not a count"))))
        .collect::<Result<_>>()?;
    let [n_users, n_items, rank] = dims[..] else {
        return Err(Error::parse(n, "expected three dimensions"));
    };
    let mut values = Vec::with_capacity((n_users + n_items) * rank);
    for _ in 0..n_users + n_items {
        let (n, row) = next("all factor rows")?;
        let row: Vec<f64> = row.trim_end().split(',').map(|x| parse_f64(n, x)).collect::<Result<_>>()?;
        if row.len() != rank {
            return Err(Error::parse(n, format!("expected {rank} values, found {}", row.len())));
        }
        values.extend(row);
    }
    let item_factors = values.split_off(n_users * rank);
    Ok(FactorModel::from_parts(n_users, n_items, rank, values, item_factors)?)
}

pub fn load_model_csv(path: &Path) -> Result<FactorModel> {
    read_model_csv(open(path)?)
}
