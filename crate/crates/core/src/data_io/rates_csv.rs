//! `day,i,j,open_rate,close_rate` files: one row per ordered pair `i ≠ j`
//! per day, currencies numbered from 1, diagonal implied.

use super::DataError;
use crate::grid::Grid;
use crate::market::{DailyQuotes, RateMatrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct RateRow {
    day: usize,
    i: usize,
    j: usize,
    open_rate: f64,
    close_rate: f64,
}

pub fn load_rates(path: &Path) -> Result<Vec<DailyQuotes>, DataError> {
    let file = File::open(path).map_err(DataError::io(path))?;
    parse_rates(file)
}

pub fn parse_rates(reader: impl Read) -> Result<Vec<DailyQuotes>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    // day -> (line, rows) in file order
    let mut days: Vec<(usize, Vec<(u64, RateRow)>)> = Vec::new();
    let mut seen = BTreeMap::new();
    let mut max_index = 0usize;
    let headers = rdr
        .headers()
        .map_err(|e| DataError::parse(1, 0, e.to_string()))?
        .clone();
    for result in rdr.records() {
        let record = result.map_err(|e| {
            DataError::parse(e.position().map_or(0, |p| p.line()), 0, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: RateRow = record.deserialize(Some(&headers)).map_err(|e| {
            let column = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.field().map_or(0, |f| f + 1),
                _ => 0,
            };
            DataError::parse(line, column, e.to_string())
        })?;
        if row.i == 0 || row.j == 0 {
            return Err(DataError::parse(line, if row.i == 0 { 2 } else { 3 }, "currency indices start at 1"));
        }
        if row.i == row.j {
            return Err(DataError::parse(line, 2, "diagonal entries are implied and must not be listed"));
        }
        if seen.insert((row.day, row.i, row.j), line).is_some() {
            return Err(DataError::parse(
                line,
                1,
                format!("duplicate quote for day {} pair ({},{})", row.day, row.i, row.j),
            ));
        }
        max_index = max_index.max(row.i).max(row.j);
        match days.last_mut() {
            Some((d, rows)) if *d == row.day => rows.push((line, row)),
            Some((d, _)) if *d > row.day => {
                return Err(DataError::NonMonotoneDays {
                    prev: *d,
                    found: row.day,
                })
            }
            _ => days.push((row.day, vec![(line, row)])),
        }
    }
    let m = max_index;
    days.into_iter()
        .map(|(day, rows)| {
            let mut open = Grid::filled(m, 1.0);
            let mut close = Grid::filled(m, 1.0);
            let mut filled = Grid::zeros(m);
            for (_, row) in &rows {
                open[(row.i - 1, row.j - 1)] = row.open_rate;
                close[(row.i - 1, row.j - 1)] = row.close_rate;
                filled[(row.i - 1, row.j - 1)] = 1.0;
            }
            if let Some((i, j)) = Grid::off_diagonal(m).find(|&p| filled[p] == 0.0) {
                return Err(DataError::MissingEntry {
                    day,
                    i: i + 1,
                    j: j + 1,
                });
            }
            let invariant = |source| DataError::Invariant { day, source };
            let open = RateMatrix::new(day, open).map_err(invariant)?;
            let close = RateMatrix::new(day, close).map_err(invariant)?;
            DailyQuotes::new(open, close).map_err(invariant)
        })
        .collect()
}

pub fn write_rates(path: &Path, quotes: &[DailyQuotes]) -> Result<(), DataError> {
    let file = File::create(path).map_err(DataError::io(path))?;
    write_rates_to(std::io::BufWriter::new(file), quotes).map_err(DataError::io(path))
}

pub fn write_rates_to(writer: impl Write, quotes: &[DailyQuotes]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for q in quotes {
        let (open, close) = (q.open().entries(), q.close().entries());
        for (i, j) in Grid::off_diagonal(q.dim()) {
            wtr.serialize(RateRow {
                day: q.day(),
                i: i + 1,
                j: j + 1,
                open_rate: open[(i, j)],
                close_rate: close[(i, j)],
            })?;
        }
    }
    wtr.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketError;

    const TWO_DAYS: &str = "day,i,j,open_rate,close_rate
1,1,2,1.43,1.44
1,2,1,0.70,0.69
2,2,1,0.71,0.70
2,1,2,1.42,1.45
";

    #[test]
    fn parses_well_formed_file() {
        let quotes = parse_rates(TWO_DAYS.as_bytes()).unwrap();
        assert_eq!(quotes.len(), 2);
        assert_eq!(quotes[1].day(), 2);
        assert_eq!(quotes[1].open().entries()[(1, 0)], 0.71);
        assert_eq!(quotes[0].close().entries()[(0, 0)], 1.0);
    }

    #[test]
    fn spread_violation_names_the_day() {
        let text = TWO_DAYS.replace("2,2,1,0.71,0.70", "2,2,1,1.42,0.70");
        match parse_rates(text.as_bytes()).unwrap_err() {
            DataError::Invariant { day, source } => {
                assert_eq!(day, 2);
                assert_eq!(source, MarketError::SpreadViolation { day: 2, i: 1, j: 2 });
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shuffled_days_rejected() {
        let text = "day,i,j,open_rate,close_rate
2,1,2,1.43,1.44
2,2,1,0.70,0.69
1,1,2,1.42,1.45
1,2,1,0.71,0.70
";
        assert!(matches!(
            parse_rates(text.as_bytes()).unwrap_err(),
            DataError::NonMonotoneDays { prev: 2, found: 1 }
        ));
        let interleaved = "day,i,j,open_rate,close_rate
1,1,2,1.43,1.44
2,1,2,1.42,1.45
1,2,1,0.70,0.69
";
        assert!(matches!(
            parse_rates(interleaved.as_bytes()).unwrap_err(),
            DataError::NonMonotoneDays { .. }
        ));
    }

    #[test]
    fn malformed_number_reports_position() {
        let text = TWO_DAYS.replace("1,2,1,0.70,0.69", "1,2,1,abc,0.69");
        match parse_rates(text.as_bytes()).unwrap_err() {
            DataError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_pair_reported() {
        let text = "day,i,j,open_rate,close_rate
1,1,2,1.43,1.44
";
        assert!(matches!(
            parse_rates(text.as_bytes()).unwrap_err(),
            DataError::MissingEntry { day: 1, i: 2, j: 1 }
        ));
    }

    #[test]
    fn round_trip_is_exact() {
        let quotes = parse_rates(TWO_DAYS.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_rates_to(&mut buf, &quotes).unwrap();
        assert_eq!(parse_rates(buf.as_slice()).unwrap(), quotes);
    }
}
