//! Ingestion of daily case/death feeds and the validated epidemic series.

use chrono::{Duration, NaiveDate};

use crate::error::{Error, Result};

/// Longest run of missing calendar days that is silently zero-filled.
pub const MAX_GAP_DAYS: i64 = 30;

/// One row of a raw daily feed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub date: NaiveDate,
    pub new_cases: i64,
    pub new_deaths: i64,
    pub region: String,
}

/// Column names used to locate fields in an input CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub date: String,
    pub cases: String,
    pub deaths: String,
    /// `None` for single-region files without a region column.
    pub region: Option<String>,
}

impl ColumnSchema {
    /// Column layout of the ECDC daily download.
    pub fn ecdc() -> Self {
        Self {
            date: "dateRep".into(),
            cases: "cases".into(),
            deaths: "deaths".into(),
            region: Some("geoId".into()),
        }
    }

    /// Column layout written by [`EpidemicSeries::to_csv`].
    pub fn series() -> Self {
        Self {
            date: "date".into(),
            cases: "new_cases".into(),
            deaths: "new_deaths".into(),
            region: None,
        }
    }
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self::ecdc()
    }
}

/// What to do with negative daily counts (reporting corrections).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativePolicy {
    #[default]
    Error,
    ClampZero,
}

/// Parses `dd/mm/yyyy`, falling back to ISO-8601 `yyyy-mm-dd`.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%d/%m/%Y")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y-%m-%d"))
        .ok()
}

fn parse_count(field: &str, row: usize, column: &str) -> Result<i64> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(0);
    }
    field
        .parse::<i64>()
        .or_else(|_| {
            // Some feeds write integral counts as floats ("12.0").
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && v.is_finite())
                .map(|v| v as i64)
                .ok_or(())
        })
        .map_err(|_| Error::Parse {
            row,
            message: format!("column '{column}': '{field}' is not an integer count"),
        })
}

/// Reads the records of one region from a CSV text.
///
/// With `region == None` every row is returned. Rows are sorted by date
/// regardless of the input order. Row numbers in errors are 1-based and
/// count the header as row 1.
pub fn parse_csv(text: &str, schema: &ColumnSchema, region: Option<&str>) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?
        .clone();
    let locate = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let date_col = locate(&schema.date)?;
    let cases_col = locate(&schema.cases)?;
    let deaths_col = locate(&schema.deaths)?;
    let region_col = match &schema.region {
        Some(name) => Some(locate(name)?),
        None => None,
    };
    if region.is_some() && region_col.is_none() {
        return Err(Error::Schema("region filter requested but schema has no region column".into()));
    }

    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let field = |col: usize| rec.get(col).unwrap_or("");
        let region_value = region_col.map(|c| field(c).to_string()).unwrap_or_default();
        if let Some(wanted) = region {
            if region_value != wanted {
                continue;
            }
        }
        let raw_date = field(date_col);
        let date = parse_date(raw_date).ok_or_else(|| Error::Parse {
            row,
            message: format!("malformed date '{raw_date}'"),
        })?;
        out.push(RawRecord {
            date,
            new_cases: parse_count(field(cases_col), row, &schema.cases)?,
            new_deaths: parse_count(field(deaths_col), row, &schema.deaths)?,
            region: region_value,
        });
    }
    out.sort_by_key(|r| r.date);
    Ok(out)
}

/// Drops the leading records before the first day with reported cases.
pub fn trim_to_first_case(records: &[RawRecord]) -> &[RawRecord] {
    let start = records.iter().position(|r| r.new_cases > 0).unwrap_or(records.len());
    &records[start..]
}

/// Daily new and cumulative cases and deaths, indexed by day `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpidemicSeries {
    origin: NaiveDate,
    cases: Vec<u64>,
    deaths: Vec<u64>,
    cum_cases: Vec<u64>,
    cum_deaths: Vec<u64>,
}

/// Minimum number of days for a usable series.
pub const MIN_SERIES_LEN: usize = 3;

impl EpidemicSeries {
    /// Builds a series from daily counts starting at `origin` (day 1).
    pub fn from_counts(origin: NaiveDate, cases: Vec<u64>, deaths: Vec<u64>) -> Result<Self> {
        if cases.len() != deaths.len() {
            return Err(Error::Data(format!(
                "case and death sequences differ in length ({} vs {})",
                cases.len(),
                deaths.len()
            )));
        }
        if cases.len() < MIN_SERIES_LEN {
            return Err(Error::Data(format!(
                "series has {} days, at least {MIN_SERIES_LEN} are required",
                cases.len()
            )));
        }
        if cases[0] == 0 {
            return Err(Error::Data(format!(
                "first day ({origin}) has no cases; the series must start at the first reported case"
            )));
        }
        let prefix = |x: &[u64]| {
            x.iter()
                .scan(0u64, |acc, &v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect::<Vec<_>>()
        };
        Ok(Self {
            origin,
            cum_cases: prefix(&cases),
            cum_deaths: prefix(&deaths),
            cases,
            deaths,
        })
    }

    /// Number of days `T`.
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Calendar date of day 1.
    pub fn origin(&self) -> NaiveDate {
        self.origin
    }

    /// Calendar date of day `t` (1-based).
    pub fn date(&self, t: usize) -> NaiveDate {
        self.origin + Duration::days(t as i64 - 1)
    }

    pub fn cases(&self) -> &[u64] {
        &self.cases
    }

    pub fn deaths(&self) -> &[u64] {
        &self.deaths
    }

    pub fn cum_cases(&self) -> &[u64] {
        &self.cum_cases
    }

    pub fn cum_deaths(&self) -> &[u64] {
        &self.cum_deaths
    }

    /// The first `t_max` days.
    pub fn truncate(&self, t_max: usize) -> Result<Self> {
        if t_max > self.len() {
            return Err(Error::Argument(format!(
                "cannot truncate a {}-day series to {t_max} days",
                self.len()
            )));
        }
        Self::from_counts(self.origin, self.cases[..t_max].to_vec(), self.deaths[..t_max].to_vec())
    }

    /// Writes the series CSV: `day_index,date,new_cases,new_deaths,cum_cases,cum_deaths`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("day_index,date,new_cases,new_deaths,cum_cases,cum_deaths\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i + 1,
                self.date(i + 1).format("%Y-%m-%d"),
                self.cases[i],
                self.deaths[i],
                self.cum_cases[i],
                self.cum_deaths[i]
            ));
        }
        out
    }

    /// Reads a CSV previously written by [`EpidemicSeries::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let records = parse_csv(text, &ColumnSchema::series(), None)?;
        build_series(&records, NegativePolicy::Error)
    }
}

/// Turns sorted raw records into a contiguous daily series.
///
/// Missing calendar days are filled with zero counts; more than
/// [`MAX_GAP_DAYS`] consecutive missing days is treated as a broken feed.
pub fn build_series(records: &[RawRecord], policy: NegativePolicy) -> Result<EpidemicSeries> {
    if records.len() < MIN_SERIES_LEN {
        return Err(Error::Data(format!(
            "{} records supplied, at least {MIN_SERIES_LEN} are required",
            records.len()
        )));
    }
    let mut sorted: Vec<&RawRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.date);

    let clean = |value: i64, what: &str, date: NaiveDate| -> Result<u64> {
        if value >= 0 {
            Ok(value as u64)
        } else {
            match policy {
                NegativePolicy::Error => Err(Error::Data(format!(
                    "negative {what} count {value} on {date}"
                ))),
                NegativePolicy::ClampZero => Ok(0),
            }
        }
    };

    let origin = sorted[0].date;
    let mut cases = Vec::with_capacity(sorted.len());
    let mut deaths = Vec::with_capacity(sorted.len());
    let mut prev: Option<NaiveDate> = None;
    for rec in sorted {
        if let Some(p) = prev {
            let step = (rec.date - p).num_days();
            if step == 0 {
                return Err(Error::Data(format!("duplicate record for {}", rec.date)));
            }
            let missing = step - 1;
            if missing > MAX_GAP_DAYS {
                return Err(Error::Data(format!(
                    "{missing} consecutive days missing before {}; feed looks broken",
                    rec.date
                )));
            }
            for _ in 0..missing {
                cases.push(0);
                deaths.push(0);
            }
        }
        cases.push(clean(rec.new_cases, "case", rec.date)?);
        deaths.push(clean(rec.new_deaths, "death", rec.date)?);
        prev = Some(rec.date);
    }
    EpidemicSeries::from_counts(origin, cases, deaths)
}

/// Centered moving average; at the edges the window is clipped to the
/// available observations.
pub fn moving_average(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Argument(format!("moving-average window must be odd and positive, got {window}")));
    }
    if window > x.len() {
        return Err(Error::Argument(format!(
            "window {window} exceeds series length {}",
            x.len()
        )));
    }
    let half = window / 2;
    let n = x.len();
    Ok((0..n)
        .map(|i| {
            let slice = &x[i.saturating_sub(half)..=(i + half).min(n - 1)];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn rec(date: NaiveDate, c: i64, d: i64) -> RawRecord {
        RawRecord { date, new_cases: c, new_deaths: d, region: "UK".into() }
    }

    #[test]
    fn parses_ecdc_row() {
        let text = "dateRep,cases,deaths,geoId\n01/02/2020,2,0,UK\n";
        let recs = parse_csv(text, &ColumnSchema::ecdc(), Some("UK")).unwrap();
        assert_eq!(recs, vec![rec(ymd(2020, 2, 1), 2, 0)]);
    }

    #[test]
    fn empty_body_gives_no_records() {
        let text = "dateRep,cases,deaths,geoId\n";
        assert!(parse_csv(text, &ColumnSchema::ecdc(), None).unwrap().is_empty());
    }

    #[test]
    fn rows_are_sorted() {
        let text = "dateRep,cases,deaths,geoId\n03/02/2020,1,0,UK\n01/02/2020,2,0,UK\n02/02/2020,0,0,UK\n";
        let recs = parse_csv(text, &ColumnSchema::ecdc(), None).unwrap();
        let dates: Vec<_> = recs.iter().map(|r| r.date).collect();
        assert_eq!(dates, vec![ymd(2020, 2, 1), ymd(2020, 2, 2), ymd(2020, 2, 3)]);
    }

    #[test]
    fn region_filter_and_iso_fallback() {
        let text = "dateRep,cases,deaths,geoId\n2020-02-01,2,0,UK\n2020-02-01,9,1,FR\n";
        let recs = parse_csv(text, &ColumnSchema::ecdc(), Some("FR")).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].new_cases, 9);
    }

    #[test]
    fn malformed_date_names_row() {
        let text = "dateRep,cases,deaths,geoId\n01/02/2020,2,0,UK\n31/31/2020,1,0,UK\n";
        let err = parse_csv(text, &ColumnSchema::ecdc(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err:?}");
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = "dateRep,cases,geoId\n01/02/2020,2,UK\n";
        let err = parse_csv(text, &ColumnSchema::ecdc(), None).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn cumulative_prefix_sums() {
        let s = EpidemicSeries::from_counts(ymd(2020, 2, 1), vec![2, 0, 0, 1], vec![0; 4]).unwrap();
        assert_eq!(s.cum_cases(), &[2, 2, 2, 3]);
    }

    #[test]
    fn negative_counts_follow_policy() {
        let recs = vec![
            rec(ymd(2020, 2, 1), 3, 0),
            rec(ymd(2020, 2, 2), -5, 0),
            rec(ymd(2020, 2, 3), 4, 0),
        ];
        let err = build_series(&recs, NegativePolicy::Error).unwrap_err();
        assert!(err.to_string().contains("2020-02-02"));
        let s = build_series(&recs, NegativePolicy::ClampZero).unwrap();
        assert_eq!(s.cases(), &[3, 0, 4]);
    }

    #[test]
    fn gaps_are_zero_filled() {
        let recs = vec![
            rec(ymd(2020, 2, 1), 3, 0),
            rec(ymd(2020, 2, 4), 1, 1),
            rec(ymd(2020, 2, 5), 2, 0),
        ];
        let s = build_series(&recs, NegativePolicy::Error).unwrap();
        assert_eq!(s.cases(), &[3, 0, 0, 1, 2]);
        assert_eq!(s.date(5), ymd(2020, 2, 5));
    }

    #[test]
    fn long_gap_is_rejected() {
        let recs = vec![
            rec(ymd(2020, 2, 1), 3, 0),
            rec(ymd(2020, 2, 2), 3, 0),
            rec(ymd(2020, 3, 10), 1, 0),
        ];
        assert!(matches!(build_series(&recs, NegativePolicy::Error), Err(Error::Data(_))));
    }

    #[test]
    fn short_or_caseless_start_is_rejected() {
        let recs = vec![rec(ymd(2020, 2, 1), 3, 0), rec(ymd(2020, 2, 2), 3, 0)];
        assert!(build_series(&recs, NegativePolicy::Error).is_err());
        let recs = vec![
            rec(ymd(2020, 2, 1), 0, 0),
            rec(ymd(2020, 2, 2), 3, 0),
            rec(ymd(2020, 2, 3), 3, 0),
        ];
        assert!(build_series(&recs, NegativePolicy::Error).is_err());
        assert_eq!(trim_to_first_case(&recs).len(), 2);
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0; 5], 3).unwrap(), vec![1.0; 5]);
        assert_eq!(moving_average(&[0.0, 3.0, 0.0], 3).unwrap(), vec![1.5, 1.0, 1.5]);
        assert!(moving_average(&[1.0; 5], 4).is_err());
        assert!(moving_average(&[1.0; 2], 3).is_err());
    }
}
