//! CSV ingestion and export for forecast and measurement records.
//!
//! Forecast files carry `issue_time,horizon_hours,quantity,component,value`;
//! measurement files carry `time,quantity,value`. Lines starting with `#` are
//! comments.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::data::types::{
    Component, CovariateKind, ForecastRecord, MeasurementRecord, QuantityId, QuantityRegistry,
};
use crate::error::{Error, Result};
use crate::time::{Timestamp, TimestampError};

pub const FORECAST_HEADER: &str = "issue_time,horizon_hours,quantity,component,value";
pub const MEASUREMENT_HEADER: &str = "time,quantity,value";

type GroupIndex = HashMap<(QuantityId, u32), Vec<(Timestamp, Range<usize>)>>;

/// Validated forecast records, sorted by (quantity, horizon, issue time, component)
/// and indexed by (quantity, horizon, issue time).
#[derive(Debug, Clone)]
pub struct ForecastSet {
    registry: QuantityRegistry,
    records: Vec<ForecastRecord>,
    groups: GroupIndex,
    horizons: BTreeSet<u32>,
    present: BTreeSet<(QuantityId, CovariateKind)>,
}

/// All components issued for one quantity at one (issue time, horizon).
#[derive(Debug, Clone, Copy)]
pub struct ForecastGroup<'a> {
    records: &'a [ForecastRecord],
}

impl<'a> ForecastGroup<'a> {
    pub fn deterministic(&self) -> Option<f64> {
        self.find(Component::Deterministic)
    }

    pub fn control(&self) -> Option<f64> {
        self.find(Component::Control)
    }

    pub fn members(&self) -> impl Iterator<Item = f64> + 'a {
        self.records
            .iter()
            .filter(|r| matches!(r.component, Component::Member(_)))
            .map(|r| r.value)
    }

    pub fn member_count(&self) -> usize {
        self.members().count()
    }

    fn find(&self, c: Component) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.component == c)
            .map(|r| r.value)
    }
}

impl ForecastSet {
    /// Build from records in any order. Duplicate keys are rejected.
    pub fn from_records(registry: QuantityRegistry, records: Vec<ForecastRecord>) -> Result<Self> {
        let tagged = records.into_iter().map(|r| (r, 0u64)).collect();
        Self::build(registry, tagged)
    }

    fn build(registry: QuantityRegistry, mut tagged: Vec<(ForecastRecord, u64)>) -> Result<Self> {
        for (r, line) in &tagged {
            if !r.value.is_finite() {
                return Err(Error::NonFiniteValue { line: *line });
            }
            if r.quantity.0 as usize >= registry.len() {
                return Err(Error::UnknownQuantity {
                    line: *line,
                    code: format!("#{}", r.quantity.0),
                });
            }
        }
        tagged.sort_unstable_by(|a, b| a.0.sort_key().cmp(&b.0.sort_key()).then(a.1.cmp(&b.1)));
        for w in tagged.windows(2) {
            if w[0].0.sort_key() == w[1].0.sort_key() {
                let r = &w[1].0;
                return Err(Error::DuplicateKey {
                    line: w[1].1,
                    key: format!(
                        "({}, {} h, {}, {})",
                        r.issue_time,
                        r.horizon,
                        registry.code(r.quantity),
                        r.component
                    ),
                });
            }
        }
        let records: Vec<ForecastRecord> = tagged.into_iter().map(|(r, _)| r).collect();

        let mut groups: GroupIndex = HashMap::new();
        let mut horizons = BTreeSet::new();
        let mut present = BTreeSet::new();
        let mut start = 0;
        while start < records.len() {
            let head = &records[start];
            let mut end = start + 1;
            while end < records.len()
                && records[end].quantity == head.quantity
                && records[end].horizon == head.horizon
                && records[end].issue_time == head.issue_time
            {
                end += 1;
            }
            horizons.insert(head.horizon);
            let mut members = 0;
            for r in &records[start..end] {
                match r.component {
                    Component::Deterministic => {
                        present.insert((r.quantity, CovariateKind::Deterministic));
                    }
                    Component::Control => {
                        present.insert((r.quantity, CovariateKind::Control));
                    }
                    Component::Member(_) => members += 1,
                }
            }
            if members >= 2 {
                present.insert((head.quantity, CovariateKind::EnsembleMean));
            }
            groups
                .entry((head.quantity, head.horizon))
                .or_default()
                .push((head.issue_time, start..end));
            start = end;
        }

        Ok(ForecastSet {
            registry,
            records,
            groups,
            horizons,
            present,
        })
    }

    pub fn registry(&self) -> &QuantityRegistry {
        &self.registry
    }

    pub fn records(&self) -> &[ForecastRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Horizons that occur anywhere in the data.
    pub fn horizons(&self) -> &BTreeSet<u32> {
        &self.horizons
    }

    pub fn has_covariate(&self, quantity: QuantityId, kind: CovariateKind) -> bool {
        self.present.contains(&(quantity, kind))
    }

    pub fn group(
        &self,
        quantity: QuantityId,
        horizon: u32,
        issue: Timestamp,
    ) -> Option<ForecastGroup<'_>> {
        let list = self.groups.get(&(quantity, horizon))?;
        let idx = list.binary_search_by_key(&issue, |(t, _)| *t).ok()?;
        Some(ForecastGroup {
            records: &self.records[list[idx].1.clone()],
        })
    }

    /// Issue times with any record for (quantity, horizon), ascending.
    pub fn issue_times(&self, quantity: QuantityId, horizon: u32) -> Vec<Timestamp> {
        self.groups
            .get(&(quantity, horizon))
            .map(|l| l.iter().map(|(t, _)| *t).collect())
            .unwrap_or_default()
    }

    /// Every distinct issue time in the set, ascending.
    pub fn all_issue_times(&self) -> BTreeSet<Timestamp> {
        self.groups
            .values()
            .flat_map(|l| l.iter().map(|(t, _)| *t))
            .collect()
    }
}

/// Validated measurements with at most one value per (time, quantity).
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    registry: QuantityRegistry,
    records: Vec<MeasurementRecord>,
    index: HashMap<(QuantityId, Timestamp), f64>,
}

impl MeasurementSet {
    pub fn from_records(
        registry: QuantityRegistry,
        records: Vec<MeasurementRecord>,
    ) -> Result<Self> {
        let tagged = records.into_iter().map(|r| (r, 0u64)).collect();
        Self::build(registry, tagged)
    }

    fn build(
        registry: QuantityRegistry,
        mut tagged: Vec<(MeasurementRecord, u64)>,
    ) -> Result<Self> {
        tagged.sort_by(|a, b| {
            (a.0.quantity, a.0.time)
                .cmp(&(b.0.quantity, b.0.time))
                .then(a.1.cmp(&b.1))
        });
        let mut index = HashMap::with_capacity(tagged.len());
        for (r, line) in &tagged {
            if !r.value.is_finite() {
                return Err(Error::NonFiniteValue { line: *line });
            }
            if r.quantity.0 as usize >= registry.len() {
                return Err(Error::UnknownQuantity {
                    line: *line,
                    code: format!("#{}", r.quantity.0),
                });
            }
            if index.insert((r.quantity, r.time), r.value).is_some() {
                return Err(Error::DuplicateKey {
                    line: *line,
                    key: format!("({}, {})", r.time, registry.code(r.quantity)),
                });
            }
        }
        Ok(MeasurementSet {
            registry,
            records: tagged.into_iter().map(|(r, _)| r).collect(),
            index,
        })
    }

    pub fn registry(&self) -> &QuantityRegistry {
        &self.registry
    }

    pub fn records(&self) -> &[MeasurementRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, quantity: QuantityId, time: Timestamp) -> Option<f64> {
        self.index.get(&(quantity, time)).copied()
    }

    pub fn get_by_code(&self, code: &str, time: Timestamp) -> Option<f64> {
        self.get(self.registry.id(code)?, time)
    }
}

fn reader_for<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &str) -> Result<()> {
    let found = rdr
        .byte_headers()?
        .iter()
        .map(String::from_utf8_lossy)
        .collect::<Vec<_>>()
        .join(",");
    if found != expected {
        return Err(Error::Header {
            expected: expected.into(),
            found,
        });
    }
    Ok(())
}

fn field<'a>(rec: &'a csv::ByteRecord, i: usize, line: u64, name: &str) -> Result<&'a str> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing field `{name}`"),
    })?;
    std::str::from_utf8(raw).map_err(|_| Error::Parse {
        line,
        message: format!("field `{name}` is not UTF-8"),
    })
}

fn parse_time(s: &str, line: u64) -> Result<Timestamp> {
    Timestamp::parse(s).map_err(|e| match e {
        TimestampError::NotOnHour => Error::NonHourly {
            line,
            value: s.into(),
        },
        TimestampError::Malformed => Error::Parse {
            line,
            message: format!("bad timestamp `{s}`: {e}"),
        },
    })
}

fn parse_value(s: &str, line: u64) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad value `{s}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFiniteValue { line });
    }
    Ok(v)
}

fn expect_width(rec: &csv::ByteRecord, width: usize, line: u64) -> Result<()> {
    if rec.len() != width {
        return Err(Error::Parse {
            line,
            message: format!("expected {width} fields, found {}", rec.len()),
        });
    }
    Ok(())
}

/// Parse a forecast CSV stream.
pub fn ingest_forecasts<R: Read>(source: R, registry: &QuantityRegistry) -> Result<ForecastSet> {
    let mut rdr = reader_for(source);
    check_header(&mut rdr, FORECAST_HEADER)?;
    let mut out = Vec::new();
    let mut rec = csv::ByteRecord::new();
    while rdr.read_byte_record(&mut rec)? {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        expect_width(&rec, 5, line)?;
        let issue_time = parse_time(field(&rec, 0, line, "issue_time")?, line)?;
        let h = field(&rec, 1, line, "horizon_hours")?;
        let horizon: i64 = h.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad horizon `{h}`"),
        })?;
        if horizon < 0 {
            return Err(Error::NegativeHorizon { line, horizon });
        }
        let horizon = u32::try_from(horizon).map_err(|_| Error::Parse {
            line,
            message: format!("horizon {horizon} out of range"),
        })?;
        let code = field(&rec, 2, line, "quantity")?;
        let quantity = registry.id(code).ok_or_else(|| Error::UnknownQuantity {
            line,
            code: code.into(),
        })?;
        let component: Component = field(&rec, 3, line, "component")?
            .parse()
            .map_err(|message| Error::Parse { line, message })?;
        let value = parse_value(field(&rec, 4, line, "value")?, line)?;
        out.push((
            ForecastRecord {
                issue_time,
                horizon,
                quantity,
                component,
                value,
            },
            line,
        ));
    }
    ForecastSet::build(registry.clone(), out)
}

/// Parse a measurement CSV stream.
pub fn ingest_measurements<R: Read>(
    source: R,
    registry: &QuantityRegistry,
) -> Result<MeasurementSet> {
    let mut rdr = reader_for(source);
    check_header(&mut rdr, MEASUREMENT_HEADER)?;
    let mut out = Vec::new();
    let mut rec = csv::ByteRecord::new();
    while rdr.read_byte_record(&mut rec)? {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        expect_width(&rec, 3, line)?;
        let time = parse_time(field(&rec, 0, line, "time")?, line)?;
        let code = field(&rec, 1, line, "quantity")?;
        let quantity = registry.id(code).ok_or_else(|| Error::UnknownQuantity {
            line,
            code: code.into(),
        })?;
        let value = parse_value(field(&rec, 2, line, "value")?, line)?;
        out.push((
            MeasurementRecord {
                time,
                quantity,
                value,
            },
            line,
        ));
    }
    MeasurementSet::build(registry.clone(), out)
}

pub fn read_forecasts(path: &Path, registry: &QuantityRegistry) -> Result<ForecastSet> {
    ingest_forecasts(BufReader::new(File::open(path)?), registry)
}

pub fn read_measurements(path: &Path, registry: &QuantityRegistry) -> Result<MeasurementSet> {
    ingest_measurements(BufReader::new(File::open(path)?), registry)
}

/// Write records in the forecast file format, in the order given.
pub fn write_forecasts<'a, W: Write>(
    sink: W,
    registry: &QuantityRegistry,
    records: impl IntoIterator<Item = &'a ForecastRecord>,
) -> Result<()> {
    let mut w = BufWriter::new(sink);
    writeln!(w, "{FORECAST_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.issue_time,
            r.horizon,
            registry.code(r.quantity),
            r.component,
            r.value
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Write records in the measurement file format, in the order given.
pub fn write_measurements<'a, W: Write>(
    sink: W,
    registry: &QuantityRegistry,
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
) -> Result<()> {
    let mut w = BufWriter::new(sink);
    writeln!(w, "{MEASUREMENT_HEADER}")?;
    for r in records {
        writeln!(w, "{},{},{}", r.time, registry.code(r.quantity), r.value)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fc(text: &str) -> Result<ForecastSet> {
        ingest_forecasts(text.as_bytes(), &QuantityRegistry::default())
    }

    fn ms(text: &str) -> Result<MeasurementSet> {
        ingest_measurements(text.as_bytes(), &QuantityRegistry::default())
    }

    #[test]
    fn single_forecast_row() {
        let set = fc("issue_time,horizon_hours,quantity,component,value\n\
                      2022-05-17T00:00Z,24,hs,det,2.31\n")
        .unwrap();
        assert_eq!(set.len(), 1);
        let r = set.records()[0];
        assert_eq!(r.horizon, 24);
        assert_eq!(r.issue_time.to_string(), "2022-05-17T00:00Z");
        assert_eq!(r.component, Component::Deterministic);
        assert_eq!(r.value, 2.31);
        assert_eq!(r.target_time().to_string(), "2022-05-18T00:00Z");
    }

    #[test]
    fn comments_are_skipped() {
        let set = fc("# provider export\n\
                      issue_time,horizon_hours,quantity,component,value\n\
                      # first issue\n\
                      2022-05-17T00:00Z,0,w,ens3,7.5\n")
        .unwrap();
        assert_eq!(set.records()[0].component, Component::Member(3));
    }

    #[test]
    fn duplicate_key_rejected_with_line() {
        let err = fc("issue_time,horizon_hours,quantity,component,value\n\
                      2022-05-17T00:00Z,24,hs,det,2.31\n\
                      2022-05-17T00:00Z,24,hs,det,2.40\n")
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { line: 3, .. }), "{err}");
    }

    #[test]
    fn negative_horizon_rejected() {
        let err = fc("issue_time,horizon_hours,quantity,component,value\n\
                      2022-05-17T00:00Z,-3,hs,det,2.31\n")
        .unwrap_err();
        assert!(matches!(
            err,
            Error::NegativeHorizon {
                line: 2,
                horizon: -3
            }
        ));
    }

    #[test]
    fn unknown_quantity_and_malformed_rows() {
        let err = fc("issue_time,horizon_hours,quantity,component,value\n\
                      2022-05-17T00:00Z,3,swell,det,2.31\n")
        .unwrap_err();
        assert!(matches!(err, Error::UnknownQuantity { .. }));
        let err = fc("issue_time,horizon_hours,quantity,component,value\n\
                      2022-05-17T00:00Z,3,hs,det\n")
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = fc("issue_time,horizon_hours,quantity,component,value\n\
                      2022-05-17T00:00Z,3,hs,member1,1.0\n")
        .unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(matches!(
            fc("time,quantity,value\n").unwrap_err(),
            Error::Header { .. }
        ));
    }

    #[test]
    fn hourly_measurement_series() {
        let set = ms("time,quantity,value\n\
                      2022-05-17T00:00Z,hs,1.5\n\
                      2022-05-17T01:00Z,hs,1.6\n\
                      2022-05-17T02:00Z,hs,1.7\n")
        .unwrap();
        assert_eq!(set.len(), 3);
        let t = Timestamp::parse("2022-05-17T01:00Z").unwrap();
        assert_eq!(set.get_by_code("hs", t), Some(1.6));
    }

    #[test]
    fn off_hour_measurement_rejected() {
        let err = ms("time,quantity,value\n2022-05-17T00:30Z,hs,1.5\n").unwrap_err();
        assert!(matches!(err, Error::NonHourly { line: 2, .. }));
    }

    #[test]
    fn nan_measurement_rejected() {
        let err = ms("time,quantity,value\n2022-05-17T00:00Z,hs,NaN\n").unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { line: 2 }));
    }

    #[test]
    fn duplicate_measurement_rejected() {
        let err = ms("time,quantity,value\n\
                      2022-05-17T00:00Z,hs,1.5\n\
                      2022-05-17T00:00Z,hs,1.5\n")
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { line: 3, .. }));
    }

    #[test]
    fn write_then_read_preserves_records() {
        let reg = QuantityRegistry::default();
        let text = "issue_time,horizon_hours,quantity,component,value\n\
                    2022-05-17T06:00Z,3,tm,ctrl,6.123456789012345\n\
                    2022-05-17T00:00Z,3,hs,ens2,0.1\n";
        let set = ingest_forecasts(text.as_bytes(), &reg).unwrap();
        let mut buf = Vec::new();
        write_forecasts(&mut buf, &reg, set.records()).unwrap();
        let again = ingest_forecasts(buf.as_slice(), &reg).unwrap();
        assert_eq!(set.records(), again.records());
    }
}
