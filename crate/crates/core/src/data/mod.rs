//! Forecast and measurement records, file ingestion, and alignment onto the
//! issue-time × horizon grid.

mod align;
mod ingest;
mod types;

pub use align::{align, align_where, covariates_at, CovariateRow};
pub use ingest::{
    ingest_forecasts, ingest_measurements, read_forecasts, read_measurements, write_forecasts,
    write_measurements, ForecastGroup, ForecastSet, MeasurementSet, FORECAST_HEADER,
    MEASUREMENT_HEADER,
};
pub use types::{
    AlignedDataset, Component, CovariateId, CovariateKind, ForecastRecord, MeasurementRecord,
    Quantity, QuantityId, QuantityRegistry,
};
