//! Fits the snowball model from observed (rating, reviews, installs)
//! triples: a power law from rating to review volume, a log-log
//! proportionality from reviews to installs, and their composition into the
//! market's snowball parameters.

use std::io::Read;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {needed} usable data points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("{name} must be strictly positive, got {value}")]
    NonPositiveValue { name: &'static str, value: f64 },
    #[error("rating {0} outside (0, 1]")]
    RatingOutOfRange(f64),
    #[error("all {what} coincide: the fit is rank-deficient")]
    RankDeficient { what: &'static str },
    #[error("row {row}: field {field} is not a number: {value:?}")]
    BadField {
        row: usize,
        field: &'static str,
        value: String,
    },
    #[error("expected header rating,reviews,installs, got {0:?}")]
    BadHeader(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One observed app: any field may be missing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    pub rating: Option<f64>,
    pub reviews: Option<f64>,
    pub installs: Option<f64>,
}

/// A set of observations plus the bookkeeping for per-fit row drops.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    rows: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(rows: Vec<Observation>) -> Result<Self, FitError> {
        for row in &rows {
            if let Some(rating) = row.rating {
                if !rating.is_finite() || rating <= 0.0 || rating > 1.0 {
                    return Err(FitError::RatingOutOfRange(rating));
                }
            }
            if let Some(reviews) = row.reviews {
                if !reviews.is_finite() || reviews <= 0.0 {
                    return Err(FitError::NonPositiveValue {
                        name: "reviews",
                        value: reviews,
                    });
                }
            }
            if let Some(installs) = row.installs {
                if !installs.is_finite() || installs <= 0.0 {
                    return Err(FitError::NonPositiveValue {
                        name: "installs",
                        value: installs,
                    });
                }
            }
        }
        Ok(ObservationSet { rows })
    }

    /// Reads `rating,reviews,installs` CSV; blank fields are missing values.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, FitError> {
        let mut csv_reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = csv_reader.headers()?.clone();
        let expected = ["rating", "reviews", "installs"];
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(FitError::BadHeader(
                header.iter().collect::<Vec<_>>().join(","),
            ));
        }
        let mut rows = Vec::new();
        for (index, record) in csv_reader.records().enumerate() {
            let record = record?;
            let parse = |field: usize, name: &'static str| -> Result<Option<f64>, FitError> {
                match record.get(field) {
                    None | Some("") => Ok(None),
                    Some(text) => text
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| FitError::BadField {
                            row: index + 2,
                            field: name,
                            value: text.to_string(),
                        }),
                }
            };
            rows.push(Observation {
                rating: parse(0, "rating")?,
                reviews: parse(1, "reviews")?,
                installs: parse(2, "installs")?,
            });
        }
        ObservationSet::new(rows)
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    /// (rating, reviews) pairs and the number of rows dropped for missing
    /// either field.
    pub fn power_pairs(&self) -> (Vec<(f64, f64)>, usize) {
        let pairs: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter_map(|row| Some((row.rating?, row.reviews?)))
            .collect();
        (pairs.clone(), self.rows.len() - pairs.len())
    }

    /// (reviews, installs) pairs and the number of rows dropped.
    pub fn loglog_pairs(&self) -> (Vec<(f64, f64)>, usize) {
        let pairs: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter_map(|row| Some((row.reviews?, row.installs?)))
            .collect();
        (pairs.clone(), self.rows.len() - pairs.len())
    }
}

/// Least-squares fit of `reviews = a * rating^n` in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub n: f64,
    /// Root-mean-square residual of log reviews.
    pub residual: f64,
}

/// Through-origin least-squares fit of `log installs = b * log reviews`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub b: f64,
    /// Root-mean-square residual of log installs.
    pub residual: f64,
}

/// The composed snowball model `installs = omega1 * rating^omega2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnowballFit {
    pub a: f64,
    pub n: f64,
    pub b: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub power_residual: f64,
    pub loglog_residual: f64,
}

fn validate_positive(
    pairs: &[(f64, f64)],
    names: (&'static str, &'static str),
) -> Result<(), FitError> {
    for &(x, y) in pairs {
        if !x.is_finite() || x <= 0.0 {
            return Err(FitError::NonPositiveValue {
                name: names.0,
                value: x,
            });
        }
        if !y.is_finite() || y <= 0.0 {
            return Err(FitError::NonPositiveValue {
                name: names.1,
                value: y,
            });
        }
    }
    Ok(())
}

/// Ordinary least squares of `log reviews` on `log rating`; exact on
/// noiseless power-law data. Needs at least two distinct ratings.
pub fn fit_power_law(pairs: &[(f64, f64)]) -> Result<PowerLawFit, FitError> {
    if pairs.len() < 2 {
        return Err(FitError::TooFewPoints {
            needed: 2,
            got: pairs.len(),
        });
    }
    validate_positive(pairs, ("rating", "reviews"))?;
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(r, v)| (r.ln(), v.ln())).collect();
    let count = logs.len() as f64;
    let mean_x = logs.iter().map(|&(x, _)| x).sum::<f64>() / count;
    let mean_y = logs.iter().map(|&(_, y)| y).sum::<f64>() / count;
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::RankDeficient { what: "ratings" });
    }
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let n = sxy / sxx;
    let intercept = mean_y - n * mean_x;
    let residual = (logs
        .iter()
        .map(|&(x, y)| (y - intercept - n * x).powi(2))
        .sum::<f64>()
        / count)
        .sqrt();
    Ok(PowerLawFit {
        a: intercept.exp(),
        n,
        residual,
    })
}

/// Through-origin least squares in log-log space; there is no intercept, so
/// at least one point must have reviews different from 1.
pub fn fit_loglog(pairs: &[(f64, f64)]) -> Result<LogLogFit, FitError> {
    if pairs.is_empty() {
        return Err(FitError::TooFewPoints { needed: 1, got: 0 });
    }
    validate_positive(pairs, ("reviews", "installs"))?;
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(v, i)| (v.ln(), i.ln())).collect();
    let sxx: f64 = logs.iter().map(|&(x, _)| x * x).sum();
    if sxx == 0.0 {
        return Err(FitError::RankDeficient { what: "reviews" });
    }
    let sxy: f64 = logs.iter().map(|&(x, y)| x * y).sum();
    let b = sxy / sxx;
    let residual =
        (logs.iter().map(|&(x, y)| (y - b * x).powi(2)).sum::<f64>() / logs.len() as f64).sqrt();
    Ok(LogLogFit { b, residual })
}

/// Composes the two fits into the snowball parameters
/// `omega1 = a^b`, `omega2 = n * b`.
pub fn compose_snowball(power: &PowerLawFit, loglog: &LogLogFit) -> SnowballFit {
    SnowballFit {
        a: power.a,
        n: power.n,
        b: loglog.b,
        omega1: power.a.powf(loglog.b),
        omega2: power.n * loglog.b,
        power_residual: power.residual,
        loglog_residual: loglog.residual,
    }
}
