use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::AlignedSample;
use crate::error::{Error, Result};

/// Inclusive calendar date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Validation,
    Test,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Validation => "validation",
            SplitKind::Test => "test",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "train" => Some(SplitKind::Train),
            "validation" => Some(SplitKind::Validation),
            "test" => Some(SplitKind::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: DateRange,
    pub validation: DateRange,
    pub test: DateRange,
}

fn ymd(year: i32, month: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, month, day).expect("valid preset date")
}

impl SplitSpec {
    /// Back-to-back ranges starting at `start`.
    pub fn consecutive(start: NaiveDate, train_days: i64, validation_days: i64, test_days: i64) -> Self {
        let range = |from: NaiveDate, days: i64| DateRange::new(from, from + Duration::days(days - 1));
        let train = range(start, train_days);
        let validation = range(train.end + Duration::days(1), validation_days);
        let test = range(validation.end + Duration::days(1), test_days);
        Self {
            train,
            validation,
            test,
        }
    }

    /// One of the six standard January-June windows (25 train, 5 validation
    /// and 5 test days each).
    pub fn preset(number: u8, year: i32) -> Option<Self> {
        let d = |m, day| ymd(year, m, day);
        let (train, validation, test) = match number {
            1 => ((d(1, 1), d(1, 25)), (d(1, 26), d(1, 30)), (d(1, 31), d(2, 4))),
            2 => {
                let val_start = d(2, 26);
                let val_end = val_start + Duration::days(4);
                let test_start = val_end + Duration::days(1);
                (
                    (d(2, 1), d(2, 25)),
                    (val_start, val_end),
                    (test_start, test_start + Duration::days(4)),
                )
            }
            3 => ((d(3, 1), d(3, 25)), (d(3, 26), d(3, 30)), (d(3, 31), d(4, 4))),
            4 => ((d(4, 1), d(4, 25)), (d(4, 26), d(4, 30)), (d(5, 1), d(5, 5))),
            5 => ((d(4, 26), d(5, 20)), (d(5, 21), d(5, 25)), (d(5, 26), d(5, 30))),
            6 => ((d(5, 20), d(6, 13)), (d(6, 14), d(6, 18)), (d(6, 19), d(6, 23))),
            _ => return None,
        };
        let r = |(a, b)| DateRange::new(a, b);
        Some(Self {
            train: r(train),
            validation: r(validation),
            test: r(test),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, range) in [
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
        ] {
            if range.start > range.end {
                return Err(Error::InvalidSplit(format!("{name} range ends before it starts")));
            }
        }
        if self.train.end >= self.validation.start {
            return Err(Error::InvalidSplit("train must end before validation starts".into()));
        }
        if self.validation.end >= self.test.start {
            return Err(Error::InvalidSplit("validation must end before test starts".into()));
        }
        Ok(())
    }

    pub fn classify(&self, date: NaiveDate) -> Option<SplitKind> {
        if self.train.contains(date) {
            Some(SplitKind::Train)
        } else if self.validation.contains(date) {
            Some(SplitKind::Validation)
        } else if self.test.contains(date) {
            Some(SplitKind::Test)
        } else {
            None
        }
    }

    pub fn range(&self, kind: SplitKind) -> DateRange {
        match kind {
            SplitKind::Train => self.train,
            SplitKind::Validation => self.validation,
            SplitKind::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<AlignedSample>,
    pub validation: Vec<AlignedSample>,
    pub test: Vec<AlignedSample>,
}

impl Splits {
    pub fn get(&self, kind: SplitKind) -> &[AlignedSample] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Validation => &self.validation,
            SplitKind::Test => &self.test,
        }
    }
}

/// Partitions samples by calendar date. Order is preserved and out-of-range
/// samples are dropped.
pub fn split_dataset(samples: &[AlignedSample], spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut splits = Splits::default();
    for sample in samples {
        match spec.classify(sample.date()) {
            Some(SplitKind::Train) => splits.train.push(sample.clone()),
            Some(SplitKind::Validation) => splits.validation.push(sample.clone()),
            Some(SplitKind::Test) => splits.test.push(sample.clone()),
            None => {}
        }
    }
    if splits.train.is_empty() {
        return Err(Error::Empty("training split has no samples".into()));
    }
    Ok(splits)
}
