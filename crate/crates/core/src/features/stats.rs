//! Per-class summary statistics of each parameter (median, quartiles, range).

use std::io::Write;

use serde::Serialize;

use super::{Param, ParameterTable};
use crate::dataset::{Dataset, GaitClass};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStatistic {
    pub param: Param,
    pub class: GaitClass,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics; `sorted` must be non-empty.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// One entry per (parameter, class) pair with at least one trial, parameters in column order.
pub fn class_statistics(ds: &Dataset, table: &ParameterTable) -> Vec<ClassStatistic> {
    let mut out = Vec::new();
    for param in Param::ALL {
        for class in GaitClass::ALL {
            let mut values: Vec<f64> = table
                .trial_indices
                .iter()
                .zip(&table.rows)
                .filter(|(&i, _)| ds.class_of_trial(i) == class)
                .map(|(_, row)| row[param])
                .collect();
            if values.is_empty() {
                continue;
            }
            values.sort_by(f64::total_cmp);
            let q1 = quantile(&values, 0.25);
            let q3 = quantile(&values, 0.75);
            out.push(ClassStatistic {
                param,
                class,
                count: values.len(),
                median: quantile(&values, 0.5),
                q1,
                q3,
                iqr: q3 - q1,
                min: values[0],
                max: values[values.len() - 1],
            });
        }
    }
    out
}

pub fn write_class_statistics(stats: &[ClassStatistic], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "param,class,count,median,q1,q3,iqr,min,max")?;
    for s in stats {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            s.param.name(),
            s.class.code(),
            s.count,
            s.median,
            s.q1,
            s.q3,
            s.iqr,
            s.min,
            s.max
        )?;
    }
    Ok(())
}
