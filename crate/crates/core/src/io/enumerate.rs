use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::{fit_model, predict, rspe, FitOptions};
use super::model::{ModelSpec, PoolVariable, Term};
use super::table::{RangeMode, Table};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleResult {
    pub terms: Vec<Term>,
    /// `None` is reported as N/A.
    pub rspe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RoleResult {
    pub fn describe(&self) -> String {
        self.terms.iter().map(Term::describe).collect::<Vec<_>>().join(" + ")
    }
}

/// Every way to arrange the pool into `(X, Z)` terms: perfect matchings of
/// the pool, each pair taken in both orientations.
pub fn role_assignments(pool: &[PoolVariable]) -> Vec<Vec<Term>> {
    fn matchings(rest: &[usize]) -> Vec<Vec<(usize, usize)>> {
        let Some((&first, others)) = rest.split_first() else {
            return vec![Vec::new()];
        };
        let mut out = Vec::new();
        for (i, &partner) in others.iter().enumerate() {
            let remaining: Vec<usize> = others.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &v)| v).collect();
            for mut m in matchings(&remaining) {
                m.insert(0, (first, partner));
                out.push(m);
            }
        }
        out
    }
    let idx: Vec<usize> = (0..pool.len()).collect();
    let mut out = Vec::new();
    for m in matchings(&idx) {
        for mask in 0..(1usize << m.len()) {
            let terms = m
                .iter()
                .enumerate()
                .map(|(b, &(p, q))| {
                    let (x, z) = if mask >> b & 1 == 0 { (&pool[p], &pool[q]) } else { (&pool[q], &pool[p]) };
                    Term {
                        x: x.column.clone(),
                        x_transform: x.transform,
                        z: Some(z.column.clone()),
                        z_transform: z.transform,
                    }
                })
                .collect();
            out.push(terms);
        }
    }
    out
}

/// Fits each role assignment on `train` and reports RSPE on `test`.
pub fn enumerate_roles(
    train: &Table,
    test: &Table,
    spec: &ModelSpec,
    opts: &FitOptions,
) -> Result<Vec<RoleResult>> {
    if spec.pool.is_empty() {
        return Err(Error::Config("role enumeration needs a `pool` of variables".into()));
    }
    let actual = test.column(&spec.response)?;
    Ok(role_assignments(&spec.pool)
        .into_par_iter()
        .map(|extra| {
            let mut model = ModelSpec::new(&spec.response, spec.terms.clone());
            model.terms.extend(extra);
            let outcome = fit_model(train, &model, opts)
                .and_then(|a| predict(&a, test, RangeMode::Clamp))
                .and_then(|p| rspe(&p, &actual));
            match outcome {
                Ok(v) => RoleResult {
                    terms: model.terms,
                    rspe: Some(v),
                    failure: None,
                },
                Err(e) => RoleResult {
                    terms: model.terms,
                    rspe: None,
                    failure: Some(match e {
                        Error::NegativeVarianceIntegral { .. } => "negative variance integral".into(),
                        other => other.to_string(),
                    }),
                },
            }
        })
        .collect())
}
