use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use super::{BoxDomain, PwaFunction, Region};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// On-disk form of a region. `A_eq`/`b_eq` rows are equalities and are
/// expanded into two opposing inequalities at load.
#[allow(non_snake_case)]
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegionFile {
    #[serde(deserialize_with = "de_rows")]
    pub A: Vec<Vec<f64>>,
    #[serde(deserialize_with = "de_vec")]
    pub b: Vec<f64>,
    #[serde(deserialize_with = "de_rows")]
    pub K: Vec<Vec<f64>>,
    #[serde(deserialize_with = "de_vec")]
    pub r: Vec<f64>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "de_opt_rows"
    )]
    pub A_eq: Option<Vec<Vec<f64>>>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "de_opt_vec"
    )]
    pub b_eq: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BoxFile {
    #[serde(deserialize_with = "de_vec")]
    lo: Vec<f64>,
    #[serde(deserialize_with = "de_vec")]
    hi: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PwaFile {
    pub n: usize,
    pub m: usize,
    pub regions: Vec<RegionFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain_box: Option<BoxFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    features: Vec<String>,
}

/// A JSON number or a decimal string holding one.
#[derive(Deserialize)]
#[serde(untagged)]
enum Num {
    Number(f64),
    Text(String),
}

impl Num {
    fn value<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            Num::Number(v) => Ok(v),
            Num::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|e| E::custom(format!("bad number {s:?}: {e}"))),
        }
    }
}

fn de_vec<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<Num>::deserialize(d)?
        .into_iter()
        .map(Num::value)
        .collect()
}

fn de_rows<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
    Vec::<Vec<Num>>::deserialize(d)?
        .into_iter()
        .map(|row| row.into_iter().map(Num::value).collect())
        .collect()
}

fn de_opt_vec<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<f64>>, D::Error> {
    de_vec(d).map(Some)
}

fn de_opt_rows<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<Vec<Vec<f64>>>, D::Error> {
    de_rows(d).map(Some)
}

impl PwaFile {
    pub fn into_function(self) -> Result<PwaFunction> {
        let n = self.n;
        let m = self.m;
        let mut regions = Vec::with_capacity(self.regions.len());
        for (k, rf) in self.regions.into_iter().enumerate() {
            let ctx = |e: Error| Error::InvalidPwa(format!("region {k}: {e}"));
            if rf.A.len() != rf.b.len() {
                return Err(ctx(Error::InvalidPwa(format!(
                    "A has {} rows but b has {} entries",
                    rf.A.len(),
                    rf.b.len()
                ))));
            }
            let mut rows = rf.A;
            let mut rhs = rf.b;
            match (rf.A_eq, rf.b_eq) {
                (Some(ae), Some(be)) => {
                    if ae.len() != be.len() {
                        return Err(ctx(Error::InvalidPwa(
                            "A_eq and b_eq lengths differ".into(),
                        )));
                    }
                    for (row, v) in ae.into_iter().zip(be) {
                        rows.push(row.iter().map(|c| -c).collect());
                        rhs.push(-v);
                        rows.push(row);
                        rhs.push(v);
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(ctx(Error::InvalidPwa(
                        "A_eq and b_eq must appear together".into(),
                    )))
                }
            }
            let a = Matrix::from_rows(&rows, n).map_err(ctx)?;
            let gain = Matrix::from_rows(&rf.K, n).map_err(ctx)?;
            regions.push(Region::from_parts(a, rhs, gain, rf.r).map_err(ctx)?);
        }
        let domain_box = self
            .domain_box
            .map(|b| BoxDomain::new(b.lo, b.hi))
            .transpose()?;
        Ok(PwaFunction::new(n, m, regions, domain_box)?.with_features(self.features))
    }

    pub fn from_function(f: &PwaFunction) -> Self {
        Self {
            n: f.n(),
            m: f.m(),
            regions: f
                .regions()
                .iter()
                .map(|r| RegionFile {
                    A: r.constraints().to_rows(),
                    b: r.bounds().to_vec(),
                    K: r.gain().to_rows(),
                    r: r.offset().to_vec(),
                    A_eq: None,
                    b_eq: None,
                })
                .collect(),
            domain_box: f.domain_box().map(|b| BoxFile {
                lo: b.lo.clone(),
                hi: b.hi.clone(),
            }),
            features: f.features().to_vec(),
        }
    }
}

impl PwaFunction {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<PwaFile>(s)?.into_function()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PwaFile::from_function(self)).expect("PWA serialization")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
